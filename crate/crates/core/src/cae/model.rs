use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reconstruction term of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconLoss {
    #[default]
    Cosine,
    L2,
}

impl std::str::FromStr for ReconLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(ReconLoss::Cosine),
            "l2" | "mse" => Ok(ReconLoss::L2),
            other => Err(Error::Config(format!(
                "unknown reconstruction loss {other:?}"
            ))),
        }
    }
}

/// Training configuration for the cosine autoencoder.
///
/// `hidden` and `latent` default to `d` and `d / 2` of the input, which is
/// (512, 256) for 512-dimensional embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaeConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub recon_loss: ReconLoss,
    pub hidden: Option<usize>,
    pub latent: Option<usize>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lr: 0.04,
            epochs: 1000,
            seed: 0,
            recon_loss: ReconLoss::Cosine,
            hidden: None,
            latent: None,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl CaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be a finite nonnegative number");
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2 must be a finite nonnegative number");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.hidden == Some(0) || self.latent == Some(0) {
            return bad("hidden and latent sizes must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("eps must be positive");
        }
        Ok(())
    }

    /// Resolved (hidden, latent) widths for input dimension `d`.
    pub fn widths(&self, d: usize) -> (usize, usize) {
        (
            self.hidden.unwrap_or(d),
            self.latent.unwrap_or((d / 2).max(1)),
        )
    }
}

/// The eight parameter blocks of the autoencoder, in checkpoint order.
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub w4: Array2<f64>,
    pub b4: Array1<f64>,
}

impl Params {
    pub fn zeros(d: usize, hidden: usize, latent: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, d)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((latent, hidden)),
            b2: Array1::zeros(latent),
            w3: Array2::zeros((hidden, latent)),
            b3: Array1::zeros(hidden),
            w4: Array2::zeros((d, hidden)),
            b4: Array1::zeros(d),
        }
    }

    /// Weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn init(d: usize, hidden: usize, latent: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(d, hidden, latent);
        for w in [&mut p.w1, &mut p.w2, &mut p.w3, &mut p.w4] {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn latent(&self) -> usize {
        self.w2.nrows()
    }

    pub fn blocks(&self) -> [&[f64]; 8] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.w1.as_slice()),
            s(self.b1.as_slice()),
            s(self.w2.as_slice()),
            s(self.b2.as_slice()),
            s(self.w3.as_slice()),
            s(self.b3.as_slice()),
            s(self.w4.as_slice()),
            s(self.b4.as_slice()),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 8] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.w1.as_slice_mut()),
            s(self.b1.as_slice_mut()),
            s(self.w2.as_slice_mut()),
            s(self.b2.as_slice_mut()),
            s(self.w3.as_slice_mut()),
            s(self.b3.as_slice_mut()),
            s(self.w4.as_slice_mut()),
            s(self.b4.as_slice_mut()),
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
    pub h3: Array2<f64>,
    pub output: Array2<f64>,
}

fn relu(mut z: Array2<f64>) -> Array2<f64> {
    z.mapv_inplace(|v| v.max(0.0));
    z
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

fn relu_mask(grad: &mut Array2<f64>, act: &Array2<f64>) {
    grad.zip_mut_with(act, |g, &a| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
}

impl Params {
    /// Runs every row through d -> hidden -> latent -> hidden -> d, with ReLU
    /// after the first three layers and a linear output.
    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let h1 = relu(affine(x, &self.w1, &self.b1));
        let h2 = relu(affine(&h1, &self.w2, &self.b2));
        let h3 = relu(affine(&h2, &self.w3, &self.b3));
        let output = affine(&h3, &self.w4, &self.b4);
        Ok(ForwardCache {
            input: x.clone(),
            h1,
            h2,
            h3,
            output,
        })
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Backpropagates `d_output` (dL/d output, same shape as the output).
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> Params {
        let db4 = d_output.sum_axis(Axis(0));
        let dw4 = d_output.t().dot(&cache.h3);
        let mut dz3 = d_output.dot(&self.w4);
        relu_mask(&mut dz3, &cache.h3);

        let db3 = dz3.sum_axis(Axis(0));
        let dw3 = dz3.t().dot(&cache.h2);
        let mut dz2 = dz3.dot(&self.w3);
        relu_mask(&mut dz2, &cache.h2);

        let db2 = dz2.sum_axis(Axis(0));
        let dw2 = dz2.t().dot(&cache.h1);
        let mut dz1 = dz2.dot(&self.w2);
        relu_mask(&mut dz1, &cache.h1);

        let db1 = dz1.sum_axis(Axis(0));
        let dw1 = dz1.t().dot(&cache.input);

        // Transposed products come back in column-major order; copy into
        // standard layout so the blocks stay contiguous row-major.
        let std = |a: Array2<f64>| a.as_standard_layout().into_owned();
        Params {
            w1: std(dw1),
            b1: db1,
            w2: std(dw2),
            b2: db2,
            w3: std(dw3),
            b3: db3,
            w4: std(dw4),
            b4: db4,
        }
    }
}

/// A trained (or initialized) autoencoder together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub params: Params,
    pub config: CaeConfig,
}

impl CaeModel {
    /// Seeded initialization for `d`-dimensional inputs.
    pub fn new(d: usize, config: CaeConfig) -> Result<Self> {
        config.validate()?;
        if d == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let (hidden, latent) = config.widths(d);
        Ok(Self {
            params: Params::init(d, hidden, latent, config.seed),
            config,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.params.forward(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_params(d: usize, h: usize, l: usize, seed: u64) -> Params {
        let mut p = Params::init(d, h, l, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for b in [&mut p.b1, &mut p.b2, &mut p.b3, &mut p.b4] {
            b.mapv_inplace(|_| rng.random_range(-0.2..0.2));
        }
        p
    }

    #[test]
    fn zero_output_layer_broadcasts_bias() {
        let mut p = Params::init(3, 4, 2, 1);
        p.w4.fill(0.0);
        p.b4 = array![0.5, -1.0, 2.0];
        let x = array![[1.0, 0.0, 0.0], [0.3, -0.2, 0.9]];
        let y = p.forward(&x).unwrap();
        for row in y.outer_iter() {
            assert_eq!(row, p.b4.view());
        }
    }

    #[test]
    fn batch_independence() {
        let p = random_params(5, 6, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
        let batch = p.forward(&x).unwrap();
        for i in 0..4 {
            let single = p
                .forward(&x.slice(ndarray::s![i..i + 1, ..]).to_owned())
                .unwrap();
            for k in 0..5 {
                assert!((single[[0, k]] - batch[[i, k]]).abs() < 1e-14);
            }
        }
    }

    /// Straight-line scalar reimplementation of the four layers.
    fn reference_forward(p: &Params, x: &[f64]) -> Vec<f64> {
        fn layer(w: &Array2<f64>, b: &Array1<f64>, x: &[f64], relu: bool) -> Vec<f64> {
            (0..w.nrows())
                .map(|r| {
                    let mut acc = b[r];
                    for c in 0..w.ncols() {
                        acc += w[[r, c]] * x[c];
                    }
                    if relu && acc < 0.0 {
                        0.0
                    } else {
                        acc
                    }
                })
                .collect()
        }
        let h1 = layer(&p.w1, &p.b1, x, true);
        let h2 = layer(&p.w2, &p.b2, &h1, true);
        let h3 = layer(&p.w3, &p.b3, &h2, true);
        layer(&p.w4, &p.b4, &h3, false)
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let p = random_params(7, 9, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((6, 7), |_| rng.random_range(-1.0..1.0));
        let y = p.forward(&x).unwrap();
        for (i, row) in x.outer_iter().enumerate() {
            let r = reference_forward(&p, row.as_slice().unwrap());
            for k in 0..7 {
                assert!((r[k] - y[[i, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = Params::init(4, 4, 2, 0);
        assert!(matches!(
            p.forward(&Array2::zeros((1, 3))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn default_widths() {
        let cfg = CaeConfig::default();
        assert_eq!(cfg.widths(512), (512, 256));
        assert_eq!(cfg.widths(64), (64, 32));
        let cfg = CaeConfig {
            hidden: Some(10),
            latent: Some(3),
            ..Default::default()
        };
        assert_eq!(cfg.widths(64), (10, 3));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Params::init(8, 8, 4, 7);
        assert_eq!(a, Params::init(8, 8, 4, 7));
        assert_ne!(a, Params::init(8, 8, 4, 8));
        assert!(a.w1.iter().all(|v| v.abs() <= 1.0 / 8f64.sqrt()));
        assert!(a.w2.iter().all(|v| v.abs() <= 1.0 / 8f64.sqrt()));
        assert!(a.w3.iter().all(|v| v.abs() <= 0.5));
        assert!(a.b1.iter().all(|&v| v == 0.0));
        assert_eq!(a.len(), 8 * 8 + 8 + 4 * 8 + 4 + 8 * 4 + 8 + 8 * 8 + 8);
    }

    #[test]
    fn config_validation() {
        assert!(CaeConfig::default().validate().is_ok());
        let bad = [
            CaeConfig {
                epochs: 0,
                ..Default::default()
            },
            CaeConfig {
                lr: 0.0,
                ..Default::default()
            },
            CaeConfig {
                lambda1: -1.0,
                ..Default::default()
            },
            CaeConfig {
                lambda2: f64::NAN,
                ..Default::default()
            },
            CaeConfig {
                hidden: Some(0),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
