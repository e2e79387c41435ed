//! Reconstruction, intra-class and inter-class losses over an M x C grid of
//! reconstructions, with analytic gradients.
//!
//! All cosine terms are computed on unit directions `u = y / |y|`; the
//! gradient with respect to `y` is the tangential part of the gradient with
//! respect to `u`, divided by `|y|`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::model::{CaeConfig, ReconLoss};
use crate::error::{Error, Result};
use crate::io::Layout;

/// Values of the combined objective and its three parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub all: f64,
    pub rec: f64,
    pub intra: f64,
    pub inter: f64,
}

impl Losses {
    pub fn combine(rec: f64, intra: f64, inter: f64, lambda1: f64, lambda2: f64) -> Self {
        Self {
            all: rec + lambda1 * intra + lambda2 * inter,
            rec,
            intra,
            inter,
        }
    }
}

fn check_layout(x: &Array2<f64>, layout: Layout) -> Result<()> {
    if x.nrows() != layout.rows() {
        return Err(Error::Shape(format!(
            "{} rows for an {}x{} grid",
            x.nrows(),
            layout.domains,
            layout.classes
        )));
    }
    Ok(())
}

/// Row norms and unit directions; zero-norm rows are an error naming the row.
fn directions(x: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let norms: Array1<f64> = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(row) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::ZeroNorm { row });
    }
    let units = x / &norms.view().insert_axis(Axis(1));
    Ok((norms, units))
}

/// Row-wise cosine `a.b / sqrt(|a|^2 |b|^2)`, exactly 1 for identical rows.
fn row_cosines(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array1<f64> {
    Zip::from(a.rows())
        .and(b.rows())
        .map_collect(|x, y| x.dot(&y) / (x.dot(&x) * y.dot(&y)).sqrt())
}

/// Maps dL/du to dL/dy for y = |y| u.
fn through_normalization(
    d_units: &Array2<f64>,
    units: &Array2<f64>,
    norms: &Array1<f64>,
) -> Array2<f64> {
    let radial = (d_units * units).sum_axis(Axis(1));
    let mut out = d_units - &(units * &radial.insert_axis(Axis(1)));
    out /= &norms.view().insert_axis(Axis(1));
    out
}

/// Per-class mean over the M domain rows.
pub fn class_means(x: &Array2<f64>, layout: Layout) -> Array2<f64> {
    let mut means = Array2::zeros((layout.classes, x.ncols()));
    for block in x.axis_chunks_iter(Axis(0), layout.classes) {
        means += &block;
    }
    means / layout.domains as f64
}

/// `-(1/MC) sum cos(t, t_hat)` for cosine, `(1/MC) sum |t - t_hat|^2` for L2.
pub fn loss_rec(t: &Array2<f64>, t_hat: &Array2<f64>, kind: ReconLoss) -> Result<f64> {
    Ok(rec_with_grad(t, t_hat, kind)?.0)
}

fn rec_with_grad(
    t: &Array2<f64>,
    t_hat: &Array2<f64>,
    kind: ReconLoss,
) -> Result<(f64, Array2<f64>)> {
    if t.dim() != t_hat.dim() {
        return Err(Error::Shape(format!(
            "input {:?} vs reconstruction {:?}",
            t.dim(),
            t_hat.dim()
        )));
    }
    let n = t.nrows() as f64;
    match kind {
        ReconLoss::Cosine => {
            let (_, t_units) = directions(t)?;
            let (norms, units) = directions(t_hat)?;
            // Scalar value straight from the rows keeps t_hat == t at exactly -1.
            let value = -row_cosines(t.view(), t_hat.view()).sum() / n;
            let d_units = t_units.mapv(|v| -v / n);
            Ok((value, through_normalization(&d_units, &units, &norms)))
        }
        ReconLoss::L2 => {
            let diff = t_hat - t;
            let value = diff.mapv(|v| v * v).sum() / n;
            Ok((value, diff * (2.0 / n)))
        }
    }
}

/// `-(1/MC) sum_ij cos(t_hat_ij, mean_j t_hat_ij)`, the mean taken over the
/// reconstructions themselves.
pub fn loss_intra(t_hat: &Array2<f64>, layout: Layout) -> Result<f64> {
    Ok(intra_with_grad(t_hat, layout)?.0)
}

fn intra_with_grad(t_hat: &Array2<f64>, layout: Layout) -> Result<(f64, Array2<f64>)> {
    check_layout(t_hat, layout)?;
    let n = layout.rows() as f64;
    let (norms, units) = directions(t_hat)?;
    let means = class_means(t_hat, layout);
    let (mean_norms, mean_units) = directions(&means).map_err(|e| match e {
        Error::ZeroNorm { row } => Error::DegenerateClass { class: row },
        other => other,
    })?;

    let mut value = 0.0;
    // dL/du for each row is -(1/n) times its class's mean direction.
    let mut d_units = Array2::zeros(units.raw_dim());
    let mut d_mean_units = Array2::<f64>::zeros(mean_units.raw_dim());
    for (block, mut d_block) in units
        .axis_chunks_iter(Axis(0), layout.classes)
        .zip(d_units.axis_chunks_iter_mut(Axis(0), layout.classes))
    {
        value += (&block * &mean_units).sum();
        d_block.assign(&mean_units);
        d_mean_units += &block;
    }
    d_units.mapv_inplace(|v| -v / n);
    d_mean_units.mapv_inplace(|v| -v / n);

    let mut grad = through_normalization(&d_units, &units, &norms);
    let d_means =
        through_normalization(&d_mean_units, &mean_units, &mean_norms) / layout.domains as f64;
    for mut g in grad.axis_chunks_iter_mut(Axis(0), layout.classes) {
        g += &d_means;
    }
    Ok((-value / n, grad))
}

/// `(1/(M C (C-1))) sum_domain sum_{j != k} cos(t_hat_j, t_hat_k)`.
pub fn loss_inter(t_hat: &Array2<f64>, layout: Layout) -> Result<f64> {
    Ok(inter_with_grad(t_hat, layout)?.0)
}

fn inter_with_grad(t_hat: &Array2<f64>, layout: Layout) -> Result<(f64, Array2<f64>)> {
    check_layout(t_hat, layout)?;
    let c = layout.classes;
    if c < 2 {
        return Err(Error::Shape(
            "inter-class loss needs at least two classes".into(),
        ));
    }
    let scale = 1.0 / (layout.rows() * (c - 1)) as f64;
    let (norms, units) = directions(t_hat)?;

    let mut value = 0.0;
    for block in t_hat.axis_chunks_iter(Axis(0), c) {
        let gram = block.dot(&block.t());
        for j in 0..c {
            for k in 0..c {
                if j != k {
                    value += gram[[j, k]] / (gram[[j, j]] * gram[[k, k]]).sqrt();
                }
            }
        }
    }

    // Over ordered pairs, d/du_j sum_{j != k} u_j . u_k = 2 (sum u - u_j).
    let mut d_units = Array2::zeros(units.raw_dim());
    for (block, mut d_block) in units
        .axis_chunks_iter(Axis(0), c)
        .zip(d_units.axis_chunks_iter_mut(Axis(0), c))
    {
        let total = block.sum_axis(Axis(0));
        Zip::from(d_block.rows_mut())
            .and(block.rows())
            .for_each(|mut d, u| d.assign(&((&total - &u) * (2.0 * scale))));
    }
    Ok((
        value * scale,
        through_normalization(&d_units, &units, &norms),
    ))
}

/// The combined objective `L_rec + lambda1 L_intra + lambda2 L_inter`.
pub fn loss_all(
    t: &Array2<f64>,
    t_hat: &Array2<f64>,
    layout: Layout,
    cfg: &CaeConfig,
) -> Result<Losses> {
    Ok(loss_all_with_grad(t, t_hat, layout, cfg)?.0)
}

/// Combined objective and its gradient with respect to `t_hat`.
///
/// A regularizer with zero weight is still evaluated for reporting; if it is
/// undefined for this input (one class, degenerate mean) it is reported as NaN
/// and left out of the total.
pub fn loss_all_with_grad(
    t: &Array2<f64>,
    t_hat: &Array2<f64>,
    layout: Layout,
    cfg: &CaeConfig,
) -> Result<(Losses, Array2<f64>)> {
    check_layout(t, layout)?;
    let (rec, mut grad) = rec_with_grad(t, t_hat, cfg.recon_loss)?;
    let mut all = rec;
    let mut add = |term: Result<(f64, Array2<f64>)>, weight: f64| -> Result<f64> {
        match term {
            Ok((value, g)) => {
                if weight != 0.0 {
                    grad.scaled_add(weight, &g);
                    all += weight * value;
                }
                Ok(value)
            }
            Err(_) if weight == 0.0 => Ok(f64::NAN),
            Err(e) => Err(e),
        }
    };
    let intra = add(intra_with_grad(t_hat, layout), cfg.lambda1)?;
    let inter = add(inter_with_grad(t_hat, layout), cfg.lambda2)?;
    Ok((
        Losses {
            all,
            rec,
            intra,
            inter,
        },
        grad,
    ))
}

/// Cosine similarity of two vectors; `None` if either is zero.
pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Option<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(a.dot(&b) / (na * nb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout(m: usize, c: usize) -> Layout {
        Layout {
            domains: m,
            classes: c,
        }
    }

    fn random(rows: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, d), |_| rng.random_range(-1.0..1.0))
    }

    fn unit_rows(x: Array2<f64>) -> Array2<f64> {
        let (_, u) = directions(&x).unwrap();
        u
    }

    // Scalar-loop references.

    fn cos_ref(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for k in 0..a.len() {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        dot / (na.sqrt() * nb.sqrt())
    }

    fn row(x: &Array2<f64>, r: usize) -> Vec<f64> {
        x.row(r).to_vec()
    }

    fn rec_ref(t: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let mut s = 0.0;
        for r in 0..t.nrows() {
            s += cos_ref(&row(t, r), &row(y, r));
        }
        -s / t.nrows() as f64
    }

    fn intra_ref(y: &Array2<f64>, m: usize, c: usize) -> f64 {
        let d = y.ncols();
        let mut s = 0.0;
        for i in 0..c {
            let mut mean = vec![0.0; d];
            for j in 0..m {
                for k in 0..d {
                    mean[k] += y[[j * c + i, k]] / m as f64;
                }
            }
            for j in 0..m {
                s += cos_ref(&row(y, j * c + i), &mean);
            }
        }
        -s / (m * c) as f64
    }

    fn inter_ref(y: &Array2<f64>, m: usize, c: usize) -> f64 {
        let mut s = 0.0;
        for dom in 0..m {
            for j in 0..c {
                for k in 0..c {
                    if j != k {
                        s += cos_ref(&row(y, dom * c + j), &row(y, dom * c + k));
                    }
                }
            }
        }
        s / (m * c * (c - 1)) as f64
    }

    #[test]
    fn perfect_reconstruction_is_minus_one() {
        let t = unit_rows(random(6, 4, 1));
        assert_eq!(loss_rec(&t, &t, ReconLoss::Cosine).unwrap(), -1.0);
        let doubled = &t * 2.0;
        assert!((loss_rec(&t, &doubled, ReconLoss::Cosine).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(loss_rec(&t, &t, ReconLoss::L2).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_reconstruction_is_zero() {
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![[0.0, 3.0], [-2.0, 0.0]];
        assert_eq!(loss_rec(&t, &y, ReconLoss::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn zero_reconstruction_row_is_named() {
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            loss_rec(&t, &y, ReconLoss::Cosine),
            Err(Error::ZeroNorm { row: 1 })
        ));
    }

    #[test]
    fn identical_class_rows_give_minus_one() {
        // M=3, C=2 with every domain row equal per class.
        let base = array![[1.0, 2.0, 0.0], [0.0, -1.0, 1.0]];
        let mut y = Array2::zeros((6, 3));
        for j in 0..3 {
            y.slice_mut(ndarray::s![j * 2..j * 2 + 2, ..])
                .assign(&(&base * (j + 1) as f64));
        }
        assert!((loss_intra(&y, layout(3, 2)).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn opposite_rows_make_degenerate_class() {
        let y = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 2.0]];
        assert!(matches!(
            loss_intra(&y, layout(2, 2)),
            Err(Error::DegenerateClass { class: 0 })
        ));
    }

    #[test]
    fn inter_anchor_values() {
        let same = array![[1.0, 1.0], [2.0, 2.0], [0.5, 0.5], [3.0, 3.0]];
        assert_eq!(loss_inter(&same, layout(2, 2)).unwrap(), 1.0);

        let orth = array![[1.0, 0.0], [0.0, 1.0], [0.0, 2.0], [-3.0, 0.0]];
        assert!(loss_inter(&orth, layout(2, 2)).unwrap().abs() < 1e-15);

        // cos = 0.5 at 60 degrees.
        let h = 3f64.sqrt() / 2.0;
        let sixty = array![[1.0, 0.0], [0.5, h], [0.0, 1.0], [h, 0.5]];
        assert!((loss_inter(&sixty, layout(2, 2)).unwrap() - 0.5).abs() < 1e-15);

        let one = array![[1.0, 0.0]];
        assert!(loss_inter(&one, layout(1, 1)).is_err());
    }

    #[test]
    fn combined_objective() {
        let t = unit_rows(random(6, 4, 2));
        let cfg = CaeConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let l = loss_all(&t, &t, layout(3, 2), &cfg).unwrap();
        assert_eq!(l.all, -1.0);
        assert_eq!(l.all, l.rec);

        let l = Losses::combine(-0.9, -0.8, 0.1, 1.0, 1.0);
        assert!((l.all + 1.6).abs() < 1e-15);
    }

    #[test]
    fn vectorized_losses_match_scalar_loops() {
        for seed in 0..25u64 {
            let m = 1 + (seed as usize % 4);
            let c = 2 + (seed as usize % 4);
            let d = 3 + (seed as usize % 9);
            let t = unit_rows(random(m * c, d, seed));
            let y = random(m * c, d, seed + 1000);
            let lay = layout(m, c);
            assert!((loss_rec(&t, &y, ReconLoss::Cosine).unwrap() - rec_ref(&t, &y)).abs() < 1e-12);
            assert!((loss_intra(&y, lay).unwrap() - intra_ref(&y, m, c)).abs() < 1e-12);
            assert!((loss_inter(&y, lay).unwrap() - inter_ref(&y, m, c)).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_are_scale_invariant_per_row() {
        let (m, c, d) = (3, 4, 5);
        let t = unit_rows(random(m * c, d, 5));
        let y = random(m * c, d, 6);
        let lay = layout(m, c);
        let base = (
            loss_rec(&t, &y, ReconLoss::Cosine).unwrap(),
            loss_intra(&y, lay).unwrap(),
            loss_inter(&y, lay).unwrap(),
        );
        for r in 0..m * c {
            for s in [1e-3, 0.5, 7.0, 1e3] {
                let mut z = y.clone();
                z.row_mut(r).mapv_inplace(|v| v * s);
                assert!((loss_rec(&t, &z, ReconLoss::Cosine).unwrap() - base.0).abs() < 1e-10);
                assert!((loss_inter(&z, lay).unwrap() - base.2).abs() < 1e-10);
                // The class mean moves when one row is rescaled, so the
                // intra term is only invariant to rescaling the whole class.
            }
        }
        for i in 0..c {
            let mut z = y.clone();
            for j in 0..m {
                z.row_mut(j * c + i).mapv_inplace(|v| v * 3.5);
            }
            assert!((loss_intra(&z, lay).unwrap() - base.1).abs() < 1e-10);
        }
    }

    /// Central differences of a scalar function of the reconstructions.
    fn fd_grad(y: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(y.raw_dim());
        for idx in 0..y.len() {
            let (r, k) = (idx / y.ncols(), idx % y.ncols());
            let mut p = y.clone();
            p[[r, k]] += h;
            let mut q = y.clone();
            q[[r, k]] -= h;
            g[[r, k]] = (f(&p) - f(&q)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn output_gradients_match_finite_differences() {
        let (m, c, d) = (3, 4, 5);
        let lay = layout(m, c);
        let t = unit_rows(random(m * c, d, 11));
        let y = random(m * c, d, 12);
        for kind in [ReconLoss::Cosine, ReconLoss::L2] {
            let (_, g) = rec_with_grad(&t, &y, kind).unwrap();
            let fd = fd_grad(&y, |z| loss_rec(&t, z, kind).unwrap());
            assert!((&g - &fd).iter().all(|e| e.abs() < 1e-7), "rec {kind:?}");
        }
        let (_, g) = intra_with_grad(&y, lay).unwrap();
        let fd = fd_grad(&y, |z| loss_intra(z, lay).unwrap());
        assert!((&g - &fd).iter().all(|e| e.abs() < 1e-7), "intra");
        let (_, g) = inter_with_grad(&y, lay).unwrap();
        let fd = fd_grad(&y, |z| loss_inter(z, lay).unwrap());
        assert!((&g - &fd).iter().all(|e| e.abs() < 1e-7), "inter");
    }
}
