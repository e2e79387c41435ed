//! Synthetic prompt/image embeddings with a known class/domain decomposition.
//!
//! Every prompt is `normalize(anchor_i + offset_j)` for a class anchor and a
//! seen-domain offset. Images use offsets from separate held-out domains plus
//! isotropic noise, so the test domains never appear in the prompt grid. The
//! anchors themselves are the oracle representations.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{normalize_rows, ImageSet, Layout, PromptTensor, UnifiedReps};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub classes: usize,
    /// Seen domains, i.e. rows of the prompt grid.
    pub domains: usize,
    pub dim: usize,
    /// Images per class per held-out domain.
    pub n_per_class: usize,
    /// Held-out domains the images are drawn from.
    pub test_domains: usize,
    /// 1 gives mutually orthogonal anchors; smaller values mix in a shared
    /// direction and pull the anchors together.
    pub class_sep: f64,
    /// Norm of every domain offset.
    pub domain_shift: f64,
    /// Expected norm of the per-image noise vector.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            domains: 8,
            dim: 64,
            n_per_class: 40,
            test_domains: 4,
            class_sep: 1.0,
            domain_shift: 0.6,
            noise: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.dim < self.classes || self.dim < 2 {
            return bad(format!(
                "dim {} must be >= classes {}",
                self.dim, self.classes
            ));
        }
        if self.domains < 1 || self.test_domains < 1 || self.n_per_class < 1 {
            return bad("domains, test_domains and n_per_class must be positive".into());
        }
        for (name, v) in [
            ("class_sep", self.class_sep),
            ("domain_shift", self.domain_shift),
            ("noise", self.noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number"));
            }
        }
        Ok(())
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub prompts: PromptTensor,
    pub images: ImageSet,
    pub oracle: UnifiedReps,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| StandardNormal.sample(rng))
}

fn unit(v: Array1<f64>) -> Result<Array1<f64>> {
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        return Err(Error::Config("degenerate synthetic vector".into()));
    }
    Ok(v / n)
}

pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let (c, d) = (spec.classes, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Orthonormal directions by Gram-Schmidt on Gaussian draws.
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(c);
    while basis.len() < c {
        let mut v = gaussian(&mut rng, d);
        for q in &basis {
            let p = v.dot(q);
            v.scaled_add(-p, q);
        }
        let n = v.dot(&v).sqrt();
        if n > 1e-8 {
            basis.push(v / n);
        }
    }
    let shared = unit(basis.iter().fold(Array1::zeros(d), |acc, q| acc + q))?;
    let mut anchors = Array2::zeros((c, d));
    for (i, q) in basis.iter().enumerate() {
        let a = unit(&shared * (1.0 - spec.class_sep) + q * spec.class_sep)?;
        anchors.row_mut(i).assign(&a);
    }

    let offset = |rng: &mut ChaCha8Rng| -> Result<Array1<f64>> {
        Ok(unit(gaussian(rng, d))? * spec.domain_shift)
    };
    let seen: Vec<Array1<f64>> = (0..spec.domains)
        .map(|_| offset(&mut rng))
        .collect::<Result<_>>()?;
    let held_out: Vec<Array1<f64>> = (0..spec.test_domains)
        .map(|_| offset(&mut rng))
        .collect::<Result<_>>()?;

    let layout = Layout {
        domains: spec.domains,
        classes: c,
    };
    let mut prompt_rows = Array2::zeros((layout.rows(), d));
    for (j, o) in seen.iter().enumerate() {
        for i in 0..c {
            prompt_rows
                .row_mut(layout.index(j, i))
                .assign(&(&anchors.row(i) + o));
        }
    }
    normalize_rows(&mut prompt_rows);

    let sigma = spec.noise / (d as f64).sqrt();
    let n = spec.test_domains * c * spec.n_per_class;
    let mut image_rows = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut rows = image_rows.axis_iter_mut(Axis(0));
    for o in &held_out {
        for i in 0..c {
            for _ in 0..spec.n_per_class {
                let noise = gaussian(&mut rng, d) * sigma;
                rows.next()
                    .expect("row count")
                    .assign(&(&anchors.row(i) + o + &noise));
                labels.push(i as u32);
            }
        }
    }
    normalize_rows(&mut image_rows);

    let class_names: Vec<String> = (0..c).map(|i| format!("class_{i}")).collect();
    let domain_names: Vec<String> = (0..spec.domains).map(|j| format!("domain_{j}")).collect();
    Ok(Synthetic {
        prompts: PromptTensor::new(domain_names, class_names.clone(), "synthetic", prompt_rows)?,
        images: ImageSet::new(
            class_names.clone(),
            labels,
            Some("heldout".into()),
            image_rows,
        )?,
        oracle: UnifiedReps::new(class_names, anchors)?,
    })
}

/// Mean over classes of the mean pairwise cosine among each class's M rows.
pub fn intra_class_tightness(rows: &Array2<f64>, layout: Layout) -> Result<f64> {
    if layout.domains < 2 {
        return Err(Error::Shape("tightness needs at least two domains".into()));
    }
    if rows.nrows() != layout.rows() {
        return Err(Error::Shape(format!(
            "{} rows for an {}x{} grid",
            rows.nrows(),
            layout.domains,
            layout.classes
        )));
    }
    let mut units = rows.clone();
    for (row, r) in rows.outer_iter().enumerate() {
        if r.dot(&r) == 0.0 {
            return Err(Error::ZeroNorm { row });
        }
    }
    normalize_rows(&mut units);

    let m = layout.domains;
    let pairs = (m * (m - 1) / 2) as f64;
    let mut total = 0.0;
    for i in 0..layout.classes {
        let mut s = 0.0;
        for j in 0..m {
            for k in j + 1..m {
                s += units
                    .row(layout.index(j, i))
                    .dot(&units.row(layout.index(k, i)));
            }
        }
        total += s / pairs;
    }
    Ok(total / layout.classes as f64)
}
