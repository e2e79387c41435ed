//! Zero-shot classification by cosine similarity against unified reps.

use ndarray::{Array1, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{ImageSet, UnifiedReps};

/// Accuracy and confusion counts for one image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Zero for classes with no images.
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
    pub domain_tag: Option<String>,
}

/// Reps with their row norms cached; zero rows are rejected up front.
struct Scorer<'a> {
    reps: &'a UnifiedReps,
    norms: Array1<f64>,
}

impl<'a> Scorer<'a> {
    fn new(reps: &'a UnifiedReps) -> Result<Self> {
        let norms = reps.data().map_axis(Axis(1), |r| r.dot(&r).sqrt());
        if let Some(row) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::ZeroNorm { row });
        }
        Ok(Self { reps, norms })
    }

    fn predict(&self, image: ArrayView1<'_, f64>) -> Result<usize> {
        if image.len() != self.reps.dim() {
            return Err(Error::Shape(format!(
                "image has dimension {}, reps have {}",
                image.len(),
                self.reps.dim()
            )));
        }
        let inorm = image.dot(&image).sqrt();
        if inorm == 0.0 || !inorm.is_finite() {
            return Err(Error::ZeroNorm { row: 0 });
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, rep) in self.reps.data().outer_iter().enumerate() {
            let score = rep.dot(&image) / (self.norms[k] * inorm);
            // Strict comparison keeps the lowest index on ties.
            if score > best_score {
                best = k;
                best_score = score;
            }
        }
        Ok(best)
    }
}

/// Index of the rep row with the highest cosine to `image`; ties go to the
/// lowest index.
pub fn predict(reps: &UnifiedReps, image: ArrayView1<'_, f64>) -> Result<usize> {
    Scorer::new(reps)?.predict(image)
}

/// Whether rescaling `image` by `s > 0` leaves the prediction unchanged.
pub fn scale_check(reps: &UnifiedReps, image: ArrayView1<'_, f64>, s: f64) -> Result<bool> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {s}")));
    }
    let scaled = image.mapv(|v| v * s);
    Ok(predict(reps, image)? == predict(reps, scaled.view())?)
}

/// Classifies every image and tallies the confusion matrix.
pub fn evaluate(reps: &UnifiedReps, images: &ImageSet) -> Result<EvalResult> {
    if reps.class_names() != images.class_names() {
        return Err(Error::ClassMismatch(describe_mismatch(
            reps.class_names(),
            images.class_names(),
        )));
    }
    let scorer = Scorer::new(reps)?;
    let data = images.data();
    let predictions: Vec<usize> = (0..images.len())
        .into_par_iter()
        .map(|i| {
            scorer.predict(data.row(i)).map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::ZeroNorm { row: i },
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let c = reps.classes();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&label, &pred) in images.labels().iter().zip(&predictions) {
        confusion[label as usize][pred] += 1;
    }
    let total = predictions.len();
    let correct = (0..c).map(|k| confusion[k][k]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                row[k] as f64 / n as f64
            }
        })
        .collect();
    Ok(EvalResult {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        per_class_accuracy,
        confusion,
        class_names: reps.class_names().to_vec(),
        domain_tag: images.domain_tag().map(str::to_string),
    })
}

fn describe_mismatch(a: &[String], b: &[String]) -> String {
    if a.len() != b.len() {
        return format!("reps have {} classes, images have {}", a.len(), b.len());
    }
    let i = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(0);
    format!("class {i} is {:?} in reps but {:?} in images", a[i], b[i])
}
