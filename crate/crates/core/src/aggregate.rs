//! Collapsing the domain axis into one representation per class.

use ndarray::Array2;

use crate::cae::{self, class_means, CaeModel};
use crate::error::Result;
use crate::io::{Layout, PromptTensor, UnifiedReps};

/// Mean over domains of the raw prompt embeddings.
pub fn mean_pool(t: &PromptTensor) -> Result<UnifiedReps> {
    pool_rows(t.data(), t.layout(), t.class_names())
}

/// Mean over domains of the autoencoder's reconstructions.
pub fn cae_unify(t: &PromptTensor, model: &CaeModel) -> Result<UnifiedReps> {
    let recon = cae::forward(model, t)?;
    pool_rows(&recon, t.layout(), t.class_names())
}

/// Mean-pools a domain-major matrix laid out like `layout`.
pub fn pool_rows(
    rows: &Array2<f64>,
    layout: Layout,
    class_names: &[String],
) -> Result<UnifiedReps> {
    UnifiedReps::new(class_names.to_vec(), class_means(rows, layout))
}
