//! Cosine autoencoder: a four-layer MLP trained full-batch with AdamW on the
//! M x C prompt grid to pull each class's per-domain embeddings together
//! while keeping classes apart.

pub mod adamw;
pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod train;

pub use adamw::AdamW;
pub use loss::{
    class_means, cosine, loss_all, loss_all_with_grad, loss_inter, loss_intra, loss_rec, Losses,
};
pub use model::{CaeConfig, CaeModel, ForwardCache, Params, ReconLoss};
pub use train::{train, train_from, TrainReport};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::PromptTensor;

/// Reconstructions of every row of `t`, in the same domain-major order.
pub fn forward(model: &CaeModel, t: &PromptTensor) -> Result<Array2<f64>> {
    if t.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "prompt dimension {} does not match model input {}",
            t.dim(),
            model.input_dim()
        )));
    }
    model.forward(t.data())
}
