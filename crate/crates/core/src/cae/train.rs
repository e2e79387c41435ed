use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use super::adamw::AdamW;
use super::loss::{loss_all_with_grad, Losses};
use super::model::{CaeConfig, CaeModel};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Layout, PromptTensor};

/// Per-epoch loss trace. Losses are measured on the parameters at the start
/// of each epoch, before that epoch's update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub rec: Vec<f64>,
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    pub all: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct CsvRow {
    epoch: usize,
    #[serde(rename = "L_rec")]
    rec: f64,
    #[serde(rename = "L_intra")]
    intra: f64,
    #[serde(rename = "L_inter")]
    inter: f64,
    #[serde(rename = "L_all")]
    all: f64,
}

impl TrainReport {
    fn push(&mut self, l: Losses) {
        self.rec.push(l.rec);
        self.intra.push(l.intra);
        self.inter.push(l.inter);
        self.all.push(l.all);
        self.epochs += 1;
    }

    pub fn last(&self) -> Option<Losses> {
        let i = self.epochs.checked_sub(1)?;
        Some(Losses {
            all: self.all[i],
            rec: self.rec[i],
            intra: self.intra[i],
            inter: self.inter[i],
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for epoch in 0..self.epochs {
            w.serialize(CsvRow {
                epoch,
                rec: self.rec[epoch],
                intra: self.intra[epoch],
                inter: self.inter[epoch],
                all: self.all[epoch],
            })?;
        }
        w.into_inner()
            .map_err(|e| Error::Csv(e.into_error().into()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }
}

/// Full-batch AdamW training on a prompt tensor. Deterministic given the seed.
pub fn train(t: &PromptTensor, cfg: &CaeConfig) -> Result<(CaeModel, TrainReport)> {
    let model = CaeModel::new(t.dim(), cfg.clone())?;
    train_from(model, t.data(), t.layout())
}

/// Continues training `model` (with its own config) on domain-major rows.
pub fn train_from(
    mut model: CaeModel,
    rows: &Array2<f64>,
    layout: Layout,
) -> Result<(CaeModel, TrainReport)> {
    let cfg = model.config.clone();
    cfg.validate()?;
    let mut opt = AdamW::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut report = TrainReport {
        seed: cfg.seed,
        ..Default::default()
    };

    for epoch in 0..cfg.epochs {
        let cache = model.params.forward_cached(rows)?;
        let (losses, d_out) =
            loss_all_with_grad(rows, &cache.output, layout, &cfg).map_err(|e| match e {
                Error::ZeroNorm { .. } | Error::DegenerateClass { .. } => Error::NumericAbort {
                    epoch,
                    what: e.to_string(),
                },
                other => other,
            })?;
        if !losses.all.is_finite() {
            return Err(Error::NumericAbort {
                epoch,
                what: format!("non-finite loss {losses:?}"),
            });
        }
        report.push(losses);

        let grads = model.params.backward(&cache, &d_out);
        opt.step(&mut model.params.blocks_mut(), &grads.blocks());
        if !model.params.all_finite() {
            return Err(Error::NumericAbort {
                epoch,
                what: "non-finite parameter after update".into(),
            });
        }
    }
    Ok((model, report))
}
