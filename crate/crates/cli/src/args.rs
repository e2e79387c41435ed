use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use duprg_core::{CaeConfig, ReconLoss, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "duprg",
    version,
    about = "Domain-unified prompt representations on precomputed embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand a domain bank into prompt text for the exporter
    Bank(BankCmd),
    /// Train a cosine autoencoder on a prompt tensor
    Train(TrainArgs),
    /// Collapse a prompt tensor into one representation per class
    Unify(UnifyArgs),
    /// Zero-shot accuracy of unified reps on one or more image sets
    Eval(EvalArgs),
    /// Train and evaluate over a (lambda1, lambda2) grid
    Sweep(SweepArgs),
    /// Write a synthetic benchmark as DUPR files
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct BankCmd {
    #[command(subcommand)]
    pub action: Option<BankAction>,
    #[command(flatten)]
    pub expand: ExpandArgs,
}

#[derive(Debug, Subcommand)]
pub enum BankAction {
    /// Same as `duprg bank` with flags
    Expand(ExpandArgs),
    /// Write a bank as JSON, e.g. to customize a preset
    Save(SaveBankArgs),
}

#[derive(Debug, Args)]
pub struct BankSource {
    /// empty | task:<dataset> | combined | expanded
    #[arg(long, conflicts_with = "bank")]
    pub preset: Option<String>,
    /// Bank JSON file
    #[arg(long)]
    pub bank: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub source: BankSource,
    /// Class names, one per line
    #[arg(long, required = true)]
    pub classes: Option<PathBuf>,
    /// Prompt text output, one prompt per line
    #[arg(long, required = true)]
    pub out: Option<PathBuf>,
    /// Line -> (domain, class) mapping; defaults to <out>.sidecar.json
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SaveBankArgs {
    #[command(flatten)]
    pub source: BankSource,
    #[arg(long)]
    pub out: PathBuf,
}

/// CAE hyperparameters; unset flags fall back to `--config`, then defaults.
#[derive(Debug, Clone, Args)]
pub struct CaeFlags {
    /// JSON file with any subset of the training configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub recon_loss: Option<ReconArg>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub latent: Option<u64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReconArg {
    Cosine,
    L2,
}

impl From<ReconArg> for ReconLoss {
    fn from(r: ReconArg) -> Self {
        match r {
            ReconArg::Cosine => ReconLoss::Cosine,
            ReconArg::L2 => ReconLoss::L2,
        }
    }
}

impl CaeFlags {
    /// Applies the flags that were given on top of `cfg`.
    pub fn apply(&self, mut cfg: CaeConfig) -> CaeConfig {
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v as usize;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.recon_loss {
            cfg.recon_loss = v.into();
        }
        if let Some(v) = self.hidden {
            cfg.hidden = Some(v as usize);
        }
        if let Some(v) = self.latent {
            cfg.latent = Some(v as usize);
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    /// Weight of the intra-class term
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the inter-class term
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[command(flatten)]
    pub cae: CaeFlags,
    /// Checkpoint output (.dupc)
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to <out> with a .csv extension
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Mp,
    Cae,
}

#[derive(Debug, Args)]
pub struct UnifyArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Trained checkpoint, required for --mode cae
    #[arg(long, required_if_eq("mode", "cae"))]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reps: PathBuf,
    /// One or more image-set files, one table column each
    #[arg(long, num_args = 1.., required = true)]
    pub images: Vec<PathBuf>,
    /// Write the full results as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub images: Vec<PathBuf>,
    /// Comma-separated lambda1 values
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub lambda1: Vec<f64>,
    /// Comma-separated lambda2 values
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
    pub lambda2: Vec<f64>,
    #[command(flatten)]
    pub cae: CaeFlags,
    /// CSV output
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON file with any subset of the synthetic spec
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub domains: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub test_domains: Option<usize>,
    #[arg(long)]
    pub class_sep: Option<f64>,
    #[arg(long)]
    pub domain_shift: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SynthArgs {
    pub fn apply(&self, mut spec: SynthSpec) -> SynthSpec {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { spec.$f = v; } )* };
        }
        set!(
            classes,
            domains,
            dim,
            n_per_class,
            test_domains,
            class_sep,
            domain_shift,
            noise,
            seed
        );
        spec
    }
}
