use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use duprg_core::cae::checkpoint;
use duprg_core::io::{self, write_atomic};
use duprg_core::{
    cae_unify, evaluate, mean_pool, train, CaeConfig, DomainBank, EvalResult, ImageSet,
    PromptTensor, SynthSpec, UnifiedReps,
};
use serde::Serialize;

use crate::args::*;
use crate::UsageError;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v = serde_json::from_str(&text).map_err(duprg_core::Error::from)?;
    Ok(v)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn resolve_bank(src: &BankSource) -> Result<DomainBank> {
    match (&src.preset, &src.bank) {
        (Some(name), None) => Ok(DomainBank::preset(name)?),
        (None, Some(path)) => Ok(DomainBank::load(path)?),
        _ => Err(UsageError("exactly one of --preset or --bank is required".into()).into()),
    }
}

fn read_classes(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| duprg_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[derive(Serialize)]
struct SidecarEntry {
    line: usize,
    domain_index: usize,
    class_index: usize,
}

/// Written next to the prompt text so the exporter can place each encoded
/// line in the M x C grid.
#[derive(Serialize)]
struct Sidecar<'a> {
    bank: &'a str,
    template: &'a str,
    domains: Vec<String>,
    classes: &'a [String],
    prompts: Vec<SidecarEntry>,
}

pub fn bank(cmd: BankCmd) -> Result<()> {
    match cmd.action {
        Some(BankAction::Expand(args)) => expand(args),
        Some(BankAction::Save(args)) => {
            let bank = resolve_bank(&args.source)?;
            bank.save(&args.out)?;
            println!("wrote {} ({} domains)", args.out.display(), bank.len());
            Ok(())
        }
        None => expand(cmd.expand),
    }
}

fn expand(args: ExpandArgs) -> Result<()> {
    let (Some(classes_path), Some(out)) = (args.classes, args.out) else {
        return Err(UsageError("--classes and --out are required".into()).into());
    };
    let bank = resolve_bank(&args.source)?;
    let classes = read_classes(&classes_path)?;
    let prompts = bank.expand(&classes)?;
    if let Some(p) = prompts.iter().find(|p| p.text.contains(['\n', '\r'])) {
        bail!(duprg_core::Error::Bank(format!(
            "prompt {:?} contains a line break",
            p.text
        )));
    }

    let mut text = String::new();
    for p in &prompts {
        text.push_str(&p.text);
        text.push('\n');
    }
    let sidecar = Sidecar {
        bank: &bank.name,
        template: if bank.is_empty() {
            &bank.template_standard
        } else {
            &bank.template_domain
        },
        domains: bank.grid_domains(),
        classes: &classes,
        prompts: prompts
            .iter()
            .enumerate()
            .map(|(line, p)| SidecarEntry {
                line,
                domain_index: p.domain_index,
                class_index: p.class_index,
            })
            .collect(),
    };
    let sidecar_path = args.sidecar.unwrap_or_else(|| default_sidecar(&out));
    write_atomic(&out, text.as_bytes())?;
    write_json(&sidecar_path, &sidecar)?;
    println!(
        "wrote {} prompts ({} domains x {} classes) to {}",
        prompts.len(),
        sidecar.domains.len(),
        classes.len(),
        out.display()
    );
    Ok(())
}

fn default_sidecar(out: &Path) -> PathBuf {
    out.with_extension("sidecar.json")
}

fn resolve_cae(flags: &CaeFlags) -> Result<CaeConfig> {
    let base = match &flags.config {
        Some(path) => read_json(path)?,
        None => CaeConfig::default(),
    };
    Ok(flags.apply(base))
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_cae(&args.cae)?;
    if let Some(v) = args.lambda1 {
        cfg.lambda1 = v;
    }
    if let Some(v) = args.lambda2 {
        cfg.lambda2 = v;
    }
    cfg.validate()?;
    let prompts = io::read_prompts(&args.prompts)?;
    let (model, report) = train(&prompts, &cfg)?;
    let report_path = args
        .report
        .unwrap_or_else(|| args.out.with_extension("csv"));
    checkpoint::save(&model, &args.out)?;
    report.write_csv(&report_path)?;
    let last = report.last().expect("at least one epoch");
    println!(
        "trained {} epochs: L_all {:.6} L_rec {:.6} L_intra {:.6} L_inter {:.6}",
        report.epochs, last.all, last.rec, last.intra, last.inter
    );
    println!("wrote {} and {}", args.out.display(), report_path.display());
    Ok(())
}

fn unify_with(mode: Mode, prompts: &PromptTensor, model: Option<&Path>) -> Result<UnifiedReps> {
    Ok(match mode {
        Mode::Mp => mean_pool(prompts)?,
        Mode::Cae => {
            let Some(path) = model else {
                return Err(UsageError("--mode cae requires --model".into()).into());
            };
            cae_unify(prompts, &checkpoint::load(path)?)?
        }
    })
}

pub fn unify(args: UnifyArgs) -> Result<()> {
    let prompts = io::read_prompts(&args.prompts)?;
    let reps = unify_with(args.mode, &prompts, args.model.as_deref())?;
    io::write_reps(&reps, &args.out)?;
    println!(
        "wrote {} reps ({} classes, d = {}) to {}",
        match args.mode {
            Mode::Mp => "mean-pooled",
            Mode::Cae => "CAE",
        },
        reps.classes(),
        reps.dim(),
        args.out.display()
    );
    Ok(())
}

/// Column label for an image set: its domain tag, else the file stem.
fn target_name(set: &ImageSet, path: &Path) -> String {
    set.domain_tag()
        .map(str::to_string)
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| path.display().to_string())
}

fn load_targets(paths: &[PathBuf]) -> Result<Vec<(String, ImageSet)>> {
    paths
        .iter()
        .map(|p| {
            let set = io::read_images(p)?;
            Ok((target_name(&set, p), set))
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn print_table(header: &[String], rows: &[(String, Vec<f64>)]) {
    let first = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let widths: Vec<usize> = header.iter().map(|h| h.len().max(6)).collect();
    let mut line = format!("{:<first$}", "");
    for (h, w) in header.iter().zip(&widths) {
        line.push_str(&format!("  {h:>w$}"));
    }
    println!("{line}");
    for (label, values) in rows {
        let mut line = format!("{label:<first$}");
        for (v, w) in values.iter().zip(&widths) {
            line.push_str(&format!("  {:>w$.1}", v * 100.0));
        }
        println!("{line}");
    }
}

#[derive(Serialize)]
struct Target {
    name: String,
    file: PathBuf,
    result: EvalResult,
}

#[derive(Serialize)]
struct EvalReport {
    reps: PathBuf,
    targets: Vec<Target>,
    mean_accuracy: f64,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let reps = io::read_reps(&args.reps)?;
    let targets = load_targets(&args.images)?;
    let mut results = Vec::with_capacity(targets.len());
    for ((name, set), file) in targets.into_iter().zip(&args.images) {
        let result =
            evaluate(&reps, &set).with_context(|| format!("evaluating {}", file.display()))?;
        results.push(Target {
            name,
            file: file.clone(),
            result,
        });
    }
    let accs: Vec<f64> = results.iter().map(|t| t.result.accuracy).collect();
    let mean_accuracy = mean(&accs);

    let mut header: Vec<String> = results.iter().map(|t| t.name.clone()).collect();
    header.push("mean".into());
    let mut row = accs;
    row.push(mean_accuracy);
    print_table(&header, &[("accuracy".into(), row)]);

    if let Some(path) = &args.json {
        write_json(
            path,
            &EvalReport {
                reps: args.reps.clone(),
                targets: results,
                mean_accuracy,
            },
        )?;
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    if args.lambda1.is_empty() || args.lambda2.is_empty() {
        return Err(UsageError("empty lambda grid".into()).into());
    }
    let base = resolve_cae(&args.cae)?;
    base.validate()?;
    let prompts = io::read_prompts(&args.prompts)?;
    let targets = load_targets(&args.images)?;
    let names: Vec<String> = targets.iter().map(|t| t.0.clone()).collect();

    let accuracies = |reps: &UnifiedReps| -> Result<Vec<f64>> {
        let mut accs = targets
            .iter()
            .map(|(_, set)| Ok(evaluate(reps, set)?.accuracy))
            .collect::<Result<Vec<f64>>>()?;
        accs.push(mean(&accs));
        Ok(accs)
    };

    // Train every grid point before writing anything.
    let mut rows = Vec::new();
    for &l1 in &args.lambda1 {
        for &l2 in &args.lambda2 {
            let cfg = CaeConfig {
                lambda1: l1,
                lambda2: l2,
                ..base.clone()
            };
            cfg.validate()?;
            let (model, _) = train(&prompts, &cfg)?;
            rows.push((l1, l2, accuracies(&cae_unify(&prompts, &model)?)?));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["lambda1".to_string(), "lambda2".to_string()];
    header.extend(names.iter().cloned());
    header.push("mean".into());
    w.write_record(&header)?;
    for (l1, l2, accs) in &rows {
        let mut rec = vec![l1.to_string(), l2.to_string()];
        rec.extend(accs.iter().map(|a| a.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| anyhow::anyhow!("{}", e.error()))?;
    write_atomic(&args.out, &bytes)?;

    let mut table_header = names;
    table_header.push("mean".into());
    let mut table: Vec<(String, Vec<f64>)> = rows
        .iter()
        .map(|(l1, l2, accs)| (format!("[{l1}, {l2}]"), accs.clone()))
        .collect();
    table.push(("MP".into(), accuracies(&mean_pool(&prompts)?)?));
    print_table(&table_header, &table);
    if rows.iter().any(|(l1, l2, _)| *l1 == 0.0 && *l2 == 0.0) {
        println!(
            "note: [0, 0] is a reconstruction-only CAE, not mean pooling; MP is listed separately"
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let base = match &args.config {
        Some(path) => read_json(path)?,
        None => SynthSpec::default(),
    };
    let spec = args.apply(base);
    let data = duprg_core::generate(&spec)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| duprg_core::Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let paths = [
        args.out_dir.join("prompts.dupr"),
        args.out_dir.join("images.dupr"),
        args.out_dir.join("oracle.dupr"),
    ];
    io::write_prompts(&data.prompts, &paths[0])?;
    io::write_images(&data.images, &paths[1])?;
    io::write_reps(&data.oracle, &paths[2])?;
    write_json(&args.out_dir.join("spec.json"), &spec)?;
    println!(
        "wrote {} prompts ({} domains x {} classes, d = {}) and {} images to {}",
        data.prompts.data().nrows(),
        spec.domains,
        spec.classes,
        spec.dim,
        data.images.len(),
        args.out_dir.display()
    );
    Ok(())
}
