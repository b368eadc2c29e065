//! Command-line pipeline driver.
//!
//! Subcommands mirror the pipeline stages: `train` produces a model,
//! `analyze` builds per-class hit spectra, `rank` scores and selects
//! suspicious neurons, `synthesize` perturbs correctly classified inputs
//! towards them, and `evaluate` reports metrics over a synthesis run.
//!
//! Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.

mod data;
mod manifest;
mod runs;
mod svg;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use data::Split;
use deepfault::evaluate::{activation_increase_counts, mann_whitney_u, DistanceStats};
use deepfault::{
    model_io, spectrum, suspicious, synthesis, train as trainer, ClassFilter, LabeledInput,
    Measure, SpectrumTable, SuspiciousnessReport, SynthesisConfig, TrainConfig,
};
use manifest::ManifestBuilder;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "deepfault", version, about = "Suspicious-neuron localization and guided input synthesis for dense classifiers")]
struct Cli {
    /// Bound on internal parallelism (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dense leaky-ReLU classifier with mini-batch SGD.
    Train(TrainArgs),
    /// Build per-class hit spectra of a model over a dataset split.
    Analyze(AnalyzeArgs),
    /// Score spectra and select the most suspicious neurons.
    Rank(RankArgs),
    /// Synthesize perturbed inputs guided by ranked suspicious neurons.
    Synthesize(SynthesizeArgs),
    /// Compute metrics over a synthesis run.
    Evaluate(EvaluateArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory (or set DEEPFAULT_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Hidden architecture: `LxW` (L layers of width W) or a comma list.
    #[arg(long, default_value = "8x20")]
    arch: String,
    #[arg(long, default_value_t = 0.06)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Leaky-ReLU slope.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Activation threshold: a neuron counts as active above this value.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// `all` for a whole-set table, a class index for one class; omit for
    /// one table per class.
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MeasureKind {
    Tarantula,
    Ochiai,
    Dstar,
    Random,
}

#[derive(clap::Args)]
struct RankArgs {
    /// Directory produced by `analyze`.
    #[arg(long)]
    spectra: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    measure: MeasureKind,
    /// Number of suspicious neurons to select.
    #[arg(long)]
    k: usize,
    /// Exponent of the D* measure.
    #[arg(long, default_value_t = 3.0)]
    star: f64,
    /// Seed for the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stratify the random baseline by layer width.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    stratified: bool,
    /// Independent repetitions (random baseline only; defaults to 5 there).
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SynthesizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Directory with ranking reports from `rank`.
    #[arg(long)]
    reports: PathBuf,
    /// Gradient scale.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Maximum per-dimension change as a fraction of the value range.
    #[arg(long, default_value_t = 0.1)]
    d: f64,
    #[arg(long, default_value_t = 0.0)]
    domain_min: f64,
    #[arg(long, default_value_t = 1.0)]
    domain_max: f64,
    /// Inputs to synthesize per ground-truth class.
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    /// Restrict synthesis to one class.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Synthesis run directory.
    #[arg(long)]
    run: PathBuf,
    /// Second synthesis run to compare against (rank-sum tests per metric).
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let run = || -> Result<()> {
        match cli.command {
            Command::Train(args) => cmd_train(args),
            Command::Analyze(args) => cmd_analyze(args),
            Command::Rank(args) => cmd_rank(args),
            Command::Synthesize(args) => cmd_synthesize(args),
            Command::Evaluate(args) => cmd_evaluate(args),
        }
    };

    let outcome = match cli.threads {
        Some(threads) => {
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(run),
                Err(e) => Err(anyhow!("building thread pool: {e}")),
            }
        }
        None => run(),
    };

    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}

/// 2 for I/O failures, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
        if let Some(deepfault::Error::Io(_)) = cause.downcast_ref::<deepfault::Error>() {
            return 2;
        }
    }
    1
}

/// Parses `LxW` (L hidden layers of width W) or a comma list of widths.
fn parse_arch(text: &str) -> Result<Vec<usize>> {
    if let Some((layers, width)) = text.split_once(['x', 'X']) {
        let layers: usize = layers.trim().parse().context("bad layer count")?;
        let width: usize = width.trim().parse().context("bad layer width")?;
        if layers == 0 || width == 0 {
            bail!("architecture must have at least one non-empty hidden layer");
        }
        return Ok(vec![width; layers]);
    }
    let widths: Vec<usize> = text
        .split(',')
        .map(|w| w.trim().parse().context("bad layer width"))
        .collect::<Result<_>>()?;
    if widths.is_empty() || widths.contains(&0) {
        bail!("architecture must have at least one non-empty hidden layer");
    }
    Ok(widths)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let data_dir = data::resolve_data_dir(args.data_dir.as_deref())?;
    let hidden_widths = parse_arch(&args.arch)?;
    let (train_data, train_files) = data::load_split(&data_dir, Split::Train)?;

    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        hidden_widths: hidden_widths.clone(),
        alpha: args.alpha,
    };
    fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::start(json!({
        "command": "train",
        "arch": hidden_widths,
        "learning_rate": args.lr,
        "batch_size": args.batch,
        "epochs": args.epochs,
        "seed": args.seed,
        "alpha": args.alpha,
        "data_dir": data_dir.display().to_string(),
    }))
    .seed(args.seed);
    for f in &train_files {
        mb.input_file(f)?;
    }

    let started = Instant::now();
    let net = trainer::train(&train_data, &cfg)?;
    mb.elapsed_seconds(started.elapsed().as_secs_f64());

    let model_path = args.out.join("model.json");
    model_io::save_model(&net, &model_path)?;

    let train_acc = trainer::evaluate_accuracy(&net, &train_data)?;
    println!("training accuracy: {train_acc:.4}");
    if let Ok((test_data, _)) = data::load_split(&data_dir, Split::Test) {
        let test_acc = trainer::evaluate_accuracy(&net, &test_data)?;
        println!("test accuracy: {test_acc:.4}");
    }
    println!("model written to {}", model_path.display());
    mb.finish(&args.out)?;
    Ok(())
}

/// Target classes of an analyze/rank-style `--class` argument.
fn parse_class_arg(arg: Option<&str>, classes: usize) -> Result<Vec<ClassFilter>> {
    match arg {
        None => Ok((0..classes).map(ClassFilter::Class).collect()),
        Some("all") => Ok(vec![ClassFilter::All]),
        Some(text) => {
            let c: usize = text
                .parse()
                .with_context(|| format!("--class must be `all` or a class index, got {text:?}"))?;
            if c >= classes {
                bail!("class {c} out of range for {classes} classes");
            }
            Ok(vec![ClassFilter::Class(c)])
        }
    }
}

fn spectrum_file_name(filter: ClassFilter) -> String {
    format!("spectrum_class_{filter}.csv")
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let data_dir = data::resolve_data_dir(args.data_dir.as_deref())?;
    let net = model_io::load_model(&args.model)?;
    let (tests, data_files) = data::load_split(&data_dir, args.split)?;
    let filters = parse_class_arg(args.class.as_deref(), net.output_width())?;

    fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::start(json!({
        "command": "analyze",
        "model": args.model.display().to_string(),
        "split": args.split.to_string(),
        "threshold": args.threshold,
        "classes": filters.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    }));
    mb.input_file(&args.model)?;
    for f in &data_files {
        mb.input_file(f)?;
    }

    let mut sizes = BTreeMap::new();
    for &filter in &filters {
        let table = spectrum::analyze(&net, &tests, filter, args.threshold)?;
        let file = args.out.join(spectrum_file_name(filter));
        fs::write(&file, table.to_csv())?;
        sizes.insert(filter.to_string(), table.test_set_size());
        println!(
            "class {filter}: {} inputs -> {}",
            table.test_set_size(),
            file.display()
        );
    }
    fs::write(
        args.out.join("analysis.json"),
        serde_json::to_string_pretty(&json!({
            "threshold": args.threshold,
            "split": args.split.to_string(),
            "test_set_sizes": sizes,
        }))?,
    )?;
    mb.finish(&args.out)?;
    Ok(())
}

/// Spectrum tables found in an analyze output directory, whole-set last.
fn read_spectra_dir(dir: &Path) -> Result<Vec<(ClassFilter, SpectrumTable)>> {
    let meta: Option<serde_json::Value> = fs::read_to_string(dir.join("analysis.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let threshold = meta
        .as_ref()
        .and_then(|m| m.get("threshold"))
        .and_then(|v| v.as_f64())
        .unwrap_or(0.0);

    let mut class_files: Vec<(usize, PathBuf)> = Vec::new();
    let mut all_file: Option<PathBuf> = None;
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name == "spectrum_class_all.csv" {
            all_file = Some(path);
        } else if let Some(c) = name
            .strip_prefix("spectrum_class_")
            .and_then(|rest| rest.strip_suffix(".csv"))
            .and_then(|c| c.parse::<usize>().ok())
        {
            class_files.push((c, path));
        }
    }
    class_files.sort();
    let mut tables = Vec::new();
    for (c, path) in class_files {
        let table = SpectrumTable::from_csv(
            &fs::read_to_string(&path)?,
            ClassFilter::Class(c),
            threshold,
        )?;
        tables.push((ClassFilter::Class(c), table));
    }
    if let Some(path) = all_file {
        let table =
            SpectrumTable::from_csv(&fs::read_to_string(&path)?, ClassFilter::All, threshold)?;
        tables.push((ClassFilter::All, table));
    }
    if tables.is_empty() {
        bail!("no spectrum_class_*.csv files in {}", dir.display());
    }
    Ok(tables)
}

fn report_file_name(filter: ClassFilter) -> String {
    format!("report_class_{filter}.json")
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let net = model_io::load_model(&args.model)?;
    let tables = read_spectra_dir(&args.spectra)?;

    let repeats = match (args.measure, args.repeats) {
        (MeasureKind::Random, None) => 5,
        (MeasureKind::Random, Some(r)) if r >= 1 => r,
        (MeasureKind::Random, Some(_)) => bail!("--repeats must be at least 1"),
        (_, None) | (_, Some(1)) => 1,
        (_, Some(_)) => bail!("--repeats only applies to the random baseline"),
    };

    fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::start(json!({
        "command": "rank",
        "model": args.model.display().to_string(),
        "spectra": args.spectra.display().to_string(),
        "measure": format!("{:?}", args.measure).to_lowercase(),
        "k": args.k,
        "star": args.star,
        "seed": args.seed,
        "stratified": args.stratified,
        "repeats": repeats,
    }))
    .seed(args.seed);
    mb.input_file(&args.model)?;

    for rep in 0..repeats {
        let measure = match args.measure {
            MeasureKind::Tarantula => Measure::Tarantula,
            MeasureKind::Ochiai => Measure::Ochiai,
            MeasureKind::Dstar => Measure::DStar { star: args.star },
            MeasureKind::Random => Measure::Random {
                seed: args.seed + rep as u64,
                stratified: args.stratified,
            },
        };
        let rep_dir = if repeats == 1 {
            args.out.clone()
        } else {
            let d = args.out.join(format!("rep{rep}"));
            fs::create_dir_all(&d)?;
            d
        };
        for (filter, table) in &tables {
            let report = suspicious::identify(&net, table, &measure, args.k)?;
            let file = rep_dir.join(report_file_name(*filter));
            fs::write(&file, report.to_json())?;
            println!("class {filter}: top-{} by {measure} -> {}", args.k, file.display());
        }
    }
    mb.finish(&args.out)?;
    Ok(())
}

/// Ranking reports found in a rank output directory, ascending class,
/// whole-set report last.
fn read_reports_dir(dir: &Path, only_class: Option<usize>) -> Result<Vec<SuspiciousnessReport>> {
    let mut class_files: Vec<(usize, PathBuf)> = Vec::new();
    let mut all_file: Option<PathBuf> = None;
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name == "report_class_all.json" {
            all_file = Some(path);
        } else if let Some(c) = name
            .strip_prefix("report_class_")
            .and_then(|rest| rest.strip_suffix(".json"))
            .and_then(|c| c.parse::<usize>().ok())
        {
            if only_class.is_none() || only_class == Some(c) {
                class_files.push((c, path));
            }
        }
    }
    class_files.sort();
    let mut reports = Vec::new();
    for (_, path) in class_files {
        reports.push(SuspiciousnessReport::from_json(&fs::read_to_string(&path)?)?);
    }
    if let Some(path) = all_file {
        if only_class.is_none() {
            reports.push(SuspiciousnessReport::from_json(&fs::read_to_string(&path)?)?);
        }
    }
    if reports.is_empty() {
        bail!("no ranking reports in {}", dir.display());
    }
    Ok(reports)
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<()> {
    let data_dir = data::resolve_data_dir(args.data_dir.as_deref())?;
    let net = model_io::load_model(&args.model)?;
    let (tests, data_files) = data::load_split(&data_dir, args.split)?;
    let reports = read_reports_dir(&args.reports, args.class)?;

    let cfg = SynthesisConfig {
        step: args.step,
        max_distance: args.d,
        domain_min: args.domain_min,
        domain_max: args.domain_max,
        per_class_count: args.per_class,
    };

    fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::start(json!({
        "command": "synthesize",
        "model": args.model.display().to_string(),
        "reports": args.reports.display().to_string(),
        "split": args.split.to_string(),
        "step": args.step,
        "d": args.d,
        "domain": [args.domain_min, args.domain_max],
        "per_class": args.per_class,
        "class": args.class,
    }));
    mb.input_file(&args.model)?;
    for f in &data_files {
        mb.input_file(f)?;
    }

    let mut groups = Vec::new();
    let started = Instant::now();
    for report in reports {
        let outcome = synthesis::synthesize_batch(&net, &tests, &report, &cfg)?;
        for w in &outcome.warnings {
            eprintln!("warning: {w}");
            mb.warn(w.clone());
        }
        groups.push((report, outcome.results));
    }
    mb.elapsed_seconds(started.elapsed().as_secs_f64());

    runs::write_synthesis_dir(&args.out, &groups)?;
    let total: usize = groups.iter().map(|(_, r)| r.len()).sum();
    println!(
        "synthesized {total} inputs -> {}",
        args.out.join("synth.csv").display()
    );
    mb.finish(&args.out)?;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let net = model_io::load_model(&args.model)?;
    let loaded = runs::read_synthesis_dir(&args.run, &net)?;
    let runtime_seconds = manifest::read_manifest(&args.run)
        .map(|m| m.elapsed_seconds)
        .unwrap_or(0.0);

    fs::create_dir_all(&args.out)?;
    let mut mb = ManifestBuilder::start(json!({
        "command": "evaluate",
        "model": args.model.display().to_string(),
        "run": args.run.display().to_string(),
        "compare": args.compare.as_ref().map(|p| p.display().to_string()),
    }));
    mb.input_file(&args.model)?;
    mb.input_file(&args.run.join("synth.csv"))?;

    // pooled metrics over every group
    let all_results: Vec<&deepfault::SynthesisResult> = loaded
        .groups
        .iter()
        .flat_map(|(_, rs)| rs.iter())
        .collect();
    if all_results.is_empty() {
        bail!("synthesis run {} holds no results", args.run.display());
    }
    let synthesized_set: Vec<LabeledInput> = all_results
        .iter()
        .map(|r| LabeledInput::new(r.synthesized.clone(), r.original.label))
        .collect();
    let loss = net.cross_entropy_loss(&synthesized_set)?;
    let correct = all_results
        .iter()
        .filter(|r| r.synthesized_trace.matches(r.original.label))
        .count();
    let count = all_results.len() as f64;

    let mut increased = 0u64;
    let mut pairs = 0u64;
    let mut per_layer_counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut per_class = Vec::new();
    for (report, results) in &loaded.groups {
        let summary = deepfault::evaluate::summarize(&net, results, report, runtime_seconds)?;
        let (inc, tot) = activation_increase_counts(results, &report.selected())?;
        increased += inc;
        pairs += tot;
        for id in report.selected() {
            *per_layer_counts.entry(id.layer).or_insert(0) += 1;
        }
        per_class.push(runs::ClassEval {
            class: report.class_filter().to_string(),
            count: results.len(),
            loss: summary.loss,
            accuracy: summary.accuracy,
            activation_increase_ratio: summary.activation_increase_ratio,
        });
    }

    let summary = runs::CombinedEvalSummary {
        loss,
        accuracy: correct as f64 / count,
        distances: DistanceStats {
            mean_l1: all_results.iter().map(|r| r.distances.l1).sum::<f64>() / count,
            mean_l2: all_results.iter().map(|r| r.distances.l2).sum::<f64>() / count,
            mean_linf: all_results.iter().map(|r| r.distances.linf).sum::<f64>() / count,
        },
        activation_increase_ratio: increased as f64 / pairs as f64,
        per_layer_counts: per_layer_counts.clone(),
        runtime_seconds,
        per_class,
    };
    fs::write(
        args.out.join("eval_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    let mut dist_csv = String::from("layer,count\n");
    for (layer, n) in &per_layer_counts {
        dist_csv.push_str(&format!("{layer},{n}\n"));
    }
    fs::write(args.out.join("layer_distribution.csv"), dist_csv)?;
    fs::write(
        args.out.join("layer_distribution.svg"),
        svg::layer_distribution_chart(&per_layer_counts),
    )?;
    println!(
        "loss {:.4}  accuracy {:.4}  activation increase {:.4}",
        summary.loss, summary.accuracy, summary.activation_increase_ratio
    );

    if let Some(other_dir) = &args.compare {
        mb.input_file(&other_dir.join("synth.csv"))?;
        let ours = per_class_samples(&loaded.rows);
        let other_rows = runs::parse_synth_csv(&fs::read_to_string(other_dir.join("synth.csv"))?)?;
        let theirs = per_class_samples(&other_rows);
        let (acc_u, acc_p) = mann_whitney_u(&ours.0, &theirs.0)?;
        let (loss_u, loss_p) = mann_whitney_u(&ours.1, &theirs.1)?;
        let mut csv = String::from("metric,n_a,n_b,u,p_two_sided\n");
        csv.push_str(&format!(
            "accuracy,{},{},{acc_u},{acc_p}\n",
            ours.0.len(),
            theirs.0.len()
        ));
        csv.push_str(&format!(
            "loss,{},{},{loss_u},{loss_p}\n",
            ours.1.len(),
            theirs.1.len()
        ));
        fs::write(args.out.join("mann_whitney.csv"), csv)?;
        println!("rank-sum accuracy p = {acc_p}, loss p = {loss_p}");
    }

    mb.finish(&args.out)?;
    Ok(())
}

/// Per-class accuracy and loss samples from synthesis rows.
fn per_class_samples(rows: &[runs::SynthRow]) -> (Vec<f64>, Vec<f64>) {
    let mut by_class: BTreeMap<usize, (usize, usize, f64)> = BTreeMap::new();
    for row in rows {
        let entry = by_class.entry(row.class).or_insert((0, 0, 0.0));
        entry.0 += 1;
        if row.synth_pred == row.class {
            entry.1 += 1;
        }
        entry.2 += row.synth_loss;
    }
    let accuracy = by_class
        .values()
        .map(|(n, c, _)| *c as f64 / *n as f64)
        .collect();
    let loss = by_class
        .values()
        .map(|(n, _, l)| l / *n as f64)
        .collect();
    (accuracy, loss)
}
