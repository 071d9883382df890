use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use conceptmine::artifact::{
    load_book, load_head, save_book, save_centers, save_ground_truth, save_head, save_json,
};
use conceptmine::cav::write_cav_csv;
use conceptmine::dataset::load_dataset;
use conceptmine::mining::{mine_concepts, MiningParams};
use conceptmine::occlusion::{curve_svg, occlusion_eval, write_curve_csv};
use conceptmine::pipeline::{evaluate, run_pipeline, train_on_book};
use conceptmine::xai::faithfulness;
use conceptmine::{
    compute_cav_batch, generate_synthetic, save_dataset, ConceptBook, DatasetFormat, Error,
    MergeConfig, MergeLevel, PartFeatureDataset, PipelineConfig, SparseHead, SyntheticSpec,
};

#[derive(Parser, Debug)]
#[command(name = "conceptmine", version, about = "Part-level concept mining and sparse concept heads")]
struct Cli {
    /// Seed for every random step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (file or directory depending on the subcommand).
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted synthetic dataset and its ground truth.
    Gen(GenArgs),
    /// Fit centers, mine concepts, train the head and write all artifacts.
    Pipeline(PipelineArgs),
    /// Mine a concept book from a dataset.
    Mine(MineArgs),
    /// Merge similar centroids of a book.
    Merge(MergeArgs),
    /// Train a sparse head on a dataset and a book.
    Train(TrainArgs),
    /// Compute the metric report for a trained head.
    Eval(EvalArgs),
    /// Accuracy and F(3) under growing part occlusion.
    Occlude(OccludeArgs),
    /// Export CAVs, or convert a dataset between formats.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    parts: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 40)]
    per_class: usize,
    /// Planted concepts per (class, part).
    #[arg(long, default_value_t = 2)]
    concepts: usize,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.05)]
    nonproto_scale: f64,
    /// Ground-truth JSON path; defaults to `<output stem>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HeadFlags {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Head epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct MiningFlags {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    remine_interval: Option<usize>,
    #[arg(long)]
    stability_k: Option<usize>,
    /// Merge threshold in percent; enables merging.
    #[arg(long)]
    merge_threshold: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    merge_level: Option<u8>,
    #[command(flatten)]
    head: HeadFlags,
    #[command(flatten)]
    mining: MiningFlags,
}

#[derive(Args, Debug)]
struct MineArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    mining: MiningFlags,
}

#[derive(Args, Debug)]
struct MergeArgs {
    #[arg(long)]
    book: PathBuf,
    /// Thresholds in percent; each gets a table row.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    threshold: Vec<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: u8,
    /// Dataset for retraining and scoring each merged book.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Where to write the table CSV (stdout when absent).
    #[arg(long)]
    table: Option<PathBuf>,
    #[command(flatten)]
    head: HeadFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    book: PathBuf,
    #[command(flatten)]
    head: HeadFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    book: PathBuf,
    #[arg(long)]
    head: PathBuf,
    /// Evaluate even if the artifacts carry different config hashes.
    #[arg(long)]
    force: bool,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OccludeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    book: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    /// With a book, writes the CAV CSV; without, converts the dataset to the
    /// format implied by the output extension.
    #[arg(long)]
    book: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn required_output(cli: &Cli) -> Result<PathBuf> {
    cli.output
        .clone()
        .ok_or_else(|| UsageError("this subcommand requires -o <path>".into()).into())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            PipelineConfig::from_toml(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg.resolved())
}

fn apply_head(cfg: &mut PipelineConfig, f: &HeadFlags) {
    if let Some(v) = f.lambda {
        cfg.head.lambda = v;
    }
    if let Some(v) = f.gamma {
        cfg.head.gamma = v;
    }
    if let Some(v) = f.epochs {
        cfg.head.epochs = v;
    }
}

fn apply_mining(cfg: &mut PipelineConfig, f: &MiningFlags) {
    if f.eps.is_some() {
        cfg.mining.eps = f.eps;
    }
    if f.min_pts.is_some() {
        cfg.mining.min_pts = f.min_pts;
    }
}

fn read_dataset(path: &Path) -> Result<PartFeatureDataset> {
    load_dataset(path, DatasetFormat::from_path(path))
        .with_context(|| format!("loading dataset {}", path.display()))
}

fn read_book(path: &Path) -> Result<ConceptBook> {
    load_book(path).with_context(|| format!("loading book {}", path.display()))
}

fn read_head(path: &Path) -> Result<SparseHead> {
    load_head(path).with_context(|| format!("loading head {}", path.display()))
}

fn level(v: u8) -> Result<MergeLevel> {
    MergeLevel::try_from(v).map_err(|e| UsageError(e.to_string()).into())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(&cli, a),
        Command::Pipeline(a) => cmd_pipeline(&cli, a),
        Command::Mine(a) => cmd_mine(&cli, a),
        Command::Merge(a) => cmd_merge(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Eval(a) => cmd_eval(&cli, a),
        Command::Occlude(a) => cmd_occlude(&cli, a),
        Command::Export(a) => cmd_export(&cli, a),
    }
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let out = required_output(cli)?;
    let spec = SyntheticSpec {
        n_classes: a.classes,
        n_parts: a.parts,
        feat_dim: a.dim,
        samples_per_class: a.per_class,
        concepts_per_cell: a.concepts,
        noise_sigma: a.sigma,
        min_separation: a.separation,
        nonproto_scale: a.nonproto_scale,
        seed: cli.seed.unwrap_or(0),
    };
    let (ds, truth) = generate_synthetic(&spec)?;
    save_dataset(&ds, &out, DatasetFormat::from_path(&out))?;
    let truth_path = a.truth.clone().unwrap_or_else(|| out.with_extension("truth.json"));
    save_ground_truth(&truth, &truth_path)?;
    println!(
        "wrote {} samples to {} and ground truth to {}",
        ds.n_samples(),
        out.display(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_pipeline(cli: &Cli, a: &PipelineArgs) -> Result<()> {
    let dir = required_output(cli)?;
    let mut cfg = load_config(cli)?;
    if let Some(v) = a.remine_interval {
        cfg.remine_interval = v;
    }
    if let Some(v) = a.stability_k {
        cfg.stability_k = v;
    }
    if a.merge_threshold.is_some() || a.merge_level.is_some() {
        let base = cfg.merge.unwrap_or(MergeConfig {
            threshold_pct: 0.0,
            level: MergeLevel::Cell,
        });
        cfg.merge = Some(MergeConfig {
            threshold_pct: a.merge_threshold.unwrap_or(base.threshold_pct),
            level: match a.merge_level {
                Some(l) => level(l)?,
                None => base.level,
            },
        });
    }
    apply_head(&mut cfg, &a.head);
    apply_mining(&mut cfg, &a.mining);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;

    let ds = read_dataset(&a.data)?;
    let out = run_pipeline(&ds, &cfg)?;

    std::fs::create_dir_all(&dir)?;
    save_centers(&out.centers, dir.join("centers.pcmc"))?;
    save_book(&out.book, dir.join("book.pcmb"))?;
    save_book(&out.book, dir.join("book.json"))?;
    save_head(&out.head, dir.join("head.pcmh"))?;
    save_json(&out.report, dir.join("report.json"))?;
    out.report.write_csv(dir.join("report.csv"))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    println!(
        "d_c={} accuracy={:.2}% mining passes={} config hash {}",
        out.book.d_c(),
        out.report.accuracy,
        out.mining_passes,
        out.report.config_hash
    );
    Ok(())
}

fn cmd_mine(cli: &Cli, a: &MineArgs) -> Result<()> {
    let out = required_output(cli)?;
    let mut cfg = load_config(cli)?;
    apply_mining(&mut cfg, &a.mining);
    let ds = read_dataset(&a.data)?;
    let params: MiningParams = cfg.mining;
    let book = mine_concepts(&ds, &params)?;
    save_book(&book, &out)?;
    println!("d_c={}", book.d_c());
    Ok(())
}

fn cmd_merge(cli: &Cli, a: &MergeArgs) -> Result<()> {
    let mut cfg = load_config(cli)?;
    apply_head(&mut cfg, &a.head);
    let book = read_book(&a.book)?;
    let lvl = level(a.level)?;
    let ds = a.data.as_deref().map(read_dataset).transpose()?;

    let mut rows = vec!["level,threshold_pct,d_c_before,d_c_after,accuracy,F3".to_string()];
    let mut last = None;
    for &t in &a.threshold {
        let merge = MergeConfig {
            threshold_pct: t,
            level: lvl,
        };
        merge.validate().map_err(|e| UsageError(e.to_string()))?;
        let merged = conceptmine::mining::merge_centroids(&book, &merge)?;
        let (acc, f3) = match &ds {
            Some(ds) => {
                let fit = train_on_book(ds, &merged, &cfg.head, None)?;
                let cavs = compute_cav_batch(ds, &merged)?;
                let acc = conceptmine::head::accuracy(
                    cavs.z.view(),
                    cavs.g.view(),
                    ds.labels(),
                    &fit.head,
                );
                let f = faithfulness(&cavs, ds.labels(), &fit.head, &merged, &[3])?;
                (format!("{acc:.4}"), format!("{:.4}", f[&3]))
            }
            None => (String::new(), String::new()),
        };
        rows.push(format!(
            "{},{t},{},{},{acc},{f3}",
            lvl as u8,
            book.d_c(),
            merged.d_c()
        ));
        last = Some(merged);
    }
    let table = rows.join("\n") + "\n";
    match &a.table {
        Some(p) => std::fs::write(p, &table)?,
        None => print!("{table}"),
    }
    if let (Some(out), Some(merged)) = (&cli.output, last) {
        save_book(&merged, out)?;
    }
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = required_output(cli)?;
    let mut cfg = load_config(cli)?;
    apply_head(&mut cfg, &a.head);
    cfg.head.validate().map_err(|e| UsageError(e.to_string()))?;
    let ds = read_dataset(&a.data)?;
    let book = read_book(&a.book)?;
    let fit = train_on_book(&ds, &book, &cfg.head, None)?;
    let mut head = fit.head;
    head.config_hash = book.config_hash.clone();
    save_head(&head, &out)?;
    println!(
        "objective {:.6} -> {:.6}",
        fit.objectives[0],
        fit.objectives.last().copied().unwrap_or(fit.objectives[0])
    );
    Ok(())
}

fn check_hashes(
    cfg_hash: Option<&str>,
    book: &ConceptBook,
    head: &SparseHead,
    force: bool,
) -> Result<()> {
    if book.d_c() != head.d_c() {
        return Err(Error::Compatibility(format!(
            "book has d_c={} but head expects d_c={}",
            book.d_c(),
            head.d_c()
        ))
        .into());
    }
    let mut seen: Vec<(&str, &str)> = Vec::new();
    if let Some(h) = cfg_hash {
        seen.push(("config", h));
    }
    if let Some(h) = book.config_hash.as_deref() {
        seen.push(("book", h));
    }
    if let Some(h) = head.config_hash.as_deref() {
        seen.push(("head", h));
    }
    if let Some(((a, ha), (b, hb))) = seen
        .iter()
        .flat_map(|x| seen.iter().map(move |y| (x, y)))
        .find(|((_, x), (_, y))| x != y)
    {
        if force {
            log::warn!("config hash mismatch between {a} and {b}; continuing (--force)");
        } else {
            bail!("config hash mismatch: {a} has {ha}, {b} has {hb} (use --force to override)");
        }
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let book = read_book(&a.book)?;
    let head = read_head(&a.head)?;
    let cfg_hash = match &cli.config {
        Some(_) => Some(cfg.config_hash()?),
        None => None,
    };
    check_hashes(cfg_hash.as_deref(), &book, &head, a.force)?;
    let ds = read_dataset(&a.data)?;
    let report = evaluate(&ds, &book, &head, &cfg)?;
    match &cli.output {
        Some(p) => save_json(&report, p)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if let Some(p) = &a.csv {
        report.write_csv(p)?;
    }
    Ok(())
}

fn cmd_occlude(cli: &Cli, a: &OccludeArgs) -> Result<()> {
    let out = required_output(cli)?;
    let mut cfg = load_config(cli)?;
    if let Some(f) = &a.fractions {
        cfg.occlusion.fractions = f.clone();
    }
    cfg.occlusion
        .validate()
        .map_err(|e| UsageError(e.to_string()))?;
    let book = read_book(&a.book)?;
    let head = read_head(&a.head)?;
    check_hashes(None, &book, &head, true)?;
    let ds = read_dataset(&a.data)?;
    let curve = occlusion_eval(&ds, &head, &book, &cfg.occlusion)?;
    write_curve_csv(&curve, &out)?;
    if let Some(p) = &a.svg {
        std::fs::write(p, curve_svg(&curve))?;
    }
    for p in &curve {
        println!("{:.2}: accuracy {:.2}%, F3 {:.2}", p.fraction, p.accuracy, p.f3);
    }
    Ok(())
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let out = required_output(cli)?;
    let ds = read_dataset(&a.data)?;
    match &a.book {
        Some(b) => {
            let book = read_book(b)?;
            let cavs = compute_cav_batch(&ds, &book)?;
            write_cav_csv(&cavs, ds.labels(), &out)?;
        }
        None => save_dataset(&ds, &out, DatasetFormat::from_path(&out))?,
    }
    Ok(())
}
