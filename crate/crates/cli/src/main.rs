//! `negrec`: synthetic data, preparation, training, evaluation, sweeps and
//! ablations, each writing its artifacts plus a `manifest.json` into a run
//! directory.

mod manifest;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use negrec_core::config::RunConfig;
use negrec_core::data::{build_sequences, ingest, split, Catalog, DatasetDescriptor, DatasetSplit, IngestReport};
use negrec_core::eval::{evaluate, run_ablations, Ablation, EvalReport};
use negrec_core::model::{load_checkpoint, save_checkpoint};
use negrec_core::synth::{self, oracle_accuracy, GroundTruth, SynthConfig};
use negrec_core::training::{sweep_k, sweep_p_hard, train_with_progress, write_sweep_table, SweepEval, TrainReport};
use negrec_core::{data::make_paired_tests, Error};
use serde::{Deserialize, Serialize};

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "negrec", version, about = "Next-song recommendation with negative feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Ingest an events file and split it into train/validation/test.
    Prepare(PrepareArgs),
    /// Train one model on prepared data.
    Train(TrainArgs),
    /// Evaluate a checkpoint on prepared data.
    Eval(EvalArgs),
    /// One training run per p_hard value, or per k value.
    Sweep(SweepArgs),
    /// Train the full model and its ablated variants.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct Common {
    /// Flat key-value TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory for all outputs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    p_hard: Option<f64>,
    #[arg(long)]
    p_task: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    songs: Option<usize>,
    #[arg(long)]
    stations: Option<usize>,
    #[arg(long)]
    skip_only_fraction: Option<f64>,
    #[arg(long)]
    false_negative_rate: Option<f64>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: Common,
    /// Events file to ingest.
    #[arg(long)]
    data: PathBuf,
    /// Dataset descriptor; the standard five-column layout when absent.
    #[arg(long)]
    descriptor: Option<PathBuf>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Prepared data (file or run directory).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    ablation: Option<Ablation>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    pool_size: Option<usize>,
    /// Ground-truth sidecar from `synth`, for the oracle bound.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated p_hard values.
    #[arg(long, value_delimiter = ',')]
    p_hard: Vec<f64>,
    /// Comma-separated k values (hardest-of-k random negatives, p_hard = 0).
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long)]
    p_task: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    /// Variants to run (comma-separated); all of them when absent.
    #[arg(long, value_delimiter = ',')]
    ablation: Vec<Ablation>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Output of `prepare`, consumed by every later stage.
#[derive(Serialize, Deserialize)]
struct Prepared {
    descriptor: DatasetDescriptor,
    catalog: Catalog,
    ingest: IngestReport,
    split: DatasetSplit,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .map_or("internal", Error::category);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{category}]: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

fn load_run_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(v) = o.p_hard {
        cfg.p_hard = v;
    }
    if let Some(v) = o.p_task {
        cfg.p_task = v;
    }
    if let Some(v) = o.k {
        cfg.k_random = v;
    }
    if let Some(v) = o.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = o.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = o.pool_size {
        cfg.pool_size = v;
    }
}

fn create_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(f))
}

fn prepared_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("prepared.json")
    } else {
        data.to_path_buf()
    }
}

fn load_prepared(data: &Path) -> anyhow::Result<(PathBuf, Prepared)> {
    let path = prepared_path(data);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let prepared: Prepared = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("reading prepared data {}", path.display()))?;
    Ok((path, prepared))
}

/// Re-cuts the split when the requested sequence length is shorter than the
/// prepared one and returns the length in effect.
fn effective_split(prepared: &Prepared, cfg: &mut RunConfig) -> DatasetSplit {
    let have = prepared.split.config.max_len;
    if cfg.max_len < have {
        prepared.split.with_max_len(cfg.max_len)
    } else {
        cfg.max_len = have;
        prepared.split.clone()
    }
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(format!("synth config: {e}")))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.common.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.users {
        cfg.n_users = v;
    }
    if let Some(v) = a.songs {
        cfg.n_songs = v;
    }
    if let Some(v) = a.stations {
        cfg.n_stations = v;
    }
    if let Some(v) = a.skip_only_fraction {
        cfg.skip_only_fraction = v;
    }
    if let Some(v) = a.false_negative_rate {
        cfg.false_negative_rate = v;
    }
    let out = &a.common.out;
    create_dir(out)?;
    let mut m = Manifest::new("synth", &cfg, cfg.seed);
    m.input_opt(a.common.config.as_deref())?;

    let (events, truth) = synth::generate(&cfg)?;
    let events_path = out.join("events.csv");
    let mut w = create(&events_path)?;
    synth::write_events(&mut w, &events).map_err(|e| Error::io(&events_path, e))?;
    w.flush().map_err(|e| Error::io(&events_path, e))?;
    let truth_path = out.join("truth.json");
    write_file(&truth_path, truth.to_json()?.as_bytes())?;
    let desc_path = out.join("dataset.toml");
    let desc = toml::to_string(&synth::descriptor()).map_err(|e| Error::Serde(e.to_string()))?;
    write_file(&desc_path, desc.as_bytes())?;
    m.outputs([&events_path, &truth_path, &desc_path]);
    m.write(out)?;
    println!(
        "wrote {} events for {} users to {}",
        events.len(),
        cfg.n_users,
        events_path.display()
    );
    Ok(())
}

fn cmd_prepare(a: PrepareArgs) -> anyhow::Result<()> {
    let mut cfg = load_run_config(&a.common)?;
    let mut descriptor = match &a.descriptor {
        Some(p) => DatasetDescriptor::load(p)?,
        None => DatasetDescriptor::default(),
    };
    if let Some(v) = a.max_len {
        cfg.max_len = v;
    }
    descriptor.max_len = cfg.max_len;
    let out = &a.common.out;
    create_dir(out)?;
    let mut m = Manifest::new("prepare", &cfg, cfg.seed);
    m.input(&a.data)?;
    m.input_opt(a.descriptor.as_deref())?;
    m.input_opt(a.common.config.as_deref())?;

    let mut catalog = Catalog::default();
    let (events, report) = ingest(&a.data, &descriptor, &mut catalog)?;
    let sequences = build_sequences(&events, cfg.max_len);
    let split = split(&sequences, &cfg.split())?;
    println!(
        "{} rows ({} malformed), {} users: {} train, {} validation, {} test windows, {} inference-only",
        report.rows,
        report.malformed,
        split.users.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.inference_only.len()
    );
    let path = out.join("prepared.json");
    write_json(
        &path,
        &Prepared {
            descriptor,
            catalog,
            ingest: report,
            split,
        },
    )?;
    m.outputs([&path]);
    m.write(out)?;
    Ok(())
}

fn train_and_save(
    prepared: &Prepared,
    cfg: &mut RunConfig,
    ablation: Ablation,
    out: &Path,
) -> anyhow::Result<(Vec<PathBuf>, TrainReport)> {
    let data = effective_split(prepared, cfg);
    let model = cfg.model(prepared.catalog.song_count(), prepared.catalog.station_count());
    let (s, model, train_cfg) = ablation.apply(&data, &model, &cfg.train());
    let data = s.unwrap_or(data);
    let mut timing = String::from("epoch\tseconds\n");
    let (params, report) = train_with_progress(&data, &model, &train_cfg, |e| {
        timing.push_str(&format!("{}\t{:.3}\n", e.epoch, e.seconds));
        eprintln!(
            "epoch {:>3}  loss {:.4}  validation {}",
            e.epoch,
            e.train_loss,
            e.validation_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
        );
    })?;
    let ckpt = out.join("checkpoint.bin");
    save_checkpoint(&ckpt, &params, &prepared.catalog)?;
    let report_path = out.join("train_report.json");
    write_json(&report_path, &report)?;
    let timing_path = out.join("timing.tsv");
    write_file(&timing_path, timing.as_bytes())?;
    Ok((vec![ckpt, report_path, timing_path], report))
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_run_config(&a.common)?;
    apply_overrides(&mut cfg, &a.overrides);
    let (path, prepared) = load_prepared(&a.data)?;
    let out = &a.common.out;
    create_dir(out)?;
    let ablation = a.ablation.unwrap_or(Ablation::Full);
    let (outputs, report) = train_and_save(&prepared, &mut cfg, ablation, out)?;
    let mut m = Manifest::new("train", &cfg, cfg.seed);
    m.input(&path)?;
    m.input_opt(a.common.config.as_deref())?;
    m.note("ablation", ablation.as_str());
    m.outputs(&outputs);
    m.write(out)?;
    println!(
        "best epoch {} (validation {}), converged at epoch {}",
        report.best_epoch,
        report
            .best_validation_accuracy
            .map_or("-".into(), |v| format!("{v:.4}")),
        report.epochs_to_converge
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    oracle_accuracy: Option<f64>,
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let mut cfg = load_run_config(&a.common)?;
    if let Some(v) = a.pool_size {
        cfg.pool_size = v;
    }
    let (path, prepared) = load_prepared(&a.data)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if ckpt.catalog != prepared.catalog {
        bail!(Error::Checkpoint(
            "checkpoint catalog does not match the prepared data".into()
        ));
    }
    let out = &a.common.out;
    create_dir(out)?;
    let report = evaluate(&ckpt.params, &prepared.split, &cfg.eval())?;
    let oracle = match &a.truth {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let truth = GroundTruth::from_json(&text)?;
            let cases = make_paired_tests(&prepared.split).cases;
            Some(oracle_accuracy(&truth, &prepared.catalog, &cases)?)
        }
        None => None,
    };
    let report_path = out.join("eval_report.json");
    write_json(
        &report_path,
        &EvalOutput {
            report: &report,
            oracle_accuracy: oracle,
        },
    )?;

    let bins_path = out.join("bins.tsv");
    let mut bins = String::from("lower\tupper\tusers\taccuracy\n");
    for b in &report.bins {
        bins.push_str(&format!(
            "{:.1}\t{:.1}\t{}\t{}\n",
            b.lower,
            b.upper,
            b.users,
            b.accuracy.map_or(String::new(), |v| format!("{v:.6}"))
        ));
    }
    write_file(&bins_path, bins.as_bytes())?;

    let sim_path = out.join("similarity.tsv");
    let sim = &report.feedback_similarity;
    let mut text = format!("\t{}\n", sim.labels.join("\t"));
    for (label, row) in sim.labels.iter().zip(&sim.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        text.push_str(&format!("{label}\t{}\n", cells.join("\t")));
    }
    write_file(&sim_path, text.as_bytes())?;

    let mut m = Manifest::new("eval", &cfg, cfg.seed);
    m.input(&path)?;
    m.input(&a.checkpoint)?;
    m.input_opt(a.truth.as_deref())?;
    m.input_opt(a.common.config.as_deref())?;
    m.outputs([&report_path, &bins_path, &sim_path]);
    m.write(out)?;
    println!(
        "paired accuracy {:.4} over {} users ({} pairs); mrr up {:.4}, down {:.4}{}",
        report.paired_accuracy,
        report.users,
        report.pairs,
        report.mrr.mrr_up,
        report.mrr.mrr_down,
        oracle.map_or(String::new(), |o| format!("; oracle {o:.4}"))
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = load_run_config(&a.common)?;
    if let Some(v) = a.p_task {
        cfg.p_task = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.pool_size {
        cfg.pool_size = v;
    }
    let by_k = match (a.p_hard.is_empty(), a.k.len()) {
        (true, 0) => bail!(Error::Config("sweep needs --p-hard or --k values".into())),
        (true, _) => true,
        (false, 0) => false,
        (false, 1) => {
            cfg.k_random = a.k[0];
            false
        }
        (false, _) => bail!(Error::Config("sweep over both p_hard and k is not supported".into())),
    };
    if a.p_hard.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!(Error::Config("p_hard values must lie in [0, 1]".into()));
    }
    let (path, prepared) = load_prepared(&a.data)?;
    let out = &a.common.out;
    create_dir(out)?;
    let data = effective_split(&prepared, &mut cfg);
    let model = cfg.model(prepared.catalog.song_count(), prepared.catalog.station_count());
    let eval = SweepEval {
        pool_size: cfg.pool_size,
        seed: cfg.seed,
    };
    let runs = if by_k {
        if let Some(&k) = a.k.iter().find(|&&k| k == 0 || k >= model.catalog_size) {
            bail!(Error::Config(format!("k = {k} must be in 1..catalog size")));
        }
        sweep_k(&a.k, &data, &model, &cfg.train(), &eval)?
    } else {
        sweep_p_hard(&a.p_hard, &data, &model, &cfg.train(), &eval)?
    };
    let mut outputs = Vec::new();
    for r in &runs {
        let name = if by_k {
            format!("k{}", r.row.k_random)
        } else {
            format!("p_hard{}", r.row.p_hard)
        };
        let dir = out.join(&name);
        create_dir(&dir)?;
        let ckpt = dir.join("checkpoint.bin");
        save_checkpoint(&ckpt, &r.params, &prepared.catalog)?;
        let rep = dir.join("train_report.json");
        write_json(&rep, &r.report)?;
        outputs.push(ckpt);
        outputs.push(rep);
    }
    let table = out.join("sweep.tsv");
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    let mut w = create(&table)?;
    write_sweep_table(&mut w, &rows).map_err(|e| Error::io(&table, e))?;
    w.flush().map_err(|e| Error::io(&table, e))?;
    outputs.push(table.clone());
    let mut m = Manifest::new("sweep", &cfg, cfg.seed);
    m.input(&path)?;
    m.input_opt(a.common.config.as_deref())?;
    m.outputs(&outputs);
    m.write(out)?;
    print!("{}", fs::read_to_string(&table).unwrap_or_default());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> anyhow::Result<()> {
    let mut cfg = load_run_config(&a.common)?;
    apply_overrides(&mut cfg, &a.overrides);
    let (path, prepared) = load_prepared(&a.data)?;
    let out = &a.common.out;
    create_dir(out)?;
    let data = effective_split(&prepared, &mut cfg);
    let model = cfg.model(prepared.catalog.song_count(), prepared.catalog.station_count());
    let variants = if a.ablation.is_empty() {
        Ablation::ALL.to_vec()
    } else {
        a.ablation.clone()
    };
    let table = run_ablations(&variants, &data, &model, &cfg.train(), &cfg.eval())?;
    let tsv = out.join("ablation.tsv");
    let mut w = create(&tsv)?;
    table.write_tsv(&mut w).map_err(|e| Error::io(&tsv, e))?;
    w.flush().map_err(|e| Error::io(&tsv, e))?;
    let json = out.join("ablation.json");
    write_json(&json, &table)?;
    let mut m = Manifest::new("ablate", &cfg, cfg.seed);
    m.input(&path)?;
    m.input_opt(a.common.config.as_deref())?;
    m.outputs([&tsv, &json]);
    m.write(out)?;
    print!("{}", fs::read_to_string(&tsv).unwrap_or_default());
    Ok(())
}
