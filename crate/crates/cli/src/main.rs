//! `ltgate` command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration or argument error, 2 runtime or data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ltgate::calibration::{calibrate, CalibrationReport};
use ltgate::checkpoint::Checkpoint;
use ltgate::config::ExperimentConfig;
use ltgate::data::{encode, load_spikes, save_spikes};
use ltgate::harness::{
    ablation_suite, build_network, build_tasks, create_dir, gate_analysis, probe_batches, run_continual, thread_pool,
    write_gate_csvs, write_json, write_run, AblationTable, GateHistogram, GateStage, RunManifest, Variant,
    DEFAULT_BINS,
};
use ltgate::network::{Network, NetworkMode};
use ltgate::train::{evaluate, EvalResult, EvalSet};
use ltgate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "ltgate", version, about = "Dual-timescale gated spiking networks: training and continual-learning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Neuron mode; overrides `model.mode`.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Disable the firing-rate regularizer.
    #[arg(long, global = true)]
    no_var_reg: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    Ltgate,
    SingleFast,
    SingleSlow,
}

impl From<Mode> for NetworkMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ltgate => NetworkMode::Ltgate,
            Mode::SingleFast => NetworkMode::SingleFast,
            Mode::SingleSlow => NetworkMode::SingleSlow,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode each task's train and test splits to spike files.
    Encode {
        /// Only this task.
        #[arg(long)]
        task: Option<String>,
    },
    /// Calibrate thresholds on the first task's probe and save the network.
    Calibrate {
        /// Spike file to use as the probe instead of encoded noise.
        #[arg(long, value_name = "PATH")]
        probe: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh network.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train a single task of the schedule.
    Train {
        /// Task to train; the first one when omitted.
        #[arg(long)]
        task: Option<String>,
    },
    /// Run the full sequential schedule.
    Continual,
    /// Run every variant over several seeds.
    Ablate {
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
    },
    /// Evaluate a checkpoint on every task's test set.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Gate histograms of a checkpoint, or of a fresh network.
    Gates {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Encode { .. } => "encode",
            Command::Calibrate { .. } => "calibrate",
            Command::Train { .. } => "train",
            Command::Continual => "continual",
            Command::Ablate { .. } => "ablate",
            Command::Eval { .. } => "eval",
            Command::Gates { .. } => "gates",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.model.mode = mode.into();
    }
    if common.no_var_reg {
        cfg.training.lambda_var = 0.0;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let pool = thread_pool()?;
    let out = cfg.output_dir.clone();
    let name = cli.command.name();
    pool.install(|| match cli.command {
        Command::Encode { task } => cmd_encode(&cfg, &out, task.as_deref()),
        Command::Calibrate { probe, checkpoint } => cmd_calibrate(&cfg, &out, probe.as_deref(), checkpoint.as_deref()),
        Command::Train { task } => cmd_train(&cfg, &out, task.as_deref()),
        Command::Continual => cmd_continual(&cfg, &out, name),
        Command::Ablate { seeds } => cmd_ablate(&cfg, &out, &seeds),
        Command::Eval { checkpoint } => cmd_eval(&cfg, &out, &checkpoint),
        Command::Gates { checkpoint, bins } => cmd_gates(&cfg, &out, checkpoint.as_deref(), bins),
    })
}

fn finish_manifest(dir: &Path, mut manifest: RunManifest, mut files: Vec<String>) -> Result<()> {
    files.push("run_manifest.json".into());
    manifest.files = files;
    write_json(&dir.join("run_manifest.json"), &manifest)
}

fn cmd_encode(cfg: &ExperimentConfig, out: &Path, only: Option<&str>) -> Result<()> {
    let tasks = build_tasks(cfg)?;
    if let Some(name) = only {
        if !tasks.iter().any(|t| t.name == name) {
            return Err(Error::Config {
                field: "task".into(),
                reason: format!("no task named `{name}`"),
            });
        }
    }
    create_dir(out)?;
    let mut files = Vec::new();
    for task in tasks.iter().filter(|t| only.map_or(true, |n| n == t.name)) {
        for (split, data) in [("train", &task.train), ("test", &task.test)] {
            let idx: Vec<usize> = (0..data.len()).collect();
            let batch = encode(data, &task.encoding, &idx)?;
            let file = format!("{}_{split}.ltgs", task.name);
            save_spikes(&batch, out.join(&file))?;
            println!("{file}: {} samples, {} steps, {} spikes", batch.batch(), batch.steps(), batch.total_spikes());
            files.push(file);
        }
    }
    finish_manifest(out, RunManifest::new("encode", cfg, None), files)
}

#[derive(Serialize)]
struct CalibrationOutput<'a> {
    report: &'a CalibrationReport,
    thresholds: Vec<f64>,
    /// Threshold change per layer relative to the starting network.
    deltas: Vec<f64>,
}

fn cmd_calibrate(cfg: &ExperimentConfig, out: &Path, probe: Option<&Path>, start: Option<&Path>) -> Result<()> {
    let tasks = build_tasks(cfg)?;
    let mut net = build_network(cfg, &tasks)?;
    if let Some(path) = start {
        Checkpoint::load(path)?.restore(&mut net)?;
    }
    let before = net.thresholds();
    let probe = match probe {
        Some(path) => vec![load_spikes(path)?],
        None => probe_batches(cfg, &tasks[0])?,
    };
    let mut calib = cfg.calibration.to_config();
    calib.probe_batches = probe.len();
    let report = calibrate(&mut net, &probe, &calib)?;
    let thresholds = net.thresholds();
    let deltas = thresholds.iter().zip(&before).map(|(a, b)| a - b).collect();

    create_dir(out)?;
    write_json(
        &out.join("calibration.json"),
        &CalibrationOutput {
            report: &report,
            thresholds,
            deltas,
        },
    )?;
    Checkpoint::capture(&net, None, &cfg.hash()).save(out.join("checkpoint_calibrated.ltgc"))?;
    for l in &report.layers {
        println!("layer {}: v_th {:.6} rate {:.5} converged {}", l.layer, l.v_th, l.rate, l.converged);
    }
    finish_manifest(
        out,
        RunManifest::new("calibrate", cfg, Some(report)),
        vec!["calibration.json".into(), "checkpoint_calibrated.ltgc".into()],
    )
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path, task: Option<&str>) -> Result<()> {
    let mut single = cfg.clone();
    let keep = match task {
        None => 0,
        Some(name) => cfg.tasks.iter().position(|t| t.name == name).ok_or_else(|| Error::Config {
            field: "task".into(),
            reason: format!("no task named `{name}`"),
        })?,
    };
    single.tasks = vec![cfg.tasks[keep].clone()];
    if single.tasks[0].seed.is_none() {
        single.tasks[0].seed = Some(cfg.task_encoding(keep).seed);
    }
    cmd_continual(&single, out, "train")
}

fn cmd_continual(cfg: &ExperimentConfig, out: &Path, command: &str) -> Result<()> {
    let run = run_continual(cfg, cfg.model.mode.name())?;
    write_run(out, command, cfg, &run)?;
    let m = &run.metrics;
    println!(
        "combined {:.4} forgetting {:.2} task accuracies {:?}",
        m.final_combined_acc, m.forgetting, m.final_task_accs
    );
    Ok(())
}

fn cmd_ablate(cfg: &ExperimentConfig, out: &Path, seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config {
            field: "seeds".into(),
            reason: "need at least one seed".into(),
        });
    }
    let (table, runs) = ablation_suite(cfg, seeds, &Variant::ALL)?;
    create_dir(out)?;
    let mut files = vec!["ablation.csv".to_string(), "ablation.json".to_string()];
    table.write_csv(out.join("ablation.csv"))?;
    write_json(&out.join("ablation.json"), &table)?;
    for (row, run) in table.rows.iter().zip(&runs) {
        let dir = format!("{}_seed{}", row.variant, row.seed);
        let mut cell = row.variant.apply(cfg);
        cell.seed = row.seed;
        let mut run = run.clone();
        run.metrics = row.metrics.clone();
        write_run(&out.join(&dir), "ablate", &cell, &run)?;
        files.push(format!("{dir}/"));
    }
    print_ablation(&table);
    finish_manifest(out, RunManifest::new("ablate", cfg, None), files)
}

fn print_ablation(table: &AblationTable) {
    println!("variant      seed  combined  forgetting  rate_std");
    for r in &table.rows {
        let m = &r.metrics;
        println!(
            "{:<12} {:>4}  {:>8.4}  {:>10.2}  {:>8.5}",
            r.variant.name(),
            r.seed,
            m.final_combined_acc,
            m.forgetting,
            m.unit_rate_std
        );
    }
}

#[derive(Serialize)]
struct EvalOutput {
    checkpoint: String,
    config_hash: String,
    results: Vec<EvalResult>,
}

fn restored_network(cfg: &ExperimentConfig, path: &Path) -> Result<(Network, Checkpoint)> {
    let tasks = build_tasks(cfg)?;
    let mut net = build_network(cfg, &tasks)?;
    let ck = Checkpoint::load(path)?;
    ck.restore(&mut net)?;
    Ok((net, ck))
}

fn cmd_eval(cfg: &ExperimentConfig, out: &Path, path: &Path) -> Result<()> {
    let tasks = build_tasks(cfg)?;
    let (net, ck) = restored_network(cfg, path)?;
    if ck.config_hash != cfg.hash() {
        return Err(Error::Config {
            field: "checkpoint".into(),
            reason: format!("{} was written under a different config (hash {})", path.display(), ck.config_hash),
        });
    }
    let results = tasks
        .iter()
        .map(|t| {
            evaluate(
                &net,
                EvalSet {
                    name: &t.name,
                    data: &t.test,
                    encoding: &t.encoding,
                },
                cfg.training.eval_batch_size,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        println!("{}: accuracy {} spikes/inference {:.2}", r.name, r.accuracy, r.spikes_per_inference());
    }
    create_dir(out)?;
    write_json(
        &out.join("eval.json"),
        &EvalOutput {
            checkpoint: path.display().to_string(),
            config_hash: ck.config_hash,
            results,
        },
    )?;
    finish_manifest(out, RunManifest::new("eval", cfg, None), vec!["eval.json".into()])
}

fn cmd_gates(cfg: &ExperimentConfig, out: &Path, path: Option<&Path>, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config {
            field: "bins".into(),
            reason: "must be positive".into(),
        });
    }
    let net = match path {
        Some(p) => restored_network(cfg, p)?.0,
        None => build_network(cfg, &build_tasks(cfg)?)?,
    };
    let layers: Vec<GateHistogram> = gate_analysis(&net, bins);
    for h in &layers {
        println!(
            "layer {}: mean {:.4} <0.2 {:.3} 0.4-0.6 {:.3} >0.8 {:.3}",
            h.layer, h.mean, h.mass_below_0_2, h.mass_0_4_to_0_6, h.mass_above_0_8
        );
    }
    create_dir(out)?;
    let stage = GateStage {
        stage: path.map_or("init".into(), |p| p.display().to_string()),
        layers,
    };
    let mut files = vec!["gates.json".to_string()];
    write_json(&out.join("gates.json"), &stage.layers)?;
    for p in write_gate_csvs(out, std::slice::from_ref(&stage))? {
        files.push(p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    finish_manifest(out, RunManifest::new("gates", cfg, None), files)
}
