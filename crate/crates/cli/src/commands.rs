//! Subcommand implementations. Each returns the text to print or a
//! [`CliError`] carrying the process exit code.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use photon_pinn::checkpoint::{Checkpoint, CheckpointModel, OptimizerState};
use photon_pinn::cost_model::{epoch_cost, Accounting, ArchitectureSpec, CostReport, EpochCost};
use photon_pinn::photonic_mesh::{clements_decompose, compose_orthogonal, orthogonality_defect, random_orthogonal};
use photon_pinn::pinn::{residual_loss, sample_collocation, validation_mse};
use photon_pinn::zo_trainer::{train_with, EpochRecord, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

pub const EXIT_INVALID_CONFIG: u8 = 2;
pub const EXIT_TRAINING_ABORT: u8 = 3;
pub const EXIT_CORRUPT_CHECKPOINT: u8 = 4;
const EXIT_IO: u8 = 1;

/// Column order of `metrics.csv`; changing it requires a new schema version.
pub const METRICS_HEADER: [&str; 6] = [
    "epoch",
    "train_loss",
    "val_mse",
    "cum_inferences",
    "cum_energy_J",
    "cum_modeled_time_s",
];
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn io(context: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_IO, format!("{}: {e}", context.display()))
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(path: &Path) -> CliResult<RunConfig> {
    RunConfig::load(path).map_err(|e| CliError::new(EXIT_INVALID_CONFIG, format!("invalid config: {e}")))
}

fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Cumulative hardware figures after `epoch` epochs.
struct Ledger {
    accounting: Accounting,
    per_epoch: EpochCost,
}

impl Ledger {
    fn new(cfg: &RunConfig) -> Self {
        let arch = ArchitectureSpec::hjb20(cfg.arch.cost_kind());
        Self {
            accounting: cfg.accounting,
            per_epoch: epoch_cost(&cfg.budget(), &arch, &cfg.device),
        }
    }

    fn inferences(&self, epoch: usize, measured: u64) -> u64 {
        match self.accounting {
            Accounting::Paper => epoch as u64 * self.per_epoch.inferences,
            Accounting::True => measured,
        }
    }

    fn energy(&self, epoch: usize) -> Option<f64> {
        self.per_epoch.energy_j.map(|e| e * epoch as f64)
    }

    fn time(&self, epoch: usize) -> f64 {
        self.per_epoch.latency_s * epoch as f64
    }
}

#[derive(Serialize)]
struct Totals {
    accounting: Accounting,
    inferences: u64,
    measured_inferences: u64,
    energy_j: Option<f64>,
    modeled_time_s: f64,
    energy_per_epoch_j: Option<f64>,
    modeled_time_per_epoch_s: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    status: &'static str,
    error: Option<String>,
    epochs_completed: usize,
    initial_val_mse: Option<f64>,
    final_val_mse: Option<f64>,
    final_train_loss: Option<f64>,
    totals: Totals,
    wall_clock_s: f64,
    seeds: photon_pinn::zo_trainer::Seeds,
    spsa_seed: u64,
    metrics_schema_version: u32,
    config: &'a RunConfig,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

struct Artifacts {
    metrics: csv::Writer<File>,
    wall: csv::Writer<File>,
    checkpoint: PathBuf,
}

impl Artifacts {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            csv::Writer::from_path(&p).map_err(|e| CliError::io(&p, e))
        };
        let mut metrics = open("metrics.csv")?;
        let mut wall = open("wall_clock.csv")?;
        metrics
            .write_record(METRICS_HEADER)
            .and_then(|_| wall.write_record(["epoch", "wall_clock_s"]))
            .map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            metrics,
            wall,
            checkpoint: dir.join("checkpoint.json"),
        })
    }
}

pub fn cmd_train(config_path: &Path, out_flag: Option<&Path>) -> CliResult<String> {
    let cfg = load_config(config_path)?;
    let tcfg: TrainConfig = cfg
        .train_config()
        .map_err(|e| CliError::new(EXIT_INVALID_CONFIG, format!("invalid config: {e}")))?;
    let dir = resolve_out_dir(out_flag, &cfg);
    let mut art = Artifacts::create(&dir)?;
    let ledger = Ledger::new(&cfg);
    let ckpt_every = cfg.checkpoint_every();
    let start = Instant::now();

    let mut last: Option<EpochRecord> = None;
    let mut last_val = None;
    let mut io_error: Option<CliError> = None;
    let observer = |rec: &EpochRecord, chip: &photon_pinn::photonic_mesh::ChipInstance| {
        let row = [
            rec.epoch.to_string(),
            fmt_f64(rec.train_loss),
            rec.val_mse.map(fmt_f64).unwrap_or_default(),
            ledger.inferences(rec.epoch, rec.cum_inferences).to_string(),
            ledger.energy(rec.epoch).map(fmt_f64).unwrap_or_default(),
            fmt_f64(ledger.time(rec.epoch)),
        ];
        let written = art
            .metrics
            .write_record(&row)
            .and_then(|_| art.metrics.flush().map_err(Into::into))
            .and_then(|_| art.wall.write_record([rec.epoch.to_string(), fmt_f64(rec.wall_time_s)]))
            .and_then(|_| art.wall.flush().map_err(Into::into));
        if let Err(e) = written {
            io_error = Some(CliError::io(&dir, e));
            return Err(photon_pinn::Error::Io(std::io::Error::other("metrics write failed")));
        }
        if rec.val_mse.is_some() {
            last_val = rec.val_mse;
        }
        if rec.epoch.is_multiple_of(ckpt_every) || rec.epoch == tcfg.epochs {
            let mut ck = Checkpoint::new(tcfg.problem, CheckpointModel::Chip(chip.clone()));
            ck.fd = tcfg.fd;
            ck.val_mse = rec.val_mse;
            ck.optimizer = Some(OptimizerState {
                epoch: rec.epoch,
                learning_rate: current_lr(&tcfg, rec.epoch),
                cum_inferences: rec.cum_inferences,
            });
            ck.save(&art.checkpoint)?;
        }
        last = Some(rec.clone());
        Ok(())
    };
    let result = train_with(&tcfg, observer);
    if let Some(e) = io_error {
        return Err(e);
    }

    let epochs_done = last.as_ref().map_or(0, |r| r.epoch);
    let measured = last.as_ref().map_or(0, |r| r.cum_inferences);
    let totals = Totals {
        accounting: cfg.accounting,
        inferences: ledger.inferences(epochs_done, measured),
        measured_inferences: measured,
        energy_j: ledger.energy(epochs_done),
        modeled_time_s: ledger.time(epochs_done),
        energy_per_epoch_j: ledger.per_epoch.energy_j,
        modeled_time_per_epoch_s: ledger.per_epoch.latency_s,
    };
    let (status, error, initial, final_val) = match &result {
        Ok(run) => ("completed", None, Some(run.initial_val_mse), Some(run.final_val_mse())),
        Err(e) => ("aborted", Some(e.to_string()), None, last_val),
    };
    if let Ok(run) = &result {
        // Zero-epoch runs still leave a checkpoint of the initial chip.
        if epochs_done == 0 {
            let mut ck = Checkpoint::new(tcfg.problem, CheckpointModel::Chip(run.chip.clone()));
            ck.fd = tcfg.fd;
            ck.val_mse = Some(run.initial_val_mse);
            ck.save(&art.checkpoint).map_err(|e| CliError::io(&art.checkpoint, e))?;
        }
    }
    let summary = Summary {
        schema_version: 1,
        status,
        error: error.clone(),
        epochs_completed: epochs_done,
        initial_val_mse: initial,
        final_val_mse: final_val,
        final_train_loss: last.as_ref().map(|r| r.train_loss),
        totals,
        wall_clock_s: start.elapsed().as_secs_f64(),
        seeds: cfg.seeds,
        spsa_seed: cfg.spsa.seed,
        metrics_schema_version: METRICS_SCHEMA_VERSION,
        config: &cfg,
    };
    write_json(&dir.join("summary.json"), &summary)?;

    if let Some(e) = error {
        return Err(CliError::new(
            EXIT_TRAINING_ABORT,
            format!("training aborted after {epochs_done} epochs: {e}"),
        ));
    }
    let mut out = String::new();
    let _ = writeln!(out, "epochs {epochs_done}");
    if let Some(v) = final_val {
        let _ = writeln!(out, "final val_mse {}", fmt_f64(v));
    }
    let _ = writeln!(
        out,
        "modeled totals: {} inferences, {} J, {} s",
        summary.totals.inferences,
        summary.totals.energy_j.map_or_else(|| "n/a".to_string(), fmt_f64),
        fmt_f64(summary.totals.modeled_time_s)
    );
    let _ = writeln!(out, "wall clock {:.3} s", summary.wall_clock_s);
    let _ = writeln!(out, "artifacts in {}", dir.display());
    Ok(out)
}

fn current_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    match &cfg.lr_decay {
        Some(d) => cfg.learning_rate * d.factor.powi((epoch / d.every) as i32),
        None => cfg.learning_rate,
    }
}

pub fn cmd_eval(path: &Path, n_val: usize, seed: u64) -> CliResult<String> {
    let ck = Checkpoint::load(path)
        .map_err(|e| CliError::new(EXIT_CORRUPT_CHECKPOINT, format!("corrupt checkpoint: {e}")))?;
    if n_val == 0 {
        return Err(CliError::new(EXIT_INVALID_CONFIG, "--n-val must be >= 1"));
    }
    if let CheckpointModel::Chip(chip) = &ck.model {
        if chip.input_dim() <= ck.problem.dim || chip.output_dim() != 1 {
            return Err(CliError::new(
                EXIT_CORRUPT_CHECKPOINT,
                "corrupt checkpoint: chip shape does not fit the recorded problem",
            ));
        }
    }
    let mse = validation_mse(&ck.model, &ck.problem, n_val, seed);
    let batch = sample_collocation(ck.problem.dim, n_val, &ck.fd, seed);
    let (loss, _) = residual_loss(&ck.model, &batch, &ck.fd, &ck.problem)
        .map_err(|e| CliError::new(EXIT_CORRUPT_CHECKPOINT, format!("corrupt checkpoint: {e}")))?;
    Ok(format!("val_mse {}\nresidual_loss {}\n", fmt_f64(mse), fmt_f64(loss)))
}

pub fn cmd_cost(config_path: &Path, out_flag: Option<&Path>) -> CliResult<String> {
    let cfg = load_config(config_path)?;
    let report = CostReport::build(&cfg.device, cfg.arch.cost_kind(), &cfg.budget())
        .map_err(|e| CliError::new(EXIT_INVALID_CONFIG, format!("invalid config: {e}")))?;
    if let Some(dir) = out_flag.map(Path::to_path_buf).or_else(|| cfg.out_dir.clone()) {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        write_json(&dir.join("cost_report.json"), &report)?;
    }
    Ok(report.to_text())
}

pub fn cmd_mesh_demo(n: usize, seed: u64) -> CliResult<String> {
    if n < 2 {
        return Err(CliError::new(EXIT_INVALID_CONFIG, "mesh-demo needs n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(n, &mut rng);
    let program = clements_decompose(&q).map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
    let rebuilt = compose_orthogonal(&program);
    let err = (&rebuilt - &q).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mzis = program.angles().len();
    let noun = if mzis == 1 { "MZI" } else { "MZIs" };
    Ok(format!(
        "n = {n}, seed = {seed}\n{mzis} {noun}\nmax reconstruction error {}\northogonality defect {}\n",
        fmt_f64(err),
        fmt_f64(orthogonality_defect(&rebuilt))
    ))
}
