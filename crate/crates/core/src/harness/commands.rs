use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::output::{
    ablation_csv, aggregate, aggregate_csv, summary_csv, write_atomic, AblationRow, RunManifest, SeedEntry,
};
use crate::agent::{evaluate, Checkpoint, MetricRecord, TrainOutcome, Trainer, Variant};
use crate::env::EnvId;
use crate::error::Error;
use crate::gradient::{finite_diff_jacobian, shift_cost_report, shift_rule_jacobian, DEFAULT_FD_STEP};
use crate::neural::{Activation, DenseNet};
use crate::pqc::{exact_layer_map, CallCounter, ControlVector, PqcConfig};
use crate::quantum::NoiseConfig;
use crate::surrogate::{fidelity_report, FidelityReport};

/// Why a command did not succeed, mapped onto the process exit code.
#[derive(Debug)]
pub enum CommandError {
    /// A check ran and failed (exit 1).
    Failed(String),
    /// Bad invocation, unreadable or invalid configuration (exit 2).
    Usage(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Failed(_) => 1,
            CommandError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Failed(m) | CommandError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Failed(e.to_string())
    }
}

pub type CommandResult = std::result::Result<(), CommandError>;

pub fn load_config(path: &Path, overrides: &[String]) -> std::result::Result<RunConfig, CommandError> {
    if !path.exists() {
        return Err(CommandError::Usage(format!("config file not found: {}", path.display())));
    }
    RunConfig::load(path, overrides).map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))
}

/// Per-seed result of a training run.
#[derive(Debug)]
pub struct SeedRun {
    pub entry: SeedEntry,
    pub outcome: Option<TrainOutcome>,
}

/// Trains every seed of `config` into `dir/seed_<n>/`. A failing seed is
/// recorded and the remaining seeds still run.
pub fn train_seeds(config: &RunConfig, dir: &Path, log: &mut dyn Write) -> std::result::Result<Vec<SeedRun>, CommandError> {
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let seed_dir = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)?;
        let metrics_path = seed_dir.join("metrics.jsonl");
        let summary_path = seed_dir.join("summary.csv");
        let checkpoint_path = seed_dir.join("checkpoint.json");
        let mut entry = SeedEntry {
            seed,
            metrics: metrics_path.clone(),
            summary: summary_path.clone(),
            checkpoint: checkpoint_path.clone(),
            final_mean_return: None,
            final_std_return: None,
            pqc_calls: 0,
            eval_pqc_calls: 0,
            minutes: 0.0,
            error: None,
        };
        let result = (|| -> crate::error::Result<TrainOutcome> {
            let mut trainer = Trainer::new(
                config.variant,
                &config.pqc,
                &config.agent,
                &config.surrogate,
                &config.train,
                seed,
                config.env.make(),
                config.env.make(),
            )?;
            let mut metrics = BufWriter::new(fs::File::create(&metrics_path)?);
            let mut sink = |r: &MetricRecord| -> crate::error::Result<()> {
                serde_json::to_writer(&mut metrics, r)?;
                metrics.write_all(b"\n")?;
                Ok(())
            };
            let mut save = |c: &Checkpoint| -> crate::error::Result<()> {
                write_atomic(&checkpoint_path, serde_json::to_string(c)?.as_bytes())
            };
            let outcome = trainer.run(&mut sink, &mut save);
            metrics.flush()?;
            outcome
        })();
        match result {
            Ok(outcome) => {
                write_atomic(&summary_path, summary_csv(&outcome.evaluations).as_bytes())?;
                let last = outcome.evaluations.last();
                entry.final_mean_return = last.map(|p| p.mean_return);
                entry.final_std_return = last.map(|p| p.std_return);
                entry.pqc_calls = outcome.pqc_calls;
                entry.eval_pqc_calls = outcome.eval_pqc_calls;
                entry.minutes = outcome.minutes;
                let _ = writeln!(
                    log,
                    "seed {seed}: {} steps, {} episodes, final return {}, pqc_calls {}",
                    outcome.steps,
                    outcome.episodes,
                    entry.final_mean_return.map_or("n/a".to_string(), |v| format!("{v:.2}")),
                    outcome.pqc_calls
                );
                runs.push(SeedRun { entry, outcome: Some(outcome) });
            }
            Err(e) => {
                let _ = writeln!(log, "seed {seed}: failed: {e}");
                entry.error = Some(e.to_string());
                runs.push(SeedRun { entry, outcome: None });
            }
        }
    }
    Ok(runs)
}

fn write_aggregate(dir: &Path, runs: &[SeedRun]) -> std::result::Result<PathBuf, CommandError> {
    let curves: Vec<Vec<(u64, f64)>> = runs
        .iter()
        .filter_map(|r| r.outcome.as_ref())
        .map(|o| o.evaluations.iter().map(|p| (p.step, p.mean_return)).collect())
        .collect();
    let path = dir.join("aggregate.csv");
    write_atomic(&path, aggregate_csv(&aggregate(&curves)).as_bytes())?;
    Ok(path)
}

pub fn cmd_train(
    config_path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
    log: &mut dyn Write,
) -> CommandResult {
    let mut config = load_config(config_path, overrides)?;
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => config.resolve_output_dir(&format!("{}_{}", config.env, config.variant)),
    };
    fs::create_dir_all(&dir)?;
    let started_at = Utc::now();
    let runs = train_seeds(&config, &dir, log)?;
    let aggregate_path = write_aggregate(&dir, &runs)?;
    let seeds: Vec<SeedEntry> = runs.iter().map(|r| r.entry.clone()).collect();
    let manifest = RunManifest {
        summary: RunManifest::summarize(&seeds),
        config,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: Utc::now(),
        seeds,
        extra_outputs: vec![aggregate_path],
    };
    let manifest_path = dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    let _ = writeln!(log, "manifest: {}", manifest_path.display());
    match runs.iter().find_map(|r| r.entry.error.clone()) {
        Some(e) => Err(CommandError::Failed(format!("training failed: {e}"))),
        None => Ok(()),
    }
}

/// One cell of the ablation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub variant: Variant,
    pub qubits: usize,
    pub shots: Option<usize>,
}

impl AblationCell {
    pub fn name(&self) -> String {
        match self.shots {
            Some(s) => format!("{}_n{}_s{}", self.variant, self.qubits, s),
            None => format!("{}_n{}", self.variant, self.qubits),
        }
    }
}

pub fn ablation_cells(config: &RunConfig) -> Vec<AblationCell> {
    let grid = config.ablation.clone().unwrap_or_default();
    let mut cells = Vec::new();
    for &variant in &grid.variants {
        if variant == Variant::Pqc {
            for &qubits in &grid.qubits {
                for &shots in &grid.shots {
                    cells.push(AblationCell { variant, qubits, shots: Some(shots) });
                }
            }
        } else {
            cells.push(AblationCell { variant, qubits: config.pqc.num_qubits, shots: None });
        }
    }
    cells
}

fn ablation_row(cell: &AblationCell, runs: &[SeedRun]) -> AblationRow {
    let outcomes: Vec<&TrainOutcome> = runs.iter().filter_map(|r| r.outcome.as_ref()).collect();
    let finals: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.evaluations.last().map(|p| p.mean_return))
        .collect();
    let (mean, std) = crate::agent::mean_std(&finals);
    let best = outcomes
        .iter()
        .flat_map(|o| o.evaluations.iter().map(|p| p.mean_return))
        .fold(f64::NEG_INFINITY, f64::max);
    let n = outcomes.len().max(1) as f64;
    let status = match runs.iter().find_map(|r| r.entry.error.clone()) {
        Some(e) => format!("error: {e}"),
        None => "ok".to_string(),
    };
    AblationRow {
        variant: cell.variant.to_string(),
        shots: cell.shots,
        qubits: cell.qubits,
        mean_return: if finals.is_empty() { f64::NAN } else { mean },
        std_return: if finals.is_empty() { f64::NAN } else { std },
        best_return: if best.is_finite() { best } else { f64::NAN },
        minutes: outcomes.iter().map(|o| o.minutes).sum::<f64>() / n,
        pqc_calls: (outcomes.iter().map(|o| o.pqc_calls).sum::<u64>() as f64 / n).round() as u64,
        status,
    }
}

pub fn cmd_ablate(config_path: &Path, overrides: &[String], out: Option<&Path>, log: &mut dyn Write) -> CommandResult {
    let config = load_config(config_path, overrides)?;
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => config.resolve_output_dir(&format!("{}_ablation", config.env)),
    };
    fs::create_dir_all(&dir)?;
    let started_at = Utc::now();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for cell in ablation_cells(&config) {
        let mut cell_config = config.clone();
        cell_config.variant = cell.variant;
        cell_config.pqc.num_qubits = cell.qubits;
        if let Some(s) = cell.shots {
            cell_config.pqc.shots = s;
        }
        let cell_dir = dir.join(cell.name());
        let _ = writeln!(log, "cell {}", cell.name());
        let runs = match cell_config.validate().map_err(CommandError::from).and_then(|()| train_seeds(&cell_config, &cell_dir, log)) {
            Ok(r) => r,
            Err(e) => {
                rows.push(AblationRow {
                    variant: cell.variant.to_string(),
                    shots: cell.shots,
                    qubits: cell.qubits,
                    mean_return: f64::NAN,
                    std_return: f64::NAN,
                    best_return: f64::NAN,
                    minutes: 0.0,
                    pqc_calls: 0,
                    status: format!("error: {e}"),
                });
                continue;
            }
        };
        rows.push(ablation_row(&cell, &runs));
        entries.extend(runs.into_iter().map(|r| r.entry));
    }
    let table = dir.join("ablation.csv");
    write_atomic(&table, ablation_csv(&rows).as_bytes())?;
    let manifest = RunManifest {
        summary: RunManifest::summarize(&entries),
        config,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: Utc::now(),
        seeds: entries,
        extra_outputs: vec![table.clone()],
    };
    manifest.write(&dir.join("manifest.json"))?;
    let _ = writeln!(log, "table: {}", table.display());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckSettings {
    pub qubits: usize,
    pub layers: usize,
    pub probes: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub fd_step: f64,
    /// Replaces the ±π/2 shift; only for exercising the failure path.
    pub shift: f64,
}

impl Default for GradientCheckSettings {
    fn default() -> Self {
        Self {
            qubits: 5,
            layers: 3,
            probes: 10,
            seed: 0,
            tolerance: 1e-6,
            fd_step: DEFAULT_FD_STEP,
            shift: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Relative error with a floor so near-zero entries compare absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn cmd_verify_gradients(settings: &GradientCheckSettings, log: &mut dyn Write) -> CommandResult {
    use std::f64::consts::PI;
    let usage = |e: Error| CommandError::Usage(e.to_string());
    let config = PqcConfig::new(settings.qubits, settings.layers, 1).map_err(usage)?;
    if settings.probes == 0 {
        return Err(CommandError::Usage("--probes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut failures = Vec::new();

    let single = PqcConfig::new(1, 1, 1).map_err(usage)?;
    let theta = PI / 3.0;
    let q = ControlVector::new(vec![theta, 0.0, 0.0, 0.0]);
    let j = shift_rule_jacobian(&q, &single, settings.shift)?;
    let _ = writeln!(log, "single-qubit dP(1)/dθ at θ=π/3: {:.7} (closed form {:.7})", j.get(0, 0), theta.sin() / 2.0);
    if (j.get(0, 0) - theta.sin() / 2.0).abs() > settings.tolerance {
        failures.push(format!("single-qubit derivative {} != {}", j.get(0, 0), theta.sin() / 2.0));
    }

    let mut worst: f64 = 0.0;
    for probe in 0..settings.probes {
        let angles = config.angle_dim();
        let values = (0..config.control_dim())
            .map(|i| if i < angles { rng.random_range(-PI..PI) } else { rng.random_range(-2.0..2.0) })
            .collect();
        let q = ControlVector::new(values);
        let shift = shift_rule_jacobian(&q, &config, settings.shift)?;
        let fd = finite_diff_jacobian(&q, &config, settings.fd_step)?;
        let dev = shift.max_abs_diff(&fd)?;
        worst = worst.max(dev);
        if dev > settings.tolerance {
            let (mut r, mut c, mut big) = (0, 0, 0.0);
            for row in 0..shift.rows() {
                for col in 0..shift.cols() {
                    let d = (shift.get(row, col) - fd.get(row, col)).abs();
                    if d > big {
                        (r, c, big) = (row, col, d);
                    }
                }
            }
            failures.push(format!(
                "probe {probe}: shift vs finite difference deviates by {dev:.3e} (worst entry [{r}, {c}]: {} vs {})",
                shift.get(r, c),
                fd.get(r, c)
            ));
        }
    }
    let _ = writeln!(log, "parameter shift vs finite difference: max deviation {worst:.3e} over {} probes", settings.probes);

    // network backward vs central differences on a surrogate-shaped net
    let net = DenseNet::new(
        &[config.control_dim(), 16, config.num_qubits],
        Activation::leaky_relu(),
        Activation::Sigmoid,
        &mut rng,
    )?;
    let mut net_worst: f64 = 0.0;
    for probe in 0..settings.probes {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jac = net.input_jacobian(&x)?;
        let h = 1e-6;
        for col in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[col] += h;
            down[col] -= h;
            let (yu, yd) = (net.predict(&up)?, net.predict(&down)?);
            for row in 0..yu.len() {
                let fd = (yu[row] - yd[row]) / (2.0 * h);
                let e = rel_err(jac[[row, col]], fd);
                net_worst = net_worst.max(e);
                if e > 1e-4 {
                    failures.push(format!("net probe {probe}: entry [{row}, {col}] {} vs {fd}", jac[[row, col]]));
                }
            }
        }
    }
    let _ = writeln!(log, "network backward vs finite difference: max relative deviation {net_worst:.3e}");

    if failures.is_empty() {
        let _ = writeln!(log, "PASS");
        Ok(())
    } else {
        for f in failures.iter().take(20) {
            let _ = writeln!(log, "  {f}");
        }
        let _ = writeln!(log, "FAIL");
        Err(CommandError::Failed(format!("{} gradient check(s) out of tolerance", failures.len())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub update: u64,
    pub bce_at_fit: f64,
    pub report: FidelityReport,
}

pub fn load_checkpoint(path: &Path) -> std::result::Result<Checkpoint, CommandError> {
    if !path.exists() {
        return Err(CommandError::Usage(format!("checkpoint not found: {}", path.display())));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))
}

pub fn fidelity_entries(
    checkpoint: &Checkpoint,
    pqc: &PqcConfig,
    radius: f64,
    probes: usize,
    seed: u64,
) -> std::result::Result<Vec<FidelityEntry>, CommandError> {
    let qtdnn = checkpoint
        .agent
        .actor
        .qtdnn()
        .ok_or_else(|| CommandError::Usage("checkpoint has no qtDNN (not a pqc run)".into()))?;
    if checkpoint.fit_records.is_empty() {
        return Err(CommandError::Usage("checkpoint holds no recorded fits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noiseless = pqc.clone();
    noiseless.noise = NoiseConfig::noiseless();
    let mut out = Vec::new();
    for rec in &checkpoint.fit_records {
        let center = ControlVector::new(rec.center.clone());
        let report = fidelity_report(qtdnn, &noiseless, &center, radius, probes, &mut rng)?;
        out.push(FidelityEntry { update: rec.update, bce_at_fit: rec.bce, report });
    }
    Ok(out)
}

pub fn cmd_fidelity_report(
    checkpoint_path: &Path,
    config: Option<(&Path, &[String])>,
    radius: f64,
    probes: usize,
    seed: u64,
    out: Option<&Path>,
    log: &mut dyn Write,
) -> CommandResult {
    if probes == 0 {
        return Err(CommandError::Usage("--probes must be positive".into()));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(CommandError::Usage("--radius must be non-negative".into()));
    }
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let pqc = match config {
        Some((path, overrides)) => load_config(path, overrides)?.pqc,
        None => checkpoint.pqc_config().clone(),
    };
    let entries = fidelity_entries(&checkpoint, &pqc, radius, probes, seed)?;
    let text = serde_json::to_string_pretty(&entries).map_err(Error::from)?;
    if let Some(p) = out {
        write_atomic(p, text.as_bytes())?;
    }
    let _ = writeln!(log, "{text}");
    Ok(())
}

pub fn cmd_bench_cost(
    inputs: u64,
    outputs: u64,
    shots: u64,
    batch: u64,
    updates: u64,
    per_shot_time: f64,
    log: &mut dyn Write,
) -> CommandResult {
    let report = shift_cost_report(inputs, outputs, shots, batch, updates, per_shot_time)
        .map_err(|e| CommandError::Usage(e.to_string()))?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    let _ = writeln!(log, "{text}");
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: EnvId,
    pub episodes: usize,
    pub seed: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub pqc_calls: u64,
}

pub fn cmd_eval(
    checkpoint_path: &Path,
    env: EnvId,
    episodes: usize,
    seed: u64,
    noiseless: bool,
    log: &mut dyn Write,
) -> CommandResult {
    if episodes == 0 {
        return Err(CommandError::Usage("--episodes must be positive".into()));
    }
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let mut actor = checkpoint.agent.actor;
    if noiseless {
        actor.pqc.noise = NoiseConfig::noiseless();
    }
    let mut environment = env.make();
    if environment.obs_dim() != actor.obs_dim() || environment.bounds() != actor.bounds {
        return Err(CommandError::Usage(format!("checkpoint actor does not fit environment `{env}`")));
    }
    let counter = CallCounter::new();
    let (mean, std) = evaluate(&actor, environment.as_mut(), episodes, seed, &counter)?;
    let report = EvalReport { env, episodes, seed, mean_return: mean, std_return: std, pqc_calls: counter.pqc_calls() };
    let _ = writeln!(log, "{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(())
}

/// Output gap of the checkpointed surrogate at a single point; handy for
/// checking `r = 0` reports.
pub fn center_gap(checkpoint: &Checkpoint, center: &ControlVector) -> crate::error::Result<f64> {
    let qtdnn = checkpoint.agent.actor.qtdnn().ok_or(Error::MissingSurrogate)?;
    let exact = exact_layer_map(center, checkpoint.pqc_config())?;
    let approx = qtdnn.predict(center)?;
    Ok(exact.iter().zip(&approx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}
