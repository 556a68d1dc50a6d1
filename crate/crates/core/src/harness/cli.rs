use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::commands::{
    cmd_ablate, cmd_bench_cost, cmd_eval, cmd_fidelity_report, cmd_train, cmd_verify_gradients, CommandError,
    GradientCheckSettings,
};
use crate::env::EnvId;

#[derive(Debug, Parser)]
#[command(name = "hdqnn", version, about = "Surrogate-trained hybrid quantum-classical agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted `key=value` override, e.g. `agent.lr=1e-3`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: from the config, under $HDQNN_OUTPUT_ROOT).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent per configured seed.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the variant grid and write a comparison table.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Cross-check parameter-shift, finite-difference and backprop gradients.
    VerifyGradients {
        #[arg(long, default_value_t = 5)]
        qubits: usize,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 10)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-4)]
        fd_step: f64,
        #[arg(long, hide = true, default_value_t = std::f64::consts::FRAC_PI_2)]
        shift: f64,
    },
    /// Measure surrogate output and Jacobian gaps around recorded fit centers.
    FidelityReport {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional run configuration supplying the circuit settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = 64)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shot and time cost of parameter-shift gradients versus one call per step.
    BenchCost {
        #[arg(long)]
        inputs: u64,
        #[arg(long)]
        outputs: u64,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        batch: u64,
        #[arg(long, default_value_t = 1)]
        updates: u64,
        /// Seconds per shot, e.g. 6e-7.
        #[arg(long)]
        per_shot_time: f64,
    },
    /// Evaluate a checkpointed policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "pendulum")]
        env: EnvId,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate on the noiseless circuit.
        #[arg(long)]
        noiseless: bool,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 success, 1 failed check or run,
/// 2 usage or configuration error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train { config, seed } => {
            cmd_train(&config.config, &config.overrides, seed, config.out.as_deref(), out)
        }
        Command::Ablate { config } => cmd_ablate(&config.config, &config.overrides, config.out.as_deref(), out),
        Command::VerifyGradients { qubits, layers, probes, seed, tolerance, fd_step, shift } => {
            let settings = GradientCheckSettings { qubits, layers, probes, seed, tolerance, fd_step, shift };
            cmd_verify_gradients(&settings, out)
        }
        Command::FidelityReport { checkpoint, config, overrides, radius, probes, seed, out: path } => cmd_fidelity_report(
            &checkpoint,
            config.as_deref().map(|p| (p, overrides.as_slice())),
            radius,
            probes,
            seed,
            path.as_deref(),
            out,
        ),
        Command::BenchCost { inputs, outputs, shots, batch, updates, per_shot_time } => {
            cmd_bench_cost(inputs, outputs, shots, batch, updates, per_shot_time, out)
        }
        Command::Eval { checkpoint, env, episodes, seed, noiseless } => {
            cmd_eval(&checkpoint, env, episodes, seed, noiseless, out)
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let prefix = match e {
                CommandError::Usage(_) => "error",
                CommandError::Failed(_) => "failed",
            };
            let _ = writeln!(err, "{prefix}: {e}");
            e.exit_code()
        }
    }
}
