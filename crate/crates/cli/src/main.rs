use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use streamal::config::unknown_preset;
use streamal::{parse_config, preset, presets, run_command, ConfigError, ExperimentSpec};

/// Robust online active learning experiments on simulated contaminated streams.
#[derive(Parser)]
#[command(name = "streamal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file (or a preset name) and write CSV results.
    Run {
        /// Experiment file, or the name of a preset.
        config: String,
        #[arg(long)]
        replicas: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every decision of every replica.
        #[arg(long)]
        dump_traces: bool,
        /// Stop a run once the stabilization score drops below this value.
        #[arg(long)]
        stop_tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in presets.
    Presets,
}

fn load(config: &str) -> Result<ExperimentSpec, ConfigError> {
    match std::fs::read_to_string(config) {
        Ok(text) => parse_config(&text),
        Err(_) if preset(config).is_some() => ExperimentSpec::from_preset(config),
        Err(e) => Err(ConfigError::Invalid(format!(
            "cannot read {config}: {e} ({})",
            unknown_preset(config)
        ))),
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("STREAMAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("STREAMAL_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn list_presets() {
    for p in presets() {
        let s = &p.scenario;
        println!(
            "{:<22} {} (p={}, B={}, m={}, alpha={}, c={}, contamination={}, contaminated_init={})",
            p.name,
            p.summary,
            s.p,
            s.budget,
            s.warm_up,
            s.alpha,
            s.cutoff,
            s.contamination,
            s.contaminated_init
        );
        let names: Vec<String> = p.strategies.iter().map(|s| s.to_string()).collect();
        println!("{:<22} strategies: {}", "", names.join(", "));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            list_presets();
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            replicas,
            out,
            dump_traces,
            stop_tol,
            seed,
        } => {
            if let Err(e) = configure_threads() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            let mut spec = match load(&config) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(r) = replicas {
                spec.replicas = r;
            }
            if let Some(o) = out {
                spec.out = o;
            }
            if let Some(s) = seed {
                spec.scenario.seed = s;
            }
            spec.dump_traces |= dump_traces;
            if stop_tol.is_some() {
                spec.stop_tol = stop_tol;
            }
            ExitCode::from(run_command(&spec) as u8)
        }
    }
}
