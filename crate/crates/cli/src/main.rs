//! Command-line front end: experiment presets, quick walk/tree/spine
//! simulations, and verdict recomputation over saved results.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use branchwalk::forward_sim::{write_gen_stats_csv, GEN_STATS_HEADER};
use branchwalk::harness::{run_experiment, verdict_for_dir, ExperimentConfig};
use branchwalk::rng::replica_stream;
use branchwalk::spine_sim::sample_spine;
use branchwalk::stable_walk::{ballot_probability, BallotEvent, StepLaw};

#[derive(Parser)]
#[command(
    name = "branchwalk",
    version,
    about = "Simulation and statistical verification toolkit for boundary-case \
             branching random walks with heavy-tailed step laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON experiment configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replica count (meaning depends on the preset).
    #[arg(long)]
    replicas: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $BRANCHWALK_OUT/<preset>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Particle-step budget for the pre-flight cost guard.
    #[arg(long)]
    budget: Option<f64>,
}

impl Overrides {
    fn apply(&self, preset: &str) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let mut cfg = ExperimentConfig::from_json(&text)?;
                cfg.preset = preset.to_string();
                cfg
            }
            None => ExperimentConfig::default_for_preset(preset)?,
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(replicas) = self.replicas {
            cfg.replicas = replicas;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(budget) = self.budget {
            cfg.budget = budget;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the boundary and tail conditions of the configured law.
    CheckConditions {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate one barrier-crossing probability of the associated walk.
    Walk {
        /// Event kind: stays-above, max-below, end-below-stays-above,
        /// banded-end-window, late-descent-below.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        #[arg(long, default_value_t = 0.0)]
        u: f64,
        #[arg(long, default_value_t = 1.0)]
        v: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Append the estimate row to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate forward runs and write per-generation statistics CSV.
    Simulate {
        #[arg(long, default_value_t = 64)]
        n_max: u32,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample one spine realization under the tilted measure (JSON).
    Spine {
        #[arg(long, default_value_t = 64)]
        n: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// JSON output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a preset experiment and print its verdict table.
    Experiment {
        /// Preset id: check-conditions, mto-oracle, lemma21, lemma32,
        /// lemma41, median-mn, wn-decay, wn-max, lower-envelope,
        /// integral-test.
        preset: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute and print the verdict table for a saved results directory.
    Verdict {
        results_dir: PathBuf,
    },
}

fn parse_event(
    kind: &str,
    a: f64,
    b: f64,
    u: f64,
    v: f64,
    lambda: f64,
) -> anyhow::Result<BallotEvent> {
    Ok(match kind {
        "stays-above" => BallotEvent::StaysAbove { a },
        "max-below" => BallotEvent::MaxBelow { a },
        "end-below-stays-above" => BallotEvent::EndBelowStaysAbove { a, b },
        "banded-end-window" => BallotEvent::BandedEndWindow { a, b, u, v, lambda },
        "late-descent-below" => BallotEvent::LateDescentBelow { a, b, lambda },
        other => bail!("unknown event kind '{other}'"),
    })
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::CheckConditions { overrides } => {
            let cfg = overrides.apply("check-conditions")?;
            let out = run_experiment(&cfg)?;
            if !out.record.all_pass() {
                std::process::exit(1);
            }
        }
        Command::Walk {
            kind,
            n,
            reps,
            a,
            b,
            u,
            v,
            lambda,
            seed,
            out,
        } => {
            let law = StepLaw::default_law();
            let event = parse_event(&kind, a, b, u, v, lambda)?;
            let mut rng = replica_stream(seed, 0);
            let record = ballot_probability(&law, event, n, reps, 0.95, &mut rng, seed)?;
            println!(
                "{} ({}) n={} reps={}: {} [{}, {}]",
                record.kind,
                record.params,
                record.n,
                record.reps,
                record.estimate,
                record.ci_low,
                record.ci_high
            );
            if let Some(path) = out {
                let fresh = !path.exists();
                let file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)?;
                let mut w = csv::Writer::from_writer(file);
                if fresh {
                    w.write_record(["kind", "params", "n", "reps", "estimate", "ci_low", "ci_high", "seed"])?;
                }
                w.write_record([
                    record.kind.clone(),
                    record.params.clone(),
                    record.n.to_string(),
                    record.reps.to_string(),
                    format!("{}", record.estimate),
                    format!("{}", record.ci_low),
                    format!("{}", record.ci_high),
                    record.seed.to_string(),
                ])?;
                w.flush()?;
            }
        }
        Command::Simulate {
            n_max,
            replicas,
            beta,
            seed,
            workers,
            out,
        } => {
            let cfg = ExperimentConfig::default();
            let law = cfg.law.build()?;
            let policy = cfg.truncation.build()?;
            let runs = branchwalk::harness::simulate_runs(
                &law, n_max, &policy, beta, seed, replicas, workers,
            )?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(GEN_STATS_HEADER)?;
            for run in &runs {
                write_gen_stats_csv(&mut w, &run.stats, run.replica, run.seed)?;
            }
            let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
            match out {
                Some(path) => std::fs::write(path, bytes)?,
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
        }
        Command::Spine { n, seed, out } => {
            let cfg = ExperimentConfig::default();
            let law = cfg.law.build()?;
            let realization = sample_spine(&law, n, seed)?;
            let json = serde_json::to_string_pretty(&realization)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
        }
        Command::Experiment { preset, overrides } => {
            let cfg = overrides.apply(&preset)?;
            let out = run_experiment(&cfg)?;
            if !out.record.all_pass() {
                std::process::exit(1);
            }
        }
        Command::Verdict { results_dir } => {
            let (_, verdicts, qualitative) = verdict_for_dir(&results_dir)?;
            for v in &verdicts {
                let mark = match v.pass {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "INFO",
                };
                println!("[{mark}] {}: {}", v.name, v.detail);
            }
            if qualitative {
                println!("(qualitative preset: informational only)");
            }
            if verdicts.iter().any(|v| v.pass == Some(false)) {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
