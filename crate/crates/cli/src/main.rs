use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use etlp::config::{DatasetKind, RunConfig};
use etlp::data::{decode_nmnist, write_canonical_events, NmnistGeometry};
use etlp::harness::{
    complexity_report, evaluate_snapshot, render_complexity, run_experiment, theta_sweep,
    WeightSnapshot,
};
use etlp::hw::{
    accumulation_run, fx_quantize, hw_step, required_clock_hz, single_step_trials, write_cycle_csv,
    Fixed, GradientUnit, HwInputs, TraceMemory,
};
use etlp::LearningRule;

#[derive(Parser)]
#[command(
    name = "etlp",
    version,
    about = "Train and analyse spiking networks with event-based local plasticity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defaults to use when no config file is given.
    #[arg(long, value_parser = parse_dataset, default_value = "synthetic")]
    dataset: DatasetKind,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write per-epoch metrics.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        rule: Option<LearningRule>,
        /// Hidden-layer adaptation scale.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
        /// Save the final weights of every seed here.
        #[arg(long)]
        weights_dir: Option<PathBuf>,
    },
    /// Evaluate saved weights on both splits.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        weights: PathBuf,
        /// Metrics CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test accuracy per rule across adaptation scales.
    SweepTheta {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Repeat or comma-separate; defaults to all trainable rules.
        #[arg(long, value_delimiter = ',')]
        rule: Vec<LearningRule>,
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-state counts of every rule at the configured sizes.
    Complexity {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the fixed-point gradient unit against the floating-point traces.
    Hwsim {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace decay for the accumulation run.
        #[arg(long, default_value_t = 0.9875)]
        alpha: f64,
        /// Per-cycle record of a short run, as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert an N-MNIST `.bin` file to `timestamp_us,channel` CSV.
    DecodeNmnist {
        input: PathBuf,
        /// Use the 32×32 centre crop.
        #[arg(long)]
        crop: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_dataset(s: &str) -> Result<DatasetKind, String> {
    match s {
        "nmnist" => Ok(DatasetKind::Nmnist),
        "shd_canonical" | "shd" => Ok(DatasetKind::ShdCanonical),
        "synthetic" => Ok(DatasetKind::Synthetic),
        _ => Err(format!(
            "unknown dataset `{s}` (nmnist, shd_canonical, synthetic)"
        )),
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::defaults(args.dataset),
    };
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn train(
    mut cfg: RunConfig,
    rule: Option<LearningRule>,
    theta: Option<f64>,
    out: &Path,
    weights_dir: Option<&Path>,
) -> Result<()> {
    if let Some(r) = rule {
        cfg.rule = r;
    }
    if let Some(t) = theta {
        cfg.theta = t;
    }
    cfg.validate()?;
    let exp = run_experiment(&cfg)?;
    exp.write_csv_file(out)?;
    if let Some(dir) = weights_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for run in &exp.runs {
            let snap = WeightSnapshot {
                run_id: cfg.run_id.clone(),
                seed: run.seed,
                epoch: cfg.epochs,
                synapses: run.synapses.clone(),
            };
            snap.save(&dir.join(format!("{}-seed{}.json", cfg.run_id, run.seed)))?;
        }
    }
    let (m, s) = exp.test_accuracy();
    println!(
        "{} {} over {} seed(s): test accuracy {:.2}% ± {:.2}",
        cfg.run_id,
        cfg.rule,
        exp.runs.len(),
        100.0 * m,
        100.0 * s
    );
    Ok(())
}

fn hwsim(trials: usize, seed: u64, alpha: f64, out: Option<&Path>) -> Result<()> {
    let bound = 3.0 * Fixed::EPSILON;
    let single = single_step_trials(trials, seed)?;
    println!(
        "single-step: {} trials, max |fx - float| = {:.6} (bound {:.6}), mean {:.2e}",
        single.updates, single.max_gradient_error, bound, single.mean_gradient_error
    );
    let acc = accumulation_run(100, alpha, 0.1, seed)?;
    let trace_bound = Fixed::EPSILON / (1.0 - alpha);
    println!(
        "accumulation: 100 steps at alpha {alpha}, max trace error {:.6} (bound {:.6})",
        acc.max_trace_error, trace_bound
    );
    println!(
        "cycle budget: (700 + 450) synapses x 100 updates/s x 3 cycles = {} cycles/s",
        required_clock_hz(700 + 450, 100)
    );
    if let Some(path) = out {
        let mut unit = GradientUnit::new(fx_quantize(alpha)?, Fixed::ONE).with_recording();
        let mut mem = TraceMemory::new(4);
        for k in 0..8 {
            let inputs = HwInputs {
                pre_spike: k % 3 != 1,
                post_v: fx_quantize(0.25 * k as f64)?,
                threshold: Fixed::ONE,
                teach: if k % 2 == 0 { Fixed::ONE } else { Fixed::ZERO },
                address: k % 4,
            };
            hw_step(&mut unit, &mut mem, inputs)?;
        }
        write_cycle_csv(output(Some(path))?, unit.records())?;
    }
    if single.max_gradient_error > bound || acc.max_trace_error > trace_bound {
        bail!("fixed-point error exceeds its bound");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            cfg,
            rule,
            theta,
            out,
            weights_dir,
        } => train(
            load_config(&cfg)?,
            rule,
            theta,
            &out,
            weights_dir.as_deref(),
        ),
        Command::Evaluate {
            cfg,
            theta,
            weights,
            out,
        } => {
            let mut config = load_config(&cfg)?;
            if let Some(t) = theta {
                config.theta = t;
            }
            config.validate()?;
            let snap = WeightSnapshot::load(&weights)?;
            let exp = evaluate_snapshot(&config, &snap)?;
            let mut w = output(out.as_deref())?;
            exp.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::SweepTheta {
            cfg,
            rule,
            theta,
            out,
        } => {
            let config = load_config(&cfg)?;
            let rules = if rule.is_empty() {
                LearningRule::TRAINABLE.to_vec()
            } else {
                rule
            };
            let table = theta_sweep(&config, &theta, &rules)?;
            let mut w = output(out.as_deref())?;
            w.write_all(table.render().as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Command::Complexity { cfg, out } => {
            let config = load_config(&cfg)?;
            config.validate()?;
            let mut w = output(out.as_deref())?;
            w.write_all(render_complexity(&complexity_report(&config)).as_bytes())?;
            w.flush()?;
            Ok(())
        }
        Command::Hwsim {
            trials,
            seed,
            alpha,
            out,
        } => hwsim(trials, seed, alpha, out.as_deref()),
        Command::DecodeNmnist { input, crop, out } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let geometry = if crop {
                NmnistGeometry::CROP_32
            } else {
                NmnistGeometry::NATIVE
            };
            let events = decode_nmnist(&bytes, geometry)
                .with_context(|| format!("decoding {}", input.display()))?;
            let mut w = output(out.as_deref())?;
            write_canonical_events(&mut w, &events)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
