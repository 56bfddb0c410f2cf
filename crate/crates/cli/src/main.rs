use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hiernoise::experiment::{
    export_config_noise, export_uniform_noise, run_ablation, run_breakdown, run_compare, ExperimentConfig,
};
use hiernoise::noise::{BreakdownProblem, FitMethod};

#[derive(Parser)]
#[command(name = "hiernoise", version, about = "Hierarchical label-noise experiments")]
struct Cli {
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "HIERNOISE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Paired FLAT vs HC comparison over the config's seeds.
    Compare { config: PathBuf },
    /// Early-window accuracy grid over noise ratio × α × seed.
    Ablate { config: PathBuf },
    /// Binary two-Gaussian breakdown table.
    Breakdown {
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        p_grid: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = Fit::Empirical)]
        fit: Fit,
        /// Sample size for the empirical fit.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Subdirectory of the output directory.
        #[arg(long, default_value = "breakdown")]
        name: String,
    },
    /// Writes a transition matrix as CSV.
    ExportNoise {
        /// Number of classes (uniform noise).
        #[arg(long, required_unless_present = "config")]
        k: Option<usize>,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
        /// Take the noise kind and dataset from an experiment config instead.
        #[arg(long, conflicts_with = "k")]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fit {
    Empirical,
    Population,
}

fn load(path: &PathBuf, cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads.filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().ok();
    }
    match &cli.command {
        Command::Compare { config } => {
            let cfg = load(config, cli)?;
            let out = run_compare(&cfg)?;
            println!(
                "{}: {} noise p={} alpha={} over {} seeds",
                cfg.name,
                out.summary.noise,
                out.summary.ratio,
                out.summary.hc_alpha,
                cfg.seeds.len()
            );
            for w in &out.report.windows {
                println!(
                    "  {:<5} {:<5} epochs {:>3}-{:<3} {} ± {}",
                    w.method,
                    w.kind,
                    w.window[0],
                    w.window[1],
                    pct(w.mean),
                    pct(w.stderr)
                );
            }
            println!("wrote {}", out.dir.display());
        }
        Command::Ablate { config } => {
            let cfg = load(config, cli)?;
            let rep = run_ablation(&cfg)?;
            println!("{}: epochs {}-{} of {}", cfg.name, rep.window[0], rep.window[1], rep.epochs);
            for c in &rep.cells {
                println!("  p={:<5} alpha={:<5} {} ± {}", c.ratio, c.alpha, pct(c.mean), pct(c.stderr));
            }
            println!("wrote {}", cfg.experiment_dir().display());
        }
        Command::Breakdown {
            p_grid,
            mu,
            sigma,
            fit,
            samples,
            seed,
            name,
        } => {
            let problem = BreakdownProblem {
                mu: *mu,
                sigma: *sigma,
                fit: match fit {
                    Fit::Empirical => FitMethod::Empirical { n: *samples, seed: *seed },
                    Fit::Population => FitMethod::Population,
                },
                ..BreakdownProblem::default()
            };
            let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")).join(name);
            let rows = run_breakdown(p_grid, &problem, &dir)?;
            println!("{:>5} {:>10} {:>12} {:>12} {:>12}", "p", "threshold", "excess_clean", "excess_noisy", "residual");
            for r in &rows {
                let t = match r.direction {
                    hiernoise::noise::Direction::Positive => format!(">{}", r.threshold),
                    hiernoise::noise::Direction::Negative => format!("<{}", r.threshold),
                };
                println!(
                    "{:>5} {:>10} {:>12.6} {:>12.6} {:>12.3e}",
                    r.p, t, r.excess_clean, r.excess_noisy, r.residual
                );
            }
            println!("wrote {}", dir.join("breakdown.csv").display());
        }
        Command::ExportNoise { k, p, out, config } => {
            let m = match (config, k) {
                (Some(path), _) => export_config_noise(&load(path, cli)?, *p, out)?,
                (None, Some(k)) => export_uniform_noise(*k, *p, out)?,
                (None, None) => unreachable!("clap requires --k or --config"),
            };
            println!("wrote {}x{} transition matrix to {}", m.num_classes(), m.num_classes(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
