use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mott_core::cli::{
    cmd_converge, cmd_gen_env, cmd_homog, cmd_measure, cmd_plot_trajectory, cmd_quenched, cmd_resistance, exit_code,
    plot_csv, ExperimentConfig, Outcome, Sizes,
};
use mott_core::env::ModelParams;
use mott_core::MottError;

#[derive(Parser)]
#[command(name = "mott", version, about = "Mott variable-range hopping experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and save environments.
    GenEnv(Common),
    /// Resistance profiles, approximation bundles and the sandwich check.
    Resistance(Common),
    /// Compare rescaled walk marginals with the limit process.
    Converge(Common),
    /// Invariant-measure convergence table.
    Measure(Common),
    /// Linear resistance growth and diffusive scaling for rho > 1.
    Homog(Common),
    /// Exit-time scaling on one fixed environment.
    Quenched(Common),
    /// Render a CSV file, or simulate and draw a trajectory from a config.
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; flags below override its fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// One size or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Rescaled times, comma-separated.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// constant, variable or trap.
    #[arg(long)]
    speed: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    env_file: Option<PathBuf>,
    /// Fail with exit code 4 when the KS statistic exceeds this.
    #[arg(long)]
    max_ks: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV file to draw.
    #[arg(long, conflicts_with = "config")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "x")]
    x: String,
    #[arg(long, default_value = "y")]
    y: String,
    #[arg(long)]
    scatter: bool,
    /// SVG file written for --data.
    #[arg(long, default_value = "plot.svg")]
    svg: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn resolve(c: &Common) -> Result<ExperimentConfig, MottError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let rho = c.rho.ok_or_else(|| MottError::Config("either --config or --rho is required".into()))?;
            let n = c.n.as_ref().and_then(|v| v.first().copied()).ok_or_else(|| MottError::Config("either --config or --n is required".into()))?;
            ExperimentConfig::new(ModelParams::new(rho), n)
        }
    };
    if let Some(v) = c.rho {
        cfg.params.rho = v;
    }
    if let Some(v) = c.beta {
        cfg.params.beta = v;
    }
    if let Some(v) = c.lambda {
        cfg.params.lambda = v;
    }
    if let Some(v) = c.kappa {
        cfg.params.kappa = Some(v);
    }
    if let Some(v) = &c.n {
        cfg.n = if v.len() == 1 { Sizes::One(v[0]) } else { Sizes::Many(v.clone()) };
    }
    if let Some(v) = c.k {
        cfg.k = v;
    }
    if let Some(v) = c.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.output {
        cfg.output = v.clone();
    }
    if let Some(v) = &c.t {
        cfg.t = v.clone();
    }
    if let Some(s) = &c.speed {
        cfg.speed = serde_json::from_value(serde_json::Value::String(s.clone()))
            .map_err(|_| MottError::Config(format!("unknown speed {s}")))?;
    }
    if let Some(v) = c.delta {
        cfg.delta = v;
    }
    if let Some(v) = &c.env_file {
        cfg.env_file = Some(v.clone());
    }
    if let Some(v) = c.max_ks {
        cfg.thresholds.ks = Some(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Option<Outcome>, MottError> {
    let with = |c: &Common, f: fn(&ExperimentConfig) -> Result<Outcome, MottError>| resolve(c).and_then(|cfg| f(&cfg));
    Ok(Some(match cli.command {
        Command::GenEnv(c) => with(&c, cmd_gen_env)?,
        Command::Resistance(c) => with(&c, cmd_resistance)?,
        Command::Converge(c) => with(&c, cmd_converge)?,
        Command::Measure(c) => with(&c, cmd_measure)?,
        Command::Homog(c) => with(&c, cmd_homog)?,
        Command::Quenched(c) => with(&c, cmd_quenched)?,
        Command::Plot(p) => match &p.data {
            Some(d) => {
                plot_csv(d, &p.x, &p.y, p.scatter, &p.svg)?;
                return Ok(None);
            }
            None => with(&p.common, cmd_plot_trajectory)?,
        },
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(o)) => {
            for f in &o.files {
                println!("wrote {f}");
            }
            if o.breaches.is_empty() {
                ExitCode::SUCCESS
            } else {
                for b in &o.breaches {
                    eprintln!("threshold breached: {b}");
                }
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
