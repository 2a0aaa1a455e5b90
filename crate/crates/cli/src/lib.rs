//! Argument handling and subcommands for the `diffkern` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use diffkern::harness::{setup_trial, trial_rng};
use diffkern::output::{
    write_complexity, write_field_grid, write_nmse_curve, write_sweep, write_updates,
};
use diffkern::{
    complexity_table, harness, hyperslab_sweep, run_trials, validate_consensus, Algorithm,
    ComplexityParams, SimConfig,
};

/// Env var capping the number of trial worker threads.
pub const THREADS_ENV: &str = "DIFFKERN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "diffkern",
    version,
    about = "Distributed multikernel adaptive filtering experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average NMSE learning curve over trials.
    Run(SimArgs),
    /// Steady-state NMSE and update counts against the hyperslab threshold.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        /// Thresholds to try.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
        eps: Vec<f64>,
    },
    /// Multiplications and transmitted scalars per iteration.
    Complexity(ComplexityArgs),
    /// Checks the mixing matrix of one trial against the consensus conditions.
    ValidateConsensus {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Writes the dictionary, node positions and edges of one trial.
    ExportDict {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// key=value config file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// multi-gauss, altitude or time-varying.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub algo: Option<Algorithm>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Elevation grid for the altitude preset.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// 200 trials and 15000 iterations unless given explicitly.
    #[arg(long)]
    pub full_scale: bool,
    /// Any config key, applied last (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long = "J", default_value_t = 60)]
    pub nodes: u64,
    #[arg(long, default_value_t = 300)]
    pub edges: u64,
    #[arg(long = "r", default_value_t = 33)]
    pub centers: u64,
    #[arg(long = "Q", default_value_t = 2)]
    pub kernels: u64,
    #[arg(long = "L", default_value_t = 2)]
    pub input_dim: u64,
    #[arg(long = "s", default_value_t = 7)]
    pub select: u64,
    #[arg(long = "r-rff", default_value_t = 500)]
    pub rff_features: u64,
    /// Also write complexity.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] diffkern::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl SimArgs {
    /// Ordered key=value pairs: preset or file, flags, then `--set`.
    pub fn pairs(&self) -> CliResult<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            pairs = SimConfig::parse_pairs(&text).map_err(usage)?;
        }
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(p) = &self.preset {
            push("preset", p.clone());
        }
        if let Some(a) = self.algo {
            push("algo", a.to_string());
        }
        if self.full_scale {
            push("trials", diffkern::config::FULL_SCALE_TRIALS.to_string());
            push(
                "iterations",
                diffkern::config::FULL_SCALE_ITERATIONS.to_string(),
            );
        }
        if let Some(t) = self.trials {
            push("trials", t.to_string());
        }
        if let Some(i) = self.iters {
            push("iterations", i.to_string());
        }
        if let Some(s) = self.seed {
            push("seed", s.to_string());
        }
        if let Some(g) = &self.grid {
            push("grid", g.display().to_string());
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{o}`")))?;
            push(k.trim(), v.trim().to_string());
        }
        Ok(pairs)
    }

    pub fn config(&self) -> CliResult<SimConfig> {
        SimConfig::from_pairs(&self.pairs()?).map_err(usage)
    }
}

fn usage(e: diffkern::Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Worker count from [`THREADS_ENV`]; unset means the rayon default.
pub fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let f = File::create(dir.join(name)).map_err(diffkern::Error::from)?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(diffkern::Error::from)?;
    Ok(())
}

/// Creates the output directory and echoes the effective config into it.
fn prepare_out(dir: &Path, cfg: &SimConfig) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(diffkern::Error::from)?;
    let mut w = create(dir, "config.txt")?;
    w.write_all(cfg.to_text().as_bytes())
        .map_err(diffkern::Error::from)?;
    finish(w)
}

fn write_network(dir: &Path, cfg: &SimConfig, trial: u64) -> CliResult<harness::TrialSetup> {
    let setup = setup_trial(cfg, &mut trial_rng(cfg.seed, trial))?;
    let mut w = create(dir, "positions.csv")?;
    setup.graph.write_positions_csv(&mut w)?;
    finish(w)?;
    let mut w = create(dir, "edges.csv")?;
    setup.graph.write_edges_csv(&mut w)?;
    finish(w)?;
    Ok(setup)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(sim) => cmd_run(&sim),
        Command::Sweep { sim, eps } => cmd_sweep(&sim, &eps),
        Command::Complexity(args) => cmd_complexity(&args),
        Command::ValidateConsensus { sim, trial } => cmd_validate(&sim, trial),
        Command::ExportDict { sim, trial } => cmd_export(&sim, trial),
    }
}

fn cmd_run(sim: &SimArgs) -> CliResult<()> {
    let cfg = sim.config()?;
    let threads = threads_from_env()?;
    let field = cfg.build_field()?;
    prepare_out(&sim.out, &cfg)?;
    log::info!(
        "{} on {}: {} trials x {} iterations",
        cfg.algorithm,
        cfg.preset,
        cfg.trials,
        cfg.iterations
    );
    let outputs = run_trials(&cfg, &field, threads)?;
    let curve = harness::average(&outputs);

    let mut w = create(&sim.out, "nmse.csv")?;
    write_nmse_curve(&mut w, &curve)?;
    finish(w)?;
    let mut w = create(&sim.out, "updates.csv")?;
    write_updates(&mut w, &curve)?;
    finish(w)?;
    let mut w = create(&sim.out, "field.csv")?;
    write_field_grid(
        &mut w,
        &outputs[0],
        &field,
        cfg.iterations - 1,
        cfg.nmse_grid,
    )?;
    finish(w)?;
    write_network(&sim.out, &cfg, 0)?;

    println!("algorithm={}", cfg.algorithm);
    println!("steady_nmse_db={:.3}", curve.steady_state_db());
    println!("mean_updates={:.1}", curve.mean_updates());
    println!("wall_time_s={:.2}", curve.wall_time.as_secs_f64());
    Ok(())
}

fn cmd_sweep(sim: &SimArgs, eps: &[f64]) -> CliResult<()> {
    if eps.is_empty() || eps.iter().any(|&e| !(e >= 0.0)) {
        return Err(CliError::Usage("--eps needs nonnegative thresholds".into()));
    }
    let cfg = sim.config()?;
    if !cfg.algorithm.is_projection_based() {
        return Err(CliError::Usage(format!(
            "sweep needs a projection algorithm, got {}",
            cfg.algorithm
        )));
    }
    let threads = threads_from_env()?;
    let field = cfg.build_field()?;
    prepare_out(&sim.out, &cfg)?;
    let points = hyperslab_sweep(&cfg, &field, eps, threads)?;
    let mut w = create(&sim.out, "sweep.csv")?;
    write_sweep(&mut w, &points)?;
    finish(w)?;
    write_sweep(std::io::stdout().lock(), &points)?;
    Ok(())
}

fn cmd_complexity(args: &ComplexityArgs) -> CliResult<()> {
    let rows = complexity_table(&ComplexityParams {
        nodes: args.nodes,
        edges: args.edges,
        centers: args.centers,
        kernels: args.kernels,
        input_dim: args.input_dim,
        select: args.select,
        rff_features: args.rff_features,
    });
    write_complexity(std::io::stdout().lock(), &rows)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(diffkern::Error::from)?;
        let mut w = create(dir, "complexity.csv")?;
        write_complexity(&mut w, &rows)?;
        finish(w)?;
    }
    Ok(())
}

fn kernel_config(sim: &SimArgs) -> CliResult<SimConfig> {
    let cfg = sim.config()?;
    if cfg.algorithm == Algorithm::RffDklms {
        return Err(CliError::Usage(
            "rff-dklms has no dictionary; pick a kernel algorithm".into(),
        ));
    }
    Ok(cfg)
}

fn cmd_validate(sim: &SimArgs, trial: u64) -> CliResult<()> {
    let cfg = kernel_config(sim)?;
    prepare_out(&sim.out, &cfg)?;
    let setup = write_network(&sim.out, &cfg, trial)?;
    let model = setup.map.kernel_model().expect("kernel algorithm");
    let report = validate_consensus(&setup.mixing, model.gram())?;
    let text = report.to_text();
    let mut w = create(&sim.out, "consensus.txt")?;
    w.write_all(text.as_bytes())
        .map_err(diffkern::Error::from)?;
    finish(w)?;
    print!("{text}");
    if report.is_contraction() && report.spectrum_ok() {
        Ok(())
    } else {
        Err(CliError::Runtime(diffkern::Error::InvalidParameter(
            "mixing matrix does not satisfy the consensus conditions".into(),
        )))
    }
}

fn cmd_export(sim: &SimArgs, trial: u64) -> CliResult<()> {
    let cfg = kernel_config(sim)?;
    prepare_out(&sim.out, &cfg)?;
    let setup = write_network(&sim.out, &cfg, trial)?;
    let dict = setup
        .map
        .kernel_model()
        .expect("kernel algorithm")
        .dictionary();
    let mut w = create(&sim.out, "dictionary.csv")?;
    dict.write_csv(&mut w)?;
    finish(w)?;
    println!("centers={}", dict.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("diffkern").chain(args.iter().copied()))
    }

    #[test]
    fn preset_run_parses() {
        let cli = parse(&[
            "run",
            "--preset",
            "multi-gauss",
            "--seed",
            "7",
            "--out",
            "results/",
        ])
        .unwrap();
        let Command::Run(sim) = cli.command else {
            panic!("not run")
        };
        let cfg = sim.config().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(sim.out, PathBuf::from("results/"));
    }

    #[test]
    fn run_needs_preset_or_config() {
        assert!(parse(&["run"]).is_err());
    }

    #[test]
    fn preset_and_config_conflict() {
        assert!(parse(&["run", "--preset", "altitude", "--config", "x.txt"]).is_err());
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert!(parse(&["run", "--preset", "altitude", "--bogus"]).is_err());
    }

    #[test]
    fn complexity_flags() {
        let cli = parse(&[
            "complexity",
            "--J",
            "60",
            "--edges",
            "300",
            "--r",
            "33",
            "--Q",
            "2",
            "--L",
            "2",
            "--s",
            "7",
        ])
        .unwrap();
        let Command::Complexity(c) = cli.command else {
            panic!("not complexity")
        };
        assert_eq!(
            (
                c.nodes,
                c.edges,
                c.centers,
                c.kernels,
                c.input_dim,
                c.select
            ),
            (60, 300, 33, 2, 2, 7)
        );
    }

    #[test]
    fn overrides_apply_last_and_win() {
        let cli = parse(&[
            "run",
            "--preset",
            "multi-gauss",
            "--trials",
            "3",
            "--set",
            "trials=5",
            "--set",
            "mu=0.3",
            "--set",
            "mu=0.4",
        ])
        .unwrap();
        let Command::Run(sim) = cli.command else {
            panic!("not run")
        };
        let cfg = sim.config().unwrap();
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.mu, 0.4);
    }

    #[test]
    fn full_scale_yields_to_explicit_counts() {
        let cli = parse(&[
            "run",
            "--preset",
            "altitude",
            "--full-scale",
            "--trials",
            "2",
        ])
        .unwrap();
        let Command::Run(sim) = cli.command else {
            panic!("not run")
        };
        let cfg = sim.config().unwrap();
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.iterations, diffkern::config::FULL_SCALE_ITERATIONS);
    }

    #[test]
    fn algo_selects_preset_row() {
        let cli = parse(&["run", "--preset", "multi-gauss", "--algo", "dmklms"]).unwrap();
        let Command::Run(sim) = cli.command else {
            panic!("not run")
        };
        let cfg = sim.config().unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Dmklms);
        assert_eq!(cfg.mu, 0.1);
    }

    #[test]
    fn bad_override_is_usage_error() {
        let cli = parse(&["run", "--preset", "multi-gauss", "--set", "nonsense=1"]).unwrap();
        let Command::Run(sim) = cli.command else {
            panic!("not run")
        };
        assert_eq!(sim.config().unwrap_err().exit_code(), 2);
        let cli = parse(&["run", "--preset", "multi-gauss", "--set", "mu"]).unwrap();
        let Command::Run(sim) = cli.command else {
            panic!("not run")
        };
        assert_eq!(sim.config().unwrap_err().exit_code(), 2);
    }
}
