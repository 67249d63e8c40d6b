use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nsalloc_cli::config::{ExperimentConfig, Gains};
use nsalloc_cli::runner::{self, Summary};
use nsalloc_cli::{report, CliError};

#[derive(Parser)]
#[command(name = "nsalloc", version, about = "Simulate distributed nonsmooth resource allocation dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the dynamics and write trajectory.csv and summary.json.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Solve the problem centrally and compare the terminal allocation.
        #[arg(long)]
        verify: bool,
        /// Print the effective config as TOML and exit.
        #[arg(long)]
        dump_config: bool,
        /// Output directory (defaults to `output.dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run independent variations concurrently, e.g. `k2=10,20,40`.
        /// Parameters: k1, k2, k3, step, horizon.
        #[arg(long, value_name = "PARAM=V1,V2,...")]
        sweep: Option<String>,
    },
    /// Report spectral quantities and check the gains against the bounds.
    CheckParams {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long, value_name = "H")]
    step: Option<f64>,
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(h) = self.step {
            cfg.params.step_size = h;
        }
        if let Some(t) = self.horizon {
            cfg.params.max_time = t;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| match e {
        CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn print_summary(s: &Summary, out: &Path) {
    println!(
        "{}: {} steps, t = {:.3}{}, kkt residual {:.3e}, wall clock {:.3}s -> {}",
        s.name,
        s.steps_taken,
        s.final_time,
        if s.stopped_early { " (equilibrium reached)" } else { "" },
        s.kkt.worst(),
        s.wall_clock_seconds,
        out.display()
    );
    if let Some(o) = &s.oracle {
        println!("  reference objective {:.6}, max deviation {:.3e}", o.objective, o.max_deviation);
    }
}

fn parse_sweep(arg: &str) -> Result<(String, Vec<f64>), CliError> {
    let bad = |why: &str| CliError::Parse(format!("--sweep {arg}: {why}"));
    let (name, values) = arg.split_once('=').ok_or_else(|| bad("expected PARAM=V1,V2,..."))?;
    if !["k1", "k2", "k3", "step", "horizon"].contains(&name) {
        return Err(bad("unknown parameter"));
    }
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad("values must be numbers")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.to_string(), values))
}

fn sweep(cfg: &ExperimentConfig, out: &Path, arg: &str) -> Result<(), CliError> {
    let (name, values) = parse_sweep(arg)?;
    let problem = cfg.problem()?;
    let (k1, k2, k3) = cfg.gains(&problem)?;
    let variants: Vec<(PathBuf, ExperimentConfig)> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            let mut gains = (k1, k2, k3);
            match name.as_str() {
                "k1" => gains.0 = v,
                "k2" => gains.1 = v,
                "k3" => gains.2 = v,
                "step" => c.params.step_size = v,
                _ => c.params.max_time = v,
            }
            c.params.gains = Gains::Fixed { k1: gains.0, k2: gains.1, k3: gains.2 };
            c.name = format!("{}[{name}={v}]", cfg.name);
            (out.join(format!("{name}={v}")), c)
        })
        .collect();
    let results: Vec<Result<Summary, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants.iter().map(|(dir, c)| scope.spawn(move || runner::run(c, dir))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::Other("run panicked".into())))).collect()
    });
    let mut first_error = None;
    for ((dir, c), result) in variants.iter().zip(results) {
        match result {
            Ok(s) => print_summary(&s, dir),
            Err(e) => {
                eprintln!("{}: {e}", c.name);
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, overrides, verify, dump_config, out, sweep: sweep_arg } => {
            let mut cfg = load(&config, &overrides)?;
            cfg.verify |= verify;
            if let Some(dir) = &out {
                cfg.output.dir = dir.clone();
            }
            if dump_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let out_dir = cfg.output.dir.clone();
            match sweep_arg {
                Some(arg) => sweep(&cfg, &out_dir, &arg),
                None => {
                    let summary = runner::run(&cfg, &out_dir)?;
                    print_summary(&summary, &out_dir);
                    Ok(())
                }
            }
        }
        Command::CheckParams { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            print!("{}", report::check_params(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
