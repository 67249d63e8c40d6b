use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use nsalloc_core::dynamics::{integrate, DynamicsError, EquilibriumCertificate, LyapunovV1};
use nsalloc_core::oracle::{compare, dual_solve, OracleOptions};
use nsalloc_core::problem::{KktOptions, KktReport, Severity};
use nsalloc_core::Algorithm;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Largest terminal deviation from the reference solution accepted by
/// `--verify`.
pub const VERIFY_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub algorithm: Algorithm,
    pub gains: [f64; 3],
    pub step_size: f64,
    pub max_time: f64,
    pub final_time: f64,
    pub steps_taken: usize,
    pub stopped_early: bool,
    pub wall_clock_seconds: f64,
    pub objective: f64,
    pub terminal: TerminalState,
    pub kkt: KktReport,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TerminalState {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub y_star: Vec<Vec<f64>>,
    pub s_star: Vec<f64>,
    pub objective: f64,
    pub certified: bool,
    pub max_deviation: f64,
    pub passed: bool,
}

fn blocks(v: &DVector<f64>, dim: usize) -> Vec<Vec<f64>> {
    v.as_slice().chunks(dim).map(<[f64]>::to_vec).collect()
}

fn map_dynamics(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::Diverged { time, magnitude } => CliError::Diverged { time, magnitude },
        DynamicsError::BadParam { .. }
        | DynamicsError::BadRecordEvery
        | DynamicsError::StateLength { .. }
        | DynamicsError::NotUndirected
        | DynamicsError::NotAlg1
        | DynamicsError::Problem(_)
        | DynamicsError::Graph(_) => CliError::Validation(e.to_string()),
        other => CliError::Other(other.to_string()),
    }
}

/// Runs one experiment and writes its artifacts into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Summary, CliError> {
    let problem = cfg.problem()?;
    let mut warnings = Vec::new();
    for diag in problem.validate() {
        if diag.severity == Severity::Warning {
            log::warn!("{diag}");
            warnings.push(diag.to_string());
        } else {
            log::info!("{diag}");
        }
    }
    let params = cfg.dyn_params(&problem)?;
    let init = cfg.initial_state(&problem)?;

    let started = Instant::now();
    let mut traj = integrate(&problem, &params, init, cfg.algorithm).map_err(map_dynamics)?;
    let wall_clock_seconds = started.elapsed().as_secs_f64();
    for w in &traj.warnings {
        log::warn!("{w}");
    }
    warnings.extend(traj.warnings.iter().cloned());

    let reference = (cfg.verify || cfg.output.lyapunov).then(|| dual_solve(&problem, OracleOptions::default()));
    if cfg.output.lyapunov {
        let sol = reference.as_ref().expect("computed above");
        let eq = EquilibriumCertificate::construct(
            &problem,
            cfg.algorithm,
            &params,
            &sol.y(),
            &sol.s(),
            KktOptions::default(),
        )
        .map_err(map_dynamics)?;
        let monitor = LyapunovV1::new(&problem, &eq, &params).map_err(map_dynamics)?;
        traj.attach_lyapunov(&monitor);
    }

    let terminal = traj.terminal();
    let kkt = problem
        .kkt_residual(&terminal.y, &terminal.s, KktOptions::for_step(params.step_size))
        .map_err(|e| CliError::Other(e.to_string()))?;
    let dim = problem.dim();
    let oracle = match (&reference, cfg.verify) {
        (Some(sol), true) => {
            let max_deviation = compare(&traj, sol);
            Some(OracleComparison {
                y_star: blocks(&sol.y(), dim),
                s_star: sol.s().as_slice().to_vec(),
                objective: sol.objective,
                certified: sol.certified,
                max_deviation,
                passed: sol.certified && max_deviation <= VERIFY_TOL,
            })
        }
        _ => None,
    };

    let summary = Summary {
        name: cfg.name.clone(),
        algorithm: cfg.algorithm,
        gains: [params.k1, params.k2, params.k3],
        step_size: params.step_size,
        max_time: params.max_time,
        final_time: traj.final_time(),
        steps_taken: traj.steps_taken,
        stopped_early: traj.stopped_early,
        wall_clock_seconds,
        objective: problem.objective(&terminal.y),
        terminal: TerminalState {
            x: blocks(&terminal.x, dim),
            y: blocks(&terminal.y, dim),
            s: blocks(&terminal.s, dim),
            w: blocks(&terminal.w, dim),
        },
        kkt,
        warnings,
        lyapunov: traj.lyapunov.clone(),
        oracle,
    };

    fs::create_dir_all(out_dir).map_err(CliError::io(format!("creating {}", out_dir.display())))?;
    if cfg.output.csv {
        let path = out_dir.join("trajectory.csv");
        let mut file =
            BufWriter::new(File::create(&path).map_err(CliError::io(format!("creating {}", path.display())))?);
        traj.write_csv(&mut file)
            .and_then(|_| file.flush())
            .map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    if cfg.output.summary {
        let path = out_dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(CliError::io(format!("writing {}", path.display())))?;
    }

    if let Some(cmp) = &summary.oracle {
        if !cmp.passed {
            return Err(CliError::Verification(format!(
                "terminal allocation deviates from the reference solution by {:.3e} (certified: {})",
                cmp.max_deviation, cmp.certified
            )));
        }
    }
    Ok(summary)
}
