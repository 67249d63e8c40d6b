use std::fmt::Write;

use nsalloc_core::Algorithm;

use crate::config::{ExperimentConfig, Gains};
use crate::CliError;

/// `h * k2 * |L|` above this makes forward Euler visibly stiff.
pub const STIFFNESS_LIMIT: f64 = 2.0;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// Plain-text parameter report: spectral data, bounds and a verdict per gain.
pub fn check_params(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let problem = cfg.problem()?;
    let bounds = problem.parameter_bounds(cfg.algorithm).map_err(|e| CliError::Validation(e.to_string()))?;
    let (k1, k2, k3) = cfg.gains(&problem)?;
    let lb = problem.laplacian();
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "experiment      {}", cfg.name);
    let _ = writeln!(w, "algorithm       {}", cfg.algorithm);
    let _ = writeln!(w, "agents          {} (dimension {})", problem.n_agents(), problem.dim());
    let _ = writeln!(
        w,
        "graph           {}, weight-balanced: {}, strongly connected: {}",
        if problem.graph().is_undirected(1e-9) { "undirected" } else { "directed" },
        problem.graph().is_weight_balanced(1e-9),
        problem.graph().is_strongly_connected()
    );
    let _ = writeln!(w, "lambda2 (sym)   {:.6}", lb.lambda2_sym);
    let _ = writeln!(w, "|L|             {:.6}", lb.spectral_norm);
    let _ = writeln!(w, "omega           {:.6}", problem.strong_convexity());
    let _ = writeln!(w, "bounds          k1 > {:.6}, k2 > {:.6} * k1^2, k3 > 0", bounds.k1_min, bounds.k2_coeff);
    if matches!(cfg.params.gains, Gains::Auto(_)) {
        let _ = writeln!(w, "gains           auto: 1.05 x bounds, k3 = 1");
    }
    let check = bounds.check(k1, k2, k3);
    let _ = writeln!(w, "k1 = {k1:<12.6} {} (needs > {:.6})", verdict(check.k1_ok), bounds.k1_min);
    let _ = writeln!(w, "k2 = {k2:<12.6} {} (needs > {:.6})", verdict(check.k2_ok), bounds.k2_min(k1));
    let _ = writeln!(w, "k3 = {k3:<12.6} {} (needs > 0)", verdict(check.k3_ok));
    if k1 <= 0.0 || k2 <= 0.0 || k3 <= 0.0 {
        let _ = writeln!(w, "error: all gains must be positive");
    }
    if cfg.algorithm == Algorithm::Alg1 && problem.fully_distributed_regime() {
        let _ = writeln!(w, "fully distributed: no bound required (undirected graph, strictly convex costs)");
        if k1 > 0.0 && k2 > 0.0 && k3 > 0.0 {
            let _ = writeln!(w, "overall         pass (informational)");
        } else {
            let _ = writeln!(w, "overall         FAIL");
        }
    } else {
        let _ = writeln!(w, "overall         {}", verdict(check.all()));
    }
    if cfg.algorithm == Algorithm::Alg2 && !problem.graph().is_undirected(1e-9) {
        let _ = writeln!(w, "warning: alg2 requires an undirected graph; `run` will refuse this experiment");
    }
    let stiffness = cfg.params.step_size * k2.max(k1) * lb.spectral_norm;
    if stiffness > STIFFNESS_LIMIT {
        let _ = writeln!(
            w,
            "warning: h * k2 * |L| = {stiffness:.2} exceeds {STIFFNESS_LIMIT}; forward Euler may diverge, reduce the step size"
        );
    }
    Ok(out)
}
