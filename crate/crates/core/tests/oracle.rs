use nalgebra::DVector;

use nsalloc_core::instances;
use nsalloc_core::oracle::{dual_solve, OracleOptions};
use nsalloc_core::problem::Problem;

const POINTS: usize = 13;

/// Grid search over the first three agents; the last agent absorbs the
/// remaining resource and infeasible completions are skipped.
fn grid_search(
    p: &Problem,
    mut lo: Vec<DVector<f64>>,
    mut hi: Vec<DVector<f64>>,
    rounds: usize,
) -> (f64, DVector<f64>) {
    let agents = p.agents();
    let total = p.total_resource();
    let last = agents.len() - 1;
    let mut best = (f64::INFINITY, DVector::zeros(p.stacked_len()));
    for _ in 0..rounds {
        let axes: Vec<Vec<DVector<f64>>> = (0..last)
            .map(|i| {
                let mut pts = Vec::with_capacity(POINTS * POINTS);
                for a in 0..POINTS {
                    for b in 0..POINTS {
                        let t = DVector::from_row_slice(&[a as f64, b as f64]) / (POINTS - 1) as f64;
                        let raw = &lo[i] + (&hi[i] - &lo[i]).component_mul(&t);
                        pts.push(agents[i].set.project(&raw).unwrap());
                    }
                }
                pts
            })
            .collect();
        let partial: Vec<Vec<f64>> =
            axes.iter().enumerate().map(|(i, pts)| pts.iter().map(|y| agents[i].cost.evaluate(y)).collect()).collect();
        for (i0, y0) in axes[0].iter().enumerate() {
            for (i1, y1) in axes[1].iter().enumerate() {
                let head = partial[0][i0] + partial[1][i1];
                if head >= best.0 {
                    continue;
                }
                for (i2, y2) in axes[2].iter().enumerate() {
                    let y3 = &total - y0 - y1 - y2;
                    if agents[last].set.membership_residual(&y3) > 1e-12 {
                        continue;
                    }
                    let value = head + partial[2][i2] + agents[last].cost.evaluate(&y3);
                    if value < best.0 {
                        let mut y = DVector::zeros(p.stacked_len());
                        for (k, block) in [y0, y1, y2, &y3].into_iter().enumerate() {
                            y.rows_mut(2 * k, 2).copy_from(block);
                        }
                        best = (value, y);
                    }
                }
            }
        }
        for i in 0..last {
            let centre = p.block(&best.1, i).into_owned();
            let half = (&hi[i] - &lo[i]) * 0.15;
            lo[i] = &centre - &half;
            hi[i] = &centre + &half;
        }
    }
    best
}

#[test]
fn planar_oracle_matches_grid_search() {
    let p = instances::example2(instances::graph_g1());
    let sol = dual_solve(&p, OracleOptions::default());
    assert!(sol.certified, "{:?}", sol.kkt);
    let (lo, hi): (Vec<_>, Vec<_>) = p.agents()[..3].iter().map(|a| a.set.bounding_box().unwrap()).unzip();
    let (value, y) = grid_search(&p, lo, hi, 5);
    assert!(value >= sol.objective - 1e-9, "grid {value} beats oracle {}", sol.objective);
    let diff = (&y - sol.y()).amax();
    assert!(diff <= 1e-2, "grid point {y} differs from oracle {} by {diff}", sol.y());
}

#[test]
fn dispatch_oracle_hits_the_closed_form() {
    let p = instances::example1(instances::graph_g1());
    let sol = dual_solve(&p, OracleOptions::default());
    let (y, s) = instances::example1_exact_optimum();
    assert!((sol.y() - DVector::from_row_slice(&y)).amax() < 1e-8);
    assert!((sol.s()[0] - s).abs() < 1e-6);
    assert!(sol.certified);
}
