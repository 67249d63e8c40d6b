//! Fixtures shared by the benchmarks.

use nalgebra::DVector;

use nsalloc_core::convex::{ConvexSet, Halfspace};

/// `n` deterministic probe points spread over `[-span, span]^dim`.
pub fn probe_points(n: usize, dim: usize, span: f64) -> Vec<DVector<f64>> {
    (0..n)
        .map(|k| {
            DVector::from_fn(dim, |j, _| {
                let phase = (k * (2 * j + 3) + 7 * j) as f64 * 0.618_033_988_75;
                span * (2.0 * phase.fract() - 1.0)
            })
        })
        .collect()
}

/// One set per family, all in the plane.
pub fn planar_sets() -> Vec<(&'static str, ConvexSet)> {
    let v = |a: f64, b: f64| DVector::from_row_slice(&[a, b]);
    vec![
        ("box", ConvexSet::Box { lower: v(1.0, 0.0), upper: v(2.0, 1.0) }),
        ("ball", ConvexSet::Ball { center: v(2.0, 2.0), radius: 2.0 }),
        (
            "polyhedron",
            ConvexSet::Polyhedron {
                rows: vec![
                    Halfspace::new(v(-1.0, 0.0), -0.5),
                    Halfspace::new(v(0.0, -1.0), -1.0),
                    Halfspace::new(v(1.0, 1.0), 6.0),
                ],
            },
        ),
        ("product", ConvexSet::Product { parts: vec![ConvexSet::interval(0.0, 1.0), ConvexSet::interval(-2.0, 3.0)] }),
    ]
}
