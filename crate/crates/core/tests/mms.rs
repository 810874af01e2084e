//! Manufactured-solution convergence and estimate-ratio stability across
//! mesh refinements.

use std::sync::Arc;

use fotinv_core::assembly::DiscreteSpace;
use fotinv_core::coefficients::constant_set;
use fotinv_core::fields;
use fotinv_core::forward::{
    estimate_check, experiment_with_analytic_prediction, ratios_stable, solve_u, ParameterField,
    ProblemData, ReducedProblem,
};
use fotinv_core::mesh::{build_rectangle_mesh, tag_patches, PatchSpec};

const K1: f64 = 1.0;
const K2: f64 = 0.4;
const GAMMA: f64 = 1.0;

fn exact(p: [f64; 2]) -> [f64; 2] {
    [p[0] * (1.0 - p[0]), 0.0]
}

/// Source terms for the quadratic solution u = (x(1-x), 0) with A = I:
/// the volume source carries the Laplacian and the rotation term, the
/// boundary source the conormal flux plus the Robin trace.
fn volume_source(p: [f64; 2]) -> [f64; 2] {
    let u1 = p[0] * (1.0 - p[0]);
    [2.0 + K1 * u1, K2 * u1]
}

fn boundary_source(p: [f64; 2]) -> [f64; 2] {
    let eps = 1e-9;
    if p[0] < eps || p[0] > 1.0 - eps {
        // du1/dn = -1 at both vertical sides; the trace vanishes there.
        [-1.0, 0.0]
    } else {
        let u1 = p[0] * (1.0 - p[0]);
        [GAMMA * u1, 0.0]
    }
}

fn solve_on(nx: usize) -> (DiscreteSpace, Vec<f64>) {
    let mesh = tag_patches(
        build_rectangle_mesh(nx, nx, 1.0, 1.0).unwrap(),
        &[PatchSpec {
            tag: "B1".into(),
            side: "bottom".into(),
            interval: [0.0, 1.0],
        }],
    )
    .unwrap();
    let space = DiscreteSpace::new(Arc::new(mesh));
    let coeffs = constant_set(
        1.0,
        1.0,
        (K1, K2),
        (K1, 0.0),
        [[1.0, 0.0], [0.0, 1.0]],
        GAMMA,
        0.5,
    );
    let exp = experiment_with_analytic_prediction(
        &space,
        volume_source,
        boundary_source,
        "B1",
        |_| [0.0, 0.0],
    )
    .unwrap();
    let data = ProblemData {
        experiments: vec![exp],
        m_exponent: 4.0,
    };
    let (u, _) = solve_u(&space, &coeffs, &data).unwrap();
    (space, u.into_iter().next().unwrap())
}

#[test]
fn quadratic_solution_converges_at_second_order() {
    let mut errors = Vec::new();
    for nx in [8, 16, 32] {
        let (space, u) = solve_on(nx);
        errors.push(fields::l2_error(&space, &u, exact));
    }
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 1.8, "observed rate {rate} (errors {errors:?})");
    }
}

#[test]
fn estimate_ratios_stable_under_refinement() {
    let mut reports = Vec::new();
    for nx in [8, 16, 32] {
        let mesh = tag_patches(
            build_rectangle_mesh(nx, nx, 1.0, 1.0).unwrap(),
            &[PatchSpec {
                tag: "B1".into(),
                side: "bottom".into(),
                interval: [0.0, 1.0],
            }],
        )
        .unwrap();
        let space = DiscreteSpace::new(Arc::new(mesh));
        let coeffs = constant_set(
            1.0,
            1.0,
            (1.0, 0.3),
            (1.0, 0.2),
            [[1.0, 0.0], [0.0, 1.0]],
            1.0,
            0.5,
        );
        let exp = experiment_with_analytic_prediction(
            &space,
            |_| [1.0, 0.5],
            |x| [1.0 - x[0], x[1]],
            "B1",
            |_| [0.0, 0.0],
        )
        .unwrap();
        let data = ProblemData {
            experiments: vec![exp],
            m_exponent: 4.0,
        };
        let rp = ReducedProblem::new(space, coeffs, data).unwrap();
        // Fixed smooth absorption bump, resolution-independent.
        let mesh = &rp.space.mesh;
        let vals: Vec<f64> = (0..mesh.n_triangles())
            .map(|e| {
                let t = mesh.triangles[e];
                let cx = (mesh.vertices[t[0]][0] + mesh.vertices[t[1]][0] + mesh.vertices[t[2]][0]) / 3.0;
                let cy = (mesh.vertices[t[0]][1] + mesh.vertices[t[1]][1] + mesh.vertices[t[2]][1]) / 3.0;
                (1.0 - cx) * cx * cy
            })
            .collect();
        let xi = ParameterField::new(vals, f64::INFINITY).unwrap();
        let (v, _) = rp.solve_v(&xi).unwrap();
        reports.push(estimate_check(&rp, &xi, &v, 4.0));
    }
    assert!(
        ratios_stable(&reports, 0.2),
        "ratios: {:?}",
        reports.iter().map(|r| r.max_v_ratio).collect::<Vec<_>>()
    );
}
