//! Discrete-adjoint solves and the reduced gradient.
//!
//! Both multipliers solve the transposed operator matrices, so the pairing
//! of the gradient density with any direction is the exact derivative of
//! the discrete cost; the finite-difference check is the authority on the
//! sign convention.

use serde::Serialize;

use crate::assembly::{assemble_boundary_samples_load, assemble_coupling_load, coupling_pairing};
use crate::cost::{self, CostConfig, NuDensity};
use crate::error::Result;
use crate::fields;
use crate::forward::{ParameterField, ReducedProblem};
use crate::linsolve::{SolveReport, DEFAULT_TOL};

pub struct AdjointState {
    pub psi_fields: Vec<Vec<f64>>,
    pub phi_fields: Vec<Vec<f64>>,
    /// Combined multiplier size used by the limit diagnostics.
    pub c_p: f64,
    pub psi_reports: Vec<SolveReport>,
    pub phi_reports: Vec<SolveReport>,
}

/// Per-element gradient density of the reduced cost: pairing it with a
/// direction field over the domain gives the directional derivative.
#[derive(Clone, Debug, Serialize)]
pub struct GradientField {
    pub values: Vec<f64>,
}

/// Solves the misfit multipliers: transposed v-operator with the boundary
/// load induced by the misfit measure density of each experiment.
pub fn solve_psi(
    rp: &ReducedProblem,
    v_fields: &[Vec<f64>],
    p: f64,
) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>, NuDensity)> {
    let nu = cost::nu_density(rp, v_fields, p);
    let mut psi = Vec::with_capacity(rp.data.n());
    let mut reports = Vec::with_capacity(rp.data.n());
    for i in 0..rp.data.n() {
        let load = assemble_boundary_samples_load(&rp.space, &rp.patch_rules[i], &nu.blocks[i].values);
        let report = rp.factor_vt.solve_checked(&load, DEFAULT_TOL, 4)?;
        psi.push(report.solution.clone());
        reports.push(report);
    }
    Ok((psi, reports, nu))
}

/// Solves the state multipliers: transposed u-operator with the volume
/// source `xi M^T psi_i`.
pub fn solve_phi(
    rp: &ReducedProblem,
    psi_fields: &[Vec<f64>],
    xi: &ParameterField,
) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>)> {
    let mt = rp.coeffs.m.transposed();
    let mut phi = Vec::with_capacity(psi_fields.len());
    let mut reports = Vec::with_capacity(psi_fields.len());
    for psi in psi_fields {
        let load = assemble_coupling_load(&rp.space, &xi.values, &mt, psi)?;
        let report = rp.factor_ut.solve_checked(&load, DEFAULT_TOL, 4)?;
        phi.push(report.solution.clone());
        reports.push(report);
    }
    Ok((phi, reports))
}

/// Full adjoint state at a given parameter/state pair, including the
/// combined multiplier norm.
pub fn adjoint_state(
    rp: &ReducedProblem,
    xi: &ParameterField,
    v_fields: &[Vec<f64>],
    p: f64,
) -> Result<AdjointState> {
    let (psi_fields, psi_reports, _) = solve_psi(rp, v_fields, p)?;
    let (phi_fields, phi_reports) = solve_phi(rp, &psi_fields, xi)?;
    let c_p = compute_cp(rp, &phi_fields, &psi_fields);
    Ok(AdjointState {
        psi_fields,
        phi_fields,
        c_p,
        psi_reports,
        phi_reports,
    })
}

/// Per-element reduced gradient density:
/// `alpha * mu-density + sum_i avg_element (M u_i) . psi_i`,
/// with the element average taken by the same order-2 rule as the coupling
/// load so the pairing is the exact discrete derivative.
pub fn reduced_gradient(
    rp: &ReducedProblem,
    xi: &ParameterField,
    psi_fields: &[Vec<f64>],
    cfg: &CostConfig,
) -> GradientField {
    let mesh = &rp.space.mesh;
    let nelem = mesh.n_triangles();
    let mut values = vec![0.0; nelem];

    if cfg.alpha > 0.0 {
        let mu = cost::mu_density(mesh, &xi.values, cfg.p);
        for e in 0..nelem {
            values[e] = cfg.alpha * mu.values[e];
        }
    }

    let barys: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for (u, psi) in rp.u_fields.iter().zip(psi_fields) {
        for e in 0..nelem {
            let tri = mesh.triangles[e];
            let pa = mesh.vertices[tri[0]];
            let pb = mesh.vertices[tri[1]];
            let pc = mesh.vertices[tri[2]];
            let mut acc = 0.0;
            for bary in barys {
                let x = [
                    bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
                    bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
                ];
                let mut uq = [0.0; 2];
                let mut pq = [0.0; 2];
                for c in 0..2 {
                    for k in 0..3 {
                        uq[c] += bary[k] * u[rp.space.dof(tri[k], c)];
                        pq[c] += bary[k] * psi[rp.space.dof(tri[k], c)];
                    }
                }
                let mu_q = rp.coeffs.m.apply(x, uq);
                acc += (mu_q[0] * pq[0] + mu_q[1] * pq[1]) / 3.0;
            }
            values[e] += acc; // area/3 weights divided by area
        }
    }
    GradientField { values }
}

/// L2 pairing of a gradient density with a direction field.
pub fn pair_gradient(rp: &ReducedProblem, g: &GradientField, direction: &[f64]) -> f64 {
    g.values
        .iter()
        .zip(direction)
        .enumerate()
        .map(|(e, (gv, dv))| rp.space.mesh.tri_areas[e] * gv * dv)
        .sum()
}

/// Combined multiplier norm: `W^{1,m/(m-2)}` of the stacked phi fields plus
/// `W^{1,1}` of the stacked psi fields.
pub fn compute_cp(rp: &ReducedProblem, phi_fields: &[Vec<f64>], psi_fields: &[Vec<f64>]) -> f64 {
    let m = rp.data.m_exponent;
    let phi_refs: Vec<&[f64]> = phi_fields.iter().map(|f| f.as_slice()).collect();
    let psi_refs: Vec<&[f64]> = psi_fields.iter().map(|f| f.as_slice()).collect();
    let phi_all_zero = phi_fields.iter().all(|f| f.iter().all(|v| *v == 0.0));
    let psi_all_zero = psi_fields.iter().all(|f| f.iter().all(|v| *v == 0.0));
    let phi_norm = if phi_all_zero {
        0.0
    } else {
        fields::w1q_norm(&rp.space, &phi_refs, m / (m - 2.0))
    };
    let psi_norm = if psi_all_zero {
        0.0
    } else {
        fields::w1q_norm(&rp.space, &psi_refs, 1.0)
    };
    phi_norm + psi_norm
}

/// Both sides of the first adjoint identity for given nodal test fields:
/// misfit-measure pairing on the left, transposed v-operator bilinear form
/// on the right.
pub fn identity_v_sides(
    rp: &ReducedProblem,
    nu: &NuDensity,
    psi_fields: &[Vec<f64>],
    w_fields: &[Vec<f64>],
) -> (f64, f64) {
    let lhs = cost::nu_pairing_nodal(rp, nu, w_fields);
    let mut rhs = 0.0;
    for (psi, w) in psi_fields.iter().zip(w_fields) {
        let aw = rp.mat_v.matvec(w);
        rhs += aw.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>();
    }
    (lhs, rhs)
}

/// Both sides of the second adjoint identity for given nodal test fields:
/// u-operator bilinear form against phi on the left, coupling pairing with
/// psi on the right.
pub fn identity_u_sides(
    rp: &ReducedProblem,
    xi: &ParameterField,
    psi_fields: &[Vec<f64>],
    phi_fields: &[Vec<f64>],
    z_fields: &[Vec<f64>],
) -> (f64, f64) {
    let mut lhs = 0.0;
    for (phi, z) in phi_fields.iter().zip(z_fields) {
        let az = rp.mat_u.matvec(z);
        lhs += az.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
    }
    let mut rhs = 0.0;
    for (psi, z) in psi_fields.iter().zip(z_fields) {
        rhs += coupling_pairing(&rp.space, &xi.values, &rp.coeffs.m, z, psi);
    }
    (lhs, rhs)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckRow {
    pub p: f64,
    pub direction: usize,
    pub fd: f64,
    pub adjoint: f64,
    pub rel_err: f64,
}

/// Central finite differences of the reduced cost through full re-solves
/// against the adjoint pairing, for a batch of directions and exponents.
pub fn gradient_fd_check(
    rp: &ReducedProblem,
    xi0: &ParameterField,
    base_cfg: &CostConfig,
    ps: &[f64],
    directions: &[Vec<f64>],
    step: f64,
) -> Result<Vec<GradCheckRow>> {
    let mut rows = Vec::new();
    for &p in ps {
        let cfg = base_cfg.with_p(p);
        let (v, _) = rp.solve_v(xi0)?;
        let (psi, _, _) = solve_psi(rp, &v, p)?;
        let g = reduced_gradient(rp, xi0, &psi, &cfg);
        for (d, dir) in directions.iter().enumerate() {
            let eval = |xi_vals: Vec<f64>| -> Result<f64> {
                let xi = ParameterField {
                    values: xi_vals,
                    bound: f64::INFINITY,
                };
                let (v, _) = rp.solve_v(&xi)?;
                Ok(cost::eval_ip(rp, &v, &xi, &cfg).total)
            };
            let plus: Vec<f64> = xi0.values.iter().zip(dir).map(|(x, d)| x + step * d).collect();
            let minus: Vec<f64> = xi0.values.iter().zip(dir).map(|(x, d)| x - step * d).collect();
            let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
            let adjoint = pair_gradient(rp, &g, dir);
            let rel_err = (fd - adjoint).abs() / fd.abs().max(adjoint.abs()).max(1e-14);
            rows.push(GradCheckRow {
                p,
                direction: d,
                fd,
                adjoint,
                rel_err,
            });
        }
    }
    Ok(rows)
}
