//! Forward solves of the coupled systems: the absorption-independent u
//! fields first (computed once and cached), then the v fields driven by the
//! elementwise-constant absorption through the coupling term, plus the
//! well-posedness ratio checks.

use std::sync::Arc;

use crate::assembly::{
    assemble_coupling_load, assemble_load, assemble_operator, transpose_system, CsrMatrix,
    DiscreteSpace, GeneralRobinData, VectorFn,
};
use crate::coefficients::{validate, CoefficientSet};
use crate::error::{Error, Result};
use crate::fields;
use crate::linsolve::{Factorization, SolveReport, DEFAULT_TOL};
use crate::mesh::{BoundaryRule, Point, VolumeRule};

/// Elementwise-constant absorption field constrained to `[0, bound]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterField {
    pub values: Vec<f64>,
    /// Upper bound; `f64::INFINITY` when only nonnegativity is imposed.
    pub bound: f64,
}

impl ParameterField {
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self> {
        let field = ParameterField { values, bound };
        field.check_feasible()?;
        Ok(field)
    }

    pub fn zeros(n_elements: usize, bound: f64) -> Self {
        ParameterField {
            values: vec![0.0; n_elements],
            bound,
        }
    }

    pub fn check_feasible(&self) -> Result<()> {
        for (e, &v) in self.values.iter().enumerate() {
            if !(v >= 0.0 && v <= self.bound) {
                return Err(Error::Optimize(format!(
                    "xi[{e}] = {v} violates the box [0, {}]",
                    self.bound
                )));
            }
        }
        Ok(())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Element index, value per line.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (e, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{} {:.17e}", e, v);
        }
        out
    }
}

/// One experiment: its sources, the observation patch and the predicted
/// boundary values sampled at that patch's quadrature points.
#[derive(Clone)]
pub struct Experiment {
    pub volume_source: VectorFn,
    pub boundary_source: VectorFn,
    pub patch: String,
    /// Samples aligned with the patch boundary rule.
    pub prediction: Vec<[f64; 2]>,
}

/// The experiment battery: sources, patches, predictions and the recorded
/// analysis exponent m (not enforced discretely; all discrete norms are
/// finite).
#[derive(Clone)]
pub struct ProblemData {
    pub experiments: Vec<Experiment>,
    pub m_exponent: f64,
}

impl ProblemData {
    pub fn n(&self) -> usize {
        self.experiments.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.experiments.is_empty() {
            return Err(Error::Optimize("at least one experiment required".into()));
        }
        if !(self.m_exponent > 2.0) {
            return Err(Error::Optimize(format!(
                "analysis exponent m must exceed 2 (got {})",
                self.m_exponent
            )));
        }
        Ok(())
    }
}

/// Solved state: one (u, v) pair per experiment with the solve reports.
pub struct State {
    pub u_fields: Vec<Vec<f64>>,
    pub v_fields: Vec<Vec<f64>>,
    pub u_reports: Vec<SolveReport>,
    pub v_reports: Vec<SolveReport>,
}

/// Solves the u systems (operator from A, K, gamma; loads from the volume
/// and boundary sources). These do not depend on the absorption field.
pub fn solve_u(
    space: &DiscreteSpace,
    coeffs: &CoefficientSet,
    data: &ProblemData,
) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>)> {
    let sys = assemble_operator(space, &coeffs.a, &coeffs.k, coeffs.gamma);
    let factor = Factorization::new(&sys.matrix)?;
    solve_u_with(space, &factor, data)
}

fn solve_u_with(
    space: &DiscreteSpace,
    factor_u: &Factorization,
    data: &ProblemData,
) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>)> {
    let mut fields_out = Vec::with_capacity(data.n());
    let mut reports = Vec::with_capacity(data.n());
    for exp in &data.experiments {
        let fsrc = exp.volume_source.clone();
        let gsrc = exp.boundary_source.clone();
        let load = assemble_load(
            space,
            &GeneralRobinData::new(move |x| fsrc(x), |_| [[0.0; 2]; 2], move |x| gsrc(x)),
        );
        let report = factor_u.solve_checked(&load, DEFAULT_TOL, 4)?;
        fields_out.push(report.solution.clone());
        reports.push(report);
    }
    Ok((fields_out, reports))
}

/// Solves the v systems at a given absorption field, using the cached u
/// fields as coupling sources; homogeneous Robin data.
pub fn solve_v(
    space: &DiscreteSpace,
    coeffs: &CoefficientSet,
    xi: &ParameterField,
    u_fields: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>)> {
    xi.check_feasible()?;
    let sys = assemble_operator(space, &coeffs.b, &coeffs.l, coeffs.gamma);
    let factor = Factorization::new(&sys.matrix)?;
    solve_v_with(space, &factor, coeffs, xi, u_fields)
}

fn solve_v_with(
    space: &DiscreteSpace,
    factor_v: &Factorization,
    coeffs: &CoefficientSet,
    xi: &ParameterField,
    u_fields: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>)> {
    let mut fields_out = Vec::with_capacity(u_fields.len());
    let mut reports = Vec::with_capacity(u_fields.len());
    for u in u_fields {
        let load = assemble_coupling_load(space, &xi.values, &coeffs.m, u)?;
        let report = factor_v.solve_checked(&load, DEFAULT_TOL, 4)?;
        fields_out.push(report.solution.clone());
        reports.push(report);
    }
    Ok((fields_out, reports))
}

/// Everything the optimisation loop reuses across iterations: both factored
/// operators and their transposes, the cached u fields and the quadrature
/// rules of the observation patches.
pub struct ReducedProblem {
    pub space: DiscreteSpace,
    pub coeffs: CoefficientSet,
    pub data: ProblemData,
    pub mat_u: CsrMatrix,
    pub mat_v: CsrMatrix,
    pub factor_u: Factorization,
    pub factor_ut: Factorization,
    pub factor_v: Factorization,
    pub factor_vt: Factorization,
    pub u_fields: Vec<Vec<f64>>,
    pub u_reports: Vec<SolveReport>,
    pub patch_rules: Vec<BoundaryRule>,
    pub vol_rule: VolumeRule,
}

impl ReducedProblem {
    pub fn new(space: DiscreteSpace, coeffs: CoefficientSet, data: ProblemData) -> Result<Self> {
        data.check()?;
        let report = validate(&coeffs, &space.mesh);
        if !report.passed {
            let first = report
                .violations
                .first()
                .map(|v| v.what.clone())
                .unwrap_or_default();
            return Err(Error::Coefficients(format!(
                "coefficient validation failed ({} violations; first: {first})",
                report.violations.len()
            )));
        }

        let sys_u = assemble_operator(&space, &coeffs.a, &coeffs.k, coeffs.gamma);
        let sys_v = assemble_operator(&space, &coeffs.b, &coeffs.l, coeffs.gamma);
        let factor_u = Factorization::new(&sys_u.matrix)?;
        let factor_ut = Factorization::new(&transpose_system(&sys_u).matrix)?;
        let factor_v = Factorization::new(&sys_v.matrix)?;
        let factor_vt = Factorization::new(&transpose_system(&sys_v).matrix)?;

        let mut patch_rules = Vec::with_capacity(data.n());
        for exp in &data.experiments {
            let rule = space.mesh.boundary_quadrature(&exp.patch)?;
            if !(rule.total_measure > 0.0) {
                return Err(Error::Mesh(format!(
                    "patch `{}` has non-positive measure",
                    exp.patch
                )));
            }
            if !exp.prediction.is_empty() && exp.prediction.len() != rule.points.len() {
                return Err(Error::Optimize(format!(
                    "prediction for patch `{}` has {} samples, rule has {}",
                    exp.patch,
                    exp.prediction.len(),
                    rule.points.len()
                )));
            }
            patch_rules.push(rule);
        }

        let (u_fields, u_reports) = solve_u_with(&space, &factor_u, &data)?;
        let vol_rule = space.mesh.volume_quadrature(2);
        Ok(ReducedProblem {
            space,
            coeffs,
            data,
            mat_u: sys_u.matrix,
            mat_v: sys_v.matrix,
            factor_u,
            factor_ut,
            factor_v,
            factor_vt,
            u_fields,
            u_reports,
            patch_rules,
            vol_rule,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.space.mesh.n_triangles()
    }

    /// v solves against the cached u fields and factored operator.
    pub fn solve_v(&self, xi: &ParameterField) -> Result<(Vec<Vec<f64>>, Vec<SolveReport>)> {
        xi.check_feasible()?;
        solve_v_with(&self.space, &self.factor_v, &self.coeffs, xi, &self.u_fields)
    }

    pub fn state(&self, xi: &ParameterField) -> Result<State> {
        let (v_fields, v_reports) = self.solve_v(xi)?;
        Ok(State {
            u_fields: self.u_fields.clone(),
            v_fields,
            u_reports: self.u_reports.clone(),
            v_reports,
        })
    }

    /// Overwrites the stored predictions with traces of the given v fields
    /// at the patch quadrature points (the usual synthetic-data pathway).
    pub fn set_predictions_from_traces(&mut self, v_fields: &[Vec<f64>]) {
        for (i, rule) in self.patch_rules.iter().enumerate() {
            let samples: Vec<[f64; 2]> = rule
                .points
                .iter()
                .map(|q| fields::boundary_value_at(&self.space, &v_fields[i], q))
                .collect();
            self.data.experiments[i].prediction = samples;
        }
    }
}

/// Well-posedness ratios of one solved state.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EstimateRow {
    pub experiment: usize,
    /// `||u||_{W^{1,m/2}} / (||s||_{L^{m/2}} + ||S||_{L^{nm/(2n+m)}})`.
    pub u_ratio: f64,
    /// `||v||_{W^{1,p}} / (||xi||_{L^p} ||u||_{L^m})`; absent when xi = 0.
    pub v_ratio: Option<f64>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EstimateReport {
    pub rows: Vec<EstimateRow>,
    pub max_u_ratio: f64,
    pub max_v_ratio: Option<f64>,
    /// When xi = 0, v must vanish identically; this is the observed max.
    pub max_v_when_xi_zero: Option<f64>,
}

/// Discrete counterparts of the a-priori estimates: ratios of solution
/// norms to data norms. Stability across refinements (ratios bounded,
/// varying mildly) is the property tested downstream.
pub fn estimate_check(
    rp: &ReducedProblem,
    xi: &ParameterField,
    v_fields: &[Vec<f64>],
    p: f64,
) -> EstimateReport {
    let n = 2.0; // spatial dimension of the desk-scale discretisation
    let m = rp.data.m_exponent;
    let space = &rp.space;
    let xi_zero = xi.values.iter().all(|v| *v == 0.0);

    let xi_lp = if xi_zero {
        0.0
    } else {
        let mut acc = 0.0;
        for (e, &v) in xi.values.iter().enumerate() {
            acc += space.mesh.tri_areas[e] * v.abs().powf(p);
        }
        acc.powf(1.0 / p)
    };

    let mut rows = Vec::new();
    let mut max_u: f64 = 0.0;
    let mut max_v: Option<f64> = None;
    let mut max_v_zero: Option<f64> = None;
    for (i, exp) in rp.data.experiments.iter().enumerate() {
        let s_norm = {
            let b = exp.boundary_source.clone();
            fields::boundary_lq_norm_fn(space, move |x| b(x), m / 2.0)
        };
        let vol_norm = {
            let s = exp.volume_source.clone();
            fields::lq_norm_fn(space, move |x| s(x), n * m / (2.0 * n + m))
        };
        let u_norm = fields::w1q_norm(space, &[&rp.u_fields[i]], m / 2.0);
        let denom = s_norm + vol_norm;
        let u_ratio = if denom > 0.0 { u_norm / denom } else { 0.0 };
        max_u = max_u.max(u_ratio);

        let v_ratio = if xi_zero {
            let sup = v_fields[i].iter().fold(0.0_f64, |a, b| a.max(b.abs()));
            max_v_zero = Some(max_v_zero.unwrap_or(0.0).max(sup));
            None
        } else {
            let v_norm = fields::w1q_norm(space, &[&v_fields[i]], p);
            let u_lm = fields::lq_norm(space, &[&rp.u_fields[i]], m);
            let ratio = v_norm / (xi_lp * u_lm);
            max_v = Some(max_v.unwrap_or(0.0).max(ratio));
            Some(ratio)
        };
        rows.push(EstimateRow {
            experiment: i,
            u_ratio,
            v_ratio,
        });
    }
    EstimateReport {
        rows,
        max_u_ratio: max_u,
        max_v_ratio: max_v,
        max_v_when_xi_zero: max_v_zero,
    }
}

/// Stability of the estimate ratios across a refinement sequence: every
/// ratio stays within the given relative spread of its minimum.
pub fn ratios_stable(reports: &[EstimateReport], spread: f64) -> bool {
    let vals: Vec<f64> = reports.iter().filter_map(|r| r.max_v_ratio).collect();
    if vals.len() < 2 {
        return true;
    }
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(0.0_f64, f64::max);
    hi <= lo * (1.0 + spread)
}

/// Convenience constructor for experiments with analytic predictions (the
/// samples are taken at the patch quadrature points).
pub fn experiment_with_analytic_prediction(
    space: &DiscreteSpace,
    volume_source: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    boundary_source: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    patch: &str,
    prediction: impl Fn(Point) -> [f64; 2],
) -> Result<Experiment> {
    let rule = space.mesh.boundary_quadrature(patch)?;
    let samples: Vec<[f64; 2]> = rule.points.iter().map(|q| prediction(q.xy)).collect();
    Ok(Experiment {
        volume_source: Arc::new(volume_source),
        boundary_source: Arc::new(boundary_source),
        patch: patch.to_string(),
        prediction: samples,
    })
}
