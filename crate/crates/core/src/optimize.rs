//! Projected-gradient minimisation of the reduced cost over the box-
//! constrained absorption field, complementarity reports, the exponent
//! continuation driver and the limit-relation diagnostics.

use serde::Serialize;

use crate::adjoint::{self, AdjointState, GradientField};
use crate::cost::{self, CostBreakdown, CostConfig};
use crate::error::{Error, Result};
use crate::forward::{ParameterField, ReducedProblem};

/// Componentwise clamp to `[0, bound]`; idempotent.
pub fn project(values: &[f64], bound: f64) -> Vec<f64> {
    values.iter().map(|v| v.clamp(0.0, bound)).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OptimConfig {
    /// Initial trial step.
    pub step0: f64,
    /// Backtracking factor in (0, 1).
    pub backtrack: f64,
    /// Sufficient-decrease constant in (0, 1).
    pub armijo_c1: f64,
    pub max_iter: usize,
    /// Stationarity tolerance on the projected residual.
    pub tol: f64,
}

impl OptimConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.step0 > 0.0)
            || !(self.backtrack > 0.0 && self.backtrack < 1.0)
            || !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0)
            || !(self.tol > 0.0)
        {
            return Err(Error::Optimize(format!("invalid optimiser config {self:?}")));
        }
        Ok(())
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            step0: 1.0,
            backtrack: 0.5,
            armijo_c1: 1e-4,
            max_iter: 5000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Converged,
    MaxIter,
    Stalled,
    Failed,
}

/// One line of the optimisation log.
#[derive(Clone, Debug, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub p: f64,
    pub step: f64,
    pub misfits: Vec<f64>,
    pub regulariser: f64,
    pub total: f64,
    pub residual: f64,
}

/// Complementarity diagnostics at a parameter/gradient pair.
#[derive(Clone, Debug, Serialize)]
pub struct KKTReport {
    /// `sup_e |xi_e - clamp(xi_e - G_e)|`.
    pub stationarity_residual: f64,
    pub active_tol: f64,
    /// Largest |G| where xi is strictly inside the box.
    pub max_abs_g_inactive: f64,
    /// Smallest G on the lower-active set (must not be very negative).
    pub min_g_lower_active: f64,
    /// Largest G on the upper-active set (box regime only).
    pub max_g_upper_active: Option<f64>,
    pub g_sup: f64,
    pub lower_active_fraction: f64,
    pub upper_active_fraction: f64,
    pub inactive_fraction: f64,
}

/// Sign and magnitude conditions on the gradient split by active set, with
/// `active_tol = 1e-8 * max(1, max xi)`.
pub fn kkt_check(
    rp: &ReducedProblem,
    xi: &ParameterField,
    g: &GradientField,
    _cfg: &CostConfig,
) -> KKTReport {
    let active_tol = 1e-8 * xi.max_value().max(1.0);
    let bound = xi.bound;
    let mut residual = 0.0_f64;
    let mut max_inactive = 0.0_f64;
    let mut min_lower = f64::INFINITY;
    let mut max_upper = f64::NEG_INFINITY;
    let mut g_sup = 0.0_f64;
    let (mut area_lower, mut area_upper, mut area_inactive, mut area_total) =
        (0.0, 0.0, 0.0, 0.0);
    for (e, (&x, &gv)) in xi.values.iter().zip(&g.values).enumerate() {
        let area = rp.space.mesh.tri_areas[e];
        area_total += area;
        residual = residual.max((x - (x - gv).clamp(0.0, bound)).abs());
        g_sup = g_sup.max(gv.abs());
        if x <= active_tol {
            min_lower = min_lower.min(gv);
            area_lower += area;
        } else if bound.is_finite() && x >= bound - active_tol {
            max_upper = max_upper.max(gv);
            area_upper += area;
        } else {
            max_inactive = max_inactive.max(gv.abs());
            area_inactive += area;
        }
    }
    KKTReport {
        stationarity_residual: residual,
        active_tol,
        max_abs_g_inactive: max_inactive,
        min_g_lower_active: if min_lower.is_finite() { min_lower } else { 0.0 },
        max_g_upper_active: if max_upper.is_finite() {
            Some(max_upper)
        } else {
            None
        },
        g_sup,
        lower_active_fraction: area_lower / area_total,
        upper_active_fraction: area_upper / area_total,
        inactive_fraction: area_inactive / area_total,
    }
}

pub struct MinimiseResult {
    pub xi: ParameterField,
    pub v_fields: Vec<Vec<f64>>,
    pub adjoint: AdjointState,
    pub gradient: GradientField,
    pub kkt: KKTReport,
    pub cost: CostBreakdown,
    pub log: Vec<IterRecord>,
    pub status: Status,
    pub iterations: usize,
}

/// Projected gradient with monotone Armijo backtracking; the trial step is
/// refreshed by a safeguarded Barzilai-Borwein estimate. Accepted costs
/// decrease strictly until termination.
pub fn minimise_p(
    rp: &ReducedProblem,
    xi0: &ParameterField,
    cfg: &CostConfig,
    optim: &OptimConfig,
) -> Result<MinimiseResult> {
    cfg.check()?;
    optim.check()?;
    xi0.check_feasible()?;

    let areas = &rp.space.mesh.tri_areas;
    let pair = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(areas)
            .map(|((x, y), w)| w * x * y)
            .sum()
    };

    let eval = |vals: &[f64]| -> Result<(Vec<Vec<f64>>, CostBreakdown)> {
        let xi = ParameterField {
            values: vals.to_vec(),
            bound: xi0.bound,
        };
        let (v, _) = rp.solve_v(&xi)?;
        let bd = cost::eval_ip(rp, &v, &xi, cfg);
        Ok((v, bd))
    };
    let grad = |vals: &[f64], v: &[Vec<f64>]| -> Result<GradientField> {
        let xi = ParameterField {
            values: vals.to_vec(),
            bound: xi0.bound,
        };
        let (psi, _, _) = adjoint::solve_psi(rp, v, cfg.p)?;
        Ok(adjoint::reduced_gradient(rp, &xi, &psi, cfg))
    };

    let mut xi = xi0.values.clone();
    let (mut v_fields, mut breakdown) = eval(&xi)?;
    let mut g = grad(&xi, &v_fields)?;
    let mut step = optim.step0;
    let mut log = Vec::new();
    let mut status = Status::MaxIter;
    let mut iterations = 0;

    for iter in 0..=optim.max_iter {
        let residual = xi
            .iter()
            .zip(&g.values)
            .map(|(&x, &gv)| (x - (x - gv).clamp(0.0, xi0.bound)).abs())
            .fold(0.0_f64, f64::max);
        log.push(IterRecord {
            iter,
            p: cfg.p,
            step,
            misfits: breakdown.misfits.clone(),
            regulariser: breakdown.regulariser,
            total: breakdown.total,
            residual,
        });
        iterations = iter;
        if residual <= optim.tol {
            status = Status::Converged;
            break;
        }
        if iter == optim.max_iter {
            status = Status::MaxIter;
            break;
        }

        // Backtracking line search on the projected arc.
        let mut t = step;
        let mut accepted: Option<(Vec<f64>, Vec<Vec<f64>>, CostBreakdown, f64)> = None;
        for _ in 0..=30 {
            let trial: Vec<f64> = xi
                .iter()
                .zip(&g.values)
                .map(|(&x, &gv)| (x - t * gv).clamp(0.0, xi0.bound))
                .collect();
            let decrease: f64 = xi
                .iter()
                .zip(&trial)
                .zip(&g.values)
                .zip(areas)
                .map(|(((x, tr), gv), w)| w * gv * (x - tr))
                .sum();
            if decrease > 0.0 {
                let (v_new, bd_new) = eval(&trial)?;
                if bd_new.total <= breakdown.total - optim.armijo_c1 * decrease {
                    accepted = Some((trial, v_new, bd_new, t));
                    break;
                }
            }
            t *= optim.backtrack;
        }
        let Some((xi_new, v_new, bd_new, t_used)) = accepted else {
            status = Status::Stalled;
            break;
        };

        let g_new = grad(&xi_new, &v_new)?;
        // Safeguarded Barzilai-Borwein step for the next iteration; the
        // growth clamp keeps rounding noise in the curvature pairing from
        // throwing the trial step orders of magnitude off near stationarity.
        let dx: Vec<f64> = xi_new.iter().zip(&xi).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_new.values.iter().zip(&g.values).map(|(a, b)| a - b).collect();
        let denom = pair(&dx, &dg);
        let numer = pair(&dx, &dx);
        step = if denom > 0.0 && numer > 0.0 && (numer / denom).is_finite() {
            (numer / denom).clamp(1e-12, 1e12)
        } else {
            t_used / optim.backtrack
        };

        xi = xi_new;
        v_fields = v_new;
        breakdown = bd_new;
        g = g_new;
    }

    let xi = ParameterField {
        values: xi,
        bound: xi0.bound,
    };
    let kkt = kkt_check(rp, &xi, &g, cfg);
    let adjoint_state = adjoint::adjoint_state(rp, &xi, &v_fields, cfg.p)?;
    Ok(MinimiseResult {
        xi,
        v_fields,
        adjoint: adjoint_state,
        gradient: g,
        kkt,
        cost: breakdown,
        log,
        status,
        iterations,
    })
}

/// Per-stage comparison against an earlier exponent: the mean inequality
/// with the regularisation pinned at the current stage (provable, asserted)
/// and the naive same-exponent cost (diagnostic only).
#[derive(Clone, Debug, Serialize)]
pub struct CrossExponentRow {
    pub q: f64,
    pub hybrid_total: f64,
    pub naive_total: f64,
    /// `I_p - hybrid`; nonnegative up to roundoff.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiminfProxyRow {
    /// Comparison exponent (the stage's own).
    pub k: f64,
    pub xi_mu_moment: f64,
    pub final_norm_fk: f64,
    pub slack: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub p: f64,
    pub status: Status,
    pub iterations: usize,
    pub cost: CostBreakdown,
    pub i_inf: f64,
    /// `|I_p - I_inf| / I_inf` on this stage's iterate.
    pub gap_rel: Option<f64>,
    pub tv_mu: f64,
    pub tv_nu: f64,
    pub c_p: f64,
    pub mu_moments: Vec<f64>,
    pub nu_moments: Vec<f64>,
    pub kkt: KKTReport,
    pub cross_exponent: Vec<CrossExponentRow>,
    /// `integral xi d mu_p(xi)` and its provable floor.
    pub xi_mu_moment: f64,
    pub xi_fp_norm: f64,
    pub monitored_floor_margin: f64,
    pub liminf_proxy: Option<LiminfProxyRow>,
    pub xi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssertionRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationReport {
    pub schedule: Vec<f64>,
    pub alpha: f64,
    pub bound: f64,
    pub warm_start: bool,
    pub stages: Vec<StageRecord>,
    pub final_xi: Vec<f64>,
    pub final_i_inf: f64,
    /// Misfit part of the final-exponent cost at xi = 0 and at the final
    /// iterate, and the induced reduction.
    pub misfit_initial: f64,
    pub misfit_final: f64,
    pub misfit_reduction: f64,
    pub assertions: Vec<AssertionRecord>,
}

/// Final-stage artifacts kept out of the serialised report.
pub struct FinalStage {
    pub p: f64,
    pub xi: ParameterField,
    pub v_fields: Vec<Vec<f64>>,
    pub psi_fields: Vec<Vec<f64>>,
    pub phi_fields: Vec<Vec<f64>>,
    pub c_p: f64,
}

pub struct ContinuationOutcome {
    pub report: ContinuationReport,
    pub final_stage: FinalStage,
    /// Per-stage optimisation logs, for the run CSV.
    pub stage_logs: Vec<Vec<IterRecord>>,
}

const MU_BATTERY: [fn([f64; 2]) -> f64; 4] = [
    |_| 1.0,
    |x| x[0],
    |x| x[1],
    |x| x[0] * x[1],
];
const NU_BATTERY: [fn([f64; 2]) -> [f64; 2]; 4] = [
    |_| [1.0, 0.0],
    |_| [0.0, 1.0],
    |x| [x[0], 0.0],
    |x| [0.0, x[1]],
];

/// Warm-started minimisation along a strictly increasing exponent schedule
/// with hard theorem checks per stage (total-variation bounds, the pinned-
/// regularisation cross-exponent inequality, the self-moment floor) and the
/// recorded limit diagnostics.
pub fn run_continuation(
    rp: &ReducedProblem,
    xi0: &ParameterField,
    schedule: &[f64],
    base: &CostConfig,
    optim: &OptimConfig,
    warm_start: bool,
) -> Result<ContinuationOutcome> {
    if schedule.is_empty() {
        return Err(Error::Optimize("empty exponent schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) || schedule[0] < 2.0 {
        return Err(Error::Optimize(
            "schedule must be strictly increasing with every exponent at least 2".into(),
        ));
    }
    let n_exp = rp.data.n() as f64;

    let mut assertions: Vec<AssertionRecord> = Vec::new();
    let push_assert = |assertions: &mut Vec<AssertionRecord>, name: &str, passed: bool, detail: String| -> Result<()> {
        assertions.push(AssertionRecord {
            name: name.into(),
            passed,
            detail: detail.clone(),
        });
        if !passed {
            return Err(Error::CheckFailure(format!("{name}: {detail}")));
        }
        Ok(())
    };

    let mut stages: Vec<StageRecord> = Vec::new();
    let mut stage_logs: Vec<Vec<IterRecord>> = Vec::new();
    let mut current = xi0.clone();
    let mut last_good: Option<MinimiseResult> = None;

    for &p in schedule {
        let cfg = base.with_p(p);
        let start = if warm_start || stages.is_empty() {
            current.clone()
        } else {
            xi0.clone()
        };
        let start_cost = {
            let (v, _) = rp.solve_v(&start)?;
            cost::eval_ip(rp, &v, &start, &cfg).total
        };

        let outcome = minimise_p(rp, &start, &cfg, optim);
        let (result, status) = match outcome {
            Ok(r) => {
                let s = r.status;
                (r, s)
            }
            Err(err) => {
                assertions.push(AssertionRecord {
                    name: format!("stage p={p} optimisation"),
                    passed: false,
                    detail: err.to_string(),
                });
                // proceed with the last good iterate
                let (v, _) = rp.solve_v(&current)?;
                let bd = cost::eval_ip(rp, &v, &current, &cfg);
                let adj = adjoint::adjoint_state(rp, &current, &v, p)?;
                let g = adjoint::reduced_gradient(rp, &current, &adj.psi_fields, &cfg);
                let kkt = kkt_check(rp, &current, &g, &cfg);
                (
                    MinimiseResult {
                        xi: current.clone(),
                        v_fields: v,
                        adjoint: adj,
                        gradient: g,
                        kkt,
                        cost: bd,
                        log: Vec::new(),
                        status: Status::Failed,
                        iterations: 0,
                    },
                    Status::Failed,
                )
            }
        };

        if status != Status::Failed {
            push_assert(
                &mut assertions,
                &format!("stage p={p} no warm-start regression"),
                result.cost.total <= start_cost * (1.0 + 1e-12) + 1e-12,
                format!("end {} vs start {}", result.cost.total, start_cost),
            )?;
        }

        let mu = cost::mu_density(&rp.space.mesh, &result.xi.values, p);
        let nu = cost::nu_density(rp, &result.v_fields, p);
        push_assert(
            &mut assertions,
            &format!("stage p={p} mu total variation"),
            mu.total_variation <= 1.0 + 1e-10,
            format!("TV(mu) = {}", mu.total_variation),
        )?;
        push_assert(
            &mut assertions,
            &format!("stage p={p} nu total variation"),
            nu.total_variation <= n_exp + 1e-10,
            format!("TV(nu) = {}", nu.total_variation),
        )?;

        let i_inf = cost::eval_iinf(rp, &result.v_fields, &result.xi, &cfg);
        let gap_rel = if i_inf > 0.0 {
            Some((result.cost.total - i_inf).abs() / i_inf)
        } else {
            None
        };

        // Cross-exponent comparisons against every earlier stage exponent.
        let mut cross = Vec::new();
        for q in schedule.iter().cloned().filter(|q| *q < p) {
            let hybrid = cost::eval_ip_hybrid(rp, &result.v_fields, &result.xi, &cfg, q);
            let naive = cost::eval_ip(rp, &result.v_fields, &result.xi, &cfg.with_p(q));
            let margin = result.cost.total - hybrid.total;
            push_assert(
                &mut assertions,
                &format!("stage p={p} mean inequality vs q={q}"),
                margin >= -1e-12 * result.cost.total.max(1.0),
                format!("I_p = {}, pinned-reg I_q = {}", result.cost.total, hybrid.total),
            )?;
            cross.push(CrossExponentRow {
                q,
                hybrid_total: hybrid.total,
                naive_total: naive.total,
                margin,
            });
        }

        // Self-moment floor: a finite-p theorem.
        let xi_mu_moment = cost::xi_self_moment(&rp.space.mesh, &result.xi.values, p);
        let xi_fp_norm = cost::lp_dot_norm_elements(&rp.space.mesh, &result.xi.values, p);
        let floor = xi_fp_norm - 1.0 / (p * p * xi_fp_norm);
        let monitored_floor_margin = xi_mu_moment - floor;
        push_assert(
            &mut assertions,
            &format!("stage p={p} xi self-moment floor"),
            monitored_floor_margin >= -1e-12,
            format!("moment {} vs floor {}", xi_mu_moment, floor),
        )?;

        let mu_moments: Vec<f64> = MU_BATTERY
            .iter()
            .map(|f| cost::mu_moment(&rp.space.mesh, &mu, f))
            .collect();
        let nu_moments: Vec<f64> = NU_BATTERY
            .iter()
            .map(|f| cost::nu_moment(rp, &nu, f))
            .collect();

        stage_logs.push(result.log.clone());
        stages.push(StageRecord {
            p,
            status,
            iterations: result.iterations,
            cost: result.cost.clone(),
            i_inf,
            gap_rel,
            tv_mu: mu.total_variation,
            tv_nu: nu.total_variation,
            c_p: result.adjoint.c_p,
            mu_moments,
            nu_moments,
            kkt: result.kkt.clone(),
            cross_exponent: cross,
            xi_mu_moment,
            xi_fp_norm,
            monitored_floor_margin,
            liminf_proxy: None,
            xi: result.xi.values.clone(),
        });

        current = result.xi.clone();
        last_good = Some(result);
    }

    let last = last_good.ok_or_else(|| Error::Optimize("no stage completed".into()))?;
    let p_last = *schedule.last().unwrap();
    let cfg_last = base.with_p(p_last);

    // Liminf surrogate per stage: the stage self-moment against the final
    // iterate's pinned norm at the stage exponent. Recorded, not asserted;
    // early stages may fall short.
    let final_vals = last.xi.values.clone();
    for stage in stages.iter_mut() {
        let k = stage.p;
        let final_norm = cost::lp_dot_norm_elements(&rp.space.mesh, &final_vals, k);
        let slack = 1.0 / k + 1.0 / (stage.p * stage.p * stage.xi_fp_norm.max(1.0 / stage.p));
        stage.liminf_proxy = Some(LiminfProxyRow {
            k,
            xi_mu_moment: stage.xi_mu_moment,
            final_norm_fk: final_norm,
            slack,
            satisfied: stage.xi_mu_moment >= final_norm - slack,
        });
    }

    // Conditional vanishing-multiplier branch: if the multiplier norms
    // collapse under Tykhonov weighting, the final iterate must vanish.
    if base.alpha > 0.0 {
        let c_max = stages.iter().map(|s| s.c_p).fold(0.0_f64, f64::max);
        let c_last = stages.last().unwrap().c_p;
        if c_last <= 1e-8 * c_max.max(1.0) {
            let max_xi = last.xi.max_value();
            push_assert(
                &mut assertions,
                "vanishing multipliers force vanishing xi",
                max_xi <= 1e-6,
                format!("C_p collapsed to {c_last} but max xi = {max_xi}"),
            )?;
        }
    }

    // Misfit reduction measured with the final-stage functional.
    let zero = ParameterField::zeros(rp.n_elements(), xi0.bound);
    let (v_zero, _) = rp.solve_v(&zero)?;
    let misfit_initial: f64 = cost::eval_ip(rp, &v_zero, &zero, &cfg_last)
        .misfits
        .iter()
        .sum();
    let misfit_final: f64 = last.cost.misfits.iter().sum();
    let misfit_reduction = if misfit_initial > 0.0 {
        1.0 - misfit_final / misfit_initial
    } else {
        0.0
    };

    let final_i_inf = cost::eval_iinf(rp, &last.v_fields, &last.xi, &cfg_last);
    let report = ContinuationReport {
        schedule: schedule.to_vec(),
        alpha: base.alpha,
        bound: base.bound,
        warm_start,
        stages,
        final_xi: last.xi.values.clone(),
        final_i_inf,
        misfit_initial,
        misfit_final,
        misfit_reduction,
        assertions,
    };
    let final_stage = FinalStage {
        p: p_last,
        xi: last.xi,
        v_fields: last.v_fields,
        psi_fields: last.adjoint.psi_fields,
        phi_fields: last.adjoint.phi_fields,
        c_p: last.adjoint.c_p,
    };
    Ok(ContinuationOutcome {
        report,
        final_stage,
        stage_logs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitRelationRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Signed residual `lhs - rhs`; the inequality rows require it above
    /// `-tolerance`, the equality rows require |residual| below tolerance.
    pub residual: f64,
    pub relative: f64,
    pub required: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitRelationsReport {
    pub c_p: f64,
    pub skipped: bool,
    pub note: String,
    pub rows: Vec<LimitRelationRow>,
    pub passed: bool,
}

/// Rescaled limit relations at the final stage: the two adjoint identities
/// divided by the multiplier norm (exact at finite p) and the variational
/// inequality against battery directions, with the self-moment of xi as the
/// supremal-norm surrogate on the right-hand side.
pub fn verify_limit_relations(
    rp: &ReducedProblem,
    fin: &FinalStage,
    base: &CostConfig,
) -> LimitRelationsReport {
    let c = fin.c_p;
    if c <= 0.0 {
        return LimitRelationsReport {
            c_p: c,
            skipped: true,
            note: "multiplier norm is zero: vanishing-multiplier branch, relations skipped".into(),
            rows: Vec::new(),
            passed: true,
        };
    }
    let cfg = base.with_p(fin.p);
    let tol = 1e-6;
    let nu = cost::nu_density(rp, &fin.v_fields, fin.p);
    let scaled_psi: Vec<Vec<f64>> = fin
        .psi_fields
        .iter()
        .map(|f| f.iter().map(|v| v / c).collect())
        .collect();
    let scaled_phi: Vec<Vec<f64>> = fin
        .phi_fields
        .iter()
        .map(|f| f.iter().map(|v| v / c).collect())
        .collect();

    let mut rows = Vec::new();

    for (k, w_fn) in NU_BATTERY.iter().enumerate() {
        let w = rp.space.interpolate(|x| w_fn(x));
        let w_fields: Vec<Vec<f64>> = (0..rp.data.n()).map(|_| w.clone()).collect();
        let (lhs_unscaled, _) = adjoint::identity_v_sides(rp, &nu, &fin.psi_fields, &w_fields);
        let lhs = lhs_unscaled / c;
        let mut rhs = 0.0;
        for (psi, wf) in scaled_psi.iter().zip(&w_fields) {
            let aw = rp.mat_v.matvec(wf);
            rhs += aw.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>();
        }
        let residual = lhs - rhs;
        let relative = residual.abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        rows.push(LimitRelationRow {
            name: format!("rescaled misfit-measure identity, test {k}"),
            lhs,
            rhs,
            residual,
            relative,
            required: true,
            passed: relative <= tol,
        });
    }

    for (k, z_fn) in NU_BATTERY.iter().enumerate() {
        let z = rp.space.interpolate(|x| z_fn(x));
        let z_fields: Vec<Vec<f64>> = (0..rp.data.n()).map(|_| z.clone()).collect();
        let (lhs, rhs) =
            adjoint::identity_u_sides(rp, &fin.xi, &scaled_psi, &scaled_phi, &z_fields);
        let residual = lhs - rhs;
        let relative = residual.abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        rows.push(LimitRelationRow {
            name: format!("rescaled coupling identity, test {k}"),
            lhs,
            rhs,
            residual,
            relative,
            required: true,
            passed: relative <= tol,
        });
    }

    // Variational inequality rows against nonnegative battery fields.
    let mu = cost::mu_density(&rp.space.mesh, &fin.xi.values, fin.p);
    let coupling_g = adjoint::reduced_gradient(
        rp,
        &fin.xi,
        &fin.psi_fields,
        &CostConfig {
            alpha: 0.0,
            bound: 1.0,
            p: fin.p,
        },
    );
    let xi_mu = cost::xi_self_moment(&rp.space.mesh, &fin.xi.values, fin.p);
    let rhs_vi = base.alpha / c * xi_mu;
    let eta_cap = base.bound.min(1.0);
    let mesh = &rp.space.mesh;
    let centroids: Vec<[f64; 2]> = (0..mesh.n_triangles())
        .map(|e| {
            let t = mesh.triangles[e];
            [
                (mesh.vertices[t[0]][0] + mesh.vertices[t[1]][0] + mesh.vertices[t[2]][0]) / 3.0,
                (mesh.vertices[t[0]][1] + mesh.vertices[t[1]][1] + mesh.vertices[t[2]][1]) / 3.0,
            ]
        })
        .collect();
    for (k, eta_fn) in MU_BATTERY.iter().enumerate() {
        let eta: Vec<f64> = centroids
            .iter()
            .map(|x| (eta_fn(*x) * eta_cap).clamp(0.0, base.bound))
            .collect();
        let mut lhs = 0.0;
        for e in 0..mesh.n_triangles() {
            lhs += mesh.tri_areas[e]
                * (base.alpha / c * eta[e] * mu.values[e]
                    + (eta[e] - fin.xi.values[e]) * coupling_g.values[e] / c);
        }
        let residual = lhs - rhs_vi;
        rows.push(LimitRelationRow {
            name: format!("rescaled variational inequality, test {k}"),
            lhs,
            rhs: rhs_vi,
            residual,
            relative: residual / rhs_vi.abs().max(1.0),
            required: true,
            passed: residual >= -tol * (1.0 + rhs_vi.abs()),
        });
    }

    // Supremal-norm variant recorded for comparison; the plateau deficit
    // makes it fail at finite p, so it is not required.
    let rhs_sup = base.alpha / c * fin.xi.max_value();
    rows.push(LimitRelationRow {
        name: "variational inequality vs literal sup norm (diagnostic)".into(),
        lhs: rhs_vi,
        rhs: rhs_sup,
        residual: rhs_vi - rhs_sup,
        relative: (rhs_vi - rhs_sup) / rhs_sup.abs().max(1.0),
        required: false,
        passed: rhs_vi - rhs_sup >= -tol,
    });

    let passed = rows.iter().filter(|r| r.required).all(|r| r.passed);
    let _ = cfg;
    LimitRelationsReport {
        c_p: c,
        skipped: false,
        note: String::new(),
        rows,
        passed,
    }
}
