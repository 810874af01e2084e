//! Command implementations shared by the binary and the test suite.

use std::path::Path;

use serde::Serialize;

use fotinv_core::adjoint;
use fotinv_core::cost;
use fotinv_core::fields;
use fotinv_core::forward::{estimate_check, ratios_stable, EstimateReport, ParameterField};
use fotinv_core::optimize::{self, IterRecord, Status};

use crate::config::{BuiltProblem, ExperimentConfig, PredictionSpec};
use crate::error::CliError;
use crate::output;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Forward,
    Gradcheck,
    Optimize,
    Continuation,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Gradcheck => "gradcheck",
            Command::Optimize => "optimize",
            Command::Continuation => "continuation",
        }
    }
}

pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub no_warm_start: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed_override: None,
            no_warm_start: false,
        }
    }
}

/// Loads the config, dispatches the command and writes every report under
/// the output directory.
pub fn run_command(
    command: Command,
    config_path: &Path,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<(), CliError> {
    let bytes = std::fs::read(config_path)?;
    let cfg = ExperimentConfig::from_json(&bytes)?;
    let seed = opts.seed_override.unwrap_or(cfg.seed);
    output::ensure_out_dirs(out_dir)?;
    let noise = match &cfg.prediction {
        PredictionSpec::InverseCrime { noise, .. } => *noise,
        _ => 0.0,
    };
    output::write_manifest(
        out_dir,
        command.name(),
        &bytes,
        seed,
        !opts.no_warm_start,
        noise,
    )?;
    match command {
        Command::Forward => cmd_forward(&cfg, seed, out_dir),
        Command::Gradcheck => cmd_gradcheck(&cfg, seed, out_dir),
        Command::Optimize => cmd_optimize(&cfg, seed, out_dir),
        Command::Continuation => cmd_continuation(&cfg, seed, out_dir, !opts.no_warm_start),
    }
}

fn dump_state_fields(
    built: &BuiltProblem,
    xi: &ParameterField,
    v_fields: &[Vec<f64>],
    out_dir: &Path,
) -> Result<(), CliError> {
    let space = &built.rp.space;
    for (i, u) in built.rp.u_fields.iter().enumerate() {
        output::write_text(
            &out_dir.join(format!("fields/u_{}.txt", i + 1)),
            &fields::dump_field(space, u),
        )?;
    }
    for (i, v) in v_fields.iter().enumerate() {
        output::write_text(
            &out_dir.join(format!("fields/v_{}.txt", i + 1)),
            &fields::dump_field(space, v),
        )?;
    }
    output::write_text(&out_dir.join("fields/xi.txt"), &xi.dump())?;
    output::write_text(&out_dir.join("fields/mesh.txt"), &space.mesh.dump())?;
    Ok(())
}

#[derive(Serialize)]
struct ForwardReport {
    estimate: EstimateReport,
    max_v_nodal: Vec<f64>,
    refinements: Vec<usize>,
    estimate_per_refinement: Vec<EstimateReport>,
    self_errors: Vec<f64>,
    self_rates: Vec<f64>,
    ratios_stable: bool,
}

fn cmd_forward(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let built = cfg.build_problem(seed)?;
    let xi = match &built.truth {
        Some(t) => t.clone(),
        None => cfg.initial_xi(&built.rp.space.mesh)?,
    };
    let (v_fields, _) = built.rp.solve_v(&xi)?;
    dump_state_fields(&built, &xi, &v_fields, out_dir)?;

    let p_last = *cfg.schedule.last().unwrap();
    let estimate = estimate_check(&built.rp, &xi, &v_fields, p_last);
    let max_v_nodal: Vec<f64> = v_fields
        .iter()
        .map(|v| v.iter().fold(0.0_f64, |a, b| a.max(b.abs())))
        .collect();

    // Optional convergence study across nested refinements.
    let mut estimate_per_refinement = Vec::new();
    let mut self_errors = Vec::new();
    let mut self_rates = Vec::new();
    let mut prev: Option<(usize, usize, BuiltProblem, ParameterField, Vec<Vec<f64>>)> = None;
    for &nx in &cfg.refinements {
        let ny = (nx * cfg.mesh.ny).div_euclid(cfg.mesh.nx).max(1);
        let built_r = cfg.build_problem_at(nx, ny, seed)?;
        let xi_r = match &built_r.truth {
            Some(t) => t.clone(),
            None => cfg.initial_xi(&built_r.rp.space.mesh)?,
        };
        let (v_r, _) = built_r.rp.solve_v(&xi_r)?;
        estimate_per_refinement.push(estimate_check(&built_r.rp, &xi_r, &v_r, p_last));

        if let Some((pnx, pny, pbuilt, _pxi, pv)) = &prev {
            if nx == 2 * pnx && ny == 2 * pny {
                // Restrict the fine u and v to the coarse vertices and
                // measure the coarse-mesh L2 difference.
                let coarse = &pbuilt.rp.space;
                let fine = &built_r.rp.space;
                let mut err2 = 0.0;
                for i in 0..built_r.rp.data.n() {
                    let mut diff = vec![0.0; coarse.ndofs];
                    for j in 0..=*pny {
                        for ii in 0..=*pnx {
                            let cv = j * (pnx + 1) + ii;
                            let fv = (2 * j) * (2 * pnx + 1) + 2 * ii;
                            for c in 0..2 {
                                diff[coarse.dof(cv, c)] = built_r.rp.u_fields[i]
                                    [fine.dof(fv, c)]
                                    - pbuilt.rp.u_fields[i][coarse.dof(cv, c)]
                                    + (v_r[i][fine.dof(fv, c)] - pv[i][coarse.dof(cv, c)]);
                            }
                        }
                    }
                    err2 += fields::l2_norm_sq(coarse, &diff);
                }
                self_errors.push(err2.sqrt());
            }
        }
        prev = Some((nx, ny, built_r, xi_r, v_r));
    }
    for w in self_errors.windows(2) {
        self_rates.push((w[0] / w[1]).log2());
    }

    let report = ForwardReport {
        estimate,
        max_v_nodal,
        refinements: cfg.refinements.clone(),
        estimate_per_refinement: estimate_per_refinement.clone(),
        self_errors,
        self_rates,
        ratios_stable: ratios_stable(&estimate_per_refinement, 0.2),
    };
    output::write_json(&out_dir.join("forward.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct GradcheckReport {
    rows: Vec<adjoint::GradCheckRow>,
    tol: f64,
    max_rel_err: f64,
    passed: bool,
}

fn cmd_gradcheck(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    use rand::{Rng, SeedableRng};
    let built = cfg.build_problem(seed)?;
    let xi0 = match &cfg.xi0 {
        Some(_) => cfg.initial_xi(&built.rp.space.mesh)?,
        // Interior default so central differences stay feasible.
        None => ParameterField::new(vec![0.3; built.rp.n_elements()], cfg.bound())
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let directions: Vec<Vec<f64>> = (0..cfg.gradcheck.directions)
        .map(|_| {
            (0..built.rp.n_elements())
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect()
        })
        .collect();
    let base = cost::CostConfig {
        alpha: cfg.cost.alpha,
        bound: cfg.bound(),
        p: cfg.gradcheck.ps[0],
    };
    let rows = adjoint::gradient_fd_check(
        &built.rp,
        &xi0,
        &base,
        &cfg.gradcheck.ps,
        &directions,
        cfg.gradcheck.step,
    )?;
    let max_rel_err = rows.iter().map(|r| r.rel_err).fold(0.0_f64, f64::max);
    let passed = max_rel_err <= cfg.gradcheck.tol;
    let report = GradcheckReport {
        rows,
        tol: cfg.gradcheck.tol,
        max_rel_err,
        passed,
    };
    output::write_json(&out_dir.join("gradcheck.json"), &report)?;
    if !passed {
        return Err(CliError::Check(format!(
            "gradient check failed: max relative error {max_rel_err:.3e} > {:.1e}",
            cfg.gradcheck.tol
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct OptimizeSummary {
    p: f64,
    status: Status,
    iterations: usize,
    total: f64,
    misfits: Vec<f64>,
    regulariser: f64,
    stationarity_residual: f64,
}

fn cmd_optimize(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let built = cfg.build_problem(seed)?;
    let xi0 = cfg.initial_xi(&built.rp.space.mesh)?;
    let p = *cfg.schedule.last().unwrap();
    let cost_cfg = cfg.cost_config().with_p(p);
    let result = optimize::minimise_p(&built.rp, &xi0, &cost_cfg, &cfg.optim_config())?;

    output::write_run_csv(&out_dir.join("run.csv"), &result.log, built.rp.data.n())?;
    output::write_json(&out_dir.join("kkt.json"), &result.kkt)?;
    dump_state_fields(&built, &result.xi, &result.v_fields, out_dir)?;
    output::write_json(
        &out_dir.join("optimize.json"),
        &OptimizeSummary {
            p,
            status: result.status,
            iterations: result.iterations,
            total: result.cost.total,
            misfits: result.cost.misfits.clone(),
            regulariser: result.cost.regulariser,
            stationarity_residual: result.kkt.stationarity_residual,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ContinuationDocument {
    report: optimize::ContinuationReport,
    limit_relations: optimize::LimitRelationsReport,
}

fn cmd_continuation(
    cfg: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    warm_start: bool,
) -> Result<(), CliError> {
    let built = cfg.build_problem(seed)?;
    let xi0 = cfg.initial_xi(&built.rp.space.mesh)?;
    let base = cfg.cost_config();
    let outcome = optimize::run_continuation(
        &built.rp,
        &xi0,
        &cfg.schedule,
        &base,
        &cfg.optim_config(),
        warm_start,
    )?;
    let limits = optimize::verify_limit_relations(&built.rp, &outcome.final_stage, &base);

    let mut log: Vec<IterRecord> = Vec::new();
    for stage_log in &outcome.stage_logs {
        log.extend(stage_log.iter().cloned());
    }
    output::write_run_csv(&out_dir.join("run.csv"), &log, built.rp.data.n())?;
    if let Some(stage) = outcome.report.stages.last() {
        output::write_json(&out_dir.join("kkt.json"), &stage.kkt)?;
    }
    let (v_final, _) = built.rp.solve_v(&outcome.final_stage.xi)?;
    dump_state_fields(&built, &outcome.final_stage.xi, &v_final, out_dir)?;

    let doc = ContinuationDocument {
        report: outcome.report,
        limit_relations: limits,
    };
    output::write_json(&out_dir.join("continuation.json"), &doc)?;

    let solver_stage_failed = doc
        .report
        .assertions
        .iter()
        .any(|a| !a.passed && a.name.contains("optimisation"));
    if solver_stage_failed {
        return Err(CliError::Solver(
            "one or more continuation stages failed; see continuation.json".into(),
        ));
    }
    if !doc.limit_relations.passed {
        return Err(CliError::Check(
            "limit relations failed; see continuation.json".into(),
        ));
    }
    Ok(())
}
