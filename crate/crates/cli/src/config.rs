//! Experiment configuration: JSON schema, validation and translation into
//! the solver-side objects.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fotinv_core::assembly::DiscreteSpace;
use fotinv_core::coefficients::{
    build_fot, CoefficientSet, CouplingField, FOTModel, MatrixField, RotationField,
};
use fotinv_core::cost::CostConfig;
use fotinv_core::forward::{Experiment, ParameterField, ProblemData, ReducedProblem};
use fotinv_core::mesh::{build_rectangle_mesh, tag_patches, Mesh, PatchSpec};
use fotinv_core::optimize::OptimConfig;

use crate::error::CliError;
use crate::expr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpecConfig {
    pub tag: String,
    pub side: String,
    pub interval: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// Constant isotropic diffusions and constant reaction/coupling terms.
    Constant {
        a: f64,
        b: f64,
        k1: f64,
        k2: f64,
        l1: f64,
        l2: f64,
        m: [[f64; 2]; 2],
    },
    /// Frequency-domain optical model with frozen absorption reference.
    Fot {
        mu_ai: f64,
        mu_s_prime: f64,
        omega: f64,
        c: f64,
        phi_q: f64,
        tau: f64,
        #[serde(default)]
        xi_ref: f64,
    },
    /// Constant base values overridden inside axis-aligned rectangles.
    Piecewise {
        a: f64,
        b: f64,
        k1: f64,
        k2: f64,
        l1: f64,
        l2: f64,
        m: [[f64; 2]; 2],
        overrides: Vec<PiecewiseOverride>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseOverride {
    /// x0, x1, y0, y1.
    pub rect: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Two expressions in the grammar (components of the volume source).
    pub volume_source: [String; 2],
    pub boundary_source: [String; 2],
    pub patch: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Box {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        inside: f64,
        #[serde(default)]
        outside: f64,
    },
    Expr {
        expr: String,
    },
}

impl FieldSpec {
    /// Element values at centroids.
    pub fn resolve(&self, mesh: &Mesh) -> Result<Vec<f64>, CliError> {
        let eval: Box<dyn Fn([f64; 2]) -> f64> = match self {
            FieldSpec::Constant { value } => {
                let v = *value;
                Box::new(move |_| v)
            }
            FieldSpec::Box {
                x0,
                x1,
                y0,
                y1,
                inside,
                outside,
            } => {
                let (x0, x1, y0, y1, inside, outside) = (*x0, *x1, *y0, *y1, *inside, *outside);
                Box::new(move |p: [f64; 2]| {
                    if p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1 {
                        inside
                    } else {
                        outside
                    }
                })
            }
            FieldSpec::Expr { expr } => {
                let parsed = expr::parse(expr)
                    .map_err(|e| CliError::Config(format!("xi field: {e}")))?;
                Box::new(move |p: [f64; 2]| parsed.eval(p))
            }
        };
        Ok((0..mesh.n_triangles())
            .map(|e| {
                let t = mesh.triangles[e];
                let cx = (mesh.vertices[t[0]][0] + mesh.vertices[t[1]][0] + mesh.vertices[t[2]][0])
                    / 3.0;
                let cy = (mesh.vertices[t[0]][1] + mesh.vertices[t[1]][1] + mesh.vertices[t[2]][1])
                    / 3.0;
                eval([cx, cy])
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictionSpec {
    /// One expression pair per experiment, sampled on the patch.
    Analytic { fields: Vec<[String; 2]> },
    /// Traces of a forward solve at a ground-truth absorption field, with
    /// optional seeded uniform noise of the given amplitude on the samples.
    InverseCrime {
        xi: FieldSpec,
        #[serde(default)]
        noise: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub alpha: f64,
    /// Omit for the Tykhonov regime (unbounded xi).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSpec {
    pub step0: f64,
    pub backtrack: f64,
    pub armijo_c1: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OptimSpec {
    fn default() -> Self {
        OptimSpec {
            step0: 1.0,
            backtrack: 0.5,
            armijo_c1: 1e-4,
            max_iter: 5000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSpec {
    pub ps: Vec<f64>,
    pub directions: usize,
    pub step: f64,
    pub tol: f64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec {
            ps: vec![2.0, 6.0, 10.0],
            directions: 5,
            step: 1e-5,
            tol: 1e-5,
        }
    }
}

fn default_gamma() -> f64 {
    0.5
}
fn default_a0() -> f64 {
    0.01
}
fn default_m() -> f64 {
    4.0
}
fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_a0")]
    pub a0: f64,
    pub patches: Vec<PatchSpecConfig>,
    pub experiments: Vec<ExperimentSpec>,
    pub prediction: PredictionSpec,
    pub cost: CostSpec,
    #[serde(default = "default_m")]
    pub m_exponent: f64,
    pub schedule: Vec<f64>,
    #[serde(default)]
    pub optimizer: OptimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<FieldSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Extra mesh resolutions for the forward convergence table.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinements: Vec<usize>,
    #[serde(default)]
    pub gradcheck: GradcheckSpec,
}

impl ExperimentConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| CliError::Config(format!("config field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("config serialises");
        out.push(b'\n');
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiments.is_empty() {
            return Err(CliError::Config("experiments must be non-empty".into()));
        }
        if self.schedule.is_empty() {
            return Err(CliError::Config("schedule must be non-empty".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) || self.schedule[0] < 2.0 {
            return Err(CliError::Config(
                "schedule must be strictly increasing with every exponent at least 2".into(),
            ));
        }
        let tykhonov = self.cost.alpha > 0.0 && self.cost.bound.is_none();
        let boxed = self.cost.alpha == 0.0 && self.cost.bound.is_some();
        if !(tykhonov ^ boxed) {
            return Err(CliError::Config(format!(
                "cost must use exactly one regime: alpha = {}, bound = {:?}",
                self.cost.alpha, self.cost.bound
            )));
        }
        if let Some(b) = self.cost.bound {
            if !(b > 0.0) {
                return Err(CliError::Config(format!("bound must be positive, got {b}")));
            }
        }
        if let PredictionSpec::Analytic { fields } = &self.prediction {
            if fields.len() != self.experiments.len() {
                return Err(CliError::Config(format!(
                    "prediction.fields has {} entries for {} experiments",
                    fields.len(),
                    self.experiments.len()
                )));
            }
        }
        for (i, e) in self.experiments.iter().enumerate() {
            if !self.patches.iter().any(|p| p.tag == e.patch) {
                return Err(CliError::Config(format!(
                    "experiments[{i}].patch `{}` is not declared in patches",
                    e.patch
                )));
            }
        }
        Ok(())
    }

    pub fn bound(&self) -> f64 {
        self.cost.bound.unwrap_or(f64::INFINITY)
    }

    pub fn cost_config(&self) -> CostConfig {
        CostConfig {
            alpha: self.cost.alpha,
            bound: self.bound(),
            p: *self.schedule.last().unwrap(),
        }
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            step0: self.optimizer.step0,
            backtrack: self.optimizer.backtrack,
            armijo_c1: self.optimizer.armijo_c1,
            max_iter: self.optimizer.max_iter,
            tol: self.optimizer.tol,
        }
    }

    pub fn build_mesh(&self, nx: usize, ny: usize) -> Result<Mesh, CliError> {
        let mesh = build_rectangle_mesh(nx, ny, self.mesh.width, self.mesh.height)?;
        let specs: Vec<PatchSpec> = self
            .patches
            .iter()
            .map(|p| PatchSpec {
                tag: p.tag.clone(),
                side: p.side.clone(),
                interval: p.interval,
            })
            .collect();
        Ok(tag_patches(mesh, &specs)?)
    }

    pub fn build_coefficients(&self) -> Result<CoefficientSet, CliError> {
        let mut set = match &self.coefficients {
            CoefficientSpec::Constant {
                a,
                b,
                k1,
                k2,
                l1,
                l2,
                m,
            } => CoefficientSet {
                a: MatrixField::isotropic(*a),
                b: MatrixField::isotropic(*b),
                k: RotationField::constant(*k1, *k2),
                l: RotationField::constant(*l1, *l2),
                m: CouplingField::constant(*m),
                gamma: self.gamma,
                a0: self.a0,
            },
            CoefficientSpec::Fot {
                mu_ai,
                mu_s_prime,
                omega,
                c,
                phi_q,
                tau,
                xi_ref,
            } => {
                let model = FOTModel {
                    mu_ai: *mu_ai,
                    mu_s_prime: *mu_s_prime,
                    omega: *omega,
                    c: *c,
                    phi_q: *phi_q,
                    tau: *tau,
                    xi_ref: *xi_ref,
                };
                build_fot(&model, self.a0)?
            }
            CoefficientSpec::Piecewise {
                a,
                b,
                k1,
                k2,
                l1,
                l2,
                m,
                overrides,
            } => {
                let mk = |base: f64, pick: fn(&PiecewiseOverride) -> Option<f64>| {
                    let rects: Vec<([f64; 4], f64)> = overrides
                        .iter()
                        .filter_map(|o| pick(o).map(|v| (o.rect, v)))
                        .collect();
                    move |p: [f64; 2]| {
                        let mut val = base;
                        for (r, v) in &rects {
                            if p[0] >= r[0] && p[0] <= r[1] && p[1] >= r[2] && p[1] <= r[3] {
                                val = *v;
                            }
                        }
                        val
                    }
                };
                let fa = mk(*a, |o| o.a);
                let fb = mk(*b, |o| o.b);
                let fk1 = mk(*k1, |o| o.k1);
                let fk2 = mk(*k2, |o| o.k2);
                let fl1 = mk(*l1, |o| o.l1);
                let fl2 = mk(*l2, |o| o.l2);
                CoefficientSet {
                    a: MatrixField::isotropic_fn(fa),
                    b: MatrixField::isotropic_fn(fb),
                    k: RotationField::new(fk1, fk2),
                    l: RotationField::new(fl1, fl2),
                    m: CouplingField::constant(*m),
                    gamma: self.gamma,
                    a0: self.a0,
                }
            }
        };
        set.gamma = self.gamma;
        set.a0 = self.a0;
        Ok(set)
    }

    fn build_experiments(&self, space: &DiscreteSpace) -> Result<Vec<Experiment>, CliError> {
        let mut out = Vec::with_capacity(self.experiments.len());
        for spec in &self.experiments {
            let (v1, v2) = expr::parse_pair(&spec.volume_source)
                .map_err(|e| CliError::Config(format!("volume_source: {e}")))?;
            let (b1, b2) = expr::parse_pair(&spec.boundary_source)
                .map_err(|e| CliError::Config(format!("boundary_source: {e}")))?;
            let rule = space.mesh.boundary_quadrature(&spec.patch)?;
            out.push(Experiment {
                volume_source: Arc::new(move |p| [v1.eval(p), v2.eval(p)]),
                boundary_source: Arc::new(move |p| [b1.eval(p), b2.eval(p)]),
                patch: spec.patch.clone(),
                prediction: vec![[0.0, 0.0]; rule.points.len()],
            });
        }
        Ok(out)
    }

    /// Ground-truth absorption field for inverse-crime predictions, when
    /// configured.
    pub fn ground_truth(&self, mesh: &Mesh) -> Result<Option<ParameterField>, CliError> {
        match &self.prediction {
            PredictionSpec::InverseCrime { xi, .. } => {
                let values = xi.resolve(mesh)?;
                let field = ParameterField::new(values, self.bound())
                    .map_err(|e| CliError::Config(format!("ground-truth xi: {e}")))?;
                Ok(Some(field))
            }
            PredictionSpec::Analytic { .. } => Ok(None),
        }
    }

    pub fn initial_xi(&self, mesh: &Mesh) -> Result<ParameterField, CliError> {
        match &self.xi0 {
            Some(spec) => {
                let values = spec.resolve(mesh)?;
                ParameterField::new(values, self.bound())
                    .map_err(|e| CliError::Config(format!("xi0: {e}")))
            }
            None => Ok(ParameterField::zeros(mesh.n_triangles(), self.bound())),
        }
    }

    /// Builds the fully-wired problem at the configured resolution: solves
    /// for the cached state fields and installs the predictions (analytic
    /// samples, or forward traces at the ground truth plus seeded noise).
    pub fn build_problem(&self, seed: u64) -> Result<BuiltProblem, CliError> {
        self.build_problem_at(self.mesh.nx, self.mesh.ny, seed)
    }

    pub fn build_problem_at(
        &self,
        nx: usize,
        ny: usize,
        seed: u64,
    ) -> Result<BuiltProblem, CliError> {
        let mesh = self.build_mesh(nx, ny)?;
        let coeffs = self.build_coefficients()?;
        let space = DiscreteSpace::new(Arc::new(mesh));
        let experiments = self.build_experiments(&space)?;
        let data = ProblemData {
            experiments,
            m_exponent: self.m_exponent,
        };
        let mut rp = ReducedProblem::new(space, coeffs, data)?;

        let mut truth = None;
        let mut noise_applied = 0.0;
        match &self.prediction {
            PredictionSpec::Analytic { fields } => {
                for (i, pair) in fields.iter().enumerate() {
                    let (e1, e2) = expr::parse_pair(pair)
                        .map_err(|e| CliError::Config(format!("prediction[{i}]: {e}")))?;
                    let samples: Vec<[f64; 2]> = rp.patch_rules[i]
                        .points
                        .iter()
                        .map(|q| [e1.eval(q.xy), e2.eval(q.xy)])
                        .collect();
                    rp.data.experiments[i].prediction = samples;
                }
            }
            PredictionSpec::InverseCrime { xi, noise } => {
                let values = xi.resolve(&rp.space.mesh)?;
                let field = ParameterField::new(values, self.bound())
                    .map_err(|e| CliError::Config(format!("ground-truth xi: {e}")))?;
                let (v, _) = rp.solve_v(&field)?;
                rp.set_predictions_from_traces(&v);
                if *noise > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    for exp in rp.data.experiments.iter_mut() {
                        for s in exp.prediction.iter_mut() {
                            for c in s.iter_mut() {
                                *c += noise * (2.0 * rng.random::<f64>() - 1.0);
                            }
                        }
                    }
                    noise_applied = *noise;
                }
                truth = Some(field);
            }
        }
        Ok(BuiltProblem {
            rp,
            truth,
            noise_applied,
        })
    }
}

pub struct BuiltProblem {
    pub rp: ReducedProblem,
    pub truth: Option<ParameterField>,
    pub noise_applied: f64,
}
