//! Coefficient fields of the coupled Robin systems: diffusion tensors,
//! rotation-form reaction matrices, the fluorophore coupling matrix, the
//! Robin weight and the ellipticity band `[a0, 1/a0]`, plus the frequency-
//! domain diffusion model that produces them from optical parameters.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Symmetric 2x2 diffusion tensor field.
#[derive(Clone)]
pub struct MatrixField {
    eval: MatrixFn,
}

impl MatrixField {
    pub fn new(eval: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval) }
    }

    pub fn isotropic(value: f64) -> Self {
        Self::new(move |_| [[value, 0.0], [0.0, value]])
    }

    pub fn isotropic_fn(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |x| {
            let v = f(x);
            [[v, 0.0], [0.0, v]]
        })
    }

    pub fn at(&self, x: Point) -> [[f64; 2]; 2] {
        (self.eval)(x)
    }

    /// Eigenvalues of the (symmetrised) matrix at a point.
    pub fn eigenvalues_at(&self, x: Point) -> [f64; 2] {
        let m = self.at(x);
        let a = m[0][0];
        let d = m[1][1];
        let b = 0.5 * (m[0][1] + m[1][0]);
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d).powi(2) + b * b).sqrt();
        [mean - disc, mean + disc]
    }
}

/// Rotation-form reaction matrix `[[k1, -k2], [k2, k1]]` given by two
/// scalar fields.
#[derive(Clone)]
pub struct RotationField {
    k1: ScalarFn,
    k2: ScalarFn,
}

impl RotationField {
    pub fn new(
        k1: impl Fn(Point) -> f64 + Send + Sync + 'static,
        k2: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            k1: Arc::new(k1),
            k2: Arc::new(k2),
        }
    }

    pub fn constant(k1: f64, k2: f64) -> Self {
        Self::new(move |_| k1, move |_| k2)
    }

    pub fn k1_at(&self, x: Point) -> f64 {
        (self.k1)(x)
    }

    pub fn k2_at(&self, x: Point) -> f64 {
        (self.k2)(x)
    }

    pub fn apply(&self, x: Point, u: [f64; 2]) -> [f64; 2] {
        let k1 = self.k1_at(x);
        let k2 = self.k2_at(x);
        [k1 * u[0] - k2 * u[1], k2 * u[0] + k1 * u[1]]
    }
}

/// Bounded 2x2 coupling matrix field.
#[derive(Clone)]
pub struct CouplingField {
    eval: MatrixFn,
}

impl CouplingField {
    pub fn new(eval: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval) }
    }

    pub fn constant(m: [[f64; 2]; 2]) -> Self {
        Self::new(move |_| m)
    }

    pub fn identity() -> Self {
        Self::constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn at(&self, x: Point) -> [[f64; 2]; 2] {
        (self.eval)(x)
    }

    pub fn apply(&self, x: Point, u: [f64; 2]) -> [f64; 2] {
        let m = self.at(x);
        [
            m[0][0] * u[0] + m[0][1] * u[1],
            m[1][0] * u[0] + m[1][1] * u[1],
        ]
    }

    pub fn apply_transpose(&self, x: Point, u: [f64; 2]) -> [f64; 2] {
        let m = self.at(x);
        [
            m[0][0] * u[0] + m[1][0] * u[1],
            m[0][1] * u[0] + m[1][1] * u[1],
        ]
    }

    /// Field evaluating to the transposed matrix.
    pub fn transposed(&self) -> CouplingField {
        let inner = self.eval.clone();
        CouplingField::new(move |x| {
            let m = inner(x);
            [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
        })
    }
}

/// The full coefficient set of the coupled systems.
#[derive(Clone)]
pub struct CoefficientSet {
    pub a: MatrixField,
    pub b: MatrixField,
    pub k: RotationField,
    pub l: RotationField,
    pub m: CouplingField,
    pub gamma: f64,
    pub a0: f64,
}

impl CoefficientSet {
    pub fn check_scalars(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Coefficients(format!(
                "gamma must be positive (got {})",
                self.gamma
            )));
        }
        if !(self.a0 > 0.0) {
            return Err(Error::Coefficients(format!(
                "a0 must be positive (got {})",
                self.a0
            )));
        }
        Ok(())
    }
}

/// One violation of the ellipticity/structure hypotheses at a quadrature point.
#[derive(Clone, Debug)]
pub struct Violation {
    pub point: Point,
    pub what: String,
}

/// Result of sweeping the coefficient hypotheses over all quadrature points.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub passed: bool,
    pub min_eigenvalue_a: f64,
    pub min_eigenvalue_b: f64,
    pub max_eigenvalue_a: f64,
    pub max_eigenvalue_b: f64,
    pub min_k1: f64,
    pub min_l1: f64,
    pub max_coupling_norm: f64,
    pub violations: Vec<Violation>,
}

/// Evaluates every coefficient field at all volume and boundary quadrature
/// points and checks the spectrum band `[a0, 1/a0]` for the diffusions and
/// the lower bounds on k1, l1. Returns a report; never aborts.
pub fn validate(coeffs: &CoefficientSet, mesh: &Mesh) -> ValidationReport {
    let mut report = ValidationReport {
        passed: true,
        min_eigenvalue_a: f64::INFINITY,
        min_eigenvalue_b: f64::INFINITY,
        max_eigenvalue_a: f64::NEG_INFINITY,
        max_eigenvalue_b: f64::NEG_INFINITY,
        min_k1: f64::INFINITY,
        min_l1: f64::INFINITY,
        max_coupling_norm: 0.0,
        violations: Vec::new(),
    };
    if coeffs.check_scalars().is_err() {
        report.passed = false;
        report.violations.push(Violation {
            point: [0.0, 0.0],
            what: "gamma or a0 not positive".into(),
        });
    }
    let a0 = coeffs.a0;
    let hi = 1.0 / a0;

    let vol = mesh.volume_quadrature(2);
    let bnd = mesh.whole_boundary_quadrature();
    let points: Vec<Point> = vol
        .points
        .iter()
        .map(|q| q.xy)
        .chain(bnd.points.iter().map(|q| q.xy))
        .collect();

    for &x in &points {
        let ea = coeffs.a.eigenvalues_at(x);
        let eb = coeffs.b.eigenvalues_at(x);
        report.min_eigenvalue_a = report.min_eigenvalue_a.min(ea[0]);
        report.max_eigenvalue_a = report.max_eigenvalue_a.max(ea[1]);
        report.min_eigenvalue_b = report.min_eigenvalue_b.min(eb[0]);
        report.max_eigenvalue_b = report.max_eigenvalue_b.max(eb[1]);
        if ea[0] < a0 || ea[1] > hi {
            report.violations.push(Violation {
                point: x,
                what: format!("spectrum of A at [{:.4},{:.4}] is [{:.6},{:.6}]", x[0], x[1], ea[0], ea[1]),
            });
        }
        if eb[0] < a0 || eb[1] > hi {
            report.violations.push(Violation {
                point: x,
                what: format!("spectrum of B at [{:.4},{:.4}] is [{:.6},{:.6}]", x[0], x[1], eb[0], eb[1]),
            });
        }
        let k1 = coeffs.k.k1_at(x);
        let l1 = coeffs.l.k1_at(x);
        report.min_k1 = report.min_k1.min(k1);
        report.min_l1 = report.min_l1.min(l1);
        if k1 < a0 {
            report.violations.push(Violation {
                point: x,
                what: format!("k1 = {k1:.6} < a0 at [{:.4},{:.4}]", x[0], x[1]),
            });
        }
        if l1 < a0 {
            report.violations.push(Violation {
                point: x,
                what: format!("l1 = {l1:.6} < a0 at [{:.4},{:.4}]", x[0], x[1]),
            });
        }
        let m = coeffs.m.at(x);
        let norm = (m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2)).sqrt();
        report.max_coupling_norm = report.max_coupling_norm.max(norm);
        if !norm.is_finite() {
            report.violations.push(Violation {
                point: x,
                what: "coupling matrix not finite".into(),
            });
        }
    }
    report.passed = report.passed && report.violations.is_empty();
    report
}

/// Optical parameters of the frequency-domain diffusion model.
#[derive(Clone, Copy, Debug)]
pub struct FOTModel {
    /// Absorption by endogenous chromophores, 1/length.
    pub mu_ai: f64,
    /// Reduced scattering, 1/length.
    pub mu_s_prime: f64,
    /// Modulation frequency, rad/time.
    pub omega: f64,
    /// Speed of light in the medium, length/time.
    pub c: f64,
    /// Fluorophore quantum efficiency, in (0, 1].
    pub phi_q: f64,
    /// Fluorophore lifetime, time.
    pub tau: f64,
    /// Reference dye level at which the frozen coefficients are evaluated.
    pub xi_ref: f64,
}

impl FOTModel {
    pub fn check(&self) -> Result<()> {
        // omega and tau may vanish (zero phase shift); the rest is strictly
        // positive and phi_q sits in (0, 1].
        if !(self.mu_ai > 0.0 && self.mu_s_prime > 0.0 && self.c > 0.0) {
            return Err(Error::Coefficients(
                "mu_ai, mu_s_prime and c must be strictly positive".into(),
            ));
        }
        if !(self.omega >= 0.0 && self.tau >= 0.0 && self.xi_ref >= 0.0) {
            return Err(Error::Coefficients(
                "omega, tau and xi_ref must be nonnegative".into(),
            ));
        }
        if !(self.phi_q > 0.0 && self.phi_q <= 1.0) {
            return Err(Error::Coefficients(format!(
                "phi_q must lie in (0,1] (got {})",
                self.phi_q
            )));
        }
        Ok(())
    }
}

/// Builds the frozen coefficient set from the optical model:
/// isotropic diffusion `1/(3(mu_ai + mu_s' + xi_ref))` for both systems,
/// reaction `k1 = mu_ai + xi_ref`, `k2 = omega/c`, and the coupling matrix
/// `phi_q/(1+(omega tau)^2) * [[1, -omega tau], [omega tau, 1]]`.
/// The Robin weight defaults to 0.5 and can be overridden afterwards.
pub fn build_fot(model: &FOTModel, a0: f64) -> Result<CoefficientSet> {
    model.check()?;
    let denom = 3.0 * (model.mu_ai + model.mu_s_prime + model.xi_ref);
    if denom == 0.0 {
        return Err(Error::Coefficients(
            "mu_ai + mu_s_prime + xi_ref must be nonzero".into(),
        ));
    }
    let diffusion = 1.0 / denom;
    let k1 = model.mu_ai + model.xi_ref;
    let k2 = model.omega / model.c;
    let wt = model.omega * model.tau;
    let scale = model.phi_q / (1.0 + wt * wt);
    let m = [[scale, -scale * wt], [scale * wt, scale]];
    Ok(CoefficientSet {
        a: MatrixField::isotropic(diffusion),
        b: MatrixField::isotropic(diffusion),
        k: RotationField::constant(k1, k2),
        l: RotationField::constant(k1, k2),
        m: CouplingField::constant(m),
        gamma: 0.5,
        a0,
    })
}

/// Convenience constructor for constant test coefficients.
pub fn constant_set(
    a_diag: f64,
    b_diag: f64,
    k: (f64, f64),
    l: (f64, f64),
    m: [[f64; 2]; 2],
    gamma: f64,
    a0: f64,
) -> CoefficientSet {
    CoefficientSet {
        a: MatrixField::isotropic(a_diag),
        b: MatrixField::isotropic(b_diag),
        k: RotationField::constant(k.0, k.1),
        l: RotationField::constant(l.0, l.1),
        m: CouplingField::constant(m),
        gamma,
        a0,
    }
}
