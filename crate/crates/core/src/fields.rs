//! Discrete norms and pointwise evaluation for P1 nodal fields.
//!
//! A nodal field is a `Vec<f64>` of length `2 * n_vertices` holding an
//! R^2-valued P1 function (vertex-major, component-minor). All integrals
//! use the order-2 volume rule and the 2-point Gauss boundary rule.

use crate::assembly::DiscreteSpace;
use crate::mesh::{BoundaryPoint, VolumePoint};

/// Value of a nodal field at a volume quadrature point.
#[inline]
pub fn value_at(space: &DiscreteSpace, field: &[f64], q: &VolumePoint) -> [f64; 2] {
    let tri = space.mesh.triangles[q.element];
    let mut out = [0.0; 2];
    for c in 0..2 {
        out[c] = q.bary[0] * field[space.dof(tri[0], c)]
            + q.bary[1] * field[space.dof(tri[1], c)]
            + q.bary[2] * field[space.dof(tri[2], c)];
    }
    out
}

/// Value of a nodal field at a boundary quadrature point.
#[inline]
pub fn boundary_value_at(space: &DiscreteSpace, field: &[f64], q: &BoundaryPoint) -> [f64; 2] {
    let [v0, v1] = q.vertices;
    let mut out = [0.0; 2];
    for c in 0..2 {
        out[c] = (1.0 - q.lambda) * field[space.dof(v0, c)] + q.lambda * field[space.dof(v1, c)];
    }
    out
}

/// Constant gradient of a nodal field on one element, rows = components.
#[inline]
pub fn gradient_on(space: &DiscreteSpace, field: &[f64], element: usize) -> [[f64; 2]; 2] {
    let tri = space.mesh.triangles[element];
    let grads = space.mesh.p1_gradients(element);
    let mut d = [[0.0; 2]; 2];
    for c in 0..2 {
        for k in 0..3 {
            let coeff = field[space.dof(tri[k], c)];
            d[c][0] += coeff * grads[k][0];
            d[c][1] += coeff * grads[k][1];
        }
    }
    d
}

pub fn l2_norm_sq(space: &DiscreteSpace, field: &[f64]) -> f64 {
    let rule = space.mesh.volume_quadrature(2);
    rule.points
        .iter()
        .map(|q| {
            let v = value_at(space, field, q);
            q.weight * (v[0] * v[0] + v[1] * v[1])
        })
        .sum()
}

pub fn h1_seminorm_sq(space: &DiscreteSpace, field: &[f64]) -> f64 {
    (0..space.mesh.n_triangles())
        .map(|e| {
            let d = gradient_on(space, field, e);
            let frob = d[0][0] * d[0][0] + d[0][1] * d[0][1] + d[1][0] * d[1][0] + d[1][1] * d[1][1];
            space.mesh.tri_areas[e] * frob
        })
        .sum()
}

pub fn boundary_l2_norm_sq(space: &DiscreteSpace, field: &[f64]) -> f64 {
    let rule = space.mesh.whole_boundary_quadrature();
    rule.points
        .iter()
        .map(|q| {
            let v = boundary_value_at(space, field, q);
            q.weight * (v[0] * v[0] + v[1] * v[1])
        })
        .sum()
}

/// Plain (unaveraged) Lq norm of a stack of nodal fields, the stack treated
/// as one field with 2N components.
pub fn lq_norm(space: &DiscreteSpace, fields: &[&[f64]], q_exp: f64) -> f64 {
    let rule = space.mesh.volume_quadrature(2);
    let mut acc = 0.0;
    for q in &rule.points {
        let mut n2 = 0.0;
        for f in fields {
            let v = value_at(space, f, q);
            n2 += v[0] * v[0] + v[1] * v[1];
        }
        acc += q.weight * n2.sqrt().powf(q_exp);
    }
    acc.powf(1.0 / q_exp)
}

/// Plain W^{1,q} norm of a stack of nodal fields:
/// `(integral |v|^q + |Dv|^q)^{1/q}` with Frobenius norms over the stack.
pub fn w1q_norm(space: &DiscreteSpace, fields: &[&[f64]], q_exp: f64) -> f64 {
    let rule = space.mesh.volume_quadrature(2);
    let mut acc = 0.0;
    for q in &rule.points {
        let mut n2 = 0.0;
        for f in fields {
            let v = value_at(space, f, q);
            n2 += v[0] * v[0] + v[1] * v[1];
        }
        acc += q.weight * n2.sqrt().powf(q_exp);
    }
    for e in 0..space.mesh.n_triangles() {
        let mut g2 = 0.0;
        for f in fields {
            let d = gradient_on(space, f, e);
            g2 += d[0][0] * d[0][0] + d[0][1] * d[0][1] + d[1][0] * d[1][0] + d[1][1] * d[1][1];
        }
        acc += space.mesh.tri_areas[e] * g2.sqrt().powf(q_exp);
    }
    acc.powf(1.0 / q_exp)
}

/// Plain Lq norm of an analytic R^2-valued function over the domain.
pub fn lq_norm_fn(space: &DiscreteSpace, f: impl Fn([f64; 2]) -> [f64; 2], q_exp: f64) -> f64 {
    let rule = space.mesh.volume_quadrature(2);
    let mut acc = 0.0;
    for q in &rule.points {
        let v = f(q.xy);
        acc += q.weight * (v[0] * v[0] + v[1] * v[1]).sqrt().powf(q_exp);
    }
    acc.powf(1.0 / q_exp)
}

/// Plain Lq norm of an analytic R^2-valued function over the boundary.
pub fn boundary_lq_norm_fn(
    space: &DiscreteSpace,
    f: impl Fn([f64; 2]) -> [f64; 2],
    q_exp: f64,
) -> f64 {
    let rule = space.mesh.whole_boundary_quadrature();
    let mut acc = 0.0;
    for q in &rule.points {
        let v = f(q.xy);
        acc += q.weight * (v[0] * v[0] + v[1] * v[1]).sqrt().powf(q_exp);
    }
    acc.powf(1.0 / q_exp)
}

/// L2 distance between a nodal field and an analytic function.
pub fn l2_error(space: &DiscreteSpace, field: &[f64], exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let rule = space.mesh.volume_quadrature(2);
    let mut acc = 0.0;
    for q in &rule.points {
        let v = value_at(space, field, q);
        let ex = exact(q.xy);
        acc += q.weight * ((v[0] - ex[0]).powi(2) + (v[1] - ex[1]).powi(2));
    }
    acc.sqrt()
}

/// Per-vertex plain-text dump: `vertex x y comp1 comp2` per line.
pub fn dump_field(space: &DiscreteSpace, field: &[f64]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for (v, &xy) in space.mesh.vertices.iter().enumerate() {
        let _ = writeln!(
            out,
            "{} {} {} {:.17e} {:.17e}",
            v,
            xy[0],
            xy[1],
            field[space.dof(v, 0)],
            field[space.dof(v, 1)]
        );
    }
    out
}
