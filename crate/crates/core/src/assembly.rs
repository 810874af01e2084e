//! P1 vector-element assembly of the Robin bilinear form and its loads.
//!
//! Fields are valued in R^2; dofs are vertex-major, component-minor
//! (dof = 2*vertex + component). The volume rule is the order-2 three-point
//! rule, the boundary rule is 2-point Gauss per edge, so all P1 x P1
//! products with constant coefficients are integrated exactly and the
//! coercivity inequality holds at quadrature level.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::coefficients::{CouplingField, MatrixField, RotationField};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryRule, Mesh, Point};

pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type FluxFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// P1 space of R^2-valued fields over a mesh.
#[derive(Clone)]
pub struct DiscreteSpace {
    pub mesh: Arc<Mesh>,
    pub ndofs: usize,
}

impl DiscreteSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let ndofs = 2 * mesh.n_vertices();
        Self { mesh, ndofs }
    }

    #[inline]
    pub fn dof(&self, vertex: usize, comp: usize) -> usize {
        2 * vertex + comp
    }

    /// Nodal interpolant of an analytic field.
    pub fn interpolate(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndofs];
        for (v, &xy) in self.mesh.vertices.iter().enumerate() {
            let val = f(xy);
            out[2 * v] = val[0];
            out[2 * v + 1] = val[1];
        }
        out
    }
}

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed in
    /// sorted order, so the result does not depend on insertion order.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.values[k];
            }
        }
        0.0
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                triplets.push((self.col_idx[k], i, self.values[k]));
            }
        }
        CsrMatrix::from_triplets(self.n, triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.col_idx[k]] = self.values[k];
            }
        }
        d
    }

    /// Coordinate text format: `row col value` per line.
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let _ = writeln!(out, "{} {} {:.17e}", i, self.col_idx[k], self.values[k]);
            }
        }
        out
    }
}

/// Assembled operator or full system.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub load: Vec<f64>,
    pub ndofs: usize,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, load: Vec<f64>) -> Self {
        let ndofs = matrix.n;
        assert_eq!(load.len(), ndofs);
        SparseSystem { matrix, load, ndofs }
    }
}

/// Generalized Robin data: volume source f, flux source F and boundary
/// source g.
#[derive(Clone)]
pub struct GeneralRobinData {
    pub f: VectorFn,
    pub flux: FluxFn,
    pub g: VectorFn,
}

impl GeneralRobinData {
    pub fn new(
        f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        flux: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static,
        g: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            flux: Arc::new(flux),
            g: Arc::new(g),
        }
    }

    pub fn volume_only(f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self::new(f, |_| [[0.0; 2]; 2], |_| [0.0; 2])
    }

    pub fn zero() -> Self {
        Self::new(|_| [0.0; 2], |_| [[0.0; 2]; 2], |_| [0.0; 2])
    }
}

/// Assembles the operator matrix: volume diffusion + rotation reaction plus
/// the Robin boundary mass scaled by `gamma`. Row index is the test dof,
/// column index the trial dof; the matrix is non-symmetric whenever k2 is
/// not identically zero.
pub fn assemble_operator(
    space: &DiscreteSpace,
    diffusion: &MatrixField,
    reaction: &RotationField,
    gamma: f64,
) -> SparseSystem {
    let mesh = &space.mesh;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.n_triangles() * 36);

    let barys: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for e in 0..mesh.n_triangles() {
        let tri = mesh.triangles[e];
        let grads = mesh.p1_gradients(e);
        let pa = mesh.vertices[tri[0]];
        let pb = mesh.vertices[tri[1]];
        let pc = mesh.vertices[tri[2]];
        let w = mesh.tri_areas[e] / 3.0;
        for bary in barys {
            let x = [
                bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
                bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
            ];
            let a = diffusion.at(x);
            let k1 = reaction.k1_at(x);
            let k2 = reaction.k2_at(x);
            for t in 0..3 {
                for s in 0..3 {
                    let agt = [
                        a[0][0] * grads[t][0] + a[0][1] * grads[t][1],
                        a[1][0] * grads[t][0] + a[1][1] * grads[t][1],
                    ];
                    let diff = w * (grads[s][0] * agt[0] + grads[s][1] * agt[1]);
                    let mass = w * bary[s] * bary[t];
                    let (rt0, rt1) = (space.dof(tri[t], 0), space.dof(tri[t], 1));
                    let (cs0, cs1) = (space.dof(tri[s], 0), space.dof(tri[s], 1));
                    triplets.push((rt0, cs0, diff + k1 * mass));
                    triplets.push((rt1, cs1, diff + k1 * mass));
                    triplets.push((rt0, cs1, -k2 * mass));
                    triplets.push((rt1, cs0, k2 * mass));
                }
            }
        }
    }

    if gamma != 0.0 {
        let rule = mesh.whole_boundary_quadrature();
        for q in &rule.points {
            let basis = [1.0 - q.lambda, q.lambda];
            for t in 0..2 {
                for s in 0..2 {
                    let val = q.weight * gamma * basis[s] * basis[t];
                    for c in 0..2 {
                        triplets.push((
                            space.dof(q.vertices[t], c),
                            space.dof(q.vertices[s], c),
                            val,
                        ));
                    }
                }
            }
        }
    }

    let matrix = CsrMatrix::from_triplets(space.ndofs, triplets);
    let load = vec![0.0; space.ndofs];
    SparseSystem::new(matrix, load)
}

/// Load vector for the generalized data: volume `f . phi + F : D phi` plus
/// the boundary term `g . phi` over the whole boundary.
pub fn assemble_load(space: &DiscreteSpace, data: &GeneralRobinData) -> Vec<f64> {
    let mesh = &space.mesh;
    let mut load = vec![0.0; space.ndofs];

    let barys: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for e in 0..mesh.n_triangles() {
        let tri = mesh.triangles[e];
        let grads = mesh.p1_gradients(e);
        let pa = mesh.vertices[tri[0]];
        let pb = mesh.vertices[tri[1]];
        let pc = mesh.vertices[tri[2]];
        let w = mesh.tri_areas[e] / 3.0;
        for bary in barys {
            let x = [
                bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
                bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
            ];
            let fv = (data.f)(x);
            let flux = (data.flux)(x);
            for t in 0..3 {
                for c in 0..2 {
                    let val = w
                        * (fv[c] * bary[t]
                            + flux[c][0] * grads[t][0]
                            + flux[c][1] * grads[t][1]);
                    load[space.dof(tri[t], c)] += val;
                }
            }
        }
    }

    let rule = mesh.whole_boundary_quadrature();
    for q in &rule.points {
        let gv = (data.g)(q.xy);
        let basis = [1.0 - q.lambda, q.lambda];
        for t in 0..2 {
            for c in 0..2 {
                load[space.dof(q.vertices[t], c)] += q.weight * gv[c] * basis[t];
            }
        }
    }
    load
}

/// Coupling load: per test dof, the integral of `xi (M u) . phi` with
/// element-constant `xi` and P1 interpolant `u`. Negative `xi` entries are
/// rejected (the admissible class demands `0 <= xi`).
pub fn assemble_coupling_load(
    space: &DiscreteSpace,
    xi: &[f64],
    coupling: &CouplingField,
    u: &[f64],
) -> Result<Vec<f64>> {
    let mesh = &space.mesh;
    if xi.len() != mesh.n_triangles() {
        return Err(Error::Assembly(format!(
            "xi has {} entries, mesh has {} elements",
            xi.len(),
            mesh.n_triangles()
        )));
    }
    if let Some(bad) = xi.iter().find(|v| **v < 0.0) {
        return Err(Error::Assembly(format!(
            "xi must be nonnegative elementwise (found {bad})"
        )));
    }
    let mut load = vec![0.0; space.ndofs];
    accumulate_coupling(space, xi, coupling, u, |dof, val| load[dof] += val);
    Ok(load)
}

/// Direct evaluation of the pairing `integral xi (M z) . psi` with the same
/// quadrature as the coupling load.
pub fn coupling_pairing(
    space: &DiscreteSpace,
    xi: &[f64],
    coupling: &CouplingField,
    z: &[f64],
    psi: &[f64],
) -> f64 {
    let mut acc = 0.0;
    accumulate_coupling(space, xi, coupling, z, |dof, val| acc += val * psi[dof]);
    acc
}

fn accumulate_coupling(
    space: &DiscreteSpace,
    xi: &[f64],
    coupling: &CouplingField,
    u: &[f64],
    mut sink: impl FnMut(usize, f64),
) {
    let mesh = &space.mesh;
    let barys: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
    for e in 0..mesh.n_triangles() {
        if xi[e] == 0.0 {
            continue;
        }
        let tri = mesh.triangles[e];
        let pa = mesh.vertices[tri[0]];
        let pb = mesh.vertices[tri[1]];
        let pc = mesh.vertices[tri[2]];
        let w = mesh.tri_areas[e] / 3.0;
        for bary in barys {
            let x = [
                bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
                bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
            ];
            let uq = [
                bary[0] * u[space.dof(tri[0], 0)]
                    + bary[1] * u[space.dof(tri[1], 0)]
                    + bary[2] * u[space.dof(tri[2], 0)],
                bary[0] * u[space.dof(tri[0], 1)]
                    + bary[1] * u[space.dof(tri[1], 1)]
                    + bary[2] * u[space.dof(tri[2], 1)],
            ];
            let mu = coupling.apply(x, uq);
            for t in 0..3 {
                for c in 0..2 {
                    sink(space.dof(tri[t], c), xi[e] * w * mu[c] * bary[t]);
                }
            }
        }
    }
}

/// Boundary load from per-quadrature-point vector samples: per test dof,
/// the integral of `d . phi` over the rule's carrier, with `d` given at the
/// rule's points (sample order must match the rule).
pub fn assemble_boundary_samples_load(
    space: &DiscreteSpace,
    rule: &BoundaryRule,
    samples: &[[f64; 2]],
) -> Vec<f64> {
    assert_eq!(samples.len(), rule.points.len());
    let mut load = vec![0.0; space.ndofs];
    for (q, d) in rule.points.iter().zip(samples) {
        let basis = [1.0 - q.lambda, q.lambda];
        for t in 0..2 {
            for c in 0..2 {
                load[space.dof(q.vertices[t], c)] += q.weight * d[c] * basis[t];
            }
        }
    }
    load
}

/// Exact transpose; `(A x) . y == x . (A^T y)` up to roundoff.
pub fn transpose_system(sys: &SparseSystem) -> SparseSystem {
    SparseSystem::new(sys.matrix.transpose(), sys.load.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{constant_set, CouplingField, MatrixField, RotationField};
    use crate::mesh::build_rectangle_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(nx: usize, ny: usize) -> DiscreteSpace {
        DiscreteSpace::new(Arc::new(build_rectangle_mesh(nx, ny, 1.0, 1.0).unwrap()))
    }

    /// Independent dense per-element assembly used as an oracle: same weak
    /// form, re-derived from scratch with its own local basis evaluation.
    fn dense_oracle(
        space: &DiscreteSpace,
        diffusion: &MatrixField,
        reaction: &RotationField,
        gamma: f64,
    ) -> Vec<Vec<f64>> {
        let mesh = &space.mesh;
        let n = space.ndofs;
        let mut dense = vec![vec![0.0; n]; n];
        for e in 0..mesh.n_triangles() {
            let tri = mesh.triangles[e];
            let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertices[v]).collect();
            let area = mesh.tri_areas[e];
            // gradients from the inverse Jacobian, written out by hand
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let g = [
                [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
                [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
                [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
            ];
            let mids = [
                [0.5 * (p[0][0] + p[1][0]), 0.5 * (p[0][1] + p[1][1])],
                [0.5 * (p[1][0] + p[2][0]), 0.5 * (p[1][1] + p[2][1])],
                [0.5 * (p[2][0] + p[0][0]), 0.5 * (p[2][1] + p[0][1])],
            ];
            // barycentric values of the three vertices at each midpoint
            let lam = [
                [0.5, 0.5, 0.0],
                [0.0, 0.5, 0.5],
                [0.5, 0.0, 0.5],
            ];
            for (q, x) in mids.iter().enumerate() {
                let w = area / 3.0;
                let a = diffusion.at(*x);
                let k1 = reaction.k1_at(*x);
                let k2 = reaction.k2_at(*x);
                for t in 0..3 {
                    for s in 0..3 {
                        let diff = w
                            * (g[s][0] * (a[0][0] * g[t][0] + a[0][1] * g[t][1])
                                + g[s][1] * (a[1][0] * g[t][0] + a[1][1] * g[t][1]));
                        let mass = w * lam[q][s] * lam[q][t];
                        dense[2 * tri[t]][2 * tri[s]] += diff + k1 * mass;
                        dense[2 * tri[t] + 1][2 * tri[s] + 1] += diff + k1 * mass;
                        dense[2 * tri[t]][2 * tri[s] + 1] += -k2 * mass;
                        dense[2 * tri[t] + 1][2 * tri[s]] += k2 * mass;
                    }
                }
            }
        }
        if gamma != 0.0 {
            let gpts = [0.5 - 0.5 / 3.0_f64.sqrt(), 0.5 + 0.5 / 3.0_f64.sqrt()];
            for e in &mesh.boundary_edges {
                for &lam in &gpts {
                    let w = 0.5 * e.length * gamma;
                    let basis = [1.0 - lam, lam];
                    for t in 0..2 {
                        for s in 0..2 {
                            for c in 0..2 {
                                dense[2 * e.vertices[t] + c][2 * e.vertices[s] + c] +=
                                    w * basis[s] * basis[t];
                            }
                        }
                    }
                }
            }
        }
        dense
    }

    #[test]
    fn symmetric_data_gives_symmetric_matrix() {
        let sp = space(1, 1);
        let sys = assemble_operator(
            &sp,
            &MatrixField::isotropic(1.0),
            &RotationField::constant(1.0, 0.0),
            0.0,
        );
        let d = sys.matrix.to_dense();
        let mut gap = 0.0_f64;
        for i in 0..sp.ndofs {
            for j in 0..sp.ndofs {
                gap = gap.max((d[i][j] - d[j][i]).abs());
            }
        }
        assert!(gap <= 1e-14, "symmetry gap {gap}");
    }

    #[test]
    fn rotation_block_is_antisymmetric() {
        let sp = space(2, 2);
        let sys = assemble_operator(
            &sp,
            &MatrixField::isotropic(0.0),
            &RotationField::constant(0.0, 1.0),
            0.0,
        );
        let d = sys.matrix.to_dense();
        for i in 0..sp.ndofs {
            for j in 0..sp.ndofs {
                assert!((d[i][j] + d[j][i]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn constant_solution_and_dense_oracle() {
        let sp = space(2, 2);
        let a = MatrixField::isotropic(1.0);
        let k = RotationField::constant(1.0, 0.0);
        let gamma = 1.0;
        let sys = assemble_operator(&sp, &a, &k, gamma);

        // Against the independent dense assembly (18 dofs).
        let dense = dense_oracle(&sp, &a, &k, gamma);
        let sparse = sys.matrix.to_dense();
        for i in 0..sp.ndofs {
            for j in 0..sp.ndofs {
                assert!(
                    (dense[i][j] - sparse[i][j]).abs() <= 1e-13,
                    "entry ({i},{j}): {} vs {}",
                    sparse[i][j],
                    dense[i][j]
                );
            }
        }

        // Constant field (1,0): K u = (1,0) and gamma u = (1,0), so the
        // matrix applied to its interpolant reproduces that load.
        let w = sp.interpolate(|_| [1.0, 0.0]);
        let lhs = sys.matrix.matvec(&w);
        let data = GeneralRobinData::new(|_| [1.0, 0.0], |_| [[0.0; 2]; 2], |_| [1.0, 0.0]);
        let rhs = assemble_load(&sp, &data);
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn load_partition_of_unity_sums() {
        let sp = space(3, 3);
        let f_data = GeneralRobinData::volume_only(|_| [1.0, 0.0]);
        let load = assemble_load(&sp, &f_data);
        let sum_c0: f64 = (0..sp.mesh.n_vertices()).map(|v| load[2 * v]).sum();
        let sum_c1: f64 = (0..sp.mesh.n_vertices()).map(|v| load[2 * v + 1]).sum();
        assert!((sum_c0 - 1.0).abs() < 1e-14);
        assert!(sum_c1.abs() < 1e-15);

        let g_data = GeneralRobinData::new(|_| [0.0; 2], |_| [[0.0; 2]; 2], |_| [1.0, 0.0]);
        let load = assemble_load(&sp, &g_data);
        let sum_c0: f64 = (0..sp.mesh.n_vertices()).map(|v| load[2 * v]).sum();
        assert!((sum_c0 - 4.0).abs() < 1e-13);

        let flux_data = GeneralRobinData::new(
            |_| [0.0; 2],
            |_| [[1.0, 0.0], [0.0, 0.0]],
            |_| [0.0; 2],
        );
        let load = assemble_load(&sp, &flux_data);
        let total: f64 = load.iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn coupling_load_cases() {
        let sp = space(2, 2);
        let m = CouplingField::identity();
        let nelem = sp.mesh.n_triangles();
        let u = sp.interpolate(|_| [1.0, 0.0]);

        let zero = assemble_coupling_load(&sp, &vec![0.0; nelem], &m, &u).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));

        let ones = assemble_coupling_load(&sp, &vec![1.0; nelem], &m, &u).unwrap();
        let plain = assemble_load(&sp, &GeneralRobinData::volume_only(|_| [1.0, 0.0]));
        for (a, b) in ones.iter().zip(&plain) {
            assert!((a - b).abs() <= 1e-14);
        }

        // Indicator of a single element: only that element's vertices load.
        let mut xi = vec![0.0; nelem];
        xi[3] = 1.0;
        let load = assemble_coupling_load(&sp, &xi, &m, &u).unwrap();
        let tri = sp.mesh.triangles[3];
        for v in 0..sp.mesh.n_vertices() {
            let expected_zero = !tri.contains(&v);
            for c in 0..2 {
                let val = load[sp.dof(v, c)];
                if expected_zero {
                    assert_eq!(val, 0.0);
                }
            }
        }
        assert!(load[sp.dof(tri[0], 0)] > 0.0);

        assert!(assemble_coupling_load(&sp, &vec![-0.1; nelem], &m, &u).is_err());
    }

    #[test]
    fn transpose_cases() {
        // Symmetric matrix transposes to itself.
        let sp = space(2, 2);
        let sys = assemble_operator(
            &sp,
            &MatrixField::isotropic(1.0),
            &RotationField::constant(1.0, 0.0),
            1.0,
        );
        let t = transpose_system(&sys);
        let a = sys.matrix.to_dense();
        let b = t.matrix.to_dense();
        for i in 0..sp.ndofs {
            for j in 0..sp.ndofs {
                assert!((a[i][j] - b[i][j]).abs() <= 1e-15);
            }
        }

        // Hand-built 2x2 nilpotent block.
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0)]);
        let mt = m.transpose();
        assert_eq!(mt.get(1, 0), 1.0);
        assert_eq!(mt.get(0, 1), 0.0);

        // Duality identity with random vectors on a non-symmetric operator.
        let sys = assemble_operator(
            &sp,
            &MatrixField::isotropic(0.7),
            &RotationField::constant(1.0, 0.4),
            0.5,
        );
        let tsys = transpose_system(&sys);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..sp.ndofs).map(|_| rng.random::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..sp.ndofs).map(|_| rng.random::<f64>() - 0.5).collect();
            let ax = sys.matrix.matvec(&x);
            let aty = tsys.matrix.matvec(&y);
            let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn coercivity_at_quadrature_level() {
        let sp = space(4, 4);
        let coeffs = constant_set(
            1.0,
            1.0,
            (1.0, 0.3),
            (1.0, 0.0),
            [[1.0, 0.0], [0.0, 1.0]],
            0.5,
            0.5,
        );
        let sys = assemble_operator(&sp, &coeffs.a, &coeffs.k, coeffs.gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let w: Vec<f64> = (0..sp.ndofs).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let aw = sys.matrix.matvec(&w);
            let quad_form: f64 = aw.iter().zip(&w).map(|(a, b)| a * b).sum();
            let bound = coeffs.a0 * (crate::fields::h1_seminorm_sq(&sp, &w) + crate::fields::l2_norm_sq(&sp, &w))
                + coeffs.gamma * crate::fields::boundary_l2_norm_sq(&sp, &w);
            assert!(
                quad_form >= bound,
                "coercivity violated: {quad_form} < {bound}"
            );
        }
    }

    #[test]
    fn assembly_linear_in_data() {
        let sp = space(2, 3);
        let d1 = GeneralRobinData::new(
            |x| [x[0], x[1]],
            |x| [[x[0], 0.0], [0.0, x[1]]],
            |x| [1.0 - x[0], x[1]],
        );
        let d2 = GeneralRobinData::new(
            |x| [x[1] * x[0], 1.0],
            |x| [[0.0, x[1]], [x[0], 0.0]],
            |x| [x[0], 2.0],
        );
        let sum = GeneralRobinData::new(
            |x| [x[0] + x[1] * x[0], x[1] + 1.0],
            |x| [[x[0], x[1]], [x[0], x[1]]],
            |x| [1.0, x[1] + 2.0],
        );
        let l1 = assemble_load(&sp, &d1);
        let l2 = assemble_load(&sp, &d2);
        let ls = assemble_load(&sp, &sum);
        for i in 0..sp.ndofs {
            assert!((l1[i] + l2[i] - ls[i]).abs() <= 1e-14);
        }
    }
}
