//! Structured triangulations of rectangular domains with tagged boundary
//! patches and the quadrature rules used by every integral in the crate.
//!
//! The mesh is a uniform criss-cross triangulation: each grid cell is split
//! along the same diagonal, so orderings are reproducible and tests can be
//! bit-stable. Boundary edges are oriented counter-clockwise (domain on the
//! left) and carry the side they came from; named patches are subsets of
//! boundary edges selected by an interval test on the edge midpoint.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Geometric side of the rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub fn parse(name: &str) -> Result<Side> {
        match name {
            "bottom" => Ok(Side::Bottom),
            "right" => Ok(Side::Right),
            "top" => Ok(Side::Top),
            "left" => Ok(Side::Left),
            other => Err(Error::Mesh(format!("unknown side name `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }
}

/// One oriented boundary edge.
#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    /// Endpoint vertex indices, oriented so the domain lies on the left.
    pub vertices: [usize; 2],
    pub side: Side,
    pub length: f64,
}

/// A named subset of boundary edges with positive total length.
#[derive(Clone, Debug)]
pub struct BoundaryPatch {
    pub tag: String,
    /// Indices into `Mesh::boundary_edges`.
    pub edges: Vec<usize>,
    pub measure: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub tri_areas: Vec<f64>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub patches: BTreeMap<String, BoundaryPatch>,
    pub domain_measure: f64,
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Builds the uniform criss-cross triangulation of `[0,width] x [0,height]`
/// with `nx * ny` cells (two triangles per cell). Boundary edges are tagged
/// by side; no named patches are attached yet.
pub fn build_rectangle_mesh(nx: usize, ny: usize, width: f64, height: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Mesh(format!(
            "cell counts must be at least 1 (got {nx} x {ny})"
        )));
    }
    if !(width > 0.0) || !(height > 0.0) {
        return Err(Error::Mesh(format!(
            "dimensions must be positive (got {width} x {height})"
        )));
    }

    let hx = width / nx as f64;
    let hy = height / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * hx, j as f64 * hy]);
        }
    }

    // Every cell split along the same diagonal (lower-left to upper-right).
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = vid(i, j);
            let b = vid(i + 1, j);
            let c = vid(i + 1, j + 1);
            let d = vid(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    // Closed CCW loop around the rectangle.
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push((vid(i, 0), vid(i + 1, 0), Side::Bottom));
    }
    for j in 0..ny {
        boundary_edges.push((vid(nx, j), vid(nx, j + 1), Side::Right));
    }
    for i in (0..nx).rev() {
        boundary_edges.push((vid(i + 1, ny), vid(i, ny), Side::Top));
    }
    for j in (0..ny).rev() {
        boundary_edges.push((vid(0, j + 1), vid(0, j), Side::Left));
    }
    let boundary_edges = boundary_edges
        .into_iter()
        .map(|(a, b, side)| {
            let pa = vertices[a];
            let pb = vertices[b];
            BoundaryEdge {
                vertices: [a, b],
                side,
                length: ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt(),
            }
        })
        .collect::<Vec<_>>();

    let tri_areas: Vec<f64> = triangles
        .iter()
        .map(|t| signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
        .collect();

    let mesh = Mesh {
        vertices,
        triangles,
        tri_areas,
        boundary_edges,
        patches: BTreeMap::new(),
        domain_measure: width * height,
        width,
        height,
        nx,
        ny,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Patch request: tag, side name and a coordinate interval along that side
/// (x for bottom/top, y for left/right). An edge belongs to the patch iff
/// its midpoint coordinate lies in the closed interval.
#[derive(Clone, Debug)]
pub struct PatchSpec {
    pub tag: String,
    pub side: String,
    pub interval: [f64; 2],
}

/// Attaches named patches to the mesh. Patches may overlap; an empty patch
/// is an error because averaged patch norms need positive measure.
pub fn tag_patches(mut mesh: Mesh, specs: &[PatchSpec]) -> Result<Mesh> {
    for spec in specs {
        let side = Side::parse(&spec.side)?;
        let [lo, hi] = spec.interval;
        let mut edges = Vec::new();
        let mut measure = 0.0;
        for (k, edge) in mesh.boundary_edges.iter().enumerate() {
            if edge.side != side {
                continue;
            }
            let pa = mesh.vertices[edge.vertices[0]];
            let pb = mesh.vertices[edge.vertices[1]];
            let mid = match side {
                Side::Bottom | Side::Top => 0.5 * (pa[0] + pb[0]),
                Side::Left | Side::Right => 0.5 * (pa[1] + pb[1]),
            };
            if mid >= lo && mid <= hi {
                edges.push(k);
                measure += edge.length;
            }
        }
        if edges.is_empty() {
            return Err(Error::Mesh(format!(
                "patch `{}` on side `{}` over [{lo}, {hi}] selects no edges",
                spec.tag, spec.side
            )));
        }
        mesh.patches.insert(
            spec.tag.clone(),
            BoundaryPatch {
                tag: spec.tag.clone(),
                edges,
                measure,
            },
        );
    }
    Ok(mesh)
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary_edges.iter().map(|e| e.length).sum()
    }

    pub fn patch(&self, tag: &str) -> Result<&BoundaryPatch> {
        self.patches
            .get(tag)
            .ok_or_else(|| Error::Mesh(format!("unknown patch tag `{tag}`")))
    }

    /// Structural invariants: positive areas, a single closed boundary loop,
    /// area consistency and interior-edge counts.
    pub fn validate(&self) -> Result<()> {
        for (k, t) in self.triangles.iter().enumerate() {
            let a = signed_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
            if !(a > 0.0) {
                return Err(Error::Mesh(format!(
                    "triangle {k} has non-positive signed area {a}"
                )));
            }
        }

        let area_sum: f64 = self.tri_areas.iter().sum();
        let rel = (area_sum - self.domain_measure).abs() / self.domain_measure;
        if rel > 1e-12 {
            return Err(Error::Mesh(format!(
                "triangle areas sum to {area_sum}, domain measure {} (rel err {rel:.2e})",
                self.domain_measure
            )));
        }

        // Each undirected edge of a triangle appears in exactly 2 triangles
        // (interior) or exactly 1 (boundary); boundary edges form one loop.
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        let mut boundary_keys: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in &self.boundary_edges {
            let key = (e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1]));
            *boundary_keys.entry(key).or_insert(0) += 1;
        }
        for (key, n) in &counts {
            let on_boundary = boundary_keys.contains_key(key);
            match (n, on_boundary) {
                (1, true) | (2, false) => {}
                _ => {
                    return Err(Error::Mesh(format!(
                        "edge {key:?} shared by {n} triangles, boundary={on_boundary}"
                    )))
                }
            }
        }
        if boundary_keys.values().any(|&n| n != 1) {
            return Err(Error::Mesh("boundary edge listed more than once".into()));
        }
        // Closed loop: consecutive edges chain head-to-tail and wrap around.
        for (k, e) in self.boundary_edges.iter().enumerate() {
            let next = &self.boundary_edges[(k + 1) % self.boundary_edges.len()];
            if e.vertices[1] != next.vertices[0] {
                return Err(Error::Mesh(format!("boundary loop broken after edge {k}")));
            }
        }
        for patch in self.patches.values() {
            let len: f64 = patch.edges.iter().map(|&k| self.boundary_edges[k].length).sum();
            if (len - patch.measure).abs() > 1e-12 * len.max(1.0) {
                return Err(Error::Mesh(format!(
                    "patch `{}` measure {} does not match edge sum {len}",
                    patch.tag, patch.measure
                )));
            }
        }
        Ok(())
    }

    /// Quadrature over the whole domain; `order` 1 is the centroid rule,
    /// `order` 2 the three-point edge-midpoint rule (exact for quadratics).
    pub fn volume_quadrature(&self, order: usize) -> VolumeRule {
        let barys: Vec<[f64; 3]> = if order <= 1 {
            vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]
        } else {
            vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
        };
        let mut points = Vec::with_capacity(self.triangles.len() * barys.len());
        for (e, t) in self.triangles.iter().enumerate() {
            let pa = self.vertices[t[0]];
            let pb = self.vertices[t[1]];
            let pc = self.vertices[t[2]];
            let w = self.tri_areas[e] / barys.len() as f64;
            for &bary in &barys {
                let xy = [
                    bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
                    bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
                ];
                points.push(VolumePoint {
                    element: e,
                    xy,
                    weight: w,
                    bary,
                });
            }
        }
        VolumeRule {
            points,
            total_measure: self.domain_measure,
        }
    }

    /// Two-point Gauss rule over the edges of a named patch.
    pub fn boundary_quadrature(&self, tag: &str) -> Result<BoundaryRule> {
        let patch = self.patch(tag)?;
        Ok(self.boundary_rule_for_edges(&patch.edges, patch.measure))
    }

    /// Two-point Gauss rule over the whole boundary.
    pub fn whole_boundary_quadrature(&self) -> BoundaryRule {
        let edges: Vec<usize> = (0..self.boundary_edges.len()).collect();
        let total = self.boundary_measure();
        self.boundary_rule_for_edges(&edges, total)
    }

    fn boundary_rule_for_edges(&self, edges: &[usize], total_measure: f64) -> BoundaryRule {
        let g = 0.5 / 3.0_f64.sqrt();
        let lambdas = [0.5 - g, 0.5 + g];
        let mut points = Vec::with_capacity(edges.len() * 2);
        for &k in edges {
            let e = &self.boundary_edges[k];
            let pa = self.vertices[e.vertices[0]];
            let pb = self.vertices[e.vertices[1]];
            for &lam in &lambdas {
                points.push(BoundaryPoint {
                    edge: k,
                    vertices: e.vertices,
                    xy: [
                        (1.0 - lam) * pa[0] + lam * pb[0],
                        (1.0 - lam) * pa[1] + lam * pb[1],
                    ],
                    weight: 0.5 * e.length,
                    lambda: lam,
                });
            }
        }
        BoundaryRule {
            points,
            total_measure,
        }
    }

    /// Constant gradients of the three barycentric basis functions on a
    /// triangle, as `[grad lambda_0, grad lambda_1, grad lambda_2]`.
    pub fn p1_gradients(&self, element: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[element];
        let p = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
        let inv2a = 1.0 / (2.0 * self.tri_areas[element]);
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            grads[i] = [
                (p[j][1] - p[k][1]) * inv2a,
                (p[k][0] - p[j][0]) * inv2a,
            ];
        }
        grads
    }

    /// Plain-text listing: one record per line, space separated.
    /// Sections: `v idx x y`, `t idx v0 v1 v2`, `e idx v0 v1 side tags...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "v {} {} {}", i, v[0], v[1]);
        }
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "t {} {} {} {}", i, t[0], t[1], t[2]);
        }
        for (i, e) in self.boundary_edges.iter().enumerate() {
            let mut tags = String::new();
            for patch in self.patches.values() {
                if patch.edges.contains(&i) {
                    tags.push(' ');
                    tags.push_str(&patch.tag);
                }
            }
            let _ = writeln!(
                out,
                "e {} {} {} {}{}",
                i,
                e.vertices[0],
                e.vertices[1],
                e.side.name(),
                tags
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VolumePoint {
    pub element: usize,
    pub xy: Point,
    pub weight: f64,
    pub bary: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct VolumeRule {
    pub points: Vec<VolumePoint>,
    pub total_measure: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub edge: usize,
    pub vertices: [usize; 2],
    pub xy: Point,
    pub weight: f64,
    /// Interpolation factor along the edge: value = (1-lambda) f0 + lambda f1.
    pub lambda: f64,
}

#[derive(Clone, Debug)]
pub struct BoundaryRule {
    pub points: Vec<BoundaryPoint>,
    pub total_measure: f64,
}

impl VolumeRule {
    pub fn integrate(&self, mut f: impl FnMut(Point) -> f64) -> f64 {
        self.points.iter().map(|q| q.weight * f(q.xy)).sum()
    }
}

impl BoundaryRule {
    pub fn integrate(&self, mut f: impl FnMut(Point) -> f64) -> f64 {
        self.points.iter().map(|q| q.weight * f(q.xy)).sum()
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_single_cell() {
        let m = build_rectangle_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.boundary_edges.len(), 4);
        assert!((m.domain_measure - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_counts_and_perimeter() {
        let m = build_rectangle_mesh(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_triangles(), 8);
        assert!((m.domain_measure - 1.0).abs() < 1e-15);
        assert!((m.boundary_measure() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rectangle_patch_measures_by_hand() {
        // 4x2 cells on [0,2]x[0,1]: bottom side has 4 edges of length 0.5.
        let m = build_rectangle_mesh(4, 2, 2.0, 1.0).unwrap();
        assert!((m.domain_measure - 2.0).abs() < 1e-15);
        let m = tag_patches(
            m,
            &[PatchSpec {
                tag: "bottom".into(),
                side: "bottom".into(),
                interval: [0.0, 2.0],
            }],
        )
        .unwrap();
        assert!((m.patch("bottom").unwrap().measure - 2.0).abs() < 1e-14);
    }

    #[test]
    fn patch_whole_and_half_side() {
        let m = build_rectangle_mesh(4, 4, 1.0, 1.0).unwrap();
        let m = tag_patches(
            m,
            &[
                PatchSpec {
                    tag: "B1".into(),
                    side: "bottom".into(),
                    interval: [0.0, 1.0],
                },
                PatchSpec {
                    tag: "B2".into(),
                    side: "bottom".into(),
                    interval: [0.0, 0.5],
                },
            ],
        )
        .unwrap();
        assert!((m.patch("B1").unwrap().measure - 1.0).abs() < 1e-14);
        assert!((m.patch("B2").unwrap().measure - 0.5).abs() < 1e-14);
    }

    #[test]
    fn overlapping_patches_keep_full_measure() {
        let m = build_rectangle_mesh(4, 1, 1.0, 1.0).unwrap();
        let m = tag_patches(
            m,
            &[
                PatchSpec {
                    tag: "P1".into(),
                    side: "bottom".into(),
                    interval: [0.0, 0.75],
                },
                PatchSpec {
                    tag: "P2".into(),
                    side: "bottom".into(),
                    interval: [0.25, 1.0],
                },
            ],
        )
        .unwrap();
        // 3 edges each, sharing the middle two.
        assert_eq!(m.patch("P1").unwrap().edges.len(), 3);
        assert_eq!(m.patch("P2").unwrap().edges.len(), 3);
        assert!((m.patch("P1").unwrap().measure - 0.75).abs() < 1e-14);
        assert!((m.patch("P2").unwrap().measure - 0.75).abs() < 1e-14);
    }

    #[test]
    fn empty_patch_is_error() {
        let m = build_rectangle_mesh(2, 2, 1.0, 1.0).unwrap();
        let r = tag_patches(
            m,
            &[PatchSpec {
                tag: "E".into(),
                side: "bottom".into(),
                interval: [2.0, 3.0],
            }],
        );
        assert!(r.is_err());
    }

    #[test]
    fn invalid_build_parameters_rejected() {
        assert!(build_rectangle_mesh(0, 1, 1.0, 1.0).is_err());
        assert!(build_rectangle_mesh(1, 1, 0.0, 1.0).is_err());
        assert!(build_rectangle_mesh(1, 1, 1.0, -2.0).is_err());
    }

    #[test]
    fn quadrature_integrates_constants_and_monomials() {
        let m = build_rectangle_mesh(4, 4, 1.0, 1.0).unwrap();
        let q1 = m.volume_quadrature(1);
        let q2 = m.volume_quadrature(2);
        assert!((q1.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!((q2.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!((q2.integrate(|p| p[0]) - 0.5).abs() < 1e-14);
        // x^2 over the unit square: exactly 1/3 with the order-2 rule.
        assert!((q2.integrate(|p| p[0] * p[0]) - 1.0 / 3.0).abs() < 1e-12);

        let m = tag_patches(
            m,
            &[PatchSpec {
                tag: "B".into(),
                side: "left".into(),
                interval: [0.0, 1.0],
            }],
        )
        .unwrap();
        let bq = m.boundary_quadrature("B").unwrap();
        assert!((bq.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        // Cubic along the edge is exact for 2-point Gauss.
        assert!((bq.integrate(|p| p[1] * p[1] * p[1]) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn refinement_preserves_measures() {
        // Patch endpoints aligned with coarse edge boundaries, so the
        // midpoint test selects the same geometric set on both meshes.
        let coarse = tag_patches(
            build_rectangle_mesh(4, 2, 2.0, 1.5).unwrap(),
            &[PatchSpec {
                tag: "B".into(),
                side: "top".into(),
                interval: [0.0, 1.0],
            }],
        )
        .unwrap();
        let fine = tag_patches(
            build_rectangle_mesh(8, 4, 2.0, 1.5).unwrap(),
            &[PatchSpec {
                tag: "B".into(),
                side: "top".into(),
                interval: [0.0, 1.0],
            }],
        )
        .unwrap();
        assert_eq!(fine.n_triangles(), 4 * coarse.n_triangles());
        let rel = (fine.domain_measure - coarse.domain_measure).abs() / coarse.domain_measure;
        assert!(rel < 1e-12);
        let pm_c = coarse.patch("B").unwrap().measure;
        let pm_f = fine.patch("B").unwrap().measure;
        assert!((pm_c - pm_f).abs() / pm_c < 1e-12);
    }

    #[test]
    fn dump_has_one_record_per_entity() {
        let m = tag_patches(
            build_rectangle_mesh(2, 1, 1.0, 1.0).unwrap(),
            &[PatchSpec {
                tag: "B1".into(),
                side: "bottom".into(),
                interval: [0.0, 1.0],
            }],
        )
        .unwrap();
        let dump = m.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(
            lines.len(),
            m.n_vertices() + m.n_triangles() + m.boundary_edges.len()
        );
        assert!(lines.iter().any(|l| l.starts_with("e ") && l.ends_with("B1")));
    }
}
