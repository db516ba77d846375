//! Continuous Lagrange spaces on the volume mesh and discontinuous or
//! continuous multiplier spaces on trace meshes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::mesh::{Point, Side, TraceMesh, TriMesh};

/// Affine geometry of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_bary: [Point; 3],
}

impl TriangleGeometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [v0, v1, v2] = vertices;
        let area = crate::mesh::signed_area(vertices);
        let s = 1.0 / (2.0 * area);
        let grad_bary = [
            [(v1[1] - v2[1]) * s, (v2[0] - v1[0]) * s],
            [(v2[1] - v0[1]) * s, (v0[0] - v2[0]) * s],
            [(v0[1] - v1[1]) * s, (v1[0] - v0[0]) * s],
        ];
        Self { vertices, area, grad_bary }
    }

    pub fn of(mesh: &TriMesh, t: usize) -> Self {
        Self::new(mesh.vertices(t))
    }

    pub fn barycentric(&self, p: Point) -> [f64; 3] {
        let v0 = self.vertices[0];
        let (dx, dy) = (p[0] - v0[0], p[1] - v0[1]);
        let l1 = self.grad_bary[1][0] * dx + self.grad_bary[1][1] * dy;
        let l2 = self.grad_bary[2][0] * dx + self.grad_bary[2][1] * dy;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn point(&self, bary: &[f64; 3]) -> Point {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }
}

/// Values and gradients of the local basis at one point (at most six functions).
#[derive(Clone, Copy, Debug, Default)]
pub struct BasisValues {
    pub len: usize,
    pub values: [f64; 6],
    pub grads: [Point; 6],
}

impl BasisValues {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn grads(&self) -> &[Point] {
        &self.grads[..self.len]
    }
}

/// Lagrange basis of degree 1 or 2 from barycentric coordinates.
/// P2 ordering: the three vertices, then the midpoints of edges 01, 12, 20.
pub fn lagrange_basis(degree: usize, bary: &[f64; 3], grad_bary: &[Point; 3]) -> BasisValues {
    let mut out = BasisValues::default();
    match degree {
        1 => {
            out.len = 3;
            out.values[..3].copy_from_slice(bary);
            out.grads[..3].copy_from_slice(grad_bary);
        }
        2 => {
            out.len = 6;
            for i in 0..3 {
                let l = bary[i];
                out.values[i] = l * (2.0 * l - 1.0);
                let c = 4.0 * l - 1.0;
                out.grads[i] = [c * grad_bary[i][0], c * grad_bary[i][1]];
            }
            for k in 0..3 {
                let (i, j) = (k, (k + 1) % 3);
                out.values[3 + k] = 4.0 * bary[i] * bary[j];
                out.grads[3 + k] = [
                    4.0 * (bary[j] * grad_bary[i][0] + bary[i] * grad_bary[j][0]),
                    4.0 * (bary[j] * grad_bary[i][1] + bary[i] * grad_bary[j][1]),
                ];
            }
        }
        _ => unreachable!("degree validated at space construction"),
    }
    out
}

/// Continuous Lagrange space of degree 1 or 2 on a [`TriMesh`].
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub mesh: Arc<TriMesh>,
    pub degree: usize,
    /// Global dof indices of each triangle, in local basis order.
    pub dof_map: Vec<Vec<usize>>,
    pub n_dofs: usize,
    /// Nodal location of every dof.
    pub dof_coords: Vec<Point>,
    pub boundary_dofs: BTreeMap<Side, Vec<usize>>,
}

pub fn build_primal_space(mesh: Arc<TriMesh>, degree: usize) -> Result<FeSpace> {
    if !(1..=2).contains(&degree) {
        return Err(invalid(format!("primal degree {degree} not supported (1 or 2)")));
    }
    let n_nodes = mesh.nodes.len();
    let mut dof_coords = mesh.nodes.clone();
    let mut dof_map = Vec::with_capacity(mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let mut dofs = tri.to_vec();
        if degree == 2 {
            dofs.extend(mesh.triangle_edges[t].iter().map(|&e| n_nodes + e));
        }
        dof_map.push(dofs);
    }
    if degree == 2 {
        dof_coords.extend(mesh.edges.iter().map(|&[a, b]| {
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]
        }));
    }
    let mut boundary_dofs: BTreeMap<Side, Vec<usize>> = BTreeMap::new();
    for b in &mesh.boundary_edges {
        let list = boundary_dofs.entry(b.side).or_default();
        list.extend_from_slice(&b.nodes);
        if degree == 2 {
            list.push(n_nodes + b.edge);
        }
    }
    for list in boundary_dofs.values_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let n_dofs = dof_coords.len();
    Ok(FeSpace { mesh, degree, dof_map, n_dofs, dof_coords, boundary_dofs })
}

impl FeSpace {
    pub fn local_dofs(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn geometry(&self, t: usize) -> TriangleGeometry {
        TriangleGeometry::of(&self.mesh, t)
    }

    /// Basis values and physical gradients of triangle `t` at the physical point `p`.
    pub fn eval_at(&self, t: usize, p: Point) -> BasisValues {
        let g = self.geometry(t);
        lagrange_basis(self.degree, &g.barycentric(p), &g.grad_bary)
    }

    /// Basis values and gradients on the reference triangle (0,0), (1,0), (0,1).
    pub fn eval_reference(&self, p: Point) -> BasisValues {
        reference_basis(self.degree, p)
    }

    /// Value and gradient of the finite element function `coeffs` at `p` in triangle `t`.
    pub fn evaluate(&self, coeffs: &[f64], t: usize, p: Point) -> (f64, Point) {
        let b = self.eval_at(t, p);
        let dofs = &self.dof_map[t];
        let mut v = 0.0;
        let mut g = [0.0, 0.0];
        for i in 0..b.len {
            let c = coeffs[dofs[i]];
            v += c * b.values[i];
            g[0] += c * b.grads[i][0];
            g[1] += c * b.grads[i][1];
        }
        (v, g)
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&p| f(p)).collect()
    }
}

pub fn reference_basis(degree: usize, p: Point) -> BasisValues {
    let bary = [1.0 - p[0] - p[1], p[0], p[1]];
    lagrange_basis(degree, &bary, &[[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
}

/// Multiplier space families on a trace mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MultiplierKind {
    /// Piecewise constants, discontinuous.
    P0Disc,
    /// Piecewise quadratics, discontinuous.
    P2Disc,
    /// Piecewise linears, continuous within each connected component.
    P1Cont,
}

impl MultiplierKind {
    pub fn local_dofs(self) -> usize {
        match self {
            MultiplierKind::P0Disc => 1,
            MultiplierKind::P1Cont => 2,
            MultiplierKind::P2Disc => 3,
        }
    }

    pub fn polynomial_degree(self) -> usize {
        match self {
            MultiplierKind::P0Disc => 0,
            MultiplierKind::P1Cont => 1,
            MultiplierKind::P2Disc => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MultiplierKind::P0Disc => "p0-disc",
            MultiplierKind::P2Disc => "p2-disc",
            MultiplierKind::P1Cont => "p1-cont",
        }
    }
}

impl fmt::Display for MultiplierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MultiplierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p0-disc" | "p0" => Ok(MultiplierKind::P0Disc),
            "p2-disc" | "p2" => Ok(MultiplierKind::P2Disc),
            "p1-cont" | "p1" => Ok(MultiplierKind::P1Cont),
            other => Err(invalid(format!("unknown multiplier kind '{other}'"))),
        }
    }
}

/// Values and arc-length derivatives of a segment's local multiplier basis.
#[derive(Clone, Copy, Debug, Default)]
pub struct TraceBasis {
    pub len: usize,
    pub values: [f64; 3],
    pub d1: [f64; 3],
    pub d2: [f64; 3],
}

impl TraceBasis {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.len]
    }
}

#[derive(Clone, Debug)]
pub struct MultSpace {
    pub trace: Arc<TraceMesh>,
    pub kind: MultiplierKind,
    pub dof_map: Vec<Vec<usize>>,
    pub n_dofs: usize,
}

pub fn build_multiplier_space(trace: Arc<TraceMesh>, kind: MultiplierKind) -> Result<MultSpace> {
    let mut dof_map = Vec::with_capacity(trace.segments.len());
    let mut next = 0;
    match kind {
        MultiplierKind::P0Disc | MultiplierKind::P2Disc => {
            let m = kind.local_dofs();
            for _ in &trace.segments {
                dof_map.push((next..next + m).collect());
                next += m;
            }
        }
        MultiplierKind::P1Cont => {
            for c in &trace.components {
                for s in c.segments.clone() {
                    let local = s - c.segments.start;
                    dof_map.push(vec![next + local, next + local + 1]);
                }
                next += c.segments.len() + 1;
            }
        }
    }
    Ok(MultSpace { trace, kind, dof_map, n_dofs: next })
}

impl MultSpace {
    /// Basis on segment `seg` at local coordinate `t` in `[0, 1]`; derivatives
    /// are with respect to arc length.
    pub fn eval(&self, seg: usize, t: f64) -> TraceBasis {
        let ell = self.trace.segments[seg].length();
        trace_basis(self.kind, t, ell)
    }

    pub fn dofs(&self, seg: usize) -> &[usize] {
        &self.dof_map[seg]
    }

    /// Value of the multiplier `coeffs` on segment `seg` at local coordinate `t`.
    pub fn evaluate(&self, coeffs: &[f64], seg: usize, t: f64) -> f64 {
        let b = self.eval(seg, t);
        self.dof_map[seg].iter().zip(b.values()).map(|(&d, v)| coeffs[d] * v).sum()
    }

    /// Dof indices owned by component `c`.
    pub fn component_dofs(&self, c: usize) -> Vec<usize> {
        let mut dofs: Vec<usize> = self.trace.components[c]
            .segments
            .clone()
            .flat_map(|s| self.dof_map[s].iter().copied())
            .collect();
        dofs.sort_unstable();
        dofs.dedup();
        dofs
    }

    /// Coefficients of the (L2-)interpolant of `f` defined by nodal values; for
    /// P0 the segment midpoint value is used.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.n_dofs];
        let nodes: &[f64] = match self.kind {
            MultiplierKind::P0Disc => &[0.5],
            MultiplierKind::P1Cont => &[0.0, 1.0],
            MultiplierKind::P2Disc => &[0.0, 0.5, 1.0],
        };
        for (s, seg) in self.trace.segments.iter().enumerate() {
            for (&d, &t) in self.dof_map[s].iter().zip(nodes) {
                coeffs[d] = f(seg.point_at(t));
            }
        }
        coeffs
    }
}

pub(crate) fn trace_basis(kind: MultiplierKind, t: f64, ell: f64) -> TraceBasis {
    let mut b = TraceBasis::default();
    let (s1, s2) = (1.0 / ell, 1.0 / (ell * ell));
    match kind {
        MultiplierKind::P0Disc => {
            b.len = 1;
            b.values[0] = 1.0;
        }
        MultiplierKind::P1Cont => {
            b.len = 2;
            b.values[..2].copy_from_slice(&[1.0 - t, t]);
            b.d1[..2].copy_from_slice(&[-s1, s1]);
        }
        MultiplierKind::P2Disc => {
            b.len = 3;
            b.values = [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)];
            b.d1 = [(4.0 * t - 3.0) * s1, (4.0 - 8.0 * t) * s1, (4.0 * t - 1.0) * s1];
            b.d2 = [4.0 * s2, -8.0 * s2, 4.0 * s2];
        }
    }
    b
}
