//! Assembly of the bilinear forms and right-hand sides of the boundary
//! constrained Poisson problem.
//!
//! Conventions: the multiplier approximates the diffusive flux `-∇u·n`, and
//! Dirichlet data enters only weakly.

use std::sync::Arc;

use crate::mesh::{Point, Side, TriMesh, DIRICHLET_SIDES, NEUMANN_SIDES};
use crate::quadrature::{gauss_segment, gauss_triangle, SegmentRule};
use crate::spaces::{BasisValues, FeSpace, MultSpace};
use crate::sparse::{SparseMatrix, Triplets};
use crate::Result;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;
pub type SideField = Arc<dyn Fn(Point, Side) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub grad: VectorField,
}

impl ExactSolution {
    /// The flux `-∇u·n` on a side.
    pub fn multiplier(&self, p: Point, side: Side) -> f64 {
        let g = (self.grad)(p);
        let n = side.outward_normal();
        -(g[0] * n[0] + g[1] * n[1])
    }
}

/// Source, boundary data and (optionally) the exact solution.
#[derive(Clone)]
pub struct ProblemData {
    pub source: ScalarField,
    pub dirichlet: SideField,
    /// Prescribed flux `∇u·n` on Neumann sides.
    pub neumann: SideField,
    pub exact: Option<ExactSolution>,
}

impl ProblemData {
    /// Data consistent with a known solution: traces, fluxes and `f = -Δu`.
    pub fn from_exact(u: ScalarField, grad: VectorField, source: ScalarField) -> Self {
        let exact = ExactSolution { u: u.clone(), grad: grad.clone() };
        Self {
            source,
            dirichlet: Arc::new(move |p, _| u(p)),
            neumann: Arc::new(move |p, side| {
                let g = grad(p);
                let n = side.outward_normal();
                g[0] * n[0] + g[1] * n[1]
            }),
            exact: Some(exact),
        }
    }

    /// Homogeneous data with the zero exact solution.
    pub fn zero() -> Self {
        Self::from_exact(Arc::new(|_| 0.0), Arc::new(|_| [0.0, 0.0]), Arc::new(|_| 0.0))
    }

    /// Globally linear solution `u = c0 + cx x + cy y` (patch test).
    pub fn linear(c0: f64, cx: f64, cy: f64) -> Self {
        Self::from_exact(
            Arc::new(move |p| c0 + cx * p[0] + cy * p[1]),
            Arc::new(move |_| [cx, cy]),
            Arc::new(|_| 0.0),
        )
    }
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("has_exact", &self.exact.is_some()).finish()
    }
}

pub(crate) fn stiffness_degree(k: usize) -> usize {
    2 * (k - 1)
}

pub(crate) fn mass_degree(k: usize) -> usize {
    2 * k + 2
}

/// Boundary quadrature rule used for trace terms with primal degree `k`.
pub(crate) fn boundary_rule(k: usize) -> SegmentRule {
    gauss_segment(mass_degree(k)).expect("degree within the tabulated range")
}

/// `∂_n` of every local basis function.
pub(crate) fn normal_derivatives(b: &BasisValues, n: Point) -> [f64; 6] {
    let mut dn = [0.0; 6];
    for i in 0..b.len {
        dn[i] = b.grads[i][0] * n[0] + b.grads[i][1] * n[1];
    }
    dn
}

/// Length of the volume boundary edge carrying trace segment `seg`; this is
/// the mesh size used in boundary weights.
pub fn trace_h(mesh: &TriMesh, mult: &MultSpace, seg: usize) -> f64 {
    mesh.boundary_edge_length(mult.trace.segments[seg].boundary_edge)
}

/// `a(u, v) = ∫ ∇u·∇v`.
pub fn assemble_stiffness(space: &FeSpace) -> SparseMatrix {
    let rule = gauss_triangle(stiffness_degree(space.degree)).unwrap();
    let nl = space.local_dofs();
    let mut t = Triplets::new(space.n_dofs, space.n_dofs);
    for tri in 0..space.mesh.triangles.len() {
        let g = space.geometry(tri);
        let mut local = [[0.0; 6]; 6];
        for (bary, w) in rule.iter() {
            let b = crate::spaces::lagrange_basis(space.degree, bary, &g.grad_bary);
            let jw = 2.0 * g.area * w;
            for i in 0..nl {
                for j in 0..nl {
                    local[i][j] += jw * (b.grads[i][0] * b.grads[j][0] + b.grads[i][1] * b.grads[j][1]);
                }
            }
        }
        let dofs = &space.dof_map[tri];
        for i in 0..nl {
            for j in 0..nl {
                t.push(dofs[i], dofs[j], local[i][j]);
            }
        }
    }
    t.to_csr()
}

/// `b(λ, v) = ∫ λ v` over the multiplier trace; one row per multiplier dof.
pub fn assemble_coupling(primal: &FeSpace, mult: &MultSpace) -> Result<SparseMatrix> {
    mult.trace.check_nested_in(&primal.mesh)?;
    let mesh = &primal.mesh;
    let rule = boundary_rule(primal.degree);
    let mut t = Triplets::new(mult.n_dofs, primal.n_dofs);
    for (s, seg) in mult.trace.segments.iter().enumerate() {
        let tri = mesh.boundary_edges[seg.boundary_edge].triangle;
        let pdofs = &primal.dof_map[tri];
        let ell = seg.length();
        for (tq, w) in rule.abscissae() {
            let p = seg.point_at(tq);
            let pb = primal.eval_at(tri, p);
            let mb = mult.eval(s, tq);
            for (a, &md) in mult.dofs(s).iter().enumerate() {
                for (i, &pd) in pdofs.iter().enumerate() {
                    t.push(md, pd, w * ell * mb.values[a] * pb.values[i]);
                }
            }
        }
    }
    Ok(t.to_csr())
}

/// Primal and multiplier blocks of the right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadVectors {
    /// `∫ f v + ∫_{Neumann} g_N v`.
    pub primal: Vec<f64>,
    /// `∫_{Dirichlet} μ g_D`; the solver applies the method's sign.
    pub multiplier: Vec<f64>,
}

pub fn assemble_load(primal: &FeSpace, mult: Option<&MultSpace>, data: &ProblemData) -> LoadVectors {
    let mesh = &primal.mesh;
    let k = primal.degree;
    let rule = gauss_triangle(mass_degree(k)).unwrap();
    let mut f = vec![0.0; primal.n_dofs];
    for tri in 0..mesh.triangles.len() {
        let g = primal.geometry(tri);
        let dofs = &primal.dof_map[tri];
        for (bary, w) in rule.iter() {
            let p = g.point(bary);
            let b = crate::spaces::lagrange_basis(k, bary, &g.grad_bary);
            let fw = 2.0 * g.area * w * (data.source)(p);
            for i in 0..b.len {
                f[dofs[i]] += fw * b.values[i];
            }
        }
    }
    let brule = boundary_rule(k);
    for edge in mesh.boundary_edges.iter().filter(|e| NEUMANN_SIDES.contains(&e.side)) {
        let (pa, pb) = (mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]);
        let ell = crate::mesh::dist(pa, pb);
        let dofs = &primal.dof_map[edge.triangle];
        for (tq, w) in brule.abscissae() {
            let p = crate::mesh::lerp(pa, pb, tq);
            let b = primal.eval_at(edge.triangle, p);
            let gw = w * ell * (data.neumann)(p, edge.side);
            for i in 0..b.len {
                f[dofs[i]] += gw * b.values[i];
            }
        }
    }
    let mut m = vec![];
    if let Some(mult) = mult {
        m = vec![0.0; mult.n_dofs];
        for (s, seg) in mult.trace.segments.iter().enumerate() {
            let side = mult.trace.components[seg.component].side;
            let ell = seg.length();
            for (tq, w) in brule.abscissae() {
                let p = seg.point_at(tq);
                let mb = mult.eval(s, tq);
                let gw = w * ell * (data.dirichlet)(p, side);
                for (a, &d) in mult.dofs(s).iter().enumerate() {
                    m[d] += gw * mb.values[a];
                }
            }
        }
    }
    LoadVectors { primal: f, multiplier: m }
}

/// Penalty-free Nitsche boundary terms on the Dirichlet sides.
///
/// Matrix: `-∫ ∂_n u v ± ∫ ∂_n v u` (`+` nonsymmetric, `-` symmetric).
/// Right-hand side: `± ∫ ∂_n v g_D`.
pub fn assemble_nitsche(primal: &FeSpace, data: &ProblemData, symmetric: bool) -> (SparseMatrix, Vec<f64>) {
    let mesh = &primal.mesh;
    let sign = if symmetric { -1.0 } else { 1.0 };
    let rule = boundary_rule(primal.degree);
    let mut t = Triplets::new(primal.n_dofs, primal.n_dofs);
    let mut rhs = vec![0.0; primal.n_dofs];
    for edge in mesh.boundary_edges.iter().filter(|e| DIRICHLET_SIDES.contains(&e.side)) {
        let (pa, pb) = (mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]);
        let ell = crate::mesh::dist(pa, pb);
        let dofs = &primal.dof_map[edge.triangle];
        for (tq, w) in rule.abscissae() {
            let p = crate::mesh::lerp(pa, pb, tq);
            let b = primal.eval_at(edge.triangle, p);
            let dn = normal_derivatives(&b, edge.normal);
            let jw = w * ell;
            let g = (data.dirichlet)(p, edge.side);
            for i in 0..b.len {
                for j in 0..b.len {
                    t.push(dofs[i], dofs[j], jw * (-dn[j] * b.values[i] + sign * dn[i] * b.values[j]));
                }
                rhs[dofs[i]] += sign * jw * dn[i] * g;
            }
        }
    }
    (t.to_csr(), rhs)
}

/// `∫_{sides} weight(h) u v` with `h` the boundary edge length.
pub fn assemble_boundary_mass(primal: &FeSpace, sides: &[Side], weight: impl Fn(f64) -> f64) -> SparseMatrix {
    let mesh = &primal.mesh;
    let rule = boundary_rule(primal.degree);
    let mut t = Triplets::new(primal.n_dofs, primal.n_dofs);
    for edge in mesh.boundary_edges.iter().filter(|e| sides.contains(&e.side)) {
        let (pa, pb) = (mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]);
        let ell = crate::mesh::dist(pa, pb);
        let wh = weight(ell);
        let dofs = &primal.dof_map[edge.triangle];
        for (tq, w) in rule.abscissae() {
            let b = primal.eval_at(edge.triangle, crate::mesh::lerp(pa, pb, tq));
            for i in 0..b.len {
                for j in 0..b.len {
                    t.push(dofs[i], dofs[j], wh * w * ell * b.values[i] * b.values[j]);
                }
            }
        }
    }
    t.to_csr()
}

/// `∫ weight(h) λ μ` over the multiplier trace, `h` being the primal trace size.
pub fn assemble_multiplier_mass(primal: &FeSpace, mult: &MultSpace, weight: impl Fn(f64) -> f64) -> SparseMatrix {
    let rule = boundary_rule(primal.degree);
    let mut t = Triplets::new(mult.n_dofs, mult.n_dofs);
    for (s, seg) in mult.trace.segments.iter().enumerate() {
        let wh = weight(trace_h(&primal.mesh, mult, s));
        let ell = seg.length();
        let dofs = mult.dofs(s);
        for (tq, w) in rule.abscissae() {
            let b = mult.eval(s, tq);
            for a in 0..b.len {
                for c in 0..b.len {
                    t.push(dofs[a], dofs[c], wh * w * ell * b.values[a] * b.values[c]);
                }
            }
        }
    }
    t.to_csr()
}
