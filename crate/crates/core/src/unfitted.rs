//! Transmission problem across a straight vertical interface `x = x0` that
//! does not follow the mesh.
//!
//! Each subdomain carries its own P1 copy on the elements it touches, so the
//! cut band has doubled unknowns. The coupling uses one constant multiplier per
//! cut element, stabilised by penalising its jumps across the interior faces
//! of the band. The outer boundary condition `u = 0` is imposed strongly.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::analysis::{estimate_rates, validate_levels, ConvergenceStudy, ErrorRecord, LevelOutcome};
use crate::error::invalid;
use crate::forms::ProblemData;
use crate::linalg::solve_direct;
use crate::mesh::{build_unit_square_mesh, dist, signed_area, Point, TriMesh};
use crate::quadrature::{gauss_segment, triangle_rule_at_least};
use crate::solver::{SolutionFields, RESIDUAL_TOLERANCE};
use crate::sparse::{SparseMatrix, Triplets};
use crate::spaces::TriangleGeometry;
use crate::{Error, Result};

/// Minimal distance between the interface and any vertical grid line.
pub const DEGENERATE_CUT_TOL: f64 = 1e-9;

/// Position of an element relative to the interface. Subdomain 1 is `x < x0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellClass {
    Inside1,
    Inside2,
    Cut,
}

/// Decomposition of one triangle by the line `x = x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleCut {
    /// Endpoints of the interface segment inside the triangle.
    pub segment: [Point; 2],
    /// Counter-clockwise triangles covering the part in subdomain 1 and 2.
    pub pieces: [Vec<[Point; 3]>; 2],
}

impl TriangleCut {
    pub fn area(&self, side: usize) -> f64 {
        self.pieces[side].iter().map(|&t| signed_area(t)).sum()
    }

    pub fn segment_length(&self) -> f64 {
        dist(self.segment[0], self.segment[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutCell {
    pub triangle: usize,
    pub cut: TriangleCut,
}

/// Interior face of the cut band, shared by two cut cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandFace {
    /// Indices into [`CutGeometry::cut_cells`].
    pub cells: [usize; 2],
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutGeometry {
    pub x0: f64,
    pub classes: Vec<CellClass>,
    pub cut_cells: Vec<CutCell>,
    /// Cut cell index of every triangle.
    pub cut_index: Vec<Option<usize>>,
    pub band_faces: Vec<BandFace>,
}

impl CutGeometry {
    /// Triangles covering `triangle ∩ Ω_side`.
    pub fn pieces(&self, mesh: &TriMesh, triangle: usize, side: usize) -> Vec<[Point; 3]> {
        match (self.classes[triangle], side) {
            (CellClass::Inside1, 0) | (CellClass::Inside2, 1) => vec![mesh.vertices(triangle)],
            (CellClass::Cut, _) => self.cut_cells[self.cut_index[triangle].unwrap()].cut.pieces[side].clone(),
            _ => Vec::new(),
        }
    }
}

fn crossing(a: Point, b: Point, x0: f64) -> Point {
    let t = (x0 - a[0]) / (b[0] - a[0]);
    [x0, a[1] + t * (b[1] - a[1])]
}

/// Clips a counter-clockwise triangle against `x < x0` (side 0) and `x > x0`
/// (side 1). Returns `None` when the line misses the interior.
pub fn clip_triangle(v: [Point; 3], x0: f64) -> Option<TriangleCut> {
    let left = v.map(|p| p[0] < x0);
    if left.iter().all(|&l| l) || left.iter().all(|&l| !l) {
        return None;
    }
    let mut polys: [Vec<Point>; 2] = [Vec::new(), Vec::new()];
    let mut segment = Vec::with_capacity(2);
    for k in 0..3 {
        let (a, b) = (v[k], v[(k + 1) % 3]);
        polys[usize::from(!left[k])].push(a);
        if left[k] != left[(k + 1) % 3] {
            let p = crossing(a, b, x0);
            polys[0].push(p);
            polys[1].push(p);
            segment.push(p);
        }
    }
    let fan = |poly: &[Point]| (1..poly.len() - 1).map(|i| [poly[0], poly[i], poly[i + 1]]).collect::<Vec<_>>();
    Some(TriangleCut { segment: [segment[0], segment[1]], pieces: [fan(&polys[0]), fan(&polys[1])] })
}

/// Classifies every element against `x = x0` and cuts the intersected ones.
pub fn classify_and_cut(mesh: &TriMesh, x0: f64) -> Result<CutGeometry> {
    if !x0.is_finite() {
        return Err(invalid("interface position must be finite"));
    }
    if mesh.nodes.iter().any(|p| (p[0] - x0).abs() <= DEGENERATE_CUT_TOL) {
        return Err(Error::DegenerateCut { x0 });
    }
    let mut classes = Vec::with_capacity(mesh.triangles.len());
    let mut cut_cells = Vec::new();
    let mut cut_index = vec![None; mesh.triangles.len()];
    for t in 0..mesh.triangles.len() {
        let v = mesh.vertices(t);
        match clip_triangle(v, x0) {
            Some(cut) => {
                cut_index[t] = Some(cut_cells.len());
                cut_cells.push(CutCell { triangle: t, cut });
                classes.push(CellClass::Cut);
            }
            None if v[0][0] < x0 => classes.push(CellClass::Inside1),
            None => classes.push(CellClass::Inside2),
        }
    }
    let band_faces = mesh
        .interior_faces
        .iter()
        .filter_map(|f| match (cut_index[f.triangles[0]], cut_index[f.triangles[1]]) {
            (Some(a), Some(b)) => Some(BandFace { cells: [a, b], length: mesh.edge_length(f.edge) }),
            _ => None,
        })
        .collect();
    Ok(CutGeometry { x0, classes, cut_cells, cut_index, band_faces })
}

/// Unknown numbering: subdomain 1 copies, subdomain 2 copies, then one
/// multiplier per cut cell.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceSpaces {
    /// Global index of the copy of each mesh node in each subdomain; `None`
    /// for inactive nodes and for nodes on the outer boundary.
    pub node_dofs: [Vec<Option<usize>>; 2],
    pub n_dofs: [usize; 2],
    pub n_lambda: usize,
}

impl InterfaceSpaces {
    pub fn build(mesh: &TriMesh, geometry: &CutGeometry) -> Self {
        let mut on_boundary = vec![false; mesh.nodes.len()];
        for b in &mesh.boundary_edges {
            on_boundary[b.nodes[0]] = true;
            on_boundary[b.nodes[1]] = true;
        }
        let mut node_dofs = [vec![None; mesh.nodes.len()], vec![None; mesh.nodes.len()]];
        let mut n_dofs = [0; 2];
        let mut next = 0;
        for side in 0..2 {
            let mut active = vec![false; mesh.nodes.len()];
            for (t, tri) in mesh.triangles.iter().enumerate() {
                let touches = match geometry.classes[t] {
                    CellClass::Cut => true,
                    CellClass::Inside1 => side == 0,
                    CellClass::Inside2 => side == 1,
                };
                if touches {
                    tri.iter().for_each(|&v| active[v] = true);
                }
            }
            for v in 0..mesh.nodes.len() {
                if active[v] && !on_boundary[v] {
                    node_dofs[side][v] = Some(next);
                    next += 1;
                    n_dofs[side] += 1;
                }
            }
        }
        Self { node_dofs, n_dofs, n_lambda: geometry.cut_cells.len() }
    }

    pub fn n_u(&self) -> usize {
        self.n_dofs[0] + self.n_dofs[1]
    }
}

pub struct InterfaceSystem {
    pub mesh: Arc<TriMesh>,
    pub geometry: CutGeometry,
    pub spaces: InterfaceSpaces,
    pub gamma: f64,
    /// `[[A, Bᵀ], [B, -S]]`.
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub coupling: SparseMatrix,
    pub stabilization: SparseMatrix,
}

/// Face-jump stabiliser `γ Σ_F h_F |F| (λ_K - λ_K')²` with `h_F = |F|`.
pub fn assemble_band_stab(geometry: &CutGeometry, gamma: f64) -> SparseMatrix {
    let n = geometry.cut_cells.len();
    let mut t = Triplets::new(n, n);
    for f in &geometry.band_faces {
        let w = gamma * f.length * f.length;
        let [a, b] = f.cells;
        t.push(a, a, w);
        t.push(b, b, w);
        t.push(a, b, -w);
        t.push(b, a, -w);
    }
    t.to_csr()
}

/// `B[c, ·] = ∫_{Γ∩K_c} (v1 - v2)`, one row per cut cell.
pub fn assemble_interface_coupling(mesh: &TriMesh, geometry: &CutGeometry, spaces: &InterfaceSpaces) -> Result<SparseMatrix> {
    let rule = gauss_segment(2)?;
    let mut t = Triplets::new(spaces.n_lambda, spaces.n_u());
    for (c, cell) in geometry.cut_cells.iter().enumerate() {
        let g = TriangleGeometry::of(mesh, cell.triangle);
        let [p, q] = cell.cut.segment;
        let len = cell.cut.segment_length();
        let tri = mesh.triangles[cell.triangle];
        for (s, w) in rule.abscissae() {
            let bary = g.barycentric(crate::mesh::lerp(p, q, s));
            for (a, &node) in tri.iter().enumerate() {
                let val = w * len * bary[a];
                if let Some(d) = spaces.node_dofs[0][node] {
                    t.push(c, d, val);
                }
                if let Some(d) = spaces.node_dofs[1][node] {
                    t.push(c, d, -val);
                }
            }
        }
    }
    Ok(t.to_csr())
}

/// Assembles the stabilised saddle point system on an `n × n` mesh.
pub fn assemble_interface_system(mesh: Arc<TriMesh>, x0: f64, gamma: f64, data: &ProblemData) -> Result<InterfaceSystem> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(invalid(format!("interface position {x0} must lie in (0, 1)")));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma must be non-negative and finite"));
    }
    let geometry = classify_and_cut(&mesh, x0)?;
    let spaces = InterfaceSpaces::build(&mesh, &geometry);
    let n_u = spaces.n_u();
    let n = n_u + spaces.n_lambda;
    let rule = triangle_rule_at_least(4);
    let mut t = Triplets::new(n, n);
    let mut rhs = vec![0.0; n];
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let g = TriangleGeometry::of(&mesh, k);
        for side in 0..2 {
            let dofs = tri.map(|v| spaces.node_dofs[side][v]);
            for piece in geometry.pieces(&mesh, k, side) {
                let area = signed_area(piece);
                let pg = TriangleGeometry::new(piece);
                for a in 0..3 {
                    let Some(da) = dofs[a] else { continue };
                    for b in 0..3 {
                        let Some(db) = dofs[b] else { continue };
                        let ga = g.grad_bary[a];
                        let gb = g.grad_bary[b];
                        t.push(da, db, area * (ga[0] * gb[0] + ga[1] * gb[1]));
                    }
                }
                for (bary, w) in rule.iter() {
                    let p = pg.point(bary);
                    let phi = g.barycentric(p);
                    let f = (data.source)(p) * 2.0 * area * w;
                    for a in 0..3 {
                        if let Some(da) = dofs[a] {
                            rhs[da] += f * phi[a];
                        }
                    }
                }
            }
        }
    }
    let coupling = assemble_interface_coupling(&mesh, &geometry, &spaces)?;
    let stabilization = assemble_band_stab(&geometry, gamma);
    t.add_block(&coupling, n_u, 0, 1.0);
    t.add_block_transposed(&coupling, 0, n_u, 1.0);
    t.add_block(&stabilization, n_u, n_u, -1.0);
    Ok(InterfaceSystem { mesh, geometry, spaces, gamma, matrix: t.to_csr(), rhs, coupling, stabilization })
}

/// Direct solve; fails when the residual bound is not met.
pub fn solve_interface(system: &InterfaceSystem) -> Result<SolutionFields> {
    let sol = solve_direct(&system.matrix, &system.rhs)?;
    if !(sol.relative_residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::ResidualTooLarge(sol.relative_residual));
    }
    let mut u = sol.x;
    let lambda = u.split_off(system.spaces.n_u());
    Ok(SolutionFields { u, lambda, relative_residual: sol.relative_residual, report: sol.report })
}

/// Broken norms summed over both subdomains on the cut quadrature, plus
/// `‖h^{1/2}(λ - λ_h)‖_{L²(Γ)}` with `λ = -∂_x u`.
pub fn interface_errors(system: &InterfaceSystem, sol: &SolutionFields, data: &ProblemData) -> Result<ErrorRecord> {
    let exact = data.exact.as_ref().ok_or_else(|| invalid("error evaluation needs an exact solution"))?;
    let mesh = &system.mesh;
    let rule = triangle_rule_at_least(6);
    let (mut h1, mut l2) = (0.0, 0.0);
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let g = TriangleGeometry::of(mesh, k);
        for side in 0..2 {
            let coeffs = tri.map(|v| system.spaces.node_dofs[side][v].map_or(0.0, |d| sol.u[d]));
            let grad = (0..3).fold([0.0, 0.0], |acc, a| {
                [acc[0] + coeffs[a] * g.grad_bary[a][0], acc[1] + coeffs[a] * g.grad_bary[a][1]]
            });
            for piece in system.geometry.pieces(mesh, k, side) {
                let pg = TriangleGeometry::new(piece);
                for (bary, w) in rule.iter() {
                    let p = pg.point(bary);
                    let phi = g.barycentric(p);
                    let v: f64 = (0..3).map(|a| coeffs[a] * phi[a]).sum();
                    let ge = (exact.grad)(p);
                    let jw = 2.0 * pg.area * w;
                    l2 += jw * ((exact.u)(p) - v).powi(2);
                    h1 += jw * ((ge[0] - grad[0]).powi(2) + (ge[1] - grad[1]).powi(2));
                }
            }
        }
    }
    let seg_rule = gauss_segment(6)?;
    let mut mult = 0.0;
    for (c, cell) in system.geometry.cut_cells.iter().enumerate() {
        let [p, q] = cell.cut.segment;
        let len = cell.cut.segment_length();
        let h = mesh.diameter(cell.triangle);
        for (s, w) in seg_rule.abscissae() {
            let e = -(exact.grad)(crate::mesh::lerp(p, q, s))[0] - sol.lambda[c];
            mult += h * w * len * e * e;
        }
    }
    Ok(ErrorRecord {
        n: mesh.n,
        h: mesh.h,
        n_dofs: system.matrix.n_rows,
        err_h1: h1.sqrt(),
        err_l2: l2.sqrt(),
        err_mult: Some(mult.sqrt()),
        spec: None,
    })
}

/// `u = sin(πx) sin(πy)` on both subdomains, `f = 2π² u`.
pub fn interface_exact_solution() -> ProblemData {
    let u = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
    ProblemData::from_exact(
        Arc::new(u),
        Arc::new(|p| {
            [PI * (PI * p[0]).cos() * (PI * p[1]).sin(), PI * (PI * p[0]).sin() * (PI * p[1]).cos()]
        }),
        Arc::new(move |p| 2.0 * PI * PI * u(p)),
    )
}

pub fn run_interface_level(n: usize, x0: f64, gamma: f64, data: &ProblemData) -> Result<(SolutionFields, ErrorRecord)> {
    let mesh = Arc::new(build_unit_square_mesh(n)?);
    let system = assemble_interface_system(mesh, x0, gamma, data)?;
    let sol = solve_interface(&system)?;
    let rec = interface_errors(&system, &sol, data)?;
    Ok((sol, rec))
}

/// Interface convergence study, one thread per level. An interface lying on
/// a grid line of any level is rejected up front.
pub fn interface_study(levels: &[usize], x0: f64, gamma: f64, data: &ProblemData) -> Result<ConvergenceStudy> {
    validate_levels(levels)?;
    for &n in levels {
        if (0..=n).any(|i| (i as f64 / n as f64 - x0).abs() <= DEGENERATE_CUT_TOL) {
            return Err(Error::DegenerateCut { x0 });
        }
    }
    let levels: Vec<LevelOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&n| {
                scope.spawn(move || match run_interface_level(n, x0, gamma, data) {
                    Ok((_, rec)) => LevelOutcome { n, record: Some(rec), status: "ok".into() },
                    Err(e) => LevelOutcome { n, record: None, status: e.kind().into() },
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("level worker panicked")).collect()
    });
    let ok: Vec<ErrorRecord> = levels.iter().filter_map(|o| o.record.clone()).collect();
    let rates = if ok.len() >= 3 { Some(estimate_rates(&ok)?) } else { None };
    Ok(ConvergenceStudy { levels, rates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize) -> Arc<TriMesh> {
        Arc::new(build_unit_square_mesh(n).unwrap())
    }

    #[test]
    fn reference_triangle_areas() {
        let cut = clip_triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 0.5).unwrap();
        assert!((cut.area(0) - 3.0 / 8.0).abs() < 1e-15);
        assert!((cut.area(1) - 1.0 / 8.0).abs() < 1e-15);
        assert!(cut.pieces.iter().flatten().all(|&t| signed_area(t) > 0.0));
        for p in cut.segment {
            assert_eq!(p[0], 0.5);
        }
        assert!((cut.segment_length() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interface_left_of_domain_cuts_nothing() {
        let g = classify_and_cut(&mesh(4), -0.3).unwrap();
        assert!(g.classes.iter().all(|&c| c == CellClass::Inside2));
        assert!(g.cut_cells.is_empty() && g.band_faces.is_empty());
    }

    #[test]
    fn grid_line_is_degenerate() {
        assert!(matches!(classify_and_cut(&mesh(8), 0.5), Err(Error::DegenerateCut { .. })));
        assert!(matches!(classify_and_cut(&mesh(8), 0.25 + 1e-10), Err(Error::DegenerateCut { .. })));
    }

    #[test]
    fn cut_areas_are_conserved() {
        let m = mesh(8);
        let g = classify_and_cut(&m, 0.5137).unwrap();
        assert_eq!(g.cut_cells.len(), 16);
        let (mut pieces, mut whole) = (0.0, 0.0);
        for c in &g.cut_cells {
            let area = m.signed_area(c.triangle);
            assert!(c.cut.area(0) > 0.0 && c.cut.area(1) > 0.0);
            assert!((c.cut.area(0) + c.cut.area(1) - area).abs() < 1e-12);
            assert!((c.cut.segment_length() - (c.cut.segment[0][1] - c.cut.segment[1][1]).abs()).abs() < 1e-15);
            pieces += c.cut.area(0) + c.cut.area(1);
            whole += area;
        }
        assert!((pieces - whole).abs() < 1e-12);
        let total: f64 = g.cut_cells.iter().map(|c| c.cut.segment_length()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // a column of 8 squares: 8 diagonals and 7 horizontal edges inside the band
        assert_eq!(g.band_faces.len(), 15);
    }

    #[test]
    fn dof_overlap_is_the_cut_band() {
        let m = mesh(8);
        let g = classify_and_cut(&m, 0.5137).unwrap();
        let s = InterfaceSpaces::build(&m, &g);
        let free = 7 * 7;
        // free nodes on the two grid columns bounding the band are doubled
        assert_eq!(s.n_u(), free + 2 * 7);
        assert_eq!(s.n_lambda, g.cut_cells.len());
    }

    #[test]
    fn constant_multiplier_has_no_jump_energy() {
        let g = classify_and_cut(&mesh(8), 0.5137).unwrap();
        let s = assemble_band_stab(&g, 1.0);
        assert!(s.quadratic_form(&vec![2.5; s.n_rows]).abs() < 1e-15);
        let alt: Vec<f64> = (0..s.n_rows).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(s.quadratic_form(&alt) > 0.0);
        assert_eq!(s.max_asymmetry(), 0.0);
    }

    #[test]
    fn equal_copies_have_no_coupling() {
        let m = mesh(8);
        let g = classify_and_cut(&m, 0.5137).unwrap();
        let s = InterfaceSpaces::build(&m, &g);
        let b = assemble_interface_coupling(&m, &g, &s).unwrap();
        let mut v = vec![0.0; s.n_u()];
        for node in 0..m.nodes.len() {
            let value = 1.0 + m.nodes[node][0] * 3.0 - m.nodes[node][1];
            for side in 0..2 {
                if let Some(d) = s.node_dofs[side][node] {
                    v[d] = value;
                }
            }
        }
        assert!(b.mul_vec(&v).iter().all(|x| x.abs() < 1e-14));
        // a unit jump couples with the segment length
        let mut jump = vec![0.0; s.n_u()];
        jump[..s.n_dofs[0]].iter_mut().for_each(|x| *x = 1.0);
        let bt = b.mul_vec(&jump);
        for (c, cell) in g.cut_cells.iter().enumerate() {
            let tri = m.triangles[cell.triangle];
            if tri.iter().all(|&v| s.node_dofs[0][v].is_some()) {
                assert!((bt[c] - cell.cut.segment_length()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn homogeneous_problem_gives_zero() {
        let data = ProblemData::zero();
        let sys = assemble_interface_system(mesh(8), 0.5137, 1.0, &data).unwrap();
        let sol = solve_interface(&sys).unwrap();
        assert!(sol.u.iter().chain(&sol.lambda).all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn manufactured_run_is_accurate() {
        let data = interface_exact_solution();
        let (_, rec) = run_interface_level(16, 0.5137, 1.0, &data).unwrap();
        assert!(rec.err_h1.is_finite() && rec.err_h1 < 0.3, "{rec:?}");
        assert!(rec.err_l2 < 1e-2, "{rec:?}");
    }

    #[test]
    fn tiny_interface_shift_is_continuous() {
        let data = interface_exact_solution();
        let (_, a) = run_interface_level(8, 0.5137, 1.0, &data).unwrap();
        let (_, b) = run_interface_level(8, 0.5137 + 1e-14, 1.0, &data).unwrap();
        assert!((a.err_h1 - b.err_h1).abs() <= 1e-6 * a.err_h1);
    }

    #[test]
    fn rejects_interface_outside_domain() {
        let data = ProblemData::zero();
        assert!(assemble_interface_system(mesh(4), 1.2, 1.0, &data).is_err());
    }
}
