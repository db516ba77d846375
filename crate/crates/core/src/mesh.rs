//! Structured triangulations of the unit square and the 1D trace meshes
//! living on its boundary sides.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

pub type Point = [f64; 2];

/// One of the four sides of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bottom,
    Top,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Top, Side::Left, Side::Right];

    pub fn outward_normal(self) -> Point {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
        }
    }

    /// Coordinate that runs along the side (x for horizontal sides, y otherwise).
    pub fn arc_coordinate(self, p: Point) -> f64 {
        match self {
            Side::Bottom | Side::Top => p[0],
            Side::Left | Side::Right => p[1],
        }
    }

    fn contains(self, p: Point) -> bool {
        const TOL: f64 = 1e-12;
        match self {
            Side::Bottom => p[1].abs() < TOL,
            Side::Top => (p[1] - 1.0).abs() < TOL,
            Side::Left => p[0].abs() < TOL,
            Side::Right => (p[0] - 1.0).abs() < TOL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Top => "top",
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bottom" => Ok(Side::Bottom),
            "top" => Ok(Side::Top),
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(invalid(format!("unknown side '{other}'"))),
        }
    }
}

/// Dirichlet part of the boundary used throughout the model problem.
pub const DIRICHLET_SIDES: [Side; 2] = [Side::Bottom, Side::Top];
pub const NEUMANN_SIDES: [Side; 2] = [Side::Left, Side::Right];

#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    /// Endpoints in the counterclockwise orientation of the adjacent triangle.
    pub nodes: [usize; 2],
    pub side: Side,
    pub normal: Point,
    pub triangle: usize,
    /// Index into [`TriMesh::edges`].
    pub edge: usize,
}

#[derive(Clone, Debug)]
pub struct InteriorFace {
    pub nodes: [usize; 2],
    pub triangles: [usize; 2],
    pub edge: usize,
}

/// Triangulation of the unit square.
///
/// Local edge `k` of a triangle joins vertices `k` and `(k + 1) % 3`.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub n: usize,
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub triangle_edges: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub interior_faces: Vec<InteriorFace>,
    pub h: f64,
}

/// Structured `n x n` mesh, each grid square split along its
/// lower-left to upper-right diagonal.
pub fn build_unit_square_mesh(n: usize) -> Result<TriMesh> {
    if n == 0 {
        return Err(invalid("mesh needs at least one subdivision per side"));
    }
    let step = 1.0 / n as f64;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * step, j as f64 * step]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }

    let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut adjacency: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut te = [0; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let e = *edge_ids.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                adjacency.push(Vec::new());
                edges.len() - 1
            });
            adjacency[e].push((t, k));
            te[k] = e;
        }
        triangle_edges.push(te);
    }

    let mut boundary_edges = Vec::new();
    let mut interior_faces = Vec::new();
    for (e, adj) in adjacency.iter().enumerate() {
        match adj.as_slice() {
            [(t, k)] => {
                let tri = triangles[*t];
                let nodes_ccw = [tri[*k], tri[(*k + 1) % 3]];
                let (pa, pb) = (nodes[nodes_ccw[0]], nodes[nodes_ccw[1]]);
                let side = Side::ALL
                    .into_iter()
                    .find(|s| s.contains(pa) && s.contains(pb))
                    .expect("boundary edge lies on a side of the unit square");
                boundary_edges.push(BoundaryEdge {
                    nodes: nodes_ccw,
                    side,
                    normal: side.outward_normal(),
                    triangle: *t,
                    edge: e,
                });
            }
            [(t0, _), (t1, _)] => interior_faces.push(InteriorFace {
                nodes: edges[e],
                triangles: [*t0, *t1],
                edge: e,
            }),
            _ => unreachable!("an edge of a conforming mesh has one or two neighbours"),
        }
    }
    let arc_mid = |b: &BoundaryEdge| {
        let (pa, pb) = (nodes[b.nodes[0]], nodes[b.nodes[1]]);
        b.side.arc_coordinate([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0])
    };
    boundary_edges.sort_by(|a, b| a.side.cmp(&b.side).then(arc_mid(a).total_cmp(&arc_mid(b))));

    let mut mesh = TriMesh {
        n,
        nodes,
        triangles,
        edges,
        triangle_edges,
        boundary_edges,
        interior_faces,
        h: 0.0,
    };
    mesh.h = (0..mesh.triangles.len()).map(|t| mesh.diameter(t)).fold(0.0, f64::max);
    Ok(mesh)
}

impl TriMesh {
    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(self.vertices(t))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let v = self.vertices(t);
        (0..3).map(|k| dist(v[k], v[(k + 1) % 3])).fold(0.0, f64::max)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let v = self.vertices(t);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.nodes[a], self.nodes[b])
    }

    pub fn boundary_edge_length(&self, b: usize) -> f64 {
        self.edge_length(self.boundary_edges[b].edge)
    }

    /// Debug dump: `v x y`, `t i j k` and `e i j tag` records, one per line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.nodes {
            writeln!(out, "v {} {}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(out, "t {} {} {}", t[0], t[1], t[2])?;
        }
        for b in &self.boundary_edges {
            writeln!(out, "e {} {} {}", b.nodes[0], b.nodes[1], b.side)?;
        }
        Ok(())
    }
}

/// Triangle of the structured mesh containing `p` (points outside are clamped).
pub fn locate(mesh: &TriMesh, p: Point) -> usize {
    let n = mesh.n;
    let cell = |c: f64| ((c * n as f64).floor().max(0.0) as usize).min(n - 1);
    let (i, j) = (cell(p[0]), cell(p[1]));
    let step = 1.0 / n as f64;
    let (dx, dy) = (p[0] - i as f64 * step, p[1] - j as f64 * step);
    2 * (j * n + i) + usize::from(dy > dx)
}

pub(crate) fn signed_area(v: [Point; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// One segment of a trace mesh. `a -> b` runs in the direction of increasing
/// arc coordinate along its component.
#[derive(Clone, Debug)]
pub struct TraceSegment {
    pub component: usize,
    pub a: Point,
    pub b: Point,
    pub s0: f64,
    pub s1: f64,
    /// Volume boundary edge (index into [`TriMesh::boundary_edges`]) containing the segment.
    pub boundary_edge: usize,
    /// Position of this segment among the `refine_factor` pieces of its boundary edge.
    pub sub: usize,
}

impl TraceSegment {
    pub fn length(&self) -> f64 {
        self.s1 - self.s0
    }

    pub fn point_at(&self, t: f64) -> Point {
        lerp(self.a, self.b, t)
    }
}

#[derive(Clone, Debug)]
pub struct TraceComponent {
    pub side: Side,
    /// Segment indices of this component, contiguous and ordered by arc coordinate.
    pub segments: std::ops::Range<usize>,
    pub start: Point,
    pub end: Point,
}

impl TraceComponent {
    pub fn length(&self) -> f64 {
        dist(self.start, self.end)
    }
}

/// A node strictly inside a component, shared by the segments `left` and `right`.
#[derive(Clone, Debug)]
pub struct TraceNode {
    pub point: Point,
    pub component: usize,
    pub left: usize,
    pub right: usize,
}

/// 1D mesh on a set of boundary sides, possibly refined relative to the
/// volume mesh trace.
#[derive(Clone, Debug)]
pub struct TraceMesh {
    pub components: Vec<TraceComponent>,
    pub segments: Vec<TraceSegment>,
    /// Interior nodes of every component; component endpoints (corners) are excluded.
    pub interior_nodes: Vec<TraceNode>,
    pub refine_factor: usize,
    /// Subdivision count of the volume mesh the trace was extracted from.
    pub mesh_n: usize,
}

pub fn extract_trace_mesh(mesh: &TriMesh, components: &[Side], refine_factor: usize) -> Result<TraceMesh> {
    if components.is_empty() {
        return Err(invalid("trace mesh needs at least one boundary component"));
    }
    if refine_factor == 0 {
        return Err(invalid("refine factor must be a positive integer"));
    }
    let sides: BTreeSet<Side> = components.iter().copied().collect();
    let mut trace = TraceMesh {
        components: Vec::new(),
        segments: Vec::new(),
        interior_nodes: Vec::new(),
        refine_factor,
        mesh_n: mesh.n,
    };
    for side in sides {
        let c = trace.components.len();
        let first = trace.segments.len();
        // boundary_edges is sorted by side, then arc coordinate
        for (b, edge) in mesh.boundary_edges.iter().enumerate().filter(|(_, e)| e.side == side) {
            let (mut pa, mut pb) = (mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]);
            if side.arc_coordinate(pa) > side.arc_coordinate(pb) {
                std::mem::swap(&mut pa, &mut pb);
            }
            for sub in 0..refine_factor {
                let a = lerp(pa, pb, sub as f64 / refine_factor as f64);
                let b_pt = lerp(pa, pb, (sub + 1) as f64 / refine_factor as f64);
                trace.segments.push(TraceSegment {
                    component: c,
                    a,
                    b: b_pt,
                    s0: side.arc_coordinate(a),
                    s1: side.arc_coordinate(b_pt),
                    boundary_edge: b,
                    sub,
                });
            }
        }
        let last = trace.segments.len();
        for s in first + 1..last {
            trace.interior_nodes.push(TraceNode {
                point: trace.segments[s].a,
                component: c,
                left: s - 1,
                right: s,
            });
        }
        trace.components.push(TraceComponent {
            side,
            segments: first..last,
            start: trace.segments[first].a,
            end: trace.segments[last - 1].b,
        });
    }
    Ok(trace)
}

impl TraceMesh {
    pub fn sides(&self) -> Vec<Side> {
        self.components.iter().map(|c| c.side).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(TraceSegment::length).sum()
    }

    /// Checks that every segment lies inside the boundary edge of `mesh` it claims as parent.
    pub fn check_nested_in(&self, mesh: &TriMesh) -> Result<()> {
        let nested = self.mesh_n == mesh.n
            && self.segments.iter().all(|s| {
                mesh.boundary_edges.get(s.boundary_edge).is_some_and(|e| {
                    let (pa, pb) = (mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]);
                    let len = dist(pa, pb);
                    [s.a, s.b].iter().all(|&p| (dist(pa, p) + dist(p, pb) - len).abs() < 1e-12)
                })
            });
        if nested {
            Ok(())
        } else {
            Err(Error::UnsupportedConfiguration(
                "trace mesh is not nested in the volume mesh boundary".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh() {
        let m = build_unit_square_mesh(1).unwrap();
        assert_eq!((m.nodes.len(), m.triangles.len(), m.boundary_edges.len()), (4, 2, 4));
        assert!((m.h - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn counts_follow_closed_forms() {
        for n in 1..=9 {
            let m = build_unit_square_mesh(n).unwrap();
            assert_eq!(m.nodes.len(), (n + 1) * (n + 1));
            assert_eq!(m.triangles.len(), 2 * n * n);
            assert_eq!(m.boundary_edges.len(), 4 * n);
            assert_eq!(m.edges.len(), m.boundary_edges.len() + m.interior_faces.len());
        }
        let m = build_unit_square_mesh(2).unwrap();
        assert_eq!((m.nodes.len(), m.triangles.len(), m.boundary_edges.len()), (9, 8, 8));
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(build_unit_square_mesh(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn geometry_invariants() {
        for n in [1, 2, 4, 7, 16] {
            let m = build_unit_square_mesh(n).unwrap();
            let area: f64 = (0..m.triangles.len()).map(|t| m.signed_area(t)).sum();
            assert!((area - 1.0).abs() < 1e-12);
            assert!((0..m.triangles.len()).all(|t| m.signed_area(t) > 0.0));
            let perimeter: f64 = (0..m.boundary_edges.len()).map(|b| m.boundary_edge_length(b)).sum();
            assert!((perimeter - 4.0).abs() < 1e-12);
            for b in &m.boundary_edges {
                let (pa, pb) = (m.nodes[b.nodes[0]], m.nodes[b.nodes[1]]);
                let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
                let c = m.centroid(b.triangle);
                let out = (mid[0] - c[0]) * b.normal[0] + (mid[1] - c[1]) * b.normal[1];
                assert!(out > 0.0);
                assert!((b.normal[0].hypot(b.normal[1]) - 1.0).abs() < 1e-15);
            }
            for f in &m.interior_faces {
                let orient = |t: usize| {
                    let tri = m.triangles[t];
                    (0..3)
                        .find_map(|k| match (tri[k], tri[(k + 1) % 3]) {
                            (a, b) if a == f.nodes[0] && b == f.nodes[1] => Some(1),
                            (a, b) if a == f.nodes[1] && b == f.nodes[0] => Some(-1),
                            _ => None,
                        })
                        .unwrap()
                };
                assert_eq!(orient(f.triangles[0]), -orient(f.triangles[1]));
            }
        }
    }

    #[test]
    fn bottom_normal_points_down() {
        let m = build_unit_square_mesh(4).unwrap();
        let bottom: Vec<_> = m.boundary_edges.iter().filter(|b| b.side == Side::Bottom).collect();
        assert_eq!(bottom.len(), 4);
        assert!(bottom.iter().all(|b| b.normal == [0.0, -1.0]));
    }

    #[test]
    fn trace_counts() {
        let m = build_unit_square_mesh(4).unwrap();
        let t = extract_trace_mesh(&m, &[Side::Bottom], 1).unwrap();
        assert_eq!((t.segments.len(), t.interior_nodes.len()), (4, 3));

        let t = extract_trace_mesh(&m, &[Side::Bottom], 2).unwrap();
        assert_eq!(t.segments.len(), 8);
        assert!(t.segments.iter().all(|s| (s.length() - 0.125).abs() < 1e-15));
        assert_eq!(t.interior_nodes.len(), 7);
    }

    #[test]
    fn trace_excludes_corners() {
        let m = build_unit_square_mesh(2).unwrap();
        let t = extract_trace_mesh(&m, &[Side::Top, Side::Bottom], 1).unwrap();
        assert_eq!(t.segments.len(), 4);
        let pts: Vec<Point> = t.interior_nodes.iter().map(|n| n.point).collect();
        assert_eq!(pts, vec![[0.5, 0.0], [0.5, 1.0]]);
    }

    #[test]
    fn trace_segments_contiguous_and_measure() {
        let m = build_unit_square_mesh(5).unwrap();
        let t = extract_trace_mesh(&m, &Side::ALL, 3).unwrap();
        assert!((t.total_length() - 4.0).abs() < 1e-12);
        for c in &t.components {
            assert_eq!(c.segments.len(), 15);
            for s in c.segments.start + 1..c.segments.end {
                assert_eq!(t.segments[s - 1].b, t.segments[s].a);
            }
        }
        t.check_nested_in(&m).unwrap();
        let other = build_unit_square_mesh(4).unwrap();
        assert!(t.check_nested_in(&other).is_err());
    }

    #[test]
    fn empty_component_set_rejected() {
        let m = build_unit_square_mesh(2).unwrap();
        assert!(extract_trace_mesh(&m, &[], 1).is_err());
        assert!(extract_trace_mesh(&m, &[Side::Top], 0).is_err());
    }

    #[test]
    fn dump_format() {
        let m = build_unit_square_mesh(1).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("t ")).count(), 2);
        assert!(text.contains("e 0 1 bottom"));
    }
}
