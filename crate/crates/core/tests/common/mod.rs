//! Independent oracles shared by the integration and acceptance suites.
//!
//! Discrete forms are compared against closed-form integrals of polynomials
//! on the unit square and its sides, computed from monomial moments.

#![allow(dead_code)]

use std::sync::Arc;

use lmstab::forms::{assemble_coupling, assemble_load, assemble_nitsche, assemble_stiffness, ProblemData};
use lmstab::linalg::symmetric_eigen;
use lmstab::mesh::{build_unit_square_mesh, Point};
use lmstab::quadrature::{gauss_segment, triangle_rule_at_least};
use lmstab::solver::{dirichlet_multiplier_space, stable_space};
use lmstab::spaces::{build_primal_space, FeSpace, MultiplierKind};
use lmstab::stabilization::{assemble_bh_stab, assemble_jump_stab, assemble_projection_stab};

/// Sparse bivariate polynomial `Σ c x^a y^b`.
#[derive(Clone, Debug)]
pub struct Poly(pub Vec<(u32, u32, f64)>);

impl Poly {
    pub fn eval(&self, p: Point) -> f64 {
        self.0.iter().map(|&(a, b, c)| c * p[0].powi(a as i32) * p[1].powi(b as i32)).sum()
    }

    pub fn dx(&self) -> Poly {
        Poly(self.0.iter().filter(|t| t.0 > 0).map(|&(a, b, c)| (a - 1, b, c * a as f64)).collect())
    }

    pub fn dy(&self) -> Poly {
        Poly(self.0.iter().filter(|t| t.1 > 0).map(|&(a, b, c)| (a, b - 1, c * b as f64)).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = Vec::new();
        for &(a, b, c) in &self.0 {
            for &(d, e, f) in &o.0 {
                out.push((a + d, b + e, c * f));
            }
        }
        Poly(out)
    }

    pub fn square_integral(&self) -> f64 {
        self.0.iter().map(|&(a, b, c)| c / ((a + 1) * (b + 1)) as f64).sum()
    }

    /// Integral over the side `y = y0` with `y0 ∈ {0, 1}`.
    pub fn horizontal_side_integral(&self, y0: f64) -> f64 {
        self.0.iter().map(|&(a, b, c)| c * y0.powi(b as i32) / (a + 1) as f64).sum()
    }
}

/// Test polynomials of total degree at most `k`.
pub fn polys(k: u32) -> Vec<Poly> {
    let mut out = vec![Poly(vec![(0, 0, 1.3)])];
    if k >= 1 {
        out.push(Poly(vec![(0, 0, 0.2), (1, 0, -0.7), (0, 1, 1.9)]));
        out.push(Poly(vec![(1, 0, 2.1), (0, 1, 0.4)]));
    }
    if k >= 2 {
        out.push(Poly(vec![(2, 0, 1.0), (1, 1, -0.8), (0, 2, 0.5), (0, 0, 0.1)]));
        out.push(Poly(vec![(1, 1, 1.7), (0, 2, -1.2), (1, 0, 0.3)]));
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Largest error of the segment and triangle rules on monomials up to their
/// advertised degree.
pub fn quadrature_exactness_error() -> f64 {
    let mut worst: f64 = 0.0;
    for d in 0..=9 {
        let rule = gauss_segment(d).unwrap();
        for a in 0..=d {
            let q: f64 = rule.abscissae().map(|(t, w)| w * t.powi(a as i32)).sum();
            worst = worst.max((q - 1.0 / (a + 1) as f64).abs());
        }
    }
    for d in 0..=12 {
        let rule = triangle_rule_at_least(d);
        for a in 0..=d as u32 {
            for b in 0..=(d as u32 - a) {
                let q: f64 = rule.reference_points().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                worst = worst.max((q - exact).abs());
            }
        }
    }
    worst
}

fn space(n: usize, k: usize) -> FeSpace {
    build_primal_space(Arc::new(build_unit_square_mesh(n).unwrap()), k).unwrap()
}

/// `|I p^T A I q - ∫ ∇p·∇q|` over test polynomials reproduced by the space.
pub fn stiffness_oracle_error(n: usize, k: usize) -> f64 {
    let v = space(n, k);
    let a = assemble_stiffness(&v);
    let mut worst: f64 = 0.0;
    for p in polys(k as u32) {
        for q in polys(k as u32) {
            let exact = (p.dx().mul(&q.dx())).square_integral() + (p.dy().mul(&q.dy())).square_integral();
            let disc = a.bilinear_form(&v.interpolate(|x| p.eval(x)), &v.interpolate(|x| q.eval(x)));
            worst = worst.max((disc - exact).abs());
        }
    }
    worst
}

/// P1 stiffness rows at interior nodes reproduce the five-point stencil.
pub fn five_point_error(n: usize) -> f64 {
    let v = space(n, 1);
    let a = assemble_stiffness(&v);
    let mut worst: f64 = 0.0;
    let node = |i: usize, j: usize| j * (n + 1) + i;
    for j in 1..n {
        for i in 1..n {
            let row = node(i, j);
            let p = v.mesh.nodes[row];
            assert!((p[0] - i as f64 / n as f64).abs() < 1e-15 && (p[1] - j as f64 / n as f64).abs() < 1e-15);
            let mut expect = vec![(row, 4.0), (node(i - 1, j), -1.0), (node(i + 1, j), -1.0)];
            expect.extend([(node(i, j - 1), -1.0), (node(i, j + 1), -1.0)]);
            let mut total = 0.0;
            for (c, e) in expect {
                worst = worst.max((a.get(row, c) - e).abs());
                total += a.get(row, c).abs();
            }
            let all: f64 = a.row(row).map(|(_, x)| x.abs()).sum();
            worst = worst.max((all - total).abs());
        }
    }
    worst
}

/// `λ^T B u` against `∫_{y=0} p q + ∫_{y=1} p q` for every multiplier kind.
pub fn coupling_oracle_error(n: usize) -> f64 {
    let cases = [
        (1, MultiplierKind::P0Disc, 2, 0),
        (1, MultiplierKind::P1Cont, 1, 1),
        (2, MultiplierKind::P2Disc, 1, 2),
        (2, MultiplierKind::P1Cont, 1, 1),
        (2, MultiplierKind::P0Disc, 2, 0),
    ];
    let mut worst: f64 = 0.0;
    for (k, kind, refine, mult_degree) in cases {
        let v = space(n, k);
        let m = dirichlet_multiplier_space(&v.mesh, kind, refine).unwrap();
        let b = assemble_coupling(&v, &m).unwrap();
        // multiplier test functions depend on x only along the sides
        let lambdas: Vec<Poly> = match mult_degree {
            0 => vec![Poly(vec![(0, 0, 1.3)])],
            1 => vec![Poly(vec![(0, 0, 0.4), (1, 0, -1.1)])],
            _ => vec![Poly(vec![(0, 0, 0.4), (1, 0, -1.1), (2, 0, 0.9)])],
        };
        for p in &lambdas {
            for q in polys(k as u32) {
                let pq = p.mul(&q);
                let exact = pq.horizontal_side_integral(0.0) + pq.horizontal_side_integral(1.0);
                let disc = b.bilinear_form(&m.interpolate(|x| p.eval(x)), &v.interpolate(|x| q.eval(x)));
                worst = worst.max((disc - exact).abs());
            }
        }
    }
    worst
}

/// `v^T N u` against `-∫ ∂_n u v ± ∫ ∂_n v u` on the Dirichlet sides.
pub fn nitsche_oracle_error(n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in [1, 2] {
        let v = space(n, k);
        for symmetric in [false, true] {
            let (nmat, _) = assemble_nitsche(&v, &ProblemData::zero(), symmetric);
            let s = if symmetric { -1.0 } else { 1.0 };
            for p in polys(k as u32) {
                for q in polys(k as u32) {
                    // outward normals: -y on y = 0, +y on y = 1
                    let side = |y0: f64, sign: f64| {
                        let dn_u = q.dy().mul(&p);
                        let dn_v = p.dy().mul(&q);
                        sign * (-dn_u.horizontal_side_integral(y0) + s * dn_v.horizontal_side_integral(y0))
                    };
                    let exact = side(0.0, -1.0) + side(1.0, 1.0);
                    let disc = nmat.bilinear_form(&v.interpolate(|x| p.eval(x)), &v.interpolate(|x| q.eval(x)));
                    worst = worst.max((disc - exact).abs());
                }
            }
        }
    }
    worst
}

/// Load vector against `∫ f q` for a polynomial source and no boundary data.
pub fn load_oracle_error(n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let f = Poly(vec![(1, 1, 2.0), (2, 0, -0.5), (0, 0, 0.3)]);
    for k in [1, 2] {
        let v = space(n, k);
        let fs = f.clone();
        let data = ProblemData {
            source: Arc::new(move |p| fs.eval(p)),
            dirichlet: Arc::new(|_, _| 0.0),
            neumann: Arc::new(|_, _| 0.0),
            exact: None,
        };
        let load = assemble_load(&v, None, &data);
        for q in polys(k as u32) {
            let exact = f.mul(&q).square_integral();
            worst = worst.max((dot(&load.primal, &v.interpolate(|x| q.eval(x))) - exact).abs());
        }
    }
    worst
}

/// Checks of the stabilisers: symmetric, positive semidefinite, and zero on
/// their kernels. Returns a description of the first violation.
pub fn stabilizer_checks(n: usize) -> Result<(), String> {
    let v = space(n, 1);
    let lam = dirichlet_multiplier_space(&v.mesh, MultiplierKind::P0Disc, 2).unwrap();
    let stable = stable_space(&v.mesh).unwrap();
    let ones = vec![1.0; lam.n_dofs];
    let mut mats = vec![
        ("projection", assemble_projection_stab(&v, &lam, &stable, 1.0).unwrap()),
        ("jump-p0", assemble_jump_stab(&lam, 1.0).unwrap()),
    ];
    let v2 = space(n, 2);
    let lam2 = dirichlet_multiplier_space(&v2.mesh, MultiplierKind::P2Disc, 1).unwrap();
    let jump2 = assemble_jump_stab(&lam2, 1.0).unwrap();
    let quad = lam2.interpolate(|p| 0.3 - p[0] + 2.0 * p[0] * p[0]);
    if jump2.quadratic_form(&quad).abs() > 1e-12 {
        return Err("jump-p2 does not vanish on a global quadratic".into());
    }
    mats.push(("jump-p2", jump2));
    for (name, s) in &mats {
        let scale = s.max_abs();
        if s.max_asymmetry() > 1e-14 * scale {
            return Err(format!("{name} is not symmetric"));
        }
        let (ev, _) = symmetric_eigen(&s.to_dense());
        if ev[0] < -1e-12 * scale {
            return Err(format!("{name} has eigenvalue {:.3e}", ev[0]));
        }
    }
    for (name, s) in &mats[..2] {
        if s.quadratic_form(&ones).abs() > 1e-12 * s.max_abs() {
            return Err(format!("{name} does not vanish on constants"));
        }
    }
    // Barbosa-Hughes residual vanishes for the exact flux of a linear u
    let bh = assemble_bh_stab(&v, &lam, 1.0).map_err(|e| e.to_string())?;
    let u = v.interpolate(|p| 0.5 + p[0] - 2.0 * p[1]);
    // -∂_n u = -(-1)(-2) = -2 on y = 0 and -(+1)(-2) = 2 on y = 1
    let l = lam.interpolate(|p| if p[1] < 0.5 { -2.0 } else { 2.0 });
    if bh.energy(&u, &l).abs() > 1e-12 {
        return Err(format!("bh residual energy {:.3e}", bh.energy(&u, &l)));
    }
    let r: Vec<f64> = (0..lam.n_dofs).map(|i| (i as f64 * 0.37).sin()).collect();
    if bh.energy(&u, &r) < 0.0 {
        return Err("bh energy negative".into());
    }
    Ok(())
}
