//! Manufactured solutions, error norms, convergence rates and the numerical
//! studies (γ-sweep, inf-sup constants, stabiliser norm equivalence).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::invalid;
use crate::forms::{trace_h, ProblemData};
use crate::linalg::{symmetric_eigen, symmetric_inertia};
use crate::mesh::build_unit_square_mesh;
use crate::quadrature::{gauss_segment, triangle_rule_at_least};
use crate::solver::{
    assemble_system, compute_infsup, dirichlet_multiplier_space, multiplier_norm_matrix, primal_norm_matrix, solve,
    stable_space, MethodSpec, SaddleSystem, SolutionFields, Variant,
};
use crate::spaces::{build_primal_space, FeSpace, MultSpace, MultiplierKind};
use crate::stabilization::{assemble_jump_stab, assemble_projection_stab};
use crate::{Error, Result};

/// `u = cos(πx)cos(πy)/(2π²) + x(1-x)y(1-y)/4` with its gradient and `f = -Δu`.
pub fn exact_solution() -> ProblemData {
    let c = 1.0 / (2.0 * PI * PI);
    ProblemData::from_exact(
        Arc::new(move |p| c * (PI * p[0]).cos() * (PI * p[1]).cos() + 0.25 * p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])),
        Arc::new(move |p| {
            let (x, y) = (p[0], p[1]);
            [
                -c * PI * (PI * x).sin() * (PI * y).cos() + 0.25 * (1.0 - 2.0 * x) * y * (1.0 - y),
                -c * PI * (PI * x).cos() * (PI * y).sin() + 0.25 * x * (1.0 - x) * (1.0 - 2.0 * y),
            ]
        }),
        Arc::new(|p| {
            let (x, y) = (p[0], p[1]);
            (PI * x).cos() * (PI * y).cos() + 0.5 * (x * (1.0 - x) + y * (1.0 - y))
        }),
    )
}

/// Error norms of one discrete solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecord {
    pub n: usize,
    pub h: f64,
    pub n_dofs: usize,
    /// `‖∇(u - u_h)‖_{L²(Ω)}`.
    pub err_h1: f64,
    pub err_l2: f64,
    /// `‖h^{1/2}(λ - λ_h)‖_{L²}` on the Dirichlet sides; `None` without multiplier.
    pub err_mult: Option<f64>,
    pub spec: Option<MethodSpec>,
}

/// Volume error norms `(‖∇(u-u_h)‖, ‖u-u_h‖)` by quadrature of degree `2k+4`.
pub fn primal_errors(primal: &FeSpace, u_h: &[f64], data: &ProblemData) -> Result<(f64, f64)> {
    let exact = data.exact.as_ref().ok_or_else(|| invalid("error evaluation needs an exact solution"))?;
    let rule = triangle_rule_at_least(2 * primal.degree + 4);
    let (mut h1, mut l2) = (0.0, 0.0);
    for t in 0..primal.mesh.triangles.len() {
        let g = primal.geometry(t);
        let dofs = &primal.dof_map[t];
        for (bary, w) in rule.iter() {
            let p = g.point(bary);
            let b = crate::spaces::lagrange_basis(primal.degree, bary, &g.grad_bary);
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for i in 0..b.len {
                let c = u_h[dofs[i]];
                v += c * b.values[i];
                gx += c * b.grads[i][0];
                gy += c * b.grads[i][1];
            }
            let ge = (exact.grad)(p);
            let jw = 2.0 * g.area * w;
            l2 += jw * ((exact.u)(p) - v).powi(2);
            h1 += jw * ((ge[0] - gx).powi(2) + (ge[1] - gy).powi(2));
        }
    }
    Ok((h1.sqrt(), l2.sqrt()))
}

/// `‖h^{1/2}(λ - λ_h)‖_{L²(∂Ω_D)}`.
pub fn multiplier_error(primal: &FeSpace, mult: &MultSpace, lambda_h: &[f64], data: &ProblemData) -> Result<f64> {
    let exact = data.exact.as_ref().ok_or_else(|| invalid("error evaluation needs an exact solution"))?;
    let rule = gauss_segment((2 * primal.degree + 4).min(9))?;
    let mut sum = 0.0;
    for (s, seg) in mult.trace.segments.iter().enumerate() {
        let side = mult.trace.components[seg.component].side;
        let h = trace_h(&primal.mesh, mult, s);
        for (tq, w) in rule.abscissae() {
            let e = exact.multiplier(seg.point_at(tq), side) - mult.evaluate(lambda_h, s, tq);
            sum += h * w * seg.length() * e * e;
        }
    }
    Ok(sum.sqrt())
}

pub fn compute_errors(system: &SaddleSystem, sol: &SolutionFields, data: &ProblemData) -> Result<ErrorRecord> {
    let (err_h1, err_l2) = primal_errors(&system.primal, &sol.u, data)?;
    let err_mult = match &system.mult {
        Some(m) => Some(multiplier_error(&system.primal, m, &sol.lambda, data)?),
        None => None,
    };
    Ok(ErrorRecord {
        n: system.spec.n,
        h: system.primal.mesh.h,
        n_dofs: system.n_u + system.n_lambda,
        err_h1,
        err_l2,
        err_mult,
        spec: Some(system.spec),
    })
}

/// Least-squares slopes of `log(err)` against `log(h)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub h1: f64,
    pub l2: f64,
    pub mult: Option<f64>,
}

pub fn fit_slope(h: &[f64], err: &[f64]) -> Result<f64> {
    if h.len() != err.len() || h.len() < 3 {
        return Err(invalid("rate estimation needs at least three levels"));
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub fn estimate_rates(records: &[ErrorRecord]) -> Result<Rates> {
    if records.len() < 3 {
        return Err(invalid("rate estimation needs at least three records"));
    }
    if records.windows(2).any(|w| w[1].h >= w[0].h) {
        return Err(invalid("records must have strictly decreasing h"));
    }
    let h: Vec<f64> = records.iter().map(|r| r.h).collect();
    let pick = |f: fn(&ErrorRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let mult = if records.iter().all(|r| r.err_mult.is_some()) {
        Some(fit_slope(&h, &pick(|r| r.err_mult.unwrap()))?)
    } else {
        None
    };
    Ok(Rates { h1: fit_slope(&h, &pick(|r| r.err_h1))?, l2: fit_slope(&h, &pick(|r| r.err_l2))?, mult })
}

/// Assembles, solves and measures one method on one mesh.
pub fn run_level(spec: &MethodSpec, data: &ProblemData) -> Result<(SolutionFields, ErrorRecord)> {
    let system = assemble_system(spec, data)?;
    let sol = solve(&system)?;
    let rec = compute_errors(&system, &sol, data)?;
    Ok((sol, rec))
}

/// Outcome of one level of a convergence study.
#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub n: usize,
    pub record: Option<ErrorRecord>,
    /// `ok` or the error kind of a failed level.
    pub status: String,
}

#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub levels: Vec<LevelOutcome>,
    /// Slopes over the successful levels, when at least three succeeded.
    pub rates: Option<Rates>,
}

/// Runs `template` on every mesh in `levels`, one thread per level.
pub fn convergence_study(template: &MethodSpec, levels: &[usize], data: &ProblemData) -> Result<ConvergenceStudy> {
    validate_levels(levels)?;
    template.validate()?;
    let outcomes: Vec<LevelOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&n| {
                let spec = MethodSpec { n, ..*template };
                scope.spawn(move || match run_level(&spec, data) {
                    Ok((_, rec)) => LevelOutcome { n, record: Some(rec), status: "ok".into() },
                    Err(e) => LevelOutcome { n, record: None, status: e.kind().into() },
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("level worker panicked")).collect()
    });
    let ok: Vec<ErrorRecord> = outcomes.iter().filter_map(|o| o.record.clone()).collect();
    let rates = if ok.len() >= 3 { Some(estimate_rates(&ok)?) } else { None };
    Ok(ConvergenceStudy { levels: outcomes, rates })
}

pub fn validate_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() || levels[0] == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("levels must be positive and strictly increasing"));
    }
    Ok(())
}

/// `‖u_a - u_b‖_{L²}` for two coefficient vectors of the same space.
pub fn l2_distance(space: &FeSpace, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let rule = triangle_rule_at_least(2 * space.degree);
    let mut sum = 0.0;
    for t in 0..space.mesh.triangles.len() {
        let g = space.geometry(t);
        for (bary, w) in rule.iter() {
            let b = crate::spaces::lagrange_basis(space.degree, bary, &g.grad_bary);
            let v: f64 = (0..b.len).map(|i| diff[space.dof_map[t][i]] * b.values[i]).sum();
            sum += 2.0 * g.area * w * v * v;
        }
    }
    sum.sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaRow {
    pub gamma: f64,
    /// `‖u_BH(γ) - u_Nitsche‖_{L²}`; `None` when the solve failed.
    pub distance: Option<f64>,
    pub status: String,
    pub det_sign: Option<f64>,
    pub min_pivot_ratio: Option<f64>,
    /// Number of negative eigenvalues, tracked for symmetric systems only.
    pub negative_eigenvalues: Option<usize>,
    /// Hard singular factorisation, or a change of determinant sign or of
    /// inertia since the previous successful row. Either change means an
    /// eigenvalue crossed zero in between. Inertia catches the case where two
    /// eigenvalues cross together and the determinant keeps its sign.
    pub near_singular: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaSweep {
    pub variant: Variant,
    pub reference: Variant,
    pub n: usize,
    pub rows: Vec<GammaRow>,
}

impl GammaSweep {
    /// Brackets `(γ_prev, γ)` around every flagged row.
    pub fn singular_brackets(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (i, r) in self.rows.iter().enumerate().filter(|(_, r)| r.near_singular) {
            let lo = if i > 0 { self.rows[i - 1].gamma } else { r.gamma };
            out.push((lo, r.gamma));
        }
        out
    }
}

/// Distance between Barbosa–Hughes solutions and the Nitsche method of the
/// same symmetry, for each γ.
pub fn gamma_sweep(variant: Variant, degree: usize, n: usize, gammas: &[f64], data: &ProblemData) -> Result<GammaSweep> {
    let reference = match variant {
        Variant::BarbosaHughesNonsym => Variant::NitscheNonsym,
        Variant::BarbosaHughesSym => Variant::NitscheSym,
        other => return Err(invalid(format!("gamma sweep needs a Barbosa-Hughes variant, got {other}"))),
    };
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(invalid("gamma values must be positive and finite"));
    }
    let ref_sys = assemble_system(&MethodSpec::new(reference, degree, n, 0.0), data)?;
    let ref_sol = solve(&ref_sys)?;
    let mut rows: Vec<GammaRow> = Vec::with_capacity(gammas.len());
    let mut last_sign: Option<f64> = None;
    let mut last_negative: Option<usize> = None;
    for &gamma in gammas {
        let sys = assemble_system(&MethodSpec::new(variant, degree, n, gamma), data)?;
        let inertia = if variant.is_symmetric() { Some(symmetric_inertia(&sys.matrix)) } else { None };
        let row = match (solve(&sys), inertia) {
            (Ok(sol), inertia @ (None | Some(Ok(_)))) => {
                let sign = sol.report.det_sign;
                let negative = inertia.map(|r| r.map(|i| i.negative)).transpose()?;
                let flipped = last_sign.is_some_and(|s| s != sign);
                let crossed = matches!((last_negative, negative), (Some(a), Some(b)) if a != b);
                last_sign = Some(sign);
                last_negative = negative;
                GammaRow {
                    gamma,
                    distance: Some(l2_distance(&sys.primal, &sol.u, &ref_sol.u)),
                    status: "ok".into(),
                    det_sign: Some(sign),
                    min_pivot_ratio: Some(sol.report.min_pivot_ratio()),
                    negative_eigenvalues: negative,
                    near_singular: flipped || crossed,
                }
            }
            (Ok(sol), Some(Err(Error::SingularSystem { .. }))) => GammaRow {
                gamma,
                distance: Some(l2_distance(&sys.primal, &sol.u, &ref_sol.u)),
                status: "ok".into(),
                det_sign: Some(sol.report.det_sign),
                min_pivot_ratio: Some(sol.report.min_pivot_ratio()),
                negative_eigenvalues: None,
                near_singular: true,
            },
            (Ok(_), Some(Err(e))) => return Err(e),
            (Err(e @ (Error::SingularSystem { .. } | Error::ResidualTooLarge(_))), _) => GammaRow {
                gamma,
                distance: None,
                status: if matches!(e, Error::SingularSystem { .. }) { "singular" } else { "inaccurate" }.into(),
                det_sign: None,
                min_pivot_ratio: None,
                negative_eigenvalues: None,
                near_singular: true,
            },
            (Err(e), _) => return Err(e),
        };
        rows.push(row);
    }
    Ok(GammaSweep { variant, reference, n, rows })
}

/// Primal / multiplier pairings for the inf-sup study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfsupPair {
    /// P1 primal, P0 multipliers on the twice refined trace.
    P1P0Refined,
    /// P1 primal, continuous P1 multipliers (stable pair).
    P1P1Cont,
    P2P2Disc,
    P2P1Cont,
}

impl InfsupPair {
    pub const ALL: [InfsupPair; 4] =
        [InfsupPair::P1P0Refined, InfsupPair::P1P1Cont, InfsupPair::P2P2Disc, InfsupPair::P2P1Cont];

    pub fn name(self) -> &'static str {
        match self {
            InfsupPair::P1P0Refined => "p1-p0refined",
            InfsupPair::P1P1Cont => "p1-p1cont",
            InfsupPair::P2P2Disc => "p2-p2disc",
            InfsupPair::P2P1Cont => "p2-p1cont",
        }
    }

    /// `(primal degree, multiplier kind, trace refinement)`.
    pub fn spaces(self) -> (usize, MultiplierKind, usize) {
        match self {
            InfsupPair::P1P0Refined => (1, MultiplierKind::P0Disc, 2),
            InfsupPair::P1P1Cont => (1, MultiplierKind::P1Cont, 1),
            InfsupPair::P2P2Disc => (2, MultiplierKind::P2Disc, 1),
            InfsupPair::P2P1Cont => (2, MultiplierKind::P1Cont, 1),
        }
    }
}

impl fmt::Display for InfsupPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InfsupPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InfsupPair::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown inf-sup pair '{s}'")))
    }
}

/// Discrete inf-sup constant of `pair` on the `n × n` mesh, optionally with the
/// projection stabiliser (weight `gamma`) added.
pub fn infsup_constant(pair: InfsupPair, n: usize, stabilized: bool, gamma: f64) -> Result<f64> {
    let (k, kind, refine) = pair.spaces();
    let mesh = Arc::new(build_unit_square_mesh(n)?);
    let primal = build_primal_space(mesh.clone(), k)?;
    let mult = dirichlet_multiplier_space(&mesh, kind, refine)?;
    let b = crate::forms::assemble_coupling(&primal, &mult)?;
    let s = if stabilized { Some(assemble_projection_stab(&primal, &mult, &stable_space(&mesh)?, gamma)?) } else { None };
    compute_infsup(&b, s.as_ref(), &primal_norm_matrix(&primal), &multiplier_norm_matrix(&primal, &mult))
}

/// Eigenvalues of `J` at or below this fraction of its largest one span its kernel.
const KERNEL_RATIO: f64 = 1e-10;

/// Extreme generalized eigenvalues `(min, max)` of the projection-stabiliser
/// form against the jump-stabiliser form on the P0 space of the refined
/// trace, restricted to the complement of the jump kernel.
pub fn norm_equivalence(n: usize) -> Result<(f64, f64)> {
    let mesh = Arc::new(build_unit_square_mesh(n)?);
    let primal = build_primal_space(mesh.clone(), 1)?;
    let mult = dirichlet_multiplier_space(&mesh, MultiplierKind::P0Disc, 2)?;
    let p = assemble_projection_stab(&primal, &mult, &stable_space(&mesh)?, 1.0)?.to_dense();
    let j = assemble_jump_stab(&mult, 1.0)?.to_dense();
    let (jv, q) = symmetric_eigen(&j);
    let jmax = jv.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..jv.len()).filter(|&i| jv[i] > KERNEL_RATIO * jmax).collect();
    let qr = DMatrix::from_fn(q.nrows(), keep.len(), |r, c| q[(r, keep[c])]);
    // in this basis J is diagonal; scale to the identity
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(keep.len(), keep.iter().map(|&i| 1.0 / jv[i].sqrt())));
    let basis = qr * scale;
    let reduced = basis.transpose() * p * &basis;
    let (ev, _) = symmetric_eigen(&reduced);
    Ok((ev[0], *ev.last().unwrap()))
}
