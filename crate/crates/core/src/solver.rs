//! Method catalogue, saddle-point assembly, direct solves and the discrete
//! inf-sup constant.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::invalid;
use crate::forms::{
    assemble_boundary_mass, assemble_coupling, assemble_load, assemble_multiplier_mass, assemble_nitsche,
    assemble_stiffness, ProblemData,
};
use crate::linalg::{generalized_symmetric_eigenvalues, solve_direct, PivotReport};
use crate::mesh::{build_unit_square_mesh, extract_trace_mesh, TriMesh, DIRICHLET_SIDES};
use crate::spaces::{build_multiplier_space, build_primal_space, FeSpace, MultSpace, MultiplierKind};
use crate::sparse::{SparseMatrix, Triplets};
use crate::stabilization::{assemble_bh_stab, assemble_jump_stab, assemble_projection_stab};
use crate::{Error, Result};

/// Relative residual every successful solve must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Inf-sup stable pair `V_h × L_h`, no stabilisation.
    StablePair,
    /// Penalty on the distance to the stable space `L_h`.
    ProjectionStab,
    /// Interior-penalty jump stabilisation of the multiplier.
    JumpStab,
    BarbosaHughesNonsym,
    BarbosaHughesSym,
    /// Penalty-free nonsymmetric Nitsche method.
    NitscheNonsym,
    /// Penalty-free symmetric Nitsche method.
    NitscheSym,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::StablePair,
        Variant::ProjectionStab,
        Variant::JumpStab,
        Variant::BarbosaHughesNonsym,
        Variant::BarbosaHughesSym,
        Variant::NitscheNonsym,
        Variant::NitscheSym,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::StablePair => "stable",
            Variant::ProjectionStab => "projection",
            Variant::JumpStab => "jump",
            Variant::BarbosaHughesNonsym => "bh-nonsym",
            Variant::BarbosaHughesSym => "bh-sym",
            Variant::NitscheNonsym => "nitsche-nonsym",
            Variant::NitscheSym => "nitsche-sym",
        }
    }

    pub fn has_multiplier(self) -> bool {
        !matches!(self, Variant::NitscheNonsym | Variant::NitscheSym)
    }

    pub fn uses_gamma(self) -> bool {
        !matches!(self, Variant::StablePair | Variant::NitscheNonsym | Variant::NitscheSym)
    }

    /// Whether the assembled matrix is symmetric under the chosen sign convention.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Variant::BarbosaHughesNonsym | Variant::NitscheNonsym)
    }

    /// Default multiplier space and trace refinement for primal degree `k`.
    pub fn default_multiplier(self, k: usize) -> Option<(MultiplierKind, usize)> {
        match self {
            Variant::NitscheNonsym | Variant::NitscheSym => None,
            Variant::StablePair => Some((MultiplierKind::P1Cont, 1)),
            _ if k == 1 => Some((MultiplierKind::P0Disc, 2)),
            _ => Some((MultiplierKind::P2Disc, 1)),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown method '{s}'")))
    }
}

/// Multiplier space choice: family plus trace refinement factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiplierChoice {
    pub kind: MultiplierKind,
    pub refine: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodSpec {
    pub variant: Variant,
    pub degree: usize,
    pub multiplier: Option<MultiplierChoice>,
    pub gamma: f64,
    pub n: usize,
}

impl MethodSpec {
    /// Method with the default multiplier space for the variant and degree.
    pub fn new(variant: Variant, degree: usize, n: usize, gamma: f64) -> Self {
        let multiplier = variant
            .default_multiplier(degree)
            .map(|(kind, refine)| MultiplierChoice { kind, refine });
        Self { variant, degree, multiplier, gamma, n }
    }

    pub fn with_multiplier(mut self, kind: MultiplierKind, refine: usize) -> Self {
        self.multiplier = Some(MultiplierChoice { kind, refine });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(invalid(format!("unsupported primal degree {}", self.degree)));
        }
        if self.n == 0 {
            return Err(invalid("mesh subdivisions must be at least 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be finite and nonnegative, got {}", self.gamma)));
        }
        match (self.variant.has_multiplier(), self.multiplier) {
            (false, Some(_)) => Err(invalid("Nitsche variants carry no multiplier space")),
            (true, None) => Err(invalid(format!("{} needs a multiplier space", self.variant))),
            (true, Some(m)) if self.variant == Variant::StablePair && m.kind != MultiplierKind::P1Cont => {
                Err(invalid("the stable pair requires p1-cont multipliers"))
            }
            (true, Some(m)) if m.refine == 0 => Err(invalid("refine factor must be positive")),
            _ => Ok(()),
        }
    }
}

/// Assembled block system `[[A, B_upᵀ], [B_lo, -S]]` with its spaces.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub spec: MethodSpec,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub n_u: usize,
    pub n_lambda: usize,
    pub primal: FeSpace,
    pub mult: Option<MultSpace>,
}

#[derive(Clone, Debug)]
pub struct SolutionFields {
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub relative_residual: f64,
    pub report: PivotReport,
}

/// Multiplier space on the Dirichlet sides of `mesh`.
pub fn dirichlet_multiplier_space(mesh: &TriMesh, kind: MultiplierKind, refine: usize) -> Result<MultSpace> {
    let trace = extract_trace_mesh(mesh, &DIRICHLET_SIDES, refine)?;
    build_multiplier_space(Arc::new(trace), kind)
}

/// The stable space `L_h`: continuous P1 on the unrefined Dirichlet trace.
pub fn stable_space(mesh: &TriMesh) -> Result<MultSpace> {
    dirichlet_multiplier_space(mesh, MultiplierKind::P1Cont, 1)
}

pub fn assemble_system(spec: &MethodSpec, data: &ProblemData) -> Result<SaddleSystem> {
    spec.validate()?;
    let mesh = Arc::new(build_unit_square_mesh(spec.n)?);
    let primal = build_primal_space(mesh.clone(), spec.degree)?;
    let a = assemble_stiffness(&primal);
    let n_u = primal.n_dofs;

    let Some(choice) = spec.multiplier else {
        let symmetric = spec.variant == Variant::NitscheSym;
        let (nit, nit_rhs) = assemble_nitsche(&primal, data, symmetric);
        let load = assemble_load(&primal, None, data);
        let rhs = load.primal.iter().zip(&nit_rhs).map(|(f, g)| f + g).collect();
        return Ok(SaddleSystem {
            spec: *spec,
            matrix: a.add_scaled(&nit, 1.0),
            rhs,
            n_u,
            n_lambda: 0,
            primal,
            mult: None,
        });
    };

    let mult = dirichlet_multiplier_space(&mesh, choice.kind, choice.refine)?;
    let n_l = mult.n_dofs;
    let b = assemble_coupling(&primal, &mult)?;
    let load = assemble_load(&primal, Some(&mult), data);
    let mut t = Triplets::new(n_u + n_l, n_u + n_l);
    t.add_block(&a, 0, 0, 1.0);
    t.add_block_transposed(&b, 0, n_u, 1.0);
    let mut g_sign = 1.0;
    match spec.variant {
        Variant::StablePair => t.add_block(&b, n_u, 0, 1.0),
        Variant::ProjectionStab => {
            let s = assemble_projection_stab(&primal, &mult, &stable_space(&mesh)?, spec.gamma)?;
            t.add_block(&b, n_u, 0, 1.0);
            t.add_block(&s, n_u, n_u, -1.0);
        }
        Variant::JumpStab => {
            let s = assemble_jump_stab(&mult, spec.gamma)?;
            t.add_block(&b, n_u, 0, 1.0);
            t.add_block(&s, n_u, n_u, -1.0);
        }
        Variant::BarbosaHughesNonsym | Variant::BarbosaHughesSym => {
            let bh = assemble_bh_stab(&primal, &mult, spec.gamma)?;
            // nonsymmetric: +γ residual term with -b(u, μ); symmetric: -γ residual term with +b(μ, u)
            let s = if spec.variant == Variant::BarbosaHughesNonsym { 1.0 } else { -1.0 };
            t.add_block(&bh.uu, 0, 0, s);
            t.add_block(&bh.u_lambda, 0, n_u, s);
            t.add_block(&b, n_u, 0, -s);
            t.add_block(&bh.lambda_u, n_u, 0, s);
            t.add_block(&bh.lambda_lambda, n_u, n_u, s);
            g_sign = -s;
        }
        Variant::NitscheNonsym | Variant::NitscheSym => unreachable!("validated above"),
    }
    let mut rhs = load.primal;
    rhs.extend(load.multiplier.iter().map(|g| g_sign * g));
    Ok(SaddleSystem { spec: *spec, matrix: t.to_csr(), rhs, n_u, n_lambda: n_l, primal, mult: Some(mult) })
}

pub fn solve(system: &SaddleSystem) -> Result<SolutionFields> {
    let sol = solve_direct(&system.matrix, &system.rhs)?;
    if !(sol.relative_residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::ResidualTooLarge(sol.relative_residual));
    }
    let mut u = sol.x;
    let lambda = u.split_off(system.n_u);
    Ok(SolutionFields { u, lambda, relative_residual: sol.relative_residual, report: sol.report })
}

/// Eigenvalues below this fraction of the largest one are treated as exact zeros.
pub const INFSUP_ZERO_RATIO: f64 = 1e-10;

/// `β_h = sqrt(μ_min)` for `(B M_V⁻¹ Bᵀ + S) x = μ M_L x`.
pub fn compute_infsup(
    b: &SparseMatrix,
    s: Option<&SparseMatrix>,
    m_v: &SparseMatrix,
    m_l: &SparseMatrix,
) -> Result<f64> {
    let mv = m_v
        .to_dense()
        .cholesky()
        .ok_or_else(|| invalid("primal norm matrix is not positive definite"))?;
    let bd = b.to_dense();
    let x = mv.solve(&bd.transpose());
    let mut lhs: DMatrix<f64> = &bd * x;
    if let Some(s) = s {
        lhs += s.to_dense();
    }
    let ev = generalized_symmetric_eigenvalues(&lhs, &m_l.to_dense())?;
    let max = ev.last().copied().unwrap_or(0.0);
    let min = ev.first().copied().unwrap_or(0.0);
    Ok(if min <= INFSUP_ZERO_RATIO * max { 0.0 } else { min.sqrt() })
}

/// `‖u‖²_{1,h}` matrix: stiffness plus `h⁻¹`-weighted Dirichlet boundary mass.
pub fn primal_norm_matrix(primal: &FeSpace) -> SparseMatrix {
    assemble_stiffness(primal).add_scaled(&assemble_boundary_mass(primal, &DIRICHLET_SIDES, |h| 1.0 / h), 1.0)
}

/// `‖λ‖²_{-1/2,h}` matrix: `h`-weighted multiplier mass.
pub fn multiplier_norm_matrix(primal: &FeSpace, mult: &MultSpace) -> SparseMatrix {
    assemble_multiplier_mass(primal, mult, |h| h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("nitsche".parse::<Variant>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(MethodSpec::new(Variant::NitscheSym, 1, 4, 1.0).multiplier.is_none());
        assert!(MethodSpec::new(Variant::StablePair, 1, 4, 1.0)
            .with_multiplier(MultiplierKind::P0Disc, 1)
            .validate()
            .is_err());
        assert!(MethodSpec::new(Variant::JumpStab, 3, 4, 1.0).validate().is_err());
        assert!(MethodSpec::new(Variant::JumpStab, 1, 4, -1.0).validate().is_err());
    }

    #[test]
    fn symmetry_follows_sign_convention() {
        let data = ProblemData::zero();
        for v in Variant::ALL {
            for k in [1, 2] {
                let sys = assemble_system(&MethodSpec::new(v, k, 4, 1.0), &data).unwrap();
                let asym = sys.matrix.max_asymmetry();
                if v.is_symmetric() {
                    assert!(asym <= 1e-14, "{v} k={k}: {asym}");
                } else {
                    assert!(asym > 1e-3, "{v} k={k}");
                }
            }
        }
    }

    #[test]
    fn stable_pair_ignores_gamma() {
        let data = ProblemData::linear(1.0, 1.0, 1.0);
        let a = assemble_system(&MethodSpec::new(Variant::StablePair, 1, 4, 1.0), &data).unwrap();
        let b = assemble_system(&MethodSpec::new(Variant::StablePair, 1, 4, 37.0), &data).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.rhs, b.rhs);
    }

    #[test]
    fn homogeneous_stable_pair_has_zero_solution() {
        let sys = assemble_system(&MethodSpec::new(Variant::StablePair, 1, 6, 1.0), &ProblemData::zero()).unwrap();
        let sol = solve(&sys).unwrap();
        assert!(sol.u.iter().chain(&sol.lambda).all(|&x| x == 0.0));
    }

    #[test]
    fn patch_test_every_variant() {
        let data = ProblemData::linear(1.0, 2.0, 3.0);
        for v in Variant::ALL {
            let sys = assemble_system(&MethodSpec::new(v, 1, 4, 1.0), &data).unwrap();
            let sol = solve(&sys).unwrap();
            let exact = sys.primal.interpolate(|p| 1.0 + 2.0 * p[0] + 3.0 * p[1]);
            let err = sol.u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{v}: {err}");
        }
    }

    #[test]
    fn diagonal_infsup_toy() {
        let b = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (1, 1, 3.0)]);
        let mv = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 4.0)]);
        let ml = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        // eigenvalues 4 and 9/4
        let beta = compute_infsup(&b, None, &mv, &ml).unwrap();
        assert!((beta - 1.5).abs() < 1e-14);
        let singular = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]);
        assert!(compute_infsup(&b, None, &mv, &singular).is_err());
    }
}
