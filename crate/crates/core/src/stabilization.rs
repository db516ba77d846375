//! Multiplier stabilisation operators: penalising the distance to the stable
//! subspace `L_h`, penalising inter-element jumps, and the residual-based
//! Barbosa–Hughes term.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::forms::{boundary_rule, normal_derivatives, trace_h};
use crate::quadrature::gauss_segment;
use crate::spaces::{FeSpace, MultSpace, MultiplierKind};
use crate::sparse::{SparseMatrix, Triplets};
use crate::{Error, Result};

/// Dense block of `m` with the given rows and columns.
pub(crate) fn dense_block(m: &SparseMatrix, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut pos = vec![usize::MAX; m.n_cols];
    for (c, &j) in cols.iter().enumerate() {
        pos[j] = c;
    }
    let mut d = DMatrix::zeros(rows.len(), cols.len());
    for (r, &i) in rows.iter().enumerate() {
        for (j, v) in m.row(i) {
            if pos[j] != usize::MAX {
                d[(r, pos[j])] += v;
            }
        }
    }
    d
}

fn scatter(t: &mut Triplets, block: &DMatrix<f64>, rows: &[usize], cols: &[usize]) {
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            if block[(r, c)] != 0.0 {
                t.push(i, j, block[(r, c)]);
            }
        }
    }
}

/// `∫ w(h) φ ψ` with `φ` from `fine` (rows) and `ψ` from `coarse` (columns),
/// where every segment of `fine` lies inside one segment of `coarse`.
pub fn assemble_cross_mass(
    primal: &FeSpace,
    fine: &MultSpace,
    coarse: &MultSpace,
    weight: impl Fn(f64) -> f64,
) -> Result<SparseMatrix> {
    let (tf, tc) = (&fine.trace, &coarse.trace);
    tf.check_nested_in(&primal.mesh)?;
    tc.check_nested_in(&primal.mesh)?;
    if tf.refine_factor % tc.refine_factor != 0 || tf.sides() != tc.sides() {
        return Err(Error::UnsupportedConfiguration(
            "multiplier trace meshes are not nested in each other".into(),
        ));
    }
    let ratio = tf.refine_factor / tc.refine_factor;
    let parent: HashMap<(usize, usize), usize> =
        tc.segments.iter().enumerate().map(|(s, seg)| ((seg.boundary_edge, seg.sub), s)).collect();
    let degree = fine.kind.polynomial_degree() + coarse.kind.polynomial_degree();
    let rule = gauss_segment(degree.max(1)).expect("low degree");
    let mut t = Triplets::new(fine.n_dofs, coarse.n_dofs);
    for (s, seg) in tf.segments.iter().enumerate() {
        let cs = parent[&(seg.boundary_edge, seg.sub / ratio)];
        let cseg = &tc.segments[cs];
        let wh = weight(trace_h(&primal.mesh, fine, s));
        let ell = seg.length();
        for (tq, w) in rule.abscissae() {
            let arc = seg.s0 + tq * ell;
            let tc_local = (arc - cseg.s0) / cseg.length();
            let bf = fine.eval(s, tq);
            let bc = coarse.eval(cs, tc_local);
            for (a, &i) in fine.dofs(s).iter().enumerate() {
                for (b, &j) in coarse.dofs(cs).iter().enumerate() {
                    t.push(i, j, wh * w * ell * bf.values[a] * bc.values[b]);
                }
            }
        }
    }
    Ok(t.to_csr())
}

/// Coefficient-wise L² projection from `source` onto `target`, built per
/// connected component.
#[derive(Clone, Debug)]
pub struct ProjectionOperator {
    pub source: MultSpace,
    pub target: MultSpace,
    /// `n_target × n_source`.
    pub matrix: SparseMatrix,
    /// Unweighted target mass matrix.
    pub target_mass: SparseMatrix,
    /// Unweighted `⟨φ_target, ψ_source⟩`, `n_target × n_source`.
    pub cross_mass: SparseMatrix,
}

impl ProjectionOperator {
    pub fn apply(&self, lambda: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(lambda)
    }
}

pub fn project_to_stable(primal: &FeSpace, source: &MultSpace, target: &MultSpace) -> Result<ProjectionOperator> {
    let (fine, coarse, source_is_fine) = if source.trace.refine_factor >= target.trace.refine_factor {
        (source, target, true)
    } else {
        (target, source, false)
    };
    let cross = assemble_cross_mass(primal, fine, coarse, |_| 1.0)?;
    let cross_mass = if source_is_fine { cross.transpose() } else { cross };
    let target_mass = crate::forms::assemble_multiplier_mass(primal, target, |_| 1.0);
    let mut t = Triplets::new(target.n_dofs, source.n_dofs);
    for c in 0..target.trace.components.len() {
        let rows = target.component_dofs(c);
        let cols = source.component_dofs(c);
        let m = dense_block(&target_mass, &rows, &rows);
        let rhs = dense_block(&cross_mass, &rows, &cols);
        let chol = m.cholesky().ok_or_else(|| Error::InvalidArgument("target mass matrix is not SPD".into()))?;
        scatter(&mut t, &chol.solve(&rhs), &rows, &cols);
    }
    Ok(ProjectionOperator {
        source: source.clone(),
        target: target.clone(),
        matrix: t.to_csr(),
        target_mass,
        cross_mass,
    })
}

/// `γ⟨h(λ − π_L λ), μ − π_L μ⟩` with `h` the primal trace size.
pub fn assemble_projection_stab(
    primal: &FeSpace,
    lambda: &MultSpace,
    stable: &MultSpace,
    gamma: f64,
) -> Result<SparseMatrix> {
    let proj = project_to_stable(primal, lambda, stable)?;
    let h = |h: f64| h;
    let m_ll = crate::forms::assemble_multiplier_mass(primal, lambda, h);
    let m_ss = crate::forms::assemble_multiplier_mass(primal, stable, h);
    let m_sl = if lambda.trace.refine_factor >= stable.trace.refine_factor {
        assemble_cross_mass(primal, lambda, stable, h)?.transpose()
    } else {
        assemble_cross_mass(primal, stable, lambda, h)?
    };
    let mut t = Triplets::new(lambda.n_dofs, lambda.n_dofs);
    for c in 0..lambda.trace.components.len() {
        let rl = lambda.component_dofs(c);
        let rs = stable.component_dofs(c);
        let p = dense_block(&proj.matrix, &rs, &rl);
        let a = dense_block(&m_ll, &rl, &rl);
        let b = dense_block(&m_sl, &rs, &rl);
        let m = dense_block(&m_ss, &rs, &rs);
        let bp = b.transpose() * &p;
        let s = a - &bp - bp.transpose() + p.transpose() * m * &p;
        let s = (&s + s.transpose()) * (0.5 * gamma);
        scatter(&mut t, &s, &rl, &rl);
    }
    Ok(t.to_csr())
}

/// Interior-penalty stabiliser on the jumps of the multiplier at interior
/// trace nodes: `γ h² [λ]²` for P0, plus `γ h⁴ [λ']²` and `γ h⁶ [λ'']²` for P2.
pub fn assemble_jump_stab(lambda: &MultSpace, gamma: f64) -> Result<SparseMatrix> {
    let trace = &lambda.trace;
    let mut t = Triplets::new(lambda.n_dofs, lambda.n_dofs);
    let orders = match lambda.kind {
        MultiplierKind::P0Disc => 1,
        MultiplierKind::P2Disc => 3,
        MultiplierKind::P1Cont => {
            return Err(Error::UnsupportedConfiguration(
                "jump stabilisation needs a discontinuous multiplier space".into(),
            ))
        }
    };
    for node in &trace.interior_nodes {
        let (l, r) = (node.left, node.right);
        let h = 0.5 * (trace.segments[l].length() + trace.segments[r].length());
        let (bl, br) = (lambda.eval(l, 1.0), lambda.eval(r, 0.0));
        let dofs: Vec<usize> = lambda.dofs(l).iter().chain(lambda.dofs(r)).copied().collect();
        for order in 0..orders {
            let pick = |b: &crate::spaces::TraceBasis| match order {
                0 => b.values,
                1 => b.d1,
                _ => b.d2,
            };
            let (vl, vr) = (pick(&bl), pick(&br));
            // jump taken as right minus left
            let jump: Vec<f64> = vl[..bl.len].iter().map(|v| -v).chain(vr[..br.len].iter().copied()).collect();
            let w = gamma * h.powi(2 + 2 * order as i32);
            for (a, &i) in dofs.iter().enumerate() {
                for (b, &j) in dofs.iter().enumerate() {
                    t.push(i, j, w * jump[a] * jump[b]);
                }
            }
        }
    }
    Ok(t.to_csr())
}

/// Blocks of `γ⟨h(λ + ∂_n u), μ + ∂_n v⟩` on the multiplier trace.
#[derive(Clone, Debug)]
pub struct BhBlocks {
    /// `γ⟨h ∂_n u, ∂_n v⟩`, `n_u × n_u`.
    pub uu: SparseMatrix,
    /// `γ⟨h λ, ∂_n v⟩`, `n_u × n_λ`.
    pub u_lambda: SparseMatrix,
    /// `γ⟨h ∂_n u, μ⟩`, `n_λ × n_u`.
    pub lambda_u: SparseMatrix,
    /// `γ⟨h λ, μ⟩`, `n_λ × n_λ`.
    pub lambda_lambda: SparseMatrix,
}

impl BhBlocks {
    /// Energy `γ‖h^{1/2}(λ + ∂_n u)‖²` of a pair of coefficient vectors.
    pub fn energy(&self, u: &[f64], lambda: &[f64]) -> f64 {
        self.uu.quadratic_form(u) + 2.0 * self.lambda_u.bilinear_form(lambda, u) + self.lambda_lambda.quadratic_form(lambda)
    }
}

pub fn assemble_bh_stab(primal: &FeSpace, lambda: &MultSpace, gamma: f64) -> Result<BhBlocks> {
    lambda.trace.check_nested_in(&primal.mesh)?;
    let mesh = &primal.mesh;
    let rule = boundary_rule(primal.degree);
    let (nu, nl) = (primal.n_dofs, lambda.n_dofs);
    let mut uu = Triplets::new(nu, nu);
    let mut lu = Triplets::new(nl, nu);
    let mut ll = Triplets::new(nl, nl);
    for (s, seg) in lambda.trace.segments.iter().enumerate() {
        let edge = &mesh.boundary_edges[seg.boundary_edge];
        let pdofs = &primal.dof_map[edge.triangle];
        let ldofs = lambda.dofs(s);
        let wh = gamma * trace_h(mesh, lambda, s);
        let ell = seg.length();
        for (tq, w) in rule.abscissae() {
            let pb = primal.eval_at(edge.triangle, seg.point_at(tq));
            let dn = normal_derivatives(&pb, edge.normal);
            let mb = lambda.eval(s, tq);
            let jw = wh * w * ell;
            for i in 0..pb.len {
                for j in 0..pb.len {
                    uu.push(pdofs[i], pdofs[j], jw * dn[i] * dn[j]);
                }
            }
            for a in 0..mb.len {
                for i in 0..pb.len {
                    lu.push(ldofs[a], pdofs[i], jw * mb.values[a] * dn[i]);
                }
                for b in 0..mb.len {
                    ll.push(ldofs[a], ldofs[b], jw * mb.values[a] * mb.values[b]);
                }
            }
        }
    }
    let lambda_u = lu.to_csr();
    Ok(BhBlocks { uu: uu.to_csr(), u_lambda: lambda_u.transpose(), lambda_u, lambda_lambda: ll.to_csr() })
}
