//! Direct solution of sparse, possibly indefinite and nonsymmetric systems,
//! plus the dense symmetric eigen-solves used by the stability studies.
//!
//! The sparse path reorders the matrix with reverse Cuthill-McKee and
//! factorises it as a band matrix with row partial pivoting. Pivot magnitudes
//! and the sign of the determinant are reported so that callers can detect
//! (near-)singular systems.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::sparse::SparseMatrix;

/// Pivots smaller than this times the largest matrix entry are treated as zero.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Reverse Cuthill-McKee ordering of the symmetrised pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.n_rows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let mut ecc = bfs_levels(current, adj).len();
    loop {
        let levels = bfs_levels(current, adj);
        let candidate = *levels.last().unwrap().iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let cand_ecc = bfs_levels(candidate, adj).len();
        if cand_ecc <= ecc {
            return current;
        }
        current = candidate;
        ecc = cand_ecc;
    }
}

/// Factorisation diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PivotReport {
    pub min_pivot: f64,
    pub max_pivot: f64,
    /// Largest absolute entry of the input matrix (reference for the singularity test).
    pub reference: f64,
    /// Sign of the determinant, `+1.0` or `-1.0`.
    pub det_sign: f64,
    pub lower_bandwidth: usize,
    pub upper_bandwidth: usize,
}

impl PivotReport {
    pub fn min_pivot_ratio(&self) -> f64 {
        self.min_pivot / self.reference
    }
}

/// LU factors of a permuted band matrix.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
    pub report: PivotReport,
}

impl BandLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    /// Factorises `a`. Fails with [`Error::SingularSystem`] when a pivot drops
    /// below `SINGULAR_PIVOT_RATIO` times the largest entry of `a`.
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        Self::factor_with_threshold(a, SINGULAR_PIVOT_RATIO)
    }

    pub fn factor_with_threshold(a: &SparseMatrix, ratio: f64) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(invalid(format!("cannot factor a {}x{} matrix", a.n_rows, a.n_cols)));
        }
        let n = a.n_rows;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0, 0);
        for (i, j, _) in a.iter() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            width,
            band: vec![0.0; n * width],
            pivots: vec![0; n],
            perm,
            report: PivotReport {
                min_pivot: f64::INFINITY,
                max_pivot: 0.0,
                reference: a.max_abs(),
                det_sign: 1.0,
                lower_bandwidth: kl,
                upper_bandwidth: ku,
            },
        };
        for (i, j, v) in a.iter() {
            let k = lu.idx(inv[i], inv[j]);
            lu.band[k] += v;
        }
        lu.eliminate(ratio)?;
        Ok(lu)
    }

    fn eliminate(&mut self, ratio: f64) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let threshold = ratio * self.report.reference;
        let mut sign = 1.0;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.band[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[k] = p;
            if p != k {
                sign = -sign;
                let (rk, rp) = (self.idx(k, k), self.idx(p, k));
                let len = last_col - k + 1;
                for off in 0..len {
                    self.band.swap(rk + off, rp + off);
                }
            }
            let pivot = self.band[self.idx(k, k)];
            if !(pivot.abs() >= threshold) || pivot == 0.0 {
                return Err(Error::SingularSystem { step: k, pivot: pivot.abs(), threshold });
            }
            if pivot < 0.0 {
                sign = -sign;
            }
            self.report.min_pivot = self.report.min_pivot.min(pivot.abs());
            self.report.max_pivot = self.report.max_pivot.max(pivot.abs());
            let row_k = self.idx(k, k);
            let len = last_col - k;
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.band[ik] / pivot;
                self.band[ik] = l;
                if l == 0.0 {
                    continue;
                }
                let (head, tail) = self.band.split_at_mut(ik + 1);
                let upper = &head[row_k + 1..row_k + 1 + len];
                for (dst, &u) in tail[..len].iter_mut().zip(upper) {
                    *dst -= l * u;
                }
            }
        }
        self.report.det_sign = sign;
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= self.band[self.idx(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.band[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.band[self.idx(k, k)];
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub positive: usize,
}

/// Largest order for which [`symmetric_inertia`] falls back to a dense
/// eigen-decomposition.
pub const DENSE_INERTIA_LIMIT: usize = 3000;

/// Inertia of a symmetric matrix (Sylvester's law).
///
/// Uses the pivots of an unpivoted banded `L D L^T` factorisation. Without
/// pivoting that factorisation can break down on a nonsingular indefinite
/// matrix, so a tiny pivot triggers a dense eigenvalue count for matrices up
/// to [`DENSE_INERTIA_LIMIT`]. [`Error::SingularSystem`] is returned when an
/// eigenvalue lies below `SINGULAR_PIVOT_RATIO` times the spectral radius, or
/// when the matrix is too large for the fallback.
pub fn symmetric_inertia(a: &SparseMatrix) -> Result<Inertia> {
    if a.n_rows != a.n_cols {
        return Err(invalid(format!("cannot factor a {}x{} matrix", a.n_rows, a.n_cols)));
    }
    let reference = a.max_abs();
    if a.max_asymmetry() > 1e-10 * reference.max(f64::MIN_POSITIVE) {
        return Err(invalid("inertia requested for a nonsymmetric matrix"));
    }
    match banded_ldlt_inertia(a, reference) {
        Err(Error::SingularSystem { .. }) if a.n_rows <= DENSE_INERTIA_LIMIT => dense_inertia(a),
        other => other,
    }
}

fn dense_inertia(a: &SparseMatrix) -> Result<Inertia> {
    let ev = a.to_dense().symmetric_eigenvalues();
    let radius = ev.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let threshold = SINGULAR_PIVOT_RATIO * radius;
    let (step, smallest) = ev
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e.abs()))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap_or((0, 0.0));
    if !(smallest > threshold) {
        return Err(Error::SingularSystem { step, pivot: smallest, threshold });
    }
    let negative = ev.iter().filter(|&&e| e < 0.0).count();
    Ok(Inertia { negative, positive: ev.len() - negative })
}

fn banded_ldlt_inertia(a: &SparseMatrix, reference: f64) -> Result<Inertia> {
    let n = a.n_rows;
    let perm = reverse_cuthill_mckee(a);
    let mut inv = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let kb = a.iter().map(|(i, j, _)| inv[i].abs_diff(inv[j])).max().unwrap_or(0);
    let w = kb + 1;
    // Row i holds columns i - kb ..= i of the lower triangle.
    let idx = |i: usize, j: usize| i * w + j + kb - i;
    let mut band = vec![0.0; n * w];
    for (i, j, v) in a.iter() {
        let (pi, pj) = (inv[i], inv[j]);
        if pi >= pj {
            band[idx(pi, pj)] += v;
        }
    }
    let threshold = SINGULAR_PIVOT_RATIO * reference;
    let mut inertia = Inertia { negative: 0, positive: 0 };
    let mut col = vec![0.0; kb];
    for k in 0..n {
        let d = band[idx(k, k)];
        if !(d.abs() >= threshold) || d == 0.0 {
            return Err(Error::SingularSystem { step: k, pivot: d.abs(), threshold });
        }
        if d < 0.0 {
            inertia.negative += 1;
        } else {
            inertia.positive += 1;
        }
        let last = (k + kb).min(n - 1);
        for i in k + 1..=last {
            col[i - k - 1] = band[idx(i, k)];
        }
        for i in k + 1..=last {
            let ci = col[i - k - 1] / d;
            if ci == 0.0 {
                continue;
            }
            for j in k + 1..=i {
                band[idx(i, j)] -= ci * col[j - k - 1];
            }
        }
    }
    Ok(inertia)
}

/// Result of a direct solve.
#[derive(Clone, Debug)]
pub struct DirectSolve {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub report: PivotReport,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let r: Vec<f64> = a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let nb = norm(b);
    let rel = if nb > 0.0 { norm(&r) / nb } else { norm(&r) };
    (r, rel)
}

/// Factorises and solves `a x = b` with one step of iterative refinement.
pub fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<DirectSolve> {
    if b.len() != a.n_rows {
        return Err(invalid("right-hand side length does not match the matrix"));
    }
    let lu = BandLu::factor(a)?;
    let mut x = lu.solve(b);
    let (r, _) = relative_residual(a, &x, b);
    let dx = lu.solve(&r);
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
    let (_, rel) = relative_residual(a, &x, b);
    Ok(DirectSolve { x, relative_residual: rel, report: lu.report })
}

/// Eigenvalues (ascending) of the symmetric-definite pencil `a x = mu b`.
pub fn generalized_symmetric_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| invalid("right-hand matrix of the eigenproblem is not positive definite"))?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| invalid("singular Cholesky factor"))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| invalid("singular Cholesky factor"))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Triplets;
    use proptest::prelude::*;

    #[test]
    fn scalar_system() {
        let a = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 2.0)]);
        let s = solve_direct(&a, &[4.0]).unwrap();
        assert_eq!(s.x, vec![2.0]);
        assert_eq!(s.report.det_sign, 1.0);
    }

    #[test]
    fn saddle_point_needs_pivoting() {
        // [[1, 1], [1, 0]] has a zero in the (1,1) position after reordering
        let a = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (0, 2, 1.0), (2, 0, 1.0), (1, 1, 3.0)]);
        let s = solve_direct(&a, &[3.0, 6.0, 1.0]).unwrap();
        let expect = [1.0, 2.0, 1.0];
        for (x, e) in s.x.iter().zip(expect) {
            assert!((x - e).abs() < 1e-14);
        }
        // det = 3 * (0 - 1) = -3
        assert_eq!(s.report.det_sign, -1.0);
    }

    #[test]
    fn singular_matrix_detected() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)]);
        assert!(matches!(solve_direct(&a, &[1.0, 2.0]), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_path() {
        let n = 50;
        let label = |i: usize| (i * 17) % n;
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.push(label(i), label(i), 2.0);
            if i + 1 < n {
                t.push(label(i), label(i + 1), -1.0);
                t.push(label(i + 1), label(i), -1.0);
            }
        }
        let lu = BandLu::factor(&t.to_csr()).unwrap();
        assert_eq!(lu.report.lower_bandwidth, 1);
        assert_eq!(lu.report.upper_bandwidth, 1);
    }

    proptest! {
        #[test]
        fn matches_dense_solve(seed in 0u64..1000, n in 2usize..25) {
            let mut state = seed.wrapping_add(1);
            let mut rnd = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            let mut t = Triplets::new(n, n);
            for i in 0..n {
                t.push(i, i, rnd() + 3.0 * rnd().signum());
                for _ in 0..3 {
                    let j = ((rnd() + 1.0) * 0.5 * n as f64) as usize % n;
                    t.push(i, j, rnd());
                }
            }
            let a = t.to_csr();
            let b: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let dense = a.to_dense();
            if let Some(expect) = dense.clone().lu().solve(&nalgebra::DVector::from_vec(b.clone())) {
                let det = dense.determinant();
                prop_assume!(det.abs() > 1e-6);
                let s = solve_direct(&a, &b).unwrap();
                for (x, e) in s.x.iter().zip(expect.iter()) {
                    prop_assert!((x - e).abs() < 1e-8 * (1.0 + e.abs()));
                }
                prop_assert_eq!(s.report.det_sign, det.signum());
            }
        }
    }

    #[test]
    fn inertia_of_saddle_matrix() {
        // [[2, 1], [1, -3]]: one positive and one negative eigenvalue
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -3.0)]);
        assert_eq!(symmetric_inertia(&a).unwrap(), Inertia { negative: 1, positive: 1 });
        let ns = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]);
        assert!(matches!(symmetric_inertia(&ns), Err(Error::InvalidArgument(_))));
    }

    proptest! {
        #[test]
        fn inertia_matches_eigenvalues(seed in 0u64..500, n in 2usize..20) {
            let mut state = seed.wrapping_add(7);
            let mut rnd = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            let mut t = Triplets::new(n, n);
            for i in 0..n {
                t.push(i, i, rnd() + 2.0 * rnd().signum());
                let j = ((rnd() + 1.0) * 0.5 * n as f64) as usize % n;
                let v = 0.5 * rnd();
                t.push(i, j, v);
                t.push(j, i, v);
            }
            let a = t.to_csr();
            let (ev, _) = symmetric_eigen(&a.to_dense());
            prop_assume!(ev.iter().all(|e| e.abs() > 1e-6));
            if let Ok(inertia) = symmetric_inertia(&a) {
                prop_assert_eq!(inertia.negative, ev.iter().filter(|&&e| e < 0.0).count());
                prop_assert_eq!(inertia.positive, ev.iter().filter(|&&e| e > 0.0).count());
            }
        }
    }

    #[test]
    fn generalized_eigen_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 12.0]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
        let ev = generalized_symmetric_eigenvalues(&a, &b).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 4.0).abs() < 1e-14);
        let singular = DMatrix::zeros(2, 2);
        assert!(generalized_symmetric_eigenvalues(&a, &singular).is_err());
    }
}
