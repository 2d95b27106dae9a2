//! Sparse linear solvers for the Newton systems.
//!
//! The default is a sparse direct LU with the symbolic analysis done once
//! per pattern and a numeric refactorization per call. The matrix pattern
//! is structurally symmetric, so the CSR arrays double as the CSC form of
//! the transpose and a transpose solve recovers the original system.
//!
//! A stabilized bi-conjugate-gradient solver with an incomplete LU(0)
//! preconditioner is available for larger runs where refactorizing every
//! Newton iteration dominates.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use thiserror::Error;

use crate::assembly::CsrMatrix;

#[derive(Debug, Error)]
pub enum LinSolveError {
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("iteration breakdown: {0}")]
    Breakdown(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

pub trait LinearSolver: Send {
    /// Accepts a (new) matrix; direct solvers factorize here, iterative
    /// ones rebuild their preconditioner.
    fn prepare(&mut self, matrix: &CsrMatrix) -> Result<(), LinSolveError>;
    /// Solves `A x = rhs` in place.
    fn solve(&mut self, matrix: &CsrMatrix, rhs: &mut [f64]) -> Result<(), LinSolveError>;
}

/// Sparse direct LU (default).
#[derive(Default)]
pub struct DirectLu {
    symbolic: Option<faer::sparse::linalg::solvers::SymbolicLu<usize>>,
    numeric: Option<faer::sparse::linalg::solvers::Lu<usize, f64>>,
}

impl DirectLu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl LinearSolver for DirectLu {
    fn prepare(&mut self, matrix: &CsrMatrix) -> Result<(), LinSolveError> {
        // CSR of A read as CSC is A^T, same pattern by structural symmetry
        let sym = SymbolicSparseColMatRef::new_checked(
            matrix.n,
            matrix.n,
            &matrix.row_ptr,
            None,
            &matrix.col_idx,
        );
        if self.symbolic.is_none() {
            self.symbolic = Some(
                faer::sparse::linalg::solvers::SymbolicLu::try_new(sym)
                    .map_err(|e| LinSolveError::Factorization(format!("{e:?}")))?,
            );
        }
        let mat = SparseColMatRef::new(sym, &matrix.values);
        self.numeric = Some(
            faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(
                self.symbolic.clone().unwrap(),
                mat,
            )
            .map_err(|e| LinSolveError::Factorization(format!("{e:?}")))?,
        );
        Ok(())
    }

    fn solve(&mut self, _matrix: &CsrMatrix, rhs: &mut [f64]) -> Result<(), LinSolveError> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| LinSolveError::Factorization("solve before prepare".into()))?;
        let n = rhs.len();
        let view = faer::MatMut::from_column_major_slice_mut(rhs, n, 1);
        // factored A^T, so the transpose solve yields A x = b
        lu.solve_transpose_in_place(view);
        Ok(())
    }
}

/// Incomplete LU(0) factorization on the matrix pattern.
struct Ilu0 {
    values: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn factor(matrix: &CsrMatrix) -> Result<Self, LinSolveError> {
        let n = matrix.n;
        let mut values = matrix.values.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
                if matrix.col_idx[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(LinSolveError::Factorization(format!(
                    "missing diagonal in row {i}"
                )));
            }
        }
        for i in 0..n {
            let row = matrix.row_ptr[i]..matrix.row_ptr[i + 1];
            for kk in row.clone() {
                let k = matrix.col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = values[diag[k]];
                if pivot == 0.0 {
                    return Err(LinSolveError::Factorization(format!(
                        "zero pivot at row {k}"
                    )));
                }
                let lik = values[kk] / pivot;
                values[kk] = lik;
                // subtract lik * row k from row i on the shared pattern
                let mut p = kk + 1;
                let mut q = diag[k] + 1;
                let row_k_end = matrix.row_ptr[k + 1];
                while p < row.end && q < row_k_end {
                    match matrix.col_idx[p].cmp(&matrix.col_idx[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            values[p] -= lik * values[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
            }
        }
        Ok(Self { values, diag })
    }

    /// Applies `(LU)^{-1}` to `x` using the pattern of `matrix`.
    fn apply(&self, matrix: &CsrMatrix, x: &mut [f64]) {
        let n = matrix.n;
        // forward solve with unit lower part
        for i in 0..n {
            let mut acc = x[i];
            for k in matrix.row_ptr[i]..self.diag[i] {
                acc -= self.values[k] * x[matrix.col_idx[k]];
            }
            x[i] = acc;
        }
        // backward solve with upper part
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in self.diag[i] + 1..matrix.row_ptr[i + 1] {
                acc -= self.values[k] * x[matrix.col_idx[k]];
            }
            x[i] = acc / self.values[self.diag[i]];
        }
    }
}

/// Stabilized bi-conjugate gradients with ILU(0) preconditioning.
pub struct BiCgStab {
    pub rel_tol: f64,
    pub max_iter: usize,
    ilu: Option<Ilu0>,
}

impl BiCgStab {
    pub fn new(rel_tol: f64, max_iter: usize) -> Self {
        Self {
            rel_tol,
            max_iter,
            ilu: None,
        }
    }
}

impl LinearSolver for BiCgStab {
    fn prepare(&mut self, matrix: &CsrMatrix) -> Result<(), LinSolveError> {
        self.ilu = Some(Ilu0::factor(matrix)?);
        Ok(())
    }

    fn solve(&mut self, a: &CsrMatrix, rhs: &mut [f64]) -> Result<(), LinSolveError> {
        let ilu = self
            .ilu
            .as_ref()
            .ok_or_else(|| LinSolveError::Factorization("solve before prepare".into()))?;
        let n = rhs.len();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

        let b_norm = norm(rhs);
        if b_norm == 0.0 {
            return Ok(());
        }
        let tol = self.rel_tol * b_norm;
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let r_shadow = r.clone();
        let mut p = vec![0.0; n];
        let mut v = vec![0.0; n];
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        let tiny = 1e-300;
        for it in 1..=self.max_iter {
            let rho1 = dot(&r_shadow, &r);
            if rho1.abs() < tiny {
                return Err(LinSolveError::Breakdown("rho".into()));
            }
            let beta = (rho1 / rho) * (alpha / omega);
            rho = rho1;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let mut p_hat = p.clone();
            ilu.apply(a, &mut p_hat);
            v.fill(0.0);
            a.matvec_add(1.0, &p_hat, &mut v);
            let denom = dot(&r_shadow, &v);
            if denom.abs() < tiny {
                return Err(LinSolveError::Breakdown("r.v".into()));
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= tol {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                rhs.copy_from_slice(&x);
                return Ok(());
            }
            let mut s_hat = s.clone();
            ilu.apply(a, &mut s_hat);
            t.fill(0.0);
            a.matvec_add(1.0, &s_hat, &mut t);
            let tt = dot(&t, &t);
            if tt < tiny {
                return Err(LinSolveError::Breakdown("t.t".into()));
            }
            omega = dot(&t, &s) / tt;
            if omega.abs() < tiny {
                return Err(LinSolveError::Breakdown("omega".into()));
            }
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] = s[i] - omega * t[i];
            }
            let res = norm(&r);
            if res <= tol {
                rhs.copy_from_slice(&x);
                return Ok(());
            }
            if it == self.max_iter {
                return Err(LinSolveError::NotConverged {
                    iterations: it,
                    residual: res / b_norm,
                });
            }
        }
        unreachable!()
    }
}

/// Solver selection used by the run configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Direct,
    BiCgStab { rel_tol: f64, max_iter: usize },
}

pub fn make_solver(kind: SolverKind) -> Box<dyn LinearSolver> {
    match kind {
        SolverKind::Direct => Box::new(DirectLu::new()),
        SolverKind::BiCgStab { rel_tol, max_iter } => Box::new(BiCgStab::new(rel_tol, max_iter)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{SystemAssembler, DEFAULT_CORNER_ANGLE_TOL};
    use crate::mesh::generate_quad_mesh;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn laplacian_like(n: usize) -> CsrMatrix {
        // tridiagonal [-1, 2.5, -1]
        let mut row_ptr = vec![0usize];
        let mut col_idx = Vec::new();
        for i in 0..n {
            if i > 0 {
                col_idx.push(i - 1);
            }
            col_idx.push(i);
            if i + 1 < n {
                col_idx.push(i + 1);
            }
            row_ptr.push(col_idx.len());
        }
        let mut m = CsrMatrix::zeros_with_pattern(n, row_ptr, col_idx);
        for i in 0..n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[k] = if m.col_idx[k] == i { 2.5 } else { -1.0 };
            }
        }
        m
    }

    #[test]
    fn direct_solves_tridiagonal() {
        let a = laplacian_like(50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x_true: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; 50];
        a.matvec_add(1.0, &x_true, &mut b);
        let mut solver = DirectLu::new();
        solver.prepare(&a).unwrap();
        solver.solve(&a, &mut b).unwrap();
        for i in 0..50 {
            assert!((b[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_handles_unsymmetric_values() {
        // values unsymmetric on a symmetric pattern, like the Newton matrix
        let mut a = laplacian_like(40);
        for i in 0..40 {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col_idx[k] > i {
                    a.values[k] = -0.5;
                }
            }
        }
        let x_true: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 40];
        a.matvec_add(1.0, &x_true, &mut b);
        let mut solver = DirectLu::new();
        solver.prepare(&a).unwrap();
        solver.solve(&a, &mut b).unwrap();
        for i in 0..40 {
            assert!((b[i] - x_true[i]).abs() < 1e-12, "{} vs {}", b[i], x_true[i]);
        }
    }

    #[test]
    fn bicgstab_matches_direct_on_newton_matrix() {
        let mesh = generate_quad_mesh(6);
        let asm = SystemAssembler::new(&mesh, DEFAULT_CORNER_ANGLE_TOL).unwrap();
        let n = asm.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        asm.enforce_constraints(&mut u);
        let mut jac = asm.jacobian_template();
        asm.jacobian(&u, 5e-5, 0.01, &mut jac);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut xd = b.clone();
        let mut direct = DirectLu::new();
        direct.prepare(&jac).unwrap();
        direct.solve(&jac, &mut xd).unwrap();

        let mut xi = b.clone();
        let mut iterative = BiCgStab::new(1e-12, 500);
        iterative.prepare(&jac).unwrap();
        iterative.solve(&jac, &mut xi).unwrap();

        let scale: f64 = xd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff: f64 = xd
            .iter()
            .zip(&xi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-8 * scale, "diff {diff:.3e} scale {scale:.3e}");
    }

    #[test]
    fn refactorization_tracks_value_changes() {
        let mut a = laplacian_like(30);
        let mut solver = DirectLu::new();
        solver.prepare(&a).unwrap();
        let mut b = vec![1.0; 30];
        solver.solve(&a, &mut b).unwrap();
        // change values, same pattern
        for v in a.values.iter_mut() {
            *v *= 2.0;
        }
        solver.prepare(&a).unwrap();
        let mut b2 = vec![1.0; 30];
        solver.solve(&a, &mut b2).unwrap();
        for i in 0..30 {
            assert!((b[i] - 2.0 * b2[i]).abs() < 1e-12);
        }
    }
}
