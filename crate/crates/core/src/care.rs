//! Continuous algebraic Riccati equation for small dense systems.
//!
//! `Aᵀ P + P A − P B R⁻¹ Bᵀ P + Q = 0` is solved through the stable invariant
//! subspace of the Hamiltonian `H = [[A, −B R⁻¹ Bᵀ], [−Q, −Aᵀ]]`, extracted with
//! the scaled matrix sign iteration. The subspace is the kernel of
//! `sign(H) + I`, which gives an overdetermined linear system for `P`. A
//! Newton–Kleinman pass polishes the result when the residual is above
//! tolerance.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const SIGN_TOL: f64 = 1e-14;
const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 8;
const R_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenvalues(pub Vec<(f64, f64)>);

impl fmt::Display for Eigenvalues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (re, im)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{re:.6e}{im:+.6e}i")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CareError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input weight is singular or ill-conditioned (condition number {condition:.3e})")]
    IllConditionedR { condition: f64 },

    #[error("Hamiltonian has eigenvalues on or near the imaginary axis; no stabilizing solution (eigenvalues {eigenvalues})")]
    ImaginaryAxisEigenvalues { eigenvalues: Eigenvalues },

    #[error("stable subspace is not a graph over the state coordinates (Hamiltonian eigenvalues {eigenvalues})")]
    IllConditionedSubspace { eigenvalues: Eigenvalues },

    #[error("closed loop is not Hurwitz (max real part {max_real:.3e}; Hamiltonian eigenvalues {eigenvalues})")]
    NotStabilizing { max_real: f64, eigenvalues: Eigenvalues },

    #[error("residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual_norm: f64,
}

impl CareProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, CareError> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n {
            return Err(CareError::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(CareError::Dimension(format!("B has {} rows, A has {n}", b.nrows())));
        }
        if q.shape() != (n, n) {
            return Err(CareError::Dimension(format!("Q is {:?}, expected ({n}, {n})", q.shape())));
        }
        if r.shape() != (m, m) {
            return Err(CareError::Dimension(format!("R is {:?}, expected ({m}, {m})", r.shape())));
        }
        Ok(Self { a, b, q, r })
    }

    pub fn tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.q.norm())
    }

    pub fn residual(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>, CareError> {
        let r_inv = self.r_inverse()?;
        let s = &self.b * r_inv * self.b.transpose();
        Ok(self.a.transpose() * p + p * &self.a - p * s * p + &self.q)
    }

    fn r_inverse(&self) -> Result<DMatrix<f64>, CareError> {
        let sv = self.r.singular_values();
        let max = sv.max();
        let min = sv.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition < R_COND_MAX) {
            return Err(CareError::IllConditionedR { condition });
        }
        self.r
            .clone()
            .try_inverse()
            .ok_or(CareError::IllConditionedR { condition })
    }

    pub fn hamiltonian(&self) -> Result<DMatrix<f64>, CareError> {
        let n = self.a.nrows();
        let r_inv = self.r_inverse()?;
        let s = &self.b * r_inv * self.b.transpose();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.a);
        h.view_mut((0, n), (n, n)).copy_from(&(-s));
        h.view_mut((n, 0), (n, n)).copy_from(&(-&self.q));
        h.view_mut((n, n), (n, n)).copy_from(&(-self.a.transpose()));
        Ok(h)
    }
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Eigenvalues {
    Eigenvalues(
        m.complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect(),
    )
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).0.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < 0.0
}

/// Matrix sign function by Newton iteration with determinant scaling.
/// Returns `None` if an iterate is singular or the iteration stalls.
pub fn matrix_sign(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = h.nrows() as f64;
    let mut z = h.clone();
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        if !(det.is_finite() && det != 0.0) {
            return None;
        }
        let z_inv = lu.try_inverse()?;
        let c = det.abs().powf(1.0 / n);
        let next = (&z / c + z_inv * c) * 0.5;
        let change = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if !change.is_finite() {
            return None;
        }
        if change <= SIGN_TOL * scale {
            return Some(z);
        }
    }
    // accept a converged-enough iterate: sign(H)² = I
    let defect = (&z * &z - DMatrix::identity(h.nrows(), h.nrows())).norm();
    (defect < 1e-8).then_some(z)
}

/// Solves `Aᵀ X + X A + Q = 0` by vectorization. Intended for small `n`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(Aᵀ X) = (I ⊗ Aᵀ) vec X, vec(X A) = (Aᵀ ⊗ I) vec X
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = op.lu().solve(&rhs)?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Some((&x + x.transpose()) * 0.5)
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

pub fn solve_care(problem: &CareProblem) -> Result<CareSolution, CareError> {
    let n = problem.a.nrows();
    let h = problem.hamiltonian()?;
    let r_inv = problem.r_inverse()?;

    let w = matrix_sign(&h).ok_or_else(|| CareError::ImaginaryAxisEigenvalues {
        eigenvalues: eigenvalues(&h),
    })?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(w.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));

    let svd = lhs.svd(true, true);
    let sv_max = svd.singular_values.max();
    let sv_min = svd.singular_values.min();
    if !(sv_min > 1e-12 * sv_max) {
        return Err(CareError::IllConditionedSubspace {
            eigenvalues: eigenvalues(&h),
        });
    }
    let p = svd
        .solve(&rhs, 0.0)
        .map_err(|_| CareError::IllConditionedSubspace {
            eigenvalues: eigenvalues(&h),
        })?;
    let mut p = symmetrize(&p);

    let tolerance = problem.tolerance();
    let gain = |p: &DMatrix<f64>| &r_inv * problem.b.transpose() * p;
    let mut residual = problem.residual(&p)?.norm();

    // Newton–Kleinman polish from the subspace estimate
    let mut iter = 0;
    while !(residual < 1e-3 * tolerance) && iter < NEWTON_MAX_ITER {
        iter += 1;
        let k = gain(&p);
        let a_cl = &problem.a - &problem.b * &k;
        if !is_hurwitz(&a_cl) {
            break;
        }
        let q_k = &problem.q + k.transpose() * &problem.r * &k;
        let Some(next) = solve_lyapunov(&a_cl, &q_k) else { break };
        let next_residual = problem.residual(&next)?.norm();
        if !(next_residual < residual) {
            break;
        }
        p = next;
        residual = next_residual;
    }

    let k = gain(&p);
    let a_cl = &problem.a - &problem.b * &k;
    let max_real = spectral_abscissa(&a_cl);
    if !(max_real < 0.0) {
        return Err(CareError::NotStabilizing {
            max_real,
            eigenvalues: eigenvalues(&h),
        });
    }
    if !(residual < tolerance) {
        return Err(CareError::Residual { residual, tolerance });
    }
    Ok(CareSolution {
        p,
        k,
        residual_norm: residual,
    })
}
