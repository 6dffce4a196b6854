//! Dense kernels: LU solve, one-sided Jacobi SVD, Hermitian Jacobi eigensolver.

use num_complex::Complex;
use thiserror::Error;

use crate::matrix::{dotc, norm2, Matrix};
use crate::scalar::{lit, phase, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{method} did not converge after {sweeps} sweeps (off-diagonal measure {residual:e})")]
    NoConvergence {
        method: &'static str,
        sweeps: usize,
        residual: f64,
    },
}

const MAX_SWEEPS: usize = 80;

/// Solves `A X = B` by LU factorization with partial pivoting.
pub fn lu_solve<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(LinalgError::Dimension(format!(
            "lu_solve with A {}x{} and B {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.norm_max();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| {
                lu[(i, k)]
                    .norm()
                    .partial_cmp(&lu[(j, k)].norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(k);
        let piv = lu[(p, k)].norm();
        if piv <= T::epsilon() * scale * lit(n as f64) || piv == T::zero() {
            return Err(LinalgError::Singular {
                column: k,
                pivot: piv.to_f64().unwrap_or(0.0),
            });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            for j in 0..x.cols() {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(p, j)];
                x[(p, j)] = tmp;
            }
        }
        let d = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / d;
            lu[(i, k)] = f;
            for j in k + 1..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= f * u;
            }
            for j in 0..x.cols() {
                let u = x[(k, j)];
                x[(i, j)] -= f * u;
            }
        }
    }
    for j in 0..x.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, j)];
            for k in i + 1..n {
                s -= lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

/// Thin SVD `A = U Σ V†` of a matrix with at least as many rows as columns.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// Descending.
    pub singular_values: Vec<T>,
    pub u: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn smallest(&self) -> T {
        self.singular_values.last().copied().unwrap_or(T::zero())
    }

    /// Orthonormal basis of right singular vectors with `σ ≤ tol`.
    pub fn null_space(&self, tol: T) -> Vec<Vec<Complex<T>>> {
        self.singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= tol)
            .map(|(j, _)| self.v.column(j))
            .collect()
    }

    pub fn rank(&self, tol: T) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Real>(a: &Matrix<T>) -> Result<Svd<T>, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(LinalgError::Dimension(format!("svd needs rows >= cols, got {m}x{n}")));
    }
    let mut cols: Vec<Vec<Complex<T>>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<Complex<T>>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex::new(T::zero(), T::zero()); n];
            e[j] = Complex::new(T::one(), T::zero());
            e
        })
        .collect();
    let eps = T::epsilon();
    // columns at rounding level of ‖A‖ are treated as exact zeros
    let negligible = (eps * a.norm_fro()).powi(2);
    let mut converged = false;
    let mut last = T::zero();
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dotc(&cols[p], &cols[p]).re;
                let beta = dotc(&cols[q], &cols[q]).re;
                let gamma = dotc(&cols[p], &cols[q]);
                let g = gamma.norm();
                if alpha <= negligible || beta <= negligible || g == T::zero() {
                    continue;
                }
                let measure = g / (alpha * beta).sqrt();
                off = off.max(measure);
                if measure <= eps {
                    continue;
                }
                // Make the cross term real by rephasing column q, then rotate.
                let ph = phase(gamma).conj();
                for z in cols[q].iter_mut() {
                    *z = *z * ph;
                }
                for z in v[q].iter_mut() {
                    *z = *z * ph;
                }
                let zeta = (beta - alpha) / (lit::<T>(2.0) * g);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        last = off;
        if off <= eps {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            method: "jacobi svd",
            sweeps: MAX_SWEEPS,
            residual: last.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut order: Vec<(T, usize)> = cols.iter().enumerate().map(|(j, c)| (norm2(c), j)).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let singular_values: Vec<T> = order.iter().map(|&(s, _)| s).collect();
    let u_cols: Vec<Vec<Complex<T>>> = order
        .iter()
        .map(|&(s, j)| {
            if s > T::zero() {
                cols[j].iter().map(|z| z / s).collect()
            } else {
                vec![Complex::new(T::zero(), T::zero()); m]
            }
        })
        .collect();
    let v_cols: Vec<Vec<Complex<T>>> = order.iter().map(|&(_, j)| v[j].clone()).collect();
    Ok(Svd {
        singular_values,
        u: Matrix::from_columns(&u_cols),
        v: Matrix::from_columns(&v_cols),
    })
}

fn rotate<T: Real>(cols: &mut [Vec<Complex<T>>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = a * c - b * s;
        *y = a * s + b * c;
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi eigensolver for Hermitian input. Input is symmetrized as
/// (A + A†)/2 first.
pub fn hermitian_eig<T: Real>(a: &Matrix<T>) -> Result<HermitianEigen<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension("hermitian_eig needs a square matrix".into()));
    }
    let n = a.rows();
    let half = lit::<T>(0.5);
    let mut h = Matrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * half);
    let mut vecs = Matrix::<T>::identity(n);
    let scale = h.norm_fro();
    let eps = T::epsilon();
    let mut converged = n < 2 || scale == T::zero();
    let mut off = T::zero();
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + h[(p, q)].norm_sqr();
            }
        }
        off = off.sqrt();
        if off <= eps * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = h[(p, q)];
                let g = apq.norm();
                if g <= eps * eps * scale {
                    continue;
                }
                let ph = phase(apq).conj();
                let alpha = h[(p, p)].re;
                let beta = h[(q, q)].re;
                let tau = (beta - alpha) / (lit::<T>(2.0) * g);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                // U = diag(1, ph) * [[c, s], [-s, c]]
                let u00 = Complex::new(c, T::zero());
                let u01 = Complex::new(s, T::zero());
                let u10 = ph * (-s);
                let u11 = ph * c;
                // columns: H <- H U
                for k in 0..n {
                    let (x, y) = (h[(k, p)], h[(k, q)]);
                    h[(k, p)] = x * u00 + y * u10;
                    h[(k, q)] = x * u01 + y * u11;
                }
                // rows: H <- U† H
                for k in 0..n {
                    let (x, y) = (h[(p, k)], h[(q, k)]);
                    h[(p, k)] = u00.conj() * x + u10.conj() * y;
                    h[(q, k)] = u01.conj() * x + u11.conj() * y;
                }
                h[(p, q)] = Complex::new(T::zero(), T::zero());
                h[(q, p)] = Complex::new(T::zero(), T::zero());
                for k in 0..n {
                    let (x, y) = (vecs[(k, p)], vecs[(k, q)]);
                    vecs[(k, p)] = x * u00 + y * u10;
                    vecs[(k, q)] = x * u01 + y * u11;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            method: "hermitian jacobi",
            sweeps: MAX_SWEEPS,
            residual: off.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut order: Vec<(T, usize)> = (0..n).map(|i| (h[(i, i)].re, i)).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let cols: Vec<Vec<Complex<T>>> = order.iter().map(|&(_, j)| vecs.column(j)).collect();
    Ok(HermitianEigen {
        eigenvalues: order.iter().map(|&(l, _)| l).collect(),
        vectors: Matrix::from_columns(&cols),
    })
}

/// Component of `x` orthogonal to the orthonormal set `basis` (two passes of
/// classical Gram-Schmidt).
pub fn orthogonal_component<T: Real>(x: &[Complex<T>], basis: &[Vec<Complex<T>>]) -> Vec<Complex<T>> {
    let mut r = x.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c = dotc(b, &r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
    }
    r
}

/// Least-squares solution of `A x = b` via the SVD pseudo-inverse, dropping
/// singular values at or below `tol`.
pub fn lstsq<T: Real>(a: &Matrix<T>, b: &[Complex<T>], tol: T) -> Result<Vec<Complex<T>>, LinalgError> {
    let s = svd(a)?;
    let n = a.cols();
    let mut x = vec![Complex::new(T::zero(), T::zero()); n];
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        if sigma <= tol {
            continue;
        }
        let uk = s.u.column(k);
        let coef = dotc(&uk, b) / sigma;
        for (xi, i) in x.iter_mut().zip(0..n) {
            *xi += s.v[(i, k)] * coef;
        }
    }
    Ok(x)
}
