//! Dense non-Hermitian eigensolver with paired left and right eigenvectors.
//!
//! The Schur form comes from Householder reduction to Hessenberg form and a
//! single-shift complex QR iteration with Wilkinson shifts. Right eigenvectors
//! are read off the triangular factor by back substitution; left eigenvectors
//! are the right eigenvectors of `Mᵀ`, so that `ψ̃ᵀM = ωψ̃ᵀ`.
//!
//! Left and right vectors are paired by eigenvalue. Eigenvalues closer than
//! the cluster tolerance are treated together: when the individually computed
//! vectors do not pair cleanly, the cluster eigenspaces are recomputed from the
//! null spaces of `M − λ̄I` and `Mᵀ − λ̄I` and biorthogonalized through an SVD
//! of their overlap matrix. Overlaps that vanish mark exceptional points.

use std::cmp::Ordering;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{svd, LinalgError};
use crate::matrix::{collinearity, dotu, norm2, normalized, scaled, Matrix};
use crate::scalar::{lit, to_f64, Real};
use crate::tolerances::EigTolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigError {
    #[error("empty matrix")]
    Empty,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error(
        "QR iteration did not converge after {iterations} sweeps \
         (dim {dim}, ‖M‖_F = {norm:e}, {unconverged} eigenvalues left, last subdiagonal {subdiagonal:e})"
    )]
    NoConvergence {
        iterations: usize,
        dim: usize,
        norm: f64,
        unconverged: usize,
        subdiagonal: f64,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Complex Schur factorization `M = Z T Z†` with `T` upper triangular.
#[derive(Clone, Debug)]
pub struct Schur<T> {
    pub t: Matrix<T>,
    pub z: Matrix<T>,
}

impl<T: Real> Schur<T> {
    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        self.t.diagonal()
    }

    /// Moves the diagonal entries selected by `select` to the leading block,
    /// preserving their relative order. Returns the size of that block.
    pub fn reorder(&mut self, select: impl Fn(Complex<T>) -> bool) -> usize {
        let n = self.t.rows();
        let mut filled = 0;
        for k in 0..n {
            if select(self.t[(k, k)]) {
                let mut pos = k;
                while pos > filled {
                    self.swap_adjacent(pos - 1);
                    pos -= 1;
                }
                filled += 1;
            }
        }
        filled
    }

    /// Exchanges diagonal entries `k` and `k+1` by a unitary rotation.
    fn swap_adjacent(&mut self, k: usize) {
        let n = self.t.rows();
        let t11 = self.t[(k, k)];
        let t22 = self.t[(k + 1, k + 1)];
        let (c, s) = givens(self.t[(k, k + 1)], t22 - t11);
        for j in k + 2..n {
            rot_rows(&mut self.t, k, j, c, s);
        }
        for i in 0..k {
            rot_cols(&mut self.t, i, k, c, s);
        }
        self.t[(k, k)] = t22;
        self.t[(k + 1, k + 1)] = t11;
        for i in 0..n {
            rot_cols(&mut self.z, i, k, c, s);
        }
    }
}

/// Complex Givens rotation `G = [[c, s], [−s̄, c]]` with `G [a; b] = [r; 0]`.
fn givens<T: Real>(a: Complex<T>, b: Complex<T>) -> (T, Complex<T>) {
    let na = a.norm();
    let nb = b.norm();
    if nb == T::zero() {
        return (T::one(), Complex::new(T::zero(), T::zero()));
    }
    if na == T::zero() {
        return (T::zero(), Complex::new(T::one(), T::zero()));
    }
    let nrm = na.hypot(nb);
    let c = na / nrm;
    let s = (a / na) * b.conj() / nrm;
    (c, s)
}

/// Applies `G` to rows `k, k+1` at column `j`.
#[inline]
fn rot_rows<T: Real>(m: &mut Matrix<T>, k: usize, j: usize, c: T, s: Complex<T>) {
    let x = m[(k, j)];
    let y = m[(k + 1, j)];
    m[(k, j)] = x * c + s * y;
    m[(k + 1, j)] = y * c - s.conj() * x;
}

/// Applies `G†` to columns `k, k+1` at row `i`.
#[inline]
fn rot_cols<T: Real>(m: &mut Matrix<T>, i: usize, k: usize, c: T, s: Complex<T>) {
    let x = m[(i, k)];
    let y = m[(i, k + 1)];
    m[(i, k)] = x * c + s.conj() * y;
    m[(i, k + 1)] = y * c - s * x;
}

fn check_input<T: Real>(m: &Matrix<T>) -> Result<(), EigError> {
    if !m.is_square() {
        return Err(EigError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.rows() == 0 {
        return Err(EigError::Empty);
    }
    if !m.all_finite() {
        return Err(EigError::NonFinite);
    }
    Ok(())
}

/// Householder reduction to upper Hessenberg form, accumulating the
/// transformation into `z`.
fn hessenberg<T: Real>(h: &mut Matrix<T>, z: &mut Matrix<T>) {
    let n = h.rows();
    if n < 3 {
        return;
    }
    let two = lit::<T>(2.0);
    for k in 0..n - 2 {
        let mut v: Vec<Complex<T>> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let alpha = norm2(&v);
        if alpha == T::zero() {
            continue;
        }
        let ph = crate::scalar::phase(v[0]);
        v[0] += ph * alpha;
        let vnorm2 = v.iter().map(|x| x.norm_sqr()).fold(T::zero(), |a, b| a + b);
        if vnorm2 == T::zero() {
            continue;
        }
        let beta = two / vnorm2;
        for j in k..n {
            let mut s = Complex::new(T::zero(), T::zero());
            for (l, vl) in v.iter().enumerate() {
                s += vl.conj() * h[(k + 1 + l, j)];
            }
            let s = s * beta;
            for (l, vl) in v.iter().enumerate() {
                h[(k + 1 + l, j)] -= vl * s;
            }
        }
        for i in 0..n {
            let mut s = Complex::new(T::zero(), T::zero());
            for (l, vl) in v.iter().enumerate() {
                s += h[(i, k + 1 + l)] * vl;
            }
            let s = s * beta;
            for (l, vl) in v.iter().enumerate() {
                h[(i, k + 1 + l)] -= s * vl.conj();
            }
            let mut s = Complex::new(T::zero(), T::zero());
            for (l, vl) in v.iter().enumerate() {
                s += z[(i, k + 1 + l)] * vl;
            }
            let s = s * beta;
            for (l, vl) in v.iter().enumerate() {
                z[(i, k + 1 + l)] -= s * vl.conj();
            }
        }
        for i in k + 2..n {
            h[(i, k)] = Complex::new(T::zero(), T::zero());
        }
    }
}

/// Wilkinson shift: the eigenvalue of the trailing 2x2 block closest to its
/// last diagonal entry.
fn wilkinson_shift<T: Real>(h: &Matrix<T>, hi: usize) -> Complex<T> {
    let a = h[(hi - 1, hi - 1)];
    let b = h[(hi - 1, hi)];
    let c = h[(hi, hi - 1)];
    let d = h[(hi, hi)];
    let p = (a - d) * lit::<T>(0.5);
    let disc = (p * p + b * c).sqrt();
    let plus = p + disc;
    let minus = p - disc;
    let larger = if plus.norm() >= minus.norm() { plus } else { minus };
    if larger.norm() == T::zero() {
        d
    } else {
        d - b * c / larger
    }
}

/// Complex Schur decomposition.
pub fn schur<T: Real>(m: &Matrix<T>, tol: &EigTolerances) -> Result<Schur<T>, EigError> {
    check_input(m)?;
    let n = m.rows();
    let mut h = m.clone();
    let mut z = Matrix::<T>::identity(n);
    hessenberg(&mut h, &mut z);
    let anorm = h.norm_fro();
    let eps = T::epsilon();
    let small = T::min_positive_value() * lit(n as f64) / eps;
    let max_total = tol.max_sweeps_per_eigenvalue.max(10) * n;
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n - 1;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let mut s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            if s == T::zero() {
                s = anorm;
            }
            let sub = h[(l, l - 1)].norm();
            if sub <= eps * s || sub <= small {
                h[(l, l - 1)] = Complex::new(T::zero(), T::zero());
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        total += 1;
        since_deflation += 1;
        if total > max_total {
            return Err(EigError::NoConvergence {
                iterations: total,
                dim: n,
                norm: to_f64(anorm),
                unconverged: hi + 1,
                subdiagonal: to_f64(h[(hi, hi - 1)].norm()),
            });
        }
        let mu = if since_deflation % 11 == 10 {
            // exceptional shift to break cycles
            let e = h[(hi, hi - 1)].re.abs() + if hi >= 2 { h[(hi - 1, hi - 2)].re.abs() } else { T::zero() };
            h[(hi, hi)] + Complex::new(lit::<T>(0.75) * e, T::zero())
        } else {
            wilkinson_shift(&h, hi)
        };
        let mut x = h[(l, l)] - mu;
        let mut y = h[(l + 1, l)];
        for k in l..hi {
            if k > l {
                x = h[(k, k - 1)];
                y = h[(k + 1, k - 1)];
            }
            let (c, s) = givens(x, y);
            let start = if k > l { k - 1 } else { l };
            for j in start..n {
                rot_rows(&mut h, k, j, c, s);
            }
            let stop = (k + 2).min(hi);
            for i in 0..=stop {
                rot_cols(&mut h, i, k, c, s);
            }
            for i in 0..n {
                rot_cols(&mut z, i, k, c, s);
            }
            if k > l {
                h[(k + 1, k - 1)] = Complex::new(T::zero(), T::zero());
            }
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = Complex::new(T::zero(), T::zero());
        }
    }
    Ok(Schur { t: h, z })
}

/// Eigenvalues only.
pub fn eigenvalues<T: Real>(m: &Matrix<T>) -> Result<Vec<Complex<T>>, EigError> {
    Ok(schur(m, &EigTolerances::default())?.eigenvalues())
}

/// Unit right eigenvectors of the Schur form, in diagonal order.
fn schur_vectors<T: Real>(s: &Schur<T>) -> Vec<Vec<Complex<T>>> {
    let t = &s.t;
    let n = t.rows();
    let smin = (T::epsilon() * t.norm_fro()).max(T::min_positive_value());
    let big = lit::<T>(1e100);
    (0..n)
        .map(|k| {
            let lam = t[(k, k)];
            let mut x = vec![Complex::new(T::zero(), T::zero()); n];
            x[k] = Complex::new(T::one(), T::zero());
            for j in (0..k).rev() {
                let mut acc = Complex::new(T::zero(), T::zero());
                for i in j + 1..=k {
                    acc += t[(j, i)] * x[i];
                }
                let mut d = t[(j, j)] - lam;
                if d.norm() < smin {
                    d = Complex::new(smin, T::zero());
                }
                x[j] = -acc / d;
                if x[j].norm() > big {
                    let f = T::one() / x[j].norm();
                    for xi in x.iter_mut().take(k + 1) {
                        *xi = *xi * f;
                    }
                }
            }
            normalized(&s.z.mul_vec(&x))
        })
        .collect()
}

/// Normalization status of a left/right pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    /// `ψ̃ᵀψ = 1` after symmetric rescaling.
    Biorthonormal,
    /// `ψ̃ᵀψ ≈ 0`: the pair sits at an exceptional point.
    SelfOrthogonal,
    /// No reliable partner.
    Unpaired,
}

/// Paired right/left eigenvectors of a square matrix.
///
/// Left vectors are stored as `ψ̃` with `ψ̃ᵀM = ωψ̃ᵀ`. Entries are ordered by
/// `(Re ω, Im ω)` ascending.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenSystem<T = f64> {
    pub dim: usize,
    /// Frobenius norm of the decomposed matrix.
    pub norm: T,
    pub eigenvalues: Vec<Complex<T>>,
    pub right_vectors: Vec<Vec<Complex<T>>>,
    pub left_vectors: Vec<Vec<Complex<T>>>,
    /// Eigenvalues from the independent solve of `Mᵀ`, in the same order convention.
    pub left_eigenvalues: Vec<Complex<T>>,
    /// For each entry, the index into `left_eigenvalues` its left vector belongs to.
    pub pairing: Vec<Option<usize>>,
    pub status: Vec<PairStatus>,
    /// `ψ̃ᵀψ` of the unit-normalized pair before rescaling.
    pub overlaps: Vec<Complex<T>>,
    /// `max(‖Mψ − ωψ‖/‖ψ‖, ‖Mᵀψ̃ − ωψ̃‖/‖ψ̃‖)`.
    pub residuals: Vec<T>,
}

fn cmp_eigen<T: Real>(a: &Complex<T>, b: &Complex<T>) -> Ordering {
    a.re.partial_cmp(&b.re)
        .unwrap_or(Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal))
}

/// Sorts complex values by `(Re, Im)`.
pub fn sort_eigenvalues<T: Real>(values: &mut [Complex<T>]) {
    values.sort_by(cmp_eigen);
}

/// Groups indices whose values are within `tol` of each other (single linkage).
pub fn clusters<T: Real>(values: &[Complex<T>], tol: T) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
}

struct Entry<T> {
    value: Complex<T>,
    right: Vec<Complex<T>>,
    left: Vec<Complex<T>>,
    pairing: Option<usize>,
    status: PairStatus,
    overlap: Complex<T>,
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Biorthonormal rescaling: both vectors divided by `√(ψ̃ᵀψ)` (principal branch).
fn balanced<T: Real>(right: &[Complex<T>], left: &[Complex<T>], p: Complex<T>) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
    let f = Complex::new(T::one(), T::zero()) / p.sqrt();
    (scaled(right, f), scaled(left, f))
}

fn make_pair<T: Real>(
    value: Complex<T>,
    right: Vec<Complex<T>>,
    left: Vec<Complex<T>>,
    pairing: Option<usize>,
    tol: &EigTolerances,
) -> Entry<T> {
    let right = normalized(&right);
    let left = normalized(&left);
    let p = dotu(&left, &right);
    if p.norm() < lit(tol.self_orthogonal) {
        Entry {
            value,
            right,
            left,
            pairing,
            status: PairStatus::SelfOrthogonal,
            overlap: p,
        }
    } else {
        let (r, l) = balanced(&right, &left, p);
        Entry {
            value,
            right: r,
            left: l,
            pairing,
            status: PairStatus::Biorthonormal,
            overlap: p,
        }
    }
}

/// Full paired eigensystem with default tolerances.
pub fn eig_full<T: Real>(m: &Matrix<T>) -> Result<EigenSystem<T>, EigError> {
    eig_full_with(m, &EigTolerances::default())
}

pub fn eig_full_with<T: Real>(m: &Matrix<T>, tol: &EigTolerances) -> Result<EigenSystem<T>, EigError> {
    check_input(m)?;
    let n = m.rows();
    let norm = m.norm_fro();
    let mt = m.transpose();

    let rs = schur(m, tol)?;
    let rvals = rs.eigenvalues();
    let rvecs = schur_vectors(&rs);
    let ls = schur(&mt, tol)?;
    let mut lorder: Vec<usize> = (0..n).collect();
    let lraw = ls.eigenvalues();
    lorder.sort_by(|&a, &b| cmp_eigen(&lraw[a], &lraw[b]));
    let lvals: Vec<Complex<T>> = lorder.iter().map(|&i| lraw[i]).collect();
    let lvecs_raw = schur_vectors(&ls);
    let lvecs: Vec<Vec<Complex<T>>> = lorder.iter().map(|&i| lvecs_raw[i].clone()).collect();

    let cluster_tol = lit::<T>(tol.cluster) * norm;
    let pair_tol = lit::<T>(tol.pairing) * norm;
    let groups = clusters(&rvals, cluster_tol);

    // Assign each left eigenvalue to the cluster of its nearest right eigenvalue.
    let mut cluster_of = vec![0usize; n];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            cluster_of[i] = g;
        }
    }
    let mut left_members: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (j, lv) in lvals.iter().enumerate() {
        let nearest = (0..n)
            .min_by(|&a, &b| {
                (rvals[a] - lv)
                    .norm()
                    .partial_cmp(&(rvals[b] - lv).norm())
                    .unwrap_or(Ordering::Equal)
            })
            .expect("non-empty");
        left_members[cluster_of[nearest]].push(j);
    }

    let mut entries: Vec<Entry<T>> = Vec::with_capacity(n);
    for (g, members) in groups.iter().enumerate() {
        let lm = &left_members[g];
        if members.len() == 1 {
            let i = members[0];
            match lm.as_slice() {
                [j] if (rvals[i] - lvals[*j]).norm() <= pair_tol.max(cluster_tol) => {
                    entries.push(make_pair(rvals[i], rvecs[i].clone(), lvecs[*j].clone(), Some(*j), tol));
                }
                _ => entries.push(unpaired(rvals[i], &rvecs[i])),
            }
            continue;
        }
        if lm.len() != members.len() {
            for &i in members {
                entries.push(unpaired(rvals[i], &rvecs[i]));
            }
            continue;
        }
        if let Some(clean) = pair_cluster_directly(members, lm, &rvals, &rvecs, &lvecs, tol) {
            entries.extend(clean);
        } else {
            entries.extend(pair_cluster_by_kernel(m, members, lm, &rvals, &rvecs, tol)?);
        }
    }

    entries.sort_by(|a, b| cmp_eigen(&a.value, &b.value));
    let mut es = EigenSystem {
        dim: n,
        norm,
        eigenvalues: Vec::with_capacity(n),
        right_vectors: Vec::with_capacity(n),
        left_vectors: Vec::with_capacity(n),
        left_eigenvalues: lvals,
        pairing: Vec::with_capacity(n),
        status: Vec::with_capacity(n),
        overlaps: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
    };
    for e in entries {
        let res = pair_residual(m, &mt, e.value, &e.right, &e.left);
        es.eigenvalues.push(e.value);
        es.right_vectors.push(e.right);
        es.left_vectors.push(e.left);
        es.pairing.push(e.pairing);
        es.status.push(e.status);
        es.overlaps.push(e.overlap);
        es.residuals.push(res);
    }
    Ok(es)
}

fn unpaired<T: Real>(value: Complex<T>, right: &[Complex<T>]) -> Entry<T> {
    let r = normalized(right);
    Entry {
        value,
        left: r.iter().map(|z| z.conj()).collect(),
        right: r,
        pairing: None,
        status: PairStatus::Unpaired,
        overlap: zero(),
    }
}

fn pair_residual<T: Real>(m: &Matrix<T>, mt: &Matrix<T>, w: Complex<T>, r: &[Complex<T>], l: &[Complex<T>]) -> T {
    let rel = |a: &Matrix<T>, v: &[Complex<T>]| {
        let nv = norm2(v);
        if nv == T::zero() {
            return T::zero();
        }
        let av = a.mul_vec(v);
        let d: Vec<Complex<T>> = av.iter().zip(v).map(|(x, y)| x - w * y).collect();
        norm2(&d) / nv
    };
    rel(m, r).max(rel(mt, l))
}

/// Pairs a cluster from its individually computed vectors when the overlap
/// matrix is, up to permutation, diagonal and well conditioned.
fn pair_cluster_directly<T: Real>(
    members: &[usize],
    left_members: &[usize],
    rvals: &[Complex<T>],
    rvecs: &[Vec<Complex<T>>],
    lvecs: &[Vec<Complex<T>>],
    tol: &EigTolerances,
) -> Option<Vec<Entry<T>>> {
    let k = members.len();
    let g: Vec<Vec<Complex<T>>> = left_members
        .iter()
        .map(|&j| members.iter().map(|&i| dotu(&lvecs[j], &rvecs[i])).collect())
        .collect();
    let mut used_left = vec![false; k];
    let mut assignment = vec![usize::MAX; k];
    let mut cells: Vec<(T, usize, usize)> = Vec::with_capacity(k * k);
    for (a, row) in g.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            cells.push((v.norm(), a, b));
        }
    }
    cells.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal));
    for (_, a, b) in cells {
        if !used_left[a] && assignment[b] == usize::MAX {
            used_left[a] = true;
            assignment[b] = a;
        }
    }
    let so = lit::<T>(tol.self_orthogonal);
    let clean = lit::<T>(tol.pairing) * lit(0.1);
    for b in 0..k {
        let diag = g[assignment[b]][b].norm();
        if diag < so {
            return None;
        }
        for b2 in 0..k {
            if b2 != b {
                let off = g[assignment[b2]][b].norm();
                let d2 = g[assignment[b2]][b2].norm();
                if off > clean * (diag * d2).sqrt() {
                    return None;
                }
            }
        }
    }
    Some(
        (0..k)
            .map(|b| {
                let i = members[b];
                let j = left_members[assignment[b]];
                make_pair(rvals[i], rvecs[i].clone(), lvecs[j].clone(), Some(j), tol)
            })
            .collect(),
    )
}

/// Rebuilds a cluster's eigenspaces from null spaces and biorthogonalizes them.
fn pair_cluster_by_kernel<T: Real>(
    m: &Matrix<T>,
    members: &[usize],
    left_members: &[usize],
    rvals: &[Complex<T>],
    rvecs: &[Vec<Complex<T>>],
    tol: &EigTolerances,
) -> Result<Vec<Entry<T>>, EigError> {
    let k = members.len();
    let norm = m.norm_fro();
    let mean = members.iter().fold(zero::<T>(), |acc, &i| acc + rvals[i]) / lit::<T>(k as f64);
    let spread = members.iter().map(|&i| (rvals[i] - mean).norm()).fold(T::zero(), T::max);
    let shifted = m.add_diagonal(&(-mean));
    let thresh = (lit::<T>(tol.kernel) * norm).max(lit::<T>(10.0) * spread);

    let rsvd = svd(&shifted)?;
    let lsvd = svd(&shifted.transpose())?;
    let n = m.rows();
    let count = |s: &crate::linalg::Svd<T>| s.singular_values.iter().filter(|&&x| x <= thresh).count();
    let g = count(&rsvd).min(count(&lsvd)).clamp(1, k);
    let rk: Vec<Vec<Complex<T>>> = (n - g..n).map(|j| rsvd.v.column(j)).collect();
    let lk: Vec<Vec<Complex<T>>> = (n - g..n).map(|j| lsvd.v.column(j)).collect();

    // Overlap G = Lᵀ R, then rotate both bases by its singular vectors.
    let overlap = Matrix::from_fn(g, g, |a, b| dotu(&lk[a], &rk[b]));
    let osvd = svd(&overlap)?;
    let mut entries = Vec::with_capacity(k);
    let mut defective: Vec<(Vec<Complex<T>>, Vec<Complex<T>>)> = Vec::new();
    for c in 0..g {
        let vcol = osvd.v.column(c);
        let ucol = osvd.u.column(c);
        let mut r = vec![zero::<T>(); n];
        let mut l = vec![zero::<T>(); n];
        for b in 0..g {
            for i in 0..n {
                r[i] += rk[b][i] * vcol[b];
                l[i] += lk[b][i] * ucol[b].conj();
            }
        }
        let p = dotu(&l, &r);
        let value = if p.norm() >= lit(tol.self_orthogonal) {
            dotu(&l, &m.mul_vec(&r)) / p
        } else {
            mean
        };
        let e = make_pair(value, r, l, left_members.get(c).copied(), tol);
        if e.status == PairStatus::SelfOrthogonal {
            defective.push((e.right.clone(), e.left.clone()));
        }
        entries.push(e);
    }
    // Missing eigenvectors at an exceptional point: repeat the coalesced ones.
    for extra in g..k {
        let entry = if defective.is_empty() {
            unpaired(mean, &rvecs[members[extra]])
        } else {
            let (r, l) = defective[(extra - g) % defective.len()].clone();
            Entry {
                value: mean,
                overlap: dotu(&l, &r),
                right: r,
                left: l,
                pairing: left_members.get(extra).copied(),
                status: PairStatus::SelfOrthogonal,
            }
        };
        entries.push(entry);
    }
    Ok(entries)
}

impl<T: Real> EigenSystem<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index of the eigenvalue nearest to `target`.
    pub fn nearest(&self, target: Complex<T>) -> usize {
        (0..self.len())
            .min_by(|&a, &b| {
                (self.eigenvalues[a] - target)
                    .norm()
                    .partial_cmp(&(self.eigenvalues[b] - target).norm())
                    .unwrap_or(Ordering::Equal)
            })
            .unwrap_or(0)
    }

    pub fn max_residual(&self) -> T {
        self.residuals.iter().copied().fold(T::zero(), T::max)
    }

    pub fn max_imag(&self) -> T {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(T::zero(), T::max)
    }

    pub fn all_biorthonormal(&self) -> bool {
        self.status.iter().all(|s| *s == PairStatus::Biorthonormal)
    }

    pub fn count(&self, status: PairStatus) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }

    /// `max |ψ̃_νᵀψ_μ − δ_νμ|` over biorthonormal pairs.
    pub fn biorthogonality_error(&self) -> T {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.status[i] == PairStatus::Biorthonormal).collect();
        let mut worst = T::zero();
        for &a in &idx {
            for &b in &idx {
                let v = dotu(&self.left_vectors[a], &self.right_vectors[b]);
                let target = if a == b { T::one() } else { T::zero() };
                worst = worst.max((v - Complex::new(target, T::zero())).norm());
            }
        }
        worst
    }

    /// `Σ_μ ω_μ ψ_μ ψ̃_μᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim;
        let mut out = Matrix::zeros(n, n);
        for k in 0..self.len() {
            let w = self.eigenvalues[k];
            for i in 0..n {
                let ri = self.right_vectors[k][i] * w;
                for j in 0..n {
                    out[(i, j)] += ri * self.left_vectors[k][j];
                }
            }
        }
        out
    }

    /// `ψ̃_μᵀψ_μ` for every pair, as stored.
    pub fn inner_products(&self) -> Vec<Complex<T>> {
        (0..self.len())
            .map(|k| dotu(&self.left_vectors[k], &self.right_vectors[k]))
            .collect()
    }
}

/// Outcome of matching `(Aψ_μ)*` against the left eigenvectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MetricMatch<T = f64> {
    /// `Aψ_μ = 0`: ψ_μ is a zero mode of `A` and of `H`.
    Kernel { norm_ratio: T },
    Partner {
        /// Index of the left vector proportional to `(Aψ_μ)*`.
        partner: usize,
        /// `‖(Aψ_μ)* − cψ̃_ν‖ / ‖Aψ_μ‖` at the best complex `c`.
        collinearity: T,
        /// `|ω_μ − ω_ν*|`.
        conjugation_gap: T,
        same_index: bool,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricPairing<T = f64> {
    pub matches: Vec<MetricMatch<T>>,
}

impl<T: Real> MetricPairing<T> {
    /// True when every non-kernel mode is its own partner.
    pub fn all_self_partnered(&self) -> bool {
        self.matches.iter().all(|m| match m {
            MetricMatch::Kernel { .. } => true,
            MetricMatch::Partner { same_index, .. } => *same_index,
        })
    }

    pub fn max_collinearity(&self) -> T {
        self.matches
            .iter()
            .filter_map(|m| match m {
                MetricMatch::Partner { collinearity, .. } => Some(*collinearity),
                MetricMatch::Kernel { .. } => None,
            })
            .fold(T::zero(), T::max)
    }

    pub fn kernel_modes(&self) -> Vec<usize> {
        self.matches
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m, MetricMatch::Kernel { .. }))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Locates, for each right eigenvector, the left eigenvector proportional to
/// `(Aψ_μ)*`. `es` must come from `H = H₀A` with the same `A`.
pub fn apply_metric_pairing<T: Real>(es: &EigenSystem<T>, a: &Matrix<T>, tol: &EigTolerances) -> MetricPairing<T> {
    let anorm = a.norm_fro();
    let matches = es
        .right_vectors
        .iter()
        .enumerate()
        .map(|(mu, psi)| {
            let apsi = a.mul_vec(psi);
            let ratio = norm2(&apsi) / norm2(psi);
            if ratio <= lit::<T>(tol.kernel_metric) * anorm.max(T::one()) {
                return MetricMatch::Kernel { norm_ratio: ratio };
            }
            let target: Vec<Complex<T>> = apsi.iter().map(|z| z.conj()).collect();
            let (partner, coll) = es
                .left_vectors
                .iter()
                .enumerate()
                .map(|(nu, l)| (nu, collinearity(&target, l).0))
                .min_by(|x, y| {
                    // prefer the diagonal among equally good candidates
                    x.1.partial_cmp(&y.1)
                        .unwrap_or(Ordering::Equal)
                        .then((x.0 != mu).cmp(&(y.0 != mu)))
                })
                .expect("non-empty");
            MetricMatch::Partner {
                partner,
                collinearity: coll,
                conjugation_gap: (es.eigenvalues[mu] - es.eigenvalues[partner].conj()).norm(),
                same_index: partner == mu,
            }
        })
        .collect();
    MetricPairing { matches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn schur_is_unitary_similarity() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (17, 4), (40, 5)] {
            let m = random_matrix(n, seed);
            let s = schur(&m, &EigTolerances::default()).unwrap();
            let rec = &(&s.z * &s.t) * &s.z.adjoint();
            assert!(rec.max_abs_diff(&m) < 1e-12 * m.norm_fro().max(1.0), "n={n}");
            let zz = &s.z.adjoint() * &s.z;
            assert!(zz.max_abs_diff(&Matrix::identity(n)) < 1e-12);
        }
    }

    #[test]
    fn real_nonsymmetric_rotation() {
        let m = Matrix::<f64>::from_real_rows(vec![vec![0.0, -1.0], vec![1.0, 0.0]]);
        let mut w = eigenvalues(&m).unwrap();
        sort_eigenvalues(&mut w);
        assert!((w[0] - c(0.0, -1.0)).norm() < 1e-14);
        assert!((w[1] - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn random_matrix_residuals_and_biorthogonality() {
        let m = random_matrix(30, 9);
        let es = eig_full(&m).unwrap();
        assert_eq!(es.len(), 30);
        assert!(es.max_residual() <= 1e-10 * es.norm);
        assert!(es.all_biorthonormal());
        assert!(es.biorthogonality_error() <= 1e-8);
        assert!(es.reconstruct().max_abs_diff(&m) <= 1e-6 * es.norm);
    }

    #[test]
    fn hermitian_left_vectors_are_conjugates() {
        let r = random_matrix(8, 21);
        let h = &r + &r.adjoint();
        let es = eig_full(&h).unwrap();
        assert!(es.all_biorthonormal());
        for k in 0..8 {
            for (l, r) in es.left_vectors[k].iter().zip(&es.right_vectors[k]) {
                assert!((l - r.conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn jordan_block_is_self_orthogonal() {
        let m = Matrix::<f64>::from_real_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
        let es = eig_full(&m).unwrap();
        assert_eq!(es.count(PairStatus::SelfOrthogonal), 2);
        // one eigenvector, repeated
        let (r, _) = collinearity(&es.right_vectors[0], &es.right_vectors[1]);
        assert!(r < 1e-12);
        assert!((es.right_vectors[0][0].norm() - 1.0).abs() < 1e-12);
        assert!(es.max_residual() < 1e-12);
    }

    #[test]
    fn degenerate_diagonalizable_cluster_is_biorthonormalized() {
        // exact double eigenvalue 2 with a non-normal complement
        let m = Matrix::<f64>::from_real_rows(vec![
            vec![2.0, 0.0, 1.0],
            vec![0.0, 2.0, 3.0],
            vec![0.0, 0.0, -1.0],
        ]);
        let es = eig_full(&m).unwrap();
        assert!(es.all_biorthonormal());
        assert!(es.biorthogonality_error() < 1e-10);
        assert!(es.max_residual() < 1e-12 * es.norm);
        assert!(es.reconstruct().max_abs_diff(&m) < 1e-10);
    }

    #[test]
    fn identity_matrix() {
        let m = Matrix::<f64>::identity(4);
        let es = eig_full(&m).unwrap();
        assert!(es.all_biorthonormal());
        assert!(es.reconstruct().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn left_and_right_spectra_agree() {
        let m = random_matrix(25, 77);
        let es = eig_full(&m).unwrap();
        for (a, b) in es.eigenvalues.iter().zip(&es.left_eigenvalues) {
            assert!((a - b).norm() <= 1e-8 * es.norm);
        }
    }

    #[test]
    fn reorder_moves_selected_block_first() {
        let m = random_matrix(12, 5);
        let mut s = schur(&m, &EigTolerances::default()).unwrap();
        let before = s.eigenvalues();
        let pick = before[7];
        let k = s.reorder(|z| (z - pick).norm() < 1e-12);
        assert_eq!(k, 1);
        assert!((s.t[(0, 0)] - pick).norm() < 1e-12);
        let rec = &(&s.z * &s.t) * &s.z.adjoint();
        assert!(rec.max_abs_diff(&m) < 1e-12 * m.norm_fro());
        for i in 1..12 {
            for j in 0..i {
                assert_eq!(s.t[(i, j)], c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn metric_pairing_indefinite_two_by_two() {
        let h0 = Matrix::<f64>::from_real_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let a = Matrix::<f64>::from_real_diag(&[1.0, -1.0]);
        let h = &h0 * &a;
        let es = eig_full(&h).unwrap();
        assert!((es.eigenvalues[0] - c(0.0, -1.0)).norm() < 1e-14);
        let mp = apply_metric_pairing(&es, &a, &EigTolerances::default());
        assert!(!mp.all_self_partnered());
        for m in &mp.matches {
            match m {
                MetricMatch::Partner {
                    same_index,
                    collinearity,
                    conjugation_gap,
                    ..
                } => {
                    assert!(!same_index);
                    assert!(*collinearity < 1e-12);
                    assert!(*conjugation_gap < 1e-12);
                }
                MetricMatch::Kernel { .. } => panic!("no kernel expected"),
            }
        }
    }

    #[test]
    fn single_precision_solver() {
        let m = Matrix::<f32>::from_real_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let mut w = eigenvalues(&m).unwrap();
        sort_eigenvalues(&mut w);
        assert!((w[0].re - 1.0).abs() < 1e-5);
        assert!((w[1].re - 3.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(eig_full(&Matrix::<f64>::zeros(2, 3)), Err(EigError::NotSquare { .. })));
        let mut m = Matrix::<f64>::identity(2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(eig_full(&m), Err(EigError::NonFinite)));
    }
}
