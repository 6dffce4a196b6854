//! Spectral certificates for `H = H₀A`: reality, the metric `H₀⁻¹`, the
//! biorthogonal inner product, exceptional points and the `B` map.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::{eig_full_with, schur, EigError, EigenSystem, PairStatus};
use crate::linalg::{hermitian_eig, lu_solve, orthogonal_component, svd, LinalgError};
use crate::matrix::{collinearity, dotu, norm2, normalized, scaled, Matrix};
use crate::model::{construct_product, hermitian_equivalent, ModelError};
use crate::scalar::{lit, Real};
use crate::tolerances::{EigTolerances, SpectraTolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralCertificate<T = f64> {
    pub eigenvalues: Vec<Complex<T>>,
    pub max_imag: T,
    pub is_real: bool,
    /// `‖H₀⁻¹HH₀ − H†‖/‖H‖`; `None` when `H₀` is singular.
    pub pseudo_hermitian_residual: Option<T>,
    /// `(μ, ν)` with `ω_μ ≈ ω_ν*`; real eigenvalues appear as `(μ, μ)`.
    pub conjugate_pairs: Vec<(usize, usize)>,
    /// Eigenvalues left without a conjugate partner.
    pub unpaired: Vec<usize>,
    /// `ψ̃_μᵀψ_μ` of unit-normalized pairs.
    pub inner_products: Vec<Complex<T>>,
}

impl<T: Real> SpectralCertificate<T> {
    pub fn conjugation_closed(&self) -> bool {
        self.unpaired.is_empty()
    }
}

/// Greedy conjugate pairing. Values with `|Im| ≤ real_tol` pair with themselves.
pub fn conjugate_pairs<T: Real>(values: &[Complex<T>], real_tol: T, match_tol: T) -> (Vec<(usize, usize)>, Vec<usize>) {
    let n = values.len();
    let mut used = vec![false; n];
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for mu in 0..n {
        if used[mu] {
            continue;
        }
        used[mu] = true;
        if values[mu].im.abs() <= real_tol {
            pairs.push((mu, mu));
            continue;
        }
        let target = values[mu].conj();
        let best = (0..n)
            .filter(|&nu| !used[nu])
            .map(|nu| (nu, (values[nu] - target).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        match best {
            Some((nu, d)) if d <= match_tol => {
                used[nu] = true;
                pairs.push((mu, nu));
            }
            _ => unpaired.push(mu),
        }
    }
    (pairs, unpaired)
}

/// `‖H₀⁻¹HH₀ − H†‖/‖H‖`, or `None` when `σ_min(H₀) ≤ invertible·‖H₀‖`.
pub fn pseudo_hermitian_residual<T: Real>(
    h: &Matrix<T>,
    h0: &Matrix<T>,
    tol: &SpectraTolerances,
) -> Result<Option<T>, SpectraError> {
    if h.rows() != h0.rows() || !h.is_square() || !h0.is_square() {
        return Err(SpectraError::Dimension(format!("H is {}x{}, H₀ is {}x{}", h.rows(), h.cols(), h0.rows(), h0.cols())));
    }
    let sv = svd(h0)?;
    if sv.smallest() <= lit::<T>(tol.invertible) * h0.norm_fro() {
        return Ok(None);
    }
    let x = match lu_solve(h0, &(h * h0)) {
        Ok(x) => x,
        Err(LinalgError::Singular { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let hn = h.norm_fro();
    let d = (&x - &h.adjoint()).norm_fro();
    Ok(Some(if hn == T::zero() { d } else { d / hn }))
}

pub fn certify<T: Real>(h: &Matrix<T>, h0: &Matrix<T>, tol: &SpectraTolerances) -> Result<SpectralCertificate<T>, SpectraError> {
    certify_with(h, h0, tol, &EigTolerances::default())
}

pub fn certify_with<T: Real>(
    h: &Matrix<T>,
    h0: &Matrix<T>,
    tol: &SpectraTolerances,
    eig_tol: &EigTolerances,
) -> Result<SpectralCertificate<T>, SpectraError> {
    let es = eig_full_with(h, eig_tol)?;
    let norm = es.norm;
    let real_tol = lit::<T>(tol.real) * norm;
    let max_imag = es.max_imag();
    let (pairs, unpaired) = conjugate_pairs(&es.eigenvalues, real_tol, lit::<T>(tol.spectrum_match) * norm);
    Ok(SpectralCertificate {
        max_imag,
        is_real: max_imag <= real_tol,
        pseudo_hermitian_residual: pseudo_hermitian_residual(h, h0, tol)?,
        conjugate_pairs: pairs,
        unpaired,
        inner_products: es.overlaps.clone(),
        eigenvalues: es.eigenvalues,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditRow<T = f64> {
    pub mode: usize,
    pub eigenvalue: Complex<T>,
    /// `ψ̃_μᵀψ_μ` with `ψ̃_μ` rescaled onto `(Aψ_μ)*`.
    pub value: Complex<T>,
    /// `‖Bψ_μ‖²`.
    pub b_norm_sq: T,
    /// Collinearity residual of `(Aψ_μ)*` against `ψ̃_μ`.
    pub collinearity: T,
    pub agrees: bool,
    /// `Bψ_μ ≈ 0`: only such modes may sit at an exceptional point.
    pub ep_candidate: bool,
}

/// Compares `ψ̃_μᵀψ_μ` with `‖Bψ_μ‖²` mode by mode, for `es` computed from
/// `H = H₀B†B`.
pub fn inner_product_audit<T: Real>(es: &EigenSystem<T>, b: &Matrix<T>, tol: &SpectraTolerances) -> Vec<AuditRow<T>> {
    let a = &b.adjoint() * b;
    let anorm = a.norm_fro().max(T::min_positive_value());
    let atol = lit::<T>(tol.audit);
    (0..es.len())
        .map(|mu| {
            let psi = &es.right_vectors[mu];
            let bpsi = b.mul_vec(psi);
            let bn2 = norm2(&bpsi).powi(2);
            let apsi_conj: Vec<Complex<T>> = a.mul_vec(psi).iter().map(|z| z.conj()).collect();
            let (coll, c) = collinearity(&apsi_conj, &es.left_vectors[mu]);
            let value = c * dotu(&es.left_vectors[mu], psi);
            let psi_n2 = norm2(psi).powi(2);
            let ep_candidate = bn2 <= atol * anorm * psi_n2;
            let agrees = (value - Complex::new(bn2, T::zero())).norm() <= atol * bn2.max(psi_n2) && (ep_candidate || coll <= atol);
            AuditRow {
                mode: mu,
                eigenvalue: es.eigenvalues[mu],
                value,
                b_norm_sq: bn2,
                collinearity: coll,
                agrees,
                ep_candidate,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JordanChain<T = f64> {
    /// `v₁` (eigenvector, unit norm) through `v_k`.
    pub vectors: Vec<Vec<Complex<T>>>,
    /// `max(‖(H−ω)v₁‖, max_i ‖(H−ω)v_{i+1} − v_i‖/‖v_i‖)` with `‖v₁‖ = 1`.
    pub residual: T,
}

impl<T: Real> JordanChain<T> {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn eigenvector(&self) -> &[Complex<T>] {
        &self.vectors[0]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EPReport<T = f64> {
    pub target_energy: Complex<T>,
    pub algebraic_multiplicity: usize,
    pub geometric_multiplicity: usize,
    /// Jordan block sizes, descending.
    pub ep_orders: Vec<usize>,
    /// Nullities of `(H − ω)^k` restricted to the cluster, `k = 1, 2, …`.
    pub kernel_dimensions: Vec<usize>,
    pub jordan_chains: Vec<JordanChain<T>>,
    pub chain_residual: T,
    /// An eigenvalue lies within a factor 2 of the cluster radius.
    pub boundary_warning: bool,
    pub cluster_eigenvalues: Vec<Complex<T>>,
}

impl<T: Real> EPReport<T> {
    /// True when some block has size two or more.
    pub fn is_ep(&self) -> bool {
        self.ep_orders.iter().any(|&k| k > 1)
    }

    pub fn max_order(&self) -> usize {
        self.ep_orders.first().copied().unwrap_or(0)
    }

    /// Structure used for shift comparisons.
    pub fn structure(&self) -> (usize, usize, Vec<usize>) {
        (self.algebraic_multiplicity, self.geometric_multiplicity, self.ep_orders.clone())
    }
}

fn orthonormal_extend<T: Real>(basis: &mut Vec<Vec<Complex<T>>>, v: &[Complex<T>], floor: T) -> bool {
    let r = orthogonal_component(v, basis);
    let nr = norm2(&r);
    if nr <= floor {
        return false;
    }
    basis.push(scaled(&r, Complex::new(T::one() / nr, T::zero())));
    true
}

/// Jordan structure of `H` at `target`, computed inside the invariant
/// subspace of the eigenvalue cluster around it.
pub fn ep_analyze<T: Real>(h: &Matrix<T>, target: Complex<T>, tol: &SpectraTolerances) -> Result<EPReport<T>, SpectraError> {
    let n = h.rows();
    let norm = h.norm_fro();
    let radius = lit::<T>(tol.ep_cluster) * norm;
    let mut sch = schur(h, &EigTolerances::default())?;
    let values = sch.eigenvalues();
    let two = lit::<T>(2.0);
    let boundary_warning = values.iter().any(|w| {
        let d = (w - target).norm();
        d > radius / two && d <= radius * two
    });
    let k = sch.reorder(|w| (w - target).norm() <= radius);
    let kernel_tol = lit::<T>(tol.ep_kernel) * norm;
    let geometric = svd(&h.add_diagonal(&(-target)))?
        .singular_values
        .iter()
        .filter(|&&s| s <= kernel_tol)
        .count();
    let mut report = EPReport {
        target_energy: target,
        algebraic_multiplicity: k,
        geometric_multiplicity: geometric,
        ep_orders: Vec::new(),
        kernel_dimensions: Vec::new(),
        jordan_chains: Vec::new(),
        chain_residual: T::zero(),
        boundary_warning,
        cluster_eigenvalues: sch.eigenvalues()[..k].to_vec(),
    };
    if k == 0 {
        return Ok(report);
    }

    // Nilpotent part of the cluster block.
    let nc = Matrix::from_fn(k, k, |i, j| if i == j { sch.t[(i, j)] - target } else { sch.t[(i, j)] });
    let mut powers = vec![Matrix::<T>::identity(k)];
    let mut dims = vec![0usize];
    let mut scale = T::one();
    while *dims.last().unwrap() < k && dims.len() <= k {
        let p = &nc * powers.last().unwrap();
        scale = scale * norm;
        let d = svd(&p)?.singular_values.iter().filter(|&&s| s <= lit::<T>(tol.ep_kernel) * scale).count();
        powers.push(p);
        if d <= *dims.last().unwrap() && dims.len() > 1 {
            // no growth: remaining directions are not nilpotent at this tolerance
            dims.push(d);
            break;
        }
        dims.push(d);
    }
    report.kernel_dimensions = dims[1..].to_vec();
    let levels = dims.len() - 1;
    let at_least = |l: usize| if l == 0 || l > levels { 0 } else { dims[l] - dims[l - 1].min(dims[l]) };
    for l in (1..=levels).rev() {
        let exact = at_least(l).saturating_sub(at_least(l + 1));
        for _ in 0..exact {
            report.ep_orders.push(l);
        }
    }

    // Chains, longest first.
    let z_c = Matrix::from_fn(n, k, |i, j| sch.z[(i, j)]);
    let floor = lit::<T>(1e-6);
    let mut tops: Vec<(usize, Vec<Complex<T>>)> = Vec::new();
    for &len in report.ep_orders.clone().iter() {
        let ker_l = svd(&powers[len])?.null_space(lit::<T>(tol.ep_kernel) * norm.powi(len as i32));
        let ker_prev: Vec<Vec<Complex<T>>> = if len > 1 {
            svd(&powers[len - 1])?.null_space(lit::<T>(tol.ep_kernel) * norm.powi(len as i32 - 1))
        } else {
            Vec::new()
        };
        let mut w: Vec<Vec<Complex<T>>> = Vec::new();
        for v in &ker_prev {
            orthonormal_extend(&mut w, v, floor);
        }
        for (other_len, x) in &tops {
            if *other_len >= len {
                let v = powers[other_len - len].mul_vec(x);
                orthonormal_extend(&mut w, &v, floor);
            }
        }
        let best = ker_l
            .iter()
            .map(|v| {
                let r = orthogonal_component(v, &w);
                (norm2(&r), r)
            })
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let Some((_, x)) = best else { continue };
        let x = normalized(&x);
        tops.push((len, x));
    }

    let shifted = h.add_diagonal(&(-target));
    for (len, x) in &tops {
        let mut ys: Vec<Vec<Complex<T>>> = (0..*len).map(|i| powers[len - 1 - i].mul_vec(x)).collect();
        let lead = norm2(&z_c.mul_vec(&ys[0]));
        if lead > T::zero() {
            let f = Complex::new(T::one() / lead, T::zero());
            for y in ys.iter_mut() {
                *y = scaled(y, f);
            }
        }
        let vectors: Vec<Vec<Complex<T>>> = ys.iter().map(|y| z_c.mul_vec(y)).collect();
        let mut residual = norm2(&shifted.mul_vec(&vectors[0]));
        for i in 1..vectors.len() {
            let hv = shifted.mul_vec(&vectors[i]);
            let d: Vec<Complex<T>> = hv.iter().zip(&vectors[i - 1]).map(|(a, b)| a - b).collect();
            let rel = norm2(&d) / norm2(&vectors[i - 1]).max(T::min_positive_value());
            residual = residual.max(rel);
        }
        report.chain_residual = report.chain_residual.max(residual);
        report.jordan_chains.push(JordanChain { vectors, residual });
    }
    Ok(report)
}

/// Distance of a computed length-two chain `(v₁, v₂)` from a reference chain
/// top `J`: `v₁` must be collinear with `HJ`, and `v₂ − cJ` must lie in
/// `ker H` once `v₁ = c·HJ`. Returns the larger of both residuals.
pub fn chain_matches_reference<T: Real>(
    h: &Matrix<T>,
    chain: &JordanChain<T>,
    reference: &[Complex<T>],
    tol: &SpectraTolerances,
) -> Result<T, SpectraError> {
    if chain.len() < 2 {
        return Ok(T::infinity());
    }
    let hj = h.mul_vec(reference);
    let (r1, c) = collinearity(&chain.vectors[0], &hj);
    let d: Vec<Complex<T>> = chain.vectors[1].iter().zip(reference).map(|(v, j)| v - c * j).collect();
    let kernel = svd(h)?.null_space(lit::<T>(tol.ep_kernel) * h.norm_fro());
    let r = orthogonal_component(&d, &kernel);
    let r2 = norm2(&r) / norm2(&chain.vectors[1]).max(T::min_positive_value());
    Ok(r1.max(r2))
}

/// Self-orthogonal modes of `H = H₀A` with PSD `A` must sit at zero energy in
/// the kernel of `A`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpLocation<T = f64> {
    pub self_orthogonal: usize,
    /// Largest `|ω|/‖H‖` among them.
    pub max_energy: T,
    /// Largest `‖Av‖/‖v‖` among them.
    pub max_kernel_ratio: T,
    pub ok: bool,
}

pub fn ep_location<T: Real>(es: &EigenSystem<T>, a: &Matrix<T>, tol: &SpectraTolerances) -> EpLocation<T> {
    let mut loc = EpLocation {
        self_orthogonal: 0,
        max_energy: T::zero(),
        max_kernel_ratio: T::zero(),
        ok: true,
    };
    for mu in 0..es.len() {
        if es.status[mu] != PairStatus::SelfOrthogonal {
            continue;
        }
        loc.self_orthogonal += 1;
        let v = &es.right_vectors[mu];
        loc.max_energy = loc.max_energy.max(es.eigenvalues[mu].norm() / es.norm);
        loc.max_kernel_ratio = loc.max_kernel_ratio.max(norm2(&a.mul_vec(v)) / norm2(v));
    }
    loc.ok = loc.max_energy <= lit(tol.ep_cluster) && loc.max_kernel_ratio <= lit(tol.ep_kernel);
    loc
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BMapReport<T = f64> {
    /// Largest sorted-spectrum gap between `H` and `H_e`, relative to `‖H‖`.
    pub spectrum_gap: T,
    pub invertible: bool,
    /// Per mode: eigen-residual of the mapped vector, relative to `‖H‖`.
    pub mode_residuals: Vec<T>,
    /// For invertible `B`: collinearity of `B⁻¹φ_μ` with the computed `ψ_μ`
    /// (isolated eigenvalues only).
    pub collinearity: Vec<Option<T>>,
    pub mapped: usize,
    /// Zero-energy modes left to [`ep_analyze`].
    pub skipped_zero: usize,
    pub ok: bool,
}

/// Checks that `H = H₀B†B` and `H_e = BH₀B†` share their spectrum and that
/// `B` maps eigenvectors between them.
pub fn bmap_correspondence<T: Real>(h0: &Matrix<T>, b: &Matrix<T>, tol: &SpectraTolerances) -> Result<BMapReport<T>, SpectraError> {
    let a = &b.adjoint() * b;
    let h = construct_product(h0, &a)?;
    let he = hermitian_equivalent(h0, b, tol)?;
    let hn = h.norm_fro().max(T::min_positive_value());
    let es = eig_full_with(&h, &EigTolerances::default())?;
    let he_eig = hermitian_eig(&he)?;
    let mut gap = T::zero();
    for (w, l) in es.eigenvalues.iter().zip(&he_eig.eigenvalues) {
        gap = gap.max((w - Complex::new(*l, T::zero())).norm() / hn);
    }
    let vtol = lit::<T>(tol.vector_match);
    let invertible = svd(b)?.smallest() > lit::<T>(tol.invertible) * b.norm_fro();
    let mut report = BMapReport {
        spectrum_gap: gap,
        invertible,
        mode_residuals: Vec::new(),
        collinearity: Vec::new(),
        mapped: 0,
        skipped_zero: 0,
        ok: gap <= lit::<T>(tol.spectrum_match),
    };
    let isolation = lit::<T>(tol.ep_cluster) * hn;
    if invertible {
        for (idx, &lambda) in he_eig.eigenvalues.iter().enumerate() {
            let phi = he_eig.vectors.column(idx);
            let rhs = Matrix::from_columns(&[phi]);
            let psi = lu_solve(b, &rhs)?.column(0);
            let lw = Complex::new(lambda, T::zero());
            let res = residual(&h, &psi, lw) / hn;
            report.mode_residuals.push(res);
            let nearest = es.nearest(lw);
            let isolated = es
                .eigenvalues
                .iter()
                .enumerate()
                .all(|(i, w)| i == nearest || (w - lw).norm() > isolation);
            report.collinearity.push(isolated.then(|| collinearity(&psi, &es.right_vectors[nearest]).0));
            report.mapped += 1;
            report.ok &= res <= vtol;
            if let Some(Some(c)) = report.collinearity.last() {
                report.ok &= *c <= vtol.sqrt();
            }
        }
    } else {
        for mu in 0..es.len() {
            let w = es.eigenvalues[mu];
            if w.norm() <= isolation {
                report.skipped_zero += 1;
                continue;
            }
            let phi = b.mul_vec(&es.right_vectors[mu]);
            let res = residual(&he, &phi, w) / hn;
            report.mode_residuals.push(res);
            report.collinearity.push(None);
            report.mapped += 1;
            report.ok &= res <= vtol;
        }
    }
    Ok(report)
}

fn residual<T: Real>(m: &Matrix<T>, v: &[Complex<T>], w: Complex<T>) -> T {
    let mv = m.mul_vec(v);
    let d: Vec<Complex<T>> = mv.iter().zip(v).map(|(a, b)| a - w * b).collect();
    norm2(&d) / norm2(v).max(T::min_positive_value())
}

/// One low-lying level of a chain in a harmonic potential against the
/// continuum oscillator `E_q + 2|t| ≈ (q − ½)ω̃`, `ω̃ = ω√(2|t|)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicLevel<T = f64> {
    pub q: usize,
    pub energy: T,
    /// `(q − ½)ω̃ − 2|t|`.
    pub continuum: T,
    /// `|E_q + 2|t| − (q − ½)ω̃| / ω̃`.
    pub deviation: T,
}

/// Compares the `count` lowest real parts of `values` with the continuum
/// oscillator levels for `ω² = omega2`.
pub fn harmonic_levels<T: Real>(values: &[Complex<T>], omega2: T, t: T, count: usize) -> Vec<HarmonicLevel<T>> {
    let mut e: Vec<T> = values.iter().map(|z| z.re).collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let two_t = lit::<T>(2.0) * t.abs();
    let wt = omega2.sqrt() * two_t.sqrt();
    e.iter()
        .take(count)
        .enumerate()
        .map(|(i, &energy)| {
            let level = (lit::<T>(i as f64) + lit(0.5)) * wt;
            HarmonicLevel {
                q: i + 1,
                energy,
                continuum: level - two_t,
                deviation: (energy + two_t - level).abs() / wt,
            }
        })
        .collect()
}

/// `(min Re ω, max Re ω)`.
pub fn real_support<T: Real>(values: &[Complex<T>]) -> (T, T) {
    values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), z| (lo.min(z.re), hi.max(z.re)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::eig_full;
    use crate::model::{build_h0, build_scaling, factor_psd, LatticeSpec};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn chain_h(spec: &LatticeSpec) -> (Matrix<f64>, Matrix<f64>, Matrix<f64>) {
        let h0 = build_h0::<f64>(spec).unwrap();
        let a = build_scaling::<f64>(spec).unwrap();
        let h = construct_product(&h0, &a).unwrap();
        (h0, a, h)
    }

    #[test]
    fn certify_psd_product() {
        let spec = LatticeSpec::chain(8, 1.0).geometric(1.5);
        let (h0, _, h) = chain_h(&spec);
        let cert = certify(&h, &h0, &SpectraTolerances::default()).unwrap();
        assert!(cert.is_real);
        assert!(cert.pseudo_hermitian_residual.unwrap() <= 1e-8);
        assert!(cert.conjugate_pairs.iter().all(|(a, b)| a == b));
        assert!(cert.inner_products.iter().all(|p| p.re > 0.0));
    }

    #[test]
    fn certify_indefinite_pair() {
        let h0 = Matrix::<f64>::from_real_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let a = Matrix::from_real_diag(&[1.0, -1.0]);
        let h = &h0 * &a;
        let cert = certify(&h, &h0, &SpectraTolerances::default()).unwrap();
        assert!(!cert.is_real);
        assert_eq!(cert.conjugate_pairs, vec![(0, 1)]);
        assert!(cert.conjugation_closed());
        assert!(cert.pseudo_hermitian_residual.unwrap() < 1e-14);
    }

    #[test]
    fn certify_hermitian_identity_metric() {
        let h = build_h0::<f64>(&LatticeSpec::chain(5, 1.0)).unwrap();
        let cert = certify(&h, &Matrix::identity(5), &SpectraTolerances::default()).unwrap();
        assert_eq!(cert.pseudo_hermitian_residual, Some(0.0));
        assert_eq!(cert.conjugate_pairs.len(), 5);
        assert!(cert.conjugate_pairs.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn singular_metric_not_applicable() {
        // odd chain has a zero mode, so H₀ is singular
        let spec = LatticeSpec::chain(9, 1.0).geometric(2.0);
        let (h0, _, h) = chain_h(&spec);
        let cert = certify(&h, &h0, &SpectraTolerances::default()).unwrap();
        assert!(cert.pseudo_hermitian_residual.is_none());
        assert!(cert.is_real);
    }

    #[test]
    fn audit_full_rank_and_identity() {
        let tol = SpectraTolerances::default();
        let spec = LatticeSpec::chain(6, 1.0).geometric(1.7);
        let (_, a, h) = chain_h(&spec);
        let b = factor_psd(&a, &tol).unwrap();
        let rows = inner_product_audit(&eig_full(&h).unwrap(), &b, &tol);
        assert!(rows.iter().all(|r| r.agrees && r.value.re > 0.0 && !r.ep_candidate));

        let h0 = build_h0::<f64>(&LatticeSpec::chain(6, 1.0)).unwrap();
        let rows = inner_product_audit(&eig_full(&h0).unwrap(), &Matrix::identity(6), &tol);
        for r in rows {
            assert!((r.value - c(1.0, 0.0)).norm() < 1e-10);
            assert!((r.b_norm_sq - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn audit_flags_kernel_mode() {
        let tol = SpectraTolerances::default();
        let spec = LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[1]);
        let (_, a, h) = chain_h(&spec);
        let b = factor_psd(&a, &tol).unwrap();
        let rows = inner_product_audit(&eig_full(&h).unwrap(), &b, &tol);
        let flagged: Vec<_> = rows.iter().filter(|r| r.ep_candidate).collect();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].eigenvalue.norm() < 1e-8);
        assert!(rows.iter().all(|r| r.agrees));
    }

    #[test]
    fn ep_a4_zero() {
        let tol = SpectraTolerances::default();
        let s = 2.0;
        let spec = LatticeSpec::chain(9, 1.0).geometric(s).zeroed(&[4]);
        let (_, _, h) = chain_h(&spec);
        let rep = ep_analyze(&h, c(0.0, 0.0), &tol).unwrap();
        assert_eq!(rep.algebraic_multiplicity, 3);
        assert_eq!(rep.geometric_multiplicity, 2);
        assert_eq!(rep.ep_orders, vec![2, 1]);
        assert!(!rep.boundary_warning);
        let ep = &rep.jordan_chains[0];
        let (r, _) = collinearity(ep.eigenvector(), &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(r < 1e-8);
        assert!(rep.chain_residual <= 1e-8);
        let mut j = vec![c(0.0, 0.0); 9];
        j[0] = c(-1.0, 0.0);
        j[2] = c(s.powi(-2), 0.0);
        assert!(chain_matches_reference(&h, ep, &j, &tol).unwrap() <= 1e-8);
    }

    #[test]
    fn ep_a1_zero_odd_and_even() {
        let tol = SpectraTolerances::default();
        let (_, _, h) = chain_h(&LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[1]));
        let rep = ep_analyze(&h, c(0.0, 0.0), &tol).unwrap();
        assert_eq!((rep.algebraic_multiplicity, rep.geometric_multiplicity), (1, 1));
        assert!(!rep.is_ep());

        let (_, _, h) = chain_h(&LatticeSpec::chain(8, 1.0).geometric(2.0).zeroed(&[1]));
        let rep = ep_analyze(&h, c(0.0, 0.0), &tol).unwrap();
        assert_eq!(rep.ep_orders, vec![2]);
        assert_eq!(rep.geometric_multiplicity, 1);
        let v = rep.jordan_chains[0].eigenvector();
        assert!((v[0].norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ep_report_is_shift_covariant() {
        let tol = SpectraTolerances::default();
        let (_, _, h) = chain_h(&LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[4]));
        let base = ep_analyze(&h, c(0.0, 0.0), &tol).unwrap();
        let shifted = ep_analyze(&crate::model::shift_spectrum(&h, 1.0), c(1.0, 0.0), &tol).unwrap();
        assert_eq!(base.structure(), shifted.structure());
    }

    #[test]
    fn ep_location_for_singular_scaling() {
        let tol = SpectraTolerances::default();
        let (_, a, h) = chain_h(&LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[4]));
        let es = eig_full(&h).unwrap();
        let loc = ep_location(&es, &a, &tol);
        assert_eq!(loc.self_orthogonal, 2);
        assert!(loc.ok);
    }

    #[test]
    fn bmap_graded_chain() {
        let tol = SpectraTolerances::default();
        let h0 = build_h0::<f64>(&LatticeSpec::chain(9, 1.0)).unwrap();
        let b = Matrix::from_real_diag(&(0..9).map(|j| 2f64.powf(j as f64 / 2.0)).collect::<Vec<_>>());
        let rep = bmap_correspondence(&h0, &b, &tol).unwrap();
        assert!(rep.invertible && rep.ok, "{rep:?}");
        assert_eq!(rep.mapped, 9);

        let rep = bmap_correspondence(&h0, &Matrix::identity(9), &tol).unwrap();
        assert!(rep.ok && rep.spectrum_gap < 1e-14);

        let mut d: Vec<f64> = (0..9).map(|j| 2f64.powf(j as f64 / 2.0)).collect();
        d[3] = 0.0;
        let rep = bmap_correspondence(&h0, &Matrix::from_real_diag(&d), &tol).unwrap();
        assert!(!rep.invertible && rep.ok, "{rep:?}");
        assert_eq!(rep.mapped, 6);
        assert_eq!(rep.skipped_zero, 3);
    }

    #[test]
    fn harmonic_levels_follow_continuum() {
        let spec = LatticeSpec::chain(100, 1.0).harmonic(1e-3);
        let h0 = build_h0::<f64>(&spec).unwrap();
        let ev: Vec<Complex<f64>> = hermitian_eig(&h0).unwrap().eigenvalues.iter().map(|&x| Complex::new(x, 0.0)).collect();
        let levels = harmonic_levels(&ev, 1e-3, 1.0, 5);
        let dev: Vec<f64> = levels.iter().map(|l| l.deviation).collect();
        // independent dense symmetric eigensolve
        let oracle = [0.0006997519253078276, 0.003502707305295602, 0.009118550417624847, 0.01755933641150207, 0.028837294087837608];
        for (d, o) in dev.iter().zip(oracle) {
            assert!((d - o).abs() < 1e-8, "{dev:?}");
        }
        let (lo, hi) = real_support(&ev);
        assert!(lo > -2.0 && hi > 2.0);
    }
}
