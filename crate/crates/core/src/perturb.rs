//! First-order biorthogonal perturbation theory in the pump strength, and the
//! non-Hermitian particle-hole (NHPH) pairing of modes.
//!
//! With `H_a = H_p + iγ₁H_γ` and `H_γ = P` the pumped-site indicator,
//!
//! ```text
//! ω⁽¹⁾ = iγ₁ H_{γ,μμ},   ψ⁽¹⁾ = iγ₁ Σ_{ν≠μ} H_{γ,νμ}/(ω_μ − ω_ν) ψ_ν,
//! ```
//!
//! where `H_{γ,νμ} = ψ̃_νᵀPψ_μ`. On a bipartite chain `S = diag((−1)^(j−1))`
//! maps `H_a` to `−H_a*`, so modes pair as `ω_ν′ = −ω_ν*`, `ψ_ν′ ∝ S ψ_ν*`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::{eig_full, EigError, EigenSystem, PairStatus};
use crate::laser::{pumped_hamiltonian, track_mode, LaserError, PumpSpec};
use crate::matrix::{collinearity, dotu, norm2, Matrix};
use crate::scalar::{lit, to_f64, Real};
use crate::tolerances::{LaserTolerances, PerturbTolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("mode {mode} is {status:?}; first-order theory needs biorthonormal pairs")]
    NotBiorthonormal { mode: usize, status: PairStatus },
    #[error("near-degenerate denominator |ω_{mu} − ω_{nu}| = {gap:e}")]
    Degenerate { mu: usize, nu: usize, gap: f64 },
    #[error("pumped site {0} outside the chain")]
    BadSite(usize),
    #[error("pair formula needs pumps on odd sites only, got site {0}")]
    EvenPump(usize),
    #[error("mode index {0} out of range")]
    BadMode(usize),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Laser(#[from] LaserError),
}

fn check_sites(n: usize, sites: &[usize]) -> Result<(), PerturbError> {
    match sites.iter().find(|&&j| j == 0 || j > n) {
        Some(&j) => Err(PerturbError::BadSite(j)),
        None => Ok(()),
    }
}

fn require_biorthonormal<T: Real>(es: &EigenSystem<T>, mode: usize) -> Result<(), PerturbError> {
    match es.status[mode] {
        PairStatus::Biorthonormal => Ok(()),
        status => Err(PerturbError::NotBiorthonormal { mode, status }),
    }
}

/// `H_{γ,νμ} = ψ̃_νᵀPψ_μ` for all `ν, μ`.
pub fn matrix_elements<T: Real>(es: &EigenSystem<T>, pumped_sites: &[usize]) -> Result<Matrix<T>, PerturbError> {
    check_sites(es.dim, pumped_sites)?;
    let n = es.len();
    Ok(Matrix::from_fn(n, n, |nu, mu| {
        pumped_sites
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |acc, &j| {
                acc + es.left_vectors[nu][j - 1] * es.right_vectors[mu][j - 1]
            })
    }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationPrediction<T = f64> {
    pub base_mode_index: usize,
    pub gamma1: T,
    /// `ω⁽¹⁾`.
    pub energy_correction: Complex<T>,
    /// `ψ⁽¹⁾`, in the normalization of the stored `ψ_μ`.
    pub state_correction: Vec<Complex<T>>,
    pub nhph_pairs: Vec<(usize, usize)>,
}

pub fn first_order<T: Real>(
    es: &EigenSystem<T>,
    pumped_sites: &[usize],
    gamma1: T,
    mode: usize,
    tol: &PerturbTolerances,
) -> Result<PerturbationPrediction<T>, PerturbError> {
    if mode >= es.len() {
        return Err(PerturbError::BadMode(mode));
    }
    for nu in 0..es.len() {
        require_biorthonormal(es, nu)?;
    }
    let hg = matrix_elements(es, pumped_sites)?;
    let ig = Complex::new(T::zero(), gamma1);
    let min_gap = lit::<T>(tol.degenerate) * es.norm;
    let mut psi1 = vec![Complex::new(T::zero(), T::zero()); es.dim];
    for nu in 0..es.len() {
        if nu == mode {
            continue;
        }
        let d = es.eigenvalues[mode] - es.eigenvalues[nu];
        if d.norm() < min_gap {
            return Err(PerturbError::Degenerate {
                mu: mode,
                nu,
                gap: to_f64(d.norm()),
            });
        }
        let coef = ig * hg[(nu, mode)] / d;
        for (p, v) in psi1.iter_mut().zip(&es.right_vectors[nu]) {
            *p += coef * v;
        }
    }
    let pairs = nhph_pairs(es, tol);
    Ok(PerturbationPrediction {
        base_mode_index: mode,
        gamma1,
        energy_correction: ig * hg[(mode, mode)],
        state_correction: psi1,
        nhph_pairs: pairs.pairs.iter().map(|p| (p.nu, p.partner)).collect(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NhphPair<T = f64> {
    pub nu: usize,
    pub partner: usize,
    /// `|ω_ν′ + ω_ν*| / ‖H‖`.
    pub energy_residual: T,
    /// Collinearity residual of `ψ_ν′` against `S ψ_ν*`.
    pub vector_residual: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NhphPairing<T = f64> {
    pub pairs: Vec<NhphPair<T>>,
    /// Modes that are their own partner (the zero mode).
    pub self_paired: Vec<usize>,
    pub unmatched: Vec<usize>,
}

impl<T: Real> NhphPairing<T> {
    pub fn complete(&self) -> bool {
        self.unmatched.is_empty()
    }
}

/// `S ψ*` with `S = diag((−1)^(j−1))`.
pub fn nhph_image<T: Real>(psi: &[Complex<T>]) -> Vec<Complex<T>> {
    psi.iter()
        .enumerate()
        .map(|(j, z)| if j % 2 == 0 { z.conj() } else { -z.conj() })
        .collect()
}

pub fn nhph_pairs<T: Real>(es: &EigenSystem<T>, tol: &PerturbTolerances) -> NhphPairing<T> {
    let n = es.len();
    let etol = lit::<T>(tol.nhph);
    let mut used = vec![false; n];
    let mut out = NhphPairing {
        pairs: Vec::new(),
        self_paired: Vec::new(),
        unmatched: Vec::new(),
    };
    for nu in 0..n {
        if used[nu] {
            continue;
        }
        let target = -es.eigenvalues[nu].conj();
        let image = nhph_image(&es.right_vectors[nu]);
        // candidates ranked by eigenvalue distance, then by vector match
        let best = (0..n)
            .filter(|&k| !used[k] || k == nu)
            .filter(|&k| (es.eigenvalues[k] - target).norm() <= etol * es.norm)
            .map(|k| (k, collinearity(&es.right_vectors[k], &image).0))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        used[nu] = true;
        match best {
            Some((k, r)) if r <= etol.sqrt() => {
                if k == nu {
                    out.self_paired.push(nu);
                } else {
                    used[k] = true;
                    out.pairs.push(NhphPair {
                        nu,
                        partner: k,
                        energy_residual: (es.eigenvalues[k] - target).norm() / es.norm,
                        vector_residual: r,
                    });
                }
            }
            _ => out.unmatched.push(nu),
        }
    }
    out
}

/// Zero-mode correction assembled pair by pair:
/// `ψ⁽¹⁾₀,j = −2iγ₁ Σ_pairs H_{γ,ν0}/Re ω_ν · ψ_ν,j` on even sites, zero on odd
/// sites. Requires a zero mode and pumps on odd sites.
pub fn zero_mode_pair_formula<T: Real>(
    es: &EigenSystem<T>,
    pairing: &NhphPairing<T>,
    pumped_sites: &[usize],
    gamma1: T,
    zero: usize,
) -> Result<Vec<Complex<T>>, PerturbError> {
    check_sites(es.dim, pumped_sites)?;
    if let Some(&j) = pumped_sites.iter().find(|&&j| j % 2 == 0) {
        return Err(PerturbError::EvenPump(j));
    }
    let hg = matrix_elements(es, pumped_sites)?;
    let factor = Complex::new(T::zero(), -lit::<T>(2.0) * gamma1);
    let mut out = vec![Complex::new(T::zero(), T::zero()); es.dim];
    for p in &pairing.pairs {
        let nu = p.nu;
        let coef = factor * hg[(nu, zero)] / es.eigenvalues[nu].re;
        for j in (1..es.dim).step_by(2) {
            out[j] += coef * es.right_vectors[nu][j];
        }
    }
    Ok(out)
}

/// Comparison of `ψ₀ + ψ⁽¹⁾` with the exact pumped mode at one `γ₁`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactComparison<T = f64> {
    pub gamma1: T,
    /// Exact mode, scaled so that `ψ̃₀ᵀψ = 1`.
    pub exact: Vec<Complex<T>>,
    pub predicted: Vec<Complex<T>>,
    /// `‖(ψ − ψ₀ − ψ⁽¹⁾)_even‖ / ‖ψ₀‖`.
    pub even_residual: T,
    /// `‖(ψ − ψ₀)_odd‖ / ‖ψ₀‖`.
    pub odd_deviation: T,
    /// `|ω_exact − ω₀ − ω⁽¹⁾|`.
    pub energy_residual: T,
}

/// Exact zero-mode branch of `H − iκ₀I + iγ₁P` against first-order theory.
/// `es` is the eigensystem of `H` and `zero` its zero mode.
pub fn compare_with_exact<T: Real>(
    h: &Matrix<T>,
    es: &EigenSystem<T>,
    zero: usize,
    pump: &PumpSpec,
    gammas: &[T],
    tol: &PerturbTolerances,
) -> Result<Vec<ExactComparison<T>>, PerturbError> {
    let psi0 = &es.right_vectors[zero];
    let left0 = &es.left_vectors[zero];
    let n0 = norm2(psi0);
    let kappa = Complex::new(T::zero(), -lit::<T>(pump.kappa0));
    gammas
        .iter()
        .map(|&g| {
            let pred = first_order(es, &pump.pumped_sites, g, zero, tol)?;
            let ha = pumped_hamiltonian(h, &pump.with_gamma(to_f64(g)))?;
            let exact_es = eig_full(&ha)?;
            // exact branch: the mode with the largest overlap with ψ̃₀
            let k = (0..exact_es.len())
                .max_by(|&a, &b| {
                    dotu(left0, &exact_es.right_vectors[a])
                        .norm()
                        .partial_cmp(&dotu(left0, &exact_es.right_vectors[b]).norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty");
            let scale = Complex::new(T::one(), T::zero()) / dotu(left0, &exact_es.right_vectors[k]);
            let exact: Vec<Complex<T>> = exact_es.right_vectors[k].iter().map(|z| z * scale).collect();
            let predicted: Vec<Complex<T>> = psi0.iter().zip(&pred.state_correction).map(|(a, b)| a + b).collect();
            let sum_sq = |parity: usize, reference: &[Complex<T>]| {
                exact
                    .iter()
                    .zip(reference)
                    .enumerate()
                    .filter(|(j, _)| j % 2 == parity)
                    .fold(T::zero(), |acc, (_, (x, y))| acc + (x - y).norm_sqr())
                    .sqrt()
            };
            Ok(ExactComparison {
                gamma1: g,
                even_residual: sum_sq(1, &predicted) / n0,
                odd_deviation: sum_sq(0, psi0) / n0,
                energy_residual: (exact_es.eigenvalues[k] - es.eigenvalues[zero] - kappa - pred.energy_correction).norm(),
                exact,
                predicted,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope<T: Real>(points: &[(T, T)]) -> T {
    let k = lit::<T>(points.len() as f64);
    let xs: Vec<T> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<T> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().fold(T::zero(), |a, &b| a + b) / k;
    let my = ys.iter().fold(T::zero(), |a, &b| a + b) / k;
    let sxy = xs.iter().zip(&ys).fold(T::zero(), |a, (x, y)| a + (*x - mx) * (*y - my));
    let sxx = xs.iter().fold(T::zero(), |a, x| a + (*x - mx).powi(2));
    sxy / sxx
}

/// `dω/dγ` of mode `mode` at `γ = 0` from the tracked eigenvalue path, using
/// Richardson extrapolation of forward differences at `δ` and `2δ`.
pub fn tracked_derivative<T: Real>(
    h: &Matrix<T>,
    pump: &PumpSpec,
    mode: usize,
    delta: T,
    tol: &LaserTolerances,
) -> Result<Complex<T>, PerturbError> {
    let grid = [T::zero(), delta, delta * lit(2.0)];
    let traj = track_mode(h, pump, &grid, tol)?;
    let p = traj.paths.get(mode).ok_or(PerturbError::BadMode(mode))?;
    let d1 = (p[1] - p[0]) / delta;
    let d2 = (p[2] - p[0]) / (delta * lit(2.0));
    Ok(d1 * lit::<T>(2.0) - d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::eig_full;
    use crate::model::{build_h0, build_scaling, construct_product, LatticeSpec};
    use crate::skin::zero_mode_index;

    fn selective(n: usize, s: f64) -> Matrix<f64> {
        let spec = LatticeSpec::chain(n, 1.0).geometric(s);
        construct_product(&build_h0::<f64>(&spec).unwrap(), &build_scaling::<f64>(&spec).unwrap()).unwrap()
    }

    #[test]
    fn rank_one_elements() {
        let h = selective(9, 2.0);
        let es = eig_full(&h).unwrap();
        let hg = matrix_elements(&es, &[1]).unwrap();
        for nu in 0..9 {
            for mu in 0..9 {
                let e = es.left_vectors[nu][0] * es.right_vectors[mu][0];
                assert!((hg[(nu, mu)] - e).norm() < 1e-14);
            }
        }
        assert!(matches!(matrix_elements(&es, &[10]), Err(PerturbError::BadSite(10))));
    }

    #[test]
    fn hermitian_diagonal_elements_are_probabilities() {
        let h0 = selective(7, 1.0);
        let es = eig_full(&h0).unwrap();
        let hg = matrix_elements(&es, &[1]).unwrap();
        for mu in 0..7 {
            assert!((hg[(mu, mu)].re - es.right_vectors[mu][0].norm_sqr()).abs() < 1e-12);
            assert!(hg[(mu, mu)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn nhph_pairing_counts() {
        let tol = PerturbTolerances::default();
        for s in [2.0, 1.0] {
            let es = eig_full(&selective(9, s)).unwrap();
            let p = nhph_pairs(&es, &tol);
            assert_eq!(p.pairs.len(), 4, "s={s}");
            assert_eq!(p.self_paired.len(), 1);
            assert!(p.complete());
        }
        let spec = LatticeSpec::chain(9, 1.0).harmonic(0.5);
        let es = eig_full(&build_h0::<f64>(&spec).unwrap()).unwrap();
        let p = nhph_pairs(&es, &tol);
        assert!(p.pairs.is_empty() && p.self_paired.is_empty());
        assert_eq!(p.unmatched.len(), 9);
    }

    #[test]
    fn partner_elements_and_denominators() {
        let tol = PerturbTolerances::default();
        let es = eig_full(&selective(9, 2.0)).unwrap();
        let z = zero_mode_index(&es, 1e-8).unwrap();
        let hg = matrix_elements(&es, &[1]).unwrap();
        let pairs = nhph_pairs(&es, &tol);
        for p in &pairs.pairs {
            // products are invariant under the arbitrary scaling of each pair
            let a = hg[(p.nu, z)] * es.right_vectors[p.nu][0];
            let b = hg[(p.partner, z)] * es.right_vectors[p.partner][0];
            assert!((a - b).norm() < 1e-10);
            let d1 = es.eigenvalues[z] - es.eigenvalues[p.nu];
            let d2 = es.eigenvalues[z] - es.eigenvalues[p.partner];
            assert!((d1 + d2).norm() <= 1e-8 * es.norm);
            assert!(d1.im.abs() <= 1e-8 * es.norm);
        }
    }

    #[test]
    fn zero_mode_correction_structure() {
        let tol = PerturbTolerances::default();
        let es = eig_full(&selective(9, 2.0)).unwrap();
        let z = zero_mode_index(&es, 1e-8).unwrap();
        let pred = first_order(&es, &[1], 0.03, z, &tol).unwrap();
        let e = pred.energy_correction;
        assert!(e.re.abs() <= 1e-10 * e.norm());
        let norm = norm2(&pred.state_correction);
        assert!(norm > 0.0);
        for j in (0..9).step_by(2) {
            assert!(pred.state_correction[j].norm() <= 1e-10 * norm);
        }
        let pairs = nhph_pairs(&es, &tol);
        let formula = zero_mode_pair_formula(&es, &pairs, &[1], 0.03, z).unwrap();
        for (a, b) in formula.iter().zip(&pred.state_correction) {
            assert!((a - b).norm() <= 1e-10 * norm);
        }
        let zero = first_order(&es, &[1], 0.0, z, &tol).unwrap();
        assert!(zero.energy_correction.norm() == 0.0 && norm2(&zero.state_correction) == 0.0);
    }

    #[test]
    fn refuses_at_exceptional_point() {
        let spec = LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[4]);
        let h = construct_product(&build_h0::<f64>(&spec).unwrap(), &build_scaling::<f64>(&spec).unwrap()).unwrap();
        let es = eig_full(&h).unwrap();
        let z = zero_mode_index(&es, 1e-8).unwrap();
        assert!(matches!(
            first_order(&es, &[1], 0.01, z, &PerturbTolerances::default()),
            Err(PerturbError::NotBiorthonormal { .. })
        ));
    }

    #[test]
    fn exact_comparison_converges() {
        let tol = PerturbTolerances::default();
        let h = selective(9, 2.0);
        let es = eig_full(&h).unwrap();
        let z = zero_mode_index(&es, 1e-8).unwrap();
        let pump = PumpSpec::new(0.02, &[1]);
        let rows = compare_with_exact(&h, &es, z, &pump, &[0.01, 0.02, 0.04], &tol).unwrap();
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.gamma1, r.even_residual)).collect();
        assert!(log_slope(&pts) >= 1.8, "{pts:?}");
        let d = tracked_derivative(&h, &pump, z, 1e-5, &LaserTolerances::default()).unwrap();
        let hg = matrix_elements(&es, &[1]).unwrap();
        assert!((d - Complex::new(0.0, 1.0) * hg[(z, z)]).norm() <= 1e-6);
    }
}
