//! Mode localization metrics and the selective versus standard skin effect.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::EigenSystem;
use crate::matrix::collinearity;
use crate::scalar::{lit, Real};
use crate::tolerances::SkinTolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkinError {
    #[error("mode vector is zero")]
    ZeroVector,
    #[error("no zero mode: closest eigenvalue {closest:e} (n = {n})")]
    NoZeroMode { n: usize, closest: f64 },
    #[error("systems have different sizes ({0} and {1})")]
    SizeMismatch(usize, usize),
    #[error("scaling ratio must be positive, got {0}")]
    BadRatio(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    OddSites,
    EvenSites,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Localization {
    SkinLeft,
    SkinRight,
    Bulk,
}

impl Localization {
    pub fn as_str(self) -> &'static str {
        match self {
            Localization::SkinLeft => "skin_left",
            Localization::SkinRight => "skin_right",
            Localization::Bulk => "bulk",
        }
    }
}

/// Scale-free localization metrics of one vector. Sites are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile<T = f64> {
    pub n: usize,
    pub ipr: T,
    pub com: T,
    /// Least-squares slope of `ln|ψ_j|` against `j`.
    pub decay_rate: T,
    /// Coefficient of determination of that fit.
    pub envelope_r2: T,
    pub support_parity: Parity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeReport<T = f64> {
    pub mode_index: usize,
    pub eigenvalue: Complex<T>,
    pub ipr: T,
    pub com: T,
    pub decay_rate: T,
    pub envelope_r2: T,
    pub support_parity: Parity,
    pub classification: Localization,
}

pub fn profile<T: Real>(mode: &[Complex<T>], tol: &SkinTolerances) -> Result<Profile<T>, SkinError> {
    let n = mode.len();
    let mags: Vec<T> = mode.iter().map(|z| z.norm()).collect();
    let max = mags.iter().copied().fold(T::zero(), T::max);
    if n == 0 || max == T::zero() {
        return Err(SkinError::ZeroVector);
    }
    // scale first so the fourth powers cannot underflow
    let w: Vec<T> = mags.iter().map(|&m| (m / max).powi(2)).collect();
    let total: T = w.iter().fold(T::zero(), |a, &b| a + b);
    let ipr = w.iter().fold(T::zero(), |a, &b| a + b * b) / (total * total);
    let com = w
        .iter()
        .enumerate()
        .fold(T::zero(), |a, (j, &b)| a + lit::<T>((j + 1) as f64) * b)
        / total;

    let parity_tol = lit::<T>(tol.parity) * max;
    let dark = |rem: usize| mags.iter().enumerate().filter(|(j, _)| (j + 1) % 2 == rem).all(|(_, &m)| m <= parity_tol);
    let support_parity = if dark(0) {
        Parity::OddSites
    } else if dark(1) {
        Parity::EvenSites
    } else {
        Parity::Mixed
    };

    let support_tol = lit::<T>(tol.support) * max;
    let points: Vec<(T, T)> = mags
        .iter()
        .enumerate()
        .filter(|(j, &m)| {
            m > support_tol
                && match support_parity {
                    Parity::OddSites => (j + 1) % 2 == 1,
                    Parity::EvenSites => (j + 1) % 2 == 0,
                    Parity::Mixed => true,
                }
        })
        .map(|(j, &m)| (lit::<T>((j + 1) as f64), (m / max).ln()))
        .collect();
    let (decay_rate, envelope_r2) = linear_fit(&points);
    Ok(Profile {
        n,
        ipr,
        com,
        decay_rate,
        envelope_r2,
        support_parity,
    })
}

/// Slope and `R²` of an ordinary least-squares line. Fewer than two points,
/// or a flat response, count as a perfect fit.
fn linear_fit<T: Real>(points: &[(T, T)]) -> (T, T) {
    if points.len() < 2 {
        return (T::zero(), T::one());
    }
    let k = lit::<T>(points.len() as f64);
    let mx = points.iter().fold(T::zero(), |a, p| a + p.0) / k;
    let my = points.iter().fold(T::zero(), |a, p| a + p.1) / k;
    let sxx = points.iter().fold(T::zero(), |a, p| a + (p.0 - mx).powi(2));
    let sxy = points.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.1 - my));
    let syy = points.iter().fold(T::zero(), |a, p| a + (p.1 - my).powi(2));
    let slope = sxy / sxx;
    let ss_res = points
        .iter()
        .fold(T::zero(), |a, p| a + (p.1 - my - slope * (p.0 - mx)).powi(2));
    let scale = syy.max(my * my).max(T::one());
    let r2 = if syy <= T::epsilon() * scale {
        T::one()
    } else {
        T::one() - ss_res / syy
    };
    (slope, r2)
}

/// Skin modes must sit in the outer quarter on the side selected by `s`,
/// decay at least at half the gauge rate `|ln s|/2`, and follow an
/// exponential envelope. `s = 1` means no preferred side.
pub fn classify<T: Real>(p: &Profile<T>, s: T, tol: &SkinTolerances) -> Localization {
    if s <= T::zero() || s == T::one() {
        return Localization::Bulk;
    }
    let n = lit::<T>(p.n as f64);
    let quarter = lit::<T>(tol.com_fraction) * n;
    let rate = s.ln().abs() / lit(2.0);
    let slack = lit::<T>(tol.rate_slack);
    let smooth = p.envelope_r2 >= lit(tol.min_envelope_r2);
    if s > T::one() {
        if p.com < quarter && p.decay_rate <= -rate + slack && smooth {
            return Localization::SkinLeft;
        }
    } else if p.com > n + T::one() - quarter && p.decay_rate >= rate - slack && smooth {
        return Localization::SkinRight;
    }
    Localization::Bulk
}

/// Reports for every right eigenvector, in eigensystem order.
pub fn mode_reports<T: Real>(es: &EigenSystem<T>, s: T, tol: &SkinTolerances) -> Result<Vec<ModeReport<T>>, SkinError> {
    es.right_vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = profile(v, tol)?;
            Ok(ModeReport {
                mode_index: i,
                eigenvalue: es.eigenvalues[i],
                ipr: p.ipr,
                com: p.com,
                decay_rate: p.decay_rate,
                envelope_r2: p.envelope_r2,
                support_parity: p.support_parity,
                classification: classify(&p, s, tol),
            })
        })
        .collect()
}

/// Index of the zero mode: the eigenvalue nearest zero, which must lie within
/// `zero_tol·‖H‖`.
pub fn zero_mode_index<T: Real>(es: &EigenSystem<T>, zero_tol: T) -> Result<usize, SkinError> {
    let idx = es.nearest(Complex::new(T::zero(), T::zero()));
    let closest = es.eigenvalues[idx].norm();
    if closest > zero_tol * es.norm {
        return Err(SkinError::NoZeroMode {
            n: es.dim,
            closest: closest.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(idx)
}

/// `ψ_j s^−(j−1)`.
pub fn gauge_profile<T: Real>(psi: &[Complex<T>], s: T) -> Vec<Complex<T>> {
    let mut f = T::one();
    psi.iter()
        .map(|z| {
            let v = z * f;
            f = f / s;
            v
        })
        .collect()
}

/// Smallest `|ω|` above `zero_tol·‖H‖`.
pub fn smallest_nonzero<T: Real>(values: &[Complex<T>], norm: T, zero_tol: T) -> Option<T> {
    values
        .iter()
        .map(|z| z.norm())
        .filter(|&a| a > zero_tol * norm)
        .fold(None, |acc: Option<T>, a| Some(acc.map_or(a, |b| b.min(a))))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectiveSkinReport<T = f64> {
    pub zero_mode_index: usize,
    pub zero_eigenvalue: Complex<T>,
    /// `ψ₀` against `ψ⁰₀ s^−(j−1)`.
    pub profile_residual: T,
    /// Left zero vector of `H` against the zero mode of `H₀`.
    pub left_residual: T,
    pub left_com: T,
    pub modes: Vec<ModeReport<T>>,
    pub zero_mode_class: Localization,
    pub nonzero_all_bulk: bool,
    pub ok: bool,
}

fn check_ratio<T: Real>(s: T) -> Result<(), SkinError> {
    if s > T::zero() && s.is_finite() {
        Ok(())
    } else {
        Err(SkinError::BadRatio(s.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Zero-mode tolerance relative to `‖H‖` used to locate zero modes.
const ZERO_MODE_TOL: f64 = 1e-8;

/// Selective skin effect of `H = H₀A` with `a_j = s^(j−1)`.
pub fn verify_selective_skin<T: Real>(
    h_system: &EigenSystem<T>,
    h0_system: &EigenSystem<T>,
    s: T,
    tol: &SkinTolerances,
) -> Result<SelectiveSkinReport<T>, SkinError> {
    check_ratio(s)?;
    if h_system.dim != h0_system.dim {
        return Err(SkinError::SizeMismatch(h_system.dim, h0_system.dim));
    }
    let z = zero_mode_index(h_system, lit(ZERO_MODE_TOL))?;
    let z0 = zero_mode_index(h0_system, lit(ZERO_MODE_TOL))?;
    let psi00 = &h0_system.right_vectors[z0];
    let expected = gauge_profile(psi00, s);
    let profile_residual = collinearity(&h_system.right_vectors[z], &expected).0;
    let left_residual = collinearity(&h_system.left_vectors[z], psi00).0;
    let left_com = profile(&h_system.left_vectors[z], tol)?.com;
    let modes = mode_reports(h_system, s, tol)?;
    let nonzero_all_bulk = modes
        .iter()
        .filter(|m| m.mode_index != z)
        .all(|m| m.classification == Localization::Bulk);
    let match_tol = lit::<T>(tol.profile_match);
    let ok = profile_residual <= match_tol && left_residual <= match_tol && nonzero_all_bulk;
    Ok(SelectiveSkinReport {
        zero_mode_index: z,
        zero_eigenvalue: h_system.eigenvalues[z],
        profile_residual,
        left_residual,
        left_com,
        zero_mode_class: modes[z].classification,
        modes,
        nonzero_all_bulk,
        ok,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StandardSkinReport<T = f64> {
    /// Per mode of `H″`: `ψ″_μ` against `ψ⁰_μ s^−(j−1)`.
    pub profile_residuals: Vec<T>,
    /// Per mode: `|ω″_μ − ω⁰_μ|/‖H₀‖`.
    pub eigenvalue_gaps: Vec<T>,
    pub modes: Vec<ModeReport<T>>,
    pub expected_class: Localization,
    pub all_expected_class: bool,
    pub left_zero_com: Option<T>,
    pub left_zero_on_far_edge: bool,
    pub ok: bool,
}

/// Standard skin effect of `H″ = A⁻¹H₀A` with `a_j = s^(j−1)`.
pub fn verify_standard_skin<T: Real>(
    hpp_system: &EigenSystem<T>,
    h0_system: &EigenSystem<T>,
    s: T,
    tol: &SkinTolerances,
) -> Result<StandardSkinReport<T>, SkinError> {
    check_ratio(s)?;
    let n = hpp_system.dim;
    if n != h0_system.dim {
        return Err(SkinError::SizeMismatch(n, h0_system.dim));
    }
    let mut profile_residuals = Vec::with_capacity(n);
    let mut eigenvalue_gaps = Vec::with_capacity(n);
    for (mu, w) in hpp_system.eigenvalues.iter().enumerate() {
        let nu = h0_system.nearest(*w);
        eigenvalue_gaps.push((w - h0_system.eigenvalues[nu]).norm() / h0_system.norm);
        let expected = gauge_profile(&h0_system.right_vectors[nu], s);
        profile_residuals.push(collinearity(&hpp_system.right_vectors[mu], &expected).0);
    }
    let modes = mode_reports(hpp_system, s, tol)?;
    let expected_class = if s > T::one() {
        Localization::SkinLeft
    } else if s < T::one() {
        Localization::SkinRight
    } else {
        Localization::Bulk
    };
    let all_expected_class = modes.iter().all(|m| m.classification == expected_class);
    let nn = lit::<T>(n as f64);
    let quarter = lit::<T>(tol.com_fraction) * nn;
    let (left_zero_com, left_zero_on_far_edge) = match zero_mode_index(hpp_system, lit(ZERO_MODE_TOL)) {
        Ok(z) => {
            let com = profile(&hpp_system.left_vectors[z], tol)?.com;
            let far = match expected_class {
                Localization::SkinLeft => com > nn + T::one() - quarter,
                Localization::SkinRight => com < quarter,
                Localization::Bulk => true,
            };
            (Some(com), far)
        }
        Err(_) => (None, true),
    };
    let match_tol = lit::<T>(tol.profile_match);
    let ok = profile_residuals.iter().all(|&r| r <= match_tol) && all_expected_class && left_zero_on_far_edge;
    Ok(StandardSkinReport {
        profile_residuals,
        eigenvalue_gaps,
        modes,
        expected_class,
        all_expected_class,
        left_zero_com,
        left_zero_on_far_edge,
        ok,
    })
}

/// `min_c ‖ψ₀ − cψ″₀‖/‖ψ₀‖` between the zero modes of `H` and `H″`.
pub fn zero_mode_equality<T: Real>(h_system: &EigenSystem<T>, hpp_system: &EigenSystem<T>) -> Result<T, SkinError> {
    if h_system.dim != hpp_system.dim {
        return Err(SkinError::SizeMismatch(h_system.dim, hpp_system.dim));
    }
    let z = zero_mode_index(h_system, lit(ZERO_MODE_TOL))?;
    let zpp = zero_mode_index(hpp_system, lit(ZERO_MODE_TOL))?;
    Ok(collinearity(&h_system.right_vectors[z], &hpp_system.right_vectors[zpp]).0)
}

/// Pairs `ω ↔ −ω` among nonzero modes and returns, per pair, the largest
/// difference of normalized `|ψ_j|` profiles.
pub fn chiral_pairs<T: Real>(es: &EigenSystem<T>, match_tol: T) -> Vec<(usize, usize, T)> {
    let zero_tol = lit::<T>(ZERO_MODE_TOL) * es.norm;
    let mut used = vec![false; es.len()];
    let mut out = Vec::new();
    let unit_abs = |v: &[Complex<T>]| {
        let nv = crate::matrix::norm2(v);
        v.iter().map(|z| z.norm() / nv).collect::<Vec<T>>()
    };
    for mu in 0..es.len() {
        if used[mu] || es.eigenvalues[mu].norm() <= zero_tol {
            continue;
        }
        let target = -es.eigenvalues[mu];
        let nu = es.nearest(target);
        if nu == mu || used[nu] || (es.eigenvalues[nu] - target).norm() > match_tol * es.norm {
            continue;
        }
        used[mu] = true;
        used[nu] = true;
        let a = unit_abs(&es.right_vectors[mu]);
        let b = unit_abs(&es.right_vectors[nu]);
        let d = a.iter().zip(&b).map(|(x, y)| (*x - *y).abs()).fold(T::zero(), T::max);
        out.push((mu, nu, d));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::eig_full;
    use crate::model::{build_h0, build_scaling, construct_gauge, construct_product, LatticeSpec};

    fn real_vec(v: &[f64]) -> Vec<Complex<f64>> {
        v.iter().map(|&x| Complex::new(x, 0.0)).collect()
    }

    fn systems(n: usize, s: f64) -> (EigenSystem<f64>, EigenSystem<f64>, EigenSystem<f64>) {
        let spec = LatticeSpec::chain(n, 1.0).geometric(s);
        let h0 = build_h0::<f64>(&spec).unwrap();
        let a = build_scaling::<f64>(&spec).unwrap();
        let h = construct_product(&h0, &a).unwrap();
        let hpp = construct_gauge(&h0, &a).unwrap();
        (eig_full(&h0).unwrap(), eig_full(&h).unwrap(), eig_full(&hpp).unwrap())
    }

    #[test]
    fn uniform_delta_and_geometric_profiles() {
        let tol = SkinTolerances::default();
        let p = profile(&real_vec(&[1.0; 9]), &tol).unwrap();
        assert!((p.ipr - 1.0 / 9.0).abs() < 1e-14);
        assert!((p.com - 5.0).abs() < 1e-14);
        assert!(p.decay_rate.abs() < 1e-14);
        assert_eq!(p.support_parity, Parity::Mixed);

        let mut e4 = vec![0.0; 9];
        e4[3] = 1.0;
        let p = profile(&real_vec(&e4), &tol).unwrap();
        assert_eq!((p.ipr, p.com), (1.0, 4.0));
        assert_eq!(p.support_parity, Parity::EvenSites);

        let g: Vec<f64> = (0..9).map(|j| 2f64.powi(-j)).collect();
        let p = profile(&real_vec(&g), &tol).unwrap();
        assert!((p.decay_rate + 2f64.ln()).abs() < 1e-10);
        assert!(p.envelope_r2 > 1.0 - 1e-12);
        assert!(matches!(profile(&real_vec(&[0.0; 3]), &tol), Err(SkinError::ZeroVector)));
    }

    #[test]
    fn profile_is_scale_free() {
        let tol = SkinTolerances::default();
        let v = real_vec(&[0.3, -1.0, 0.2, 0.05, 0.7]);
        let w: Vec<Complex<f64>> = v.iter().map(|z| z * Complex::new(-3e5, 2e5)).collect();
        let (a, b) = (profile(&v, &tol).unwrap(), profile(&w, &tol).unwrap());
        assert!((a.ipr - b.ipr).abs() < 1e-12 && (a.com - b.com).abs() < 1e-12);
        assert!((a.decay_rate - b.decay_rate).abs() < 1e-12);
    }

    #[test]
    fn selective_skin_s2() {
        let tol = SkinTolerances::default();
        let (e0, eh, _) = systems(9, 2.0);
        let rep = verify_selective_skin(&eh, &e0, 2.0, &tol).unwrap();
        assert!(rep.ok, "{rep:?}");
        assert_eq!(rep.zero_mode_class, Localization::SkinLeft);
        let zp = profile(&eh.right_vectors[rep.zero_mode_index], &tol).unwrap();
        assert_eq!(zp.support_parity, Parity::OddSites);
        // alternating sign on odd sites
        let v = &eh.right_vectors[rep.zero_mode_index];
        assert!((v[0] / v[2]).re < 0.0);
    }

    #[test]
    fn selective_skin_hermitian_limit() {
        let tol = SkinTolerances::default();
        let (e0, eh, _) = systems(9, 1.0);
        let rep = verify_selective_skin(&eh, &e0, 1.0, &tol).unwrap();
        assert!(rep.ok);
        assert!(rep.modes.iter().all(|m| m.classification == Localization::Bulk));
    }

    #[test]
    fn standard_skin_both_directions() {
        let tol = SkinTolerances::default();
        let (e0, _, epp) = systems(9, 2.0);
        let rep = verify_standard_skin(&epp, &e0, 2.0, &tol).unwrap();
        assert!(rep.ok, "{rep:?}");
        assert!(rep.left_zero_com.unwrap() > 6.75);

        let (e0, _, epp) = systems(9, 0.5);
        let rep = verify_standard_skin(&epp, &e0, 0.5, &tol).unwrap();
        assert_eq!(rep.expected_class, Localization::SkinRight);
        assert!(rep.ok, "{rep:?}");
    }

    #[test]
    fn zero_modes_coincide() {
        for (n, s) in [(9, 2.0), (9, 1.0), (11, 1.5)] {
            let (_, eh, epp) = systems(n, s);
            assert!(zero_mode_equality(&eh, &epp).unwrap() <= 1e-8, "n={n} s={s}");
        }
    }

    #[test]
    fn even_chain_has_no_zero_mode() {
        let (e0, eh, _) = systems(8, 2.0);
        assert!(matches!(
            verify_selective_skin(&eh, &e0, 2.0, &SkinTolerances::default()),
            Err(SkinError::NoZeroMode { .. })
        ));
    }

    #[test]
    fn spectral_repulsion_and_chiral_pairs() {
        let (_, eh, epp) = systems(9, 2.0);
        let a = smallest_nonzero(&eh.eigenvalues, eh.norm, 1e-8).unwrap();
        let b = smallest_nonzero(&epp.eigenvalues, epp.norm, 1e-8).unwrap();
        assert!(a > b);
        let pairs = chiral_pairs(&eh, 1e-8);
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|p| p.2 < 1e-8));
    }
}
