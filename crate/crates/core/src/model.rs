//! Lattice models: the Hermitian chain `H₀`, the diagonal scaling `A`, and the
//! matrices derived from them (`H = H₀A`, `H″ = A⁻¹H₀A`, `H_e = BH₀B†`).
//!
//! Sites are 1-based in [`LatticeSpec`] and 0-based in matrix storage.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermitian_eig, lu_solve, LinalgError};
use crate::matrix::Matrix;
use crate::scalar::{lit, to_f64, Field, Real};
use crate::tolerances::SpectraTolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid lattice spec: {field}: {message}")]
    InvalidSpec { field: &'static str, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (‖M − M†‖_max = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("scaling is singular at sites {sites:?}")]
    Singular { sites: Vec<usize> },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// On-site potential of `H₀`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Onsite {
    #[default]
    Zero,
    /// `ω_j = [j − (N−1)/2]² ω²/2`, `j = 1..N`.
    Harmonic { omega2: f64 },
}

/// Diagonal entries `a_j` of `A`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scaling {
    #[default]
    Identity,
    /// `a_j = s^(j−1)`.
    Geometric { s: f64 },
    /// `a_j = 2(1 − u_j)` with `u_j` from [`SplitMix64`].
    Random { seed: u64 },
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub n: usize,
    pub t: f64,
    #[serde(default)]
    pub onsite: Onsite,
    #[serde(default)]
    pub scaling: Scaling,
    /// 1-based sites whose `a_j` is forced to zero.
    #[serde(default)]
    pub zeroed_sites: Vec<usize>,
    /// Admit negative explicit scalings (Hermitian but indefinite `A`).
    #[serde(default)]
    pub allow_indefinite: bool,
}

impl LatticeSpec {
    /// Uniform chain with zero on-site potential and `A = I`.
    pub fn chain(n: usize, t: f64) -> Self {
        Self {
            n,
            t,
            onsite: Onsite::Zero,
            scaling: Scaling::Identity,
            zeroed_sites: Vec::new(),
            allow_indefinite: false,
        }
    }

    pub fn geometric(mut self, s: f64) -> Self {
        self.scaling = Scaling::Geometric { s };
        self
    }

    pub fn random(mut self, seed: u64) -> Self {
        self.scaling = Scaling::Random { seed };
        self
    }

    pub fn explicit(mut self, values: Vec<f64>) -> Self {
        self.scaling = Scaling::Explicit { values };
        self
    }

    pub fn harmonic(mut self, omega2: f64) -> Self {
        self.onsite = Onsite::Harmonic { omega2 };
        self
    }

    pub fn zeroed(mut self, sites: &[usize]) -> Self {
        self.zeroed_sites = sites.to_vec();
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field, message: String| Err(ModelError::InvalidSpec { field, message });
        if self.n == 0 {
            return bad("n", "must be at least 1".into());
        }
        if self.t == 0.0 || !self.t.is_finite() {
            return bad("t", format!("must be finite and nonzero, got {}", self.t));
        }
        if let Onsite::Harmonic { omega2 } = self.onsite {
            if !omega2.is_finite() {
                return bad("onsite.omega2", format!("must be finite, got {omega2}"));
            }
        }
        match &self.scaling {
            Scaling::Identity | Scaling::Random { .. } => {}
            Scaling::Geometric { s } => {
                if !(s.is_finite() && *s > 0.0) {
                    return bad("scaling.s", format!("must be positive, got {s}"));
                }
            }
            Scaling::Explicit { values } => {
                if values.len() != self.n {
                    return bad("scaling.values", format!("expected {} values, got {}", self.n, values.len()));
                }
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return bad("scaling.values", format!("non-finite value {v}"));
                }
                if !self.allow_indefinite {
                    if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                        return bad(
                            "scaling.values",
                            format!("a_{} = {v} is negative; set allow_indefinite for Hermitian-only studies", j + 1),
                        );
                    }
                }
            }
        }
        if let Some(j) = self.zeroed_sites.iter().find(|&&j| j == 0 || j > self.n) {
            return bad("zeroed_sites", format!("site {j} outside 1..={}", self.n));
        }
        Ok(())
    }

    /// On-site energies `ω_j` as `f64`.
    pub fn onsite_values(&self) -> Vec<f64> {
        match self.onsite {
            Onsite::Zero => vec![0.0; self.n],
            Onsite::Harmonic { omega2 } => {
                let c = (self.n as f64 - 1.0) / 2.0;
                (1..=self.n).map(|j| (j as f64 - c).powi(2) * omega2 / 2.0).collect()
            }
        }
    }

    /// Scaling entries `a_j` as `f64`, zeroed sites applied.
    pub fn scaling_values(&self) -> Result<Vec<f64>, ModelError> {
        self.validate()?;
        let mut a = match &self.scaling {
            Scaling::Identity => vec![1.0; self.n],
            Scaling::Geometric { s } => geometric_values(self.n, *s),
            Scaling::Random { seed } => {
                let mut g = SplitMix64::new(*seed);
                (0..self.n).map(|_| 2.0 * (1.0 - g.next_unit())).collect()
            }
            Scaling::Explicit { values } => values.clone(),
        };
        for &j in &self.zeroed_sites {
            a[j - 1] = 0.0;
        }
        Ok(a)
    }

    /// Geometric ratio when the scaling is geometric.
    pub fn ratio(&self) -> Option<f64> {
        match self.scaling {
            Scaling::Geometric { s } => Some(s),
            Scaling::Identity => Some(1.0),
            _ => None,
        }
    }
}

/// SplitMix64 stream; `next_unit` takes the top 53 bits into `[0, 1)`.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `s^(j−1)` by repeated multiplication, so integer powers stay exact.
pub fn geometric_values(n: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut a = 1.0;
    for _ in 0..n {
        out.push(a);
        a *= s;
    }
    out
}

/// Geometric scaling in any field, e.g. exact rationals.
pub fn geometric_diag<T: Field>(n: usize, s: T) -> Matrix<T> {
    let mut a = T::one();
    let mut diag = Vec::with_capacity(n);
    for _ in 0..n {
        diag.push(a.clone());
        a = a * s.clone();
    }
    Matrix::from_real_diag(&diag)
}

/// Tridiagonal `H₀` with the given on-site energies and uniform coupling.
pub fn tight_binding<T: Field>(onsite: &[T], t: T) -> Matrix<T> {
    let n = onsite.len();
    Matrix::from_fn(n, n, |i, j| {
        let v = if i == j {
            onsite[i].clone()
        } else if i + 1 == j || j + 1 == i {
            t.clone()
        } else {
            T::zero()
        };
        Complex::new(v, T::zero())
    })
}

pub fn build_h0<T: Real>(spec: &LatticeSpec) -> Result<Matrix<T>, ModelError> {
    spec.validate()?;
    let onsite: Vec<T> = spec.onsite_values().into_iter().map(lit).collect();
    Ok(tight_binding(&onsite, lit(spec.t)))
}

pub fn build_scaling<T: Real>(spec: &LatticeSpec) -> Result<Matrix<T>, ModelError> {
    let a: Vec<T> = spec.scaling_values()?.into_iter().map(lit).collect();
    Ok(Matrix::from_real_diag(&a))
}

fn same_square<T: Field>(a: &Matrix<T>, b: &Matrix<T>, what: &str) -> Result<(), ModelError> {
    if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
        return Err(ModelError::Dimension(format!(
            "{what}: {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// `H = H₀A`.
pub fn construct_product<T: Field>(h0: &Matrix<T>, a: &Matrix<T>) -> Result<Matrix<T>, ModelError> {
    same_square(h0, a, "construct_product")?;
    Ok(h0 * a)
}

/// `A⁻¹H₀A` for diagonal `A` given by its entries, in any field.
pub fn gauge_diagonal<T: Field>(h0: &Matrix<T>, a: &[Complex<T>]) -> Result<Matrix<T>, ModelError> {
    if h0.rows() != a.len() || !h0.is_square() {
        return Err(ModelError::Dimension(format!("gauge: {}x{} with {} scalings", h0.rows(), h0.cols(), a.len())));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let sites: Vec<usize> = a.iter().enumerate().filter(|(_, x)| **x == zero).map(|(j, _)| j + 1).collect();
    if !sites.is_empty() {
        return Err(ModelError::Singular { sites });
    }
    Ok(Matrix::from_fn(h0.rows(), h0.cols(), |i, j| {
        h0[(i, j)].clone() * a[j].clone() / a[i].clone()
    }))
}

/// `H″ = A⁻¹H₀A`.
pub fn construct_gauge<T: Real>(h0: &Matrix<T>, a: &Matrix<T>) -> Result<Matrix<T>, ModelError> {
    same_square(h0, a, "construct_gauge")?;
    if a.is_diagonal() {
        return gauge_diagonal(h0, &a.diagonal());
    }
    let rhs = h0 * a;
    match lu_solve(a, &rhs) {
        Ok(x) => Ok(x),
        Err(LinalgError::Singular { column, .. }) => Err(ModelError::Singular { sites: vec![column + 1] }),
        Err(e) => Err(e.into()),
    }
}

pub fn check_hermitian<T: Real>(m: &Matrix<T>, tol: &SpectraTolerances) -> Result<(), ModelError> {
    if !m.is_square() {
        return Err(ModelError::Dimension(format!("{}x{} is not square", m.rows(), m.cols())));
    }
    if m.is_hermitian(lit(tol.hermitian)) {
        return Ok(());
    }
    Err(ModelError::NotHermitian {
        deviation: to_f64(m.max_abs_diff(&m.adjoint())),
    })
}

/// Smallest eigenvalue of a Hermitian matrix; errors when below `−psd·‖A‖`.
pub fn check_psd<T: Real>(a: &Matrix<T>, tol: &SpectraTolerances) -> Result<T, ModelError> {
    check_hermitian(a, tol)?;
    let min = if a.is_diagonal() {
        a.diagonal().iter().map(|z| z.re).fold(T::infinity(), T::min)
    } else {
        hermitian_eig(a)?.eigenvalues[0]
    };
    if min < -lit::<T>(tol.psd) * a.norm_fro() {
        return Err(ModelError::NotPsd {
            min_eigenvalue: to_f64(min),
        });
    }
    Ok(min)
}

/// `B` with `B†B = A`. Diagonal input gives `B = diag(√a_j)`; otherwise
/// `B = diag(√λ) V†` from the Hermitian eigendecomposition.
pub fn factor_psd<T: Real>(a: &Matrix<T>, tol: &SpectraTolerances) -> Result<Matrix<T>, ModelError> {
    check_psd(a, tol)?;
    let floor = |x: T| x.max(T::zero()).sqrt();
    if a.is_diagonal() {
        let d: Vec<T> = a.diagonal().iter().map(|z| floor(z.re)).collect();
        return Ok(Matrix::from_real_diag(&d));
    }
    let eig = hermitian_eig(a)?;
    let n = a.rows();
    Ok(Matrix::from_fn(n, n, |i, j| eig.vectors[(j, i)].conj() * floor(eig.eigenvalues[i])))
}

/// `H_e = BH₀B†`, Hermitian by construction.
pub fn hermitian_equivalent<T: Real>(
    h0: &Matrix<T>,
    b: &Matrix<T>,
    tol: &SpectraTolerances,
) -> Result<Matrix<T>, ModelError> {
    same_square(h0, b, "hermitian_equivalent")?;
    let he = &(b * h0) * &b.adjoint();
    check_hermitian(&he, tol)?;
    Ok(he)
}

/// `H + cI`.
pub fn shift_spectrum<T: Field>(h: &Matrix<T>, c: T) -> Matrix<T> {
    h.add_diagonal(&Complex::new(c, T::zero()))
}

/// All matrices of one lattice spec.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub spec: LatticeSpec,
    pub h0: Matrix<T>,
    pub a: Matrix<T>,
    /// `H = H₀A`.
    pub h: Matrix<T>,
    /// `H″ = A⁻¹H₀A`, absent when `A` is singular.
    pub gauge: Option<Matrix<T>>,
    /// Factor `B` and `H_e = BH₀B†`, absent when `A` is indefinite.
    pub b: Option<Matrix<T>>,
    pub hermitian_equivalent: Option<Matrix<T>>,
}

impl<T: Real> Model<T> {
    pub fn build(spec: &LatticeSpec, tol: &SpectraTolerances) -> Result<Self, ModelError> {
        let h0 = build_h0::<T>(spec)?;
        let a = build_scaling::<T>(spec)?;
        let h = construct_product(&h0, &a)?;
        let gauge = match construct_gauge(&h0, &a) {
            Ok(g) => Some(g),
            Err(ModelError::Singular { .. }) => None,
            Err(e) => return Err(e),
        };
        let (b, he) = match factor_psd(&a, tol) {
            Ok(b) => {
                let he = hermitian_equivalent(&h0, &b, tol)?;
                (Some(b), Some(he))
            }
            Err(ModelError::NotPsd { .. }) if spec.allow_indefinite => (None, None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            spec: spec.clone(),
            h0,
            a,
            h,
            gauge,
            b,
            hermitian_equivalent: he,
        })
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eig::{eigenvalues, sort_eigenvalues};
    use num_rational::Rational64;

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    fn sorted_real(m: &Matrix<f64>) -> Vec<f64> {
        let mut w = eigenvalues(m).unwrap();
        sort_eigenvalues(&mut w);
        w.iter().map(|z| z.re).collect()
    }

    #[test]
    fn two_site_chain() {
        let h0 = build_h0::<f64>(&LatticeSpec::chain(2, 1.0)).unwrap();
        assert_eq!(h0, Matrix::from_real_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]));
    }

    #[test]
    fn harmonic_onsite() {
        let spec = LatticeSpec::chain(100, 1.0).harmonic(1e-3);
        let h0 = build_h0::<f64>(&spec).unwrap();
        for j in 1..=100 {
            let expected = (j as f64 - 49.5).powi(2) * 1e-3 / 2.0;
            assert!((h0[(j - 1, j - 1)].re - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn open_chain_spectrum() {
        let h0 = build_h0::<f64>(&LatticeSpec::chain(9, 1.0)).unwrap();
        let w = sorted_real(&h0);
        let mut exact: Vec<f64> = (1..=9).map(|k| 2.0 * (k as f64 * std::f64::consts::PI / 10.0).cos()).collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in w.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(w.iter().any(|x| (x - 0.618034).abs() < 1e-6));
    }

    #[test]
    fn geometric_and_zeroed_scaling() {
        let a = build_scaling::<f64>(&LatticeSpec::chain(3, 1.0).geometric(2.0)).unwrap();
        assert_eq!(a.diagonal(), vec![c(1.0), c(2.0), c(4.0)]);
        let a = build_scaling::<f64>(&LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[4])).unwrap();
        let d: Vec<f64> = a.diagonal().iter().map(|z| z.re).collect();
        assert_eq!(d, vec![1.0, 2.0, 4.0, 0.0, 16.0, 32.0, 64.0, 128.0, 256.0]);
    }

    #[test]
    fn splitmix_reference_stream() {
        // reference values of the public SplitMix64 stream for seed 0
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn random_scaling_is_reproducible_and_in_range() {
        let spec = LatticeSpec::chain(4, 1.0).random(1);
        let a = spec.scaling_values().unwrap();
        assert_eq!(a, spec.scaling_values().unwrap());
        assert!(a.iter().all(|&x| x > 0.0 && x <= 2.0));
    }

    #[test]
    fn product_two_by_two() {
        let h0 = Matrix::<f64>::from_real_rows(vec![vec![0.0, 1.5], vec![1.5, 0.0]]);
        let a = Matrix::from_real_diag(&[2.0, 3.0]);
        let h = construct_product(&h0, &a).unwrap();
        assert_eq!(h, Matrix::from_real_rows(vec![vec![0.0, 4.5], vec![3.0, 0.0]]));
        let w = sorted_real(&h);
        let r = 1.5 * 6f64.sqrt();
        assert!((w[0] + r).abs() < 1e-12 && (w[1] - r).abs() < 1e-12);
        assert_eq!(h.adjoint(), &a * &h0);
    }

    #[test]
    fn product_with_indefinite_scaling_is_complex() {
        let h0 = Matrix::<f64>::from_real_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let a = Matrix::from_real_diag(&[1.0, -1.0]);
        let mut w = eigenvalues(&construct_product(&h0, &a).unwrap()).unwrap();
        sort_eigenvalues(&mut w);
        assert!((w[0] - Complex::new(0.0, -1.0)).norm() < 1e-14);
        assert!((w[1] - Complex::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let h0 = Matrix::<f64>::identity(2);
        let a = Matrix::<f64>::identity(3);
        assert!(matches!(construct_product(&h0, &a), Err(ModelError::Dimension(_))));
    }

    #[test]
    fn gauge_preserves_spectrum_and_squares_ratio() {
        let spec = LatticeSpec::chain(9, 1.0).geometric(2.0);
        let h0 = build_h0::<f64>(&spec).unwrap();
        let a = build_scaling::<f64>(&spec).unwrap();
        let g = construct_gauge(&h0, &a).unwrap();
        for (x, y) in sorted_real(&g).iter().zip(sorted_real(&h0).iter()) {
            assert!((x - y).abs() < 1e-8 * h0.norm_fro());
        }
        for j in 0..8 {
            assert!((g[(j, j + 1)].re / g[(j + 1, j)].re - 4.0).abs() < 1e-12);
        }
        assert_eq!(construct_gauge(&h0, &Matrix::identity(9)).unwrap(), h0);
    }

    #[test]
    fn gauge_rejects_singular_scaling() {
        let spec = LatticeSpec::chain(9, 1.0).geometric(2.0).zeroed(&[4, 7]);
        let h0 = build_h0::<f64>(&spec).unwrap();
        let a = build_scaling::<f64>(&spec).unwrap();
        assert_eq!(construct_gauge(&h0, &a), Err(ModelError::Singular { sites: vec![4, 7] }));
    }

    #[test]
    fn exact_rational_coupling_ratio() {
        let s = Rational64::new(3, 2);
        let onsite = vec![Rational64::from_integer(0); 7];
        let h0 = tight_binding(&onsite, Rational64::from_integer(1));
        let a = geometric_diag(7, s);
        let h = construct_product(&h0, &a).unwrap();
        let hpp = gauge_diagonal(&h0, &a.diagonal()).unwrap();
        for j in 0..6 {
            assert_eq!(h[(j, j + 1)] / h[(j + 1, j)], Complex::new(s, Rational64::from_integer(0)));
            assert_eq!(hpp[(j, j + 1)] / hpp[(j + 1, j)], Complex::new(s * s, Rational64::from_integer(0)));
        }
    }

    #[test]
    fn psd_factors() {
        let tol = SpectraTolerances::default();
        let b = factor_psd(&Matrix::<f64>::from_real_diag(&[1.0, 4.0, 9.0]), &tol).unwrap();
        assert_eq!(b, Matrix::from_real_diag(&[1.0, 2.0, 3.0]));
        let b = factor_psd(&Matrix::<f64>::from_real_diag(&[1.0, 2.0, 0.0]), &tol).unwrap();
        assert_eq!(b.diagonal()[2], c(0.0));
        assert!((b.diagonal()[1].re - 2f64.sqrt()).abs() < 1e-15);
        let r = Matrix::<f64>::from_fn(4, 4, |i, j| Complex::new((i * 3 + j) as f64 * 0.1 - 0.5, (i as f64 - j as f64) * 0.2));
        let a = &r.adjoint() * &r;
        let b = factor_psd(&a, &tol).unwrap();
        assert!((&(&b.adjoint() * &b) - &a).norm_fro() <= 1e-10 * a.norm_fro());
        assert!(matches!(
            factor_psd(&Matrix::<f64>::from_real_diag(&[1.0, -1.0]), &tol),
            Err(ModelError::NotPsd { .. })
        ));
    }

    #[test]
    fn hermitian_equivalent_couplings() {
        let tol = SpectraTolerances::default();
        let s: f64 = 2.0;
        let spec = LatticeSpec::chain(9, 1.0).geometric(s);
        let m = Model::<f64>::build(&spec, &tol).unwrap();
        let he = m.hermitian_equivalent.as_ref().unwrap();
        for j in 1..9 {
            assert!((he[(j - 1, j)].re - s.powf(j as f64 - 0.5)).abs() < 1e-12);
        }
        for (x, y) in sorted_real(he).iter().zip(sorted_real(&m.h).iter()) {
            assert!((x - y).abs() <= 1e-8 * m.h.norm_fro());
        }
        let b = Matrix::identity(9);
        assert_eq!(hermitian_equivalent(&m.h0, &b, &tol).unwrap(), m.h0);
    }

    #[test]
    fn spectral_shift() {
        let h0 = build_h0::<f64>(&LatticeSpec::chain(5, 1.0)).unwrap();
        assert_eq!(shift_spectrum(&h0, 0.0), h0);
        let w0 = sorted_real(&h0);
        let w1 = sorted_real(&shift_spectrum(&h0, 1.25));
        for (a, b) in w0.iter().zip(&w1) {
            assert!((b - a - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_errors() {
        assert!(LatticeSpec::chain(0, 1.0).validate().is_err());
        assert!(LatticeSpec::chain(3, 0.0).validate().is_err());
        assert!(LatticeSpec::chain(3, 1.0).geometric(-1.0).validate().is_err());
        assert!(LatticeSpec::chain(3, 1.0).explicit(vec![1.0, 2.0]).validate().is_err());
        assert!(LatticeSpec::chain(3, 1.0).explicit(vec![1.0, -2.0, 1.0]).validate().is_err());
        let mut ok = LatticeSpec::chain(3, 1.0).explicit(vec![1.0, -2.0, 1.0]);
        ok.allow_indefinite = true;
        assert!(ok.validate().is_ok());
        assert!(LatticeSpec::chain(3, 1.0).zeroed(&[4]).validate().is_err());
        assert!(LatticeSpec::chain(3, 1.0).zeroed(&[0]).validate().is_err());
    }

    #[test]
    fn spec_json_round_trip_rejects_unknown_fields() {
        let spec = LatticeSpec::chain(9, 1.0).geometric(1.8).zeroed(&[4]);
        let text = serde_json::to_string(&spec).unwrap();
        let back: LatticeSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"n": 3, "t": 1.0, "colour": "red"}"#;
        assert!(serde_json::from_str::<LatticeSpec>(bad).is_err());
        let minimal: LatticeSpec = serde_json::from_str(r#"{"n": 3, "t": 1.0}"#).unwrap();
        assert_eq!(minimal, LatticeSpec::chain(3, 1.0));
    }
}
