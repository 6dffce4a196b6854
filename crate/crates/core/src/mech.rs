//! Coupled frictionless oscillators with unequal masses between fixed walls.
//!
//! `ẍ = Mx` with `M = AM₀`, `A = diag(1/m_j)` and `M₀` tridiagonal with `−2k`
//! on the diagonal and `k` off it. `M` is not Hermitian when the masses differ,
//! yet its eigenvalues `−ω_μ²` are real and nonpositive.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::{eig_full, eigenvalues, EigError};
use crate::linalg::{hermitian_eig, LinalgError};
use crate::matrix::{phase_align, Matrix};
use crate::scalar::{lit, to_f64, Real};
use crate::tolerances::MechTolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechError {
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("non-physical eigenvalue {re:e}{im:+e}i (limit {limit:e})")]
    NonPhysical { re: f64, im: f64, limit: f64 },
    #[error("dt·ω_max = {value} exceeds {limit}")]
    Unstable { value: f64, limit: f64 },
    #[error("state has {got} components, chain has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("signal too short for a spectrum: {0} samples")]
    ShortSignal(usize),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorChain<T = f64> {
    pub masses: Vec<T>,
    pub spring_k: T,
}

impl<T: Real> OscillatorChain<T> {
    pub fn new(masses: Vec<T>, spring_k: T) -> Result<Self, MechError> {
        let c = Self { masses, spring_k };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MechError> {
        if self.masses.is_empty() {
            return Err(MechError::InvalidChain("no masses".into()));
        }
        if let Some((i, m)) = self.masses.iter().enumerate().find(|(_, m)| !(**m > T::zero() && m.is_finite())) {
            return Err(MechError::InvalidChain(format!("mass {} = {m} is not positive", i + 1)));
        }
        if !(self.spring_k > T::zero() && self.spring_k.is_finite()) {
            return Err(MechError::InvalidChain(format!("spring constant {} is not positive", self.spring_k)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    /// Gershgorin bound on `ω_max`.
    pub fn omega_bound(&self) -> T {
        let m = self.masses.iter().fold(T::infinity(), |a, &b| a.min(b));
        (lit::<T>(4.0) * self.spring_k / m).sqrt()
    }

    /// `Σ½m_iẋ_i² + ½k[x₁² + x_n² + Σ(x_{i+1}−x_i)²]`.
    pub fn energy(&self, x: &[T], v: &[T]) -> T {
        let half = lit::<T>(0.5);
        let kin = self.masses.iter().zip(v).fold(T::zero(), |a, (m, v)| a + half * *m * *v * *v);
        let n = x.len();
        let mut pot = x[0] * x[0] + x[n - 1] * x[n - 1];
        for i in 0..n - 1 {
            pot += (x[i + 1] - x[i]).powi(2);
        }
        kin + half * self.spring_k * pot
    }

    fn acceleration(&self, x: &[T], out: &mut [T]) {
        let n = x.len();
        for i in 0..n {
            let left = if i > 0 { x[i - 1] } else { T::zero() };
            let right = if i + 1 < n { x[i + 1] } else { T::zero() };
            out[i] = self.spring_k / self.masses[i] * (left + right - lit::<T>(2.0) * x[i]);
        }
    }
}

/// `M₀`: `−2k` on the diagonal, `k` on the first off-diagonals.
pub fn stiffness<T: Real>(chain: &OscillatorChain<T>) -> Matrix<T> {
    let n = chain.n();
    let k = chain.spring_k;
    Matrix::from_fn(n, n, |i, j| {
        let v = if i == j {
            -lit::<T>(2.0) * k
        } else if i.abs_diff(j) == 1 {
            k
        } else {
            T::zero()
        };
        Complex::new(v, T::zero())
    })
}

/// `M = AM₀` with `A = diag(1/m_j)`.
pub fn dynamical_matrix<T: Real>(chain: &OscillatorChain<T>) -> Matrix<T> {
    let a = Matrix::from_real_diag(&chain.masses.iter().map(|m| m.recip()).collect::<Vec<_>>());
    &a * &stiffness(chain)
}

/// `diag(m^(−1/2)) M₀ diag(m^(−1/2))`, Hermitian and similar to `M`.
pub fn hermitian_equivalent<T: Real>(chain: &OscillatorChain<T>) -> Matrix<T> {
    let b = Matrix::from_real_diag(&chain.masses.iter().map(|m| m.sqrt().recip()).collect::<Vec<_>>());
    &(&b * &stiffness(chain)) * &b
}

/// `ω_μ = √(−λ_μ)`, ascending.
pub fn eigenfrequencies<T: Real>(m: &Matrix<T>, tol: &MechTolerances) -> Result<Vec<T>, MechError> {
    let limit = lit::<T>(tol.physical) * m.norm_fro();
    let mut out = Vec::with_capacity(m.rows());
    for l in eigenvalues(m)? {
        if l.im.abs() > limit || l.re > limit {
            return Err(MechError::NonPhysical {
                re: to_f64(l.re),
                im: to_f64(l.im),
                limit: to_f64(limit),
            });
        }
        out.push(l.re.min(T::zero()).neg().sqrt());
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(out)
}

/// Largest gap between the spectra of `M` and its Hermitian equivalent.
pub fn hermitian_equivalent_gap<T: Real>(chain: &OscillatorChain<T>) -> Result<T, MechError> {
    let mut lm: Vec<T> = eigenvalues(&dynamical_matrix(chain))?.iter().map(|z| z.re).collect();
    lm.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let lh = hermitian_eig(&hermitian_equivalent(chain))?.eigenvalues;
    Ok(lm.iter().zip(&lh).fold(T::zero(), |a, (x, y)| a.max((*x - *y).abs())))
}

/// Real eigenmodes of `M` with their frequencies, ascending in frequency.
pub fn normal_modes<T: Real>(chain: &OscillatorChain<T>, tol: &MechTolerances) -> Result<Vec<(T, Vec<T>)>, MechError> {
    let m = dynamical_matrix(chain);
    let es = eig_full(&m)?;
    let freqs = eigenfrequencies(&m, tol)?;
    let mut modes: Vec<(T, Vec<T>)> = es
        .eigenvalues
        .iter()
        .zip(&es.right_vectors)
        .map(|(l, v)| {
            let w = l.re.min(T::zero()).neg().sqrt();
            let v = phase_align(v);
            (w, v.iter().map(|z| z.re).collect())
        })
        .collect();
    modes.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    debug_assert_eq!(modes.len(), freqs.len());
    Ok(modes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState<T = f64> {
    pub x: Vec<T>,
    pub v: Vec<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory<T = f64> {
    /// Time between samples.
    pub sample_dt: T,
    pub positions: Vec<Vec<T>>,
    pub velocities: Vec<Vec<T>>,
    pub end: PhaseState<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> Vec<T> {
        (0..self.positions.len()).map(|i| self.sample_dt * lit(i as f64)).collect()
    }

    pub fn site(&self, j: usize) -> Vec<T> {
        self.positions.iter().map(|x| x[j]).collect()
    }
}

/// Position-Verlet integration of `ẍ = Mx`, sampling every `sample_every` steps
/// (the initial state is the first sample).
pub fn integrate<T: Real>(
    chain: &OscillatorChain<T>,
    start: &PhaseState<T>,
    dt: T,
    steps: usize,
    sample_every: usize,
    tol: &MechTolerances,
) -> Result<Trajectory<T>, MechError> {
    chain.validate()?;
    let n = chain.n();
    for len in [start.x.len(), start.v.len()] {
        if len != n {
            return Err(MechError::SizeMismatch { expected: n, got: len });
        }
    }
    let guard = dt * chain.omega_bound();
    if !(dt > T::zero()) || guard >= lit(tol.stability) {
        return Err(MechError::Unstable {
            value: to_f64(guard),
            limit: tol.stability,
        });
    }
    let every = sample_every.max(1);
    let half = dt * lit(0.5);
    let mut x = start.x.clone();
    let mut v = start.v.clone();
    let mut a = vec![T::zero(); n];
    let mut positions = vec![x.clone()];
    let mut velocities = vec![v.clone()];
    for step in 1..=steps {
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += half * *vi;
        }
        chain.acceleration(&x, &mut a);
        for ((xi, vi), ai) in x.iter_mut().zip(v.iter_mut()).zip(&a) {
            *vi += dt * *ai;
            *xi += half * *vi;
        }
        if step % every == 0 {
            positions.push(x.clone());
            velocities.push(v.clone());
        }
    }
    Ok(Trajectory {
        sample_dt: dt * lit(every as f64),
        positions,
        velocities,
        end: PhaseState { x, v },
    })
}

/// `2π/(len·dt)`, the bin spacing of the sampled spectrum in angular frequency.
pub fn resolution<T: Real>(len: usize, dt: T) -> T {
    T::TAU() / (lit::<T>(len as f64) * dt)
}

fn hann<T: Real>(len: usize) -> Vec<T> {
    let d = lit::<T>((len - 1).max(1) as f64);
    (0..len)
        .map(|i| lit::<T>(0.5) * (T::one() - (T::TAU() * lit::<T>(i as f64) / d).cos()))
        .collect()
}

/// `|Σ w_i x_i e^{−iωt_i}|`.
fn dtft<T: Real>(windowed: &[T], dt: T, omega: T) -> T {
    let (mut re, mut im) = (T::zero(), T::zero());
    for (i, &x) in windowed.iter().enumerate() {
        let ph = omega * dt * lit(i as f64);
        re += x * ph.cos();
        im -= x * ph.sin();
    }
    re.hypot(im)
}

/// Angular frequencies of the `count` strongest spectral peaks of a real
/// signal sampled at spacing `dt`, ascending. Peaks come from a Hann-windowed
/// FFT with quadratic interpolation, then golden-section refinement of the
/// windowed DTFT within one bin.
pub fn peak_frequencies<T: Real + FftNum>(signal: &[T], dt: T, count: usize) -> Result<Vec<T>, MechError> {
    let len = signal.len();
    if len < 8 {
        return Err(MechError::ShortSignal(len));
    }
    let mean = signal.iter().fold(T::zero(), |a, &b| a + b) / lit(len as f64);
    let windowed: Vec<T> = signal.iter().zip(hann::<T>(len)).map(|(&x, w)| (x - mean) * w).collect();
    let padded = len * 4;
    let mut buf: Vec<Complex<T>> = windowed.iter().map(|&x| Complex::new(x, T::zero())).collect();
    buf.resize(padded, Complex::new(T::zero(), T::zero()));
    let fft: Arc<dyn rustfft::Fft<T>> = FftPlanner::new().plan_fft_forward(padded);
    fft.process(&mut buf);
    let mag: Vec<T> = buf[..padded / 2].iter().map(|z| z.norm()).collect();
    let mut peaks: Vec<usize> = (1..mag.len() - 1)
        .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])
        .collect();
    peaks.sort_by(|&a, &b| mag[b].partial_cmp(&mag[a]).expect("finite"));
    peaks.truncate(count);
    let bin = resolution::<T>(padded, dt);
    let golden = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
    let mut out: Vec<T> = peaks
        .into_iter()
        .map(|k| {
            let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
            let denom = a - lit::<T>(2.0) * b + c;
            let shift = if denom != T::zero() { lit::<T>(0.5) * (a - c) / denom } else { T::zero() };
            let guess = (lit::<T>(k as f64) + shift) * bin;
            let (mut lo, mut hi) = (guess - bin, guess + bin);
            let mut x1 = hi - golden * (hi - lo);
            let mut x2 = lo + golden * (hi - lo);
            let mut f1 = dtft(&windowed, dt, x1);
            let mut f2 = dtft(&windowed, dt, x2);
            for _ in 0..60 {
                if f1 > f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - golden * (hi - lo);
                    f1 = dtft(&windowed, dt, x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + golden * (hi - lo);
                    f2 = dtft(&windowed, dt, x2);
                }
            }
            (lo + hi) * lit(0.5)
        })
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(out)
}

/// Time-domain check of one normal mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeCheck<T = f64> {
    pub mode: usize,
    pub eigenfrequency: T,
    pub measured: T,
    pub relative_error: T,
    /// Largest deviation of a sample from the mode shape, relative to its amplitude.
    pub shape_deviation: T,
    pub energy_drift: T,
}

/// Starts the chain in each normal mode, integrates `periods` periods with
/// `dt = cfl/ω_max` and compares the measured frequency with `ω_μ`.
pub fn verify_modes<T: Real + FftNum>(
    chain: &OscillatorChain<T>,
    periods: T,
    cfl: T,
    tol: &MechTolerances,
) -> Result<Vec<ModeCheck<T>>, MechError> {
    let modes = normal_modes(chain, tol)?;
    let dt = cfl / chain.omega_bound();
    let zero = vec![T::zero(); chain.n()];
    modes
        .iter()
        .enumerate()
        .map(|(mu, (w, shape))| {
            let steps = (periods * T::TAU() / (*w * dt)).ceil().to_usize().unwrap_or(0);
            let every = (steps / 4096).max(1);
            let start = PhaseState { x: shape.clone(), v: zero.clone() };
            let traj = integrate(chain, &start, dt, steps, every, tol)?;
            let site = (0..shape.len())
                .max_by(|&a, &b| shape[a].abs().partial_cmp(&shape[b].abs()).expect("finite"))
                .expect("non-empty");
            let measured = peak_frequencies(&traj.site(site), traj.sample_dt, 1)?[0];
            let ss = shape.iter().fold(T::zero(), |a, &b| a + b * b);
            let mut shape_deviation = T::zero();
            for x in &traj.positions {
                let c = x.iter().zip(shape).fold(T::zero(), |a, (x, s)| a + *x * *s) / ss;
                let dev = x.iter().zip(shape).fold(T::zero(), |a, (x, s)| a.max((*x - c * *s).abs()));
                shape_deviation = shape_deviation.max(dev / shape[site].abs());
            }
            let e0 = chain.energy(&start.x, &start.v);
            let energy_drift = traj
                .positions
                .iter()
                .zip(&traj.velocities)
                .fold(T::zero(), |a, (x, v)| a.max((chain.energy(x, v) - e0).abs() / e0));
            Ok(ModeCheck {
                mode: mu,
                eigenfrequency: *w,
                measured,
                relative_error: (measured - *w).abs() / *w,
                shape_deviation,
                energy_drift,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> MechTolerances {
        MechTolerances::default()
    }

    #[test]
    fn two_mass_example() {
        let c = OscillatorChain::new(vec![1.0, 2.0], 1.0).unwrap();
        let m = dynamical_matrix(&c);
        let want = [[-2.0, 1.0], [0.5, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - Complex::new(want[i][j], 0.0)).norm() < 1e-15);
            }
        }
        assert!(!m.is_hermitian(1e-12));
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s3 = 3f64.sqrt();
        assert!((ev[0] - (-3.0 - s3) / 2.0).abs() < 1e-12);
        assert!((ev[1] - (-3.0 + s3) / 2.0).abs() < 1e-12);
        let w = eigenfrequencies(&m, &tol()).unwrap();
        assert!((w[0] - 0.796).abs() < 1e-3 && (w[1] - 1.538).abs() < 1e-3);
    }

    #[test]
    fn single_mass_and_uniform_chain() {
        let c = OscillatorChain::<f64>::new(vec![3.0], 1.5).unwrap();
        let w = eigenfrequencies(&dynamical_matrix(&c), &tol()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14);
        let n = 12;
        let c = OscillatorChain::new(vec![2.0; n], 0.7).unwrap();
        let m = dynamical_matrix(&c);
        assert!(m.is_hermitian(1e-14));
        let w = eigenfrequencies(&m, &tol()).unwrap();
        for (q, wq) in w.iter().enumerate() {
            let s = ((q + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin();
            assert!((wq * wq - 4.0 * 0.35 * s * s).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_chains() {
        assert!(OscillatorChain::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(OscillatorChain::new(Vec::<f64>::new(), 1.0).is_err());
        assert!(OscillatorChain::new(vec![1.0], -1.0).is_err());
        let bad = Matrix::from_real_diag(&[1.0, -1.0]);
        assert!(matches!(eigenfrequencies(&bad, &tol()), Err(MechError::NonPhysical { .. })));
    }

    #[test]
    fn hermitian_equivalent_spectrum() {
        let c = OscillatorChain::new(vec![1.0, 5.0, 0.3, 2.2, 0.9], 1.3).unwrap();
        let gap = hermitian_equivalent_gap(&c).unwrap();
        assert!(gap <= 1e-8 * dynamical_matrix(&c).norm_fro());
    }

    #[test]
    fn stability_guard() {
        let c = OscillatorChain::new(vec![1.0, 1.0], 1.0).unwrap();
        let s = PhaseState { x: vec![1.0, 0.0], v: vec![0.0, 0.0] };
        assert!(matches!(integrate(&c, &s, 0.1, 10, 1, &tol()), Err(MechError::Unstable { .. })));
        assert!(matches!(
            integrate(&c, &PhaseState { x: vec![1.0], v: vec![0.0] }, 0.01, 10, 1, &tol()),
            Err(MechError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn chunking_is_exact() {
        let c = OscillatorChain::new(vec![1.0, 2.0, 0.5], 1.0).unwrap();
        let s = PhaseState { x: vec![0.3, -0.1, 0.7], v: vec![0.0, 0.2, -0.4] };
        let whole = integrate(&c, &s, 0.01, 1000, 1000, &tol()).unwrap();
        let half = integrate(&c, &s, 0.01, 500, 500, &tol()).unwrap();
        let rest = integrate(&c, &half.end, 0.01, 500, 500, &tol()).unwrap();
        assert_eq!(whole.end, rest.end);
    }

    #[test]
    fn energy_conserved() {
        let c = OscillatorChain::<f64>::new(vec![1.0, 2.5, 0.4, 1.7], 1.0).unwrap();
        let s = PhaseState { x: vec![0.5, -0.2, 0.1, 0.9], v: vec![-0.3, 0.4, 0.0, 0.2] };
        let dt = 0.002 / c.omega_bound();
        let traj = integrate(&c, &s, dt, 200_000, 100, &tol()).unwrap();
        let e0 = c.energy(&s.x, &s.v);
        for (x, v) in traj.positions.iter().zip(&traj.velocities) {
            assert!((c.energy(x, v) - e0).abs() <= 1e-6 * e0);
        }
    }

    #[test]
    fn modes_in_time_domain() {
        let c = OscillatorChain::new(vec![1.0, 2.0], 1.0).unwrap();
        for check in verify_modes(&c, 100.0, 0.02, &tol()).unwrap() {
            assert!(check.relative_error < 1e-3, "{check:?}");
            assert!(check.shape_deviation < 1e-3, "{check:?}");
        }
    }

    #[test]
    fn two_tone_signal() {
        let dt = 0.05;
        let sig: Vec<f64> = (0..8000)
            .map(|i| {
                let t = i as f64 * dt;
                (0.9 * t).cos() + 0.5 * (2.3 * t + 0.4).cos()
            })
            .collect();
        let w = peak_frequencies(&sig, dt, 2).unwrap();
        assert!((w[0] - 0.9).abs() < 1e-4 && (w[1] - 2.3).abs() < 1e-4, "{w:?}");
        assert!(resolution(8000, dt) > 1e-2);
    }
}
