//! Lossy cavity arrays under a localized pump: thresholds and junction power flows.
//!
//! Every site loses `κ₀` and pumped sites gain `γ`, so the effective
//! Hamiltonian is `H_a = H − iκ₀I + iγP`. The threshold is the smallest `γ`
//! at which some eigenvalue reaches the real axis.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::{eig_full, eigenvalues, EigError, EigenSystem};
use crate::matrix::{dotc, norm2, Matrix};
use crate::scalar::{lit, to_f64, Real};
use crate::tolerances::LaserTolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaserError {
    #[error("invalid pump: {0}")]
    InvalidPump(String),
    #[error("no threshold below γ = {gamma_max:e} (max Im ω there: {max_imag:e})")]
    NoThreshold { gamma_max: f64, max_imag: f64 },
    #[error("ambiguous mode tracking at γ = {gamma:e}: overlaps {best:.6} and {second:.6}; refine the grid")]
    Ambiguous { gamma: f64, best: f64, second: f64 },
    #[error("γ grid must start at 0 and increase")]
    BadGrid,
    #[error("threshold mode vanishes on the first site")]
    DarkFirstSite,
    #[error(transparent)]
    Eig(#[from] EigError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub kappa0: f64,
    /// 1-based.
    pub pumped_sites: Vec<usize>,
    #[serde(default)]
    pub gamma: f64,
}

impl PumpSpec {
    pub fn new(kappa0: f64, pumped_sites: &[usize]) -> Self {
        Self {
            kappa0,
            pumped_sites: pumped_sites.to_vec(),
            gamma: 0.0,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), LaserError> {
        if !(self.kappa0.is_finite() && self.kappa0 > 0.0) {
            return Err(LaserError::InvalidPump(format!("kappa0 must be positive, got {}", self.kappa0)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(LaserError::InvalidPump(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.pumped_sites.is_empty() {
            return Err(LaserError::InvalidPump("pumped_sites is empty".into()));
        }
        if let Some(j) = self.pumped_sites.iter().find(|&&j| j == 0 || j > n) {
            return Err(LaserError::InvalidPump(format!("site {j} outside 1..={n}")));
        }
        Ok(())
    }

    /// `γ_j` per site.
    pub fn gains(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for &j in &self.pumped_sites {
            g[j - 1] = self.gamma;
        }
        g
    }
}

/// `H_a = H − iκ₀I + iγP`.
pub fn pumped_hamiltonian<T: Real>(h: &Matrix<T>, pump: &PumpSpec) -> Result<Matrix<T>, LaserError> {
    pump.validate(h.rows())?;
    let mut ha = h.add_diagonal(&Complex::new(T::zero(), -lit::<T>(pump.kappa0)));
    for &j in &pump.pumped_sites {
        ha[(j - 1, j - 1)] += Complex::new(T::zero(), lit(pump.gamma));
    }
    Ok(ha)
}

fn max_imag<T: Real>(h: &Matrix<T>, pump: &PumpSpec) -> Result<T, LaserError> {
    let ha = pumped_hamiltonian(h, pump)?;
    Ok(eigenvalues(&ha)?.iter().map(|z| z.im).fold(T::neg_infinity(), T::max))
}

/// Eigenvalue paths along a `γ` grid, matched step to step by eigenvector overlap.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory<T = f64> {
    pub gammas: Vec<T>,
    /// `paths[m][k]`: eigenvalue of mode `m` (indexed at `γ = 0`) at `gammas[k]`.
    pub paths: Vec<Vec<Complex<T>>>,
    /// Modes whose `|Re ω|` stays below `zero_mode·‖H‖` on the whole grid.
    pub zero_modes: Vec<usize>,
    /// Eigenvectors at the last grid point, in mode order.
    pub final_vectors: Vec<Vec<Complex<T>>>,
}

pub fn track_mode<T: Real>(
    h: &Matrix<T>,
    pump: &PumpSpec,
    gamma_grid: &[T],
    tol: &LaserTolerances,
) -> Result<Trajectory<T>, LaserError> {
    if gamma_grid.first().is_none_or(|g| *g != T::zero()) || gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LaserError::BadGrid);
    }
    let n = h.rows();
    let at = |g: T| -> Result<EigenSystem<T>, LaserError> {
        Ok(eig_full(&pumped_hamiltonian(h, &pump.with_gamma(to_f64(g)))?)?)
    };
    let first = at(T::zero())?;
    let mut paths: Vec<Vec<Complex<T>>> = first.eigenvalues.iter().map(|w| vec![*w]).collect();
    let mut vecs: Vec<Vec<Complex<T>>> = first.right_vectors.clone();
    let amb = lit::<T>(tol.overlap_ambiguity);
    for &g in &gamma_grid[1..] {
        let es = at(g)?;
        let overlaps: Vec<Vec<T>> = vecs
            .iter()
            .map(|p| es.right_vectors.iter().map(|q| dotc(p, q).norm() / (norm2(p) * norm2(q))).collect())
            .collect();
        for row in &overlaps {
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            if n > 1 && sorted[1] >= (T::one() - amb) * sorted[0] {
                return Err(LaserError::Ambiguous {
                    gamma: to_f64(g),
                    best: to_f64(sorted[0]),
                    second: to_f64(sorted[1]),
                });
            }
        }
        // greedy assignment by decreasing overlap
        let mut cells: Vec<(T, usize, usize)> = Vec::with_capacity(n * n);
        for (m, row) in overlaps.iter().enumerate() {
            for (k, &o) in row.iter().enumerate() {
                cells.push((o, m, k));
            }
        }
        cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut assigned = vec![usize::MAX; n];
        let mut taken = vec![false; n];
        for (_, m, k) in cells {
            if assigned[m] == usize::MAX && !taken[k] {
                assigned[m] = k;
                taken[k] = true;
            }
        }
        for m in 0..n {
            let k = assigned[m];
            paths[m].push(es.eigenvalues[k]);
            vecs[m] = es.right_vectors[k].clone();
        }
    }
    let zero_tol = lit::<T>(tol.zero_mode) * h.norm_fro();
    let zero_modes = (0..n).filter(|&m| paths[m].iter().all(|w| w.re.abs() <= zero_tol)).collect();
    Ok(Trajectory {
        gammas: gamma_grid.to_vec(),
        paths,
        zero_modes,
        final_vectors: vecs,
    })
}

/// Uniform grid of `steps + 1` points on `[0, gamma_end]`.
pub fn uniform_grid<T: Real>(gamma_end: T, steps: usize) -> Vec<T> {
    (0..=steps).map(|k| gamma_end * lit(k as f64) / lit(steps as f64)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdResult<T = f64> {
    /// `D` in energy units.
    pub threshold: T,
    /// `D/κ₀`.
    pub threshold_kappa: T,
    pub kappa0: T,
    /// Index of the crossing mode in the `γ = 0` eigenvalue order.
    pub crossing_mode_index: usize,
    pub crossing_eigenvalue: Complex<T>,
    pub crossing_is_zero_mode: bool,
    /// Right eigenvector at threshold with `ψ₁ = 1`.
    pub threshold_mode: Vec<Complex<T>>,
    /// `(γ, ω(γ))` along the tracked crossing mode.
    pub trajectory: Vec<(T, Complex<T>)>,
    pub bracket: (T, T),
    /// `max Im ω` at the returned threshold.
    pub residual_imag: T,
}

pub fn find_threshold<T: Real>(h: &Matrix<T>, pump: &PumpSpec, tol: &LaserTolerances) -> Result<ThresholdResult<T>, LaserError> {
    pump.validate(h.rows())?;
    let kappa = lit::<T>(pump.kappa0);
    let f = |g: T| max_imag(h, &pump.with_gamma(to_f64(g)));
    let gamma_max = lit::<T>(tol.gamma_max) * kappa;

    let mut lo = T::zero();
    let mut hi = kappa;
    let mut fhi = f(hi)?;
    while fhi < T::zero() {
        lo = hi;
        hi = hi * lit(2.0);
        if hi > gamma_max {
            return Err(LaserError::NoThreshold {
                gamma_max: to_f64(gamma_max),
                max_imag: to_f64(f(gamma_max)?),
            });
        }
        fhi = f(hi)?;
    }

    // Bisect well past the reporting tolerance so the power balance at the
    // returned point is limited by rounding only.
    let target = lit::<T>(tol.threshold) * kappa * lit(1e-3);
    let mut mid = hi;
    let mut fmid = fhi;
    for _ in 0..200 {
        let next = (lo + hi) / lit(2.0);
        if next <= lo || next >= hi {
            break;
        }
        mid = next;
        fmid = f(mid)?;
        if fmid.abs() <= target {
            break;
        }
        if fmid < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if fmid.abs() > lit::<T>(tol.threshold) * kappa {
        // bracket collapsed on a side; take the closer end
        let (flo, fhi) = (f(lo)?, f(hi)?);
        (mid, fmid) = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    }
    let threshold = mid;

    let ha = pumped_hamiltonian(h, &pump.with_gamma(to_f64(threshold)))?;
    let es = eig_full(&ha)?;
    let top = (0..es.len())
        .max_by(|&a, &b| es.eigenvalues[a].im.partial_cmp(&es.eigenvalues[b].im).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty");
    let mode = normalize_first_site(&es.right_vectors[top])?;

    let mut steps = 64;
    let traj = loop {
        match track_mode(h, pump, &uniform_grid(threshold, steps), tol) {
            Ok(t) => break t,
            Err(LaserError::Ambiguous { .. }) if steps < 8192 => steps *= 4,
            Err(e) => return Err(e),
        }
    };
    let end = traj.gammas.len() - 1;
    let crossing = (0..traj.paths.len())
        .max_by(|&a, &b| traj.paths[a][end].im.partial_cmp(&traj.paths[b][end].im).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty");
    Ok(ThresholdResult {
        threshold,
        threshold_kappa: threshold / kappa,
        kappa0: kappa,
        crossing_mode_index: crossing,
        crossing_eigenvalue: es.eigenvalues[top],
        crossing_is_zero_mode: traj.zero_modes.contains(&crossing),
        threshold_mode: mode,
        trajectory: traj.gammas.iter().zip(&traj.paths[crossing]).map(|(g, w)| (*g, *w)).collect(),
        bracket: (lo, hi),
        residual_imag: fmid,
    })
}

/// Scales `ψ` so that `ψ₁ = 1`.
pub fn normalize_first_site<T: Real>(psi: &[Complex<T>]) -> Result<Vec<Complex<T>>, LaserError> {
    let first = psi[0];
    if first.norm() <= T::epsilon() * norm2(psi) {
        return Err(LaserError::DarkFirstSite);
    }
    Ok(psi.iter().map(|z| z / first).collect())
}

/// Number of eigenvalues with `Im ω > 0` at `γ`.
pub fn lasing_count<T: Real>(h: &Matrix<T>, pump: &PumpSpec, gamma: T) -> Result<usize, LaserError> {
    let ha = pumped_hamiltonian(h, &pump.with_gamma(to_f64(gamma)))?;
    Ok(eigenvalues(&ha)?.iter().filter(|z| z.im > T::zero()).count())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerFlowReport<T = f64> {
    /// Junction centers `j + ½`.
    pub positions: Vec<T>,
    /// `G_{j,j+1} = P_{j,j+1} + P_{j+1,j}`.
    pub junction_gains: Vec<T>,
    /// Flow from `j+1` into `j`.
    pub p_forward: Vec<T>,
    /// Flow from `j` into `j+1`.
    pub p_backward: Vec<T>,
    /// `2(γ_j − κ₀)|ψ_j|²`.
    pub site_terms: Vec<T>,
    /// `|Σ site_terms + Σ junction_gains| / max |term|`.
    pub balance_residual: T,
    /// Largest per-site `|d|ψ_j|²/dt|` relative to the largest term.
    pub site_balance: T,
}

impl<T: Real> PowerFlowReport<T> {
    pub fn max_abs_gain(&self) -> T {
        self.junction_gains.iter().map(|g| g.abs()).fold(T::zero(), T::max)
    }

    pub fn all_losses(&self) -> bool {
        self.junction_gains.iter().all(|g| *g < T::zero())
    }
}

/// Intensity budget of a mode. Couplings are the off-diagonal entries of `h`,
/// the construction matrix before loss and pump; `pump.gamma` sets `γ_j`.
pub fn power_flows<T: Real>(mode: &[Complex<T>], h: &Matrix<T>, pump: &PumpSpec) -> Result<PowerFlowReport<T>, LaserError> {
    let n = h.rows();
    pump.validate(n)?;
    let psi = normalize_first_site(mode)?;
    let two = lit::<T>(2.0);
    let i = Complex::new(T::zero(), T::one());
    let kappa = lit::<T>(pump.kappa0);
    let gains = pump.gains(n);
    let site_terms: Vec<T> = (0..n)
        .map(|j| two * (lit::<T>(gains[j]) - kappa) * psi[j].norm_sqr())
        .collect();
    let mut p_forward = Vec::with_capacity(n.saturating_sub(1));
    let mut p_backward = Vec::with_capacity(n.saturating_sub(1));
    let mut junction_gains = Vec::with_capacity(n.saturating_sub(1));
    let mut positions = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n.saturating_sub(1) {
        let t_up = h[(j, j + 1)];
        let t_down = h[(j + 1, j)];
        let pf = two * (i * t_up.conj() * psi[j + 1].conj() * psi[j]).re;
        let pb = two * (i * t_down.conj() * psi[j].conj() * psi[j + 1]).re;
        p_forward.push(pf);
        p_backward.push(pb);
        junction_gains.push(pf + pb);
        positions.push(lit::<T>(j as f64 + 1.5));
    }
    let max_term = site_terms
        .iter()
        .chain(&p_forward)
        .chain(&p_backward)
        .map(|x| x.abs())
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let total = site_terms.iter().chain(&junction_gains).fold(T::zero(), |a, &b| a + b);
    let site_balance = (0..n)
        .map(|j| {
            let mut d = site_terms[j];
            if j + 1 < n {
                d += p_forward[j];
            }
            if j > 0 {
                d += p_backward[j - 1];
            }
            d.abs()
        })
        .fold(T::zero(), T::max)
        / max_term;
    Ok(PowerFlowReport {
        positions,
        junction_gains,
        p_forward,
        p_backward,
        site_terms,
        balance_residual: total.abs() / max_term,
        site_balance,
    })
}
