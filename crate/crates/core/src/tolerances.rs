//! Numerical tolerances, grouped per module and overridable by `section.key`.
//!
//! Relative tolerances are multiplied by the Frobenius norm of the matrix
//! under study unless a field's doc says otherwise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToleranceError {
    #[error("unknown tolerance key `{0}`")]
    UnknownKey(String),
    #[error("tolerance `{key}` must be finite and non-negative, got {value}")]
    InvalidValue { key: String, value: f64 },
    #[error("malformed tolerance override `{0}`, expected key=value")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigTolerances {
    /// Eigenvalues closer than this (relative) form one cluster.
    pub cluster: f64,
    /// Left/right eigenvalue match for isolated eigenvalues (relative).
    pub pairing: f64,
    /// `|ψ̃ᵀψ|` of unit vectors below this flags an exceptional point.
    pub self_orthogonal: f64,
    /// Singular-value threshold for cluster eigenspaces (relative).
    pub kernel: f64,
    /// `‖Aψ‖ ≤ kernel_metric·‖A‖·‖ψ‖` puts ψ in the kernel of the metric.
    pub kernel_metric: f64,
    /// Cap on QR sweeps, per eigenvalue.
    pub max_sweeps_per_eigenvalue: usize,
}

impl Default for EigTolerances {
    fn default() -> Self {
        Self {
            cluster: 1e-7,
            pairing: 1e-8,
            self_orthogonal: 1e-6,
            kernel: 1e-8,
            kernel_metric: 1e-10,
            max_sweeps_per_eigenvalue: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectraTolerances {
    /// Spectrum is real when `max |Im ω| ≤ real·‖H‖`.
    pub real: f64,
    /// Hermiticity check, relative to the largest entry.
    pub hermitian: f64,
    /// PSD check: eigenvalues must exceed `−psd·‖A‖`.
    pub psd: f64,
    /// Smallest singular value of `H₀` above `invertible·‖H₀‖`.
    pub invertible: f64,
    /// Cluster radius around the EP target (relative).
    pub ep_cluster: f64,
    /// Singular-value threshold for nullities (relative, per power).
    pub ep_kernel: f64,
    /// Agreement between `ψ̃ᵀψ` and `‖Bψ‖²`.
    pub audit: f64,
    /// Spectral agreement between similar matrices (relative).
    pub spectrum_match: f64,
    /// Eigenvector proportionality residual in the B-map check.
    pub vector_match: f64,
}

impl Default for SpectraTolerances {
    fn default() -> Self {
        Self {
            real: 1e-8,
            hermitian: 1e-12,
            psd: 1e-10,
            invertible: 1e-10,
            ep_cluster: 1e-7,
            ep_kernel: 1e-8,
            audit: 1e-8,
            spectrum_match: 1e-8,
            vector_match: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkinTolerances {
    /// A left skin mode has its center of mass below `com_fraction·n`.
    pub com_fraction: f64,
    /// Slack on the half-gauge decay rate `ln(s)/2`.
    pub rate_slack: f64,
    /// Minimum coefficient of determination of the log-linear envelope fit.
    pub min_envelope_r2: f64,
    /// Relative amplitude below which a site counts as dark.
    pub parity: f64,
    /// Relative amplitude below which a site is left out of the fit.
    pub support: f64,
    /// Profile proportionality residual.
    pub profile_match: f64,
}

impl Default for SkinTolerances {
    fn default() -> Self {
        Self {
            com_fraction: 0.25,
            rate_slack: 1e-6,
            min_envelope_r2: 0.8,
            parity: 1e-8,
            support: 1e-12,
            profile_match: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserTolerances {
    /// Bisection stops once `|Im ω| ≤ threshold·κ₀`.
    pub threshold: f64,
    /// Search gives up beyond `gamma_max·κ₀`.
    pub gamma_max: f64,
    /// Zero mode: `|Re ω| ≤ zero_mode·‖H‖` along the trajectory.
    pub zero_mode: f64,
    /// Two overlaps within this fraction make tracking ambiguous.
    pub overlap_ambiguity: f64,
    /// Power balance residual relative to the largest term.
    pub balance: f64,
}

impl Default for LaserTolerances {
    fn default() -> Self {
        Self {
            threshold: 1e-9,
            gamma_max: 1e4,
            zero_mode: 1e-8,
            overlap_ambiguity: 0.01,
            balance: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbTolerances {
    /// Denominators `|ω_μ − ω_ν|` below `degenerate·‖H‖` are refused.
    pub degenerate: f64,
    /// Odd-site vanishing of the zero-mode correction (relative).
    pub odd_site: f64,
    /// Partner-matching residual for NHPH pairs.
    pub nhph: f64,
}

impl Default for PerturbTolerances {
    fn default() -> Self {
        Self {
            degenerate: 1e-6,
            odd_site: 1e-10,
            nhph: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechTolerances {
    /// Allowed `|Im λ|` or positive `Re λ` relative to `‖M‖`.
    pub physical: f64,
    /// Largest admissible `dt·ω_max`.
    pub stability: f64,
}

impl Default for MechTolerances {
    fn default() -> Self {
        Self {
            physical: 1e-8,
            stability: 0.1,
        }
    }
}

/// All tolerances of the library.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eig: EigTolerances,
    pub spectra: SpectraTolerances,
    pub skin: SkinTolerances,
    pub laser: LaserTolerances,
    pub perturb: PerturbTolerances,
    pub mech: MechTolerances,
}

impl Tolerances {
    /// Overrides one value by its dotted key, e.g. `spectra.real`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ToleranceError> {
        if !value.is_finite() || value < 0.0 {
            return Err(ToleranceError::InvalidValue {
                key: key.to_string(),
                value,
            });
        }
        let slot: &mut f64 = match key {
            "eig.cluster" => &mut self.eig.cluster,
            "eig.pairing" => &mut self.eig.pairing,
            "eig.self_orthogonal" => &mut self.eig.self_orthogonal,
            "eig.kernel" => &mut self.eig.kernel,
            "eig.kernel_metric" => &mut self.eig.kernel_metric,
            "eig.max_sweeps_per_eigenvalue" => {
                self.eig.max_sweeps_per_eigenvalue = value as usize;
                return Ok(());
            }
            "spectra.real" => &mut self.spectra.real,
            "spectra.hermitian" => &mut self.spectra.hermitian,
            "spectra.psd" => &mut self.spectra.psd,
            "spectra.invertible" => &mut self.spectra.invertible,
            "spectra.ep_cluster" => &mut self.spectra.ep_cluster,
            "spectra.ep_kernel" => &mut self.spectra.ep_kernel,
            "spectra.audit" => &mut self.spectra.audit,
            "spectra.spectrum_match" => &mut self.spectra.spectrum_match,
            "spectra.vector_match" => &mut self.spectra.vector_match,
            "skin.com_fraction" => &mut self.skin.com_fraction,
            "skin.rate_slack" => &mut self.skin.rate_slack,
            "skin.min_envelope_r2" => &mut self.skin.min_envelope_r2,
            "skin.parity" => &mut self.skin.parity,
            "skin.support" => &mut self.skin.support,
            "skin.profile_match" => &mut self.skin.profile_match,
            "laser.threshold" => &mut self.laser.threshold,
            "laser.gamma_max" => &mut self.laser.gamma_max,
            "laser.zero_mode" => &mut self.laser.zero_mode,
            "laser.overlap_ambiguity" => &mut self.laser.overlap_ambiguity,
            "laser.balance" => &mut self.laser.balance,
            "perturb.degenerate" => &mut self.perturb.degenerate,
            "perturb.odd_site" => &mut self.perturb.odd_site,
            "perturb.nhph" => &mut self.perturb.nhph,
            "mech.physical" => &mut self.mech.physical,
            "mech.stability" => &mut self.mech.stability,
            _ => return Err(ToleranceError::UnknownKey(key.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Parses and applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ToleranceError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| ToleranceError::Malformed(spec.to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| ToleranceError::Malformed(spec.to_string()))?;
        self.set(key.trim(), value)
    }
}
