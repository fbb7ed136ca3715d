//! Convergence metrics and the Lyapunov-envelope certificate.
//!
//! `V = ½(‖z̄₁‖² + ‖z̄₂‖²)` where `z̄₁`, `z̄₂` are the consensus and
//! disagreement parts of `Z − 1z*ᵀ`. Along compliant runs `V̇ ≤ −νV`, so
//! every recorded snapshot must satisfy `V(t) ≤ V(0)e^{−νt}`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::digraph::OrthogonalSplit;
use crate::dynamics::{lyapunov_decay_rate, DynamicsError};
use crate::formats::format_float;
use crate::game::GameConstants;
use crate::integrator::{consensus_error, Trajectory};

/// Values at or below this are excluded from log-linear fits, and squared
/// it is the absolute slack of the envelope and monotonicity checks.
pub const NUMERICAL_FLOOR: f64 = 1e-14;

/// Relative slack of the envelope check.
pub const ENVELOPE_SLACK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("not enough data: {got} usable points, need {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("Lyapunov envelope violated at t = {time}: V = {value:e} > bound {bound:e}")]
    CertificateViolated { time: f64, value: f64, bound: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// `max_i ‖zⁱ − z*‖₂` of one estimate matrix.
pub fn ne_error_of(z: &DMatrix<f64>, z_star: &DVector<f64>) -> f64 {
    let target = z_star.transpose();
    z.row_iter().map(|row| (row - &target).norm()).fold(0.0, f64::max)
}

pub fn ne_error(traj: &Trajectory, z_star: &DVector<f64>) -> Vec<f64> {
    traj.states.iter().map(|s| ne_error_of(&s.z, z_star)).collect()
}

pub fn consensus_errors(traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|s| consensus_error(&s.z)).collect()
}

/// `‖diag(Ξ) − ξ‖∞`; `None` when there is no estimator.
pub fn estimator_error_of(xi_est: Option<&DMatrix<f64>>, xi: &DVector<f64>) -> Option<f64> {
    xi_est.map(|m| (0..xi.len()).map(|i| (m[(i, i)] - xi[i]).abs()).fold(0.0, f64::max))
}

/// `V` from the orthogonal split of `Z − 1z*ᵀ`.
pub fn lyapunov_value(z: &DMatrix<f64>, z_star: &DVector<f64>, split: &OrthogonalSplit) -> f64 {
    let n = z_star.len();
    let ones = DVector::from_element(n, 1.0);
    let dev = z - ones * z_star.transpose();
    // (M₁ᵀ ⊗ I) acting on the row-stacked deviation is M₁ᵀ·dev.
    let consensus = split.m1.transpose() * &dev;
    let disagreement = split.m2.transpose() * &dev;
    0.5 * (consensus.norm_squared() + disagreement.norm_squared())
}

pub fn lyapunov_values(traj: &Trajectory, z_star: &DVector<f64>, split: &OrthogonalSplit) -> Vec<f64> {
    traj.states.iter().map(|s| lyapunov_value(&s.z, z_star, split)).collect()
}

/// Least-squares fit of `log v = c − rate·t` over the last `tail_fraction`
/// of the samples. Returns `(rate, R²)`.
pub fn fit_exponential_rate(times: &[f64], values: &[f64], tail_fraction: f64) -> Result<(f64, f64), AnalysisError> {
    const MIN_POINTS: usize = 5;
    let len = times.len().min(values.len());
    let fraction = tail_fraction.clamp(f64::MIN_POSITIVE, 1.0);
    let start = len - ((len as f64 * fraction).ceil() as usize).min(len);
    let points: Vec<(f64, f64)> = times[start..len]
        .iter()
        .zip(&values[start..len])
        .filter(|(_, v)| **v > NUMERICAL_FLOOR && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if points.len() < MIN_POINTS {
        return Err(AnalysisError::InsufficientData { got: points.len(), need: MIN_POINTS });
    }
    let m = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientData { got: 1, need: MIN_POINTS });
    }
    let slope = sxy / sxx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - (mean_y + slope * (p.0 - mean_t))).powi(2)).sum();
    // A flat series is fitted exactly by a zero slope.
    let r2 = if syy <= f64::EPSILON * m { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok((-slope, r2))
}

/// Everything the certificate check measures about one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub final_ne_error: f64,
    pub final_consensus_error: f64,
    /// Decay exponent of the NE error over the tail; `NaN` if not fittable.
    pub fitted_rate: f64,
    pub fit_quality: f64,
    /// `ν/2`: the rate the envelope certifies for `‖Z − 1z*ᵀ‖`; `NaN`
    /// when the gain does not clear the threshold.
    pub certified_rate: f64,
    /// Whether a decay rate could be certified at all.
    pub certificate_applicable: bool,
    pub lyapunov_monotone: bool,
    /// Whether `V(t) ≤ V(0)e^{−νt}(1 + slack)` held at every snapshot.
    pub envelope_holds: bool,
    /// First snapshot time where the envelope failed.
    pub first_violation: Option<f64>,
    pub estimator_error_final: Option<f64>,
}

impl ConvergenceReport {
    /// Envelope holds, and the tail decays log-linearly (`R² ≥ 0.99`).
    pub fn certificate_passed(&self) -> bool {
        self.certificate_applicable && self.envelope_holds && self.fitted_rate > 0.0 && self.fit_quality >= 0.99
    }

    /// `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_else(|| "none".into());
        format!(
            "final_ne_error = {}\nfinal_consensus_error = {}\nfitted_rate = {}\nfit_quality = {}\n\
             certified_rate = {}\ncertificate_applicable = {}\nlyapunov_monotone = {}\nenvelope_holds = {}\nfirst_violation = {}\n\
             estimator_error_final = {}\ncertificate = {}\n",
            format_float(self.final_ne_error),
            format_float(self.final_consensus_error),
            format_float(self.fitted_rate),
            format_float(self.fit_quality),
            format_float(self.certified_rate),
            self.certificate_applicable,
            self.lyapunov_monotone,
            self.envelope_holds,
            opt(self.first_violation),
            opt(self.estimator_error_final),
            match (self.certificate_applicable, self.certificate_passed()) {
                (false, _) => "n/a",
                (true, true) => "pass",
                (true, false) => "fail",
            },
        )
    }
}

/// What the certificate needs besides the trajectory.
#[derive(Debug, Clone)]
pub struct CertificateInputs<'a> {
    pub constants: &'a GameConstants,
    pub alpha: f64,
    /// `λ₂` for balanced runs, the scaled `λ'₂` otherwise.
    pub lambda2: f64,
    pub z_star: &'a DVector<f64>,
    pub split: &'a OrthogonalSplit,
    /// True eigenvector, to score an estimator when present.
    pub xi: Option<&'a DVector<f64>>,
    pub tail_fraction: f64,
}

/// Builds the report without failing on a violated envelope. When the gain
/// is at or below the threshold no rate is certified and the envelope
/// fields are left unset.
pub fn convergence_report(
    traj: &Trajectory,
    inputs: &CertificateInputs<'_>,
) -> Result<ConvergenceReport, AnalysisError> {
    if traj.len() < 2 {
        return Err(AnalysisError::InsufficientData { got: traj.len(), need: 2 });
    }
    let n = inputs.z_star.len();
    if traj.last().n() != n {
        return Err(AnalysisError::Dimension { expected: n, got: traj.last().n() });
    }
    let nu = lyapunov_decay_rate(inputs.constants, inputs.alpha, inputs.lambda2, n).ok();
    let ne = ne_error(traj, inputs.z_star);
    let v = lyapunov_values(traj, inputs.z_star, inputs.split);
    let floor = NUMERICAL_FLOOR * NUMERICAL_FLOOR;

    let lyapunov_monotone = v.windows(2).all(|w| w[1] <= w[0] + floor);
    let first_violation = nu.and_then(|nu| {
        traj.times.iter().zip(&v).find(|(t, value)| **value > envelope_bound(v[0], nu, **t) + floor).map(|(t, _)| *t)
    });
    let (fitted_rate, fit_quality) =
        fit_exponential_rate(&traj.times, &ne, inputs.tail_fraction).unwrap_or((f64::NAN, 0.0));
    let last = traj.last();
    Ok(ConvergenceReport {
        final_ne_error: *ne.last().unwrap(),
        final_consensus_error: consensus_error(&last.z),
        fitted_rate,
        fit_quality,
        certified_rate: nu.map_or(f64::NAN, |nu| nu / 2.0),
        certificate_applicable: nu.is_some(),
        lyapunov_monotone,
        envelope_holds: nu.is_some() && first_violation.is_none(),
        first_violation,
        estimator_error_final: inputs.xi.and_then(|xi| estimator_error_of(last.xi.as_ref(), xi)),
    })
}

fn envelope_bound(v0: f64, nu: f64, t: f64) -> f64 {
    v0 * (-nu * t).exp() * (1.0 + ENVELOPE_SLACK)
}

/// Like [`convergence_report`] but fails when no rate can be certified or
/// with the first time the envelope is exceeded.
pub fn check_certificate(
    traj: &Trajectory,
    inputs: &CertificateInputs<'_>,
) -> Result<ConvergenceReport, AnalysisError> {
    if traj.len() < 2 {
        return Err(AnalysisError::InsufficientData { got: traj.len(), need: 2 });
    }
    lyapunov_decay_rate(inputs.constants, inputs.alpha, inputs.lambda2, inputs.z_star.len())?;
    let report = convergence_report(traj, inputs)?;
    if let Some(time) = report.first_violation {
        let k = traj.times.iter().position(|t| *t == time).unwrap();
        let v = lyapunov_values(traj, inputs.z_star, inputs.split);
        let nu = 2.0 * report.certified_rate;
        return Err(AnalysisError::CertificateViolated { time, value: v[k], bound: envelope_bound(v[0], nu, time) });
    }
    Ok(report)
}
