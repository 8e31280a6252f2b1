//! Input signal envelopes Ψ⁰(t) at the sample entrance.

use crate::error::{Error, Result};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2√(2 ln 2)
const SECH_HALF: f64 = 1.316_957_896_924_816_6; // acosh(2)

#[derive(Clone, Debug, PartialEq)]
pub enum PulseShape {
    Gaussian,
    Sech,
    /// Peak-normalised samples on `t0 + k·dt`, linearly interpolated and zero
    /// outside the sampled range.
    Samples {
        t0: f64,
        dt: f64,
        values: Vec<f64>,
    },
}

impl PulseShape {
    pub fn name(&self) -> &'static str {
        match self {
            PulseShape::Gaussian => "gaussian",
            PulseShape::Sech => "sech",
            PulseShape::Samples { .. } => "samples",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseEnvelope {
    pub shape: PulseShape,
    /// Peak Rabi amplitude.
    pub psi_max: f64,
    pub t_center: f64,
    /// Full width at half maximum of |Ψ⁰|.
    pub t_p1: f64,
}

impl PulseEnvelope {
    pub fn gaussian(psi_max: f64, t_center: f64, t_p1: f64) -> Self {
        Self { shape: PulseShape::Gaussian, psi_max, t_center, t_p1 }
    }

    pub fn sech(psi_max: f64, t_center: f64, t_p1: f64) -> Self {
        Self { shape: PulseShape::Sech, psi_max, t_center, t_p1 }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.psi_max.is_finite() && self.psi_max > 0.0) {
            return Err(Error::InvalidParams(format!("input peak must be positive, got {}", self.psi_max)));
        }
        if !(self.t_p1.is_finite() && self.t_p1 > 0.0) {
            return Err(Error::InvalidParams(format!("input fwhm must be positive, got {}", self.t_p1)));
        }
        if !self.t_center.is_finite() {
            return Err(Error::InvalidParams("input center must be finite".into()));
        }
        if let PulseShape::Samples { dt, values, t0 } = &self.shape {
            if values.len() < 2 || !(*dt > 0.0) || !t0.is_finite() {
                return Err(Error::InvalidParams("sampled input needs at least two samples and dt > 0".into()));
            }
        }
        Ok(())
    }

    /// Spectral width Δ_Ψ = 1/t_p1.
    pub fn bandwidth(&self) -> f64 {
        1.0 / self.t_p1
    }

    pub fn value(&self, t: f64) -> f64 {
        let x = t - self.t_center;
        self.psi_max
            * match &self.shape {
                PulseShape::Gaussian => {
                    let sigma = self.t_p1 / FWHM_PER_SIGMA;
                    (-0.5 * (x / sigma).powi(2)).exp()
                }
                PulseShape::Sech => {
                    let w = self.t_p1 / (2.0 * SECH_HALF);
                    1.0 / (x / w).cosh()
                }
                PulseShape::Samples { t0, dt, values } => interpolate(*t0, *dt, values, t),
            }
    }

    /// dΨ⁰/dt.
    pub fn derivative(&self, t: f64) -> f64 {
        let x = t - self.t_center;
        match &self.shape {
            PulseShape::Gaussian => {
                let sigma = self.t_p1 / FWHM_PER_SIGMA;
                -x / (sigma * sigma) * self.value(t)
            }
            PulseShape::Sech => {
                let w = self.t_p1 / (2.0 * SECH_HALF);
                -self.value(t) * (x / w).tanh() / w
            }
            PulseShape::Samples { dt, .. } => {
                let e = 0.5 * dt;
                (self.value(t + e) - self.value(t - e)) / (2.0 * e)
            }
        }
    }

    /// Interval outside which |Ψ⁰| stays below `rel_tol`·peak.
    pub fn support(&self, rel_tol: f64) -> (f64, f64) {
        match &self.shape {
            PulseShape::Gaussian => {
                let sigma = self.t_p1 / FWHM_PER_SIGMA;
                let half = sigma * (-2.0 * rel_tol.ln()).max(0.0).sqrt();
                (self.t_center - half, self.t_center + half)
            }
            PulseShape::Sech => {
                let w = self.t_p1 / (2.0 * SECH_HALF);
                let half = w * (1.0 / rel_tol).acosh();
                (self.t_center - half, self.t_center + half)
            }
            PulseShape::Samples { t0, dt, values } => {
                let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let above = |v: &f64| v.abs() >= rel_tol * peak;
                let first = values.iter().position(above).unwrap_or(0);
                let last = values.iter().rposition(above).unwrap_or(values.len() - 1);
                (t0 + (first as f64 - 1.0) * dt, t0 + (last as f64 + 1.0) * dt)
            }
        }
    }
}

fn interpolate(t0: f64, dt: f64, values: &[f64], t: f64) -> f64 {
    let u = (t - t0) / dt;
    if !(u >= 0.0) || u > (values.len() - 1) as f64 {
        return 0.0;
    }
    let k = (u.floor() as usize).min(values.len() - 2);
    let f = u - k as f64;
    values[k] * (1.0 - f) + values[k + 1] * f
}
