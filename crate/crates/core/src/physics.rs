//! Physical parameters, derived rates and the transient kernels.
//!
//! Units are dimensionless with the initial control Rabi frequency setting the
//! frequency scale. Lengths are whatever makes `alpha` a frequency per length.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Inputs of the three-level (plus storage level) medium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Decay rate of the optical coherence g-e.
    pub gamma: f64,
    /// Control Rabi frequency before the step.
    pub omega0: f64,
    /// Field-medium coupling constant (frequency per length).
    pub alpha: f64,
    /// Vacuum speed of light, finite.
    pub c: f64,
    /// Fractional increase of the control amplitude at the step.
    pub h: f64,
    /// rf Rabi frequency on the m-M transition.
    pub p_rf: f64,
    /// Unit duration of the rf pulse.
    pub tau_rf: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            gamma: 4.0,
            omega0: 1.0,
            alpha: 100.0,
            c: 1.0e4,
            h: SQRT_2 - 1.0,
            p_rf: 100.0,
            tau_rf: std::f64::consts::FRAC_PI_4 / 100.0,
        }
    }
}

impl PhysicalParams {
    /// Control amplitude after the step.
    pub fn omega_after(&self) -> f64 {
        (1.0 + self.h) * self.omega0
    }

    pub fn v1(&self) -> f64 {
        1.0 / (1.0 / self.c + self.alpha / (self.omega0 * self.omega0))
    }

    pub fn v2(&self) -> f64 {
        let w = self.omega_after();
        1.0 / (1.0 / self.c + self.alpha / (w * w))
    }
}

/// Thresholds used by [`validate_params_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationLimits {
    /// Largest admissible pulse bandwidth / transparency width.
    pub adiabaticity: f64,
    /// Smallest admissible p_rf / omega0.
    pub rf_min_ratio: f64,
    /// Largest admissible tau_rf * omega0.
    pub rf_max_duration: f64,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        Self { adiabaticity: 0.1, rf_min_ratio: 50.0, rf_max_duration: 0.02 }
    }
}

pub fn validate_params(p: &PhysicalParams, pulse_bandwidth: f64) -> Result<PhysicalParams> {
    validate_params_with(p, pulse_bandwidth, &ValidationLimits::default())
}

/// Checks the weak-probe linear-response regime: overdamped optical
/// coherence, pulse spectrum inside the transparency window and a short,
/// strong rf pulse. Returns the parameters unchanged when they pass.
pub fn validate_params_with(
    p: &PhysicalParams,
    pulse_bandwidth: f64,
    limits: &ValidationLimits,
) -> Result<PhysicalParams> {
    let fields = [
        ("gamma", p.gamma),
        ("omega", p.omega0),
        ("alpha", p.alpha),
        ("c", p.c),
        ("p_rf", p.p_rf),
        ("tau_rf", p.tau_rf),
    ];
    for (name, v) in fields {
        if !v.is_finite() || v <= 0.0 {
            // alpha = 0 is the empty medium and stays allowed
            if !(name == "alpha" && v == 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and positive, got {v}")));
            }
        }
    }
    if !p.h.is_finite() || p.h < 0.0 {
        return Err(Error::InvalidParams(format!("h must be finite and non-negative, got {}", p.h)));
    }
    if !pulse_bandwidth.is_finite() || pulse_bandwidth < 0.0 {
        return Err(Error::InvalidParams(format!(
            "pulse bandwidth must be finite and non-negative, got {pulse_bandwidth}"
        )));
    }

    let bound = 2.0 * SQRT_2 * p.omega0;
    if p.gamma <= bound {
        return Err(Error::EitConditionViolated { gamma: p.gamma, bound });
    }
    // a larger step than sqrt(2) can still push the post-step rates complex
    damping_rates(p.gamma, p.omega_after())?;

    let ratio = pulse_bandwidth / transparency_width(p.omega0, p.gamma);
    if ratio > limits.adiabaticity {
        return Err(Error::AdiabaticityViolated { ratio, limit: limits.adiabaticity });
    }
    if p.p_rf < limits.rf_min_ratio * p.omega0 {
        return Err(Error::RfRegimeViolated(format!(
            "p_rf = {} must be at least {} * omega",
            p.p_rf, limits.rf_min_ratio
        )));
    }
    if p.tau_rf * p.omega0 > limits.rf_max_duration {
        return Err(Error::RfRegimeViolated(format!(
            "tau_rf * omega = {} must not exceed {}",
            p.tau_rf * p.omega0,
            limits.rf_max_duration
        )));
    }
    Ok(*p)
}

/// Width 2Ω²/γ of the transparency window.
pub fn transparency_width(omega: f64, gamma: f64) -> f64 {
    2.0 * omega * omega / gamma
}

/// Slow-light group velocity (1/c + α/Ω²)⁻¹.
pub fn group_velocity(omega: f64, alpha: f64, c: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::ZeroControlField);
    }
    Ok(1.0 / (1.0 / c + alpha / (omega * omega)))
}

/// Roots γ± = γ/2 ± √(γ²/4 − Ω_eff²) of the transient characteristic
/// polynomial at control amplitude `omega_eff`.
pub fn damping_rates(gamma: f64, omega_eff: f64) -> Result<(f64, f64)> {
    let half = 0.5 * gamma;
    let discriminant = half * half - omega_eff * omega_eff;
    if discriminant < 0.0 {
        return Err(Error::ComplexRates { discriminant });
    }
    let root = discriminant.sqrt();
    let plus = half + root;
    // product form keeps the small root accurate when Ω_eff ≪ γ
    let minus = if plus > 0.0 { omega_eff * omega_eff / plus } else { 0.0 };
    Ok((plus, minus))
}

/// Largest eigenvalue magnitude of the optical 2×2 system at amplitude `omega`.
pub fn fastest_rate(gamma: f64, omega: f64) -> f64 {
    match damping_rates(gamma, omega) {
        Ok((plus, _)) => plus,
        Err(_) => omega.abs(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedRates {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// Transparency width at the initial control amplitude.
    pub delta_t: f64,
    pub v1: f64,
    pub v2: f64,
    /// Settling time of the slowest transient, 5/γ₋.
    pub tau_gamma: f64,
}

impl DerivedRates {
    /// Rates are evaluated at the post-step amplitude (1+h)Ω, the amplitude
    /// under which every transient of the protocol relaxes.
    pub fn from_params(p: &PhysicalParams) -> Result<Self> {
        let (gamma_plus, gamma_minus) = damping_rates(p.gamma, p.omega_after())?;
        Ok(Self {
            gamma_plus,
            gamma_minus,
            delta_t: transparency_width(p.omega0, p.gamma),
            v1: group_velocity(p.omega0, p.alpha, p.c)?,
            v2: group_velocity(p.omega_after(), p.alpha, p.c)?,
            tau_gamma: 5.0 / gamma_minus,
        })
    }

    pub fn kernel(&self, h: f64) -> TransientKernel {
        TransientKernel::new(self.gamma_plus, self.gamma_minus, h)
    }
}

/// The pair of relaxation kernels K_x, K_y that follow a sudden change of
/// the atomic state or of the control amplitude.
///
/// Both are written as `e^{-γ₋τ}` times a factor built from
/// `(1 - e^{-(γ₊-γ₋)τ}) / (γ₊-γ₋)`, which is evaluated with `expm1` so the
/// degenerate limit γ₊ = γ₋ comes out analytically instead of as 0/0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransientKernel {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub h: f64,
}

impl TransientKernel {
    pub fn new(gamma_plus: f64, gamma_minus: f64, h: f64) -> Self {
        Self { gamma_plus, gamma_minus, h }
    }

    fn spread(&self, tau: f64) -> f64 {
        let split = self.gamma_plus - self.gamma_minus;
        if split == 0.0 {
            tau
        } else {
            -(-split * tau).exp_m1() / split
        }
    }

    /// h·(γ₊e^{−γ₋τ} − γ₋e^{−γ₊τ})/(γ₊−γ₋)·Θ(τ)
    pub fn kx(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        self.h * (-self.gamma_minus * tau).exp() * (1.0 + self.gamma_minus * self.spread(tau))
    }

    /// h·(e^{−γ₋τ} − e^{−γ₊τ})/(γ₊−γ₋)·Θ(τ)
    pub fn ky(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        self.h * (-self.gamma_minus * tau).exp() * self.spread(tau)
    }
}

pub fn kernel_kx(tau: f64, rates: &DerivedRates, h: f64) -> f64 {
    rates.kernel(h).kx(tau)
}

pub fn kernel_ky(tau: f64, rates: &DerivedRates, h: f64) -> f64 {
    rates.kernel(h).ky(tau)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlStage {
    BeforeStep,
    AfterStep,
}

/// Dark/bright mixing angle: tanθ = Ψ/Ω before the step, Ψ/(√2Ω) after it.
pub fn mixing_angle(psi: f64, omega: f64, stage: ControlStage) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::ZeroControlField);
    }
    let effective = match stage {
        ControlStage::BeforeStep => omega,
        ControlStage::AfterStep => SQRT_2 * omega,
    };
    Ok((psi / effective).atan())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use proptest::prelude::*;

    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn validate_accepts_baseline_window() {
        let p = PhysicalParams::default();
        // Δ_Ψ = 0.025 against Δ_T = 0.5
        assert_eq!(validate_params(&p, 0.025).unwrap(), p);
    }

    #[test]
    fn validate_rejects_gamma_at_or_below_bound() {
        let p = PhysicalParams { gamma: 2.0, ..Default::default() };
        let err = validate_params(&p, 0.01).unwrap_err();
        assert!(matches!(err, Error::EitConditionViolated { .. }));
        assert!(err.to_string().contains("γ > 2√2·Ω"));
        let p = PhysicalParams { gamma: 2.0 * SQRT_2, ..Default::default() };
        assert!(matches!(validate_params(&p, 0.01), Err(Error::EitConditionViolated { .. })));
    }

    #[test]
    fn validate_rejects_wide_pulse() {
        let p = PhysicalParams::default();
        assert!(matches!(validate_params(&p, 0.3), Err(Error::AdiabaticityViolated { .. })));
    }

    #[test]
    fn validate_rejects_weak_or_long_rf() {
        let p = PhysicalParams { p_rf: 10.0, ..Default::default() };
        assert!(matches!(validate_params(&p, 0.01), Err(Error::RfRegimeViolated(_))));
        let p = PhysicalParams { tau_rf: 0.5, ..Default::default() };
        assert!(matches!(validate_params(&p, 0.01), Err(Error::RfRegimeViolated(_))));
    }

    #[test]
    fn validate_rejects_step_that_makes_rates_complex() {
        // γ = 4 > 2√2 but (1+h)Ω = 3 > γ/2
        let p = PhysicalParams { h: 2.0, ..Default::default() };
        assert!(matches!(validate_params(&p, 0.01), Err(Error::ComplexRates { .. })));
    }

    #[test]
    fn transparency_width_values() {
        assert_eq!(transparency_width(1.0, 4.0), 0.5);
        assert_eq!(transparency_width(0.0, 4.0), 0.0);
        assert!(rel(transparency_width(SQRT_2, 4.0), 1.0) < 1e-15);
    }

    #[test]
    fn group_velocity_values() {
        let v1 = group_velocity(1.0, 100.0, 1.0e4).unwrap();
        assert!(rel(v1, 1.0 / 100.0001) < 1e-15);
        assert!((v1 - 0.009_999_990).abs() < 1e-12);
        assert_eq!(group_velocity(1.0, 0.0, 1.0e4).unwrap(), 1.0e4);
        let v2 = group_velocity(SQRT_2, 100.0, 1.0e4).unwrap();
        assert!((v2 - 0.019_999_96).abs() < 1e-10);
        assert!((v2 / v1 - 1.999_998).abs() < 1e-6);
        assert!(matches!(group_velocity(0.0, 1.0, 1.0), Err(Error::ZeroControlField)));
    }

    #[test]
    fn damping_rates_baseline() {
        let (p, m) = damping_rates(4.0, SQRT_2).unwrap();
        assert!((p - (2.0 + SQRT_2)).abs() < 1e-14);
        assert!((m - (2.0 - SQRT_2)).abs() < 1e-14);
        assert!(matches!(damping_rates(2.0, SQRT_2), Err(Error::ComplexRates { .. })));
    }

    #[test]
    fn kernel_values() {
        let rates = DerivedRates::from_params(&PhysicalParams::default()).unwrap();
        let h = SQRT_2 - 1.0;
        assert_eq!(kernel_kx(0.0, &rates, h), h);
        assert_eq!(kernel_kx(-1.0, &rates, h), 0.0);
        assert_eq!(kernel_ky(0.0, &rates, h), 0.0);
        assert_eq!(kernel_ky(-1.0, &rates, h), 0.0);
        // direct evaluation with γ± = 2 ± √2 at τ = 1
        let (gp, gm) = (2.0 + SQRT_2, 2.0 - SQRT_2);
        let kx = h * (gp * (-gm).exp() - gm * (-gp).exp()) / (gp - gm);
        let ky = h * ((-gm).exp() - (-gp).exp()) / (gp - gm);
        assert!((kernel_kx(1.0, &rates, h) - kx).abs() < 1e-14);
        assert!((kernel_ky(1.0, &rates, h) - ky).abs() < 1e-14);
        assert!((kx - 0.2756).abs() < 1e-3);
        assert!((ky - 0.0767).abs() < 1e-3);
    }

    #[test]
    fn ky_slope_at_origin_is_h() {
        let k = TransientKernel::new(2.0 + SQRT_2, 2.0 - SQRT_2, 0.7);
        let eps = 1e-7;
        let slope = (k.ky(eps) - k.ky(0.0)) / eps;
        assert!((slope - 0.7).abs() < 1e-6);
    }

    #[test]
    fn degenerate_kernel_is_the_analytic_limit() {
        let gamma: f64 = 3.0;
        let k = TransientKernel::new(1.5, 1.5, 0.4);
        for &t in &[0.0f64, 0.3, 1.0, 7.0] {
            let kx = 0.4 * (1.0 + gamma * t / 2.0) * (-gamma * t / 2.0).exp();
            let ky = 0.4 * t * (-gamma * t / 2.0).exp();
            assert!((k.kx(t) - kx).abs() < 1e-15);
            assert!((k.ky(t) - ky).abs() < 1e-15);
        }
        // nearly degenerate rates approach the same limit smoothly
        let near = TransientKernel::new(1.5 + 1e-9, 1.5 - 1e-9, 0.4);
        assert!((near.kx(2.0) - k.kx(2.0)).abs() < 1e-12);
        assert!((near.ky(2.0) - k.ky(2.0)).abs() < 1e-12);
    }

    #[test]
    fn mixing_angle_values() {
        assert_eq!(mixing_angle(0.0, 1.0, ControlStage::BeforeStep).unwrap(), 0.0);
        assert!((mixing_angle(1.0, 1.0, ControlStage::BeforeStep).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!((mixing_angle(SQRT_2, 1.0, ControlStage::AfterStep).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(matches!(mixing_angle(0.1, 0.0, ControlStage::AfterStep), Err(Error::ZeroControlField)));
    }

    proptest! {
        #[test]
        fn vieta_identities(omega in 0.05f64..3.0, excess in 1.0001f64..20.0) {
            let gamma = 2.0 * SQRT_2 * omega * excess;
            let (p, m) = damping_rates(gamma, SQRT_2 * omega).unwrap();
            prop_assert!(rel(p + m, gamma) < 1e-12);
            prop_assert!(rel(p * m, 2.0 * omega * omega) < 1e-12);
            prop_assert!(p >= m && m > 0.0);
        }

        #[test]
        fn kernels_decay_and_stay_bounded(
            omega in 0.2f64..2.0,
            excess in 1.001f64..10.0,
            h in 0.01f64..1.0,
            t in 0.0f64..60.0,
        ) {
            let gamma = 2.0 * SQRT_2 * omega * excess;
            let (p, m) = damping_rates(gamma, SQRT_2 * omega).unwrap();
            let k = TransientKernel::new(p, m, h);
            prop_assert!(k.kx(t).abs() <= h * (1.0 + 1e-12));
            prop_assert!(k.kx(t + 0.01) <= k.kx(t) + 1e-15);
            prop_assert!(k.ky(t) >= 0.0);
            let far = t + 2000.0 / m;
            prop_assert!(k.kx(far) < 1e-12 && k.ky(far) < 1e-12);
        }

        #[test]
        fn velocity_ratio_in_range(alpha in 1.0f64..500.0, omega in 0.2f64..3.0, c in 1.0f64..1e7) {
            let r = group_velocity(SQRT_2 * omega, alpha, c).unwrap()
                / group_velocity(omega, alpha, c).unwrap();
            prop_assert!(r > 1.0 && r <= 2.0 + 1e-12);
            let r_far = group_velocity(SQRT_2 * omega, alpha, c * 10.0).unwrap()
                / group_velocity(omega, alpha, c * 10.0).unwrap();
            prop_assert!(r_far >= r - 1e-12);
        }

        #[test]
        fn transparency_width_is_quadratic(omega in 0.01f64..10.0, scale in 0.1f64..10.0) {
            let a = transparency_width(omega, 4.0);
            let b = transparency_width(scale * omega, 4.0);
            prop_assert!(rel(b, scale * scale * a) < 1e-14);
        }
    }
}
