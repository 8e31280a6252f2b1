//! Single-atom amplitude dynamics in the weak-probe limit (C_g ≡ 1).
//!
//! The optical part evolves X = C_m and Y = iC_e under
//! dX/dt = ΩY, dY/dt = −γY − ΩX − Ψ; the rf part rotates the (C_m, C_M) pair.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::physics::fastest_rate;

/// Largest step accepted by [`step_optical`], as a fraction of 1/γ₊.
pub const STEP_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AtomicState {
    /// X = C_m, the g-m (spin) coherence.
    pub x: Complex64,
    /// Y = iC_e, the optical coherence.
    pub y: Complex64,
    /// C_M, the storage level; only rf pulses touch it.
    pub c_big_m: Complex64,
}

impl AtomicState {
    pub fn new(x: Complex64, y: Complex64, c_big_m: Complex64) -> Self {
        Self { x, y, c_big_m }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x.norm_sqr() + self.y.norm_sqr() + self.c_big_m.norm_sqr()
    }
}

/// One trapezoidal (Crank–Nicolson) step of the optical system at fixed Ω,
/// γ and dt, stored as the affine map `s' = M s + b Ψ_mid`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrapezoidStep {
    m: [[f64; 2]; 2],
    b: [f64; 2],
}

impl TrapezoidStep {
    pub fn new(omega: f64, gamma: f64, dt: f64) -> Self {
        let a = 0.5 * dt;
        let det = 1.0 + a * gamma + a * a * omega * omega;
        // (I − aA)⁻¹ = [[1+aγ, aΩ], [−aΩ, 1]] / det
        let inv = [[(1.0 + a * gamma) / det, a * omega / det], [-a * omega / det, 1.0 / det]];
        // I + aA = [[1, aΩ], [−aΩ, 1 − aγ]]
        let rhs = [[1.0, a * omega], [-a * omega, 1.0 - a * gamma]];
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = inv[i][0] * rhs[0][j] + inv[i][1] * rhs[1][j];
            }
        }
        // forcing (0, −Ψ)·dt
        let b = [-dt * inv[0][1], -dt * inv[1][1]];
        Self { m, b }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.m
    }

    /// Homogeneous part M·s of the step, returned as (x, y).
    #[inline]
    pub fn propagate(&self, x: Complex64, y: Complex64) -> (Complex64, Complex64) {
        (x * self.m[0][0] + y * self.m[0][1], x * self.m[1][0] + y * self.m[1][1])
    }

    /// Response (x, y) to a unit midpoint field.
    #[inline]
    pub fn forcing(&self) -> (f64, f64) {
        (self.b[0], self.b[1])
    }

    #[inline]
    pub fn advance(&self, state: AtomicState, psi_mid: Complex64) -> AtomicState {
        let (x, y) = self.propagate(state.x, state.y);
        AtomicState { x: x + psi_mid * self.b[0], y: y + psi_mid * self.b[1], c_big_m: state.c_big_m }
    }
}

/// Implicit Euler step with the field taken at the new node:
/// s′ = M·s + b·Ψ′. Used to damp the stiff mode right after a discontinuity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerStep {
    m: [[f64; 2]; 2],
    b: [f64; 2],
}

impl EulerStep {
    pub fn new(omega: f64, gamma: f64, dt: f64) -> Self {
        let det = 1.0 + dt * gamma + dt * dt * omega * omega;
        let m = [[(1.0 + dt * gamma) / det, dt * omega / det], [-dt * omega / det, 1.0 / det]];
        Self { m, b: [-dt * m[0][1], -dt * m[1][1]] }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.m
    }

    pub fn forcing(&self) -> (f64, f64) {
        (self.b[0], self.b[1])
    }

    pub fn advance(&self, state: AtomicState, psi_new: Complex64) -> AtomicState {
        AtomicState {
            x: state.x * self.m[0][0] + state.y * self.m[0][1] + psi_new * self.b[0],
            y: state.x * self.m[1][0] + state.y * self.m[1][1] + psi_new * self.b[1],
            c_big_m: state.c_big_m,
        }
    }
}

pub fn max_step(omega: f64, gamma: f64) -> f64 {
    STEP_FRACTION / fastest_rate(gamma, omega)
}

/// Advances the optical amplitudes by one trapezoidal step with the field and
/// control sampled at the step midpoint. C_M is left untouched.
pub fn step_optical(state: AtomicState, psi: Complex64, omega: f64, dt: f64, gamma: f64) -> Result<AtomicState> {
    let limit = max_step(omega, gamma);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, limit });
    }
    Ok(TrapezoidStep::new(omega, gamma, dt).advance(state, psi))
}

/// Leading-order dark-state-following amplitudes X = −Ψ/Ω, Y = −Ψ_t/Ω².
pub fn adiabatic_state(psi: Complex64, psi_dot: Complex64, omega: f64) -> Result<AtomicState> {
    if omega == 0.0 {
        return Err(Error::ZeroControlField);
    }
    Ok(AtomicState { x: -psi / omega, y: -psi_dot / (omega * omega), c_big_m: Complex64::new(0.0, 0.0) })
}

/// Instantaneous resonant m–M rotation of rotation angle `area` = P·τ:
/// C_m′ = cos·C_m + i e^{iφ} sin·C_M, C_M′ = cos·C_M + i e^{−iφ} sin·C_m.
pub fn rf_rotation(state: AtomicState, area: f64, phase: f64) -> AtomicState {
    let (s, c) = area.sin_cos();
    let i = Complex64::i();
    let ph = Complex64::from_polar(1.0, phase);
    AtomicState {
        x: state.x * c + i * ph * s * state.c_big_m,
        y: state.y,
        c_big_m: state.c_big_m * c + i * ph.conj() * s * state.x,
    }
}

/// Finite-duration rf pulse: integrates dC_m/dt = iPe^{iφ}C_M,
/// dC_M/dt = iPe^{−iφ}C_m with classical RK4, control coupling off.
pub fn integrate_rf_pulse(state: AtomicState, p_rf: f64, duration: f64, phase: f64, steps: usize) -> AtomicState {
    let steps = steps.max(1);
    let dt = duration / steps as f64;
    let up = Complex64::i() * p_rf * Complex64::from_polar(1.0, phase);
    let down = Complex64::i() * p_rf * Complex64::from_polar(1.0, -phase);
    let rhs = |m: Complex64, big: Complex64| (up * big, down * m);
    let (mut m, mut big) = (state.x, state.c_big_m);
    for _ in 0..steps {
        let k1 = rhs(m, big);
        let k2 = rhs(m + k1.0 * (0.5 * dt), big + k1.1 * (0.5 * dt));
        let k3 = rhs(m + k2.0 * (0.5 * dt), big + k2.1 * (0.5 * dt));
        let k4 = rhs(m + k3.0 * dt, big + k3.1 * dt);
        m += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0);
        big += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
    }
    AtomicState { x: m, y: state.y, c_big_m: big }
}
