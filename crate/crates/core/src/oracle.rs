//! Closed-form reference solutions.
//!
//! Two independent routes are provided. [`Oracle`] follows the dark-state
//! spin wave along its characteristics in the retarded frame and splits it
//! into components at every rf rotation, so it handles any schedule. The
//! field is the dark-state value −Ω·C_m plus one relaxation term per event.
//! [`StageSolution`] evaluates the piecewise lab-frame formulas of the
//! step / split / store / retrieve protocol directly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::physics::{damping_rates, PhysicalParams, TransientKernel};
use crate::pulse::PulseEnvelope;
use crate::quad::adaptive_simpson;
use crate::solver::{control_amplitude_at, EventSchedule, RfEvent, RfTiming};

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
/// Kernels are treated as dead after this many 1/γ₋.
const KERNEL_CUTOFF: f64 = 40.0;
/// Upper end of the quadrature window, in 1/γ₋.
const QUAD_CUTOFF: f64 = 50.0;
const QUAD_TOL: f64 = 1e-10;

/// How event transients are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branch {
    /// Main term plus the kernel-weighted initial jump.
    #[default]
    TwoTerm,
    /// Full convolution of the source with the kernel, by quadrature.
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Step,
    Rf(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Profile {
    /// The input spin wave on its own characteristics.
    Main,
    /// A copy frozen at event `src`, moving again since event `origin`,
    /// already displaced by `shift` in earlier moving intervals.
    Shifted { src: usize, origin: usize, shift: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Component {
    coef: C64,
    profile: Profile,
    /// Event at which the component was parked in |M⟩.
    frozen: Option<usize>,
}

#[derive(Clone, Debug, Default)]
struct Populations {
    m: Vec<Component>,
    big_m: Vec<Component>,
}

/// Reference solution for an arbitrary schedule of one control step and any
/// number of rf rotations.
#[derive(Clone, Debug)]
pub struct Oracle {
    params: PhysicalParams,
    schedule: EventSchedule,
    input: PulseEnvelope,
    timing: RfTiming,
    l_s: Option<f64>,
    /// Populations after k rf events.
    stages: Vec<Populations>,
}

impl Oracle {
    pub fn new(params: &PhysicalParams, schedule: &EventSchedule, input: &PulseEnvelope) -> Result<Self> {
        input.check()?;
        if params.omega0 == 0.0 {
            return Err(Error::ZeroControlField);
        }
        let mut oracle = Self {
            params: *params,
            schedule: schedule.clone(),
            input: input.clone(),
            timing: RfTiming::Retarded,
            l_s: None,
            stages: Vec::new(),
        };
        oracle.build();
        Ok(oracle)
    }

    /// Restricts evaluation to 0 ≤ z ≤ l_s.
    pub fn with_sample_length(mut self, l_s: f64) -> Self {
        self.l_s = Some(l_s);
        self
    }

    pub fn with_rf_timing(mut self, timing: RfTiming) -> Self {
        self.timing = timing;
        self
    }

    fn build(&mut self) {
        let mut pop = Populations {
            m: vec![Component { coef: C64::new(1.0, 0.0), profile: Profile::Main, frozen: None }],
            big_m: Vec::new(),
        };
        self.stages.push(pop.clone());
        let events = self.schedule.rf_events.clone();
        for (e, ev) in events.iter().enumerate() {
            let (s, c) = ev.area.sin_cos();
            let down = Complex64::i() * Complex64::from_polar(s, -ev.phase);
            let up = Complex64::i() * Complex64::from_polar(s, ev.phase);
            let mut next = Populations::default();
            for comp in &pop.m {
                next.m.push(Component { coef: comp.coef * c, ..*comp });
                next.big_m.push(Component { coef: comp.coef * down, frozen: Some(e), ..*comp });
            }
            for comp in &pop.big_m {
                next.big_m.push(Component { coef: comp.coef * c, ..*comp });
                let f = comp.frozen.expect("components in |M> are frozen");
                let profile = match comp.profile {
                    Profile::Main => Profile::Shifted { src: f, origin: e, shift: 0.0 },
                    Profile::Shifted { src, origin, shift } => Profile::Shifted {
                        src,
                        origin: e,
                        shift: shift
                            + (events[f].time - events[origin].time) / self.beta_at(self.event_tau(origin, 0.0)),
                    },
                };
                next.m.push(Component { coef: comp.coef * up, profile, frozen: None });
            }
            next.m.retain(|c| c.coef != ZERO);
            next.big_m.retain(|c| c.coef != ZERO);
            self.stages.push(next.clone());
            pop = next;
        }
    }

    fn omega(&self, tau: f64) -> f64 {
        control_amplitude_at(0.0, tau, &self.schedule, &self.params)
    }

    fn beta_at(&self, tau: f64) -> f64 {
        let w = self.omega(tau);
        self.params.alpha / (w * w)
    }

    /// Retarded instant of rf event `e` at position z.
    fn event_tau(&self, e: usize, z: f64) -> f64 {
        let t = self.schedule.rf_events[e].time;
        match self.timing {
            RfTiming::Retarded => t - z / self.params.c,
            RfTiming::Uniform => t,
        }
    }

    fn check(&self, z: f64, tau: f64) -> Result<()> {
        let inside = z.is_finite() && tau.is_finite() && z >= 0.0 && self.l_s.is_none_or(|l| z <= l * (1.0 + 1e-12));
        if inside {
            Ok(())
        } else {
            Err(Error::OutOfWindow { z, t: tau + z / self.params.c })
        }
    }

    /// Input time whose dark-state spin wave sits at (z, τ) when it has
    /// followed the slow-light characteristics since entering.
    pub fn main_label(&self, z: f64, tau: f64) -> f64 {
        let b1 = self.params.alpha / (self.params.omega0 * self.params.omega0);
        match self.schedule.control_step {
            Some(step) if tau >= step.t1 => {
                let b2 = self.beta_at(step.t1);
                step.t1 + b1 / b2 * (tau - step.t1) - b1 * z
            }
            _ => tau - b1 * z,
        }
    }

    fn main_spin(&self, z: f64, tau: f64) -> f64 {
        -self.input.value(self.main_label(z, tau)) / self.params.omega0
    }

    fn component(&self, comp: &Component, z: f64, tau: f64) -> C64 {
        let at = comp.frozen.map_or(tau, |e| self.event_tau(e, z));
        let v = match comp.profile {
            Profile::Main => self.main_spin(z, at),
            Profile::Shifted { src, origin, shift } => {
                let start = self.event_tau(origin, z);
                let from = z - shift - (at - start) / self.beta_at(start);
                if from < 0.0 {
                    0.0
                } else {
                    self.main_spin(from, self.event_tau(src, from))
                }
            }
        };
        comp.coef * v
    }

    /// Number of rf events already applied at (z, τ).
    fn stage_index(&self, z: f64, tau: f64) -> usize {
        (0..self.schedule.rf_events.len()).filter(|&e| self.event_tau(e, z) <= tau).count()
    }

    fn spin_in(&self, stage: usize, z: f64, tau: f64) -> (C64, C64) {
        let pop = &self.stages[stage];
        let m = pop.m.iter().map(|c| self.component(c, z, tau)).sum();
        let big = pop.big_m.iter().map(|c| self.component(c, z, tau)).sum();
        (m, big)
    }

    /// Dark-state amplitudes (C_m, C_M) at retarded coordinates.
    pub fn spinwave_retarded(&self, z: f64, tau: f64) -> Result<(C64, C64)> {
        self.check(z, tau)?;
        Ok(self.spin_in(self.stage_index(z, tau), z, tau))
    }

    /// Dark-state amplitudes (C_m, C_M) at lab coordinates.
    pub fn spinwave(&self, z: f64, t: f64) -> Result<(C64, C64)> {
        self.spinwave_retarded(z, t - z / self.params.c)
    }

    /// −Ω·C_m without the event transients.
    pub fn dark_field(&self, z: f64, tau: f64) -> C64 {
        let (m, _) = self.spin_in(self.stage_index(z, tau), z, tau);
        -m * self.omega(tau)
    }

    fn sources(&self) -> Vec<Source> {
        let mut out: Vec<Source> = self.schedule.control_step.iter().map(|_| Source::Step).collect();
        out.extend((0..self.schedule.rf_events.len()).map(Source::Rf));
        out
    }

    /// Event line seen from z: (τ_e at z, τ_e at the entrance, β after the
    /// event, rate at which the kernel age grows along a characteristic per
    /// unit z′, Ω after the event).
    fn source_geometry(&self, src: Source, z: f64) -> (f64, f64, f64, f64, f64) {
        match src {
            Source::Step => {
                let t1 = self.schedule.control_step.map(|s| s.t1).unwrap_or(f64::INFINITY);
                let w = self.omega(t1);
                let beta = self.params.alpha / (w * w);
                (t1, t1, beta, beta, w)
            }
            Source::Rf(e) => {
                let tau_e = self.event_tau(e, z);
                let w = self.omega(self.event_tau(e, 0.0));
                let beta = self.params.alpha / (w * w);
                let slope = match self.timing {
                    RfTiming::Retarded => beta + 1.0 / self.params.c,
                    RfTiming::Uniform => beta,
                };
                (tau_e, self.event_tau(e, 0.0), beta, slope, w)
            }
        }
    }

    /// Jump of the dark-state field across the event at position z.
    fn source_jump(&self, src: Source, z: f64) -> C64 {
        match src {
            Source::Step => {
                let t1 = self.schedule.control_step.map(|s| s.t1).unwrap_or(f64::INFINITY);
                let (m, _) = self.spin_in(self.stage_index(z, t1), z, t1);
                let before = self.params.omega0;
                -(self.omega(t1) - before) * m
            }
            Source::Rf(e) => {
                let tau_e = self.event_tau(e, z);
                let (pre, _) = self.spin_in(e, z, tau_e);
                let (post, _) = self.spin_in(e + 1, z, tau_e);
                -(post - pre) * self.omega(tau_e)
            }
        }
    }

    fn unit_kernel(&self, omega: f64) -> TransientKernel {
        let (gp, gm) = damping_rates(self.params.gamma, omega).unwrap_or((self.params.gamma, 0.0));
        TransientKernel::new(gp, gm, 1.0)
    }

    fn residual(&self, src: Source, z: f64, tau: f64, branch: Branch) -> C64 {
        let (tau_e, tau_e0, beta, slope, omega) = self.source_geometry(src, z);
        // kernel age w(z′) = τ − β(z − z′) − τ_e(z′) = w0 + slope·z′
        let w_z = tau - tau_e;
        let w0 = tau - tau_e0 - beta * z;
        if w_z < 0.0 {
            return ZERO;
        }
        let kernel = self.unit_kernel(omega);
        let cutoff = KERNEL_CUTOFF / kernel.gamma_minus;
        let alive = w_z < cutoff;
        let entrance = (0.0..cutoff).contains(&w0);
        if !alive && !entrance {
            return ZERO;
        }
        match branch {
            Branch::TwoTerm => {
                let mut r = ZERO;
                if alive {
                    r -= self.source_jump(src, z) * kernel.kx(w_z);
                }
                if entrance {
                    r += self.source_jump(src, 0.0) * kernel.kx(w0);
                }
                r
            }
            Branch::Quadrature => {
                let lo = w0.max(0.0);
                let hi = w_z.min(QUAD_CUTOFF / kernel.gamma_minus);
                let scale = self.input.psi_max.max(f64::MIN_POSITIVE);
                let integral = adaptive_simpson(
                    |w| self.source_jump(src, (w - w0) / slope) * kernel.ky(w),
                    lo,
                    hi,
                    QUAD_TOL * scale * slope / self.params.alpha.max(f64::MIN_POSITIVE),
                );
                let mut r = integral * (self.params.alpha / slope);
                if w0 < 0.0 {
                    r -= self.source_jump(src, -w0 / slope);
                }
                r
            }
        }
    }

    /// Field at retarded coordinates.
    pub fn field_retarded(&self, z: f64, tau: f64, branch: Branch) -> Result<C64> {
        self.check(z, tau)?;
        let mut psi = self.dark_field(z, tau);
        for src in self.sources() {
            psi += self.residual(src, z, tau, branch);
        }
        Ok(psi)
    }

    /// Field at lab coordinates.
    pub fn field(&self, z: f64, t: f64, branch: Branch) -> Result<C64> {
        self.field_retarded(z, t - z / self.params.c, branch)
    }

    /// Retarded instants of all events at z, sorted.
    pub fn event_taus(&self, z: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.sources().into_iter().map(|s| self.source_geometry(s, z).0).collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// True when (z, τ) lies within `width` after any event at z.
    pub fn in_transient(&self, z: f64, tau: f64, width: f64) -> bool {
        self.event_taus(z).into_iter().any(|te| tau >= te && tau < te + width)
    }
}

/// Reference field with the two-term transients and exact finite-c geometry.
pub fn oracle_field(
    z: f64,
    t: f64,
    params: &PhysicalParams,
    schedule: &EventSchedule,
    input: &PulseEnvelope,
) -> Result<C64> {
    Oracle::new(params, schedule, input)?.field(z, t, Branch::TwoTerm)
}

/// Reference (C_m, C_M) at lab coordinates.
pub fn oracle_spinwave(
    z: f64,
    t: f64,
    params: &PhysicalParams,
    schedule: &EventSchedule,
    input: &PulseEnvelope,
) -> Result<(C64, C64)> {
    Oracle::new(params, schedule, input)?.spinwave(z, t)
}

/// Protocol stage of a lab-frame point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Before the control step reaches z.
    S0,
    /// Between the step and the first rf pulse.
    S1,
    /// After the first rf pulse while the transmitted pulse is present.
    S2,
    /// Transmitted pulse gone, copy parked in |M⟩.
    S3,
    /// After the retrieval pulse.
    S4,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Variant {
    /// Finite c throughout.
    #[default]
    Exact,
    /// c → ∞: κ = η = 1, V₂ = (1+h)²V₁, t_c = t₁.
    Idealized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageConstants {
    pub v1: f64,
    pub v2: f64,
    /// (c − V₁)/(c − V₂)
    pub kappa: f64,
    /// (c − V₂)/c
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Time t₁c/(c − V₁) at which the pulse centre changes speed.
    pub t_c: f64,
    /// Where that happens, V₁t_c.
    pub z_c: f64,
}

impl StageConstants {
    pub fn new(params: &PhysicalParams, t1: f64, variant: Variant) -> Self {
        let c = params.c;
        let v1 = params.v1();
        match variant {
            Variant::Exact => {
                let v2 = params.v2();
                let t_c = t1 * c / (c - v1);
                Self {
                    v1,
                    v2,
                    kappa: (c - v1) / (c - v2),
                    eta: (c - v2) / c,
                    beta1: 1.0 / v1 - 1.0 / c,
                    beta2: 1.0 / v2 - 1.0 / c,
                    t_c,
                    z_c: v1 * t_c,
                }
            }
            Variant::Idealized => {
                let v2 = (1.0 + params.h).powi(2) * v1;
                Self { v1, v2, kappa: 1.0, eta: 1.0, beta1: 1.0 / v1, beta2: 1.0 / v2, t_c: t1, z_c: v1 * t1 }
            }
        }
    }
}

/// Piecewise lab-frame solution of the protocol: control step at t₁, a
/// splitting rotation at t₃ and a retrieval rotation at t₅.
#[derive(Clone, Debug)]
pub struct StageSolution {
    pub consts: StageConstants,
    pub variant: Variant,
    pub t1: f64,
    pub t3: f64,
    pub t5: f64,
    pub h: f64,
    split: RfEvent,
    retrieve: RfEvent,
    omega0: f64,
    alpha: f64,
    c: f64,
    kernel: TransientKernel,
    input: PulseEnvelope,
}

impl StageSolution {
    pub fn new(
        params: &PhysicalParams,
        schedule: &EventSchedule,
        input: &PulseEnvelope,
        variant: Variant,
    ) -> Result<Self> {
        let (Some(step), [split, retrieve]) = (schedule.control_step, schedule.rf_events.as_slice()) else {
            return Err(Error::InvalidSchedule(
                "the staged solution needs one control step and exactly two rf events".into(),
            ));
        };
        input.check()?;
        let (gp, gm) = damping_rates(params.gamma, (1.0 + step.h) * params.omega0)?;
        Ok(Self {
            consts: StageConstants::new(&PhysicalParams { h: step.h, ..*params }, step.t1, variant),
            variant,
            t1: step.t1,
            t3: split.time,
            t5: retrieve.time,
            h: step.h,
            split: *split,
            retrieve: *retrieve,
            omega0: params.omega0,
            alpha: params.alpha,
            c: params.c,
            kernel: TransientKernel::new(gp, gm, 1.0),
            input: input.clone(),
        })
    }

    fn psi0(&self, t: f64) -> f64 {
        self.input.value(t)
    }

    fn c_eff(&self) -> f64 {
        match self.variant {
            Variant::Exact => self.c,
            Variant::Idealized => f64::INFINITY,
        }
    }

    /// Arrival of the control step at z.
    pub fn t_z(&self, z: f64) -> f64 {
        self.t1 + z / self.c_eff()
    }

    /// κ(V₂/V₁)[t − t_c − (z − z_c)/V₂]
    pub fn t_arg(&self, z: f64, t: f64) -> f64 {
        let k = &self.consts;
        k.kappa * (k.v2 / k.v1) * (t - k.t_c - (z - k.z_c) / k.v2)
    }

    /// (V₂/V₁)[t₃ − t₁ − (z − z_c)/V₂]
    pub fn t3_arg(&self, z: f64) -> f64 {
        let k = &self.consts;
        (k.v2 / k.v1) * (self.t3 - self.t1 - (z - k.z_c) / k.v2)
    }

    /// (V₂/V₁)[t − t₁ + t₃ − t₅ − (z − z_c)/V₂]
    pub fn t35_arg(&self, z: f64, t: f64) -> f64 {
        let k = &self.consts;
        (k.v2 / k.v1) * (t - self.t1 + self.t3 - self.t5 - (z - k.z_c) / k.v2)
    }

    /// Loss of dark-state field at the splitting rotation, in units of Ψ⁰.
    fn split_drop(&self) -> f64 {
        (1.0 + self.h) * (1.0 - self.split.area.cos())
    }

    /// Field retrieved per unit Ψ⁰.
    pub fn retrieval_factor(&self) -> C64 {
        let phase = Complex64::from_polar(1.0, self.retrieve.phase - self.split.phase);
        -phase * ((1.0 + self.h) * self.split.area.sin() * self.retrieve.area.sin())
    }

    pub fn stage(&self, z: f64, t: f64) -> Stage {
        if t < self.t_z(z) {
            Stage::S0
        } else if t < self.t3 {
            Stage::S1
        } else if t < self.t5 {
            let support = self.input.support(1e-12);
            let arg = self.t_arg(z, t);
            let dead = t - self.t3 > KERNEL_CUTOFF / self.kernel.gamma_minus;
            if dead && (arg < support.0 || arg > support.1) {
                Stage::S3
            } else {
                Stage::S2
            }
        } else {
            Stage::S4
        }
    }

    /// Field with the two-term transients.
    pub fn field(&self, z: f64, t: f64) -> C64 {
        let k = &self.consts;
        let re = match self.stage(z, t) {
            Stage::S0 => self.psi0(t - z / k.v1),
            Stage::S1 => {
                let tz = self.t_z(z);
                (1.0 + k.eta * self.h) * self.psi0(self.t_arg(z, t))
                    - k.eta * self.h * self.kernel.kx(t - tz) * self.psi0(tz - z / k.v1)
            }
            Stage::S2 => {
                let main = self.psi0(self.t_arg(z, t));
                (1.0 + self.h) * main
                    - k.eta * self.split_drop() * (main - self.kernel.kx(t - self.t3) * self.psi0(self.t3_arg(z)))
            }
            Stage::S3 => 0.0,
            Stage::S4 => {
                let r = self.retrieval_factor() * k.eta;
                return r * (self.psi0(self.t35_arg(z, t)) - self.psi0(self.t3_arg(z)) * self.kernel.kx(t - self.t5));
            }
        };
        C64::new(re, 0.0)
    }

    /// (C_m, C_M) with the atomic transient of each stage.
    pub fn spinwave(&self, z: f64, t: f64) -> (C64, C64) {
        let omega_a = (1.0 + self.h) * self.omega0;
        let psi = self.field(z, t);
        let stored = Complex64::i()
            * Complex64::from_polar(self.split.area.sin(), -self.split.phase)
            * (-self.psi0(self.t3_arg(z)) / self.omega0);
        match self.stage(z, t) {
            Stage::S0 => (-psi / self.omega0, ZERO),
            Stage::S1 => {
                let tz = self.t_z(z);
                let u = -self.h * self.psi0(tz - z / self.consts.v1) / omega_a;
                (-psi / omega_a + u * self.kernel.kx(t - tz), ZERO)
            }
            Stage::S2 | Stage::S3 => {
                let u = self.split_drop() * self.psi0(self.t3_arg(z)) / omega_a;
                (-psi / omega_a + u * self.kernel.kx(t - self.t3), stored)
            }
            Stage::S4 => {
                let u = -self.retrieval_factor() * self.psi0(self.t3_arg(z)) / omega_a;
                (-psi / omega_a + u * self.kernel.kx(t - self.t5), stored * self.retrieve.area.cos())
            }
        }
    }
}

/// Field change Φ caused by the control step at lab (z, t), t ≥ t_z, either as
/// the kernel convolution over the sample or as its two leading terms.
pub fn transient_phi(z: f64, t: f64, sol: &StageSolution, branch: Branch) -> Result<C64> {
    let tz = sol.t_z(z);
    if !(z >= 0.0) || !(t >= tz) {
        return Err(Error::OutOfWindow { z, t });
    }
    let k = &sol.consts;
    let value = match branch {
        Branch::TwoTerm => {
            k.eta * sol.h * sol.psi0(sol.t_arg(z, t)) - k.eta * sol.h * sol.kernel.kx(t - tz) * sol.psi0(tz - z / k.v1)
        }
        Branch::Quadrature => {
            // w = t − t_{z'} − (z − z')/V₂ runs from w0 at z' = 0 to t − t_z at z' = z
            let w0 = t - sol.t1 - z / k.v2;
            let lo = w0.max(0.0);
            let hi = (t - tz).min(QUAD_CUTOFF / sol.kernel.gamma_minus);
            let tol = QUAD_TOL * sol.input.psi_max * k.beta2 / sol.alpha.max(f64::MIN_POSITIVE);
            let integral = adaptive_simpson(
                |w| {
                    let zp = (w - w0) / k.beta2;
                    C64::new(sol.kernel.ky(w) * sol.psi0(sol.t1 + zp / sol.c_eff() - zp / k.v1), 0.0)
                },
                lo,
                hi,
                tol,
            );
            (integral * (sol.alpha * sol.h / k.beta2)).re
        }
    };
    Ok(C64::new(value, 0.0))
}

/// Field regenerated by the retrieval rotation at lab (z, t), t ≥ t₅.
pub fn retrieval_field_integral(z: f64, t: f64, sol: &StageSolution, branch: Branch) -> Result<C64> {
    if !(z >= 0.0) || !(t >= sol.t5) {
        return Err(Error::OutOfWindow { z, t });
    }
    let k = &sol.consts;
    let r = sol.retrieval_factor();
    match branch {
        Branch::TwoTerm => {
            Ok(r * k.eta * (sol.psi0(sol.t35_arg(z, t)) - sol.psi0(sol.t3_arg(z)) * sol.kernel.kx(t - sol.t5)))
        }
        Branch::Quadrature => {
            // w = t − t₅ − (z − z')/V₂
            let w0 = t - sol.t5 - z / k.v2;
            let lo = w0.max(0.0);
            let hi = (t - sol.t5).min(QUAD_CUTOFF / sol.kernel.gamma_minus);
            let tol = QUAD_TOL * sol.input.psi_max / (sol.alpha * k.v2).max(f64::MIN_POSITIVE);
            let integral = adaptive_simpson(
                |w| C64::new(sol.kernel.ky(w) * sol.psi0(sol.t3_arg((w - w0) * k.v2)), 0.0),
                lo,
                hi,
                tol,
            );
            Ok(r * integral * (sol.alpha * k.v2))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

    use proptest::prelude::*;

    use super::*;
    use crate::physics::DerivedRates;
    use crate::solver::ControlStep;

    const T1: f64 = 16800.0;
    const T3: f64 = T1 + 40.0;
    const T5: f64 = T1 + 8800.0;
    const PEAK: f64 = 0.05;

    /// Long pulse, well inside the transparency window.
    fn protocol(retrieval_area: f64) -> (PhysicalParams, EventSchedule, PulseEnvelope) {
        let params = PhysicalParams::default();
        let schedule = EventSchedule {
            control_step: Some(ControlStep { t1: T1, h: params.h }),
            rf_events: vec![RfEvent::new(T3, FRAC_PI_4), RfEvent::new(T5, retrieval_area)],
        };
        (params, schedule, PulseEnvelope::gaussian(PEAK, 10400.0, 4000.0))
    }

    fn gm() -> f64 {
        DerivedRates::from_params(&PhysicalParams::default()).unwrap().gamma_minus
    }

    #[test]
    fn stage_zero_is_plain_slow_light() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        for &(z, t) in &[(30.0, 12000.0), (0.0, 9000.0), (60.0, 16700.0)] {
            let v = o.field(z, t, Branch::TwoTerm).unwrap();
            let expected = input.value(t - z / params.v1());
            assert!((v.re - expected).abs() < 1e-15 && v.im == 0.0);
            let (m, big) = o.spinwave(z, t).unwrap();
            assert!((m.re + expected).abs() < 1e-15 && big == ZERO);
        }
    }

    #[test]
    fn settled_step_multiplies_by_one_plus_h() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        let t = T1 + 10.0 / gm();
        for z in [44.0, 64.0, 84.0] {
            let expected = SQRT_2 * input.value(sol.t_arg(z, t));
            let v = o.field(z, t, Branch::TwoTerm).unwrap().re;
            assert!((v - expected).abs() <= 0.01 * expected.abs(), "z {z}: {v} vs {expected}");
            let (pv, _) = (sol.field(z, t), ());
            assert!((pv.re - expected).abs() <= 0.01 * expected.abs());
        }
    }

    #[test]
    fn label_equals_printed_argument() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        for &(z, t) in &[(20.0, 16900.0), (90.0, 20000.0), (140.0, 29000.0)] {
            let label = o.main_label(z, t - z / params.c);
            assert!((label - sol.t_arg(z, t)).abs() < 1e-12 * t, "{label} vs {}", sol.t_arg(z, t));
        }
    }

    #[test]
    fn constants_and_limits() {
        let params = PhysicalParams::default();
        let k = StageConstants::new(&params, T1, Variant::Exact);
        let (c, v1, v2) = (params.c, params.v1(), params.v2());
        assert!((k.kappa - (c - v1) / (c - v2)).abs() < 1e-12);
        assert!((k.eta - (c - v2) / c).abs() < 1e-12);
        assert!((k.beta1 - (1.0 / v1 - 1.0 / c)).abs() < 1e-12);
        assert!((k.beta2 - (1.0 / v2 - 1.0 / c)).abs() < 1e-12);
        assert!((k.t_c - T1 * c / (c - v1)).abs() < 1e-12 * T1);
        assert!((k.z_c - v1 * k.t_c).abs() < 1e-12);

        let huge = PhysicalParams { c: 1e15, ..params };
        let k = StageConstants::new(&huge, T1, Variant::Exact);
        assert!((k.kappa - 1.0).abs() < 1e-12 && (k.eta - 1.0).abs() < 1e-12);
        let (_, schedule, input) = protocol(1.5 * PI);
        let sol = StageSolution::new(&huge, &schedule, &input, Variant::Exact).unwrap();
        let (z, t) = (70.0, 17000.0);
        let ideal = 2.0 * (t - T1 - (z - k.z_c) / k.v2);
        assert!((sol.t_arg(z, t) - ideal).abs() < 1e-6);
        let idealized = StageSolution::new(&params, &schedule, &input, Variant::Idealized).unwrap();
        assert!((idealized.t_arg(z, t) - 2.0 * (t - T1 - (z - params.v1() * T1) / (2.0 * params.v1()))).abs() < 1e-9);
    }

    #[test]
    fn split_imprints_the_snapshot() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        for z in [50.0, 64.0, 80.0] {
            let t = T3 + 1e-9;
            let (m, big) = o.spinwave(z, t).unwrap();
            let p = input.value(sol.t3_arg(z));
            assert!((m - C64::new(-p / SQRT_2, 0.0)).norm() < 1e-5 * PEAK);
            assert!((big - C64::new(0.0, -p / SQRT_2)).norm() < 1e-5 * PEAK);
            let (pm, pbig) = sol.spinwave(z, t);
            assert!((pbig - big).norm() < 1e-5 * PEAK);
            assert!((pm - m).norm() < 1e-5 * PEAK);

            let t5 = T5 + 1e-9;
            let (m5, big5) = o.spinwave(z, t5).unwrap();
            assert!((m5 - C64::new(-p / SQRT_2, 0.0)).norm() < 1e-5 * PEAK, "{m5}");
            assert!(big5.norm() < 1e-15);
        }
    }

    #[test]
    fn retrieval_restores_the_input_and_pi_flips_it() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let (_, flipped, _) = protocol(FRAC_PI_2);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        let of = Oracle::new(&params, &flipped, &input).unwrap();
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        let t = T5 + 10.0 / gm();
        let mut seen = 0.0f64;
        for i in 0..=36 {
            let z = 4.0 * i as f64;
            let v = o.field(z, t, Branch::TwoTerm).unwrap();
            let expected = input.value(sol.t35_arg(z, t));
            assert!((v.re - expected).abs() <= 0.01 * expected.abs() + 1e-3 * PEAK, "z {z}: {v} vs {expected}");
            let w = of.field(z, t, Branch::TwoTerm).unwrap();
            // only the retrieved part flips; the transmitted tail does not
            assert!((w + v).norm() < 1e-6 * PEAK);
            seen = seen.max(v.re);
        }
        assert!(seen > 0.04);
    }

    #[test]
    fn engine_matches_staged_formulas() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        let mut worst = 0.0f64;
        for iz in 0..=18 {
            let z = 8.0 * iz as f64;
            for it in 0..=880 {
                let t = 40.0 * it as f64 + 0.5;
                let a = o.field(z, t, Branch::TwoTerm).unwrap();
                let b = sol.field(z, t);
                worst = worst.max((a - b).norm());
            }
        }
        // the staged formulas leave out the input tail that enters after t1
        assert!(worst < 1e-3 * PEAK, "worst {worst}");
    }

    #[test]
    fn two_term_and_quadrature_agree_away_from_tails() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        for z in [50.0, 64.0, 78.0] {
            for dt in [0.05, 0.3, 1.0, 3.0, 10.0] {
                let t = sol.t_z(z) + dt / gm();
                let a = transient_phi(z, t, &sol, Branch::TwoTerm).unwrap();
                let b = transient_phi(z, t, &sol, Branch::Quadrature).unwrap();
                let scale = sol.h * input.value(sol.t_arg(z, t));
                assert!((a - b).norm() <= 0.05 * scale.abs(), "z {z} dt {dt}: {a} vs {b}");
            }
        }
        let z = 60.0;
        let late = sol.t_z(z) + 60.0 / gm();
        let a = transient_phi(z, late, &sol, Branch::TwoTerm).unwrap();
        let expected = sol.consts.eta * sol.h * input.value(sol.t_arg(z, late));
        assert!((a.re - expected).abs() < 1e-15);
        let z_peak = params.v1() * (T1 - 10400.0) / (1.0 - params.v1() / params.c);
        let t0 = sol.t_z(z_peak);
        let v = transient_phi(z_peak, t0, &sol, Branch::TwoTerm).unwrap();
        let expected = sol.consts.eta * sol.h * (input.value(sol.t_arg(z_peak, t0)) - PEAK);
        assert!((v.re - expected).abs() < 1e-10);
        assert!(transient_phi(50.0, 10000.0, &sol, Branch::TwoTerm).is_err());
    }

    #[test]
    fn retrieval_integral_properties() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
        assert_eq!(retrieval_field_integral(0.0, T5 + 20.0, &sol, Branch::Quadrature).unwrap(), ZERO);
        let t = T5 + 20.0 / gm();
        for z in [55.0, 65.0, 75.0] {
            let q = retrieval_field_integral(z, t, &sol, Branch::Quadrature).unwrap();
            let expected = input.value(sol.t35_arg(z, t));
            assert!((q.re - expected).abs() <= 0.05 * expected.abs(), "z {z}: {q} vs {expected}");
        }
        let doubled_input = PulseEnvelope { psi_max: 2.0 * PEAK, ..input.clone() };
        let doubled = StageSolution::new(&params, &schedule, &doubled_input, Variant::Exact).unwrap();
        for z in [30.0, 60.0] {
            let a = retrieval_field_integral(z, T5 + 3.0, &sol, Branch::Quadrature).unwrap();
            let b = retrieval_field_integral(z, T5 + 3.0, &doubled, Branch::Quadrature).unwrap();
            assert!((b - a * 2.0).norm() <= 1e-12 * b.norm());
        }
        assert!(retrieval_field_integral(50.0, T5 - 1.0, &sol, Branch::Quadrature).is_err());
    }

    #[test]
    fn quadrature_branch_is_continuous_across_events() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        for z in [40.0, 64.0, 90.0] {
            for &te in &[T1, T3 - z / params.c, T5 - z / params.c] {
                let before = o.field_retarded(z, te - 1e-9, Branch::Quadrature).unwrap();
                let after = o.field_retarded(z, te + 1e-9, Branch::Quadrature).unwrap();
                assert!((after - before).norm() < 1e-6 * PEAK, "z {z} te {te}: {before} -> {after}");
            }
        }
    }

    #[test]
    fn two_term_jump_is_small() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        let rates = DerivedRates::from_params(&params).unwrap();
        let delta = rates.delta_t;
        for z in [40.0, 64.0, 90.0] {
            for &te in &[T1, T3 - z / params.c, T5 - z / params.c] {
                let before = o.field_retarded(z, te - 1e-9, Branch::TwoTerm).unwrap();
                let after = o.field_retarded(z, te + 1e-9, Branch::TwoTerm).unwrap();
                assert!((after - before).norm() <= input.bandwidth() / delta * PEAK);
            }
        }
    }

    #[test]
    fn stored_wave_is_stationary() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap();
        for z in [50.0, 70.0] {
            let (_, a) = o.spinwave(z, T3 + 5.0).unwrap();
            let (_, b) = o.spinwave(z, T5 - 10.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn out_of_window() {
        let (params, schedule, input) = protocol(1.5 * PI);
        let o = Oracle::new(&params, &schedule, &input).unwrap().with_sample_length(144.0);
        assert!(matches!(o.field(-0.1, 100.0, Branch::TwoTerm), Err(Error::OutOfWindow { .. })));
        assert!(matches!(o.field(150.0, 100.0, Branch::TwoTerm), Err(Error::OutOfWindow { .. })));
        assert!(matches!(o.spinwave(f64::NAN, 100.0), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn staged_solution_needs_the_protocol_shape() {
        let (params, mut schedule, input) = protocol(1.5 * PI);
        schedule.rf_events.pop();
        assert!(matches!(
            StageSolution::new(&params, &schedule, &input, Variant::Exact),
            Err(Error::InvalidSchedule(_))
        ));
    }

    proptest! {
        #[test]
        fn field_depends_on_t_only_through_t_after_settling(z in 40.0f64..90.0, dz in -0.05f64..0.05) {
            let (params, schedule, input) = protocol(1.5 * PI);
            let o = Oracle::new(&params, &schedule, &input).unwrap();
            let sol = StageSolution::new(&params, &schedule, &input, Variant::Exact).unwrap();
            let t = T1 + 18.0;
            let target = sol.t_arg(z, t);
            let z2 = z + dz;
            let k = sol.consts;
            let t2 = target / (k.kappa * k.v2 / k.v1) + k.t_c + (z2 - k.z_c) / k.v2;
            prop_assume!(t2 > T1 + 5.0 && t2 < T3 - 0.1);
            let a = o.dark_field(z, t - z / params.c);
            let b = o.dark_field(z2, t2 - z2 / params.c);
            prop_assert!((a - b).norm() < 1e-12);
        }
    }
}
