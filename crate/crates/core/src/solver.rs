//! Field march in the retarded frame τ = t − z/c.
//!
//! ∂Ψ/∂z = αY is advanced slice by slice. Within one slice the atoms are
//! integrated forward in τ with the trapezoidal stepper, and for the implicit
//! z-schemes the new field is solved node by node together with the atoms it
//! drives, which is possible because one atom step is affine in the field.

use num_complex::Complex64;

use crate::atomic::{integrate_rf_pulse, max_step, rf_rotation, AtomicState, EulerStep, TrapezoidStep};
use crate::error::{Error, Result};
use crate::physics::{fastest_rate, DerivedRates, PhysicalParams};
use crate::pulse::PulseEnvelope;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const DAMPING_STEPS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimGrid {
    /// Sample length.
    pub l_s: f64,
    pub dz: f64,
    /// Retarded-time window (τ_min, τ_max).
    pub tau_span: (f64, f64),
    pub dtau: f64,
}

impl SimGrid {
    /// Number of z steps; `dz` must divide `l_s` up to rounding.
    pub fn n_z(&self) -> Result<usize> {
        steps_in(self.l_s, self.dz, "l_s", "dz")
    }

    pub fn n_tau(&self) -> Result<usize> {
        steps_in(self.tau_span.1 - self.tau_span.0, self.dtau, "tau span", "dtau")
    }

    pub fn z_at(&self, k: usize) -> f64 {
        k as f64 * self.dz
    }

    pub fn tau_at(&self, n: usize) -> f64 {
        self.tau_span.0 + n as f64 * self.dtau
    }

    /// Halves both steps.
    pub fn refined(&self) -> Self {
        Self { dz: 0.5 * self.dz, dtau: 0.5 * self.dtau, ..*self }
    }

    pub fn check_shape(&self) -> Result<()> {
        let finite = [self.l_s, self.dz, self.tau_span.0, self.tau_span.1, self.dtau];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("grid values must be finite".into()));
        }
        if self.l_s <= 0.0 || self.dz <= 0.0 || self.dtau <= 0.0 {
            return Err(Error::InvalidGrid("l_s, dz and dtau must be positive".into()));
        }
        if self.tau_span.1 <= self.tau_span.0 {
            return Err(Error::InvalidGrid("tau span must be increasing".into()));
        }
        self.n_z()?;
        self.n_tau()?;
        Ok(())
    }

    /// Resolution limits: 100 z samples per pulse length and a τ step below
    /// both 0.1/γ₊ and t_p1/100.
    pub fn check_resolution(&self, params: &PhysicalParams, input: &PulseEnvelope) -> Result<()> {
        let l_p = params.v1() * input.t_p1;
        if self.dz > 0.01 * l_p * (1.0 + 1e-9) {
            return Err(Error::InvalidGrid(format!("dz = {} exceeds 0.01 * l_p = {}", self.dz, 0.01 * l_p)));
        }
        let rate = fastest_rate(params.gamma, params.omega0).max(fastest_rate(params.gamma, params.omega_after()));
        let limit = (0.1 / rate).min(0.01 * input.t_p1);
        if self.dtau > limit * (1.0 + 1e-9) {
            return Err(Error::InvalidGrid(format!("dtau = {} exceeds {limit}", self.dtau)));
        }
        Ok(())
    }
}

fn steps_in(span: f64, step: f64, what: &str, by: &str) -> Result<usize> {
    let ratio = span / step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::InvalidGrid(format!("{by} = {step} does not divide {what} = {span}")));
    }
    Ok(n as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlStep {
    /// Lab time at which the step crosses z = 0.
    pub t1: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RfEvent {
    pub time: f64,
    /// Rotation angle P·τ.
    pub area: f64,
    pub phase: f64,
}

impl RfEvent {
    pub fn new(time: f64, area: f64) -> Self {
        Self { time, area, phase: 0.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventSchedule {
    pub control_step: Option<ControlStep>,
    pub rf_events: Vec<RfEvent>,
}

impl EventSchedule {
    pub fn step_h(&self) -> f64 {
        self.control_step.map_or(0.0, |s| s.h)
    }

    /// Ordering rules plus the settling gap between the control step and the
    /// first rf pulse.
    pub fn validate(&self, params: &PhysicalParams, input: &PulseEnvelope) -> Result<()> {
        for ev in &self.rf_events {
            if !(ev.time.is_finite() && ev.area.is_finite() && ev.phase.is_finite()) {
                return Err(Error::InvalidSchedule("rf event values must be finite".into()));
            }
        }
        for pair in self.rf_events.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(Error::InvalidSchedule(format!(
                    "rf events must be strictly increasing in time ({} then {})",
                    pair[0].time, pair[1].time
                )));
            }
        }
        let Some(step) = self.control_step else {
            return Ok(());
        };
        if !(step.t1.is_finite() && step.h.is_finite()) || step.h < 0.0 {
            return Err(Error::InvalidSchedule("control step needs finite t and h >= 0".into()));
        }
        if (step.h - params.h).abs() > 1e-12 * (1.0 + params.h) {
            return Err(Error::InvalidSchedule(format!(
                "control step h = {} disagrees with the parameter h = {}",
                step.h, params.h
            )));
        }
        if let Some(first) = self.rf_events.first() {
            if first.time <= step.t1 {
                return Err(Error::InvalidSchedule("the control step must precede the first rf event".into()));
            }
            let rates = DerivedRates::from_params(params)?;
            let earliest = step.t1 + rates.tau_gamma + params.v1() * input.t_p1 / params.c;
            if first.time < earliest {
                return Err(Error::InvalidSchedule(format!(
                    "first rf event at {} comes before the transient settles at {earliest}",
                    first.time
                )));
            }
        }
        Ok(())
    }
}

/// Control Rabi frequency at (z, τ). The step moves at c, so in the
/// retarded frame it is a threshold in τ alone.
pub fn control_amplitude_at(_z: f64, tau: f64, schedule: &EventSchedule, params: &PhysicalParams) -> f64 {
    match schedule.control_step {
        Some(step) if tau >= step.t1 => (1.0 + step.h) * params.omega0,
        _ => params.omega0,
    }
}

/// Retarded instant at which an rf event reaches position z.
pub fn rf_instant(event: &RfEvent, z: f64, c: f64) -> f64 {
    event.time - z / c
}

/// Rotates every atom of a z-slice. The rotation is instantaneous, so each
/// atom only needs to be at its own instant `rf_instant(event, z, c)`; the
/// instants are returned.
pub fn apply_rf_across_sample(atoms: &mut [AtomicState], zs: &[f64], event: &RfEvent, c: f64) -> Vec<f64> {
    for a in atoms.iter_mut() {
        *a = rf_rotation(*a, event.area, event.phase);
    }
    zs.iter().map(|&z| rf_instant(event, z, c)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZScheme {
    /// Second-order backward differentiation, implicit; a trapezoid step starts it.
    #[default]
    Bdf2,
    /// Explicit midpoint predictor–corrector.
    Midpoint,
    /// Explicit Euler.
    Euler,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RfTiming {
    /// Applied at τ = t_e − z/c, snapped to the nearest node.
    #[default]
    Retarded,
    /// Applied at τ = t_e at every z.
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RfMode {
    #[default]
    Instantaneous,
    /// RK4 integration over the pulse duration area/P with this many steps.
    Finite { steps: usize },
}

/// Which (z, τ) nodes are kept in the histories.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampling {
    pub z_stride: usize,
    pub tau_stride: usize,
    /// τ intervals stored at full resolution.
    pub fine: Vec<(f64, f64)>,
}

impl Sampling {
    /// Every node. Only sensible for small grids.
    pub fn full() -> Self {
        Self { z_stride: 1, tau_stride: 1, fine: Vec::new() }
    }

    /// About `nz` z samples and `ntau` τ samples, plus full resolution from
    /// just before each event to `after` past it.
    pub fn auto(grid: &SimGrid, schedule: &EventSchedule, nz: usize, ntau: usize, after: f64) -> Result<Self> {
        let n_z = grid.n_z()?;
        let n_tau = grid.n_tau()?;
        let z_stride = (n_z / nz.max(1)).max(1);
        let tau_stride = (n_tau / ntau.max(1)).max(1);
        let mut times: Vec<f64> = schedule.rf_events.iter().map(|e| e.time).collect();
        if let Some(step) = schedule.control_step {
            times.push(step.t1);
        }
        let fine = times.into_iter().map(|t| (t - 4.0 * grid.dtau - grid.l_s / 1e3, t + after)).collect();
        Ok(Self { z_stride, tau_stride, fine })
    }

    /// Coordinates of the kept nodes, as a march on `grid` would store them.
    pub fn axes(&self, grid: &SimGrid) -> Result<Axes> {
        let n_z = grid.n_z()?;
        let n_tau = grid.n_tau()?;
        let exact =
            SimGrid { dz: grid.l_s / n_z as f64, dtau: (grid.tau_span.1 - grid.tau_span.0) / n_tau as f64, ..*grid };
        Ok(Axes {
            z: self.z_indices(n_z).into_iter().map(|k| exact.z_at(k)).collect(),
            tau: self.tau_indices(&exact, n_tau).into_iter().map(|n| exact.tau_at(n)).collect(),
        })
    }

    fn z_indices(&self, n_z: usize) -> Vec<usize> {
        let stride = self.z_stride.max(1);
        let mut out: Vec<usize> = (0..=n_z).step_by(stride).collect();
        if *out.last().unwrap() != n_z {
            out.push(n_z);
        }
        out
    }

    fn tau_indices(&self, grid: &SimGrid, n_tau: usize) -> Vec<usize> {
        let stride = self.tau_stride.max(1);
        let mut keep = vec![false; n_tau + 1];
        for n in (0..=n_tau).step_by(stride) {
            keep[n] = true;
        }
        keep[n_tau] = true;
        for &(a, b) in &self.fine {
            let lo = ((a - grid.tau_span.0) / grid.dtau).floor().max(0.0) as usize;
            let hi = (((b - grid.tau_span.0) / grid.dtau).ceil().max(0.0) as usize).min(n_tau);
            for flag in keep.iter_mut().take(hi + 1).skip(lo.min(n_tau + 1)) {
                *flag = true;
            }
        }
        keep.iter().enumerate().filter_map(|(n, &k)| k.then_some(n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarchOptions {
    pub scheme: ZScheme,
    pub rf_timing: RfTiming,
    pub rf_mode: RfMode,
    /// `None` keeps every node.
    pub sampling: Option<Sampling>,
    /// Enforce [`SimGrid::check_resolution`].
    pub strict_grid: bool,
}

impl Default for MarchOptions {
    fn default() -> Self {
        Self {
            scheme: ZScheme::Bdf2,
            rf_timing: RfTiming::Retarded,
            rf_mode: RfMode::Instantaneous,
            sampling: None,
            strict_grid: true,
        }
    }
}

/// Coordinates of a sampled history. Data is stored z-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Axes {
    pub z: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Axes {
    pub fn len(&self) -> usize {
        self.z.len() * self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, iz: usize, it: usize) -> usize {
        iz * self.tau.len() + it
    }

    /// Index of the τ sample closest to `tau`.
    pub fn nearest_tau(&self, tau: f64) -> usize {
        nearest(&self.tau, tau)
    }

    pub fn nearest_z(&self, z: f64) -> usize {
        nearest(&self.z, z)
    }
}

fn nearest(axis: &[f64], v: f64) -> usize {
    let i = axis.partition_point(|&a| a < v);
    if i == 0 {
        0
    } else if i == axis.len() {
        axis.len() - 1
    } else if (axis[i] - v).abs() < (v - axis[i - 1]).abs() {
        i
    } else {
        i - 1
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldHistory {
    pub axes: Axes,
    pub psi: Vec<C64>,
    /// Input envelope Ψ⁰ at the sampled τ.
    pub boundary: Vec<C64>,
    pub c: f64,
}

impl FieldHistory {
    pub fn at(&self, iz: usize, it: usize) -> C64 {
        self.psi[self.axes.index(iz, it)]
    }

    /// Ψ(z_iz, ·) over the sampled τ.
    pub fn z_slice(&self, iz: usize) -> &[C64] {
        let n = self.axes.tau.len();
        &self.psi[iz * n..(iz + 1) * n]
    }

    /// Ψ(·, τ_it) over the sampled z.
    pub fn tau_slice(&self, it: usize) -> Vec<C64> {
        (0..self.axes.z.len()).map(|iz| self.at(iz, it)).collect()
    }

    pub fn lab_time(&self, iz: usize, it: usize) -> f64 {
        self.axes.tau[it] + self.axes.z[iz] / self.c
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomicFieldHistory {
    pub axes: Axes,
    pub x: Vec<C64>,
    pub y: Vec<C64>,
    pub c_big_m: Vec<C64>,
    pub c: f64,
}

impl AtomicFieldHistory {
    pub fn state(&self, iz: usize, it: usize) -> AtomicState {
        let i = self.axes.index(iz, it);
        AtomicState::new(self.x[i], self.y[i], self.c_big_m[i])
    }

    pub fn x_tau_slice(&self, it: usize) -> Vec<C64> {
        (0..self.axes.z.len()).map(|iz| self.x[self.axes.index(iz, it)]).collect()
    }

    pub fn c_big_m_tau_slice(&self, it: usize) -> Vec<C64> {
        (0..self.axes.z.len()).map(|iz| self.c_big_m[self.axes.index(iz, it)]).collect()
    }
}

/// March with default options and a history that keeps every node.
pub fn run_march(
    grid: &SimGrid,
    schedule: &EventSchedule,
    input: &PulseEnvelope,
    params: &PhysicalParams,
) -> Result<(FieldHistory, AtomicFieldHistory)> {
    run_march_with(grid, schedule, input, params, &MarchOptions::default())
}

pub fn run_march_with(
    grid: &SimGrid,
    schedule: &EventSchedule,
    input: &PulseEnvelope,
    params: &PhysicalParams,
    options: &MarchOptions,
) -> Result<(FieldHistory, AtomicFieldHistory)> {
    grid.check_shape()?;
    input.check()?;
    schedule.validate(params, input)?;
    if options.strict_grid {
        grid.check_resolution(params, input)?;
    }
    let floor = 1e-8 * input.psi_max;
    for tau in [grid.tau_span.0, grid.tau_span.1] {
        if input.value(tau).abs() > floor {
            return Err(Error::InvalidGrid(format!("input is not negligible at the window edge tau = {tau}")));
        }
    }
    let omega_after = (1.0 + schedule.step_h()) * params.omega0;
    for omega in [params.omega0, omega_after] {
        let limit = max_step(omega, params.gamma);
        if grid.dtau > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt: grid.dtau, limit });
        }
    }

    let n_z = grid.n_z()?;
    let n_tau = grid.n_tau()?;
    let dz = grid.l_s / n_z as f64;
    let dtau = (grid.tau_span.1 - grid.tau_span.0) / n_tau as f64;
    let exact = SimGrid { dz, dtau, ..*grid };

    let sampling = options.sampling.clone().unwrap_or_else(Sampling::full);
    let z_keep = sampling.z_indices(n_z);
    let tau_keep = sampling.tau_indices(&exact, n_tau);
    let axes = Axes {
        z: z_keep.iter().map(|&k| exact.z_at(k)).collect(),
        tau: tau_keep.iter().map(|&n| exact.tau_at(n)).collect(),
    };

    let t1 = schedule.control_step.map(|s| s.t1);
    let mut march = March {
        grid: exact,
        params: *params,
        options: options.clone(),
        schedule: schedule.clone(),
        steps: [
            TrapezoidStep::new(params.omega0, params.gamma, dtau),
            TrapezoidStep::new(omega_after, params.gamma, dtau),
        ],
        damping: [EulerStep::new(params.omega0, params.gamma, dtau), EulerStep::new(omega_after, params.gamma, dtau)],
        // interval [n, n+1] uses the post-step amplitude when its midpoint is past t1
        switch: t1.map_or(usize::MAX, |t1| ((t1 - exact.tau_span.0) / dtau - 0.5).ceil().max(0.0) as usize),
        tau_keep,
        field: FieldHistory { psi: vec![ZERO; axes.len()], boundary: Vec::new(), c: params.c, axes: axes.clone() },
        atoms: AtomicFieldHistory {
            x: vec![ZERO; axes.len()],
            y: vec![ZERO; axes.len()],
            c_big_m: vec![ZERO; axes.len()],
            c: params.c,
            axes,
        },
    };
    march.field.boundary = march.tau_keep.iter().map(|&n| C64::new(input.value(exact.tau_at(n)), 0.0)).collect();

    let boundary: Vec<C64> = (0..=n_tau).map(|n| C64::new(input.value(exact.tau_at(n)), 0.0)).collect();
    let bound = 10.0 * input.psi_max;
    let alpha = params.alpha;

    let mut row_of = vec![usize::MAX; n_z + 1];
    for (row, &k) in z_keep.iter().enumerate() {
        row_of[k] = row;
    }
    let row = |k: usize| (row_of[k] != usize::MAX).then_some(row_of[k]);

    let mut psi_prev = boundary.clone();
    let mut psi_cur = boundary;
    let mut y_cur = vec![ZERO; n_tau + 1];
    let mut psi_next = vec![ZERO; n_tau + 1];
    let mut y_next = vec![ZERO; n_tau + 1];

    // slice 0 is driven directly by the boundary
    march.pass(0.0, |n| psi_cur[n], 0.0, &mut psi_next, &mut y_cur, row(0));

    for k in 0..n_z {
        let z_next = exact.z_at(k + 1);
        let rec = row(k + 1);
        match options.scheme {
            ZScheme::Bdf2 if k == 0 => {
                let (p, y) = (&psi_cur, &y_cur);
                march.pass(
                    z_next,
                    |n| p[n] + y[n] * (0.5 * dz * alpha),
                    0.5 * dz * alpha,
                    &mut psi_next,
                    &mut y_next,
                    rec,
                );
            }
            ZScheme::Bdf2 => {
                let (p, q) = (&psi_cur, &psi_prev);
                march.pass(
                    z_next,
                    |n| p[n] + (p[n] - q[n]) * (1.0 / 3.0),
                    2.0 / 3.0 * dz * alpha,
                    &mut psi_next,
                    &mut y_next,
                    rec,
                );
            }
            ZScheme::Euler => {
                let (p, y) = (&psi_cur, &y_cur);
                march.pass(z_next, |n| p[n] + y[n] * (dz * alpha), 0.0, &mut psi_next, &mut y_next, rec);
            }
            ZScheme::Midpoint => {
                let mut y_half = vec![ZERO; n_tau + 1];
                {
                    let (p, y) = (&psi_cur, &y_cur);
                    march.pass(
                        z_next - 0.5 * dz,
                        |n| p[n] + y[n] * (0.5 * dz * alpha),
                        0.0,
                        &mut psi_next,
                        &mut y_half,
                        None,
                    );
                }
                let (p, y) = (&psi_cur, &y_half);
                march.pass(z_next, |n| p[n] + y[n] * (dz * alpha), 0.0, &mut psi_next, &mut y_next, rec);
            }
        }
        let peak_sqr = psi_next.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if !(peak_sqr <= bound * bound) {
            return Err(Error::UnstableMarch { z: z_next, magnitude: peak_sqr.sqrt() });
        }
        std::mem::swap(&mut psi_prev, &mut psi_cur);
        std::mem::swap(&mut psi_cur, &mut psi_next);
        std::mem::swap(&mut y_cur, &mut y_next);
    }

    Ok((march.field, march.atoms))
}

struct March {
    grid: SimGrid,
    params: PhysicalParams,
    options: MarchOptions,
    schedule: EventSchedule,
    steps: [TrapezoidStep; 2],
    damping: [EulerStep; 2],
    switch: usize,
    tau_keep: Vec<usize>,
    field: FieldHistory,
    atoms: AtomicFieldHistory,
}

impl March {
    /// Integrates the atoms at position `z` over the whole τ window while the
    /// field there is fixed by Ψ_n = rhs_n + coupling·Y_n. With `coupling = 0`
    /// the atoms are simply driven by `rhs`.
    fn pass<F: Fn(usize) -> C64>(
        &mut self,
        z: f64,
        rhs: F,
        coupling: f64,
        psi_out: &mut [C64],
        y_out: &mut [C64],
        record: Option<usize>,
    ) {
        let n_tau = psi_out.len() - 1;
        let tau0 = self.grid.tau_span.0;
        let dtau = self.grid.dtau;
        let mut rf: Vec<(usize, usize)> = self
            .schedule
            .rf_events
            .iter()
            .enumerate()
            .filter_map(|(i, ev)| {
                let t = match self.options.rf_timing {
                    RfTiming::Retarded => rf_instant(ev, z, self.params.c),
                    RfTiming::Uniform => ev.time,
                };
                let n = ((t - tau0) / dtau).round();
                (n >= 0.0 && n <= n_tau as f64).then_some((n as usize, i))
            })
            .collect();
        rf.sort_unstable();
        let mut next_rf = 0;
        let mut next_keep = 0;
        let width = self.tau_keep.len();

        let coefs = self.steps.map(|step| StepCoefs::new(&step, coupling));
        let damped = self.damping.map(|step| StepCoefs::euler(&step, coupling));
        // a few implicit Euler steps after each discontinuity keep the
        // trapezoid rule from ringing on the stiff mode
        let mut kicks: Vec<usize> = rf.iter().map(|&(n, _)| n).collect();
        if self.switch <= n_tau {
            kicks.push(self.switch);
        }
        kicks.sort_unstable();
        let mut next_kick = 0;
        let mut s = AtomicState::default();
        let mut psi = rhs(0);
        psi_out[0] = psi;
        y_out[0] = ZERO;
        let mut n = 0;
        loop {
            // node n is complete; apply events and record it
            while next_rf < rf.len() && rf[next_rf].0 == n {
                let ev = self.schedule.rf_events[rf[next_rf].1];
                s = match self.options.rf_mode {
                    RfMode::Instantaneous => rf_rotation(s, ev.area, ev.phase),
                    RfMode::Finite { steps } => {
                        integrate_rf_pulse(s, self.params.p_rf, ev.area / self.params.p_rf, ev.phase, steps)
                    }
                };
                next_rf += 1;
            }
            if let Some(row) = record {
                if next_keep < width && self.tau_keep[next_keep] == n {
                    let i = row * width + next_keep;
                    self.field.psi[i] = psi;
                    self.atoms.x[i] = s.x;
                    self.atoms.y[i] = s.y;
                    self.atoms.c_big_m[i] = s.c_big_m;
                    next_keep += 1;
                }
            }
            if n == n_tau {
                break;
            }
            // run uninterrupted up to the next node that needs attention
            let mut stop = n_tau;
            if next_rf < rf.len() {
                stop = stop.min(rf[next_rf].0);
            }
            if record.is_some() && next_keep < width {
                stop = stop.min(self.tau_keep[next_keep]);
            }
            if n < self.switch {
                stop = stop.min(self.switch);
            }
            let after = usize::from(n >= self.switch);
            while next_kick < kicks.len() && kicks[next_kick] + DAMPING_STEPS <= n {
                next_kick += 1;
            }
            let k = match kicks.get(next_kick) {
                Some(&e) if e <= n => {
                    stop = stop.min(e + DAMPING_STEPS);
                    &damped[after]
                }
                Some(&e) => {
                    stop = stop.min(e);
                    &coefs[after]
                }
                None => &coefs[after],
            };
            let (mut x, mut y) = (s.x, s.y);
            for m in n + 1..=stop {
                let r = rhs(m);
                let p = (x * k.p[0] + y * k.p[1]) + (psi * k.p[2] + r * k.p[3]);
                let nx = (x * k.x[0] + y * k.x[1]) + (psi * k.x[2] + r * k.x[3]);
                let ny = (x * k.y[0] + y * k.y[1]) + (psi * k.y[2] + r * k.y[3]);
                (x, y, psi) = (nx, ny, p);
                psi_out[m] = psi;
                y_out[m] = y;
            }
            s.x = x;
            s.y = y;
            n = stop;
        }
    }
}

/// One trapezoid step combined with the field solve, written as rows of the
/// affine map (x, y, Ψ, rhs) → x′, y′, Ψ′.
struct StepCoefs {
    x: [f64; 4],
    y: [f64; 4],
    p: [f64; 4],
}

impl StepCoefs {
    fn new(step: &TrapezoidStep, coupling: f64) -> Self {
        let (fx, fy) = step.forcing();
        Self::affine(step.matrix(), [0.5 * fx, 0.5 * fy], [0.5 * fx, 0.5 * fy], coupling)
    }

    fn euler(step: &EulerStep, coupling: f64) -> Self {
        let (fx, fy) = step.forcing();
        Self::affine(step.matrix(), [0.0, 0.0], [fx, fy], coupling)
    }

    /// s′ = M·s + old·Ψ + new·Ψ′ with Ψ′ = rhs + coupling·y′ solved for Ψ′.
    fn affine(m: [[f64; 2]; 2], old: [f64; 2], new: [f64; 2], coupling: f64) -> Self {
        let inv = 1.0 / (1.0 - coupling * new[1]);
        let p = [inv * coupling * m[1][0], inv * coupling * m[1][1], inv * coupling * old[1], inv];
        let row = |a: f64, b: f64, o: f64, h: f64| [a + h * p[0], b + h * p[1], o + h * p[2], h * p[3]];
        Self { x: row(m[0][0], m[0][1], old[0], new[0]), y: row(m[1][0], m[1][1], old[1], new[1]), p }
    }
}
