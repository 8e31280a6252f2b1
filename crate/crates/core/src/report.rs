//! Protocol observables computed from a finished run, and the comparison of
//! a run against the reference solution.

use num_complex::Complex64 as C64;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::{fit_velocity, fwhm_on_axis, gaussian_broaden, l2_distance, peak_trajectory_in, resample_uniform};
use crate::oracle::{Branch, Oracle};
use crate::physics::DerivedRates;
use crate::solver::{AtomicFieldHistory, Axes, FieldHistory};

/// Number of uniform samples the retrieved pulse is resampled to.
const RETRIEVAL_SAMPLES: usize = 2048;

/// Key instants of a protocol run, in retarded time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timeline {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Control step, if any.
    pub t1: Option<f64>,
    /// First rf pulse (split).
    pub t3: Option<f64>,
    /// Second rf pulse (retrieval).
    pub t4: Option<f64>,
    /// Relaxation time of the slowest transient.
    pub tau_gamma: f64,
}

impl Timeline {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let rates = DerivedRates::from_params(&cfg.params)?;
        let rf = &cfg.schedule.rf_events;
        Ok(Self {
            tau_min: cfg.grid.tau_span.0,
            tau_max: cfg.grid.tau_span.1,
            t1: cfg.schedule.control_step.map(|s| s.t1),
            t3: rf.first().map(|e| e.time),
            t4: rf.get(1).map(|e| e.time),
            tau_gamma: rates.tau_gamma,
        })
    }
}

/// Scalar protocol observables. A value is `None` when the schedule lacks
/// the event it refers to or the signal needed is absent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProtocolMetrics {
    pub v1_fit: Option<f64>,
    pub v2_fit: Option<f64>,
    pub amp_ratio_step: Option<f64>,
    pub fwhm_ratio_step: Option<f64>,
    pub lp_ratio_step: Option<f64>,
    pub amp_ratio_rf1: Option<f64>,
    pub retrieval_l2: Option<f64>,
    pub retrieval_sign: Option<f64>,
}

impl ProtocolMetrics {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [
            ("v1_fit", self.v1_fit),
            ("v2_fit", self.v2_fit),
            ("amp_ratio_step", self.amp_ratio_step),
            ("fwhm_ratio_step", self.fwhm_ratio_step),
            ("lp_ratio_step", self.lp_ratio_step),
            ("amp_ratio_rf1", self.amp_ratio_rf1),
            ("retrieval_l2", self.retrieval_l2),
            ("retrieval_sign", self.retrieval_sign),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

/// Sampled τ range `[lo, hi)` as index bounds.
fn tau_range(axes: &Axes, lo: f64, hi: f64) -> (usize, usize) {
    (axes.tau.partition_point(|&t| t < lo), axes.tau.partition_point(|&t| t < hi))
}

/// Index of the last stored τ strictly before `t`.
fn last_before(axes: &Axes, t: f64) -> Option<usize> {
    axes.tau.partition_point(|&x| x < t).checked_sub(1)
}

fn max_abs(values: impl IntoIterator<Item = C64>) -> f64 {
    values.into_iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Spatial FWHM of |C_m| at stored τ index `it`.
fn spin_length(atoms: &AtomicFieldHistory, it: usize) -> Result<f64> {
    let profile: Vec<f64> = atoms.x_tau_slice(it).iter().map(|v| v.norm()).collect();
    fwhm_on_axis(&profile, &atoms.axes.z)
}

/// Temporal FWHM of |Ψ| at z index `iz` over τ in `[lo, hi)`.
fn duration(field: &FieldHistory, iz: usize, lo: f64, hi: f64) -> Result<f64> {
    let (a, b) = tau_range(&field.axes, lo, hi);
    if b < a + 3 {
        return Err(Error::EmptySignal);
    }
    let mag: Vec<f64> = field.z_slice(iz)[a..b].iter().map(|v| v.norm()).collect();
    fwhm_on_axis(&mag, &field.axes.tau[a..b])
}

/// Retrieved exit pulse and the reference it is compared with: the input
/// envelope compressed in time by V₁/V₂, as a spin wave written at V₁ and
/// read out at V₂ comes back shorter by that factor.
pub fn retrieval_signals(cfg: &ScenarioConfig, field: &FieldHistory, lo: f64) -> Result<(Vec<C64>, Vec<C64>, f64)> {
    let hi = cfg.grid.tau_span.1;
    if !(hi > lo) {
        return Err(Error::EmptySignal);
    }
    let iz = field.axes.z.len() - 1;
    let out = resample_uniform(&field.axes.tau, field.z_slice(iz), lo, hi, RETRIEVAL_SAMPLES);
    let spacing = (hi - lo) / (RETRIEVAL_SAMPLES - 1) as f64;
    let out = if cfg.broadening > 0.0 { gaussian_broaden(&out, spacing, cfg.broadening / spacing) } else { out };
    let rates = DerivedRates::from_params(&cfg.params)?;
    let squeeze = rates.v2 / rates.v1;
    let mid = 0.5 * (lo + hi);
    let reference = (0..RETRIEVAL_SAMPLES)
        .map(|k| {
            let tau = lo + k as f64 * spacing;
            C64::new(cfg.input.value(cfg.input.t_center + (tau - mid) * squeeze), 0.0)
        })
        .collect();
    Ok((out, reference, spacing))
}

pub fn protocol_metrics(
    cfg: &ScenarioConfig,
    field: &FieldHistory,
    atoms: &AtomicFieldHistory,
) -> Result<ProtocolMetrics> {
    let tl = Timeline::new(cfg)?;
    let tg = tl.tau_gamma;
    let axes = &field.axes;
    let mut m = ProtocolMetrics::default();

    let v1_end = tl.t1.map_or(tl.tau_max, |t| t - tg);
    m.v1_fit = fit_velocity(&peak_trajectory_in(field, (tl.tau_min, v1_end))).ok();

    let Some(t1) = tl.t1 else {
        return Ok(m);
    };
    let v2_start = tl.t3.map_or(t1, |t| t) + tg;
    let v2_end = tl.t4.map_or(tl.tau_max, |t| t - tg);
    m.v2_fit = fit_velocity(&peak_trajectory_in(field, (v2_start, v2_end))).ok();

    let rates = DerivedRates::from_params(&cfg.params)?;
    let Some(pre) = last_before(axes, t1) else {
        return Ok(m);
    };
    let pre_amp = max_abs(field.tau_slice(pre));
    let post = axes.nearest_tau(t1 + 2.0 * tg);
    if pre_amp > 0.0 && tl.t3.is_none_or(|t3| axes.tau[post] < t3) {
        m.amp_ratio_step = Some(max_abs(field.tau_slice(post)) / pre_amp);
    }

    // Temporal width before the step, one pulse length behind the pulse
    // position at t1, against the width at the exit after the step.
    let delay_per_z = 1.0 / rates.v1 - 1.0 / cfg.params.c;
    let z_center = (t1 - cfg.input.t_center) / delay_per_z;
    let z_pre = (z_center - rates.v1 * cfg.input.t_p1).max(0.0);
    let before = duration(field, axes.nearest_z(z_pre), tl.tau_min, t1);
    let after = duration(field, axes.z.len() - 1, v2_start, tl.t4.unwrap_or(tl.tau_max));
    if let (Ok(b), Ok(a)) = (before, after) {
        m.fwhm_ratio_step = Some(a / b);
    }

    let post_spin = atoms.axes.nearest_tau(t1 + 2.0 * tg);
    if let (Ok(b), Ok(a)) = (spin_length(atoms, pre), spin_length(atoms, post_spin)) {
        m.lp_ratio_step = Some(a / b);
    }

    let Some(t3) = tl.t3 else {
        return Ok(m);
    };
    let after_rf1 = axes.nearest_tau(t3 + 2.0 * tg);
    if pre_amp > 0.0 {
        m.amp_ratio_rf1 = Some(max_abs(field.tau_slice(after_rf1)) / pre_amp);
    }

    if let Some(t5) = tl.t4 {
        let (out, reference, _) = retrieval_signals(cfg, field, t5 + 2.0 * tg)?;
        if let Ok(al) = l2_distance(&out, &reference) {
            m.retrieval_l2 = Some(al.distance);
            m.retrieval_sign = Some(al.sign);
        }
    }
    Ok(m)
}

/// Reference solution configured like the run described by `cfg`.
pub fn oracle_for(cfg: &ScenarioConfig) -> Result<Oracle> {
    Ok(Oracle::new(&cfg.params, &cfg.schedule, &cfg.input)?
        .with_sample_length(cfg.grid.l_s)
        .with_rf_timing(cfg.rf_timing))
}

/// The reference field evaluated on the given axes.
pub fn oracle_history(oracle: &Oracle, cfg: &ScenarioConfig, axes: &Axes) -> Result<FieldHistory> {
    let mut psi = Vec::with_capacity(axes.len());
    for &z in &axes.z {
        for &tau in &axes.tau {
            psi.push(oracle.field_retarded(z, tau, Branch::TwoTerm)?);
        }
    }
    let boundary = axes.tau.iter().map(|&t| C64::new(cfg.input.value(t), 0.0)).collect();
    Ok(FieldHistory { axes: axes.clone(), psi, boundary, c: cfg.params.c })
}

/// Sup-norm errors of a run against the reference, relative to the largest
/// reference value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleComparison {
    /// Over nodes at least τ_γ past every event.
    pub supnorm_rel_err: f64,
    /// Over a subsample of the nodes within τ_γ after an event, with the
    /// quadrature form of the transients.
    pub supnorm_rel_err_transient: f64,
    pub compared: usize,
    pub compared_transient: usize,
}

impl OracleComparison {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![("supnorm_rel_err", self.supnorm_rel_err), ("supnorm_rel_err_transient", self.supnorm_rel_err_transient)]
    }
}

/// Compares every stored node outside the transient windows, and every
/// `stride`-th z and τ node inside them.
pub fn compare_with_oracle(cfg: &ScenarioConfig, field: &FieldHistory, stride: usize) -> Result<OracleComparison> {
    let oracle = oracle_for(cfg)?;
    let width = Timeline::new(cfg)?.tau_gamma;
    let stride = stride.max(1);
    let axes = &field.axes;
    let (mut scale, mut err, mut err_tr) = (0.0f64, 0.0f64, 0.0f64);
    let (mut n, mut n_tr) = (0, 0);
    for (iz, &z) in axes.z.iter().enumerate() {
        let events = oracle.event_taus(z);
        for (it, &tau) in axes.tau.iter().enumerate() {
            let inside = events.iter().any(|&te| tau >= te && tau < te + width);
            let num = field.at(iz, it);
            if !inside {
                let r = oracle.field_retarded(z, tau, Branch::TwoTerm)?;
                scale = scale.max(r.norm());
                err = err.max((num - r).norm());
                n += 1;
            } else if iz % stride == 0 && it % stride == 0 {
                let r = oracle.field_retarded(z, tau, Branch::Quadrature)?;
                scale = scale.max(r.norm());
                err_tr = err_tr.max((num - r).norm());
                n_tr += 1;
            }
        }
    }
    if !(scale > 0.0) {
        return Err(Error::EmptySignal);
    }
    Ok(OracleComparison {
        supnorm_rel_err: err / scale,
        supnorm_rel_err_transient: err_tr / scale,
        compared: n,
        compared_transient: n_tr,
    })
}
