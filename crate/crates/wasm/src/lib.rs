//! Browser bindings: a rate/kernel explorer, snapshots of the reference
//! solution for the preset protocol, and a small live march.
//!
//! Arrays cross the boundary as flat `Float64Array`s. Each `*_js` export is
//! a thin wrapper over a plain function that the native tests exercise.

use slowlight::config::{fig1, ScenarioConfig};
use slowlight::oracle::Branch;
use slowlight::physics::{damping_rates, group_velocity, transparency_width, TransientKernel};
use slowlight::pulse::PulseEnvelope;
use slowlight::report::oracle_for;
use slowlight::solver::{run_march_with, SimGrid};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub tau_gamma: f64,
    pub delta_t: f64,
    pub v1: f64,
    pub v2: f64,
}

pub fn rates(gamma: f64, omega: f64, h: f64, alpha: f64, c: f64) -> Result<Rates, String> {
    let after = (1.0 + h) * omega;
    let (gamma_plus, gamma_minus) = damping_rates(gamma, after).map_err(|e| e.to_string())?;
    Ok(Rates {
        gamma_plus,
        gamma_minus,
        tau_gamma: 5.0 / gamma_minus,
        delta_t: transparency_width(omega, gamma),
        v1: group_velocity(omega, alpha, c).map_err(|e| e.to_string())?,
        v2: group_velocity(after, alpha, c).map_err(|e| e.to_string())?,
    })
}

/// `n` samples of (τ, K_x, K_y) on [0, t_max], interleaved.
pub fn kernel_curves(gamma: f64, omega: f64, h: f64, t_max: f64, n: usize) -> Result<Vec<f64>, String> {
    let (gp, gm) = damping_rates(gamma, (1.0 + h) * omega).map_err(|e| e.to_string())?;
    let k = TransientKernel::new(gp, gm, h);
    let n = n.max(2);
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let t = t_max * i as f64 / (n - 1) as f64;
        out.extend([t, k.kx(t), k.ky(t)]);
    }
    Ok(out)
}

/// Preset protocol with the retrieval pulse area replaced.
fn scenario(retrieval_area: f64) -> ScenarioConfig {
    let mut cfg = fig1();
    cfg.schedule.rf_events[1].area = retrieval_area;
    cfg
}

/// Profiles along the sample at lab time `t`: `n` rows of
/// (z, |Ψ|, |C_m|, |C_M|), interleaved.
pub fn snapshot(t: f64, retrieval_area: f64, n: usize) -> Result<Vec<f64>, String> {
    let cfg = scenario(retrieval_area);
    let oracle = oracle_for(&cfg).map_err(|e| e.to_string())?;
    let n = n.max(2);
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        let z = cfg.grid.l_s * i as f64 / (n - 1) as f64;
        let psi = oracle.field(z, t, Branch::TwoTerm).map_err(|e| e.to_string())?;
        let (m, big) = oracle.spinwave(z, t).map_err(|e| e.to_string())?;
        out.extend([z, psi.norm(), m.norm(), big.norm()]);
    }
    Ok(out)
}

/// Exit signal at z = l_s from a march of the protocol on a ten times
/// shorter time scale, as (τ, Re Ψ, |Ψ|) rows. The input is drawn on the
/// same axis for reference as a fourth column.
pub fn small_march(h: f64, split_area: f64, retrieval_area: f64) -> Result<Vec<f64>, String> {
    let mut cfg = fig1();
    cfg.params.h = h;
    cfg.input = PulseEnvelope::gaussian(0.05, 1040.0, 400.0);
    cfg.grid = SimGrid { l_s: 14.4, dz: 0.0375, tau_span: (0.0, 3520.0), dtau: 0.025 };
    let step = cfg.schedule.control_step.as_mut().expect("preset has a control step");
    step.t1 = 1680.0;
    step.h = h;
    cfg.schedule.rf_events[0].time = 1700.0;
    cfg.schedule.rf_events[0].area = split_area;
    cfg.schedule.rf_events[1].time = 2560.0;
    cfg.schedule.rf_events[1].area = retrieval_area;
    cfg.store.z_samples = 4;
    cfg.store.tau_samples = 1500;
    cfg.validate().map_err(|e| e.to_string())?;
    let options = cfg.march_options().map_err(|e| e.to_string())?;
    let (field, _) =
        run_march_with(&cfg.grid, &cfg.schedule, &cfg.input, &cfg.params, &options).map_err(|e| e.to_string())?;
    let iz = field.axes.z.len() - 1;
    let mut out = Vec::with_capacity(4 * field.axes.tau.len());
    for (it, &tau) in field.axes.tau.iter().enumerate() {
        let p = field.at(iz, it);
        out.extend([tau, p.re, p.norm(), cfg.input.value(tau)]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = rates)]
pub fn rates_js(gamma: f64, omega: f64, h: f64, alpha: f64, c: f64) -> Result<Rates, JsError> {
    rates(gamma, omega, h, alpha, c).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = kernelCurves)]
pub fn kernel_curves_js(gamma: f64, omega: f64, h: f64, t_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    kernel_curves(gamma, omega, h, t_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = snapshot)]
pub fn snapshot_js(t: f64, retrieval_area: f64, n: usize) -> Result<Vec<f64>, JsError> {
    snapshot(t, retrieval_area, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = smallMarch)]
pub fn small_march_js(h: f64, split_area: f64, retrieval_area: f64) -> Result<Vec<f64>, JsError> {
    small_march(h, split_area, retrieval_area).map_err(|e| JsError::new(&e))
}
