//! Observables extracted from sampled histories.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::solver::FieldHistory;

type C64 = Complex64;

/// Slices below this fraction of the global maximum have no peak.
const PEAK_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseMetrics {
    pub peak_amplitude: f64,
    pub peak_time: f64,
    pub fwhm_t: f64,
}

/// Location of the maximum of `values` on `axis`, refined by the parabola
/// through the maximum and its two neighbours.
pub fn refined_peak(axis: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let (i, &vmax) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if i == 0 || i + 1 == values.len() {
        return Some((axis[i], vmax));
    }
    let (x0, x1, x2) = (axis[i - 1], axis[i], axis[i + 1]);
    let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
    // Newton form of the interpolating parabola
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv >= 0.0 {
        return Some((x1, y1));
    }
    let x = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    let x = x.clamp(x0, x2);
    let y = y0 + d01 * (x - x0) + curv * (x - x0) * (x - x1);
    Some((x, y.max(y1)))
}

/// Per z-slice lab time of the |Ψ| maximum.
pub fn peak_trajectory(history: &FieldHistory) -> Result<Vec<(f64, f64)>> {
    let global = history.psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(history.axes.z.len());
    for (iz, &z) in history.axes.z.iter().enumerate() {
        let mag: Vec<f64> = history.z_slice(iz).iter().map(|v| v.norm()).collect();
        let (tau, peak) = refined_peak(&history.axes.tau, &mag).ok_or(Error::EmptySignal)?;
        if !(peak > PEAK_FLOOR * global) {
            return Err(Error::NoPeak { index: iz });
        }
        out.push((z, tau + z / history.c));
    }
    Ok(out)
}

/// Like [`peak_trajectory`] but only looks at retarded times inside
/// `window`. Slices whose maximum sits on the window edge (the pulse is then
/// not fully inside the window) or stays below a tenth of the strongest
/// in-window peak are dropped.
pub fn peak_trajectory_in(history: &FieldHistory, window: (f64, f64)) -> Vec<(f64, f64)> {
    let lo = history.axes.tau.partition_point(|&t| t < window.0);
    let hi = history.axes.tau.partition_point(|&t| t < window.1);
    if hi < lo + 3 {
        return Vec::new();
    }
    let axis = &history.axes.tau[lo..hi];
    let slices: Vec<Vec<f64>> =
        (0..history.axes.z.len()).map(|iz| history.z_slice(iz)[lo..hi].iter().map(|v| v.norm()).collect()).collect();
    let strongest = slices.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let mut out = Vec::new();
    for (mag, &z) in slices.iter().zip(&history.axes.z) {
        let (i, &m) = mag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        if i == 0 || i + 1 == mag.len() || !(m > 0.1 * strongest) {
            continue;
        }
        if let Some((tau, _)) = refined_peak(axis, mag) {
            out.push((z, tau + z / history.c));
        }
    }
    out
}

/// Least-squares speed dz/dt of a trajectory of (z, t) points, from the
/// slope of t against z.
pub fn fit_velocity(trajectory: &[(f64, f64)]) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::EmptySignal);
    }
    let n = trajectory.len() as f64;
    let mz = trajectory.iter().map(|p| p.0).sum::<f64>() / n;
    let mt = trajectory.iter().map(|p| p.1).sum::<f64>() / n;
    let szz: f64 = trajectory.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szt: f64 = trajectory.iter().map(|p| (p.0 - mz) * (p.1 - mt)).sum();
    if szz == 0.0 || szt == 0.0 {
        return Err(Error::EmptySignal);
    }
    Ok(szz / szt)
}

/// Full width at half maximum of a profile on a uniform grid.
pub fn fwhm(signal: &[f64], spacing: f64) -> Result<f64> {
    let axis: Vec<f64> = (0..signal.len()).map(|i| i as f64 * spacing).collect();
    fwhm_on_axis(signal, &axis)
}

/// Full width at half maximum on an arbitrary increasing axis, with the
/// half-maximum crossings found by linear interpolation.
pub fn fwhm_on_axis(signal: &[f64], axis: &[f64]) -> Result<f64> {
    if signal.is_empty() || signal.len() != axis.len() {
        return Err(Error::EmptySignal);
    }
    let (imax, &peak) = signal.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if !(peak > 0.0) {
        return Err(Error::NoPeak { index: imax });
    }
    let half = 0.5 * peak;
    let above: Vec<bool> = signal.iter().map(|&v| v >= half).collect();
    let segments = above.windows(2).filter(|w| w[1] && !w[0]).count() + usize::from(above[0]);
    if segments != 1 {
        return Err(Error::NotUnimodal { segments });
    }
    let first = above.iter().position(|&a| a).unwrap();
    let last = above.iter().rposition(|&a| a).unwrap();
    let cross = |i: usize, j: usize| {
        let (y0, y1) = (signal[i], signal[j]);
        axis[i] + (half - y0) / (y1 - y0) * (axis[j] - axis[i])
    };
    let left = if first == 0 { axis[0] } else { cross(first - 1, first) };
    let right = if last + 1 == signal.len() { axis[last] } else { cross(last, last + 1) };
    Ok(right - left)
}

/// Spatial FWHM of a |C_m| or |Ψ| profile along z.
pub fn spatial_length(profile: &[f64], dz: f64) -> Result<f64> {
    fwhm(profile, dz)
}

/// Result of [`l2_distance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    /// ‖a − b‖ / max(‖a‖, ‖b‖) at the best shift.
    pub distance: f64,
    /// Samples by which `b` was delayed to match `a`.
    pub shift: isize,
    /// Sign of Re⟨a, b⟩ at that shift.
    pub sign: f64,
}

/// ‖a − b‖ / max(‖a‖, ‖b‖) without alignment.
pub fn normalized_l2(a: &[C64], b: &[C64]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::EmptySignal);
    }
    let na = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    Ok(diff / scale)
}

/// Normalized L2 distance after delaying `b` by the whole number of samples
/// that maximises |Σ a·conj(b)|. Samples shifted in from outside are zero.
pub fn l2_distance(a: &[C64], b: &[C64]) -> Result<Alignment> {
    let n = a.len();
    if n == 0 || n != b.len() {
        return Err(Error::EmptySignal);
    }
    let na = a.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>();
    if na == 0.0 && nb == 0.0 {
        return Err(Error::EmptySignal);
    }
    let corr = |s: isize| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (i, av) in a.iter().enumerate() {
            let j = i as isize - s;
            if (0..n as isize).contains(&j) {
                acc += av * b[j as usize].conj();
            }
        }
        acc
    };
    let mut best = (0isize, corr(0));
    for s in 1..n as isize {
        for cand in [s, -s] {
            let c = corr(cand);
            if c.norm() > best.1.norm() {
                best = (cand, c);
            }
        }
    }
    let (shift, c) = best;
    let shifted: Vec<C64> = (0..n as isize)
        .map(|i| {
            let j = i - shift;
            if (0..n as isize).contains(&j) {
                b[j as usize]
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let diff = a.iter().zip(&shifted).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let nshift = shifted.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let scale = na.max(nshift).sqrt();
    Ok(Alignment {
        distance: if scale > 0.0 { diff / scale } else { 0.0 },
        shift,
        sign: if c.re >= 0.0 { 1.0 } else { -1.0 },
    })
}

/// Convolution with a unit-area Gaussian of standard deviation `sigma`
/// (axis units). The edges are extended by mirror reflection, which keeps
/// constants and the total integral unchanged.
pub fn gaussian_broaden(envelope: &[C64], spacing: f64, sigma: f64) -> Vec<C64> {
    let n = envelope.len();
    if sigma <= 0.0 || n == 0 || spacing <= 0.0 {
        return envelope.to_vec();
    }
    let s = sigma / spacing;
    let half = (8.0 * s).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half).map(|k| (-0.5 * (k as f64 / s).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);
    let period = 2 * n as isize;
    let reflect = |i: isize| -> usize {
        let m = i.rem_euclid(period);
        (if m < n as isize { m } else { period - 1 - m }) as usize
    };
    (0..n as isize)
        .map(|i| kernel.iter().enumerate().map(|(k, &w)| envelope[reflect(i + k as isize - half)] * w).sum())
        .collect()
}

/// Linear interpolation of (axis, values) onto `count` uniform points in [lo, hi].
pub fn resample_uniform(axis: &[f64], values: &[C64], lo: f64, hi: f64, count: usize) -> Vec<C64> {
    let count = count.max(2);
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|k| {
            let x = lo + k as f64 * step;
            let j = axis.partition_point(|&a| a < x);
            if j == 0 {
                values[0]
            } else if j >= axis.len() {
                values[axis.len() - 1]
            } else {
                let f = (x - axis[j - 1]) / (axis[j] - axis[j - 1]);
                values[j - 1] * (1.0 - f) + values[j] * f
            }
        })
        .collect()
}

/// Peak amplitude, peak time and temporal FWHM of |Ψ| on `axis`.
pub fn pulse_metrics(axis: &[f64], values: &[C64]) -> Result<PulseMetrics> {
    let mag: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let (peak_time, peak_amplitude) = refined_peak(axis, &mag).ok_or(Error::EmptySignal)?;
    Ok(PulseMetrics { peak_amplitude, peak_time, fwhm_t: fwhm_on_axis(&mag, axis)? })
}
