//! Adaptive Simpson quadrature for complex-valued integrands.

use num_complex::Complex64;

const MAX_DEPTH: u32 = 48;

/// ∫ₐᵇ f with absolute tolerance `tol`. Returns 0 for an empty interval.
pub fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    if !(b > a) {
        return Complex64::new(0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
    // a few forced levels so a narrow feature inside [a, b] is not missed
    refine(&f, a, b, fa, fm, fb, whole, tol.max(f64::MIN_POSITIVE), MAX_DEPTH, 4)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
    forced: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
    let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
    let delta = left + right - whole;
    if forced == 0 && (depth == 0 || delta.norm() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    let next = forced.saturating_sub(1);
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth.saturating_sub(1), next)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth.saturating_sub(1), next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let v = adaptive_simpson(|x| Complex64::new(x * x * x, 0.0), 0.0, 2.0, 1e-12);
        assert!((v.re - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| Complex64::new((-x).exp(), (2.0 * x).cos()), 0.0, 30.0, 1e-12);
        assert!((v.re - (1.0 - (-30.0f64).exp())).abs() < 1e-10);
        assert!((v.im - (60.0f64).sin() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn narrow_gaussian_is_found() {
        let v = adaptive_simpson(|x| Complex64::new((-(x - 3.3) * (x - 3.3) / 0.02).exp(), 0.0), 0.0, 10.0, 1e-12);
        assert!((v.re - (0.02 * std::f64::consts::PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(adaptive_simpson(|_| Complex64::new(1.0, 0.0), 1.0, 1.0, 1e-9), Complex64::new(0.0, 0.0));
        assert_eq!(adaptive_simpson(|_| Complex64::new(1.0, 0.0), 2.0, 1.0, 1e-9), Complex64::new(0.0, 0.0));
    }
}
