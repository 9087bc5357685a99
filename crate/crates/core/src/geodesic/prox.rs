//! Proximal map of the perspective function `(w, r) ↦ frc(w, r)/2`.

use crate::error::{invalid, Result};

/// `argmin frc(w, r)/2 + (|w − w̃|² + |r − r̃|²)/(2σ)` over `r ≥ 0`.
///
/// For `r > 0` the optimality conditions give `w = w̃·r/(r + σ)` and the cubic
/// `(r − r̃)(r + σ)² = σw̃²/2`. Its left side increases on `r > max(0, r̃)`, so
/// the root is unique and bracketed by `[max(0, r̃), r̃ + w̃²/(2σ)]`. When
/// `r̃ ≤ −w̃²/(2σ)` there is no positive root and the minimizer is `(0, 0)`.
pub fn prox_perspective(w_tilde: f64, r_tilde: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("prox step must be positive, got {sigma}"));
    }
    Ok(prox_unchecked(w_tilde, r_tilde, sigma))
}

#[inline]
pub(crate) fn prox_unchecked(wt: f64, rt: f64, sigma: f64) -> (f64, f64) {
    if wt == 0.0 {
        return (0.0, rt.max(0.0));
    }
    let q = 0.5 * sigma * wt * wt;
    if rt <= -wt * wt / (2.0 * sigma) {
        return (0.0, 0.0);
    }
    let h = |r: f64| (r - rt) * (r + sigma) * (r + sigma) - q;
    let mut lo = rt.max(0.0);
    let mut hi = rt + wt * wt / (2.0 * sigma);
    if hi <= lo {
        hi = lo + f64::EPSILON * (1.0 + lo.abs());
    }
    // Newton from the upper end: h is convex on the bracket, so iterates stay
    // above the root; bisection guards rounding.
    let mut r = hi;
    for _ in 0..100 {
        let f = h(r);
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let df = (r + sigma) * (r + sigma) + 2.0 * (r - rt) * (r + sigma);
        let mut next = r - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() <= 4.0 * f64::EPSILON * r.abs().max(f64::MIN_POSITIVE) {
            r = next;
            break;
        }
        r = next;
    }
    (wt * r / (r + sigma), r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(w: f64, r: f64, wt: f64, rt: f64, s: f64) -> f64 {
        let f = if r > 0.0 {
            w * w / r
        } else if w == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        0.5 * f + ((w - wt).powi(2) + (r - rt).powi(2)) / (2.0 * s)
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(prox_perspective(0.0, 1.0, 1.0).unwrap(), (0.0, 1.0));
        assert_eq!(prox_perspective(0.0, -1.0, 1.0).unwrap(), (0.0, 0.0));
        assert_eq!(prox_perspective(1.0, -10.0, 0.1).unwrap(), (0.0, 0.0));
        assert!(prox_perspective(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn satisfies_optimality() {
        for &(wt, rt, s) in &[(1.0, 1.0, 1.0), (-3.0, 0.2, 0.5), (0.01, 5.0, 2.0), (2.0, -0.5, 1.0)] {
            let (w, r) = prox_perspective(wt, rt, s).unwrap();
            assert!(r > 0.0);
            let gw = w / r + (w - wt) / s;
            let gr = -w * w / (2.0 * r * r) + (r - rt) / s;
            assert!(gw.abs() < 1e-12 && gr.abs() < 1e-12, "{wt} {rt} {s}");
            let best = objective(w, r, wt, rt, s);
            for (dw, dr) in [(1e-4, 0.0), (-1e-4, 0.0), (0.0, 1e-4), (0.0, -1e-4)] {
                assert!(objective(w + dw, (r + dr).max(0.0), wt, rt, s) >= best);
            }
        }
    }
}
