//! Explicit finite-action curve between two Gaussian-tailed densities.
//!
//! Three phases: heat flow from `ρ⁰` on `s ∈ [0, ¼]`, linear interpolation on
//! `[¼, ¾]`, reversed heat flow into `ρ¹` on `[¾, 1]`. Every flux frame is
//! `w^{j+½} = S·Δ⁻¹(ρ^{j+1} − ρ^j)`. In the middle phase this is
//! `2Δ⁻¹(ρ^{¾} − ρ^{¼})`; in the heat phases it is the exact time average of
//! `±(3/α)ρ` over the interval, so the continuity equation holds to rounding.

use crate::curves::DiscreteCurve;
use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, ProbabilityDensity};
use crate::kernels::{heat_kernel_cached, heat_semigroup, kernel_bound_check};
use crate::poisson::inverse_laplacian_rel;

/// `δ Σ_κ exp(α(δκ)²) ρ_κ`.
pub fn gaussian_tail_moment(rho: &GridFunction, alpha: f64) -> f64 {
    let d = rho.delta();
    d * rho.iter().map(|(k, v)| (alpha * (d * k as f64).powi(2)).exp() * v).sum::<f64>()
}

fn check_pair(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    rho0.grid().same_delta(rho1.grid())?;
    let (c0, c1) = (rho0.moments().m1, rho1.moments().m1);
    if (c0 - c1).abs() > rho0.delta() {
        return Err(Error::Precondition(format!("centers {c0:e} and {c1:e} differ by more than δ")));
    }
    Ok(())
}

/// Builds the three-phase curve with `steps` intervals (a multiple of 4).
pub fn connect(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, alpha: f64, steps: usize) -> Result<DiscreteCurve> {
    check_pair(rho0, rho1, alpha)?;
    if steps == 0 || steps % 4 != 0 {
        return invalid(format!("connector needs a positive multiple of 4 steps, got {steps}"));
    }
    let s = steps as f64;
    let quarter = steps / 4;
    let speed = 3.0 / alpha;
    let mut rho: Vec<ProbabilityDensity> = Vec::with_capacity(steps + 1);
    for j in 0..=quarter {
        rho.push(heat_semigroup(rho0, speed * j as f64 / s)?);
    }
    let lower = rho[quarter].clone();
    let upper = heat_semigroup(rho1, speed * 0.25)?;
    for j in quarter + 1..3 * quarter {
        let t = j as f64 / s;
        let g = upper.grid().zip_with(lower.grid(), |u, l| l + (2.0 * t - 0.5) * (u - l))?;
        let tol = lower.mass_tol().max(upper.mass_tol());
        rho.push(ProbabilityDensity::new(g, tol, rho0.delta())?);
    }
    for j in 3 * quarter..=steps {
        rho.push(heat_semigroup(rho1, speed * (steps - j) as f64 / s)?);
    }
    let mut w = Vec::with_capacity(steps);
    for j in 0..steps {
        let inc = rho[j + 1].grid().sub(rho[j].grid())?;
        w.push(inverse_laplacian_rel(&inc, 1.0)?.scale(s));
    }
    DiscreteCurve::new(rho, w, 1e-10)
}

/// Constants of the two-sided Gaussian bounds on the middle phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectorConstants {
    pub alpha: f64,
    pub r0: f64,
    pub r1: f64,
    /// Empirical kernel constant at `τ = 3/(4α)` over the retained kernel window.
    pub c_heat: f64,
    /// Lower constant `r` of the density sandwich.
    pub lower: f64,
    /// Upper constant `R` of the density sandwich.
    pub upper: f64,
    pub b_alpha: f64,
}

/// `R⁰, R¹`, `C_heat`, `r = √(α/3π)·max(R⁰,R¹)^{−4/3}`, `R = C_heat√(α/3π)max(R⁰,R¹)`
/// and `B_α = 2/α + δ√(2/(eα))`.
///
/// `B_α` bounds `δ Σ_{n≥1} δn·exp(−(α/4)(δn)²)` by the integral plus `δ` times
/// the maximum of the unimodal summand.
pub fn connector_constants(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, alpha: f64) -> Result<ConnectorConstants> {
    check_pair(rho0, rho1, alpha)?;
    let d = rho0.delta();
    let r0 = gaussian_tail_moment(rho0.grid(), alpha);
    let r1 = gaussian_tail_moment(rho1.grid(), alpha);
    let rmax = r0.max(r1);
    let tau = 0.75 / alpha;
    let kernel = heat_kernel_cached(d, tau)?;
    let kw = kernel.half_width();
    let c_heat = kernel_bound_check(d, tau, (-kw, kw))?.c_heat;
    let gauss = (alpha / (3.0 * std::f64::consts::PI)).sqrt();
    let b_alpha = 2.0 / alpha + d * (2.0 / (std::f64::consts::E * alpha)).sqrt();
    Ok(ConnectorConstants {
        alpha,
        r0,
        r1,
        c_heat,
        lower: gauss * rmax.powf(-4.0 / 3.0),
        upper: c_heat * gauss * rmax,
        b_alpha,
    })
}

/// Worst ratios of the middle-phase frames against their Gaussian envelopes.
/// A bound holds when its ratio is at most 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichReport {
    /// `max r·e^{−(4α/9)x²}/ρ`.
    pub lower_ratio: f64,
    /// `max ρ/(R·e^{−(α/4)x²})`.
    pub upper_ratio: f64,
    /// `max |w|/(4B_αR·e^{−(α/4)x²})`.
    pub field_ratio: f64,
    pub sites: usize,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_ratio <= 1.0 && self.upper_ratio <= 1.0 && self.field_ratio <= 1.0
    }
}

/// Checks the density sandwich and the flux bound on every middle-phase frame
/// of a connector curve, at every site of the frame windows.
pub fn sandwich_check(curve: &DiscreteCurve, c: &ConnectorConstants) -> Result<SandwichReport> {
    let steps = curve.steps();
    if steps % 4 != 0 {
        return invalid("sandwich check needs a connector curve with steps divisible by 4");
    }
    let d = curve.delta();
    let a = c.alpha;
    let q = steps / 4;
    let mut rep = SandwichReport { lower_ratio: 0.0, upper_ratio: 0.0, field_ratio: 0.0, sites: 0 };
    for rho in &curve.rho()[q..=3 * q] {
        for (k, v) in rho.grid().iter() {
            let x2 = (d * k as f64).powi(2);
            let low = c.lower * (-(4.0 * a / 9.0) * x2).exp();
            let high = c.upper * (-(a / 4.0) * x2).exp();
            rep.lower_ratio = rep.lower_ratio.max(if v > 0.0 { low / v } else { f64::INFINITY });
            rep.upper_ratio = rep.upper_ratio.max(v / high);
            rep.sites += 1;
        }
    }
    for w in &curve.w()[q..3 * q] {
        for (k, v) in w.iter() {
            let x2 = (d * k as f64).powi(2);
            let env = 4.0 * c.b_alpha * c.upper * (-(a / 4.0) * x2).exp();
            rep.field_ratio = rep.field_ratio.max(v.abs() / env);
        }
    }
    Ok(rep)
}

/// Closed-form upper bound on the connector action:
/// `9/(2α²) + ½·(16B_α²R²/r)·δΣ_κ exp(−(α/18)(δκ)²)`.
///
/// The middle phase lasts half a unit of time and its integrand is bounded by
/// `|w|²/ρ ≤ 16B_α²R²/r · exp(−(α/2 − 4α/9)(δκ)²)`.
pub fn action_bound(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, alpha: f64) -> Result<f64> {
    let c = connector_constants(rho0, rho1, alpha)?;
    let d = rho0.delta();
    let rate = alpha / 18.0;
    let mut sum = 1.0;
    let mut k = 1i64;
    loop {
        let t = (-rate * (d * k as f64).powi(2)).exp();
        sum += 2.0 * t;
        if t < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    let middle = 0.5 * 16.0 * c.b_alpha.powi(2) * c.upper.powi(2) / c.lower * d * sum;
    Ok(9.0 / (2.0 * alpha * alpha) + middle)
}
