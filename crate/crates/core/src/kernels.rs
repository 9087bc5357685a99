//! Discrete heat kernel, lattice convolution and the heat semigroup.
//!
//! `G_κ = (1/2πδ) ∫_{−π}^{π} cos(κz) exp(−(2τ/δ²)(1 − cos z)) dz` is evaluated by
//! the periodic trapezoid rule. The integrand is entire and 2π-periodic, so the
//! contour may be shifted to `Im z = asinh(κ/a)`, `a = 2τ/δ²`, which passes
//! through the saddle point and removes the cancellation that would otherwise
//! destroy relative accuracy in the tails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{invalid, Result};
use crate::grid::{GridFunction, ProbabilityDensity};

/// Truncated discrete heat kernel `G^{δ,τ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernel {
    delta: f64,
    tau: f64,
    tail_cut: f64,
    values: GridFunction,
    mass_deficit: f64,
}

impl HeatKernel {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tail_cut(&self) -> f64 {
        self.tail_cut
    }

    pub fn grid(&self) -> &GridFunction {
        &self.values
    }

    /// Half width `K` of the symmetric window `[−K, K]`.
    pub fn half_width(&self) -> i64 {
        self.values.hi()
    }

    /// Mass carried by the dropped tail sites, `δ Σ_{|κ|>K} G_κ`.
    pub fn mass_deficit(&self) -> f64 {
        self.mass_deficit
    }
}

/// Default tail cut `1e−16/δ`.
pub fn default_tail_cut(delta: f64) -> f64 {
    1e-16 / delta
}

/// Trapezoid approximation of `δ·G_κ` with `n` nodes on the saddle contour.
pub fn heat_kernel_quadrature(delta: f64, tau: f64, k: i64, n: usize) -> f64 {
    let a = 2.0 * tau / (delta * delta);
    let k = k.unsigned_abs() as f64;
    if a == 0.0 {
        return if k == 0.0 { 1.0 } else { 0.0 };
    }
    let y = (k / a).asinh();
    let b = a * y.cosh();
    // log of the integrand modulus at the saddle
    let log_e0 = -k * y - a + b;
    let h = 2.0 * PI / n as f64;
    let mut s = 0.0;
    for j in 0..n {
        let x = h * j as f64;
        s += (b * (x.cos() - 1.0)).exp() * (k * (x - x.sin())).cos();
    }
    log_e0.exp() * s / n as f64
}

fn initial_nodes(a: f64, k: i64) -> usize {
    let k = k.unsigned_abs() as f64;
    let b = (a * a + k * k).sqrt();
    let want = 32.0 + 2.0 * k + 16.0 * b.sqrt();
    (want.ceil() as usize).next_power_of_two()
}

/// `G_κ` with node doubling until the relative change is below `1e−14`.
pub fn heat_kernel_value(delta: f64, tau: f64, k: i64) -> f64 {
    let a = 2.0 * tau / (delta * delta);
    let mut n = initial_nodes(a, k);
    let mut prev = heat_kernel_quadrature(delta, tau, k, n);
    loop {
        n *= 2;
        let next = heat_kernel_quadrature(delta, tau, k, n);
        if (next - prev).abs() <= 1e-14 * next.abs() || n >= 1 << 18 {
            return next / delta;
        }
        prev = next;
    }
}

pub fn heat_kernel(delta: f64, tau: f64, tail_cut: f64) -> Result<HeatKernel> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return invalid(format!("heat time must be nonnegative, got {tau}"));
    }
    if !(tail_cut >= 0.0) {
        return invalid(format!("tail cut must be nonnegative, got {tail_cut}"));
    }
    if tau == 0.0 {
        return Ok(HeatKernel {
            delta,
            tau,
            tail_cut,
            values: GridFunction::point(delta, 0, 1.0 / delta)?,
            mass_deficit: 0.0,
        });
    }
    let dropped = |g: f64| g < tail_cut || g == 0.0;
    let mut half: Vec<f64> = vec![heat_kernel_value(delta, tau, 0)];
    let mut k = 1;
    let first_dropped = loop {
        let g = heat_kernel_value(delta, tau, k);
        if dropped(g) {
            break g;
        }
        half.push(g);
        k += 1;
    };
    let mut tail = first_dropped;
    let mut g = first_dropped;
    let mut j = k + 1;
    while g > 0.0 && g >= 1e-8 * first_dropped {
        g = heat_kernel_value(delta, tau, j);
        tail += g;
        j += 1;
    }
    let kmax = half.len() as i64 - 1;
    let values = GridFunction::from_fn(delta, -kmax, kmax, |i| half[i.unsigned_abs() as usize])?;
    Ok(HeatKernel { delta, tau, tail_cut, values, mass_deficit: 2.0 * delta * tail })
}

type CacheKey = (u64, u64, u64);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<HeatKernel>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<HeatKernel>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Memoized [`heat_kernel`] with the default tail cut.
///
/// Concurrent misses may compute the same kernel twice; the computation is a
/// pure function of the key, so either result is the same value.
pub fn heat_kernel_cached(delta: f64, tau: f64) -> Result<Arc<HeatKernel>> {
    let tail = default_tail_cut(delta);
    let key = (delta.to_bits(), tau.to_bits(), tail.to_bits());
    if let Some(k) = cache().read().expect("kernel cache poisoned").get(&key) {
        return Ok(Arc::clone(k));
    }
    let fresh = Arc::new(heat_kernel(delta, tau, tail)?);
    let mut map = cache().write().expect("kernel cache poisoned");
    Ok(Arc::clone(map.entry(key).or_insert(fresh)))
}

/// `[f ∗ g]_κ = δ Σ_λ f_λ g_{κ−λ}` on the Minkowski sum of the windows.
pub fn convolve(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.same_delta(g)?;
    let d = f.delta();
    let (fv, gv) = (f.values(), g.values());
    let mut out = vec![0.0; fv.len() + gv.len() - 1];
    for (i, o) in out.iter_mut().enumerate() {
        let jlo = i.saturating_sub(gv.len() - 1);
        let jhi = i.min(fv.len() - 1);
        let mut s = 0.0;
        for j in jlo..=jhi {
            s += fv[j] * gv[i - j];
        }
        *o = d * s;
    }
    GridFunction::new(d, f.lo() + g.lo(), out)
}

/// `G^{δ,τ} ∗ ρ`. The kernel's truncation deficit is added to the mass tolerance.
pub fn heat_semigroup(rho: &ProbabilityDensity, tau: f64) -> Result<ProbabilityDensity> {
    if !(tau >= 0.0) {
        return invalid(format!("heat time must be nonnegative, got {tau}"));
    }
    if tau == 0.0 {
        return Ok(rho.clone());
    }
    let k = heat_kernel_cached(rho.delta(), tau)?;
    let g = convolve(k.grid(), rho.grid())?;
    let mass_tol = rho.mass_tol() + k.mass_deficit() + 1e-13;
    ProbabilityDensity::new(g, mass_tol, rho.center_tol())
}

/// Continuum heat kernel `(4πτ)^{−1/2} exp(−ξ²/4τ)`.
pub fn continuum_heat_kernel(tau: f64, xi: f64) -> f64 {
    (-xi * xi / (4.0 * tau)).exp() / (4.0 * PI * tau).sqrt()
}

/// Two-sided comparison of the discrete and continuum kernels on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBoundReport {
    /// `max G^{0,τ}(δκ)/G_κ`; at most 1 when the lower bound holds.
    pub lower_ratio: f64,
    /// `max G_κ/G^{0,τ}(δκ)`, the empirical upper constant.
    pub c_heat: f64,
    pub worst_lower_site: i64,
    pub worst_upper_site: i64,
}

pub fn kernel_bound_check(delta: f64, tau: f64, window: (i64, i64)) -> Result<KernelBoundReport> {
    if !(delta > 0.0) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return invalid(format!("kernel comparison needs positive heat time, got {tau}"));
    }
    let (lo, hi) = window;
    if hi < lo {
        return invalid(format!("empty window [{lo}, {hi}]"));
    }
    let mut rep = KernelBoundReport { lower_ratio: 0.0, c_heat: 0.0, worst_lower_site: lo, worst_upper_site: lo };
    for k in lo..=hi {
        let g = heat_kernel_value(delta, tau, k);
        let g0 = continuum_heat_kernel(tau, delta * k as f64);
        let lower = g0 / g;
        let upper = g / g0;
        if lower > rep.lower_ratio {
            rep.lower_ratio = lower;
            rep.worst_lower_site = k;
        }
        if upper > rep.c_heat {
            rep.c_heat = upper;
            rep.worst_upper_site = k;
        }
    }
    Ok(rep)
}
