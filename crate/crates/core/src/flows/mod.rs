//! The three lattice gradient flows `ρ̇ = Δ(F(ρ))`, `F(ρ) = −ρΔℰ′(ρ)`:
//!
//! * potential, `ℰ = −δΣ Vρ`, `F = ρΔV`;
//! * interaction, `ℰ = −(δ/2)Σ ρ(W∗ρ)`, `F = ρ(ΔW∗ρ)`;
//! * quadratic porous medium, `ℰ = −(δ³/4)Σ|λ−κ|ρ_κρ_λ`, `F = ρ²`.
//!
//! With these signs `dℰ/dt = −δΣ ρ(Δℰ′)² ≤ 0` for all three.

mod key;

pub use key::{
    convolution_form_gap, coupled_step, coupled_step_with, key_inequality_residual, key_inequality_residual_with,
    pme_bracket, quadratic_form_gap, DfVariant,
};

use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::grid::{laplacian, moments, GridFunction, ProbabilityDensity};

/// Which flow, with its data.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind {
    Potential { v: GridFunction },
    Interaction { w: GridFunction },
    PorousMedium,
}

/// A validated flow. `ΔV` (resp. `ΔW`) is positive wherever the data allow
/// it to be evaluated, and `W` is exactly even.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    kind: FlowKind,
    /// `ΔV` or `ΔW` on the data window shrunk by one site.
    lap: Option<GridFunction>,
}

fn interior_laplacian(f: &GridFunction, name: &str) -> Result<GridFunction> {
    if f.len() < 3 {
        return invalid(format!("{name} needs at least three sites"));
    }
    let lap = laplacian(f).on_window(f.lo() + 1, f.hi() - 1)?;
    if let Some((k, v)) = lap.iter().find(|&(_, v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!("Δ{name} must be positive and bounded; it is {v:e} at site {k}")));
    }
    Ok(lap)
}

impl FlowSpec {
    pub fn potential(v: GridFunction) -> Result<Self> {
        let lap = interior_laplacian(&v, "V")?;
        Ok(Self { kind: FlowKind::Potential { v }, lap: Some(lap) })
    }

    pub fn interaction(w: GridFunction) -> Result<Self> {
        if w.lo() != -w.hi() || w.iter().any(|(k, x)| w.get(-k) != x) {
            return Err(Error::Precondition("interaction kernel W must satisfy W(−κ) = W(κ) on a symmetric window".into()));
        }
        let lap = interior_laplacian(&w, "W")?;
        Ok(Self { kind: FlowKind::Interaction { w }, lap: Some(lap) })
    }

    pub fn porous_medium() -> Self {
        Self { kind: FlowKind::PorousMedium, lap: None }
    }

    /// `V = (δκ)²/2` on `[lo, hi]`; `ΔV ≡ 1` exactly for dyadic `δ`.
    pub fn quadratic_potential(delta: f64, lo: i64, hi: i64) -> Result<Self> {
        Self::potential(GridFunction::from_fn(delta, lo, hi, |k| 0.5 * (delta * k as f64).powi(2))?)
    }

    /// `W = (δκ)²/2` on `[−half_width, half_width]`.
    pub fn quadratic_interaction(delta: f64, half_width: i64) -> Result<Self> {
        Self::interaction(GridFunction::from_fn(delta, -half_width, half_width, |k| 0.5 * (delta * k as f64).powi(2))?)
    }

    pub fn kind(&self) -> &FlowKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FlowKind::Potential { .. } => "potential",
            FlowKind::Interaction { .. } => "interaction",
            FlowKind::PorousMedium => "porous_medium",
        }
    }

    fn lap(&self) -> &GridFunction {
        self.lap.as_ref().expect("flow has a kernel")
    }

    fn data(&self) -> Option<&GridFunction> {
        match &self.kind {
            FlowKind::Potential { v } => Some(v),
            FlowKind::Interaction { w } => Some(w),
            FlowKind::PorousMedium => None,
        }
    }

    /// Largest window on which [`lambda_bound`] can be evaluated, `None` for
    /// the porous medium flow.
    pub fn lambda_window(&self) -> Option<(i64, i64)> {
        let d = self.data()?;
        (d.hi() - d.lo() >= 4).then(|| (d.lo() + 2, d.hi() - 2))
    }

    fn check_potential_covers(&self, lo: i64, hi: i64) -> Result<()> {
        let lap = self.lap();
        if lap.lo() > lo || lap.hi() < hi {
            return Err(Error::Precondition(format!(
                "potential data give ΔV on [{}, {}] but [{lo}, {hi}] is needed",
                lap.lo(),
                lap.hi()
            )));
        }
        Ok(())
    }
}

/// `[K ∗ f]_κ` for `κ ∈ [lo, hi]`, requiring `K` to be known at every offset used.
pub(crate) fn conv_on(kernel: &GridFunction, f: &GridFunction, lo: i64, hi: i64) -> Result<GridFunction> {
    if kernel.lo() > lo - f.hi() || kernel.hi() < hi - f.lo() {
        return Err(Error::Precondition(format!(
            "interaction kernel known on [{}, {}] but offsets [{}, {}] are needed",
            kernel.lo(),
            kernel.hi(),
            lo - f.hi(),
            hi - f.lo()
        )));
    }
    let d = f.delta();
    GridFunction::from_fn(d, lo, hi, |k| d * f.iter().map(|(l, v)| kernel.get(k - l) * v).sum::<f64>())
}

/// `Σ_{κ,λ}|λ−κ|ρ_κρ_λ` in `O(n)` from running sums.
fn abs_pair_sum(rho: &GridFunction) -> f64 {
    let (mut p, mut q, mut total) = (0.0, 0.0, 0.0);
    for (i, v) in rho.values().iter().enumerate() {
        let x = i as f64;
        total += v * (x * p - q);
        p += v;
        q += x * v;
    }
    2.0 * total
}

/// The porous medium energy by the plain double sum.
pub fn pme_energy_double_sum(rho: &GridFunction) -> f64 {
    let d = rho.delta();
    let mut s = 0.0;
    for (k, a) in rho.iter() {
        for (l, b) in rho.iter() {
            s += (l - k).abs() as f64 * a * b;
        }
    }
    -0.25 * d * d * d * s
}

pub fn energy(spec: &FlowSpec, rho: &GridFunction) -> Result<f64> {
    let d = rho.delta();
    match &spec.kind {
        FlowKind::Potential { v } => {
            if v.lo() > rho.lo() || v.hi() < rho.hi() {
                return Err(Error::Precondition(format!(
                    "potential known on [{}, {}] but the density lives on [{}, {}]",
                    v.lo(),
                    v.hi(),
                    rho.lo(),
                    rho.hi()
                )));
            }
            Ok(-d * rho.iter().map(|(k, r)| v.get(k) * r).sum::<f64>())
        }
        FlowKind::Interaction { w } => {
            let c = conv_on(w, rho, rho.lo(), rho.hi())?;
            Ok(-0.5 * d * rho.iter().map(|(k, r)| r * c.get(k)).sum::<f64>())
        }
        FlowKind::PorousMedium => Ok(-0.25 * d * d * d * abs_pair_sum(rho)),
    }
}

/// `ℰ′ = (1/δ)∂ℰ/∂ρ` on `[lo, hi]`.
pub(crate) fn derivative_on(spec: &FlowSpec, rho: &GridFunction, lo: i64, hi: i64) -> Result<GridFunction> {
    let d = rho.delta();
    match &spec.kind {
        FlowKind::Potential { v } => {
            if v.lo() > lo || v.hi() < hi {
                return Err(Error::Precondition(format!("potential known on [{}, {}], needed on [{lo}, {hi}]", v.lo(), v.hi())));
            }
            Ok(v.on_window(lo, hi)?.scale(-1.0))
        }
        FlowKind::Interaction { w } => Ok(conv_on(w, rho, lo, hi)?.scale(-1.0)),
        FlowKind::PorousMedium => GridFunction::from_fn(d, lo, hi, |k| {
            -0.5 * d * d * rho.iter().map(|(l, r)| (k - l).abs() as f64 * r).sum::<f64>()
        }),
    }
}

/// `ℰ′(ρ)` on the window of `ρ`.
pub fn energy_derivative(spec: &FlowSpec, rho: &GridFunction) -> Result<GridFunction> {
    derivative_on(spec, rho, rho.lo(), rho.hi())
}

/// `F(ρ)` on the window of `ρ`.
pub fn mobility_flux(spec: &FlowSpec, rho: &GridFunction) -> Result<GridFunction> {
    match &spec.kind {
        FlowKind::Potential { .. } => {
            spec.check_potential_covers(rho.lo(), rho.hi())?;
            rho.zip_with(spec.lap(), |r, l| r * l)?.on_window(rho.lo(), rho.hi())
        }
        FlowKind::Interaction { .. } => {
            let c = conv_on(spec.lap(), rho, rho.lo(), rho.hi())?;
            rho.mul(&c)
        }
        FlowKind::PorousMedium => Ok(rho.map(|r| r * r)),
    }
}

/// `Δ(F(ρ))` on the window of `ρ` grown by one site each side. Its mass and
/// first moment vanish up to rounding.
pub fn rhs(spec: &FlowSpec, rho: &GridFunction) -> Result<GridFunction> {
    Ok(laplacian(&mobility_flux(spec, rho)?))
}

/// Largest linearized diffusion coefficient on the window of `ρ`.
fn sup_diffusivity(spec: &FlowSpec, rho: &GridFunction) -> Result<f64> {
    Ok(match &spec.kind {
        FlowKind::Potential { .. } => {
            spec.check_potential_covers(rho.lo(), rho.hi())?;
            spec.lap().on_window(rho.lo(), rho.hi())?.max_abs()
        }
        FlowKind::Interaction { .. } => conv_on(spec.lap(), rho, rho.lo(), rho.hi())?.max_abs(),
        FlowKind::PorousMedium => 2.0 * rho.max_abs(),
    })
}

/// `sup Δ[(ΔV)²]/ΔV` for the potential flow, `2 sup|ΔΔW| + sup Δ[(ΔW)²]/ΔW`
/// for the interaction flow, both over `window`; `0` for the porous medium
/// flow. The flow then satisfies `𝔻(Sᵗρ, Sᵗη) ≤ e^{Λt}𝔻(ρ, η)`.
pub fn lambda_bound(spec: &FlowSpec, window: (i64, i64)) -> Result<f64> {
    let (lo, hi) = window;
    if lo > hi {
        return invalid(format!("empty window [{lo}, {hi}]"));
    }
    let Some(data) = spec.data() else { return Ok(0.0) };
    if data.lo() > lo - 2 || data.hi() < hi + 2 {
        return Err(Error::Precondition(format!(
            "Λ on [{lo}, {hi}] needs data on [{}, {}], have [{}, {}]",
            lo - 2,
            hi + 2,
            data.lo(),
            data.hi()
        )));
    }
    let d2 = data.delta() * data.delta();
    let g = spec.lap();
    for k in lo - 1..=hi + 1 {
        if !(g.get(k) > 0.0) {
            return Err(Error::Precondition(format!("Δ of the flow data is {:e} at site {k}", g.get(k))));
        }
    }
    let sq = |k: i64| g.get(k) * g.get(k);
    let ratio = (lo..=hi)
        .map(|k| (sq(k + 1) + sq(k - 1) - 2.0 * sq(k)) / d2 / g.get(k))
        .fold(f64::NEG_INFINITY, f64::max);
    match spec.kind {
        FlowKind::Interaction { .. } => {
            let bilap = (lo..=hi)
                .map(|k| ((g.get(k + 1) + g.get(k - 1) - 2.0 * g.get(k)) / d2).abs())
                .fold(0.0, f64::max);
            Ok(2.0 * bilap + ratio)
        }
        _ => Ok(ratio),
    }
}

/// Explicit integration settings.
#[derive(Debug, Clone)]
pub struct StepPolicy {
    /// Fraction of the diffusive limit `δ²/(2·sup D)` used per step.
    pub cfl: f64,
    /// Values below `−neg_tol` abort the run.
    pub neg_tol: f64,
    /// Sites added on each side of the initial support.
    pub pad: i64,
    /// Extra times at which states are recorded, besides `0` and `t_final`.
    pub samples: Vec<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self { cfl: 0.4, neg_tol: 1e-12, pad: 16, samples: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub rho: ProbabilityDensity,
    pub t: f64,
    pub energy: f64,
}

/// One row per accepted step, and one at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    pub mass: f64,
    pub center: f64,
    pub m2: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at `0`, the requested samples inside `(0, t_final)`, and `t_final`.
    pub states: Vec<FlowState>,
    pub monitor: Vec<MonitorRow>,
    pub steps: usize,
    /// Mass carried past the fixed window by the discrete Laplacian.
    pub leaked_mass: f64,
    pub max_mass_drift: f64,
    pub max_center_drift: f64,
    /// Largest step-to-step energy increase, zero for a dissipative run.
    pub max_energy_increase: f64,
    /// Most negative value reported as zero in a recorded state.
    pub clipped: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn write_monitor(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("t,mass,center,m2,energy\n");
        for r in &self.monitor {
            out.push_str(&format!("{:?},{:?},{:?},{:?},{:?}\n", r.t, r.mass, r.center, r.m2, r.energy));
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }
}

fn monitor_row(t: f64, g: &GridFunction, energy: f64) -> MonitorRow {
    let m = moments(g);
    MonitorRow { t, mass: m.mass, center: m.m1, m2: m.m2, energy }
}

/// RK4 on the initial support padded by `policy.pad` sites, with
/// `Δt ≤ cfl·δ²/(2·sup D)` re-evaluated every step.
pub fn evolve(spec: &FlowSpec, rho0: &ProbabilityDensity, t_final: f64, policy: &StepPolicy) -> Result<Trajectory> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return invalid(format!("final time must be finite and nonnegative, got {t_final}"));
    }
    if !(policy.cfl > 0.0 && policy.cfl <= 1.0) {
        return invalid(format!("cfl must lie in (0, 1], got {}", policy.cfl));
    }
    if policy.pad < 1 {
        return invalid("flow window padding must be at least one site");
    }
    let d = rho0.delta();
    let base = rho0.grid().trimmed();
    let (lo, hi) = (base.lo() - policy.pad, base.hi() + policy.pad);
    let mut rho = base.on_window(lo, hi)?;
    let e0 = energy(spec, &rho)?;
    let m0 = moments(&rho);
    let mut samples: Vec<f64> = policy.samples.iter().copied().filter(|&s| s > 0.0 && s < t_final).collect();
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    samples.push(t_final);

    let mut traj = Trajectory {
        states: vec![FlowState { rho: rho0.clone(), t: 0.0, energy: e0 }],
        monitor: vec![monitor_row(0.0, &rho, e0)],
        steps: 0,
        leaked_mass: 0.0,
        max_mass_drift: 0.0,
        max_center_drift: 0.0,
        max_energy_increase: 0.0,
        clipped: 0.0,
    };
    if t_final == 0.0 {
        return Ok(traj);
    }
    let mass_tol = rho0.mass_tol() + 1e-9;
    let center_tol = rho0.center_tol();
    let mut t = 0.0;
    let mut e_prev = e0;
    let stage = |g: &GridFunction| -> Result<(Vec<f64>, f64)> {
        let r = rhs(spec, g)?;
        let leak = d * (r.get(lo - 1) + r.get(hi + 1));
        Ok((r.on_window(lo, hi)?.into_values(), leak))
    };
    for target in samples {
        while t < target {
            let diff = sup_diffusivity(spec, &rho)?;
            let cap = if diff > 0.0 { policy.cfl * d * d / (2.0 * diff) } else { f64::INFINITY };
            let mut dt = (target - t).min(cap);
            // Land on the sample instead of leaving a sliver.
            if target - (t + dt) <= 1e-12 * target.max(1.0) {
                dt = target - t;
            }
            let y = rho.values().to_vec();
            let shifted = |k: &[f64], h: f64| -> Result<GridFunction> {
                GridFunction::new(d, lo, y.iter().zip(k).map(|(a, b)| a + h * b).collect())
            };
            let (k1, l1) = stage(&rho)?;
            let (k2, l2) = stage(&shifted(&k1, 0.5 * dt)?)?;
            let (k3, l3) = stage(&shifted(&k2, 0.5 * dt)?)?;
            let (k4, l4) = stage(&shifted(&k3, dt)?)?;
            let next: Vec<f64> = (0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
            traj.leaked_mass += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
            t = if dt == target - t { target } else { t + dt };
            rho = GridFunction::new(d, lo, next)?;
            traj.steps += 1;
            if let Some((site, value)) = rho.iter().find(|&(_, v)| !(v >= -policy.neg_tol)) {
                return Err(Error::Positivity { t, site, value });
            }
            let e = energy(spec, &rho)?;
            let row = monitor_row(t, &rho, e);
            traj.max_mass_drift = traj.max_mass_drift.max((row.mass - m0.mass).abs());
            traj.max_center_drift = traj.max_center_drift.max((row.center - m0.m1).abs());
            traj.max_energy_increase = traj.max_energy_increase.max(e - e_prev);
            e_prev = e;
            traj.monitor.push(row);
        }
        traj.clipped = traj.clipped.min(rho.min_value());
        let snapshot = rho.map(|v| v.max(0.0));
        let density = ProbabilityDensity::new(snapshot, mass_tol, center_tol)?;
        traj.states.push(FlowState { rho: density, t, energy: e_prev });
    }
    Ok(traj)
}
