//! Contraction and evolution-variational-inequality experiments: flow two
//! densities, measure distances with the geodesic solver and compare with
//! the bounds implied by the computed modulus `Λ`.
//!
//! A row passes when its slack has the right sign, is inconclusive when the
//! violation is within the combined tolerance (solver gap plus integrator
//! error), and fails otherwise.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::flows::{self, FlowKind, FlowSpec, StepPolicy};
use crate::geodesic::{self, SolveOptions};
use crate::grid::{GridFunction, ProbabilityDensity};
use crate::kernels::heat_kernel_cached;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    /// `ok` is the sign test, `within` the tolerance test.
    fn classify(ok: bool, within: bool) -> Self {
        if ok {
            Status::Pass
        } else if within {
            Status::Inconclusive
        } else {
            Status::Fail
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Inconclusive => "inconclusive",
            Status::Fail => "fail",
        })
    }
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub solve: SolveOptions,
    pub step: StepPolicy,
    /// Time steps of every geodesic solve.
    pub steps: usize,
    /// Absolute allowance for time integration error.
    pub integrator_tol: f64,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), step: StepPolicy::default(), steps: 16, integrator_tol: 1e-6 }
    }
}

/// Two discrete heat kernels `G^{δ,τ}` at the sites nearest `left < 0 < right`,
/// weighted so that the first moment vanishes exactly on the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpProfile {
    pub left: f64,
    pub right: f64,
    pub tau: f64,
}

impl BumpProfile {
    pub fn sample(&self, delta: f64) -> Result<ProbabilityDensity> {
        let kl = (self.left / delta).round() as i64;
        let kr = (self.right / delta).round() as i64;
        if !(kl < 0 && kr > 0) {
            return invalid(format!("bump sites {kl}, {kr} must straddle the origin at δ = {delta}"));
        }
        if !(self.tau > 0.0) {
            return invalid(format!("bump width must be positive, got {}", self.tau));
        }
        let k = heat_kernel_cached(delta, self.tau)?;
        let g = k.grid();
        let shifted = |s: i64| GridFunction::new(delta, g.lo() + s, g.values().to_vec());
        let p = kr as f64 / (kr - kl) as f64;
        let mix = shifted(kl)?.lincomb(p, &shifted(kr)?, 1.0 - p)?;
        let mix = mix.scale(1.0 / mix.integral());
        ProbabilityDensity::new(mix, 1e-12, 1e-12)
    }
}

/// Pairs used by the acceptance runs: a symmetric and an asymmetric mixture.
pub fn two_bump_corpus() -> Vec<(BumpProfile, BumpProfile)> {
    vec![
        (BumpProfile { left: -0.5, right: 0.5, tau: 0.25 }, BumpProfile { left: -1.0, right: 0.5, tau: 0.25 }),
        (BumpProfile { left: -0.5, right: 1.0, tau: 0.3 }, BumpProfile { left: -1.0, right: 1.0, tau: 0.2 }),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub delta: f64,
    pub t: f64,
    pub d_t: f64,
    /// `e^{Λt}·D₀`.
    pub bound: f64,
    /// `bound − D_t`.
    pub slack: f64,
    pub combined_tol: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTable {
    pub lambda: f64,
    pub d0: f64,
    pub rows: Vec<ContractionRow>,
}

fn lambda_for(spec: &FlowSpec, a: &ProbabilityDensity, b: &ProbabilityDensity, pad: i64) -> Result<f64> {
    let (ga, gb) = (a.grid().trimmed(), b.grid().trimmed());
    let window = (ga.lo().min(gb.lo()) - pad, ga.hi().max(gb.hi()) + pad);
    match spec.kind() {
        // The kernel is evaluated at differences of sites.
        FlowKind::Interaction { .. } => {
            let span = window.1 - window.0;
            flows::lambda_bound(spec, (-span, span))
        }
        _ => flows::lambda_bound(spec, window),
    }
}

fn flowed(spec: &FlowSpec, rho: &ProbabilityDensity, t: f64, policy: &StepPolicy) -> Result<(ProbabilityDensity, f64)> {
    let traj = flows::evolve(spec, rho, t, policy)?;
    let s = traj.final_state();
    Ok((s.rho.clone(), s.energy))
}

fn solve_distance(a: &ProbabilityDensity, b: &ProbabilityDensity, opts: &HarnessOptions) -> Result<f64> {
    geodesic::distance(a, b, opts.steps, &opts.solve)
}

/// One row per time. Every `(t)` cell flows both densities from time zero,
/// so cells are independent and run in parallel; rows keep the input order.
pub fn contraction_table(
    spec: &FlowSpec,
    rho0: &ProbabilityDensity,
    eta0: &ProbabilityDensity,
    times: &[f64],
    opts: &HarnessOptions,
) -> Result<ContractionTable> {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return invalid(format!("times must be finite and nonnegative, got {t}"));
    }
    let lambda = lambda_for(spec, rho0, eta0, opts.step.pad)?;
    let d0 = solve_distance(rho0, eta0, opts)?;
    let delta = rho0.delta();
    let rows = times
        .par_iter()
        .map(|&t| -> Result<ContractionRow> {
            let d_t = if t == 0.0 {
                d0
            } else {
                let (a, _) = flowed(spec, rho0, t, &opts.step)?;
                let (b, _) = flowed(spec, eta0, t, &opts.step)?;
                solve_distance(&a, &b, opts)?
            };
            let bound = (lambda * t).exp() * d0;
            let slack = bound - d_t;
            let combined_tol = opts.solve.rel_gap * d0 + opts.integrator_tol;
            let status = Status::classify(slack >= 0.0, slack >= -combined_tol);
            Ok(ContractionRow { delta, t, d_t, bound, slack, combined_tol, status })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContractionTable { lambda, d0, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EviReport {
    pub delta: f64,
    pub t: f64,
    pub lambda: f64,
    /// `𝔻(Sᵗρ̄, η̄)`.
    pub d_t: f64,
    /// `𝔻(ρ̄, η̄)`.
    pub d_0: f64,
    pub energy_eta: f64,
    pub energy_flowed: f64,
    /// `(e^{λt}/2)𝔻(Sᵗρ̄,η̄)² − ½𝔻(ρ̄,η̄)² − ((e^{λt}−1)/λ)[ℰ(η̄) − ℰ(Sᵗρ̄)]`
    /// with `λ = −Λ`; must not exceed `combined_tol`.
    pub slack: f64,
    pub combined_tol: f64,
    pub status: Status,
}

/// `(e^{λt} − 1)/λ`, equal to `t` at `λ = 0`.
fn evi_weight(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        (lambda * t).exp_m1() / lambda
    }
}

/// Integrated evolution variational inequality.
pub fn evi_check(
    spec: &FlowSpec,
    rho_bar: &ProbabilityDensity,
    eta_bar: &ProbabilityDensity,
    t: f64,
    opts: &HarnessOptions,
) -> Result<EviReport> {
    if !(t >= 0.0 && t.is_finite()) {
        return invalid(format!("time must be finite and nonnegative, got {t}"));
    }
    let big_lambda = lambda_for(spec, rho_bar, eta_bar, opts.step.pad)?;
    let lambda = -big_lambda;
    let d_0 = solve_distance(rho_bar, eta_bar, opts)?;
    let energy_eta = flows::energy(spec, eta_bar.grid())?;
    let (d_t, energy_flowed) = if t == 0.0 {
        (d_0, flows::energy(spec, rho_bar.grid())?)
    } else {
        let (a, e) = flowed(spec, rho_bar, t, &opts.step)?;
        (solve_distance(&a, eta_bar, opts)?, e)
    };
    let growth = (lambda * t).exp();
    let slack = 0.5 * growth * d_t * d_t - 0.5 * d_0 * d_0 - evi_weight(lambda, t) * (energy_eta - energy_flowed);
    let combined_tol = opts.solve.rel_gap * 0.5 * (growth * d_t * d_t + d_0 * d_0) + opts.integrator_tol;
    let status = Status::classify(slack <= 0.0, slack <= combined_tol);
    Ok(EviReport { delta: rho_bar.delta(), t, lambda: big_lambda, d_t, d_0, energy_eta, energy_flowed, slack, combined_tol, status })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// `Λ` per lattice spacing, in input order.
    pub lambdas: Vec<f64>,
    pub tables: Vec<ContractionTable>,
    /// Largest `D_t/(e^{Λt}D₀)` over all rows.
    pub max_factor: f64,
    /// True when every `Λ` equals the first one.
    pub uniform_lambda: bool,
}

impl SweepReport {
    pub fn rows(&self) -> impl Iterator<Item = &ContractionRow> {
        self.tables.iter().flat_map(|t| t.rows.iter())
    }

    pub fn worst_status(&self) -> Status {
        self.rows().map(|r| r.status).max().unwrap_or(Status::Pass)
    }
}

/// [`contraction_table`] at each spacing with the profile pair sampled there.
/// `family` builds the flow for a given `δ`.
pub fn delta_uniformity_sweep(
    family: impl Fn(f64) -> Result<FlowSpec> + Sync,
    profile: &(BumpProfile, BumpProfile),
    deltas: &[f64],
    times: &[f64],
    opts: &HarnessOptions,
) -> Result<SweepReport> {
    if deltas.is_empty() {
        return invalid("a sweep needs at least one lattice spacing");
    }
    let tables = deltas
        .par_iter()
        .map(|&d| {
            let spec = family(d)?;
            contraction_table(&spec, &profile.0.sample(d)?, &profile.1.sample(d)?, times, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<f64> = tables.iter().map(|t| t.lambda).collect();
    let uniform_lambda = lambdas.iter().all(|&l| l == lambdas[0]);
    let max_factor = tables
        .iter()
        .flat_map(|t| t.rows.iter().map(move |r| if r.bound > 0.0 { r.d_t / r.bound } else { 0.0 }))
        .fold(0.0, f64::max);
    Ok(SweepReport { lambdas, tables, max_factor, uniform_lambda })
}

pub fn write_contraction_csv<'a>(rows: impl IntoIterator<Item = &'a ContractionRow>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "delta,t,D_t,bound,slack,combined_tol,status")?;
    for r in rows {
        writeln!(out, "{:?},{:?},{:?},{:?},{:?},{:?},{}", r.delta, r.t, r.d_t, r.bound, r.slack, r.combined_tol, r.status)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_evi_csv<'a>(rows: impl IntoIterator<Item = &'a EviReport>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "delta,t,lambda,D_t,D_0,energy_eta,energy_flowed,slack,combined_tol,status")?;
    for r in rows {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.delta, r.t, r.lambda, r.d_t, r.d_0, r.energy_eta, r.energy_flowed, r.slack, r.combined_tol, r.status
        )?;
    }
    out.flush()?;
    Ok(())
}
