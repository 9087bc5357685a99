//! Time-discrete curves `(ρ, w)` obeying `∂ₛρ = Δw`, their action, and
//! regularity diagnostics.
//!
//! Densities live on the nodes `s_j = j/S`, fluxes on the midpoints
//! `s_{j+½}`. The action of interval `j` is evaluated with the midpoint density
//! `(ρ^j + ρ^{j+1})/2` or with the average of the endpoint integrands.

use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::grid::{self, laplacian, moments, GridFunction, ProbabilityDensity};

/// Nonnegative extended real: a finite value or `+∞`; `+∞` absorbs every sum.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    /// Multiplication by a nonnegative scalar; `0·∞ = 0`.
    pub fn scale(self, c: f64) -> ExtReal {
        debug_assert!(c >= 0.0);
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(c * v),
            ExtReal::PosInf if c == 0.0 => ExtReal::ZERO,
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }

    /// Finite value or `f64::INFINITY`, for reporting only.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

/// `p²/r` for `r > 0`, `0` at `(0, 0)`, `+∞` at `(p ≠ 0, 0)`.
pub fn frc(p: f64, r: f64) -> Result<ExtReal> {
    if r < 0.0 || r.is_nan() || p.is_nan() {
        return invalid(format!("frc needs a nonnegative second argument, got ({p}, {r})"));
    }
    Ok(frc_ext(p, r))
}

/// [`frc`] extended by `+∞` for negative `r`, its lower semicontinuous hull.
pub(crate) fn frc_ext(p: f64, r: f64) -> ExtReal {
    if r > 0.0 {
        ExtReal::Finite(p * p / r)
    } else if p == 0.0 && r == 0.0 {
        ExtReal::ZERO
    } else {
        ExtReal::PosInf
    }
}

/// Time quadrature rule for the action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionRule {
    Midpoint,
    EndpointAverage,
}

/// Density frames on `j/S`, flux frames on midpoints, all on one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    delta: f64,
    rho: Vec<ProbabilityDensity>,
    w: Vec<GridFunction>,
    constraint_tol: f64,
}

impl DiscreteCurve {
    /// Validates shapes, the lattice and the discrete continuity equation.
    pub fn new(rho: Vec<ProbabilityDensity>, w: Vec<GridFunction>, constraint_tol: f64) -> Result<Self> {
        if rho.len() < 2 || w.len() + 1 != rho.len() {
            return invalid(format!("need S+1 density frames and S flux frames, got {} and {}", rho.len(), w.len()));
        }
        let delta = rho[0].delta();
        for r in &rho {
            r.grid().same_delta(rho[0].grid())?;
            let m = r.moments();
            if m.m1.abs() > delta {
                return Err(Error::InvalidDensity(format!("frame first moment {:e} exceeds δ", m.m1)));
            }
        }
        for f in &w {
            f.same_delta(rho[0].grid())?;
        }
        let c = Self { delta, rho, w, constraint_tol };
        let residual = c.constraint_residual();
        if !(residual <= constraint_tol) {
            return Err(Error::Constraint { residual, tol: constraint_tol });
        }
        Ok(c)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of time steps `S`.
    pub fn steps(&self) -> usize {
        self.w.len()
    }

    pub fn rho(&self) -> &[ProbabilityDensity] {
        &self.rho
    }

    pub fn w(&self) -> &[GridFunction] {
        &self.w
    }

    pub fn constraint_tol(&self) -> f64 {
        self.constraint_tol
    }

    /// `max_{j,κ} |S(ρ^{j+1}_κ − ρ^j_κ) − (Δw^{j+½})_κ|`.
    pub fn constraint_residual(&self) -> f64 {
        let s = self.steps() as f64;
        let mut worst: f64 = 0.0;
        for j in 0..self.steps() {
            let a = self.rho[j].grid();
            let b = self.rho[j + 1].grid();
            let lw = laplacian(&self.w[j]);
            let lo = a.lo().min(b.lo()).min(lw.lo());
            let hi = a.hi().max(b.hi()).max(lw.hi());
            for k in lo..=hi {
                let r = s * (b.get(k) - a.get(k)) - lw.get(k);
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    pub fn action(&self, rule: ActionRule) -> ExtReal {
        let d = self.delta;
        let s = self.steps() as f64;
        let mut total = ExtReal::ZERO;
        for j in 0..self.steps() {
            let a = self.rho[j].grid();
            let b = self.rho[j + 1].grid();
            let w = &self.w[j];
            let lo = a.lo().min(b.lo()).min(w.lo());
            let hi = a.hi().max(b.hi()).max(w.hi());
            let interval: ExtReal = (lo..=hi)
                .map(|k| {
                    let p = w.get(k);
                    match rule {
                        ActionRule::Midpoint => frc_ext(p, 0.5 * (a.get(k) + b.get(k))),
                        ActionRule::EndpointAverage => (frc_ext(p, a.get(k)) + frc_ext(p, b.get(k))).scale(0.5),
                    }
                })
                .sum();
            total = total + interval.scale(d / s);
        }
        total
    }

    /// Checks `|M₂(ρ^i) − M₂(ρ^k)| ≤ 2√A |s_i − s_k|^{1/2}` over all frame pairs.
    pub fn moment_modulus_check(&self) -> MomentModulusReport {
        let action = self.action(ActionRule::Midpoint);
        let m2: Vec<f64> = self.rho.iter().map(|r| r.moments().m2).collect();
        let s = self.steps() as f64;
        let mut rep = MomentModulusReport { action, worst_slack: f64::INFINITY, worst_pair: (0, 0) };
        let Some(a) = action.finite() else {
            return rep;
        };
        for i in 0..m2.len() {
            for k in i + 1..m2.len() {
                let ds = (k - i) as f64 / s;
                let slack = 2.0 * a.sqrt() * ds.sqrt() - (m2[k] - m2[i]).abs();
                if slack < rep.worst_slack {
                    rep.worst_slack = slack;
                    rep.worst_pair = (i, k);
                }
            }
        }
        rep
    }

    /// Space convolution with the normalized exponential kernel
    /// `N exp(−|κδ|/ε)`, then a discrete smooth bump in time of half width `εS`
    /// frames. The curve is extended constantly in ρ and by `w = 0` beyond the
    /// ends, so the continuity equation is preserved and, by joint convexity,
    /// the action cannot increase.
    pub fn regularize(&self, eps: f64) -> Result<DiscreteCurve> {
        if !(eps > 0.0 && eps.is_finite()) {
            return invalid(format!("regularization width must be positive, got {eps}"));
        }
        let d = self.delta;
        let q = (-d / eps).exp();
        let norm = 1.0 / (2.0 / (1.0 - q) - 1.0);
        let spread = (41.5 * eps / d).ceil() as i64;
        // one common window keeps the neighbor-ratio bound valid at every site
        let trimmed: Vec<GridFunction> = self.rho.iter().map(|r| r.grid().trimmed()).collect();
        let wlo = trimmed.iter().map(|t| t.lo()).min().unwrap_or(0) - spread;
        let whi = trimmed.iter().map(|t| t.hi()).max().unwrap_or(0) + spread;
        let smooth = |f: &GridFunction| -> GridFunction {
            let t = f.trimmed();
            GridFunction::from_fn(d, wlo.min(t.lo() - spread), whi.max(t.hi() + spread), |k| {
                let mut acc = 0.0;
                for (l, v) in t.iter() {
                    acc += norm * (-((k - l).abs() as f64) * d / eps).exp() * v;
                }
                acc
            })
            .expect("non-empty window")
        };
        let rho_s: Vec<GridFunction> = self.rho.iter().map(|r| smooth(r.grid())).collect();
        let w_s: Vec<GridFunction> = self.w.iter().map(smooth).collect();

        let n = self.steps();
        let half = eps * n as f64;
        let weights = bump_weights(half);
        let reach = (weights.len() / 2) as i64;
        let rho_at = |j: i64| &rho_s[j.clamp(0, n as i64) as usize];
        let zero = GridFunction::point(d, 0, 0.0)?;
        let w_at = |j: i64| if j < 0 || j >= n as i64 { &zero } else { &w_s[j as usize] };
        let blend = |items: Vec<(&GridFunction, f64)>| -> GridFunction {
            let lo = items.iter().map(|(g, _)| g.lo()).min().unwrap_or(0);
            let hi = items.iter().map(|(g, _)| g.hi()).max().unwrap_or(0);
            GridFunction::from_fn(d, lo, hi, |k| items.iter().map(|(g, c)| c * g.get(k)).sum()).expect("window")
        };
        let mut rho_out = Vec::with_capacity(n + 1);
        for j in 0..=n as i64 {
            let items = (-reach..=reach).map(|i| (rho_at(j + i), weights[(i + reach) as usize])).collect();
            let mass_tol = self.rho.iter().map(|r| r.mass_tol()).fold(0.0, f64::max) + 1e-12;
            rho_out.push(ProbabilityDensity::new(blend(items), mass_tol, d)?);
        }
        let mut w_out = Vec::with_capacity(n);
        for j in 0..n as i64 {
            let items = (-reach..=reach).map(|i| (w_at(j + i), weights[(i + reach) as usize])).collect();
            w_out.push(blend(items));
        }
        DiscreteCurve::new(rho_out, w_out, self.constraint_tol)
    }

    /// Writes `manifest.txt` and one CSV per frame into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mass_tol = self.rho.iter().map(|r| r.mass_tol()).fold(0.0, f64::max);
        let manifest = format!(
            "delta={:?}\nsteps={}\nconstraint_tol={:?}\nmass_tol={:?}\n",
            self.delta,
            self.steps(),
            self.constraint_tol,
            mass_tol
        );
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        for (j, r) in self.rho.iter().enumerate() {
            grid::write_csv_file(r.grid(), dir.join(format!("rho_{j:04}.csv")))?;
        }
        for (j, w) in self.w.iter().enumerate() {
            grid::write_csv_file(w, dir.join(format!("w_{j:04}.csv")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let mut steps = None;
        let mut tol = None;
        let mut mass_tol = None;
        for (n, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or(Error::Parse { line: n + 1, msg: format!("expected key=value, found `{t}`") })?;
            let bad = |_| Error::Parse { line: n + 1, msg: format!("bad value for `{k}`") };
            match k.trim() {
                "delta" => {
                    v.trim().parse::<f64>().map_err(bad)?;
                }
                "steps" => steps = Some(v.trim().parse::<usize>().map_err(|_| Error::Parse { line: n + 1, msg: "bad steps".into() })?),
                "constraint_tol" => tol = Some(v.trim().parse::<f64>().map_err(bad)?),
                "mass_tol" => mass_tol = Some(v.trim().parse::<f64>().map_err(bad)?),
                other => return Err(Error::Parse { line: n + 1, msg: format!("unknown manifest key `{other}`") }),
            }
        }
        let steps = steps.ok_or(Error::Parse { line: 0, msg: "manifest lacks `steps`".into() })?;
        let tol = tol.ok_or(Error::Parse { line: 0, msg: "manifest lacks `constraint_tol`".into() })?;
        let mass_tol = mass_tol.unwrap_or(grid::DEFAULT_MASS_TOL);
        let mut rho = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let g = grid::read_csv_file(dir.join(format!("rho_{j:04}.csv")))?;
            let d = g.delta();
            rho.push(ProbabilityDensity::new(g, mass_tol, d)?);
        }
        let mut w = Vec::with_capacity(steps);
        for j in 0..steps {
            w.push(grid::read_csv_file(dir.join(format!("w_{j:04}.csv")))?);
        }
        DiscreteCurve::new(rho, w, tol)
    }
}

/// Normalized weights of `exp(−1/(1−u²))` at `u = i/h`, `|i| < h`.
fn bump_weights(h: f64) -> Vec<f64> {
    if h <= 1.0 {
        return vec![1.0];
    }
    let reach = h.ceil() as i64 - 1;
    let raw: Vec<f64> = (-reach..=reach)
        .map(|i| {
            let u = i as f64 / h;
            (-1.0 / (1.0 - u * u)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Outcome of [`DiscreteCurve::moment_modulus_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentModulusReport {
    pub action: ExtReal,
    /// Smallest `2√A|Δs|^{1/2} − |ΔM₂|` over frame pairs; `+∞` for infinite action.
    pub worst_slack: f64,
    pub worst_pair: (usize, usize),
}

/// Neighbor-ratio constant and positivity floor of a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub c: f64,
    pub positivity_floor: f64,
    pub excluded: usize,
}

/// Default floor below which sites are left out of the ratio scan.
pub const DEFAULT_FLOOR: f64 = 1e-14;

pub fn regularity_report(curve: &DiscreteCurve, floor: f64) -> RegularityReport {
    let mut rep = RegularityReport { c: 0.0, positivity_floor: f64::INFINITY, excluded: 0 };
    for r in curve.rho() {
        let g = r.grid();
        for (k, v) in g.iter() {
            rep.positivity_floor = rep.positivity_floor.min(v);
            if v <= floor {
                rep.excluded += 1;
                continue;
            }
            let ratio = g.get(k - 1).max(g.get(k + 1)) / v;
            rep.c = rep.c.max(ratio);
        }
    }
    rep
}

/// `ρ^j = G^{αs_j} ∗ ρ₀`, `w^{j+½} = α(ρ^j + ρ^{j+1})/2`: a heat curve whose
/// midpoint action is `α²` and whose continuity residual is `O(S⁻²)`.
pub fn heat_curve(rho0: &ProbabilityDensity, alpha: f64, steps: usize, constraint_tol: f64) -> Result<DiscreteCurve> {
    if steps == 0 {
        return invalid("a curve needs at least one time step");
    }
    let rho: Vec<ProbabilityDensity> = (0..=steps)
        .map(|j| crate::kernels::heat_semigroup(rho0, alpha * j as f64 / steps as f64))
        .collect::<Result<_>>()?;
    let w = (0..steps)
        .map(|j| rho[j].grid().lincomb(0.5 * alpha, rho[j + 1].grid(), 0.5 * alpha))
        .collect::<Result<_>>()?;
    DiscreteCurve::new(rho, w, constraint_tol)
}

/// Mass and first moment of every density frame.
pub fn frame_moments(curve: &DiscreteCurve) -> Vec<(f64, f64)> {
    curve.rho().iter().map(|r| {
        let m = moments(r.grid());
        (m.mass, m.m1)
    }).collect()
}
