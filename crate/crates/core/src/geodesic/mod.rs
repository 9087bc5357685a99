//! Fixed-endpoint action minimization and its dual certificate.
//!
//! The problem is posed on one window covering both endpoint supports plus a
//! few padding sites. A primal–dual splitting provides a warm start and a
//! barrier Newton method drives the duality gap down; every reported gap is
//! measured against a lower bound that holds for arbitrary interval
//! potentials `ψ`, so it does not rely on convergence.

mod banded;
mod interior;
mod problem;
mod prox;
mod splitting;

use std::io::Write;
use std::path::Path;

pub use prox::prox_perspective;

use crate::curves::{ActionRule, DiscreteCurve};
use crate::error::{invalid, Error, Result};
use crate::grid::{self, GridFunction, ProbabilityDensity};
use crate::poisson::inverse_laplacian_rel;
use problem::Problem;

/// Solver family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Splitting warm start followed by the Newton polish.
    Hybrid,
    /// Splitting only; rarely reaches tight gaps.
    Splitting,
    /// Newton polish from the interpolated initializer.
    InteriorPoint,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stop once `pd_gap ≤ rel_gap·action + abs_gap`.
    pub rel_gap: f64,
    pub abs_gap: f64,
    /// Newton iteration cap (splitting-only runs use `splitting_iters`).
    pub max_iter: usize,
    pub splitting_iters: usize,
    pub method: Method,
    /// Zero sites added on each side of the endpoint supports.
    pub pad: i64,
    pub constraint_tol: f64,
    /// Splitting iterations between gap log rows.
    pub log_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rel_gap: 1e-5,
            abs_gap: 1e-14,
            max_iter: 300,
            splitting_iters: 200,
            method: Method::Hybrid,
            pad: 2,
            constraint_tol: 1e-8,
            log_every: 50,
        }
    }
}

/// One row of the gap log; `dual` is the certified lower bound on the action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapLogRow {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub curve: DiscreteCurve,
    pub action_value: f64,
    /// Node potentials `φ⁰, …, φ^S` on the solver window.
    pub dual_phi: Vec<GridFunction>,
    /// Interval potentials `ψ^{j+½}`; the flux optimality relation is `w = mΔψ`.
    pub dual_psi: Vec<GridFunction>,
    /// Certified lower bound on the minimal action.
    pub dual_value: f64,
    /// `action_value − dual_value`.
    pub pd_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<GapLogRow>,
    problem: Problem,
}

impl GeodesicSolution {
    pub fn distance(&self) -> f64 {
        self.action_value.max(0.0).sqrt()
    }

    /// Writes the curve, the dual frames, `gap_log.csv` and `summary.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.curve.save(dir)?;
        for (j, f) in self.dual_phi.iter().enumerate() {
            grid::write_csv_file(f, dir.join(format!("phi_{j:04}.csv")))?;
        }
        write_gap_log(&self.log, dir.join("gap_log.csv"))?;
        let summary = format!(
            "action={:?}\ndistance={:?}\ndual={:?}\npd_gap={:?}\niterations={}\nconverged={}\n",
            self.action_value,
            self.distance(),
            self.dual_value,
            self.pd_gap,
            self.iterations,
            self.converged
        );
        std::fs::write(dir.join("summary.txt"), summary)?;
        Ok(())
    }
}

pub fn write_gap_log(rows: &[GapLogRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iter,primal,dual,gap")?;
    for r in rows {
        writeln!(out, "{},{:?},{:?},{:?}", r.iter, r.primal, r.dual, r.gap)?;
    }
    out.flush()?;
    Ok(())
}

fn build_problem(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, steps: usize, pad: i64) -> Result<Problem> {
    rho0.grid().same_delta(rho1.grid())?;
    if steps < 2 {
        return invalid(format!("need at least 2 time steps, got {steps}"));
    }
    if pad < 1 {
        return invalid(format!("window padding must be at least 1, got {pad}"));
    }
    let (a, b) = (rho0.grid().trimmed(), rho1.grid().trimmed());
    let lo = a.lo().min(b.lo()) - pad;
    let hi = a.hi().max(b.hi()) + pad;
    let n = (hi - lo + 1) as usize;
    let sample = |f: &ProbabilityDensity| (0..n).map(|i| f.get(lo + i as i64)).collect::<Vec<f64>>();
    Ok(Problem::new(rho0.delta(), lo, steps, sample(rho0), sample(rho1)))
}

/// `(ρ, w)` start: time interpolation of the data with a positive floor and
/// the time-constant flux `Δ⁻¹(ρ¹ − ρ⁰)`. The floor breaks the continuity
/// constraint by a uniform amount that the first full Newton step removes.
fn initial_point(p: &Problem) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, s) = (p.n, p.s);
    let diff = GridFunction::new(p.delta, p.lo, p.rho1.iter().zip(&p.rho0).map(|(a, b)| a - b).collect())?;
    let u = inverse_laplacian_rel(&diff, 1.0).map_err(|e| {
        Error::Precondition(format!("no finite-action initializer between the endpoints: {e}"))
    })?;
    let mut rho = p.interpolated_rho();
    let top = p.rho0.iter().chain(&p.rho1).fold(0.0f64, |a, &b| a.max(b));
    let floor = 1e-4 * top;
    for v in &mut rho[n..s * n] {
        *v += floor;
    }
    let mut w = vec![0.0; s * n];
    for j in 0..s {
        for i in 1..n - 1 {
            w[j * n + i] = u.get(p.lo + i as i64);
        }
    }
    Ok((rho, w))
}

/// Minimizes the midpoint action between `rho0` and `rho1` over `steps`
/// intervals. A run that hits the iteration cap returns its best iterate with
/// `converged = false`.
pub fn solve(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, steps: usize, opts: &SolveOptions) -> Result<GeodesicSolution> {
    if !(opts.rel_gap >= 0.0 && opts.abs_gap >= 0.0) {
        return invalid("gap tolerances must be nonnegative");
    }
    let p = build_problem(rho0, rho1, steps, opts.pad)?;
    let (n, s) = (p.n, p.s);
    if p.rho0 == p.rho1 {
        let rho = p.interpolated_rho();
        return finish(&p, rho0, rho1, rho, vec![0.0; s * n], vec![0.0; s * n], 0, true, Vec::new(), opts);
    }
    let (rho, w) = initial_point(&p)?;
    let mut log = Vec::new();
    let ipm = interior::Params {
        max_iter: opts.max_iter,
        rel_gap: opts.rel_gap,
        abs_gap: opts.abs_gap,
        constraint_tol: opts.constraint_tol,
    };
    let split = splitting::Params {
        iters: opts.splitting_iters,
        log_every: opts.log_every.max(1),
        rel_gap: opts.rel_gap,
        abs_gap: opts.abs_gap,
    };
    match opts.method {
        Method::InteriorPoint => {
            let out = interior::polish(&p, rho, w, &ipm, &mut log, 0);
            finish(&p, rho0, rho1, out.rho, out.w, out.psi, out.iterations, out.converged, log, opts)
        }
        Method::Splitting => {
            let out = splitting::run(&p, p.interpolated_rho(), w, &split, &mut log);
            finish(&p, rho0, rho1, out.rho, out.w, out.psi, out.iterations, false, log, opts)
        }
        Method::Hybrid => {
            let warm = splitting::run(&p, p.interpolated_rho(), w, &split, &mut log);
            let floor = 1e-4 * p.rho0.iter().chain(&p.rho1).fold(0.0f64, |a, &b| a.max(b));
            let mut r = warm.rho;
            for v in &mut r[n..s * n] {
                *v = v.max(0.0) + floor;
            }
            let out = interior::polish(&p, r, warm.w, &ipm, &mut log, warm.iterations);
            finish(&p, rho0, rho1, out.rho, out.w, out.psi, warm.iterations + out.iterations, out.converged, log, opts)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &Problem,
    rho0: &ProbabilityDensity,
    rho1: &ProbabilityDensity,
    rho: Vec<f64>,
    w: Vec<f64>,
    psi: Vec<f64>,
    iterations: usize,
    converged: bool,
    log: Vec<GapLogRow>,
    opts: &SolveOptions,
) -> Result<GeodesicSolution> {
    let (n, s, d) = (p.n, p.s, p.delta);
    let frame = |v: &[f64]| GridFunction::new(d, p.lo, v.to_vec());
    let mut frames = Vec::with_capacity(s + 1);
    frames.push(rho0.clone());
    for j in 1..s {
        let g = frame(&rho[j * n..(j + 1) * n])?;
        let dev = (g.integral() - 1.0).abs();
        let tol = rho0.mass_tol().max(rho1.mass_tol()).max(2.0 * dev);
        frames.push(ProbabilityDensity::new(g, tol, d)?);
    }
    frames.push(rho1.clone());
    let fluxes: Vec<GridFunction> = (0..s).map(|j| frame(&w[j * n..(j + 1) * n])).collect::<Result<_>>()?;
    let residual = p.full_residual(&rho, &w);
    let feasible = residual <= opts.constraint_tol;
    let tol = if feasible { opts.constraint_tol } else { residual * (1.0 + 1e-12) };
    let curve = DiscreteCurve::new(frames, fluxes, tol)?;
    let action_value = curve.action(ActionRule::Midpoint).to_f64();
    let dual_value = p.dual_bound(&psi);
    let (first, last) = p.end_potentials(&psi);
    let mut dual_phi = Vec::with_capacity(s + 1);
    dual_phi.push(frame(&first)?);
    for j in 1..s {
        let avg: Vec<f64> = (0..n).map(|i| 0.5 * (psi[(j - 1) * n + i] + psi[j * n + i])).collect();
        dual_phi.push(frame(&avg)?);
    }
    dual_phi.push(frame(&last)?);
    let dual_psi = (0..s).map(|j| frame(&psi[j * n..(j + 1) * n])).collect::<Result<_>>()?;
    let pd_gap = action_value - dual_value;
    let converged = converged && feasible && pd_gap <= opts.rel_gap * action_value.abs() + opts.abs_gap;
    Ok(GeodesicSolution {
        curve,
        action_value,
        dual_phi,
        dual_psi,
        dual_value,
        pd_gap,
        iterations,
        converged,
        log,
        problem: p.clone(),
    })
}

/// `√(action)` of [`solve`].
pub fn distance(rho0: &ProbabilityDensity, rho1: &ProbabilityDensity, steps: usize, opts: &SolveOptions) -> Result<f64> {
    Ok(solve(rho0, rho1, steps, opts)?.distance())
}

/// Numerical dual evidence extracted from a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    /// Largest node residual `S(ψ^{j+½} − ψ^{j−½}) + ¼[(Δψ^{j−½})² + (Δψ^{j+½})²]`;
    /// the discrete Hamilton–Jacobi inequality asks for `≤ 0`.
    pub hjb_max: f64,
    /// Largest `|residual|` where the density is at least `1e−6` of its frame
    /// maximum.
    pub support_max_abs: f64,
    /// `2δΣ(φ^S ρ¹ − φ⁰ρ⁰)`, the endpoint part of the dual value.
    pub endpoint_value: f64,
    /// Certified lower bound (endpoint part plus the HJB violation penalty).
    pub dual_value: f64,
    pub action: f64,
    pub pd_gap: f64,
    /// `max |w − mΔψ| / max |w|` over interior sites.
    pub optimality_residual: f64,
}

impl DualReport {
    /// Gap within `rel·action + abs`.
    pub fn certifies(&self, rel: f64, abs: f64) -> bool {
        self.pd_gap >= -abs - 1e-12 * self.action.abs() && self.pd_gap <= rel * self.action.abs() + abs
    }
}

pub fn dual_certificate(sol: &GeodesicSolution) -> DualReport {
    let p = &sol.problem;
    let (n, s) = (p.n, p.s);
    let psi: Vec<f64> = sol.dual_psi.iter().flat_map(|f| f.values().to_vec()).collect();
    let h = p.hjb(&psi);
    let hjb_max = h.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)).max(f64::MIN);
    let mut support_max_abs: f64 = 0.0;
    for j in 1..s {
        let frame = sol.curve.rho()[j].grid();
        let top = frame.max_abs();
        for i in 0..n {
            if frame.get(p.lo + i as i64) >= 1e-6 * top {
                support_max_abs = support_max_abs.max(h[(j - 1) * n + i].abs());
            }
        }
    }
    let (first, last) = p.end_potentials(&psi);
    let endpoint_value = 2.0 * p.delta * (0..n).map(|i| p.rho1[i] * last[i] - p.rho0[i] * first[i]).sum::<f64>();
    let lp = p.lap_frames(&psi);
    let mut worst: f64 = 0.0;
    let mut wmax: f64 = 0.0;
    for j in 0..s {
        let a = sol.curve.rho()[j].grid();
        let b = sol.curve.rho()[j + 1].grid();
        let w = &sol.curve.w()[j];
        for i in 1..n - 1 {
            let k = p.lo + i as i64;
            let m = 0.5 * (a.get(k) + b.get(k));
            worst = worst.max((w.get(k) - m * lp[j * n + i]).abs());
            wmax = wmax.max(w.get(k).abs());
        }
    }
    let optimality_residual = if wmax > 0.0 { worst / wmax } else { worst };
    DualReport {
        hjb_max,
        support_max_abs,
        endpoint_value,
        dual_value: sol.dual_value,
        action: sol.action_value,
        pd_gap: sol.pd_gap,
        optimality_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connector::connect;
    use crate::kernels::heat_semigroup;

    fn bump(delta: f64, c: f64) -> ProbabilityDensity {
        let k = crate::kernels::heat_kernel_cached(delta, 0.3).unwrap();
        let g = k.grid();
        let shift = (c / delta).round() as i64;
        let raw = GridFunction::new(delta, g.lo() + shift, g.values().to_vec()).unwrap();
        raw.scale(1.0 / raw.integral());
        ProbabilityDensity::new(raw.scale(1.0 / raw.integral()), 1e-10, 10.0).unwrap()
    }

    fn two_bump(delta: f64) -> ProbabilityDensity {
        let a = bump(delta, -0.5).into_grid();
        let b = bump(delta, 0.5).into_grid();
        ProbabilityDensity::from_grid(a.lincomb(0.5, &b, 0.5).unwrap()).unwrap()
    }

    fn centered(delta: f64) -> ProbabilityDensity {
        ProbabilityDensity::from_grid(bump(delta, 0.0).into_grid()).unwrap()
    }

    #[test]
    fn identical_endpoints_give_zero_curve() {
        let r = two_bump(0.5);
        let sol = solve(&r, &r, 8, &SolveOptions::default()).unwrap();
        assert_eq!(sol.action_value, 0.0);
        assert!(sol.converged);
        assert!(sol.curve.w().iter().all(|w| w.max_abs() == 0.0));
        let rep = dual_certificate(&sol);
        assert_eq!(rep.hjb_max, 0.0);
        assert!(rep.certifies(0.0, 0.0));
    }

    #[test]
    fn heat_pair_is_below_heat_action() {
        let r0 = centered(0.5);
        let tau = 0.5;
        let r1 = heat_semigroup(&r0, tau).unwrap();
        let sol = solve(&r0, &r1, 8, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.action_value <= tau * tau * (1.0 + 1e-4));
        assert!(sol.pd_gap >= -1e-12);
        assert!(sol.curve.rho()[0] == r0 && sol.curve.rho()[8] == r1);
        let rep = dual_certificate(&sol);
        assert!(rep.certifies(1e-5, 1e-14));
        // Δψ ≈ τ near the center of mass.
        let mid = &sol.dual_psi[4];
        let l = crate::grid::laplacian(mid);
        assert!((l.get(0) - tau).abs() < 0.05 * tau, "{}", l.get(0));
    }

    #[test]
    fn reversal_symmetry_and_connector_sandwich() {
        let d = 0.5;
        let a = two_bump(d);
        let b = centered(d);
        let opts = SolveOptions::default();
        let ab = solve(&a, &b, 8, &opts).unwrap();
        let ba = solve(&b, &a, 8, &opts).unwrap();
        assert!(ab.converged && ba.converged);
        let (x, y) = (ab.distance(), ba.distance());
        assert!((x - y).abs() <= 2.0 * opts.rel_gap * x, "{x} {y}");
        let c = connect(&a, &b, 1.0, 8).unwrap();
        assert!(ab.action_value <= c.action(ActionRule::Midpoint).to_f64());
    }

    #[test]
    fn methods_agree() {
        let d = 0.5;
        let a = two_bump(d);
        let b = centered(d);
        let base = SolveOptions::default();
        let ipm = solve(&a, &b, 8, &SolveOptions { method: Method::InteriorPoint, ..base.clone() }).unwrap();
        let hyb = solve(&a, &b, 8, &base).unwrap();
        assert!(ipm.converged && hyb.converged);
        assert!((ipm.action_value - hyb.action_value).abs() <= 2e-5 * ipm.action_value);
        let cp = solve(&a, &b, 8, &SolveOptions { method: Method::Splitting, splitting_iters: 2000, ..base }).unwrap();
        // The splitting bound is valid even far from convergence.
        assert!(cp.dual_value <= ipm.action_value * (1.0 + 1e-5));
    }

    #[test]
    fn rejects_mismatched_centers() {
        let a = centered(0.5);
        let g = a.grid();
        let shifted = GridFunction::new(0.5, g.lo() + 1, g.values().to_vec()).unwrap();
        let b = ProbabilityDensity::new(shifted, 1e-10, 1.0).unwrap();
        let err = solve(&a, &b, 8, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }
}
