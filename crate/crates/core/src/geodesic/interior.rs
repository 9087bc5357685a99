//! Primal barrier interior-point Newton method.
//!
//! Minimizes `Σ w²/m − μ Σ log ρ` under the continuity constraints for a
//! decreasing sequence of `μ`. The Hessian is block diagonal over sites, so
//! the Schur complement `A H⁻¹ Aᵀ` in site-major row order `i·S + j` is banded
//! with half-bandwidth `3S − 1` and is factored by band Cholesky. The
//! multiplier of the Newton system is `ν = 2ψ`.

use super::banded::BandMatrix;
use super::problem::Problem;
use super::GapLogRow;

/// Iterative refinement passes of the Newton system.
const REFINE: usize = 4;
/// Barrier reduction once the iterate is near the central path.
const MU_FACTOR: f64 = 0.1;

pub(crate) struct Params {
    pub max_iter: usize,
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub constraint_tol: f64,
}

pub(crate) struct Outcome {
    pub rho: Vec<f64>,
    pub w: Vec<f64>,
    pub psi: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Local variable numbering at one site: interleaved `w⁰, ρ¹, w¹, …` at
/// interior sites so the local Hessian has half-bandwidth 2.
#[derive(Clone, Copy)]
struct Site {
    interior: bool,
    nloc: usize,
}

impl Site {
    fn new(p: &Problem, i: usize) -> Self {
        let interior = p.interior(i);
        let nloc = if interior { 2 * p.s - 1 } else { p.s - 1 };
        Self { interior, nloc }
    }
    #[inline]
    fn rho(self, j: usize) -> usize {
        if self.interior {
            2 * j - 1
        } else {
            j - 1
        }
    }
    #[inline]
    fn w(self, j: usize) -> usize {
        2 * j
    }
}

struct Row {
    global: usize,
    entries: [(usize, f64); 3],
    len: usize,
}

impl Row {
    fn dot(&self, v: &[f64]) -> f64 {
        self.entries[..self.len].iter().map(|&(a, c)| c * v[a]).sum()
    }
}

fn rows_at(p: &Problem, i: usize, site: Site) -> Vec<Row> {
    let s = p.s;
    let sf = s as f64;
    let id2 = p.inv_d2();
    let mut rows = Vec::with_capacity(3 * s);
    for o in [-1i64, 0, 1] {
        let ip = i as i64 + o;
        if ip < 0 || ip >= p.n as i64 {
            continue;
        }
        let ip = ip as usize;
        for j in 0..s {
            if p.pinned(j, ip) {
                continue;
            }
            let mut r = Row { global: ip * s + j, entries: [(0, 0.0); 3], len: 0 };
            let mut push = |a: usize, c: f64| {
                r.entries[r.len] = (a, c);
                r.len += 1;
            };
            if o == 0 {
                if j + 1 < s {
                    push(site.rho(j + 1), sf);
                }
                if j >= 1 {
                    push(site.rho(j), -sf);
                }
                if site.interior {
                    push(site.w(j), 2.0 * id2);
                }
            } else if site.interior {
                push(site.w(j), -id2);
            }
            if r.len > 0 {
                rows.push(r);
            }
        }
    }
    rows
}

fn rnorm_after(p: &Problem, rho: &[f64], w: &[f64]) -> f64 {
    p.residual(rho, w).iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Barrier objective, `+∞` outside the domain.
fn merit(p: &Problem, rho: &[f64], w: &[f64], mu: f64) -> f64 {
    let (n, s) = (p.n, p.s);
    let mut f = 0.0;
    for j in 1..s {
        for i in 0..n {
            let r = rho[j * n + i];
            if !(r > 0.0) {
                return f64::INFINITY;
            }
            f -= mu * r.ln();
        }
    }
    for j in 0..s {
        for i in 1..n - 1 {
            let m = 0.5 * (rho[j * n + i] + rho[(j + 1) * n + i]);
            let x = w[j * n + i];
            if x != 0.0 {
                f += x * x / m;
            }
        }
    }
    f
}

fn local_system(p: &Problem, rho: &[f64], w: &[f64], i: usize, site: Site, mu: f64) -> (BandMatrix, Vec<f64>) {
    let (n, s) = (p.n, p.s);
    let mut h = BandMatrix::zeros(site.nloc, 2);
    let mut g = vec![0.0; site.nloc];
    for j in 1..s {
        let r = rho[j * n + i];
        let a = site.rho(j);
        g[a] -= mu / r;
        h.add(a, a, mu / (r * r));
    }
    if site.interior {
        for j in 0..s {
            let m = 0.5 * (rho[j * n + i] + rho[(j + 1) * n + i]);
            let q = w[j * n + i] / m;
            let b = site.w(j);
            g[b] += 2.0 * q;
            h.add(b, b, 2.0 / m);
            let vars: Vec<usize> = [j, j + 1].iter().filter(|&&k| k >= 1 && k < s).map(|&k| site.rho(k)).collect();
            for (ai, &a) in vars.iter().enumerate() {
                g[a] -= 0.5 * q * q;
                h.add(b, a, -q / m);
                for &c in &vars[..=ai] {
                    h.add(a, c, 0.5 * q * q / m);
                }
            }
        }
    }
    (h, g)
}

pub(crate) fn polish(
    p: &Problem,
    mut rho: Vec<f64>,
    mut w: Vec<f64>,
    params: &Params,
    log: &mut Vec<GapLogRow>,
    iter_offset: usize,
) -> Outcome {
    let (n, s) = (p.n, p.s);
    let sf = s as f64;
    let count = ((s - 1) * n) as f64;
    let sites: Vec<Site> = (0..n).map(|i| Site::new(p, i)).collect();
    let rows: Vec<Vec<Row>> = (0..n).map(|i| rows_at(p, i, sites[i])).collect();
    let nrows = n * s;
    let bw = 3 * s - 1;
    let mut schur = BandMatrix::zeros(nrows, bw);
    let data_max = p.rho0.iter().chain(&p.rho1).fold(0.0f64, |a, &b| a.max(b));
    let feas_tol = 1e-9 * (1.0 + sf * data_max);

    let f0 = merit(p, &rho, &w, 0.0);
    let mut mu = (f0.max(1e-6) / count).min(1.0);
    let mut nu = vec![0.0; nrows];
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;

    let to_psi = |nu: &[f64]| -> Vec<f64> {
        let mut psi = vec![0.0; s * n];
        for i in 0..n {
            for j in 0..s {
                psi[j * n + i] = 0.5 * nu[i * s + j];
            }
        }
        psi
    };

    while iterations < params.max_iter {
        iterations += 1;
        let resid = p.residual(&rho, &w);
        let rnorm = resid.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let feasible = rnorm <= feas_tol;

        // Local factors and H⁻¹g.
        schur.clear();
        let mut rhs = vec![0.0; nrows];
        for i in 0..n {
            for j in 0..s {
                rhs[i * s + j] = resid[j * n + i];
            }
        }
        let mut locals = Vec::with_capacity(n);
        for i in 0..n {
            let site = sites[i];
            let (mut h, g) = local_system(p, &rho, &w, i, site, mu);
            let sc = h.factor();
            let mut u = g.clone();
            h.solve(&sc, &mut u);
            let mut cols = Vec::with_capacity(rows[i].len());
            for q in &rows[i] {
                rhs[q.global] -= q.dot(&u);
                let mut k = vec![0.0; site.nloc];
                for &(a, c) in &q.entries[..q.len] {
                    k[a] += c;
                }
                h.solve(&sc, &mut k);
                cols.push(k);
            }
            for (qi, q) in rows[i].iter().enumerate() {
                for pr in &rows[i] {
                    if pr.global >= q.global {
                        schur.add(pr.global, q.global, pr.dot(&cols[qi]));
                    }
                }
            }
            locals.push((h, sc, g));
        }
        for i in p.pin {
            schur.pin(i * s + s - 1);
            rhs[i * s + s - 1] = 0.0;
        }
        let sc = schur.factor();
        let mut nu_new = rhs;
        schur.solve(&sc, &mut nu_new);

        // Primal direction, refined against the exact constraint operator
        // because the Schur complement is badly scaled in the tails.
        let direction = |nu: &[f64]| {
            let mut drho = vec![0.0; (s + 1) * n];
            let mut dw = vec![0.0; s * n];
            let mut lambda2 = 0.0;
            let mut slope = 0.0;
            for i in 0..n {
                let site = sites[i];
                let (h, sc, g) = &locals[i];
                let mut t = g.clone();
                for r in &rows[i] {
                    let v = nu[r.global];
                    for &(a, c) in &r.entries[..r.len] {
                        t[a] += c * v;
                    }
                }
                let mut dx = t.clone();
                h.solve(sc, &mut dx);
                for a in 0..site.nloc {
                    dx[a] = -dx[a];
                    lambda2 -= t[a] * dx[a];
                    slope += g[a] * dx[a];
                }
                for j in 1..s {
                    drho[j * n + i] = dx[site.rho(j)];
                }
                if site.interior {
                    for j in 0..s {
                        dw[j * n + i] = dx[site.w(j)];
                    }
                }
            }
            (drho, dw, lambda2, slope)
        };
        let (mut drho, mut dw, mut lambda2, mut slope) = direction(&nu_new);
        for _ in 0..REFINE {
            let e = p.residual(&drho, &dw);
            let mut corr = vec![0.0; nrows];
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..s {
                    let v = e[j * n + i] + resid[j * n + i];
                    corr[i * s + j] = v;
                    worst = worst.max(v.abs());
                }
            }
            if worst <= 1e-3 * feas_tol {
                break;
            }
            schur.solve(&sc, &mut corr);
            for (a, b) in nu_new.iter_mut().zip(&corr) {
                *a += b;
            }
            (drho, dw, lambda2, slope) = direction(&nu_new);
        }

        // Fraction to the boundary.
        let mut tmax: f64 = 1.0;
        for k in n..s * n {
            if drho[k] < 0.0 {
                tmax = tmax.min(-0.99 * rho[k] / drho[k]);
            }
        }
        let mut t = tmax;
        let trial = |t: f64| {
            let r: Vec<f64> = rho.iter().zip(&drho).map(|(a, b)| a + t * b).collect();
            let x: Vec<f64> = w.iter().zip(&dw).map(|(a, b)| a + t * b).collect();
            (r, x)
        };
        let (mut r_new, mut w_new) = trial(t);
        if feasible {
            let f = merit(p, &rho, &w, mu);
            for _ in 0..60 {
                let ft = merit(p, &r_new, &w_new, mu);
                if ft <= f + 1e-4 * t * slope || (ft - f).abs() <= 1e-15 * f.abs() {
                    break;
                }
                t *= 0.5;
                (r_new, w_new) = trial(t);
            }
        }
        rho = r_new;
        w = w_new;
        nu = nu_new;

        let restored = if rnorm_after(p, &rho, &w) <= 1e-6 * (1.0 + sf * data_max) { p.restore(&rho) } else { None };
        if let Some((rr, ww)) = restored.filter(|(rr, ww)| p.full_residual(rr, ww) <= params.constraint_tol) {
            let psi = to_psi(&nu);
            let primal = p.action(&rr, &ww);
            let dual = p.dual_bound(&psi);
            let gap = primal - dual;
            log.push(GapLogRow { iter: iter_offset + iterations, primal, dual, gap });
            let target = params.rel_gap * primal.abs() + params.abs_gap;
            if best.as_ref().map_or(true, |b| gap < b.0) {
                best = Some((gap, rr, ww, psi));
            }
            if gap <= target {
                converged = true;
                break;
            }
            // Once the central-path gap is well below the target only
            // centering remains.
            if lambda2 <= mu && p.weight() * mu * count > 0.05 * target {
                mu *= MU_FACTOR;
            }
        } else if lambda2 <= mu && t == 1.0 {
            mu *= MU_FACTOR;
        }
    }
    match best {
        Some((_, r, x, psi)) => Outcome { rho: r, w: x, psi, iterations, converged },
        None => {
            let psi = to_psi(&nu);
            Outcome { rho, w, psi, iterations, converged }
        }
    }
}
