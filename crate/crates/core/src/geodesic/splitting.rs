//! First-order primal–dual splitting.
//!
//! Primal variables are the interior density frames, a copy `m` of the
//! interval midpoints and the fluxes. Two constraint blocks are dualized:
//! `s_C·g_{j,i}` (continuity) and `m − (ρ^j + ρ^{j+1})/2` (midpoint copy). The
//! nonsmooth part is `(δ/S)Σ w²/m` plus `ρ ≥ 0`, whose prox is the per-site
//! perspective map and a projection.

use super::problem::Problem;
use super::prox::prox_unchecked;
use super::GapLogRow;

pub(crate) struct Params {
    pub iters: usize,
    pub log_every: usize,
    pub rel_gap: f64,
    pub abs_gap: f64,
}

pub(crate) struct Outcome {
    pub rho: Vec<f64>,
    pub w: Vec<f64>,
    pub psi: Vec<f64>,
    pub iterations: usize,
}

struct Ops<'a> {
    p: &'a Problem,
    sc: f64,
}

impl Ops<'_> {
    /// `K x` with the data frames of `rho` taken as they are.
    fn apply(&self, rho: &[f64], m: &[f64], w: &[f64], yc: &mut [f64], yd: &mut [f64]) {
        let p = self.p;
        let (n, s) = (p.n, p.s);
        let sf = s as f64;
        for j in 0..s {
            let wj = &w[j * n..(j + 1) * n];
            for i in 0..n {
                let k = j * n + i;
                yc[k] = self.sc * (sf * (rho[k + n] - rho[k]) - p.lap(wj, i));
                yd[k] = m[k] - 0.5 * (rho[k] + rho[k + n]);
            }
        }
    }

    /// `Kᵀ y` restricted to the variables.
    fn adjoint(&self, yc: &[f64], yd: &[f64], grho: &mut [f64], gm: &mut [f64], gw: &mut [f64]) {
        let p = self.p;
        let (n, s) = (p.n, p.s);
        let sf = s as f64;
        for j in 1..s {
            for i in 0..n {
                let a = (j - 1) * n + i;
                let b = j * n + i;
                grho[b] = self.sc * sf * (yc[a] - yc[b]) - 0.5 * (yd[a] + yd[b]);
            }
        }
        gm.copy_from_slice(yd);
        for j in 0..s {
            let yj = &yc[j * n..(j + 1) * n];
            for i in 0..n {
                gw[j * n + i] = if p.interior(i) { -self.sc * p.lap(yj, i) } else { 0.0 };
            }
        }
    }

    /// Power iteration for `‖K‖` with a fixed start vector.
    fn norm(&self) -> f64 {
        let p = self.p;
        let (n, s) = (p.n, p.s);
        let mut rho = vec![0.0; (s + 1) * n];
        let mut m = vec![0.0; s * n];
        let mut w = vec![0.0; s * n];
        for (k, v) in rho.iter_mut().enumerate().skip(n).take((s - 1) * n) {
            *v = ((k as f64) * 0.618).sin();
        }
        for (k, v) in w.iter_mut().enumerate() {
            *v = if p.interior(k % n) { ((k as f64) * 1.3).cos() } else { 0.0 };
        }
        for (k, v) in m.iter_mut().enumerate() {
            *v = ((k as f64) * 0.77).sin();
        }
        let mut yc = vec![0.0; s * n];
        let mut yd = vec![0.0; s * n];
        let mut est = 0.0;
        for _ in 0..60 {
            let nx = (rho.iter().chain(&m).chain(&w).map(|v| v * v).sum::<f64>()).sqrt();
            for v in rho.iter_mut().chain(m.iter_mut()).chain(w.iter_mut()) {
                *v /= nx;
            }
            self.apply(&rho, &m, &w, &mut yc, &mut yd);
            let mut gr = vec![0.0; (s + 1) * n];
            self.adjoint(&yc, &yd, &mut gr, &mut m, &mut w);
            rho = gr;
            est = (rho.iter().chain(&m).chain(&w).map(|v| v * v).sum::<f64>()).sqrt();
        }
        est.sqrt() * 1.01
    }
}

pub(crate) fn run(
    p: &Problem,
    mut rho: Vec<f64>,
    mut w: Vec<f64>,
    params: &Params,
    log: &mut Vec<GapLogRow>,
) -> Outcome {
    let (n, s) = (p.n, p.s);
    let sc = 1.0 / (2.0 * s as f64 + 4.0 * p.inv_d2());
    let ops = Ops { p, sc };
    let l = ops.norm();
    let c = p.weight();
    // Balance primal and dual steps by the objective weight.
    let omega = (c * s as f64).sqrt().max(1e-3);
    let tau = omega / l;
    let sigma = 1.0 / (omega * l);

    let mut m: Vec<f64> = (0..s * n).map(|k| 0.5 * (rho[k] + rho[k + n])).collect();
    let mut yc = vec![0.0; s * n];
    let mut yd = vec![0.0; s * n];
    let (mut bar_rho, mut bar_m, mut bar_w) = (rho.clone(), m.clone(), w.clone());
    let mut kc = vec![0.0; s * n];
    let mut kd = vec![0.0; s * n];
    let mut grho = vec![0.0; (s + 1) * n];
    let mut gm = vec![0.0; s * n];
    let mut gw = vec![0.0; s * n];
    let to_psi = |yc: &[f64]| -> Vec<f64> { yc.iter().map(|v| v * sc / (2.0 * c)).collect() };
    let mut iterations = 0;

    for it in 1..=params.iters {
        iterations = it;
        ops.apply(&bar_rho, &bar_m, &bar_w, &mut kc, &mut kd);
        for k in 0..s * n {
            yc[k] += sigma * kc[k];
            yd[k] += sigma * kd[k];
        }
        ops.adjoint(&yc, &yd, &mut grho, &mut gm, &mut gw);
        for k in n..s * n {
            let r = (rho[k] - tau * grho[k]).max(0.0);
            bar_rho[k] = 2.0 * r - rho[k];
            rho[k] = r;
        }
        for k in 0..s * n {
            let (wn, mn) = if p.interior(k % n) {
                prox_unchecked(w[k] - tau * gw[k], m[k] - tau * gm[k], 2.0 * c * tau)
            } else {
                (0.0, (m[k] - tau * gm[k]).max(0.0))
            };
            bar_w[k] = 2.0 * wn - w[k];
            bar_m[k] = 2.0 * mn - m[k];
            w[k] = wn;
            m[k] = mn;
        }
        if it % params.log_every == 0 || it == params.iters {
            let psi = to_psi(&yc);
            let primal = p.action(&rho, &w);
            let dual = p.dual_bound(&psi);
            let gap = primal - dual;
            log.push(GapLogRow { iter: it, primal, dual, gap });
            let resid = p.full_residual(&rho, &w);
            if resid <= 1e-8 && gap <= params.rel_gap * primal.abs() + params.abs_gap {
                break;
            }
        }
    }
    let psi = to_psi(&yc);
    Outcome { rho, w, psi, iterations }
}
