//! Dense layout of the fixed-endpoint problem on one window.
//!
//! Density frames are stored frame-major, `rho[j·n + i]` for `j = 0..=S`, with
//! frames `0` and `S` holding the data. Flux frames `w[j·n + i]`, `j < S`, are
//! pinned to zero at the two window edges. Constraint rows are
//! `g_{j,i} = S(ρ^{j+1}_i − ρ^j_i) − (Δw^j)_i`. Mass and first-moment
//! conservation make any two rows `(S−1, i₁)`, `(S−1, i₂)`, `i₁ ≠ i₂`, follow
//! from the others; they are dropped at two bulk sites of the final density,
//! since dropping tail rows leaves the Newton system nearly singular.

use crate::curves::frc_ext;
use crate::grid::GridFunction;
use crate::poisson::inverse_laplacian_rel;

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub delta: f64,
    pub lo: i64,
    pub n: usize,
    pub s: usize,
    pub rho0: Vec<f64>,
    pub rho1: Vec<f64>,
    /// Sites of the two dropped rows in frame `S−1`.
    pub pin: [usize; 2],
}

impl Problem {
    pub fn new(delta: f64, lo: i64, s: usize, rho0: Vec<f64>, rho1: Vec<f64>) -> Self {
        let n = rho0.len();
        // Quartile sites of the final density by mass.
        let total: f64 = rho1.iter().sum();
        let mut acc = 0.0;
        let (mut a, mut b) = (None, None);
        for (i, v) in rho1.iter().enumerate() {
            acc += v;
            if a.is_none() && acc >= 0.25 * total {
                a = Some(i);
            }
            if b.is_none() && acc >= 0.75 * total {
                b = Some(i);
            }
        }
        let a = a.unwrap_or(0).min(n.saturating_sub(2));
        let b = b.unwrap_or(n - 1).max(a + 1).min(n - 1);
        Self { delta, lo, n, s, rho0, rho1, pin: [a, b] }
    }

    pub fn inv_d2(&self) -> f64 {
        1.0 / (self.delta * self.delta)
    }

    /// `δ/S`, the weight of one site-interval in the action.
    pub fn weight(&self) -> f64 {
        self.delta / self.s as f64
    }

    #[inline]
    pub fn interior(&self, i: usize) -> bool {
        i > 0 && i + 1 < self.n
    }

    #[inline]
    pub fn pinned(&self, j: usize, i: usize) -> bool {
        j + 1 == self.s && (i == self.pin[0] || i == self.pin[1])
    }

    /// Linear interpolation of the data in time.
    pub fn interpolated_rho(&self) -> Vec<f64> {
        let (n, s) = (self.n, self.s);
        let mut rho = vec![0.0; (s + 1) * n];
        rho[..n].copy_from_slice(&self.rho0);
        rho[s * n..].copy_from_slice(&self.rho1);
        for j in 1..s {
            let t = j as f64 / s as f64;
            for i in 0..n {
                rho[j * n + i] = (1.0 - t) * self.rho0[i] + t * self.rho1[i];
            }
        }
        rho
    }

    /// `(Δv)_i` for a frame that vanishes outside the window.
    #[inline]
    pub fn lap(&self, v: &[f64], i: usize) -> f64 {
        let l = if i > 0 { v[i - 1] } else { 0.0 };
        let r = if i + 1 < self.n { v[i + 1] } else { 0.0 };
        (l + r - 2.0 * v[i]) * self.inv_d2()
    }

    /// Constraint rows, frame-major; dropped rows read zero.
    pub fn residual(&self, rho: &[f64], w: &[f64]) -> Vec<f64> {
        let (n, s) = (self.n, self.s);
        let sf = s as f64;
        let mut out = vec![0.0; s * n];
        for j in 0..s {
            let wj = &w[j * n..(j + 1) * n];
            for i in 0..n {
                if self.pinned(j, i) {
                    continue;
                }
                out[j * n + i] = sf * (rho[(j + 1) * n + i] - rho[j * n + i]) - self.lap(wj, i);
            }
        }
        out
    }

    /// Largest residual including the dropped rows.
    pub fn full_residual(&self, rho: &[f64], w: &[f64]) -> f64 {
        let (n, s) = (self.n, self.s);
        let sf = s as f64;
        let mut worst: f64 = 0.0;
        for j in 0..s {
            let wj = &w[j * n..(j + 1) * n];
            for i in 0..n {
                let r = sf * (rho[(j + 1) * n + i] - rho[j * n + i]) - self.lap(wj, i);
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// Midpoint action `(δ/S) Σ frc(w, m)`, `+∞` as `f64::INFINITY`.
    pub fn action(&self, rho: &[f64], w: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for j in 0..self.s {
            for i in 1..n.saturating_sub(1) {
                let m = 0.5 * (rho[j * n + i] + rho[(j + 1) * n + i]);
                total += frc_ext(w[j * n + i], m).to_f64();
            }
        }
        self.weight() * total
    }

    fn frame_moments(&self, v: &[f64]) -> (f64, f64) {
        let d = self.delta;
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for (i, x) in v.iter().enumerate() {
            m0 += x;
            m1 += d * (self.lo + i as i64) as f64 * x;
        }
        (d * m0, d * m1)
    }

    /// Exactly feasible curve near `rho`: each interior frame gets a two-site
    /// correction at the dropped-row sites matching the interpolated data
    /// moments, and the flux is then the unique solution
    /// `w^j = S·Δ⁻¹(ρ^{j+1} − ρ^j)`. `None` if a corrected value turns negative
    /// or an increment fails the moment check.
    pub fn restore(&self, rho: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (n, s, d) = (self.n, self.s, self.delta);
        let mut rho = rho.to_vec();
        let (a0, a1) = self.frame_moments(&self.rho0);
        let (b0, b1) = self.frame_moments(&self.rho1);
        let [ia, ib] = self.pin;
        let xa = d * (self.lo + ia as i64) as f64;
        let xb = d * (self.lo + ib as i64) as f64;
        for j in 1..s {
            let t = j as f64 / s as f64;
            let frame = &mut rho[j * n..(j + 1) * n];
            let (m0, m1) = self.frame_moments(frame);
            let dm = ((1.0 - t) * a0 + t * b0 - m0) / d;
            let d1 = ((1.0 - t) * a1 + t * b1 - m1) / d;
            let cb = (d1 - xa * dm) / (xb - xa);
            let ca = dm - cb;
            frame[ia] += ca;
            frame[ib] += cb;
            if !(frame[ia] > 0.0 && frame[ib] > 0.0) {
                return None;
            }
        }
        let mut w = vec![0.0; s * n];
        let sf = s as f64;
        for j in 0..s {
            let inc: Vec<f64> = (0..n).map(|i| sf * (rho[(j + 1) * n + i] - rho[j * n + i])).collect();
            let g = GridFunction::new(d, self.lo, inc).ok()?;
            let u = inverse_laplacian_rel(&g, sf).ok()?;
            for i in 1..n - 1 {
                w[j * n + i] = u.get(self.lo + i as i64);
            }
        }
        Some((rho, w))
    }

    /// Node residuals `S(ψ^{j+½} − ψ^{j−½}) + ¼[(Δψ^{j−½})² + (Δψ^{j+½})²]` for
    /// `j = 1..S−1`, frame-major with frame `j−1` at offset `(j−1)·n`.
    pub fn hjb(&self, psi: &[f64]) -> Vec<f64> {
        let (n, s) = (self.n, self.s);
        let sf = s as f64;
        let lp = self.lap_frames(psi);
        let mut out = vec![0.0; (s - 1) * n];
        for j in 1..s {
            for i in 0..n {
                let a = lp[(j - 1) * n + i];
                let b = lp[j * n + i];
                out[(j - 1) * n + i] = sf * (psi[j * n + i] - psi[(j - 1) * n + i]) + 0.25 * (a * a + b * b);
            }
        }
        out
    }

    /// `Δψ` at interior sites of every interval frame, zero at the edges where
    /// the flux is pinned.
    pub fn lap_frames(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; psi.len()];
        for j in 0..self.s {
            let p = &psi[j * n..(j + 1) * n];
            for i in 1..n.saturating_sub(1) {
                out[j * n + i] = self.lap(p, i);
            }
        }
        out
    }

    /// Endpoint dual frames `(φ⁰, φ^S)`.
    pub fn end_potentials(&self, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, s) = (self.n, self.s);
        let q = 0.25 / s as f64;
        let lp = self.lap_frames(psi);
        let first: Vec<f64> = (0..n).map(|i| psi[i] + q * lp[i].powi(2)).collect();
        let last: Vec<f64> = (0..n).map(|i| psi[(s - 1) * n + i] - q * lp[(s - 1) * n + i].powi(2)).collect();
        (first, last)
    }

    /// Lower bound on the minimal action: `2·D(ψ)` for any interval potentials.
    ///
    /// Minimizing the Lagrangian over `w` gives `w = mΔψ`; the remaining
    /// function is linear in each interior frame with coefficient `2δ·c^j`,
    /// `c^j = −h^j/S`, and every interior frame is a probability vector on the
    /// window, so its infimum is `2·min_i c^j_i`.
    pub fn dual_bound(&self, psi: &[f64]) -> f64 {
        let n = self.n;
        let sf = self.s as f64;
        let (first, last) = self.end_potentials(psi);
        let mut end = 0.0;
        for i in 0..n {
            end += self.rho1[i] * last[i] - self.rho0[i] * first[i];
        }
        let h = self.hjb(psi);
        let mut inner = 0.0;
        for frame in h.chunks(n) {
            let worst = frame.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            inner += -worst / sf;
        }
        2.0 * (self.delta * end + inner)
    }
}
