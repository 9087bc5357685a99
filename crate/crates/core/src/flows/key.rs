//! The coupled system `∂ₜρ = sΔF(ρ)`, `∂ₜw = F(ρ) + s·DF(ρ)[Δw]` along a
//! regular curve frame and the pointwise contraction inequality it feeds.

use super::{conv_on, derivative_on, mobility_flux, FlowKind, FlowSpec};
use crate::curves::frc_ext;
use crate::error::{invalid, Error, Result};
use crate::grid::{laplacian, GridFunction};

/// Form of `DF` for the interaction flow. `Printed` replaces `ΔW∗ρ` by `W∗ρ`
/// in the `ξ`-term; it is kept only to show that variant fails the inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DfVariant {
    #[default]
    Exact,
    Printed,
}

/// `DF(ρ)[ξ]` on the union of the two windows.
pub(super) fn frechet(spec: &FlowSpec, rho: &GridFunction, xi: &GridFunction, variant: DfVariant) -> Result<GridFunction> {
    match &spec.kind {
        FlowKind::Potential { .. } => {
            spec.check_potential_covers(xi.lo(), xi.hi())?;
            xi.zip_with(spec.lap(), |a, b| a * b)?.on_window(xi.lo(), xi.hi())
        }
        FlowKind::Interaction { w } => {
            let kernel = match variant {
                DfVariant::Exact => spec.lap(),
                DfVariant::Printed => w,
            };
            let a = xi.mul(&conv_on(kernel, rho, xi.lo(), xi.hi())?)?;
            let b = rho.mul(&conv_on(spec.lap(), xi, rho.lo(), rho.hi())?)?;
            a.add(&b)
        }
        FlowKind::PorousMedium => Ok(rho.zip_with(xi, |r, x| 2.0 * r * x)?),
    }
}

fn field(spec: &FlowSpec, rho: &GridFunction, w: &GridFunction, s: f64, variant: DfVariant) -> Result<(GridFunction, GridFunction)> {
    let f = mobility_flux(spec, rho)?;
    let drho = laplacian(&f).scale(s);
    let dw = f.lincomb(1.0, &frechet(spec, rho, &laplacian(w), variant)?, s)?;
    Ok((drho, dw))
}

fn check_frame(rho: &GridFunction, w: &GridFunction) -> Result<()> {
    if let Some((k, v)) = rho.iter().find(|&(_, v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Precondition(format!("curve frame must be positive on its window; ρ = {v:e} at site {k}")));
    }
    let wt = w.trimmed();
    if wt.max_abs() > 0.0 && (wt.lo() <= rho.lo() || wt.hi() >= rho.hi()) {
        return Err(Error::Precondition(format!(
            "flux support [{}, {}] must lie strictly inside the density window [{}, {}]",
            wt.lo(),
            wt.hi(),
            rho.lo(),
            rho.hi()
        )));
    }
    Ok(())
}

/// One RK4 step of the coupled system with the exact `DF`.
pub fn coupled_step(spec: &FlowSpec, rho: &GridFunction, w: &GridFunction, s: f64, dt: f64) -> Result<(GridFunction, GridFunction)> {
    coupled_step_with(spec, rho, w, s, dt, DfVariant::Exact)
}

/// [`coupled_step`] with a chosen `DF`. Windows grow by four sites per step;
/// exact zeros at the new edges are trimmed.
pub fn coupled_step_with(
    spec: &FlowSpec,
    rho: &GridFunction,
    w: &GridFunction,
    s: f64,
    dt: f64,
    variant: DfVariant,
) -> Result<(GridFunction, GridFunction)> {
    if !(s.is_finite() && dt > 0.0 && dt.is_finite()) {
        return invalid(format!("coupled step needs finite s and positive dt, got s={s}, dt={dt}"));
    }
    check_frame(rho, w)?;
    let (k1r, k1w) = field(spec, rho, w, s, variant)?;
    let r2 = rho.lincomb(1.0, &k1r, 0.5 * dt)?;
    let w2 = w.lincomb(1.0, &k1w, 0.5 * dt)?;
    let (k2r, k2w) = field(spec, &r2, &w2, s, variant)?;
    let r3 = rho.lincomb(1.0, &k2r, 0.5 * dt)?;
    let w3 = w.lincomb(1.0, &k2w, 0.5 * dt)?;
    let (k3r, k3w) = field(spec, &r3, &w3, s, variant)?;
    let r4 = rho.lincomb(1.0, &k3r, dt)?;
    let w4 = w.lincomb(1.0, &k3w, dt)?;
    let (k4r, k4w) = field(spec, &r4, &w4, s, variant)?;
    let c = dt / 6.0;
    let rho_next = rho
        .lincomb(1.0, &k1r, c)?
        .lincomb(1.0, &k2r, 2.0 * c)?
        .lincomb(1.0, &k3r, 2.0 * c)?
        .lincomb(1.0, &k4r, c)?
        .trimmed();
    let w_next = w
        .lincomb(1.0, &k1w, c)?
        .lincomb(1.0, &k2w, 2.0 * c)?
        .lincomb(1.0, &k3w, 2.0 * c)?
        .lincomb(1.0, &k4w, c)?;
    if let Some((site, value)) = rho_next.iter().find(|&(_, v)| !(v > 0.0)) {
        return Err(Error::Positivity { t: dt, site, value });
    }
    Ok((rho_next, w_next))
}

fn frame_action(rho: &GridFunction, w: &GridFunction) -> f64 {
    rho.delta() * w.iter().map(|(k, x)| frc_ext(x, rho.get(k)).to_f64()).sum::<f64>()
}

/// Signed slack of `−∂ₜA ≥ −Λ·A + 2∂ₛℰ` at `t = 0`, where
/// `A = δΣ frc(w, ρ)`. `∂ₜA` is the one-sided second-order difference over
/// steps `dt` and `2dt`; `∂ₛℰ = δΣ ℰ′(ρ)Δw` since `∂ₛρ = Δw` along the curve.
pub fn key_inequality_residual(spec: &FlowSpec, rho: &GridFunction, w: &GridFunction, s: f64, dt: f64, lambda: f64) -> Result<f64> {
    key_inequality_residual_with(spec, rho, w, s, dt, lambda, DfVariant::Exact)
}

pub fn key_inequality_residual_with(
    spec: &FlowSpec,
    rho: &GridFunction,
    w: &GridFunction,
    s: f64,
    dt: f64,
    lambda: f64,
    variant: DfVariant,
) -> Result<f64> {
    let a0 = frame_action(rho, w);
    let (r1, w1) = coupled_step_with(spec, rho, w, s, dt, variant)?;
    let (r2, w2) = coupled_step_with(spec, rho, w, s, 2.0 * dt, variant)?;
    let a1 = frame_action(&r1, &w1);
    let a2 = frame_action(&r2, &w2);
    let a_dot = (-3.0 * a0 + 4.0 * a1 - a2) / (2.0 * dt);
    let lw = laplacian(w);
    let de = derivative_on(spec, rho, lw.lo(), lw.hi())?;
    let ds_energy = rho.delta() * lw.iter().map(|(k, v)| v * de.get(k)).sum::<f64>();
    Ok(-a_dot + lambda * a0 - 2.0 * ds_energy)
}

/// Both sides of the sitewise porous medium identity
/// `4(w₊−w)² − (w₊²/ρ₊² − w²/ρ²)(ρ₊² − ρ²) = 3(w₊−w)² + ((ρ/ρ₊)w₊ − (ρ₊/ρ)w)²`.
pub fn pme_bracket(w: f64, w_plus: f64, rho: f64, rho_plus: f64) -> (f64, f64) {
    let lhs = 4.0 * (w_plus - w).powi(2)
        - ((w_plus / rho_plus).powi(2) - (w / rho).powi(2)) * (rho_plus * rho_plus - rho * rho);
    let rhs = 3.0 * (w_plus - w).powi(2) + ((rho / rho_plus) * w_plus - (rho_plus / rho) * w).powi(2);
    (lhs, rhs)
}

/// `au² + 2buv + cv² − (c − b²/a)v²`, nonnegative for `a > 0`.
pub fn quadratic_form_gap(a: f64, b: f64, c: f64, u: f64, v: f64) -> f64 {
    a * u * u + 2.0 * b * u * v + c * v * v - (c - b * b / a) * v * v
}

/// `(A∗ρ)u² + 2(B∗ρ)uv + (C∗ρ)v² − [(C − B²/A)∗ρ]v²` at site `k`, for `A > 0`
/// on the offsets reached and `ρ ≥ 0`.
pub fn convolution_form_gap(
    a: &GridFunction,
    b: &GridFunction,
    c: &GridFunction,
    rho: &GridFunction,
    k: i64,
    u: f64,
    v: f64,
) -> Result<f64> {
    let schur = c.zip_with(&a.zip_with(b, |x, y| if x > 0.0 { y * y / x } else { 0.0 })?, |x, y| x - y)?;
    let at = |g: &GridFunction| -> Result<f64> { Ok(conv_on(g, rho, k, k)?.get(k)) };
    Ok(at(a)? * u * u + 2.0 * at(b)? * u * v + at(c)? * v * v - at(&schur)? * v * v)
}
