//! Inverse of the discrete Laplacian on grid functions with vanishing mass
//! and first moment.

use crate::error::{Error, Result};
use crate::grid::{laplacian, moments, GridFunction};

/// Relative tolerance on mass and first moment for [`inverse_laplacian`].
pub const MOMENT_TOL: f64 = 1e-12;

fn scale(f: &GridFunction) -> f64 {
    let d = f.delta();
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for (k, v) in f.iter() {
        s0 += v.abs();
        s1 += (d * k as f64).abs() * v.abs();
    }
    (d * s0).max(d * s1).max(f64::MIN_POSITIVE)
}

fn check_moments(f: &GridFunction, reference: f64) -> Result<()> {
    let m = moments(f);
    let tol = MOMENT_TOL * scale(f).max(reference);
    if m.mass.abs() > tol || m.m1.abs() > tol {
        return Err(Error::Precondition(format!(
            "inverse Laplacian needs zero mass and first moment; measured mass {:e}, M1 {:e} (tolerance {:e})",
            m.mass, m.m1, tol
        )));
    }
    Ok(())
}

/// `u_κ = δ Σ_{λ>κ} δ(λ−κ) f_λ`.
///
/// Under the moment conditions this equals the left-tail form
/// `−δ Σ_{λ<κ} δ(λ−κ) f_λ`. Each half of the window is evaluated with the form
/// whose sum runs over the near tail, so both tails are free of cancellation
/// and `u` is exactly zero for `κ ≥ hi` and `κ ≤ lo`. The result lives on
/// `[lo+1, hi−1]`.
pub fn inverse_laplacian(f: &GridFunction) -> Result<GridFunction> {
    inverse_laplacian_rel(f, 0.0)
}

/// [`inverse_laplacian`] with the moment tolerance taken relative to
/// `max(scale(f), reference)`, for differences of nearly equal data.
pub fn inverse_laplacian_rel(f: &GridFunction, reference: f64) -> Result<GridFunction> {
    check_moments(f, reference)?;
    let (lo, hi) = (f.lo(), f.hi());
    if hi - lo < 2 {
        return GridFunction::point(f.delta(), lo, 0.0);
    }
    let right = right_tail(f);
    let left = left_tail(f);
    let total: f64 = f.values().iter().map(|v| v.abs()).sum();
    let mut acc = 0.0;
    let mut split = hi;
    for (k, v) in f.iter() {
        acc += v.abs();
        if acc >= 0.5 * total {
            split = k;
            break;
        }
    }
    GridFunction::from_fn(f.delta(), lo + 1, hi - 1, |k| if k < split { left.get(k) } else { right.get(k) })
}

/// Pure right-tail sum on `[lo+1, hi−1]`.
pub fn inverse_laplacian_right(f: &GridFunction) -> Result<GridFunction> {
    check_moments(f, 0.0)?;
    Ok(right_tail(f))
}

fn right_tail(f: &GridFunction) -> GridFunction {
    let d2 = f.delta() * f.delta();
    let (lo, hi) = (f.lo(), f.hi());
    if hi - lo < 2 {
        return GridFunction::point(f.delta(), lo, 0.0).expect("valid delta");
    }
    // u_κ = u_{κ+1} + δ² Σ_{λ>κ} f_λ
    let n = (hi - lo - 1) as usize;
    let mut out = vec![0.0; n];
    let mut suffix = f.get(hi);
    let mut u = 0.0;
    for k in (lo + 1..hi).rev() {
        u += d2 * suffix;
        out[(k - lo - 1) as usize] = u;
        suffix += f.get(k);
    }
    GridFunction::new(f.delta(), lo + 1, out).expect("non-empty window")
}

fn left_tail(f: &GridFunction) -> GridFunction {
    let d2 = f.delta() * f.delta();
    let (lo, hi) = (f.lo(), f.hi());
    if hi - lo < 2 {
        return GridFunction::point(f.delta(), lo, 0.0).expect("valid delta");
    }
    let n = (hi - lo - 1) as usize;
    let mut out = vec![0.0; n];
    let mut prefix = f.get(lo);
    let mut u = 0.0;
    for k in lo + 1..hi {
        u += d2 * prefix;
        out[(k - lo - 1) as usize] = u;
        prefix += f.get(k);
    }
    GridFunction::new(f.delta(), lo + 1, out).expect("non-empty window")
}

/// Pure left-tail sum `−δ Σ_{λ<κ} δ(λ−κ) f_λ` on `[lo+1, hi−1]`.
pub fn inverse_laplacian_left(f: &GridFunction) -> Result<GridFunction> {
    check_moments(f, 0.0)?;
    Ok(left_tail(f))
}

/// `max |Δu − f|` over the union of the window of `f` and that of `Δu`.
pub fn residual(f: &GridFunction, u: &GridFunction) -> Result<f64> {
    laplacian(u).max_abs_diff(f)
}
