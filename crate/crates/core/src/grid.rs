//! Lattice grid functions on δℤ and their exact discrete calculus.
//!
//! A [`GridFunction`] stores a contiguous window of values and reads as zero
//! everywhere else. Every reduction runs in ascending site order so that
//! results are bitwise reproducible.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

/// Real function on the lattice δℤ, zero outside `[offset, offset + len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    delta: f64,
    offset: i64,
    values: Vec<f64>,
}

/// Direction of a unit lattice shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Plus,
    Minus,
}

impl Dir {
    pub fn sign(self) -> i64 {
        match self {
            Dir::Plus => 1,
            Dir::Minus => -1,
        }
    }
}

/// Mass, first and second moment of a grid function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub m1: f64,
    pub m2: f64,
}

impl GridFunction {
    pub fn new(delta: f64, offset: i64, values: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("delta must be positive and finite, got {delta}"));
        }
        if values.is_empty() {
            return invalid("grid function needs at least one stored site");
        }
        Ok(Self { delta, offset, values })
    }

    /// Single site `{k ↦ v}`.
    pub fn point(delta: f64, k: i64, v: f64) -> Result<Self> {
        Self::new(delta, k, vec![v])
    }

    pub fn zeros(delta: f64, lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return invalid(format!("empty window [{lo}, {hi}]"));
        }
        Self::new(delta, lo, vec![0.0; (hi - lo + 1) as usize])
    }

    /// Samples `f(κ)` on the inclusive window `[lo, hi]`.
    pub fn from_fn(delta: f64, lo: i64, hi: i64, f: impl FnMut(i64) -> f64) -> Result<Self> {
        if hi < lo {
            return invalid(format!("empty window [{lo}, {hi}]"));
        }
        Self::new(delta, lo, (lo..=hi).map(f).collect())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// First stored site.
    pub fn lo(&self) -> i64 {
        self.offset
    }

    /// Last stored site (inclusive).
    pub fn hi(&self) -> i64 {
        self.offset + self.values.len() as i64 - 1
    }

    /// Value at site `k`; exactly zero outside the window.
    pub fn get(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 || i >= self.values.len() as i64 {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    /// Physical position `δκ` of site `k`.
    pub fn x(&self, k: i64) -> f64 {
        self.delta * k as f64
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let off = self.offset;
        self.values.iter().enumerate().map(move |(i, &v)| (off + i as i64, v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { delta: self.delta, offset: self.offset, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination on the union of both windows.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_delta(other)?;
        let lo = self.lo().min(other.lo());
        let hi = self.hi().max(other.hi());
        Self::from_fn(self.delta, lo, hi, |k| f(self.get(k), other.get(k)))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `a·self + b·other` on the union window.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn same_delta(&self, other: &Self) -> Result<()> {
        if self.delta != other.delta {
            return Err(Error::DeltaMismatch(self.delta, other.delta));
        }
        Ok(())
    }

    /// Re-samples onto `[lo, hi]`, dropping values outside it.
    pub fn on_window(&self, lo: i64, hi: i64) -> Result<Self> {
        Self::from_fn(self.delta, lo, hi, |k| self.get(k))
    }

    /// Removes exact zeros at both window edges, keeping at least one site.
    pub fn trimmed(&self) -> Self {
        let first = self.values.iter().position(|&v| v != 0.0);
        match first {
            None => Self { delta: self.delta, offset: self.offset, values: vec![0.0] },
            Some(a) => {
                let b = self.values.iter().rposition(|&v| v != 0.0).unwrap_or(a);
                Self { delta: self.delta, offset: self.offset + a as i64, values: self.values[a..=b].to_vec() }
            }
        }
    }

    /// `δ·Σκ fκ` in ascending order.
    pub fn integral(&self) -> f64 {
        self.delta * self.values.iter().sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise difference over the union window.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// `result(κ) = f(κ + dir)`.
pub fn translate(f: &GridFunction, dir: Dir) -> GridFunction {
    GridFunction { delta: f.delta, offset: f.offset - dir.sign(), values: f.values.clone() }
}

/// `(f(κ+1) − f(κ))/δ`.
pub fn diff_forward(f: &GridFunction) -> GridFunction {
    let d = f.delta;
    GridFunction {
        delta: d,
        offset: f.lo() - 1,
        values: (f.lo() - 1..=f.hi()).map(|k| (f.get(k + 1) - f.get(k)) / d).collect(),
    }
}

/// `(f(κ) − f(κ−1))/δ`, so that `diff_forward ∘ diff_backward = laplacian`.
pub fn diff_backward(f: &GridFunction) -> GridFunction {
    let d = f.delta;
    GridFunction {
        delta: d,
        offset: f.lo(),
        values: (f.lo()..=f.hi() + 1).map(|k| (f.get(k) - f.get(k - 1)) / d).collect(),
    }
}

/// `(f₊ + f₋ − 2f)/δ²` on the window grown by one site on each side.
pub fn laplacian(f: &GridFunction) -> GridFunction {
    let d2 = f.delta * f.delta;
    GridFunction {
        delta: f.delta,
        offset: f.lo() - 1,
        values: (f.lo() - 1..=f.hi() + 1)
            .map(|k| (f.get(k + 1) + f.get(k - 1) - 2.0 * f.get(k)) / d2)
            .collect(),
    }
}

pub fn moments(f: &GridFunction) -> Moments {
    let d = f.delta;
    let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (k, v) in f.iter() {
        let x = d * k as f64;
        mass += v;
        m1 += x * v;
        m2 += x * x * v;
    }
    Moments { mass: d * mass, m1: d * m1, m2: d * m2 }
}

/// `δΣ_{|κ|≤K} f·Δg − δΣ_{|κ|≤K} g·Δf − B_K(f, g)`; zero up to rounding.
pub fn summation_by_parts_residual(f: &GridFunction, g: &GridFunction, k_max: i64) -> Result<f64> {
    if k_max < 1 {
        return invalid(format!("summation window K must be at least 1, got {k_max}"));
    }
    f.same_delta(g)?;
    let d = f.delta;
    let d2 = d * d;
    let lap = |h: &GridFunction, k: i64| (h.get(k + 1) + h.get(k - 1) - 2.0 * h.get(k)) / d2;
    let mut lhs = 0.0;
    for k in -k_max..=k_max {
        lhs += f.get(k) * lap(g, k) - g.get(k) * lap(f, k);
    }
    lhs *= d;
    let kk = k_max;
    let boundary = (f.get(-kk) * g.get(-(kk + 1)) - f.get(-(kk + 1)) * g.get(-kk) - f.get(kk + 1) * g.get(kk)
        + f.get(kk) * g.get(kk + 1))
        / d;
    Ok(lhs - boundary)
}

/// `δΣ fΔω − δΣ ωΔf` for compactly supported `f` and a weight `ω` sampled on
/// the support of `f` expanded by two sites.
pub fn weighted_ibp_residual(f: &GridFunction, omega: impl Fn(i64) -> f64) -> f64 {
    let d = f.delta;
    let om = GridFunction::from_fn(d, f.lo() - 2, f.hi() + 2, omega).expect("non-empty window");
    let lo = f.lo() - 1;
    let hi = f.hi() + 1;
    let d2 = d * d;
    let lap = |h: &GridFunction, k: i64| (h.get(k + 1) + h.get(k - 1) - 2.0 * h.get(k)) / d2;
    let mut s = 0.0;
    for k in lo..=hi {
        s += f.get(k) * lap(&om, k) - om.get(k) * lap(f, k);
    }
    d * s
}

/// Grid function in the centered probability space: nonnegative, unit mass
/// within `mass_tol`, first moment within `center_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDensity {
    f: GridFunction,
    mass_tol: f64,
    center_tol: f64,
}

/// Default mass tolerance for densities built from data.
pub const DEFAULT_MASS_TOL: f64 = 1e-10;

impl ProbabilityDensity {
    pub fn new(f: GridFunction, mass_tol: f64, center_tol: f64) -> Result<Self> {
        if let Some((k, v)) = f.iter().find(|&(_, v)| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("value {v:e} at site {k} is not a nonnegative number")));
        }
        let m = moments(&f);
        if !((m.mass - 1.0).abs() <= mass_tol) {
            return Err(Error::InvalidDensity(format!("mass {} differs from 1 by more than {mass_tol:e}", m.mass)));
        }
        if !(m.m1.abs() <= center_tol) {
            return Err(Error::InvalidDensity(format!("first moment {:e} exceeds center tolerance {center_tol:e}", m.m1)));
        }
        Ok(Self { f, mass_tol, center_tol })
    }

    /// Validates with the default tolerances (`mass_tol = 1e-10`, `center_tol = δ`).
    pub fn from_grid(f: GridFunction) -> Result<Self> {
        let d = f.delta();
        Self::new(f, DEFAULT_MASS_TOL, d)
    }

    pub fn grid(&self) -> &GridFunction {
        &self.f
    }

    pub fn into_grid(self) -> GridFunction {
        self.f
    }

    pub fn delta(&self) -> f64 {
        self.f.delta
    }

    pub fn mass_tol(&self) -> f64 {
        self.mass_tol
    }

    pub fn center_tol(&self) -> f64 {
        self.center_tol
    }

    pub fn moments(&self) -> Moments {
        moments(&self.f)
    }

    pub fn get(&self, k: i64) -> f64 {
        self.f.get(k)
    }
}

/// Result of [`recenter`]: the density and its leftover first moment.
#[derive(Debug, Clone)]
pub struct Recentered {
    pub density: ProbabilityDensity,
    pub shift: i64,
    pub residual_m1: f64,
}

/// Normalizes to unit mass and shifts by the nearest whole number of sites to
/// the center. The leftover first moment is at most δ/2.
pub fn recenter(rho: &GridFunction) -> Result<Recentered> {
    if let Some((k, v)) = rho.iter().find(|&(_, v)| !(v >= 0.0)) {
        return Err(Error::InvalidDensity(format!("negative value {v:e} at site {k}")));
    }
    let m = moments(rho);
    if !(m.mass > 0.0) {
        return Err(Error::InvalidDensity(format!("mass {} is not positive", m.mass)));
    }
    let inv = 1.0 / m.mass;
    let center = m.m1 * inv;
    let shift = (center / rho.delta).round() as i64;
    let values: Vec<f64> = rho.values.iter().map(|v| v * inv).collect();
    let g = GridFunction { delta: rho.delta, offset: rho.offset - shift, values };
    let residual_m1 = moments(&g).m1;
    let density = ProbabilityDensity::new(g, 1e-12, rho.delta)?;
    Ok(Recentered { density, shift, residual_m1 })
}

fn write_number(out: &mut String, v: f64) {
    // `{:?}` prints the shortest representation that round-trips.
    let _ = write!(out, "{v:?}");
}

/// CSV text: `# delta=<v>`, header `kappa,value`, one row per stored site.
pub fn to_csv_string(f: &GridFunction) -> String {
    let mut s = String::new();
    s.push_str("# delta=");
    write_number(&mut s, f.delta);
    s.push_str("\nkappa,value\n");
    for (k, v) in f.iter() {
        let _ = write!(s, "{k},");
        write_number(&mut s, v);
        s.push('\n');
    }
    s
}

pub fn write_csv(f: &GridFunction, mut w: impl Write) -> Result<()> {
    w.write_all(to_csv_string(f).as_bytes())?;
    Ok(())
}

pub fn read_csv(r: impl BufRead) -> Result<GridFunction> {
    let mut delta = None;
    let mut rows: Vec<(i64, f64)> = Vec::new();
    let mut seen_header = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("delta=") {
                let d: f64 = v.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("bad delta `{v}`") })?;
                delta = Some(d);
            }
            continue;
        }
        if !seen_header {
            if t.replace(' ', "") != "kappa,value" {
                return Err(Error::Parse { line: lineno, msg: format!("expected header `kappa,value`, found `{t}`") });
            }
            seen_header = true;
            continue;
        }
        let mut parts = t.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse { line: lineno, msg: format!("expected two fields, found `{t}`") });
        };
        let k: i64 = a.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("bad site index `{a}`") })?;
        let v: f64 = b.trim().parse().map_err(|_| Error::Parse { line: lineno, msg: format!("bad value `{b}`") })?;
        if let Some(&(prev, _)) = rows.last() {
            if k != prev + 1 {
                return Err(Error::Parse { line: lineno, msg: format!("site {k} does not follow {prev}") });
            }
        }
        rows.push((k, v));
    }
    let delta = delta.ok_or(Error::Parse { line: 1, msg: "missing `# delta=` line".into() })?;
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no data rows".into() });
    }
    GridFunction::new(delta, rows[0].0, rows.into_iter().map(|(_, v)| v).collect())
}

pub fn read_csv_file(path: impl AsRef<std::path::Path>) -> Result<GridFunction> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

pub fn write_csv_file(f: &GridFunction, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(f))?;
    Ok(())
}
