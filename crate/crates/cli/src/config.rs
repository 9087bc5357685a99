//! Plain-text run configuration: `key = value` lines grouped under
//! `[flow]`, `[solver]` and `[harness]`. Keys before the first header belong
//! to `[flow]`. `#` starts a comment. Unknown sections or keys are errors.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use difftrans::flows::{FlowSpec, StepPolicy};
use difftrans::geodesic::{Method, SolveOptions};
use difftrans::grid::{read_csv_file, GridFunction};
use difftrans::harness::{BumpProfile, HarnessOptions};
use difftrans::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    PorousMedium,
    Potential,
    Interaction,
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pme" => Ok(Kind::PorousMedium),
            "potential" => Ok(Kind::Potential),
            "interaction" => Ok(Kind::Interaction),
            other => Err(format!("unknown flow kind `{other}` (expected pme, potential or interaction)")),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::PorousMedium => "pme",
            Kind::Potential => "potential",
            Kind::Interaction => "interaction",
        })
    }
}

/// Where `V` or `W` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// `(δκ)²/2` on a window wide enough for the run.
    Quadratic,
    /// Grid CSV, resolved relative to the config file.
    File(PathBuf),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Quadratic => f.write_str("quadratic"),
            Source::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub kind: Kind,
    pub source: Option<Source>,
    pub delta: Option<f64>,
    pub cfl: f64,
    pub neg_tol: f64,
    pub pad: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub steps: usize,
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub max_iter: usize,
    pub splitting_iters: usize,
    pub method: Method,
    pub pad: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub integrator_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub flow: FlowConfig,
    pub solver: SolverConfig,
    pub harness: HarnessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolveOptions::default();
        let p = StepPolicy::default();
        let h = HarnessOptions::default();
        Self {
            flow: FlowConfig { kind: Kind::PorousMedium, source: None, delta: None, cfl: p.cfl, neg_tol: p.neg_tol, pad: p.pad },
            solver: SolverConfig {
                steps: h.steps,
                rel_gap: s.rel_gap,
                abs_gap: s.abs_gap,
                max_iter: s.max_iter,
                splitting_iters: s.splitting_iters,
                method: s.method,
                pad: s.pad,
            },
            harness: HarnessConfig { integrator_tol: h.integrator_tol },
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Hybrid => "hybrid",
        Method::Splitting => "splitting",
        Method::InteriorPoint => "interior_point",
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "hybrid" => Ok(Method::Hybrid),
        "splitting" => Ok(Method::Splitting),
        "interior_point" => Ok(Method::InteriorPoint),
        other => Err(format!("unknown solver method `{other}` (expected hybrid, splitting or interior_point)")),
    }
}

/// One `key = value` line with its position.
struct Entry<'a> {
    line: usize,
    section: &'a str,
    key: &'a str,
    value: &'a str,
}

fn entries<'a>(text: &'a str, sections: &[&'static str]) -> Result<Vec<Entry<'a>>> {
    let mut out = Vec::new();
    let mut section = sections[0];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            section = sections
                .iter()
                .copied()
                .find(|s| *s == name)
                .ok_or_else(|| Error::Parse { line, msg: format!("unknown section `[{name}]`") })?;
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| Error::Parse { line, msg: format!("expected key = value, found `{t}`") })?;
        out.push(Entry { line, section, key: k.trim(), value: v.trim() });
    }
    Ok(out)
}

fn value<T: FromStr>(e: &Entry<'_>) -> Result<T> {
    e.value.parse().map_err(|_| Error::Parse {
        line: e.line,
        msg: format!("`{}` expects a {}, found `{}`", e.key, std::any::type_name::<T>(), e.value),
    })
}

fn positive(e: &Entry<'_>, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse { line: e.line, msg: format!("`{}` must be positive and finite, found `{}`", e.key, e.value) })
    }
}

impl RunConfig {
    /// Parses config text; relative source paths are taken from `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen: Vec<(&str, &str, usize)> = Vec::new();
        for e in entries(text, &["flow", "solver", "harness"])? {
            if let Some(&(_, _, first)) = seen.iter().find(|(s, k, _)| *s == e.section && *k == e.key) {
                return Err(Error::Parse { line: e.line, msg: format!("`{}` already set on line {first}", e.key) });
            }
            seen.push((e.section, e.key, e.line));
            let err = |msg: String| Error::Parse { line: e.line, msg };
            match (e.section, e.key) {
                ("flow", "kind") => c.flow.kind = e.value.parse().map_err(err)?,
                ("flow", "source") => {
                    c.flow.source = Some(if e.value == "quadratic" { Source::Quadratic } else { Source::File(std::path::absolute(base.join(e.value)).map_err(Error::Io)?) })
                }
                ("flow", "delta") => c.flow.delta = Some(positive(&e, value(&e)?)?),
                ("flow", "cfl") => {
                    let v: f64 = value(&e)?;
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(err(format!("`cfl` must lie in (0, 1], found `{}`", e.value)));
                    }
                    c.flow.cfl = v;
                }
                ("flow", "neg_tol") => c.flow.neg_tol = positive(&e, value(&e)?)?,
                ("flow", "pad") => c.flow.pad = value(&e)?,
                ("solver", "steps") => c.solver.steps = value(&e)?,
                ("solver", "rel_gap") => c.solver.rel_gap = positive(&e, value(&e)?)?,
                ("solver", "abs_gap") => c.solver.abs_gap = value(&e)?,
                ("solver", "max_iter") => c.solver.max_iter = value(&e)?,
                ("solver", "splitting_iters") => c.solver.splitting_iters = value(&e)?,
                ("solver", "method") => c.solver.method = parse_method(e.value).map_err(err)?,
                ("solver", "pad") => c.solver.pad = value(&e)?,
                ("harness", "integrator_tol") => c.harness.integrator_tol = value(&e)?,
                (s, k) => return Err(err(format!("unknown key `{k}` in section [{s}]"))),
            }
        }
        if c.flow.pad < 1 || c.solver.pad < 1 {
            return Err(Error::Parse { line: 0, msg: "window padding must be at least 1".into() });
        }
        if c.solver.steps < 2 {
            return Err(Error::Parse { line: 0, msg: "solver needs at least 2 steps".into() });
        }
        if c.flow.kind != Kind::PorousMedium && c.flow.source.is_none() {
            return Err(Error::Parse { line: 0, msg: format!("kind = {} needs `source` (a CSV path or `quadratic`)", c.flow.kind) });
        }
        if c.flow.kind == Kind::PorousMedium && c.flow.source.is_some() {
            return Err(Error::Parse { line: 0, msg: "kind = pme takes no `source`".into() });
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Every key with its resolved value; parsing it back gives `self`.
    pub fn resolved(&self) -> String {
        let mut s = String::from("[flow]\n");
        let f = &self.flow;
        let _ = writeln!(s, "kind = {}", f.kind);
        if let Some(src) = &f.source {
            let _ = writeln!(s, "source = {src}");
        }
        if let Some(d) = f.delta {
            let _ = writeln!(s, "delta = {d:?}");
        }
        let _ = writeln!(s, "cfl = {:?}\nneg_tol = {:?}\npad = {}", f.cfl, f.neg_tol, f.pad);
        let v = &self.solver;
        let _ = writeln!(
            s,
            "\n[solver]\nsteps = {}\nrel_gap = {:?}\nabs_gap = {:?}\nmax_iter = {}\nsplitting_iters = {}\nmethod = {}\npad = {}",
            v.steps,
            v.rel_gap,
            v.abs_gap,
            v.max_iter,
            v.splitting_iters,
            method_name(v.method),
            v.pad
        );
        let _ = writeln!(s, "\n[harness]\nintegrator_tol = {:?}", self.harness.integrator_tol);
        s
    }

    pub fn step_policy(&self, samples: Vec<f64>) -> StepPolicy {
        StepPolicy { cfl: self.flow.cfl, neg_tol: self.flow.neg_tol, pad: self.flow.pad, samples }
    }

    pub fn solve_options(&self) -> SolveOptions {
        let v = &self.solver;
        SolveOptions {
            rel_gap: v.rel_gap,
            abs_gap: v.abs_gap,
            max_iter: v.max_iter,
            splitting_iters: v.splitting_iters,
            method: v.method,
            pad: v.pad,
            ..SolveOptions::default()
        }
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            solve: self.solve_options(),
            step: self.step_policy(Vec::new()),
            steps: self.solver.steps,
            integrator_tol: self.harness.integrator_tol,
        }
    }

    /// Builds the flow at spacing `delta`. Builtin quadratic data cover sites
    /// `[−reach, reach]` for potentials and offsets up to `2·reach` for kernels.
    pub fn flow_spec(&self, delta: f64, reach: i64) -> Result<FlowSpec> {
        if let Some(d) = self.flow.delta {
            if d != delta {
                return Err(Error::DeltaMismatch(d, delta));
            }
        }
        let load = |p: &Path| -> Result<GridFunction> {
            let g = read_csv_file(p)?;
            g.same_delta(&GridFunction::zeros(delta, 0, 0)?)?;
            Ok(g)
        };
        match (self.flow.kind, &self.flow.source) {
            (Kind::PorousMedium, _) => Ok(FlowSpec::porous_medium()),
            (Kind::Potential, Some(Source::Quadratic)) => FlowSpec::quadratic_potential(delta, -reach, reach),
            (Kind::Potential, Some(Source::File(p))) => FlowSpec::potential(load(p)?),
            (Kind::Interaction, Some(Source::Quadratic)) => FlowSpec::quadratic_interaction(delta, 2 * reach),
            (Kind::Interaction, Some(Source::File(p))) => FlowSpec::interaction(load(p)?),
            (_, None) => Err(Error::Precondition("flow kind needs a source".into())),
        }
    }
}

/// `[rho]` and `[eta]` sections with `left`, `right`, `tau`.
pub fn parse_profile(text: &str) -> Result<(BumpProfile, BumpProfile)> {
    let (mut a, mut b) = difftrans::harness::two_bump_corpus()[0];
    let mut seen: Vec<(&str, &str, usize)> = Vec::new();
    for e in entries(text, &["rho", "eta"])? {
        if let Some(&(_, _, first)) = seen.iter().find(|(s, k, _)| *s == e.section && *k == e.key) {
            return Err(Error::Parse { line: e.line, msg: format!("`{}` already set on line {first}", e.key) });
        }
        seen.push((e.section, e.key, e.line));
        let p = if e.section == "rho" { &mut a } else { &mut b };
        match e.key {
            "left" => p.left = value(&e)?,
            "right" => p.right = value(&e)?,
            "tau" => p.tau = positive(&e, value(&e)?)?,
            k => return Err(Error::Parse { line: e.line, msg: format!("unknown key `{k}` in section [{}]", e.section) }),
        }
    }
    Ok((a, b))
}

pub fn load_profile(path: &Path) -> Result<(BumpProfile, BumpProfile)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_profile(&text)
}

pub fn resolved_profile(p: &(BumpProfile, BumpProfile)) -> String {
    let mut s = String::new();
    for (name, b) in [("rho", p.0), ("eta", p.1)] {
        let _ = writeln!(s, "[{name}]\nleft = {:?}\nright = {:?}\ntau = {:?}", b.left, b.right, b.tau);
    }
    s
}
