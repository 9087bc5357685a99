//! `difftrans` subcommands. Exit status: 0 pass, 1 failure, 2 inconclusive
//! or not converged, 3 usage error.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use difftrans::connector::connect;
use difftrans::curves::ActionRule;
use difftrans::flows::{evolve, Trajectory};
use difftrans::geodesic::{self, dual_certificate, Method};
use difftrans::grid::{read_csv_file, write_csv_file, ProbabilityDensity};
use difftrans::harness::{delta_uniformity_sweep, evi_check, write_contraction_csv, write_evi_csv, Status};
use difftrans::kernels::{default_tail_cut, heat_kernel};

use config::{load_profile, resolved_profile, RunConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "difftrans", about = "Discrete diffusive transport experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes the discrete heat kernel G^{δ,τ} as grid CSV.
    Heatkernel {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        tau: f64,
        /// Truncation threshold for tail values (default: chosen from δ).
        #[arg(long)]
        tail_cut: Option<f64>,
        /// Output file; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Builds the explicit three-phase connecting curve.
    Connect {
        #[arg(long)]
        rho0: PathBuf,
        #[arg(long)]
        rho1: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimizes the action between two densities.
    Geodesic {
        #[arg(long)]
        rho0: PathBuf,
        #[arg(long)]
        rho1: PathBuf,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, default_value_t = 1e-5)]
        rel_gap: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        /// hybrid, splitting or interior_point.
        #[arg(long, default_value = "hybrid")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrates a gradient flow and records snapshots.
    Flow {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        rho0: PathBuf,
        #[arg(long)]
        t: f64,
        /// Snapshot spacing; only the final state if absent.
        #[arg(long)]
        snap: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Contraction and EVI certification across lattice spacings.
    Certify {
        #[arg(long)]
        spec: PathBuf,
        /// Bump pair; the built-in corpus pair if absent.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Comma-separated spacings; the config `delta` if absent.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05, 0.1])]
        times: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
enum Fail {
    Usage(String),
    Run(String),
}

type Outcome = std::result::Result<i32, Fail>;

fn usage(e: impl std::fmt::Display) -> Fail {
    Fail::Usage(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> Fail {
    Fail::Run(e.to_string())
}

fn read_density(path: &Path) -> std::result::Result<ProbabilityDensity, Fail> {
    let g = read_csv_file(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    ProbabilityDensity::from_grid(g).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn make_dir(dir: &Path) -> std::result::Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| run_err(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> std::result::Result<(), Fail> {
    fs::write(path, text).map_err(|e| run_err(format!("{}: {e}", path.display())))
}

fn configure_threads() -> std::result::Result<(), Fail> {
    let Ok(v) = std::env::var("DIFFTRANS_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| usage(format!("DIFFTRANS_THREADS must be a positive integer, got `{v}`")))?;
    if n == 0 {
        return Err(usage("DIFFTRANS_THREADS must be a positive integer, got `0`"));
    }
    // A pool configured earlier in this process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(code) => code,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Fail::Run(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAIL
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Heatkernel { delta, tau, tail_cut, out } => heatkernel_cmd(delta, tau, tail_cut, out),
        Command::Connect { rho0, rho1, alpha, steps, out } => connect_cmd(&rho0, &rho1, alpha, steps, &out),
        Command::Geodesic { rho0, rho1, steps, rel_gap, max_iter, method, out } => {
            geodesic_cmd(&rho0, &rho1, steps, rel_gap, max_iter, &method, &out)
        }
        Command::Flow { spec, rho0, t, snap, out } => flow_cmd(&spec, &rho0, t, snap, &out),
        Command::Certify { spec, profile, deltas, times, out } => certify_cmd(&spec, profile.as_deref(), deltas, &times, &out),
    }
}

fn heatkernel_cmd(delta: f64, tau: f64, tail_cut: Option<f64>, out: Option<PathBuf>) -> Outcome {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(usage(format!("--delta must be positive, got {delta}")));
    }
    let tail = tail_cut.unwrap_or_else(|| default_tail_cut(delta));
    let k = heat_kernel(delta, tau, tail).map_err(usage)?;
    match out {
        Some(p) => write_csv_file(k.grid(), &p).map_err(|e| run_err(format!("{}: {e}", p.display())))?,
        None => print!("{}", difftrans::grid::to_csv_string(k.grid())),
    }
    Ok(EXIT_PASS)
}

fn connect_cmd(rho0: &Path, rho1: &Path, alpha: f64, steps: usize, out: &Path) -> Outcome {
    let (a, b) = (read_density(rho0)?, read_density(rho1)?);
    let curve = connect(&a, &b, alpha, steps).map_err(run_err)?;
    make_dir(out)?;
    curve.save(out).map_err(run_err)?;
    let summary = format!(
        "action_midpoint={}\naction_endpoint_average={}\nconstraint_residual={:?}\n",
        curve.action(ActionRule::Midpoint),
        curve.action(ActionRule::EndpointAverage),
        curve.constraint_residual()
    );
    write(&out.join("summary.txt"), &summary)?;
    Ok(EXIT_PASS)
}

fn geodesic_cmd(rho0: &Path, rho1: &Path, steps: usize, rel_gap: f64, max_iter: usize, method: &str, out: &Path) -> Outcome {
    let method = match method {
        "hybrid" => Method::Hybrid,
        "splitting" => Method::Splitting,
        "interior_point" => Method::InteriorPoint,
        m => return Err(usage(format!("unknown --method `{m}`"))),
    };
    if !(rel_gap > 0.0) {
        return Err(usage(format!("--rel-gap must be positive, got {rel_gap}")));
    }
    let (a, b) = (read_density(rho0)?, read_density(rho1)?);
    let opts = geodesic::SolveOptions { rel_gap, max_iter, method, ..geodesic::SolveOptions::default() };
    let sol = geodesic::solve(&a, &b, steps, &opts).map_err(run_err)?;
    make_dir(out)?;
    sol.save(out).map_err(run_err)?;
    let rep = dual_certificate(&sol);
    let cert = format!(
        "hjb_max={:?}\ndual_value={:?}\naction={:?}\npd_gap={:?}\noptimality_residual={:?}\ncertified={}\n",
        rep.hjb_max,
        rep.dual_value,
        rep.action,
        rep.pd_gap,
        rep.optimality_residual,
        rep.certifies(rel_gap, opts.abs_gap)
    );
    write(&out.join("certificate.txt"), &cert)?;
    Ok(if sol.converged { EXIT_PASS } else { EXIT_INCONCLUSIVE })
}

/// Sites that builtin quadratic data must cover for densities supported in
/// `[−max_abs, max_abs]`.
fn reach(max_abs: i64, cfg: &RunConfig) -> i64 {
    max_abs + cfg.flow.pad + 4
}

fn max_abs_site(r: &ProbabilityDensity) -> i64 {
    let g = r.grid().trimmed();
    g.lo().abs().max(g.hi().abs())
}

fn write_trajectory(traj: &Trajectory, out: &Path) -> std::result::Result<(), Fail> {
    let mut index = String::from("index,t,energy\n");
    for (j, s) in traj.states.iter().enumerate() {
        write_csv_file(s.rho.grid(), out.join(format!("rho_{j:04}.csv"))).map_err(run_err)?;
        let _ = writeln!(index, "{j},{:?},{:?}", s.t, s.energy);
    }
    write(&out.join("snapshots.csv"), &index)?;
    traj.write_monitor(out.join("monitor.csv")).map_err(run_err)?;
    let summary = format!(
        "steps={}\nleaked_mass={:?}\nmax_mass_drift={:?}\nmax_center_drift={:?}\nmax_energy_increase={:?}\nclipped={:?}\n",
        traj.steps, traj.leaked_mass, traj.max_mass_drift, traj.max_center_drift, traj.max_energy_increase, traj.clipped
    );
    write(&out.join("summary.txt"), &summary)
}

fn flow_cmd(spec: &Path, rho0: &Path, t: f64, snap: Option<f64>, out: &Path) -> Outcome {
    let cfg = RunConfig::load(spec).map_err(|e| usage(format!("{}: {e}", spec.display())))?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(usage(format!("--t must be finite and nonnegative, got {t}")));
    }
    let samples = match snap {
        None => Vec::new(),
        Some(dt) if dt > 0.0 && dt.is_finite() => {
            let n = (t / dt).floor() as usize;
            (1..=n).map(|k| k as f64 * dt).filter(|&s| s < t).collect()
        }
        Some(dt) => return Err(usage(format!("--snap must be positive, got {dt}"))),
    };
    let rho = read_density(rho0)?;
    let flow = cfg.flow_spec(rho.delta(), reach(max_abs_site(&rho), &cfg)).map_err(usage)?;
    make_dir(out)?;
    write(&out.join("config.resolved.cfg"), &cfg.resolved())?;
    let traj = evolve(&flow, &rho, t, &cfg.step_policy(samples)).map_err(run_err)?;
    write_trajectory(&traj, out)?;
    Ok(if traj.max_energy_increase > 0.0 { EXIT_FAIL } else { EXIT_PASS })
}

fn certify_cmd(spec: &Path, profile: Option<&Path>, deltas: Vec<f64>, times: &[f64], out: &Path) -> Outcome {
    let cfg = RunConfig::load(spec).map_err(|e| usage(format!("{}: {e}", spec.display())))?;
    let pair = match profile {
        Some(p) => load_profile(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => difftrans::harness::two_bump_corpus()[0],
    };
    let deltas = if deltas.is_empty() {
        cfg.flow.delta.map(|d| vec![d]).ok_or_else(|| usage("no lattice spacing: pass --deltas or set `delta`"))?
    } else {
        deltas
    };
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(usage(format!("lattice spacings must be positive, got {d}")));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(usage(format!("times must be finite and nonnegative, got {t}")));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.flow.delta = None;
    let samples = deltas
        .iter()
        .map(|&d| Ok((pair.0.sample(d)?, pair.1.sample(d)?)))
        .collect::<difftrans::Result<Vec<_>>>()
        .map_err(usage)?;
    let reaches: Vec<(f64, i64)> =
        deltas.iter().zip(&samples).map(|(&d, (a, b))| (d, reach(max_abs_site(a).max(max_abs_site(b)), &run_cfg))).collect();
    let family = |d: f64| {
        let r = reaches.iter().find(|(x, _)| *x == d).map(|(_, r)| *r).expect("spacing from the list");
        run_cfg.flow_spec(d, r)
    };
    for &d in &deltas {
        family(d).map_err(usage)?;
    }
    make_dir(out)?;
    write(&out.join("config.resolved.cfg"), &run_cfg.resolved())?;
    write(&out.join("profile.resolved.cfg"), &resolved_profile(&pair))?;
    let opts = run_cfg.harness_options();
    let sweep = delta_uniformity_sweep(family, &pair, &deltas, times, &opts).map_err(run_err)?;
    write_contraction_csv(sweep.rows(), out.join("contraction.csv")).map_err(run_err)?;
    let mut evi = Vec::new();
    for (&d, (a, b)) in deltas.iter().zip(&samples) {
        let spec = family(d).map_err(run_err)?;
        for &t in times {
            evi.push(evi_check(&spec, a, b, t, &opts).map_err(run_err)?);
        }
    }
    write_evi_csv(&evi, out.join("evi.csv")).map_err(run_err)?;

    let statuses: Vec<Status> = sweep.rows().map(|r| r.status).chain(evi.iter().map(|r| r.status)).collect();
    let count = |s: Status| statuses.iter().filter(|&&x| x == s).count();
    let mut summary = String::new();
    for (d, l) in deltas.iter().zip(&sweep.lambdas) {
        let _ = writeln!(summary, "lambda[delta={d:?}]={l:?}");
    }
    let _ = writeln!(summary, "uniform_lambda={}", sweep.uniform_lambda);
    let _ = writeln!(summary, "max_contraction_factor={:?}", sweep.max_factor);
    let _ = writeln!(
        summary,
        "pass={}\nfail={}\ninconclusive={}",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Inconclusive)
    );
    write(&out.join("summary.txt"), &summary)?;
    Ok(if count(Status::Fail) > 0 || !sweep.uniform_lambda {
        EXIT_FAIL
    } else if count(Status::Inconclusive) > 0 {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_PASS
    })
}
