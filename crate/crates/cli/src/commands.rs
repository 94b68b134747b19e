//! Subcommand implementations. Each returns `Ok` on success; the error carries the exit code.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use horizonctl::controls::DiscreteSet;
use horizonctl::horizon::{assess, solve_levels, HorizonReport, LevelSolution};
use horizonctl::objective::TrackingProblem;
use horizonctl::optimizer::{solve_pt, SolveReport};
use horizonctl::pde::NewtonSettings;
use horizonctl::verify::{horizon_rows, oracle_dense, verify_all, Anchor, Candidate};
use horizonctl::{ControlSpace, ControlTrajectory, Grid, TimeGrid, Trajectory};

use crate::config::{ConfigError, RunConfig};
use crate::report::{fmt_f64, parse_control_values, render_control, render_trajectory, write_csv, Row};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

/// Agreement required between solver and dense oracle outputs.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerics(horizonctl::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid input {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    NotConverged(String),
    #[error("failing checks: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl From<horizonctl::Error> for CliError {
    fn from(e: horizonctl::Error) -> Self {
        CliError::Numerics(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use horizonctl::Error as E;
        match self {
            CliError::Config(_) | CliError::Input { .. } => EXIT_CONFIG,
            CliError::Numerics(E::OracleTooLarge(_)) => EXIT_CONFIG,
            CliError::Numerics(E::SolverDivergence { .. } | E::LineSearchStall { .. } | E::Singular { .. }) => {
                EXIT_NOT_CONVERGED
            }
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::VerifyFailed(_) => EXIT_VERIFY_FAILED,
            CliError::Numerics(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn write_rows(path: &Path, id: &str, rows: &[Row]) -> CliResult<()> {
    write_csv(path, id, rows).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.into(),
        source,
    })
}

/// Problem instance and discretized constraint set of a config.
pub struct Instance {
    pub problem: TrackingProblem,
    pub set: DiscreteSet,
}

impl Instance {
    pub fn new(cfg: &RunConfig) -> CliResult<Self> {
        Self::with_time_grid(cfg, cfg.time_grid()?)
    }

    pub fn with_time_grid(cfg: &RunConfig, tg: TimeGrid) -> CliResult<Self> {
        let problem = TrackingProblem::new(cfg.spec()?, tg)?;
        let set = cfg.set.discretize(problem.grid(), problem.space())?;
        Ok(Self { problem, set })
    }
}

fn terminal_l2(y: &Trajectory, grid: &Grid) -> f64 {
    let last = y.slice(y.len() - 1);
    last.iter()
        .zip(grid.weights())
        .map(|(v, w)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

pub fn solve_rows(cfg: &RunConfig, inst: &Instance, rep: &SolveReport) -> CliResult<Vec<Row>> {
    let p = &inst.problem;
    let spec = p.spec();
    let envelope = cfg.set.envelope(spec.grid(), spec.omega());
    let t = p.time_grid().horizon();
    // Data that never switches off has no finite tail; report it as such.
    let finite = |r: horizonctl::Result<f64>| r.unwrap_or(f64::INFINITY);
    Ok(vec![
        Row::check("solve.converged", rep.converged, rep.converged as u8 as f64, 1.0),
        Row::metric("solve.iterations", rep.iterations as f64),
        Row::metric("solve.objective", rep.value),
        Row::check(
            "solve.stationarity",
            rep.residual() <= rep.threshold,
            rep.residual(),
            rep.threshold,
        )
        .with_anchor(Anchor::ProjectedStationarity.slug()),
        Row::metric("solve.terminal_l2", terminal_l2(&rep.state, p.grid())),
        Row::metric("solve.control_l2", rep.control.norm_l2()),
        Row::metric("tail.source_l2", finite(spec.source().tail_l2(spec.grid(), t))),
        Row::metric("tail.target_l2", finite(spec.target().tail_l2(spec.grid(), t))),
        Row::metric("tail.envelope_l2", finite(envelope.tail(t, 2.0))),
        Row::metric("tail.envelope_lp", finite(envelope.tail(t, spec.exponent()))),
    ])
}

fn dump_solution(
    dir: &Path,
    inst: &Instance,
    control: &ControlTrajectory,
    state: &Trajectory,
    adjoint: &Trajectory,
) -> CliResult<()> {
    let (g, tg) = (inst.problem.grid(), inst.problem.time_grid());
    write(&dir.join("control.txt"), &render_control(g, tg, "control", control))?;
    write(&dir.join("state.txt"), &render_trajectory(g, tg, "state", state))?;
    write(&dir.join("adjoint.txt"), &render_trajectory(g, tg, "adjoint", adjoint))
}

/// Single-horizon solve; writes `solve.csv` and the field dumps.
pub fn cmd_solve(cfg: &RunConfig) -> CliResult<()> {
    let inst = Instance::new(cfg)?;
    let rep = solve_pt(&inst.problem, &inst.set, &cfg.optimizer)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_rows(&dir.join("solve.csv"), &cfg.id, &solve_rows(cfg, &inst, &rep)?)?;
    dump_solution(dir, &inst, &rep.control, &rep.state, &rep.adjoint)?;
    if !rep.converged {
        return Err(CliError::NotConverged(format!(
            "no convergence after {} iterations (residual {:e}, threshold {:e})",
            rep.iterations,
            rep.residual(),
            rep.threshold
        )));
    }
    Ok(())
}

fn level_name(t: f64) -> String {
    format!("level.T{t}")
}

pub fn sweep_rows(report: &HorizonReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for l in &report.levels {
        let n = level_name(l.horizon);
        rows.push(Row::metric(format!("{n}.objective"), l.value));
        rows.push(Row::metric(format!("{n}.residual"), l.residual));
        rows.push(Row::metric(format!("{n}.iterations"), l.iterations as f64));
        rows.push(Row::metric(format!("{n}.error_l2"), l.error_l2));
        rows.push(Row::metric(format!("{n}.extended_error_linf"), l.extended_error_linf));
        rows.push(Row::metric(format!("{n}.terminal_l2"), l.terminal));
        rows.push(Row::metric(format!("{n}.tail_source_l2"), l.tails.source));
        rows.push(Row::metric(format!("{n}.tail_target_l2"), l.tails.target));
        rows.push(Row::metric(format!("{n}.bound_ratio"), l.ratio));
        rows.push(Row::metric(format!("{n}.reference_objective"), l.reference_value));
    }
    let r = &report.reference;
    let n = level_name(r.horizon);
    rows.push(Row::metric(format!("{n}.residual"), r.residual));
    rows.push(Row::metric(format!("{n}.iterations"), r.iterations as f64));
    rows.extend(horizon_rows(report).iter().map(Row::from));
    rows
}

const MANIFEST: &str = "ladder.toml";

fn level_file(k: usize) -> String {
    format!("level_{k}.control.txt")
}

fn write_ladder(dir: &Path, cfg: &RunConfig, solutions: &[LevelSolution]) -> CliResult<()> {
    let plan = cfg.plan()?;
    let spec = cfg.spec()?;
    let ladder = dir.join("ladder");
    ensure_dir(&ladder)?;
    let mut manifest = String::new();
    for (k, s) in solutions.iter().enumerate() {
        let tg = plan.level_grid(k)?;
        write(
            &ladder.join(level_file(k)),
            &render_control(spec.grid(), &tg, "control", &s.control),
        )?;
        manifest.push_str(&format!(
            "[[level]]\nhorizon = {}\niterations = {}\nconverged = {}\nresidual = {}\ncontrol = \"{}\"\n\n",
            fmt_f64(s.horizon),
            s.iterations,
            s.converged,
            fmt_f64(s.residual),
            level_file(k)
        ));
    }
    write(&ladder.join(MANIFEST), &manifest)
}

/// Converged levels stored by an earlier sweep in `dir/ladder`.
pub fn load_ladder(dir: &Path, cfg: &RunConfig) -> CliResult<Vec<LevelSolution>> {
    let plan = cfg.plan()?;
    let spec = cfg.spec()?;
    let ladder = dir.join("ladder");
    let path = ladder.join(MANIFEST);
    let bad = |path: &Path, message: String| CliError::Input {
        path: path.into(),
        message,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| bad(&path, e.to_string()))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(&path, e.to_string()))?;
    let entries = match table.get("level") {
        None => Vec::new(),
        Some(toml::Value::Array(a)) => a.clone(),
        Some(_) => return Err(bad(&path, "`level` must be an array of tables".into())),
    };
    let mut out = Vec::new();
    for (k, e) in entries.iter().enumerate() {
        let field = |name: &str| {
            e.get(name)
                .ok_or_else(|| bad(&path, format!("level {k} lacks `{name}`")))
        };
        let num = |v: &toml::Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
        let horizon = num(field("horizon")?).ok_or_else(|| bad(&path, format!("level {k}: bad horizon")))?;
        let converged = field("converged")?
            .as_bool()
            .ok_or_else(|| bad(&path, format!("level {k}: bad flag")))?;
        if !converged {
            break;
        }
        let iterations = field("iterations")?
            .as_integer()
            .ok_or_else(|| bad(&path, format!("level {k}: bad count")))?;
        let residual = num(field("residual")?).ok_or_else(|| bad(&path, format!("level {k}: bad residual")))?;
        let file = field("control")?
            .as_str()
            .ok_or_else(|| bad(&path, format!("level {k}: bad file")))?;
        let tg = plan.level_grid(k)?;
        let space = Arc::new(spec.control_space(&tg)?);
        let cpath = ladder.join(file);
        let ctext = std::fs::read_to_string(&cpath).map_err(|e| bad(&cpath, e.to_string()))?;
        let values = parse_control_values(&ctext).map_err(|m| bad(&cpath, m))?;
        let control = ControlTrajectory::from_values(space, values).map_err(|e| bad(&cpath, e.to_string()))?;
        out.push(LevelSolution {
            horizon,
            control,
            iterations: iterations as usize,
            converged,
            residual,
        });
    }
    Ok(out)
}

/// Horizon ladder; writes `sweep.csv` and the per-level controls under `ladder/`.
pub fn cmd_sweep(cfg: &RunConfig, resume_from: Option<&Path>) -> CliResult<()> {
    let plan = cfg.plan()?;
    let spec = cfg.spec()?;
    let completed = match resume_from {
        Some(dir) => load_ladder(dir, cfg)?,
        None => Vec::new(),
    };
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let solutions = solve_levels(&spec, &cfg.set, &plan, &cfg.optimizer, completed)?;
    write_ladder(dir, cfg, &solutions)?;
    if let Some(s) = solutions.iter().find(|s| !s.converged) {
        return Err(CliError::NotConverged(format!(
            "ladder halted at T = {} after {} iterations (residual {:e})",
            s.horizon, s.iterations, s.residual
        )));
    }
    let report = assess(&spec, &cfg.set, &plan, &solutions)?;
    write_rows(&dir.join("sweep.csv"), &cfg.id, &sweep_rows(&report))
}

/// Rows of every enabled check; `control` replaces the fresh solve and
/// `perturb` shifts `ū` by a constant before projecting back.
pub fn cmd_verify(cfg: &RunConfig, control: Option<&Path>, perturb: Option<f64>) -> CliResult<()> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let t = &cfg.verify.toggles;
    if !(t.first_order || t.derivatives || t.ssc || t.growth || t.appendix) {
        return write_rows(&dir.join("verify.csv"), &cfg.id, &[]);
    }
    let inst = Instance::new(cfg)?;
    let mut ubar = match control {
        Some(path) => {
            let bad = |message: String| CliError::Input {
                path: path.into(),
                message,
            };
            let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
            let values = parse_control_values(&text).map_err(bad)?;
            ControlTrajectory::from_values(inst.problem.space().clone(), values).map_err(|e| bad(e.to_string()))?
        }
        None => {
            let rep = solve_pt(&inst.problem, &inst.set, &cfg.optimizer)?;
            if !rep.converged {
                return Err(CliError::NotConverged(format!(
                    "no convergence after {} iterations (residual {:e})",
                    rep.iterations,
                    rep.residual()
                )));
            }
            rep.control
        }
    };
    if let Some(a) = perturb {
        let shift = ControlTrajectory::from_values(inst.problem.space().clone(), vec![a; ubar.values().len()])?;
        ubar = inst.set.project(&ubar.axpy(1.0, &shift)?)?;
    }
    let candidate = Candidate::new(&inst.problem, &inst.set, &ubar)?;
    let report = verify_all(&candidate, &cfg.verify)?;
    let rows: Vec<Row> = report.rows.iter().map(Row::from).collect();
    write_rows(&dir.join("verify.csv"), &cfg.id, &rows)?;
    let failures: Vec<String> = report.failures().iter().map(|r| r.name.clone()).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failures))
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn traj_gap(a: &Trajectory, b: &Trajectory) -> horizonctl::Result<f64> {
    Ok(a.sub(b)?.linf() / b.linf().max(f64::MIN_POSITIVE))
}

fn control_gap(a: &ControlTrajectory, b: &ControlTrajectory) -> horizonctl::Result<f64> {
    Ok(a.sub(b)?.linf() / b.linf().max(f64::MIN_POSITIVE))
}

/// Solver outputs against the dense oracle at a random admissible control.
pub fn oracle_rows(
    inst: &Instance,
    seed: u64,
) -> CliResult<(Vec<Row>, horizonctl::verify::DenseOracle, ControlTrajectory)> {
    // The oracle iterates Newton to roundoff; match it so the gaps measure discretization agreement.
    let p = &inst.problem.clone().with_newton(NewtonSettings {
        tol: 1e-14,
        max_iter: 50,
    });
    let space: Arc<ControlSpace> = p.space().clone();
    let mut rng = horizonctl::rng_for(seed, "oracle.control");
    let u = inst.set.random_member(space.clone(), &mut rng);
    let v1 = inst.set.random_member(space.clone(), &mut rng);
    let v2 = inst.set.random_member(space, &mut rng);
    let oracle = oracle_dense(p.spec(), &u, p.time_grid())?;
    let eval = p.evaluate(&u)?;
    let lin = p.linearize(&eval.state)?;
    let z = p.sensitivity(&lin, &v1)?;
    let jv = p.hessian(&eval, &v1, &v2)?;
    let oj = oracle.hessian_form(&v1, &v2)?;
    let gaps = [
        ("oracle.state", traj_gap(&eval.state, &oracle.state())?),
        ("oracle.objective", rel_gap(eval.value, oracle.value())),
        ("oracle.linearized", traj_gap(&z, &oracle.linearized(&v1)?)?),
        ("oracle.adjoint", traj_gap(&eval.adjoint, &oracle.adjoint()?)?),
        ("oracle.gradient", control_gap(&eval.gradient, &oracle.gradient()?)?),
        ("oracle.hessian_form", rel_gap(jv, oj)),
    ];
    let mut rows = vec![
        Row::metric("oracle.value", oracle.value()),
        Row::metric("oracle.hessian_value", oj),
    ];
    rows.extend(gaps.iter().map(|&(n, g)| Row::check(n, g <= ORACLE_TOL, g, ORACLE_TOL)));
    Ok((rows, oracle, u))
}

/// Dense reference computation on a tiny instance; writes `oracle.csv` and dumps.
pub fn cmd_oracle(cfg: &RunConfig) -> CliResult<()> {
    let inst = Instance::new(cfg)?;
    let (rows, oracle, u) = oracle_rows(&inst, cfg.seed)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_rows(&dir.join("oracle.csv"), &cfg.id, &rows)?;
    let (g, tg) = (inst.problem.grid(), inst.problem.time_grid());
    write(&dir.join("oracle_control.txt"), &render_control(g, tg, "control", &u))?;
    write(
        &dir.join("oracle_state.txt"),
        &render_trajectory(g, tg, "state", &oracle.state()),
    )?;
    write(
        &dir.join("oracle_adjoint.txt"),
        &render_trajectory(g, tg, "adjoint", &oracle.adjoint()?),
    )?;
    write(
        &dir.join("oracle_gradient.txt"),
        &render_control(g, tg, "gradient", &oracle.gradient()?),
    )?;
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| r.status == "fail")
        .map(|r| r.name.clone())
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failures))
    }
}
