//! Projected gradient with Armijo backtracking for the finite-horizon problem.

use crate::controls::{ControlTrajectory, DiscreteSet};
use crate::error::{Error, Result};
use crate::grid::Trajectory;
use crate::objective::{ObjectiveEval, TrackingProblem};

/// Starting point of an optimization run.
#[derive(Debug, Clone, Default)]
pub enum InitialControl {
    #[default]
    Zero,
    Given(ControlTrajectory),
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// First trial step.
    pub s0: f64,
    /// Backtracking factor in `(0, 1)`.
    pub backtrack: f64,
    /// Armijo parameter in `(0, 1)`.
    pub armijo: f64,
    /// Relative stationarity tolerance: stop when `r(u) ≤ tol (1 + ‖φ_u‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Factor applied to the accepted step before the next line search when
    /// the spectral step is unavailable or disabled.
    pub growth: f64,
    /// Start each line search from the Barzilai–Borwein step `⟨Δu,Δu⟩/⟨Δu,Δφ⟩`.
    pub spectral: bool,
    /// Steps below this abort the line search.
    pub min_step: f64,
    pub initial: InitialControl,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            s0: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            tol: 1e-8,
            max_iter: 2000,
            growth: 2.0,
            spectral: true,
            min_step: 1e-12,
            initial: InitialControl::Zero,
        }
    }
}

impl OptimizerConfig {
    /// Upper clamp for spectral steps.
    pub fn max_step(&self) -> f64 {
        1e12
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Domain(format!("optimizer {what} = {v} is out of range")));
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return bad("s0", self.s0);
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack", self.backtrack);
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo", self.armijo);
        }
        if !(self.tol > 0.0) {
            return bad("tol", self.tol);
        }
        if !(self.growth >= 1.0) {
            return bad("growth", self.growth);
        }
        if !(self.min_step > 0.0 && self.min_step < self.s0 && self.max_step() > self.s0) {
            return bad("min_step", self.min_step);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final `J_T`.
    pub value: f64,
    /// Stationarity residual at every iterate, the last one at the returned control.
    pub residuals: Vec<f64>,
    /// `J_T` at every iterate.
    pub values: Vec<f64>,
    /// Absolute tolerance the last residual was compared with.
    pub threshold: f64,
    pub control: ControlTrajectory,
    pub state: Trajectory,
    pub adjoint: Trajectory,
    pub gradient: ControlTrajectory,
    /// Largest `‖y_k − ȳ_ref‖_{L∞(Q_T)}` over the iterates of a localized run.
    pub tube_excursion: Option<f64>,
    /// A localized run stopped because every shorter step still left the tube.
    pub tube_blocked: bool,
}

impl SolveReport {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }
}

/// `r(u) = ‖u − P(u − φ_u)‖_{L²(Q_ω)}`.
pub fn stationarity_residual(set: &DiscreteSet, u: &ControlTrajectory, gradient: &ControlTrajectory) -> Result<f64> {
    let probe = set.project(&u.axpy(-1.0, gradient)?)?;
    Ok(u.sub(&probe)?.norm_l2())
}

/// Minimizes `J_T` over `set`.
pub fn solve_pt(problem: &TrackingProblem, set: &DiscreteSet, cfg: &OptimizerConfig) -> Result<SolveReport> {
    run(problem, set, cfg, None)
}

/// Minimizes `J_T` over the controls of `set` whose states stay within `ρ` of
/// `reference` in `L∞(Q_T)`.
pub fn solve_pt_localized(
    problem: &TrackingProblem,
    set: &DiscreteSet,
    cfg: &OptimizerConfig,
    rho: f64,
    reference: &Trajectory,
) -> Result<SolveReport> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("tube radius ρ must be positive, got {rho}")));
    }
    if reference.nodes() != problem.grid().len() || reference.len() != problem.time_grid().steps() + 1 {
        return Err(Error::Shape("reference state does not match the problem grid".into()));
    }
    run(problem, set, cfg, Some((rho, reference)))
}

fn excursion(y: &Trajectory, reference: &Trajectory) -> Result<f64> {
    Ok(y.sub(reference)?.linf())
}

fn run(
    problem: &TrackingProblem,
    set: &DiscreteSet,
    cfg: &OptimizerConfig,
    tube: Option<(f64, &Trajectory)>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let start = match &cfg.initial {
        InitialControl::Zero => problem.zero_control(),
        InitialControl::Given(u) => u.with_space(problem.space().clone())?,
    };
    let mut u = set.project(&start)?;
    let mut eval: ObjectiveEval = problem.evaluate(&u)?;
    let mut tube_max = None;
    if let Some((rho, reference)) = tube {
        let e = excursion(&eval.state, reference)?;
        if e > rho {
            return Err(Error::Domain(format!(
                "initial state leaves the ρ-tube: ‖y − ȳ‖∞ = {e} > {rho}"
            )));
        }
        tube_max = Some(e);
    }

    let mut step = cfg.s0;
    let mut residuals = Vec::new();
    let mut values = Vec::new();
    let mut iterations = 0;
    let mut tube_blocked = false;
    loop {
        let r = stationarity_residual(set, &u, &eval.gradient)?;
        let threshold = cfg.tol * (1.0 + eval.gradient.norm_l2());
        residuals.push(r);
        values.push(eval.value);
        if r <= threshold || iterations == cfg.max_iter || tube_blocked {
            return Ok(SolveReport {
                converged: r <= threshold,
                iterations,
                value: eval.value,
                residuals,
                values,
                threshold,
                state: eval.state,
                adjoint: eval.adjoint,
                gradient: eval.gradient,
                control: u,
                tube_excursion: tube_max,
                tube_blocked,
            });
        }
        let mut left_tube = false;
        let accepted = loop {
            if step < cfg.min_step {
                if left_tube {
                    break None;
                }
                return Err(Error::LineSearchStall {
                    iteration: iterations,
                    step,
                });
            }
            let cand = set.project(&u.axpy(-step, &eval.gradient)?)?;
            let d = cand.sub(&u)?;
            let slope = eval.gradient.inner(&d)?;
            let y = match problem.state(&cand) {
                Ok(y) => y,
                Err(Error::SolverDivergence { .. }) | Err(Error::Singular { .. }) => {
                    step *= cfg.backtrack;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let e = match tube {
                Some((rho, reference)) => {
                    let e = excursion(&y, reference)?;
                    if e > rho {
                        left_tube = true;
                        step *= cfg.backtrack;
                        continue;
                    }
                    Some(e)
                }
                None => None,
            };
            let jc = problem.tracking(&y)?;
            if jc <= eval.value + cfg.armijo * slope {
                break Some((cand, y, e));
            }
            step *= cfg.backtrack;
        };
        let Some((next, next_state, e)) = accepted else {
            tube_blocked = true;
            continue;
        };
        if let (Some(m), Some(e)) = (tube_max.as_mut(), e) {
            *m = f64::max(*m, e);
        }
        let next_eval = problem.evaluate_state(next_state)?;
        let du = next.sub(&u)?;
        let dg = next_eval.gradient.sub(&eval.gradient)?;
        let curvature = du.inner(&dg)?;
        step = if cfg.spectral && curvature > 0.0 {
            (du.inner(&du)? / curvature).clamp(cfg.min_step * 1e3, cfg.max_step())
        } else {
            (step * cfg.growth).min(cfg.max_step())
        };
        u = next;
        eval = next_eval;
        iterations += 1;
    }
}
