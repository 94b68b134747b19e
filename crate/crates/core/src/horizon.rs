//! Horizon continuation: solve the finite-horizon problem on an increasing
//! ladder of horizons, warm-starting each level with the previous solution
//! extended by zero, and measure the truncation error against the solution on
//! the longest (reference) horizon.

use std::sync::Arc;

use crate::controls::{extend_by_zero, extend_with, AdmissibleSet, ControlTrajectory, Envelope};
use crate::error::{Error, Result};
use crate::grid::{norm_l2_q, norm_l2_slice, ControlSpace, TimeGrid, Trajectory, Window};
use crate::objective::TrackingProblem;
use crate::optimizer::{solve_pt, InitialControl, OptimizerConfig};
use crate::pde::ProblemSpec;

/// Increasing horizons sharing one uniform step, plus the reference horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPlan {
    horizons: Vec<f64>,
    reference: f64,
    dt: f64,
}

impl HorizonPlan {
    pub fn new(horizons: Vec<f64>, reference: f64, dt: f64) -> Result<Self> {
        if horizons.is_empty() {
            return Err(Error::Domain("horizon ladder is empty".into()));
        }
        if horizons.windows(2).any(|w| !(w[1] > w[0])) || !(horizons[0] > 0.0) {
            return Err(Error::Domain(
                "horizon ladder must be positive and strictly increasing".into(),
            ));
        }
        let top = *horizons.last().unwrap();
        if !(reference >= top) {
            return Err(Error::Domain(format!(
                "reference horizon {reference} is below the top level {top}"
            )));
        }
        let plan = Self {
            horizons,
            reference,
            dt,
        };
        let grid = plan.reference_grid()?;
        for &t in &plan.horizons {
            grid.prefix(t)?;
        }
        Ok(plan)
    }

    /// `T_k = t0 · 2^k` for `k < levels`.
    pub fn geometric(t0: f64, levels: usize, reference: f64, dt: f64) -> Result<Self> {
        Self::new((0..levels).map(|k| t0 * 2f64.powi(k as i32)).collect(), reference, dt)
    }

    pub fn horizons(&self) -> &[f64] {
        &self.horizons
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn reference_grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.reference, self.dt)
    }

    /// Grid of level `k` (prefix of the reference grid); `k = len` is the reference.
    pub fn level_grid(&self, k: usize) -> Result<TimeGrid> {
        let grid = self.reference_grid()?;
        match self.horizons.get(k) {
            Some(&t) => grid.prefix(t),
            None => Ok(grid),
        }
    }

    /// All solved horizons: the ladder and, if longer, the reference.
    pub fn solved_horizons(&self) -> Vec<f64> {
        let mut out = self.horizons.clone();
        if self.reference > *out.last().unwrap() {
            out.push(self.reference);
        }
        out
    }
}

/// The optimized control of one level.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub horizon: f64,
    pub control: ControlTrajectory,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

/// Tails of the data and the envelope beyond `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailNorms {
    /// `‖g‖_{L²(Ω × (T, ∞))}`.
    pub source: f64,
    /// `‖y_d‖_{L²(Ω × (T, ∞))}`.
    pub target: f64,
    /// `‖h‖_{L²(T, ∞)}`.
    pub envelope_l2: f64,
    /// `‖h‖_{L^p(T, ∞)}`.
    pub envelope_lp: f64,
}

pub fn tail_norms(spec: &ProblemSpec, envelope: &Envelope, from: f64) -> Result<TailNorms> {
    let grid = spec.grid();
    Ok(TailNorms {
        source: spec.source().tail_l2(grid, from)?,
        target: spec.target().tail_l2(grid, from)?,
        envelope_l2: envelope.tail(from, 2.0)?,
        envelope_lp: envelope.tail(from, spec.exponent())?,
    })
}

/// Per-level truncation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMetrics {
    pub horizon: f64,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖y_{u_T} − ȳ_ref‖_{L²(Q_T)}`.
    pub error_l2: f64,
    /// `‖y_{û_T} − ȳ_ref‖_{L∞(Q_ref)}` for the zero extension `û_T`.
    pub extended_error_linf: f64,
    /// `‖y_{u_T}(T)‖_{L²(Ω)}`.
    pub terminal: f64,
    pub tails: TailNorms,
    /// `error_l2` over `terminal + tails.source + tails.target`.
    pub ratio: f64,
    /// `J_T(ū_ref|_{[0,T]})`.
    pub reference_value: f64,
    /// `⟨û_T, w⟩` for the zero extension and for the extension by `ū_ref`.
    pub functional_zero: f64,
    pub functional_extended: f64,
}

#[derive(Debug, Clone)]
pub struct HorizonReport {
    pub levels: Vec<LevelMetrics>,
    /// Reference solution on the longest horizon.
    pub reference: LevelSolution,
    pub reference_state: Trajectory,
    /// `⟨ū_ref, w⟩`.
    pub reference_functional: f64,
}

impl HorizonReport {
    /// `max ratio / min ratio` over the ladder.
    pub fn ratio_spread(&self) -> f64 {
        let (lo, hi) = self.levels.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), l| {
            (lo.min(l.ratio), hi.max(l.ratio))
        });
        hi / lo
    }

    pub fn ratio_median(&self) -> f64 {
        let mut r: Vec<f64> = self.levels.iter().map(|l| l.ratio).collect();
        r.sort_by(f64::total_cmp);
        let n = r.len();
        if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        }
    }

    /// Bounded ratio: spread ≤ 10 and no level above twice the median.
    pub fn ratio_bounded(&self) -> bool {
        let med = self.ratio_median();
        self.levels.iter().all(|l| l.ratio.is_finite())
            && self.ratio_spread() <= 10.0
            && self.levels.iter().all(|l| l.ratio <= 2.0 * med)
    }

    pub fn errors_nonincreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].error_l2 <= w[0].error_l2)
    }

    pub fn extended_errors_decreasing(&self) -> bool {
        self.levels
            .windows(2)
            .all(|w| w[1].extended_error_linf < w[0].extended_error_linf)
    }

    /// `J_T(u_T) ≤ J_T(ū_ref|_{[0,T]})` at every level, up to the optimizer tolerance.
    pub fn dominates_reference(&self, rel: f64) -> bool {
        self.levels
            .iter()
            .all(|l| l.value <= l.reference_value * (1.0 + rel) + rel)
    }

    /// Tested functionals of the two top levels approach the reference value.
    pub fn weak_cauchy(&self) -> bool {
        let n = self.levels.len();
        if n < 2 {
            return true;
        }
        let d = |l: &LevelMetrics| (l.functional_zero - self.reference_functional).abs();
        d(&self.levels[n - 1]) <= d(&self.levels[n - 2])
    }

    /// Gap between the zero and `ū_ref` extensions shrinks along the ladder.
    pub fn extensions_agree(&self) -> bool {
        self.levels.windows(2).all(|w| {
            (w[1].functional_zero - w[1].functional_extended).abs()
                <= (w[0].functional_zero - w[0].functional_extended).abs()
        })
    }
}

/// Slice-wise test function `w(x, t) = (1 + cos(π x₁ / L₁)) e^{−t}` on `Q_ω`.
pub fn test_function(problem: &TrackingProblem) -> ControlTrajectory {
    let space = problem.space().clone();
    let lx = problem.grid().extents()[0];
    let mut w = ControlTrajectory::zeros(space.clone());
    for k in 0..space.slices() {
        let decay = (-space.time(k)).exp();
        let coords: Vec<[f64; 2]> = space.coords().to_vec();
        for (v, x) in w.slice_mut(k).iter_mut().zip(&coords) {
            *v = (1.0 + (std::f64::consts::PI * x[0] / lx).cos()) * decay;
        }
    }
    w
}

/// Solves every level of `plan`, keeping `completed` levels as given.
///
/// Stops after the first non-converged level; the returned list then ends with it.
pub fn solve_levels(
    spec: &ProblemSpec,
    set: &AdmissibleSet,
    plan: &HorizonPlan,
    cfg: &OptimizerConfig,
    completed: Vec<LevelSolution>,
) -> Result<Vec<LevelSolution>> {
    let horizons = plan.solved_horizons();
    if completed.len() > horizons.len() {
        return Err(Error::Shape("more completed levels than the plan holds".into()));
    }
    for (l, &t) in completed.iter().zip(&horizons) {
        if (l.horizon - t).abs() > 1e-10 * t {
            return Err(Error::Alignment(format!(
                "completed level at T = {} does not match plan T = {t}",
                l.horizon
            )));
        }
    }
    let mut out = completed;
    if out.last().is_some_and(|l| !l.converged) {
        return Ok(out);
    }
    for k in out.len()..horizons.len() {
        let problem = TrackingProblem::new(spec.clone(), plan.level_grid(k)?)?;
        let dset = set.discretize(problem.grid(), problem.space())?;
        let initial = match out.last() {
            Some(prev) => InitialControl::Given(extend_by_zero(
                &prev
                    .control
                    .with_space(Arc::new(spec.control_space(&plan.level_grid(k - 1)?)?))?,
                problem.space().clone(),
            )?),
            None => cfg.initial.clone(),
        };
        let level_cfg = OptimizerConfig { initial, ..cfg.clone() };
        let rep = solve_pt(&problem, &dset, &level_cfg)?;
        out.push(LevelSolution {
            horizon: horizons[k],
            converged: rep.converged,
            iterations: rep.iterations,
            residual: rep.residual(),
            control: rep.control,
        });
        if !rep.converged {
            break;
        }
    }
    Ok(out)
}

/// Truncation diagnostics for fully solved levels.
pub fn assess(
    spec: &ProblemSpec,
    set: &AdmissibleSet,
    plan: &HorizonPlan,
    solutions: &[LevelSolution],
) -> Result<HorizonReport> {
    let horizons = plan.solved_horizons();
    if solutions.len() != horizons.len() || solutions.iter().any(|l| !l.converged) {
        return Err(Error::Domain(
            "every level, including the reference, must be converged".into(),
        ));
    }
    let ref_problem = TrackingProblem::new(spec.clone(), plan.reference_grid()?)?;
    let ref_space = ref_problem.space().clone();
    let reference = solutions.last().unwrap().clone();
    let ubar = reference.control.with_space(ref_space.clone())?;
    let ybar = ref_problem.state(&ubar)?;
    let w = test_function(&ref_problem);
    let reference_functional = ubar.inner(&w)?;
    let envelope = set.envelope(spec.grid(), spec.omega());
    let grid = spec.grid();

    let mut levels = Vec::with_capacity(plan.horizons().len());
    for (k, sol) in solutions.iter().take(plan.horizons().len()).enumerate() {
        let tg = plan.level_grid(k)?;
        let problem = TrackingProblem::new(spec.clone(), tg.clone())?;
        let space: Arc<ControlSpace> = problem.space().clone();
        let u = sol.control.with_space(space.clone())?;
        let y = problem.state(&u)?;
        let value = problem.tracking(&y)?;
        let ybar_t = ybar.truncated(tg.steps() + 1);
        let error_l2 = norm_l2_q(&y.sub(&ybar_t)?, grid, &tg, Window::All)?;
        let terminal = norm_l2_slice(y.slice(tg.steps()), grid)?;
        let tails = tail_norms(spec, &envelope, sol.horizon)?;
        let ratio = error_l2 / (terminal + tails.source + tails.target);
        let reference_value = problem.objective(&ubar.truncate_to(space.clone())?)?;
        let ext = extend_by_zero(&u, ref_space.clone())?;
        let extended_error_linf = ref_problem.state(&ext)?.sub(&ybar)?.linf();
        let ext_v = extend_with(&u, ref_space.clone(), Some(&ubar))?;
        levels.push(LevelMetrics {
            horizon: sol.horizon,
            value,
            residual: sol.residual,
            iterations: sol.iterations,
            converged: sol.converged,
            error_l2,
            extended_error_linf,
            terminal,
            tails,
            ratio,
            reference_value,
            functional_zero: ext.inner(&w)?,
            functional_extended: ext_v.inner(&w)?,
        });
    }
    Ok(HorizonReport {
        levels,
        reference,
        reference_state: ybar,
        reference_functional,
    })
}

/// Outcome of [`run_ladder`]: a full report, or the levels up to the first failure.
#[derive(Debug, Clone)]
pub enum LadderOutcome {
    Complete(Box<HorizonReport>),
    Halted {
        solutions: Vec<LevelSolution>,
        level: usize,
    },
}

pub fn run_ladder(
    spec: &ProblemSpec,
    set: &AdmissibleSet,
    plan: &HorizonPlan,
    cfg: &OptimizerConfig,
) -> Result<LadderOutcome> {
    resume_ladder(spec, set, plan, cfg, Vec::new())
}

/// As [`run_ladder`], reusing already solved leading levels.
pub fn resume_ladder(
    spec: &ProblemSpec,
    set: &AdmissibleSet,
    plan: &HorizonPlan,
    cfg: &OptimizerConfig,
    completed: Vec<LevelSolution>,
) -> Result<LadderOutcome> {
    let solutions = solve_levels(spec, set, plan, cfg, completed)?;
    if let Some(level) = solutions.iter().position(|l| !l.converged) {
        return Ok(LadderOutcome::Halted { solutions, level });
    }
    Ok(LadderOutcome::Complete(Box::new(assess(spec, set, plan, &solutions)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SpaceProfile, SpaceTimeData, TimeProfile};
    use crate::grid::Grid;
    use crate::pde::{region_nodes, Nonlinearity, ProblemData};

    fn spec(source: SpaceTimeData) -> ProblemSpec {
        let grid = Grid::interval(1.0, 9).unwrap();
        let omega = region_nodes(&grid, [0.0, 0.0], [0.5, 0.0]);
        ProblemData {
            initial: grid.field(|x| 0.2 * (std::f64::consts::PI * x[0]).cos()),
            grid,
            diffusion: SpaceProfile::Const(0.2),
            reaction: SpaceProfile::Const(0.3),
            nonlinearity: Nonlinearity::Cubic,
            source,
            target: SpaceTimeData::separable(
                "bump:0.8:0.6:0.3".parse().unwrap(),
                TimeProfile::Window { amp: 1.0, end: 1.0 },
            ),
            omega,
            exponent: 2.0,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn plan_validation() {
        assert!(HorizonPlan::new(vec![], 4.0, 0.5).is_err());
        assert!(HorizonPlan::new(vec![2.0, 1.0], 4.0, 0.5).is_err());
        assert!(HorizonPlan::new(vec![1.0, 2.0], 1.5, 0.5).is_err());
        assert!(matches!(
            HorizonPlan::new(vec![1.0, 2.2], 4.0, 0.5),
            Err(Error::Alignment(_))
        ));
        let p = HorizonPlan::geometric(1.0, 3, 8.0, 0.25).unwrap();
        assert_eq!(p.horizons(), &[1.0, 2.0, 4.0]);
        assert_eq!(p.solved_horizons(), vec![1.0, 2.0, 4.0, 8.0]);
        assert!(p.level_grid(1).unwrap().is_prefix_of(&p.level_grid(2).unwrap()));
        assert_eq!(p.level_grid(3).unwrap().horizon(), 8.0);
    }

    #[test]
    fn closed_form_tails() {
        let s = spec(SpaceTimeData::separable(
            SpaceProfile::Const(1.0),
            TimeProfile::Exp { amp: 1.0, rate: 1.0 },
        ));
        let env = AdmissibleSet::Ball {
            gamma: TimeProfile::Window { amp: 0.1, end: 2.0 },
        }
        .envelope(s.grid(), s.omega());
        let t = tail_norms(&s, &env, 3.0).unwrap();
        assert!((t.source - (-3.0f64).exp() / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((t.target, t.envelope_l2, t.envelope_lp), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_level_matches_direct_solve() {
        let s = spec(SpaceTimeData::zero());
        let set = AdmissibleSet::Ball {
            gamma: TimeProfile::Exp { amp: 0.3, rate: 0.5 },
        };
        let plan = HorizonPlan::new(vec![2.0], 2.0, 0.125).unwrap();
        let cfg = OptimizerConfig::default();
        let LadderOutcome::Complete(rep) = run_ladder(&s, &set, &plan, &cfg).unwrap() else {
            panic!("ladder halted");
        };
        let problem = TrackingProblem::new(s.clone(), plan.level_grid(0).unwrap()).unwrap();
        let dset = set.discretize(problem.grid(), problem.space()).unwrap();
        let direct = solve_pt(&problem, &dset, &cfg).unwrap();
        assert_eq!(rep.levels.len(), 1);
        assert_eq!(rep.levels[0].value, direct.value);
        assert_eq!(rep.levels[0].error_l2, 0.0);
    }

    #[test]
    fn ladder_errors_shrink_and_resume_replays() {
        let s = spec(SpaceTimeData::zero());
        let set = AdmissibleSet::Ball {
            gamma: TimeProfile::Exp { amp: 0.3, rate: 0.3 },
        };
        let plan = HorizonPlan::new(vec![1.0, 2.0, 4.0], 8.0, 0.125).unwrap();
        let cfg = OptimizerConfig::default();
        let LadderOutcome::Complete(rep) = run_ladder(&s, &set, &plan, &cfg).unwrap() else {
            panic!("ladder halted");
        };
        assert!(rep.errors_nonincreasing());
        assert!(rep.dominates_reference(1e-8));
        for l in &rep.levels {
            assert!(l.ratio.is_finite() && l.terminal >= 0.0 && l.tails.target == 0.0);
        }
        let solutions = solve_levels(&s, &set, &plan, &cfg, Vec::new()).unwrap();
        let resumed = solve_levels(&s, &set, &plan, &cfg, solutions[..2].to_vec()).unwrap();
        for (a, b) in solutions.iter().zip(&resumed) {
            assert_eq!(a.control.values(), b.control.values());
            assert_eq!(a.iterations, b.iterations);
        }
    }

    #[test]
    fn nonconverged_level_halts() {
        let s = spec(SpaceTimeData::zero());
        let set = AdmissibleSet::Ball {
            gamma: TimeProfile::Exp { amp: 0.3, rate: 0.3 },
        };
        let plan = HorizonPlan::new(vec![1.0, 2.0], 4.0, 0.125).unwrap();
        let cfg = OptimizerConfig {
            max_iter: 1,
            ..Default::default()
        };
        match run_ladder(&s, &set, &plan, &cfg).unwrap() {
            LadderOutcome::Halted { solutions, level } => {
                assert_eq!(level, 0);
                assert_eq!(solutions.len(), 1);
            }
            LadderOutcome::Complete(_) => panic!("expected a halt"),
        }
    }
}
