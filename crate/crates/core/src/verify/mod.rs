//! Optimality conditions, second-order conditions and state/adjoint estimates
//! evaluated as sampled checks at a computed solution, plus a dense reference
//! implementation for tiny instances.
//!
//! Every check produces [`CheckRow`]s tagged with an [`Anchor`]. Estimates whose
//! constants are only known to exist are calibrated on one batch and must hold
//! on a disjoint held-out batch with twice the calibrated constant.

mod appendix;
mod first_order;
mod oracle;
mod sampling;
mod second_order;

pub use appendix::{check_appendix, check_derivatives, check_l1_bound};
pub use first_order::check_first_order;
pub use oracle::{oracle_dense, DenseOracle, ORACLE_MAX_NODES, ORACLE_MAX_STEPS};
pub use sampling::{TubeSample, TubeSampler};
pub use second_order::{check_quadratic_growth, check_ssc};

use std::fmt;

use crate::controls::{ControlTrajectory, DiscreteSet};
use crate::error::Result;
use crate::horizon::HorizonReport;
use crate::objective::{ObjectiveEval, TrackingProblem};

/// The statement a check row exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Anchor {
    ProjectedStationarity,
    VariationalInequality,
    BallInactiveSlice,
    BallCollinearity,
    BallMultiplier,
    BoxSignStructure,
    AdjointDuality,
    GradientTaylor,
    HessianTaylor,
    HessianSymmetry,
    BoxSecondOrder,
    BallSecondOrder,
    BoxQuadraticGrowth,
    BallQuadraticGrowth,
    LinearizedStability,
    LinearizedPerturbation,
    TaylorRemainderL2,
    TaylorRemainderLinf,
    LinearizedComparison,
    LinearizedDifferenceL2,
    LinearizedDifferenceLinf,
    StateByLinearized,
    TubeL2Smallness,
    AdjointContinuity,
    AdjointTailDecay,
    HessianBound,
    HessianContinuity,
    SegmentTube,
    LinearizedL1Bound,
    TruncationErrorRatio,
    TruncationErrorMonotone,
    ReferenceDomination,
    WeakLimitCauchy,
    ExtensionEquivalence,
    StateConvergence,
}

impl Anchor {
    pub const ALL: [Anchor; 35] = [
        Anchor::ProjectedStationarity,
        Anchor::VariationalInequality,
        Anchor::BallInactiveSlice,
        Anchor::BallCollinearity,
        Anchor::BallMultiplier,
        Anchor::BoxSignStructure,
        Anchor::AdjointDuality,
        Anchor::GradientTaylor,
        Anchor::HessianTaylor,
        Anchor::HessianSymmetry,
        Anchor::BoxSecondOrder,
        Anchor::BallSecondOrder,
        Anchor::BoxQuadraticGrowth,
        Anchor::BallQuadraticGrowth,
        Anchor::LinearizedStability,
        Anchor::LinearizedPerturbation,
        Anchor::TaylorRemainderL2,
        Anchor::TaylorRemainderLinf,
        Anchor::LinearizedComparison,
        Anchor::LinearizedDifferenceL2,
        Anchor::LinearizedDifferenceLinf,
        Anchor::StateByLinearized,
        Anchor::TubeL2Smallness,
        Anchor::AdjointContinuity,
        Anchor::AdjointTailDecay,
        Anchor::HessianBound,
        Anchor::HessianContinuity,
        Anchor::SegmentTube,
        Anchor::LinearizedL1Bound,
        Anchor::TruncationErrorRatio,
        Anchor::TruncationErrorMonotone,
        Anchor::ReferenceDomination,
        Anchor::WeakLimitCauchy,
        Anchor::ExtensionEquivalence,
        Anchor::StateConvergence,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Anchor::ProjectedStationarity => "projected-stationarity",
            Anchor::VariationalInequality => "variational-inequality",
            Anchor::BallInactiveSlice => "ball-inactive-slice",
            Anchor::BallCollinearity => "ball-collinearity",
            Anchor::BallMultiplier => "ball-multiplier",
            Anchor::BoxSignStructure => "box-sign-structure",
            Anchor::AdjointDuality => "adjoint-duality",
            Anchor::GradientTaylor => "gradient-taylor",
            Anchor::HessianTaylor => "hessian-taylor",
            Anchor::HessianSymmetry => "hessian-symmetry",
            Anchor::BoxSecondOrder => "box-second-order",
            Anchor::BallSecondOrder => "ball-second-order",
            Anchor::BoxQuadraticGrowth => "box-quadratic-growth",
            Anchor::BallQuadraticGrowth => "ball-quadratic-growth",
            Anchor::LinearizedStability => "linearized-stability",
            Anchor::LinearizedPerturbation => "linearized-perturbation",
            Anchor::TaylorRemainderL2 => "taylor-remainder-l2",
            Anchor::TaylorRemainderLinf => "taylor-remainder-linf",
            Anchor::LinearizedComparison => "linearized-comparison",
            Anchor::LinearizedDifferenceL2 => "linearized-difference-l2",
            Anchor::LinearizedDifferenceLinf => "linearized-difference-linf",
            Anchor::StateByLinearized => "state-by-linearized",
            Anchor::TubeL2Smallness => "tube-l2-smallness",
            Anchor::AdjointContinuity => "adjoint-continuity",
            Anchor::AdjointTailDecay => "adjoint-tail-decay",
            Anchor::HessianBound => "hessian-bound",
            Anchor::HessianContinuity => "hessian-continuity",
            Anchor::SegmentTube => "segment-tube",
            Anchor::LinearizedL1Bound => "linearized-l1-bound",
            Anchor::TruncationErrorRatio => "truncation-error-ratio",
            Anchor::TruncationErrorMonotone => "truncation-error-monotone",
            Anchor::ReferenceDomination => "reference-domination",
            Anchor::WeakLimitCauchy => "weak-limit-cauchy",
            Anchor::ExtensionEquivalence => "extension-equivalence",
            Anchor::StateConvergence => "state-convergence",
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Passed, but on fewer samples than requested.
    Warn,
    /// Nothing could be tested.
    Inconclusive,
    /// A reported measurement without a verdict.
    Info,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Warn => "warn",
            Status::Inconclusive => "inconclusive",
            Status::Info => "info",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Status::Fail | Status::Inconclusive)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub anchor: Anchor,
    pub status: Status,
    pub value: f64,
    pub threshold: f64,
    /// Calibrated or computed constant, when the check has one.
    pub constant: Option<f64>,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, anchor: Anchor, status: Status, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            anchor,
            status,
            value,
            threshold,
            constant: None,
        }
    }

    /// `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, anchor: Anchor, value: f64, threshold: f64) -> Self {
        Self::new(name, anchor, Status::from_bool(value <= threshold), value, threshold)
    }

    /// `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, anchor: Anchor, value: f64, threshold: f64) -> Self {
        Self::new(name, anchor, Status::from_bool(value >= threshold), value, threshold)
    }

    pub fn info(name: impl Into<String>, anchor: Anchor, value: f64) -> Self {
        Self::new(name, anchor, Status::Info, value, f64::NAN)
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = Some(c);
        self
    }

    pub fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn extend(&mut self, rows: impl IntoIterator<Item = CheckRow>) {
        self.rows.extend(rows);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| !r.status.is_failure())
    }

    pub fn failures(&self) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| r.status.is_failure()).collect()
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn by_anchor(&self, anchor: Anchor) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(move |r| r.anchor == anchor)
    }
}

/// Which check groups to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckToggles {
    pub first_order: bool,
    pub derivatives: bool,
    pub ssc: bool,
    pub growth: bool,
    pub appendix: bool,
}

impl Default for CheckToggles {
    fn default() -> Self {
        Self {
            first_order: true,
            derivatives: true,
            ssc: true,
            growth: true,
            appendix: true,
        }
    }
}

impl CheckToggles {
    pub fn none() -> Self {
        Self {
            first_order: false,
            derivatives: false,
            ssc: false,
            growth: false,
            appendix: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random feasible controls in the variational inequality.
    pub vi_samples: usize,
    /// Critical directions for the second-order check.
    pub directions: usize,
    /// Size of each calibration and held-out batch.
    pub samples: usize,
    /// Random directions for the `L¹` bound.
    pub l1_samples: usize,
    /// Cone parameter relative to `‖φ̄‖_∞`.
    pub tau: f64,
    /// State tube radius `ε`; `None` picks `0.05 max(‖ȳ‖_∞, 0.1)`.
    pub tube: Option<f64>,
    /// Relative threshold separating active from inactive slices and nodes.
    pub activity: f64,
    pub collinearity_tol: f64,
    /// Level `ρ` that `‖φ̄(t)‖_∞` must fall below, and stay below, after the data support.
    pub tail_level: f64,
    /// Optimizer tolerance the solution was computed with.
    pub stationarity_tol: f64,
    pub toggles: CheckToggles,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vi_samples: 200,
            directions: 50,
            samples: 100,
            l1_samples: 100,
            tau: 0.05,
            tube: None,
            activity: 1e-3,
            collinearity_tol: 1e-6,
            tail_level: 1e-6,
            stationarity_tol: 1e-8,
            toggles: CheckToggles::default(),
        }
    }
}

/// A candidate solution with a freshly computed state, adjoint and gradient.
#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub problem: &'a TrackingProblem,
    pub set: &'a DiscreteSet,
    pub control: ControlTrajectory,
    pub eval: ObjectiveEval,
}

impl<'a> Candidate<'a> {
    pub fn new(problem: &'a TrackingProblem, set: &'a DiscreteSet, control: &ControlTrajectory) -> Result<Self> {
        let control = control.with_space(problem.space().clone())?;
        let eval = problem.evaluate(&control)?;
        Ok(Self {
            problem,
            set,
            control,
            eval,
        })
    }

    /// `φ̄` restricted to `Q_ω`.
    pub fn gradient(&self) -> &ControlTrajectory {
        &self.eval.gradient
    }

    pub fn tube_radius(&self, cfg: &VerifyConfig) -> f64 {
        cfg.tube.unwrap_or_else(|| 0.05 * self.eval.state.linf().max(0.1))
    }
}

/// Runs every enabled check group.
pub fn verify_all(candidate: &Candidate<'_>, cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let t = cfg.toggles;
    if t.first_order {
        report.extend(check_first_order(candidate, cfg)?);
    }
    if t.derivatives {
        report.extend(check_derivatives(candidate, cfg)?);
    }
    if t.ssc {
        report.extend(check_ssc(candidate, cfg)?);
    }
    if t.growth {
        report.extend(check_quadratic_growth(candidate, cfg)?);
    }
    if t.appendix {
        report.extend(check_appendix(candidate, cfg)?);
    }
    Ok(report)
}

/// Verdict rows for a horizon ladder.
pub fn horizon_rows(report: &HorizonReport) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    rows.push(
        CheckRow::at_most(
            "horizon.ratio_spread",
            Anchor::TruncationErrorRatio,
            report.ratio_spread(),
            10.0,
        )
        .with_status(Status::from_bool(report.ratio_bounded()))
        .with_constant(report.ratio_median()),
    );
    let worst_step = report
        .levels
        .windows(2)
        .map(|w| w[1].error_l2 - w[0].error_l2)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.push(
        CheckRow::at_most(
            "horizon.error_monotone",
            Anchor::TruncationErrorMonotone,
            worst_step.max(0.0),
            0.0,
        )
        .with_status(Status::from_bool(report.errors_nonincreasing())),
    );
    let domination = report
        .levels
        .iter()
        .map(|l| l.value - l.reference_value)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.push(
        CheckRow::at_most(
            "horizon.reference_domination",
            Anchor::ReferenceDomination,
            domination,
            0.0,
        )
        .with_status(Status::from_bool(report.dominates_reference(1e-8))),
    );
    let n = report.levels.len();
    let gap = |k: usize| (report.levels[k].functional_zero - report.reference_functional).abs();
    if n >= 2 {
        rows.push(
            CheckRow::at_most("horizon.weak_cauchy", Anchor::WeakLimitCauchy, gap(n - 1), gap(n - 2))
                .with_status(Status::from_bool(report.weak_cauchy())),
        );
    } else {
        rows.push(CheckRow::new(
            "horizon.weak_cauchy",
            Anchor::WeakLimitCauchy,
            Status::Inconclusive,
            f64::NAN,
            f64::NAN,
        ));
    }
    let ext_gap = report
        .levels
        .last()
        .map(|l| (l.functional_zero - l.functional_extended).abs())
        .unwrap_or(f64::NAN);
    rows.push(
        CheckRow::at_most(
            "horizon.extension_gap",
            Anchor::ExtensionEquivalence,
            ext_gap,
            report
                .levels
                .first()
                .map(|l| (l.functional_zero - l.functional_extended).abs())
                .unwrap_or(f64::NAN),
        )
        .with_status(Status::from_bool(report.extensions_agree())),
    );
    let last = report.levels.last().map(|l| l.extended_error_linf).unwrap_or(f64::NAN);
    let first = report.levels.first().map(|l| l.extended_error_linf).unwrap_or(f64::NAN);
    rows.push(
        CheckRow::at_most("horizon.state_convergence", Anchor::StateConvergence, last, first)
            .with_status(Status::from_bool(report.extended_errors_decreasing())),
    );
    rows
}

/// Calibrates `sup ratio` on `calibration` and checks `held_out` against twice it.
///
/// `slack` absorbs rounding when the calibrated constant is zero up to noise.
pub(crate) fn honor_upper(name: &str, anchor: Anchor, calibration: &[f64], held_out: &[f64], slack: f64) -> CheckRow {
    if calibration.is_empty() || held_out.is_empty() {
        return CheckRow::new(name, anchor, Status::Inconclusive, f64::NAN, f64::NAN);
    }
    let c = calibration.iter().copied().fold(0.0f64, f64::max);
    let worst = held_out.iter().copied().fold(0.0f64, f64::max);
    let threshold = 2.0 * c + slack;
    CheckRow::new(
        name,
        anchor,
        Status::from_bool(worst.is_finite() && worst <= threshold),
        worst,
        threshold,
    )
    .with_constant(c)
}
