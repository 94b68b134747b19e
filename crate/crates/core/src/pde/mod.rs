//! The semilinear parabolic state equation and its sensitivity, adjoint and
//! steady solves.

mod nonlinearity;
mod operator;
mod solve;

pub use nonlinearity::Nonlinearity;
pub use operator::EllipticOperator;
pub use solve::{
    forward_with_source, solve_adjoint, solve_forward, solve_linearized, solve_psi, solve_second_order, LinearSource,
    Linearization, NewtonSettings, Psi,
};

use crate::data::{SpaceProfile, SpaceTimeData};
use crate::error::{Error, Result};
use crate::grid::{ControlSpace, Field, Grid, TimeGrid, Trajectory};

/// Nodes of `grid` inside the closed box `[lo, hi]` (the second axis is ignored in 1D).
pub fn region_nodes(grid: &Grid, lo: [f64; 2], hi: [f64; 2]) -> Vec<usize> {
    let eps = 1e-12;
    let axes = grid.dim();
    grid.coords()
        .iter()
        .enumerate()
        .filter(|(_, x)| (0..axes).all(|a| x[a] >= lo[a] - eps && x[a] <= hi[a] + eps))
        .map(|(i, _)| i)
        .collect()
}

/// Plain description from which a [`ProblemSpec`] is validated and assembled.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub grid: Grid,
    pub diffusion: SpaceProfile,
    pub reaction: SpaceProfile,
    pub nonlinearity: Nonlinearity,
    pub source: SpaceTimeData,
    pub target: SpaceTimeData,
    pub initial: Field,
    pub omega: Vec<usize>,
    pub exponent: f64,
}

impl ProblemData {
    pub fn build(self) -> Result<ProblemSpec> {
        ProblemSpec::new(self)
    }
}

/// Continuous problem data on a fixed spatial grid, with the assembled operator.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    data: ProblemData,
    operator: EllipticOperator,
}

impl ProblemSpec {
    pub fn new(data: ProblemData) -> Result<Self> {
        let grid = &data.grid;
        if data.initial.len() != grid.len() {
            return Err(Error::Shape(format!(
                "initial state has {} values for {} nodes",
                data.initial.len(),
                grid.len()
            )));
        }
        if data.omega.is_empty() {
            return Err(Error::Domain("control region ω has no nodes".into()));
        }
        if data.omega.iter().any(|&i| i >= grid.len()) || data.omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("control region must list increasing node indices".into()));
        }
        let p = data.exponent;
        let ok = if grid.dim() == 1 {
            p >= 2.0
        } else {
            p > 4.0 / (4.0 - grid.dim() as f64)
        };
        if !(ok && p.is_finite()) {
            return Err(Error::Domain(format!(
                "exponent p = {p} is outside the admissible range for n = {}",
                grid.dim()
            )));
        }
        let operator = EllipticOperator::assemble(grid, &data.diffusion, &data.reaction)?;
        Ok(Self { data, operator })
    }

    pub fn grid(&self) -> &Grid {
        &self.data.grid
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.operator
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.data.nonlinearity
    }

    pub fn source(&self) -> &SpaceTimeData {
        &self.data.source
    }

    pub fn target(&self) -> &SpaceTimeData {
        &self.data.target
    }

    pub fn initial(&self) -> &Field {
        &self.data.initial
    }

    pub fn omega(&self) -> &[usize] {
        &self.data.omega
    }

    pub fn exponent(&self) -> f64 {
        self.data.exponent
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn control_space(&self, tg: &TimeGrid) -> Result<ControlSpace> {
        ControlSpace::new(self.grid(), self.omega(), tg)
    }

    pub fn source_on(&self, tg: &TimeGrid) -> Result<Trajectory> {
        self.data.source.eval_on(self.grid(), tg)
    }

    pub fn target_on(&self, tg: &TimeGrid) -> Result<Trajectory> {
        self.data.target.eval_on(self.grid(), tg)
    }

    /// Same problem with another tracking target.
    pub fn with_target(&self, target: SpaceTimeData) -> Self {
        let mut out = self.clone();
        out.data.target = target;
        out
    }

    pub fn with_source(&self, source: SpaceTimeData) -> Self {
        let mut out = self.clone();
        out.data.source = source;
        out
    }

    pub fn with_initial(&self, initial: Field) -> Result<Self> {
        let mut data = self.data.clone();
        data.initial = initial;
        Self::new(data)
    }
}
