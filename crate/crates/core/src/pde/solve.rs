//! Implicit Euler solves.
//!
//! Step `m` (from `t_{m-1}` to `t_m`) of the state equation reads, in weighted form,
//!
//! ```text
//! W (y_m − y_{m−1}) + dt_m [S y_m + W f(y_m)] = dt_m W (g_m + χ_ω u_{m−1})
//! ```
//!
//! where `u_{m−1}` is control slice `m − 1`. Linearized and second-order
//! sensitivities reuse the step matrices `B_m = W + dt_m (S + W diag f'(y_m))`.
//! The adjoint is the exact transpose of the linearized recursion with respect
//! to the trapezoidal `L²(Q)` product on states and the slice product on
//! controls; it is stored so that node `k` carries the gradient of control
//! slice `k`, and its terminal node is zero.

use crate::controls::ControlTrajectory;
use crate::error::{Error, Result};
use crate::grid::{Field, TimeGrid, Trajectory};
use crate::linalg::BandedCholesky;

use super::ProblemSpec;

/// Per-step Newton controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Absolute tolerance on the discrete `L²(Ω)` norm of the step residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 25,
        }
    }
}

fn check_grid_shapes(spec: &ProblemSpec, traj: &Trajectory, tg: &TimeGrid, what: &str) -> Result<()> {
    if traj.nodes() != spec.grid().len() || traj.len() != tg.steps() + 1 {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected {}x{}",
            traj.len(),
            traj.nodes(),
            tg.steps() + 1,
            spec.grid().len()
        )));
    }
    Ok(())
}

fn check_control(spec: &ProblemSpec, u: &ControlTrajectory, tg: &TimeGrid) -> Result<()> {
    let sp = u.space();
    if sp.nodes() != spec.omega() || sp.slices() != tg.steps() {
        return Err(Error::Shape(format!(
            "control has {} slices on {} nodes, expected {} on {}",
            sp.slices(),
            sp.width(),
            tg.steps(),
            spec.omega().len()
        )));
    }
    Ok(())
}

/// Forward state for control `u`, computing the source on `tg`.
pub fn solve_forward(spec: &ProblemSpec, u: &ControlTrajectory, tg: &TimeGrid) -> Result<Trajectory> {
    let source = spec.source_on(tg)?;
    forward_with_source(spec, &source, u, tg, NewtonSettings::default())
}

/// Forward state with a precomputed source trajectory.
pub fn forward_with_source(
    spec: &ProblemSpec,
    source: &Trajectory,
    u: &ControlTrajectory,
    tg: &TimeGrid,
    newton: NewtonSettings,
) -> Result<Trajectory> {
    check_grid_shapes(spec, source, tg, "source")?;
    check_control(spec, u, tg)?;
    let n = spec.grid().len();
    let op = spec.operator();
    let w = op.weights();
    let f = spec.nonlinearity();
    let omega = spec.omega();
    let mut y = Trajectory::zeros(n, tg.steps() + 1);
    y.slice_mut(0).copy_from_slice(spec.initial());

    let mut rhs = vec![0.0; n];
    let mut fy = vec![0.0; n];
    let mut d = vec![0.0; n];
    for m in 1..=tg.steps() {
        let dt = tg.dt(m);
        let g = source.slice(m);
        let ctrl = u.slice(m - 1);
        {
            let prev = y.slice(m - 1);
            for i in 0..n {
                rhs[i] = prev[i] + dt * g[i];
            }
        }
        for (c, &node) in omega.iter().enumerate() {
            rhs[node] += dt * ctrl[c];
        }
        rhs.iter_mut().zip(w).for_each(|(r, wi)| *r *= wi);

        let base = op.step_matrix_plain(dt);
        let mut cur: Vec<f64> = y.slice(m - 1).to_vec();
        let mut iterations = 0;
        loop {
            for i in 0..n {
                fy[i] = f.value(cur[i]);
            }
            let mut res = base.mul(&cur);
            let mut scale = 0.0;
            for i in 0..n {
                let b_abs = base.diag(i).abs() * cur[i].abs();
                res[i] += dt * w[i] * fy[i] - rhs[i];
                let s = (b_abs + dt * w[i] * fy[i].abs() + rhs[i].abs()) / w[i];
                scale += w[i] * s * s;
            }
            let norm = res.iter().zip(w).map(|(r, wi)| r * r / wi).sum::<f64>().sqrt();
            // Rounding floor of the residual evaluation itself.
            let floor = 64.0 * f64::EPSILON * scale.sqrt();
            if norm <= newton.tol.max(floor) {
                break;
            }
            if iterations == newton.max_iter || !norm.is_finite() {
                return Err(Error::SolverDivergence {
                    step: m,
                    residual: norm,
                    iterations,
                });
            }
            for i in 0..n {
                d[i] = f.d1(cur[i]);
            }
            let jac = op.step_matrix(dt, &d).cholesky()?;
            jac.solve_in_place(&mut res);
            cur.iter_mut().zip(&res).for_each(|(c, r)| *c -= r);
            iterations += 1;
        }
        y.slice_mut(m).copy_from_slice(&cur);
    }
    Ok(y)
}

/// Right-hand side of a linearized solve.
#[derive(Debug, Clone, Copy)]
pub enum LinearSource<'a> {
    /// `v χ_ω` from control slices.
    Control(&'a ControlTrajectory),
    /// A nodal source on all of `Ω`, slice `m` feeding step `m`.
    Field(&'a Trajectory),
}

/// Step factorizations frozen at a forward trajectory `y`.
#[derive(Debug, Clone)]
pub struct Linearization {
    tg: TimeGrid,
    weights: Vec<f64>,
    omega: Vec<usize>,
    factors: Vec<BandedCholesky>,
    curvature: Trajectory,
}

impl Linearization {
    pub fn new(spec: &ProblemSpec, y: &Trajectory, tg: &TimeGrid) -> Result<Self> {
        check_grid_shapes(spec, y, tg, "state")?;
        let op = spec.operator();
        let f = spec.nonlinearity();
        let mut factors = Vec::with_capacity(tg.steps());
        for m in 1..=tg.steps() {
            let d: Vec<f64> = y.slice(m).iter().map(|&s| f.d1(s)).collect();
            factors.push(op.step_matrix(tg.dt(m), &d).cholesky()?);
        }
        Ok(Self {
            tg: tg.clone(),
            weights: op.weights().to_vec(),
            omega: spec.omega().to_vec(),
            factors,
            curvature: y.map(|s| f.d2(s)),
        })
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    fn n(&self) -> usize {
        self.weights.len()
    }

    /// Forward recursion `B_m z_m = W z_{m−1} + dt_m W s_m`, `z_0 = 0`.
    fn forward(&self, mut source: impl FnMut(usize, &mut [f64])) -> Trajectory {
        let n = self.n();
        let mut z = Trajectory::zeros(n, self.tg.steps() + 1);
        let mut s = vec![0.0; n];
        for m in 1..=self.tg.steps() {
            let dt = self.tg.dt(m);
            s.iter_mut().for_each(|v| *v = 0.0);
            source(m, &mut s);
            let mut rhs: Vec<f64> = {
                let prev = z.slice(m - 1);
                (0..n).map(|i| self.weights[i] * (prev[i] + dt * s[i])).collect()
            };
            self.factors[m - 1].solve_in_place(&mut rhs);
            z.slice_mut(m).copy_from_slice(&rhs);
        }
        z
    }

    /// Linearized state `z` solving `ż + Az + f'(y) z = source`, `z(0) = 0`.
    pub fn linearized(&self, source: LinearSource<'_>) -> Result<Trajectory> {
        match source {
            LinearSource::Control(v) => {
                if v.space().nodes() != self.omega.as_slice() || v.space().slices() != self.tg.steps() {
                    return Err(Error::Shape("direction does not match the control space".into()));
                }
                Ok(self.forward(|m, s| {
                    for (c, &node) in self.omega.iter().enumerate() {
                        s[node] = v.slice(m - 1)[c];
                    }
                }))
            }
            LinearSource::Field(src) => {
                if src.nodes() != self.n() || src.len() != self.tg.steps() + 1 {
                    return Err(Error::Shape("source trajectory has the wrong shape".into()));
                }
                Ok(self.forward(|m, s| s.copy_from_slice(src.slice(m))))
            }
        }
    }

    /// Second-order sensitivity with source `−f''(y) z₁ z₂`.
    pub fn second_order(&self, z1: &Trajectory, z2: &Trajectory) -> Result<Trajectory> {
        for z in [z1, z2] {
            if z.nodes() != self.n() || z.len() != self.tg.steps() + 1 {
                return Err(Error::Shape("sensitivity has the wrong shape".into()));
            }
        }
        Ok(self.forward(|m, s| {
            let (a, b, c) = (z1.slice(m), z2.slice(m), self.curvature.slice(m));
            for i in 0..s.len() {
                s[i] = -c[i] * a[i] * b[i];
            }
        }))
    }

    /// Transpose of the linearized map applied to `rhs`:
    /// `B_m φ_{m−1} = W φ_m + c_m W rhs_m`, `φ_M = 0`, with trapezoid weights `c_m`.
    pub fn adjoint(&self, rhs: &Trajectory) -> Result<Trajectory> {
        let n = self.n();
        if rhs.nodes() != n || rhs.len() != self.tg.steps() + 1 {
            return Err(Error::Shape("adjoint source has the wrong shape".into()));
        }
        let steps = self.tg.steps();
        let mut phi = Trajectory::zeros(n, steps + 1);
        for m in (1..=steps).rev() {
            let c = self.tg.trapezoid_weight(m);
            let mut b: Vec<f64> = {
                let next = phi.slice(m);
                let r = rhs.slice(m);
                (0..n).map(|i| self.weights[i] * (next[i] + c * r[i])).collect()
            };
            self.factors[m - 1].solve_in_place(&mut b);
            phi.slice_mut(m - 1).copy_from_slice(&b);
        }
        Ok(phi)
    }

    /// `f''(y)` at every node.
    pub fn curvature(&self) -> &Trajectory {
        &self.curvature
    }
}

/// Linearized state `z_{u,v}` around the forward solution `y`.
pub fn solve_linearized(spec: &ProblemSpec, y: &Trajectory, v: LinearSource<'_>, tg: &TimeGrid) -> Result<Trajectory> {
    Linearization::new(spec, y, tg)?.linearized(v)
}

/// Second-order sensitivity `z_{u,(v₁,v₂)}` from the linearized states `z₁, z₂`.
pub fn solve_second_order(
    spec: &ProblemSpec,
    y: &Trajectory,
    z1: &Trajectory,
    z2: &Trajectory,
    tg: &TimeGrid,
) -> Result<Trajectory> {
    Linearization::new(spec, y, tg)?.second_order(z1, z2)
}

/// Adjoint state for the tracking residual `y − y_d`.
pub fn solve_adjoint(spec: &ProblemSpec, y: &Trajectory, tg: &TimeGrid) -> Result<Trajectory> {
    let yd = spec.target_on(tg)?;
    let residual = y.sub(&yd)?;
    Linearization::new(spec, y, tg)?.adjoint(&residual)
}

/// Steady Neumann solution of `Aψ = 1` and its sup norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Psi {
    pub field: Field,
    pub sup: f64,
}

pub fn solve_psi(spec: &ProblemSpec) -> Result<Psi> {
    let op = spec.operator();
    let mut rhs = op.weights().to_vec();
    op.matrix().cholesky()?.solve_in_place(&mut rhs);
    let sup = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Psi { field: Field(rhs), sup })
}
