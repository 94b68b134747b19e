//! Dense reference solver for tiny instances.
//!
//! The state is computed with dense Newton steps and LU solves, the adjoint by
//! one dense solve of the transposed space-time system, and the gradient
//! without any adjoint, by accumulating the forward sensitivity of every
//! control degree of freedom. The operator matrix is taken from the assembled
//! operator; everything downstream of it is independent of the banded solvers.

use nalgebra::{DMatrix, DVector};

use crate::controls::ControlTrajectory;
use crate::error::{Error, Result};
use crate::grid::{TimeGrid, Trajectory};
use crate::pde::ProblemSpec;

pub const ORACLE_MAX_NODES: usize = 64;
pub const ORACLE_MAX_STEPS: usize = 32;
/// Largest control dimension for which [`DenseOracle::hessian_matrix`] is assembled.
pub const ORACLE_MAX_HESSIAN: usize = 96;

#[derive(Debug, Clone)]
pub struct DenseOracle {
    tg: TimeGrid,
    u: ControlTrajectory,
    w: DVector<f64>,
    omega: Vec<usize>,
    target: Vec<DVector<f64>>,
    state: Vec<DVector<f64>>,
    /// `B_m = W + dt_m (S + W diag f'(y_m))`.
    steps: Vec<DMatrix<f64>>,
    /// `f''(y_m)`.
    curvature: Vec<DVector<f64>>,
}

fn to_traj(v: &[DVector<f64>]) -> Trajectory {
    Trajectory::from_slices(v.iter().map(|x| x.as_slice().to_vec()).collect()).expect("nonempty")
}

/// Builds the dense reference bundle at control `u`.
pub fn oracle_dense(spec: &ProblemSpec, u: &ControlTrajectory, tg: &TimeGrid) -> Result<DenseOracle> {
    let n = spec.grid().len();
    if n > ORACLE_MAX_NODES || tg.steps() > ORACLE_MAX_STEPS {
        return Err(Error::OracleTooLarge(format!(
            "{n} nodes x {} steps exceeds the {ORACLE_MAX_NODES} x {ORACLE_MAX_STEPS} cap",
            tg.steps()
        )));
    }
    let space = spec.control_space(tg)?;
    if u.space().nodes() != space.nodes() || u.space().slices() != space.slices() {
        return Err(Error::Shape("control does not match the oracle grid".into()));
    }
    let op = spec.operator();
    let s = DMatrix::from_fn(n, n, |i, j| op.matrix().get(i, j));
    let w = DVector::from_column_slice(op.weights());
    let wm = DMatrix::from_diagonal(&w);
    let f = spec.nonlinearity();
    let omega = spec.omega().to_vec();
    let g = spec.source_on(tg)?;
    let yd = spec.target_on(tg)?;

    let mut state = vec![DVector::from_column_slice(spec.initial())];
    let mut steps = Vec::with_capacity(tg.steps());
    for m in 1..=tg.steps() {
        let dt = tg.dt(m);
        let prev = state[m - 1].clone();
        let mut forcing = DVector::from_column_slice(g.slice(m));
        for (c, &node) in omega.iter().enumerate() {
            forcing[node] += u.slice(m - 1)[c];
        }
        let rhs = w.component_mul(&(&prev + dt * forcing));
        let mut y = prev.clone();
        let mut converged = false;
        for _ in 0..60 {
            let fy = y.map(|v| f.value(v));
            let res = w.component_mul(&y) + dt * (&s * &y + w.component_mul(&fy)) - &rhs;
            let jac = &wm + dt * (&s + DMatrix::from_diagonal(&w.component_mul(&y.map(|v| f.d1(v)))));
            let delta = jac.lu().solve(&res).ok_or(Error::Singular { row: m, pivot: 0.0 })?;
            y -= &delta;
            if delta.amax() <= 4.0 * f64::EPSILON * (1.0 + y.amax()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SolverDivergence {
                step: m,
                residual: f64::NAN,
                iterations: 60,
            });
        }
        state.push(y);
    }
    let mut curvature = Vec::with_capacity(tg.steps() + 1);
    curvature.push(state[0].map(|v| f.d2(v)));
    for m in 1..=tg.steps() {
        let y = &state[m];
        let d = w.component_mul(&y.map(|v| f.d1(v)));
        steps.push(&wm + tg.dt(m) * (&s + DMatrix::from_diagonal(&d)));
        curvature.push(y.map(|v| f.d2(v)));
    }
    let target = (0..=tg.steps())
        .map(|m| DVector::from_column_slice(yd.slice(m)))
        .collect();
    Ok(DenseOracle {
        tg: tg.clone(),
        u: u.clone(),
        w,
        omega,
        target,
        state,
        steps,
        curvature,
    })
}

impl DenseOracle {
    fn n(&self) -> usize {
        self.w.len()
    }

    pub fn state(&self) -> Trajectory {
        to_traj(&self.state)
    }

    fn residual(&self, m: usize) -> DVector<f64> {
        &self.state[m] - &self.target[m]
    }

    /// `Σ_m c_m ⟨a_m, W b_m⟩`.
    fn q_inner(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
        (1..=self.tg.steps())
            .map(|m| self.tg.trapezoid_weight(m) * a[m].dot(&self.w.component_mul(&b[m])))
            .sum()
    }

    /// `½ ‖y − y_d‖²_{L²(Q_T)}`, including the fixed `t = 0` term.
    pub fn value(&self) -> f64 {
        let r: Vec<DVector<f64>> = (0..=self.tg.steps()).map(|m| self.residual(m)).collect();
        let r0 = self.tg.trapezoid_weight(0) * r[0].dot(&self.w.component_mul(&r[0]));
        0.5 * (r0 + self.q_inner(&r, &r))
    }

    fn propagate(&self, mut source: impl FnMut(usize) -> DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let mut z = vec![DVector::zeros(self.n())];
        for m in 1..=self.tg.steps() {
            let rhs = self.w.component_mul(&(&z[m - 1] + self.tg.dt(m) * source(m)));
            let next = self.steps[m - 1]
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or(Error::Singular { row: m, pivot: 0.0 })?;
            z.push(next);
        }
        Ok(z)
    }

    fn control_source(&self, v: &ControlTrajectory) -> impl FnMut(usize) -> DVector<f64> + '_ {
        let v = v.clone();
        move |m| {
            let mut s = DVector::zeros(self.n());
            for (c, &node) in self.omega.iter().enumerate() {
                s[node] = v.slice(m - 1)[c];
            }
            s
        }
    }

    fn check_direction(&self, v: &ControlTrajectory) -> Result<()> {
        if v.values().len() != self.u.values().len() {
            return Err(Error::Shape("direction does not match the oracle control space".into()));
        }
        Ok(())
    }

    fn linearized_raw(&self, v: &ControlTrajectory) -> Result<Vec<DVector<f64>>> {
        self.check_direction(v)?;
        let src = self.control_source(v);
        self.propagate(src)
    }

    pub fn linearized(&self, v: &ControlTrajectory) -> Result<Trajectory> {
        Ok(to_traj(&self.linearized_raw(v)?))
    }

    fn second_order_raw(&self, z1: &[DVector<f64>], z2: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.propagate(|m| -self.curvature[m].component_mul(&z1[m]).component_mul(&z2[m]))
    }

    pub fn second_order(&self, v1: &ControlTrajectory, v2: &ControlTrajectory) -> Result<Trajectory> {
        let (z1, z2) = (self.linearized_raw(v1)?, self.linearized_raw(v2)?);
        Ok(to_traj(&self.second_order_raw(&z1, &z2)?))
    }

    /// Adjoint from the transposed space-time system of the linearized recursion.
    pub fn adjoint(&self) -> Result<Trajectory> {
        let n = self.n();
        let steps = self.tg.steps();
        // Unknowns z_1..z_M; block row m: B_m z_m − W z_{m−1} = W dt_m s_m.
        let mut g = DMatrix::zeros(n * steps, n * steps);
        for m in 1..=steps {
            let r = (m - 1) * n;
            g.view_mut((r, r), (n, n)).copy_from(&self.steps[m - 1]);
            if m > 1 {
                for i in 0..n {
                    g[(r + i, r - n + i)] = -self.w[i];
                }
            }
        }
        // dJ = Σ c_m r_mᵀ W z_m = pᵀ (W dt_m s_m)_m with Gᵀ p = (c_m W r_m)_m.
        let mut rhs = DVector::zeros(n * steps);
        for m in 1..=steps {
            let c = self.tg.trapezoid_weight(m);
            let wr = self.w.component_mul(&self.residual(m)) * c;
            rhs.rows_mut((m - 1) * n, n).copy_from(&wr);
        }
        let p = g
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular { row: 0, pivot: 0.0 })?;
        // Control slice m − 1 feeds step m, so its gradient is p_m.
        let mut phi = Trajectory::zeros(n, steps + 1);
        for m in 1..=steps {
            phi.slice_mut(m - 1).copy_from_slice(p.rows((m - 1) * n, n).as_slice());
        }
        Ok(phi)
    }

    /// Gradient representative from forward sensitivities of every control entry.
    pub fn gradient(&self) -> Result<ControlTrajectory> {
        let space = self.u.space_arc().clone();
        let r: Vec<DVector<f64>> = (0..=self.tg.steps()).map(|m| self.residual(m)).collect();
        let mut grad = ControlTrajectory::zeros(space.clone());
        let width = space.width();
        for k in 0..space.slices() {
            for c in 0..width {
                let mut e = ControlTrajectory::zeros(space.clone());
                e.slice_mut(k)[c] = 1.0;
                let z = self.linearized_raw(&e)?;
                let dj = self.q_inner(&r, &z);
                grad.slice_mut(k)[c] = dj / (space.dt(k) * space.weights()[c]);
            }
        }
        Ok(grad)
    }

    /// `J''(u)(v₁, v₂) = Σ c_m [⟨z₁, W z₂⟩ + ⟨r, W ζ₁₂⟩]` with the second-order
    /// sensitivity `ζ₁₂`.
    pub fn hessian_form(&self, v1: &ControlTrajectory, v2: &ControlTrajectory) -> Result<f64> {
        let (z1, z2) = (self.linearized_raw(v1)?, self.linearized_raw(v2)?);
        let zeta = self.second_order_raw(&z1, &z2)?;
        let r: Vec<DVector<f64>> = (0..=self.tg.steps()).map(|m| self.residual(m)).collect();
        Ok(self.q_inner(&z1, &z2) + self.q_inner(&r, &zeta))
    }

    /// Dense matrix `H_ij = J''(u)(e_i, e_j)` over the entries of the control.
    pub fn hessian_matrix(&self) -> Result<DMatrix<f64>> {
        let space = self.u.space_arc().clone();
        let d = space.len();
        if d > ORACLE_MAX_HESSIAN {
            return Err(Error::OracleTooLarge(format!(
                "{d} control entries exceed the dense Hessian cap {ORACLE_MAX_HESSIAN}"
            )));
        }
        let basis: Vec<Vec<DVector<f64>>> = (0..d)
            .map(|i| {
                let mut e = ControlTrajectory::zeros(space.clone());
                e.values_mut()[i] = 1.0;
                self.linearized_raw(&e)
            })
            .collect::<Result<_>>()?;
        let r: Vec<DVector<f64>> = (0..=self.tg.steps()).map(|m| self.residual(m)).collect();
        let mut h = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let zeta = self.second_order_raw(&basis[i], &basis[j])?;
                let v = self.q_inner(&basis[i], &basis[j]) + self.q_inner(&r, &zeta);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }
}
