//! The tracking objective `J_T(u) = ½‖y_u − y_d‖²_{L²(Q_T)}`, its adjoint-based
//! derivatives, and the Lagrangian of the ball-constrained problem.
//!
//! All derivatives are exact for the discrete objective: the gradient is the
//! adjoint restricted to `ω` and the Hessian form uses the adjoint of the
//! second-order sensitivity instead of a second state solve.

use std::sync::Arc;

use crate::controls::{ControlTrajectory, ACTIVE_TOL};
use crate::error::{Error, Result};
use crate::grid::{norm_l2_q, ControlSpace, Grid, TimeGrid, Trajectory, Window};
use crate::pde::{forward_with_source, LinearSource, Linearization, NewtonSettings, ProblemSpec};

/// A [`ProblemSpec`] on a fixed time grid with its sampled data.
#[derive(Debug, Clone)]
pub struct TrackingProblem {
    spec: ProblemSpec,
    tg: TimeGrid,
    space: Arc<ControlSpace>,
    source: Trajectory,
    target: Trajectory,
    newton: NewtonSettings,
}

/// Objective value with the state, adjoint and gradient representative it came from.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub state: Trajectory,
    pub adjoint: Trajectory,
    /// `φ_u` restricted to `Q_ω`.
    pub gradient: ControlTrajectory,
}

impl TrackingProblem {
    pub fn new(spec: ProblemSpec, tg: TimeGrid) -> Result<Self> {
        let space = Arc::new(spec.control_space(&tg)?);
        let source = spec.source_on(&tg)?;
        let target = spec.target_on(&tg)?;
        Ok(Self {
            spec,
            tg,
            space,
            source,
            target,
            newton: NewtonSettings::default(),
        })
    }

    pub fn with_newton(mut self, newton: NewtonSettings) -> Self {
        self.newton = newton;
        self
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        self.spec.grid()
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.tg
    }

    pub fn space(&self) -> &Arc<ControlSpace> {
        &self.space
    }

    pub fn source(&self) -> &Trajectory {
        &self.source
    }

    pub fn target(&self) -> &Trajectory {
        &self.target
    }

    pub fn zero_control(&self) -> ControlTrajectory {
        ControlTrajectory::zeros(self.space.clone())
    }

    /// The same problem with another target trajectory sampled on this grid.
    pub fn with_target(&self, target: Trajectory) -> Result<Self> {
        if target.nodes() != self.grid().len() || target.len() != self.tg.steps() + 1 {
            return Err(Error::Shape("target trajectory does not match the grid".into()));
        }
        let mut out = self.clone();
        out.target = target;
        Ok(out)
    }

    pub fn state(&self, u: &ControlTrajectory) -> Result<Trajectory> {
        forward_with_source(&self.spec, &self.source, u, &self.tg, self.newton)
    }

    /// `½‖y − y_d‖²_{L²(Q_T)}` for a given state.
    pub fn tracking(&self, y: &Trajectory) -> Result<f64> {
        let r = y.sub(&self.target)?;
        let n = norm_l2_q(&r, self.grid(), &self.tg, Window::All)?;
        Ok(0.5 * n * n)
    }

    pub fn objective(&self, u: &ControlTrajectory) -> Result<f64> {
        self.tracking(&self.state(u)?)
    }

    pub fn linearize(&self, y: &Trajectory) -> Result<Linearization> {
        Linearization::new(&self.spec, y, &self.tg)
    }

    /// Value and gradient at `u`.
    pub fn evaluate(&self, u: &ControlTrajectory) -> Result<ObjectiveEval> {
        let y = self.state(u)?;
        self.evaluate_state(y)
    }

    /// Value and gradient for an already computed state.
    pub fn evaluate_state(&self, state: Trajectory) -> Result<ObjectiveEval> {
        let lin = self.linearize(&state)?;
        self.evaluate_with(state, &lin)
    }

    fn evaluate_with(&self, state: Trajectory, lin: &Linearization) -> Result<ObjectiveEval> {
        let r = state.sub(&self.target)?;
        let value = {
            let n = norm_l2_q(&r, self.grid(), &self.tg, Window::All)?;
            0.5 * n * n
        };
        let adjoint = lin.adjoint(&r)?;
        let gradient = ControlTrajectory::restrict(self.space.clone(), &adjoint)?;
        Ok(ObjectiveEval {
            value,
            state,
            adjoint,
            gradient,
        })
    }

    /// `z_{u,v}` at the state of `lin`.
    pub fn sensitivity(&self, lin: &Linearization, v: &ControlTrajectory) -> Result<Trajectory> {
        lin.linearized(LinearSource::Control(v))
    }

    /// `∫_Q (1 − φ f''(y)) z₁ z₂` in its discrete form, from precomputed sensitivities.
    pub fn hessian_form(&self, lin: &Linearization, adjoint: &Trajectory, z1: &Trajectory, z2: &Trajectory) -> f64 {
        let w = self.grid().weights();
        let curv = lin.curvature();
        let mut quad = 0.0;
        let mut coupling = 0.0;
        for m in 1..=self.tg.steps() {
            let (a, b) = (z1.slice(m), z2.slice(m));
            let c = curv.slice(m);
            let phi = adjoint.slice(m - 1);
            let mut s = 0.0;
            let mut t = 0.0;
            for i in 0..w.len() {
                s += w[i] * a[i] * b[i];
                t += w[i] * phi[i] * c[i] * a[i] * b[i];
            }
            quad += self.tg.trapezoid_weight(m) * s;
            coupling += self.tg.dt(m) * t;
        }
        quad - coupling
    }

    /// `J''(u)(v₁, v₂)` at an evaluation point.
    pub fn hessian(&self, eval: &ObjectiveEval, v1: &ControlTrajectory, v2: &ControlTrajectory) -> Result<f64> {
        let lin = self.linearize(&eval.state)?;
        let z1 = self.sensitivity(&lin, v1)?;
        let z2 = self.sensitivity(&lin, v2)?;
        Ok(self.hessian_form(&lin, &eval.adjoint, &z1, &z2))
    }
}

/// `J_T(u)`.
pub fn eval_j(spec: &ProblemSpec, u: &ControlTrajectory, tg: &TimeGrid) -> Result<f64> {
    TrackingProblem::new(spec.clone(), tg.clone())?.objective(u)
}

/// Value, state, adjoint and gradient representative at `u`.
pub fn eval_gradient(spec: &ProblemSpec, u: &ControlTrajectory, tg: &TimeGrid) -> Result<ObjectiveEval> {
    TrackingProblem::new(spec.clone(), tg.clone())?.evaluate(u)
}

/// `J''(u)(v₁, v₂)`.
pub fn eval_hvp(
    spec: &ProblemSpec,
    u: &ControlTrajectory,
    v1: &ControlTrajectory,
    v2: &ControlTrajectory,
    tg: &TimeGrid,
) -> Result<f64> {
    let p = TrackingProblem::new(spec.clone(), tg.clone())?;
    let eval = p.evaluate(u)?;
    p.hessian(&eval, v1, v2)
}

/// Multiplier of the ball constraint and its active slices.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeData {
    /// `λ̄(t_k) = ‖φ̄(t_k)‖_{L²(ω)}` per slice.
    pub lambda: Vec<f64>,
    /// Slices with `‖ū(t)‖ = γ(t)` within the activity threshold.
    pub active: Vec<usize>,
    /// Active slices with `λ̄(t) > 0` within the positivity threshold.
    pub positive: Vec<usize>,
    /// Largest `|λ̄(t)(‖ū(t)‖ − γ(t))|`.
    pub complementarity: f64,
}

pub fn compute_multiplier(phibar: &ControlTrajectory, ubar: &ControlTrajectory, radii: &[f64]) -> Result<LagrangeData> {
    let space = ubar.space();
    if radii.len() != space.slices() || phibar.values().len() != ubar.values().len() {
        return Err(Error::Shape("multiplier inputs live on different slices".into()));
    }
    let lambda: Vec<f64> = (0..space.slices()).map(|k| phibar.slice_norm(k)).collect();
    let cut = ACTIVE_TOL * phibar.linf();
    let mut active = Vec::new();
    let mut positive = Vec::new();
    let mut complementarity: f64 = 0.0;
    for k in 0..space.slices() {
        let nu = ubar.slice_norm(k);
        if radii[k] - nu <= ACTIVE_TOL * radii[k] {
            active.push(k);
            if lambda[k] > cut {
                positive.push(k);
            }
        }
        complementarity = complementarity.max((lambda[k] * (nu - radii[k])).abs());
    }
    Ok(LagrangeData {
        lambda,
        active,
        positive,
        complementarity,
    })
}

fn weights_of(space: &ControlSpace, lambda: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    if lambda.len() != space.slices() || radii.len() != space.slices() {
        return Err(Error::Shape("multiplier must have one value per slice".into()));
    }
    (0..space.slices())
        .map(|k| {
            if !(radii[k] > 0.0) {
                Err(Error::Domain(format!(
                    "γ({}) = {} is not positive",
                    space.time(k),
                    radii[k]
                )))
            } else {
                Ok(space.dt(k) * lambda[k] / radii[k])
            }
        })
        .collect()
}

fn penalty_bilinear(space: &ControlSpace, weights: &[f64], a: &ControlTrajectory, b: &ControlTrajectory) -> f64 {
    (0..space.slices())
        .map(|k| weights[k] * space.slice_inner(a.slice(k), b.slice(k)))
        .sum()
}

/// `𝓛(u, λ) = J(u) + ½ ∫ λ(t) γ(t)⁻¹ ‖u(t)‖²_{L²(ω)} dt`, with `J(u)` supplied.
pub fn lagrangian_value(j: f64, u: &ControlTrajectory, lambda: &[f64], radii: &[f64]) -> Result<f64> {
    let w = weights_of(u.space(), lambda, radii)?;
    Ok(j + 0.5 * penalty_bilinear(u.space(), &w, u, u))
}

/// `∂𝓛/∂u(u, λ) v`.
pub fn lagrangian_derivative(
    eval: &ObjectiveEval,
    u: &ControlTrajectory,
    lambda: &[f64],
    radii: &[f64],
    v: &ControlTrajectory,
) -> Result<f64> {
    let w = weights_of(u.space(), lambda, radii)?;
    Ok(eval.gradient.inner(v)? + penalty_bilinear(u.space(), &w, u, v))
}

/// `∂²𝓛/∂u²(u, λ)(v₁, v₂)` given `J''(u)(v₁, v₂)`.
pub fn lagrangian_second(
    hess: f64,
    lambda: &[f64],
    radii: &[f64],
    v1: &ControlTrajectory,
    v2: &ControlTrajectory,
) -> Result<f64> {
    let w = weights_of(v1.space(), lambda, radii)?;
    Ok(hess + penalty_bilinear(v1.space(), &w, v1, v2))
}

/// `𝓛(u, λ)` computed from scratch.
pub fn eval_lagrangian(
    spec: &ProblemSpec,
    u: &ControlTrajectory,
    lambda: &[f64],
    radii: &[f64],
    tg: &TimeGrid,
) -> Result<f64> {
    lagrangian_value(eval_j(spec, u, tg)?, u, lambda, radii)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SpaceProfile, SpaceTimeData, TimeProfile};
    use crate::grid::Field;
    use crate::pde::{region_nodes, Nonlinearity, ProblemData};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(f: Nonlinearity, target: SpaceTimeData) -> TrackingProblem {
        let grid = Grid::interval(1.0, 9).unwrap();
        let omega = region_nodes(&grid, [0.2, 0.0], [0.6, 0.0]);
        let spec = ProblemData {
            initial: grid.field(|x| 0.3 * (3.0 * x[0]).cos()),
            grid,
            diffusion: "const:1 + cos:0.3:1".parse().unwrap(),
            reaction: SpaceProfile::Const(0.5),
            nonlinearity: f,
            source: SpaceTimeData::separable(
                "bump:0.5:0.7:0.2".parse().unwrap(),
                TimeProfile::Exp { amp: 1.0, rate: 1.0 },
            ),
            target,
            omega,
            exponent: 2.0,
        }
        .build()
        .unwrap();
        TrackingProblem::new(spec, TimeGrid::uniform(1.0, 10).unwrap()).unwrap()
    }

    fn random(p: &TrackingProblem, rng: &mut ChaCha8Rng, s: f64) -> ControlTrajectory {
        let v = (0..p.space().len())
            .map(|_| s * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect();
        ControlTrajectory::from_values(p.space().clone(), v).unwrap()
    }

    fn target() -> SpaceTimeData {
        SpaceTimeData::separable("const:0.4 + cos:0.2:2".parse().unwrap(), TimeProfile::Const(1.0))
    }

    #[test]
    fn zero_data_constant_target() {
        let grid = Grid::interval(1.0, 5).unwrap();
        let spec = ProblemData {
            initial: Field(vec![0.0; 5]),
            grid,
            diffusion: SpaceProfile::Const(1.0),
            reaction: SpaceProfile::Const(1.0),
            nonlinearity: Nonlinearity::Cubic,
            source: SpaceTimeData::zero(),
            target: SpaceTimeData::separable(SpaceProfile::Const(2.0), TimeProfile::Const(1.0)),
            omega: vec![1, 2],
            exponent: 2.0,
        }
        .build()
        .unwrap();
        let tg = TimeGrid::uniform(1.0, 8).unwrap();
        let p = TrackingProblem::new(spec, tg).unwrap();
        let j = p.objective(&p.zero_control()).unwrap();
        assert!((j - 2.0).abs() < 1e-13);
    }

    #[test]
    fn reachable_target_gives_zero_value_and_gradient() {
        let p = problem(Nonlinearity::Cubic, target());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random(&p, &mut rng, 0.5);
        let y = p.state(&u).unwrap();
        let q = p.with_target(y).unwrap();
        let e = q.evaluate(&u).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.gradient.linf(), 0.0);
    }

    #[test]
    fn gradient_and_hessian_central_differences() {
        for f in Nonlinearity::ALL {
            let p = problem(f, target());
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let u = random(&p, &mut rng, 0.5);
            let v = random(&p, &mut rng, 1.0);
            let v2 = random(&p, &mut rng, 1.0);
            let e = p.evaluate(&u).unwrap();
            let dj = e.gradient.inner(&v).unwrap();
            let h = p.hessian(&e, &v, &v2).unwrap();
            let mut prev: Option<(f64, f64)> = None;
            for eps in [0.2, 0.1, 0.05] {
                let jp = p.objective(&u.axpy(eps, &v).unwrap()).unwrap();
                let jm = p.objective(&u.axpy(-eps, &v).unwrap()).unwrap();
                let dg = (jp - jm) / (2.0 * eps) - dj;
                let gp = p
                    .evaluate(&u.axpy(eps, &v2).unwrap())
                    .unwrap()
                    .gradient
                    .inner(&v)
                    .unwrap();
                let gm = p
                    .evaluate(&u.axpy(-eps, &v2).unwrap())
                    .unwrap()
                    .gradient
                    .inner(&v)
                    .unwrap();
                let dh = (gp - gm) / (2.0 * eps) - h;
                if f == Nonlinearity::Zero {
                    assert!(dg.abs() < 1e-11 * (1.0 + dj.abs()));
                    assert!(dh.abs() < 1e-10 * (1.0 + h.abs()));
                } else if let Some((a, b)) = prev {
                    assert!((3.5..=4.5).contains(&(a / dg)), "{f}: gradient ratio {}", a / dg);
                    assert!((3.5..=4.5).contains(&(b / dh)), "{f}: hessian ratio {}", b / dh);
                }
                prev = Some((dg, dh));
            }
        }
    }

    #[test]
    fn hessian_symmetric_and_convex_for_linear_state() {
        let p = problem(Nonlinearity::Expm1, target());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random(&p, &mut rng, 0.5);
        let e = p.evaluate(&u).unwrap();
        for _ in 0..5 {
            let (a, b) = (random(&p, &mut rng, 1.0), random(&p, &mut rng, 1.0));
            let hab = p.hessian(&e, &a, &b).unwrap();
            let hba = p.hessian(&e, &b, &a).unwrap();
            assert!((hab - hba).abs() <= 1e-11 * (1.0 + hab.abs()));
        }
        let q = problem(Nonlinearity::Zero, target());
        let e = q.evaluate(&u).unwrap();
        let v = random(&q, &mut rng, 1.0);
        let lin = q.linearize(&e.state).unwrap();
        let z = q.sensitivity(&lin, &v).unwrap();
        let zn = norm_l2_q(&z, q.grid(), q.time_grid(), Window::All).unwrap();
        let h = q.hessian(&e, &v, &v).unwrap();
        assert!((h - zn * zn).abs() < 1e-13 * (1.0 + h));
        assert_eq!(q.hessian(&e, &v, &q.zero_control()).unwrap(), 0.0);
    }

    #[test]
    fn duality_identity() {
        let p = problem(Nonlinearity::Cubic, target());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random(&p, &mut rng, 0.5);
        let e = p.evaluate(&u).unwrap();
        let lin = p.linearize(&e.state).unwrap();
        let r = e.state.sub(p.target()).unwrap();
        for _ in 0..5 {
            let v = random(&p, &mut rng, 1.0);
            let z = p.sensitivity(&lin, &v).unwrap();
            let lhs: f64 = (0..=p.time_grid().steps())
                .map(|m| p.time_grid().trapezoid_weight(m) * p.grid().inner(r.slice(m), z.slice(m)))
                .sum();
            let rhs = e.gradient.inner(&v).unwrap();
            assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn multiplier_examples() {
        let p = problem(Nonlinearity::Zero, target());
        let cs = p.space().clone();
        let radii = vec![1.0; cs.slices()];
        let zero = p.zero_control();
        let d = compute_multiplier(&zero, &zero, &radii).unwrap();
        assert!(d.lambda.iter().all(|&l| l == 0.0) && d.positive.is_empty());
        let c = ControlTrajectory::from_values(cs.clone(), vec![-1.5; cs.len()]).unwrap();
        let d = compute_multiplier(&c, &zero, &radii).unwrap();
        for l in d.lambda {
            assert!((l - 1.5 * cs.measure().sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn lagrangian_reduces_and_scales() {
        let p = problem(Nonlinearity::Cubic, target());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random(&p, &mut rng, 0.3);
        let radii: Vec<f64> = (0..p.space().slices()).map(|k| 0.5 + k as f64).collect();
        let lam: Vec<f64> = (0..p.space().slices()).map(|k| 0.1 * k as f64).collect();
        let e = p.evaluate(&u).unwrap();
        let zero = vec![0.0; radii.len()];
        assert_eq!(lagrangian_value(e.value, &u, &zero, &radii).unwrap(), e.value);
        let v = random(&p, &mut rng, 1.0);
        assert_eq!(
            lagrangian_derivative(&e, &u, &zero, &radii, &v).unwrap(),
            e.gradient.inner(&v).unwrap()
        );
        let pen1 = lagrangian_value(0.0, &u, &lam, &radii).unwrap();
        let pen2 = lagrangian_value(0.0, &u.scaled(2.0), &lam, &radii).unwrap();
        assert!((pen2 - 4.0 * pen1).abs() < 1e-14 * pen2);
        let mut bad = radii.clone();
        bad[0] = 0.0;
        assert!(matches!(lagrangian_value(0.0, &u, &lam, &bad), Err(Error::Domain(_))));
    }
}
