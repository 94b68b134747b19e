use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ControlTrajectory, DiscreteSet, ACTIVE_TOL};
use crate::error::{Error, Result};

/// Relaxation parameter and activity thresholds of the critical cones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeSpec {
    pub tau: f64,
    /// Relative distance to a bound below which a node or slice counts as active.
    pub active_tol: f64,
    /// `λ̄(t) > lambda_tol · ‖φ̄‖_∞` marks a slice of `I⁺_γ`.
    pub lambda_tol: f64,
}

impl ConeSpec {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("cone parameter τ must be positive, got {tau}")));
        }
        Ok(Self {
            tau,
            active_tol: ACTIVE_TOL,
            lambda_tol: ACTIVE_TOL,
        })
    }
}

/// Membership flags of one direction. For ball constraints `vanishing` is
/// always true and `gradient` holds the multiplier-weighted integral condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeMembership {
    /// Sign conditions on active nodes (box) or slices (ball).
    pub sign: bool,
    /// `v = 0` where `|φ̄| > τ` (box only).
    pub vanishing: bool,
    /// `J'(ū)v ≤ τ‖z_v‖_{L¹(Q)}` (box) or `∫ λ̄/γ ∫_ω ū v ≥ −τ‖z_v‖_{L¹(Q)}` (ball).
    pub gradient: bool,
    /// Membership in the relaxed cone `C^τ_ū`.
    pub critical: bool,
}

/// Whether slice `k` of `ubar` lies on the sphere of radius `γ(t_k)`.
pub fn is_slice_active(radii: &[f64], ubar: &ControlTrajectory, k: usize, tol: f64) -> bool {
    radii[k] - ubar.slice_norm(k) <= tol * radii[k]
}

fn box_activity(lo: &[f64], hi: &[f64], u: f64, i: usize, tol: f64) -> (bool, bool) {
    let span = hi[i] - lo[i];
    ((u - lo[i]) <= tol * span, (hi[i] - u) <= tol * span)
}

fn check_shapes(ubar: &ControlTrajectory, phibar: &ControlTrajectory, v: &ControlTrajectory) -> Result<()> {
    if ubar.values().len() != phibar.values().len() || ubar.values().len() != v.values().len() {
        return Err(Error::Shape("cone arguments live on different control spaces".into()));
    }
    Ok(())
}

/// Tests `v` against the critical cones at `(ū, φ̄)`; `phibar` is the adjoint
/// restricted to `ω` and `z_l1 = ‖z_{ū,v}‖_{L¹(Q)}`.
pub fn critical_cone_membership(
    cone: &ConeSpec,
    set: &DiscreteSet,
    ubar: &ControlTrajectory,
    phibar: &ControlTrajectory,
    z_l1: f64,
    v: &ControlTrajectory,
) -> Result<ConeMembership> {
    check_shapes(ubar, phibar, v)?;
    let space = ubar.space();
    match set {
        DiscreteSet::Box { lo, hi } => {
            let mut sign = true;
            let mut vanishing = true;
            for (i, (&u, (&p, &d))) in ubar
                .values()
                .iter()
                .zip(phibar.values().iter().zip(v.values()))
                .enumerate()
            {
                let (at_lo, at_hi) = box_activity(lo, hi, u, i, cone.active_tol);
                if (at_lo && d < 0.0) || (at_hi && d > 0.0) {
                    sign = false;
                }
                if p.abs() > cone.tau && d != 0.0 {
                    vanishing = false;
                }
            }
            let dj = phibar.inner(v)?;
            let slack = 1e-13 * phibar.norm_l2() * v.norm_l2();
            let gradient = sign && dj <= cone.tau * z_l1 + slack;
            Ok(ConeMembership {
                sign,
                vanishing,
                gradient,
                critical: sign && vanishing && gradient,
            })
        }
        DiscreteSet::Ball { radii } => {
            let mut sign = true;
            let mut weighted = 0.0;
            let mut scale = 0.0;
            for k in 0..space.slices() {
                let uv = space.slice_inner(ubar.slice(k), v.slice(k));
                let mag = ubar.slice_norm(k) * space.slice_norm(v.slice(k));
                if is_slice_active(radii, ubar, k, cone.active_tol) && uv > 1e-12 * mag {
                    sign = false;
                }
                let lambda = phibar.slice_norm(k);
                weighted += space.dt(k) * lambda / radii[k] * uv;
                scale += space.dt(k) * lambda / radii[k] * mag;
            }
            let gradient = weighted >= -cone.tau * z_l1 - 1e-12 * scale;
            Ok(ConeMembership {
                sign,
                vanishing: true,
                gradient,
                critical: sign && gradient,
            })
        }
    }
}

/// A critical direction with its `‖z_{ū,v}‖_{L¹(Q)}`.
#[derive(Debug, Clone)]
pub struct DirectionSample {
    pub direction: ControlTrajectory,
    pub z_l1: f64,
}

#[derive(Debug, Clone)]
pub struct SampledDirections {
    pub samples: Vec<DirectionSample>,
    /// Set when the retry budget ran out before `count` samples were found.
    pub exhausted: bool,
    pub attempts: usize,
}

const HALVINGS: usize = 40;

/// Draws Gaussian directions and sanitizes them into `C^τ_ū`.
///
/// Box: entries where `|φ̄| > τ` are zeroed and active entries get the admissible
/// sign; the active part is halved until the gradient condition holds. Ball: on
/// active slices the component along `ū(t)` is reflected when it points
/// outwards, and those normal components are halved until the integral
/// condition holds. `z_l1` evaluates `‖z_{ū,v}‖_{L¹(Q)}`.
pub fn sample_critical_directions<R: Rng>(
    cone: &ConeSpec,
    set: &DiscreteSet,
    ubar: &ControlTrajectory,
    phibar: &ControlTrajectory,
    count: usize,
    rng: &mut R,
    mut z_l1: impl FnMut(&ControlTrajectory) -> Result<f64>,
) -> Result<SampledDirections> {
    let space = ubar.space_arc().clone();
    let budget = 20 * count;
    let mut samples = Vec::with_capacity(count);
    let mut attempts = 0;
    while samples.len() < count && attempts < budget {
        attempts += 1;
        let raw: Vec<f64> = (0..space.len()).map(|_| StandardNormal.sample(rng)).collect();
        let mut free = ControlTrajectory::from_values(space.clone(), raw)?;
        let mut bound = ControlTrajectory::zeros(space.clone());
        match set {
            DiscreteSet::Box { lo, hi } => {
                for i in 0..space.len() {
                    let u = ubar.values()[i];
                    let d = free.values()[i];
                    if phibar.values()[i].abs() > cone.tau {
                        free.values_mut()[i] = 0.0;
                        continue;
                    }
                    let (at_lo, at_hi) = box_activity(lo, hi, u, i, cone.active_tol);
                    if at_lo || at_hi {
                        free.values_mut()[i] = 0.0;
                        bound.values_mut()[i] = if at_lo { d.abs() } else { -d.abs() };
                    }
                }
            }
            DiscreteSet::Ball { radii } => {
                for k in 0..space.slices() {
                    if !is_slice_active(radii, ubar, k, cone.active_tol) {
                        continue;
                    }
                    let nu2 = space.slice_inner(ubar.slice(k), ubar.slice(k));
                    if nu2 == 0.0 {
                        continue;
                    }
                    let c = space.slice_inner(ubar.slice(k), free.slice(k)) / nu2;
                    let normal: Vec<f64> = ubar.slice(k).iter().map(|u| -c.abs() * u).collect();
                    free.slice_mut(k)
                        .iter_mut()
                        .zip(ubar.slice(k))
                        .for_each(|(v, u)| *v -= c * u);
                    bound.slice_mut(k).copy_from_slice(&normal);
                }
            }
        }
        let mut scale = 1.0;
        for _ in 0..HALVINGS {
            let v = free.axpy(scale, &bound)?;
            if v.linf() == 0.0 {
                break;
            }
            let l1 = z_l1(&v)?;
            if critical_cone_membership(cone, set, ubar, phibar, l1, &v)?.critical {
                samples.push(DirectionSample { direction: v, z_l1: l1 });
                break;
            }
            scale *= 0.5;
        }
    }
    Ok(SampledDirections {
        exhausted: samples.len() < count,
        samples,
        attempts,
    })
}
