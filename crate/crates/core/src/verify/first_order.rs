//! First-order optimality at a computed solution.
//!
//! All tolerances derive from the stationarity tolerance `t = tol (1 + ‖φ̄‖)`:
//! a residual `‖ū − P(ū − φ̄)‖ ≤ t` bounds slice `k` by `t / √dt_k` and node
//! `i` of slice `k` by `t / √(dt_k w_i)`.

use super::{Anchor, Candidate, CheckRow, Status, VerifyConfig};
use crate::controls::{DiscreteSet, ACTIVE_TOL};
use crate::error::Result;
use crate::objective::compute_multiplier;
use crate::optimizer::stationarity_residual;

/// `t = tol (1 + ‖φ̄‖)`.
pub(crate) fn stationarity_threshold(c: &Candidate<'_>, cfg: &VerifyConfig) -> f64 {
    cfg.stationarity_tol * (1.0 + c.gradient().norm_l2())
}

pub fn check_first_order(c: &Candidate<'_>, cfg: &VerifyConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let phi = c.gradient();
    let ubar = &c.control;
    let space = ubar.space_arc().clone();
    let t = stationarity_threshold(c, cfg);
    let r = stationarity_residual(c.set, ubar, phi)?;
    rows.push(CheckRow::at_most(
        "first_order.stationarity",
        Anchor::ProjectedStationarity,
        r,
        t,
    ));

    // ⟨φ̄, u − ū⟩ ≥ −r (‖u − p‖ + ‖φ̄‖) with p = P(ū − φ̄).
    let p = c.set.project(&ubar.axpy(-1.0, phi)?)?;
    let mut rng = crate::rng_for(cfg.seed, "first_order.vi");
    let mut worst = f64::INFINITY;
    for _ in 0..cfg.vi_samples {
        let u = c.set.random_member(space.clone(), &mut rng);
        let scale = u.sub(&p)?.norm_l2() + phi.norm_l2();
        if scale == 0.0 {
            continue;
        }
        worst = worst.min(phi.inner(&u.sub(ubar)?)? / scale);
    }
    if worst.is_finite() {
        rows.push(CheckRow::at_least(
            "first_order.variational_inequality",
            Anchor::VariationalInequality,
            worst,
            -t,
        ));
    } else {
        rows.push(CheckRow::new(
            "first_order.variational_inequality",
            Anchor::VariationalInequality,
            Status::Inconclusive,
            f64::NAN,
            -t,
        ));
    }

    match c.set {
        DiscreteSet::Ball { radii } => {
            let lag = compute_multiplier(phi, ubar, radii)?;
            let lmax = lag.lambda.iter().copied().fold(0.0f64, f64::max);
            let mut inactive = 0.0f64;
            let mut collinear = 0.0f64;
            let mut n_collinear = 0;
            let mut comp_bound = 0.0f64;
            for k in 0..space.slices() {
                let slice_tol = t / space.dt(k).sqrt();
                comp_bound = comp_bound.max(slice_tol * radii[k].max(lag.lambda[k]));
                let nu = ubar.slice_norm(k);
                if nu < radii[k] * (1.0 - cfg.activity) {
                    inactive = inactive.max(lag.lambda[k] * space.dt(k).sqrt());
                }
                let lam = lag.lambda[k];
                if lam > cfg.activity * lmax && lam > 0.0 {
                    let e: Vec<f64> = ubar
                        .slice(k)
                        .iter()
                        .zip(phi.slice(k))
                        .map(|(u, p)| u + radii[k] * p / lam)
                        .collect();
                    collinear = collinear.max(space.slice_norm(&e));
                    n_collinear += 1;
                }
            }
            rows.push(CheckRow::at_most(
                "first_order.ball_inactive",
                Anchor::BallInactiveSlice,
                inactive,
                t,
            ));
            let row = CheckRow::at_most(
                "first_order.ball_collinearity",
                Anchor::BallCollinearity,
                collinear,
                cfg.collinearity_tol,
            );
            rows.push(if n_collinear == 0 {
                row.with_status(Status::Info)
            } else {
                row
            });
            rows.push(CheckRow::at_most(
                "first_order.ball_complementarity",
                Anchor::BallMultiplier,
                lag.complementarity,
                comp_bound,
            ));
        }
        DiscreteSet::Box { lo, hi } => {
            let w = space.width();
            let mut worst = 0.0f64;
            for k in 0..space.slices() {
                for i in 0..w {
                    let idx = k * w + i;
                    let scale = (space.dt(k) * space.weights()[i]).sqrt();
                    let node_tol = t / scale;
                    let (u, g) = (ubar.values()[idx], phi.values()[idx]);
                    let span = hi[idx] - lo[idx];
                    let near = (ACTIVE_TOL * span).max(node_tol);
                    let violation = if u - lo[idx] <= near {
                        (-g).max(0.0)
                    } else if hi[idx] - u <= near {
                        g.max(0.0)
                    } else {
                        g.abs()
                    };
                    worst = worst.max(violation * scale);
                }
            }
            rows.push(CheckRow::at_most(
                "first_order.box_sign",
                Anchor::BoxSignStructure,
                worst,
                t,
            ));
        }
    }
    Ok(rows)
}
