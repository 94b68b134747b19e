//! Second-order sufficient condition on sampled critical directions and
//! quadratic growth in the state norm.

use rayon::prelude::*;

use super::sampling::TubeSampler;
use super::{Anchor, Candidate, CheckRow, Status, VerifyConfig};
use crate::controls::{sample_critical_directions, ConeSpec, DiscreteSet};
use crate::error::Result;
use crate::grid::{norm_l1_q, norm_l2_q, Window};
use crate::objective::{compute_multiplier, lagrangian_second};

/// `‖z‖ < 1e-14` directions are discarded as degenerate.
const DEGENERATE: f64 = 1e-14;

/// Cone parameter `τ` in absolute terms.
pub(crate) fn cone_tau(c: &Candidate<'_>, cfg: &VerifyConfig) -> f64 {
    (cfg.tau * c.gradient().linf()).max(1e-12)
}

/// Empirical margin `δ̂ = min Q(v) / ‖z_{ū,v}‖²` over sampled critical
/// directions, with `Q = J''(ū)` for boxes and `∂²𝓛/∂u²(ū, λ̄)` for balls.
pub fn check_ssc(c: &Candidate<'_>, cfg: &VerifyConfig) -> Result<Vec<CheckRow>> {
    let problem = c.problem;
    let grid = problem.grid();
    let tg = problem.time_grid();
    let lin = problem.linearize(&c.eval.state)?;
    let cone = ConeSpec::new(cone_tau(c, cfg))?;
    let mut rng = crate::rng_for(cfg.seed, "ssc.directions");
    let sampled = sample_critical_directions(&cone, c.set, &c.control, c.gradient(), cfg.directions, &mut rng, |v| {
        let z = problem.sensitivity(&lin, v)?;
        norm_l1_q(&z, grid, tg, Window::All)
    })?;
    let multiplier = match c.set {
        DiscreteSet::Ball { radii } => Some((compute_multiplier(c.gradient(), &c.control, radii)?.lambda, radii)),
        DiscreteSet::Box { .. } => None,
    };
    let ratios: Vec<Option<f64>> = sampled
        .samples
        .par_iter()
        .map(|s| {
            let z = problem.sensitivity(&lin, &s.direction)?;
            let zn = norm_l2_q(&z, grid, tg, Window::All)?;
            if zn < DEGENERATE {
                return Ok(None);
            }
            let mut q = problem.hessian_form(&lin, &c.eval.adjoint, &z, &z);
            if let Some((lambda, radii)) = &multiplier {
                q = lagrangian_second(q, lambda, radii, &s.direction, &s.direction)?;
            }
            Ok(Some(q / (zn * zn)))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = ratios.into_iter().flatten().collect();
    let anchor = match c.set {
        DiscreteSet::Ball { .. } => Anchor::BallSecondOrder,
        DiscreteSet::Box { .. } => Anchor::BoxSecondOrder,
    };
    let mut rows = Vec::new();
    if ratios.is_empty() {
        rows.push(CheckRow::new("ssc.margin", anchor, Status::Inconclusive, f64::NAN, 0.0));
    } else {
        let delta = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(CheckRow::new("ssc.margin", anchor, Status::from_bool(delta > 0.0), delta, 0.0).with_constant(delta));
    }
    let count_status = if ratios.len() >= cfg.directions {
        Status::Pass
    } else if ratios.is_empty() {
        Status::Inconclusive
    } else {
        Status::Warn
    };
    rows.push(CheckRow::new(
        "ssc.directions",
        anchor,
        count_status,
        ratios.len() as f64,
        cfg.directions as f64,
    ));
    Ok(rows)
}

/// `2 (J(u) − J(ū)) / ‖y_u − ȳ‖²_{L²(Q)}` for each sample.
fn growth_ratios(c: &Candidate<'_>, samples: &[super::TubeSample]) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|s| {
            let j = c.problem.tracking(&s.state)?;
            Ok(2.0 * (j - c.eval.value) / (s.l2 * s.l2))
        })
        .collect()
}

/// `J(u) − J(ū) ≥ (κ̂/2) ‖y_u − ȳ‖²` with `κ̂` the infimum over a calibration
/// batch and the held-out batch held to `κ̂ / 2`.
pub fn check_quadratic_growth(c: &Candidate<'_>, cfg: &VerifyConfig) -> Result<Vec<CheckRow>> {
    let anchor = match c.set {
        DiscreteSet::Ball { .. } => Anchor::BallQuadraticGrowth,
        DiscreteSet::Box { .. } => Anchor::BoxQuadraticGrowth,
    };
    let mut rng = crate::rng_for(cfg.seed, "growth.tube");
    let mut sampler = TubeSampler::new(c, c.tube_radius(cfg));
    let calibration = sampler.draw(cfg.samples, &mut rng)?;
    let held_out = sampler.draw(cfg.samples, &mut rng)?;
    if calibration.is_empty() || held_out.is_empty() {
        return Ok(vec![CheckRow::new(
            "growth.kappa",
            anchor,
            Status::Inconclusive,
            f64::NAN,
            f64::NAN,
        )]);
    }
    let kappa = growth_ratios(c, &calibration)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let worst = growth_ratios(c, &held_out)?.into_iter().fold(f64::INFINITY, f64::min);
    let threshold = 0.5 * kappa;
    let mut status = Status::from_bool(kappa > 0.0 && worst >= threshold);
    if status == Status::Pass && (calibration.len() < cfg.samples || held_out.len() < cfg.samples) {
        status = Status::Warn;
    }
    Ok(vec![
        CheckRow::new("growth.kappa", anchor, status, worst, threshold).with_constant(kappa),
        CheckRow::info("growth.samples", anchor, held_out.len() as f64),
    ])
}
