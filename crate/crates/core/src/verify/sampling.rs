//! Feasible controls whose states stay in an `L∞(Q)` tube around `ȳ`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::Candidate;
use crate::controls::ControlTrajectory;
use crate::error::Result;
use crate::grid::{norm_l2_q, Trajectory, Window};

/// An accepted perturbation `u` with its state deviation.
#[derive(Debug, Clone)]
pub struct TubeSample {
    pub control: ControlTrajectory,
    pub state: Trajectory,
    /// `‖y_u − ȳ‖_{L∞(Q)}`.
    pub linf: f64,
    /// `‖y_u − ȳ‖_{L²(Q)}`.
    pub l2: f64,
}

/// Rejection sampler around `ū`.
///
/// Draws `u = P(ū + a s ξ)` with Gaussian `ξ` scaled slice-wise to the
/// envelope and `s ~ U(¼, 1)`, and keeps `u` when `‖y_u − ȳ‖_∞ ≤ ε`. The
/// amplitude `a` halves after every chunk with acceptance below 30% and grows
/// back after fully accepted chunks.
#[derive(Debug)]
pub struct TubeSampler<'c, 'a> {
    candidate: &'c Candidate<'a>,
    radius: f64,
    amplitude: f64,
    envelope: Vec<f64>,
    pub attempts: usize,
}

const CHUNK: usize = 8;
const TARGET_ACCEPTANCE: f64 = 0.3;

impl<'c, 'a> TubeSampler<'c, 'a> {
    pub fn new(candidate: &'c Candidate<'a>, radius: f64) -> Self {
        let space = candidate.problem.space();
        Self {
            envelope: candidate.set.envelope(space),
            candidate,
            radius,
            amplitude: 1.0,
            attempts: 0,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn propose(&self, rng: &mut impl Rng) -> Result<ControlTrajectory> {
        let ubar = &self.candidate.control;
        let space = ubar.space_arc().clone();
        let mut xi = ControlTrajectory::zeros(space.clone());
        for k in 0..space.slices() {
            xi.slice_mut(k).iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let n = xi.slice_norm(k);
            let s = if n > 0.0 { self.envelope[k] / n } else { 0.0 };
            xi.slice_mut(k).iter_mut().for_each(|v| *v *= s);
        }
        let s = 0.25 + 0.75 * rng.random::<f64>();
        self.candidate.set.project(&ubar.axpy(self.amplitude * s, &xi)?)
    }

    /// Up to `count` samples; fewer if the attempt budget `50 count` runs out.
    pub fn draw(&mut self, count: usize, rng: &mut impl Rng) -> Result<Vec<TubeSample>> {
        let problem = self.candidate.problem;
        let ybar = &self.candidate.eval.state;
        let budget = 50 * count;
        let mut out = Vec::with_capacity(count);
        let mut used = 0;
        while out.len() < count && used < budget && self.amplitude > 1e-12 {
            let proposals: Vec<ControlTrajectory> = (0..CHUNK).map(|_| self.propose(rng)).collect::<Result<_>>()?;
            used += CHUNK;
            let states: Vec<Result<Option<TubeSample>>> = proposals
                .into_par_iter()
                .map(|u| {
                    if !self.candidate.set.contains(&u, 1e-12)? {
                        return Ok(None);
                    }
                    let y = match problem.state(&u) {
                        Ok(y) => y,
                        Err(crate::Error::SolverDivergence { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let d = y.sub(ybar)?;
                    let linf = d.linf();
                    let l2 = norm_l2_q(&d, problem.grid(), problem.time_grid(), Window::All)?;
                    if linf > self.radius || l2 <= 1e-13 {
                        return Ok(None);
                    }
                    Ok(Some(TubeSample {
                        control: u,
                        state: y,
                        linf,
                        l2,
                    }))
                })
                .collect();
            let mut accepted = 0;
            for s in states {
                if let Some(s) = s? {
                    accepted += 1;
                    if out.len() < count {
                        out.push(s);
                    }
                }
            }
            let rate = accepted as f64 / CHUNK as f64;
            if rate < TARGET_ACCEPTANCE {
                self.amplitude *= 0.5;
            } else if accepted == CHUNK {
                self.amplitude = (self.amplitude * 1.5).min(1.0);
            }
        }
        self.attempts += used;
        Ok(out)
    }
}
