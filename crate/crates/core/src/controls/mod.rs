//! Admissible control sets, their projections and envelopes, extension by
//! zero across horizons, and critical-cone machinery.

mod cone;

pub use cone::{
    critical_cone_membership, is_slice_active, sample_critical_directions, ConeMembership, ConeSpec, DirectionSample,
    SampledDirections,
};

use std::sync::Arc;

use crate::data::{SpaceTimeData, TimeProfile};
use crate::error::{Error, Result};
use crate::grid::{ControlSpace, Grid, TimeGrid, Trajectory};

/// Relative threshold for active ball slices and active box nodes.
pub const ACTIVE_TOL: f64 = 1e-8;

/// Control values on `ω` per time slice, stored slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    space: Arc<ControlSpace>,
    values: Vec<f64>,
}

impl ControlTrajectory {
    pub fn zeros(space: Arc<ControlSpace>) -> Self {
        let values = vec![0.0; space.len()];
        Self { space, values }
    }

    pub fn from_values(space: Arc<ControlSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::Shape(format!(
                "control has {} values, space holds {}",
                values.len(),
                space.len()
            )));
        }
        Ok(Self { space, values })
    }

    /// Slices `0..M` of `traj` (node `k` feeds slice `k`) restricted to `ω`.
    ///
    /// Applied to the adjoint this is the gradient representative.
    pub fn restrict(space: Arc<ControlSpace>, traj: &Trajectory) -> Result<Self> {
        if traj.len() != space.slices() + 1 {
            return Err(Error::Shape("trajectory does not match the control slices".into()));
        }
        let mut values = Vec::with_capacity(space.len());
        for k in 0..space.slices() {
            let s = traj.slice(k);
            values.extend(space.nodes().iter().map(|&i| s[i]));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &ControlSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<ControlSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let w = self.space.width();
        &self.values[k * w..(k + 1) * w]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let w = self.space.width();
        &mut self.values[k * w..(k + 1) * w]
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.space, &other.space) && *self.space != *other.space {
            return Err(Error::Shape("controls live on different spaces".into()));
        }
        Ok(())
    }

    /// `∫_{Q_ω} self · other`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_space(other)?;
        Ok(self.space.inner(&self.values, &other.values))
    }

    pub fn norm_l2(&self) -> f64 {
        self.space.norm_l2(&self.values)
    }

    pub fn norm_l1(&self) -> f64 {
        self.space.norm_l1(&self.values)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖u(t_k)‖_{L²(ω)}` for slice `k`.
    pub fn slice_norm(&self, k: usize) -> f64 {
        self.space.slice_norm(self.slice(k))
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            space: self.space.clone(),
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }

    /// The same values on an equal but separately allocated space.
    pub fn with_space(&self, space: Arc<ControlSpace>) -> Result<Self> {
        if *space != *self.space {
            return Err(Error::Shape("target space differs".into()));
        }
        Ok(Self {
            space,
            values: self.values.clone(),
        })
    }

    /// Restriction to the first slices of a prefix space.
    pub fn truncate_to(&self, short: Arc<ControlSpace>) -> Result<Self> {
        if !short.is_prefix_of(&self.space) {
            return Err(Error::Alignment(
                "target space is not a prefix of this control's space".into(),
            ));
        }
        Ok(Self {
            values: self.values[..short.len()].to_vec(),
            space: short,
        })
    }
}

/// `û = u` on `[0, T]` and `0` on `(T, T_long]`.
pub fn extend_by_zero(u: &ControlTrajectory, long: Arc<ControlSpace>) -> Result<ControlTrajectory> {
    extend_with(u, long, None)
}

/// Extension by another control `v` on the long space (used by the zero versus
/// `v` extension comparison).
pub fn extend_with(
    u: &ControlTrajectory,
    long: Arc<ControlSpace>,
    tail: Option<&ControlTrajectory>,
) -> Result<ControlTrajectory> {
    if !u.space().is_prefix_of(&long) {
        return Err(Error::Alignment(format!(
            "horizon {} is not a prefix of the long horizon {}",
            u.space().horizon(),
            long.horizon()
        )));
    }
    let mut values = match tail {
        Some(v) => {
            if *v.space() != *long {
                return Err(Error::Shape("tail control lives on another space".into()));
            }
            v.values().to_vec()
        }
        None => vec![0.0; long.len()],
    };
    values[..u.values().len()].copy_from_slice(u.values());
    Ok(ControlTrajectory { space: long, values })
}

/// Continuous description of `U_ad`: either `L²(ω)` balls of radius `γ(t)` or
/// pointwise bounds `α ≤ u ≤ β`.
#[derive(Debug, Clone, PartialEq)]
pub enum AdmissibleSet {
    Ball { gamma: TimeProfile },
    Box { alpha: SpaceTimeData, beta: SpaceTimeData },
}

impl AdmissibleSet {
    pub fn kind(&self) -> &'static str {
        match self {
            AdmissibleSet::Ball { .. } => "ball",
            AdmissibleSet::Box { .. } => "box",
        }
    }

    /// Samples the set on the slices of `space`, checking its structural assumptions.
    pub fn discretize(&self, grid: &Grid, space: &ControlSpace) -> Result<DiscreteSet> {
        match self {
            AdmissibleSet::Ball { gamma } => {
                let radii: Vec<f64> = space.times().iter().map(|&t| gamma.eval(t)).collect();
                if let Some((k, g)) = radii.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
                    return Err(Error::Domain(format!(
                        "ball radius γ({}) = {g} must be positive",
                        space.time(k)
                    )));
                }
                Ok(DiscreteSet::Ball { radii })
            }
            AdmissibleSet::Box { alpha, beta } => {
                let lo = sample_on_slices(alpha, grid, space)?;
                let hi = sample_on_slices(beta, grid, space)?;
                for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
                    if !(*a <= 0.0 && *b >= 0.0 && a < b) {
                        return Err(Error::Domain(format!(
                            "box bounds need α ≤ 0 ≤ β and α < β, got [{a}, {b}] at entry {i}"
                        )));
                    }
                }
                Ok(DiscreteSet::Box { lo, hi })
            }
        }
    }

    /// Slice-wise bound `h(t) ≥ ‖u(t)‖_{L²(ω)}` valid for every admissible `u`.
    pub fn envelope(&self, grid: &Grid, omega: &[usize]) -> Envelope {
        match self {
            AdmissibleSet::Ball { gamma } => Envelope::Ball(*gamma),
            AdmissibleSet::Box { alpha, beta } => Envelope::Box {
                alpha: alpha.clone(),
                beta: beta.clone(),
                grid: grid.clone(),
                omega: omega.to_vec(),
            },
        }
    }

    /// Last time at which admissible controls can be nonzero, if bounded.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            AdmissibleSet::Ball { .. } => None,
            AdmissibleSet::Box { alpha, beta } => match (alpha.support_end(), beta.support_end()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            },
        }
    }
}

fn sample_on_slices(data: &SpaceTimeData, grid: &Grid, space: &ControlSpace) -> Result<Vec<f64>> {
    let mut nodes = Vec::with_capacity(space.slices() + 1);
    nodes.push(0.0);
    nodes.extend_from_slice(space.times());
    let tg = TimeGrid::from_nodes(nodes)?;
    let full = data.eval_on(grid, &tg)?;
    let mut out = Vec::with_capacity(space.len());
    for k in 0..space.slices() {
        let s = full.slice(k + 1);
        out.extend(space.nodes().iter().map(|&i| s[i]));
    }
    Ok(out)
}

/// An admissible set sampled on a [`ControlSpace`].
#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteSet {
    /// One radius per slice.
    Ball { radii: Vec<f64> },
    /// Bounds per entry of the slice-major layout.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl DiscreteSet {
    fn check(&self, u: &ControlTrajectory) -> Result<()> {
        let ok = match self {
            DiscreteSet::Ball { radii } => radii.len() == u.space().slices(),
            DiscreteSet::Box { lo, .. } => lo.len() == u.values().len(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("admissible set sampled on another control space".into()))
        }
    }

    /// Metric projection in `L²(Q_ω)`; the set is a product over slices, so
    /// this is slice-wise radial scaling (ball) or nodewise clamping (box).
    pub fn project(&self, u: &ControlTrajectory) -> Result<ControlTrajectory> {
        self.check(u)?;
        let mut out = u.clone();
        match self {
            DiscreteSet::Ball { radii } => {
                for (k, &g) in radii.iter().enumerate() {
                    let n = out.slice_norm(k);
                    if n > g {
                        let s = g / n;
                        out.slice_mut(k).iter_mut().for_each(|v| *v *= s);
                    }
                }
            }
            DiscreteSet::Box { lo, hi } => {
                for ((v, a), b) in out.values_mut().iter_mut().zip(lo).zip(hi) {
                    *v = v.clamp(*a, *b);
                }
            }
        }
        Ok(out)
    }

    /// Slice-wise membership up to a relative slack `tol`.
    pub fn contains(&self, u: &ControlTrajectory, tol: f64) -> Result<bool> {
        self.check(u)?;
        Ok(match self {
            DiscreteSet::Ball { radii } => radii
                .iter()
                .enumerate()
                .all(|(k, &g)| u.slice_norm(k) <= g * (1.0 + tol)),
            DiscreteSet::Box { lo, hi } => u
                .values()
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= a - tol * (b - a) && *v <= b + tol * (b - a)),
        })
    }

    /// Discrete envelope `h_k` per slice.
    pub fn envelope(&self, space: &ControlSpace) -> Vec<f64> {
        match self {
            DiscreteSet::Ball { radii } => radii.clone(),
            DiscreteSet::Box { lo, hi } => {
                let w = space.width();
                (0..space.slices())
                    .map(|k| {
                        let m: Vec<f64> = (k * w..(k + 1) * w).map(|i| lo[i].abs().max(hi[i])).collect();
                        space.slice_norm(&m)
                    })
                    .collect()
            }
        }
    }

    /// A uniformly spread random admissible control: radial for balls,
    /// independent uniform values for boxes.
    pub fn random_member(&self, space: Arc<ControlSpace>, rng: &mut impl rand::Rng) -> ControlTrajectory {
        use rand_distr::{Distribution, StandardNormal};
        let mut u = ControlTrajectory::zeros(space);
        match self {
            DiscreteSet::Ball { radii } => {
                for (k, &g) in radii.iter().enumerate() {
                    let s = u.slice_mut(k);
                    s.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                    let n = u.slice_norm(k);
                    let r: f64 = rng.random::<f64>() * g / n.max(f64::MIN_POSITIVE);
                    u.slice_mut(k).iter_mut().for_each(|v| *v *= r);
                }
            }
            DiscreteSet::Box { lo, hi } => {
                for ((v, a), b) in u.values_mut().iter_mut().zip(lo).zip(hi) {
                    *v = a + (b - a) * rng.random::<f64>();
                }
            }
        }
        u
    }
}

/// The envelope `h` as a function of time, with tail integrals.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Ball(TimeProfile),
    Box {
        alpha: SpaceTimeData,
        beta: SpaceTimeData,
        grid: Grid,
        omega: Vec<usize>,
    },
}

impl Envelope {
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Envelope::Ball(g) => Ok(g.eval(t)),
            Envelope::Box {
                alpha,
                beta,
                grid,
                omega,
            } => {
                let tg = TimeGrid::from_nodes(vec![0.0, t.max(f64::MIN_POSITIVE)])?;
                let a = alpha.eval_on(grid, &tg)?;
                let b = beta.eval_on(grid, &tg)?;
                let (a, b) = (a.slice(1), b.slice(1));
                Ok(omega
                    .iter()
                    .map(|&i| {
                        let m = a[i].abs().max(b[i]);
                        grid.weights()[i] * m * m
                    })
                    .sum::<f64>()
                    .sqrt())
            }
        }
    }

    /// `‖h‖_{L^q(T, ∞)}`.
    pub fn tail(&self, from: f64, q: f64) -> Result<f64> {
        match self {
            Envelope::Ball(g) => Ok(g.tail_power(from, q)?.powf(1.0 / q)),
            Envelope::Box { alpha, beta, .. } => {
                let end = match (alpha.support_end(), beta.support_end()) {
                    (Some(a), Some(b)) => a.max(b),
                    _ => {
                        return Err(Error::Domain(
                            "box envelope tail needs compactly supported bounds".into(),
                        ))
                    }
                };
                if end <= from {
                    return Ok(0.0);
                }
                // Composite Simpson on a fine partition; the bounds are piecewise smooth.
                let n = 2048;
                let h = (end - from) / n as f64;
                let mut s = 0.0;
                for i in 0..=n {
                    let c = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    s += c * self.eval(from + i as f64 * h)?.powf(q);
                }
                Ok((s * h / 3.0).powf(1.0 / q))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SpaceProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(slices: usize) -> (Grid, Arc<ControlSpace>) {
        let grid = Grid::interval(1.0, 11).unwrap();
        let tg = TimeGrid::uniform(2.0, slices).unwrap();
        let cs = ControlSpace::new(&grid, &[2, 3, 4, 5, 6], &tg).unwrap();
        (grid, Arc::new(cs))
    }

    fn constant_box(lo: f64, hi: f64) -> AdmissibleSet {
        AdmissibleSet::Box {
            alpha: SpaceTimeData::separable(SpaceProfile::Const(lo), TimeProfile::Const(1.0)),
            beta: SpaceTimeData::separable(SpaceProfile::Const(hi), TimeProfile::Const(1.0)),
        }
    }

    #[test]
    fn ball_scales_long_slice_to_radius() {
        let (grid, cs) = setup(4);
        let set = AdmissibleSet::Ball {
            gamma: TimeProfile::Const(1.0),
        }
        .discretize(&grid, &cs)
        .unwrap();
        let mut u = ControlTrajectory::zeros(cs.clone());
        u.slice_mut(1).iter_mut().for_each(|v| *v = 1.0);
        let n = u.slice_norm(1);
        u.slice_mut(1).iter_mut().for_each(|v| *v *= 2.0 / n);
        let p = set.project(&u).unwrap();
        for (a, b) in p.slice(1).iter().zip(u.slice(1)) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        assert_eq!(p.slice(0), u.slice(0));
    }

    #[test]
    fn box_clamps() {
        let (grid, cs) = setup(2);
        let set = constant_box(-1.0, 1.0).discretize(&grid, &cs).unwrap();
        let mut u = ControlTrajectory::zeros(cs);
        u.values_mut()[0] = 3.0;
        u.values_mut()[1] = -4.0;
        u.values_mut()[2] = 0.25;
        let p = set.project(&u).unwrap();
        assert_eq!(&p.values()[..3], &[1.0, -1.0, 0.25]);
    }

    #[test]
    fn feasible_controls_are_fixed_points() {
        let (grid, cs) = setup(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for set in [
            AdmissibleSet::Ball {
                gamma: TimeProfile::Exp { amp: 1.0, rate: 0.5 },
            },
            constant_box(-0.5, 2.0),
        ] {
            let d = set.discretize(&grid, &cs).unwrap();
            let u = d.random_member(cs.clone(), &mut rng);
            assert!(d.contains(&u, 0.0).unwrap());
            assert_eq!(d.project(&u).unwrap(), u);
        }
    }

    #[test]
    fn box_rejects_bounds_excluding_zero() {
        let (grid, cs) = setup(2);
        assert!(matches!(
            constant_box(0.5, 1.0).discretize(&grid, &cs),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            constant_box(0.0, 0.0).discretize(&grid, &cs),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn envelope_examples() {
        let grid = Grid::interval(1.0, 11).unwrap();
        let omega: Vec<usize> = (0..11).collect();
        let env = AdmissibleSet::Ball {
            gamma: TimeProfile::Exp { amp: 1.0, rate: 1.0 },
        }
        .envelope(&grid, &omega);
        assert!((env.eval(0.7).unwrap() - (-0.7f64).exp()).abs() < 1e-15);
        let env = constant_box(-1.0, 2.0).envelope(&grid, &omega);
        assert!((env.eval(0.3).unwrap() - 2.0 * grid.measure().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn envelope_tail_matches_quadrature() {
        let grid = Grid::interval(1.0, 5).unwrap();
        let env = AdmissibleSet::Ball {
            gamma: TimeProfile::Exp { amp: 0.8, rate: 0.3 },
        }
        .envelope(&grid, &[1, 2]);
        for q in [2.0, 3.0] {
            // Midpoint rule far into the tail.
            let (a, n) = (4.0, 400_000);
            let h = 200.0 / n as f64;
            let s: f64 = (0..n)
                .map(|i| (0.8 * (-0.3 * (a + (i as f64 + 0.5) * h)).exp()).powf(q) * h)
                .sum();
            assert!((env.tail(a, q).unwrap() - s.powf(1.0 / q)).abs() < 1e-9);
        }
        let boxed = AdmissibleSet::Box {
            alpha: SpaceTimeData::separable(SpaceProfile::Const(-1.0), TimeProfile::Window { amp: 1.0, end: 3.0 }),
            beta: SpaceTimeData::separable(SpaceProfile::Const(1.0), TimeProfile::Window { amp: 1.0, end: 3.0 }),
        };
        let env = boxed.envelope(&grid, &[0, 1, 2, 3, 4]);
        assert_eq!(env.tail(3.0, 2.0).unwrap(), 0.0);
        assert!((env.tail(1.0, 2.0).unwrap() - 2.0f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn extension_by_zero_keeps_norm_and_feasibility() {
        let (grid, long) = setup(8);
        let tg_short = TimeGrid::uniform(1.0, 4).unwrap();
        let short = Arc::new(ControlSpace::new(&grid, long.nodes(), &tg_short).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = AdmissibleSet::Ball {
            gamma: TimeProfile::Exp { amp: 1.0, rate: 1.0 },
        };
        let u = set
            .discretize(&grid, &short)
            .unwrap()
            .random_member(short.clone(), &mut rng);
        let e = extend_by_zero(&u, long.clone()).unwrap();
        assert!((e.norm_l2() - u.norm_l2()).abs() < 1e-15);
        assert!(e.values()[u.values().len()..].iter().all(|&v| v == 0.0));
        assert!(set.discretize(&grid, &long).unwrap().contains(&e, 0.0).unwrap());
        assert_eq!(extend_by_zero(&u, short.clone()).unwrap(), u);
        assert!(matches!(extend_by_zero(&e, short), Err(Error::Alignment(_))));
    }

    #[test]
    fn projection_inequality_and_nonexpansive() {
        let (grid, cs) = setup(5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand_distr::{Distribution, StandardNormal};
        for set in [
            AdmissibleSet::Ball {
                gamma: TimeProfile::Exp { amp: 0.3, rate: 0.2 },
            },
            constant_box(-0.2, 0.4),
        ] {
            let d = set.discretize(&grid, &cs).unwrap();
            for _ in 0..20 {
                let v = ControlTrajectory::from_values(
                    cs.clone(),
                    (0..cs.len()).map(|_| StandardNormal.sample(&mut rng)).collect(),
                )
                .unwrap();
                let v2 = v.axpy(0.3, &d.random_member(cs.clone(), &mut rng)).unwrap();
                let w = d.project(&v).unwrap();
                let w2 = d.project(&v2).unwrap();
                assert!(w.sub(&w2).unwrap().norm_l2() <= v.sub(&v2).unwrap().norm_l2() + 1e-14);
                let r = v.sub(&w).unwrap();
                for _ in 0..100 {
                    let k = d.random_member(cs.clone(), &mut rng);
                    for s in 0..cs.slices() {
                        let diff: Vec<f64> = k.slice(s).iter().zip(w.slice(s)).map(|(a, b)| a - b).collect();
                        assert!(cs.slice_inner(r.slice(s), &diff) <= 1e-10);
                    }
                }
            }
        }
    }
}
