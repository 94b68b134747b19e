//! Structured space-time discretization and the discrete norms used throughout.
//!
//! Spatial integrals use dual-cell (midpoint) weights on a node-centred lattice:
//! interior nodes own a full cell, boundary nodes a half (or quarter) cell, so
//! the weights sum to the measure of the domain. Time integrals over state-like
//! trajectories use the trapezoidal rule on the nodes of a [`TimeGrid`].
//!
//! Controls live on time *slices*: slice `k` covers `(t_k, t_{k+1}]` and is
//! sampled at `t_{k+1}`, matching the implicit Euler step that consumes it.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a time lies on a node.
const NODE_TOL: f64 = 1e-10;

/// Node-centred structured grid on an interval or an axis-aligned rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    counts: [usize; 2],
    spacing: [f64; 2],
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    boundary: Vec<usize>,
}

fn axis_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h }).collect()
}

impl Grid {
    /// Grid on `(0, length)` with `nodes` equispaced nodes.
    pub fn interval(length: f64, nodes: usize) -> Result<Self> {
        Self::build(1, [length, 1.0], [nodes, 1])
    }

    /// Grid on `(0, lx) x (0, ly)`; node `(i, j)` has flat index `j * nx + i`.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::build(2, [lx, ly], [nx, ny])
    }

    fn build(dim: usize, extents: [f64; 2], counts: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if counts[axis] < 3 {
                return Err(Error::Shape(format!(
                    "axis {axis} needs at least 3 nodes, got {}",
                    counts[axis]
                )));
            }
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(Error::Domain(format!(
                    "axis {axis} extent must be positive, got {}",
                    extents[axis]
                )));
            }
        }
        let mut spacing = [1.0; 2];
        for axis in 0..dim {
            spacing[axis] = extents[axis] / (counts[axis] - 1) as f64;
        }
        let wx = axis_weights(counts[0], spacing[0]);
        let wy = if dim == 2 {
            axis_weights(counts[1], spacing[1])
        } else {
            vec![1.0]
        };
        let n = counts[0] * counts[1];
        let mut coords = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut boundary = Vec::new();
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let y = if dim == 2 { j as f64 * spacing[1] } else { 0.0 };
                coords.push([i as f64 * spacing[0], y]);
                weights.push(wx[i] * wy[j]);
                let on_x = i == 0 || i + 1 == counts[0];
                let on_y = dim == 2 && (j == 0 || j + 1 == counts[1]);
                if on_x || on_y {
                    boundary.push(j * counts[0] + i);
                }
            }
        }
        Ok(Self {
            dim,
            extents,
            counts,
            spacing,
            coords,
            weights,
            boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> [f64; 2] {
        self.extents
    }

    /// Node counts per axis; the second entry is 1 in one dimension.
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Dual-cell volumes: quadrature weights of spatial integrals.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Measure of the domain, `sum(weights)`.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.counts[0] + i
    }

    /// Half bandwidth of nearest-neighbour stencils in the flat ordering.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.counts[0]
        }
    }

    pub fn field(&self, f: impl Fn([f64; 2]) -> f64) -> Field {
        Field(self.coords.iter().map(|&x| f(x)).collect())
    }

    pub fn zeros(&self) -> Field {
        Field(vec![0.0; self.len()])
    }

    /// `sum_i w_i a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
}

/// Strictly increasing time nodes `0 = t_0 < ... < t_M = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        Self::graded(horizon, steps, 1.0)
    }

    /// Uniform grid with step `dt`; `horizon / dt` must be an integer.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || ((steps * dt) - horizon).abs() > NODE_TOL * horizon.max(1.0) {
            return Err(Error::Alignment(format!(
                "horizon {horizon} is not a multiple of dt {dt}"
            )));
        }
        Self::uniform(horizon, steps as usize)
    }

    /// Geometrically graded grid, `dt_{m+1} = ratio * dt_m`, with `ratio` in `[1, 1.2]`.
    pub fn graded(horizon: f64, steps: usize, ratio: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Shape("time grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if !(1.0..=1.2).contains(&ratio) {
            return Err(Error::Domain(format!(
                "grading ratio must lie in [1, 1.2], got {ratio}"
            )));
        }
        let mut nodes = Vec::with_capacity(steps + 1);
        nodes.push(0.0);
        if ratio == 1.0 {
            let dt = horizon / steps as f64;
            for m in 1..steps {
                nodes.push(m as f64 * dt);
            }
        } else {
            let first = horizon * (ratio - 1.0) / (ratio.powi(steps as i32) - 1.0);
            let mut t = 0.0;
            let mut dt = first;
            for _ in 1..steps {
                t += dt;
                nodes.push(t);
                dt *= ratio;
            }
        }
        nodes.push(horizon);
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Shape("time nodes must start at 0 and contain a step".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("time nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `dt_m = t_m - t_{m-1}` for `m = 1..=M` (so `dt(1)` is the first step).
    pub fn dt(&self, m: usize) -> f64 {
        self.nodes[m] - self.nodes[m - 1]
    }

    pub fn steps_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.windows(2).map(|w| w[1] - w[0])
    }

    /// Trapezoidal weight of node `m`.
    pub fn trapezoid_weight(&self, m: usize) -> f64 {
        let left = if m > 0 { self.dt(m) } else { 0.0 };
        let right = if m < self.steps() { self.dt(m + 1) } else { 0.0 };
        0.5 * (left + right)
    }

    /// Index of the node equal to `t` (within a relative tolerance).
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let tol = NODE_TOL * self.horizon().max(1.0);
        let pos = self.nodes.partition_point(|&s| s < t - tol);
        (pos < self.nodes.len() && (self.nodes[pos] - t).abs() <= tol).then_some(pos)
    }

    /// The grid truncated at node `t`.
    pub fn prefix(&self, t: f64) -> Result<Self> {
        let idx = self
            .node_index(t)
            .ok_or_else(|| Error::Alignment(format!("{t} is not a node of the time grid")))?;
        if idx == 0 {
            return Err(Error::Alignment("prefix must contain at least one step".into()));
        }
        Ok(Self {
            nodes: self.nodes[..=idx].to_vec(),
        })
    }

    /// Whether `self` is a prefix of `other`.
    pub fn is_prefix_of(&self, other: &TimeGrid) -> bool {
        let tol = NODE_TOL * other.horizon().max(1.0);
        self.nodes.len() <= other.nodes.len() && self.nodes.iter().zip(&other.nodes).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// One value per spatial node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(pub Vec<f64>);

impl Deref for Field {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Field(values)
    }
}

/// A space-time field: one [`Field`] per node of a [`TimeGrid`], stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    nodes: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(nodes: usize, slices: usize) -> Self {
        Self {
            nodes,
            data: vec![0.0; nodes * slices],
        }
    }

    pub fn from_slices(slices: Vec<Vec<f64>>) -> Result<Self> {
        let nodes = slices.first().map_or(0, Vec::len);
        if slices.iter().any(|s| s.len() != nodes) {
            return Err(Error::Shape("trajectory slices differ in length".into()));
        }
        Ok(Self {
            nodes,
            data: slices.concat(),
        })
    }

    pub fn from_flat(nodes: usize, data: Vec<f64>) -> Result<Self> {
        if nodes == 0 || !data.len().is_multiple_of(nodes) {
            return Err(Error::Shape(format!(
                "flat length {} is not a multiple of {nodes}",
                data.len()
            )));
        }
        Ok(Self { nodes, data })
    }

    /// Spatial node count.
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Number of time nodes (`M + 1` on a grid with `M` steps).
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.nodes).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.data[m * self.nodes..(m + 1) * self.nodes]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.nodes..(m + 1) * self.nodes]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Keeps the first `slices` time nodes.
    pub fn truncated(&self, slices: usize) -> Self {
        Self {
            nodes: self.nodes,
            data: self.data[..slices * self.nodes].to_vec(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.nodes != other.nodes || self.data.len() != other.data.len() {
            return Err(Error::Shape("trajectory shapes differ".into()));
        }
        Ok(Self {
            nodes: self.nodes,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nodes: self.nodes,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// A closed interval of time used to restrict trajectory norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    All,
    Span(f64, f64),
}

impl Window {
    fn node_range(self, tg: &TimeGrid) -> Result<(usize, usize)> {
        match self {
            Window::All => Ok((0, tg.steps())),
            Window::Span(a, b) => {
                let ia = tg
                    .node_index(a)
                    .ok_or_else(|| Error::Alignment(format!("window start {a} is not a node")))?;
                let ib = tg
                    .node_index(b)
                    .ok_or_else(|| Error::Alignment(format!("window end {b} is not a node")))?;
                if ia > ib {
                    return Err(Error::Alignment(format!("window [{a}, {b}] is reversed")));
                }
                Ok((ia, ib))
            }
        }
    }
}

fn check_traj(traj: &Trajectory, grid: &Grid, tg: &TimeGrid) -> Result<()> {
    if traj.nodes() != grid.len() || traj.len() != tg.steps() + 1 {
        return Err(Error::Shape(format!(
            "trajectory is {}x{}, grid expects {}x{}",
            traj.len(),
            traj.nodes(),
            tg.steps() + 1,
            grid.len()
        )));
    }
    Ok(())
}

/// Trapezoidal time integral of a per-node quantity over a window.
fn trapezoid(tg: &TimeGrid, (ia, ib): (usize, usize), q: impl Fn(usize) -> f64) -> f64 {
    (ia + 1..=ib).map(|m| 0.5 * tg.dt(m) * (q(m - 1) + q(m))).sum()
}

/// `‖traj‖_{L²(Ω × window)}`.
pub fn norm_l2_q(traj: &Trajectory, grid: &Grid, tg: &TimeGrid, window: Window) -> Result<f64> {
    check_traj(traj, grid, tg)?;
    let range = window.node_range(tg)?;
    let s = trapezoid(tg, range, |m| {
        let x = traj.slice(m);
        grid.inner(x, x)
    });
    Ok(s.sqrt())
}

/// `‖traj‖_{L¹(Ω × window)}`.
pub fn norm_l1_q(traj: &Trajectory, grid: &Grid, tg: &TimeGrid, window: Window) -> Result<f64> {
    check_traj(traj, grid, tg)?;
    let range = window.node_range(tg)?;
    Ok(trapezoid(tg, range, |m| {
        traj.slice(m).iter().zip(grid.weights()).map(|(v, w)| w * v.abs()).sum()
    }))
}

/// Largest absolute nodal value over the window.
pub fn norm_linf_q(traj: &Trajectory, grid: &Grid, tg: &TimeGrid, window: Window) -> Result<f64> {
    check_traj(traj, grid, tg)?;
    let (ia, ib) = window.node_range(tg)?;
    Ok((ia..=ib).fold(0.0, |acc, m| traj.slice(m).iter().fold(acc, |a, v| a.max(v.abs()))))
}

/// `‖field‖_{L²(Ω)}`.
pub fn norm_l2_slice(field: &[f64], grid: &Grid) -> Result<f64> {
    if field.len() != grid.len() {
        return Err(Error::Shape(format!(
            "field has {} values, grid has {} nodes",
            field.len(),
            grid.len()
        )));
    }
    Ok(grid.inner(field, field).sqrt())
}

/// Mixed norm `‖ ‖traj(t)‖_{L²(Ω)} ‖_{L^p(window)}`, `p ≥ 1` (the problem exponent is ≥ 2).
pub fn norm_lp_time_l2_space(traj: &Trajectory, grid: &Grid, tg: &TimeGrid, p: f64, window: Window) -> Result<f64> {
    check_traj(traj, grid, tg)?;
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("time exponent must be ≥ 1, got {p}")));
    }
    let range = window.node_range(tg)?;
    let s = trapezoid(tg, range, |m| {
        let x = traj.slice(m);
        grid.inner(x, x).sqrt().powf(p)
    });
    Ok(s.powf(1.0 / p))
}

/// Discretization of `Q_ω = ω × (0, T)` on which controls live.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpace {
    nodes: Vec<usize>,
    weights: Vec<f64>,
    coords: Vec<[f64; 2]>,
    dts: Vec<f64>,
    times: Vec<f64>,
}

impl ControlSpace {
    /// `omega` lists the grid nodes belonging to the control region.
    pub fn new(grid: &Grid, omega: &[usize], tg: &TimeGrid) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Domain("control region is empty".into()));
        }
        if omega.iter().any(|&i| i >= grid.len()) || omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape(
                "control nodes must be strictly increasing grid indices".into(),
            ));
        }
        Ok(Self {
            nodes: omega.to_vec(),
            weights: omega.iter().map(|&i| grid.weights()[i]).collect(),
            coords: omega.iter().map(|&i| grid.coords()[i]).collect(),
            dts: tg.steps_iter().collect(),
            times: tg.nodes()[1..].to_vec(),
        })
    }

    /// Grid indices of the control nodes.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn width(&self) -> usize {
        self.nodes.len()
    }

    pub fn slices(&self) -> usize {
        self.dts.len()
    }

    /// Length of slice `k`.
    pub fn dt(&self, k: usize) -> f64 {
        self.dts[k]
    }

    /// Time at which slice `k` is sampled (its right endpoint).
    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `|ω|` in the discrete measure.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.width() * self.slices()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `∫_ω a b`.
    pub fn slice_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn slice_norm(&self, a: &[f64]) -> f64 {
        self.slice_inner(a, a).sqrt()
    }

    /// `∫_{Q_ω} a b` over flat slice-major arrays.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.width();
        (0..self.slices())
            .map(|k| self.dts[k] * self.slice_inner(&a[k * w..(k + 1) * w], &b[k * w..(k + 1) * w]))
            .sum()
    }

    pub fn norm_l2(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn norm_l1(&self, a: &[f64]) -> f64 {
        let w = self.width();
        (0..self.slices())
            .map(|k| {
                self.dts[k]
                    * a[k * w..(k + 1) * w]
                        .iter()
                        .zip(&self.weights)
                        .map(|(v, wt)| wt * v.abs())
                        .sum::<f64>()
            })
            .sum()
    }

    /// Whether `other` has the same control nodes and starts with the same slices.
    pub fn is_prefix_of(&self, other: &ControlSpace) -> bool {
        let tol = NODE_TOL * other.horizon().max(1.0);
        self.nodes == other.nodes
            && self.dts.len() <= other.dts.len()
            && self.times.iter().zip(&other.times).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// `‖u‖_{L²_γ(Q_ω)} = (Σ_k dt_k γ_k⁻¹ ‖u_k‖²_{L²(ω)})^{1/2}` with `γ` sampled at slice times.
pub fn norm_l2_gamma(space: &ControlSpace, values: &[f64], gamma: impl Fn(f64) -> f64) -> Result<f64> {
    if values.len() != space.len() {
        return Err(Error::Shape("control length does not match its space".into()));
    }
    let w = space.width();
    let mut s = 0.0;
    for k in 0..space.slices() {
        let g = gamma(space.time(k));
        if !(g > 0.0) {
            return Err(Error::Domain(format!(
                "weight γ({}) = {g} is not positive",
                space.time(k)
            )));
        }
        let sl = &values[k * w..(k + 1) * w];
        s += space.dt(k) * space.slice_inner(sl, sl) / g;
    }
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_weights_sum_to_length() {
        let g = Grid::interval(2.5, 7).unwrap();
        assert!((g.measure() - 2.5).abs() < 1e-14);
        assert_eq!(g.boundary(), &[0, 6]);
        assert!(g.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn rectangle_boundary_is_lattice_boundary() {
        let g = Grid::rectangle(1.0, 2.0, 4, 3).unwrap();
        assert!((g.measure() - 2.0).abs() < 1e-14);
        // 4x3 lattice: 12 nodes, 2 interior.
        assert_eq!(g.boundary().len(), 10);
        assert!(!g.boundary().contains(&g.index(1, 1)));
        assert!(!g.boundary().contains(&g.index(2, 1)));
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(matches!(Grid::interval(1.0, 2), Err(Error::Shape(_))));
        assert!(matches!(Grid::rectangle(1.0, 1.0, 3, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn graded_steps_sum_to_horizon() {
        let tg = TimeGrid::graded(10.0, 20, 1.1).unwrap();
        let total: f64 = tg.steps_iter().sum();
        assert!((total - 10.0).abs() < 1e-12);
        let r = tg.dt(2) / tg.dt(1);
        assert!((r - 1.1).abs() < 1e-12);
        assert!(TimeGrid::graded(1.0, 4, 1.3).is_err());
    }

    #[test]
    fn with_step_requires_alignment() {
        assert_eq!(TimeGrid::with_step(4.0, 0.25).unwrap().steps(), 16);
        assert!(matches!(TimeGrid::with_step(1.0, 0.3), Err(Error::Alignment(_))));
    }

    #[test]
    fn prefix_and_node_lookup() {
        let tg = TimeGrid::with_step(8.0, 0.5).unwrap();
        let p = tg.prefix(4.0).unwrap();
        assert_eq!(p.steps(), 8);
        assert!(p.is_prefix_of(&tg));
        assert!(tg.prefix(4.2).is_err());
    }

    #[test]
    fn zero_and_constant_norms() {
        let g = Grid::interval(1.0, 5).unwrap();
        let tg = TimeGrid::uniform(1.0, 4).unwrap();
        let z = Trajectory::zeros(5, 5);
        assert_eq!(norm_l2_q(&z, &g, &tg, Window::All).unwrap(), 0.0);
        let c = z.map(|_| -3.0);
        assert!((norm_l2_q(&c, &g, &tg, Window::All).unwrap() - 3.0).abs() < 1e-14);
        assert!((norm_l1_q(&c, &g, &tg, Window::All).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(norm_linf_q(&c, &g, &tg, Window::All).unwrap(), 3.0);
        let one = z.map(|_| 1.0);
        for p in [2.0, 3.5, 8.0] {
            let v = norm_lp_time_l2_space(&one, &g, &tg, p, Window::All).unwrap();
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn indicator_in_time_halves_l1_of_l2() {
        let g = Grid::interval(1.0, 5).unwrap();
        let tg = TimeGrid::uniform(2.0, 4).unwrap();
        // 2 on t ∈ [0, 1] then 0: trapezoid sees the drop over one step.
        let mut traj = Trajectory::zeros(5, 5);
        for m in 0..=2 {
            traj.slice_mut(m).iter_mut().for_each(|v| *v = 2.0);
        }
        let whole = norm_lp_time_l2_space(&traj, &g, &tg, 1.0, Window::All).unwrap();
        let first = norm_lp_time_l2_space(&traj, &g, &tg, 1.0, Window::Span(0.0, 1.0)).unwrap();
        assert!((first - 1.0 * 2.0).abs() < 1e-14);
        assert!((whole - (first + 0.5 * 0.5 * 2.0)).abs() < 1e-14);
    }

    #[test]
    fn misaligned_window_rejected() {
        let g = Grid::interval(1.0, 3).unwrap();
        let tg = TimeGrid::uniform(1.0, 4).unwrap();
        let z = Trajectory::zeros(3, 5);
        assert!(matches!(
            norm_l2_q(&z, &g, &tg, Window::Span(0.0, 0.3)),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn gamma_norm_rejects_nonpositive_weight() {
        let g = Grid::interval(1.0, 3).unwrap();
        let tg = TimeGrid::uniform(1.0, 2).unwrap();
        let cs = ControlSpace::new(&g, &[0, 1, 2], &tg).unwrap();
        let u = vec![1.0; cs.len()];
        assert!(matches!(norm_l2_gamma(&cs, &u, |t| 1.0 - t), Err(Error::Domain(_))));
        assert_eq!(norm_l2_gamma(&cs, &vec![0.0; cs.len()], |_| 2.0).unwrap(), 0.0);
        let plain = cs.norm_l2(&u);
        assert!((norm_l2_gamma(&cs, &u, |_| 1.0).unwrap() - plain).abs() < 1e-15);
    }
}
