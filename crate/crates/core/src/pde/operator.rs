use crate::data::SpaceProfile;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::BandedSym;

/// Finite-volume discretization of `A = −∇·(a ∇·) + a₀` with homogeneous
/// Neumann conditions, stored in weighted (variational) form
/// `S = K + diag(w a₀)` so that `W⁻¹ S` is the nodal operator.
///
/// Face coefficients are `a` at edge midpoints times the dual face length over
/// the edge length, which keeps `K` symmetric with zero row sums and
/// nonpositive off-diagonals.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    matrix: BandedSym,
    weights: Vec<f64>,
    reaction: Vec<f64>,
    min_diffusion: f64,
}

impl EllipticOperator {
    pub fn assemble(grid: &Grid, diffusion: &SpaceProfile, reaction: &SpaceProfile) -> Result<Self> {
        let ext = grid.extents();
        let [nx, ny] = grid.counts();
        let [hx, hy] = grid.spacing();
        let n = grid.len();
        let mut k = BandedSym::zeros(n, grid.bandwidth());
        let mut min_diffusion = f64::INFINITY;
        let edge = |k: &mut BandedSym, p: usize, q: usize, coef: f64| {
            k.add(p, p, coef);
            k.add(q, q, coef);
            k.add(p, q, -coef);
        };
        let coords = grid.coords();
        let face = |j: usize, count: usize, h: f64| if j == 0 || j + 1 == count { 0.5 * h } else { h };
        for j in 0..ny {
            let cross = if grid.dim() == 2 { face(j, ny, hy) } else { 1.0 };
            for i in 0..nx.saturating_sub(1) {
                let (p, q) = (grid.index(i, j), grid.index(i + 1, j));
                let mid = [0.5 * (coords[p][0] + coords[q][0]), coords[p][1]];
                let a = diffusion.eval(mid, ext);
                min_diffusion = min_diffusion.min(a);
                edge(&mut k, p, q, a * cross / hx);
            }
        }
        if grid.dim() == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let cross = face(i, nx, hx);
                    let (p, q) = (grid.index(i, j), grid.index(i, j + 1));
                    let mid = [coords[p][0], 0.5 * (coords[p][1] + coords[q][1])];
                    let a = diffusion.eval(mid, ext);
                    min_diffusion = min_diffusion.min(a);
                    edge(&mut k, p, q, a * cross / hy);
                }
            }
        }
        let nodal = diffusion.on(grid);
        min_diffusion = nodal.iter().fold(min_diffusion, |m, &a| m.min(a));
        if !(min_diffusion > 0.0) {
            return Err(Error::Domain(format!(
                "diffusion must be uniformly positive, minimum {min_diffusion}"
            )));
        }
        let a0 = reaction.on(grid);
        if a0.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Domain("reaction coefficient a0 must be nonnegative".into()));
        }
        if a0.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain(
                "reaction coefficient a0 must not vanish identically".into(),
            ));
        }
        let weights = grid.weights().to_vec();
        for i in 0..n {
            k.add(i, i, weights[i] * a0[i]);
        }
        Ok(Self {
            matrix: k,
            weights,
            reaction: a0.0,
            min_diffusion,
        })
    }

    /// The symmetric weighted matrix `S`.
    pub fn matrix(&self) -> &BandedSym {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodal values of `a₀`.
    pub fn reaction(&self) -> &[f64] {
        &self.reaction
    }

    /// Ellipticity floor `min a` over nodes and faces.
    pub fn min_diffusion(&self) -> f64 {
        self.min_diffusion
    }

    /// `S x` (weighted form).
    pub fn apply_weighted(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul(x)
    }

    /// `W⁻¹ S x`, the nodal action of `A`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.matrix.mul(x);
        y.iter_mut().zip(&self.weights).for_each(|(v, w)| *v /= w);
        y
    }

    /// Implicit Euler step matrix `W + dt (S + W diag(d))`.
    pub fn step_matrix(&self, dt: f64, d: &[f64]) -> BandedSym {
        let diag: Vec<f64> = self.weights.iter().zip(d).map(|(w, di)| w * (1.0 + dt * di)).collect();
        self.matrix.scaled_plus_diag(dt, &diag)
    }

    pub fn step_matrix_plain(&self, dt: f64) -> BandedSym {
        let diag = self.weights.clone();
        self.matrix.scaled_plus_diag(dt, &diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variable() -> (SpaceProfile, SpaceProfile) {
        (
            "const:1 + cos:0.4:1".parse().unwrap(),
            "const:0.5 + bump:1:0.3:0.2".parse().unwrap(),
        )
    }

    #[test]
    fn constant_field_maps_to_reaction() {
        let (a, a0) = variable();
        for grid in [
            Grid::interval(1.0, 9).unwrap(),
            Grid::rectangle(1.0, 0.5, 5, 4).unwrap(),
        ] {
            let op = EllipticOperator::assemble(&grid, &a, &a0).unwrap();
            let one = vec![1.0; grid.len()];
            let out = op.apply(&one);
            for (v, r) in out.iter().zip(op.reaction()) {
                assert!((v - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn m_matrix_sign_pattern_and_positive_definite() {
        let (a, a0) = variable();
        let grid = Grid::rectangle(1.0, 1.0, 6, 5).unwrap();
        let op = EllipticOperator::assemble(&grid, &a, &a0).unwrap();
        let s = op.matrix();
        for i in 0..grid.len() {
            assert!(s.diag(i) > 0.0);
            for j in 0..grid.len() {
                if i != j {
                    assert!(s.get(i, j) <= 0.0);
                    assert_eq!(s.get(i, j), s.get(j, i));
                }
            }
        }
        assert!(s.cholesky().is_ok());
    }

    #[test]
    fn rejects_bad_coefficients() {
        let grid = Grid::interval(1.0, 5).unwrap();
        let one = SpaceProfile::Const(1.0);
        assert!(EllipticOperator::assemble(&grid, &one, &SpaceProfile::Const(0.0)).is_err());
        assert!(EllipticOperator::assemble(&grid, &one, &SpaceProfile::Const(-1.0)).is_err());
        assert!(EllipticOperator::assemble(&grid, &SpaceProfile::Const(0.0), &one).is_err());
    }

    #[test]
    fn one_dimensional_stencil_values() {
        let grid = Grid::interval(1.0, 3).unwrap();
        let op = EllipticOperator::assemble(&grid, &SpaceProfile::Const(1.0), &SpaceProfile::Const(2.0)).unwrap();
        let s = op.matrix();
        // h = 1/2, edges carry a/h = 2; weights 1/4, 1/2, 1/4.
        assert!((s.get(0, 0) - (2.0 + 0.5)).abs() < 1e-15);
        assert!((s.get(1, 1) - (4.0 + 1.0)).abs() < 1e-15);
        assert!((s.get(0, 1) + 2.0).abs() < 1e-15);
    }
}
