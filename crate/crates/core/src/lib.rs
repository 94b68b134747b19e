//! Finite-horizon optimal control of semilinear parabolic equations with
//! `L²(ω)`-ball or box control constraints and no control cost.
//!
//! The crate discretizes `ẏ + Ay + f(y) = g + uχ_ω` on intervals and rectangles
//! with a monotone finite-volume operator and implicit Euler in time, solves the
//! tracking problem on `[0, T]` by projected gradient, continues the solution
//! across increasing horizons, and evaluates first- and second-order
//! optimality conditions and stability estimates as sampled checks.

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod controls;
pub mod data;
pub mod error;
pub mod grid;
pub mod horizon;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod pde;
pub mod verify;

pub use controls::{AdmissibleSet, ControlTrajectory, DiscreteSet};
pub use error::{Error, Result};
pub use grid::{ControlSpace, Field, Grid, TimeGrid, Trajectory, Window};
pub use pde::{Nonlinearity, ProblemSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a seed and a named stream.
pub fn rng_for(seed: u64, stream: &str) -> ChaCha8Rng {
    // FNV-1a keeps stream offsets stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Worker cap read from `HORIZONCTL_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("HORIZONCTL_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Installs the global worker pool honouring [`thread_cap`]; later calls are no-ops.
pub fn init_thread_pool() {
    if let Some(n) = thread_cap() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
