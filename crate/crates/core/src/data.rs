//! Closed-form coefficient and data profiles.
//!
//! Space-time data are either separable `s(x) θ(t)` with closed-form time
//! tails, or sampled on time nodes (treated as vanishing after the last sample).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, TimeGrid, Trajectory};

/// A function of space on the rectangle `(0, lx) × (0, ly)` (or interval).
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceProfile {
    Const(f64),
    /// `amp cos(kx π x / lx) cos(ky π y / ly)`; satisfies the Neumann condition.
    Cos {
        amp: f64,
        kx: f64,
        ky: f64,
    },
    /// Gaussian bump of standard deviation `width`.
    Bump {
        amp: f64,
        center: [f64; 2],
        width: f64,
    },
    /// `amp` on the closed box `[lo, hi]`, zero elsewhere.
    Step {
        amp: f64,
        lo: [f64; 2],
        hi: [f64; 2],
    },
    Sum(Vec<SpaceProfile>),
}

impl SpaceProfile {
    pub fn eval(&self, x: [f64; 2], extents: [f64; 2]) -> f64 {
        match self {
            SpaceProfile::Const(c) => *c,
            SpaceProfile::Cos { amp, kx, ky } => {
                amp * (kx * PI * x[0] / extents[0]).cos() * (ky * PI * x[1] / extents[1]).cos()
            }
            SpaceProfile::Bump { amp, center, width } => {
                let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                amp * (-d2 / (2.0 * width * width)).exp()
            }
            SpaceProfile::Step { amp, lo, hi } => {
                let eps = 1e-12;
                let inside = (0..2).all(|a| x[a] >= lo[a] - eps && x[a] <= hi[a] + eps);
                if inside {
                    *amp
                } else {
                    0.0
                }
            }
            SpaceProfile::Sum(terms) => terms.iter().map(|t| t.eval(x, extents)).sum(),
        }
    }

    pub fn on(&self, grid: &Grid) -> Field {
        let ext = grid.extents();
        grid.field(|x| self.eval(x, ext))
    }
}

fn parse_nums(args: &[&str], what: &str) -> Result<Vec<f64>> {
    args.iter()
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad number `{a}` in {what}")))
        })
        .collect()
}

fn parse_space_term(s: &str) -> Result<SpaceProfile> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    let nums = parse_nums(&parts[1..], s)?;
    let bad = || Error::Domain(format!("cannot parse space profile `{s}`"));
    Ok(match (parts[0], nums.len()) {
        ("const", 1) => SpaceProfile::Const(nums[0]),
        ("cos", 2) => SpaceProfile::Cos {
            amp: nums[0],
            kx: nums[1],
            ky: 0.0,
        },
        ("cos", 3) => SpaceProfile::Cos {
            amp: nums[0],
            kx: nums[1],
            ky: nums[2],
        },
        ("bump", 3) => SpaceProfile::Bump {
            amp: nums[0],
            center: [nums[1], 0.0],
            width: nums[2],
        },
        ("bump", 4) => SpaceProfile::Bump {
            amp: nums[0],
            center: [nums[1], nums[2]],
            width: nums[3],
        },
        ("step", 3) => SpaceProfile::Step {
            amp: nums[0],
            lo: [nums[1], f64::NEG_INFINITY],
            hi: [nums[2], f64::INFINITY],
        },
        ("step", 5) => SpaceProfile::Step {
            amp: nums[0],
            lo: [nums[1], nums[3]],
            hi: [nums[2], nums[4]],
        },
        _ => return Err(bad()),
    })
}

/// Grammar: `term (+ term)*` with terms `const:c`, `cos:amp:kx[:ky]`,
/// `bump:amp:cx[:cy]:width`, `step:amp:x0:x1[:y0:y1]`.
impl FromStr for SpaceProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let terms: Vec<&str> = s.split(" + ").collect();
        if terms.len() == 1 {
            parse_space_term(terms[0])
        } else {
            Ok(SpaceProfile::Sum(
                terms.into_iter().map(parse_space_term).collect::<Result<_>>()?,
            ))
        }
    }
}

impl fmt::Display for SpaceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceProfile::Const(c) => write!(f, "const:{c}"),
            SpaceProfile::Cos { amp, kx, ky } => write!(f, "cos:{amp}:{kx}:{ky}"),
            SpaceProfile::Bump { amp, center, width } => {
                write!(f, "bump:{amp}:{}:{}:{width}", center[0], center[1])
            }
            SpaceProfile::Step { amp, lo, hi } => {
                if lo[1].is_infinite() {
                    write!(f, "step:{amp}:{}:{}", lo[0], hi[0])
                } else {
                    write!(f, "step:{amp}:{}:{}:{}:{}", lo[0], hi[0], lo[1], hi[1])
                }
            }
            SpaceProfile::Sum(terms) => {
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

/// Scalar function of time with closed-form tail integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Zero,
    Const(f64),
    /// `amp e^{-rate t}`.
    Exp {
        amp: f64,
        rate: f64,
    },
    /// `amp` on `[0, end]`, zero afterwards.
    Window {
        amp: f64,
        end: f64,
    },
    /// `amp e^{-rate t}` on `[0, end]`, zero afterwards.
    ExpWindow {
        amp: f64,
        rate: f64,
        end: f64,
    },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Zero => 0.0,
            TimeProfile::Const(c) => c,
            TimeProfile::Exp { amp, rate } => amp * (-rate * t).exp(),
            TimeProfile::Window { amp, end } => {
                if t <= end * (1.0 + 1e-12) {
                    amp
                } else {
                    0.0
                }
            }
            TimeProfile::ExpWindow { amp, rate, end } => {
                if t <= end * (1.0 + 1e-12) {
                    amp * (-rate * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_T^∞ |θ(t)|^q dt`.
    pub fn tail_power(&self, from: f64, q: f64) -> Result<f64> {
        match *self {
            TimeProfile::Zero => Ok(0.0),
            TimeProfile::Const(0.0) => Ok(0.0),
            TimeProfile::Const(c) => Err(Error::Domain(format!("constant profile {c} has a non-integrable tail"))),
            TimeProfile::Exp { amp: 0.0, .. } => Ok(0.0),
            TimeProfile::Exp { amp, rate } => {
                if rate <= 0.0 {
                    return Err(Error::Domain(format!(
                        "exponential profile with rate {rate} has a non-integrable tail"
                    )));
                }
                Ok(amp.abs().powf(q) * (-q * rate * from).exp() / (q * rate))
            }
            TimeProfile::Window { amp, end } => Ok(amp.abs().powf(q) * (end - from).max(0.0)),
            TimeProfile::ExpWindow { amp, rate, end } => {
                if from >= end || amp == 0.0 {
                    return Ok(0.0);
                }
                let a = amp.abs().powf(q);
                if rate == 0.0 {
                    return Ok(a * (end - from));
                }
                let k = q * rate;
                Ok(a * ((-k * from).exp() - (-k * end).exp()) / k)
            }
        }
    }

    /// Last time at which the profile can be nonzero; `None` if unbounded.
    pub fn support_end(&self) -> Option<f64> {
        match *self {
            TimeProfile::Zero => Some(0.0),
            TimeProfile::Const(c) | TimeProfile::Exp { amp: c, .. } if c == 0.0 => Some(0.0),
            TimeProfile::Const(_) | TimeProfile::Exp { .. } => None,
            TimeProfile::Window { amp, end } | TimeProfile::ExpWindow { amp, end, .. } => {
                Some(if amp == 0.0 { 0.0 } else { end })
            }
        }
    }
}

/// Grammar: `zero`, `const:c`, `exp:amp:rate[:end]`, `window:amp:end`.
impl FromStr for TimeProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let nums = parse_nums(&parts[1..], s)?;
        Ok(match (parts[0], nums.len()) {
            ("zero", 0) => TimeProfile::Zero,
            ("const", 1) => TimeProfile::Const(nums[0]),
            ("exp", 2) => TimeProfile::Exp {
                amp: nums[0],
                rate: nums[1],
            },
            ("exp", 3) => TimeProfile::ExpWindow {
                amp: nums[0],
                rate: nums[1],
                end: nums[2],
            },
            ("window", 2) => TimeProfile::Window {
                amp: nums[0],
                end: nums[1],
            },
            _ => return Err(Error::Domain(format!("cannot parse time profile `{s}`"))),
        })
    }
}

impl fmt::Display for TimeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeProfile::Zero => write!(f, "zero"),
            TimeProfile::Const(c) => write!(f, "const:{c}"),
            TimeProfile::Exp { amp, rate } => write!(f, "exp:{amp}:{rate}"),
            TimeProfile::Window { amp, end } => write!(f, "window:{amp}:{end}"),
            TimeProfile::ExpWindow { amp, rate, end } => write!(f, "exp:{amp}:{rate}:{end}"),
        }
    }
}

/// Source or target data on `Ω × (0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceTimeData {
    Separable {
        space: SpaceProfile,
        time: TimeProfile,
    },
    /// Values at increasing sample times, linear in between and zero after the last one.
    Sampled {
        times: Vec<f64>,
        values: Trajectory,
    },
}

impl SpaceTimeData {
    pub fn zero() -> Self {
        SpaceTimeData::Separable {
            space: SpaceProfile::Const(0.0),
            time: TimeProfile::Zero,
        }
    }

    pub fn separable(space: SpaceProfile, time: TimeProfile) -> Self {
        SpaceTimeData::Separable { space, time }
    }

    /// Data sampled on the nodes of `tg`.
    pub fn sampled(tg: &TimeGrid, values: Trajectory) -> Result<Self> {
        if values.len() != tg.steps() + 1 {
            return Err(Error::Shape("sampled data must have one slice per time node".into()));
        }
        Ok(SpaceTimeData::Sampled {
            times: tg.nodes().to_vec(),
            values,
        })
    }

    pub fn eval_on(&self, grid: &Grid, tg: &TimeGrid) -> Result<Trajectory> {
        let n = grid.len();
        let mut out = Trajectory::zeros(n, tg.steps() + 1);
        match self {
            SpaceTimeData::Separable { space, time } => {
                let s = space.on(grid);
                for (m, &t) in tg.nodes().iter().enumerate() {
                    let th = time.eval(t);
                    out.slice_mut(m).iter_mut().zip(s.iter()).for_each(|(o, v)| *o = v * th);
                }
            }
            SpaceTimeData::Sampled { times, values } => {
                if values.nodes() != n {
                    return Err(Error::Shape("sampled data live on a different grid".into()));
                }
                let last = *times.last().unwrap();
                let tol = 1e-10 * last.max(1.0);
                for (m, &t) in tg.nodes().iter().enumerate() {
                    if t > last + tol {
                        continue;
                    }
                    let k = times.partition_point(|&s| s < t - tol).min(times.len() - 1);
                    let dst = out.slice_mut(m);
                    if (times[k] - t).abs() <= tol || k == 0 {
                        dst.copy_from_slice(values.slice(k));
                    } else {
                        let th = (t - times[k - 1]) / (times[k] - times[k - 1]);
                        let (a, b) = (values.slice(k - 1), values.slice(k));
                        for i in 0..n {
                            dst[i] = (1.0 - th) * a[i] + th * b[i];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `‖data‖_{L²(Ω × (T, ∞))}`.
    pub fn tail_l2(&self, grid: &Grid, from: f64) -> Result<f64> {
        match self {
            SpaceTimeData::Separable { space, time } => {
                let s = space.on(grid);
                let tail = time.tail_power(from, 2.0)?;
                Ok((grid.inner(&s, &s) * tail).sqrt())
            }
            SpaceTimeData::Sampled { times, values } => {
                let last = *times.last().unwrap();
                if from >= last {
                    return Ok(0.0);
                }
                let tol = 1e-10 * last.max(1.0);
                let k = times
                    .iter()
                    .position(|&t| (t - from).abs() <= tol)
                    .ok_or_else(|| Error::Alignment(format!("{from} is not a sample time")))?;
                let mut s = 0.0;
                for m in k + 1..times.len() {
                    let (a, b) = (values.slice(m - 1), values.slice(m));
                    s += 0.5 * (times[m] - times[m - 1]) * (grid.inner(a, a) + grid.inner(b, b));
                }
                Ok(s.sqrt())
            }
        }
    }

    /// Last time at which the data can be nonzero.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            SpaceTimeData::Separable { space, time } => {
                if matches!(space, SpaceProfile::Const(c) if *c == 0.0) {
                    Some(0.0)
                } else {
                    time.support_end()
                }
            }
            SpaceTimeData::Sampled { times, .. } => times.last().copied(),
        }
    }
}
