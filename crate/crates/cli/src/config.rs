//! Run configuration: a TOML file read as a flat map of dotted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use horizonctl::controls::AdmissibleSet;
use horizonctl::data::{SpaceProfile, SpaceTimeData, TimeProfile};
use horizonctl::horizon::HorizonPlan;
use horizonctl::objective::TrackingProblem;
use horizonctl::optimizer::OptimizerConfig;
use horizonctl::pde::{region_nodes, Nonlinearity, ProblemData};
use horizonctl::verify::{CheckToggles, VerifyConfig};
use horizonctl::{Grid, ProblemSpec, TimeGrid};
use toml::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("missing config key `{0}`")]
    Missing(String),
    #[error("config key `{key}`: expected {expected}")]
    Type { key: String, expected: &'static str },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown config key `{0}`")]
    Unknown(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Dotted keys with use tracking, so leftovers can be reported as unknown.
struct Keys {
    map: BTreeMap<String, Value>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn f64_of(key: &str, v: Value) -> Result<f64> {
        match v {
            Value::Float(x) => Ok(x),
            Value::Integer(i) => Ok(i as f64),
            _ => Err(ConfigError::Type {
                key: key.into(),
                expected: "a number",
            }),
        }
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        let v = self.take(key).ok_or_else(|| ConfigError::Missing(key.into()))?;
        Self::f64_of(key, v)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        self.take(key).map_or(Ok(default), |v| Self::f64_of(key, v))
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key).map(|v| Self::f64_of(key, v)).transpose()
    }

    fn usize_of(key: &str, v: Value) -> Result<usize> {
        match v {
            Value::Integer(i) if i >= 0 => Ok(i as usize),
            _ => Err(ConfigError::Type {
                key: key.into(),
                expected: "a nonnegative integer",
            }),
        }
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.take(key).ok_or_else(|| ConfigError::Missing(key.into()))?;
        Self::usize_of(key, v)
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        self.take(key).map_or(Ok(default), |v| Self::usize_of(key, v))
    }

    fn opt_usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key).map(|v| Self::usize_of(key, v)).transpose()
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(ConfigError::Type {
                key: key.into(),
                expected: "a boolean",
            }),
        }
    }

    fn string(&mut self, key: &str) -> Result<String> {
        match self.take(key) {
            None => Err(ConfigError::Missing(key.into())),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(ConfigError::Type {
                key: key.into(),
                expected: "a string",
            }),
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> Result<String> {
        if self.map.contains_key(key) {
            self.string(key)
        } else {
            Ok(default.into())
        }
    }

    fn f64_list(&mut self, key: &str) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Err(ConfigError::Missing(key.into())),
            Some(Value::Array(a)) => a.into_iter().map(|v| Self::f64_of(key, v)).collect(),
            Some(_) => Err(ConfigError::Type {
                key: key.into(),
                expected: "an array of numbers",
            }),
        }
    }

    fn parsed<T: std::str::FromStr<Err = horizonctl::Error>>(&mut self, key: &str, default: Option<&str>) -> Result<T> {
        let s = match default {
            Some(d) => self.string_or(key, d)?,
            None => self.string(key)?,
        };
        s.parse().map_err(|e: horizonctl::Error| invalid(key, e))
    }

    fn finish(self) -> Result<()> {
        match self.map.into_keys().next() {
            Some(k) => Err(ConfigError::Unknown(k)),
            None => Ok(()),
        }
    }
}

fn invalid(key: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dim: usize,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub horizon: f64,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub grading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonConfig {
    pub levels: Vec<f64>,
    pub reference: f64,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub id: String,
    pub seed: u64,
    pub grid: GridConfig,
    pub diffusion: SpaceProfile,
    pub reaction: SpaceProfile,
    pub nonlinearity: Nonlinearity,
    pub exponent: f64,
    pub initial: SpaceProfile,
    pub source: SpaceTimeData,
    pub target: SpaceTimeData,
    /// `[x0, x1, y0, y1]`.
    pub omega: [f64; 4],
    pub set: AdmissibleSet,
    pub time: TimeConfig,
    pub optimizer: OptimizerConfig,
    pub horizon: Option<HorizonConfig>,
    pub verify: VerifyConfig,
    pub output_dir: PathBuf,
}

fn space_time(keys: &mut Keys, key: &str, default_time: &str) -> Result<SpaceTimeData> {
    let space = keys.parsed(&format!("{key}.space"), Some("const:0"))?;
    let time = keys.parsed(&format!("{key}.time"), Some(default_time))?;
    Ok(SpaceTimeData::separable(space, time))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let mut map = BTreeMap::new();
        flatten("", &table, &mut map);
        let mut k = Keys { map };

        let id = k.string("run.id")?;
        if id.is_empty() || id.contains([',', '"', '\n']) {
            return Err(invalid(
                "run.id",
                "must be nonempty and free of commas, quotes and newlines",
            ));
        }
        let seed = k.usize_or("run.seed", 0)? as u64;

        let dim = k.usize_or("grid.dim", 1)?;
        let grid = match dim {
            1 => GridConfig {
                dim,
                lx: k.f64("grid.lx")?,
                ly: 0.0,
                nx: k.usize("grid.nx")?,
                ny: 1,
            },
            2 => GridConfig {
                dim,
                lx: k.f64("grid.lx")?,
                ly: k.f64("grid.ly")?,
                nx: k.usize("grid.nx")?,
                ny: k.usize("grid.ny")?,
            },
            _ => return Err(invalid("grid.dim", "must be 1 or 2")),
        };

        let diffusion = k.parsed("operator.a", None)?;
        let reaction = k.parsed("operator.a0", None)?;
        let nonlinearity = k.parsed("problem.nonlinearity", None)?;
        let exponent = k.f64_or("problem.p", 2.0)?;

        let initial = k.parsed("data.initial", Some("const:0"))?;
        let source = space_time(&mut k, "data.source", "zero")?;
        let target = space_time(&mut k, "data.target", "const:1")?;

        let om = k.f64_list("control.omega")?;
        let omega = match (dim, om.as_slice()) {
            (1, &[a, b]) => [a, b, 0.0, 0.0],
            (2, &[a, b, c, d]) => [a, b, c, d],
            _ => {
                return Err(invalid(
                    "control.omega",
                    "expected [x0, x1] in 1D or [x0, x1, y0, y1] in 2D",
                ))
            }
        };

        let kind = k.string("set.kind")?;
        let set = match kind.as_str() {
            "ball" => {
                let gamma0 = k.f64("set.gamma0")?;
                let sigma = k.f64_or("set.sigma", 0.0)?;
                let gamma = if sigma == 0.0 {
                    TimeProfile::Const(gamma0)
                } else {
                    TimeProfile::Exp {
                        amp: gamma0,
                        rate: sigma,
                    }
                };
                AdmissibleSet::Ball { gamma }
            }
            "box" => AdmissibleSet::Box {
                alpha: SpaceTimeData::separable(k.parsed("set.alpha", None)?, TimeProfile::Const(1.0)),
                beta: SpaceTimeData::separable(k.parsed("set.beta", None)?, TimeProfile::Const(1.0)),
            },
            _ => return Err(invalid("set.kind", "must be `ball` or `box`")),
        };

        let time = TimeConfig {
            horizon: k.f64("time.T")?,
            dt: k.opt_f64("time.dt")?,
            steps: k.opt_usize("time.steps")?,
            grading: k.f64_or("time.grading", 1.0)?,
        };
        if time.dt.is_some() == time.steps.is_some() {
            return Err(invalid("time.dt", "give exactly one of time.dt and time.steps"));
        }
        if time.grading != 1.0 && time.steps.is_none() {
            return Err(invalid("time.grading", "graded grids need time.steps"));
        }

        let d = OptimizerConfig::default();
        let optimizer = OptimizerConfig {
            s0: k.f64_or("optimizer.s0", d.s0)?,
            backtrack: k.f64_or("optimizer.backtrack", d.backtrack)?,
            armijo: k.f64_or("optimizer.armijo", d.armijo)?,
            tol: k.f64_or("optimizer.tol", d.tol)?,
            max_iter: k.usize_or("optimizer.max_iter", d.max_iter)?,
            growth: k.f64_or("optimizer.growth", d.growth)?,
            spectral: k.bool_or("optimizer.spectral", d.spectral)?,
            min_step: k.f64_or("optimizer.min_step", d.min_step)?,
            initial: d.initial,
        };
        optimizer.validate().map_err(|e| invalid("optimizer", e))?;

        let horizon = if k.map.contains_key("horizon.levels") {
            Some(HorizonConfig {
                levels: k.f64_list("horizon.levels")?,
                reference: k.f64("horizon.reference")?,
            })
        } else {
            None
        };

        let v = VerifyConfig::default();
        let verify = VerifyConfig {
            seed,
            vi_samples: k.usize_or("verify.vi_samples", v.vi_samples)?,
            directions: k.usize_or("verify.directions", v.directions)?,
            samples: k.usize_or("verify.samples", v.samples)?,
            l1_samples: k.usize_or("verify.l1_samples", v.l1_samples)?,
            tau: k.f64_or("verify.tau", v.tau)?,
            tube: k.opt_f64("verify.tube")?,
            activity: k.f64_or("verify.activity", v.activity)?,
            collinearity_tol: k.f64_or("verify.collinearity_tol", v.collinearity_tol)?,
            tail_level: k.f64_or("verify.tail_level", v.tail_level)?,
            stationarity_tol: optimizer.tol,
            toggles: CheckToggles {
                first_order: k.bool_or("verify.first_order", true)?,
                derivatives: k.bool_or("verify.derivatives", true)?,
                ssc: k.bool_or("verify.ssc", true)?,
                growth: k.bool_or("verify.growth", true)?,
                appendix: k.bool_or("verify.appendix", true)?,
            },
        };
        let output_dir = PathBuf::from(k.string_or("output.dir", &format!("out/{id}"))?);
        k.finish()?;

        let cfg = RunConfig {
            id,
            seed,
            grid,
            diffusion,
            reaction,
            nonlinearity,
            exponent,
            initial,
            source,
            target,
            omega,
            set,
            time,
            optimizer,
            horizon,
            verify,
            output_dir,
        };
        // Surface inconsistent combinations as configuration errors, before any solve.
        let spec = cfg.spec().map_err(|e| invalid("problem", e))?;
        let tg = cfg.time_grid().map_err(|e| invalid("time", e))?;
        let problem = TrackingProblem::new(spec, tg).map_err(|e| invalid("problem", e))?;
        cfg.set
            .discretize(problem.grid(), problem.space())
            .map_err(|e| invalid("set", e))?;
        if cfg.horizon.is_some() {
            cfg.plan().map_err(|e| invalid("horizon.levels", e))?;
        }
        Ok(cfg)
    }

    pub fn build_grid(&self) -> horizonctl::Result<Grid> {
        match self.grid.dim {
            1 => Grid::interval(self.grid.lx, self.grid.nx),
            _ => Grid::rectangle(self.grid.lx, self.grid.ly, self.grid.nx, self.grid.ny),
        }
    }

    pub fn spec(&self) -> horizonctl::Result<ProblemSpec> {
        let grid = self.build_grid()?;
        let ext = grid.extents();
        let o = self.omega;
        let omega = region_nodes(&grid, [o[0], o[2]], [o[1], o[3]]);
        ProblemData {
            initial: grid.field(|x| self.initial.eval(x, ext)),
            grid,
            diffusion: self.diffusion.clone(),
            reaction: self.reaction.clone(),
            nonlinearity: self.nonlinearity,
            source: self.source.clone(),
            target: self.target.clone(),
            omega,
            exponent: self.exponent,
        }
        .build()
    }

    pub fn time_grid(&self) -> horizonctl::Result<TimeGrid> {
        match (self.time.dt, self.time.steps) {
            (Some(dt), _) => TimeGrid::with_step(self.time.horizon, dt),
            (None, Some(m)) => TimeGrid::graded(self.time.horizon, m, self.time.grading),
            (None, None) => unreachable!("validated at parse time"),
        }
    }

    /// The ladder plan; fails when the config has no `horizon` table or a graded grid.
    pub fn plan(&self) -> horizonctl::Result<HorizonPlan> {
        let h = self
            .horizon
            .as_ref()
            .ok_or_else(|| horizonctl::Error::Domain("no horizon.levels configured".into()))?;
        let dt = self
            .time
            .dt
            .ok_or_else(|| horizonctl::Error::Domain("horizon ladders need a uniform time.dt".into()))?;
        HorizonPlan::new(h.levels.clone(), h.reference, dt)
    }

    /// Human-readable resolved plan for `--dry-run`.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = writeln!(s, "run.id = {}", self.id);
        let _ = writeln!(s, "run.seed = {}", self.seed);
        if g.dim == 1 {
            let _ = writeln!(s, "grid = interval [0, {}] with {} nodes", g.lx, g.nx);
        } else {
            let _ = writeln!(
                s,
                "grid = rectangle [0, {}] x [0, {}] with {} x {} nodes",
                g.lx, g.ly, g.nx, g.ny
            );
        }
        let _ = writeln!(s, "operator.a = {}", self.diffusion);
        let _ = writeln!(s, "operator.a0 = {}", self.reaction);
        let _ = writeln!(s, "problem.nonlinearity = {}", self.nonlinearity);
        let _ = writeln!(s, "problem.p = {}", self.exponent);
        let _ = writeln!(s, "data.initial = {}", self.initial);
        for (name, d) in [("source", &self.source), ("target", &self.target)] {
            if let SpaceTimeData::Separable { space, time } = d {
                let _ = writeln!(s, "data.{name} = {space} x {time}");
            }
        }
        let _ = writeln!(s, "control.omega = {:?}", &self.omega[..2 * g.dim]);
        match &self.set {
            AdmissibleSet::Ball { gamma } => {
                let _ = writeln!(s, "set = ball, gamma(t) = {gamma}");
            }
            AdmissibleSet::Box { alpha, beta } => {
                if let (SpaceTimeData::Separable { space: a, .. }, SpaceTimeData::Separable { space: b, .. }) =
                    (alpha, beta)
                {
                    let _ = writeln!(s, "set = box, alpha = {a}, beta = {b}");
                }
            }
        }
        match self.time_grid() {
            Ok(tg) => {
                let _ = writeln!(s, "time = [0, {}] with {} steps", self.time.horizon, tg.steps());
            }
            Err(e) => {
                let _ = writeln!(s, "time = invalid ({e})");
            }
        }
        let o = &self.optimizer;
        let _ = writeln!(
            s,
            "optimizer = projected gradient, tol {:e}, max_iter {}, spectral {}",
            o.tol, o.max_iter, o.spectral
        );
        if let Some(h) = &self.horizon {
            let _ = writeln!(s, "horizon.levels = {:?}, reference = {}", h.levels, h.reference);
        }
        let t = &self.verify.toggles;
        let _ = writeln!(
            s,
            "verify = first_order {}, derivatives {}, ssc {}, growth {}, appendix {}",
            t.first_order, t.derivatives, t.ssc, t.growth, t.appendix
        );
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        run.id = "t"
        grid.lx = 1.0
        grid.nx = 9
        operator.a = "const:0.1"
        operator.a0 = "const:1"
        problem.nonlinearity = "zero"
        control.omega = [0.0, 0.5]
        set.kind = "ball"
        set.gamma0 = 1.0
        time.T = 1.0
        time.dt = 0.25
    "#;

    #[test]
    fn minimal_config_resolves() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.grid.nx, 9);
        assert_eq!(c.time_grid().unwrap().steps(), 4);
        assert_eq!(c.output_dir, PathBuf::from("out/t"));
        assert!(c.horizon.is_none());
    }

    #[test]
    fn tables_and_dotted_keys_are_equivalent() {
        let tabled = MINIMAL.replace("grid.lx = 1.0\n        grid.nx = 9", "grid = { lx = 1.0, nx = 9 }");
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig::parse(&tabled).unwrap();
        assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("time.T = 1.0", "");
        let e = RunConfig::parse(&text).unwrap_err();
        assert!(matches!(&e, ConfigError::Missing(k) if k == "time.T"), "{e}");
        assert!(e.to_string().contains("time.T"));
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        let e = RunConfig::parse(&format!("{MINIMAL}\ngrid.nz = 3")).unwrap_err();
        assert!(matches!(e, ConfigError::Unknown(k) if k == "grid.nz"));
        let e = RunConfig::parse(&MINIMAL.replace("grid.nx = 9", "grid.nx = \"nine\"")).unwrap_err();
        assert!(matches!(e, ConfigError::Type { .. }));
        let e = RunConfig::parse(&MINIMAL.replace("\"ball\"", "\"disc\"")).unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { .. }));
    }

    #[test]
    fn horizon_ladder_validated() {
        let ok = format!("{MINIMAL}\nhorizon.levels = [0.5, 1.0]\nhorizon.reference = 2.0");
        assert_eq!(RunConfig::parse(&ok).unwrap().plan().unwrap().horizons(), &[0.5, 1.0]);
        let empty = format!("{MINIMAL}\nhorizon.levels = []\nhorizon.reference = 2.0");
        assert!(RunConfig::parse(&empty).is_err());
        let misaligned = format!("{MINIMAL}\nhorizon.levels = [0.3]\nhorizon.reference = 2.0");
        assert!(RunConfig::parse(&misaligned).is_err());
    }
}
