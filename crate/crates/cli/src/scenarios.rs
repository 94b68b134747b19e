//! Scenarios bundled with the binary.

use crate::config::{ConfigError, RunConfig};

pub const SCENARIOS: [(&str, &str); 5] = [
    ("desk1d-ball", include_str!("../scenarios/desk1d-ball.toml")),
    ("desk1d-box", include_str!("../scenarios/desk1d-box.toml")),
    ("desk2d", include_str!("../scenarios/desk2d.toml")),
    ("long1d-ball", include_str!("../scenarios/long1d-ball.toml")),
    ("tiny1d-ball", include_str!("../scenarios/tiny1d-ball.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::parse(text(name).ok_or_else(|| ConfigError::UnknownScenario(name.into()))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scenario_parses_under_its_own_name() {
        for (name, _) in SCENARIOS {
            assert_eq!(load(name).unwrap().id, name);
        }
        assert!(matches!(load("nope"), Err(ConfigError::UnknownScenario(_))));
    }
}
