//! Suite configuration: a TOML file holding one `[[experiment]]` table per
//! experiment. Unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::Path;

use robcert::harness::ExperimentConfig;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub experiment: Vec<ExperimentConfig>,
}

/// A parsed suite plus the digest of the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedSuite {
    pub suite: SuiteConfig,
    pub digest: String,
}

pub fn parse(text: &str) -> Result<SuiteConfig, CliError> {
    let suite: SuiteConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_owned()))?;
    if suite.experiment.is_empty() {
        return Err(CliError::Config(
            "the config lists no [[experiment]] tables".into(),
        ));
    }
    let mut names = BTreeSet::new();
    for (i, exp) in suite.experiment.iter().enumerate() {
        if !names.insert(exp.name.as_str()) {
            return Err(CliError::Config(format!(
                "experiment #{} reuses the name `{}`",
                i + 1,
                exp.name
            )));
        }
        exp.validate()
            .map_err(|e| CliError::Config(format!("experiment `{}`: {e}", exp.name)))?;
    }
    Ok(suite)
}

pub fn load(path: &Path) -> Result<LoadedSuite, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Config(format!("{} is not valid UTF-8", path.display())))?;
    let suite = parse(text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(LoadedSuite {
        suite,
        digest: format!("sha256:{}", hex::encode(Sha256::digest(&bytes))),
    })
}

impl SuiteConfig {
    /// Experiments named by `filter`, or all of them.
    pub fn select(&self, filter: Option<&str>) -> Result<Vec<ExperimentConfig>, CliError> {
        match filter {
            None => Ok(self.experiment.clone()),
            Some(name) => self
                .experiment
                .iter()
                .find(|e| e.name == name)
                .map(|e| vec![e.clone()])
                .ok_or_else(|| CliError::Config(format!("no experiment named `{name}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LASSO: &str = r#"
[[experiment]]
name = "lasso"
n = 50
delta = 0.1
loss_bound = 2.0
gamma_grid = [0.5, 1.0]

[experiment.learner]
kind = "lasso"
c = 0.5

[experiment.distribution]
input = { lo = [-1.0], hi = [1.0] }
labels = { kind = "linear", weights = [0.5], range = [-1.0, 1.0] }
"#;

    #[test]
    fn parses_minimal_suite() {
        let s = parse(LASSO).unwrap();
        assert_eq!(s.experiment.len(), 1);
        assert_eq!(s.experiment[0].trials, 1);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let bad = LASSO.replace("gamma_grid", "gama_grid");
        let CliError::Config(msg) = parse(&bad).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("gama_grid"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_experiment() {
        let bad = LASSO.replace("delta = 0.1", "delta = 1.5");
        let CliError::Config(msg) = parse(&bad).unwrap_err() else {
            panic!()
        };
        assert!(msg.contains("`lasso`") && msg.contains("delta"), "{msg}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let twice = format!("{LASSO}\n{LASSO}");
        assert!(parse(&twice).is_err());
    }
}
