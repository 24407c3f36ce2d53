//! TOML configuration files.
//!
//! Two kinds of file are read, both carrying `schema_version = 1` and
//! rejecting unknown keys:
//!
//! * a scenario file (`[scenario]` and `[theta]` tables) describing a
//!   simulated study;
//! * a run file with optional `[priors]`, `[mcmc]`, `[sensitivity]` and
//!   `[ipw]` tables; omitted tables and keys take their defaults.
//!
//! Beta and sigma2 rows are ordered by treatment sequence 00, 01, 10, 11; each
//! beta and gamma row is `[intercept, Y1(0) slope, Y1(1) slope, interaction]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParameterVector, SpecKind};
use crate::sampler::{McmcConfig, PriorConfig};
use crate::sensitivity::SensitivityConfig;
use crate::simgen::ScenarioConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    spec: SpecKind,
    n: usize,
    #[serde(default = "default_p_w1")]
    p_w1: f64,
    seed: u64,
}

fn default_p_w1() -> f64 {
    0.5
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThetaSection {
    alpha: [f64; 3],
    gamma: [[f64; 4]; 2],
    beta: [[f64; 4]; 4],
    sigma2: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    scenario: ScenarioSection,
    theta: ThetaSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IpwConfig {
    pub bootstrap_reps: usize,
    pub seed: u64,
}

impl Default for IpwConfig {
    fn default() -> Self {
        Self {
            bootstrap_reps: 500,
            seed: 1,
        }
    }
}

/// Settings for fitting and post-processing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    pub sensitivity: SensitivityConfig,
    pub ipw: IpwConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        self.mcmc.validate()?;
        self.sensitivity.validate()
    }
}

#[derive(Deserialize)]
struct RunFile {
    schema_version: u32,
    #[serde(flatten)]
    body: RunConfig,
}

fn config_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn check_version(path: &Path, v: u32) -> Result<()> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(config_error(
            path,
            format!("schema_version = {v} is not supported (expected {SCHEMA_VERSION})"),
        ))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parse a scenario file. `path` is used only in diagnostics.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
    check_version(path, file.schema_version)?;
    let t = file.theta;
    let cfg = ScenarioConfig {
        theta_true: ParameterVector {
            alpha: t.alpha,
            gamma: t.gamma,
            beta: t.beta,
            sigma2: t.sigma2,
        },
        spec: file.scenario.spec,
        n: file.scenario.n,
        p_w1: file.scenario.p_w1,
        seed: file.scenario.seed,
    };
    cfg.validate()
        .map_err(|e| config_error(path, e.to_string()))?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    parse_scenario(&read(path)?, path)
}

pub fn scenario_to_toml(cfg: &ScenarioConfig) -> String {
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        scenario: ScenarioSection {
            spec: cfg.spec,
            n: cfg.n,
            p_w1: cfg.p_w1,
            seed: cfg.seed,
        },
        theta: ThetaSection {
            alpha: cfg.theta_true.alpha,
            gamma: cfg.theta_true.gamma,
            beta: cfg.theta_true.beta,
            sigma2: cfg.theta_true.sigma2,
        },
    };
    toml::to_string(&file).expect("scenario serializes to TOML")
}

pub fn parse_run_config(text: &str, path: &Path) -> Result<RunConfig> {
    // Flattening disables deny_unknown_fields on the outer table, so the
    // allowed top-level keys are checked by hand.
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_error(path, e.to_string()))?;
    for key in table.keys() {
        if !matches!(
            key.as_str(),
            "schema_version" | "priors" | "mcmc" | "sensitivity" | "ipw"
        ) {
            return Err(config_error(path, format!("unknown key `{key}`")));
        }
    }
    let file: RunFile = toml::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
    check_version(path, file.schema_version)?;
    file.body
        .validate()
        .map_err(|e| config_error(path, e.to_string()))?;
    Ok(file.body)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.toml")
    }

    #[test]
    fn scenario_round_trip() {
        for cfg in [
            ScenarioConfig::reference_lsi(),
            ScenarioConfig::reference_si(),
        ] {
            let text = scenario_to_toml(&cfg);
            assert_eq!(parse_scenario(&text, p()).unwrap(), cfg);
        }
    }

    #[test]
    fn shipped_files_match_reference_scenarios() {
        let lsi = parse_scenario(include_str!("../configs/reference_lsi.toml"), p()).unwrap();
        assert_eq!(lsi, ScenarioConfig::reference_lsi());
        let si = parse_scenario(include_str!("../configs/reference_si.toml"), p()).unwrap();
        assert_eq!(si, ScenarioConfig::reference_si());
        let run = parse_run_config(include_str!("../configs/defaults.toml"), p()).unwrap();
        assert_eq!(run, RunConfig::default());
    }

    #[test]
    fn unknown_keys_and_versions_fail() {
        let text = scenario_to_toml(&ScenarioConfig::reference_lsi());
        let extra = text.replace("[scenario]", "[scenario]\nfoo = 1");
        let err = parse_scenario(&extra, p()).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let v2 = text.replace("schema_version = 1", "schema_version = 2");
        assert!(parse_scenario(&v2, p()).is_err());
        let bad_spec = text.replace("spec = \"lsi\"", "spec = \"si2\"");
        assert!(parse_scenario(&bad_spec, p()).is_err());
    }

    #[test]
    fn malformed_scenario_reports_line() {
        let text = "schema_version = 1\n[scenario]\nspec = \"lsi\"\nn = \"many\"\nseed = 1\n";
        let err = parse_scenario(text, p()).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn run_config_defaults_and_overrides() {
        let cfg = parse_run_config("schema_version = 1\n", p()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.mcmc.kept, 9000);
        assert_eq!(cfg.ipw.bootstrap_reps, 500);
        let cfg = parse_run_config(
            "schema_version = 1\n[mcmc]\nburn_in = 0\nkept = 10\nseed = 4\n[priors]\ncoef_var = 25.0\n",
            p(),
        )
        .unwrap();
        assert_eq!(cfg.mcmc.kept, 10);
        assert_eq!(cfg.mcmc.thin, 1);
        assert_eq!(cfg.priors.coef_var, 25.0);
        assert!(parse_run_config("schema_version = 1\n[mcmc]\nburnin = 3\n", p()).is_err());
        assert!(parse_run_config("schema_version = 1\nextra = true\n", p()).is_err());
        assert!(parse_run_config("[mcmc]\nkept = 3\n", p()).is_err());
        assert!(parse_run_config("schema_version = 1\n[mcmc]\nkept = 0\n", p()).is_err());
    }
}
