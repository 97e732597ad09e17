//! TOML run configuration. Every section and key is optional; omitted keys
//! take the library defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cpt_sca::{AllocationProblem, DualConfig, OracleConfig, ParamSampler, Pwf, ScaConfig, ScenarioSpec, SurrogateConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub solve: SolveSection,
    pub sca: ScaConfig,
    /// Overrides `sca.surrogate`.
    pub surrogate: SurrogateConfig,
    pub dual: DualConfig,
    pub oracle: OracleConfig,
    pub batch: BatchSection,
    pub trace: TraceSection,
    pub verify: VerifySection,
}

/// Where the instance comes from: a JSON file written by `solve`, or the
/// generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub instance: Option<PathBuf>,
    pub n_agents: usize,
    pub mean_snr_db: f64,
    pub p_total: f64,
    pub sampler: ParamSampler,
    pub seed: u64,
    pub pwf: Pwf,
    pub prob: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let spec = ScenarioSpec::new(3, 0);
        Self {
            instance: None,
            n_agents: spec.n_agents,
            mean_snr_db: spec.mean_snr_db,
            p_total: spec.p_total,
            sampler: spec.param_sampler,
            seed: spec.seed,
            pwf: spec.pwf,
            prob: spec.prob,
        }
    }
}

impl ScenarioSection {
    pub fn spec(&self, n_agents: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            n_agents,
            mean_snr_db: self.mean_snr_db,
            p_total: self.p_total,
            param_sampler: self.sampler,
            seed,
            pwf: self.pwf,
            prob: self.prob,
        }
    }

    /// Loads `instance` (relative paths resolve against `base`) or generates one.
    pub fn problem(&self, base: &Path) -> Result<AllocationProblem> {
        if let Some(path) = &self.instance {
            let path = base.join(path);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let problem: AllocationProblem = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            problem.validate()?;
            return Ok(problem);
        }
        Ok(cpt_sca::generate_scenario(&self.spec(self.n_agents, self.seed))?)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    /// Starting allocation; equal split when absent.
    pub x_init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    #[default]
    Multistart,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSection {
    pub n_agents: Vec<usize>,
    /// Instances per agent count; seeds are `base_seed .. base_seed + instances`.
    pub instances: usize,
    pub base_seed: u64,
    pub baseline: Baseline,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self { n_agents: vec![10, 30, 50], instances: 500, base_seed: 0, baseline: Baseline::Multistart }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    /// Lattice points per axis of the contour slice.
    pub resolution: usize,
    /// Starting allocation as fractions of `P_total`.
    pub start: [f64; 3],
}

impl Default for TraceSection {
    fn default() -> Self {
        Self { resolution: 101, start: [0.8, 0.15, 0.05] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Sampled instances, spread round-robin over the six cases.
    pub samples: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { samples: 1000, grid_points: 200, seed: 0 }
    }
}

/// A parsed config with the facts needed to reproduce it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    /// Hex SHA-256 of the file bytes.
    pub hash: String,
    /// Directory relative instance paths resolve against.
    pub base: PathBuf,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config: Config = toml::from_str(text).context("parsing config")?;
        config.sca.surrogate = config.surrogate;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        let config = Self::parse(text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, hash: hex::encode(Sha256::digest(&bytes)), base })
    }

    /// Points every seed key at `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.scenario.seed = seed;
        self.batch.base_seed = seed;
        self.verify.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.sca.validate()?;
        self.dual.validate()?;
        self.oracle.validate()?;
        if self.batch.n_agents.is_empty() || self.batch.n_agents.contains(&0) {
            bail!("batch.n_agents must be a nonempty list of positive counts");
        }
        if self.trace.resolution < 2 {
            bail!("trace.resolution must be at least 2");
        }
        let s = self.trace.start;
        if s.iter().any(|&f| f.is_nan() || f < 0.0) || s.iter().sum::<f64>() > 1.0 + 1e-12 {
            bail!("trace.start must be nonnegative fractions summing to at most 1");
        }
        if self.verify.grid_points < 3 {
            bail!("verify.grid_points must be at least 3");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn nested_schedules_parse() {
        let c = Config::parse(
            r#"
            [sca]
            theta = { kind = "power", theta0 = 1.0, exponent = 0.7 }
            monotone_mode = true
            [dual]
            kink_rule = "right"
            zeta = { kind = "harmonic", base = 1.0 }
            [surrogate]
            curvature_floor = 0.01
            [batch]
            n_agents = [3]
            baseline = "grid"
            "#,
        )
        .unwrap();
        assert!(c.sca.monotone_mode);
        assert_eq!(c.sca.surrogate.curvature_floor, 0.01);
        assert_eq!(c.dual.kink_rule, cpt_sca::KinkRule::Right);
        assert_eq!(c.batch.baseline, Baseline::Grid);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("[sca]\nmax_outer = 3").is_err());
        assert!(Config::parse("[nonsense]").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::parse("[sca]\nx_tol = -1.0").is_err());
        assert!(Config::parse("[batch]\nn_agents = []").is_err());
        assert!(Config::parse("[trace]\nstart = [0.9, 0.9, 0.0]").is_err());
    }
}
