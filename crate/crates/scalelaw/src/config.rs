//! The JSON run configuration: benchmark overlay, optimizer settings and the
//! holdout rule. Command-line flags override it; `SCALELAW_SEED` overrides
//! its seed unless `--seed` is given.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scalelaw_core::data::{BenchmarkRegistry, HoldoutRule};
use scalelaw_core::optim::FitConfig;

use crate::error::{Error, Result};
use crate::io::read_json_file;

pub const SEED_ENV: &str = "SCALELAW_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Entries added to (or replacing) the built-in registry.
    pub benchmarks: BenchmarkRegistry,
    pub fit: FitConfig,
    pub holdout: HoldoutRule,
    /// Components of the averaged-benchmark fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_set: Option<Vec<String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Config = read_json_file(path)?;
        cfg.fit.validate()?;
        Ok(cfg)
    }

    /// `path` if given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    /// Built-in benchmarks overlaid with the configured ones.
    pub fn registry(&self) -> BenchmarkRegistry {
        let mut reg = BenchmarkRegistry::builtin();
        reg.merge(self.benchmarks.clone());
        reg
    }

    /// Replaces the seed with a parsed `value`, when present.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.fit.seed = v.trim().parse().map_err(|_| {
                Error::Usage(format!(
                    "{SEED_ENV} must be a non-negative integer, got `{v}`"
                ))
            })?;
        }
        Ok(())
    }

    /// Seed precedence: `flag`, then `SCALELAW_SEED`, then the file.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<()> {
        match flag {
            Some(seed) => self.fit.seed = seed,
            None => self.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?,
        }
        Ok(())
    }
}
