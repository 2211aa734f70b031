//! Layered jackknife settings: flags over config file over environment over
//! built-in defaults.

use crate::CliError;
use opj::JackknifeConfig;
use serde::Deserialize;
use std::path::Path;

pub const SEED_ENV: &str = "OPJ_SEED";

/// Settings accepted in a TOML config file. Every key is optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub buckets: Option<usize>,
    pub deleted: Option<usize>,
    pub iterations: Option<usize>,
    pub strata: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))
    }
}

/// Overrides given on the command line.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct JackknifeFlags {
    /// Number of buckets B.
    #[arg(long)]
    pub buckets: Option<usize>,
    /// Buckets deleted per iteration D.
    #[arg(long)]
    pub deleted: Option<usize>,
    /// Jackknife iterations M.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Number of strata K.
    #[arg(long, visible_alias = "k")]
    pub strata: Option<usize>,
    /// Significance level of the confidence interval.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with any of buckets, deleted, iterations, strata, alpha, seed.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))
        }),
        Err(_) => Ok(None),
    }
}

impl JackknifeFlags {
    pub fn resolve(&self) -> Result<JackknifeConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let d = JackknifeConfig::default();
        let seed = match self.seed.or(file.seed) {
            Some(s) => s,
            None => env_seed()?.unwrap_or(d.seed),
        };
        let cfg = JackknifeConfig {
            buckets: self.buckets.or(file.buckets).unwrap_or(d.buckets),
            deleted: self.deleted.or(file.deleted).unwrap_or(d.deleted),
            iterations: self.iterations.or(file.iterations).unwrap_or(d.iterations),
            strata: self.strata.or(file.strata).unwrap_or(d.strata),
            alpha: self.alpha.or(file.alpha).unwrap_or(d.alpha),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
