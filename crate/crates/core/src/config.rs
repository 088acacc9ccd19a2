//! Run configuration read from TOML, layered over command-line values.
//!
//! ```toml
//! seed = 7
//!
//! [configuration]
//! N = 5
//! k = 6
//! r = 1.0
//! h = 0.2
//! mu = 50.0
//!
//! [potential]
//! family = "bump_at"
//! r0 = 1.0
//! v0 = 1.0
//! a = 0.0
//! w = 0.5
//!
//! [tolerances]
//! rel_tol = 1e-8
//! mc_samples = 1000000
//!
//! [output]
//! path = "out.json"
//! format = "json"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Dimension};
use crate::potentials::{make_potential, Potential, PotentialSpec};

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSection {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub r: Option<f64>,
    pub h: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub mc_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<String>,
    pub format: Option<OutputFormat>,
}

/// Every field is optional so a file and a set of flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub configuration: ConfigSection,
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// First backquoted name in a deserializer message, if any.
fn offending_key(msg: &str) -> String {
    let mut parts = msg.split('`');
    parts.next();
    parts.next().unwrap_or("<file>").to_string()
}

macro_rules! take {
    ($dst:expr, $src:expr) => {
        if $src.is_some() {
            $dst = $src;
        }
    };
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            config_err(&offending_key(&msg), msg)
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// `self` with every value present in `top` replaced by it.
    pub fn overlaid_with(mut self, top: RunConfig) -> Self {
        take!(self.seed, top.seed);
        take!(self.workers, top.workers);
        take!(self.configuration.n, top.configuration.n);
        take!(self.configuration.k, top.configuration.k);
        take!(self.configuration.r, top.configuration.r);
        take!(self.configuration.h, top.configuration.h);
        take!(self.configuration.mu, top.configuration.mu);
        take!(self.potential, top.potential);
        take!(self.tolerances.rel_tol, top.tolerances.rel_tol);
        take!(self.tolerances.abs_tol, top.tolerances.abs_tol);
        take!(self.tolerances.mc_samples, top.tolerances.mc_samples);
        take!(self.output.path, top.output.path);
        take!(self.output.format, top.output.format);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn dimension(&self) -> Result<Dimension> {
        let n = self.configuration.n.ok_or_else(|| config_err("configuration.N", "missing"))?;
        Dimension::new(n).map_err(|e| config_err("configuration.N", e.to_string()))
    }

    pub fn configuration(&self) -> Result<Configuration> {
        let c = &self.configuration;
        let dim = self.dimension()?;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| config_err(key, "missing"));
        let k = c.k.ok_or_else(|| config_err("configuration.k", "missing"))?;
        let (r, h, mu) = (
            need(c.r, "configuration.r")?,
            need(c.h, "configuration.h")?,
            need(c.mu, "configuration.mu")?,
        );
        Configuration::new(dim, k, r, h, mu).map_err(|e| match e {
            Error::Parameter { name, reason } => config_err(&format!("configuration.{name}"), reason),
            other => other,
        })
    }

    pub fn potential(&self) -> Result<Potential> {
        let spec = self.potential.as_ref().ok_or_else(|| config_err("potential", "missing"))?;
        make_potential(spec).map_err(|e| match e {
            Error::Parameter { name, reason } => config_err(&format!("potential.{name}"), reason),
            other => other,
        })
    }

    pub fn format(&self) -> OutputFormat {
        self.output.format.unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::RadialPotential;

    const SAMPLE: &str = r#"
seed = 7

[configuration]
N = 5
k = 6
r = 1.0
h = 0.2
mu = 50.0

[potential]
family = "bump_at"
r0 = 1.0
v0 = 1.0
a = 0.0
w = 0.5

[tolerances]
mc_samples = 1000

[output]
format = "csv"
"#;

    #[test]
    fn parses_full_file() {
        let rc = RunConfig::from_toml_str(SAMPLE).unwrap();
        let cfg = rc.configuration().unwrap();
        assert_eq!((cfg.n(), cfg.k), (5, 6));
        let v = rc.potential().unwrap();
        assert!((v.value(1.0) - 1.0).abs() < 1e-12);
        assert_eq!(rc.seed(), 7);
        assert_eq!(rc.format(), OutputFormat::Csv);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[configuration]\nN = 5\nkk = 3\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "kk"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn invalid_value_names_section_key() {
        let rc = RunConfig::from_toml_str("[configuration]\nN = 5\nk = 6\nr = 1.0\nh = 1.5\nmu = 3.0\n").unwrap();
        match rc.configuration().unwrap_err() {
            Error::Config { key, .. } => assert_eq!(key, "configuration.h"),
            e => panic!("{e:?}"),
        }
        assert!(matches!(rc.potential(), Err(Error::Config { .. })));
    }

    #[test]
    fn file_values_win_over_flags() {
        let flags = RunConfig {
            seed: Some(1),
            configuration: ConfigSection { k: Some(99), n: Some(6), ..Default::default() },
            ..Default::default()
        };
        let merged = flags.overlaid_with(RunConfig::from_toml_str(SAMPLE).unwrap());
        assert_eq!(merged.seed(), 7);
        assert_eq!(merged.configuration.k, Some(6));
        assert_eq!(merged.configuration.n, Some(5));
        assert_eq!(RunConfig::default().seed(), DEFAULT_SEED);
    }
}
