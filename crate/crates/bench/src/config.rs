//! Experiment configuration, read from JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use lambda_family::student::{escort_nu, is_compatible};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

/// `(replicates, iterations)` at desk scale and for the full protocol.
pub const DESK_SCALE: (usize, usize) = (10, 100);
pub const FULL_SCALE: (usize, usize) = (100, 1000);

/// Sample size of the mixture-EM setting.
pub const EM_SAMPLE_SIZE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ViExact,
    ViMala,
    ViScaledMala,
    MleOnline,
    EmMixture,
    Fig1,
}

impl Scenario {
    pub fn is_vi(self) -> bool {
        matches!(self, Scenario::ViExact | Scenario::ViMala | Scenario::ViScaledMala)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ViExact => "vi_exact",
            Scenario::ViMala => "vi_mala",
            Scenario::ViScaledMala => "vi_scaled_mala",
            Scenario::MleOnline => "mle_online",
            Scenario::EmMixture => "em_mixture",
            Scenario::Fig1 => "fig1",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Degrees of freedom; `"inf"` in JSON selects the Gaussian.
pub mod nu_format {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(nu: &f64, s: S) -> Result<S::Ok, S::Error> {
        if nu.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*nu)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => other.parse().map_err(|_| de::Error::custom(format!("not a degrees-of-freedom value: {t}"))),
            },
        }
    }

    pub fn display(nu: f64) -> String {
        if nu.is_infinite() {
            "inf".into()
        } else {
            format!("{nu}")
        }
    }
}

fn default_kappa() -> f64 {
    1.0
}

fn default_iters() -> usize {
    DESK_SCALE.1
}

fn default_replicates() -> usize {
    DESK_SCALE.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub d: usize,
    #[serde(with = "nu_format", default = "infinite")]
    pub nu_target: f64,
    #[serde(with = "nu_format", default = "infinite")]
    pub nu_family: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_iters")]
    pub n_iters: usize,
    /// Samples (VI), stream points (online MLE) or data size (EM) per
    /// iteration; defaults to `10·d`, or 200 for EM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_iter: Option<usize>,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, d: usize, nu_target: f64, nu_family: f64, kappa: f64) -> Self {
        Self {
            scenario,
            d,
            nu_target,
            nu_family,
            kappa,
            n_iters: default_iters(),
            n_per_iter: None,
            n_replicates: default_replicates(),
            seed: 0,
            output_path: None,
        }
    }

    pub fn samples_per_iter(&self) -> usize {
        self.n_per_iter.unwrap_or(match self.scenario {
            Scenario::EmMixture => EM_SAMPLE_SIZE,
            _ => 10 * self.d,
        })
    }

    /// `ν_π + 2(ν_π+d)/(ν+d)`; the target's escort has two moments iff this exceeds 2.
    pub fn compatibility_value(&self) -> f64 {
        escort_nu(self.nu_target, self.nu_family, self.d)
    }

    pub fn is_compatible(&self) -> bool {
        is_compatible(self.nu_target, self.nu_family, self.d)
    }

    /// Directory-friendly name of the configuration.
    pub fn label(&self) -> String {
        if self.scenario == Scenario::Fig1 {
            return self.scenario.to_string();
        }
        format!(
            "{}_d{}_k{}_nupi{}_nu{}",
            self.scenario,
            self.d,
            self.kappa,
            nu_format::display(self.nu_target),
            nu_format::display(self.nu_family)
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario == Scenario::Fig1 {
            return Ok(());
        }
        if self.d == 0 {
            return Err(BenchError::Config("d must be at least 1".into()));
        }
        if self.n_iters == 0 || self.n_replicates == 0 || self.samples_per_iter() == 0 {
            return Err(BenchError::Config("n_iters, n_per_iter and n_replicates must be positive".into()));
        }
        if !(self.kappa >= 1.0) || !self.kappa.is_finite() {
            return Err(BenchError::Config(format!("kappa must be a finite value >= 1, got {}", self.kappa)));
        }
        if !(self.nu_target > 0.0) || !(self.nu_family > 0.0) {
            return Err(BenchError::Config("degrees of freedom must be positive".into()));
        }
        if self.scenario == Scenario::EmMixture && self.d != 2 {
            return Err(BenchError::Config(format!("the mixture setting is two-dimensional, got d = {}", self.d)));
        }
        if self.scenario.is_vi() && !self.is_compatible() {
            return Err(BenchError::Incompatible { value: self.compatibility_value() });
        }
        Ok(())
    }
}

/// A config file holds one experiment or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    One(Box<ExperimentConfig>),
    Many(Vec<ExperimentConfig>),
}

pub fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(match serde_json::from_str(&text)? {
        ConfigFile::One(c) => vec![*c],
        ConfigFile::Many(v) => v,
    })
}

/// `(d, κ)` of the two target settings: high dimension and high condition number.
pub const TABLE_SETTINGS: [(usize, f64); 2] = [(20, 10.0), (5, 1000.0)];
pub const TABLE_TARGET_NUS: [f64; 3] = [1.0, 3.0, 10.0];
pub const TABLE_FAMILY_NUS: [f64; 4] = [1.0, 3.0, 10.0, f64::INFINITY];
pub const TABLE_SCENARIOS: [Scenario; 3] = [Scenario::ViExact, Scenario::ViMala, Scenario::ViScaledMala];

/// Every cell of the VI comparison table, including incompatible ones.
pub fn table_grid(seed: u64, n_replicates: usize, n_iters: usize) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for scenario in TABLE_SCENARIOS {
        for (d, kappa) in TABLE_SETTINGS {
            for nu_target in TABLE_TARGET_NUS {
                for nu_family in TABLE_FAMILY_NUS {
                    let mut c = ExperimentConfig::new(scenario, d, nu_target, nu_family, kappa);
                    c.seed = seed;
                    c.n_replicates = n_replicates;
                    c.n_iters = n_iters;
                    out.push(c);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inf_and_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"scenario":"vi_exact","d":5,"nu_target":3,"nu_family":"inf","kappa":1000}"#).unwrap();
        assert!(c.nu_family.is_infinite());
        assert_eq!(c.n_iters, 100);
        assert_eq!(c.n_replicates, 10);
        assert_eq!(c.samples_per_iter(), 50);
        let back = serde_json::to_string(&c).unwrap();
        assert!(back.contains(r#""nu_family":"inf""#));
        let again: ExperimentConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejection_reports_the_evaluated_inequality() {
        let c = ExperimentConfig::new(Scenario::ViExact, 5, 1.0, 10.0, 1000.0);
        match c.validate() {
            Err(BenchError::Incompatible { value }) => assert!((value - (1.0 + 12.0 / 15.0)).abs() < 1e-12),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejection_mirrors_inequality_over_grid() {
        for c in table_grid(0, 1, 1) {
            let lhs = c.nu_target + 2.0 * (c.nu_target + c.d as f64) / (c.nu_family + c.d as f64);
            assert_eq!(c.validate().is_ok(), lhs > 2.0, "{}", c.label());
        }
    }

    #[test]
    fn labels() {
        assert_eq!(ExperimentConfig::new(Scenario::Fig1, 0, 1.0, 1.0, 1.0).label(), "fig1");
        let c = ExperimentConfig::new(Scenario::ViMala, 5, 3.0, f64::INFINITY, 1000.0);
        assert_eq!(c.label(), "vi_mala_d5_k1000_nupi3_nuinf");
    }

    #[test]
    fn single_and_list_files() {
        let dir = std::env::temp_dir().join(format!("lambda-bench-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let one = dir.join("one.json");
        std::fs::write(&one, r#"{"scenario":"fig1"}"#).unwrap();
        assert_eq!(load_configs(&one).unwrap().len(), 1);
        let many = dir.join("many.json");
        std::fs::write(&many, r#"[{"scenario":"fig1"},{"scenario":"mle_online","d":1,"nu_target":3,"nu_family":3}]"#).unwrap();
        assert_eq!(load_configs(&many).unwrap().len(), 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
