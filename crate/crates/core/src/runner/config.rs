//! Experiment configuration.
//!
//! Configs are TOML: a few top-level keys plus one table per subsystem.
//! Unknown keys are rejected. Every key can be overridden from the command
//! line as `section.key=value` (see [`apply_override`]).
//!
//! ```toml
//! seed = 7
//! sampler = "error_mitigating"   # random | uncertainty | error_mitigating
//! regime = "fast"                # none | slow | fast | custom
//!
//! [dataset]
//! path = "tweets.csv"            # relative to the config file
//!
//! [dataset.synthetic]            # instead of `path`
//! num_classes = 4
//! n = 4000
//!
//! [features]
//! mode = "hashed"                # auto | embeddings | hashed
//! dim = 256
//!
//! [split]
//! test_frac = 0.2
//! z = 20
//!
//! [sampling]
//! band_lo = 0.30
//! band_hi = 0.70
//! window = 3
//!
//! [oracle]
//! time_unit = "instance"         # instance | day
//!
//! [learner]
//! learning_rate = 0.1
//! epochs = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Average, Hyper, Loss, TrainMode};
use crate::oracle::{ForgettingParams, OracleRegime};
use crate::sampling::{Band, DeltaUnit, ForgetClock, SamplerKind};
use crate::stream::{DatasetFormat, Holdout, SplitOptions, SyntheticSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeName {
    None,
    Slow,
    #[default]
    Fast,
    /// Parameters from `[oracle]` alpha, beta, gamma.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sampler: SamplerKind,
    pub regime: RegimeName,
    pub dataset: DatasetConfig,
    pub features: FeatureConfig,
    pub split: SplitConfig,
    pub sampling: SamplingConfig,
    pub oracle: OracleConfig,
    pub learner: LearnerConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            sampler: SamplerKind::ErrorMitigating,
            regime: RegimeName::Fast,
            dataset: DatasetConfig::default(),
            features: FeatureConfig::default(),
            split: SplitConfig::default(),
            sampling: SamplingConfig::default(),
            oracle: OracleConfig::default(),
            learner: LearnerConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    /// Inferred from the file extension when absent.
    pub format: Option<DatasetFormat>,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub n: usize,
    pub dim: usize,
    pub span_days: u64,
    pub noise_sigma: f64,
    /// Distance of each axis-aligned centroid from the origin.
    pub separation: f64,
    pub priors: Option<Vec<f64>>,
    pub centroids: Option<Vec<Vec<f64>>>,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_classes: 4,
            n: 4000,
            dim: 32,
            span_days: 11,
            noise_sigma: 1.0,
            separation: 3.0,
            priors: None,
            centroids: None,
            seed: None,
        }
    }
}

impl SyntheticConfig {
    pub fn to_spec(&self, run_seed: u64) -> Result<SyntheticSpec> {
        let seed = self.seed.unwrap_or(run_seed);
        let mut spec = match &self.centroids {
            Some(c) => SyntheticSpec {
                priors: vec![1.0 / c.len().max(1) as f64; c.len()],
                centroids: c.clone(),
                noise_sigma: self.noise_sigma,
                n: self.n,
                span_days: self.span_days,
                start_timestamp: 0,
                seed,
            },
            None => SyntheticSpec::axis_aligned(
                self.num_classes,
                self.dim,
                self.separation,
                self.noise_sigma,
                self.n,
                self.span_days,
                seed,
            )?,
        };
        if let Some(p) = &self.priors {
            spec.priors = p.clone();
        }
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Precomputed features if every instance has them, else embeddings when
    /// a path is given, else hashed bag-of-words.
    #[default]
    Auto,
    Embeddings,
    Hashed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    /// Embedding file, relative to the config file.
    pub path: Option<PathBuf>,
    /// Embedding dimension or number of hash buckets.
    pub dim: usize,
    pub hash_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mode: FeatureMode::Auto,
            path: None,
            dim: 256,
            hash_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub z: usize,
    pub holdout: Holdout,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_frac: 0.2,
            z: 20,
            holdout: Holdout::Random,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub band_lo: f64,
    pub band_hi: f64,
    /// Context window length in intervals.
    pub window: usize,
    pub delta_unit: DeltaUnit,
    pub delta_scale: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            band_lo: 0.30,
            band_hi: 0.70,
            window: 3,
            delta_unit: DeltaUnit::Interval,
            delta_scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    /// Positions in the annotated sequence.
    #[default]
    Instance,
    /// Days of arrival time.
    Day,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub time_unit: TimeUnit,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub loss: Loss,
    pub update_epochs: usize,
    pub training: TrainMode,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        let h = Hyper::default();
        LearnerConfig {
            learning_rate: h.learning_rate,
            l2: h.l2,
            epochs: h.epochs,
            loss: h.loss,
            update_epochs: h.update_epochs,
            training: TrainMode::FullRetrain,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub average: Average,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applying `key=value` overrides before deserializing.
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_with_overrides(&text, overrides)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.dataset.path, &mut self.features.path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dataset.path.is_some() == self.dataset.synthetic.is_some() {
            return bad("set exactly one of dataset.path and [dataset.synthetic]".into());
        }
        if !(self.split.test_frac > 0.0 && self.split.test_frac < 1.0) {
            return bad(format!(
                "split.test_frac must lie in (0, 1), got {}",
                self.split.test_frac
            ));
        }
        if self.split.z == 0 {
            return bad("split.z must be at least 1".into());
        }
        Band::new(self.sampling.band_lo, self.sampling.band_hi).map_err(|e| Error::Config(e.to_string()))?;
        if self.sampling.window == 0 {
            return bad("sampling.window must be at least 1".into());
        }
        if !(self.sampling.delta_scale.is_finite() && self.sampling.delta_scale > 0.0) {
            return bad("sampling.delta_scale must be positive".into());
        }
        if !(self.learner.learning_rate.is_finite() && self.learner.learning_rate >= 0.0) {
            return bad("learner.learning_rate must be non-negative".into());
        }
        if !(self.learner.l2.is_finite() && self.learner.l2 >= 0.0) {
            return bad("learner.l2 must be non-negative".into());
        }
        if self.features.mode == FeatureMode::Embeddings && self.features.path.is_none() {
            return bad("features.mode = \"embeddings\" needs features.path".into());
        }
        if self.features.mode == FeatureMode::Hashed && self.features.dim < 8 {
            return bad("features.dim must be at least 8 for hashing".into());
        }
        self.oracle_regime()?;
        Ok(())
    }

    pub fn oracle_regime(&self) -> Result<OracleRegime> {
        Ok(match self.regime {
            RegimeName::None => OracleRegime::None,
            RegimeName::Slow => OracleRegime::Slow,
            RegimeName::Fast => OracleRegime::Fast,
            RegimeName::Custom => {
                let (Some(a), Some(b), Some(g)) = (self.oracle.alpha, self.oracle.beta, self.oracle.gamma)
                else {
                    return Err(Error::Config(
                        "regime = \"custom\" needs oracle.alpha, beta and gamma".into(),
                    ));
                };
                OracleRegime::Custom(
                    ForgettingParams::new(a, b, g).map_err(|e| Error::Config(e.to_string()))?,
                )
            }
        })
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            learning_rate: self.learner.learning_rate,
            l2: self.learner.l2,
            epochs: self.learner.epochs,
            seed: self.seed,
            loss: self.learner.loss,
            update_epochs: self.learner.update_epochs,
        }
    }

    pub fn band(&self) -> Band {
        Band {
            lo: self.sampling.band_lo,
            hi: self.sampling.band_hi,
        }
    }

    pub fn forget_clock(&self) -> ForgetClock {
        ForgetClock {
            unit: self.sampling.delta_unit,
            scale: self.sampling.delta_scale,
        }
    }

    pub fn split_options(&self) -> SplitOptions {
        SplitOptions {
            test_frac: self.split.test_frac,
            z: self.split.z,
            seed: self.seed,
            holdout: self.split.holdout,
        }
    }
}

/// Sets a dotted `key` (e.g. `learner.epochs`) to `value`, parsed as a TOML
/// value when possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "seed = 3\nsampler = \"uncertainty\"\nregime = \"slow\"\n[dataset.synthetic]\nn = 500\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.sampler, SamplerKind::Uncertainty);
        assert_eq!(c.oracle_regime().unwrap(), OracleRegime::Slow);
        assert_eq!(c.split.z, 20);
        assert_eq!(c.split.test_frac, 0.2);
        assert_eq!(c.band(), Band { lo: 0.3, hi: 0.7 });
        assert_eq!(c.sampling.window, 3);
        assert_eq!(c.dataset.synthetic.as_ref().unwrap().n, 500);
        assert_eq!(c.hyper().epochs, 20);
    }

    #[test]
    fn overrides_apply_before_validation() {
        let o = vec![
            ("sampler".to_string(), "random".to_string()),
            ("learner.epochs".to_string(), "5".to_string()),
            ("split.holdout".to_string(), "chronological".to_string()),
        ];
        let c = ExperimentConfig::from_toml_with_overrides(MINIMAL, &o).unwrap();
        assert_eq!(c.sampler, SamplerKind::Random);
        assert_eq!(c.learner.epochs, 5);
        assert_eq!(c.split.holdout, Holdout::Chronological);

        let bad = vec![("split.test_frac".to_string(), "1.5".to_string())];
        assert!(ExperimentConfig::from_toml_with_overrides(MINIMAL, &bad).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_combinations() {
        assert!(ExperimentConfig::from_toml_str("sede = 1\n[dataset.synthetic]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("seed = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("regime = \"custom\"\n[dataset.synthetic]\n").is_err());
        let custom =
            "regime = \"custom\"\n[oracle]\nalpha = 0.1\nbeta = 1.0\ngamma = 0.5\n[dataset.synthetic]\n";
        let c = ExperimentConfig::from_toml_str(custom).unwrap();
        assert_eq!(
            c.oracle_regime().unwrap(),
            OracleRegime::Custom(ForgettingParams {
                alpha: 0.1,
                beta: 1.0,
                gamma: 0.5
            })
        );
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut c = ExperimentConfig::from_toml_str("[dataset]\npath = \"data/x.csv\"\n").unwrap();
        c.resolve_paths(Path::new("/etc/exp"));
        assert_eq!(c.dataset.path.unwrap(), PathBuf::from("/etc/exp/data/x.csv"));
    }
}
