use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::DecodeParams;
#[cfg(feature = "live")]
use crate::agents::LiveConfig;
use crate::agents::MockProfile;
use crate::corpus::EXPERIMENT_DOMAINS;
use crate::exec::Execution;
use crate::features::{GainBaseline, HashingEmbedder};
use crate::matcher::SelectionRule;
use crate::regressor::{GpFitConfig, MlpConfig};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegressorKind {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "NN")]
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParetoMode {
    #[serde(rename = "none")]
    None,
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Mock,
    /// Replay-only from `settings.cache_dir`.
    Cache,
    Live,
}

impl std::str::FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "cache" => Ok(Self::Cache),
            "live" => Ok(Self::Live),
            other => Err(format!("unknown backend `{other}` (expected mock, cache or live)")),
        }
    }
}

/// Training and held-out test domains.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Default for Split {
    /// Alternating over the six experiment domains: one STEM, one social
    /// science and one humanities domain on each side.
    fn default() -> Self {
        let pick = |parity: usize| {
            EXPERIMENT_DOMAINS
                .iter()
                .enumerate()
                .filter(|(i, _)| i % 2 == parity)
                .map(|(_, (d, _))| d.to_string())
                .collect()
        };
        Self {
            train: pick(0),
            test: pick(1),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "train=[{}] test=[{}]", self.train.join(", "), self.test.join(", "))
    }
}

/// One model variant. The switches must form one of the ablation rows:
/// a regressor needs co-learning and a Pareto mode, co-learning needs roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    pub role_setting: bool,
    pub co_learning: bool,
    pub regressor_kind: RegressorKind,
    pub pareto_mode: ParetoMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default)]
    pub split: Split,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl VariantConfig {
    fn new(name: &str, role: bool, co: bool, kind: RegressorKind, mode: ParetoMode) -> Self {
        Self {
            name: name.into(),
            role_setting: role,
            co_learning: co,
            regressor_kind: kind,
            pareto_mode: mode,
            seed: DEFAULT_SEED,
            backend: BackendChoice::Mock,
            split: Split::default(),
        }
    }

    pub fn baseline() -> Self {
        Self::new("Baseline", false, false, RegressorKind::None, ParetoMode::None)
    }

    pub fn slm() -> Self {
        Self::new("SLM", true, false, RegressorKind::None, ParetoMode::None)
    }

    pub fn clm() -> Self {
        Self::new("CLM", true, true, RegressorKind::None, ParetoMode::None)
    }

    pub fn matched(name: &str, kind: RegressorKind, mode: ParetoMode) -> Self {
        Self::new(name, true, true, kind, mode)
    }

    /// The seven shipped variants in report order.
    pub fn default_suite() -> Vec<Self> {
        vec![
            Self::baseline(),
            Self::slm(),
            Self::clm(),
            Self::matched("GP-Global", RegressorKind::Gp, ParetoMode::Global),
            Self::matched("GP-Local", RegressorKind::Gp, ParetoMode::Local),
            Self::matched("NN-Global", RegressorKind::Nn, ParetoMode::Global),
            Self::matched("NN-Local", RegressorKind::Nn, ParetoMode::Local),
        ]
    }

    pub fn is_baseline(&self) -> bool {
        !self.role_setting && !self.co_learning
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |why: &str| Err(HarnessError::Config(format!("variant `{}`: {why}", self.name)));
        if self.name.trim().is_empty() {
            return fail("name must not be empty");
        }
        if self.regressor_kind != RegressorKind::None && !self.co_learning {
            return fail("a regressor requires co_learning");
        }
        if self.pareto_mode != ParetoMode::None && self.regressor_kind == RegressorKind::None {
            return fail("a Pareto mode requires a regressor");
        }
        if self.regressor_kind != RegressorKind::None && self.pareto_mode == ParetoMode::None {
            return fail("a regressor requires a Pareto mode");
        }
        if self.co_learning && !self.role_setting {
            return fail("co_learning requires role_setting");
        }
        if self.split.test.is_empty() {
            return fail("the test split is empty");
        }
        if self.regressor_kind != RegressorKind::None && self.split.train.is_empty() {
            return fail("the training split is empty");
        }
        if let Some(d) = self.split.train.iter().find(|d| self.split.test.contains(d)) {
            return fail(&format!("domain `{d}` is in both train and test"));
        }
        Ok(())
    }
}

/// Shared knobs for every variant in a suite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub decode: DecodeParams,
    pub mock: MockProfile,
    pub selection: SelectionRule,
    pub gain_baseline: GainBaseline,
    pub gp: GpFitConfig,
    pub mlp: MlpConfig,
    pub embedding: HashingEmbedder,
    pub execution: Execution,
    #[cfg(feature = "live")]
    pub live: Option<LiveConfig>,
    /// Reply cache directory. With `mock` or `live` the cache is written
    /// through; with `cache` it is replayed.
    pub cache_dir: Option<PathBuf>,
    /// Prompt template file replacing the bundled one.
    pub prompts: Option<PathBuf>,
}

/// A config file: optional `[settings]` plus `[[variant]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub settings: Settings,
    #[serde(default = "VariantConfig::default_suite", rename = "variant")]
    pub variants: Vec<VariantConfig>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            settings: Settings::default(),
            variants: VariantConfig::default_suite(),
        }
    }
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("suite config serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.variants.is_empty() {
            return Err(HarnessError::Config("no variants configured".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            v.validate()?;
            if self.variants[..i].iter().any(|w| w.name == v.name) {
                return Err(HarnessError::Config(format!("duplicate variant name `{}`", v.name)));
            }
        }
        Ok(())
    }

    /// Applies command-line overrides to every variant.
    pub fn override_all(&mut self, seed: Option<u64>, backend: Option<BackendChoice>) {
        for v in &mut self.variants {
            if let Some(s) = seed {
                v.seed = s;
            }
            if let Some(b) = backend {
                v.backend = b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_is_valid_and_ordered() {
        let s = VariantConfig::default_suite();
        assert_eq!(s.len(), 7);
        assert!(s.iter().all(|v| v.validate().is_ok()));
        assert_eq!(s[0].name, "Baseline");
        assert!(s[0].is_baseline());
        let split = Split::default();
        assert_eq!(split.train, ["machine_learning", "marketing", "arts"]);
        assert_eq!(split.test, ["college_engineering_hydrology", "high_school_geography", "logical"]);
    }

    #[test]
    fn lattice_violations_are_rejected() {
        let mut v = VariantConfig::slm();
        v.regressor_kind = RegressorKind::Gp;
        v.pareto_mode = ParetoMode::Global;
        assert!(v.validate().is_err());
        let mut v = VariantConfig::clm();
        v.pareto_mode = ParetoMode::Local;
        assert!(v.validate().is_err());
        let mut v = VariantConfig::clm();
        v.role_setting = false;
        assert!(v.validate().is_err());
        let mut v = VariantConfig::matched("x", RegressorKind::Nn, ParetoMode::Global);
        v.split.test.push("arts".into());
        assert!(v.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let text = r#"
            [settings]
            selection = "probability_of_improvement"
            [settings.gp]
            restarts = 1

            [[variant]]
            name = "Baseline"
            role_setting = false
            co_learning = false
            regressor_kind = "none"
            pareto_mode = "none"

            [[variant]]
            name = "GP"
            role_setting = true
            co_learning = true
            regressor_kind = "GP"
            pareto_mode = "Local"
            seed = 7
            backend = "cache"
            split = { train = ["arts"], test = ["logical"] }
        "#;
        let cfg = SuiteConfig::parse(text).unwrap();
        assert_eq!(cfg.variants.len(), 2);
        assert_eq!(cfg.settings.gp.restarts, 1);
        assert_eq!(cfg.settings.gp.max_iters, 200);
        assert_eq!(cfg.variants[1].seed, 7);
        assert_eq!(cfg.variants[0].seed, DEFAULT_SEED);
        assert_eq!(cfg.variants[1].backend, BackendChoice::Cache);
        assert_eq!(SuiteConfig::parse(&cfg.to_toml()).unwrap(), cfg);

        let bad = text.replace("seed = 7", "seed = 7\ncolour = \"red\"");
        assert!(SuiteConfig::parse(&bad).is_err());
        let bad = text.replace("restarts = 1", "restart = 1");
        assert!(SuiteConfig::parse(&bad).is_err());
        assert_eq!(SuiteConfig::parse("").unwrap().variants.len(), 7);
    }

    #[test]
    fn overrides_apply_to_all() {
        let mut cfg = SuiteConfig::default();
        cfg.override_all(Some(3), Some(BackendChoice::Cache));
        assert!(cfg.variants.iter().all(|v| v.seed == 3 && v.backend == BackendChoice::Cache));
        assert!("bogus".parse::<BackendChoice>().is_err());
    }
}
