//! The run configuration document.
//!
//! One JSON object; every section and key is optional and falls back to the
//! library defaults. Unknown keys are rejected so a typo never silently
//! turns into a default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trackrec_core::rec::CtrTrainConfig;
use trackrec_core::{
    DistillConfig, DpoConfig, EnvConfig, LoopConfig, RecTuneConfig, ReferenceMode, RngSeed,
    SamplingParams,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    /// Directory holding `interactions.csv` and `items.csv`; when absent the
    /// synthetic environment is generated from `env`.
    pub data_dir: Option<PathBuf>,
    pub env: EnvSection,
    pub sampling: SamplingSection,
    pub dpo: DpoSection,
    pub rectune: RecTuneSection,
    pub distill: DistillSection,
    pub validator_init: ValidatorInitSection,
    pub iterations: usize,
    pub align: bool,
    pub reference_mode: ReferenceModeName,
    pub init_std: f64,
    pub ctr: CtrSection,
    /// Also write the per-iteration feedback records.
    pub save_feedback: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lc = LoopConfig::default();
        RunConfig {
            name: "default".into(),
            seed: 42,
            data_dir: None,
            env: EnvSection::default(),
            sampling: SamplingSection::default(),
            dpo: DpoSection::default(),
            rectune: RecTuneSection::default(),
            distill: DistillSection::default(),
            validator_init: ValidatorInitSection::default(),
            iterations: lc.iterations,
            align: lc.align,
            reference_mode: lc.reference_mode.into(),
            init_std: lc.init_std,
            ctr: CtrSection::default(),
            save_feedback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub n_users: usize,
    pub n_items: usize,
    pub interactions_per_user: usize,
    pub history_len: usize,
    pub num_tags: usize,
    pub cot_len: usize,
    pub click_sharpness: f64,
    pub click_bias: f64,
    pub feature_noise: f64,
    pub dirichlet_alpha: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        EnvSection {
            n_users: e.n_users,
            n_items: e.n_items,
            interactions_per_user: e.interactions_per_user,
            history_len: e.history_len,
            num_tags: e.num_tags,
            cot_len: e.cot_len,
            click_sharpness: e.click_sharpness,
            click_bias: e.click_bias,
            feature_noise: e.feature_noise,
            dirichlet_alpha: e.dirichlet_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub samples: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let s = SamplingParams::default();
        SamplingSection { samples: s.samples, temperature: s.temperature, top_p: s.top_p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoSection {
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for DpoSection {
    fn default() -> Self {
        let d = DpoConfig::default();
        DpoSection { beta: d.beta, lr: d.lr, epochs: d.epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecTuneSection {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for RecTuneSection {
    fn default() -> Self {
        let r = RecTuneConfig::default();
        RecTuneSection { lr: r.lr, epochs: r.epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub enabled: bool,
    pub fraction: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for DistillSection {
    fn default() -> Self {
        let d = DistillConfig::default();
        DistillSection { enabled: true, fraction: d.fraction, lr: d.lr, epochs: d.epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidatorInitSection {
    pub match_prior: f64,
}

impl Default for ValidatorInitSection {
    fn default() -> Self {
        let lc = LoopConfig::default();
        ValidatorInitSection { match_prior: lc.match_prior }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceModeName {
    PerIteration,
    Initial,
}

impl From<ReferenceMode> for ReferenceModeName {
    fn from(m: ReferenceMode) -> Self {
        match m {
            ReferenceMode::PerIteration => ReferenceModeName::PerIteration,
            ReferenceMode::Initial => ReferenceModeName::Initial,
        }
    }
}

impl From<ReferenceModeName> for ReferenceMode {
    fn from(m: ReferenceModeName) -> Self {
        match m {
            ReferenceModeName::PerIteration => ReferenceMode::PerIteration,
            ReferenceModeName::Initial => ReferenceMode::Initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtrSection {
    /// Train the base and cot-augmented CTR arms after the loop.
    pub enabled: bool,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for CtrSection {
    fn default() -> Self {
        let c = CtrTrainConfig::default();
        CtrSection { enabled: true, epochs: c.epochs, lr: c.lr, batch_size: c.batch_size }
    }
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let cfg = RunConfig::from_json(&text)?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(CliError::Config(format!("name {:?} is not a valid directory name", self.name)));
        }
        if self.ctr.batch_size == 0 || !self.ctr.lr.is_finite() || self.ctr.lr < 0.0 {
            return Err(CliError::Config("ctr needs batch_size >= 1 and lr >= 0".into()));
        }
        if self.distill.enabled {
            self.distill_config().validate()?;
        }
        self.env_config().validate()?;
        self.loop_config().validate()?;
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        let e = &self.env;
        EnvConfig {
            n_users: e.n_users,
            n_items: e.n_items,
            interactions_per_user: e.interactions_per_user,
            history_len: e.history_len,
            num_tags: e.num_tags,
            cot_len: e.cot_len,
            click_sharpness: e.click_sharpness,
            click_bias: e.click_bias,
            feature_noise: e.feature_noise,
            dirichlet_alpha: e.dirichlet_alpha,
            seed: RngSeed(self.seed),
        }
    }

    fn distill_config(&self) -> DistillConfig {
        DistillConfig { fraction: self.distill.fraction, lr: self.distill.lr, epochs: self.distill.epochs }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            iterations: self.iterations,
            sampling: SamplingParams {
                samples: self.sampling.samples,
                temperature: self.sampling.temperature,
                top_p: self.sampling.top_p,
            },
            dpo: DpoConfig { beta: self.dpo.beta, lr: self.dpo.lr, epochs: self.dpo.epochs },
            rectune: RecTuneConfig { lr: self.rectune.lr, epochs: self.rectune.epochs },
            distill: self.distill.enabled.then(|| self.distill_config()),
            reference_mode: self.reference_mode.into(),
            match_prior: self.validator_init.match_prior,
            align: self.align,
            init_std: self.init_std,
            seed: RngSeed(self.seed),
        }
    }

    pub fn ctr_config(&self) -> CtrTrainConfig {
        CtrTrainConfig { epochs: self.ctr.epochs, lr: self.ctr.lr, batch_size: self.ctr.batch_size }
    }
}
