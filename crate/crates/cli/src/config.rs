//! The experiment configuration: one JSON document that fully determines a
//! run. It is echoed verbatim into every output directory.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use stswin_core::contrast::KeySourceSpec;
use stswin_core::data::SynthConfig;
use stswin_core::segnet::ModelConfig;
use stswin_core::train::StagePlan;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub synth: SynthConfig,
    pub stage1: StagePlan,
    pub stage2: StagePlan,
    pub stage3: StagePlan,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        let model = ModelConfig::default();
        // Aggressive-crop target for the contrast stage: half resolution,
        // kept divisible by 2 * stride.
        let crop = (model.height / 2, model.width / 2);
        ExperimentConfig {
            seed: 0,
            synth: SynthConfig::default(),
            stage1: StagePlan { clip_len: model.clip_len, ..StagePlan::stage1(30) },
            stage2: StagePlan { clip_len: model.clip_len, ..StagePlan::stage2(10, crop) },
            stage3: StagePlan { clip_len: model.clip_len, ..StagePlan::stage3(15) },
            model,
        }
    }
}

impl ExperimentConfig {
    /// Load a config file, or the defaults when no path is given. The
    /// environment variable `STSWIN_SEED` overrides the seed either way.
    /// Returns the config plus the exact bytes to echo into output dirs.
    pub fn load(path: Option<&Path>) -> Result<(ExperimentConfig, String)> {
        let (mut cfg, text) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: ExperimentConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                (cfg, text)
            }
            None => {
                let cfg = ExperimentConfig::default();
                let text = serde_json::to_string_pretty(&cfg).expect("default config serializes");
                (cfg, text)
            }
        };
        if let Ok(seed) = std::env::var("STSWIN_SEED") {
            let seed: u64 = seed.parse().context("STSWIN_SEED must be an integer")?;
            cfg.seed = seed;
        }
        cfg.normalize();
        cfg.model.validate();
        Ok((cfg, text))
    }

    /// Keep the per-stage plans consistent with the model: the sampler clip
    /// length always matches the architecture, and the synthetic dataset
    /// matches the model's frame geometry and seed.
    pub fn normalize(&mut self) {
        for plan in [&mut self.stage1, &mut self.stage2, &mut self.stage3] {
            plan.clip_len = self.model.clip_len;
        }
        self.synth.seed = self.seed;
        self.synth.height = self.model.height;
        self.synth.width = self.model.width;
        self.synth.num_classes = self.model.num_classes;
    }

    pub fn plan(&self, stage: u8) -> &StagePlan {
        match stage {
            1 => &self.stage1,
            2 => &self.stage2,
            3 => &self.stage3,
            _ => panic!("no stage {stage}"),
        }
    }

    pub fn with_pair_config(&self, spec: KeySourceSpec) -> ExperimentConfig {
        let mut out = self.clone();
        out.stage2.key_spec = spec;
        out
    }

    /// Write the config echo into an output directory.
    pub fn echo_into(&self, text: &str, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        std::fs::write(out_dir.join("config.json"), text)
            .with_context(|| format!("writing config echo into {}", out_dir.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let (cfg, text) = ExperimentConfig::load(None).unwrap();
        assert_eq!(cfg.stage1.clip_len, cfg.model.clip_len);
        assert_eq!(cfg.synth.height, cfg.model.height);
        assert!(text.contains("\"seed\""));
    }

    #[test]
    fn partial_config_files_fill_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"seed": click}"#).unwrap();
        assert!(ExperimentConfig::load(Some(&p)).is_err());
        std::fs::write(&p, r#"{"seed": 42}"#).unwrap();
        let (cfg, _) = ExperimentConfig::load(Some(&p)).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.model.window, ModelConfig::default().window);
    }
}
