//! TOML configuration: optional sections of optional keys, layered over the
//! library defaults (or the standard-experiment preset where one exists).

use std::path::Path;

use acci::clustering::LinkMode;
use acci::experiment::InferenceSettings;
use acci::synth::ConfoundSpec;
use acci::training::{LossKind, TrainConfig};
use anyhow::Context;
use serde::Deserialize;

use crate::validation;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub inference: InferenceOverrides,
    #[serde(default)]
    pub synth: SynthOverrides,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub lr_encoder: Option<f64>,
    pub lr_heads: Option<f64>,
    pub alpha_train: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub loss_kind: Option<LossKind>,
    pub weight_decay: Option<f64>,
    pub d: Option<usize>,
    pub d_h: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceOverrides {
    pub alpha_infer: Option<f64>,
    pub beta: Option<f64>,
    pub gate: Option<f64>,
    pub tau_cluster: Option<f64>,
    pub link_mode: Option<LinkMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOverrides {
    pub p_confounder: Option<f64>,
    pub flip_rate_test: Option<f64>,
    pub n_train: Option<usize>,
    pub n_dev: Option<usize>,
    pub n_test: Option<usize>,
    pub vocab_per_role: Option<usize>,
    pub arg_noise: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| validation(format!("bad config file: {e}")))
    }

    pub fn train_config(&self, base: TrainConfig, seed: Option<u64>) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr_encoder: t.lr_encoder.unwrap_or(base.lr_encoder),
            lr_heads: t.lr_heads.unwrap_or(base.lr_heads),
            alpha_train: t.alpha_train.unwrap_or(base.alpha_train),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            epochs: t.epochs.unwrap_or(base.epochs),
            seed: seed.or(t.seed).unwrap_or(base.seed),
            loss_kind: t.loss_kind.unwrap_or(base.loss_kind),
            weight_decay: t.weight_decay.unwrap_or(base.weight_decay),
            d: t.d.unwrap_or(base.d),
            d_h: t.d_h.unwrap_or(base.d_h),
        }
    }

    pub fn inference_settings(&self) -> InferenceSettings {
        let base = InferenceSettings::default();
        let i = &self.inference;
        InferenceSettings {
            alpha_infer: i.alpha_infer.unwrap_or(base.alpha_infer),
            beta: i.beta.unwrap_or(base.beta),
            gate: i.gate.unwrap_or(base.gate),
            tau_cluster: i.tau_cluster.unwrap_or(base.tau_cluster),
            link_mode: i.link_mode.unwrap_or(base.link_mode),
        }
    }

    pub fn confound_spec(&self, base: ConfoundSpec) -> ConfoundSpec {
        let s = &self.synth;
        ConfoundSpec {
            p_confounder: s.p_confounder.unwrap_or(base.p_confounder),
            flip_rate_test: s.flip_rate_test.unwrap_or(base.flip_rate_test),
            n_train: s.n_train.unwrap_or(base.n_train),
            n_dev: s.n_dev.unwrap_or(base.n_dev),
            n_test: s.n_test.unwrap_or(base.n_test),
            vocab_per_role: s.vocab_per_role.unwrap_or(base.vocab_per_role),
            arg_noise: s.arg_noise.unwrap_or(base.arg_noise),
        }
    }
}
