//! The single JSON run configuration. Every hyperparameter has an explicit
//! default, so an empty object `{}` describes a complete, reproducible run.
//! All randomness flows from the one global seed through named substreams
//! (corpus, init, mining, training); the seeds embedded in the corpus and
//! stack sections are derived from it when a run is resolved.

use crate::corpus::{CorpusSpec, Gender, MiningConfig, SpeakerSpec, SplitPolicy};
use crate::distill::KdConfig;
use crate::encoder::StackConfig;
use crate::error::{Result, SitaError};
use crate::losses::{MarginConfig, Stage1Config, Stage1Variant};
use crate::math::PoolingMode;
use crate::seeding::substream_seed;
use crate::trainer::OptimizerConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct EvalToggles {
    #[serde(default = "default_true")]
    pub retrieval: bool,
    #[serde(default = "default_true")]
    pub tone: bool,
    #[serde(default = "default_true")]
    pub asr: bool,
    #[serde(default = "default_true")]
    pub sim: bool,
    #[serde(default = "default_true")]
    pub probe: bool,
    #[serde(default = "default_true")]
    pub tonecls: bool,
}

fn default_true() -> bool {
    true
}

impl EvalToggles {
    pub fn all() -> Self {
        EvalToggles {
            retrieval: true,
            tone: true,
            asr: true,
            sim: true,
            probe: true,
            tonecls: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_corpus")]
    pub corpus: CorpusSpec,
    #[serde(default = "default_split")]
    pub split: SplitPolicy,
    #[serde(default)]
    pub stack: StackConfig,
    #[serde(default)]
    pub stage1: Stage1Config,
    /// Present selects the margin/hinge tone objective; absent means InfoNCE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<MarginConfig>,
    #[serde(default)]
    pub mining: MiningConfig,
    #[serde(default)]
    pub kd: KdConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Stage-2 schedule; the CTC phase is cheap per step, so it gets a
    /// longer run than Stage 1 by default.
    #[serde(default = "default_stage2_optimizer")]
    pub stage2_optimizer: Option<OptimizerConfig>,
    /// Pooling used when training Stage-1 embeddings.
    #[serde(default = "default_train_pooling")]
    pub train_pooling: PoolingMode,
    #[serde(default = "default_beam_width")]
    pub beam_width: usize,
    #[serde(default = "EvalToggles::all")]
    pub eval: EvalToggles,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_stage2_optimizer() -> Option<OptimizerConfig> {
    Some(OptimizerConfig {
        total_steps: 8000,
        warmup_steps: 800,
        ..OptimizerConfig::default()
    })
}

fn default_train_pooling() -> PoolingMode {
    PoolingMode::Weighted { alpha: 0.48 }
}

fn default_beam_width() -> usize {
    16
}

fn default_out_dir() -> String {
    "runs/default".to_string()
}

fn default_seed() -> u64 {
    42
}

fn default_split() -> SplitPolicy {
    SplitPolicy::Coverage
}

/// The default synthetic corpus: 30 base words x 4 tones x 8 speakers
/// (4 female, 4 male). Base pitches sit in gender-separated bands whose full
/// spread stays below one tone-level gap, so tones remain decodable across
/// speakers; tilts vary per speaker.
pub fn default_corpus() -> CorpusSpec {
    let f_pitch = [0.10, 0.055, 0.085, 0.07];
    let m_pitch = [-0.10, -0.055, -0.085, -0.07];
    let tilts = [0.15, -0.12, 0.08, -0.05];
    let mut speakers = Vec::new();
    for i in 0..4 {
        speakers.push(SpeakerSpec {
            speaker_id: format!("F{i}"),
            gender: Gender::F,
            base_pitch: f_pitch[i],
            spectral_tilt: tilts[i],
        });
    }
    for i in 0..4 {
        speakers.push(SpeakerSpec {
            speaker_id: format!("M{i}"),
            gender: Gender::M,
            base_pitch: m_pitch[i],
            spectral_tilt: tilts[(i + 2) % 4],
        });
    }
    CorpusSpec {
        n_base_words: 30,
        n_tones: 4,
        speakers,
        frames_per_token: (20, 28),
        feature_dim: 16,
        seed: 0,
        noise_sigma: 0.3,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is a full default")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| SitaError::InvalidConfig(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| SitaError::MissingArtifact(path.display().to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.stack.validate()?;
        self.stage1.validate()?;
        if let Some(margin) = &self.margin {
            margin.validate()?;
        }
        self.kd.validate()?;
        self.optimizer.validate()?;
        if let Some(opt2) = &self.stage2_optimizer {
            opt2.validate()?;
        }
        if self.corpus.feature_dim != self.stack.hidden_dim {
            return Err(SitaError::InvalidConfig(format!(
                "corpus feature_dim {} must equal stack hidden_dim {}",
                self.corpus.feature_dim, self.stack.hidden_dim
            )));
        }
        if self.beam_width < 1 {
            return Err(SitaError::InvalidConfig("beam_width must be >= 1".into()));
        }
        Ok(())
    }

    /// Corpus spec with its seed derived from the global seed.
    pub fn resolved_corpus(&self) -> CorpusSpec {
        CorpusSpec {
            seed: substream_seed(self.seed, "corpus", &[]),
            ..self.corpus.clone()
        }
    }

    /// Stack config with its seed derived from the global seed.
    pub fn resolved_stack(&self) -> StackConfig {
        StackConfig {
            seed: substream_seed(self.seed, "init", &[]),
            ..self.stack.clone()
        }
    }

    /// Mining pools with the contrastive count taken from Stage 1's N.
    pub fn resolved_mining(&self) -> MiningConfig {
        MiningConfig {
            n_negatives: self.stage1.n_negatives,
            ..self.mining.clone()
        }
    }

    pub fn stage1_variant(&self) -> Stage1Variant {
        match &self.margin {
            Some(m) => Stage1Variant::Margin(m.clone()),
            None => Stage1Variant::Infonce,
        }
    }

    pub fn stage2_opt(&self) -> OptimizerConfig {
        self.stage2_optimizer
            .clone()
            .unwrap_or_else(|| self.optimizer.clone())
    }

    pub fn run_id(&self) -> String {
        format!("run-{}", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_paper_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.stage1.tau_g, 0.07);
        assert_eq!(cfg.stage1.tau_t, 0.07);
        assert_eq!(cfg.stage1.n_negatives, 20);
        assert_eq!(cfg.stage1.alpha, 0.5);
        assert_eq!(cfg.stage1.lambda_cls, 1.0);
        assert_eq!(cfg.kd.delta, 0.7);
        assert_eq!(cfg.kd.tau_kd, 3.0);
        assert_eq!(cfg.optimizer.learning_rate, 5e-4);
        assert_eq!(cfg.optimizer.weight_decay, 0.01);
        assert_eq!(cfg.optimizer.grad_clip, 1.0);
        assert_eq!(cfg.beam_width, 16);
        assert_eq!(cfg.seed, 42);
        assert!(cfg.margin.is_none());
        assert_eq!(cfg.stage1_variant(), Stage1Variant::Infonce);
        assert_eq!(cfg.corpus.n_base_words, 30);
        assert_eq!(cfg.corpus.n_tones, 4);
        assert_eq!(cfg.corpus.speakers.len(), 8);
    }

    #[test]
    fn config_round_trip_is_value_identical() {
        let cfg = RunConfig::from_json(
            r#"{"seed": 7, "margin": {"m_hard": -0.2, "m_soft": 0.3,
                "lambda_attr": 1.0, "lambda_hard": 0.5, "lambda_soft": 1.0},
                "optimizer": {"learning_rate": 0.001, "weight_decay": 0.01,
                "grad_clip": 1.0, "warmup_steps": 10, "total_steps": 100,
                "batch_size": 2, "accumulation_steps": 2, "beta1": 0.9,
                "beta2": 0.999, "eps": 1e-8}}"#,
        )
        .unwrap();
        let json = cfg.to_json();
        let reparsed = RunConfig::from_json(&json).unwrap();
        assert_eq!(json, reparsed.to_json());
    }

    #[test]
    fn margin_presence_selects_variant() {
        let cfg =
            RunConfig::from_json(r#"{"margin": {"m_hard": -0.1, "m_soft": 0.1, "lambda_attr": 1.0, "lambda_hard": 0.5, "lambda_soft": 1.0}}"#)
                .unwrap();
        assert!(matches!(cfg.stage1_variant(), Stage1Variant::Margin(_)));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(RunConfig::from_json(r#"{"stage1": {"tau_g": 0.0, "tau_t": 0.07, "n_negatives": 20, "alpha": 0.5, "lambda_cls": 1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"beam_width": 0}"#).is_err());
    }

    #[test]
    fn seeds_derive_from_global_seed() {
        let a = RunConfig::from_json(r#"{"seed": 1}"#).unwrap();
        let b = RunConfig::from_json(r#"{"seed": 2}"#).unwrap();
        assert_ne!(a.resolved_corpus().seed, b.resolved_corpus().seed);
        assert_ne!(a.resolved_stack().seed, b.resolved_stack().seed);
        assert_ne!(a.resolved_corpus().seed, a.resolved_stack().seed);
    }
}
