//! Sequence-to-sequence post-modifier generation.
//!
//! Inputs are linearized instances (context followed by demarcated claims).
//! Four architectures share one interface: a concatenated-input BiLSTM with
//! attention and copying, the same with a transformer encoder/decoder, a
//! tri-encoder BiLSTM with one encoder and attention per input group, and an
//! end-to-end claim selection BiLSTM whose claim attention is supervised by
//! an auxiliary loss.

mod batch;
mod decode;
mod linearize;
mod model;
mod rnn;
mod train;
mod transformer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::claim_select::OptimizerKind;
use crate::error::{Error, Result};

pub use decode::{decode_batch, generate_pm, DecodeMode, DecodeResult};
pub use linearize::{
    build_vocab, copy_distribution, linearize, linearize_claims, prepare_examples, select_claims,
    GenExample, LinearizedInput,
};
pub use model::{claim_attention_aux_loss, GenModel, LossParts};
pub use train::{
    claim_probabilities, evaluate_examples, train_generator, BestTracker, EvalLog, TrainedGenerator,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[serde(alias = "bilstm")]
    BilstmConcat,
    #[serde(alias = "transformer")]
    TransformerConcat,
    #[serde(alias = "tri")]
    TriEncoder,
    #[serde(alias = "e2e")]
    E2eClaimSelect,
}

impl Architecture {
    pub fn is_recurrent(self) -> bool {
        self != Architecture::TransformerConcat
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bilstm" | "bilstm_concat" => Ok(Architecture::BilstmConcat),
            "transformer" | "transformer_concat" => Ok(Architecture::TransformerConcat),
            "tri" | "tri_encoder" => Ok(Architecture::TriEncoder),
            "e2e" | "e2e_claim_select" => Ok(Architecture::E2eClaimSelect),
            _ => Err(format!(
                "unknown architecture {s:?} (expected bilstm, transformer, tri, or e2e)"
            )),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::BilstmConcat => "bilstm",
            Architecture::TransformerConcat => "transformer",
            Architecture::TriEncoder => "tri",
            Architecture::E2eClaimSelect => "e2e",
        })
    }
}

/// Which claims go into the encoder input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClaimSource {
    All,
    /// Only the claims marked relevant.
    Oracle,
    /// The top `k` claims of a trained selector.
    Ranker(usize),
    /// All claims, with their spans supervised by the auxiliary loss.
    E2e,
    /// No claims at all: context only.
    None,
}

impl FromStr for ClaimSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "all" => Ok(ClaimSource::All),
            "oracle" => Ok(ClaimSource::Oracle),
            "e2e" => Ok(ClaimSource::E2e),
            "none" => Ok(ClaimSource::None),
            _ => match s.strip_prefix("ranker:").map(str::parse) {
                Some(Ok(k)) => Ok(ClaimSource::Ranker(k)),
                _ => Err(format!(
                    "unknown claim source {s:?} (expected all, oracle, ranker:K, e2e, or none)"
                )),
            },
        }
    }
}

impl TryFrom<String> for ClaimSource {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ClaimSource> for String {
    fn from(s: ClaimSource) -> Self {
        s.to_string()
    }
}

impl fmt::Display for ClaimSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimSource::All => f.write_str("all"),
            ClaimSource::Oracle => f.write_str("oracle"),
            ClaimSource::Ranker(k) => write!(f, "ranker:{k}"),
            ClaimSource::E2e => f.write_str("e2e"),
            ClaimSource::None => f.write_str("none"),
        }
    }
}

/// How per-step claim attention mass is combined over decoder steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxAggregation {
    #[default]
    Mean,
    Sum,
}

impl FromStr for AuxAggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean" => Ok(AuxAggregation::Mean),
            "sum" => Ok(AuxAggregation::Sum),
            _ => Err(format!("unknown aggregation {s:?} (expected mean or sum)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenModelConfig {
    pub architecture: Architecture,
    pub claim_source: ClaimSource,
    pub vocab_size: usize,
    pub max_input_len: usize,
    pub max_output_len: usize,
    pub batch_size: usize,
    /// Pointer-generator copying; never used by the e2e architecture.
    pub copy: bool,

    /// Recurrent models. `hidden` is the encoder output width, split evenly
    /// between the two directions, and the decoder width.
    pub layers: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub keep_prob: f64,

    pub heads: usize,
    pub blocks: usize,
    /// Transformer model width, also its embedding width.
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub transformer_keep_prob: f64,
    pub label_smoothing: f64,
    /// Noam warmup for Adam; 0 keeps the learning rate constant.
    pub warmup_steps: usize,

    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub init_scale: f64,
    pub max_grad_norm: f64,

    pub aux_weight: f64,
    pub aux_aggregation: AuxAggregation,

    pub total_steps: usize,
    pub eval_every: usize,
    pub beam_width: usize,
    pub seed: u64,
}

impl Default for GenModelConfig {
    fn default() -> Self {
        GenModelConfig {
            architecture: Architecture::BilstmConcat,
            claim_source: ClaimSource::All,
            vocab_size: 50_000,
            max_input_len: 500,
            max_output_len: 30,
            batch_size: 32,
            copy: true,
            layers: 2,
            hidden: 512,
            embedding_dim: 500,
            keep_prob: 0.7,
            heads: 4,
            blocks: 4,
            model_dim: 64,
            ffn_dim: 256,
            transformer_keep_prob: 0.9,
            label_smoothing: 0.1,
            warmup_steps: 8000,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1.0,
            init_scale: 0.1,
            max_grad_norm: 5.0,
            aux_weight: 1.0,
            aux_aggregation: AuxAggregation::Mean,
            total_steps: 5000,
            eval_every: 500,
            beam_width: 5,
            seed: 1,
        }
    }
}

impl GenModelConfig {
    /// Defaults for `arch`, including its optimizer and claim source.
    pub fn for_architecture(arch: Architecture) -> Self {
        let base = GenModelConfig {
            architecture: arch,
            ..Default::default()
        };
        match arch {
            Architecture::TransformerConcat => GenModelConfig {
                optimizer: OptimizerKind::Adam,
                learning_rate: 2.0,
                ..base
            },
            Architecture::E2eClaimSelect => GenModelConfig {
                claim_source: ClaimSource::E2e,
                copy: false,
                ..base
            },
            _ => base,
        }
    }

    pub fn copy_enabled(&self) -> bool {
        self.copy && self.architecture != Architecture::E2eClaimSelect
    }

    pub fn validate(&self) -> Result<()> {
        let mut dims = vec![
            ("vocab_size", self.vocab_size),
            ("max_input_len", self.max_input_len),
            ("max_output_len", self.max_output_len),
            ("batch_size", self.batch_size),
            ("total_steps", self.total_steps),
            ("eval_every", self.eval_every),
            ("beam_width", self.beam_width),
        ];
        if self.architecture.is_recurrent() {
            dims.extend([
                ("layers", self.layers),
                ("hidden", self.hidden),
                ("embedding_dim", self.embedding_dim),
            ]);
            if !self.hidden.is_multiple_of(2) {
                return Err(Error::invalid(format!(
                    "hidden {} must be even (split across directions)",
                    self.hidden
                )));
            }
        } else {
            dims.extend([
                ("heads", self.heads),
                ("blocks", self.blocks),
                ("model_dim", self.model_dim),
                ("ffn_dim", self.ffn_dim),
            ]);
            if !self.model_dim.is_multiple_of(self.heads.max(1)) {
                return Err(Error::invalid(format!(
                    "model_dim {} must be divisible by heads {}",
                    self.model_dim, self.heads
                )));
            }
        }
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if self.vocab_size < crate::vocab::RESERVED.len() {
            return Err(Error::invalid("vocab_size must cover the reserved symbols"));
        }
        for (name, p) in [
            ("keep_prob", self.keep_prob),
            ("transformer_keep_prob", self.transformer_keep_prob),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!("{name} {p} must be in (0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::invalid("label_smoothing must be in [0, 1)"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.aux_weight.is_nan() || self.aux_weight < 0.0 {
            return Err(Error::invalid("aux_weight must be non-negative"));
        }
        let e2e_arch = self.architecture == Architecture::E2eClaimSelect;
        if e2e_arch && self.copy {
            return Err(Error::invalid(
                "the e2e architecture does not use copying; set copy=false",
            ));
        }
        if (self.claim_source == ClaimSource::E2e) != e2e_arch {
            return Err(Error::invalid(
                "claim source e2e goes with architecture e2e and only with it",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in ["all", "oracle", "ranker:3", "e2e", "none"] {
            assert_eq!(s.parse::<ClaimSource>().unwrap().to_string(), s);
        }
        assert!("ranker:x".parse::<ClaimSource>().is_err());
        for a in ["bilstm", "transformer", "tri", "e2e"] {
            assert_eq!(a.parse::<Architecture>().unwrap().to_string(), a);
        }
        let json = serde_json::to_string(&ClaimSource::Ranker(2)).unwrap();
        assert_eq!(json, "\"ranker:2\"");
    }

    #[test]
    fn architecture_defaults_validate() {
        for arch in [
            Architecture::BilstmConcat,
            Architecture::TransformerConcat,
            Architecture::TriEncoder,
            Architecture::E2eClaimSelect,
        ] {
            GenModelConfig::for_architecture(arch).validate().unwrap();
        }
        let bad = GenModelConfig {
            copy: true,
            ..GenModelConfig::for_architecture(Architecture::E2eClaimSelect)
        };
        assert!(bad.validate().is_err());
        let bad = GenModelConfig {
            aux_weight: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
