//! Run configuration: model shape, optimisation and inference settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub learning_rate: f32,
    /// Chunks per optimiser step.
    pub batch_size: usize,
    /// Chunk length used for training.
    pub max_sequence_length: usize,
    /// Chunk length used by `link`, `disambiguate` and `bench`.
    pub eval_sequence_length: usize,
    pub dropout: f32,
    /// Width of the shared space `f2` and `f3` project into.
    pub description_embedding_dim: usize,
    /// Candidates kept per mention at inference.
    pub num_candidates: usize,
    pub entity_type_budget: usize,
    /// Weights of the detection, typing, description and combined losses.
    pub loss_weights: [f32; 4],
    pub mention_mask_prob: f32,
    pub mention_encoder_layers: usize,
    pub description_encoder_layers: usize,
    pub description_tokens: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_mentions_per_chunk: usize,
    pub training_steps: u64,
    pub vocab_min_count: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            batch_size: 64,
            max_sequence_length: 300,
            eval_sequence_length: 512,
            dropout: 0.05,
            description_embedding_dim: 300,
            num_candidates: 30,
            entity_type_budget: 1400,
            loss_weights: [0.01, 1.0, 0.01, 1.0],
            mention_mask_prob: 0.7,
            mention_encoder_layers: 2,
            description_encoder_layers: 2,
            description_tokens: 32,
            embed_dim: 64,
            num_heads: 2,
            ffn_dim: 128,
            max_mentions_per_chunk: 40,
            training_steps: 1000,
            vocab_min_count: 1,
        }
    }
}

impl Config {
    /// Defaults overlaid with the keys present in a JSON file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            line: e.line(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a `key=value` override. The value is parsed as JSON, falling
    /// back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("override `{assignment}` is not key=value")))?;
        let value: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut json = serde_json::to_value(&*self).expect("config serialises");
        let obj = json.as_object_mut().expect("config is an object");
        if !obj.contains_key(key) {
            return Err(Error::Invalid(format!("unknown config key `{key}`")));
        }
        obj.insert(key.to_string(), value);
        let next: Config = serde_json::from_value(json)
            .map_err(|e| Error::Invalid(format!("bad value for `{key}`: {e}")))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("max_sequence_length", self.max_sequence_length),
            ("eval_sequence_length", self.eval_sequence_length),
            ("description_embedding_dim", self.description_embedding_dim),
            ("num_candidates", self.num_candidates),
            ("mention_encoder_layers", self.mention_encoder_layers),
            ("description_encoder_layers", self.description_encoder_layers),
            ("embed_dim", self.embed_dim),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_mentions_per_chunk", self.max_mentions_per_chunk),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("config `{k}` must be >= 1")));
        }
        if self.description_tokens < 3 {
            return Err(Error::Validation(
                "config `description_tokens` must leave room for [CLS] label [SEP]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mention_mask_prob) {
            return Err(Error::Validation("config `mention_mask_prob` outside [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation("config `dropout` outside [0, 1)".into()));
        }
        if self.loss_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation("config `loss_weights` must be finite and >= 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Validation("config `learning_rate` must be >= 0".into()));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Validation("config `embed_dim` must divide by `num_heads`".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_values() {
        let mut c = Config::default();
        c.set("learning_rate=0.001").unwrap();
        c.set("loss_weights=[1,0,0,0]").unwrap();
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.loss_weights, [1.0, 0.0, 0.0, 0.0]);
        assert!(c.set("nope=1").is_err());
        assert!(c.set("batch_size=0").is_err());
        assert!(c.set("batch_size").is_err());
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn partial_files_keep_defaults() {
        let c: Config = serde_json::from_str(r#"{"embed_dim": 32}"#).unwrap();
        assert_eq!(c.embed_dim, 32);
        assert_eq!(c.num_candidates, 30);
        assert!(serde_json::from_str::<Config>(r#"{"typo": 1}"#).is_err());
    }
}
