use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Init, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f32,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("encoder {name} must be >= 1")));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Invalid(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Invalid(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.init(&format!("{name}.weight"), inputs, outputs, Init::FanIn, rng)?,
            bias: store.init(&format!("{name}.bias"), 1, outputs, Init::Zeros, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            gamma: store.init(&format!("{name}.gamma"), 1, dim, Init::Ones, rng)?,
            beta: store.init(&format!("{name}.beta"), 1, dim, Init::Zeros, rng)?,
        })
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln_attn: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    ln_ffn: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
}

/// Pre-norm transformer encoder with learned absolute positions.
#[derive(Debug)]
pub struct Encoder {
    config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    blocks: Vec<Block>,
    ln_final: LayerNorm,
    passes: AtomicU64,
}

impl Clone for Encoder {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            token_embedding: self.token_embedding,
            position_embedding: self.position_embedding,
            blocks: self.blocks.clone(),
            ln_final: self.ln_final,
            passes: AtomicU64::new(self.passes()),
        }
    }
}

impl Encoder {
    /// Registers the encoder's parameters under `prefix` in `store`.
    pub fn new<R: Rng>(
        prefix: &str,
        config: EncoderConfig,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let token_embedding = store.init(
            &format!("{prefix}.token_embedding"),
            config.vocab_size,
            d,
            Init::Normal(1.0),
            rng,
        )?;
        let position_embedding = store.add(
            &format!("{prefix}.position_embedding"),
            sinusoid_table(config.max_seq_len, d),
        )?;
        let mut blocks = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = format!("{prefix}.layers.{l}");
            blocks.push(Block {
                ln_attn: LayerNorm::new(store, &format!("{p}.ln_attn"), d, rng)?,
                query: Linear::new(store, &format!("{p}.attn.query"), d, d, rng)?,
                key: Linear::new(store, &format!("{p}.attn.key"), d, d, rng)?,
                value: Linear::new(store, &format!("{p}.attn.value"), d, d, rng)?,
                out: Linear::new(store, &format!("{p}.attn.out"), d, d, rng)?,
                ln_ffn: LayerNorm::new(store, &format!("{p}.ln_ffn"), d, rng)?,
                ffn_in: Linear::new(store, &format!("{p}.ffn.in"), d, config.ffn_dim, rng)?,
                ffn_out: Linear::new(store, &format!("{p}.ffn.out"), config.ffn_dim, d, rng)?,
            });
        }
        let ln_final = LayerNorm::new(store, &format!("{prefix}.ln_final"), d, rng)?;
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            blocks,
            ln_final,
            passes: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn token_embedding(&self) -> ParamId {
        self.token_embedding
    }

    /// Number of forward passes run so far.
    pub fn passes(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset_passes(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }

    /// Contextual embeddings `[len, embed_dim]` for one token sequence.
    pub fn encode(&self, g: &mut Graph, tokens: &[u32]) -> Result<Var> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::Invalid("cannot encode an empty sequence".into()));
        }
        if n > self.config.max_seq_len {
            return Err(Error::Invalid(format!(
                "sequence of {n} tokens exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        if let Some(t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::Invalid(format!(
                "token id {t} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        self.passes.fetch_add(1, Ordering::Relaxed);

        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..n).collect();
        let tok_table = g.param(self.token_embedding);
        let pos_table = g.param(self.position_embedding);
        let tok = g.embedding(tok_table, &ids)?;
        let pos = g.embedding(pos_table, &positions)?;
        let mut x = g.add(tok, pos)?;
        let rate = self.config.dropout_rate;
        x = g.dropout(x, rate);

        let d = self.config.embed_dim;
        let heads = self.config.num_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        for block in &self.blocks {
            let h = block.ln_attn.forward(g, x)?;
            let q = block.query.forward(g, h)?;
            let k = block.key.forward(g, h)?;
            let v = block.value.forward(g, h)?;
            let mut head_out = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (a, b) = (hd * dh, (hd + 1) * dh);
                let qh = g.slice_cols(q, a, b)?;
                let kh = g.slice_cols(k, a, b)?;
                let vh = g.slice_cols(v, a, b)?;
                let scores = g.matmul_bt(qh, kh)?;
                let scores = g.scale(scores, scale);
                let attn = g.softmax(scores);
                head_out.push(g.matmul(attn, vh)?);
            }
            let merged = if heads == 1 {
                head_out[0]
            } else {
                g.concat_cols(&head_out)?
            };
            let o = block.out.forward(g, merged)?;
            let o = g.dropout(o, rate);
            x = g.add(x, o)?;

            let h = block.ln_ffn.forward(g, x)?;
            let f = block.ffn_in.forward(g, h)?;
            let f = g.gelu(f);
            let f = block.ffn_out.forward(g, f)?;
            let f = g.dropout(f, rate);
            x = g.add(x, f)?;
        }
        self.ln_final.forward(g, x)
    }
}

fn sinusoid_table(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0f32; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 * rate;
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
        }
    }
    Tensor::matrix(len, dim, data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> (ParamStore, Encoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = EncoderConfig {
            vocab_size: 20,
            embed_dim: 8,
            num_layers: 2,
            num_heads: 2,
            ffn_dim: 16,
            max_seq_len: 12,
            dropout_rate: 0.1,
        };
        let enc = Encoder::new("enc", cfg, &mut store, &mut rng).unwrap();
        (store, enc)
    }

    #[test]
    fn single_token_shape() {
        let (store, enc) = tiny();
        let mut g = Graph::new(&store, false, 0);
        let h = enc.encode(&mut g, &[3]).unwrap();
        assert_eq!(g.shape(h), (1, 8));
    }

    #[test]
    fn eval_mode_is_bitwise_deterministic() {
        let (store, enc) = tiny();
        let run = || {
            let mut g = Graph::new(&store, false, 99);
            let h = enc.encode(&mut g, &[1, 5, 7, 2]).unwrap();
            g.value(h).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn swapping_distant_tokens_changes_both_outputs() {
        let (store, enc) = tiny();
        let mut g = Graph::new(&store, false, 0);
        let a = enc.encode(&mut g, &[1, 4, 4, 4, 9]).unwrap();
        let b = enc.encode(&mut g, &[9, 4, 4, 4, 1]).unwrap();
        let (va, vb) = (g.value(a).clone(), g.value(b).clone());
        assert_ne!(va.row(0), vb.row(4));
        assert_ne!(va.row(4), vb.row(0));
    }

    #[test]
    fn rejects_bad_inputs_and_counts_passes() {
        let (store, enc) = tiny();
        let mut g = Graph::new(&store, false, 0);
        assert!(enc.encode(&mut g, &[20]).is_err());
        assert!(enc.encode(&mut g, &[1; 13]).is_err());
        assert!(enc.encode(&mut g, &[]).is_err());
        assert_eq!(enc.passes(), 0);
        enc.encode(&mut g, &[1, 2]).unwrap();
        assert_eq!(enc.passes(), 1);
    }

    #[test]
    fn encoding_is_independent_of_other_sequences_in_the_graph() {
        let (store, enc) = tiny();
        let mut alone = Graph::new(&store, false, 0);
        let h = enc.encode(&mut alone, &[3, 4, 5]).unwrap();
        let mut shared = Graph::new(&store, false, 0);
        enc.encode(&mut shared, &[7, 7, 1, 2, 9]).unwrap();
        let h2 = enc.encode(&mut shared, &[3, 4, 5]).unwrap();
        for (x, y) in alone.value(h).data().iter().zip(shared.value(h2).data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny().1.config().clone();
        cfg.num_heads = 3;
        assert!(cfg.validate().is_err());
        cfg.num_heads = 2;
        cfg.dropout_rate = 1.0;
        assert!(cfg.validate().is_err());
    }
}
