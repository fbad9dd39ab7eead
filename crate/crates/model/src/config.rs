use crate::{Error, Precision, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub num_heads: usize,
    /// Longest source or target sentence, in tokens, excluding BOS/EOS.
    pub max_len: usize,
    pub num_languages: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub precision: Precision,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, width 64, 4 heads.
    pub fn desk(vocab_size: usize, num_languages: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 64,
            ffn_dim: 256,
            num_heads: 4,
            max_len: 32,
            num_languages,
            vocab_size,
            dropout_rate: 0.1,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("ffn_dim", self.ffn_dim),
            ("num_heads", self.num_heads),
            ("max_len", self.max_len),
            ("num_languages", self.num_languages),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.vocab_size <= lingua_core::MASK as usize {
            return Err(Error::Config(
                "vocab_size must cover the reserved tokens".into(),
            ));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    ///
    /// With `V` vocab, `d` width, `f` feed-forward width, `K` languages,
    /// `N` layers per stack and `P = max_len + 1` positions:
    ///
    /// ```text
    /// embeddings   V*d + P*d + K*d + V
    /// encoder      N * (4*(d*d + d) + 2*d*f + f + d + 4*d) + 2*d
    /// decoder      N * (2*(3 + K)*(d*d + d) + 2*d*f + f + d + 6*d) + 2*d
    /// ```
    pub fn parameter_count(&self) -> usize {
        let (v, d, f, k, n) = (
            self.vocab_size,
            self.hidden_dim,
            self.ffn_dim,
            self.num_languages,
            self.num_layers,
        );
        let p = self.max_len + 1;
        let proj = d * d + d;
        let ffn = 2 * d * f + f + d;
        let embeddings = v * d + p * d + k * d + v;
        let encoder = n * (4 * proj + ffn + 4 * d) + 2 * d;
        let decoder = n * (2 * (3 + k) * proj + ffn + 6 * d) + 2 * d;
        embeddings + encoder + decoder
    }
}
