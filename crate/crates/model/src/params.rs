//! Parameter layout: names, shapes, language ownership and the fixed order
//! used by checkpoints.

use rand::Rng;

use crate::{Float, Mat, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Uniform,
    Ones,
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Set for parameters that belong to a single target language.
    pub language: Option<u16>,
    init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderLayer {
    pub ln_attn: Norm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln_ffn: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderLayer {
    pub ln_self: Norm,
    pub self_q: Linear,
    pub self_k: Linear,
    pub self_v: Linear,
    /// Output map of the self-attention heads, one per target language.
    pub self_o: Vec<Linear>,
    pub ln_cross: Norm,
    pub cross_q: Linear,
    pub cross_k: Linear,
    pub cross_v: Linear,
    /// Output map of the cross-attention heads, one per target language.
    pub cross_o: Vec<Linear>,
    pub ln_ffn: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    /// Token embeddings, also used (transposed) as the output projection.
    pub tok_emb: usize,
    pub pos_emb: usize,
    /// Decoder-side language embeddings.
    pub lang_emb: usize,
    pub out_bias: usize,
    pub encoder: Vec<EncoderLayer>,
    pub enc_final: Norm,
    pub decoder: Vec<DecoderLayer>,
    pub dec_final: Norm,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(
        &mut self,
        name: String,
        rows: usize,
        cols: usize,
        language: Option<u16>,
        init: Init,
    ) -> usize {
        self.specs.push(ParamSpec {
            name,
            rows,
            cols,
            language,
            init,
        });
        self.specs.len() - 1
    }

    fn linear(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        language: Option<u16>,
    ) -> Linear {
        Linear {
            w: self.add(
                format!("{name}.weight"),
                fan_in,
                fan_out,
                language,
                Init::Uniform,
            ),
            b: self.add(format!("{name}.bias"), 1, fan_out, language, Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gain: self.add(format!("{name}.gain"), 1, d, None, Init::Ones),
            bias: self.add(format!("{name}.bias"), 1, d, None, Init::Zeros),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.hidden_dim, cfg.ffn_dim);
        let mut b = Builder { specs: Vec::new() };
        let tok_emb = b.add(
            "embed.tokens".into(),
            cfg.vocab_size,
            d,
            None,
            Init::Uniform,
        );
        let pos_emb = b.add(
            "embed.positions".into(),
            cfg.max_len + 1,
            d,
            None,
            Init::Uniform,
        );
        let lang_emb = b.add(
            "embed.languages".into(),
            cfg.num_languages,
            d,
            None,
            Init::Uniform,
        );
        let out_bias = b.add("output.bias".into(), 1, cfg.vocab_size, None, Init::Zeros);
        let encoder = (0..cfg.num_layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                EncoderLayer {
                    ln_attn: b.norm(&format!("{p}.ln_attn"), d),
                    q: b.linear(&format!("{p}.attn.q"), d, d, None),
                    k: b.linear(&format!("{p}.attn.k"), d, d, None),
                    v: b.linear(&format!("{p}.attn.v"), d, d, None),
                    o: b.linear(&format!("{p}.attn.o"), d, d, None),
                    ln_ffn: b.norm(&format!("{p}.ln_ffn"), d),
                    ffn_in: b.linear(&format!("{p}.ffn.in"), d, f, None),
                    ffn_out: b.linear(&format!("{p}.ffn.out"), f, d, None),
                }
            })
            .collect();
        let enc_final = b.norm("encoder.ln_final", d);
        let langs = cfg.num_languages as u16;
        let decoder = (0..cfg.num_layers)
            .map(|l| {
                let p = format!("decoder.{l}");
                let ln_self = b.norm(&format!("{p}.ln_self"), d);
                let self_q = b.linear(&format!("{p}.self.q"), d, d, None);
                let self_k = b.linear(&format!("{p}.self.k"), d, d, None);
                let self_v = b.linear(&format!("{p}.self.v"), d, d, None);
                let self_o = (0..langs)
                    .map(|k| b.linear(&format!("{p}.self.o.lang{k}"), d, d, Some(k)))
                    .collect();
                let ln_cross = b.norm(&format!("{p}.ln_cross"), d);
                let cross_q = b.linear(&format!("{p}.cross.q"), d, d, None);
                let cross_k = b.linear(&format!("{p}.cross.k"), d, d, None);
                let cross_v = b.linear(&format!("{p}.cross.v"), d, d, None);
                let cross_o = (0..langs)
                    .map(|k| b.linear(&format!("{p}.cross.o.lang{k}"), d, d, Some(k)))
                    .collect();
                DecoderLayer {
                    ln_self,
                    self_q,
                    self_k,
                    self_v,
                    self_o,
                    ln_cross,
                    cross_q,
                    cross_k,
                    cross_v,
                    cross_o,
                    ln_ffn: b.norm(&format!("{p}.ln_ffn"), d),
                    ffn_in: b.linear(&format!("{p}.ffn.in"), d, f, None),
                    ffn_out: b.linear(&format!("{p}.ffn.out"), f, d, None),
                }
            })
            .collect();
        let dec_final = b.norm("decoder.ln_final", d);
        Self {
            specs: b.specs,
            tok_emb,
            pos_emb,
            lang_emb,
            out_bias,
            encoder,
            enc_final,
            decoder,
            dec_final,
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Uniform(-s, s) with `s = sqrt(6 / (rows + cols))` for weight
    /// matrices and embeddings; gains start at one and biases at zero.
    pub fn init<T: Float, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Mat<T>> {
        self.specs
            .iter()
            .map(|s| match s.init {
                Init::Zeros => Mat::zeros(s.rows, s.cols),
                Init::Ones => Mat::filled(s.rows, s.cols, T::one()),
                Init::Uniform => {
                    let bound = (6.0 / (s.rows + s.cols) as f64).sqrt();
                    let data = (0..s.rows * s.cols)
                        .map(|_| T::of(rng.gen_range(-bound..bound)))
                        .collect();
                    Mat::from_vec(s.rows, s.cols, data)
                }
            })
            .collect()
    }
}

/// Gradient set with the same shapes and order as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Mat<T>>,
}

impl<T: Float> Gradients<T> {
    pub fn zeros_like(params: &[Mat<T>]) -> Self {
        Self {
            tensors: params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Mat::is_finite)
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&x| x.f64() * x.f64())
            .sum::<f64>()
            .sqrt()
    }
}
