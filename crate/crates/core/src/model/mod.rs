//! The masked color model: a pre-LayerNorm transformer encoder over the
//! 18-token multi-palette sequence, with a softmax head over color codes.
//!
//! All parameters live in one flat buffer described by a [`Layout`], which
//! keeps the optimizer, checkpointing and gradient checks uniform. The scalar
//! type is generic so training runs in `f32` and gradient checks in `f64`.

mod checkpoint;
mod forward;
mod train;

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, Range, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::color::NUM_SPECIAL_TOKENS;
use crate::error::{Error, Result};
use crate::sequence::SEQ_LEN;

pub use checkpoint::{rank, Checkpoint, Prediction, CHECKPOINT_VERSION};
pub use forward::{loss_and_gradients, Batch, BatchItem};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

pub(crate) use forward::{derive_seed, softmax_f64};

/// Scalar type the model can run in.
pub trait Real: Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Default + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Default + Send + Sync + 'static {}

pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite constant")
}

/// Segment table rows: 0 is unused, 1..=3 are the image, svg and text palettes.
pub const NUM_SEGMENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Token count including PAD, SEP and MASK.
    pub vocab_size: usize,
    pub use_segment_embeddings: bool,
    pub use_position_embeddings: bool,
    pub dropout: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            vocab_size,
            use_segment_embeddings: true,
            use_position_embeddings: false,
            dropout: 0.1,
            init_std: 0.02,
            seed: 0,
        }
    }

    pub fn num_colors(&self) -> usize {
        self.vocab_size.saturating_sub(NUM_SPECIAL_TOKENS)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("d_model, n_heads and d_ff must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size <= NUM_SPECIAL_TOKENS {
            return bad(format!("vocab_size {} leaves no color codes", self.vocab_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad(format!("init_std {} must be finite and non-negative", self.init_std));
        }
        Ok(())
    }
}

/// A `rows × cols` row-major tensor inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Row `r` as a range into the flat buffer.
    pub fn row(&self, r: usize) -> Range<usize> {
        let start = self.offset + r * self.cols;
        start..start + self.cols
    }
}

/// Matrices are stored `in × out`, so a linear layer is `y = x·W + b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpans {
    pub ln1_g: Span,
    pub ln1_b: Span,
    pub wq: Span,
    pub bq: Span,
    pub wk: Span,
    pub bk: Span,
    pub wv: Span,
    pub bv: Span,
    pub wo: Span,
    pub bo: Span,
    pub ln2_g: Span,
    pub ln2_b: Span,
    pub w1: Span,
    pub b1: Span,
    pub w2: Span,
    pub b2: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub token: Span,
    pub segment: Option<Span>,
    pub position: Option<Span>,
    pub layers: Vec<LayerSpans>,
    pub lnf_g: Span,
    pub lnf_b: Span,
    /// `d_model × num_colors`; untied from the token table.
    pub w_out: Span,
    pub b_out: Span,
    pub total: usize,
    names: Vec<(String, Span)>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let mut names = Vec::new();
        let mut offset = 0;
        let mut alloc = |name: String, rows: usize, cols: usize| {
            let s = Span { offset, rows, cols };
            offset += s.len();
            names.push((name, s));
            s
        };
        let token = alloc("token_embedding".into(), cfg.vocab_size, d);
        let segment = cfg.use_segment_embeddings.then(|| alloc("segment_embedding".into(), NUM_SEGMENTS, d));
        let position = cfg.use_position_embeddings.then(|| alloc("position_embedding".into(), SEQ_LEN, d));
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let mut t = |n: &str, rows, cols| alloc(format!("layer{l}.{n}"), rows, cols);
            layers.push(LayerSpans {
                ln1_g: t("ln1.gain", 1, d),
                ln1_b: t("ln1.bias", 1, d),
                wq: t("attn.wq", d, d),
                bq: t("attn.bq", 1, d),
                wk: t("attn.wk", d, d),
                bk: t("attn.bk", 1, d),
                wv: t("attn.wv", d, d),
                bv: t("attn.bv", 1, d),
                wo: t("attn.wo", d, d),
                bo: t("attn.bo", 1, d),
                ln2_g: t("ln2.gain", 1, d),
                ln2_b: t("ln2.bias", 1, d),
                w1: t("ffn.w1", d, f),
                b1: t("ffn.b1", 1, f),
                w2: t("ffn.w2", f, d),
                b2: t("ffn.b2", 1, d),
            });
        }
        let lnf_g = alloc("final_ln.gain".into(), 1, d);
        let lnf_b = alloc("final_ln.bias".into(), 1, d);
        let w_out = alloc("head.weight".into(), d, cfg.num_colors());
        let b_out = alloc("head.bias".into(), 1, cfg.num_colors());
        Ok(Self {
            token,
            segment,
            position,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: offset,
            names,
        })
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> &[(String, Span)] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<Span> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

/// All trainable tensors of the model in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    layout: Layout,
    data: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    /// Weights and embeddings ~ N(0, init_std²) from `config.seed`; layer-norm
    /// gains 1; biases 0.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let layout = Layout::new(config)?;
        let mut data = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for (name, span) in layout.tensors() {
            let slot = &mut data[span.range()];
            if name.ends_with(".gain") {
                slot.fill(T::one());
            } else if span.rows > 1 {
                for v in slot {
                    *v = real(normal.sample(&mut rng));
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn from_data(config: &ModelConfig, data: Vec<T>) -> Result<Self> {
        let layout = Layout::new(config)?;
        if data.len() != layout.total {
            return Err(Error::Shape(format!("expected {} parameters, got {}", layout.total, data.len())));
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let layout = Layout::new(config)?;
        Ok(Self {
            config: config.clone(),
            data: vec![T::zero(); layout.total],
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.get(name).map(|s| &self.data[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Zeroes the output projection and bias, making every prediction uniform.
    pub fn zero_output_head(&mut self) {
        let (w, b) = (self.layout.w_out, self.layout.b_out);
        self.data[w.range()].fill(T::zero());
        self.data[b.range()].fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::from(*v).expect("castable")).collect(),
        }
    }
}
