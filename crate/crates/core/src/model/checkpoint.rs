//! Self-contained model files.
//!
//! Layout (little-endian): magic `CHSQMODL`, version `u32`, config, vocabulary
//! table (bins, then code triples with counts), `u64` parameter count, raw
//! `f32` parameters, and a SHA-256 of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::forward::forward;
use super::train::{check_query, encode_ids};
use super::{softmax_f64, ModelConfig, ModelParams};
use crate::color::{ColorCode, VocabConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::sequence::{ColorSequence, Token, SEQ_LEN};

const MAGIC: &[u8; 8] = b"CHSQMODL";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub code: ColorCode,
    pub probability: f64,
}

/// Trained parameters with their config and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    params: ModelParams<f32>,
    vocab: Vocabulary,
}

/// Colors ranked by descending probability, ties by ascending id, skipping excluded ids.
pub fn rank(probs: &[f64], n: usize, excluded: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..probs.len()).filter(|&i| !excluded(i)).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx.into_iter().map(|i| (i, probs[i])).collect()
}

impl Checkpoint {
    /// Freshly initialized model over `vocab`.
    pub fn new(config: &ModelConfig, vocab: Vocabulary) -> Result<Self> {
        let mut config = config.clone();
        config.vocab_size = vocab.len();
        Self::from_params(ModelParams::init(&config)?, vocab)
    }

    pub fn from_params(params: ModelParams<f32>, vocab: Vocabulary) -> Result<Self> {
        if params.config().vocab_size != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tokens but vocabulary has {}",
                params.config().vocab_size,
                vocab.len()
            )));
        }
        Ok(Self { params, vocab })
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<f32> {
        &mut self.params
    }

    /// Probability over all vocabulary colors at each position, with those
    /// positions replaced by MASK. Positions must hold colors or MASK; other
    /// colors are snapped to the vocabulary.
    pub fn distributions(&self, seq: &ColorSequence, positions: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut input = seq.snap_to(&self.vocab);
        for &p in positions {
            check_query(seq, p)?;
            input = input.with_token(p, Token::Mask);
        }
        let ids = encode_ids(&self.vocab, &input)?;
        let f = forward(&self.params, &ids, positions, None)?;
        let nc = self.vocab.num_colors();
        Ok(f.logits.chunks(nc).map(softmax_f64).collect())
    }

    /// Top `n` colors per position (truncated to the vocabulary size).
    pub fn predict_topn(&self, seq: &ColorSequence, positions: &[usize], n: usize) -> Result<Vec<Vec<Prediction>>> {
        Ok(self
            .distributions(seq, positions)?
            .iter()
            .map(|probs| {
                rank(probs, n, |_| false)
                    .into_iter()
                    .map(|(i, p)| Prediction {
                        code: self.vocab.codes()[i],
                        probability: p,
                    })
                    .collect()
            })
            .collect())
    }

    /// Attention probabilities `[layer][head][query][key]` over all 18
    /// positions; rows and columns of PAD positions are zero.
    pub fn attention_maps(&self, seq: &ColorSequence) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
        let ids = encode_ids(&self.vocab, &seq.snap_to(&self.vocab))?;
        let f = forward(&self.params, &ids, &[], None)?;
        let n = f.rows.len();
        Ok(f.attention()
            .into_iter()
            .map(|heads| {
                heads
                    .into_iter()
                    .map(|a| {
                        let mut full = vec![vec![0.0; SEQ_LEN]; SEQ_LEN];
                        for (i, &pi) in f.rows.iter().enumerate() {
                            for (j, &pj) in f.rows.iter().enumerate() {
                                full[pi][pj] = a[i * n + j] as f64;
                            }
                        }
                        full
                    })
                    .collect()
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.config();
        let mut out = Vec::with_capacity(64 + self.params.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [c.d_model, c.n_layers, c.n_heads, c.d_ff, c.vocab_size] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(u8::from(c.use_segment_embeddings) | u8::from(c.use_position_embeddings) << 1);
        out.extend_from_slice(&c.dropout.to_le_bytes());
        out.extend_from_slice(&c.init_std.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.push(self.vocab.config().bins_per_axis);
        out.extend_from_slice(&(self.vocab.num_colors() as u32).to_le_bytes());
        for (code, count) in self.vocab.codes().iter().zip(self.vocab.counts()) {
            out.extend_from_slice(&[code.l, code.a, code.b]);
            out.extend_from_slice(&count.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in self.params.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic bytes)"));
        }
        let mut r = Reader { buf: bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"
            )));
        }
        if bytes.len() < 32 + r.pos {
            return Err(bad("truncated checkpoint"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch (corrupted or truncated file)"));
        }
        r.buf = body;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let flags = r.u8()?;
        let config = ModelConfig {
            d_model: dims[0],
            n_layers: dims[1],
            n_heads: dims[2],
            d_ff: dims[3],
            vocab_size: dims[4],
            use_segment_embeddings: flags & 1 != 0,
            use_position_embeddings: flags & 2 != 0,
            dropout: r.f64()?,
            init_std: r.f64()?,
            seed: r.u64()?,
        };
        let vcfg = VocabConfig::new(r.u8()?)?;
        let n_codes = r.u32()? as usize;
        let mut tally = BTreeMap::new();
        for _ in 0..n_codes {
            let t = r.take(3)?;
            let code = ColorCode::new(t[0], t[1], t[2]);
            if !code.is_valid(vcfg) {
                return Err(Error::Checkpoint(format!("invalid code {code} in vocabulary")));
            }
            tally.insert(code, r.u64()?);
        }
        if tally.len() != n_codes {
            return Err(bad("duplicate codes in vocabulary"));
        }
        let vocab = Vocabulary::from_counts(tally, vcfg)?;
        let n = r.u64()? as usize;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| bad("parameter count overflow"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if r.pos != body.len() {
            return Err(bad("trailing bytes after parameters"));
        }
        let params = ModelParams::from_data(&config, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_params(params, vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
