use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forward::{derive_seed, forward, loss_and_gradients, BatchItem};
use super::{Checkpoint, ModelConfig, ModelParams};
use crate::color::{Vocabulary, NUM_SPECIAL_TOKENS};
use crate::error::{Error, Result};
use crate::sequence::{apply_masking, mask_at, ColorSequence, MaskedSequence, MaskingPolicy, Token, SEQ_LEN};

// stream tags for derive_seed
const SHUFFLE: u64 = 1;
const MASKING: u64 = 2;
const VALIDATION: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub masking: MaskingPolicy,
    pub seed: u64,
    /// Independent runs (seeds `seed`, `seed + 1`, ...); the one with the
    /// lowest final validation loss is kept.
    pub runs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            masking: MaskingPolicy::default(),
            seed: 0,
            runs: 1,
        }
    }
}

/// Progress of one epoch; emitted as one JSON line by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub run: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_run: usize,
    /// Selection score of each run (final validation loss, or final train loss
    /// without a validation split).
    pub run_scores: Vec<f64>,
}

/// Token ids of a sequence whose colors are all in the vocabulary.
pub(crate) fn encode_ids(vocab: &Vocabulary, seq: &ColorSequence) -> Result<[u32; SEQ_LEN]> {
    let mut ids = [0u32; SEQ_LEN];
    for (id, tok) in ids.iter_mut().zip(seq.tokens()) {
        *id = vocab.token_id(tok).ok_or_else(|| Error::Sequence(format!("token {tok} is not in the vocabulary")))?;
    }
    Ok(ids)
}

impl BatchItem {
    /// Encodes a masked sequence whose colors are all in `vocab`.
    pub fn from_masked(vocab: &Vocabulary, m: &MaskedSequence) -> Result<Self> {
        batch_item(vocab, m)
    }
}

pub(crate) fn batch_item(vocab: &Vocabulary, m: &MaskedSequence) -> Result<BatchItem> {
    let targets = m
        .targets
        .iter()
        .map(|t| {
            vocab
                .color_index(t.code)
                .map(|c| (t.position, c))
                .ok_or_else(|| Error::Sequence(format!("target {} is not in the vocabulary", t.code)))
        })
        .collect::<Result<_>>()?;
    Ok(BatchItem {
        ids: encode_ids(vocab, &m.input)?,
        targets,
    })
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f32], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = cfg.learning_rate as f32;
        let eps = cfg.eps as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Mean NLL and top-1 accuracy on one fixed masked position per sequence.
fn validate(params: &ModelParams<f32>, items: &[BatchItem]) -> Result<(f64, f64)> {
    let nc = params.config().num_colors();
    let (mut loss, mut hits, mut count) = (0.0, 0usize, 0usize);
    for item in items {
        let queries: Vec<usize> = item.targets.iter().map(|t| t.0).collect();
        let f = forward(params, &item.ids, &queries, None)?;
        for (qi, &(_, target)) in item.targets.iter().enumerate() {
            let probs = super::softmax_f64(&f.logits[qi * nc..(qi + 1) * nc]);
            loss -= probs[target].max(f64::MIN_POSITIVE).ln();
            let best = probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b });
            hits += usize::from(best.0 == target);
            count += 1;
        }
    }
    Ok((loss / count.max(1) as f64, hits as f64 / count.max(1) as f64))
}

/// Masked-color training with Adam.
///
/// Sequences are snapped to `vocab`; sequences without colors are skipped.
/// `model.vocab_size` is taken from the vocabulary. Each run is deterministic
/// in `(model.seed + run, cfg.seed + run)`.
pub fn train(
    train: &[ColorSequence],
    val: &[ColorSequence],
    vocab: &Vocabulary,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.runs == 0 {
        return Err(Error::InvalidArgument("batch_size and runs must be positive".into()));
    }
    let train: Vec<ColorSequence> = train.iter().filter(|s| s.num_colors() > 0).map(|s| s.snap_to(vocab)).collect();
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = model.clone();
    model.vocab_size = vocab.len();
    debug_assert!(vocab.len() > NUM_SPECIAL_TOKENS);

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut run_scores = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let mut mc = model.clone();
        mc.seed = model.seed.wrapping_add(run as u64);
        let seed = cfg.seed.wrapping_add(run as u64);

        let val_items: Vec<BatchItem> = val
            .iter()
            .filter(|s| s.num_colors() > 0)
            .enumerate()
            .map(|(i, s)| {
                let s = s.snap_to(vocab);
                let cands = s.color_positions();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, VALIDATION, i as u64]));
                let pos = cands[rng.random_range(0..cands.len())];
                batch_item(vocab, &mask_at(&s, &[pos])?)
            })
            .collect::<Result<_>>()?;

        let mut params = ModelParams::<f32>::init(&mc)?;
        let mut adam = Adam::new(params.len());
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut step = 0u64;
        let mut score = f64::INFINITY;
        for epoch in 1..=cfg.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, SHUFFLE, epoch as u64]));
            order.shuffle(&mut rng);
            let (mut loss_sum, mut targets) = (0.0, 0usize);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = chunk
                    .iter()
                    .map(|&i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, MASKING, epoch as u64, i as u64]));
                        batch_item(vocab, &apply_masking(&train[i], &cfg.masking, vocab, &mut rng)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (loss, grad) = loss_and_gradients(&params, &batch, Some((seed, step)))?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged { epoch, step: step as usize, loss });
                }
                adam.step(params.data_mut(), &grad, cfg);
                step += 1;
                let n: usize = batch.iter().map(|b| b.targets.len()).sum();
                loss_sum += loss * n as f64;
                targets += n;
            }
            let train_loss = loss_sum / targets as f64;
            let (val_loss, val_accuracy) = if val_items.is_empty() {
                (None, None)
            } else {
                let (l, a) = validate(&params, &val_items)?;
                (Some(l), Some(a))
            };
            score = val_loss.unwrap_or(train_loss);
            let rec = EpochRecord {
                run,
                epoch,
                train_loss,
                val_loss,
                val_accuracy,
            };
            on_epoch(&rec);
            history.push(rec);
        }
        run_scores.push(score);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, run, params));
        }
    }
    let (_, best_run, params) = best.expect("at least one run");
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_params(params, vocab.clone())?,
        history,
        best_run,
        run_scores,
    })
}

/// Token at `pos` must be a color or MASK to be predicted.
pub(crate) fn check_query(seq: &ColorSequence, pos: usize) -> Result<()> {
    match seq.tokens().get(pos) {
        Some(Token::Color(_)) | Some(Token::Mask) => Ok(()),
        Some(t) => Err(Error::Masking(format!("position {pos} holds {t}, not a color or MASK"))),
        None => Err(Error::Masking(format!("position {pos} out of range"))),
    }
}
