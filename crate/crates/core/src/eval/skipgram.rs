//! Skip-gram with negative sampling over color tokens: the context-only
//! baseline. Every other color of a sequence is a context word; palettes
//! and positions are ignored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::color::{ColorCode, VocabConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::model::rank;
use crate::sequence::{ColorSequence, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    /// Decays linearly to 0.01% of this value.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 10,
            negatives: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkipGram {
    vocab: Vocabulary,
    dim: usize,
    /// Center ("input") vectors, colors × dim.
    input: Vec<f32>,
    /// Context ("output") vectors, colors × dim.
    output: Vec<f32>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl SkipGram {
    pub fn train(corpus: &[ColorSequence], vocab: &Vocabulary, cfg: &SkipGramConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        let sentences: Vec<Vec<usize>> = corpus
            .iter()
            .map(|s| {
                s.snap_to(vocab)
                    .tokens()
                    .iter()
                    .filter_map(|t| match t {
                        Token::Color(c) => vocab.color_index(*c),
                        _ => None,
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|s| s.len() > 1)
            .collect();
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let nc = vocab.num_colors();
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let input: Vec<f32> = (0..nc * d).map(|_| (rng.random::<f32>() - 0.5) / d as f32).collect();
        let mut output = vec![0.0f32; nc * d];
        let mut input = input;
        // unigram^0.75 noise distribution
        let noise = WeightedAliasIndex::new(vocab.counts().iter().map(|&c| (c.max(1) as f64).powf(0.75)).collect())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;

        let pairs_per_epoch: usize = sentences.iter().map(|s| s.len() * (s.len() - 1)).sum();
        let total = (pairs_per_epoch * cfg.epochs).max(1) as f64;
        let mut seen = 0usize;
        let mut grad = vec![0.0f32; d];
        for _ in 0..cfg.epochs {
            for s in &sentences {
                for (i, &center) in s.iter().enumerate() {
                    for (j, &ctx) in s.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        let lr = (cfg.learning_rate * (1.0 - seen as f64 / total).max(1e-4)) as f32;
                        seen += 1;
                        grad.fill(0.0);
                        let vin = center * d..(center + 1) * d;
                        for k in 0..=cfg.negatives {
                            let (target, label) = if k == 0 { (ctx, 1.0) } else { (noise.sample(&mut rng), 0.0) };
                            if k > 0 && target == ctx {
                                continue;
                            }
                            let vout = target * d..(target + 1) * d;
                            let dot: f32 = input[vin.clone()].iter().zip(&output[vout.clone()]).map(|(a, b)| a * b).sum();
                            let g = lr * (label - sigmoid(dot));
                            for t in 0..d {
                                grad[t] += g * output[vout.start + t];
                                output[vout.start + t] += g * input[vin.start + t];
                            }
                        }
                        for (w, g) in input[vin].iter_mut().zip(&grad) {
                            *w += g;
                        }
                    }
                }
            }
        }
        Ok(Self {
            vocab: vocab.clone(),
            dim: d,
            input,
            output,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn embedding(&self, color: usize) -> &[f32] {
        &self.input[color * self.dim..(color + 1) * self.dim]
    }

    /// Cosine similarity of every color's context vector to the mean input
    /// vector of the visible colors; frequency when nothing is visible.
    pub fn scores(&self, seq: &ColorSequence) -> Vec<f64> {
        let d = self.dim;
        let mut mean = vec![0.0f64; d];
        let mut k = 0;
        for t in seq.snap_to(&self.vocab).tokens() {
            if let Token::Color(c) = t {
                let i = self.vocab.color_index(*c).expect("snapped");
                for (m, v) in mean.iter_mut().zip(self.embedding(i)) {
                    *m += *v as f64;
                }
                k += 1;
            }
        }
        if k == 0 {
            return self.vocab.counts().iter().map(|&c| c as f64).collect();
        }
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let mn = norm(&mut mean.iter().copied());
        (0..self.vocab.num_colors())
            .map(|c| {
                let o = &self.output[c * d..(c + 1) * d];
                let on = norm(&mut o.iter().map(|&x| x as f64));
                let dot: f64 = mean.iter().zip(o).map(|(a, b)| a * *b as f64).sum();
                if mn == 0.0 || on == 0.0 {
                    0.0
                } else {
                    dot / (mn * on)
                }
            })
            .collect()
    }
}

impl Predictor for SkipGram {
    fn rank(&self, seq: &ColorSequence, positions: &[usize], n: usize) -> Result<Vec<Vec<ColorCode>>> {
        let mut input = *seq;
        for &p in positions {
            match seq.tokens().get(p) {
                Some(Token::Color(_)) | Some(Token::Mask) => input = input.with_token(p, Token::Mask),
                _ => return Err(Error::Masking(format!("position {p} is not a color or MASK"))),
            }
        }
        let scores = self.scores(&input);
        let ranked: Vec<ColorCode> = rank(&scores, n, |_| false).into_iter().map(|(i, _)| self.vocab.codes()[i]).collect();
        Ok(vec![ranked; positions.len()])
    }

    fn vocab_config(&self) -> VocabConfig {
        self.vocab.config()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{synth_corpus, SynthConfig, SynthCorpus};

    #[test]
    fn embeddings_are_finite_and_distinct() {
        let corpus = synth_corpus(&SynthConfig::new(200, 3)).unwrap();
        let train = SynthCorpus::sequences(&corpus.train);
        let vocab = Vocabulary::build(&train, VocabConfig::default()).unwrap();
        let sg = SkipGram::train(&train, &vocab, &SkipGramConfig { epochs: 2, ..Default::default() }).unwrap();
        assert!(sg.input.iter().chain(&sg.output).all(|v| v.is_finite()));
        assert!((1..vocab.num_colors()).any(|c| sg.embedding(c) != sg.embedding(0)));
        let again = SkipGram::train(&train, &vocab, &SkipGramConfig { epochs: 2, ..Default::default() }).unwrap();
        assert_eq!(sg.input, again.input);

        let seq = train[0];
        let pos = seq.color_positions()[0];
        let ranked = sg.rank(&seq, &[pos], 5).unwrap();
        assert_eq!(ranked[0].len(), 5);
    }
}
