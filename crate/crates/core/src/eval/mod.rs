//! Masked-color evaluation: accuracy@N, CIEDE2000 similarity@N, the
//! masked-count table, a skip-gram baseline and the synthetic corpus.

mod skipgram;
mod synth;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color::{ciede2000, code_center, ColorCode, VocabConfig};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, ModelConfig};
use crate::sequence::{mask_at, write_corpus, ColorSequence, CorpusEntry};

pub use skipgram::{SkipGram, SkipGramConfig};
pub use synth::{synth_corpus, synth_documents, BayesAnalysis, SynthConfig, SynthCorpus, SynthDoc, SynthKind, SynthSpec, SEGMENT_TAG, THEME_TAG};

/// Cutoffs reported for accuracy and similarity.
pub const REPORT_NS: [usize; 6] = [1, 2, 3, 4, 5, 10];

/// Anything that ranks colors for masked positions.
pub trait Predictor {
    /// Top `n` codes for each of `positions`, which are masked together.
    fn rank(&self, seq: &ColorSequence, positions: &[usize], n: usize) -> Result<Vec<Vec<ColorCode>>>;
    fn vocab_config(&self) -> VocabConfig;
}

impl Predictor for Checkpoint {
    fn rank(&self, seq: &ColorSequence, positions: &[usize], n: usize) -> Result<Vec<Vec<ColorCode>>> {
        Ok(self
            .predict_topn(seq, positions, n)?
            .into_iter()
            .map(|ps| ps.into_iter().map(|p| p.code).collect())
            .collect())
    }

    fn vocab_config(&self) -> VocabConfig {
        self.vocab().config()
    }
}

fn check_aligned<T>(predictions: &[T], truths: &[ColorCode], n: usize) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} truths", predictions.len(), truths.len())));
    }
    if truths.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("metrics need at least one case and n >= 1".into()));
    }
    Ok(())
}

/// Fraction of cases whose truth is among the first `n` predictions.
pub fn accuracy_at_n(predictions: &[Vec<ColorCode>], truths: &[ColorCode], n: usize) -> Result<f64> {
    check_aligned(predictions, truths, n)?;
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p.iter().take(n).any(|c| c == *t)).count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Mean over cases of the smallest CIEDE2000 between the truth's bin center
/// and the bin centers of the first `n` predictions.
pub fn similarity_at_n(predictions: &[Vec<ColorCode>], truths: &[ColorCode], n: usize, cfg: VocabConfig) -> Result<f64> {
    check_aligned(predictions, truths, n)?;
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        let tc = code_center(*t, cfg)?;
        let mut best = f64::INFINITY;
        for c in p.iter().take(n) {
            best = best.min(ciede2000(code_center(*c, cfg)?, tc));
        }
        if !best.is_finite() {
            return Err(Error::InvalidArgument("a case has no predictions".into()));
        }
        total += best;
    }
    Ok(total / truths.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAt {
    pub n: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiMaskRow {
    pub masked: usize,
    pub cases: usize,
    pub accuracy_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub masked: usize,
    /// Scored masked positions.
    pub cases: usize,
    /// Sequences skipped for having fewer than `masked` colors.
    pub skipped: usize,
    pub accuracy: Vec<MetricAt>,
    pub similarity: Vec<MetricAt>,
    pub multi_mask: Vec<MultiMaskRow>,
    pub seed: u64,
    pub corpus_sha256: String,
    pub model: Option<ModelConfig>,
    /// Number of reports averaged into this one.
    pub runs: usize,
}

impl EvalReport {
    pub fn accuracy_at(&self, n: usize) -> Option<f64> {
        self.accuracy.iter().find(|m| m.n == n).map(|m| m.value)
    }

    pub fn similarity_at(&self, n: usize) -> Option<f64> {
        self.similarity.iter().find(|m| m.n == n).map(|m| m.value)
    }

    /// Accuracy must not fall and similarity must not rise as N grows.
    pub fn check_monotone(&self) -> Result<()> {
        for w in self.accuracy.windows(2) {
            if w[1].value < w[0].value - 1e-12 {
                return Err(Error::InvalidArgument(format!("accuracy@{} < accuracy@{}", w[1].n, w[0].n)));
            }
        }
        for w in self.similarity.windows(2) {
            if w[1].value > w[0].value + 1e-12 {
                return Err(Error::InvalidArgument(format!("similarity@{} > similarity@{}", w[1].n, w[0].n)));
            }
        }
        Ok(())
    }

    /// Element-wise mean of reports over the same corpus and protocol.
    pub fn mean(reports: &[EvalReport]) -> Result<EvalReport> {
        let first = reports.first().ok_or_else(|| Error::InvalidArgument("no reports to average".into()))?;
        let k = reports.len() as f64;
        let avg = |get: &dyn Fn(&EvalReport) -> &Vec<MetricAt>| -> Vec<MetricAt> {
            get(first)
                .iter()
                .enumerate()
                .map(|(i, m)| MetricAt {
                    n: m.n,
                    value: reports.iter().map(|r| get(r)[i].value).sum::<f64>() / k,
                })
                .collect()
        };
        for r in reports {
            if r.accuracy.len() != first.accuracy.len() || r.multi_mask.len() != first.multi_mask.len() || r.masked != first.masked {
                return Err(Error::InvalidArgument("reports use different protocols".into()));
            }
        }
        Ok(EvalReport {
            label: format!("{} (mean of {})", first.label, reports.len()),
            accuracy: avg(&|r| &r.accuracy),
            similarity: avg(&|r| &r.similarity),
            multi_mask: first
                .multi_mask
                .iter()
                .enumerate()
                .map(|(i, row)| MultiMaskRow {
                    accuracy_at_1: reports.iter().map(|r| r.multi_mask[i].accuracy_at_1).sum::<f64>() / k,
                    ..row.clone()
                })
                .collect(),
            runs: reports.iter().map(|r| r.runs).sum(),
            ..first.clone()
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}: masked={} cases={} skipped={} seed={}", self.label, self.masked, self.cases, self.skipped, self.seed);
        let _ = writeln!(s, "  {:>4}  {:>9}  {:>12}", "N", "accuracy", "similarity");
        for (a, d) in self.accuracy.iter().zip(&self.similarity) {
            let _ = writeln!(s, "  {:>4}  {:>9.4}  {:>12.4}", a.n, a.value, d.value);
        }
        if !self.multi_mask.is_empty() {
            let _ = writeln!(s, "  {:>6}  {:>6}  {:>10}", "masked", "cases", "accuracy@1");
            for row in &self.multi_mask {
                let _ = writeln!(s, "  {:>6}  {:>6}  {:>10.4}", row.masked, row.cases, row.accuracy_at_1);
            }
        }
        s
    }
}

/// SHA-256 of the corpus in its JSONL form.
pub fn corpus_sha256(corpus: &[ColorSequence]) -> String {
    let entries: Vec<CorpusEntry> = corpus.iter().map(|s| CorpusEntry { sequence: *s, tag: None }).collect();
    let mut buf = Vec::new();
    write_corpus(&mut buf, &entries).expect("writing to memory");
    Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect()
}

fn shuffled_colors(seq: &ColorSequence, seed: u64, index: usize) -> Vec<usize> {
    let mut pos = seq.color_positions();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::model::derive_seed(&[seed, index as u64]));
    pos.shuffle(&mut rng);
    pos
}

/// Top-10 predictions and truths when masking `m` random colors per eligible sequence.
fn collect_cases(p: &dyn Predictor, corpus: &[ColorSequence], m: usize, seed: u64) -> Result<(Vec<Vec<ColorCode>>, Vec<ColorCode>, usize)> {
    let (mut preds, mut truths, mut skipped) = (Vec::new(), Vec::new(), 0);
    for (i, seq) in corpus.iter().enumerate() {
        if seq.num_colors() < m {
            skipped += 1;
            continue;
        }
        let chosen = &shuffled_colors(seq, seed, i)[..m];
        let masked = mask_at(seq, chosen)?;
        let ranked = p.rank(&masked.input, &masked.positions(), *REPORT_NS.iter().max().expect("non-empty"))?;
        for (t, r) in masked.targets.iter().zip(ranked) {
            preds.push(r);
            truths.push(t.code);
        }
    }
    Ok((preds, truths, skipped))
}

/// Accuracy@1 when masking 1..=`max_masked` colors at once.
///
/// Only sequences with at least `max_masked` colors take part, so every row
/// scores the same sequences, and each sequence's masks are nested (the
/// positions masked at m are a subset of those at m + 1).
pub fn multi_mask_table(p: &dyn Predictor, corpus: &[ColorSequence], max_masked: usize, seed: u64) -> Result<Vec<MultiMaskRow>> {
    let eligible: Vec<(usize, &ColorSequence)> = corpus.iter().enumerate().filter(|(_, s)| s.num_colors() >= max_masked).collect();
    if eligible.is_empty() {
        return Err(Error::InvalidArgument(format!("no sequence has {max_masked} colors")));
    }
    (1..=max_masked)
        .map(|m| {
            let (mut hits, mut cases) = (0usize, 0usize);
            for &(i, seq) in &eligible {
                let chosen = &shuffled_colors(seq, seed, i)[..m];
                let masked = mask_at(seq, chosen)?;
                let ranked = p.rank(&masked.input, &masked.positions(), 1)?;
                for (t, r) in masked.targets.iter().zip(ranked) {
                    hits += usize::from(r.first() == Some(&t.code));
                    cases += 1;
                }
            }
            Ok(MultiMaskRow {
                masked: m,
                cases,
                accuracy_at_1: hits as f64 / cases as f64,
            })
        })
        .collect()
}

/// Masks `masked` random colors in every sequence that has enough and scores
/// the predictions; `table_max` adds the masked-count table when non-zero.
pub fn evaluate(p: &dyn Predictor, label: &str, corpus: &[ColorSequence], masked: usize, table_max: usize, seed: u64) -> Result<EvalReport> {
    if masked == 0 {
        return Err(Error::InvalidArgument("masked count must be at least 1".into()));
    }
    let (preds, truths, skipped) = collect_cases(p, corpus, masked, seed)?;
    if truths.is_empty() {
        return Err(Error::InvalidArgument(format!("no sequence has {masked} colors to mask")));
    }
    let cfg = p.vocab_config();
    let mut accuracy = Vec::new();
    let mut similarity = Vec::new();
    for n in REPORT_NS {
        accuracy.push(MetricAt { n, value: accuracy_at_n(&preds, &truths, n)? });
        similarity.push(MetricAt { n, value: similarity_at_n(&preds, &truths, n, cfg)? });
    }
    let report = EvalReport {
        label: label.to_string(),
        masked,
        cases: truths.len(),
        skipped,
        accuracy,
        similarity,
        multi_mask: if table_max > 0 { multi_mask_table(p, corpus, table_max, seed)? } else { Vec::new() },
        seed,
        corpus_sha256: corpus_sha256(corpus),
        model: None,
        runs: 1,
    };
    report.check_monotone()?;
    Ok(report)
}

/// [`evaluate`] for a checkpoint, recording its config.
pub fn evaluate_checkpoint(ck: &Checkpoint, label: &str, corpus: &[ColorSequence], masked: usize, table_max: usize, seed: u64) -> Result<EvalReport> {
    let mut r = evaluate(ck, label, corpus, masked, table_max, seed)?;
    r.model = Some(ck.config().clone());
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(s: &str) -> ColorCode {
        s.parse().unwrap()
    }

    #[test]
    fn accuracy_edges() {
        let t = vec![code("1_8_8"), code("2_8_8")];
        let hit = vec![vec![code("1_8_8"), code("3_8_8")], vec![code("2_8_8")]];
        for n in [1, 2, 5] {
            assert_eq!(accuracy_at_n(&hit, &t, n).unwrap(), 1.0);
        }
        let miss = vec![vec![code("3_8_8"); 5], vec![code("4_8_8"); 5]];
        assert_eq!(accuracy_at_n(&miss, &t, 5).unwrap(), 0.0);
        assert!(accuracy_at_n(&miss[..1], &t, 1).is_err());
        assert!(accuracy_at_n(&[], &[], 1).is_err());
    }

    #[test]
    fn similarity_fixture() {
        // centers are (8 + 16·i) scaled: L = s·100/255, a = b = s − 128
        let cfg = VocabConfig::default();
        let lab = |l: f64, a: f64, b: f64| crate::color::Lab::new(l * 100.0 / 255.0, a - 128.0, b - 128.0);
        let t = vec![code("8_8_8"), code("4_10_6"), code("12_3_8")];
        let p = vec![
            vec![code("8_8_8"), code("0_0_0")],
            vec![code("4_11_6"), code("5_10_6")],
            vec![code("12_8_8"), code("12_3_9")],
        ];
        let d = |x: crate::color::Lab, y: crate::color::Lab| ciede2000(x, y);
        let truth = [lab(136.0, 136.0, 136.0), lab(72.0, 168.0, 104.0), lab(200.0, 56.0, 136.0)];
        let first = [0.0, d(lab(72.0, 184.0, 104.0), truth[1]), d(lab(200.0, 136.0, 136.0), truth[2])];
        let second = [0.0, d(lab(88.0, 168.0, 104.0), truth[1]), d(lab(200.0, 56.0, 152.0), truth[2])];
        let at1 = first.iter().sum::<f64>() / 3.0;
        let at2 = first.iter().zip(&second).map(|(a, b)| a.min(*b)).sum::<f64>() / 3.0;
        assert!((similarity_at_n(&p, &t, 1, cfg).unwrap() - at1).abs() < 1e-9);
        assert!((similarity_at_n(&p, &t, 2, cfg).unwrap() - at2).abs() < 1e-9);
        assert!(at2 < at1);
    }

    proptest! {
        #[test]
        fn metrics_are_monotone(seed in 0u64..500) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = |rng: &mut ChaCha8Rng| ColorCode::new(rng.random_range(0..16), rng.random_range(0..16), rng.random_range(0..16));
            let truths: Vec<ColorCode> = (0..20).map(|_| c(&mut rng)).collect();
            let preds: Vec<Vec<ColorCode>> = (0..20).map(|_| (0..10).map(|_| c(&mut rng)).collect()).collect();
            let cfg = VocabConfig::default();
            for n in 1..10 {
                prop_assert!(accuracy_at_n(&preds, &truths, n).unwrap() <= accuracy_at_n(&preds, &truths, n + 1).unwrap());
                prop_assert!(similarity_at_n(&preds, &truths, n, cfg).unwrap() >= similarity_at_n(&preds, &truths, n + 1, cfg).unwrap());
            }
        }
    }

    #[test]
    fn report_helpers() {
        let m = |v: &[f64]| v.iter().zip(REPORT_NS).map(|(&value, n)| MetricAt { n, value }).collect::<Vec<_>>();
        let r = EvalReport {
            label: "x".into(),
            masked: 1,
            cases: 10,
            skipped: 0,
            accuracy: m(&[0.2, 0.3, 0.3, 0.4, 0.5, 0.9]),
            similarity: m(&[9.0, 8.0, 8.0, 7.0, 6.0, 1.0]),
            multi_mask: vec![MultiMaskRow { masked: 1, cases: 10, accuracy_at_1: 0.2 }],
            seed: 0,
            corpus_sha256: String::new(),
            model: None,
            runs: 1,
        };
        r.check_monotone().unwrap();
        let mut bad = r.clone();
        bad.accuracy[3].value = 0.1;
        assert!(bad.check_monotone().is_err());
        let mut other = r.clone();
        other.accuracy[0].value = 0.4;
        let mean = EvalReport::mean(&[r.clone(), other]).unwrap();
        assert!((mean.accuracy_at(1).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(mean.runs, 2);
        assert!(r.to_text().contains("accuracy@1") || r.to_text().contains("accuracy"));
    }
}
