//! Document in, ranked replacement colors out.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::color::{code_center, display_color, lab_to_srgb, ColorCode, Rgb};
use crate::document::{GraphicDocument, Group};
use crate::error::{Error, Result};
use crate::model::{rank, Checkpoint};
use crate::palette::{extract_multi_palette, MultiPalette};
use crate::sequence::{slot_position, ColorSequence, Token, SLOTS_PER_PALETTE};

/// A palette slot, written `group:index` (e.g. `svg:0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotRef {
    pub group: Group,
    pub slot: usize,
}

impl SlotRef {
    pub fn new(group: Group, slot: usize) -> Self {
        Self { group, slot }
    }

    pub fn position(&self) -> usize {
        slot_position(self.group, self.slot)
    }

    /// Checks the slot holds a color of `mp`.
    pub fn validate(&self, mp: &MultiPalette) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSlot { slot: self.to_string(), reason };
        if self.slot >= SLOTS_PER_PALETTE {
            return Err(invalid(format!("index must be below {SLOTS_PER_PALETTE}")));
        }
        let n = mp.get(self.group).len();
        if n == 0 {
            return Err(invalid(format!("the {} group has no colors", self.group)));
        }
        if self.slot >= n {
            return Err(invalid(format!("slot is PAD (the {} palette has {n} colors)", self.group)));
        }
        Ok(())
    }
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.group, self.slot)
    }
}

impl FromStr for SlotRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSlot {
            slot: s.to_string(),
            reason: "expected group:index, e.g. svg:0".into(),
        };
        let (g, i) = s.split_once(':').ok_or_else(bad)?;
        let slot = i.parse().map_err(|_| bad())?;
        Ok(Self { group: g.parse().map_err(|_| bad())?, slot })
    }
}

impl Serialize for SlotRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub code: ColorCode,
    #[serde(rename = "hex")]
    pub display: Rgb,
    pub probability: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub slot: SlotRef,
    /// Code currently in the slot (not snapped to the vocabulary).
    pub current: ColorCode,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecommendMode {
    /// Mask every requested slot and predict them in one pass.
    #[default]
    Simultaneous,
    /// Predict slots in order, committing each top choice before the next.
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendOptions {
    pub n: usize,
    pub mode: RecommendMode,
    /// Down-weights common colors: probabilities are multiplied by
    /// `(count / max_count)^-penalty` and renormalized. 0 disables it.
    pub frequency_penalty: f64,
    /// Codes never offered.
    pub exclude: BTreeSet<ColorCode>,
    /// Seed for palette extraction.
    pub palette_seed: u64,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        Self {
            n: 3,
            mode: RecommendMode::Simultaneous,
            frequency_penalty: 0.0,
            exclude: BTreeSet::new(),
            palette_seed: 0,
        }
    }
}

/// Color shown for a code; falls back to the clamped bin center for codes no
/// sRGB color reaches.
pub fn code_display(code: ColorCode, ck: &Checkpoint) -> Result<Rgb> {
    let cfg = ck.vocab().config();
    Ok(match display_color(code, cfg)? {
        Some(rgb) => rgb,
        None => lab_to_srgb(code_center(code, cfg)?),
    })
}

fn adjust(probs: &mut [f64], ck: &Checkpoint, penalty: f64) {
    if penalty == 0.0 {
        return;
    }
    let counts = ck.vocab().counts();
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    for (p, &c) in probs.iter_mut().zip(counts) {
        *p *= (c.max(1) as f64 / max).powf(-penalty);
    }
    let z: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= z;
    }
}

/// Ranked candidates for each slot of an already extracted document.
pub fn recommend_for_sequence(seq: &ColorSequence, slots: &[SlotRef], opts: &RecommendOptions, ck: &Checkpoint) -> Result<Vec<Recommendation>> {
    if slots.is_empty() {
        return Err(Error::InvalidArgument("no slots requested".into()));
    }
    if opts.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(opts.frequency_penalty.is_finite() && opts.frequency_penalty >= 0.0) {
        return Err(Error::InvalidArgument("frequency_penalty must be finite and non-negative".into()));
    }
    let unique: BTreeSet<_> = slots.iter().collect();
    if unique.len() != slots.len() {
        return Err(Error::InvalidArgument("duplicate slot".into()));
    }
    let vocab = ck.vocab();
    let excluded: Vec<bool> = vocab.codes().iter().map(|c| opts.exclude.contains(c)).collect();
    if excluded.iter().all(|&e| e) {
        return Err(Error::InvalidArgument("exclusions cover every color in the vocabulary".into()));
    }
    let positions: Vec<usize> = slots.iter().map(|s| s.position()).collect();
    let current: Vec<ColorCode> = positions
        .iter()
        .zip(slots)
        .map(|(&p, s)| match seq.token(p) {
            Token::Color(c) => Ok(c),
            _ => Err(Error::InvalidSlot {
                slot: s.to_string(),
                reason: "slot is PAD".into(),
            }),
        })
        .collect::<Result<_>>()?;

    let dists: Vec<Vec<f64>> = match opts.mode {
        RecommendMode::Simultaneous => ck.distributions(seq, &positions)?,
        RecommendMode::Iterative => {
            let mut work = *seq;
            for &p in &positions {
                work = work.with_token(p, Token::Mask);
            }
            let mut out = Vec::with_capacity(positions.len());
            for &p in &positions {
                let mut d = ck.distributions(&work, &[p])?.remove(0);
                adjust(&mut d, ck, opts.frequency_penalty);
                let (top, _) = rank(&d, 1, |i| excluded[i])[0];
                work = work.with_token(p, Token::Color(vocab.codes()[top]));
                out.push(d);
            }
            out
        }
    };
    slots
        .iter()
        .zip(current)
        .zip(dists)
        .map(|((slot, current), mut probs)| {
            if opts.mode == RecommendMode::Simultaneous {
                adjust(&mut probs, ck, opts.frequency_penalty);
            }
            let candidates = rank(&probs, opts.n, |i| excluded[i])
                .into_iter()
                .enumerate()
                .map(|(r, (i, p))| {
                    let code = vocab.codes()[i];
                    Ok(Candidate {
                        code,
                        display: code_display(code, ck)?,
                        probability: p,
                        rank: r + 1,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Recommendation {
                slot: *slot,
                current,
                candidates,
            })
        })
        .collect()
}

/// Extracts the document's palettes and recommends colors for `slots`.
pub fn recommend(doc: &GraphicDocument, slots: &[SlotRef], opts: &RecommendOptions, ck: &Checkpoint) -> Result<Vec<Recommendation>> {
    let mp = extract_multi_palette(doc, opts.palette_seed)?;
    for s in slots {
        s.validate(&mp)?;
    }
    // unsnapped, so `current` is the slot's own code; the model snaps internally
    recommend_for_sequence(&ColorSequence::from_multi_palette(&mp, ck.vocab().config()), slots, opts, ck)
}

/// Top `n` for one slot, skipping `exclude`.
pub fn recommend_excluding(doc: &GraphicDocument, slot: SlotRef, n: usize, exclude: &BTreeSet<ColorCode>, ck: &Checkpoint) -> Result<Recommendation> {
    let opts = RecommendOptions {
        n,
        exclude: exclude.clone(),
        ..RecommendOptions::default()
    };
    Ok(recommend(doc, &[slot], &opts, ck)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_strings() {
        let s: SlotRef = "svg:2".parse().unwrap();
        assert_eq!(s, SlotRef::new(Group::Svg, 2));
        assert_eq!(s.to_string(), "svg:2");
        assert_eq!(s.position(), 8);
        assert_eq!(serde_json::to_string(&s).unwrap(), "\"svg:2\"");
        for bad in ["svg", "svg:x", "video:0", ":1", "svg:-1"] {
            assert!(bad.parse::<SlotRef>().is_err(), "{bad}");
        }
    }

    #[test]
    fn slot_validation() {
        let mut mp = MultiPalette::default();
        mp.svg.colors = vec![crate::color::Lab::default(); 2];
        mp.svg.weights = vec![0.5; 2];
        assert!(SlotRef::new(Group::Svg, 1).validate(&mp).is_ok());
        assert!(matches!(SlotRef::new(Group::Svg, 2).validate(&mp), Err(Error::InvalidSlot { reason, .. }) if reason.contains("PAD")));
        assert!(matches!(SlotRef::new(Group::Text, 0).validate(&mp), Err(Error::InvalidSlot { reason, .. }) if reason.contains("no colors")));
        assert!(SlotRef::new(Group::Svg, 5).validate(&mp).is_err());
    }
}
