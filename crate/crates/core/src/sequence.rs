//! Fixed-layout token sequences built from multi-palettes, plus masking.
//!
//! Layout: three palettes (image, svg, text), each with five color slots
//! followed by a separator, 18 tokens in total:
//!
//! ```text
//! pos  0..5   image colors / PAD    seg 1
//! pos  5      SEP                   seg 1
//! pos  6..11  svg colors / PAD      seg 2
//! pos 11      SEP                   seg 2
//! pos 12..17  text colors / PAD     seg 3
//! pos 17      SEP                   seg 3
//! ```
//!
//! PAD and SEP carry the segment id of the palette they belong to.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::color::{quantize, ColorCode, VocabConfig, Vocabulary};
use crate::document::Group;
use crate::error::{Error, Result};
use crate::palette::MultiPalette;

pub const SLOTS_PER_PALETTE: usize = 5;
pub const NUM_PALETTES: usize = 3;
pub const SEQ_LEN: usize = NUM_PALETTES * (SLOTS_PER_PALETTE + 1);
pub const SEP_POSITIONS: [usize; 3] = [5, 11, 17];

/// Segment id (1, 2 or 3) for every position.
pub const SEGMENTS: [u8; SEQ_LEN] = {
    let mut s = [0u8; SEQ_LEN];
    let mut i = 0;
    while i < SEQ_LEN {
        s[i] = (i / (SLOTS_PER_PALETTE + 1)) as u8 + 1;
        i += 1;
    }
    s
};

/// Sequence position of a palette slot.
pub fn slot_position(group: Group, slot: usize) -> usize {
    group.index() * (SLOTS_PER_PALETTE + 1) + slot
}

/// Palette group and slot of a color position (None for SEP positions).
pub fn position_slot(pos: usize) -> Option<(Group, usize)> {
    if pos >= SEQ_LEN {
        return None;
    }
    let slot = pos % (SLOTS_PER_PALETTE + 1);
    if slot == SLOTS_PER_PALETTE {
        return None;
    }
    Some((Group::ALL[pos / (SLOTS_PER_PALETTE + 1)], slot))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Color(ColorCode),
    Pad,
    Sep,
    Mask,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Color(c) => c.fmt(f),
            Token::Pad => f.write_str("PAD"),
            Token::Sep => f.write_str("SEP"),
            Token::Mask => f.write_str("MASK"),
        }
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "PAD" | "[PAD]" => Token::Pad,
            "SEP" | "[SEP]" => Token::Sep,
            "MASK" | "[MASK]" => Token::Mask,
            code => Token::Color(code.parse()?),
        })
    }
}

/// A tokenized multi-palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColorSequence {
    tokens: [Token; SEQ_LEN],
}

impl ColorSequence {
    /// Validates the layout: SEP exactly at separator positions, and within a
    /// palette no color or MASK after the first PAD.
    pub fn new(tokens: [Token; SEQ_LEN]) -> Result<Self> {
        for (p, chunk) in tokens.chunks(SLOTS_PER_PALETTE + 1).enumerate() {
            if chunk[SLOTS_PER_PALETTE] != Token::Sep {
                return Err(Error::Sequence(format!("position {} must be SEP", SEP_POSITIONS[p])));
            }
            let mut padded = false;
            for (slot, t) in chunk[..SLOTS_PER_PALETTE].iter().enumerate() {
                match t {
                    Token::Sep => {
                        return Err(Error::Sequence(format!("unexpected SEP at position {}", p * 6 + slot)))
                    }
                    Token::Pad => padded = true,
                    _ if padded => {
                        return Err(Error::Sequence(format!("color after PAD at position {}", p * 6 + slot)))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { tokens })
    }

    /// Builds a sequence from per-palette code lists (at most five each).
    pub fn from_codes(palettes: &[Vec<ColorCode>; NUM_PALETTES]) -> Result<Self> {
        let mut tokens = [Token::Pad; SEQ_LEN];
        for (p, codes) in palettes.iter().enumerate() {
            if codes.len() > SLOTS_PER_PALETTE {
                return Err(Error::Sequence(format!(
                    "palette {} has {} colors, at most {SLOTS_PER_PALETTE} allowed",
                    p + 1,
                    codes.len()
                )));
            }
            let base = p * (SLOTS_PER_PALETTE + 1);
            for (i, c) in codes.iter().enumerate() {
                tokens[base + i] = Token::Color(*c);
            }
            tokens[base + SLOTS_PER_PALETTE] = Token::Sep;
        }
        Self::new(tokens)
    }

    /// Quantizes each palette color (weight order is kept).
    pub fn from_multi_palette(mp: &MultiPalette, cfg: VocabConfig) -> Self {
        let codes = mp.groups().map(|p| p.colors.iter().take(SLOTS_PER_PALETTE).map(|c| quantize(*c, cfg)).collect());
        Self::from_codes(&codes).expect("palettes hold at most five colors")
    }

    pub fn tokens(&self) -> &[Token; SEQ_LEN] {
        &self.tokens
    }

    pub fn token(&self, pos: usize) -> Token {
        self.tokens[pos]
    }

    pub fn segments(&self) -> &'static [u8; SEQ_LEN] {
        &SEGMENTS
    }

    pub fn positions(&self) -> [u8; SEQ_LEN] {
        std::array::from_fn(|i| i as u8)
    }

    /// Positions holding a color token.
    pub fn color_positions(&self) -> Vec<usize> {
        (0..SEQ_LEN).filter(|&i| matches!(self.tokens[i], Token::Color(_))).collect()
    }

    pub fn num_colors(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, Token::Color(_))).count()
    }

    /// Code-level palettes (MASK slots are skipped).
    pub fn decode(&self) -> [Vec<ColorCode>; NUM_PALETTES] {
        std::array::from_fn(|p| {
            self.tokens[p * 6..p * 6 + SLOTS_PER_PALETTE]
                .iter()
                .filter_map(|t| match t {
                    Token::Color(c) => Some(*c),
                    _ => None,
                })
                .collect()
        })
    }

    /// Replaces colors unknown to `vocab` with their nearest known code.
    pub fn snap_to(&self, vocab: &Vocabulary) -> Self {
        let mut tokens = self.tokens;
        for t in tokens.iter_mut() {
            if let Token::Color(c) = t {
                *c = vocab.nearest(*c);
            }
        }
        Self { tokens }
    }

    pub fn with_token(&self, pos: usize, token: Token) -> Self {
        let mut tokens = self.tokens;
        tokens[pos] = token;
        Self { tokens }
    }
}

/// Tokenizes a multi-palette against a vocabulary, snapping unseen codes.
pub fn encode_multi_palette(mp: &MultiPalette, vocab: &Vocabulary) -> ColorSequence {
    ColorSequence::from_multi_palette(mp, vocab.config()).snap_to(vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskTarget {
    pub position: usize,
    pub code: ColorCode,
}

/// Model input with some color positions corrupted and the original codes kept as targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub input: ColorSequence,
    pub targets: Vec<MaskTarget>,
}

impl MaskedSequence {
    pub fn positions(&self) -> Vec<usize> {
        self.targets.iter().map(|t| t.position).collect()
    }
}

/// Training-time corruption policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    /// Fraction of color tokens selected per sequence (at least one).
    pub rate: f64,
    /// Of the selected tokens: share replaced by MASK.
    pub mask_prob: f64,
    /// Of the selected tokens: share replaced by a random vocabulary color.
    /// The rest stays unchanged.
    pub random_prob: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            rate: 0.10,
            mask_prob: 0.8,
            random_prob: 0.1,
        }
    }
}

impl MaskingPolicy {
    pub fn selection_count(&self, num_colors: usize) -> usize {
        ((self.rate * num_colors as f64).round() as usize).clamp(1, num_colors)
    }
}

/// Selects `max(1, round(rate * colors))` color positions and corrupts them.
pub fn apply_masking<R: Rng + ?Sized>(
    seq: &ColorSequence,
    policy: &MaskingPolicy,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<MaskedSequence> {
    let mut candidates = seq.color_positions();
    if candidates.is_empty() {
        return Err(Error::Masking("sequence has no color tokens".into()));
    }
    let count = policy.selection_count(candidates.len());
    // partial Fisher-Yates
    for i in 0..count {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
    }
    let mut selected = candidates[..count].to_vec();
    selected.sort_unstable();

    let mut input = *seq;
    let mut targets = Vec::with_capacity(count);
    for pos in selected {
        let Token::Color(code) = seq.token(pos) else { unreachable!() };
        targets.push(MaskTarget { position: pos, code });
        let u: f64 = rng.random();
        if u < policy.mask_prob {
            input = input.with_token(pos, Token::Mask);
        } else if u < policy.mask_prob + policy.random_prob {
            let random = vocab.codes()[rng.random_range(0..vocab.num_colors())];
            input = input.with_token(pos, Token::Color(random));
        }
    }
    Ok(MaskedSequence { input, targets })
}

/// Puts MASK exactly at `positions`, which must hold color tokens.
pub fn mask_at(seq: &ColorSequence, positions: &[usize]) -> Result<MaskedSequence> {
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != positions.len() {
        return Err(Error::Masking("duplicate mask position".into()));
    }
    let mut input = *seq;
    let mut targets = Vec::with_capacity(sorted.len());
    for pos in sorted {
        if pos >= SEQ_LEN {
            return Err(Error::Masking(format!("position {pos} out of range")));
        }
        match seq.token(pos) {
            Token::Color(code) => {
                targets.push(MaskTarget { position: pos, code });
                input = input.with_token(pos, Token::Mask);
            }
            other => return Err(Error::Masking(format!("position {pos} holds {other}, not a color"))),
        }
    }
    Ok(MaskedSequence { input, targets })
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub tokens: Vec<String>,
    pub segments: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl SequenceRecord {
    pub fn from_sequence(seq: &ColorSequence, tag: Option<&str>) -> Self {
        Self {
            tokens: seq.tokens().iter().map(|t| t.to_string()).collect(),
            segments: SEGMENTS.to_vec(),
            tag: tag.map(str::to_string),
        }
    }

    pub fn to_sequence(&self) -> Result<ColorSequence> {
        if self.tokens.len() != SEQ_LEN {
            return Err(Error::Sequence(format!("expected {SEQ_LEN} tokens, got {}", self.tokens.len())));
        }
        if self.segments.as_slice() != SEGMENTS.as_slice() {
            return Err(Error::Sequence("segment ids do not match the fixed layout".into()));
        }
        let mut tokens = [Token::Pad; SEQ_LEN];
        for (t, s) in tokens.iter_mut().zip(&self.tokens) {
            *t = s.parse()?;
        }
        ColorSequence::new(tokens)
    }
}

/// A corpus entry: a sequence and an optional tag naming the generator rule it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub sequence: ColorSequence,
    pub tag: Option<String>,
}

pub fn write_corpus<W: Write>(mut w: W, entries: &[CorpusEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, &SequenceRecord::from_sequence(&e.sequence, e.tag.as_deref()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<CorpusEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SequenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        let sequence = record.to_sequence().map_err(|e| Error::Parse {
            path: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        out.push(CorpusEntry { sequence, tag: record.tag });
    }
    Ok(out)
}
