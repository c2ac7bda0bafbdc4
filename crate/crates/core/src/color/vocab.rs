use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ciede2000, code_center, ColorCode, VocabConfig};
use crate::error::{Error, Result};
use crate::sequence::{ColorSequence, Token};

/// Reserved non-color tokens. Their ids precede every color id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecialToken {
    Pad = 0,
    Sep = 1,
    Mask = 2,
}

pub const NUM_SPECIAL_TOKENS: usize = 3;

/// Bijection between observed color codes and integer token ids.
///
/// Ids `0..3` are `PAD`, `SEP`, `MASK`; color ids follow in ascending code order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    config: VocabConfig,
    codes: Vec<ColorCode>,
    counts: Vec<u64>,
    index: HashMap<ColorCode, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    bins_per_axis: u8,
    codes: Vec<ColorCode>,
    #[serde(default)]
    counts: Vec<u64>,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(f: VocabularyFile) -> Result<Self> {
        let config = VocabConfig::new(f.bins_per_axis)?;
        let counts = if f.counts.is_empty() {
            vec![1; f.codes.len()]
        } else {
            f.counts
        };
        if counts.len() != f.codes.len() {
            return Err(Error::InvalidArgument("vocabulary counts and codes differ in length".into()));
        }
        let mut tally = BTreeMap::new();
        for (code, n) in f.codes.into_iter().zip(counts) {
            *tally.entry(code).or_insert(0) += n;
        }
        Self::from_counts(tally, config)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        Self {
            bins_per_axis: v.config.bins_per_axis,
            codes: v.codes,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    /// Builds the vocabulary of codes observed in `corpus`.
    pub fn build(corpus: &[ColorSequence], config: VocabConfig) -> Result<Self> {
        let mut tally = BTreeMap::new();
        for seq in corpus {
            for token in seq.tokens() {
                if let Token::Color(code) = token {
                    *tally.entry(*code).or_insert(0u64) += 1;
                }
            }
        }
        Self::from_counts(tally, config)
    }

    pub fn from_codes(codes: impl IntoIterator<Item = ColorCode>, config: VocabConfig) -> Result<Self> {
        let mut tally = BTreeMap::new();
        for code in codes {
            *tally.entry(code).or_insert(0u64) += 1;
        }
        Self::from_counts(tally, config)
    }

    pub fn from_counts(tally: BTreeMap<ColorCode, u64>, config: VocabConfig) -> Result<Self> {
        if tally.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(bad) = tally.keys().find(|c| !c.is_valid(config)) {
            return Err(Error::InvalidCode(bad.to_string()));
        }
        let codes: Vec<ColorCode> = tally.keys().copied().collect();
        let counts = tally.values().copied().collect();
        let index = codes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Ok(Self {
            config,
            codes,
            counts,
            index,
        })
    }

    pub fn config(&self) -> VocabConfig {
        self.config
    }

    /// Total token count, specials included.
    pub fn len(&self) -> usize {
        self.codes.len() + NUM_SPECIAL_TOKENS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_colors(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[ColorCode] {
        &self.codes
    }

    /// Occurrence count of each color (aligned with [`Self::codes`]).
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn contains(&self, code: ColorCode) -> bool {
        self.index.contains_key(&code)
    }

    /// Position of `code` among colors (0-based, excludes specials).
    pub fn color_index(&self, code: ColorCode) -> Option<usize> {
        self.index.get(&code).copied()
    }

    pub fn token_id(&self, token: &Token) -> Option<u32> {
        match token {
            Token::Pad => Some(SpecialToken::Pad as u32),
            Token::Sep => Some(SpecialToken::Sep as u32),
            Token::Mask => Some(SpecialToken::Mask as u32),
            Token::Color(c) => self.color_index(*c).map(|i| (i + NUM_SPECIAL_TOKENS) as u32),
        }
    }

    pub fn token(&self, id: u32) -> Option<Token> {
        match id as usize {
            0 => Some(Token::Pad),
            1 => Some(Token::Sep),
            2 => Some(Token::Mask),
            i => self.codes.get(i - NUM_SPECIAL_TOKENS).map(|c| Token::Color(*c)),
        }
    }

    /// The code itself when known, otherwise the known code whose bin center is
    /// closest by CIEDE2000 (ties go to the smaller code).
    pub fn nearest(&self, code: ColorCode) -> ColorCode {
        if self.contains(code) {
            return code;
        }
        let Ok(target) = code_center(code, self.config) else {
            return self.codes[0];
        };
        let mut best = (f64::INFINITY, self.codes[0]);
        for &c in &self.codes {
            let center = code_center(c, self.config).expect("vocabulary codes are valid");
            let d = ciede2000(target, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }
}
