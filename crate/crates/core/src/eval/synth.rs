//! Planted-rule corpus standing in for real design templates.
//!
//! Two document families are generated:
//!
//! * theme documents: an image theme `A` fixes the three image colors, an svg
//!   theme `B` fixes the background and up to two shape colors, the text color
//!   is `T[(A + B) mod K]` and an optional second text color is `U[A]`. Any
//!   single masked color is determined by the rest.
//! * segment documents: one color per palette from a seven-color family `P`,
//!   with image `P[a]`, svg `P[b]` and text `P[(a - b) mod 7]`. The visible
//!   colors alone (as a bag) leave the answer ambiguous; knowing which palette
//!   each color and the mask sit in resolves it.
//!
//! Documents go through the real palette extractor; the generator checks that
//! every extracted sequence is exactly the planted one.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{ciede2000, code_center, display_color, quantize, srgb_to_lab, ColorCode, Rgb, VocabConfig};
use crate::document::{Element, ElementKind, GraphicDocument, RasterImage};
use crate::error::{Error, Result};
use crate::palette::extract_multi_palette;
use crate::sequence::{ColorSequence, CorpusEntry};

pub const THEME_TAG: &str = "theme";
pub const SEGMENT_TAG: &str = "segment";

const FAMILY_SIZE: usize = 7;
const CANVAS: u32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub rule_seed: u64,
    /// Share of segment documents.
    pub segment_fraction: f64,
    pub image_themes: usize,
    pub svg_themes: usize,
    /// K, the number of text colors.
    pub text_colors: usize,
    pub families: usize,
}

impl SynthConfig {
    pub fn new(n_docs: usize, rule_seed: u64) -> Self {
        Self {
            n_docs,
            rule_seed,
            segment_fraction: 0.3,
            image_themes: 6,
            svg_themes: 6,
            text_colors: 6,
            families: 1,
        }
    }

    fn colors_needed(&self) -> usize {
        3 * self.image_themes + 3 * self.svg_themes + self.text_colors + self.image_themes + FAMILY_SIZE * self.families
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Theme,
    Segment,
}

impl SynthKind {
    pub fn tag(self) -> &'static str {
        match self {
            SynthKind::Theme => THEME_TAG,
            SynthKind::Segment => SEGMENT_TAG,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDoc {
    pub document: GraphicDocument,
    pub kind: SynthKind,
    /// Planted image, svg and text codes in palette order.
    pub palettes: [Vec<ColorCode>; 3],
}

/// Exact top-1 ceilings on segment documents with one masked color, uniform
/// over family, `(a, b)` and masked palette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesAnalysis {
    pub cases: usize,
    /// Predictor that knows each token's palette.
    pub with_segments: f64,
    /// Predictor that only sees the bag of visible colors.
    pub without_segments: f64,
}

/// The drawn rules; written next to the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub config: SynthConfig,
    pub image_themes: Vec<[ColorCode; 3]>,
    pub svg_themes: Vec<[ColorCode; 3]>,
    pub text_colors: Vec<ColorCode>,
    pub accent_colors: Vec<ColorCode>,
    pub families: Vec<Vec<ColorCode>>,
    /// Smallest CIEDE2000 between the bin centers of any two rule colors.
    pub min_delta_e: f64,
    pub bayes: BayesAnalysis,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<CorpusEntry>,
    pub val: Vec<CorpusEntry>,
    pub test: Vec<CorpusEntry>,
    pub spec: SynthSpec,
}

impl SynthCorpus {
    pub fn sequences(entries: &[CorpusEntry]) -> Vec<ColorSequence> {
        entries.iter().map(|e| e.sequence).collect()
    }

    pub fn tagged(entries: &[CorpusEntry], tag: &str) -> Vec<ColorSequence> {
        entries.iter().filter(|e| e.tag.as_deref() == Some(tag)).map(|e| e.sequence).collect()
    }
}

/// `n` in-gamut codes whose bin centers are pairwise at least `min_delta`
/// apart (CIEDE2000), shrinking the spacing until enough fit.
fn pick_codes(n: usize, rng: &mut ChaCha8Rng, cfg: VocabConfig) -> Result<(Vec<(ColorCode, Rgb)>, f64)> {
    let mut reachable = BTreeSet::new();
    for r in (0..=255u16).step_by(15) {
        for g in (0..=255u16).step_by(15) {
            for b in (0..=255u16).step_by(15) {
                reachable.insert(quantize(srgb_to_lab(Rgb::new(r as u8, g as u8, b as u8)), cfg));
            }
        }
    }
    let mut pool: Vec<(ColorCode, Rgb)> = Vec::new();
    for code in reachable {
        if let Some(rgb) = display_color(code, cfg)? {
            pool.push((code, rgb));
        }
    }
    pool.shuffle(rng);
    let centers: Vec<_> = pool.iter().map(|(c, _)| code_center(*c, cfg)).collect::<Result<_>>()?;
    let mut min_delta = 20.0;
    while min_delta >= 1.0 {
        let mut chosen: Vec<usize> = Vec::with_capacity(n);
        for i in 0..pool.len() {
            if chosen.iter().all(|&j| ciede2000(centers[i], centers[j]) >= min_delta) {
                chosen.push(i);
                if chosen.len() == n {
                    let spacing = chosen
                        .iter()
                        .flat_map(|&i| chosen.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
                        .map(|(i, j)| ciede2000(centers[i], centers[j]))
                        .fold(f64::INFINITY, f64::min);
                    return Ok((chosen.into_iter().map(|i| pool[i]).collect(), spacing));
                }
            }
        }
        min_delta -= 1.0;
    }
    Err(Error::InvalidArgument(format!("cannot find {n} distinct colors")))
}

struct Rules {
    spec: SynthSpec,
    rgb: BTreeMap<ColorCode, Rgb>,
}

fn draw_rules(cfg: &SynthConfig) -> Result<Rules> {
    let vcfg = VocabConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rule_seed);
    let (picked, min_delta_e) = pick_codes(cfg.colors_needed(), &mut rng, vcfg)?;
    let rgb = picked.iter().copied().collect();
    let mut it = picked.into_iter().map(|(c, _)| c);
    let mut take = |n: usize| -> Vec<ColorCode> { it.by_ref().take(n).collect() };
    let triple = |v: Vec<ColorCode>| -> Vec<[ColorCode; 3]> { v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect() };
    let image_themes = triple(take(3 * cfg.image_themes));
    let svg_themes = triple(take(3 * cfg.svg_themes));
    let text_colors = take(cfg.text_colors);
    let accent_colors = take(cfg.image_themes);
    let families = take(FAMILY_SIZE * cfg.families).chunks(FAMILY_SIZE).map(|c| c.to_vec()).collect();
    let mut spec = SynthSpec {
        config: cfg.clone(),
        image_themes,
        svg_themes,
        text_colors,
        accent_colors,
        families,
        min_delta_e,
        bayes: BayesAnalysis {
            cases: 0,
            with_segments: 0.0,
            without_segments: 0.0,
        },
    };
    spec.bayes = bayes_analysis(&spec);
    Ok(Rules { spec, rgb })
}

/// Counts, for each observable view, how often each answer occurs; the Bayes
/// predictor picks the most frequent answer per view.
fn bayes_analysis(spec: &SynthSpec) -> BayesAnalysis {
    let mut seg: BTreeMap<(usize, Vec<(usize, ColorCode)>), BTreeMap<ColorCode, usize>> = BTreeMap::new();
    let mut bag: BTreeMap<Vec<ColorCode>, BTreeMap<ColorCode, usize>> = BTreeMap::new();
    let mut cases = 0;
    for fam in &spec.families {
        for a in 0..FAMILY_SIZE {
            for b in 0..FAMILY_SIZE {
                let palettes = [fam[a], fam[b], fam[(a + FAMILY_SIZE - b) % FAMILY_SIZE]];
                for masked in 0..3 {
                    let visible: Vec<(usize, ColorCode)> = (0..3).filter(|&p| p != masked).map(|p| (p, palettes[p])).collect();
                    let mut colors: Vec<ColorCode> = visible.iter().map(|v| v.1).collect();
                    colors.sort();
                    *seg.entry((masked, visible)).or_default().entry(palettes[masked]).or_default() += 1;
                    *bag.entry(colors).or_default().entry(palettes[masked]).or_default() += 1;
                    cases += 1;
                }
            }
        }
    }
    let best = |counts: &BTreeMap<ColorCode, usize>| counts.values().copied().max().unwrap_or(0);
    let with: usize = seg.values().map(best).sum();
    let without: usize = bag.values().map(best).sum();
    BayesAnalysis {
        cases,
        with_segments: with as f64 / cases.max(1) as f64,
        without_segments: without as f64 / cases.max(1) as f64,
    }
}

fn element(id: String, kind: ElementKind, x: f64, y: f64, w: f64, h: f64, colors: Vec<Rgb>, raster: Option<RasterImage>) -> Element {
    Element {
        id,
        kind,
        x,
        y,
        w,
        h,
        opacity: 1.0,
        colors,
        raster,
    }
}

/// Raster of horizontal bands; `rows[i]` rows of `colors[i]`.
fn banded(width: u32, colors: &[Rgb], rows: &[u32]) -> Result<RasterImage> {
    let mut px = Vec::new();
    for (c, &n) in colors.iter().zip(rows) {
        px.extend(std::iter::repeat_n(*c, (width * n) as usize));
    }
    RasterImage::new(width, rows.iter().sum(), px)
}

fn theme_doc(r: &Rules, rng: &mut ChaCha8Rng) -> Result<SynthDoc> {
    let s = &r.spec;
    let c = |code: ColorCode| r.rgb[&code];
    let a = rng.random_range(0..s.image_themes.len());
    let b = rng.random_range(0..s.svg_themes.len());
    let has_third_shape = rng.random_bool(0.5);
    let has_accent = rng.random_bool(0.5);
    let img = s.image_themes[a];
    let svg = s.svg_themes[b];
    let text = s.text_colors[(a + b) % s.text_colors.len()];
    let accent = s.accent_colors[a];

    let raster = banded(20, &[c(img[0]), c(img[1]), c(img[2])], &[5, 3, 2])?;
    let mut elements = vec![
        element("background".into(), ElementKind::ColoredBackground, 0.0, 0.0, 40.0, 40.0, vec![c(svg[0])], None),
        element("photo".into(), ElementKind::Image, 0.0, 0.0, 20.0, 10.0, vec![], Some(raster)),
        element("shape-1".into(), ElementKind::Svg, 20.0, 20.0, 20.0, 20.0, vec![c(svg[1])], None),
    ];
    let mut svg_codes = vec![svg[0], svg[1]];
    if has_third_shape {
        elements.push(element("shape-2".into(), ElementKind::Svg, 0.0, 20.0, 10.0, 20.0, vec![c(svg[2])], None));
        svg_codes.push(svg[2]);
    }
    elements.push(element("headline".into(), ElementKind::Text, 2.0, 12.0, 30.0, 5.0, vec![c(text)], None));
    let mut text_codes = vec![text];
    if has_accent {
        elements.push(element("caption".into(), ElementKind::Text, 2.0, 32.0, 20.0, 4.0, vec![c(accent)], None));
        text_codes.push(accent);
        // equal weights: palette order falls back to LAB order
        text_codes.sort_by(|x, y| {
            let (lx, ly) = (srgb_to_lab(c(*x)), srgb_to_lab(c(*y)));
            lx.l.total_cmp(&ly.l).then(lx.a.total_cmp(&ly.a)).then(lx.b.total_cmp(&ly.b))
        });
    }
    Ok(SynthDoc {
        document: GraphicDocument {
            width: CANVAS,
            height: CANVAS,
            elements,
        },
        kind: SynthKind::Theme,
        palettes: [img.to_vec(), svg_codes, text_codes],
    })
}

fn segment_doc(r: &Rules, rng: &mut ChaCha8Rng) -> Result<SynthDoc> {
    let s = &r.spec;
    let c = |code: ColorCode| r.rgb[&code];
    let fam = &s.families[rng.random_range(0..s.families.len())];
    let a = rng.random_range(0..FAMILY_SIZE);
    let b = rng.random_range(0..FAMILY_SIZE);
    let (img, svg, text) = (fam[a], fam[b], fam[(a + FAMILY_SIZE - b) % FAMILY_SIZE]);
    let elements = vec![
        element("background".into(), ElementKind::ColoredBackground, 0.0, 0.0, 40.0, 40.0, vec![c(svg)], None),
        element("photo".into(), ElementKind::Image, 5.0, 5.0, 10.0, 10.0, vec![], Some(RasterImage::solid(10, 10, c(img))?)),
        element("headline".into(), ElementKind::Text, 2.0, 30.0, 30.0, 5.0, vec![c(text)], None),
    ];
    Ok(SynthDoc {
        document: GraphicDocument {
            width: CANVAS,
            height: CANVAS,
            elements,
        },
        kind: SynthKind::Segment,
        palettes: [vec![img], vec![svg], vec![text]],
    })
}

/// Documents and the rules they were drawn from; deterministic in `rule_seed`.
pub fn synth_documents(cfg: &SynthConfig) -> Result<(Vec<SynthDoc>, SynthSpec)> {
    if cfg.n_docs < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 documents, got {}", cfg.n_docs)));
    }
    if cfg.image_themes == 0 || cfg.svg_themes == 0 || cfg.text_colors == 0 || cfg.families == 0 {
        return Err(Error::InvalidArgument("theme, text color and family counts must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.segment_fraction) {
        return Err(Error::InvalidArgument(format!("segment_fraction {} outside [0, 1]", cfg.segment_fraction)));
    }
    let rules = draw_rules(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rule_seed ^ 0x5EED_D0C5);
    let docs = (0..cfg.n_docs)
        .map(|_| {
            if rng.random_bool(cfg.segment_fraction) {
                segment_doc(&rules, &mut rng)
            } else {
                theme_doc(&rules, &mut rng)
            }
        })
        .collect::<Result<_>>()?;
    Ok((docs, rules.spec))
}

/// Generates documents, extracts their palettes and splits the sequences 80/10/10.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let (docs, spec) = synth_documents(cfg)?;
    let vcfg = VocabConfig::default();
    let mut entries = Vec::with_capacity(docs.len());
    for (i, d) in docs.iter().enumerate() {
        let mp = extract_multi_palette(&d.document, i as u64)?;
        let seq = ColorSequence::from_multi_palette(&mp, vcfg);
        let planted = ColorSequence::from_codes(&d.palettes)?;
        if seq != planted {
            return Err(Error::Sequence(format!("document {i}: extracted {:?}, planted {:?}", seq.decode(), d.palettes)));
        }
        entries.push(CorpusEntry {
            sequence: seq,
            tag: Some(d.kind.tag().to_string()),
        });
    }
    let n_train = cfg.n_docs * 8 / 10;
    let n_val = cfg.n_docs / 10;
    let test = entries.split_off(n_train + n_val);
    let val = entries.split_off(n_train);
    Ok(SynthCorpus {
        train: entries,
        val,
        test,
        spec,
    })
}
