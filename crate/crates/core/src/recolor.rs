//! Applying a chosen color back to a document.
//!
//! Vector fills move toward the target in proportion to how close they are to
//! the replaced color. Rasters are remapped through their k-means palette:
//! each pixel takes an inverse-distance blend of the centroid edits.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::color::{ciede2000, lab_to_srgb, quantize, srgb_to_lab, ColorCode, Lab, Rgb};
use crate::document::{GraphicDocument, Group, RasterImage};
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::palette::{extract_multi_palette, Palette};
use crate::recommend::{code_display, Recommendation, SlotRef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecolorConfig {
    /// Vector fills at ΔE00 ≥ tau from the source are left alone.
    pub tau: f64,
    /// Inverse-distance exponent for raster remapping.
    pub exponent: f64,
}

impl Default for RecolorConfig {
    fn default() -> Self {
        Self { tau: 20.0, exponent: 4.0 }
    }
}

impl RecolorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0 && self.exponent.is_finite() && self.exponent > 0.0) {
            return Err(Error::InvalidArgument("tau and exponent must be positive".into()));
        }
        Ok(())
    }
}

fn shift(c: Lab, by: [f64; 3], w: f64) -> Lab {
    Lab::new(c.l + w * by[0], c.a + w * by[1], c.b + w * by[2])
}

/// Moves every fill color of the slot's group toward `target`.
///
/// A fill `c` moves by `w * (target - source)` with
/// `w = max(0, 1 - ΔE00(c, source) / tau)`; a fill equal to `source` becomes
/// `target` exactly.
pub fn recolor_vector(doc: &GraphicDocument, slot: SlotRef, source: Lab, target: Lab, tau: f64) -> Result<GraphicDocument> {
    if slot.group == Group::Image {
        return Err(Error::InvalidSlot {
            slot: slot.to_string(),
            reason: "vector recoloring applies to svg and text slots".into(),
        });
    }
    RecolorConfig { tau, ..Default::default() }.validate()?;
    let mut out = doc.clone();
    if source == target {
        return Ok(out);
    }
    let by = [target.l - source.l, target.a - source.a, target.b - source.b];
    for e in out.elements.iter_mut().filter(|e| e.kind.group() == slot.group) {
        for c in e.colors.iter_mut() {
            let lab = srgb_to_lab(*c);
            let d = ciede2000(lab, source);
            *c = if d == 0.0 {
                lab_to_srgb(target)
            } else {
                let w = (1.0 - d / tau).max(0.0);
                if w == 0.0 {
                    continue;
                }
                lab_to_srgb(shift(lab, by, w))
            };
        }
    }
    Ok(out)
}

/// Remaps a raster through edits to its palette.
///
/// Each pixel is offset by `Σ w_i (target_i - centroid_i)` where `w_i` are
/// normalized inverse-distance weights (`1 / d^exponent`, Euclidean LAB
/// distance) over all centroids. Unedited centroids contribute nothing.
pub fn recolor_image(image: &RasterImage, palette: &Palette, edits: &[(usize, Lab)], cfg: &RecolorConfig) -> Result<RasterImage> {
    cfg.validate()?;
    let k = palette.len();
    let mut offsets = vec![[0.0; 3]; k];
    for &(i, t) in edits {
        let c = palette.colors.get(i).ok_or_else(|| Error::InvalidArgument(format!("palette index {i} out of range (palette has {k} colors)")))?;
        offsets[i] = [t.l - c.l, t.a - c.a, t.b - c.b];
    }
    if offsets.iter().all(|o| *o == [0.0; 3]) {
        return Ok(image.clone());
    }
    let mut cache: HashMap<Rgb, Rgb> = HashMap::new();
    let mut out = image.clone();
    for p in out.pixels_mut() {
        *p = *cache.entry(*p).or_insert_with(|| remap(*p, palette, &offsets, cfg.exponent));
    }
    Ok(out)
}

fn remap(p: Rgb, palette: &Palette, offsets: &[[f64; 3]], exponent: f64) -> Rgb {
    let lab = srgb_to_lab(p);
    let mut off = [0.0; 3];
    if let Some(i) = palette.colors.iter().position(|c| c.dist2(&lab) == 0.0) {
        off = offsets[i];
    } else {
        let w: Vec<f64> = palette.colors.iter().map(|c| c.dist2(&lab).sqrt().powf(-exponent)).collect();
        let z: f64 = w.iter().sum();
        for (wi, o) in w.iter().zip(offsets) {
            for t in 0..3 {
                off[t] += wi / z * o[t];
            }
        }
    }
    if off == [0.0; 3] {
        return p;
    }
    lab_to_srgb(shift(lab, off, 1.0))
}

/// Sets a slot's palette color to `target`, dispatching on the slot group.
///
/// Image slots remap every raster of the image group through the group
/// palette; svg and text slots go through [`recolor_vector`].
pub fn recolor_slot(doc: &GraphicDocument, slot: SlotRef, target: Lab, palette_seed: u64, cfg: &RecolorConfig) -> Result<GraphicDocument> {
    let mp = extract_multi_palette(doc, palette_seed)?;
    slot.validate(&mp)?;
    let palette = mp.get(slot.group);
    let source = palette.colors[slot.slot];
    match slot.group {
        Group::Svg | Group::Text => recolor_vector(doc, slot, source, target, cfg.tau),
        Group::Image => {
            let mut out = doc.clone();
            for e in out.elements.iter_mut().filter(|e| e.kind.group() == Group::Image) {
                if let Some(img) = &e.raster {
                    e.raster = Some(recolor_image(img, palette, &[(slot.slot, target)], cfg)?);
                }
            }
            Ok(out)
        }
    }
}

/// Sets a slot to a color code. A code equal to the slot's current code
/// leaves the document unchanged; otherwise the target is the code's
/// display color.
pub fn recolor_to_code(doc: &GraphicDocument, slot: SlotRef, code: ColorCode, ck: &Checkpoint, palette_seed: u64, cfg: &RecolorConfig) -> Result<GraphicDocument> {
    let vcfg = ck.vocab().config();
    if !code.is_valid(vcfg) {
        return Err(Error::InvalidCode(code.to_string()));
    }
    let mp = extract_multi_palette(doc, palette_seed)?;
    slot.validate(&mp)?;
    if quantize(mp.get(slot.group).colors[slot.slot], vcfg) == code {
        return Ok(doc.clone());
    }
    recolor_slot(doc, slot, srgb_to_lab(code_display(code, ck)?), palette_seed, cfg)
}

/// Applies the candidate at `rank` (1-based) of a recommendation.
pub fn apply_recommendation(doc: &GraphicDocument, rec: &Recommendation, rank: usize, palette_seed: u64, cfg: &RecolorConfig) -> Result<GraphicDocument> {
    let cand = rank
        .checked_sub(1)
        .and_then(|i| rec.candidates.get(i))
        .ok_or_else(|| Error::InvalidArgument(format!("rank {rank} outside 1..={}", rec.candidates.len())))?;
    recolor_slot(doc, rec.slot, srgb_to_lab(cand.display), palette_seed, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{Element, ElementKind};
    use crate::recommend::Candidate;

    fn el(id: &str, kind: ElementKind, w: f64, h: f64, colors: &[Rgb], raster: Option<RasterImage>) -> Element {
        Element {
            id: id.into(),
            kind,
            x: 0.0,
            y: 0.0,
            w,
            h,
            opacity: 1.0,
            colors: colors.to_vec(),
            raster,
        }
    }

    fn two_tone(a: Rgb, b: Rgb) -> RasterImage {
        let px: Vec<Rgb> = (0..100).map(|i| if i < 60 { a } else { b }).collect();
        RasterImage::new(10, 10, px).unwrap()
    }

    const NAVY: Rgb = Rgb::new(20, 30, 90);
    const SAND: Rgb = Rgb::new(230, 210, 170);
    const RED: Rgb = Rgb::new(200, 30, 40);

    fn doc() -> GraphicDocument {
        GraphicDocument {
            width: 40,
            height: 40,
            elements: vec![
                el("bg", ElementKind::ColoredBackground, 40.0, 40.0, &[SAND], None),
                el("photo", ElementKind::Image, 10.0, 10.0, &[], Some(two_tone(NAVY, Rgb::new(240, 240, 240)))),
                el("shape", ElementKind::Svg, 20.0, 20.0, &[RED, Rgb::new(205, 35, 45)], None),
                el("title", ElementKind::Text, 10.0, 5.0, &[NAVY], None),
            ],
        }
    }

    fn svg(doc: &GraphicDocument) -> Vec<Rgb> {
        doc.elements.iter().filter(|e| e.kind.group() == Group::Svg).flat_map(|e| e.colors.clone()).collect()
    }

    #[test]
    fn vector_anchors() {
        let d = doc();
        let src = RED.to_lab();
        let tgt = Rgb::new(30, 140, 60).to_lab();
        let out = recolor_vector(&d, SlotRef::new(Group::Svg, 1), src, tgt, 20.0).unwrap();
        let colors = svg(&out);
        // exact match lands on the target; the near-duplicate follows most of the way
        assert_eq!(colors[1], Rgb::new(30, 140, 60));
        assert!(ciede2000(colors[2].to_lab(), tgt) < ciede2000(Rgb::new(205, 35, 45).to_lab(), tgt));
        // sand is far from red
        assert_eq!(colors[0], SAND);
        // other groups untouched
        assert_eq!(out.elements[1], d.elements[1]);
        assert_eq!(out.elements[3], d.elements[3]);

        assert_eq!(recolor_vector(&d, SlotRef::new(Group::Svg, 0), src, src, 20.0).unwrap(), d);
        assert!(recolor_vector(&d, SlotRef::new(Group::Image, 0), src, tgt, 20.0).is_err());
    }

    #[test]
    fn vector_weight_matches_formula() {
        let d = doc();
        let src = Rgb::new(210, 40, 50).to_lab();
        let tgt = Lab::new(50.0, 0.0, 0.0);
        let out = recolor_vector(&d, SlotRef::new(Group::Svg, 0), src, tgt, 20.0).unwrap();
        let c = Rgb::new(205, 35, 45).to_lab();
        let w = 1.0 - ciede2000(c, src) / 20.0;
        assert!(w > 0.0 && w < 1.0);
        let expect = lab_to_srgb(Lab::new(c.l + w * (tgt.l - src.l), c.a + w * (tgt.a - src.a), c.b + w * (tgt.b - src.b)));
        assert_eq!(svg(&out)[2], expect);
    }

    fn palette_of(img: &RasterImage) -> Palette {
        let mut bag = crate::document::PixelBag::default();
        for p in img.pixels() {
            bag.add(*p, 1);
        }
        Palette::from_pixels(&bag, 0).unwrap()
    }

    #[test]
    fn image_anchors() {
        let img = two_tone(NAVY, SAND);
        let pal = palette_of(&img);
        let cfg = RecolorConfig::default();
        assert_eq!(recolor_image(&img, &pal, &[], &cfg).unwrap(), img);
        assert_eq!(recolor_image(&img, &pal, &[(0, pal.colors[0])], &cfg).unwrap(), img);
        assert!(recolor_image(&img, &pal, &[(2, Lab::default())], &cfg).is_err());

        let solid = RasterImage::solid(4, 4, NAVY).unwrap();
        let sp = palette_of(&solid);
        let target = Rgb::new(250, 120, 10);
        let out = recolor_image(&solid, &sp, &[(0, target.to_lab())], &cfg).unwrap();
        for p in out.pixels() {
            assert!((p.r as i32 - target.r as i32).abs() <= 1);
            assert!((p.g as i32 - target.g as i32).abs() <= 1);
            assert!((p.b as i32 - target.b as i32).abs() <= 1);
        }
    }

    #[test]
    fn far_centroids_barely_move() {
        // navy (60%) and sand (40%) plus a near-sand pixel; edit navy only
        let mut px = vec![NAVY; 60];
        px.extend(vec![SAND; 39]);
        px.push(Rgb::new(226, 208, 168));
        let img = RasterImage::new(10, 10, px).unwrap();
        let pal = palette_of(&img);
        assert!(ciede2000(pal.colors[0], pal.colors[1]) > 30.0);
        let out = recolor_image(&img, &pal, &[(0, Rgb::new(200, 30, 40).to_lab())], &RecolorConfig::default()).unwrap();
        for (a, b) in img.pixels()[60..].iter().zip(&out.pixels()[60..]) {
            assert!(ciede2000(a.to_lab(), b.to_lab()) < 2.0, "{a} -> {b}");
        }
        assert!(ciede2000(out.pixels()[0].to_lab(), Rgb::new(200, 30, 40).to_lab()) < 5.0);
    }

    fn rec(slot: SlotRef, display: Rgb) -> Recommendation {
        Recommendation {
            slot,
            current: ColorCode::new(0, 0, 0),
            candidates: vec![Candidate {
                code: quantize(display.to_lab(), Default::default()),
                display,
                probability: 1.0,
                rank: 1,
            }],
        }
    }

    #[test]
    fn applying_moves_the_centroid_toward_the_target() {
        let d = doc();
        let cfg = RecolorConfig::default();
        let before = extract_multi_palette(&d, 0).unwrap();
        for (slot, target) in [(SlotRef::new(Group::Image, 0), Rgb::new(180, 40, 160)), (SlotRef::new(Group::Svg, 0), Rgb::new(40, 160, 90))] {
            let out = apply_recommendation(&d, &rec(slot, target), 1, 0, &cfg).unwrap();
            let after = extract_multi_palette(&out, 0).unwrap();
            let t = target.to_lab();
            let moved = after.get(slot.group).colors.iter().map(|c| ciede2000(*c, t)).fold(f64::INFINITY, f64::min);
            assert!(moved < ciede2000(before.get(slot.group).colors[slot.slot], t), "{slot}");
            for (a, b) in d.elements.iter().zip(&out.elements) {
                assert_eq!((a.x, a.y, a.w, a.h, &a.id), (b.x, b.y, b.w, b.h, &b.id));
                if a.kind.group() != slot.group {
                    assert_eq!(a, b);
                }
            }
        }
        assert!(apply_recommendation(&d, &rec(SlotRef::new(Group::Svg, 0), RED), 2, 0, &cfg).is_err());
        assert!(apply_recommendation(&d, &rec(SlotRef::new(Group::Svg, 0), RED), 0, 0, &cfg).is_err());
    }

    #[test]
    fn identity_recolor_is_a_no_op() {
        let d = doc();
        let mp = extract_multi_palette(&d, 0).unwrap();
        for g in Group::ALL {
            for i in 0..mp.get(g).len() {
                let out = recolor_slot(&d, SlotRef::new(g, i), mp.get(g).colors[i], 0, &RecolorConfig::default()).unwrap();
                assert_eq!(out, d, "{g}:{i}");
            }
        }
    }
}
