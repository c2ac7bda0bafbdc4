use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{lab_to_srgb, srgb_to_lab, Lab, Rgb};
use crate::error::{Error, Result};

/// Histogram resolution of the color vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VocabConfig {
    pub bins_per_axis: u8,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self { bins_per_axis: 16 }
    }
}

impl VocabConfig {
    pub fn new(bins_per_axis: u8) -> Result<Self> {
        if bins_per_axis < 2 {
            return Err(Error::InvalidArgument(format!(
                "bins_per_axis must be >= 2, got {bins_per_axis}"
            )));
        }
        Ok(Self { bins_per_axis })
    }

    fn bin_width(self) -> f64 {
        256.0 / self.bins_per_axis as f64
    }

    pub fn num_codes(self) -> usize {
        (self.bins_per_axis as usize).pow(3)
    }

    /// Every code of the `B x B x B` histogram, in sorted order.
    pub fn all_codes(self) -> impl Iterator<Item = ColorCode> {
        let n = self.bins_per_axis;
        (0..n).flat_map(move |l| (0..n).flat_map(move |a| (0..n).map(move |b| ColorCode::new(l, a, b))))
    }
}

/// A quantized CIELAB bin, written `"l_a_b"` (e.g. `"15_8_8"` for white).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColorCode {
    pub l: u8,
    pub a: u8,
    pub b: u8,
}

impl ColorCode {
    pub const fn new(l: u8, a: u8, b: u8) -> Self {
        Self { l, a, b }
    }

    pub fn is_valid(self, cfg: VocabConfig) -> bool {
        let n = cfg.bins_per_axis;
        self.l < n && self.a < n && self.b < n
    }
}

impl fmt::Display for ColorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}_{}", self.l, self.a, self.b)
    }
}

impl FromStr for ColorCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('_');
        let mut next = || -> Result<u8> {
            parts
                .next()
                .and_then(|p| {
                    if p.is_empty() || !p.bytes().all(|c| c.is_ascii_digit()) {
                        None
                    } else {
                        p.parse().ok()
                    }
                })
                .ok_or_else(|| Error::InvalidCode(s.to_string()))
        };
        let code = ColorCode::new(next()?, next()?, next()?);
        if parts.next().is_some() {
            return Err(Error::InvalidCode(s.to_string()));
        }
        Ok(code)
    }
}

impl Serialize for ColorCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColorCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// L in [0, 100] and a, b in [-128, 127] are stretched onto [0, 255].
fn scale(c: Lab) -> [f64; 3] {
    [
        (c.l * 255.0 / 100.0).clamp(0.0, 255.0),
        (c.a + 128.0).clamp(0.0, 255.0),
        (c.b + 128.0).clamp(0.0, 255.0),
    ]
}

fn unscale(s: [f64; 3]) -> Lab {
    Lab::new(s[0] * 100.0 / 255.0, s[1] - 128.0, s[2] - 128.0)
}

/// Assigns a LAB color to its histogram bin.
pub fn quantize(c: Lab, cfg: VocabConfig) -> ColorCode {
    let width = cfg.bin_width();
    let top = cfg.bins_per_axis - 1;
    let bin = |v: f64| {
        let v = if v.is_nan() { 0.0 } else { v };
        ((v / width).floor() as i64).clamp(0, top as i64) as u8
    };
    let s = scale(c);
    ColorCode::new(bin(s[0]), bin(s[1]), bin(s[2]))
}

/// LAB color at the geometric center of a bin (center taken in scaled space).
pub fn code_center(code: ColorCode, cfg: VocabConfig) -> Result<Lab> {
    if !code.is_valid(cfg) {
        return Err(Error::InvalidCode(format!(
            "{code} (bins per axis = {})",
            cfg.bins_per_axis
        )));
    }
    let width = cfg.bin_width();
    let center = |i: u8| (i as f64 + 0.5) * width;
    Ok(unscale([center(code.l), center(code.a), center(code.b)]))
}

/// sRGB color to show for a code.
///
/// This is `lab_to_srgb(code_center(code))` whenever that color quantizes back
/// to `code`. Bin centers outside the sRGB gamut (or whose rounding leaves the
/// bin) instead get the in-bin sRGB color closest to the center, found by a
/// coarse-to-fine search over the RGB cube. Returns `None` only for codes that
/// no sRGB color maps to.
pub fn display_color(code: ColorCode, cfg: VocabConfig) -> Result<Option<Rgb>> {
    let center = code_center(code, cfg)?;
    let direct = lab_to_srgb(center);
    if quantize(srgb_to_lab(direct), cfg) == code {
        return Ok(Some(direct));
    }

    let width = cfg.bin_width();
    let lo = [code.l as f64 * width, code.a as f64 * width, code.b as f64 * width];
    let hi = [lo[0] + width, lo[1] + width, lo[2] + width];
    let c_scaled = scale(center);
    // (squared distance from the bin box, squared distance from the center)
    let score = |rgb: Rgb| -> (f64, f64) {
        let s = scale(srgb_to_lab(rgb));
        let mut box_d = 0.0;
        let mut center_d = 0.0;
        for i in 0..3 {
            let outside = if s[i] < lo[i] {
                lo[i] - s[i]
            } else if s[i] >= hi[i] {
                s[i] - hi[i] + 1e-6
            } else {
                0.0
            };
            box_d += outside * outside;
            center_d += (s[i] - c_scaled[i]) * (s[i] - c_scaled[i]);
        }
        (box_d, center_d)
    };
    let better = |x: (f64, f64), y: (f64, f64)| x.0 < y.0 || (x.0 == y.0 && x.1 < y.1);

    let mut best = direct;
    let mut best_score = score(best);
    let mut step: i32 = 32;
    while step >= 1 {
        loop {
            let mut improved = false;
            for dr in -1..=1 {
                for dg in -1..=1 {
                    for db in -1..=1 {
                        if dr == 0 && dg == 0 && db == 0 {
                            continue;
                        }
                        let shift = |v: u8, d: i32| (v as i32 + d * step).clamp(0, 255) as u8;
                        let cand = Rgb::new(shift(best.r, dr), shift(best.g, dg), shift(best.b, db));
                        let sc = score(cand);
                        if better(sc, best_score) {
                            best = cand;
                            best_score = sc;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        step /= 2;
    }
    if quantize(srgb_to_lab(best), cfg) == code {
        return Ok(Some(best));
    }

    // Exhaustive fallback over a stride-1 cube; only reached for thin bins at the gamut boundary.
    let mut found: Option<(f64, Rgb)> = None;
    for r in 0..=255u8 {
        for g in 0..=255u8 {
            for b in 0..=255u8 {
                let rgb = Rgb::new(r, g, b);
                let lab = srgb_to_lab(rgb);
                if quantize(lab, cfg) == code {
                    let d = lab.dist2(&center);
                    if found.is_none_or(|(bd, _)| d < bd) {
                        found = Some((d, rgb));
                    }
                }
            }
        }
    }
    Ok(found.map(|(_, rgb)| rgb))
}
