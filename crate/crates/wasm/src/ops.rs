use chromaseq::color::display_color;
use chromaseq::document::{render_preview, sample_poster, PixelBag};
use chromaseq::recolor::{recolor_image, recolor_to_code, RecolorConfig};
use chromaseq::recommend::{recommend, RecommendOptions, SlotRef};
use chromaseq::{ciede2000, extract_multi_palette, quantize, srgb_to_lab, Checkpoint, ColorCode, GraphicDocument, Palette, RasterImage, Rgb, VocabConfig};
use serde_json::json;

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

pub fn color_info(hex: &str) -> Result<String, String> {
    let rgb = Rgb::from_hex(hex).map_err(e)?;
    let lab = srgb_to_lab(rgb);
    let cfg = VocabConfig::default();
    let code = quantize(lab, cfg);
    let shown = display_color(code, cfg).map_err(e)?;
    Ok(json!({
        "hex": rgb.to_hex(),
        "lab": [lab.l, lab.a, lab.b],
        "code": code,
        "codeHex": shown.map(Rgb::to_hex),
    })
    .to_string())
}

pub fn delta_e(a: &str, b: &str) -> Result<f64, String> {
    let (a, b) = (Rgb::from_hex(a).map_err(e)?, Rgb::from_hex(b).map_err(e)?);
    Ok(ciede2000(srgb_to_lab(a), srgb_to_lab(b)))
}

fn palette_of(img: &RasterImage, seed: u64) -> Result<Palette, String> {
    let mut bag = PixelBag::default();
    for (i, &p) in img.pixels().iter().enumerate() {
        if img.alpha_at(i) > 0 {
            bag.add(p, 1);
        }
    }
    Palette::from_pixels(&bag, seed).map_err(e)
}

pub fn image_palette(png: &[u8], seed: u64) -> Result<String, String> {
    let img = RasterImage::decode_png(png).map_err(e)?;
    let p = palette_of(&img, seed)?;
    serde_json::to_string(&p.entries(VocabConfig::default())).map_err(e)
}

pub fn recolor_png(png: &[u8], seed: u64, index: usize, target: &str) -> Result<Vec<u8>, String> {
    let img = RasterImage::decode_png(png).map_err(e)?;
    let p = palette_of(&img, seed)?;
    if index >= p.len() {
        return Err(format!("palette index {index} out of range, the image has {} colors", p.len()));
    }
    let target = srgb_to_lab(Rgb::from_hex(target).map_err(e)?);
    let out = recolor_image(&img, &p, &[(index, target)], &RecolorConfig::default()).map_err(e)?;
    Ok(out.encode_png())
}

pub struct Recommender {
    ck: Checkpoint,
    doc: GraphicDocument,
}

impl Recommender {
    pub fn new(checkpoint: &[u8]) -> Result<Self, String> {
        Ok(Self {
            ck: Checkpoint::from_bytes(checkpoint).map_err(e)?,
            doc: sample_poster(),
        })
    }

    pub fn palettes(&self) -> String {
        match extract_multi_palette(&self.doc, 0) {
            Ok(mp) => mp.to_json(self.ck.vocab().config()).to_string(),
            Err(err) => json!({ "error": err.to_string() }).to_string(),
        }
    }

    pub fn preview(&self) -> Vec<u8> {
        render_preview(&self.doc).encode_png()
    }

    pub fn recommend(&self, slot: &str, n: usize) -> Result<String, String> {
        let slot: SlotRef = slot.parse().map_err(e)?;
        let opts = RecommendOptions { n, ..Default::default() };
        let recs = recommend(&self.doc, &[slot], &opts, &self.ck).map_err(e)?;
        serde_json::to_string(&recs[0]).map_err(e)
    }

    pub fn apply(&mut self, slot: &str, code: &str) -> Result<(), String> {
        let slot: SlotRef = slot.parse().map_err(e)?;
        let code: ColorCode = code.parse().map_err(e)?;
        self.doc = recolor_to_code(&self.doc, slot, code, &self.ck, 0, &RecolorConfig::default()).map_err(e)?;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.doc = sample_poster();
    }
}
