use super::{ElementKind, GraphicDocument, RasterImage};
use crate::color::Rgb;

fn blend(dst: Rgb, src: Rgb, alpha: f64) -> Rgb {
    if alpha >= 1.0 {
        return src;
    }
    let mix = |d: u8, s: u8| (d as f64 + (s as f64 - d as f64) * alpha).round().clamp(0.0, 255.0) as u8;
    Rgb::new(mix(dst.r, src.r), mix(dst.g, src.g), mix(dst.b, src.b))
}

/// Flat preview of a document at canvas resolution on a white backdrop.
///
/// Elements are painted bottom to top with their opacity: rasters stretched
/// (nearest neighbor) over their box, multi-color fills as equal vertical
/// stripes, text as a band over the middle 60% of its box.
pub fn render_preview(doc: &GraphicDocument) -> RasterImage {
    let (cw, ch) = (doc.width as usize, doc.height as usize);
    let mut px = vec![Rgb::WHITE; cw * ch];
    for e in &doc.elements {
        if e.opacity <= 0.0 {
            continue;
        }
        let (w, h) = e.pixel_size();
        let x0 = e.x.round().max(0.0) as usize;
        let y0 = e.y.round().max(0.0) as usize;
        let (mut row_lo, mut row_hi) = (0, h);
        if e.kind == ElementKind::Text {
            row_lo = (h as f64 * 0.2).round() as u32;
            row_hi = (h as f64 * 0.8).round() as u32;
        }
        for y in row_lo..row_hi {
            let cy = y0 + y as usize;
            if cy >= ch {
                break;
            }
            for x in 0..w {
                let cx = x0 + x as usize;
                if cx >= cw {
                    break;
                }
                let (src, alpha) = match (&e.raster, e.colors.is_empty()) {
                    (Some(img), _) => {
                        let idx = img.sample_index(x, y, w, h);
                        (img.pixels()[idx], img.alpha_at(idx) as f64 / 255.0)
                    }
                    (None, false) => {
                        let stripe = (x as usize * e.colors.len()) / w.max(1) as usize;
                        (e.colors[stripe.min(e.colors.len() - 1)], 1.0)
                    }
                    (None, true) => continue,
                };
                let dst = &mut px[cy * cw + cx];
                *dst = blend(*dst, src, alpha * e.opacity);
            }
        }
    }
    RasterImage::new(doc.width, doc.height, px).expect("canvas has positive size")
}
