use super::{Element, ElementKind, GraphicDocument, RasterImage};
use crate::color::Rgb;

fn el(id: &str, kind: ElementKind, (x, y, w, h): (f64, f64, f64, f64), colors: &[Rgb], raster: Option<RasterImage>) -> Element {
    Element {
        id: id.into(),
        kind,
        x,
        y,
        w,
        h,
        opacity: 1.0,
        colors: colors.to_vec(),
        raster,
    }
}

/// Small poster used by demos and contract tests: a cream background, a
/// three-tone photo, a two-color shape and two text runs.
pub fn sample_poster() -> GraphicDocument {
    let (sky, sea, sand) = (Rgb::new(120, 170, 220), Rgb::new(20, 60, 110), Rgb::new(225, 190, 130));
    let px: Vec<Rgb> = (0..16 * 12)
        .map(|i| match i / 16 {
            0..=4 => sky,
            5..=8 => sea,
            _ => sand,
        })
        .collect();
    let photo = RasterImage::new(16, 12, px).expect("sample raster");
    GraphicDocument {
        width: 120,
        height: 80,
        elements: vec![
            el("background", ElementKind::ColoredBackground, (0.0, 0.0, 120.0, 80.0), &[Rgb::new(242, 232, 213)], None),
            el("photo", ElementKind::Image, (8.0, 8.0, 56.0, 42.0), &[], Some(photo)),
            el("badge", ElementKind::Svg, (72.0, 8.0, 40.0, 30.0), &[Rgb::new(228, 87, 46), Rgb::new(31, 111, 139)], None),
            el("title", ElementKind::Text, (8.0, 56.0, 104.0, 14.0), &[Rgb::new(34, 34, 34)], None),
            el("subtitle", ElementKind::Text, (8.0, 70.0, 60.0, 8.0), &[Rgb::new(228, 87, 46)], None),
        ],
    }
}
