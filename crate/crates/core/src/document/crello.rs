//! Loader for column-oriented Crello exports.
//!
//! One JSON object per template, each per-element attribute stored as a
//! parallel array:
//!
//! ```json
//! {"canvas_width": 1080, "canvas_height": 1080,
//!  "type": ["coloredBackground", "imageElement", "textElement"],
//!  "left": [0, 0.1, 0.2], "top": [0, 0.1, 0.7],
//!  "width": [1, 0.8, 0.6], "height": [1, 0.5, 0.1],
//!  "opacity": [1, 1, 1],
//!  "color": [[255, 255, 255], [0, 0, 0], [20, 20, 20]],
//!  "image": ["", "data:image/png;base64,...", ""],
//!  "units": "relative"}
//! ```
//!
//! Geometry is relative to the canvas unless `units` is `"pixels"`. `image`
//! entries are data URIs or paths relative to the export file; `color` gives
//! the single fill of solid and text elements.

use std::path::Path;

use serde::Deserialize;

use super::{parse_err, ElementFile, ElementKind, GraphicDocument, PointFile, SizeFile};
use crate::color::Rgb;
use crate::error::Result;

#[derive(Deserialize)]
struct CrelloRecord {
    canvas_width: u32,
    canvas_height: u32,
    #[serde(rename = "type")]
    kinds: Vec<String>,
    left: Vec<f64>,
    top: Vec<f64>,
    width: Vec<f64>,
    height: Vec<f64>,
    #[serde(default)]
    opacity: Vec<f64>,
    #[serde(default)]
    color: Vec<[u8; 3]>,
    #[serde(default)]
    image: Vec<String>,
    #[serde(default)]
    units: Option<String>,
}

/// Converts one Crello export record into a document.
pub fn parse_crello(bytes: &[u8], base_dir: Option<&Path>) -> Result<GraphicDocument> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let rec: CrelloRecord = serde_path_to_error::deserialize(de).map_err(|e| parse_err(e.path().to_string(), e.inner().to_string()))?;
    let n = rec.kinds.len();
    for (name, len) in [("left", rec.left.len()), ("top", rec.top.len()), ("width", rec.width.len()), ("height", rec.height.len())] {
        if len != n {
            return Err(parse_err(name, format!("expected {n} entries, found {len}")));
        }
    }
    let (sx, sy) = match rec.units.as_deref() {
        None | Some("relative") => (rec.canvas_width as f64, rec.canvas_height as f64),
        Some("pixels") => (1.0, 1.0),
        Some(other) => return Err(parse_err("units", format!("unknown units {other:?}"))),
    };
    let mut elements = Vec::with_capacity(n);
    for i in 0..n {
        let kind = ElementKind::from_name(&rec.kinds[i]).ok_or_else(|| parse_err(format!("type[{i}]"), format!("unknown element kind {:?}", rec.kinds[i])))?;
        let color = rec.color.get(i).map(|c| Rgb::new(c[0], c[1], c[2]));
        let raster = rec.image.get(i).filter(|s| !s.is_empty()).cloned();
        elements.push(ElementFile {
            id: format!("{}-{i}", kind.name()),
            kind,
            position: PointFile {
                x: rec.left[i] * sx,
                y: rec.top[i] * sy,
            },
            size: SizeFile {
                w: rec.width[i] * sx,
                h: rec.height[i] * sy,
            },
            opacity: rec.opacity.get(i).copied().unwrap_or(1.0),
            colors: if kind.is_image_like() { Vec::new() } else { color.into_iter().collect() },
            raster: if kind.is_image_like() { raster } else { None },
        });
    }
    GraphicDocument::from_file(
        super::DocumentFile {
            canvas: super::CanvasFile {
                width: rec.canvas_width,
                height: rec.canvas_height,
            },
            elements,
        },
        base_dir,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::RasterImage;
    use crate::error::Error;

    #[test]
    fn relative_columns() {
        let img = RasterImage::solid(2, 2, Rgb::new(0, 0, 255)).unwrap().to_data_uri();
        let json = format!(
            r#"{{"canvas_width":200,"canvas_height":100,"type":["coloredBackground","imageElement","textElement"],
            "left":[0,0.25,0.5],"top":[0,0.5,0.1],"width":[1,0.5,0.25],"height":[1,0.5,0.1],
            "opacity":[1,0.5,1],"color":[[255,255,255],[0,0,0],[10,20,30]],"image":["","{img}",""]}}"#
        );
        let doc = parse_crello(json.as_bytes(), None).unwrap();
        assert_eq!((doc.width, doc.height), (200, 100));
        let e = &doc.elements[1];
        assert_eq!(e.kind, ElementKind::Image);
        assert_eq!((e.x, e.y, e.w, e.h, e.opacity), (50.0, 50.0, 100.0, 50.0, 0.5));
        assert!(e.raster.is_some() && e.colors.is_empty());
        assert_eq!(doc.elements[2].colors, vec![Rgb::new(10, 20, 30)]);
    }

    #[test]
    fn mismatched_columns_and_kinds() {
        let bad_len = br#"{"canvas_width":10,"canvas_height":10,"type":["textElement"],"left":[],"top":[0],"width":[1],"height":[1]}"#;
        assert!(matches!(parse_crello(bad_len, None), Err(Error::Parse { path, .. }) if path == "left"));
        let bad_kind = br#"{"canvas_width":10,"canvas_height":10,"type":["gifElement"],"left":[0],"top":[0],"width":[1],"height":[1]}"#;
        assert!(matches!(parse_crello(bad_kind, None), Err(Error::Parse { path, .. }) if path == "type[0]"));
    }
}
