//! Layered graphic documents: parsing, validation, element grouping and the
//! pixel accounting used for palette extraction.

mod crello;
mod raster;
mod render;
mod sample;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::Rgb;
use crate::error::{Error, Result};

pub use crello::parse_crello;
pub use raster::RasterImage;
pub use render::render_preview;
pub use sample::sample_poster;

/// Elements below this opacity are invisible for palette purposes.
pub const MIN_VISIBLE_OPACITY: f64 = 0.05;
/// Raster pixels with alpha below this are treated as transparent.
pub const MIN_VISIBLE_ALPHA: u8 = 128;
/// Per-group pixel budget; larger groups are subsampled with a uniform stride.
pub const MAX_GROUP_PIXELS: u64 = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    #[serde(rename = "imageElement")]
    Image,
    #[serde(rename = "maskElement")]
    Mask,
    #[serde(rename = "coloredBackground")]
    ColoredBackground,
    #[serde(rename = "svgElement")]
    Svg,
    #[serde(rename = "textElement")]
    Text,
}

impl ElementKind {
    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Image => "imageElement",
            ElementKind::Mask => "maskElement",
            ElementKind::ColoredBackground => "coloredBackground",
            ElementKind::Svg => "svgElement",
            ElementKind::Text => "textElement",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "imageElement" => ElementKind::Image,
            "maskElement" => ElementKind::Mask,
            "coloredBackground" => ElementKind::ColoredBackground,
            "svgElement" => ElementKind::Svg,
            "textElement" => ElementKind::Text,
            _ => return None,
        })
    }

    pub fn is_image_like(self) -> bool {
        matches!(self, ElementKind::Image | ElementKind::Mask)
    }

    pub fn group(self) -> Group {
        match self {
            ElementKind::Image | ElementKind::Mask => Group::Image,
            ElementKind::ColoredBackground | ElementKind::Svg => Group::Svg,
            ElementKind::Text => Group::Text,
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Element group; also the palette (and segment) an element feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Image,
    Svg,
    Text,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Image, Group::Svg, Group::Text];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Segment id used by the model (1-based).
    pub fn segment_id(self) -> u8 {
        self as u8 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Image => "image",
            Group::Svg => "svg",
            Group::Text => "text",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Group::Image),
            "svg" => Ok(Group::Svg),
            "text" => Ok(Group::Text),
            _ => Err(Error::InvalidArgument(format!("unknown group {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub opacity: f64,
    pub colors: Vec<Rgb>,
    pub raster: Option<RasterImage>,
}

impl Element {
    pub fn is_visible(&self) -> bool {
        self.opacity >= MIN_VISIBLE_OPACITY
    }

    /// Pixel footprint `(columns, rows)` at canvas resolution.
    pub fn pixel_size(&self) -> (u32, u32) {
        (self.w.round().max(0.0) as u32, self.h.round().max(0.0) as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphicDocument {
    pub width: u32,
    pub height: u32,
    /// Bottom-to-top z-order.
    pub elements: Vec<Element>,
}

// Wire format.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentFile {
    canvas: CanvasFile,
    elements: Vec<ElementFile>,
}

#[derive(Serialize, Deserialize)]
struct CanvasFile {
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct PointFile {
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct SizeFile {
    w: f64,
    h: f64,
}

fn default_opacity() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct ElementFile {
    id: String,
    kind: ElementKind,
    position: PointFile,
    size: SizeFile,
    #[serde(default = "default_opacity")]
    opacity: f64,
    #[serde(default)]
    colors: Vec<Rgb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raster: Option<String>,
}

fn parse_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        message: message.into(),
    }
}

impl GraphicDocument {
    /// Parses a document whose rasters are inline PNG data URIs.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        Self::parse_with_base(bytes, None)
    }

    /// Parses a document; relative raster paths resolve against `base_dir`.
    pub fn parse_with_base(bytes: &[u8], base_dir: Option<&Path>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let file: DocumentFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            parse_err(if path == "." || path == "?" { "$".to_string() } else { path }, e.inner().to_string())
        })?;
        Self::from_file(file, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::parse_with_base(&bytes, path.parent())
    }

    fn from_file(file: DocumentFile, base_dir: Option<&Path>) -> Result<Self> {
        let (width, height) = (file.canvas.width, file.canvas.height);
        if width == 0 || height == 0 {
            return Err(parse_err("canvas", "canvas width and height must be positive"));
        }
        if file.elements.is_empty() {
            return Err(parse_err("elements", "document has no elements"));
        }
        let mut elements = Vec::with_capacity(file.elements.len());
        let mut seen = std::collections::HashSet::new();
        for (i, e) in file.elements.into_iter().enumerate() {
            let at = |field: &str| format!("elements[{i}].{field}");
            if !seen.insert(e.id.clone()) {
                return Err(parse_err(at("id"), format!("duplicate element id {:?}", e.id)));
            }
            let geom = [e.position.x, e.position.y, e.size.w, e.size.h];
            if geom.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(at("size"), "geometry must be finite"));
            }
            if e.size.w < 0.0 || e.size.h < 0.0 {
                return Err(parse_err(at("size"), "size must be non-negative"));
            }
            if !(0.0..=1.0).contains(&e.opacity) {
                return Err(parse_err(at("opacity"), "opacity must be in [0, 1]"));
            }
            let raster = match (e.kind.is_image_like(), e.raster) {
                (true, Some(r)) => Some(load_raster(&r, base_dir).map_err(|err| parse_err(at("raster"), err.to_string()))?),
                (true, None) => return Err(parse_err(at("raster"), format!("{} requires a raster", e.kind))),
                (false, Some(_)) => return Err(parse_err(at("raster"), format!("{} cannot carry a raster", e.kind))),
                (false, None) => None,
            };
            if !e.kind.is_image_like() && e.colors.is_empty() {
                return Err(parse_err(at("colors"), format!("{} requires at least one color", e.kind)));
            }
            // clip the box to the canvas
            let x0 = e.position.x.clamp(0.0, width as f64);
            let y0 = e.position.y.clamp(0.0, height as f64);
            let x1 = (e.position.x + e.size.w).clamp(0.0, width as f64);
            let y1 = (e.position.y + e.size.h).clamp(0.0, height as f64);
            elements.push(Element {
                id: e.id,
                kind: e.kind,
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
                opacity: e.opacity,
                colors: e.colors,
                raster,
            });
        }
        Ok(Self { width, height, elements })
    }

    /// Serializes with inline PNG rasters.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("document serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_file()).expect("document serializes")
    }

    fn to_file(&self) -> DocumentFile {
        DocumentFile {
            canvas: CanvasFile {
                width: self.width,
                height: self.height,
            },
            elements: self
                .elements
                .iter()
                .map(|e| ElementFile {
                    id: e.id.clone(),
                    kind: e.kind,
                    position: PointFile { x: e.x, y: e.y },
                    size: SizeFile { w: e.w, h: e.h },
                    opacity: e.opacity,
                    colors: e.colors.clone(),
                    raster: e.raster.as_ref().map(RasterImage::to_data_uri),
                })
                .collect(),
        }
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// Partitions elements into image, svg and text groups (z-order kept).
    pub fn group_elements(&self) -> [Vec<&Element>; 3] {
        let mut groups: [Vec<&Element>; 3] = Default::default();
        for e in &self.elements {
            groups[e.kind.group().index()].push(e);
        }
        groups
    }

    /// Returns a copy with the raster of an image-like element replaced.
    /// Geometry is kept; the raster is stretched over the element box when drawn.
    pub fn replace_image_element(&self, element_id: &str, image: RasterImage) -> Result<Self> {
        let mut doc = self.clone();
        let e = doc
            .elements
            .iter_mut()
            .find(|e| e.id == element_id)
            .ok_or_else(|| Error::ElementNotFound(element_id.to_string()))?;
        if !e.kind.is_image_like() {
            return Err(Error::WrongElementKind {
                id: element_id.to_string(),
                kind: e.kind.to_string(),
                expected: "imageElement or maskElement",
            });
        }
        e.raster = Some(image);
        Ok(doc)
    }
}

fn load_raster(spec: &str, base_dir: Option<&Path>) -> Result<RasterImage> {
    if let Some(img) = RasterImage::from_data_uri(spec) {
        return img;
    }
    if spec.starts_with("data:") {
        return Err(Error::Image("only PNG data URIs are supported".into()));
    }
    let base = base_dir.ok_or_else(|| Error::Image(format!("raster path {spec:?} given but no base directory is available")))?;
    let rel = Path::new(spec);
    if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(Error::Image(format!("raster path {spec:?} must be relative and stay inside the document directory")));
    }
    RasterImage::decode_png(&std::fs::read(base.join(rel))?)
}

/// Multiset of colors, stored as counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelBag {
    counts: BTreeMap<Rgb, u64>,
}

impl PixelBag {
    pub fn add(&mut self, c: Rgb, n: u64) {
        if n > 0 {
            *self.counts.entry(c).or_insert(0) += n;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count(&self, c: Rgb) -> u64 {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Rgb, u64)> + '_ {
        self.counts.iter().map(|(c, n)| (*c, *n))
    }
}

/// Stride sampler over a virtual stream of pixels: keeps global indices divisible by `stride`.
struct StrideSampler {
    stride: u64,
    next_index: u64,
}

impl StrideSampler {
    /// Number of kept pixels in the next run of `n`.
    fn take_run(&mut self, n: u64) -> u64 {
        let start = self.next_index;
        self.next_index += n;
        let first_kept = start.div_ceil(self.stride);
        let end_kept = self.next_index.div_ceil(self.stride);
        end_kept - first_kept
    }

    fn take_one(&mut self) -> bool {
        let keep = self.next_index % self.stride == 0;
        self.next_index += 1;
        keep
    }
}

fn solid_runs(e: &Element) -> Vec<(Rgb, u64)> {
    let (w, h) = e.pixel_size();
    let area = w as u64 * h as u64;
    let n = e.colors.len() as u64;
    if n == 0 {
        return Vec::new();
    }
    // equal split; the first `area % n` colors take one extra pixel
    e.colors
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, area / n + u64::from((i as u64) < area % n)))
        .collect()
}

fn visible_pixel_count(e: &Element) -> u64 {
    if !e.is_visible() {
        return 0;
    }
    let (w, h) = e.pixel_size();
    w as u64 * h as u64
}

/// Merges a group's visible elements into one pixel multiset.
///
/// Each element contributes its box at canvas resolution: rasters are
/// resampled (nearest neighbor) to the box, solid fills contribute one pixel
/// per unit of area split evenly across their colors. Occlusion is ignored.
/// Groups above [`MAX_GROUP_PIXELS`] are subsampled with a uniform stride.
pub fn composite_group(group: &[&Element]) -> PixelBag {
    let total: u64 = group.iter().map(|e| visible_pixel_count(e)).sum();
    let mut sampler = StrideSampler {
        stride: total.div_ceil(MAX_GROUP_PIXELS).max(1),
        next_index: 0,
    };
    let mut bag = PixelBag::default();
    for e in group.iter().filter(|e| e.is_visible()) {
        match &e.raster {
            Some(img) if e.kind.is_image_like() => {
                let (w, h) = e.pixel_size();
                for y in 0..h {
                    for x in 0..w {
                        let idx = img.sample_index(x, y, w, h);
                        if sampler.take_one() && img.alpha_at(idx) >= MIN_VISIBLE_ALPHA {
                            bag.add(img.pixels()[idx], 1);
                        }
                    }
                }
            }
            _ => {
                for (c, n) in solid_runs(e) {
                    bag.add(c, sampler.take_run(n));
                }
            }
        }
    }
    bag
}
