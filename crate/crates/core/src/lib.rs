//! Color recommendation for layered graphic documents.
//!
//! A document's elements are split into image, svg and text groups; each group
//! yields a palette of up to five colors (k-means in CIELAB). The three
//! palettes are quantized into color codes and laid out as one 18-token
//! sequence, on which a small transformer encoder is trained to recover
//! masked colors. Recommendations are the most probable codes for the
//! selected slots, and [`recolor`] applies a chosen color back to the document.

pub mod color;
pub mod document;
pub mod error;
pub mod eval;
pub mod model;
pub mod palette;
pub mod recolor;
pub mod recommend;
pub mod sequence;

pub use color::{ciede2000, code_center, lab_to_srgb, quantize, srgb_to_lab, ColorCode, Lab, Rgb, VocabConfig, Vocabulary};
pub use document::{ElementKind, GraphicDocument, Group, RasterImage};
pub use error::{Error, Result};
pub use model::{Checkpoint, ModelConfig};
pub use palette::{extract_multi_palette, MultiPalette, Palette};
pub use sequence::{ColorSequence, MaskedSequence, Token};
