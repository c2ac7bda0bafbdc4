//! Browser bindings. Results cross the boundary as JSON strings or PNG bytes.
//!
//! The plain functions in [`ops`] carry the logic so they can be tested on
//! the host; the exported wrappers only turn errors into JS exceptions.

use wasm_bindgen::prelude::*;

pub mod ops;

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Lab coordinates, code and code display color of a hex color, as JSON.
#[wasm_bindgen(js_name = colorInfo)]
pub fn color_info(hex: &str) -> Result<String, JsError> {
    js(ops::color_info(hex))
}

/// CIEDE2000 between two hex colors.
#[wasm_bindgen(js_name = deltaE)]
pub fn delta_e(a: &str, b: &str) -> Result<f64, JsError> {
    js(ops::delta_e(a, b))
}

/// Palette of a PNG, as a JSON array of `{hex, code, weight}`.
#[wasm_bindgen(js_name = imagePalette)]
pub fn image_palette(png: &[u8], seed: u32) -> Result<String, JsError> {
    js(ops::image_palette(png, seed as u64))
}

/// Moves one palette color of a PNG to `target` and returns the new PNG.
#[wasm_bindgen(js_name = recolorPng)]
pub fn recolor_png(png: &[u8], seed: u32, index: usize, target: &str) -> Result<Vec<u8>, JsError> {
    js(ops::recolor_png(png, seed as u64, index, target))
}

/// A loaded checkpoint plus the built-in sample poster.
#[wasm_bindgen]
pub struct Recommender(ops::Recommender);

#[wasm_bindgen]
impl Recommender {
    #[wasm_bindgen(constructor)]
    pub fn new(checkpoint: &[u8]) -> Result<Recommender, JsError> {
        js(ops::Recommender::new(checkpoint)).map(Self)
    }

    /// Current palettes of the poster, as JSON.
    pub fn palettes(&self) -> String {
        self.0.palettes()
    }

    /// Poster preview PNG.
    pub fn preview(&self) -> Vec<u8> {
        self.0.preview()
    }

    /// Top-`n` candidates for a slot such as `"svg:0"`, as JSON.
    pub fn recommend(&self, slot: &str, n: usize) -> Result<String, JsError> {
        js(self.0.recommend(slot, n))
    }

    /// Applies a candidate code to the poster.
    pub fn apply(&mut self, slot: &str, code: &str) -> Result<(), JsError> {
        js(self.0.apply(slot, code))
    }

    pub fn reset(&mut self) {
        self.0.reset()
    }
}
