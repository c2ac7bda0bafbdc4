use chromaseq::color::{VocabConfig, Vocabulary};
use chromaseq::{Checkpoint, ModelConfig, RasterImage, Rgb};
use chromaseq_wasm::ops;
use serde_json::Value;

fn two_tone() -> Vec<u8> {
    let (a, b) = (Rgb::new(200, 40, 40), Rgb::new(20, 60, 180));
    let pixels = (0..64).map(|i| if i % 8 < 4 { a } else { b }).collect();
    RasterImage::new(8, 8, pixels).unwrap().encode_png()
}

#[test]
fn color_info_of_white() {
    let v: Value = serde_json::from_str(&ops::color_info("#ffffff").unwrap()).unwrap();
    assert_eq!(v["code"], "15_8_8");
    assert_eq!(v["hex"], "#FFFFFF");
    assert!(ops::color_info("#12").is_err());
}

#[test]
fn delta_e_basics() {
    assert_eq!(ops::delta_e("#336699", "#336699").unwrap(), 0.0);
    let d = ops::delta_e("#000000", "#ffffff").unwrap();
    assert!((d - 100.0).abs() < 1e-6, "{d}");
}

#[test]
fn palette_and_recolor_round_trip() {
    let png = two_tone();
    let pal: Vec<Value> = serde_json::from_str(&ops::image_palette(&png, 0).unwrap()).unwrap();
    assert_eq!(pal.len(), 2);
    let idx = pal.iter().position(|p| p["hex"] == "#C82828").expect("red centroid");
    let out = ops::recolor_png(&png, 0, idx, "#00FF00").unwrap();
    let img = RasterImage::decode_png(&out).unwrap();
    assert_eq!(img.get(0, 0), Rgb::new(0, 255, 0));
    assert_eq!(img.get(7, 0), Rgb::new(20, 60, 180));
    assert!(ops::recolor_png(&png, 0, 5, "#00FF00").is_err());
}

#[test]
fn recommender_on_the_sample() {
    let vocab = Vocabulary::from_codes(VocabConfig::default().all_codes().step_by(41), VocabConfig::default()).unwrap();
    let mut mc = ModelConfig::new(vocab.len());
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.d_ff = 32;
    let ck = Checkpoint::new(&mc, vocab).unwrap();
    let mut r = ops::Recommender::new(&ck.to_bytes()).unwrap();
    let before = r.palettes();
    let rec: Value = serde_json::from_str(&r.recommend("svg:0", 3).unwrap()).unwrap();
    let cands = rec["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 3);
    r.apply("svg:0", cands[0]["code"].as_str().unwrap()).unwrap();
    assert_ne!(r.palettes(), before);
    assert_eq!(&r.preview()[..4], b"\x89PNG");
    r.reset();
    assert_eq!(r.palettes(), before);
    assert!(r.recommend("svg:7", 3).is_err());
    assert!(ops::Recommender::new(b"junk").is_err());
}
