//! Per-group palette extraction with k-means in CIELAB.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{quantize, srgb_to_lab, ColorCode, Lab, VocabConfig};
use crate::document::{composite_group, GraphicDocument, Group, PixelBag};
use crate::error::{Error, Result};

pub const MAX_PALETTE_COLORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves more than this (LAB units).
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iter: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Lab>,
    /// Fraction of total weight per centroid; sums to 1.
    pub weights: Vec<f64>,
    /// Cluster index of each input point (indexes `centroids`).
    pub assignments: Vec<usize>,
    /// Weighted sum of squared distances to the assigned centroid.
    pub inertia: f64,
    /// Inertia after each Lloyd assignment step of the winning restart.
    pub history: Vec<f64>,
}

/// k-means on unweighted points; see [`kmeans_weighted`].
pub fn kmeans_lab(points: &[Lab], k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_weighted(points, &vec![1.0; points.len()], k, seed, &KMeansConfig::default())
}

/// Weighted k-means with k-means++ seeding and Lloyd iterations, best of
/// `cfg.restarts` runs by inertia.
///
/// `k` is reduced to the number of distinct points when larger. Centroids are
/// returned by descending weight, ties broken by (L, a, b) ascending.
pub fn kmeans_weighted(points: &[Lab], weights: &[f64], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("k-means needs at least one point".into()));
    }
    if points.len() != weights.len() {
        return Err(Error::Shape(format!("{} points but {} weights", points.len(), weights.len())));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.iter().any(|p| !p.is_finite()) || weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::InvalidArgument("points must be finite and weights positive".into()));
    }
    let k = k.min(count_distinct(points));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<Lab>, Vec<usize>, f64, Vec<f64>)> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = kmeans_pp(points, weights, k, &mut rng);
        let run = lloyd(points, weights, init, cfg);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (centroids, assignments, inertia, history) = best.expect("at least one restart");

    let total: f64 = weights.iter().sum();
    let mut mass = vec![0.0; k];
    for (a, w) in assignments.iter().zip(weights) {
        mass[*a] += w;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        mass[j]
            .partial_cmp(&mass[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| lab_cmp(&centroids[i], &centroids[j]))
    });
    let mut rank = vec![0; k];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    Ok(KMeansResult {
        centroids: order.iter().map(|&i| centroids[i]).collect(),
        weights: order.iter().map(|&i| mass[i] / total).collect(),
        assignments: assignments.iter().map(|&a| rank[a]).collect(),
        inertia,
        history,
    })
}

fn lab_cmp(x: &Lab, y: &Lab) -> Ordering {
    x.l.total_cmp(&y.l).then(x.a.total_cmp(&y.a)).then(x.b.total_cmp(&y.b))
}

fn count_distinct(points: &[Lab]) -> usize {
    let mut sorted: Vec<&Lab> = points.iter().collect();
    sorted.sort_by(|x, y| lab_cmp(x, y));
    sorted.dedup_by(|x, y| x == y);
    sorted.len()
}

fn nearest(p: &Lab, centroids: &[Lab]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = p.dist2(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Lab], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<Lab> {
    let pick = |scores: &[f64], rng: &mut ChaCha8Rng| -> Option<usize> {
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let r = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, s) in scores.iter().enumerate() {
            acc += s;
            if acc > r {
                return Some(i);
            }
        }
        scores.iter().rposition(|s| *s > 0.0)
    };
    let mut centroids = vec![points[pick(weights, rng).expect("positive weights")]];
    let mut d2: Vec<f64> = points.iter().map(|p| p.dist2(&centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let Some(i) = pick(&scores, rng) else { break };
        let c = points[i];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.dist2(&c));
        }
    }
    centroids
}

fn lloyd(points: &[Lab], weights: &[f64], mut centroids: Vec<Lab>, cfg: &KMeansConfig) -> (Vec<Lab>, Vec<usize>, f64, Vec<f64>) {
    let k = centroids.len();
    let mut assignments = vec![0; points.len()];
    let mut history = Vec::new();
    let mut inertia;
    let mut iter = 0;
    loop {
        inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assignments[i] = c;
            inertia += weights[i] * d;
        }
        history.push(inertia);
        if iter >= cfg.max_iter {
            break;
        }
        iter += 1;

        let mut sums = vec![[0.0f64; 3]; k];
        let mut mass = vec![0.0f64; k];
        // a cluster made of copies of one point keeps that point exactly
        let mut single: Vec<Option<Lab>> = vec![None; k];
        let mut mixed = vec![false; k];
        for (i, p) in points.iter().enumerate() {
            let c = assignments[i];
            let w = weights[i];
            sums[c][0] += w * p.l;
            sums[c][1] += w * p.a;
            sums[c][2] += w * p.b;
            mass[c] += w;
            match single[c] {
                None => single[c] = Some(*p),
                Some(q) if q != *p => mixed[c] = true,
                _ => {}
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if mass[c] == 0.0 {
                continue; // empty cluster keeps its centroid
            }
            let next = if mixed[c] {
                Lab::new(sums[c][0] / mass[c], sums[c][1] / mass[c], sums[c][2] / mass[c])
            } else {
                single[c].expect("non-empty cluster")
            };
            shift = shift.max(next.dist2(&centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < cfg.tolerance {
            // final assignment against the converged centroids
            inertia = 0.0;
            for (i, p) in points.iter().enumerate() {
                let (c, d) = nearest(p, &centroids);
                assignments[i] = c;
                inertia += weights[i] * d;
            }
            if history.last() != Some(&inertia) {
                history.push(inertia);
            }
            break;
        }
    }
    (centroids, assignments, inertia, history)
}

/// Up to five colors ordered by descending weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Palette {
    pub colors: Vec<Lab>,
    pub weights: Vec<f64>,
}

impl Palette {
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Palette of a weighted color set, `k = min(5, distinct colors)`.
    pub fn from_weighted(points: &[Lab], weights: &[f64], seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Ok(Self::default());
        }
        let km = kmeans_weighted(points, weights, MAX_PALETTE_COLORS, seed, &KMeansConfig::default())?;
        Ok(Self {
            colors: km.centroids,
            weights: km.weights,
        })
    }

    pub fn from_pixels(bag: &PixelBag, seed: u64) -> Result<Self> {
        let (points, weights): (Vec<Lab>, Vec<f64>) = bag.iter().map(|(c, n)| (srgb_to_lab(c), n as f64)).unzip();
        Self::from_weighted(&points, &weights, seed)
    }

    pub fn entries(&self, cfg: VocabConfig) -> Vec<PaletteEntry> {
        self.colors
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| PaletteEntry {
                hex: c.to_rgb().to_hex(),
                code: quantize(*c, cfg),
                weight: *w,
            })
            .collect()
    }
}

/// Serialized palette color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub hex: String,
    pub code: ColorCode,
    pub weight: f64,
}

/// Image, svg and text palettes of one document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiPalette {
    pub image: Palette,
    pub svg: Palette,
    pub text: Palette,
}

impl MultiPalette {
    pub fn get(&self, group: Group) -> &Palette {
        match group {
            Group::Image => &self.image,
            Group::Svg => &self.svg,
            Group::Text => &self.text,
        }
    }

    pub fn groups(&self) -> [&Palette; 3] {
        [&self.image, &self.svg, &self.text]
    }

    pub fn to_json(&self, cfg: VocabConfig) -> serde_json::Value {
        serde_json::json!({
            "image": self.image.entries(cfg),
            "svg": self.svg.entries(cfg),
            "text": self.text.entries(cfg),
        })
    }
}

/// Extracts the image, svg and text palettes of a document.
///
/// Image and svg palettes cluster the group's composited pixels; the text
/// palette clusters the declared fill colors of visible text elements.
pub fn extract_multi_palette(doc: &GraphicDocument, seed: u64) -> Result<MultiPalette> {
    let [image, svg, text] = doc.group_elements();
    let text_colors: Vec<Lab> = text
        .iter()
        .filter(|e| e.is_visible())
        .flat_map(|e| e.colors.iter().map(|c| srgb_to_lab(*c)))
        .collect();
    Ok(MultiPalette {
        image: Palette::from_pixels(&composite_group(&image), seed)?,
        svg: Palette::from_pixels(&composite_group(&svg), seed.wrapping_add(1))?,
        text: Palette::from_weighted(&text_colors, &vec![1.0; text_colors.len()], seed.wrapping_add(2))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{ciede2000, Rgb};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use crate::document::{Element, ElementKind, RasterImage};

    fn rand_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Lab> {
        (0..n)
            .map(|_| Lab::new(rng.random_range(0.0..100.0), rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)))
            .collect()
    }

    #[test]
    fn k1_gives_the_mean() {
        let pts = vec![Lab::new(10.0, 0.0, 0.0), Lab::new(20.0, 10.0, -4.0), Lab::new(30.0, 20.0, 4.0)];
        let r = kmeans_lab(&pts, 1, 0).unwrap();
        let c = r.centroids[0];
        assert!((c.l - 20.0).abs() < 1e-12 && (c.a - 10.0).abs() < 1e-12 && c.b.abs() < 1e-12);
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn k_equal_to_distinct_has_zero_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pts = rand_points(&mut rng, 6);
        pts.extend(pts.clone());
        for seed in 0..20 {
            let r = kmeans_lab(&pts, 6, seed).unwrap();
            assert_eq!(r.inertia, 0.0);
            // k larger than distinct is reduced
            assert_eq!(kmeans_lab(&pts, 9, seed).unwrap().centroids.len(), 6);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(kmeans_lab(&[], 1, 0).is_err());
        assert!(kmeans_lab(&[Lab::default()], 0, 0).is_err());
        assert!(kmeans_weighted(&[Lab::default()], &[0.0], 1, 0, &KMeansConfig::default()).is_err());
        assert!(kmeans_weighted(&[Lab::default()], &[], 1, 0, &KMeansConfig::default()).is_err());
    }

    #[test]
    fn ordering_by_weight() {
        let pts = vec![Lab::new(10.0, 0.0, 0.0), Lab::new(90.0, 0.0, 0.0), Lab::new(50.0, 0.0, 0.0)];
        let r = kmeans_weighted(&pts, &[1.0, 5.0, 2.0], 3, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(r.centroids, vec![pts[1], pts[2], pts[0]]);
        assert_eq!(r.weights, vec![5.0 / 8.0, 2.0 / 8.0, 1.0 / 8.0]);
        assert_eq!(r.assignments, vec![2, 0, 1]);
        let tie = kmeans_weighted(&pts, &[1.0, 1.0, 1.0], 3, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(tie.centroids, vec![pts[0], pts[2], pts[1]]);
    }

    fn solid(id: &str, kind: ElementKind, w: f64, h: f64, colors: &[Rgb]) -> Element {
        Element { id: id.into(), kind, x: 0.0, y: 0.0, w, h, opacity: 1.0, colors: colors.to_vec(), raster: None }
    }

    #[test]
    fn document_palettes() {
        let red = Rgb::new(255, 0, 0);
        let doc = GraphicDocument { width: 100, height: 100, elements: vec![solid("bg", ElementKind::ColoredBackground, 100.0, 100.0, &[red])] };
        let mp = extract_multi_palette(&doc, 0).unwrap();
        assert!(mp.image.is_empty() && mp.text.is_empty());
        assert_eq!(mp.svg.colors, vec![srgb_to_lab(red)]);
        assert_eq!(mp.svg.weights, vec![1.0]);
        assert_eq!(mp.to_json(VocabConfig::default())["svg"][0]["hex"], "#FF0000");
    }

    #[test]
    fn recovers_well_separated_image_colors() {
        let truth = [Rgb::new(220, 30, 40), Rgb::new(20, 160, 60), Rgb::new(30, 60, 200), Rgb::new(240, 220, 40), Rgb::new(40, 40, 40)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (60u32, 50u32);
        let mut px = Vec::new();
        for y in 0..h {
            for _ in 0..w {
                let base = truth[(y as usize * 5) / h as usize];
                let jitter = |v: u8, rng: &mut ChaCha8Rng| (v as i16 + rng.random_range(-6i16..=6)).clamp(0, 255) as u8;
                px.push(Rgb::new(jitter(base.r, &mut rng), jitter(base.g, &mut rng), jitter(base.b, &mut rng)));
            }
        }
        let mut e = solid("img", ElementKind::Image, 60.0, 50.0, &[]);
        e.raster = Some(RasterImage::new(w, h, px).unwrap());
        let doc = GraphicDocument { width: 60, height: 50, elements: vec![e] };
        let mp = extract_multi_palette(&doc, 3).unwrap();
        assert_eq!(mp.image.len(), 5);
        for t in truth {
            let best = mp.image.colors.iter().map(|c| ciede2000(*c, srgb_to_lab(t))).fold(f64::INFINITY, f64::min);
            assert!(best <= 2.0, "{t}: {best}");
        }
        assert_eq!(mp, extract_multi_palette(&doc, 3).unwrap());
    }

    #[test]
    fn text_palette_from_fills() {
        let doc = GraphicDocument {
            width: 10,
            height: 10,
            elements: vec![
                solid("t1", ElementKind::Text, 5.0, 1.0, &[Rgb::BLACK]),
                solid("t2", ElementKind::Text, 1.0, 1.0, &[Rgb::BLACK, Rgb::WHITE]),
            ],
        };
        let mp = extract_multi_palette(&doc, 0).unwrap();
        assert_eq!(mp.text.colors, vec![srgb_to_lab(Rgb::BLACK), srgb_to_lab(Rgb::WHITE)]);
        assert!((mp.text.weights[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    /// Optimal inertia over every assignment of points to k labels.
    fn brute_force_inertia(pts: &[Lab], k: usize) -> f64 {
        let n = pts.len();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        loop {
            let mut inertia = 0.0;
            for c in 0..k {
                let members: Vec<&Lab> = pts.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                let m = members.len() as f64;
                let mean = Lab::new(
                    members.iter().map(|p| p.l).sum::<f64>() / m,
                    members.iter().map(|p| p.a).sum::<f64>() / m,
                    members.iter().map(|p| p.b).sum::<f64>() / m,
                );
                inertia += members.iter().map(|p| p.dist2(&mean)).sum::<f64>();
            }
            best = best.min(inertia);
            let mut i = 0;
            while i < n {
                labels[i] += 1;
                if labels[i] < k {
                    break;
                }
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
        }
    }

    #[test]
    fn matches_brute_force_optimum() {
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = rng.random_range(3..=8);
            let k = rng.random_range(1..=3);
            let pts = rand_points(&mut rng, n);
            let opt = brute_force_inertia(&pts, k);
            let got = kmeans_lab(&pts, k, seed).unwrap().inertia;
            assert!(got >= opt - 1e-9, "seed {seed}: {got} below optimum {opt}");
            if got - opt <= 1e-9 * opt.max(1.0) {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}/100 runs reached the optimum");
    }

    proptest! {
        #[test]
        fn kmeans_invariants(seed in 0u64..1000, n in 1usize..40, k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = rand_points(&mut rng, n);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let r = kmeans_weighted(&pts, &w, k, seed, &KMeansConfig::default()).unwrap();
            prop_assert!(r.centroids.len() <= k.min(n));
            prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(r.weights.windows(2).all(|p| p[0] >= p[1]));
            for pair in r.history.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-9, "{:?}", r.history);
            }
            prop_assert_eq!(&r, &kmeans_weighted(&pts, &w, k, seed, &KMeansConfig::default()).unwrap());
        }
    }
}
