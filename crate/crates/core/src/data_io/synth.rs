//! Seeded synthetic scenes for desk-scale runs.
//!
//! Objects are axis-aligned rectangles. Each one draws a closed edge ring
//! along its border (tangent orientations, per-object contrast) and a
//! smooth activation bump in the feature map. Clutter line segments, loose
//! edgels, interior texture and distractor blobs scale with the noise
//! settings. Candidate windows mix jittered ground truth with uniform boxes
//! and carry an edge-box-like score: the edge mass of contours lying fully
//! inside the window minus the inside mass of contours cut by its border,
//! divided by the window perimeter.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binary::{write_edge_map, write_feature_map};
use super::manifest::{save_manifest, DatasetManifest, GtBox, ImageEntry};
use super::records::write_candidates;
use crate::cascade::Candidate;
use crate::edge_bev::EdgeMap;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::spp::FeatureMap;

const PLACEMENT_ATTEMPTS: usize = 1000;
const MAX_OBJECT_IOU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_box: usize,
    pub max_box: usize,
    /// Clutter level in `[0, 1]`; zero renders object rings only.
    pub edge_noise: f64,
    /// Peak activation of object bumps in the feature map.
    pub feature_signal: f64,
    /// Spread of the per-window score noise.
    pub eb_noise: f64,
    pub channels: usize,
    /// Image pixels per feature-map cell.
    pub cell_size: usize,
    pub jittered_per_object: usize,
    pub random_candidates: usize,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_objects: 1,
            max_objects: 3,
            min_box: 20,
            max_box: 56,
            edge_noise: 0.4,
            feature_signal: 1.0,
            eb_noise: 0.1,
            channels: 16,
            cell_size: 8,
            jittered_per_object: 40,
            random_candidates: 600,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic scene: {m}")));
        if self.width < 8 || self.height < 8 {
            return bad("image must be at least 8x8");
        }
        if self.min_objects > self.max_objects {
            return bad("min_objects > max_objects");
        }
        if self.min_box < 4 || self.min_box > self.max_box {
            return bad("box size range must satisfy 4 <= min_box <= max_box");
        }
        if self.max_box + 2 > self.width.min(self.height) {
            return bad("max_box does not fit in the image");
        }
        if !(0.0..=1.0).contains(&self.edge_noise) {
            return bad("edge_noise must lie in [0, 1]");
        }
        if !(self.feature_signal >= 0.0) || !(self.eb_noise >= 0.0) {
            return bad("signal and noise levels must be non-negative");
        }
        if self.channels == 0 || self.cell_size == 0 {
            return bad("channels and cell_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub gt: Vec<GtBox>,
    pub edges: EdgeMap,
    pub features: FeatureMap,
    pub candidates: Vec<Candidate>,
}

/// Edge raster plus contour membership, used to score windows.
struct Canvas {
    width: usize,
    height: usize,
    magnitude: Vec<f32>,
    orientation: Vec<f32>,
    /// `0` for loose edgels and empty pixels, otherwise contour id + 1.
    label: Vec<u32>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            magnitude: vec![0.0; n],
            orientation: vec![0.0; n],
            label: vec![0; n],
        }
    }

    fn put(&mut self, x: i64, y: i64, mag: f32, theta: f64, label: u32) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = y as usize * self.width + x as usize;
        if mag > self.magnitude[i] {
            self.magnitude[i] = mag;
            self.orientation[i] = theta.rem_euclid(PI) as f32;
            self.label[i] = label;
        }
    }

    fn segment(&mut self, x0: f64, y0: f64, theta: f64, len: usize, mag: f32, label: u32) {
        let (dx, dy) = (theta.cos(), theta.sin());
        for s in 0..len {
            let x = (x0 + dx * s as f64).round() as i64;
            let y = (y0 + dy * s as f64).round() as i64;
            self.put(x, y, mag, theta, label);
        }
    }
}

struct Contour {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    pixels: Vec<(usize, usize, f64)>,
    mass: f64,
}

/// Window scorer over a finished canvas.
pub struct WindowScorer {
    width: usize,
    height: usize,
    contours: Vec<Contour>,
    loose: Vec<f64>,
}

/// Pixel index range whose centers fall inside `[lo, lo + len)`.
fn pixel_span(lo: f64, len: f64, n: usize) -> (usize, usize) {
    let a = (lo - 0.5).ceil().clamp(0.0, n as f64) as usize;
    let b = (lo + len - 0.5).ceil().clamp(0.0, n as f64) as usize;
    (a, b.max(a))
}

impl WindowScorer {
    fn new(c: &Canvas) -> Self {
        let (w, h) = (c.width, c.height);
        let n_contours = c.label.iter().copied().max().unwrap_or(0) as usize;
        let mut contours: Vec<Contour> = (0..n_contours)
            .map(|_| Contour {
                x0: usize::MAX,
                y0: usize::MAX,
                x1: 0,
                y1: 0,
                pixels: Vec::new(),
                mass: 0.0,
            })
            .collect();
        let mut loose = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                let i = y * w + x;
                let m = c.magnitude[i] as f64;
                match c.label[i] {
                    0 => row += m,
                    l if m > 0.0 => {
                        let ct = &mut contours[l as usize - 1];
                        ct.x0 = ct.x0.min(x);
                        ct.y0 = ct.y0.min(y);
                        ct.x1 = ct.x1.max(x + 1);
                        ct.y1 = ct.y1.max(y + 1);
                        ct.pixels.push((x, y, m));
                        ct.mass += m;
                    }
                    _ => {}
                }
                loose[(y + 1) * (w + 1) + x + 1] = loose[y * (w + 1) + x + 1] + row;
            }
        }
        contours.retain(|c| !c.pixels.is_empty());
        Self {
            width: w,
            height: h,
            contours,
            loose,
        }
    }

    /// Enclosed minus cut contour mass over the window perimeter.
    pub fn score(&self, b: &BoundingBox) -> f64 {
        let (px0, px1) = pixel_span(b.x, b.w, self.width);
        let (py0, py1) = pixel_span(b.y, b.h, self.height);
        let stride = self.width + 1;
        let at = |x: usize, y: usize| self.loose[y * stride + x];
        let mut mass = at(px1, py1) - at(px0, py1) - at(px1, py0) + at(px0, py0);
        for c in &self.contours {
            if c.x1 <= px0 || c.x0 >= px1 || c.y1 <= py0 || c.y0 >= py1 {
                continue;
            }
            if c.x0 >= px0 && c.x1 <= px1 && c.y0 >= py0 && c.y1 <= py1 {
                mass += c.mass;
            } else {
                let inside: f64 = c
                    .pixels
                    .iter()
                    .filter(|&&(x, y, _)| x >= px0 && x < px1 && y >= py0 && y < py1)
                    .map(|p| p.2)
                    .sum();
                mass -= inside;
            }
        }
        mass / (2.0 * (b.w + b.h))
    }
}

fn place_objects(rng: &mut ChaCha8Rng, spec: &SyntheticSceneSpec) -> Result<Vec<BoundingBox>> {
    let count = rng.gen_range(spec.min_objects..=spec.max_objects);
    let mut boxes: Vec<BoundingBox> = Vec::with_capacity(count);
    let mut attempts = 0;
    while boxes.len() < count {
        if attempts == PLACEMENT_ATTEMPTS {
            if boxes.len() >= spec.min_objects {
                break;
            }
            return Err(Error::Infeasible(format!(
                "placed {} of at least {} objects after {PLACEMENT_ATTEMPTS} attempts",
                boxes.len(),
                spec.min_objects
            )));
        }
        attempts += 1;
        let w = rng.gen_range(spec.min_box..=spec.max_box);
        let h = rng.gen_range(spec.min_box..=spec.max_box);
        let x = rng.gen_range(1..=spec.width - w - 1);
        let y = rng.gen_range(1..=spec.height - h - 1);
        let b = BoundingBox::new(x as f64, y as f64, w as f64, h as f64);
        if boxes.iter().all(|o| iou(o, &b) <= MAX_OBJECT_IOU) {
            boxes.push(b);
        }
    }
    Ok(boxes)
}

fn draw_ring(canvas: &mut Canvas, rng: &mut ChaCha8Rng, b: &BoundingBox, contrast: f64, label: u32) {
    let (x0, y0) = (b.x as i64, b.y as i64);
    let (x1, y1) = (x0 + b.w as i64 - 1, y0 + b.h as i64 - 1);
    let mag = |rng: &mut ChaCha8Rng| (contrast * rng.gen_range(0.8..=1.0)) as f32;
    let jit = |rng: &mut ChaCha8Rng| rng.gen_range(-0.1..=0.1);
    for x in x0..=x1 {
        let m = mag(rng);
        let t = jit(rng);
        canvas.put(x, y0, m, t, label);
        let m = mag(rng);
        let t = jit(rng);
        canvas.put(x, y1, m, t, label);
    }
    for y in y0 + 1..y1 {
        let m = mag(rng);
        let t = 0.5 * PI + jit(rng);
        canvas.put(x0, y, m, t, label);
        let m = mag(rng);
        let t = 0.5 * PI + jit(rng);
        canvas.put(x1, y, m, t, label);
    }
}

fn bump(fm: &mut [f32], spec: &SyntheticSceneSpec, dims: (usize, usize), b: &BoundingBox, channel: usize, peak: f64) {
    let (mw, mh) = dims;
    let (cx, cy) = b.center();
    let (sx, sy) = (0.35 * b.w, 0.35 * b.h);
    let cell = spec.cell_size as f64;
    for y in 0..mh {
        for x in 0..mw {
            let px = (x as f64 + 0.5) * cell;
            let py = (y as f64 + 0.5) * cell;
            let v = peak
                * (-((px - cx).powi(2) / (2.0 * sx * sx) + (py - cy).powi(2) / (2.0 * sy * sy))).exp();
            let i = (channel * mh + y) * mw + x;
            fm[i] = fm[i].max(v as f32);
        }
    }
}

fn clip_box(b: BoundingBox, w: f64, h: f64) -> Option<BoundingBox> {
    let x0 = b.x.max(0.0);
    let y0 = b.y.max(0.0);
    let x1 = b.right().min(w);
    let y1 = b.bottom().min(h);
    (x1 - x0 >= 4.0 && y1 - y0 >= 4.0).then(|| BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
}

/// Renders one scene; the same spec always yields the same scene.
pub fn generate_synthetic_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    generate_scene_with_scorer(spec).map(|(scene, _)| scene)
}

/// Like [`generate_synthetic_scene`], also returning the noise-free window
/// scorer of the rendered edges.
pub fn generate_scene_with_scorer(spec: &SyntheticSceneSpec) -> Result<(SyntheticScene, WindowScorer)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let objects = place_objects(&mut rng, spec)?;
    let (w, h) = (spec.width, spec.height);
    let mut canvas = Canvas::new(w, h);
    let mut next_label = 1u32;
    let noise = spec.edge_noise;

    // clutter first so object rings win where they overlap
    let n_clutter = (noise * 20.0).round() as usize;
    for _ in 0..n_clutter {
        let x = rng.gen_range(0.0..w as f64);
        let y = rng.gen_range(0.0..h as f64);
        let theta = rng.gen_range(0.0..PI);
        let len = rng.gen_range(6..=40);
        let m = rng.gen_range(0.3..=0.9) as f32;
        canvas.segment(x, y, theta, len, m, next_label);
        next_label += 1;
    }
    let p_loose = 0.05 * noise;
    for y in 0..h {
        for x in 0..w {
            if rng.gen::<f64>() < p_loose {
                let m = rng.gen_range(0.0..0.3) as f32;
                let t = rng.gen_range(0.0..PI);
                canvas.put(x as i64, y as i64, m, t, 0);
            }
        }
    }
    let mut contrasts = Vec::with_capacity(objects.len());
    for b in &objects {
        let contrast = rng.gen_range(0.35..=1.0);
        contrasts.push(contrast);
        let n_tex = (noise * b.area() / 150.0).round() as usize;
        for _ in 0..n_tex {
            let x = rng.gen_range(b.x + 3.0..b.right() - 3.0);
            let y = rng.gen_range(b.y + 3.0..b.bottom() - 3.0);
            let theta = rng.gen_range(0.0..PI);
            let len = rng.gen_range(3..=8);
            let m = (contrast * rng.gen_range(0.2..=0.5)) as f32;
            canvas.segment(x, y, theta, len, m, next_label);
            next_label += 1;
        }
        draw_ring(&mut canvas, &mut rng, b, contrast, next_label);
        next_label += 1;
    }

    let mw = w.div_ceil(spec.cell_size);
    let mh = h.div_ceil(spec.cell_size);
    let c = spec.channels;
    let mut fm: Vec<f32> = (0..c * mw * mh)
        .map(|_| rng.gen_range(0.0..0.2 * noise.max(0.05)) as f32)
        .collect();
    let generic = (c / 4).max(1);
    for b in &objects {
        for ch in 0..generic {
            bump(&mut fm, spec, (mw, mh), b, ch, 0.8 * spec.feature_signal);
        }
        for ch in generic..c {
            if rng.gen_bool(0.5) {
                let peak = spec.feature_signal * rng.gen_range(0.5..=1.0);
                bump(&mut fm, spec, (mw, mh), b, ch, peak);
            }
        }
    }
    let n_distractors = (noise * 3.0).round() as usize;
    for _ in 0..n_distractors {
        let bw = rng.gen_range(spec.min_box..=spec.max_box) as f64;
        let bh = rng.gen_range(spec.min_box..=spec.max_box) as f64;
        let b = BoundingBox::new(
            rng.gen_range(0.0..(w as f64 - bw)),
            rng.gen_range(0.0..(h as f64 - bh)),
            bw,
            bh,
        );
        let ch = rng.gen_range(generic.min(c - 1)..c);
        bump(&mut fm, spec, (mw, mh), &b, ch, 0.5 * spec.feature_signal);
    }

    let scorer = WindowScorer::new(&canvas);
    let (wf, hf) = (w as f64, h as f64);
    let mut boxes = Vec::new();
    for g in &objects {
        for _ in 0..spec.jittered_per_object {
            let (cx, cy) = g.center();
            let cx = cx + rng.gen_range(-0.25..=0.25) * g.w;
            let cy = cy + rng.gen_range(-0.25..=0.25) * g.h;
            let bw = g.w * rng.gen_range(-0.35f64..=0.35).exp();
            let bh = g.h * rng.gen_range(-0.35f64..=0.35).exp();
            if let Some(b) = clip_box(BoundingBox::new(cx - 0.5 * bw, cy - 0.5 * bh, bw, bh), wf, hf) {
                boxes.push(b);
            }
        }
    }
    let min_side = 12.0f64.min(wf).min(hf);
    for _ in 0..spec.random_candidates {
        let bw = rng.gen_range(min_side..=0.8 * wf);
        let bh = rng.gen_range(min_side..=0.8 * hf);
        boxes.push(BoundingBox::new(
            rng.gen_range(0.0..=wf - bw),
            rng.gen_range(0.0..=hf - bh),
            bw,
            bh,
        ));
    }
    boxes.shuffle(&mut rng);
    let candidates = boxes
        .into_iter()
        .map(|b| Candidate {
            bbox: b,
            eb_score: scorer.score(&b) + spec.eb_noise * rng.gen_range(-1.0..=1.0),
        })
        .collect();

    let gt = objects
        .iter()
        .map(|b| GtBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
            class_name: "object".to_string(),
            difficult: false,
        })
        .collect();
    let scene = SyntheticScene {
        gt,
        edges: EdgeMap::new(w, h, canvas.magnitude, canvas.orientation)?,
        features: FeatureMap::new(c, mw, mh, w, h, fm)?,
        candidates,
    };
    Ok((scene, scorer))
}

/// Per-scene seed derived from a dataset seed.
pub fn scene_seed(dataset_seed: u64, index: usize) -> u64 {
    // splitmix64 step
    let mut z = dataset_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `count` scenes (edge maps, feature maps, candidate files) and a
/// manifest into `dir`.
pub fn write_synthetic_dataset(dir: &Path, count: usize, spec: &SyntheticSceneSpec) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = DatasetManifest::new(dir);
    manifest
        .generator
        .insert("name".into(), serde_json::Value::from("synthetic"));
    manifest.generator.insert(
        "spec".into(),
        serde_json::to_value(spec).map_err(|e| Error::Message(e.to_string()))?,
    );
    for i in 0..count {
        let scene_spec = SyntheticSceneSpec {
            seed: scene_seed(spec.seed, i),
            ..spec.clone()
        };
        let scene = generate_synthetic_scene(&scene_spec)?;
        let id = format!("synth_{i:05}");
        let (e, f, c) = (
            format!("{id}.emap"),
            format!("{id}.fmap"),
            format!("{id}.candidates.jsonl"),
        );
        write_edge_map(&dir.join(&e), &scene.edges)?;
        write_feature_map(&dir.join(&f), &scene.features)?;
        write_candidates(&dir.join(&c), &id, &scene.candidates)?;
        manifest.images.push(ImageEntry {
            image_id: id,
            width: spec.width,
            height: spec.height,
            edge_map: e.into(),
            feature_map: f.into(),
            candidates: c.into(),
            gt: scene.gt,
        });
    }
    save_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
