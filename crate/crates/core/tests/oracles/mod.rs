//! Naive reference implementations used as test oracles. None of them
//! shares code with the library beyond plain data types.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use sspb_core::{BoundingBox, EdgeMap, FeatureMap, ScoredBox};

/// IoU of integer-aligned boxes by counting unit pixels.
pub fn iou_pixel_count(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let x0 = a.x.min(b.x) as i64;
    let y0 = a.y.min(b.y) as i64;
    let x1 = (a.x + a.w).max(b.x + b.w) as i64;
    let y1 = (a.y + a.h).max(b.y + b.h) as i64;
    let inside = |bx: &BoundingBox, px: i64, py: i64| {
        let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
        cx > bx.x && cx < bx.x + bx.w && cy > bx.y && cy < bx.y + bx.h
    };
    let (mut inter, mut union) = (0u64, 0u64);
    for py in y0..y1 {
        for px in x0..x1 {
            let (ia, ib) = (inside(a, px, py), inside(b, px, py));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy NMS found by exhaustive search: the unique subset `S` such that a
/// box is in `S` iff no higher-ranked member of `S` overlaps it by more
/// than `t`. Ranking is by score, then by index. Returns every subset that
/// satisfies the condition, each in rank order.
pub fn nms_fixed_points(boxes: &[ScoredBox], t: f64) -> Vec<Vec<usize>> {
    let n = boxes.len();
    assert!(n <= 16);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let member = |i: usize| mask & (1 << i) != 0;
        let ok = order.iter().enumerate().all(|(r, &i)| {
            let blocked = order[..r]
                .iter()
                .any(|&j| member(j) && pixel_free_iou(&boxes[i].bbox, &boxes[j].bbox) > t);
            member(i) == !blocked
        });
        if ok {
            out.push(order.iter().copied().filter(|&i| member(i)).collect());
        }
    }
    out
}

/// IoU from corner arithmetic written independently of the library.
pub fn pixel_free_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.w * a.h + b.w * b.h - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Per-orientation edge mass of the pixel rectangle obtained by rounding
/// each edge of `(x0, y0, x1, y1)` and clipping to the image, summed pixel
/// by pixel.
pub fn bev_naive_pool(e: &EdgeMap, x0: f64, y0: f64, x1: f64, y1: f64) -> [f64; 4] {
    let cx = |v: f64| v.round().max(0.0).min(e.width() as f64) as usize;
    let cy = |v: f64| v.round().max(0.0).min(e.height() as f64) as usize;
    let mut out = [0.0; 4];
    for y in cy(y0)..cy(y1) {
        for x in cx(x0)..cx(x1) {
            // orientations are stored as f32, so wrap at that precision
            let pi = PI as f32;
            let mut t = e.orientation_at(x, y) % pi;
            if t < 0.0 {
                t += pi;
            }
            let t = if t >= pi { 0.0 } else { t as f64 };
            let bin = ((t * 4.0 / PI).floor() as usize).min(3);
            out[bin] += e.magnitude_at(x, y) as f64;
        }
    }
    out
}

/// Box enlarged by `frac` around its center.
pub fn enlarge(b: &BoundingBox, frac: f64) -> BoundingBox {
    let (w, h) = (b.w * (1.0 + frac), b.h * (1.0 + frac));
    BoundingBox::new(b.x + 0.5 * b.w - 0.5 * w, b.y + 0.5 * b.h - 0.5 * h, w, h)
}

/// Cells `[x0, x1) x [y0, y1)` covered by `b` on the map: floor of the
/// scaled leading edge, ceil of the scaled trailing edge, clipped, at least
/// one cell wide.
pub fn spp_cells(b: &BoundingBox, fm: &FeatureMap) -> (usize, usize, usize, usize) {
    let sx = fm.map_width() as f64 / fm.image_width() as f64;
    let sy = fm.map_height() as f64 / fm.image_height() as f64;
    let span = |lo: f64, hi: f64, s: f64, n: usize| {
        let a = ((lo * s).floor().max(0.0) as usize).min(n - 1);
        let b = ((hi * s).ceil().max(0.0) as usize).min(n);
        (a, b.max(a + 1))
    };
    let (x0, x1) = span(b.x, b.x + b.w, sx, fm.map_width());
    let (y0, y1) = span(b.y, b.y + b.h, sy, fm.map_height());
    (x0, y0, x1, y1)
}

/// Max over channel `c` of the `(row, col)` cell of a `d x d` grid laid on
/// the box's cells, by direct scan.
pub fn spp_naive_max(fm: &FeatureMap, b: &BoundingBox, d: usize, row: usize, col: usize, c: usize) -> f64 {
    let (x0, y0, x1, y1) = spp_cells(b, fm);
    let (nw, nh) = (x1 - x0, y1 - y0);
    let sx0 = x0 + (col * nw) / d;
    let sx1 = x0 + ((col + 1) * nw + d - 1) / d;
    let sy0 = y0 + (row * nh) / d;
    let sy1 = y0 + ((row + 1) * nh + d - 1) / d;
    let mut m = f64::NEG_INFINITY;
    for y in sy0..sy1 {
        for x in sx0..sx1 {
            m = m.max(fm.at(c, y, x) as f64);
        }
    }
    m
}

/// Nelder–Mead with restarts; returns the best point found.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], scale: f64, restarts: usize) -> Vec<f64> {
    let n = start.len();
    let mut best = start.to_vec();
    let mut step = scale;
    for _ in 0..restarts {
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for i in 0..n {
            let mut p = best.clone();
            p[i] += step;
            simplex.push(p);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        for _ in 0..20_000 {
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            vals = idx.iter().map(|&i| vals[i]).collect();
            let size = simplex[1..]
                .iter()
                .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if size < 1e-13 {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect()
            };
            let refl = along(-1.0);
            let fr = f(&refl);
            if fr < vals[0] {
                let exp = along(-2.0);
                let fe = f(&exp);
                if fe < fr {
                    simplex[n] = exp;
                    vals[n] = fe;
                } else {
                    simplex[n] = refl;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                simplex[n] = refl;
                vals[n] = fr;
            } else {
                let con = if fr < vals[n] { along(-0.5) } else { along(0.5) };
                let fc = f(&con);
                if fc < vals[n].min(fr) {
                    simplex[n] = con;
                    vals[n] = fc;
                } else {
                    for i in 1..=n {
                        simplex[i] = simplex[i]
                            .iter()
                            .zip(&simplex[0])
                            .map(|(p, b)| b + 0.5 * (p - b))
                            .collect();
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let i = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        best = simplex[i].clone();
        step *= 0.1;
    }
    best
}

/// Trapezoidal area under the recall curve on `[0.5, 1]` with spacing
/// `step`, scaled by 2.
pub fn ar_trapezoid(best_iou: &[f64], step: f64) -> f64 {
    let n = (0.5 / step).round() as usize;
    let recall = |t: f64| best_iou.iter().filter(|&&o| o >= t).count() as f64 / best_iou.len() as f64;
    let mut area = 0.0;
    for i in 0..n {
        let a = 0.5 + i as f64 * step;
        area += 0.5 * (recall(a) + recall(a + step)) * step;
    }
    2.0 * area
}

pub fn random_int_box<R: Rng>(rng: &mut R, extent: i64, max_side: i64) -> BoundingBox {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let x = rng.gen_range(0..=(extent - w));
    let y = rng.gen_range(0..=(extent - h));
    BoundingBox::new(x as f64, y as f64, w as f64, h as f64)
}

pub fn random_edge_map<R: Rng>(rng: &mut R, w: usize, h: usize) -> EdgeMap {
    let mag = (0..w * h)
        .map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.0..1.0) } else { 0.0 })
        .collect();
    let ori = (0..w * h).map(|_| rng.gen_range(-4.0..7.0)).collect();
    EdgeMap::new(w, h, mag, ori).unwrap()
}

pub fn random_feature_map<R: Rng>(rng: &mut R, c: usize, mw: usize, mh: usize, iw: usize, ih: usize) -> FeatureMap {
    let data = (0..c * mw * mh).map(|_| rng.gen_range(-1.0f32..3.0).max(0.0)).collect();
    FeatureMap::new(c, mw, mh, iw, ih, data).unwrap()
}

fn sb(x: f64, y: f64, w: f64, h: f64, s: f64) -> ScoredBox {
    ScoredBox::new(BoundingBox::new(x, y, w, h), s)
}

/// Twenty five-box scenes: chains, nests, ties, disjoint sets, duplicates.
pub fn crafted_nms_cases() -> Vec<(Vec<ScoredBox>, f64)> {
    vec![
        (vec![sb(0., 0., 10., 10., 0.9), sb(1., 1., 10., 10., 0.8), sb(30., 0., 10., 10., 0.7), sb(31., 0., 10., 10., 0.6), sb(60., 60., 5., 5., 0.5)], 0.5),
        (vec![sb(0., 0., 10., 10., 0.5); 5], 0.5),
        (vec![sb(0., 0., 10., 10., 0.1), sb(5., 0., 10., 10., 0.2), sb(10., 0., 10., 10., 0.3), sb(15., 0., 10., 10., 0.4), sb(20., 0., 10., 10., 0.5)], 0.3),
        (vec![sb(0., 0., 10., 10., 0.5), sb(5., 0., 10., 10., 0.4), sb(10., 0., 10., 10., 0.3), sb(15., 0., 10., 10., 0.2), sb(20., 0., 10., 10., 0.1)], 0.3),
        (vec![sb(0., 0., 40., 40., 0.9), sb(5., 5., 30., 30., 0.8), sb(10., 10., 20., 20., 0.7), sb(15., 15., 10., 10., 0.6), sb(18., 18., 4., 4., 0.5)], 0.5),
        (vec![sb(0., 0., 40., 40., 0.9), sb(5., 5., 30., 30., 0.8), sb(10., 10., 20., 20., 0.7), sb(15., 15., 10., 10., 0.6), sb(18., 18., 4., 4., 0.5)], 0.2),
        (vec![sb(0., 0., 10., 10., 1.0), sb(20., 0., 10., 10., 1.0), sb(40., 0., 10., 10., 1.0), sb(60., 0., 10., 10., 1.0), sb(80., 0., 10., 10., 1.0)], 0.1),
        (vec![sb(0., 0., 10., 10., 0.3), sb(0., 0., 10., 10., 0.3), sb(2., 0., 10., 10., 0.9), sb(50., 50., 10., 10., 0.3), sb(52., 50., 10., 10., 0.3)], 0.5),
        (vec![sb(0., 0., 10., 10., 0.9), sb(5., 0., 10., 10., 0.8), sb(10., 0., 10., 10., 0.7), sb(0., 20., 10., 10., 0.6), sb(5., 20., 10., 10., 0.5)], 1.0 / 3.0),
        (vec![sb(0., 0., 10., 10., 0.9), sb(5., 0., 10., 10., 0.8), sb(10., 0., 10., 10., 0.7), sb(0., 20., 10., 10., 0.6), sb(5., 20., 10., 10., 0.5)], 0.3),
        (vec![sb(0., 0., 20., 10., 0.9), sb(0., 0., 10., 20., 0.8), sb(0., 0., 10., 10., 0.7), sb(10., 10., 10., 10., 0.6), sb(0., 0., 20., 20., 0.5)], 0.4),
        (vec![sb(0., 0., 20., 10., 0.9), sb(0., 0., 10., 20., 0.8), sb(0., 0., 10., 10., 0.7), sb(10., 10., 10., 10., 0.6), sb(0., 0., 20., 20., 0.5)], 0.6),
        (vec![sb(0., 0., 8., 8., 0.2), sb(1., 1., 8., 8., 0.4), sb(2., 2., 8., 8., 0.6), sb(3., 3., 8., 8., 0.8), sb(4., 4., 8., 8., 1.0)], 0.7),
        (vec![sb(0., 0., 8., 8., 0.2), sb(1., 1., 8., 8., 0.4), sb(2., 2., 8., 8., 0.6), sb(3., 3., 8., 8., 0.8), sb(4., 4., 8., 8., 1.0)], 0.5),
        (vec![sb(0., 0., 8., 8., 0.2), sb(1., 1., 8., 8., 0.4), sb(2., 2., 8., 8., 0.6), sb(3., 3., 8., 8., 0.8), sb(4., 4., 8., 8., 1.0)], 1.0),
        (vec![sb(0., 0., 10., 10., -1.0), sb(3., 3., 10., 10., -2.0), sb(6., 6., 10., 10., -0.5), sb(9., 9., 10., 10., -3.0), sb(12., 12., 10., 10., 0.0)], 0.2),
        (vec![sb(0., 0., 100., 100., 0.1), sb(10., 10., 10., 10., 0.9), sb(30., 30., 10., 10., 0.8), sb(50., 50., 10., 10., 0.7), sb(70., 70., 10., 10., 0.6)], 0.01),
        (vec![sb(0., 0., 100., 100., 0.9), sb(10., 10., 10., 10., 0.8), sb(30., 30., 10., 10., 0.7), sb(50., 50., 10., 10., 0.6), sb(70., 70., 10., 10., 0.5)], 0.001),
        (vec![sb(0.5, 0.25, 9.5, 9.75, 0.6), sb(0.0, 0.0, 10.0, 10.0, 0.6), sb(4.5, 4.5, 10.5, 10.5, 0.5), sb(9.0, 0.0, 3.0, 30.0, 0.4), sb(0.0, 9.0, 30.0, 3.0, 0.3)], 0.25),
        (vec![sb(0., 0., 10., 10., 0.9), sb(10., 0., 10., 10., 0.8), sb(0., 10., 10., 10., 0.7), sb(10., 10., 10., 10., 0.6), sb(5., 5., 10., 10., 0.5)], 0.1),
    ]
}
