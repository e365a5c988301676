//! Boundary edge vectors: orientation-binned edge mass pooled in stripe bins
//! laid along the four sides of an enlarged box.
//!
//! Edge magnitudes are split into four undirected orientation bins
//! (`[0, π/4)`, `[π/4, π/2)`, ...), each turned into an integral image so any
//! rectangle sum costs four lookups. A [`BevLayout`] describes 160 bins per
//! stripe fraction `P`: on each side, a band of depth `P` (relative to the
//! enlarged box) is cut into 8 stripes parallel to that side and each stripe
//! into 5 segments.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::sparse_svm::BinSelection;

pub const ORIENTATION_BINS: usize = 4;
pub const STRIPES_PER_SIDE: usize = 8;
pub const SEGMENTS_PER_STRIPE: usize = 5;
pub const BINS_PER_SIDE: usize = STRIPES_PER_SIDE * SEGMENTS_PER_STRIPE;
pub const BINS_PER_LAYOUT: usize = 4 * BINS_PER_SIDE;
pub const DEFAULT_ENLARGEMENT: f64 = 0.10;
pub const DEFAULT_STRIPE_FRACTIONS: [f64; 7] = [0.16, 0.18, 0.22, 0.24, 0.28, 0.32, 0.36];

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    magnitude: Vec<f32>,
    orientation: Vec<f32>,
}

impl EdgeMap {
    /// Builds an edge map from row-major rasters. Orientations are wrapped
    /// into `[0, π)`.
    pub fn new(
        width: usize,
        height: usize,
        magnitude: Vec<f32>,
        orientation: Vec<f32>,
    ) -> Result<Self> {
        let n = width * height;
        if magnitude.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: magnitude.len(),
            });
        }
        if orientation.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: orientation.len(),
            });
        }
        if let Some(m) = magnitude.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "edge magnitude {m} is not finite and non-negative"
            )));
        }
        if orientation.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidParameter("non-finite edge orientation".into()));
        }
        let orientation = orientation.into_iter().map(wrap_orientation).collect();
        Ok(Self {
            width,
            height,
            magnitude,
            orientation,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            magnitude: vec![0.0; width * height],
            orientation: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn magnitude(&self) -> &[f32] {
        &self.magnitude
    }

    pub fn orientation(&self) -> &[f32] {
        &self.orientation
    }

    pub fn magnitude_at(&self, x: usize, y: usize) -> f32 {
        self.magnitude[y * self.width + x]
    }

    pub fn orientation_at(&self, x: usize, y: usize) -> f32 {
        self.orientation[y * self.width + x]
    }
}

pub(crate) fn wrap_orientation(theta: f32) -> f32 {
    let pi = PI as f32;
    let w = theta.rem_euclid(pi);
    // rem_euclid can round up to exactly pi for tiny negative inputs
    if w >= pi {
        0.0
    } else {
        w
    }
}

/// Orientation bin of an undirected angle in `[0, π)`.
pub fn orientation_bin(theta: f32) -> usize {
    let t = wrap_orientation(theta) as f64;
    ((t / (PI / ORIENTATION_BINS as f64)) as usize).min(ORIENTATION_BINS - 1)
}

/// Four `(H+1) x (W+1)` integral images, one per orientation bin, with the
/// exclusive-prefix convention: entry `(y, x)` holds the mass of pixels
/// `[0, x) x [0, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationIntegrals {
    width: usize,
    height: usize,
    channels: [Vec<f64>; ORIENTATION_BINS],
}

impl OrientationIntegrals {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, bin: usize) -> &[f64] {
        &self.channels[bin]
    }

    #[inline]
    fn at(&self, bin: usize, x: usize, y: usize) -> f64 {
        self.channels[bin][y * (self.width + 1) + x]
    }

    /// Per-bin mass over the pixel rectangle `[x0, x1) x [y0, y1)`.
    /// Coordinates must already be clipped to the image.
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> [f64; ORIENTATION_BINS] {
        let mut out = [0.0; ORIENTATION_BINS];
        if x1 <= x0 || y1 <= y0 {
            return out;
        }
        for (bin, o) in out.iter_mut().enumerate() {
            *o = self.at(bin, x1, y1) - self.at(bin, x0, y1) - self.at(bin, x1, y0)
                + self.at(bin, x0, y0);
        }
        out
    }

    /// Snaps a real-valued rectangle to the pixel grid (nearest integer per
    /// edge), clips it to the image and pools it.
    pub fn pool(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> [f64; ORIENTATION_BINS] {
        match snap_rect(x0, y0, x1, y1, self.width, self.height) {
            Some((a, b, c, d)) => self.rect_sum(a, b, c, d),
            None => [0.0; ORIENTATION_BINS],
        }
    }
}

/// Rounds each edge to the nearest integer and clips to `[0, w] x [0, h]`.
/// `None` when the result is empty.
pub fn snap_rect(
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    width: usize,
    height: usize,
) -> Option<(usize, usize, usize, usize)> {
    let clip = |v: f64, hi: usize| -> usize { v.round().clamp(0.0, hi as f64) as usize };
    let (a, c) = (clip(x0, width), clip(x1, width));
    let (b, d) = (clip(y0, height), clip(y1, height));
    if c > a && d > b {
        Some((a, b, c, d))
    } else {
        None
    }
}

pub fn quantize_orientations(edges: &EdgeMap) -> OrientationIntegrals {
    let (w, h) = (edges.width, edges.height);
    let stride = w + 1;
    let mut channels: [Vec<f64>; ORIENTATION_BINS] =
        std::array::from_fn(|_| vec![0.0; stride * (h + 1)]);
    let mut row = [0.0f64; ORIENTATION_BINS];
    for y in 0..h {
        row.fill(0.0);
        for x in 0..w {
            let i = y * w + x;
            let bin = orientation_bin(edges.orientation[i]);
            row[bin] += edges.magnitude[i] as f64;
            for (c, ch) in channels.iter_mut().enumerate() {
                ch[(y + 1) * stride + x + 1] = ch[y * stride + x + 1] + row[c];
            }
        }
    }
    OrientationIntegrals {
        width: w,
        height: h,
        channels,
    }
}

pub fn enlarge_box(bbox: &BoundingBox) -> BoundingBox {
    enlarge_box_by(bbox, DEFAULT_ENLARGEMENT)
}

/// Scales width and height by `1 + fraction` around the box center.
pub fn enlarge_box_by(bbox: &BoundingBox, fraction: f64) -> BoundingBox {
    let w = bbox.w * (1.0 + fraction);
    let h = bbox.h * (1.0 + fraction);
    let (cx, cy) = bbox.center();
    BoundingBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
}

/// Rectangle in coordinates normalized to a box frame, `[0, 1]` on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl NormRect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Maps the rectangle into pixel coordinates of `frame`.
    pub fn in_frame(&self, frame: &BoundingBox) -> (f64, f64, f64, f64) {
        (
            frame.x + self.x0 * frame.w,
            frame.y + self.y0 * frame.h,
            frame.x + self.x1 * frame.w,
            frame.y + self.y1 * frame.h,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Top,
    Right,
    Bottom,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Right, Side::Bottom, Side::Left];
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevLayout {
    stripe_fraction: f64,
    bins: Vec<NormRect>,
}

impl BevLayout {
    pub fn stripe_fraction(&self) -> f64 {
        self.stripe_fraction
    }

    pub fn bins(&self) -> &[NormRect] {
        &self.bins
    }

    /// Side a bin index belongs to.
    pub fn side_of(bin: usize) -> Side {
        Side::ALL[bin / BINS_PER_SIDE]
    }
}

/// Bins ordered by side (top, right, bottom, left), then stripe from the
/// outer edge inward, then segment left-to-right or top-to-bottom.
pub fn build_bev_layout(stripe_fraction: f64) -> Result<BevLayout> {
    if !(stripe_fraction > 0.0 && stripe_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "stripe fraction {stripe_fraction} outside (0, 1)"
        )));
    }
    let t = stripe_fraction / STRIPES_PER_SIDE as f64;
    let seg = 1.0 / SEGMENTS_PER_STRIPE as f64;
    let mut bins = Vec::with_capacity(BINS_PER_LAYOUT);
    for side in Side::ALL {
        for k in 0..STRIPES_PER_SIDE {
            let (inner, outer) = (k as f64 * t, (k + 1) as f64 * t);
            for j in 0..SEGMENTS_PER_STRIPE {
                let (s0, s1) = (j as f64 * seg, (j + 1) as f64 * seg);
                let r = match side {
                    Side::Top => NormRect { x0: s0, y0: inner, x1: s1, y1: outer },
                    Side::Right => NormRect { x0: 1.0 - outer, y0: s0, x1: 1.0 - inner, y1: s1 },
                    Side::Bottom => NormRect { x0: s0, y0: 1.0 - outer, x1: s1, y1: 1.0 - inner },
                    Side::Left => NormRect { x0: inner, y0: s0, x1: outer, y1: s1 },
                };
                bins.push(r);
            }
        }
    }
    Ok(BevLayout {
        stripe_fraction,
        bins,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevBank {
    layouts: Vec<BevLayout>,
    selection: Option<BinSelection>,
    enlargement: f64,
}

impl BevBank {
    pub fn new(fractions: &[f64]) -> Result<Self> {
        let layouts = fractions
            .iter()
            .map(|&p| build_bev_layout(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layouts,
            selection: None,
            enlargement: DEFAULT_ENLARGEMENT,
        })
    }

    /// The seven default layouts, 1120 bins.
    pub fn standard() -> Self {
        Self::new(&DEFAULT_STRIPE_FRACTIONS).expect("default stripe fractions are valid")
    }

    pub fn with_selection(mut self, selection: BinSelection) -> Result<Self> {
        if let Some(&bad) = selection.kept().iter().find(|&&k| k >= self.total_bins()) {
            return Err(Error::InvalidParameter(format!(
                "BEV bin {bad} out of range (bank has {} bins)",
                self.total_bins()
            )));
        }
        self.selection = Some(selection);
        Ok(self)
    }

    pub fn with_enlargement(mut self, fraction: f64) -> Self {
        self.enlargement = fraction;
        self
    }

    pub fn layouts(&self) -> &[BevLayout] {
        &self.layouts
    }

    pub fn selection(&self) -> Option<&BinSelection> {
        self.selection.as_ref()
    }

    pub fn enlargement(&self) -> f64 {
        self.enlargement
    }

    pub fn total_bins(&self) -> usize {
        self.layouts.len() * BINS_PER_LAYOUT
    }

    /// Global bin index → normalized rectangle.
    pub fn bin(&self, index: usize) -> &NormRect {
        &self.layouts[index / BINS_PER_LAYOUT].bins[index % BINS_PER_LAYOUT]
    }

    /// Bin indices that will be pooled, in enumeration order.
    pub fn active_bins(&self) -> Vec<usize> {
        match &self.selection {
            Some(sel) => sel.kept().to_vec(),
            None => (0..self.total_bins()).collect(),
        }
    }

    pub fn descriptor_len(&self) -> usize {
        match &self.selection {
            Some(sel) => sel.kept().len() * ORIENTATION_BINS,
            None => self.total_bins() * ORIENTATION_BINS,
        }
    }
}

/// Raw (unnormalized) pooled values for the bank's active bins.
pub fn pool_bev(
    bbox: &BoundingBox,
    integrals: &OrientationIntegrals,
    bank: &BevBank,
) -> Vec<f64> {
    let active = bank.active_bins();
    let mut out = Vec::with_capacity(active.len() * ORIENTATION_BINS);
    if !bbox.intersects_image(integrals.width as f64, integrals.height as f64) {
        out.resize(active.len() * ORIENTATION_BINS, 0.0);
        return out;
    }
    let frame = enlarge_box_by(bbox, bank.enlargement);
    for idx in active {
        let (x0, y0, x1, y1) = bank.bin(idx).in_frame(&frame);
        out.extend_from_slice(&integrals.pool(x0, y0, x1, y1));
    }
    out
}

/// ℓ2-normalized BEV descriptor of `bbox`. A box outside the image, or one
/// whose bins hold no edge mass, yields the zero vector.
pub fn extract_bev(
    bbox: &BoundingBox,
    integrals: &OrientationIntegrals,
    bank: &BevBank,
) -> Vec<f64> {
    let mut d = pool_bev(bbox, integrals, bank);
    crate::l2_normalize(&mut d);
    d
}
