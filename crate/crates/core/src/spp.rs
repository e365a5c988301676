//! Spatial-pyramid max pooling of a convolutional feature map over the cells
//! covered by a box.

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::sparse_svm::BinSelection;

pub const DEFAULT_CHANNELS: usize = 256;
pub const DEFAULT_GRID_SIZES: [usize; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// `C x H x W` activations plus the size of the image they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    map_width: usize,
    map_height: usize,
    image_width: usize,
    image_height: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        channels: usize,
        map_width: usize,
        map_height: usize,
        image_width: usize,
        image_height: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let n = channels * map_width * map_height;
        if data.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        if channels == 0 || map_width == 0 || map_height == 0 {
            return Err(Error::InvalidParameter("feature map has an empty dimension".into()));
        }
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidParameter("feature map image size is zero".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite activation".into()));
        }
        Ok(Self {
            channels,
            map_width,
            map_height,
            image_width,
            image_height,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn map_width(&self) -> usize {
        self.map_width
    }

    pub fn map_height(&self) -> usize {
        self.map_height
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.map_height + y) * self.map_width + x]
    }

    fn plane(&self, c: usize) -> &[f32] {
        let n = self.map_width * self.map_height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Half-open rectangle of feature-map cells `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}

fn project_span(start: f64, end: f64, scale: f64, cells: usize) -> (usize, usize) {
    let lo = (start * scale).floor().clamp(0.0, cells as f64) as usize;
    let hi = (end * scale).ceil().clamp(0.0, cells as f64) as usize;
    let lo = lo.min(cells - 1);
    (lo, hi.max(lo + 1))
}

/// Projects an image-space box onto feature-map cells by plain scaling:
/// floor on the leading edge, ceil on the trailing edge, at least one cell.
pub fn project_box(bbox: &BoundingBox, fm: &FeatureMap) -> Result<CellRect> {
    if !bbox.intersects_image(fm.image_width as f64, fm.image_height as f64) {
        return Err(Error::BoxOutsideImage);
    }
    let sx = fm.map_width as f64 / fm.image_width as f64;
    let sy = fm.map_height as f64 / fm.image_height as f64;
    let (x0, x1) = project_span(bbox.x, bbox.right(), sx, fm.map_width);
    let (y0, y1) = project_span(bbox.y, bbox.bottom(), sy, fm.map_height);
    Ok(CellRect { x0, y0, x1, y1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SppBin {
    pub grid: usize,
    pub row: usize,
    pub col: usize,
}

impl SppBin {
    /// Sub-rectangle of `cells` covered by this bin. Starts use floor and
    /// ends use ceil, so each bin covers at least one cell.
    pub fn sub_rect(&self, cells: &CellRect) -> CellRect {
        let span = |lo: usize, n: usize, i: usize| -> (usize, usize) {
            let d = self.grid;
            (lo + i * n / d, lo + ((i + 1) * n).div_ceil(d))
        };
        let (x0, x1) = span(cells.x0, cells.width(), self.col);
        let (y0, y1) = span(cells.y0, cells.height(), self.row);
        CellRect { x0, y0, x1, y1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SppBank {
    grid_sizes: Vec<usize>,
    bins: Vec<SppBin>,
    selection: Option<BinSelection>,
}

impl SppBank {
    pub fn new(grid_sizes: &[usize]) -> Result<Self> {
        if grid_sizes.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter("grid size must be >= 1".into()));
        }
        let mut bins = Vec::new();
        for &grid in grid_sizes {
            for row in 0..grid {
                for col in 0..grid {
                    bins.push(SppBin { grid, row, col });
                }
            }
        }
        Ok(Self {
            grid_sizes: grid_sizes.to_vec(),
            bins,
            selection: None,
        })
    }

    pub fn with_selection(mut self, selection: BinSelection) -> Result<Self> {
        if let Some(&bad) = selection.kept().iter().find(|&&k| k >= self.bins.len()) {
            return Err(Error::InvalidParameter(format!(
                "SPP bin {bad} out of range (bank has {} bins)",
                self.bins.len()
            )));
        }
        self.selection = Some(selection);
        Ok(self)
    }

    pub fn grid_sizes(&self) -> &[usize] {
        &self.grid_sizes
    }

    pub fn bins(&self) -> &[SppBin] {
        &self.bins
    }

    pub fn total_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn selection(&self) -> Option<&BinSelection> {
        self.selection.as_ref()
    }

    pub fn active_bins(&self) -> Vec<usize> {
        match &self.selection {
            Some(sel) => sel.kept().to_vec(),
            None => (0..self.bins.len()).collect(),
        }
    }

    pub fn descriptor_len(&self, channels: usize) -> usize {
        self.active_bins().len() * channels
    }
}

/// Grids `D = 1..=10` in ascending order, each row-major: 385 bins.
pub fn build_spp_bank() -> SppBank {
    SppBank::new(&DEFAULT_GRID_SIZES).expect("default grid sizes are valid")
}

/// Per-channel maxima over `rect`; empty rectangles pool to zero.
pub fn max_pool(fm: &FeatureMap, rect: &CellRect, out: &mut Vec<f64>) {
    let x1 = rect.x1.min(fm.map_width);
    let y1 = rect.y1.min(fm.map_height);
    if rect.x0 >= x1 || rect.y0 >= y1 {
        out.extend(std::iter::repeat(0.0).take(fm.channels));
        return;
    }
    for c in 0..fm.channels {
        let plane = fm.plane(c);
        let mut m = f32::NEG_INFINITY;
        for y in rect.y0..y1 {
            let row = &plane[y * fm.map_width..(y + 1) * fm.map_width];
            for &v in &row[rect.x0..x1] {
                if v > m {
                    m = v;
                }
            }
        }
        out.push(m as f64);
    }
}

/// Raw max-pooled values for the bank's active bins.
pub fn pool_spp(bbox: &BoundingBox, fm: &FeatureMap, bank: &SppBank) -> Result<Vec<f64>> {
    let cells = project_box(bbox, fm)?;
    let active = bank.active_bins();
    let mut out = Vec::with_capacity(active.len() * fm.channels);
    for idx in active {
        let rect = bank.bins[idx].sub_rect(&cells);
        max_pool(fm, &rect, &mut out);
    }
    Ok(out)
}

/// ℓ2-normalized SPP descriptor for the bank's active bins.
pub fn extract_spp(bbox: &BoundingBox, fm: &FeatureMap, bank: &SppBank) -> Result<Vec<f64>> {
    let mut d = pool_spp(bbox, fm, bank)?;
    crate::l2_normalize(&mut d);
    Ok(d)
}
