//! Index arithmetic for the shared-value corner lattice, the per-pixel
//! weight layout, and the low-resolution neighborhoods used to fit the
//! reverse coefficients.

use crate::raster::BandGrid;

/// A grid of values on the pixel-corner lattice: one value per corner of the
/// high-resolution grid, so dimensions are (width+1) x (height+1).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LatticeGrid {
    pub fn for_pixels(pixel_width: usize, pixel_height: usize) -> Self {
        let width = pixel_width + 1;
        let height = pixel_height + 1;
        LatticeGrid {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![true; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> LatticeGrid {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut values = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            values.extend_from_slice(&self.values[row + x0..row + x0 + w]);
            valid.extend_from_slice(&self.valid[row + x0..row + x0 + w]);
        }
        LatticeGrid {
            width: w,
            height: h,
            values,
            valid,
        }
    }
}

/// Position class of a lattice point relative to the low-resolution grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodKind {
    Corner,
    Middle,
    Inner,
}

/// The low-resolution neighborhood of one lattice point: its class and the
/// low-resolution pixel coordinates it draws from (clipped to the grid).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodPattern {
    pub kind: NeighborhoodKind,
    pub offsets: Vec<(usize, usize)>,
}

/// The four lattice corners mixed into pixel (x, y), in weight order
/// W0..W3: (x,y), (x+1,y), (x,y+1), (x+1,y+1).
#[inline]
pub fn corner_indices(x: usize, y: usize) -> [(usize, usize); 4] {
    [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]
}

/// Classifies lattice point (x, y) against the low-resolution grid of
/// `low_width` x `low_height` pixels and returns its clipped neighborhood.
///
/// Corner points (both coordinates on a low-resolution boundary) use the 2x2
/// block of incident low-resolution pixels; middle points (one coordinate on
/// a boundary) the 2x3 or 3x2 block straddling that edge; inner points the
/// 3x3 block around their containing pixel. Offsets outside the grid are
/// dropped.
pub fn classify_shared(
    x: usize,
    y: usize,
    factor: usize,
    low_width: usize,
    low_height: usize,
) -> NeighborhoodPattern {
    let cx = (x / factor) as isize;
    let cy = (y / factor) as isize;
    let on_x = x % factor == 0;
    let on_y = y % factor == 0;
    let (kind, xs, ys): (NeighborhoodKind, Vec<isize>, Vec<isize>) = match (on_x, on_y) {
        (true, true) => (
            NeighborhoodKind::Corner,
            vec![cx - 1, cx],
            vec![cy - 1, cy],
        ),
        (true, false) => (
            NeighborhoodKind::Middle,
            vec![cx - 1, cx],
            vec![cy - 1, cy, cy + 1],
        ),
        (false, true) => (
            NeighborhoodKind::Middle,
            vec![cx - 1, cx, cx + 1],
            vec![cy - 1, cy],
        ),
        (false, false) => (
            NeighborhoodKind::Inner,
            vec![cx - 1, cx, cx + 1],
            vec![cy - 1, cy, cy + 1],
        ),
    };
    let mut offsets = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            if ox >= 0 && oy >= 0 && (ox as usize) < low_width && (oy as usize) < low_height {
                offsets.push((ox as usize, oy as usize));
            }
        }
    }
    NeighborhoodPattern { kind, offsets }
}

/// Initial shared values: each lattice point averages the up-to-4 adjacent
/// valid pixels; boundary points average the 1 or 2 existing neighbors.
/// A point with no valid adjacent pixel is marked invalid.
pub fn init_shared_values(band: &BandGrid) -> LatticeGrid {
    let mut lat = LatticeGrid::for_pixels(band.width, band.height);
    for ly in 0..lat.height {
        for lx in 0..lat.width {
            let mut sum = 0.0;
            let mut n = 0usize;
            for (px, py) in adjacent_pixels(lx, ly, band.width, band.height) {
                if band.is_valid(px, py) {
                    sum += band.get(px, py);
                    n += 1;
                }
            }
            let i = lat.idx(lx, ly);
            if n > 0 {
                lat.values[i] = sum / n as f64;
                lat.valid[i] = true;
            } else {
                lat.values[i] = f64::NAN;
                lat.valid[i] = false;
            }
        }
    }
    lat
}

/// The pixels touching lattice point (lx, ly): the up-to-4 pixels with a
/// corner there, clipped at the image boundary.
pub fn adjacent_pixels(
    lx: usize,
    ly: usize,
    width: usize,
    height: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let xs = [lx as isize - 1, lx as isize];
    let ys = [ly as isize - 1, ly as isize];
    let w = width as isize;
    let h = height as isize;
    ys.into_iter().flat_map(move |py| {
        xs.into_iter().filter_map(move |px| {
            if px >= 0 && py >= 0 && px < w && py < h {
                Some((px as usize, py as usize))
            } else {
                None
            }
        })
    })
}
