//! Non-maximum suppression and hysteresis thresholding.

use std::collections::VecDeque;
use std::f64::consts::PI;

use super::{GradientField, GrayImage};
use crate::error::{Error, Result};

/// A binary edge map.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            edges: vec![false; width * height],
        }
    }

    /// Builds a map from a list of `(x, y)` edge pixels.
    pub fn from_points(width: usize, height: usize, points: &[(usize, usize)]) -> Result<Self> {
        let mut map = EdgeMap::empty(width, height);
        for &(x, y) in points {
            if x >= width || y >= height {
                return Err(Error::Parameter(format!("edge pixel ({x}, {y}) outside {width}x{height}")));
            }
            map.edges[y * width + x] = true;
        }
        Ok(map)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Edge pixel coordinates in row-major order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }
}

/// Keeps a pixel only if its magnitude is a maximum along its gradient
/// direction, quantised to 0°, 45°, 90° or 135°.
///
/// On plateaus the pixel must beat its neighbour on the negative side
/// strictly and match-or-beat the one on the positive side, so a
/// two-pixel-wide ridge of equal magnitude thins to a single pixel.
pub fn non_max_suppression(field: &GradientField) -> GrayImage {
    let (w, h) = (field.width, field.height);
    let mag = &field.magnitude;
    let mut out = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let d = field.direction[i];
            let (before, after) = if d.abs() < PI / 8.0 {
                (mag[i - 1], mag[i + 1])
            } else if d >= PI / 8.0 && d < 3.0 * PI / 8.0 {
                (mag[i - w - 1], mag[i + w + 1])
            } else if d <= -PI / 8.0 && d > -3.0 * PI / 8.0 {
                (mag[i + w - 1], mag[i - w + 1])
            } else {
                (mag[i - w], mag[i + w])
            };
            if m > before && m >= after {
                out[i] = m;
            }
        }
    }
    GrayImage::new(w, h, out).expect("extents come from a valid field")
}

/// Double-threshold hysteresis: pixels at or above `high` are strong,
/// pixels in `[low, high)` are weak and survive only when 8-connected,
/// possibly through other weak pixels, to a strong one.
pub fn hysteresis_threshold(thinned: &GrayImage, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low > 0.0) || low >= high {
        return Err(Error::Parameter(format!(
            "hysteresis thresholds need 0 < low < high, got low={low} high={high}"
        )));
    }
    let (w, h) = (thinned.width(), thinned.height());
    let px = thinned.pixels();
    let mut map = EdgeMap::empty(w, h);
    let mut queue = VecDeque::new();
    for (i, &v) in px.iter().enumerate() {
        if v >= high {
            map.edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !map.edges[j] && px[j] >= low {
                    map.edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(map)
}
