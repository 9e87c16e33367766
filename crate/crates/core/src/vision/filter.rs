//! Gaussian smoothing, convolution and Sobel gradients.

use std::f64::consts::PI;

use super::GrayImage;
use crate::error::{Error, Result};

/// A square, odd-sized filter kernel stored row-major, indexed from the
/// centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    values: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::Parameter(format!("kernel size must be odd, got {size}")));
        }
        if values.len() != size * size {
            return Err(Error::dim("kernel", &[size, size], &[values.len()]));
        }
        Ok(Kernel { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Weight at offset `(u, v)` from the centre, `u` along x.
    pub fn at(&self, u: isize, v: isize) -> f64 {
        let r = self.radius() as isize;
        self.values[((v + r) * self.size as isize + (u + r)) as usize]
    }
}

/// The isotropic 2-D Gaussian density at `(x, y)`.
pub fn gaussian_density(x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(x * x + y * y) / (2.0 * s2)).exp() / (2.0 * PI * s2)
}

/// A `size`×`size` Gaussian kernel normalised to sum to one over the window.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    if size < 3 || size % 2 == 0 {
        return Err(Error::Parameter(format!("gaussian size must be odd and >= 3, got {size}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let mut values = Vec::with_capacity(size * size);
    for v in -r..=r {
        for u in -r..=r {
            values.push(gaussian_density(u as f64, v as f64, sigma));
        }
    }
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|w| *w /= total);
    Kernel::new(size, values)
}

/// Discrete convolution `out(x, y) = Σ K(u, v)·I(x − u, y − v)` with
/// replicate padding at the borders.
pub fn convolve(image: &GrayImage, kernel: &Kernel) -> Result<GrayImage> {
    if kernel.size() > image.width() || kernel.size() > image.height() {
        return Err(Error::Parameter(format!(
            "kernel {}x{} larger than image {}x{}",
            kernel.size(),
            kernel.size(),
            image.width(),
            image.height()
        )));
    }
    let (w, h) = (image.width(), image.height());
    let r = kernel.radius() as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for v in -r..=r {
                for u in -r..=r {
                    acc += kernel.at(u, v) * image.get_clamped(x - u, y - v);
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    GrayImage::new(w, h, out)
}

/// Sobel gradients with magnitude and direction per pixel.
///
/// All grids have the image's extents; the one-pixel border, where the
/// 3×3 stencil does not fit, is zero.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// `atan(gy / gx)` in (−π/2, π/2]; π/2 where `gx = 0`, `gy ≠ 0`.
    pub direction: Vec<f64>,
}

/// Magnitude and direction of a single gradient vector.
pub fn gradient_polar(gx: f64, gy: f64) -> (f64, f64) {
    let mag = gx.hypot(gy);
    let dir = if gx == 0.0 {
        if gy == 0.0 {
            0.0
        } else {
            PI / 2.0
        }
    } else {
        let t = (gy / gx).atan();
        // atan can round to exactly −π/2 for huge negative ratios
        if t <= -PI / 2.0 {
            PI / 2.0
        } else {
            t
        }
    };
    (mag, dir)
}

/// Applies the standard Sobel pair (as cross-correlation, so `gx > 0` where
/// intensity rises to the right and `gy > 0` where it rises downwards).
pub fn sobel_gradients(image: &GrayImage) -> GradientField {
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let mut field = GradientField {
        width: w,
        height: h,
        gx: vec![0.0; n],
        gy: vec![0.0; n],
        magnitude: vec![0.0; n],
        direction: vec![0.0; n],
    };
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| image.get((x as isize + dx) as usize, (y as isize + dy) as usize);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let (mag, dir) = gradient_polar(gx, gy);
            let i = y * w + x;
            field.gx[i] = gx;
            field.gy[i] = gy;
            field.magnitude[i] = mag;
            field.direction[i] = dir;
        }
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_examples() {
        assert!((gaussian_density(0.0, 0.0, 1.0) - 0.159155).abs() < 1e-6);
        let k = gaussian_kernel(3, 1.0).unwrap();
        assert!((k.at(0, 0) / k.at(1, 1) - 1f64.exp()).abs() < 1e-12);
        assert!(matches!(gaussian_kernel(4, 1.0), Err(Error::Parameter(_))));
        assert!(gaussian_kernel(5, 0.0).is_err());
    }

    #[test]
    fn gaussian_symmetry() {
        let k = gaussian_kernel(7, 1.7).unwrap();
        for v in -3..=3isize {
            for u in -3..=3isize {
                assert_eq!(k.at(u, v), k.at(-u, v));
                assert_eq!(k.at(u, v), k.at(u, -v));
                assert_eq!(k.at(u, v), k.at(v, u));
            }
        }
    }

    #[test]
    fn convolve_identity_and_constant() {
        let img = GrayImage::new(4, 3, (0..12).map(|i| i as f64).collect()).unwrap();
        let id = Kernel::new(1, vec![1.0]).unwrap();
        assert_eq!(convolve(&img, &id).unwrap(), img);
        let flat = GrayImage::filled(9, 9, 77.0).unwrap();
        let out = convolve(&flat, &gaussian_kernel(5, 1.4).unwrap()).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 77.0).abs() < 1e-12));
        assert!(convolve(&img, &gaussian_kernel(5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn polar_examples() {
        let (m, d) = gradient_polar(3.0, 4.0);
        assert_eq!(m, 5.0);
        assert!((d - 0.9273).abs() < 1e-4);
        assert_eq!(gradient_polar(0.0, -2.0).1, PI / 2.0);
        assert_eq!(gradient_polar(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn sobel_constant_and_step() {
        let flat = GrayImage::filled(6, 5, 10.0).unwrap();
        let f = sobel_gradients(&flat);
        assert!(f.magnitude.iter().all(|&m| m == 0.0));

        let (w, h) = (10, 6);
        let px = (0..w * h).map(|i| if i % w >= 5 { 255.0 } else { 0.0 }).collect();
        let f = sobel_gradients(&GrayImage::new(w, h, px).unwrap());
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                assert_eq!(f.gy[y * w + x], 0.0);
                let want = if x == 4 || x == 5 { 1020.0 } else { 0.0 };
                assert_eq!(f.gx[y * w + x], want);
            }
        }
    }
}
