//! Court geometry seen by a pinhole camera, and court rendering.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::{Homography, Point2, PriorPoints};
use crate::vision::GrayImage;

/// Doubles court width in metres; the painted line the priors sit on runs
/// from `(0, 0)` to `(COURT_WIDTH, 0)` on the ground plane.
pub const COURT_WIDTH: f64 = 10.97;
/// Drawn length of the two boundary lines leaving the corners toward the
/// court interior (`y < 0`).
pub const SIDE_LENGTH: f64 = 5.0;
pub const BACKGROUND: f64 = 30.0;
pub const LINE_INTENSITY: f64 = 220.0;

/// A pinhole camera with square pixels and no roll.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// Optical centre in court metres, `z` up.
    pub position: [f64; 3],
    /// Ground point on the optical axis.
    pub target: [f64; 3],
    pub focal: f64,
    pub principal: Point2,
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit3(a: [f64; 3]) -> Result<[f64; 3]> {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n < 1e-12 {
        return Err(Error::Geometry("degenerate camera orientation".into()));
    }
    Ok([a[0] / n, a[1] / n, a[2] / n])
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// The ground plane as imaged by a camera, plus the painted lines on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CourtGeometry {
    /// Ground `(x, y)` in metres to pixels.
    pub homography: Homography,
    /// Pixels of upward image displacement per metre of height, divided by
    /// the point's depth.
    pub vertical_scale: f64,
    /// The two prior corners on the ground, in metres.
    pub physical_corners: [Point2; 2],
    /// Their images, `homography` applied to `physical_corners`.
    pub pixel_corners: [Point2; 2],
    /// Painted line centrelines on the ground, in metres.
    pub segments: Vec<(Point2, Point2)>,
}

impl CourtGeometry {
    /// Standard court (baseline plus two side boundaries) under `homography`.
    pub fn from_homography(homography: Homography, vertical_scale: f64) -> Result<Self> {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(COURT_WIDTH, 0.0);
        let pixel_corners = [homography.apply(a)?, homography.apply(b)?];
        if pixel_corners[0].distance(pixel_corners[1]) < 1e-9 {
            return Err(Error::Geometry("prior corners coincide in the image".into()));
        }
        Ok(CourtGeometry {
            homography,
            vertical_scale,
            physical_corners: [a, b],
            pixel_corners,
            segments: vec![
                (a, b),
                (a, Point2::new(0.0, -SIDE_LENGTH)),
                (b, Point2::new(COURT_WIDTH, -SIDE_LENGTH)),
            ],
        })
    }

    pub fn from_camera(cam: &Camera) -> Result<Self> {
        let fwd = unit3(sub3(cam.target, cam.position))?;
        let right = unit3(cross3(fwd, [0.0, 0.0, 1.0]))?;
        let down = cross3(fwd, right);
        let rows = [right, down, fwd];
        let t = rows.map(|r| -dot3(r, cam.position));
        let (f, cx, cy) = (cam.focal, cam.principal.x, cam.principal.y);
        // K · [r1 r2 t] with r1, r2 the x and y columns of the rotation
        let col = |j: usize| [rows[0][j], rows[1][j], rows[2][j]];
        let (r1, r2) = (col(0), col(1));
        let h = Homography::new([
            [f * r1[0] + cx * r1[2], f * r2[0] + cx * r2[2], f * t[0] + cx * t[2]],
            [f * r1[1] + cy * r1[2], f * r2[1] + cy * r2[2], f * t[1] + cy * t[2]],
            [r1[2], r2[2], t[2]],
        ]);
        CourtGeometry::from_homography(h, -f * down[2])
    }

    pub fn prior(&self) -> PriorPoints {
        PriorPoints::ordered(self.pixel_corners[0], self.pixel_corners[1])
    }

    /// Image of a point at height `z` above ground point `(x, y)`: the
    /// ground image raised by `vertical_scale · z / depth`.
    pub fn project(&self, x: f64, y: f64, z: f64) -> Result<Point2> {
        let [u, v, w] = self.homography.apply_h(Point2::new(x, y));
        if w.abs() < 1e-12 {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point2::new(u / w, (v - self.vertical_scale * z) / w))
    }

    /// Painted segments mapped to pixels.
    pub fn pixel_segments(&self) -> Result<Vec<(Point2, Point2)>> {
        self.segments
            .iter()
            .map(|&(a, b)| {
                let (ha, hb) = (self.homography.apply_h(a), self.homography.apply_h(b));
                if ha[2] <= 0.0 || hb[2] <= 0.0 {
                    return Err(Error::Geometry("court line passes behind the camera".into()));
                }
                Ok((self.homography.apply(a)?, self.homography.apply(b)?))
            })
            .collect()
    }
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0)
    };
    p.distance(a + ab * t)
}

/// Draws the court's lines, `line_width` pixels wide, bright on a dark
/// background, then adds Gaussian noise and clips to 0–255.
pub fn render_court<R: Rng + ?Sized>(
    geometry: &CourtGeometry,
    width: usize,
    height: usize,
    line_width: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Result<GrayImage> {
    if !(line_width > 0.0) {
        return Err(Error::Parameter(format!("line width must be positive, got {line_width}")));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Parameter(format!("noise sd must be non-negative, got {noise_sd}")));
    }
    let mut img = GrayImage::filled(width, height, BACKGROUND)?;
    let half = line_width / 2.0;
    for (a, b) in geometry.pixel_segments()? {
        let x0 = (a.x.min(b.x) - half).floor().max(0.0) as usize;
        let y0 = (a.y.min(b.y) - half).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + half).ceil().max(-1.0) as usize).min(width - 1);
        let y1 = ((a.y.max(b.y) + half).ceil().max(-1.0) as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if segment_distance(Point2::new(x as f64, y as f64), a, b) <= half {
                    img.set(x, y, LINE_INTENSITY);
                }
            }
        }
    }
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).map_err(|e| Error::Parameter(e.to_string()))?;
        for v in img.pixels_mut() {
            *v = (*v + normal.sample(rng)).clamp(0.0, 255.0);
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn camera() -> Camera {
        Camera {
            position: [5.5, -12.0, 5.0],
            target: [5.5, 0.0, 0.0],
            focal: 950.0,
            principal: Point2::new(640.0, 325.0),
        }
    }

    #[test]
    fn corners_are_homography_images() {
        let g = CourtGeometry::from_camera(&camera()).unwrap();
        for (p, q) in g.physical_corners.iter().zip(&g.pixel_corners) {
            assert!(g.homography.apply(*p).unwrap().distance(*q) < 1e-9);
        }
        // the target sits on the optical axis
        let c = g.homography.apply(Point2::new(5.5, 0.0)).unwrap();
        assert!(c.distance(Point2::new(640.0, 325.0)) < 1e-9);
        // the court interior (y < 0) images below the baseline
        let inner = g.homography.apply(Point2::new(5.5, -1.0)).unwrap();
        assert!(inner.y > 325.0);
    }

    #[test]
    fn height_raises_the_image_point() {
        let g = CourtGeometry::from_camera(&camera()).unwrap();
        let ground = g.project(3.0, 1.0, 0.0).unwrap();
        let up = g.project(3.0, 1.0, 1.0).unwrap();
        assert_eq!(ground.x, up.x);
        assert!(up.y < ground.y);
    }

    #[test]
    fn render_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = CourtGeometry::from_camera(&camera()).unwrap();
        let img = render_court(&g, 1280, 650, 4.0, 0.0, &mut rng).unwrap();
        let mid = (g.pixel_corners[0] + g.pixel_corners[1]) * 0.5;
        assert_eq!(img.get(mid.x.round() as usize, mid.y.round() as usize), LINE_INTENSITY);
        assert!(render_court(&g, 1280, 650, 0.0, 0.0, &mut rng).is_err());
        g.segments.clear();
        let blank = render_court(&g, 64, 32, 4.0, 0.0, &mut rng).unwrap();
        assert!(blank.pixels().iter().all(|&v| v == BACKGROUND));
    }
}
