//! Small planar geometry helpers shared across modules.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// z-component of `(b - a) × (self - a)`.
    pub fn cross_from(self, a: Point2, b: Point2) -> f64 {
        (b.x - a.x) * (self.y - a.y) - (b.y - a.y) * (self.x - a.x)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// The two court-corner pixels fed to the model as prior information,
/// left corner first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorPoints {
    pub p1: Point2,
    pub p2: Point2,
}

impl PriorPoints {
    pub const fn new(p1: Point2, p2: Point2) -> Self {
        PriorPoints { p1, p2 }
    }

    /// Orders the pair so that `p1.x <= p2.x`.
    pub fn ordered(a: Point2, b: Point2) -> Self {
        if a.x <= b.x {
            PriorPoints::new(a, b)
        } else {
            PriorPoints::new(b, a)
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p1.x, self.p1.y, self.p2.x, self.p2.y]
    }
}

/// A planar projective map acting on homogeneous 2-D points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const fn new(m: [[f64; 3]; 3]) -> Self {
        Homography { m }
    }

    /// Row-major entries.
    pub fn entries(&self) -> [f64; 9] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
    }

    pub fn from_entries(e: [f64; 9]) -> Self {
        Homography::new([[e[0], e[1], e[2]], [e[3], e[4], e[5]], [e[6], e[7], e[8]]])
    }

    /// Scales so the bottom-right entry is 1.
    pub fn normalized(&self) -> Result<Homography> {
        let s = self.m[2][2];
        if s.abs() < 1e-15 {
            return Err(Error::Rank("homography has zero bottom-right entry".into()));
        }
        Ok(Homography::from_entries(self.entries().map(|v| v / s)))
    }

    /// Homogeneous image of `(x, y, 1)`.
    pub fn apply_h(&self, p: Point2) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
            m[2][0] * p.x + m[2][1] * p.y + m[2][2],
        ]
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let [x, y, w] = self.apply_h(p);
        if w.abs() < 1e-12 {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point2::new(x / w, y / w))
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = &self.m;
        let det = self.determinant();
        let scale = self.entries().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if det.abs() <= 1e-12 * scale.powi(3) {
            return Err(Error::Rank("homography is singular".into()));
        }
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
            [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
            [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
        ];
        Ok(Homography::new(adj.map(|row| row.map(|v| v / det))))
    }

    pub fn compose(&self, other: &Homography) -> Homography {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Homography::new(out)
    }
}
