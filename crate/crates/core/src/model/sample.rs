use crate::error::{Error, Result};
use crate::geom::{Point2, PriorPoints};

/// Trajectory points per sample.
pub const TRAJ_LEN: usize = 25;
/// Reference frame extents in pixels.
pub const IMAGE_WIDTH: usize = 1280;
pub const IMAGE_HEIGHT: usize = 650;

/// One observed flight: the frames before the bounce, where it bounced,
/// and optionally the court corners and the in/out label (1 = in).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub points: Vec<Point2>,
    pub landing: Point2,
    pub prior: Option<PriorPoints>,
    pub label: Option<u8>,
}

impl TrajectorySample {
    pub fn new(points: Vec<Point2>, landing: Point2) -> Result<Self> {
        if points.len() != TRAJ_LEN {
            return Err(Error::Data(format!(
                "trajectory needs {TRAJ_LEN} points, got {}",
                points.len()
            )));
        }
        Ok(TrajectorySample {
            points,
            landing,
            prior: None,
            label: None,
        })
    }

    pub fn with_prior(mut self, prior: PriorPoints) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn with_label(mut self, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(Error::Label(label as f64));
        }
        self.label = Some(label);
        Ok(self)
    }

    pub fn prior(&self) -> Result<PriorPoints> {
        self.prior
            .ok_or_else(|| Error::Contract("sample has no prior points".into()))
    }

    pub fn label(&self) -> Result<u8> {
        self.label
            .ok_or_else(|| Error::Contract("sample has no label".into()))
    }

    /// True when every trajectory point and the landing lie in the
    /// `width`×`height` frame.
    pub fn in_extent(&self, width: f64, height: f64) -> bool {
        let inside = |p: &Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= width && p.y <= height;
        self.points.iter().all(inside) && inside(&self.landing)
    }
}
