use crate::error::{Error, Result};
use crate::geom::{Point2, PriorPoints};

/// 1 ("in") when `landing` is on the court side of the line through the
/// prior corners or on the line itself, else 0.
///
/// With `p1` left of `p2` in image coordinates (y down), the court side is
/// where `(p2 − p1) × (landing − p1) ≥ 0`, i.e. below the line.
pub fn assign_label(landing: Point2, prior: &PriorPoints) -> Result<u8> {
    if prior.p1.distance(prior.p2) == 0.0 {
        return Err(Error::Geometry("prior corners coincide".into()));
    }
    Ok(u8::from(landing.cross_from(prior.p1, prior.p2) >= 0.0))
}
