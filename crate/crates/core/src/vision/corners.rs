//! Court-corner selection and the end-to-end extraction pipeline.

use std::f64::consts::PI;

use super::{
    convolve, gaussian_kernel, hough_lines, hysteresis_threshold, merge_lines, non_max_suppression, refine_lines,
    sobel_gradients, EdgeMap, GrayImage, HoughLine,
};
use crate::error::{Error, Result};
use crate::geom::{Point2, PriorPoints};

/// Largest deviation from horizontal for the baseline candidate.
pub const HORIZONTAL_TOL: f64 = 25.0 * PI / 180.0;
/// Smallest angle a side boundary must make with the baseline.
pub const MIN_CROSSING_ANGLE: f64 = 15.0 * PI / 180.0;
/// Two corners closer than this are treated as the same corner.
pub const MIN_CORNER_SEPARATION: f64 = 10.0;

/// Intersects the strongest near-horizontal line with the strongest lines
/// that cross it, keeping the first two distinct intersections inside the
/// `width`×`height` frame. The result is ordered left corner first.
pub fn extract_corners(lines: &[HoughLine], width: usize, height: usize) -> Result<PriorPoints> {
    let mut sorted = lines.to_vec();
    sorted.sort_by(|a, b| b.votes.cmp(&a.votes));
    let fail = |found| Error::Extraction {
        lines: lines.len(),
        found,
    };
    let base = sorted
        .iter()
        .position(|l| (l.theta - PI / 2.0).abs() <= HORIZONTAL_TOL)
        .ok_or_else(|| fail(0))?;
    let baseline = sorted[base];
    let inside = |p: Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64;

    let mut corners: Vec<Point2> = Vec::with_capacity(2);
    for (i, line) in sorted.iter().enumerate() {
        if i == base || line.angle_to(&baseline) < MIN_CROSSING_ANGLE {
            continue;
        }
        let Some(p) = baseline.intersect(line) else { continue };
        if !inside(p) || corners.iter().any(|c| c.distance(p) < MIN_CORNER_SEPARATION) {
            continue;
        }
        corners.push(p);
        if corners.len() == 2 {
            return Ok(PriorPoints::ordered(corners[0], corners[1]));
        }
    }
    Err(fail(corners.len()))
}

/// Tunables for [`extract_priors`].
#[derive(Debug, Clone, PartialEq)]
pub struct VisionParams {
    pub gaussian_size: usize,
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
    pub rho_res: f64,
    pub theta_res: f64,
    pub min_votes: usize,
    pub theta_tol: f64,
    pub rho_tol: f64,
    /// Half-width of the pixel band used to re-fit merged lines; 0 skips
    /// the re-fit.
    pub refine_band: f64,
}

impl Default for VisionParams {
    fn default() -> Self {
        VisionParams {
            gaussian_size: 5,
            sigma: 1.4,
            low: 50.0,
            high: 150.0,
            rho_res: 1.0,
            theta_res: PI / 180.0,
            min_votes: 80,
            theta_tol: 5.0 * PI / 180.0,
            rho_tol: 10.0,
            refine_band: 6.0,
        }
    }
}

/// Canny edge map: Gaussian blur, Sobel gradients, thinning, hysteresis.
pub fn canny(image: &GrayImage, params: &VisionParams) -> Result<EdgeMap> {
    let blurred = convolve(image, &gaussian_kernel(params.gaussian_size, params.sigma)?)?;
    let field = sobel_gradients(&blurred);
    hysteresis_threshold(&non_max_suppression(&field), params.low, params.high)
}

/// Edge map plus merged (and optionally refined) lines of a frame.
pub fn detect_lines(image: &GrayImage, params: &VisionParams) -> Result<(EdgeMap, Vec<HoughLine>)> {
    let edges = canny(image, params)?;
    let raw = hough_lines(&edges, params.rho_res, params.theta_res, params.min_votes)?;
    let mut merged = merge_lines(&raw, params.theta_tol, params.rho_tol)?;
    if params.refine_band > 0.0 {
        merged = refine_lines(&merged, &edges, params.refine_band, 3);
    }
    Ok((edges, merged))
}

/// The full pipeline from a grayscale court frame to its two prior corners.
pub fn extract_priors(image: &GrayImage, params: &VisionParams) -> Result<PriorPoints> {
    let (_, lines) = detect_lines(image, params)?;
    extract_corners(&lines, image.width(), image.height())
}
