//! Court-corner extraction from a grayscale frame: Gaussian smoothing,
//! Canny edges, Hough lines, merging and corner selection.

mod canny;
mod corners;
mod filter;
mod hough;
mod image;

pub use canny::{hysteresis_threshold, non_max_suppression, EdgeMap};
pub use corners::{
    canny, detect_lines, extract_corners, extract_priors, VisionParams, HORIZONTAL_TOL, MIN_CORNER_SEPARATION,
    MIN_CROSSING_ANGLE,
};
pub use filter::{convolve, gaussian_density, gaussian_kernel, gradient_polar, sobel_gradients, GradientField, Kernel};
pub use hough::{
    fit_line, hough_lines, hough_lines_from_points, merge_lines, param_space_intersection, refine_lines, HoughLine,
};
pub use image::GrayImage;

pub use crate::geom::PriorPoints;
