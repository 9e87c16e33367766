//! Hough line detection in (rho, theta) space, line merging and
//! least-squares refinement.

use std::f64::consts::PI;

use super::EdgeMap;
use crate::error::{Error, Result};
use crate::geom::Point2;

/// A line `x·cosθ + y·sinθ = ρ` with `θ ∈ [0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
    pub votes: usize,
    /// `(a, b)` of `y = a·x + b`, absent for vertical lines.
    pub slope_intercept: Option<(f64, f64)>,
}

impl HoughLine {
    /// Builds a line, folding `theta` into `[0, π)` by flipping the sign
    /// of `rho` where needed.
    pub fn new(rho: f64, theta: f64, votes: usize) -> Self {
        let (mut rho, mut theta) = (rho, theta.rem_euclid(2.0 * PI));
        if theta >= PI {
            theta -= PI;
            rho = -rho;
        }
        let s = theta.sin();
        let slope_intercept = if theta == 0.0 || s.abs() < 1e-12 {
            None
        } else {
            Some((-theta.cos() / s, rho / s))
        };
        HoughLine {
            rho,
            theta,
            votes,
            slope_intercept,
        }
    }

    /// Signed distance of `p` from the line along its normal.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        p.x * self.theta.cos() + p.y * self.theta.sin() - self.rho
    }

    /// Intersection point, or `None` for (near-)parallel lines.
    pub fn intersect(&self, other: &HoughLine) -> Option<Point2> {
        let (c1, s1) = (self.theta.cos(), self.theta.sin());
        let (c2, s2) = (other.theta.cos(), other.theta.sin());
        let det = c1 * s2 - s1 * c2;
        if det.abs() < 1e-9 {
            return None;
        }
        Some(Point2::new(
            (self.rho * s2 - other.rho * s1) / det,
            (c1 * other.rho - c2 * self.rho) / det,
        ))
    }

    /// Smallest angle between the two lines' directions, in `[0, π/2]`.
    pub fn angle_to(&self, other: &HoughLine) -> f64 {
        let d = (self.theta - other.theta).abs() % PI;
        d.min(PI - d)
    }
}

/// The slope–intercept line through two pixels, found as the crossing of
/// their parameter-space lines `b = y − a·x`. `None` when both share an x.
pub fn param_space_intersection(p: Point2, q: Point2) -> Option<(f64, f64)> {
    if p.x == q.x {
        return None;
    }
    let a = (q.y - p.y) / (q.x - p.x);
    Some((a, p.y - a * p.x))
}

/// Hough transform of an edge map.
pub fn hough_lines(edges: &EdgeMap, rho_res: f64, theta_res: f64, min_votes: usize) -> Result<Vec<HoughLine>> {
    let points: Vec<Point2> = edges
        .points()
        .into_iter()
        .map(|(x, y)| Point2::new(x as f64, y as f64))
        .collect();
    hough_lines_from_points(&points, edges.width, edges.height, rho_res, theta_res, min_votes)
}

/// Votes each point into a `(ρ, θ)` accumulator sized for a
/// `width`×`height` frame and returns the local-maximum cells with at
/// least `min_votes`, sorted by votes descending.
pub fn hough_lines_from_points(
    points: &[Point2],
    width: usize,
    height: usize,
    rho_res: f64,
    theta_res: f64,
    min_votes: usize,
) -> Result<Vec<HoughLine>> {
    if !(rho_res > 0.0) || !(theta_res > 0.0) || theta_res > PI {
        return Err(Error::Parameter(format!(
            "hough resolutions must be positive, got rho_res={rho_res} theta_res={theta_res}"
        )));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let n_theta = ((PI / theta_res) - 1e-9).ceil() as usize;
    let diag = (width as f64).hypot(height as f64);
    let offset = (diag / rho_res).ceil() as isize + 1;
    let n_rho = (2 * offset + 1) as usize;
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|t| {
            let th = t as f64 * theta_res;
            (th.cos(), th.sin())
        })
        .collect();

    let mut acc = vec![0u32; n_theta * n_rho];
    for p in points {
        for (t, &(c, s)) in trig.iter().enumerate() {
            let r = ((p.x * c + p.y * s) / rho_res).round() as isize + offset;
            if r >= 0 && (r as usize) < n_rho {
                acc[t * n_rho + r as usize] += 1;
            }
        }
    }

    // Neighbour cell across the θ = 0 / θ = π seam mirrors ρ.
    let cell = |t: isize, r: isize| -> Option<usize> {
        let (t, r) = if t < 0 {
            (n_theta as isize - 1, 2 * offset - r)
        } else if t >= n_theta as isize {
            (0, 2 * offset - r)
        } else {
            (t, r)
        };
        (r >= 0 && r < n_rho as isize).then(|| t as usize * n_rho + r as usize)
    };

    let mut lines = Vec::new();
    for t in 0..n_theta {
        for r in 0..n_rho {
            let key = t * n_rho + r;
            let v = acc[key];
            if (v as usize) < min_votes || v == 0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dt in -1..=1isize {
                for dr in -1..=1isize {
                    if dt == 0 && dr == 0 {
                        continue;
                    }
                    if let Some(j) = cell(t as isize + dt, r as isize + dr) {
                        let beaten = if j < key { acc[j] >= v } else { acc[j] > v };
                        if beaten {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
            }
            if is_max {
                let rho = (r as isize - offset) as f64 * rho_res;
                lines.push(HoughLine::new(rho, t as f64 * theta_res, v as usize));
            }
        }
    }
    sort_lines(&mut lines);
    Ok(lines)
}

fn sort_lines(lines: &mut [HoughLine]) {
    lines.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.rho.total_cmp(&b.rho))
    });
}

struct Cluster {
    weight: f64,
    theta_sum: f64,
    rho_sum: f64,
    votes: usize,
}

impl Cluster {
    fn mean(&self) -> (f64, f64) {
        (self.rho_sum / self.weight, self.theta_sum / self.weight)
    }
}

/// Greedily merges lines whose angle differs by less than `theta_tol` and
/// offset by less than `rho_tol` into their vote-weighted mean, strongest
/// lines first. Lines on either side of the θ = 0 seam are compared with
/// the equivalent `(−ρ, θ ± π)` form.
pub fn merge_lines(lines: &[HoughLine], theta_tol: f64, rho_tol: f64) -> Result<Vec<HoughLine>> {
    if !(theta_tol > 0.0) || !(rho_tol > 0.0) {
        return Err(Error::Parameter(format!(
            "merge tolerances must be positive, got theta_tol={theta_tol} rho_tol={rho_tol}"
        )));
    }
    let mut sorted = lines.to_vec();
    sort_lines(&mut sorted);
    let mut clusters: Vec<Cluster> = Vec::new();
    for line in &sorted {
        let w = line.votes.max(1) as f64;
        let mut placed = false;
        for c in clusters.iter_mut() {
            let (rho_m, theta_m) = c.mean();
            let (mut rho, mut theta) = (line.rho, line.theta);
            if theta - theta_m > PI / 2.0 {
                theta -= PI;
                rho = -rho;
            } else if theta_m - theta > PI / 2.0 {
                theta += PI;
                rho = -rho;
            }
            if (theta - theta_m).abs() < theta_tol && (rho - rho_m).abs() < rho_tol {
                c.weight += w;
                c.theta_sum += w * theta;
                c.rho_sum += w * rho;
                c.votes += line.votes;
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push(Cluster {
                weight: w,
                theta_sum: w * line.theta,
                rho_sum: w * line.rho,
                votes: line.votes,
            });
        }
    }
    let mut merged: Vec<HoughLine> = clusters
        .iter()
        .map(|c| {
            let (rho, theta) = c.mean();
            HoughLine::new(rho, theta, c.votes)
        })
        .collect();
    sort_lines(&mut merged);
    Ok(merged)
}

/// Total-least-squares line through `points`, or `None` if they do not
/// determine a direction.
pub fn fit_line(points: &[Point2]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy == 0.0 {
        return None;
    }
    // direction of largest spread is at angle φ; the normal is φ + π/2
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let theta = phi + PI / 2.0;
    let rho = cx * theta.cos() + cy * theta.sin();
    Some((rho, theta))
}

/// Re-fits each line to the edge pixels lying within `band` pixels of it.
/// Both edges of a painted stripe fall inside the band, so the fit lands
/// on the stripe's centreline. Lines with too few supporting pixels are
/// kept as they are.
pub fn refine_lines(lines: &[HoughLine], edges: &EdgeMap, band: f64, iterations: usize) -> Vec<HoughLine> {
    let pts: Vec<Point2> = edges
        .points()
        .into_iter()
        .map(|(x, y)| Point2::new(x as f64, y as f64))
        .collect();
    lines
        .iter()
        .map(|line| {
            let mut cur = *line;
            for _ in 0..iterations {
                let support: Vec<Point2> = pts
                    .iter()
                    .copied()
                    .filter(|&p| cur.signed_distance(p).abs() <= band)
                    .collect();
                if support.len() < 10 {
                    break;
                }
                match fit_line(&support) {
                    Some((rho, theta)) => cur = HoughLine::new(rho, theta, line.votes),
                    None => break,
                }
            }
            cur
        })
        .collect()
}
