//! Homography estimation, pixel-to-physical error and the sidecar file.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::geom::{Homography, Point2};

/// Similarity taking `pts` to zero centroid and mean distance √2.
fn normalizer(pts: &[Point2]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean > 1e-12) || !mean.is_finite() {
        return Err(Error::Rank("correspondences collapse to a single point".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn from_matrix(m: &Matrix3<f64>) -> Homography {
    let mut e = [0.0; 9];
    for (i, v) in e.iter_mut().enumerate() {
        *v = m[(i / 3, i % 3)];
    }
    Homography::from_entries(e)
}

/// Direct linear transform from `src` to `dst` with Hartley normalisation
/// of both point sets; the result is scaled so `H[2][2] = 1`.
pub fn estimate_homography(src: &[Point2], dst: &[Point2]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::Contract(format!("{} source but {} target points", src.len(), dst.len())));
    }
    if src.len() < 4 {
        return Err(Error::Rank(format!("need at least 4 correspondences, got {}", src.len())));
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    let norm = |t: &Matrix3<f64>, p: Point2| (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)]);

    // at least 9 rows so the SVD exposes the whole right null space
    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&s, &d)) in src.iter().zip(dst).enumerate() {
        let (x, y) = norm(&ts, s);
        let (u, v) = norm(&td, d);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Rank("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let (s_min2, s_max) = (svd.singular_values[order[1]], svd.singular_values[order[8]]);
    if s_min2 <= 1e-10 * s_max {
        return Err(Error::Rank("correspondences do not determine a unique homography".into()));
    }
    let h = vt.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::Rank("degenerate target normalisation".into()))?;
    let m = td_inv * hn * ts;
    let out = from_matrix(&m).normalized()?;
    if out.determinant().abs() <= 1e-12 {
        return Err(Error::Rank("estimated homography is singular".into()));
    }
    Ok(out)
}

/// Homogeneous multiply then perspective divide.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2> {
    h.apply(p)
}

/// Mean physical distance in centimetres between predicted and true pixel
/// points, with `to_physical` mapping pixels to metres.
pub fn phys_bias(pred_px: &[Point2], truth_px: &[Point2], to_physical: &Homography) -> Result<f64> {
    phys_bias_each(pred_px, truth_px, std::slice::from_ref(to_physical))
}

/// As [`phys_bias`] with one pixel-to-metre map per sample, or a single
/// map shared by all samples.
pub fn phys_bias_each(pred_px: &[Point2], truth_px: &[Point2], to_physical: &[Homography]) -> Result<f64> {
    if pred_px.len() != truth_px.len() {
        return Err(Error::Contract(format!(
            "{} predictions but {} ground-truth points",
            pred_px.len(),
            truth_px.len()
        )));
    }
    if pred_px.is_empty() {
        return Err(Error::Data("no samples to score".into()));
    }
    if to_physical.len() != 1 && to_physical.len() != pred_px.len() {
        return Err(Error::Contract(format!(
            "{} homographies for {} samples",
            to_physical.len(),
            pred_px.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&p, &t)) in pred_px.iter().zip(truth_px).enumerate() {
        let h = &to_physical[if to_physical.len() == 1 { 0 } else { i }];
        total += h.apply(p)?.distance(h.apply(t)?);
    }
    Ok(100.0 * total / pred_px.len() as f64)
}

/// One homography per line, 9 row-major decimals.
pub fn homographies_to_text(hs: &[Homography]) -> String {
    let mut s = String::new();
    for h in hs {
        let line: Vec<String> = h.entries().iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn homographies_from_text(text: &str) -> Result<Vec<Homography>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(i + 1, format!("bad number {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let e: [f64; 9] = vals
            .try_into()
            .map_err(|v: Vec<f64>| Error::parse(i + 1, format!("expected 9 values, got {}", v.len())))?;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(i + 1, "non-finite homography entry"));
        }
        out.push(Homography::from_entries(e));
    }
    if out.is_empty() {
        return Err(Error::parse(1, "no homography found"));
    }
    Ok(out)
}

pub fn write_homographies(path: impl AsRef<Path>, hs: &[Homography]) -> Result<()> {
    std::fs::write(path, homographies_to_text(hs))?;
    Ok(())
}

pub fn read_homographies(path: impl AsRef<Path>) -> Result<Vec<Homography>> {
    homographies_from_text(&std::fs::read_to_string(path)?)
}

/// Entry-wise comparison after scaling both to `H[2][2] = 1`.
pub fn max_entry_difference(a: &Homography, b: &Homography) -> Result<f64> {
    let (a, b) = (a.normalized()?, b.normalized()?);
    Ok(a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}
