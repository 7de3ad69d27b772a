//! Point-to-surface distortion and Bjontegaard delta rate.

use nalgebra::{DMatrix, DVector};

use crate::mesh::{Mesh, SurfaceIndex};
use crate::{Error, Result, Vec3};

fn surface_distances(test: &[Vec3], reference: &Mesh) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let index = SurfaceIndex::build(reference)?;
    Ok(distances_to(test, &index))
}

pub(crate) fn distances_to(test: &[Vec3], index: &SurfaceIndex) -> Vec<f64> {
    test.iter()
        .map(|p| index.closest_point(p).distance())
        .collect()
}

pub(crate) fn rms(d: &[f64]) -> f64 {
    (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt()
}

/// RMS distance from the vertices of `test` to the surface of `reference`.
pub fn p2s_rmse(test: &Mesh, reference: &Mesh) -> Result<f64> {
    Ok(rms(&surface_distances(test.positions(), reference)?))
}

/// Larger of the two one-sided point-to-surface RMS distances.
pub fn p2s_rmse_symmetric(a: &Mesh, b: &Mesh) -> Result<f64> {
    Ok(p2s_rmse(a, b)?.max(p2s_rmse(b, a)?))
}

/// Largest distance from a vertex of `test` to the surface of `reference`.
pub fn hausdorff_one_sided(test: &Mesh, reference: &Mesh) -> Result<f64> {
    Ok(surface_distances(test.positions(), reference)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Symmetric vertex-to-surface Hausdorff distance.
pub fn hausdorff(a: &Mesh, b: &Mesh) -> Result<f64> {
    Ok(hausdorff_one_sided(a, b)?.max(hausdorff_one_sided(b, a)?))
}

/// Average rate difference of `curve_a` against `curve_b` at equal distortion, in percent.
///
/// Points are `(rate, distortion)`. Log-rate is fitted as a cubic polynomial
/// of distortion by least squares and the fits are averaged over the
/// overlapping distortion range. Negative values mean `a` is cheaper.
pub fn bd_rate(curve_a: &[(f64, f64)], curve_b: &[(f64, f64)]) -> Result<f64> {
    let a = prepare(curve_a)?;
    let b = prepare(curve_b)?;
    let lo = a.first().unwrap().0.max(b.first().unwrap().0);
    let hi = a.last().unwrap().0.min(b.last().unwrap().0);
    if !(hi > lo) {
        return Err(Error::invalid("distortion ranges do not overlap"));
    }
    // shared normalization keeps the cubic fits well conditioned
    let all: Vec<f64> = a.iter().chain(&b).map(|p| p.0).collect();
    let dmin = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (dmin + dmax);
    let scale = 0.5 * (dmax - dmin);
    let norm = |d: f64| (d - center) / scale;
    let pa = fit_cubic(&a, &norm)?;
    let pb = fit_cubic(&b, &norm)?;
    let (t0, t1) = (norm(lo), norm(hi));
    let avg = (integral(&pa, t0, t1) - integral(&pb, t0, t1)) / (t1 - t0);
    Ok((avg.exp() - 1.0) * 100.0)
}

/// Sorted `(distortion, ln rate)` pairs.
fn prepare(curve: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if curve.len() < 4 {
        return Err(Error::invalid(format!(
            "an RD curve needs at least 4 points, got {}",
            curve.len()
        )));
    }
    if curve
        .iter()
        .any(|&(r, d)| !(r > 0.0) || !r.is_finite() || !d.is_finite())
    {
        return Err(Error::invalid(
            "rates must be positive and distortions finite",
        ));
    }
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|&(r, d)| (d, r.ln())).collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("distortions must be distinct"));
    }
    Ok(pts)
}

fn fit_cubic(pts: &[(f64, f64)], norm: &impl Fn(f64) -> f64) -> Result<[f64; 4]> {
    let n = pts.len();
    let vander = DMatrix::from_fn(n, 4, |i, j| norm(pts[i].0).powi(j as i32));
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1));
    let c = vander
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::invalid(format!("cubic fit failed: {e}")))?;
    Ok([c[0], c[1], c[2], c[3]])
}

fn integral(c: &[f64; 4], t0: f64, t1: f64) -> f64 {
    let prim =
        |t: f64| c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0;
    prim(t1) - prim(t0)
}
