//! Maximum-likelihood Cauchy fits.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Location `x0` and scale `gamma` of a Cauchy distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyParams {
    pub x0: f64,
    pub gamma: f64,
}

impl CauchyParams {
    pub fn cdf(&self, x: f64) -> f64 {
        0.5 + ((x - self.x0) / self.gamma).atan() / std::f64::consts::PI
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.gamma;
        1.0 / (std::f64::consts::PI * self.gamma * (1.0 + u * u))
    }
}

const MAX_ITERS: usize = 100;
const GRAD_TOL: f64 = 1e-10;

/// Maximum-likelihood fit by Newton iterations on `(x0, ln gamma)`.
///
/// Starts from the median and half the interquartile range. Steps that fail
/// to raise the likelihood fall back to backtracked gradient ascent.
pub fn fit_cauchy(samples: &[f64]) -> Result<CauchyParams> {
    if samples.len() < 2 {
        return Err(Error::invalid("a Cauchy fit needs at least two samples"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if lo == hi {
        return Err(Error::DegenerateSamples);
    }
    let x0 = percentile(&sorted, 0.5);
    let mut gamma = 0.5 * (percentile(&sorted, 0.75) - percentile(&sorted, 0.25));
    if !(gamma > 0.0) {
        // more than half the samples coincide: start from the nearest distinct value
        gamma = sorted
            .iter()
            .map(|s| (s - x0).abs())
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
    }
    let gamma_floor = (hi - lo) * 1e-9;
    let mut p = [x0, gamma.ln()];
    let mut f = mean_log_lik(samples, p);
    for _ in 0..MAX_ITERS {
        let (g, h) = derivatives(samples, p);
        if g[0].abs().max(g[1].abs()) < GRAD_TOL {
            break;
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        let newton = if h[0][0] < 0.0 && det > 0.0 {
            Some([
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(h[0][0] * g[1] - h[0][1] * g[0]) / det,
            ])
        } else {
            None
        };
        let mut next = None;
        if let Some(d) = newton {
            next = backtrack(samples, p, d, f);
        }
        if next.is_none() {
            // scale the ascent direction to a unit-ish first trial step
            let scale = 1.0 / (g[0] * g[0] + g[1] * g[1]).sqrt().max(1.0);
            next = backtrack(samples, p, [g[0] * scale * p[1].exp(), g[1] * scale], f);
        }
        match next {
            Some((np, nf)) => {
                p = np;
                f = nf;
            }
            None => break,
        }
    }
    let gamma = p[1].exp().max(gamma_floor).max(f64::MIN_POSITIVE);
    Ok(CauchyParams { x0: p[0], gamma })
}

fn backtrack(samples: &[f64], p: [f64; 2], d: [f64; 2], f: f64) -> Option<([f64; 2], f64)> {
    let mut a = 1.0;
    for _ in 0..40 {
        let np = [p[0] + a * d[0], p[1] + a * d[1]];
        let nf = mean_log_lik(samples, np);
        if nf.is_finite() && nf > f {
            return Some((np, nf));
        }
        a *= 0.5;
    }
    None
}

/// Type-7 (linear interpolation) percentile of sorted data.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

fn mean_log_lik(samples: &[f64], p: [f64; 2]) -> f64 {
    let g = p[1].exp();
    let g2 = g * g;
    let sum: f64 = samples
        .iter()
        .map(|x| {
            let z = x - p[0];
            p[1] - (g2 + z * z).ln()
        })
        .sum();
    sum / samples.len() as f64
}

/// Gradient and Hessian of the mean log-likelihood in `(x0, ln gamma)`.
fn derivatives(samples: &[f64], p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let g = p[1].exp();
    let g2 = g * g;
    let mut grad = [0.0; 2];
    let mut hess = [[0.0; 2]; 2];
    for x in samples {
        let z = x - p[0];
        let d = g2 + z * z;
        let d2 = d * d;
        grad[0] += 2.0 * z / d;
        grad[1] += 1.0 - 2.0 * g2 / d;
        hess[0][0] += (4.0 * z * z - 2.0 * d) / d2;
        hess[0][1] += -4.0 * z * g2 / d2;
        hess[1][1] += -4.0 * g2 * z * z / d2;
    }
    let n = samples.len() as f64;
    for v in grad.iter_mut() {
        *v /= n;
    }
    for row in hess.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    hess[1][0] = hess[0][1];
    (grad, hess)
}
