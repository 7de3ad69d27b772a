//! Dead-zone scalar quantizer with Cauchy-optimal reconstruction levels.

use std::f64::consts::PI;

use super::CauchyParams;
use crate::{Error, Result};

/// `n_b - 1` bins over `[-b, b]`: `n_b` equal-width bins with the two
/// central ones merged into a dead zone.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub edges: Vec<f64>,
    /// Conditional mean of the fitted distribution inside each bin.
    pub levels: Vec<f64>,
    /// Fitted probability mass of each bin.
    pub probabilities: Vec<f64>,
    pub n_b: usize,
}

pub fn build_codebook(params: CauchyParams, b: f64, n_b: usize) -> Result<Codebook> {
    if n_b < 4 || n_b % 2 != 0 {
        return Err(Error::invalid(format!(
            "level count must be even and at least 4, got {n_b}"
        )));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::invalid(format!(
            "codebook range must be positive, got {b}"
        )));
    }
    if !(params.gamma > 0.0) || !params.gamma.is_finite() || !params.x0.is_finite() {
        return Err(Error::invalid(format!(
            "invalid Cauchy parameters {params:?}"
        )));
    }
    let width = 2.0 * b / n_b as f64;
    let edges: Vec<f64> = (0..=n_b)
        .filter(|&k| k != n_b / 2)
        .map(|k| {
            if k < n_b / 2 {
                -b + k as f64 * width
            } else {
                b - (n_b - k) as f64 * width
            }
        })
        .collect();
    let mut levels = Vec::with_capacity(n_b - 1);
    let mut probabilities = Vec::with_capacity(n_b - 1);
    for w in edges.windows(2) {
        let (e1, e2) = (w[0], w[1]);
        let u1 = (e1 - params.x0) / params.gamma;
        let u2 = (e2 - params.x0) / params.gamma;
        let p = bin_mass(u1, u2);
        let shift =
            params.gamma * ((u2 - u1) * (u2 + u1) / (1.0 + u1 * u1)).ln_1p() / (2.0 * PI * p);
        let mut level = params.x0 + shift;
        if !level.is_finite() {
            level = 0.5 * (e1 + e2);
        }
        levels.push(level.clamp(e1, e2));
        probabilities.push(p);
    }
    Ok(Codebook {
        edges,
        levels,
        probabilities,
        n_b,
    })
}

/// `(atan(u2) - atan(u1)) / pi` without cancellation when both are large.
fn bin_mass(u1: f64, u2: f64) -> f64 {
    let d = if u1 * u2 > -1.0 {
        ((u2 - u1) / (1.0 + u1 * u2)).atan()
    } else {
        u2.atan() - u1.atan()
    };
    d / PI
}

impl Codebook {
    pub fn bins(&self) -> usize {
        self.levels.len()
    }

    /// Bin index of `v`; bins are left-closed except the last, out-of-range values clamp.
    pub fn quantize_one(&self, v: f64) -> u32 {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= v) as u32
    }

    pub fn quantize(&self, values: &[f64]) -> Vec<u32> {
        values.iter().map(|&v| self.quantize_one(v)).collect()
    }

    pub fn dequantize(&self, symbols: &[u32]) -> Result<Vec<f64>> {
        symbols
            .iter()
            .map(|&s| {
                self.levels.get(s as usize).copied().ok_or_else(|| {
                    Error::invalid(format!("symbol {s} outside a {}-bin codebook", self.bins()))
                })
            })
            .collect()
    }
}
