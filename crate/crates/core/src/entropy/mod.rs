//! Cauchy-fitted dead-zone quantization and Huffman coding of real vectors.
//!
//! A coded vector is laid out as `x0: f32, gamma: f32, b: f32, count: u32`
//! followed by the Huffman-coded bin symbols, padded to a byte boundary.
//! Both sides rebuild the codebook and the code from the three `f32`
//! parameters, so no table is transmitted. `gamma = 0` marks a constant
//! vector whose every entry decodes to `x0` and carries no symbol bits.

mod cauchy;
mod codebook;
mod huffman;

pub use cauchy::{fit_cauchy, CauchyParams};
pub use codebook::{build_codebook, Codebook};
pub use huffman::{huffman_build, huffman_decode, huffman_encode, PrefixCode};

use crate::bytes::{write_f32, write_u32, BitReader, BitWriter, ByteReader};
use crate::{Error, Result};

/// Quantizes `values` against a codebook fitted to `fit_samples` and codes them.
///
/// The codebook spans `[-b, b]` with `b = max |values|`. Returns the
/// dequantized values as the decoder will see them.
pub fn encode_vector(
    values: &[f64],
    fit_samples: &[f64],
    n_b: usize,
    out: &mut Vec<u8>,
) -> Result<Vec<f64>> {
    let b = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) as f32;
    let fit = if values.is_empty() || b == 0.0 {
        None
    } else {
        match fit_cauchy(fit_samples) {
            Ok(p) => Some(p),
            Err(Error::DegenerateSamples) => None,
            Err(e) => return Err(e),
        }
    };
    let Some(fit) = fit else {
        let x0 = values.first().copied().unwrap_or(0.0) as f32;
        write_f32(out, x0);
        write_f32(out, 0.0);
        write_f32(out, b);
        write_u32(out, values.len() as u32);
        return Ok(vec![x0 as f64; values.len()]);
    };
    let x0 = fit.x0 as f32;
    let gamma = (fit.gamma as f32).max(f32::MIN_POSITIVE);
    let params = CauchyParams {
        x0: x0 as f64,
        gamma: gamma as f64,
    };
    let codebook = build_codebook(params, b as f64, n_b)?;
    let code = huffman_build(&codebook.probabilities)?;
    let symbols = codebook.quantize(values);
    write_f32(out, x0);
    write_f32(out, gamma);
    write_f32(out, b);
    write_u32(out, values.len() as u32);
    let mut bits = BitWriter::new();
    huffman_encode(&symbols, &code, &mut bits)?;
    out.extend_from_slice(&bits.finish());
    codebook.dequantize(&symbols)
}

/// Reads one coded vector written by [`encode_vector`].
pub fn decode_vector(r: &mut ByteReader, n_b: usize) -> Result<Vec<f64>> {
    let at = r.offset();
    let x0 = r.f32()?;
    let gamma = r.f32()?;
    let b = r.f32()?;
    let count = r.u32()? as usize;
    if !x0.is_finite() || !b.is_finite() || b < 0.0 || !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::corrupt(at, "invalid coded-vector parameters"));
    }
    if gamma == 0.0 {
        return Ok(vec![x0 as f64; count]);
    }
    if b == 0.0 {
        return Err(Error::corrupt(
            at,
            "zero codebook range with a nonzero scale",
        ));
    }
    let params = CauchyParams {
        x0: x0 as f64,
        gamma: gamma as f64,
    };
    let codebook = build_codebook(params, b as f64, n_b)?;
    let code = huffman_build(&codebook.probabilities)?;
    let mut bits = BitReader::new(r);
    let symbols = huffman_decode(&mut bits, &code, count)?;
    bits.align()?;
    codebook.dequantize(&symbols)
}
