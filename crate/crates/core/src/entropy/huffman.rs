//! Canonical Huffman codes rebuilt from model probabilities on both sides.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::bytes::{BitReader, BitWriter};
use crate::{Error, Result};

/// Probabilities below this fraction of the largest are raised to it, which
/// keeps every code length within 64 bits.
const RELATIVE_FLOOR: f64 = 1e-12;

/// Canonical prefix code: codes are assigned in (length, symbol) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixCode {
    pub lengths: Vec<u32>,
    pub codes: Vec<u64>,
    /// Symbols sorted by (length, symbol) with the first code and count per length.
    sorted: Vec<u32>,
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    p: f64,
    min_symbol: u32,
    node: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        self.p
            .total_cmp(&other.p)
            .then(self.min_symbol.cmp(&other.min_symbol))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn huffman_build(probabilities: &[f64]) -> Result<PrefixCode> {
    let n = probabilities.len();
    if n == 0 {
        return Err(Error::invalid("empty alphabet"));
    }
    if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(
            "probabilities must be finite and non-negative",
        ));
    }
    let max = probabilities.iter().cloned().fold(0.0, f64::max);
    let floor = if max > 0.0 { max * RELATIVE_FLOOR } else { 1.0 };
    let mut lengths = vec![0u32; n];
    if n == 1 {
        lengths[0] = 1;
    } else {
        // parent links of a merge tree; leaves are 0..n
        let mut parent = vec![usize::MAX; 2 * n - 1];
        let mut heap: BinaryHeap<Reverse<Item>> = probabilities
            .iter()
            .enumerate()
            .map(|(s, &p)| {
                Reverse(Item {
                    p: p.max(floor),
                    min_symbol: s as u32,
                    node: s,
                })
            })
            .collect();
        let mut next = n;
        while heap.len() > 1 {
            let Reverse(a) = heap.pop().unwrap();
            let Reverse(b) = heap.pop().unwrap();
            parent[a.node] = next;
            parent[b.node] = next;
            heap.push(Reverse(Item {
                p: a.p + b.p,
                min_symbol: a.min_symbol.min(b.min_symbol),
                node: next,
            }));
            next += 1;
        }
        let mut depth = vec![0u32; 2 * n - 1];
        for node in (0..2 * n - 2).rev() {
            depth[node] = depth[parent[node]] + 1;
        }
        lengths.copy_from_slice(&depth[..n]);
    }
    if lengths.iter().any(|&l| l > 64) {
        return Err(Error::invalid("code length exceeds 64 bits"));
    }
    Ok(canonical(lengths))
}

fn canonical(lengths: Vec<u32>) -> PrefixCode {
    let mut sorted: Vec<u32> = (0..lengths.len() as u32).collect();
    sorted.sort_by_key(|&s| (lengths[s as usize], s));
    let max_len = *lengths.iter().max().unwrap() as usize;
    let mut codes = vec![0u64; lengths.len()];
    let mut first_code = vec![0u64; max_len + 1];
    let mut first_index = vec![0usize; max_len + 1];
    let mut count = vec![0usize; max_len + 1];
    let mut code: u64 = 0;
    let mut prev_len = lengths[sorted[0] as usize];
    for (i, &s) in sorted.iter().enumerate() {
        let len = lengths[s as usize];
        if i > 0 {
            code = (code + 1) << (len - prev_len);
        }
        if count[len as usize] == 0 {
            first_code[len as usize] = code;
            first_index[len as usize] = i;
        }
        count[len as usize] += 1;
        codes[s as usize] = code;
        prev_len = len;
    }
    PrefixCode {
        lengths,
        codes,
        sorted,
        first_code,
        first_index,
        count,
    }
}

impl PrefixCode {
    pub fn symbols(&self) -> usize {
        self.lengths.len()
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum()
    }
}

pub fn huffman_encode(symbols: &[u32], code: &PrefixCode, out: &mut BitWriter) -> Result<()> {
    for &s in symbols {
        let i = s as usize;
        if i >= code.symbols() {
            return Err(Error::invalid(format!("symbol {s} outside the alphabet")));
        }
        out.push_bits(code.codes[i], code.lengths[i]);
    }
    Ok(())
}

pub fn huffman_decode(bits: &mut BitReader, code: &PrefixCode, count: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(count.min(1 << 20));
    let max_len = code.count.len() - 1;
    for _ in 0..count {
        let mut acc: u64 = 0;
        let mut len = 0usize;
        loop {
            acc = (acc << 1) | bits.bit()? as u64;
            len += 1;
            if len > max_len {
                return Err(Error::corrupt(bits.offset(), "invalid prefix code"));
            }
            let c = code.count[len];
            if c > 0 && acc >= code.first_code[len] && acc - code.first_code[len] < c as u64 {
                let i = code.first_index[len] + (acc - code.first_code[len]) as usize;
                out.push(code.sorted[i]);
                break;
            }
        }
    }
    Ok(out)
}
