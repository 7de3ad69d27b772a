//! Block-sparse normal equations over 12-parameter nodes and a block-Jacobi PCG solver.
//!
//! Each node carries `[R00 R01 R02 R10 .. R22 t0 t1 t2]`. The data and
//! smoothness terms couple node pairs only through the four slots of one
//! axis (`R[a][0..3]` and `t[a]`) with the same 4x4 block for every axis, so
//! off-diagonal blocks are stored as a single 4x4 matrix.

use std::collections::BTreeSet;

use nalgebra::{SMatrix, SVector};

use crate::deform::WeightTable;

pub(crate) type Block12 = SMatrix<f64, 12, 12>;
pub(crate) type Vec12 = SVector<f64, 12>;
pub(crate) type Block4 = [[f64; 4]; 4];

pub(crate) const AXIS_SLOTS: [[usize; 4]; 3] = [[0, 1, 2, 9], [3, 4, 5, 10], [6, 7, 8, 11]];

/// Sparsity pattern of the node-pair blocks, fixed for one weight table and graph.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub n: usize,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    /// Per vertex, `q * q` block slots for each ordered pair of its nodes (`u32::MAX` on the diagonal).
    pub vertex_slots: Vec<u32>,
    /// Per graph edge, the slots of blocks `(j, k)` and `(k, j)`.
    pub edge_slots: Vec<(u32, u32)>,
}

impl Layout {
    pub fn new(n: usize, weights: &WeightTable, edges: &[(u32, u32)]) -> Self {
        let q = weights.q();
        let mut pairs = BTreeSet::new();
        for i in 0..weights.len() {
            let row: Vec<usize> = weights.row(i).map(|(j, _)| j).collect();
            for &a in &row {
                for &b in &row {
                    if a != b {
                        pairs.insert((a as u32, b as u32));
                    }
                }
            }
        }
        for &(j, k) in edges {
            pairs.insert((j, k));
            pairs.insert((k, j));
        }
        let mut row_start = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(pairs.len());
        for &(j, k) in &pairs {
            row_start[j as usize + 1] += 1;
            cols.push(k);
        }
        for j in 0..n {
            row_start[j + 1] += row_start[j];
        }
        let mut layout = Self {
            n,
            row_start,
            cols,
            vertex_slots: Vec::with_capacity(weights.len() * q * q),
            edge_slots: Vec::with_capacity(edges.len()),
        };
        for i in 0..weights.len() {
            let row: Vec<usize> = weights.row(i).map(|(j, _)| j).collect();
            for &a in &row {
                for &b in &row {
                    let s = if a == b { u32::MAX } else { layout.slot(a, b) };
                    layout.vertex_slots.push(s);
                }
            }
        }
        for &(j, k) in edges {
            let jk = layout.slot(j as usize, k as usize);
            let kj = layout.slot(k as usize, j as usize);
            layout.edge_slots.push((jk, kj));
        }
        layout
    }

    fn slot(&self, j: usize, k: usize) -> u32 {
        let row = &self.cols[self.row_start[j]..self.row_start[j + 1]];
        let pos = row
            .binary_search(&(k as u32))
            .expect("pair registered in the layout");
        (self.row_start[j] + pos) as u32
    }

    pub fn off_count(&self) -> usize {
        self.cols.len()
    }
}

/// Assembled normal matrix `sum w J^T J` for one Gauss-Newton step.
pub(crate) struct NormalMatrix<'l> {
    pub layout: &'l Layout,
    pub diag: Vec<Block12>,
    pub off: Vec<Block4>,
}

impl<'l> NormalMatrix<'l> {
    pub fn zeros(layout: &'l Layout) -> Self {
        Self {
            layout,
            diag: vec![Block12::zeros(); layout.n],
            off: vec![[[0.0; 4]; 4]; layout.off_count()],
        }
    }

    /// Adds a shared-axis 4x4 block to the diagonal of node `j`.
    pub fn add_diag_axis_block(&mut self, j: usize, s: &Block4) {
        let d = &mut self.diag[j];
        for slots in &AXIS_SLOTS {
            for r in 0..4 {
                for c in 0..4 {
                    d[(slots[r], slots[c])] += s[r][c];
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        12 * self.layout.n
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().map(|d| d.trace()).sum()
    }

    pub fn add_to_diagonal(&mut self, mu: f64) {
        for d in &mut self.diag {
            for r in 0..12 {
                d[(r, r)] += mu;
            }
        }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        let l = self.layout;
        for j in 0..l.n {
            let xj = Vec12::from_column_slice(&x[12 * j..12 * j + 12]);
            let mut yj = self.diag[j] * xj;
            for s in l.row_start[j]..l.row_start[j + 1] {
                let k = l.cols[s] as usize;
                let xk = &x[12 * k..12 * k + 12];
                let b = &self.off[s];
                for slots in &AXIS_SLOTS {
                    let v = [xk[slots[0]], xk[slots[1]], xk[slots[2]], xk[slots[3]]];
                    for r in 0..4 {
                        yj[slots[r]] +=
                            b[r][0] * v[0] + b[r][1] * v[1] + b[r][2] * v[2] + b[r][3] * v[3];
                    }
                }
            }
            y[12 * j..12 * j + 12].copy_from_slice(yj.as_slice());
        }
    }

    /// Solves `H x = b` by conjugate gradients preconditioned with the diagonal blocks.
    pub fn solve(&self, b: &[f64], rel_tol: f64, max_iters: usize) -> Vec<f64> {
        let n = self.dim();
        let precond: Vec<Option<nalgebra::Cholesky<f64, nalgebra::Const<12>>>> =
            self.diag.iter().map(|d| d.cholesky()).collect();
        let apply_precond = |r: &[f64], z: &mut [f64]| {
            for (j, c) in precond.iter().enumerate() {
                let rj = Vec12::from_column_slice(&r[12 * j..12 * j + 12]);
                let zj = match c {
                    Some(c) => c.solve(&rj),
                    None => {
                        let d = self.diag[j].diagonal();
                        rj.zip_map(&d, |a, dd| if dd > 0.0 { a / dd } else { a })
                    }
                };
                z[12 * j..12 * j + 12].copy_from_slice(zj.as_slice());
            }
        };
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return x;
        }
        let mut z = vec![0.0; n];
        apply_precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut hp = vec![0.0; n];
        for _ in 0..max_iters {
            self.mul(&p, &mut hp);
            let php = dot(&p, &hp);
            if !(php > 0.0) {
                break;
            }
            let alpha = rz / php;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * hp[i];
            }
            if dot(&r, &r).sqrt() <= rel_tol * b_norm {
                break;
            }
            apply_precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
