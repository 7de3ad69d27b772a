//! Non-rigid registration: per-node rotations and translations deforming a
//! source mesh onto a target surface.
//!
//! The objective is `L_data + alpha_reg * L_reg + alpha_rot * L_rot` with
//!
//! - `L_data = (1/V) sum_i |x'_i - c_i|^2`, `c_i` the closest target point,
//! - `L_reg = sum over both directions of each graph edge (j, k) of
//!   |R_j (n_k - n_j) + n_j + t_j - (n_k + t_k)|^2`,
//! - `L_rot = sum_j |R_j^T R_j - I|_F^2 + (det R_j - 1)^2`.
//!
//! Rotations are free 3x3 matrices during the solve and are projected onto
//! rotations at the end. Correspondences are refreshed ICP style and each
//! refresh is followed by damped Gauss-Newton steps with backtracking.

mod system;

use serde::{Deserialize, Serialize};

use crate::deform::{
    matrix_to_rotvec, nearest_rotation, rotvec_to_matrix, KeyNodeSet, TransformSet, WeightTable,
};
use crate::mesh::{Mesh, SurfaceIndex};
use crate::{Error, Mat3, Result, Vec3};

use system::{dot, Block4, Layout, NormalMatrix};

/// Losses at or below this are treated as an exact fit.
const LOSS_FLOOR: f64 = 1e-24;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationParams {
    pub alpha_reg: f64,
    pub alpha_rot: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Relative loss decrease below which the solve stops.
    pub convergence_tol: f64,
    /// Outer iterations between closest-point updates.
    pub correspondence_refresh: usize,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            alpha_reg: 10.0,
            alpha_rot: 100.0,
            max_outer_iters: 50,
            max_inner_iters: 5,
            convergence_tol: 1e-6,
            correspondence_refresh: 1,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_reg >= 0.0
            && self.alpha_rot >= 0.0
            && self.alpha_reg.is_finite()
            && self.alpha_rot.is_finite()
            && self.convergence_tol > 0.0
            && self.max_outer_iters >= 1
            && self.max_inner_iters >= 1
            && self.correspondence_refresh >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid registration parameters {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data: f64,
    pub reg: f64,
    pub rot: f64,
}

impl LossBreakdown {
    pub fn total(&self, params: &RegistrationParams) -> f64 {
        self.data + params.alpha_reg * self.reg + params.alpha_rot * self.rot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// Number of accepted steps so far.
    pub iteration: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    pub transforms: TransformSet,
    pub loss_trace: Vec<LossRecord>,
    pub converged: bool,
    pub params: RegistrationParams,
}

/// Solves for the transforms deforming `source` onto `target`.
///
/// `init` warm-starts the solve; otherwise all transforms start at identity.
pub fn extract_transforms(
    source: &Mesh,
    target: &Mesh,
    nodes: &KeyNodeSet,
    weights: &WeightTable,
    params: &RegistrationParams,
    init: Option<&TransformSet>,
) -> Result<RegistrationReport> {
    let index = SurfaceIndex::build(target)?;
    let init = init.map(NodeState::from_transforms);
    let sol = solve(source.positions(), &index, nodes, weights, params, init)?;
    Ok(RegistrationReport {
        transforms: sol.state.to_transforms()?,
        loss_trace: sol.trace,
        converged: sol.converged,
        params: params.clone(),
    })
}

/// Loss terms at fixed correspondences.
pub fn eval_loss(
    source: &Mesh,
    nodes: &KeyNodeSet,
    weights: &WeightTable,
    rotations: &[Mat3],
    translations: &[Vec3],
    correspondences: &[Vec3],
) -> Result<LossBreakdown> {
    let problem = Problem::new(source.positions(), nodes, weights)?;
    let state = NodeState::new(rotations, translations, nodes.len())?;
    problem.check_correspondences(correspondences)?;
    Ok(problem.loss(&state, correspondences))
}

/// Gradient of the total loss at fixed correspondences.
///
/// Parameters are ordered per node as the nine entries of `R` (row-major)
/// followed by the three entries of `t`.
pub fn loss_gradient(
    source: &Mesh,
    nodes: &KeyNodeSet,
    weights: &WeightTable,
    rotations: &[Mat3],
    translations: &[Vec3],
    params: &RegistrationParams,
    correspondences: &[Vec3],
) -> Result<Vec<f64>> {
    let problem = Problem::new(source.positions(), nodes, weights)?;
    let state = NodeState::new(rotations, translations, nodes.len())?;
    problem.check_correspondences(correspondences)?;
    let mut g = problem.half_gradient(&state, correspondences, params);
    g.iter_mut().for_each(|v| *v *= 2.0);
    Ok(g)
}

/// Closest target-surface point for every point.
pub fn correspondences(target: &SurfaceIndex, points: &[Vec3]) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| target.closest_point(p).point)
        .collect()
}

/// Free (unprojected) per-node matrices and translations.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NodeState {
    pub rotations: Vec<Mat3>,
    pub translations: Vec<Vec3>,
}

impl NodeState {
    fn new(rotations: &[Mat3], translations: &[Vec3], n: usize) -> Result<Self> {
        if rotations.len() != n || translations.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} rotations and {} translations for {n} nodes",
                rotations.len(),
                translations.len()
            )));
        }
        Ok(Self {
            rotations: rotations.to_vec(),
            translations: translations.to_vec(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rotations: vec![Mat3::identity(); n],
            translations: vec![Vec3::zeros(); n],
        }
    }

    pub fn from_transforms(t: &TransformSet) -> Self {
        Self {
            rotations: t.rotations.iter().map(rotvec_to_matrix).collect(),
            translations: t.translations.clone(),
        }
    }

    /// Projects every matrix onto the nearest rotation and converts to rotation vectors.
    pub fn to_transforms(&self) -> Result<TransformSet> {
        let rotations = self
            .rotations
            .iter()
            .map(|m| {
                if *m == Mat3::identity() {
                    Ok(Vec3::zeros())
                } else {
                    matrix_to_rotvec(&nearest_rotation(m))
                }
            })
            .collect::<Result<_>>()?;
        Ok(TransformSet {
            rotations,
            translations: self.translations.clone(),
        })
    }

    fn stepped(&self, delta: &[f64], alpha: f64) -> Self {
        let mut out = self.clone();
        for (j, (r, t)) in out
            .rotations
            .iter_mut()
            .zip(&mut out.translations)
            .enumerate()
        {
            let d = &delta[12 * j..12 * j + 12];
            for p in 0..3 {
                for q in 0..3 {
                    r[(p, q)] += alpha * d[3 * p + q];
                }
                t[p] += alpha * d[9 + p];
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub state: NodeState,
    pub trace: Vec<LossRecord>,
    pub converged: bool,
    pub correspondences: Vec<Vec3>,
}

/// Fixed geometry of one registration problem.
pub(crate) struct Problem<'a> {
    source: &'a [Vec3],
    nodes: &'a [Vec3],
    edges: &'a [(u32, u32)],
    weights: &'a WeightTable,
    /// `x_i - n_j` for every weight-table entry.
    offsets: Vec<Vec3>,
}

impl<'a> Problem<'a> {
    pub fn new(
        source: &'a [Vec3],
        nodes: &'a KeyNodeSet,
        weights: &'a WeightTable,
    ) -> Result<Self> {
        Self::from_parts(source, &nodes.node_positions, &nodes.graph_edges, weights)
    }

    pub fn from_parts(
        source: &'a [Vec3],
        nodes: &'a [Vec3],
        edges: &'a [(u32, u32)],
        weights: &'a WeightTable,
    ) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::EmptyGeometry);
        }
        if weights.len() != source.len() {
            return Err(Error::DimensionMismatch(format!(
                "weight table has {} rows for {} vertices",
                weights.len(),
                source.len()
            )));
        }
        let n = nodes.len();
        if (0..weights.len()).any(|i| weights.row(i).any(|(j, _)| j >= n))
            || edges
                .iter()
                .any(|&(a, b)| a as usize >= n || b as usize >= n)
        {
            return Err(Error::DimensionMismatch(
                "weights or graph reference a missing node".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(source.len() * weights.q());
        for (i, x) in source.iter().enumerate() {
            offsets.extend(weights.row(i).map(|(j, _)| x - nodes[j]));
        }
        Ok(Self {
            source,
            nodes,
            edges,
            weights,
            offsets,
        })
    }

    fn check_correspondences(&self, c: &[Vec3]) -> Result<()> {
        if c.len() != self.source.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} correspondences for {} vertices",
                c.len(),
                self.source.len()
            )));
        }
        Ok(())
    }

    pub fn deform(&self, state: &NodeState) -> Vec<Vec3> {
        let q = self.weights.q();
        let rmi: Vec<Mat3> = state
            .rotations
            .iter()
            .map(|r| r - Mat3::identity())
            .collect();
        self.source
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut disp = Vec3::zeros();
                for (e, (j, w)) in self.weights.row(i).enumerate() {
                    disp += w * (rmi[j] * self.offsets[i * q + e] + state.translations[j]);
                }
                x + disp
            })
            .collect()
    }

    fn reg_residual(&self, state: &NodeState, j: usize, k: usize) -> Vec3 {
        let d = self.nodes[k] - self.nodes[j];
        (state.rotations[j] - Mat3::identity()) * d + state.translations[j] - state.translations[k]
    }

    fn loss_with_deformed(
        &self,
        state: &NodeState,
        deformed: &[Vec3],
        c: &[Vec3],
    ) -> LossBreakdown {
        let data = deformed
            .iter()
            .zip(c)
            .map(|(x, c)| (x - c).norm_squared())
            .sum::<f64>()
            / self.source.len() as f64;
        let mut reg = 0.0;
        for &(a, b) in self.edges {
            let (a, b) = (a as usize, b as usize);
            reg += self.reg_residual(state, a, b).norm_squared();
            reg += self.reg_residual(state, b, a).norm_squared();
        }
        let rot = state
            .rotations
            .iter()
            .map(|r| {
                let det = r.determinant() - 1.0;
                (r.transpose() * r - Mat3::identity()).norm_squared() + det * det
            })
            .sum();
        LossBreakdown { data, reg, rot }
    }

    pub fn loss(&self, state: &NodeState, c: &[Vec3]) -> LossBreakdown {
        self.loss_with_deformed(state, &self.deform(state), c)
    }

    /// `sum w J^T r`, half the gradient of the total loss.
    fn half_gradient(
        &self,
        state: &NodeState,
        c: &[Vec3],
        params: &RegistrationParams,
    ) -> Vec<f64> {
        let n = self.nodes.len();
        let q = self.weights.q();
        let mut g = vec![0.0; 12 * n];
        let deformed = self.deform(state);
        let inv_v = 1.0 / self.source.len() as f64;
        for i in 0..self.source.len() {
            let r = (deformed[i] - c[i]) * inv_v;
            for (e, (j, w)) in self.weights.row(i).enumerate() {
                let u = self.offsets[i * q + e];
                let gj = &mut g[12 * j..12 * j + 12];
                for a in 0..3 {
                    let wr = w * r[a];
                    gj[3 * a] += wr * u.x;
                    gj[3 * a + 1] += wr * u.y;
                    gj[3 * a + 2] += wr * u.z;
                    gj[9 + a] += wr;
                }
            }
        }
        for &(a, b) in self.edges {
            for (j, k) in [(a as usize, b as usize), (b as usize, a as usize)] {
                let e = self.reg_residual(state, j, k) * params.alpha_reg;
                let d = self.nodes[k] - self.nodes[j];
                for ax in 0..3 {
                    for bx in 0..3 {
                        g[12 * j + 3 * ax + bx] += e[ax] * d[bx];
                    }
                    g[12 * j + 9 + ax] += e[ax];
                    g[12 * k + 9 + ax] -= e[ax];
                }
            }
        }
        for (j, r) in state.rotations.iter().enumerate() {
            let (jac, res) = rot_jacobian(r);
            for (row, rv) in jac.iter().zip(res) {
                for p in 0..9 {
                    g[12 * j + p] += params.alpha_rot * rv * row[p];
                }
            }
        }
        g
    }

    fn assemble<'l>(
        &self,
        layout: &'l Layout,
        state: &NodeState,
        params: &RegistrationParams,
    ) -> NormalMatrix<'l> {
        let q = self.weights.q();
        let mut h = NormalMatrix::zeros(layout);
        let inv_v = 1.0 / self.source.len() as f64;
        let mut ext: Vec<[f64; 4]> = vec![[0.0; 4]; q];
        let mut wts = vec![0.0; q];
        let mut ids = vec![0usize; q];
        for i in 0..self.source.len() {
            for (e, (j, w)) in self.weights.row(i).enumerate() {
                let u = self.offsets[i * q + e];
                ext[e] = [u.x, u.y, u.z, 1.0];
                wts[e] = w;
                ids[e] = j;
            }
            for a in 0..q {
                for b in 0..q {
                    let s = wts[a] * wts[b] * inv_v;
                    if s == 0.0 {
                        continue;
                    }
                    let mut blk: Block4 = [[0.0; 4]; 4];
                    for r in 0..4 {
                        for c in 0..4 {
                            blk[r][c] = s * ext[a][r] * ext[b][c];
                        }
                    }
                    let slot = layout.vertex_slots[(i * q + a) * q + b];
                    if slot == u32::MAX {
                        h.add_diag_axis_block(ids[a], &blk);
                    } else {
                        add4(&mut h.off[slot as usize], &blk);
                    }
                }
            }
        }
        let ar = params.alpha_reg;
        for (&(a, b), &(ab, ba)) in self.edges.iter().zip(&layout.edge_slots) {
            for (j, k, jk, kj) in [
                (a as usize, b as usize, ab, ba),
                (b as usize, a as usize, ba, ab),
            ] {
                let d = self.nodes[k] - self.nodes[j];
                let v = [d.x, d.y, d.z, 1.0];
                let mut jj: Block4 = [[0.0; 4]; 4];
                let mut jkb: Block4 = [[0.0; 4]; 4];
                let mut kjb: Block4 = [[0.0; 4]; 4];
                for r in 0..4 {
                    for c in 0..4 {
                        jj[r][c] = ar * v[r] * v[c];
                    }
                    jkb[r][3] = -ar * v[r];
                    kjb[3][r] = -ar * v[r];
                }
                let mut kk: Block4 = [[0.0; 4]; 4];
                kk[3][3] = ar;
                h.add_diag_axis_block(j, &jj);
                h.add_diag_axis_block(k, &kk);
                add4(&mut h.off[jk as usize], &jkb);
                add4(&mut h.off[kj as usize], &kjb);
            }
        }
        for (j, r) in state.rotations.iter().enumerate() {
            let (jac, _) = rot_jacobian(r);
            let d = &mut h.diag[j];
            for row in &jac {
                for p in 0..9 {
                    for qq in 0..9 {
                        d[(p, qq)] += params.alpha_rot * row[p] * row[qq];
                    }
                }
            }
        }
        h
    }
}

fn add4(dst: &mut Block4, src: &Block4) {
    for r in 0..4 {
        for c in 0..4 {
            dst[r][c] += src[r][c];
        }
    }
}

/// Jacobian rows and residuals of the ten orthogonality residuals of one matrix.
fn rot_jacobian(r: &Mat3) -> ([[f64; 9]; 10], [f64; 10]) {
    let mut jac = [[0.0; 9]; 10];
    let mut res = [0.0; 10];
    let rtr = r.transpose() * r;
    for a in 0..3 {
        for b in 0..3 {
            let row = 3 * a + b;
            res[row] = rtr[(a, b)] - if a == b { 1.0 } else { 0.0 };
            for p in 0..3 {
                jac[row][3 * p + a] += r[(p, b)];
                jac[row][3 * p + b] += r[(p, a)];
            }
        }
    }
    res[9] = r.determinant() - 1.0;
    let cof = [
        r[(1, 1)] * r[(2, 2)] - r[(1, 2)] * r[(2, 1)],
        r[(1, 2)] * r[(2, 0)] - r[(1, 0)] * r[(2, 2)],
        r[(1, 0)] * r[(2, 1)] - r[(1, 1)] * r[(2, 0)],
        r[(0, 2)] * r[(2, 1)] - r[(0, 1)] * r[(2, 2)],
        r[(0, 0)] * r[(2, 2)] - r[(0, 2)] * r[(2, 0)],
        r[(0, 1)] * r[(2, 0)] - r[(0, 0)] * r[(2, 1)],
        r[(0, 1)] * r[(1, 2)] - r[(0, 2)] * r[(1, 1)],
        r[(0, 2)] * r[(1, 0)] - r[(0, 0)] * r[(1, 2)],
        r[(0, 0)] * r[(1, 1)] - r[(0, 1)] * r[(1, 0)],
    ];
    jac[9] = cof;
    (jac, res)
}

/// Full ICP / Gauss-Newton solve against a prebuilt target index.
pub(crate) fn solve(
    source: &[Vec3],
    target: &SurfaceIndex,
    nodes: &KeyNodeSet,
    weights: &WeightTable,
    params: &RegistrationParams,
    init: Option<NodeState>,
) -> Result<Solution> {
    solve_parts(
        source,
        target,
        &nodes.node_positions,
        &nodes.graph_edges,
        weights,
        params,
        init,
    )
}

pub(crate) fn solve_parts(
    source: &[Vec3],
    target: &SurfaceIndex,
    nodes: &[Vec3],
    edges: &[(u32, u32)],
    weights: &WeightTable,
    params: &RegistrationParams,
    init: Option<NodeState>,
) -> Result<Solution> {
    params.validate()?;
    let problem = Problem::from_parts(source, nodes, edges, weights)?;
    let n = nodes.len();
    let mut state = match init {
        Some(s) if s.rotations.len() == n && s.translations.len() == n => s,
        Some(_) => {
            return Err(Error::DimensionMismatch(
                "initial transforms do not match the node count".into(),
            ))
        }
        None => NodeState::identity(n),
    };
    let layout = Layout::new(n, weights, edges);
    let mut deformed = problem.deform(&state);
    let mut corr = correspondences(target, &deformed);
    let mut loss = problem.loss_with_deformed(&state, &deformed, &corr);
    let mut total = loss.total(params);
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut trace = vec![LossRecord { iteration: 0, loss }];
    let mut accepted = 0usize;
    let mut converged = total <= LOSS_FLOOR;
    let mut prev_outer = total;
    'outer: for outer in 0..params.max_outer_iters {
        if converged {
            break;
        }
        if outer > 0 && outer % params.correspondence_refresh == 0 {
            corr = correspondences(target, &deformed);
            loss = problem.loss_with_deformed(&state, &deformed, &corr);
            total = loss.total(params);
        }
        for _ in 0..params.max_inner_iters {
            let step = gauss_newton_step(&problem, &layout, &state, &corr, params, total)?;
            let Some((next, next_deformed, next_loss)) = step else {
                // no descent direction left at these correspondences
                if accepted == 0 {
                    break 'outer;
                }
                break;
            };
            let next_total = next_loss.total(params);
            let rel = (total - next_total) / total;
            state = next;
            deformed = next_deformed;
            loss = next_loss;
            total = next_total;
            accepted += 1;
            trace.push(LossRecord {
                iteration: accepted,
                loss,
            });
            if total <= LOSS_FLOOR {
                converged = true;
                break 'outer;
            }
            if rel < params.convergence_tol {
                break;
            }
        }
        if accepted > 0 && prev_outer - total <= params.convergence_tol * prev_outer {
            converged = true;
            break;
        }
        prev_outer = total;
    }
    Ok(Solution {
        state,
        trace,
        converged,
        correspondences: corr,
    })
}

type Step = Option<(NodeState, Vec<Vec3>, LossBreakdown)>;

fn gauss_newton_step(
    problem: &Problem,
    layout: &Layout,
    state: &NodeState,
    corr: &[Vec3],
    params: &RegistrationParams,
    total: f64,
) -> Result<Step> {
    let g = problem.half_gradient(state, corr, params);
    if dot(&g, &g) == 0.0 {
        return Ok(None);
    }
    let mut h = problem.assemble(layout, state, params);
    let mu = 1e-9 * h.trace() / h.dim() as f64 + 1e-15;
    h.add_to_diagonal(mu);
    let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
    let max_iters = h.dim().clamp(50, 2000);
    let delta = h.solve(&rhs, 1e-10, max_iters);
    if !delta.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    let mut alpha = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let next = state.stepped(&delta, alpha);
        let deformed = problem.deform(&next);
        let loss = problem.loss_with_deformed(&next, &deformed, corr);
        let t = loss.total(params);
        if t.is_finite() && t < total {
            return Ok(Some((next, deformed, loss)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

#[cfg(test)]
mod tests;
