//! Key-node selection for a group of frames and anchor index coding.
//!
//! Selection over-provisions candidate nodes on the decoded I-frame, fits
//! them to the key frame, greedily prunes the node whose removal costs the
//! least data loss, nudges the survivors along the data-loss gradient and
//! finally snaps them onto distinct I-frame vertices.

use serde::{Deserialize, Serialize};

use crate::bytes::{write_uvarint, ByteReader};
use crate::deform::{
    build_node_graph, compute_influence_weights, kernel_weights, nearest_nodes, KeyNodeSet,
};
use crate::mesh::{Mesh, SurfaceIndex};
use crate::registration::{solve_parts, NodeState, RegistrationParams};
use crate::{Error, Mat3, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    /// Neighbours per node in the smoothness graph.
    pub graph_k: usize,
    /// Candidates seeded per requested node.
    pub candidate_factor: usize,
    /// Transforms are re-solved every `max(1, active / resolve_divisor)` removals.
    pub resolve_divisor: usize,
    /// Outer-iteration cap for the solves inside selection.
    pub prune_outer_iters: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            graph_k: 4,
            candidate_factor: 4,
            resolve_divisor: 10,
            prune_outer_iters: 8,
        }
    }
}

const REFINE_HALVINGS: usize = 6;

/// Selects `n_target` key nodes on `source` for predicting `target`.
///
/// `q` is the number of nodes influencing each vertex.
pub fn generate_keynodes(
    source: &Mesh,
    target: &Mesh,
    n_target: usize,
    q: usize,
    sel: &SelectionParams,
    reg: &RegistrationParams,
    seed: u64,
) -> Result<KeyNodeSet> {
    let v = source.vertex_count();
    if n_target == 0 || n_target > v {
        return Err(Error::invalid(format!(
            "requested {n_target} key nodes on a mesh with {v} vertices"
        )));
    }
    if q == 0
        || sel.graph_k == 0
        || sel.candidate_factor == 0
        || sel.resolve_divisor == 0
        || sel.prune_outer_iters == 0
    {
        return Err(Error::invalid(format!(
            "invalid selection parameters {sel:?}"
        )));
    }
    if n_target == v {
        return KeyNodeSet::from_anchors(source, (0..v as u32).collect(), sel.graph_k);
    }
    let index = SurfaceIndex::build(target)?;
    let pts = source.positions();
    let count = (sel.candidate_factor * n_target).min(v);
    let cand: Vec<Vec3> = source
        .farthest_point_sample(count, seed)?
        .into_iter()
        .map(|i| pts[i])
        .collect();
    let reg = RegistrationParams {
        max_outer_iters: reg.max_outer_iters.min(sel.prune_outer_iters),
        ..reg.clone()
    };
    let mut pruner = Pruner::new(pts, &index, cand, q, sel, &reg)?;
    pruner.prune_to(n_target)?;
    let refined = pruner.refine();
    snap_to_vertices(source, &refined, sel.graph_k)
}

struct Pruner<'a> {
    source: &'a [Vec3],
    target: &'a SurfaceIndex,
    q: usize,
    sel: &'a SelectionParams,
    reg: &'a RegistrationParams,
    /// Candidate positions; removed candidates stay in place.
    cand: Vec<Vec3>,
    alive: Vec<bool>,
    active: Vec<usize>,
    /// Per candidate rotation minus identity and translation from the last solve.
    rmi: Vec<Mat3>,
    trans: Vec<Vec3>,
    corr: Vec<Vec3>,
    /// Per vertex, the nearest `q + 2` live candidates as (squared distance, id).
    near: Vec<Vec<(f64, u32)>>,
    /// Per vertex deformed position and squared residual under the current weights.
    deformed: Vec<Vec3>,
    err: Vec<f64>,
}

impl<'a> Pruner<'a> {
    fn new(
        source: &'a [Vec3],
        target: &'a SurfaceIndex,
        cand: Vec<Vec3>,
        q: usize,
        sel: &'a SelectionParams,
        reg: &'a RegistrationParams,
    ) -> Result<Self> {
        let n = cand.len();
        let mut p = Self {
            source,
            target,
            q,
            sel,
            reg,
            alive: vec![true; n],
            active: (0..n).collect(),
            rmi: vec![Mat3::zeros(); n],
            trans: vec![Vec3::zeros(); n],
            corr: Vec::new(),
            near: vec![Vec::new(); source.len()],
            deformed: Vec::new(),
            err: Vec::new(),
            cand,
        };
        for i in 0..source.len() {
            p.refresh_near(i);
        }
        p.resolve()?;
        Ok(p)
    }

    fn q_eff(&self, live: usize) -> usize {
        self.q.min(live)
    }

    fn refresh_near(&mut self, i: usize) {
        let alive = &self.alive;
        let mut out = std::mem::take(&mut self.near[i]);
        nearest_nodes(
            &self.source[i],
            &self.cand,
            self.q + 2,
            |j| alive[j],
            &mut out,
        );
        self.near[i] = out;
    }

    /// Deformed position of vertex `i` from a sorted neighbour list.
    fn deform_vertex(&self, i: usize, near: &[(f64, u32)], q: usize) -> Vec3 {
        let take = near.len().min(q + 1);
        let w = kernel_weights(&near[..take], q);
        let x = self.source[i];
        let mut disp = Vec3::zeros();
        for (k, wk) in w.iter().enumerate() {
            let j = near[k].1 as usize;
            disp += *wk * (self.rmi[j] * (x - self.cand[j]) + self.trans[j]);
        }
        x + disp
    }

    fn resolve(&mut self) -> Result<()> {
        let nodes: Vec<Vec3> = self.active.iter().map(|&j| self.cand[j]).collect();
        let edges = build_node_graph(&nodes, self.sel.graph_k);
        let weights = compute_influence_weights(self.source, &nodes, self.q_eff(nodes.len()))?;
        let init = NodeState {
            rotations: self
                .active
                .iter()
                .map(|&j| self.rmi[j] + Mat3::identity())
                .collect(),
            translations: self.active.iter().map(|&j| self.trans[j]).collect(),
        };
        let sol = solve_parts(
            self.source,
            self.target,
            &nodes,
            &edges,
            &weights,
            self.reg,
            Some(init),
        )?;
        for (s, &j) in self.active.iter().enumerate() {
            self.rmi[j] = sol.state.rotations[s] - Mat3::identity();
            self.trans[j] = sol.state.translations[s];
        }
        self.corr = sol.correspondences;
        self.rebuild_errors();
        Ok(())
    }

    fn rebuild_errors(&mut self) {
        let q = self.q_eff(self.active.len());
        self.deformed = (0..self.source.len())
            .map(|i| self.deform_vertex(i, &self.near[i], q))
            .collect();
        self.err = self
            .deformed
            .iter()
            .zip(&self.corr)
            .map(|(x, c)| (x - c).norm_squared())
            .collect();
    }

    /// Increase of `V * L_data` when candidate `j` is removed, at fixed transforms.
    fn removal_cost(&self, j: usize, affected: &[usize], q_new: usize) -> f64 {
        let mut buf: Vec<(f64, u32)> = Vec::with_capacity(self.q + 2);
        let mut delta = 0.0;
        for &i in affected {
            buf.clear();
            buf.extend(self.near[i].iter().filter(|e| e.1 as usize != j));
            let x = self.deform_vertex(i, &buf, q_new);
            delta += (x - self.corr[i]).norm_squared() - self.err[i];
        }
        delta
    }

    fn prune_to(&mut self, n_target: usize) -> Result<()> {
        let mut since_solve = 0;
        let mut cadence = (self.active.len() / self.sel.resolve_divisor).max(1);
        while self.active.len() > n_target {
            let live = self.active.len();
            let q_now = self.q_eff(live);
            let q_new = self.q_eff(live - 1);
            // vertices whose weights involve each candidate
            let mut users: Vec<Vec<usize>> = vec![Vec::new(); self.cand.len()];
            if q_new == q_now {
                for (i, near) in self.near.iter().enumerate() {
                    for e in near.iter().take(q_now + 1) {
                        users[e.1 as usize].push(i);
                    }
                }
            }
            let all: Vec<usize> = (0..self.source.len()).collect();
            let mut best: Option<(f64, usize)> = None;
            for &j in &self.active {
                let affected = if q_new == q_now { &users[j] } else { &all };
                let cost = self.removal_cost(j, affected, q_new);
                if best.map_or(true, |(bc, _)| cost < bc) {
                    best = Some((cost, j));
                }
            }
            let (_, j) = best.expect("at least one live candidate");
            self.alive[j] = false;
            self.active.retain(|&k| k != j);
            for i in 0..self.source.len() {
                if self.near[i].iter().any(|e| e.1 as usize == j) {
                    self.refresh_near(i);
                }
            }
            since_solve += 1;
            if since_solve >= cadence || self.active.len() == n_target {
                self.resolve()?;
                since_solve = 0;
                cadence = (self.active.len() / self.sel.resolve_divisor).max(1);
            } else {
                self.rebuild_errors();
            }
        }
        Ok(())
    }

    fn data_loss(&self, nodes: &[Vec3]) -> f64 {
        let q = self.q_eff(nodes.len());
        let mut near = Vec::with_capacity(q + 1);
        let mut sum = 0.0;
        for (i, x) in self.source.iter().enumerate() {
            nearest_nodes(x, nodes, q + 1, |_| true, &mut near);
            let w = kernel_weights(&near, q);
            let mut disp = Vec3::zeros();
            for (k, wk) in w.iter().enumerate() {
                let s = near[k].1 as usize;
                let j = self.active[s];
                disp += *wk * (self.rmi[j] * (x - nodes[s]) + self.trans[j]);
            }
            sum += (x + disp - self.corr[i]).norm_squared();
        }
        sum / self.source.len() as f64
    }

    /// One gradient-descent pass over the surviving node positions.
    fn refine(&self) -> Vec<Vec3> {
        let nodes: Vec<Vec3> = self.active.iter().map(|&j| self.cand[j]).collect();
        let n = nodes.len();
        let q = self.q_eff(n);
        let slot: std::collections::HashMap<usize, usize> = self
            .active
            .iter()
            .enumerate()
            .map(|(s, &j)| (j, s))
            .collect();
        let mut grad = vec![Vec3::zeros(); n];
        let inv_v = 1.0 / self.source.len() as f64;
        for i in 0..self.source.len() {
            let near = &self.near[i];
            let take = near.len().min(q + 1);
            let w = kernel_weights(&near[..take], q);
            let r = self.deformed[i] - self.corr[i];
            for (k, wk) in w.iter().enumerate() {
                let j = near[k].1 as usize;
                grad[slot[&j]] -= 2.0 * inv_v * *wk * (self.rmi[j].transpose() * r);
            }
        }
        let g_norm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        if n < 2 || g_norm == 0.0 || !g_norm.is_finite() {
            return nodes;
        }
        let spacing = mean_nearest_spacing(&nodes);
        let base = self.data_loss(&nodes);
        let mut step = 0.5 * spacing / g_norm;
        for _ in 0..=REFINE_HALVINGS {
            let moved: Vec<Vec3> = nodes.iter().zip(&grad).map(|(p, g)| p - g * step).collect();
            if self.data_loss(&moved) < base {
                return moved;
            }
            step *= 0.5;
        }
        nodes
    }
}

fn mean_nearest_spacing(nodes: &[Vec3]) -> f64 {
    let mut sum = 0.0;
    for (i, p) in nodes.iter().enumerate() {
        let d = nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (q - p).norm())
            .fold(f64::INFINITY, f64::min);
        sum += d;
    }
    sum / nodes.len() as f64
}

/// Moves every node to its nearest I-frame vertex, resolving collisions.
///
/// A node whose nearest vertex is already taken moves to the nearest unused
/// vertex. Anchors come back sorted with their positions and a
/// `graph_k`-nearest-neighbour graph.
pub fn snap_to_vertices(
    iframe: &Mesh,
    node_positions: &[Vec3],
    graph_k: usize,
) -> Result<KeyNodeSet> {
    let v = iframe.vertex_count();
    if v == 0 {
        return Err(Error::EmptyGeometry);
    }
    if node_positions.len() > v {
        return Err(Error::invalid(format!(
            "{} nodes cannot snap to {v} distinct vertices",
            node_positions.len()
        )));
    }
    let pts = iframe.positions();
    let mut used = vec![false; v];
    let mut anchors = Vec::with_capacity(node_positions.len());
    for p in node_positions {
        let mut best: Option<(f64, usize)> = None;
        for (i, q) in pts.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = (q - p).norm_squared();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("fewer nodes than vertices");
        used[i] = true;
        anchors.push(i as u32);
    }
    anchors.sort_unstable();
    KeyNodeSet::from_anchors(iframe, anchors, graph_k)
}

/// First index, then successive differences, as unsigned LEB128 varints.
pub fn encode_indices(anchor_indices: &[u32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(anchor_indices.len() * 2);
    let mut prev: Option<u32> = None;
    for &a in anchor_indices {
        let delta = match prev {
            None => a,
            Some(p) if a > p => a - p,
            Some(p) => {
                return Err(Error::invalid(format!(
                    "indices must be strictly increasing, got {p} then {a}"
                )))
            }
        };
        write_uvarint(&mut out, delta as u64);
        prev = Some(a);
    }
    Ok(out)
}

/// Inverse of [`encode_indices`]; consumes the whole buffer.
pub fn decode_indices(bytes: &[u8]) -> Result<Vec<u32>> {
    decode_indices_from(&mut ByteReader::new(bytes))
}

pub(crate) fn decode_indices_from(r: &mut ByteReader) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    let mut acc: u64 = 0;
    while !r.is_empty() {
        let at = r.offset();
        let d = r.uvarint()?;
        if !out.is_empty() && d == 0 {
            return Err(Error::corrupt(at, "zero delta in anchor indices"));
        }
        acc += d;
        if acc > u32::MAX as u64 {
            return Err(Error::corrupt(at, "anchor index exceeds 32 bits"));
        }
        out.push(acc as u32);
    }
    Ok(out)
}
