//! Prediction residuals quantized over a cost-constrained unbalanced octree.
//!
//! The octree is built on the distorted (predicted) frame, which both sides
//! share, so only two flag streams describe its shape: one bit per visited
//! node saying whether it is subdivided, then one bit per node marking
//! non-correcting cells (leaves whose mean residual is below a threshold) at
//! the highest level where the whole subtree qualifies. Every correcting leaf
//! transmits its mean residual, one coded vector per axis.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bytes::{BitReader, BitWriter, ByteReader};
use crate::entropy::{decode_vector, encode_vector};
use crate::mesh::{bounds_of, Mesh, SurfaceIndex};
use crate::{Error, Result, Vec3};

/// Depth bound applied while rebuilding a tree from untrusted flags.
const DECODE_DEPTH_LIMIT: u8 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFrame {
    /// `closest[i] - distorted[i]`.
    pub residuals: Vec<Vec3>,
    /// Closest point on the source surface for every distorted vertex.
    pub closest: Vec<Vec3>,
}

pub fn compute_residuals(distorted: &Mesh, source_index: &SurfaceIndex) -> ResidualFrame {
    let closest: Vec<Vec3> = distorted
        .positions()
        .iter()
        .map(|p| source_index.closest_point(p).point)
        .collect();
    let residuals = closest
        .iter()
        .zip(distorted.positions())
        .map(|(c, p)| c - p)
        .collect();
    ResidualFrame { residuals, closest }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    pub depth: u8,
    pub leaf_budget: usize,
    pub ncoc_threshold: f64,
    pub levels: usize,
    pub ncoc_enabled: bool,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            leaf_budget: 256,
            ncoc_threshold: 0.0,
            levels: 128,
            ncoc_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OctreeNode {
    pub depth: u8,
    pub center: Vec3,
    pub half: f64,
    /// Children in octant order; empty octants are absent.
    pub children: Vec<u32>,
    pub vertices: Vec<u32>,
    /// Set once a node has been made a leaf by pruning.
    pub collapsed: bool,
}

impl OctreeNode {
    pub fn is_leaf(&self) -> bool {
        self.collapsed || self.children.is_empty()
    }
}

/// Arena octree; node ids follow breadth-first order of the balanced tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOctree {
    pub nodes: Vec<OctreeNode>,
    pub max_depth: u8,
    pub vertex_count: usize,
}

fn root_cube(points: &[Vec3]) -> (Vec3, f64) {
    match bounds_of(points) {
        Some((lo, hi)) => {
            let ext = (hi - lo).max();
            let half = if ext > 0.0 { 0.5 * ext } else { 1.0 };
            ((lo + hi) * 0.5, half)
        }
        None => (Vec3::zeros(), 1.0),
    }
}

/// Octant of `p` in a cell centred at `c`; `x` is the most significant bit.
pub fn octant(p: &Vec3, c: &Vec3) -> usize {
    ((p.x >= c.x) as usize) << 2 | ((p.y >= c.y) as usize) << 1 | (p.z >= c.z) as usize
}

fn child_center(c: &Vec3, half: f64, oct: usize) -> Vec3 {
    let q = 0.5 * half;
    let s = |bit: usize| if oct & bit != 0 { q } else { -q };
    c + Vec3::new(s(4), s(2), s(1))
}

/// Splits `node` by octant and appends the nonempty children to the arena.
fn split(nodes: &mut Vec<OctreeNode>, id: usize, points: &[Vec3]) {
    let (center, half, depth) = (nodes[id].center, nodes[id].half, nodes[id].depth);
    let mut buckets: [Vec<u32>; 8] = Default::default();
    for &v in &nodes[id].vertices {
        buckets[octant(&points[v as usize], &center)].push(v);
    }
    let mut children = Vec::new();
    for (oct, verts) in buckets.into_iter().enumerate() {
        if verts.is_empty() {
            continue;
        }
        children.push(nodes.len() as u32);
        nodes.push(OctreeNode {
            depth: depth + 1,
            center: child_center(&center, half, oct),
            half: 0.5 * half,
            children: Vec::new(),
            vertices: verts,
            collapsed: false,
        });
    }
    nodes[id].children = children;
}

pub fn build_balanced_octree(distorted: &Mesh, depth: u8) -> ResidualOctree {
    let points = distorted.positions();
    let (center, half) = root_cube(points);
    let mut nodes = vec![OctreeNode {
        depth: 0,
        center,
        half,
        children: Vec::new(),
        vertices: (0..points.len() as u32).collect(),
        collapsed: false,
    }];
    let mut id = 0;
    while id < nodes.len() {
        if nodes[id].depth < depth {
            split(&mut nodes, id, points);
        }
        id += 1;
    }
    ResidualOctree {
        nodes,
        max_depth: depth,
        vertex_count: points.len(),
    }
}

fn mean_of(verts: &[u32], r: &[Vec3]) -> Vec3 {
    let sum: Vec3 = verts.iter().map(|&v| r[v as usize]).sum();
    sum / verts.len() as f64
}

/// Per-axis averaged mean squared deviation of the residuals from their mean.
fn spread(verts: &[u32], r: &[Vec3]) -> f64 {
    let m = mean_of(verts, r);
    let s: f64 = verts
        .iter()
        .map(|&v| (r[v as usize] - m).norm_squared())
        .sum();
    s / (3.0 * verts.len() as f64)
}

impl ResidualOctree {
    /// Reachable nodes in breadth-first order.
    pub fn visit_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            out.push(id);
            let n = &self.nodes[id];
            if !n.is_leaf() {
                queue.extend(n.children.iter().map(|&c| c as usize));
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.visit_order()
            .into_iter()
            .filter(|&id| self.nodes[id].is_leaf())
            .collect()
    }

    pub fn leaf_mean(&self, id: usize, residuals: &[Vec3]) -> Vec3 {
        mean_of(&self.nodes[id].vertices, residuals)
    }

    /// Occupancy-weighted quality factor: distortion drop per extra leaf.
    pub fn lambda(&self, id: usize, residuals: &[Vec3]) -> Result<f64> {
        let n = &self.nodes[id];
        if n.vertices.is_empty() {
            return Err(Error::invalid("quality factor of an empty node"));
        }
        if n.is_leaf() || n.children.len() < 2 {
            return Ok(0.0);
        }
        let vn = n.vertices.len() as f64;
        let children: f64 = n
            .children
            .iter()
            .map(|&c| {
                let cv = &self.nodes[c as usize].vertices;
                cv.len() as f64 / vn * spread(cv, residuals)
            })
            .sum();
        let delta_d = spread(&n.vertices, residuals) - children;
        let p = vn / self.vertex_count as f64;
        Ok(p * delta_d / (n.children.len() - 1) as f64)
    }

    /// Occupancy-weighted distortion of replacing residuals by leaf means.
    pub fn distortion(&self, residuals: &[Vec3]) -> f64 {
        self.leaves()
            .into_iter()
            .map(|l| {
                let v = &self.nodes[l].vertices;
                v.len() as f64 / self.vertex_count as f64 * spread(v, residuals)
            })
            .sum()
    }

    fn prune_flags(&self) -> Vec<bool> {
        self.visit_order()
            .into_iter()
            .map(|id| !self.nodes[id].is_leaf())
            .collect()
    }
}

/// Greedily collapses the smallest-lambda node until at most `leaf_budget` leaves remain.
///
/// Returns the pruned tree and its subdivision flags in breadth-first order.
pub fn cost_constrained_prune(
    mut tree: ResidualOctree,
    residuals: &[Vec3],
    leaf_budget: usize,
) -> Result<(ResidualOctree, Vec<bool>)> {
    if leaf_budget == 0 {
        return Err(Error::invalid("leaf budget must be at least 1"));
    }
    let mut parent = vec![usize::MAX; tree.nodes.len()];
    for (id, n) in tree.nodes.iter().enumerate() {
        for &c in &n.children {
            parent[c as usize] = id;
        }
    }
    let collapsible = |t: &ResidualOctree, id: usize| {
        let n = &t.nodes[id];
        !n.is_leaf() && n.children.iter().all(|&c| t.nodes[c as usize].is_leaf())
    };
    let mut leaves = tree.leaves().len();
    let mut heap = BinaryHeap::new();
    for id in 0..tree.nodes.len() {
        if collapsible(&tree, id) {
            heap.push(Reverse((OrdF64(tree.lambda(id, residuals)?), id)));
        }
    }
    while leaves > leaf_budget {
        let Some(Reverse((_, id))) = heap.pop() else {
            break;
        };
        leaves -= tree.nodes[id].children.len() - 1;
        tree.nodes[id].collapsed = true;
        let p = parent[id];
        if p != usize::MAX && collapsible(&tree, p) {
            heap.push(Reverse((OrdF64(tree.lambda(p, residuals)?), p)));
        }
    }
    let flags = tree.prune_flags();
    Ok((tree, flags))
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Non-correcting flags for a finalized tree, plus the per-node NCOC marks.
///
/// A node is non-correcting when every leaf below it has a mean residual
/// magnitude under `threshold`. Flags are emitted breadth-first for nodes
/// none of whose ancestors is non-correcting.
pub fn mark_ncoc(
    tree: &ResidualOctree,
    residuals: &[Vec3],
    threshold: f64,
) -> (Vec<bool>, Vec<bool>) {
    let order = tree.visit_order();
    let mut ncoc = vec![false; tree.nodes.len()];
    for &id in order.iter().rev() {
        let n = &tree.nodes[id];
        ncoc[id] = if n.is_leaf() {
            tree.leaf_mean(id, residuals).norm() < threshold
        } else {
            n.children.iter().all(|&c| ncoc[c as usize])
        };
    }
    let mut flags = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        flags.push(ncoc[id]);
        let n = &tree.nodes[id];
        if !ncoc[id] && !n.is_leaf() {
            queue.extend(n.children.iter().map(|&c| c as usize));
        }
    }
    (flags, ncoc)
}

/// Leaves that carry a correction, in breadth-first order.
fn correcting_leaves(tree: &ResidualOctree, ncoc: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        if ncoc[id] {
            continue;
        }
        let n = &tree.nodes[id];
        if n.is_leaf() {
            out.push(id);
        } else {
            queue.extend(n.children.iter().map(|&c| c as usize));
        }
    }
    out
}

fn write_flags(flags: &[bool], out: &mut Vec<u8>) {
    let mut w = BitWriter::new();
    for &f in flags {
        w.push_bit(f);
    }
    out.extend_from_slice(&w.finish());
}

/// Codes one residual frame; returns the payload.
pub fn encode_residual_frame(
    distorted: &Mesh,
    residuals: &ResidualFrame,
    cfg: &ResidualConfig,
) -> Result<Vec<u8>> {
    let r = &residuals.residuals;
    if r.len() != distorted.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {} vertices",
            r.len(),
            distorted.vertex_count()
        )));
    }
    if r.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let tree = build_balanced_octree(distorted, cfg.depth);
    let (tree, prune) = cost_constrained_prune(tree, r, cfg.leaf_budget)?;
    let mut out = Vec::new();
    write_flags(&prune, &mut out);
    let ncoc = if cfg.ncoc_enabled {
        let (flags, ncoc) = mark_ncoc(&tree, r, cfg.ncoc_threshold);
        write_flags(&flags, &mut out);
        ncoc
    } else {
        vec![false; tree.nodes.len()]
    };
    let leaves = correcting_leaves(&tree, &ncoc);
    let means: Vec<Vec3> = leaves.iter().map(|&l| tree.leaf_mean(l, r)).collect();
    for axis in 0..3 {
        let values: Vec<f64> = means.iter().map(|m| m[axis]).collect();
        let samples: Vec<f64> = r.iter().map(|v| v[axis]).collect();
        encode_vector(&values, &samples, cfg.levels, &mut out)?;
    }
    Ok(out)
}

/// Rebuilds the octree from its flags and returns the per-vertex corrections.
///
/// Consumes the whole reader.
pub fn decode_residual_frame(
    distorted: &Mesh,
    r: &mut ByteReader,
    levels: usize,
    ncoc_enabled: bool,
) -> Result<Vec<Vec3>> {
    let points = distorted.positions();
    if points.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let (center, half) = root_cube(points);
    let mut tree = ResidualOctree {
        nodes: vec![OctreeNode {
            depth: 0,
            center,
            half,
            children: Vec::new(),
            vertices: (0..points.len() as u32).collect(),
            collapsed: false,
        }],
        max_depth: 0,
        vertex_count: points.len(),
    };
    {
        let mut bits = BitReader::new(r);
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            if !bits.bit()? {
                continue;
            }
            if tree.nodes[id].depth >= DECODE_DEPTH_LIMIT {
                return Err(Error::corrupt(
                    bits.offset(),
                    "octree deeper than the decoder limit",
                ));
            }
            split(&mut tree.nodes, id, points);
            tree.max_depth = tree.max_depth.max(tree.nodes[id].depth + 1);
            queue.extend(tree.nodes[id].children.iter().map(|&c| c as usize));
        }
        bits.align()?;
    }
    let mut ncoc = vec![false; tree.nodes.len()];
    if ncoc_enabled {
        let mut bits = BitReader::new(r);
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            ncoc[id] = bits.bit()?;
            let n = &tree.nodes[id];
            if !ncoc[id] && !n.is_leaf() {
                queue.extend(n.children.iter().map(|&c| c as usize));
            }
        }
        bits.align()?;
        // propagate marks to every node below a flagged one
        for id in 0..tree.nodes.len() {
            if ncoc[id] {
                for &c in &tree.nodes[id].children {
                    ncoc[c as usize] = true;
                }
            }
        }
    }
    let leaves = correcting_leaves(&tree, &ncoc);
    let mut axes = Vec::with_capacity(3);
    for _ in 0..3 {
        let at = r.offset();
        let v = decode_vector(r, levels)?;
        if v.len() != leaves.len() {
            return Err(Error::corrupt(
                at,
                format!(
                    "{} residual symbols for {} correcting leaves",
                    v.len(),
                    leaves.len()
                ),
            ));
        }
        axes.push(v);
    }
    r.finish()?;
    let mut corrections = vec![Vec3::zeros(); points.len()];
    for (k, &l) in leaves.iter().enumerate() {
        let c = Vec3::new(axes[0][k], axes[1][k], axes[2][k]);
        for &v in &tree.nodes[l].vertices {
            corrections[v as usize] = c;
        }
    }
    Ok(corrections)
}
