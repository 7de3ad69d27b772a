//! Embedded deformation: node graphs, influence weights and the deformation operator.
//!
//! A vertex `x` driven by nodes `n_j` with rotations `R_j`, translations `t_j`
//! and weights `w_j` moves to `sum_j w_j (R_j (x - n_j) + t_j + n_j)`. The
//! weights sum to one, so this is evaluated as
//! `x + sum_j w_j ((R_j - I)(x - n_j) + t_j)`, which reproduces `x` exactly
//! under the identity transform.

use std::collections::BTreeSet;

use crate::mesh::Mesh;
use crate::{Error, Mat3, Result, Vec3};

/// Sparse key nodes anchored to vertices of a decoded I-frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyNodeSet {
    pub node_positions: Vec<Vec3>,
    /// Strictly increasing vertex indices; empty for free-floating node sets.
    pub anchor_indices: Vec<u32>,
    pub graph_edges: Vec<(u32, u32)>,
}

impl KeyNodeSet {
    /// Nodes at the given vertices of `mesh`, with a `graph_k`-nearest-neighbour graph.
    pub fn from_anchors(mesh: &Mesh, anchors: Vec<u32>, graph_k: usize) -> Result<Self> {
        let mut set = Self::anchors_only(mesh, anchors)?;
        set.graph_edges = build_node_graph(&set.node_positions, graph_k);
        Ok(set)
    }

    /// Anchored nodes without a smoothness graph; enough for deforming, not for solving.
    pub fn anchors_only(mesh: &Mesh, anchors: Vec<u32>) -> Result<Self> {
        if anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("anchor indices must be strictly increasing"));
        }
        if let Some(&a) = anchors.iter().find(|&&a| a as usize >= mesh.vertex_count()) {
            return Err(Error::invalid(format!(
                "anchor {a} outside a mesh with {} vertices",
                mesh.vertex_count()
            )));
        }
        let node_positions = anchors
            .iter()
            .map(|&a| mesh.positions()[a as usize])
            .collect();
        Ok(Self {
            node_positions,
            anchor_indices: anchors,
            graph_edges: Vec::new(),
        })
    }

    /// Nodes that are not tied to mesh vertices.
    pub fn free(node_positions: Vec<Vec3>, graph_k: usize) -> Self {
        let graph_edges = build_node_graph(&node_positions, graph_k);
        Self {
            node_positions,
            anchor_indices: Vec::new(),
            graph_edges,
        }
    }

    /// Same anchors and graph, positions read from another frame with the same topology.
    pub fn reanchored(&self, mesh: &Mesh) -> Result<Self> {
        if self.anchor_indices.len() != self.node_positions.len() {
            return Err(Error::invalid("node set is not anchored"));
        }
        let mut out = self.clone();
        for (p, &a) in out.node_positions.iter_mut().zip(&self.anchor_indices) {
            *p = *mesh
                .positions()
                .get(a as usize)
                .ok_or_else(|| Error::invalid(format!("anchor {a} outside the reference frame")))?;
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.node_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_positions.is_empty()
    }
}

/// Per-node rotation vectors (axis-angle, radians) and translations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransformSet {
    pub rotations: Vec<Vec3>,
    pub translations: Vec<Vec3>,
}

impl TransformSet {
    pub fn identity(n: usize) -> Self {
        Self {
            rotations: vec![Vec3::zeros(); n],
            translations: vec![Vec3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    /// Rotation vectors flattened node-major, axis-minor.
    pub fn flat_rotations(&self) -> Vec<f64> {
        flatten(&self.rotations)
    }

    pub fn flat_translations(&self) -> Vec<f64> {
        flatten(&self.translations)
    }

    pub fn from_flat(rotations: &[f64], translations: &[f64]) -> Result<Self> {
        if rotations.len() != translations.len() || rotations.len() % 3 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "flattened vectors of length {} and {}",
                rotations.len(),
                translations.len()
            )));
        }
        let unflat = |v: &[f64]| {
            v.chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect()
        };
        Ok(Self {
            rotations: unflat(rotations),
            translations: unflat(translations),
        })
    }
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// For every vertex, its `q` nearest nodes and their normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    q: usize,
    nodes: Vec<u32>,
    weights: Vec<f64>,
}

impl WeightTable {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        if self.q == 0 {
            0
        } else {
            self.nodes.len() / self.q
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(node, weight)` pairs of vertex `i`, nearest node first.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = i * self.q..(i + 1) * self.q;
        self.nodes[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&j, &w)| (j as usize, w))
    }

    pub(crate) fn from_rows(q: usize, nodes: Vec<u32>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(nodes.len(), weights.len());
        Self { q, nodes, weights }
    }
}

/// Symmetric k-nearest-neighbour graph, bridged until connected.
///
/// Edges are returned as sorted `(lo, hi)` pairs in ascending order.
pub fn build_node_graph(nodes: &[Vec3], k: usize) -> Vec<(u32, u32)> {
    let n = nodes.len();
    let mut edges = BTreeSet::new();
    if n < 2 {
        return Vec::new();
    }
    for i in 0..n {
        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((nodes[j] - nodes[i]).norm_squared(), j))
            .collect();
        let k = k.min(near.len());
        if k == 0 {
            continue;
        }
        near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &near[..k] {
            edges.insert((i.min(j) as u32, i.max(j) as u32));
        }
    }
    let mut comp = UnionFind::new(n);
    for &(a, b) in &edges {
        comp.union(a as usize, b as usize);
    }
    while comp.count > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in i + 1..n {
                if comp.find(i) == comp.find(j) {
                    continue;
                }
                let d = (nodes[j] - nodes[i]).norm_squared();
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("disconnected graph has a bridging pair");
        edges.insert((i as u32, j as u32));
        comp.union(i, j);
    }
    edges.into_iter().collect()
}

struct UnionFind {
    parent: Vec<usize>,
    count: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            count: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
            self.count -= 1;
        }
    }
}

/// Influence weights `(1 - d/d_max)^2` over the `q` nearest nodes, normalized.
///
/// `d_max` is the distance to the `(q+1)`-th nearest node, or `1.01` times the
/// `q`-th distance when there are exactly `q` nodes.
pub fn compute_influence_weights(
    vertices: &[Vec3],
    nodes: &[Vec3],
    q: usize,
) -> Result<WeightTable> {
    if q == 0 || q > nodes.len() {
        return Err(Error::invalid(format!(
            "need 1 <= Q <= N, got Q = {q} with {} nodes",
            nodes.len()
        )));
    }
    let mut out_nodes = Vec::with_capacity(vertices.len() * q);
    let mut out_w = Vec::with_capacity(vertices.len() * q);
    let mut near: Vec<(f64, u32)> = Vec::with_capacity(q + 1);
    for x in vertices {
        nearest_nodes(x, nodes, q + 1, |_| true, &mut near);
        let w = kernel_weights(&near, q);
        for (k, wk) in w.into_iter().enumerate() {
            out_nodes.push(near[k].1);
            out_w.push(wk);
        }
    }
    Ok(WeightTable::from_rows(q, out_nodes, out_w))
}

/// Fills `out` with up to `count` nearest accepted nodes as `(squared distance, index)`,
/// ascending, ties by index.
pub(crate) fn nearest_nodes(
    x: &Vec3,
    nodes: &[Vec3],
    count: usize,
    accept: impl Fn(usize) -> bool,
    out: &mut Vec<(f64, u32)>,
) {
    out.clear();
    for (j, n) in nodes.iter().enumerate() {
        if !accept(j) {
            continue;
        }
        let d = (n - x).norm_squared();
        if out.len() == count && d >= out[count - 1].0 {
            continue;
        }
        let pos = out.partition_point(|&(od, _)| od <= d);
        out.insert(pos, (d, j as u32));
        out.truncate(count);
    }
}

/// Normalized weights for the first `q` entries of a sorted neighbour list.
///
/// `near` holds squared distances; an extra `(q+1)`-th entry, when present,
/// sets the support radius.
pub(crate) fn kernel_weights(near: &[(f64, u32)], q: usize) -> Vec<f64> {
    let q = q.min(near.len());
    let mut w = vec![0.0; q];
    if q == 0 {
        return w;
    }
    if near[0].0 == 0.0 {
        w[0] = 1.0;
        return w;
    }
    let d_max = if near.len() > q {
        near[q].0.sqrt()
    } else {
        1.01 * near[q - 1].0.sqrt()
    };
    let mut sum = 0.0;
    for (k, wk) in w.iter_mut().enumerate() {
        let r = 1.0 - near[k].0.sqrt() / d_max;
        *wk = r * r;
        sum += *wk;
    }
    if sum > 0.0 {
        w.iter_mut().for_each(|wk| *wk /= sum);
    } else {
        // all q nodes sit at the support radius: fall back to uniform weights
        w.iter_mut().for_each(|wk| *wk = 1.0 / q as f64);
    }
    w
}

/// Deforms `source` with the given node transforms; faces are copied.
pub fn apply_deformation(
    source: &Mesh,
    nodes: &KeyNodeSet,
    transforms: &TransformSet,
    weights: &WeightTable,
) -> Result<Mesh> {
    if transforms.len() != nodes.len() || transforms.translations.len() != nodes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} transforms for {} nodes",
            transforms.len(),
            nodes.len()
        )));
    }
    if weights.len() != source.vertex_count() {
        return Err(Error::DimensionMismatch(format!(
            "weight table has {} rows for {} vertices",
            weights.len(),
            source.vertex_count()
        )));
    }
    if weights.nodes.iter().any(|&j| j as usize >= nodes.len()) {
        return Err(Error::DimensionMismatch(
            "weight table references a missing node".into(),
        ));
    }
    let rot_minus_id: Vec<Mat3> = transforms
        .rotations
        .iter()
        .map(rotation_minus_identity)
        .collect();
    let positions = deform_points(
        source.positions(),
        &nodes.node_positions,
        &rot_minus_id,
        &transforms.translations,
        weights,
    );
    source.with_positions(positions)
}

pub(crate) fn deform_points(
    vertices: &[Vec3],
    node_positions: &[Vec3],
    rot_minus_id: &[Mat3],
    translations: &[Vec3],
    weights: &WeightTable,
) -> Vec<Vec3> {
    vertices
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut disp = Vec3::zeros();
            for (j, w) in weights.row(i) {
                disp += w * (rot_minus_id[j] * (x - node_positions[j]) + translations[j]);
            }
            x + disp
        })
        .collect()
}

pub(crate) fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `R(r) - I` by the Rodrigues formula; exactly zero for `r = 0`.
pub fn rotation_minus_identity(r: &Vec3) -> Mat3 {
    let theta2 = r.norm_squared();
    if theta2 == 0.0 {
        return Mat3::zeros();
    }
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(r);
    k * a + k * k * b
}

pub fn rotvec_to_matrix(r: &Vec3) -> Mat3 {
    Mat3::identity() + rotation_minus_identity(r)
}

/// Inverse of [`rotvec_to_matrix`] on `|r| <= pi`.
///
/// The input must be within `1e-6` of a proper rotation; project general
/// matrices with [`nearest_rotation`] first.
pub fn matrix_to_rotvec(m: &Mat3) -> Result<Vec3> {
    let det = m.determinant();
    if det < 0.0 {
        return Err(Error::Reflection(det));
    }
    let ortho = (m.transpose() * m - Mat3::identity()).norm();
    if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "matrix is not a rotation (orthogonality error {ortho:.3e}, determinant {det})"
        )));
    }
    let v = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5;
    let s = v.norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta < 1e-8 {
        return Ok(v);
    }
    if c > -0.5 {
        return Ok(v * (theta / s));
    }
    // near pi the axial vector loses precision; read the axis from the symmetric part
    let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * c;
    let k = (0..3)
        .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
        .unwrap();
    let mut axis: Vec3 = sym.column(k).into_owned() / (sym[(k, k)] * (1.0 - c)).sqrt();
    axis.normalize_mut();
    let d = axis.dot(&v);
    if d < 0.0 || (d == 0.0 && first_nonzero_negative(&axis)) {
        axis = -axis;
    }
    Ok(axis * theta)
}

fn first_nonzero_negative(v: &Vec3) -> bool {
    v.iter().find(|c| **c != 0.0).map_or(false, |c| *c < 0.0)
}

/// Closest proper rotation to `m` (polar decomposition via SVD).
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Mat3::identity();
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        // flip the axis of the smallest singular value
        let k = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        u.column_mut(k).neg_mut();
        r = u * v_t;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn graph_trivial_and_chain() {
        assert!(build_node_graph(&[Vec3::zeros()], 3).is_empty());
        let nodes = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert_eq!(build_node_graph(&nodes, 1), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn graph_bridges_clusters() {
        let mut nodes = Vec::new();
        for i in 0..4 {
            nodes.push(Vec3::new(i as f64 * 0.1, 0.0, 0.0));
            nodes.push(Vec3::new(100.0 + i as f64 * 0.1, 0.0, 0.0));
        }
        let edges = build_node_graph(&nodes, 2);
        let mut uf = UnionFind::new(nodes.len());
        for (a, b) in &edges {
            uf.union(*a as usize, *b as usize);
        }
        assert_eq!(uf.count, 1);
        // the bridge is the closest cross-cluster pair: 0.3 -> 100.0
        assert!(edges.contains(&(6, 1)) || edges.contains(&(1, 6)));
    }

    #[test]
    fn weights_at_node_and_symmetric() {
        let nodes = [Vec3::zeros(), Vec3::x(), Vec3::new(5.0, 0.0, 0.0)];
        let t = compute_influence_weights(&[Vec3::x()], &nodes, 2).unwrap();
        let row: Vec<_> = t.row(0).collect();
        assert_eq!(row[0], (1, 1.0));
        assert_eq!(row[1].1, 0.0);

        let t = compute_influence_weights(&[Vec3::x() * 0.5], &nodes, 2).unwrap();
        let row: Vec<_> = t.row(0).collect();
        assert!((row[0].1 - 0.5).abs() < 1e-15 && (row[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weights_hand_evaluated() {
        // distances 1 and 2 to A and B, third node at 4 sets d_max
        let nodes = [Vec3::x(), Vec3::x() * -2.0, Vec3::y() * 4.0];
        let t = compute_influence_weights(&[Vec3::zeros()], &nodes, 2).unwrap();
        let row: Vec<_> = t.row(0).collect();
        // raw (1 - 1/4)^2 = 0.5625, (1 - 2/4)^2 = 0.25
        assert_eq!(row[0].0, 0);
        assert!((row[0].1 - 0.5625 / 0.8125).abs() < 1e-12);
        assert!((row[1].1 - 0.25 / 0.8125).abs() < 1e-12);
        assert!((row[0].1 - 0.6923).abs() < 1e-4 && (row[1].1 - 0.3077).abs() < 1e-4);
    }

    #[test]
    fn weights_reject_q_above_n() {
        assert!(compute_influence_weights(&[Vec3::zeros()], &[Vec3::x()], 2).is_err());
        // N == Q uses 1.01 x the Q-th distance
        let t = compute_influence_weights(&[Vec3::zeros()], &[Vec3::x()], 1).unwrap();
        assert_eq!(t.row(0).next().unwrap(), (0, 1.0));
    }

    #[test]
    fn rodrigues_quarter_turn() {
        let nodes = KeyNodeSet::free(vec![Vec3::zeros()], 1);
        let m = Mesh::new(vec![Vec3::x()], vec![]).unwrap();
        let w = compute_influence_weights(m.positions(), &nodes.node_positions, 1).unwrap();
        let t = TransformSet {
            rotations: vec![Vec3::new(0.0, 0.0, PI / 2.0)],
            translations: vec![Vec3::zeros()],
        };
        let out = apply_deformation(&m, &nodes, &t, &w).unwrap();
        assert!((out.positions()[0] - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn rotvec_pi_and_identity() {
        assert_eq!(rotvec_to_matrix(&Vec3::zeros()), Mat3::identity());
        let m = rotvec_to_matrix(&Vec3::new(PI, 0.0, 0.0));
        assert!((m - Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))).norm() < 1e-12);
        let r = matrix_to_rotvec(&m).unwrap();
        assert!((r.norm() - PI).abs() < 1e-9);
        assert!((r.normalize().x.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reflection_rejected() {
        let m = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(matrix_to_rotvec(&m), Err(Error::Reflection(_))));
    }

    #[test]
    fn nearest_rotation_projects() {
        let m = Mat3::new(1.1, 0.2, 0.0, -0.1, 0.9, 0.05, 0.0, 0.1, 1.2);
        let r = nearest_rotation(&m);
        assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
        assert!(r.determinant() > 0.0);
        let refl = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(nearest_rotation(&refl).determinant() > 0.0);
    }

    #[test]
    fn flatten_layout() {
        let t = TransformSet {
            rotations: vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)],
            translations: vec![Vec3::zeros(); 2],
        };
        assert_eq!(t.flat_rotations(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = TransformSet::from_flat(&t.flat_rotations(), &t.flat_translations()).unwrap();
        assert_eq!(back, t);
    }
}
