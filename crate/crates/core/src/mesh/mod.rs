//! Indexed triangle meshes and the spatial queries built on them.

mod bvh;
mod io;

pub use bvh::{closest_point_on_triangle, ClosestPoint, SurfaceIndex};
pub use io::{load_mesh, save_mesh, MeshFormat};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Vec3};

/// One frame of a dynamic mesh: positions plus triangle connectivity.
///
/// Topology may differ from frame to frame. Unreferenced vertices are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    frame_index: usize,
}

impl Mesh {
    /// Builds a mesh, checking index ranges, degenerate faces and finiteness.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        validate(&positions, &faces)?;
        Ok(Self {
            positions,
            faces,
            frame_index: 0,
        })
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    /// Same topology, new vertex positions.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions for a mesh with {} vertices",
                positions.len(),
                self.positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !is_finite(p)) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(Self {
            positions,
            faces: self.faces.clone(),
            frame_index: self.frame_index,
        })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    /// Axis-aligned bounds as `(min, max)`; `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(&self.positions)
    }

    /// Index of the vertex nearest to `p`, lowest index on ties.
    pub fn nearest_vertex(&self, p: &Vec3) -> Result<usize> {
        nearest_point(&self.positions, p).ok_or(Error::EmptyGeometry)
    }

    /// Farthest-point sampling of `count` vertex indices.
    ///
    /// The seed picks a random vertex; the first sample is the vertex farthest
    /// from it and every later sample maximizes its minimum distance to the
    /// samples so far (lowest index on ties).
    pub fn farthest_point_sample(&self, count: usize, seed: u64) -> Result<Vec<usize>> {
        farthest_point_sample(&self.positions, count, seed)
    }
}

fn is_finite(p: &Vec3) -> bool {
    p.iter().all(|c| c.is_finite())
}

fn validate(positions: &[Vec3], faces: &[[u32; 3]]) -> Result<()> {
    if let Some(i) = positions.iter().position(|p| !is_finite(p)) {
        return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
    }
    if !faces.is_empty() && positions.len() < 3 {
        return Err(Error::InvalidMesh(format!(
            "{} faces over only {} vertices",
            faces.len(),
            positions.len()
        )));
    }
    let v = positions.len() as u64;
    for (f, tri) in faces.iter().enumerate() {
        if tri.iter().any(|&i| i as u64 >= v) {
            return Err(Error::InvalidMesh(format!(
                "face {f} references a vertex outside [0, {v})"
            )));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Error::InvalidMesh(format!(
                "face {f} repeats a vertex index"
            )));
        }
    }
    Ok(())
}

pub(crate) fn bounds_of(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = *points.first()?;
    Some(
        points
            .iter()
            .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
    )
}

pub(crate) fn nearest_point(points: &[Vec3], p: &Vec3) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, q) in points.iter().enumerate() {
        let d = (q - p).norm_squared();
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

pub(crate) fn farthest_point_sample(
    points: &[Vec3],
    count: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = points.len();
    if count > n {
        return Err(Error::invalid(format!(
            "cannot sample {count} points from {n} vertices"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..n);
    let mut min_d: Vec<f64> = points
        .iter()
        .map(|q| (q - points[start]).norm_squared())
        .collect();
    let mut picks = Vec::with_capacity(count);
    let mut taken = vec![false; n];
    for _ in 0..count {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if !taken[i] && d > best_d {
                best = i;
                best_d = d;
            }
        }
        taken[best] = true;
        picks.push(best);
        let anchor = points[best];
        if picks.len() == 1 {
            min_d.iter_mut().zip(points).for_each(|(d, q)| {
                *d = (q - anchor).norm_squared();
            });
        } else {
            min_d.iter_mut().zip(points).for_each(|(d, q)| {
                *d = d.min((q - anchor).norm_squared());
            });
        }
    }
    Ok(picks)
}
