//! Bounding-volume hierarchy for exact closest-point-on-surface queries.

use super::Mesh;
use crate::{Error, Result, Vec3};

const LEAF_SIZE: usize = 8;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub face: usize,
    pub distance_sq: f64,
    /// Barycentric coordinates of `point` in the triangle's vertex order.
    pub barycentric: [f64; 3],
}

impl ClosestPoint {
    pub fn distance(&self) -> f64 {
        self.distance_sq.sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, len: u32 },
    Inner { left: u32, right: u32 },
}

/// Immutable BVH over a mesh's triangles (leaves hold at most 8 triangles).
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<u32>,
    boxes: Vec<Aabb>,
    nodes: Vec<Node>,
}

impl SurfaceIndex {
    pub fn build(mesh: &Mesh) -> Result<Self> {
        if mesh.face_count() == 0 {
            return Err(Error::invalid("surface index needs at least one face"));
        }
        let triangles: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        let mut index = Self {
            order: (0..triangles.len() as u32).collect(),
            triangles,
            boxes: Vec::new(),
            nodes: Vec::new(),
        };
        let n = index.order.len();
        index.build_node(&centroids, 0, n);
        Ok(index)
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    fn build_node(&mut self, centroids: &[Vec3], start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let mut bb = Aabb::empty();
        for &f in &self.order[start..end] {
            for v in &self.triangles[f as usize] {
                bb.grow(v);
            }
        }
        self.boxes.push(bb);
        self.nodes.push(Node::Leaf {
            start: start as u32,
            len: (end - start) as u32,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let mut cb = Aabb::empty();
        for &f in &self.order[start..end] {
            cb.grow(&centroids[f as usize]);
        }
        let ext = cb.hi - cb.lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(centroids, start, mid);
        let right = self.build_node(centroids, mid, end);
        self.nodes[id as usize] = Node::Inner { left, right };
        id
    }

    /// Exact closest point on the indexed surface; ties go to the lowest face id.
    pub fn closest_point(&self, p: &Vec3) -> ClosestPoint {
        let mut best = ClosestPoint {
            point: *p,
            face: usize::MAX,
            distance_sq: f64::INFINITY,
            barycentric: [0.0; 3],
        };
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.boxes[0].distance_sq(p)));
        while let Some((id, bd)) = stack.pop() {
            if bd > best.distance_sq {
                continue;
            }
            match self.nodes[id as usize] {
                Node::Leaf { start, len } => {
                    for &f in &self.order[start as usize..(start + len) as usize] {
                        let t = &self.triangles[f as usize];
                        let (q, bary) = closest_point_on_triangle(p, &t[0], &t[1], &t[2]);
                        let d = (q - p).norm_squared();
                        let f = f as usize;
                        if d < best.distance_sq || (d == best.distance_sq && f < best.face) {
                            best = ClosestPoint {
                                point: q,
                                face: f,
                                distance_sq: d,
                                barycentric: bary,
                            };
                        }
                    }
                }
                Node::Inner { left, right } => {
                    let dl = self.boxes[left as usize].distance_sq(p);
                    let dr = self.boxes[right as usize].distance_sq(p);
                    // nearer child on top of the stack
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }
}

/// Closest point on triangle `abc` to `p` with its barycentric coordinates.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let sum = va + vb + vc;
    if !(sum > 0.0) {
        return closest_on_edges(p, a, b, c);
    }
    let v = vb / sum;
    let w = vc / sum;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

// Degenerate (zero-area) triangles: the closest point lies on one of the edges.
fn closest_on_edges(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let seg = |u: &Vec3, v: &Vec3| {
        let d = v - u;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 {
            ((p - u).dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (u + d * t, t)
    };
    let (q0, t0) = seg(a, b);
    let (q1, t1) = seg(b, c);
    let (q2, t2) = seg(c, a);
    let cands = [
        (q0, [1.0 - t0, t0, 0.0]),
        (q1, [0.0, 1.0 - t1, t1]),
        (q2, [t2, 0.0, 1.0 - t2]),
    ];
    let mut best = cands[0];
    for cand in &cands[1..] {
        if (cand.0 - p).norm_squared() < (best.0 - p).norm_squared() {
            best = *cand;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tri() -> Mesh {
        Mesh::new(
            vec![
                Vec3::new(-1.0, -1.0, 0.0),
                Vec3::new(2.0, -1.0, 0.0),
                Vec3::new(-1.0, 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn point_on_surface_is_fixed() {
        let idx = SurfaceIndex::build(&unit_tri()).unwrap();
        let p = Vec3::new(0.1, 0.2, 0.0);
        let cp = idx.closest_point(&p);
        assert_eq!(cp.face, 0);
        assert!(cp.distance() < 1e-15);
        assert!((cp.point - p).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_projection() {
        let idx = SurfaceIndex::build(&unit_tri()).unwrap();
        let cp = idx.closest_point(&Vec3::new(0.0, 0.0, 1.0));
        assert!((cp.point - Vec3::zeros()).norm() < 1e-15);
        assert!((cp.distance() - 1.0).abs() < 1e-15);
        let s: f64 = cp.barycentric.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_triangle_uses_edges() {
        let (q, bary) = closest_point_on_triangle(
            &Vec3::new(0.5, 1.0, 0.0),
            &Vec3::zeros(),
            &Vec3::x(),
            &Vec3::new(2.0, 0.0, 0.0),
        );
        assert!((q - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        assert!(bary.iter().all(|b| (0.0..=1.0).contains(b)));
    }

    #[test]
    fn tie_goes_to_lowest_face() {
        // two coincident triangles
        let m = Mesh::new(
            vec![
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
                Vec3::zeros(),
                Vec3::x(),
                Vec3::y(),
            ],
            vec![[3, 4, 5], [0, 1, 2]],
        )
        .unwrap();
        let idx = SurfaceIndex::build(&m).unwrap();
        assert_eq!(idx.closest_point(&Vec3::new(0.2, 0.2, 1.0)).face, 0);
    }

    #[test]
    fn empty_mesh_rejected() {
        let m = Mesh::new(vec![Vec3::zeros()], vec![]).unwrap();
        assert!(SurfaceIndex::build(&m).is_err());
    }
}
