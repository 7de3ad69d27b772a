//! Small fixtures shared by unit tests.

use std::f64::consts::PI;

use crate::mesh::Mesh;
use crate::Vec3;

/// Closed UV sphere with a low-frequency bump so registrations are well posed.
pub fn bumpy_sphere(rings: usize, segments: usize) -> Mesh {
    let mut positions = vec![Vec3::new(0.0, 0.0, 1.0)];
    for r in 1..rings {
        let phi = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let th = 2.0 * PI * s as f64 / segments as f64;
            let rad = 1.0 + 0.15 * (3.0 * th).sin() * phi.sin() + 0.1 * (2.0 * phi).cos();
            positions.push(Vec3::new(
                1.3 * rad * phi.sin() * th.cos(),
                0.9 * rad * phi.sin() * th.sin(),
                rad * phi.cos(),
            ));
        }
    }
    positions.push(Vec3::new(0.0, 0.0, -1.0));
    let last = positions.len() as u32 - 1;
    let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
        faces.push([last, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    Mesh::new(positions, faces).unwrap()
}

/// Flat `n x n` vertex grid on `[0, 1]^2` at height `z`.
pub fn grid(n: usize, z: f64) -> Mesh {
    let mut positions = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let s = (n - 1) as f64;
            positions.push(Vec3::new(i as f64 / s, j as f64 / s, z));
        }
    }
    let mut faces = Vec::new();
    let id = |i: usize, j: usize| (i * n + j) as u32;
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::new(positions, faces).unwrap()
}

pub fn translated(mesh: &Mesh, d: Vec3) -> Mesh {
    mesh.with_positions(mesh.positions().iter().map(|p| p + d).collect())
        .unwrap()
}
