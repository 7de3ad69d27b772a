//! Seeded synthetic tube sequences.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// One tube under a per-frame rigid motion.
    Rigid,
    /// Sinusoidal bending plus a slow rigid drift.
    Bend,
    /// A body tube with an arm that separates halfway, remeshed every frame.
    BendWithDetach,
    /// `Bend` with per-frame jitter and randomly deleted faces.
    Noisy,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 4] = [Self::Rigid, Self::Bend, Self::BendWithDetach, Self::Noisy];
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rigid => "rigid",
            Self::Bend => "bend",
            Self::BendWithDetach => "bend_with_detach",
            Self::Noisy => "noisy",
        })
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rigid" => Ok(Self::Rigid),
            "bend" => Ok(Self::Bend),
            "bend_with_detach" | "detach" => Ok(Self::BendWithDetach),
            "noisy" => Ok(Self::Noisy),
            other => Err(Error::invalid(format!("unknown sequence kind {other:?}"))),
        }
    }
}

const TUBE_LENGTH: f64 = 2.0;

/// Generates `frames` meshes. `resolution` is the segment count around the
/// main tube; it has `2 * resolution + 1` rings, so `resolution = 32` gives
/// about 2k vertices.
pub fn generate_sequence(
    kind: SequenceKind,
    frames: usize,
    resolution: usize,
    seed: u64,
) -> Result<Vec<Mesh>> {
    if frames == 0 {
        return Err(Error::invalid("frames must be at least 1"));
    }
    if !(4..=1024).contains(&resolution) {
        return Err(Error::invalid(format!(
            "resolution must be in [4, 1024], got {resolution}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SequenceKind::Rigid => rigid(frames, resolution, &mut rng),
        SequenceKind::Bend => bend(frames, resolution, &mut rng),
        SequenceKind::BendWithDetach => detach(frames, resolution, &mut rng),
        SequenceKind::Noisy => noisy(frames, resolution, &mut rng),
    }
}

struct Tube {
    positions: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
}

/// Closed tube along z centred at the origin, slightly elliptic and tapered.
fn tube(segments: usize, rings: usize, radius: f64, length: f64, phase: f64) -> Tube {
    let mut positions = Vec::with_capacity(segments * rings + 2);
    for r in 0..rings {
        let u = r as f64 / (rings - 1) as f64;
        let z = (u - 0.5) * length;
        let rad = radius * (1.0 - 0.2 * u + 0.08 * (PI * u).sin());
        for s in 0..segments {
            let th = phase + TAU * s as f64 / segments as f64;
            positions.push(Vec3::new(rad * th.cos(), 0.8 * rad * th.sin(), z));
        }
    }
    let bottom = positions.len() as u32;
    positions.push(Vec3::new(0.0, 0.0, -0.5 * length));
    positions.push(Vec3::new(0.0, 0.0, 0.5 * length));
    let idx = |r: usize, s: usize| (r * segments + s % segments) as u32;
    let mut faces = Vec::with_capacity(2 * segments * rings);
    for r in 0..rings - 1 {
        for s in 0..segments {
            faces.push([idx(r, s), idx(r, s + 1), idx(r + 1, s + 1)]);
            faces.push([idx(r, s), idx(r + 1, s + 1), idx(r + 1, s)]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, idx(0, s + 1), idx(0, s)]);
        faces.push([bottom + 1, idx(rings - 1, s), idx(rings - 1, s + 1)]);
    }
    Tube { positions, faces }
}

fn base_tube(resolution: usize) -> Tube {
    tube(resolution, 2 * resolution + 1, 0.3, TUBE_LENGTH, 0.0)
}

/// Bends the z axis into a circular arc of total angle `angle` in the xz plane.
fn bend_point(p: &Vec3, angle: f64) -> Vec3 {
    let k = angle / TUBE_LENGTH;
    if k.abs() < 1e-12 {
        return *p;
    }
    let r = 1.0 / k;
    let a = k * (p.z + 0.5 * TUBE_LENGTH);
    Vec3::new(
        r - (r - p.x) * a.cos(),
        p.y,
        -0.5 * TUBE_LENGTH + (r - p.x) * a.sin(),
    )
}

fn random_axis(rng: &mut ChaCha8Rng) -> Unit<Vec3> {
    loop {
        let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

fn finish(tube: Tube, f: usize) -> Result<Mesh> {
    Ok(Mesh::new(tube.positions, tube.faces)?.with_frame_index(f))
}

fn rigid(frames: usize, resolution: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Mesh>> {
    let base = base_tube(resolution);
    let axis = random_axis(rng);
    let speed = rng.gen_range(0.02..0.05);
    let drift = Vec3::from_fn(|_, _| rng.gen_range(-0.02..0.02));
    (0..frames)
        .map(|f| {
            let rot = Rotation3::from_axis_angle(&axis, speed * f as f64);
            let t = drift * f as f64;
            let positions = base.positions.iter().map(|p| rot * p + t).collect();
            finish(
                Tube {
                    positions,
                    faces: base.faces.clone(),
                },
                f,
            )
        })
        .collect()
}

struct BendMotion {
    amplitude: f64,
    period: f64,
    phase: f64,
    drift: Vec3,
    spin: f64,
}

impl BendMotion {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            amplitude: rng.gen_range(0.6..1.0),
            period: rng.gen_range(20.0..30.0),
            phase: rng.gen_range(0.0..TAU),
            drift: Vec3::from_fn(|_, _| rng.gen_range(-0.006..0.006)),
            spin: rng.gen_range(-0.01..0.01),
        }
    }

    fn apply(&self, p: &Vec3, f: usize) -> Vec3 {
        let angle = self.amplitude * (TAU * f as f64 / self.period + self.phase).sin();
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), self.spin * f as f64);
        rot * bend_point(p, angle) + self.drift * f as f64
    }
}

fn bend(frames: usize, resolution: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Mesh>> {
    let base = base_tube(resolution);
    let motion = BendMotion::random(rng);
    (0..frames)
        .map(|f| {
            let positions = base.positions.iter().map(|p| motion.apply(p, f)).collect();
            finish(
                Tube {
                    positions,
                    faces: base.faces.clone(),
                },
                f,
            )
        })
        .collect()
}

fn noisy(frames: usize, resolution: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Mesh>> {
    let clean = bend(frames, resolution, rng)?;
    let sigma = 0.003;
    clean
        .into_iter()
        .map(|m| {
            let positions: Vec<Vec3> = m
                .positions()
                .iter()
                .map(|p| p + Vec3::from_fn(|_, _| rng.gen_range(-sigma..sigma)))
                .collect();
            let mut faces: Vec<[u32; 3]> = m
                .faces()
                .iter()
                .copied()
                .filter(|_| !rng.gen_bool(0.02))
                .collect();
            if faces.is_empty() {
                faces.push(m.faces()[0]);
            }
            Ok(Mesh::new(positions, faces)?.with_frame_index(m.frame_index()))
        })
        .collect()
}

/// The arm is attached (overlapping the body) for frames below `frames / 2`
/// and moves away afterwards. Every frame is meshed with a fresh ring phase;
/// the body segment count jitters per frame and the arm gains two rings once
/// detached, so vertex counts never coincide across the two halves.
fn detach(frames: usize, resolution: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Mesh>> {
    let motion = BendMotion {
        amplitude: rng.gen_range(0.2..0.4),
        ..BendMotion::random(rng)
    };
    let half = frames / 2;
    let arm_segments = (resolution / 2).max(4);
    let arm_to_x = Rotation3::from_axis_angle(&Vec3::y_axis(), 0.5 * PI);
    (0..frames)
        .map(|f| {
            let segments = resolution + rng.gen_range(0..=1usize);
            let mut body = tube(
                segments,
                2 * resolution + 1,
                0.35,
                TUBE_LENGTH,
                rng.gen_range(0.0..TAU / segments as f64),
            );
            let detached = f >= half;
            let arm_rings = resolution + 1 + if detached { 2 } else { 0 };
            let arm = tube(
                arm_segments,
                arm_rings,
                0.12,
                0.9,
                rng.gen_range(0.0..TAU / arm_segments as f64),
            );
            let step = if detached { (f - half + 1) as f64 } else { 0.0 };
            let swing = Rotation3::from_axis_angle(&Vec3::y_axis(), 0.12 * step);
            let offset = Vec3::new(0.35 + 0.45 - 0.1 + 0.07 * step, 0.0, 0.3);
            let base = body.positions.len() as u32;
            body.positions.extend(
                arm.positions
                    .iter()
                    .map(|p| swing * (arm_to_x * p) + offset),
            );
            body.faces
                .extend(arm.faces.iter().map(|t| t.map(|i| i + base)));
            let positions = body.positions.iter().map(|p| motion.apply(p, f)).collect();
            finish(
                Tube {
                    positions,
                    faces: body.faces,
                },
                f,
            )
        })
        .collect()
}
