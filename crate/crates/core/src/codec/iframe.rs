//! Static coder for I-frames: uniform position quantization over the
//! bounding box, delta coding along vertex order and plain connectivity.

use crate::bytes::{unzigzag, write_f32, write_uvarint, zigzag, ByteReader};
use crate::mesh::Mesh;
use crate::{Error, Result, Vec3};

/// Payload layout: `bits: u8`, vertex count and face count as varints,
/// bounding box `lo, hi` as six `f32`, zig-zag varint deltas of the
/// quantized coordinates (per vertex, per axis), faces as varint triples.
pub fn encode_iframe(mesh: &Mesh, bits: u8) -> Result<Vec<u8>> {
    if !(8..=24).contains(&bits) {
        return Err(Error::invalid(format!(
            "I-frame bits must be in [8, 24], got {bits}"
        )));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptyGeometry)?;
    let lo32 = lo.map(round_down);
    let hi32 = hi.map(round_up);
    let grid = Grid::new(&lo32, &hi32, bits);
    let mut out = Vec::with_capacity(16 + mesh.vertex_count() * 4 + mesh.face_count() * 6);
    out.push(bits);
    write_uvarint(&mut out, mesh.vertex_count() as u64);
    write_uvarint(&mut out, mesh.face_count() as u64);
    for v in lo32.iter().chain(hi32.iter()) {
        write_f32(&mut out, *v);
    }
    let mut prev = [0i64; 3];
    for p in mesh.positions() {
        for (axis, pr) in prev.iter_mut().enumerate() {
            // extremes pin to the box faces so decoding then re-encoding is a fixpoint
            let q = if p[axis] == lo[axis] {
                0
            } else if p[axis] == hi[axis] {
                grid.max
            } else {
                grid.quantize(p[axis], axis)
            };
            write_uvarint(&mut out, zigzag(q - *pr));
            *pr = q;
        }
    }
    for f in mesh.faces() {
        for &i in f {
            write_uvarint(&mut out, i as u64);
        }
    }
    Ok(out)
}

pub fn decode_iframe(payload: &[u8]) -> Result<Mesh> {
    let mut r = ByteReader::new(payload);
    let m = decode_iframe_from(&mut r)?;
    r.finish()?;
    Ok(m)
}

pub(crate) fn decode_iframe_from(r: &mut ByteReader) -> Result<Mesh> {
    let at = r.offset();
    let bits = r.u8()?;
    if !(8..=24).contains(&bits) {
        return Err(Error::corrupt(
            at,
            format!("I-frame bits {bits} outside [8, 24]"),
        ));
    }
    let at = r.offset();
    let v = r.uvarint()? as usize;
    let f = r.uvarint()? as usize;
    // every vertex takes at least three bytes and every face three
    if v.saturating_mul(3).saturating_add(f.saturating_mul(3)) > r.remaining() {
        return Err(Error::corrupt(
            at,
            "vertex or face count exceeds the payload",
        ));
    }
    let at = r.offset();
    let mut lo = [0f32; 3];
    let mut hi = [0f32; 3];
    for x in lo.iter_mut().chain(hi.iter_mut()) {
        *x = r.f32()?;
    }
    if lo.iter().chain(&hi).any(|x| !x.is_finite()) || (0..3).any(|a| lo[a] > hi[a]) {
        return Err(Error::corrupt(at, "invalid bounding box"));
    }
    let grid = Grid::new(&lo.into(), &hi.into(), bits);
    let mut positions = Vec::with_capacity(v);
    let mut prev = [0i64; 3];
    for _ in 0..v {
        let mut p = Vec3::zeros();
        for (axis, pr) in prev.iter_mut().enumerate() {
            let at = r.offset();
            let q = pr
                .checked_add(unzigzag(r.uvarint()?))
                .filter(|q| (0..=grid.max).contains(q));
            let q = q.ok_or_else(|| Error::corrupt(at, "quantized coordinate out of range"))?;
            p[axis] = grid.dequantize(q, axis);
            *pr = q;
        }
        positions.push(p);
    }
    let at = r.offset();
    let mut faces = Vec::with_capacity(f);
    for _ in 0..f {
        let mut tri = [0u32; 3];
        for t in tri.iter_mut() {
            let i = r.uvarint()?;
            *t = u32::try_from(i).map_err(|_| Error::corrupt(at, "face index exceeds 32 bits"))?;
        }
        faces.push(tri);
    }
    Mesh::new(positions, faces).map_err(|e| Error::corrupt(at, e.to_string()))
}

struct Grid {
    lo: [f64; 3],
    hi: [f64; 3],
    step: [f64; 3],
    max: i64,
}

impl Grid {
    fn new(lo: &nalgebra::Vector3<f32>, hi: &nalgebra::Vector3<f32>, bits: u8) -> Self {
        let levels = 1i64 << bits;
        let lo = [lo.x as f64, lo.y as f64, lo.z as f64];
        let hi = [hi.x as f64, hi.y as f64, hi.z as f64];
        let step = [0, 1, 2].map(|a| (hi[a] - lo[a]) / levels as f64);
        Self {
            lo,
            hi,
            step,
            max: levels,
        }
    }

    fn quantize(&self, x: f64, axis: usize) -> i64 {
        if self.step[axis] == 0.0 {
            return 0;
        }
        (((x - self.lo[axis]) / self.step[axis]).round() as i64).clamp(0, self.max)
    }

    fn dequantize(&self, q: i64, axis: usize) -> f64 {
        if q == self.max {
            self.hi[axis]
        } else {
            self.lo[axis] + q as f64 * self.step[axis]
        }
    }
}

fn round_down(x: f64) -> f32 {
    let f = x as f32;
    if (f as f64) > x {
        f.next_down()
    } else {
        f
    }
}

fn round_up(x: f64) -> f32 {
    let f = x as f32;
    if (f as f64) < x {
        f.next_up()
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::bumpy_sphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box_mesh(n: usize, seed: u64) -> Mesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.gen_range(0.0..1.0)))
            .collect();
        pts.push(Vec3::zeros());
        pts.push(Vec3::new(1.0, 1.0, 1.0));
        let faces = (0..n as u32 / 3)
            .map(|k| [3 * k, 3 * k + 1, 3 * k + 2])
            .collect();
        Mesh::new(pts, faces).unwrap()
    }

    #[test]
    fn min_corner_is_code_zero() {
        let m = unit_box_mesh(30, 1);
        let p = encode_iframe(&m, 16).unwrap();
        // bits, counts, box, then the first vertex deltas; the min corner is vertex 30
        let d = decode_iframe(&p).unwrap();
        assert_eq!(d.positions()[30], Vec3::zeros());
        assert_eq!(d.positions()[31], Vec3::new(1.0, 1.0, 1.0));
        let grid = Grid::new(
            &Vec3::zeros().map(|x| x as f32),
            &Vec3::new(1.0, 1.0, 1.0).map(|x| x as f32),
            16,
        );
        assert_eq!([0, 1, 2].map(|a| grid.quantize(0.0, a)), [0, 0, 0]);
    }

    #[test]
    fn half_step_bound() {
        let m = unit_box_mesh(300, 2);
        let d = decode_iframe(&encode_iframe(&m, 10).unwrap()).unwrap();
        let bound = 0.5 * 2f64.powi(-10);
        for (a, b) in m.positions().iter().zip(d.positions()) {
            assert!((a - b).amax() <= bound + 1e-15);
        }
        assert_eq!(d.faces(), m.faces());
    }

    #[test]
    fn idempotent() {
        for bits in [8, 12, 16, 24] {
            let m = bumpy_sphere(9, 11);
            let p1 = encode_iframe(&m, bits).unwrap();
            let d1 = decode_iframe(&p1).unwrap();
            let p2 = encode_iframe(&d1, bits).unwrap();
            assert_eq!(p1, p2);
            assert_eq!(decode_iframe(&p2).unwrap(), d1);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let m = bumpy_sphere(4, 4);
        assert!(encode_iframe(&m, 7).is_err());
        assert!(encode_iframe(&m, 25).is_err());
        let p = encode_iframe(&m, 12).unwrap();
        assert!(decode_iframe(&p[..p.len() - 1]).is_err());
        let mut extra = p.clone();
        extra.push(0);
        assert!(decode_iframe(&extra).is_err());
        let mut bad = p.clone();
        bad[0] = 30;
        assert!(decode_iframe(&bad).is_err());
    }

    #[test]
    fn flat_axis() {
        let m = crate::testutil::grid(4, 0.3);
        let d = decode_iframe(&encode_iframe(&m, 12).unwrap()).unwrap();
        for (a, b) in m.positions().iter().zip(d.positions()) {
            assert!((a.z - b.z).abs() < 1e-7);
        }
    }
}
