//! OBJ and binary little-endian PLY readers/writers (positions and triangles only).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Mesh;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let bytes = fs::read(path)?;
    match format {
        MeshFormat::Obj => parse_obj(&String::from_utf8_lossy(&bytes)),
        MeshFormat::Ply => parse_ply(&bytes),
    }
}

pub fn save_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<()> {
    let bytes = match format {
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
        MeshFormat::Ply => write_ply(mesh),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub(crate) fn parse_obj(text: &str) -> Result<Mesh> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut tok = line.split_whitespace();
        let parse_err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for v in c.iter_mut() {
                    let t = tok
                        .next()
                        .ok_or_else(|| parse_err("vertex needs three coordinates".into()))?;
                    *v = t
                        .parse()
                        .map_err(|_| parse_err(format!("bad coordinate {t:?}")))?;
                }
                positions.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tok.collect();
                if refs.len() != 3 {
                    return Err(Error::NonTriangleFace { face: faces.len() });
                }
                let mut tri = [0u32; 3];
                for (slot, r) in tri.iter_mut().zip(&refs) {
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(format!("bad face index {r:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        positions.len() as i64 + idx
                    } else {
                        return Err(parse_err("face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved > u32::MAX as i64 {
                        return Err(parse_err(format!("face index {idx} out of range")));
                    }
                    *slot = resolved as u32;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    if positions.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    Mesh::new(positions, faces)
}

pub(crate) fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 40 + mesh.face_count() * 20);
    for p in mesh.positions() {
        // `{}` on f64 prints the shortest string that parses back to the same value
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Truncated { offset: self.pos });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        Ok(ty.read(self.take(ty.size())?))
    }
}

pub(crate) fn parse_ply(bytes: &[u8]) -> Result<Mesh> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or(Error::Parse {
            line: 1,
            msg: "missing end_header".into(),
        })?;
    let mut body = end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::Parse {
            line: 1,
            msg: "end_header not followed by a newline".into(),
        });
    }
    body += 1;
    let header = String::from_utf8_lossy(&bytes[..end]);
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in header.lines().enumerate() {
        let line_no = i + 1;
        let perr = |msg: &str| Error::Parse {
            line: line_no,
            msg: msg.into(),
        };
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] if i == 0 => {}
            _ if i == 0 => return Err(perr("not a PLY file")),
            ["format", "binary_little_endian", _] => {}
            ["format", ..] => return Err(perr("only binary_little_endian PLY is supported")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, it, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr("property before element"))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(c).ok_or_else(|| perr("bad list count type"))?,
                    item: Scalar::parse(it).ok_or_else(|| perr("bad list item type"))?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr("property before element"))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| perr("bad property type"))?,
                });
            }
            _ => return Err(perr("unrecognized header line")),
        }
    }

    let mut cur = Cursor {
        data: bytes,
        pos: body,
    };
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for prop in &el.props {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = cur.scalar(*ty)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = cur.scalar(*count)? as usize;
                        let is_face = el.name == "face"
                            && (name == "vertex_indices" || name == "vertex_index");
                        if is_face && n != 3 {
                            return Err(Error::NonTriangleFace { face: faces.len() });
                        }
                        let mut tri = [0u32; 3];
                        for k in 0..n {
                            let v = cur.scalar(*item)?;
                            if is_face {
                                if v < 0.0 || v > u32::MAX as f64 {
                                    return Err(Error::InvalidMesh(format!(
                                        "face {} has index {v}",
                                        faces.len()
                                    )));
                                }
                                tri[k] = v as u32;
                            }
                        }
                        if is_face {
                            faces.push(tri);
                        }
                    }
                }
            }
            if el.name == "vertex" {
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::EmptyGeometry);
    }
    Mesh::new(positions, faces)
}

pub(crate) fn write_ply(mesh: &Mesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    );
    let mut out = header.into_bytes();
    out.reserve(mesh.vertex_count() * 24 + mesh.face_count() * 13);
    for p in mesh.positions() {
        for c in p.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for i in f {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    out
}
