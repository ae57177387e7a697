//! Colored triangle meshes and binary PLY I/O.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{domain, parse, Result};
use crate::geometry::Point3;
use crate::scalar::Real;

/// Indexed triangle mesh with one RGB color per vertex. Triangles are wound
/// counter-clockwise when seen from the side their normal points to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Point3<T>>,
    pub colors: Vec<[u8; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, colors: Vec<[u8; 3]>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let m = Self { vertices, colors, triangles };
        m.validate()?;
        Ok(m)
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), colors: Vec::new(), triangles: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.colors.len() != self.vertices.len() {
            return domain(format!(
                "{} colors for {} vertices",
                self.colors.len(),
                self.vertices.len()
            ));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.is_finite()) {
            return domain(format!("vertex {i} is not finite"));
        }
        let n = self.vertices.len();
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return domain(format!("triangle {t:?} indexes past {n} vertices"));
        }
        Ok(())
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized face normal (twice the area, oriented by winding).
    #[inline]
    pub fn face_normal(&self, t: usize) -> Point3<T> {
        let [a, b, c] = self.corners(t);
        (b - a).cross(c - a)
    }

    pub fn triangle_area(&self, t: usize) -> T {
        self.face_normal(t).norm() * T::lit(0.5)
    }

    pub fn surface_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &Self) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.colors.extend_from_slice(&other.colors);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    pub fn translated(&self, d: Point3<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
            colors: self.colors.clone(),
            triangles: self.triangles.clone(),
        }
    }

    /// Binary little-endian PLY with float positions and uchar colors.
    pub fn write_ply<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property float x\nproperty float y\nproperty float z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\n\
             element face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        )?;
        let mut buf = Vec::with_capacity(self.vertices.len() * 15 + self.triangles.len() * 13);
        for (v, c) in self.vertices.iter().zip(&self.colors) {
            for x in [v.x, v.y, v.z] {
                buf.extend_from_slice(&x.as_f32().to_le_bytes());
            }
            buf.extend_from_slice(c);
        }
        for t in &self.triangles {
            buf.push(3);
            for &i in t {
                buf.extend_from_slice(&(i as i32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn save_ply(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_ply(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads binary little-endian PLY files with `x y z` (float or double)
    /// and optional `red green blue` (uchar) vertex properties and a
    /// `uchar`/`int` or `uint` index list for faces.
    pub fn read_ply<R: BufRead>(mut r: R) -> Result<Self> {
        let header = read_header(&mut r)?;
        let mut vertices = Vec::with_capacity(header.n_vertices);
        let mut colors = Vec::with_capacity(header.n_vertices);
        let stride: usize = header.vertex_props.iter().map(|p| p.1.size()).sum();
        let mut rec = vec![0u8; stride];
        for _ in 0..header.n_vertices {
            r.read_exact(&mut rec).map_err(|_| crate::Error::Parse("truncated PLY vertex data".into()))?;
            let mut off = 0;
            let mut xyz = [0f64; 3];
            let mut rgb = [200u8; 3];
            for (name, ty) in &header.vertex_props {
                let v = ty.decode(&rec[off..off + ty.size()]);
                off += ty.size();
                match name.as_str() {
                    "x" => xyz[0] = v,
                    "y" => xyz[1] = v,
                    "z" => xyz[2] = v,
                    "red" => rgb[0] = v as u8,
                    "green" => rgb[1] = v as u8,
                    "blue" => rgb[2] = v as u8,
                    _ => {}
                }
            }
            vertices.push(Point3::new(T::lit(xyz[0]), T::lit(xyz[1]), T::lit(xyz[2])));
            colors.push(rgb);
        }
        let mut triangles = Vec::with_capacity(header.n_faces);
        let (count_ty, index_ty) = header.face_list;
        for _ in 0..header.n_faces {
            let mut cbuf = vec![0u8; count_ty.size()];
            r.read_exact(&mut cbuf).map_err(|_| crate::Error::Parse("truncated PLY face data".into()))?;
            let count = count_ty.decode(&cbuf) as usize;
            if count != 3 {
                return parse(format!("only triangles are supported, found a {count}-gon"));
            }
            let mut ibuf = vec![0u8; 3 * index_ty.size()];
            r.read_exact(&mut ibuf).map_err(|_| crate::Error::Parse("truncated PLY face data".into()))?;
            let mut tri = [0u32; 3];
            for (k, slot) in tri.iter_mut().enumerate() {
                let v = index_ty.decode(&ibuf[k * index_ty.size()..(k + 1) * index_ty.size()]);
                if v < 0.0 {
                    return parse("negative PLY vertex index");
                }
                *slot = v as u32;
            }
            triangles.push(tri);
        }
        Self::new(vertices, colors, triangles).map_err(|e| crate::Error::Parse(e.to_string()))
    }

    pub fn load_ply(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_ply(std::io::BufReader::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyType {
    U8,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "uchar" | "uint8" => Self::U8,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return parse(format!("unsupported PLY property type '{other}'")),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::U8 => b[0] as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }
}

struct PlyHeader {
    n_vertices: usize,
    n_faces: usize,
    vertex_props: Vec<(String, PlyType)>,
    face_list: (PlyType, PlyType),
}

fn read_header<R: BufRead>(r: &mut R) -> Result<PlyHeader> {
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return parse("truncated PLY header");
        }
        Ok(line.trim().to_owned())
    };
    if next(r)? != "ply" {
        return parse("missing 'ply' magic");
    }
    let mut header = PlyHeader {
        n_vertices: 0,
        n_faces: 0,
        vertex_props: Vec::new(),
        face_list: (PlyType::U8, PlyType::I32),
    };
    let mut current = String::new();
    loop {
        let l = next(r)?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return parse(format!("unsupported PLY format '{fmt}'"));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let n: usize = count
                    .parse()
                    .map_err(|_| crate::Error::Parse(format!("bad element count '{count}'")))?;
                match *name {
                    "vertex" => header.n_vertices = n,
                    "face" => header.n_faces = n,
                    other => return parse(format!("unsupported PLY element '{other}'")),
                }
                current = name.to_string();
            }
            ["property", "list", cty, ity, _] if current == "face" => {
                header.face_list = (PlyType::parse(cty)?, PlyType::parse(ity)?);
            }
            ["property", ty, name] if current == "vertex" => {
                header.vertex_props.push((name.to_string(), PlyType::parse(ty)?));
            }
            ["end_header"] => break,
            _ => return parse(format!("unexpected PLY header line '{l}'")),
        }
    }
    for axis in ["x", "y", "z"] {
        if !header.vertex_props.iter().any(|(n, _)| n == axis) {
            return parse(format!("PLY vertices lack property '{axis}'"));
        }
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> TriangleMesh<f32> {
        TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.5, -0.25)],
            vec![[255, 0, 0], [0, 255, 0], [0, 0, 255]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn empty_mesh_ply() {
        let mut buf = Vec::new();
        TriangleMesh::<f64>::empty().write_ply(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("element vertex 0\n") && text.ends_with("end_header\n"));
        assert!(TriangleMesh::<f64>::read_ply(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn single_triangle_roundtrip() {
        let m = tri();
        let mut buf = Vec::new();
        m.write_ply(&mut buf).unwrap();
        let back = TriangleMesh::<f32>::read_ply(&buf[..]).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.write_ply(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn area_and_validation() {
        assert!((tri().surface_area() - 0.5 * 2.3125f32.sqrt()).abs() < 1e-6);
        assert!(TriangleMesh::<f64>::new(vec![Point3::zero()], vec![[0; 3]], vec![[0, 0, 1]]).is_err());
        assert!(TriangleMesh::<f64>::new(vec![Point3::zero()], vec![], vec![]).is_err());
        assert!(TriangleMesh::<f64>::new(vec![Point3::new(f64::NAN, 0.0, 0.0)], vec![[0; 3]], vec![]).is_err());
    }

    #[test]
    fn rejects_ascii_and_quads() {
        assert!(TriangleMesh::<f64>::read_ply(&b"ply\nformat ascii 1.0\nend_header\n"[..]).is_err());
        let mut buf = b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        buf.push(4);
        buf.extend_from_slice(&[0u8; 16]);
        assert!(TriangleMesh::<f64>::read_ply(&buf[..]).is_err());
    }
}
