//! Synthetic ground truth: an exact ERP ray caster over boxes, spheres and
//! rooms with procedural albedo textures, plus analytic meshes of the same
//! primitives.
//!
//! Scene files are line oriented, `#` starts a comment:
//!
//! ```text
//! resolution <width> <height>
//! room   <minx> <miny> <minz> <maxx> <maxy> <maxz> <texture>
//! box    <minx> <miny> <minz> <maxx> <maxy> <maxz> <texture>
//! sphere <cx> <cy> <cz> <radius> <texture>
//! camera <x> <y> <z> [<yaw> <pitch> <roll>]        # degrees
//! pose   <r00> <r01> <r02> <tx> ... <r22> <tz>     # world-to-camera
//! ```
//!
//! where `<texture>` is one of `solid <r> <g> <b>`,
//! `checker <cell> <gray_a> <gray_b> [<jitter>]` or
//! `gradient <period> <gray_a> <gray_b>`. Cameras and poses form the
//! trajectory in file order.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::erp_camera::{direction, format_pose_line, unproject, ErpIntrinsics, PixelCoord, Pose};
use crate::error::{domain, parse, Result};
use crate::geometry::{Mat3, Point3};
use crate::image::{quantize_u8, Image};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use crate::sweep::DepthMap;

/// Ray hits closer than this are ignored (meters).
const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Texture<T> {
    Solid([T; 3]),
    /// Alternating gray cells of edge `cell`; each cell's gray level is
    /// offset by a hashed value in `[-jitter, jitter]`.
    Checker { cell: T, a: T, b: T, jitter: T },
    /// Triangle wave between `a` and `b` along `x + y + z` with the given
    /// period.
    Gradient { period: T, a: T, b: T },
}

impl<T: Real> Texture<T> {
    /// Albedo at surface point `p` with unit normal `n` facing the viewer.
    pub fn eval(&self, p: Point3<T>, n: Point3<T>) -> [T; 3] {
        match *self {
            Texture::Solid(c) => c,
            Texture::Checker { cell, a, b, jitter } => {
                // step half a cell off the surface so cell indices never sit
                // on a boundary for axis-aligned faces
                let q = (p + n * (cell * T::lit(0.5))) / cell;
                let (ix, iy, iz) = (floor_i64(q.x), floor_i64(q.y), floor_i64(q.z));
                let base = if (ix + iy + iz).rem_euclid(2) == 0 { a } else { b };
                let h = T::lit(cell_hash(ix, iy, iz));
                let g = (base + jitter * (h * T::lit(2.0) - T::one())).max(T::zero()).min(T::one());
                [g, g, g]
            }
            Texture::Gradient { period, a, b } => {
                let s = (p.x + p.y + p.z) / period;
                let tri = ((s - (s + T::lit(0.5)).floor()) * T::lit(2.0)).abs();
                let g = a + (b - a) * tri;
                [g, g, g]
            }
        }
    }

    /// Average albedo, used to color analytic meshes.
    pub fn mean_color(&self) -> [T; 3] {
        match *self {
            Texture::Solid(c) => c,
            Texture::Checker { a, b, .. } | Texture::Gradient { a, b, .. } => {
                let g = (a + b) * T::lit(0.5);
                [g, g, g]
            }
        }
    }
}

#[inline]
fn floor_i64<T: Real>(x: T) -> i64 {
    x.floor().to_i64().unwrap_or(0)
}

/// Deterministic value in `[0, 1)` per integer cell.
fn cell_hash(ix: i64, iy: i64, iz: i64) -> f64 {
    let mut h = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (iz as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape<T> {
    /// Solid axis-aligned box seen from outside.
    Box { min: Point3<T>, max: Point3<T> },
    Sphere { center: Point3<T>, radius: T },
    /// Axis-aligned box seen from inside; cameras must lie within it.
    Room { min: Point3<T>, max: Point3<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive<T> {
    pub shape: Shape<T>,
    pub texture: Texture<T>,
}

/// Closest hit along a ray: distance and unit normal facing the ray origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<T> {
    pub t: T,
    pub normal: Point3<T>,
}

fn axis_unit<T: Real>(axis: usize, sign: T) -> Point3<T> {
    let mut a = [T::zero(); 3];
    a[axis] = sign;
    Point3::from_array(a)
}

/// Slab test returning `(t_near, near_axis, t_far, far_axis)`.
fn slabs<T: Real>(o: Point3<T>, d: Point3<T>, min: Point3<T>, max: Point3<T>) -> Option<(T, usize, T, usize)> {
    let mut t_near = T::neg_infinity();
    let mut t_far = T::infinity();
    let (mut a_near, mut a_far) = (0, 0);
    for k in 0..3 {
        if d[k] == T::zero() {
            if o[k] < min[k] || o[k] > max[k] {
                return None;
            }
            continue;
        }
        let t1 = (min[k] - o[k]) / d[k];
        let t2 = (max[k] - o[k]) / d[k];
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if lo > t_near {
            t_near = lo;
            a_near = k;
        }
        if hi < t_far {
            t_far = hi;
            a_far = k;
        }
    }
    if t_near > t_far {
        None
    } else {
        Some((t_near, a_near, t_far, a_far))
    }
}

impl<T: Real> Shape<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Shape::Box { min, max } | Shape::Room { min, max } => {
                if !(min.x < max.x && min.y < max.y && min.z < max.z) || !min.is_finite() || !max.is_finite() {
                    return domain("box extents must be finite with min < max on every axis");
                }
            }
            Shape::Sphere { center, radius } => {
                if !(radius > T::zero()) || !radius.is_finite() || !center.is_finite() {
                    return domain("sphere radius must be positive and finite");
                }
            }
        }
        Ok(())
    }

    /// Whether a camera at `p` sees this primitive from free space.
    pub fn admits_camera(&self, p: Point3<T>) -> bool {
        let eps = T::lit(HIT_EPS);
        match *self {
            Shape::Box { min, max } => (0..3).any(|k| p[k] < min[k] - eps || p[k] > max[k] + eps),
            Shape::Room { min, max } => (0..3).all(|k| p[k] > min[k] + eps && p[k] < max[k] - eps),
            Shape::Sphere { center, radius } => (p.distance(center) - radius).abs() > eps,
        }
    }

    /// Nearest intersection with the unit-direction ray `o + t d`.
    pub fn intersect(&self, o: Point3<T>, d: Point3<T>) -> Option<Hit<T>> {
        let eps = T::lit(HIT_EPS);
        match *self {
            Shape::Box { min, max } => {
                let (tn, an, _, _) = slabs(o, d, min, max)?;
                if tn > eps {
                    Some(Hit { t: tn, normal: axis_unit(an, -d[an].signum()) })
                } else {
                    None
                }
            }
            Shape::Room { min, max } => {
                let (_, _, tf, af) = slabs(o, d, min, max)?;
                if tf > eps {
                    Some(Hit { t: tf, normal: axis_unit(af, -d[af].signum()) })
                } else {
                    None
                }
            }
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < T::zero() {
                    return None;
                }
                let s = disc.sqrt();
                let t = if -b - s > eps {
                    -b - s
                } else if -b + s > eps {
                    -b + s
                } else {
                    return None;
                };
                let mut n = (o + d * t - center) / radius;
                if n.dot(d) > T::zero() {
                    n = -n;
                }
                Some(Hit { t, normal: n })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec<T> {
    pub width: usize,
    pub height: usize,
    pub primitives: Vec<Primitive<T>>,
    pub trajectory: Vec<Pose<T>>,
}

impl<T: Real> SceneSpec<T> {
    pub fn intrinsics(&self) -> Result<ErpIntrinsics> {
        ErpIntrinsics::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics()?;
        if self.primitives.is_empty() {
            return domain("scene has no primitives");
        }
        if self.trajectory.is_empty() {
            return domain("scene has no cameras");
        }
        for p in &self.primitives {
            p.shape.validate()?;
        }
        for (i, pose) in self.trajectory.iter().enumerate() {
            self.check_camera(i, pose)?;
        }
        Ok(())
    }

    fn check_camera(&self, index: usize, pose: &Pose<T>) -> Result<()> {
        let c = pose.center();
        if let Some(p) = self.primitives.iter().find(|p| !p.shape.admits_camera(c)) {
            return domain(format!(
                "camera {index} at ({}, {}, {}) is not in free space ({:?})",
                c.x, c.y, c.z, p.shape
            ));
        }
        Ok(())
    }

    /// Closest hit of a world ray over all primitives, with the index of the
    /// primitive that was hit.
    pub fn cast(&self, o: Point3<T>, d: Point3<T>) -> Option<(Hit<T>, usize)> {
        let mut best: Option<(Hit<T>, usize)> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(h) = p.shape.intersect(o, d) {
                if best.map_or(true, |(b, _)| h.t < b.t) {
                    best = Some((h, i));
                }
            }
        }
        best
    }

    /// Parses the scene text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut resolution = None;
        let mut primitives = Vec::new();
        let mut trajectory = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| crate::Error::Parse(format!("scene line {}: {msg}", lineno + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            let nums = |range: std::ops::Range<usize>| -> Result<Vec<T>> {
                if tok.len() < range.end {
                    return Err(err(format!("'{}' needs at least {} values", tok[0], range.end - 1)));
                }
                tok[range]
                    .iter()
                    .map(|t| t.parse::<f64>().map(T::lit).map_err(|_| err(format!("bad number '{t}'"))))
                    .collect()
            };
            match tok[0] {
                "resolution" => {
                    if tok.len() != 3 {
                        return Err(err("expected 'resolution <width> <height>'".into()));
                    }
                    let w = tok[1].parse().map_err(|_| err("bad width".into()))?;
                    let h = tok[2].parse().map_err(|_| err("bad height".into()))?;
                    resolution = Some((w, h));
                }
                kind @ ("room" | "box") => {
                    let v = nums(1..7)?;
                    let texture = parse_texture(&tok[7..]).map_err(|e| err(e.to_string()))?;
                    let (min, max) = (Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]));
                    let shape = if kind == "room" { Shape::Room { min, max } } else { Shape::Box { min, max } };
                    primitives.push(Primitive { shape, texture });
                }
                "sphere" => {
                    let v = nums(1..5)?;
                    let texture = parse_texture(&tok[5..]).map_err(|e| err(e.to_string()))?;
                    primitives.push(Primitive {
                        shape: Shape::Sphere { center: Point3::new(v[0], v[1], v[2]), radius: v[3] },
                        texture,
                    });
                }
                "camera" => {
                    if tok.len() != 4 && tok.len() != 7 {
                        return Err(err("expected 'camera x y z [yaw pitch roll]'".into()));
                    }
                    let v = nums(1..tok.len())?;
                    let deg = |x: T| x.to_radians();
                    let (yaw, pitch, roll) = if v.len() == 6 {
                        (deg(v[3]), deg(v[4]), deg(v[5]))
                    } else {
                        (T::zero(), T::zero(), T::zero())
                    };
                    trajectory.push(Pose::from_center_ypr(Point3::new(v[0], v[1], v[2]), yaw, pitch, roll));
                }
                "pose" => {
                    if tok.len() != 13 {
                        return Err(err("expected 'pose' followed by 12 values".into()));
                    }
                    let v = nums(1..13)?;
                    let rot = Mat3::from_rows([[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]]);
                    let pose = Pose::new(rot, Point3::new(v[3], v[7], v[11])).map_err(|e| err(e.to_string()))?;
                    trajectory.push(pose);
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        let (width, height) = resolution.ok_or_else(|| crate::Error::Parse("scene lacks a resolution line".into()))?;
        let spec = Self { width, height, primitives, trajectory };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Same scene at another ERP resolution.
    pub fn with_height(&self, height: usize) -> Result<Self> {
        let mut s = self.clone();
        s.height = height;
        s.width = 2 * height;
        s.intrinsics()?;
        Ok(s)
    }
}

fn parse_texture<T: Real>(tok: &[&str]) -> Result<Texture<T>> {
    let nums: Vec<T> = tok
        .iter()
        .skip(1)
        .map(|t| t.parse::<f64>().map(T::lit).map_err(|_| crate::Error::Parse(format!("bad number '{t}'"))))
        .collect::<Result<_>>()?;
    let in_unit = |x: T| x >= T::zero() && x <= T::one();
    let tex = match (tok.first().copied(), nums.len()) {
        (Some("solid"), 3) => Texture::Solid([nums[0], nums[1], nums[2]]),
        (Some("checker"), 3 | 4) => Texture::Checker {
            cell: nums[0],
            a: nums[1],
            b: nums[2],
            jitter: nums.get(3).copied().unwrap_or(T::zero()),
        },
        (Some("gradient"), 3) => Texture::Gradient { period: nums[0], a: nums[1], b: nums[2] },
        _ => return parse(format!("bad texture '{}'", tok.join(" "))),
    };
    let ok = match &tex {
        Texture::Solid(c) => c.iter().all(|&x| in_unit(x)),
        Texture::Checker { cell, a, b, jitter } => *cell > T::zero() && in_unit(*a) && in_unit(*b) && *jitter >= T::zero(),
        Texture::Gradient { period, a, b } => *period > T::zero() && in_unit(*a) && in_unit(*b),
    };
    if !ok {
        return parse(format!("texture values out of range in '{}'", tok.join(" ")));
    }
    Ok(tex)
}

/// One rendered view: RGB albedo, radial depth and the camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame<T> {
    pub image: Image<T>,
    pub depth: DepthMap<T>,
    pub pose: Pose<T>,
}

impl<T: Real> RenderedFrame<T> {
    /// Writes `frame_XXXX.png` and `depth_XXXX.pfm` into `dir` and appends
    /// the pose to `dir/poses.txt`.
    pub fn save(&self, dir: impl AsRef<Path>, index: usize) -> Result<()> {
        let dir = dir.as_ref();
        self.image.write_png(dir.join(frame_name(index)))?;
        self.depth.save(dir.join(depth_name(index)))?;
        append_pose(dir.join(POSE_FILE), index, &self.pose)
    }
}

pub const POSE_FILE: &str = "poses.txt";

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

pub fn depth_name(index: usize) -> String {
    format!("depth_{index:04}.pfm")
}

/// Appends one pose line, writing the header comment if the file is new.
pub fn append_pose<T: Real>(path: impl AsRef<Path>, frame_id: usize, pose: &Pose<T>) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "# frame_id r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz (world-to-camera)")?;
    }
    writeln!(f, "{}", format_pose_line(frame_id, pose))?;
    Ok(())
}

/// Ray casts frame `index` of the trajectory.
pub fn render<T: Real>(spec: &SceneSpec<T>, index: usize) -> Result<RenderedFrame<T>> {
    let intr = spec.intrinsics()?;
    let pose = *spec
        .trajectory
        .get(index)
        .ok_or_else(|| crate::Error::Domain(format!("frame {index} not in a {}-frame trajectory", spec.trajectory.len())))?;
    for p in &spec.primitives {
        p.shape.validate()?;
    }
    spec.check_camera(index, &pose)?;
    let (w, h) = (intr.width(), intr.height());
    let origin = pose.center();
    let rows: Vec<(Vec<T>, Vec<T>)> = (0..h)
        .into_par_iter()
        .map(|row| {
            let mut rgb = Vec::with_capacity(w * 3);
            let mut depth = Vec::with_capacity(w);
            for col in 0..w {
                let s = unproject(PixelCoord::new(T::from_usize_lossy(col), T::from_usize_lossy(row)), &intr)
                    .expect("pixel centers are in range");
                let d = pose.rotate_to_world(direction(s));
                match spec.cast(origin, d) {
                    Some((hit, i)) => {
                        let c = spec.primitives[i].texture.eval(origin + d * hit.t, hit.normal);
                        rgb.extend_from_slice(&c);
                        depth.push(hit.t);
                    }
                    None => {
                        rgb.extend_from_slice(&[T::zero(); 3]);
                        depth.push(T::nan());
                    }
                }
            }
            (rgb, depth)
        })
        .collect();
    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut depth = Vec::with_capacity(w * h);
    for (c, d) in rows {
        rgb.extend(c);
        depth.extend(d);
    }
    Ok(RenderedFrame {
        image: Image::new(w, h, 3, rgb)?,
        depth: DepthMap::from_values(w, h, depth)?,
        pose,
    })
}

/// Renders every frame and writes the sequence into `dir` (which must
/// exist). Any previous pose file there is replaced.
pub fn render_sequence<T: Real>(spec: &SceneSpec<T>, dir: impl AsRef<Path>) -> Result<Vec<RenderedFrame<T>>> {
    let dir = dir.as_ref();
    let pose_path = dir.join(POSE_FILE);
    if pose_path.exists() {
        std::fs::remove_file(&pose_path)?;
    }
    let mut frames = Vec::with_capacity(spec.trajectory.len());
    for i in 0..spec.trajectory.len() {
        let f = render(spec, i)?;
        f.save(dir, i)?;
        frames.push(f);
    }
    Ok(frames)
}

fn quantize_color<T: Real>(c: [T; 3]) -> [u8; 3] {
    [quantize_u8(c[0]), quantize_u8(c[1]), quantize_u8(c[2])]
}

/// Axis-aligned box as 8 vertices and 12 triangles; normals point outward,
/// or inward when `inward` is set.
pub fn box_mesh<T: Real>(min: Point3<T>, max: Point3<T>, inward: bool, color: [u8; 3]) -> TriangleMesh<T> {
    let corner = |i: usize| {
        Point3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let vertices: Vec<Point3<T>> = (0..8).map(corner).collect();
    let center = (min + max) * T::lit(0.5);
    let mut triangles = Vec::with_capacity(12);
    for axis in 0..3 {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2usize {
            let idx = |a: usize, b: usize| ((side << axis) | (a << i) | (b << j)) as u32;
            let quad = [idx(0, 0), idx(1, 0), idx(1, 1), idx(0, 1)];
            for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                let [a, b, c] = tri.map(|k| vertices[k as usize]);
                let n = (b - a).cross(c - a);
                let outward = n.dot(a - center) > T::zero();
                triangles.push(if outward != inward { tri } else { [tri[0], tri[2], tri[1]] });
            }
        }
    }
    TriangleMesh { colors: vec![color; 8], vertices, triangles }
}

/// Icosphere with `subdivisions` rounds of 4-way splitting, normals
/// outward.
pub fn icosphere<T: Real>(center: Point3<T>, radius: T, subdivisions: usize, color: [u8; 3]) -> TriangleMesh<T> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, g, 0.0], [1.0, g, 0.0], [-1.0, -g, 0.0], [1.0, -g, 0.0],
        [0.0, -1.0, g], [0.0, 1.0, g], [0.0, -1.0, -g], [0.0, 1.0, -g],
        [g, 0.0, -1.0], [g, 0.0, 1.0], [-g, 0.0, -1.0], [-g, 0.0, 1.0],
    ];
    let mut unit: Vec<Point3<f64>> = raw
        .iter()
        .map(|&v| Point3::from_array(v).normalized().expect("non-zero"))
        .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut m = |x: u32, y: u32| {
                let key = (x.min(y), x.max(y));
                *mid.entry(key).or_insert_with(|| {
                    let p = (unit[x as usize] + unit[y as usize]).normalized().expect("non-antipodal");
                    unit.push(p);
                    (unit.len() - 1) as u32
                })
            };
            let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for f in &mut faces {
        let [a, b, c] = f.map(|k| unit[k as usize]);
        if (b - a).cross(c - a).dot(a) < 0.0 {
            f.swap(1, 2);
        }
    }
    let vertices: Vec<Point3<T>> = unit
        .iter()
        .map(|p| center + Point3::new(T::lit(p.x), T::lit(p.y), T::lit(p.z)) * radius)
        .collect();
    TriangleMesh { colors: vec![color; vertices.len()], vertices, triangles: faces }
}

/// Subdivision level used for sphere primitives in [`gt_mesh`].
pub const SPHERE_SUBDIVISIONS: usize = 4;

/// Analytic triangulation of every primitive, normals facing free space.
pub fn gt_mesh<T: Real>(spec: &SceneSpec<T>) -> TriangleMesh<T> {
    let mut mesh = TriangleMesh::empty();
    for p in &spec.primitives {
        let color = quantize_color(p.texture.mean_color());
        let part = match p.shape {
            Shape::Box { min, max } => box_mesh(min, max, false, color),
            Shape::Room { min, max } => box_mesh(min, max, true, color),
            Shape::Sphere { center, radius } => icosphere(center, radius, SPHERE_SUBDIVISIONS, color),
        };
        mesh.append(&part);
    }
    mesh
}

/// The reference benchmark scene: a 4 m cube room with a jittered checker
/// texture and three cameras 0.2 to 0.5 m apart, the last one rolled so
/// the poles see texture.
pub fn checker_room<T: Real>(height: usize) -> Result<SceneSpec<T>> {
    let l = T::lit;
    let spec = SceneSpec {
        width: 2 * height,
        height,
        primitives: vec![Primitive {
            shape: Shape::Room { min: Point3::splat(l(-2.0)), max: Point3::splat(l(2.0)) },
            texture: Texture::Checker { cell: l(0.15), a: l(0.3), b: l(0.7), jitter: l(0.2) },
        }],
        trajectory: vec![
            Pose::from_center_ypr(Point3::new(l(0.0), l(0.0), l(0.0)), l(0.0), l(0.0), l(0.0)),
            Pose::from_center_ypr(Point3::new(l(0.3), l(0.0), l(0.1)), l(20f64.to_radians()), l(0.0), l(0.0)),
            Pose::from_center_ypr(
                Point3::new(l(-0.1), l(0.1), l(0.3)),
                l(-35f64.to_radians()),
                l(5f64.to_radians()),
                l(15f64.to_radians()),
            ),
        ],
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erp_camera::{cartesian_to_spherical, project, spherical_to_cartesian};

    fn one_sphere(r: f64) -> SceneSpec<f64> {
        SceneSpec {
            width: 64,
            height: 32,
            primitives: vec![Primitive {
                shape: Shape::Sphere { center: Point3::new(1.0, -2.0, 0.5), radius: r },
                texture: Texture::Solid([0.5; 3]),
            }],
            trajectory: vec![Pose::from_center_ypr(Point3::new(1.0, -2.0, 0.5), 0.4, 0.2, -0.1)],
        }
    }

    #[test]
    fn camera_at_sphere_center_sees_radius() {
        let f = render(&one_sphere(1.7), 0).unwrap();
        assert_eq!(f.depth.valid_count(), 64 * 32);
        assert!(f.depth.values().iter().all(|&d| (d - 1.7).abs() < 1e-12));
    }

    #[test]
    fn room_center_forward_depth() {
        let mut spec = checker_room::<f64>(32).unwrap();
        spec.trajectory = vec![Pose::identity()];
        let f = render(&spec, 0).unwrap();
        // theta = 0, phi = 0 is pixel (W/2, H/2)
        assert!((f.depth.get(32, 16).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn camera_outside_free_space_rejected() {
        let mut spec = checker_room::<f64>(16).unwrap();
        spec.trajectory = vec![Pose::from_center_ypr(Point3::new(2.5, 0.0, 0.0), 0.0, 0.0, 0.0)];
        assert!(render(&spec, 0).is_err());
        spec.primitives.push(Primitive {
            shape: Shape::Box { min: Point3::splat(-0.5), max: Point3::splat(0.5) },
            texture: Texture::Solid([1.0; 3]),
        });
        spec.trajectory = vec![Pose::identity()];
        assert!(render(&spec, 0).is_err());
        assert!(render(&spec, 3).is_err());
    }

    #[test]
    fn box_occludes_room() {
        let mut spec = checker_room::<f64>(32).unwrap();
        spec.primitives.push(Primitive {
            shape: Shape::Box { min: Point3::new(-0.5, -0.5, 1.0), max: Point3::new(0.5, 0.5, 1.5) },
            texture: Texture::Solid([1.0, 0.0, 0.0]),
        });
        spec.trajectory = vec![Pose::identity()];
        let f = render(&spec, 0).unwrap();
        assert!((f.depth.get(32, 16).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(f.image.pixel(32, 16), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn hit_point_reprojects_to_pixel() {
        let spec = checker_room::<f64>(32).unwrap();
        let f = render(&spec, 2).unwrap();
        let intr = spec.intrinsics().unwrap();
        for &(c, r) in &[(3usize, 4usize), (40, 20), (63, 31), (10, 0)] {
            let d = f.depth.get(c, r).unwrap();
            let s = unproject(PixelCoord::new(c as f64, r as f64), &intr).unwrap();
            let pw = f.pose.apply_inverse(spherical_to_cartesian(s, d).unwrap());
            assert!(pw.x.abs().max(pw.y.abs()).max(pw.z.abs()) - 2.0 < 1e-12);
            let (s2, r2) = cartesian_to_spherical(f.pose.apply(pw)).unwrap();
            let p = project(s2, &intr);
            assert!((r2 - d).abs() < 1e-12 && (p.v - r as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn textures() {
        let n = Point3::new(-1.0f64, 0.0, 0.0);
        let t = Texture::Checker { cell: 0.5, a: 0.2, b: 0.8, jitter: 0.0 };
        let c0 = t.eval(Point3::new(2.0, 0.1, 0.1), n)[0];
        let c1 = t.eval(Point3::new(2.0, 0.6, 0.1), n)[0];
        assert!(c0 != c1 && (c0 - 0.2).abs() * (c0 - 0.8).abs() < 1e-12);
        let j = Texture::Checker { cell: 0.5, a: 0.5, b: 0.5, jitter: 0.1 };
        let v = j.eval(Point3::new(2.0, 0.1, 0.1), n)[0];
        assert!((0.4..=0.6).contains(&v));
        assert_eq!(v, j.eval(Point3::new(2.0, 0.2, 0.3), n)[0]);
        let g = Texture::Gradient { period: 1.0, a: 0.0, b: 1.0 };
        assert!(g.eval(Point3::zero(), n)[0].abs() < 1e-15);
        assert!((g.eval(Point3::new(0.5, 0.0, 0.0), n)[0] - 1.0).abs() < 1e-15);
        assert!((g.eval(Point3::new(0.25, 0.0, 0.0), n)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_cube_mesh() {
        let m = box_mesh(Point3::zero(), Point3::splat(1.0f64), false, [0; 3]);
        assert_eq!((m.vertices.len(), m.triangles.len()), (8, 12));
        assert!((m.surface_area() - 6.0).abs() < 1e-12);
        for t in 0..12 {
            let [a, b, c] = m.corners(t);
            let centroid = (a + b + c) / 3.0;
            assert!(m.face_normal(t).dot(centroid - Point3::splat(0.5)) > 0.0);
        }
        let inward = box_mesh(Point3::zero(), Point3::splat(1.0f64), true, [0; 3]);
        assert!(inward.face_normal(0).dot(inward.corners(0)[0] - Point3::splat(0.5)) < 0.0);
    }

    #[test]
    fn icosphere_accuracy() {
        let c = Point3::new(0.5, 1.0, -2.0);
        let m = icosphere(c, 1.3f64, 4, [0; 3]);
        assert_eq!(m.vertices.len(), 2562);
        assert_eq!(m.triangles.len(), 5120);
        let mut worst = 0.0f64;
        for t in 0..m.triangles.len() {
            let [a, b, cc] = m.corners(t);
            let centroid = (a + b + cc) / 3.0;
            worst = worst.max((centroid.distance(c) - 1.3).abs());
            assert!(m.face_normal(t).dot(centroid - c) > 0.0);
        }
        assert!(m.vertices.iter().all(|v| (v.distance(c) - 1.3).abs() < 1e-12));
        assert!(worst < 0.005 * 1.3, "{worst}");
    }

    #[test]
    fn scene_text_roundtrip() {
        let text = "\
# test scene
resolution 64 32
room -2 -2 -2 2 2 2 checker 0.15 0.3 0.7 0.2
sphere 0.5 0 1 0.3 gradient 0.4 0.1 0.9
box -1 1 -1 -0.5 1.5 -0.5 solid 1 0 0
camera 0 0 0
camera 0.3 0 0.1 20 0 0
pose 1 0 0 0.5 0 1 0 0 0 0 1 0
";
        let s = SceneSpec::<f64>::parse(text).unwrap();
        assert_eq!((s.width, s.height, s.primitives.len(), s.trajectory.len()), (64, 32, 3, 3));
        assert_eq!(s.trajectory[1], checker_room::<f64>(32).unwrap().trajectory[1]);
        assert!((s.trajectory[2].center().x + 0.5).abs() < 1e-15);
        assert!(SceneSpec::<f64>::parse("resolution 64 32\ncamera 0 0 0\n").is_err());
        assert!(SceneSpec::<f64>::parse("resolution 64 32\nroom -1 -1 -1 1 1 1 plaid\ncamera 0 0 0\n").is_err());
        assert!(SceneSpec::<f64>::parse("resolution 64 32\nroom -1 -1 -1 1 1 1 solid 1 1 1\ncamera 3 0 0\n").is_err());
        assert!(SceneSpec::<f64>::parse("room -1 -1 -1 1 1 1 solid 1 1 1\ncamera 0 0 0\n").is_err());
    }
}
