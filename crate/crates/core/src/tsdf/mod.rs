//! Truncated signed distance fusion of ERP depth maps and marching-cubes
//! surface extraction.
//!
//! Grid samples sit at `origin + voxel_size * (i, j, k)`. The signed
//! distance is measured along each camera ray (observed depth minus the
//! sample's radial distance), so it is positive in observed free space and
//! negative behind surfaces.

mod tables;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::erp_camera::{cartesian_to_spherical, project, Pose};
use crate::error::{dimension, domain, parse, Result};
use crate::geometry::Point3;
use crate::image::{quantize_u8, Image};
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use crate::sweep::{DepthMap, DEGENERATE_RADIUS};

use tables::TRIANGLE_TABLE;

/// Default voxel edge length in meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.04;
/// Default truncation distance, in voxels.
pub const DEFAULT_TRUNC_VOXELS: f64 = 3.0;
/// Default per-voxel weight cap.
pub const DEFAULT_MAX_WEIGHT: f64 = 128.0;

/// Dense voxel grid holding a running-mean TSDF, integration weights and
/// colors.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid<T> {
    origin: Point3<T>,
    voxel_size: T,
    dims: [usize; 3],
    max_weight: T,
    tsdf: Vec<T>,
    weight: Vec<T>,
    color: Vec<[T; 3]>,
}

impl<T: Real> TsdfGrid<T> {
    /// Empty grid (all weights zero, tsdf 1).
    pub fn new(origin: Point3<T>, voxel_size: T, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > T::zero()) || !voxel_size.is_finite() {
            return domain(format!("voxel size must be positive, got {voxel_size}"));
        }
        if !origin.is_finite() {
            return domain("grid origin must be finite");
        }
        if dims.iter().any(|&d| d < 2) {
            return domain(format!("grid needs at least 2 samples per axis, got {dims:?}"));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| crate::Error::Domain(format!("grid {dims:?} too large")))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            max_weight: T::lit(DEFAULT_MAX_WEIGHT),
            tsdf: vec![T::one(); n],
            weight: vec![T::zero(); n],
            color: vec![[T::zero(); 3]; n],
        })
    }

    /// Smallest grid whose samples cover the box `[min, max]` grown by
    /// `margin` on every side.
    pub fn covering(min: Point3<T>, max: Point3<T>, voxel_size: T, margin: T) -> Result<Self> {
        if !(voxel_size > T::zero()) {
            return domain(format!("voxel size must be positive, got {voxel_size}"));
        }
        let lo = min - Point3::splat(margin);
        let hi = max + Point3::splat(margin);
        let mut dims = [0; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            let extent = hi[a] - lo[a];
            if !(extent > T::zero()) {
                return domain("empty bounding box");
            }
            *d = (extent / voxel_size).ceil().to_usize().unwrap_or(0) + 1;
        }
        Self::new(lo, voxel_size, dims)
    }

    pub fn with_max_weight(mut self, max_weight: T) -> Result<Self> {
        if !(max_weight >= T::one()) {
            return domain(format!("weight cap must be at least 1, got {max_weight}"));
        }
        self.max_weight = max_weight;
        Ok(self)
    }

    #[inline]
    pub fn origin(&self) -> Point3<T> {
        self.origin
    }

    #[inline]
    pub fn voxel_size(&self) -> T {
        self.voxel_size
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn max_weight(&self) -> T {
        self.max_weight
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tsdf.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tsdf.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    /// World position of sample `(i, j, k)`.
    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Point3<T> {
        self.origin
            + Point3::new(
                T::from_usize_lossy(i),
                T::from_usize_lossy(j),
                T::from_usize_lossy(k),
            ) * self.voxel_size
    }

    #[inline]
    pub fn tsdf(&self, i: usize, j: usize, k: usize) -> T {
        self.tsdf[self.index(i, j, k)]
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize, k: usize) -> T {
        self.weight[self.index(i, j, k)]
    }

    #[inline]
    pub fn color(&self, i: usize, j: usize, k: usize) -> [T; 3] {
        self.color[self.index(i, j, k)]
    }

    pub fn tsdf_values(&self) -> &[T] {
        &self.tsdf
    }

    pub fn weight_values(&self) -> &[T] {
        &self.weight
    }

    /// Number of samples with non-zero weight.
    pub fn observed(&self) -> usize {
        self.weight.iter().filter(|&&w| w > T::zero()).count()
    }

    /// Overwrites every sample from a signed distance field (clamped by
    /// `trunc`) with weight 1 and a constant color.
    pub fn bake(&mut self, trunc: T, color: [T; 3], sdf: impl Fn(Point3<T>) -> T + Sync) -> Result<()> {
        if !(trunc > T::zero()) {
            return domain(format!("truncation must be positive, got {trunc}"));
        }
        let [nx, ny, _] = self.dims;
        let this = &*self;
        let values: Vec<T> = (0..self.len())
            .into_par_iter()
            .map(|n| {
                let p = this.position(n % nx, (n / nx) % ny, n / (nx * ny));
                clamp_unit(sdf(p) / trunc)
            })
            .collect();
        self.tsdf = values;
        self.weight.iter_mut().for_each(|w| *w = T::one());
        self.color.iter_mut().for_each(|c| *c = color);
        Ok(())
    }

    /// Fuses one radial depth map observed from `pose` (world-to-camera).
    ///
    /// `color` must match the depth raster and have 1 or 3 channels. Each
    /// sample projects into the image, takes the nearest pixel's depth and,
    /// unless it lies more than `trunc` behind that surface, folds
    /// `clamp((d - r) / trunc)` into its running mean.
    pub fn integrate_frame(
        &mut self,
        depth: &DepthMap<T>,
        color: &Image<T>,
        pose: &Pose<T>,
        trunc: T,
    ) -> Result<()> {
        if !(trunc > T::zero()) || !trunc.is_finite() {
            return domain(format!("truncation must be positive, got {trunc}"));
        }
        if (color.width(), color.height()) != (depth.width(), depth.height()) {
            return dimension(format!(
                "color {}x{} does not match depth {}x{}",
                color.width(),
                color.height(),
                depth.width(),
                depth.height()
            ));
        }
        if color.channels() != 1 && color.channels() != 3 {
            return dimension(format!("color must have 1 or 3 channels, got {}", color.channels()));
        }
        let intr = depth.intrinsics()?;
        let (w, h) = (depth.width(), depth.height());
        let [nx, ny, _] = self.dims;
        let slab = nx * ny;
        let (origin, voxel, cap) = (self.origin, self.voxel_size, self.max_weight);
        let eps = T::lit(DEGENERATE_RADIUS);
        let half = T::lit(0.5);
        let wf = T::from_usize_lossy(w);
        self.tsdf
            .par_chunks_mut(slab)
            .zip(self.weight.par_chunks_mut(slab))
            .zip(self.color.par_chunks_mut(slab))
            .enumerate()
            .for_each(|(k, ((tsdf, weight), colors))| {
                let z = origin.z + T::from_usize_lossy(k) * voxel;
                for n in 0..slab {
                    let p = Point3::new(
                        origin.x + T::from_usize_lossy(n % nx) * voxel,
                        origin.y + T::from_usize_lossy(n / nx) * voxel,
                        z,
                    );
                    let pc = pose.apply(p);
                    if !(pc.norm() > eps) {
                        continue;
                    }
                    let Ok((s, r)) = cartesian_to_spherical(pc) else { continue };
                    let px = project(s, &intr);
                    let mut col = (px.u + half).floor();
                    if col >= wf {
                        col = col - wf;
                    }
                    let col = col.to_usize().unwrap_or(0).min(w - 1);
                    let row = (px.v + half).floor().to_usize().unwrap_or(0).min(h - 1);
                    let Some(d) = depth.get(col, row) else { continue };
                    let sdf = d - r;
                    if !(sdf > -trunc) {
                        continue;
                    }
                    let sample = clamp_unit(sdf / trunc);
                    let w_old = weight[n];
                    let w_new = w_old + T::one();
                    tsdf[n] = (tsdf[n] * w_old + sample) / w_new;
                    let px_color = color.pixel(col, row);
                    for (c, acc) in colors[n].iter_mut().enumerate() {
                        let v = if px_color.len() == 3 { px_color[c] } else { px_color[0] };
                        *acc = (*acc * w_old + v) / w_new;
                    }
                    weight[n] = w_new.min(cap);
                }
            });
        Ok(())
    }

    /// Marching-cubes isosurface at `iso`. Cells emit geometry only when all
    /// eight corners are observed. Vertices are shared between adjacent
    /// cells and numbered in scan order, so the output does not depend on
    /// the thread count. Triangle normals point towards larger tsdf.
    pub fn extract_mesh(&self, iso: T) -> TriangleMesh<T> {
        let [nx, ny, nz] = self.dims;
        let slabs: Vec<Vec<[u64; 3]>> = (0..nz - 1)
            .into_par_iter()
            .map(|k| {
                let mut tris = Vec::new();
                let mut vals = [T::zero(); 8];
                for j in 0..ny - 1 {
                    'cell: for i in 0..nx - 1 {
                        let mut case = 0usize;
                        for (c, off) in CORNERS.iter().enumerate() {
                            let n = self.index(i + off[0], j + off[1], k + off[2]);
                            if !(self.weight[n] > T::zero()) {
                                continue 'cell;
                            }
                            vals[c] = self.tsdf[n];
                            if vals[c] < iso {
                                case |= 1 << c;
                            }
                        }
                        let row = &TRIANGLE_TABLE[case];
                        for t in row.chunks_exact(3).take_while(|t| t[0] >= 0) {
                            // the table winds triangles with normals towards
                            // the low side; swap to face the high side
                            let key = |e: i8| self.edge_key([i, j, k], e as usize);
                            tris.push([key(t[0]), key(t[2]), key(t[1])]);
                        }
                    }
                }
                tris
            })
            .collect();

        let mut lookup: HashMap<u64, u32> = HashMap::new();
        let mut mesh = TriangleMesh::empty();
        for tris in slabs {
            for t in tris {
                let mut ids = [0u32; 3];
                for (id, key) in ids.iter_mut().zip(t) {
                    *id = *lookup.entry(key).or_insert_with(|| {
                        let (p, c) = self.edge_vertex(key, iso);
                        mesh.vertices.push(p);
                        mesh.colors.push(c);
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                mesh.triangles.push(ids);
            }
        }
        mesh
    }

    /// Unique id of a grid edge: linear index of its lower endpoint times 3
    /// plus the axis.
    fn edge_key(&self, cell: [usize; 3], edge: usize) -> u64 {
        let [a, b] = EDGES[edge];
        let (ca, cb) = (CORNERS[a], CORNERS[b]);
        let lo = [
            cell[0] + ca[0].min(cb[0]),
            cell[1] + ca[1].min(cb[1]),
            cell[2] + ca[2].min(cb[2]),
        ];
        let axis = (0..3).find(|&d| ca[d] != cb[d]).unwrap_or(0);
        self.index(lo[0], lo[1], lo[2]) as u64 * 3 + axis as u64
    }

    fn edge_vertex(&self, key: u64, iso: T) -> (Point3<T>, [u8; 3]) {
        let axis = (key % 3) as usize;
        let n0 = (key / 3) as usize;
        let step = [1, self.dims[0], self.dims[0] * self.dims[1]][axis];
        let n1 = n0 + step;
        let [nx, ny, _] = self.dims;
        let (i, j, k) = (n0 % nx, (n0 / nx) % ny, n0 / (nx * ny));
        let p0 = self.position(i, j, k);
        let mut off = [0; 3];
        off[axis] = 1;
        let p1 = self.position(i + off[0], j + off[1], k + off[2]);
        let (v0, v1) = (self.tsdf[n0], self.tsdf[n1]);
        let denom = v1 - v0;
        let t = if denom == T::zero() { T::lit(0.5) } else { ((iso - v0) / denom).max(T::zero()).min(T::one()) };
        let (c0, c1) = (self.color[n0], self.color[n1]);
        let c = [0, 1, 2].map(|ch| quantize_u8(c0[ch] + (c1[ch] - c0[ch]) * t));
        (p0.lerp(p1, t), c)
    }

    /// Writes the binary snapshot: a text header
    /// `TSDF nx ny nz voxel ox oy oz` then little-endian f32 tsdf values,
    /// f32 weights and RGB bytes, all in x-fastest order.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let [nx, ny, nz] = self.dims;
        writeln!(
            w,
            "TSDF {nx} {ny} {nz} {} {} {} {}",
            self.voxel_size.as_f64(),
            self.origin.x.as_f64(),
            self.origin.y.as_f64(),
            self.origin.z.as_f64()
        )?;
        let mut buf = Vec::with_capacity(self.len() * 11);
        for v in &self.tsdf {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        for v in &self.weight {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        for c in &self.color {
            buf.extend(c.map(quantize_u8));
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a snapshot written by [`Self::write_snapshot`]. Colors come
    /// back quantized to 8 bits.
    pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 8 || tok[0] != "TSDF" {
            return parse("bad TSDF snapshot header");
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| crate::Error::Parse(format!("bad grid size {s:?}")));
        let num = |s: &str| {
            s.parse::<f64>()
                .map(T::lit)
                .map_err(|_| crate::Error::Parse(format!("bad number {s:?}")))
        };
        let dims = [int(tok[1])?, int(tok[2])?, int(tok[3])?];
        let voxel = num(tok[4])?;
        let origin = Point3::new(num(tok[5])?, num(tok[6])?, num(tok[7])?);
        let mut grid = Self::new(origin, voxel, dims)?;
        let n = grid.len();
        let mut buf = vec![0u8; n * 11];
        r.read_exact(&mut buf)
            .map_err(|_| crate::Error::Parse("truncated TSDF snapshot".into()))?;
        let f = |b: &[u8]| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
        for (dst, b) in grid.tsdf.iter_mut().zip(buf[..4 * n].chunks_exact(4)) {
            *dst = f(b);
        }
        for (dst, b) in grid.weight.iter_mut().zip(buf[4 * n..8 * n].chunks_exact(4)) {
            *dst = f(b);
        }
        let scale = T::lit(1.0 / 255.0);
        for (dst, b) in grid.color.iter_mut().zip(buf[8 * n..].chunks_exact(3)) {
            *dst = [0, 1, 2].map(|c| T::lit(b[c] as f64) * scale);
        }
        if grid.tsdf.iter().any(|v| !v.is_finite() || v.abs() > T::one())
            || grid.weight.iter().any(|w| !w.is_finite() || *w < T::zero())
        {
            return parse("TSDF snapshot holds out-of-range values");
        }
        Ok(grid)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_snapshot(std::io::BufReader::new(f))
    }
}

#[inline]
fn clamp_unit<T: Real>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];
