//! Per-pixel matching features and the cost-reduction MLP.
//!
//! Two extractors are provided: a deterministic classical descriptor that
//! needs no weights, and a forward-only network built from fused
//! regular + spherical convolution blocks whose weights are loaded from
//! disk.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::erp_camera::{direction, ErpIntrinsics, Pose, SphericalCoord};
use crate::error::{dimension, domain, parse, Result};
use crate::geometry::{Mat3, Point3};
use crate::image::Image;
use crate::scalar::Real;
use crate::sphere_kernel::{
    fused_layer, inverse_gnomonic, read_f32_le, sample_grid, spherical_taps, tangent_pattern, write_f32_le,
    KernelPattern, KernelWeights,
};

/// Dense `H x W x F` descriptor grid, computed at `scale`-times lower
/// resolution than the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    scale: usize,
    map: Image<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(map: Image<T>, scale: usize) -> Result<Self> {
        if scale == 0 {
            return domain("feature scale must be positive");
        }
        Ok(Self { scale, map })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.map.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.map.height()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.map.channels()
    }

    #[inline]
    pub fn scale(&self) -> usize {
        self.scale
    }

    #[inline]
    pub fn as_image(&self) -> &Image<T> {
        &self.map
    }

    #[inline]
    pub fn descriptor(&self, col: usize, row: usize) -> &[T] {
        self.map.pixel(col, row)
    }

    /// ERP intrinsics of the feature raster.
    pub fn intrinsics(&self) -> Result<ErpIntrinsics> {
        ErpIntrinsics::new(self.width(), self.height())
    }

    /// Rolls the feature map horizontally by `k` columns.
    pub fn shift_cols(&self, k: isize) -> Self {
        Self { scale: self.scale, map: self.map.shift_cols(k) }
    }
}

/// Number of channels produced by [`classical_features`] for `radius`.
pub fn classical_dim(radius: usize) -> usize {
    let side = 2 * radius + 1;
    3 + side * side - 1
}

/// Classical descriptor at full resolution.
///
/// Per pixel: `[intensity, d/du, d/dv, patch...]` where the patch part
/// holds the `(2r+1)^2 - 1` non-center neighbours minus their mean. The
/// neighbours are taken on the tangent plane (pixel-pitch spacing, inverse
/// gnomonic projection), so near the poles the patch covers the same solid
/// angle as at the equator instead of a horizontally squeezed strip. The
/// gradients are central differences of the four axis taps. The whole
/// vector is scaled to unit length (zero vectors stay zero), so the dot
/// product of two descriptors is their cosine similarity. Columns wrap
/// around the seam, rows clamp at the poles.
pub fn classical_features<T: Real>(img: &Image<T>, radius: usize) -> Result<FeatureMap<T>> {
    describe(img, radius, None)
}

/// Classical descriptor computed on the image downsampled by `scale`
/// (a power of two). The result keeps pixel `(c, r)` aligned with source
/// pixel `(scale*c, scale*r)`.
pub fn classical_features_scaled<T: Real>(
    img: &Image<T>,
    radius: usize,
    scale: usize,
) -> Result<FeatureMap<T>> {
    let small = img.downsample(scale)?;
    let f = describe(&small, radius, None)?;
    FeatureMap::new(f.map, scale)
}

/// World direction whose tangent-plane projection orients the patches of
/// [`classical_features_world`]. Horizontal, so the two directions where
/// the orientation is undefined sit on the equator, where ERP pixels are
/// sparsest, and never at the poles. Its azimuth (0.9 rad) keeps those
/// directions off pixel centers at common resolutions.
pub const PATCH_AXIS: [f64; 3] = [0.7833269096274834, 0.0, 0.6216099682706644];

/// Like [`classical_features_scaled`], but each patch is rotated in its
/// tangent plane so that its "north" follows the projection of
/// [`PATCH_AXIS`] instead of the camera's own meridian. Views related by
/// any rotation, or by a translation that moves the camera's poles across
/// the scene, then describe a surface point with a consistently oriented
/// patch. `pose` is the camera's world-to-camera pose.
pub fn classical_features_world<T: Real>(
    img: &Image<T>,
    radius: usize,
    scale: usize,
    pose: &Pose<T>,
) -> Result<FeatureMap<T>> {
    let small = img.downsample(scale)?;
    let f = describe(&small, radius, Some(pose.rotation()))?;
    FeatureMap::new(f.map, scale)
}

/// Counter-clockwise patch rotation (east towards north) that aligns the
/// patch's north with the projected reference axis at direction `s`.
fn patch_rotation<T: Real>(s: SphericalCoord<T>, axis_cam: Point3<T>) -> T {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    let d = direction(s);
    let east = Point3::new(ct, T::zero(), -st);
    let north = Point3::new(-sp * st, -cp, -sp * ct);
    let f = axis_cam - d * axis_cam.dot(d);
    (-f.dot(east)).atan2(f.dot(north))
}

fn describe<T: Real>(img: &Image<T>, radius: usize, world_to_cam: Option<&Mat3<T>>) -> Result<FeatureMap<T>> {
    let (w, h) = (img.width(), img.height());
    if 2 * radius >= w.min(h) {
        return domain(format!(
            "descriptor radius {radius} too large for a {w}x{h} image"
        ));
    }
    let gray = img.to_gray();
    let dim = classical_dim(radius);
    let intr = ErpIntrinsics::new(w, h)?;
    let size = 2 * radius + 1;
    let center = size * size / 2;
    let pattern = KernelPattern::pixel_pitch(&intr, size)?;
    let plane = tangent_pattern(&pattern);
    let axis_cam = world_to_cam.map(|r| r.mul_vec(Point3::from_array(PATCH_AXIS.map(T::lit))));
    let half = T::lit(0.5);
    let n_patch = T::from_usize_lossy(dim - 3);
    let mut data = vec![T::zero(); w * h * dim];
    data.par_chunks_mut(w * dim).enumerate().for_each(|(row, out)| {
        let taps = row_taps(&pattern, &intr, row);
        let mut samples = vec![T::zero(); taps.len()];
        for col in 0..w {
            match axis_cam {
                None => {
                    for (s, tap) in samples.iter_mut().zip(&taps) {
                        *s = tap.sample(&gray, col);
                    }
                }
                Some(axis) => {
                    let dir = intr.pixel_direction::<T>(col, row);
                    let (sin_a, cos_a) = patch_rotation(dir, axis).sin_cos();
                    let center_dir = SphericalCoord { theta: T::zero(), phi: dir.phi };
                    for (s, &(x, y)) in samples.iter_mut().zip(&plane) {
                        let p = inverse_gnomonic(center_dir, x * cos_a - y * sin_a, x * sin_a + y * cos_a);
                        *s = RowTap::new(p.theta, p.phi, &intr).sample(&gray, col);
                    }
                }
            }
            let d = &mut out[col * dim..(col + 1) * dim];
            d[0] = gray.get(col, row, 0);
            if radius > 0 {
                d[1] = (samples[center + 1] - samples[center - 1]) * half;
                d[2] = (samples[center + size] - samples[center - size]) * half;
            }
            let mut k = 3;
            let mut sum = T::zero();
            for (t, &v) in samples.iter().enumerate() {
                if t == center {
                    continue;
                }
                d[k] = v;
                sum = sum + v;
                k += 1;
            }
            if dim > 3 {
                let mean = sum / n_patch;
                for v in &mut d[3..] {
                    *v = *v - mean;
                }
            }
            let norm = d.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::zero() {
                for v in d.iter_mut() {
                    *v = *v / norm;
                }
            }
        }
    });
    FeatureMap::new(Image::from_raw_unchecked(w, h, dim, data), 1)
}

/// Bilinear tap expressed relative to the center column. Splitting the
/// column offset into integer and fractional parts keeps sampling exactly
/// equivariant to whole-column shifts.
struct RowTap<T> {
    col_offset: isize,
    fu: T,
    v0: usize,
    v1: usize,
    fv: T,
}

impl<T: Real> RowTap<T> {
    /// Tap at longitude offset `dtheta` and latitude `phi`.
    fn new(dtheta: T, phi: T, intr: &ErpIntrinsics) -> Self {
        let (w, h) = (T::from_usize_lossy(intr.width()), T::from_usize_lossy(intr.height()));
        let du = dtheta * w / T::TAU();
        let v = (h * T::lit(0.5) - phi * h / T::PI()).max(T::zero()).min(h - T::one());
        let n = du.floor();
        let v0f = v.floor();
        let v0 = v0f.to_usize().unwrap_or(0).min(intr.height() - 1);
        RowTap {
            col_offset: n.to_isize().unwrap_or(0),
            fu: du - n,
            v0,
            v1: (v0 + 1).min(intr.height() - 1),
            fv: v - v0f,
        }
    }

    #[inline]
    fn sample(&self, img: &Image<T>, col: usize) -> T {
        let w = img.width() as isize;
        let c0 = (col as isize + self.col_offset).rem_euclid(w) as usize;
        let c1 = (c0 + 1) % img.width();
        let one = T::one();
        (one - self.fu) * (one - self.fv) * img.get(c0, self.v0, 0)
            + self.fu * (one - self.fv) * img.get(c1, self.v0, 0)
            + (one - self.fu) * self.fv * img.get(c0, self.v1, 0)
            + self.fu * self.fv * img.get(c1, self.v1, 0)
    }
}

fn row_taps<T: Real>(pattern: &KernelPattern<T>, intr: &ErpIntrinsics, row: usize) -> Vec<RowTap<T>> {
    let phi0 = intr.pixel_direction::<T>(0, row).phi;
    spherical_taps(pattern, phi0)
        .into_iter()
        .map(|(dtheta, phi)| RowTap::new(dtheta, phi, intr))
        .collect()
}

/// One fused block: regular and spherical 3x3 (or larger) branches summed,
/// rectified, then optionally max-pooled with stride 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedBlock<T> {
    pub regular: KernelWeights<T>,
    pub sphere: KernelWeights<T>,
    pub stride: usize,
}

/// Weights of the learned feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights<T> {
    blocks: Vec<FusedBlock<T>>,
}

impl<T: Real> NetworkWeights<T> {
    pub fn new(blocks: Vec<FusedBlock<T>>) -> Result<Self> {
        if blocks.is_empty() {
            return domain("network needs at least one block");
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.stride != 1 && b.stride != 2 {
                return domain(format!("block {i}: stride must be 1 or 2, got {}", b.stride));
            }
            if b.regular.in_channels() != b.sphere.in_channels()
                || b.regular.out_channels() != b.sphere.out_channels()
            {
                return dimension(format!("block {i}: branch shapes disagree"));
            }
            if i > 0 && blocks[i - 1].regular.out_channels() != b.regular.in_channels() {
                return dimension(format!("block {i}: input channels do not chain"));
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[FusedBlock<T>] {
        &self.blocks
    }

    /// Product of the block strides.
    pub fn stride(&self) -> usize {
        self.blocks.iter().map(|b| b.stride).product()
    }

    pub fn in_channels(&self) -> usize {
        self.blocks[0].regular.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map(|b| b.regular.out_channels()).unwrap_or(0)
    }

    /// Reads `SNET <n_blocks>\n`, then for each block `BLOCK <stride>\n`
    /// followed by the regular and the spherical `SPHK` records.
    pub fn read<R: BufRead>(reader: &mut R) -> Result<Self> {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["SNET", n] => n
                .parse()
                .map_err(|_| crate::Error::Parse(format!("bad network header {:?}", header.trim_end())))?,
            _ => return parse(format!("bad network header {:?}", header.trim_end())),
        };
        let mut blocks = Vec::with_capacity(n);
        for i in 0..n {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let stride: usize = match line.split_whitespace().collect::<Vec<_>>()[..] {
                ["BLOCK", s] => s
                    .parse()
                    .map_err(|_| crate::Error::Parse(format!("block {i}: bad stride")))?,
                _ => return parse(format!("block {i}: expected BLOCK line, got {:?}", line.trim_end())),
            };
            let regular = KernelWeights::read(reader)?;
            let sphere = KernelWeights::read(reader)?;
            blocks.push(FusedBlock { regular, sphere, stride });
        }
        Self::new(blocks)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "SNET {}", self.blocks.len())?;
        for b in &self.blocks {
            writeln!(w, "BLOCK {}", b.stride)?;
            b.regular.write(w)?;
            b.sphere.write(w)?;
        }
        Ok(())
    }
}

/// Forward pass of the fused-block feature network.
pub fn network_features<T: Real>(img: &Image<T>, weights: &NetworkWeights<T>) -> Result<FeatureMap<T>> {
    if img.channels() != weights.in_channels() {
        return dimension(format!(
            "network expects {} input channels, image has {}",
            weights.in_channels(),
            img.channels()
        ));
    }
    let stride = weights.stride();
    if img.height() % stride != 0 || img.width() % stride != 0 {
        return dimension(format!(
            "image {}x{} not divisible by network stride {stride}",
            img.width(),
            img.height()
        ));
    }
    let mut x = img.clone();
    for block in &weights.blocks {
        let intr = ErpIntrinsics::new(x.width(), x.height())?;
        let pattern = KernelPattern::pixel_pitch(&intr, block.sphere.size())?;
        let grid = sample_grid(&pattern, &intr);
        let y = fused_layer(&x, &block.regular, &block.sphere, &grid)?;
        let relu: Vec<T> = y.data().iter().map(|&v| v.max(T::zero())).collect();
        x = Image::from_raw_unchecked(y.width(), y.height(), y.channels(), relu);
        if block.stride == 2 {
            x = max_pool2(&x);
        }
    }
    FeatureMap::new(x, stride)
}

/// 3x3 max pooling evaluated at even pixels (wrapping columns, clamping
/// rows), which keeps the ERP pixel-center alignment.
fn max_pool2<T: Real>(img: &Image<T>) -> Image<T> {
    Image::from_fn(img.width() / 2, img.height() / 2, img.channels(), |col, row, c| {
        let (cc, rr) = (2 * col as isize, 2 * row as isize);
        let mut m = T::neg_infinity();
        for dr in -1..=1 {
            for dc in -1..=1 {
                m = m.max(img.get_wrapped(cc + dc, rr + dr, c));
            }
        }
        m
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Linear => x,
        }
    }
}

/// Affine layer `y = act(W x + b)`; `W` is `rows x cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer<T> {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Per-voxel cost reduction network. The output is a raw score (logit).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights<T> {
    layers: Vec<MlpLayer<T>>,
}

impl<T: Real> MlpWeights<T> {
    pub fn new(layers: Vec<MlpLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return domain("MLP needs at least one layer");
        }
        for (i, l) in layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 {
                return domain(format!("layer {i}: empty dimensions"));
            }
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return dimension(format!("layer {i}: parameter count mismatch"));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return domain(format!("layer {i}: non-finite parameter"));
            }
            if i > 0 && layers[i - 1].rows != l.cols {
                return dimension(format!(
                    "layer {i}: expects {} inputs but previous layer emits {}",
                    l.cols,
                    layers[i - 1].rows
                ));
            }
        }
        if layers.last().map(|l| l.rows) != Some(1) {
            return dimension("final MLP layer must have one output");
        }
        Ok(Self { layers })
    }

    /// Single linear layer computing the arithmetic mean of its input.
    pub fn mean(len: usize) -> Result<Self> {
        let inv = T::one() / T::from_usize_lossy(len.max(1));
        Self::new(vec![MlpLayer {
            rows: 1,
            cols: len,
            activation: Activation::Linear,
            weights: vec![inv; len],
            bias: vec![T::zero()],
        }])
    }

    pub fn layers(&self) -> &[MlpLayer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    /// Largest hidden width, used to size scratch buffers.
    fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.rows.max(l.cols)).max().unwrap_or(0)
    }

    /// Forward pass reusing caller-provided scratch space.
    pub(crate) fn forward_with(&self, x: &[T], a: &mut Vec<T>, b: &mut Vec<T>) -> T {
        a.clear();
        a.extend_from_slice(x);
        for layer in &self.layers {
            b.clear();
            for r in 0..layer.rows {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = layer.bias[r];
                for (&wv, &xv) in row.iter().zip(a.iter()) {
                    acc = acc + wv * xv;
                }
                b.push(layer.activation.apply(acc));
            }
            std::mem::swap(a, b);
        }
        a[0]
    }

    pub(crate) fn scratch(&self) -> (Vec<T>, Vec<T>) {
        let n = self.max_width();
        (Vec::with_capacity(n), Vec::with_capacity(n))
    }

    /// Reads `SMLP <n_layers>\n`, then per layer `<rows> <cols> <activation>\n`
    /// followed by little-endian `f32` weights (row-major) and bias.
    pub fn read<R: BufRead>(reader: &mut R) -> Result<Self> {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["SMLP", n] => n
                .parse()
                .map_err(|_| crate::Error::Parse(format!("bad MLP header {:?}", header.trim_end())))?,
            _ => return parse(format!("bad MLP header {:?}", header.trim_end())),
        };
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return parse(format!("layer {i}: bad header {:?}", line.trim_end()));
            }
            let rows: usize = f[0].parse().map_err(|_| crate::Error::Parse(format!("layer {i}: bad rows")))?;
            let cols: usize = f[1].parse().map_err(|_| crate::Error::Parse(format!("layer {i}: bad cols")))?;
            let activation = Activation::from_tag(f[2])
                .ok_or_else(|| crate::Error::Parse(format!("layer {i}: unknown activation {:?}", f[2])))?;
            let n_w = rows
                .checked_mul(cols)
                .ok_or_else(|| crate::Error::Parse(format!("layer {i}: dimensions overflow")))?;
            let weights = read_f32_le(reader, n_w)?;
            let bias = read_f32_le(reader, rows)?;
            layers.push(MlpLayer { rows, cols, activation, weights, bias });
        }
        Self::new(layers)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "SMLP {}", self.layers.len())?;
        for l in &self.layers {
            writeln!(w, "{} {} {}", l.rows, l.cols, l.activation.tag())?;
            write_f32_le(w, &l.weights)?;
            write_f32_le(w, &l.bias)?;
        }
        Ok(())
    }
}

/// Scores one cost vector with the MLP.
pub fn mlp_forward<T: Real>(vector: &[T], weights: &MlpWeights<T>) -> Result<T> {
    if vector.len() != weights.input_dim() {
        return dimension(format!(
            "cost vector has {} entries, MLP expects {}",
            vector.len(),
            weights.input_dim()
        ));
    }
    let (mut a, mut b) = weights.scratch();
    Ok(weights.forward_with(vector, &mut a, &mut b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, 1, |c, r, _| {
            let x = (c * 37 + r * 101 + (c * r) % 7) % 17;
            x as f64 / 16.0
        })
    }

    #[test]
    fn constant_image_descriptor() {
        let img = Image::filled(16, 8, 3, 0.4f64);
        let f = classical_features(&img, 1).unwrap();
        assert_eq!(f.dim(), classical_dim(1));
        assert_eq!(f.dim(), 11);
        for row in 0..8 {
            for col in 0..16 {
                let d = f.descriptor(col, row);
                assert!((d[0] - 1.0).abs() < 1e-12);
                assert!(d[1..].iter().all(|&v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn patch_component_is_zero_mean() {
        let f = classical_features(&textured(32, 16), 2).unwrap();
        for row in 0..16 {
            for col in 0..32 {
                let s: f64 = f.descriptor(col, row)[3..].iter().sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_edge_gradient_peaks_at_edge() {
        let img = Image::from_fn(32, 16, 1, |c, _, _| if (8..24).contains(&c) { 1.0 } else { 0.0 });
        let f = classical_features(&img, 1).unwrap();
        let row = 8;
        let g: Vec<f64> = (0..32).map(|c| f.descriptor(c, row)[1]).collect();
        let peak = g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(peak == 7 || peak == 8, "peak at {peak}");
        assert!(g[16].abs() < 1e-12 && g[2].abs() < 1e-12);
    }

    #[test]
    fn column_shift_equivariance_is_exact() {
        let img = textured(32, 16);
        let f = classical_features(&img, 2).unwrap();
        for k in [1isize, 5, -3, 31] {
            let g = classical_features(&img.shift_cols(k), 2).unwrap();
            assert_eq!(g, f.shift_cols(k));
        }
    }

    #[test]
    fn radius_too_large() {
        let img = textured(16, 8);
        assert!(classical_features(&img, 4).is_err());
        assert!(classical_features(&img, 3).is_ok());
    }

    #[test]
    fn scaled_features_are_aligned() {
        let img = textured(64, 32);
        let f = classical_features_scaled(&img, 1, 2).unwrap();
        assert_eq!((f.width(), f.height(), f.scale()), (32, 16, 2));
        assert_eq!(f.intrinsics().unwrap(), ErpIntrinsics::new(32, 16).unwrap());
    }

    fn random_block(cin: usize, cout: usize, stride: usize, seed: u64) -> FusedBlock<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |n| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<f64>>();
        FusedBlock {
            regular: KernelWeights::new(3, cin, cout, gen(9 * cin * cout)).unwrap(),
            sphere: KernelWeights::new(3, cin, cout, gen(9 * cin * cout)).unwrap(),
            stride,
        }
    }

    #[test]
    fn zero_network_gives_zero_features() {
        let img = textured(32, 16);
        let net = NetworkWeights::new(vec![FusedBlock {
            regular: KernelWeights::zeros(3, 1, 4),
            sphere: KernelWeights::zeros(3, 1, 4),
            stride: 2,
        }])
        .unwrap();
        let f = network_features(&img, &net).unwrap();
        assert_eq!((f.width(), f.height(), f.dim(), f.scale()), (16, 8, 4, 2));
        assert!(f.as_image().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_network_passthrough() {
        let img = textured(32, 16);
        let net = NetworkWeights::new(vec![FusedBlock {
            regular: KernelWeights::identity(3, 1),
            sphere: KernelWeights::zeros(3, 1, 1),
            stride: 1,
        }])
        .unwrap();
        let f = network_features(&img, &net).unwrap();
        assert_eq!(f.as_image(), &img);
    }

    #[test]
    fn network_is_deterministic_and_serializable() {
        let img = Image::from_fn(32, 16, 3, |c, r, ch| ((c * 13 + r * 7 + ch * 5) % 19) as f64 / 19.0);
        let net = NetworkWeights::new(vec![random_block(3, 4, 2, 1), random_block(4, 2, 1, 2)]).unwrap();
        let a = network_features(&img, &net).unwrap();
        let b = network_features(&img, &net).unwrap();
        let bits = |f: &FeatureMap<f64>| f.as_image().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));

        let mut buf = Vec::new();
        net.write(&mut buf).unwrap();
        let back = NetworkWeights::<f64>::read(&mut &buf[..]).unwrap();
        // weights pass through f32 on disk
        assert_eq!(back.blocks().len(), 2);
        assert_eq!(back.stride(), 2);
        assert!(NetworkWeights::<f64>::read(&mut &buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn network_shape_errors() {
        let img = textured(32, 16);
        let net = NetworkWeights::new(vec![random_block(3, 4, 1, 1)]).unwrap();
        assert!(network_features(&img, &net).is_err());
        assert!(NetworkWeights::new(vec![random_block(1, 4, 1, 1), random_block(3, 4, 1, 1)]).is_err());
        assert!(NetworkWeights::new(vec![random_block(1, 4, 3, 1)]).is_err());
    }

    #[test]
    fn mlp_basic_cases() {
        let zero = MlpWeights::new(vec![MlpLayer {
            rows: 1,
            cols: 3,
            activation: Activation::Linear,
            weights: vec![0.0; 3],
            bias: vec![0.0],
        }])
        .unwrap();
        assert_eq!(mlp_forward(&[1.0, -2.0, 3.0], &zero).unwrap(), 0.0);
        let mean = MlpWeights::<f64>::mean(4).unwrap();
        assert!((mlp_forward(&[1.0, 2.0, 3.0, 6.0], &mean).unwrap() - 3.0).abs() < 1e-15);
        assert!(mlp_forward(&[1.0, 2.0], &mean).is_err());
    }

    #[test]
    fn mlp_validation() {
        let l = |rows, cols| MlpLayer {
            rows,
            cols,
            activation: Activation::Relu,
            weights: vec![0.0f64; rows * cols],
            bias: vec![0.0; rows],
        };
        assert!(MlpWeights::new(vec![l(4, 3), l(1, 4)]).is_ok());
        assert!(MlpWeights::new(vec![l(4, 3), l(1, 5)]).is_err());
        assert!(MlpWeights::new(vec![l(2, 3)]).is_err());
        assert!(MlpWeights::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn mlp_file_roundtrip() {
        let m = MlpWeights::new(vec![
            MlpLayer { rows: 2, cols: 3, activation: Activation::Relu, weights: vec![0.5, -1.0, 2.0, 0.25, 0.0, -0.75], bias: vec![0.125, -0.5] },
            MlpLayer { rows: 1, cols: 2, activation: Activation::Linear, weights: vec![1.5, -2.0], bias: vec![0.0] },
        ])
        .unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert!(buf.starts_with(b"SMLP 2\n2 3 relu\n"));
        let back = MlpWeights::<f64>::read(&mut &buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(MlpWeights::<f64>::read(&mut &b"SMLP 1\n1 2 tanh\n"[..]).is_err());
    }

    #[test]
    fn world_oriented_features_follow_yaw() {
        // yawing the camera by whole pixels rolls the ERP image, and the
        // world-oriented descriptor rolls with it
        let img = Image::from_fn(64, 32, 1, |c, r, _| (((c * 7 + r * 13) % 11) as f64) / 10.0);
        let k = 5isize;
        let yaw = -(k as f64) * std::f64::consts::TAU / 64.0;
        let a = classical_features_world(&img, 1, 1, &Pose::identity()).unwrap();
        let pose = Pose::from_center_ypr(Point3::zero(), yaw, 0.0, 0.0);
        let b = classical_features_world(&img.shift_cols(k), 1, 1, &pose).unwrap();
        let a = a.shift_cols(k);
        for (x, y) in a.as_image().data().iter().zip(b.as_image().data()) {
            assert!((x - y).abs() < 1e-9, "{x} {y}");
        }
        let plain = classical_features(&img, 1).unwrap();
        assert_eq!(plain.dim(), a.dim());
        assert!(plain.as_image().data() != a.as_image().data());
    }

}
