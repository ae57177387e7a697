//! Latitude-adaptive convolution on ERP rasters.
//!
//! Kernel taps are laid out on the plane tangent to the sphere at each
//! pixel and mapped back to the sphere with the inverse gnomonic
//! projection. Taps are ordered row-major in image layout: the first row
//! of the kernel lies north of the center pixel, and within a row taps go
//! from west to east. For a 3x3 kernel the center tap has index 4.

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;

use crate::erp_camera::{project, ErpIntrinsics, PixelCoord, SphericalCoord};
use crate::error::{dimension, domain, parse, Result};
use crate::image::Image;
use crate::scalar::{wrap_coord, Real};

/// Angular step sizes and extent of a square kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPattern<T> {
    pub delta_theta: T,
    pub delta_phi: T,
    pub size: usize,
}

impl<T: Real> KernelPattern<T> {
    pub fn new(delta_theta: T, delta_phi: T, size: usize) -> Result<Self> {
        let half = T::FRAC_PI_2();
        if size == 0 || size % 2 == 0 {
            return domain(format!("kernel size must be odd, got {size}"));
        }
        if !(delta_theta > T::zero() && delta_theta < half) {
            return domain(format!("delta_theta must be in (0, pi/2), got {delta_theta}"));
        }
        if !(delta_phi > T::zero() && delta_phi < half) {
            return domain(format!("delta_phi must be in (0, pi/2), got {delta_phi}"));
        }
        let reach = T::from_usize_lossy(size / 2);
        if reach * delta_theta >= half || reach * delta_phi >= half {
            return domain("outermost kernel tap reaches a quarter turn");
        }
        Ok(Self { delta_theta, delta_phi, size })
    }

    /// Steps equal to the pixel pitch: `2*pi/W` in longitude and `pi/H`
    /// in latitude.
    pub fn pixel_pitch(intr: &ErpIntrinsics, size: usize) -> Result<Self> {
        let w = T::from_usize_lossy(intr.width());
        let h = T::from_usize_lossy(intr.height());
        Self::new(T::TAU() / w, T::PI() / h, size)
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn taps(&self) -> usize {
        self.size * self.size
    }

    #[inline]
    pub fn center_tap(&self) -> usize {
        self.taps() / 2
    }

    /// Column and row step of tap `t` relative to the center (rows grow
    /// southwards, as in the image).
    #[inline]
    pub fn tap_steps(&self, t: usize) -> (isize, isize) {
        let r = self.radius() as isize;
        let row = (t / self.size) as isize - r;
        let col = (t % self.size) as isize - r;
        (col, row)
    }
}

/// Tangent-plane coordinates `(x east, y north)` of every tap.
///
/// Tap with steps `(i, j)` (east, north) sits at
/// `(tan(i*dθ), sec(i*dθ) * tan(j*dφ))`, which for a 3x3 kernel gives the
/// center `(0, 0)`, the axis taps `(±tan dθ, 0)` / `(0, ±tan dφ)` and the
/// corners `(±tan dθ, ±sec dθ tan dφ)`.
pub fn tangent_pattern<T: Real>(k: &KernelPattern<T>) -> Vec<(T, T)> {
    (0..k.taps())
        .map(|t| {
            let (col, row) = k.tap_steps(t);
            let i = T::from_isize(col).unwrap();
            let j = -T::from_isize(row).unwrap();
            let a = i * k.delta_theta;
            let x = a.tan();
            let y = (j * k.delta_phi).tan() / a.cos();
            (x, y)
        })
        .collect()
}

/// Maps tangent-plane point `(x, y)` at tangent point `center` back to the
/// sphere. The returned longitude is not wrapped.
#[inline]
pub fn inverse_gnomonic<T: Real>(center: SphericalCoord<T>, x: T, y: T) -> SphericalCoord<T> {
    let rho = x.hypot(y);
    if rho == T::zero() {
        return center;
    }
    let c = rho.atan();
    let (sin_c, cos_c) = c.sin_cos();
    let (sin_p0, cos_p0) = center.phi.sin_cos();
    let arg = (cos_c * sin_p0 + y * sin_c * cos_p0 / rho).max(-T::one()).min(T::one());
    let phi = arg.asin();
    let theta = center.theta + (x * sin_c).atan2(rho * cos_p0 * cos_c - y * sin_p0 * sin_c);
    SphericalCoord { theta, phi }
}

/// Spherical positions of every tap around a pixel at latitude `phi0`,
/// expressed as `(longitude offset, latitude)`. Depends only on latitude.
pub fn spherical_taps<T: Real>(k: &KernelPattern<T>, phi0: T) -> Vec<(T, T)> {
    let center = SphericalCoord { theta: T::zero(), phi: phi0 };
    tangent_pattern(k)
        .into_iter()
        .map(|(x, y)| {
            let s = inverse_gnomonic(center, x, y);
            (s.theta, s.phi)
        })
        .collect()
}

/// Per-pixel, per-tap continuous sample positions for one image size.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid<T> {
    width: usize,
    height: usize,
    taps: usize,
    coords: Vec<PixelCoord<T>>,
}

impl<T: Real> SampleGrid<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Sample positions of every tap of pixel `(col, row)`.
    #[inline]
    pub fn pixel_taps(&self, col: usize, row: usize) -> &[PixelCoord<T>] {
        let start = (row * self.width + col) * self.taps;
        &self.coords[start..start + self.taps]
    }

    fn check_image(&self, img: &Image<T>) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return dimension(format!(
                "sample grid is {}x{} but image is {}x{}",
                self.width,
                self.height,
                img.width(),
                img.height()
            ));
        }
        Ok(())
    }
}

/// Builds the sampling grid for every pixel of an ERP image.
pub fn sample_grid<T: Real>(k: &KernelPattern<T>, intr: &ErpIntrinsics) -> SampleGrid<T> {
    let (w, h) = (intr.width(), intr.height());
    let taps = k.taps();
    let pattern = tangent_pattern(k);
    let wf = T::from_usize_lossy(w);
    let vmax = T::from_usize_lossy(h - 1);
    let mut coords = vec![PixelCoord::new(T::zero(), T::zero()); w * h * taps];
    coords
        .par_chunks_mut(w * taps)
        .enumerate()
        .for_each(|(row, out)| {
            for col in 0..w {
                let center: SphericalCoord<T> = intr.pixel_direction(col, row);
                for (t, &(x, y)) in pattern.iter().enumerate() {
                    let s = inverse_gnomonic(center, x, y);
                    let s = SphericalCoord::wrapped(s.theta, s.phi);
                    let p = project(s, intr);
                    out[col * taps + t] =
                        PixelCoord::new(wrap_coord(p.u, wf), p.v.max(T::zero()).min(vmax));
                }
            }
        });
    SampleGrid { width: w, height: h, taps, coords }
}

/// Bilinearly samples every tap. Output channels are tap-major:
/// channel `t * C + c` holds input channel `c` at tap `t`.
pub fn sphere_sample<T: Real>(img: &Image<T>, grid: &SampleGrid<T>) -> Result<Image<T>> {
    grid.check_image(img)?;
    let (w, h, ch, taps) = (img.width(), img.height(), img.channels(), grid.taps);
    let mut data = vec![T::zero(); w * h * taps * ch];
    data.par_chunks_mut(w * taps * ch)
        .enumerate()
        .for_each(|(row, out)| {
            for col in 0..w {
                for (t, p) in grid.pixel_taps(col, row).iter().enumerate() {
                    let start = (col * taps + t) * ch;
                    img.sample_bilinear_into(p.u, p.v, &mut out[start..start + ch]);
                }
            }
        });
    Ok(Image::from_raw_unchecked(w, h, taps * ch, data))
}

/// Convolution weights indexed by `(tap, in_channel, out_channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights<T> {
    size: usize,
    in_channels: usize,
    out_channels: usize,
    data: Vec<T>,
}

impl<T: Real> KernelWeights<T> {
    pub fn new(size: usize, in_channels: usize, out_channels: usize, data: Vec<T>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return domain(format!("kernel size must be odd, got {size}"));
        }
        if in_channels == 0 || out_channels == 0 {
            return domain("kernel channel counts must be positive");
        }
        if data.len() != size * size * in_channels * out_channels {
            return dimension(format!(
                "kernel data length {} does not match {size}x{size}x{in_channels}x{out_channels}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("kernel weights must be finite");
        }
        Ok(Self { size, in_channels, out_channels, data })
    }

    pub fn zeros(size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            size,
            in_channels,
            out_channels,
            data: vec![T::zero(); size * size * in_channels * out_channels],
        }
    }

    /// Passes channel `c` through to output channel `c` via the center tap.
    pub fn identity(size: usize, channels: usize) -> Self {
        let mut k = Self::zeros(size, channels, channels);
        let center = size * size / 2;
        for c in 0..channels {
            k.set(center, c, c, T::one());
        }
        k
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn taps(&self) -> usize {
        self.size * self.size
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, tap: usize, i: usize, o: usize) -> T {
        self.data[(tap * self.in_channels + i) * self.out_channels + o]
    }

    #[inline]
    pub fn set(&mut self, tap: usize, i: usize, o: usize, v: T) {
        self.data[(tap * self.in_channels + i) * self.out_channels + o] = v;
    }

    /// Element-wise sum of two kernels of identical shape.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Self { data, ..*self })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.size != other.size
            || self.in_channels != other.in_channels
            || self.out_channels != other.out_channels
        {
            return dimension(format!(
                "kernel shapes differ: {}x{}x{} vs {}x{}x{}",
                self.size, self.in_channels, self.out_channels, other.size, other.in_channels, other.out_channels
            ));
        }
        Ok(())
    }

    /// Reads one `SPHK <size> <in_ch> <out_ch>\n` record followed by
    /// little-endian `f32` values in `(tap, in, out)` order.
    pub fn read<R: BufRead>(reader: &mut R) -> Result<Self> {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "SPHK" {
            return parse(format!("bad kernel header: {:?}", header.trim_end()));
        }
        let dims: Vec<usize> = fields[1..]
            .iter()
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| crate::Error::Parse(format!("bad kernel header: {:?}", header.trim_end())))?;
        let (size, in_ch, out_ch) = (dims[0], dims[1], dims[2]);
        let n = size
            .checked_mul(size)
            .and_then(|v| v.checked_mul(in_ch))
            .and_then(|v| v.checked_mul(out_ch))
            .ok_or_else(|| crate::Error::Parse("kernel dimensions overflow".into()))?;
        let data = read_f32_le(reader, n)?;
        Self::new(size, in_ch, out_ch, data)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "SPHK {} {} {}", self.size, self.in_channels, self.out_channels)?;
        write_f32_le(w, &self.data)
    }
}

pub(crate) fn read_f32_le<T: Real, R: Read>(reader: &mut R, n: usize) -> Result<Vec<T>> {
    let mut buf = vec![0u8; n * 4];
    reader.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            crate::Error::Parse(format!("truncated float payload, expected {n} values"))
        } else {
            e.into()
        }
    })?;
    Ok(buf
        .chunks_exact(4)
        .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect())
}

pub(crate) fn write_f32_le<T: Real, W: Write>(w: &mut W, values: &[T]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn check_kernel_input<T: Real>(img: &Image<T>, weights: &KernelWeights<T>) -> Result<()> {
    if weights.in_channels != img.channels() {
        return dimension(format!(
            "kernel expects {} input channels, image has {}",
            weights.in_channels,
            img.channels()
        ));
    }
    Ok(())
}

/// Convolution over the latitude-adaptive sample grid.
pub fn sphere_conv<T: Real>(
    img: &Image<T>,
    weights: &KernelWeights<T>,
    grid: &SampleGrid<T>,
) -> Result<Image<T>> {
    grid.check_image(img)?;
    check_kernel_input(img, weights)?;
    if weights.taps() != grid.taps {
        return dimension(format!(
            "kernel has {} taps but grid has {}",
            weights.taps(),
            grid.taps
        ));
    }
    let (w, h, cin, cout) = (img.width(), img.height(), img.channels(), weights.out_channels);
    let mut data = vec![T::zero(); w * h * cout];
    data.par_chunks_mut(w * cout).enumerate().for_each(|(row, out)| {
        let mut tap_vals = vec![T::zero(); cin];
        for col in 0..w {
            let acc = &mut out[col * cout..(col + 1) * cout];
            for (t, p) in grid.pixel_taps(col, row).iter().enumerate() {
                img.sample_bilinear_into(p.u, p.v, &mut tap_vals);
                accumulate_tap(weights, t, &tap_vals, acc);
            }
        }
    });
    Ok(Image::from_raw_unchecked(w, h, cout, data))
}

/// Square-grid convolution with horizontal wrap and vertical clamp.
pub fn regular_conv<T: Real>(img: &Image<T>, weights: &KernelWeights<T>) -> Result<Image<T>> {
    check_kernel_input(img, weights)?;
    let (w, h, cin, cout) = (img.width(), img.height(), img.channels(), weights.out_channels);
    let size = weights.size;
    let r = (size / 2) as isize;
    let mut data = vec![T::zero(); w * h * cout];
    data.par_chunks_mut(w * cout).enumerate().for_each(|(row, out)| {
        let mut tap_vals = vec![T::zero(); cin];
        for col in 0..w {
            let acc = &mut out[col * cout..(col + 1) * cout];
            for t in 0..size * size {
                let dr = (t / size) as isize - r;
                let dc = (t % size) as isize - r;
                for (c, v) in tap_vals.iter_mut().enumerate() {
                    *v = img.get_wrapped(col as isize + dc, row as isize + dr, c);
                }
                accumulate_tap(weights, t, &tap_vals, acc);
            }
        }
    });
    Ok(Image::from_raw_unchecked(w, h, cout, data))
}

#[inline]
fn accumulate_tap<T: Real>(weights: &KernelWeights<T>, tap: usize, vals: &[T], acc: &mut [T]) {
    let cout = weights.out_channels;
    for (i, &x) in vals.iter().enumerate() {
        let row = &weights.data[(tap * weights.in_channels + i) * cout..][..cout];
        for (a, &wgt) in acc.iter_mut().zip(row) {
            *a = *a + wgt * x;
        }
    }
}

/// Parallel regular and spherical branches on the same input, summed.
pub fn fused_layer<T: Real>(
    img: &Image<T>,
    regular_weights: &KernelWeights<T>,
    sphere_weights: &KernelWeights<T>,
    grid: &SampleGrid<T>,
) -> Result<Image<T>> {
    if regular_weights.in_channels != sphere_weights.in_channels
        || regular_weights.out_channels != sphere_weights.out_channels
    {
        return dimension("regular and spherical branches must map the same channel counts");
    }
    let a = regular_conv(img, regular_weights)?;
    let b = sphere_conv(img, sphere_weights, grid)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Image::from_raw_unchecked(a.width(), a.height(), a.channels(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ErpIntrinsics, KernelPattern<f64>) {
        let intr = ErpIntrinsics::new(32, 16).unwrap();
        (intr, KernelPattern::pixel_pitch(&intr, 3).unwrap())
    }

    #[test]
    fn pattern_validation() {
        assert!(KernelPattern::new(0.1f64, 0.1, 2).is_err());
        assert!(KernelPattern::new(0.0f64, 0.1, 3).is_err());
        assert!(KernelPattern::new(0.1f64, 1.6, 3).is_err());
        assert!(KernelPattern::new(0.6f64, 0.1, 7).is_err());
        assert!(KernelPattern::new(0.1f64, 0.1, 5).is_ok());
    }

    #[test]
    fn tangent_pattern_values() {
        let k = KernelPattern::new(0.1f64, 0.1, 3).unwrap();
        let pat = tangent_pattern(&k);
        assert_eq!(pat[k.center_tap()], (0.0, 0.0));
        // east axis tap: column +1, same row
        let (x, y) = pat[5];
        assert!((x - 0.1f64.tan()).abs() < 1e-15 && y == 0.0);
        assert!((x - 0.10033).abs() < 1e-5);
        // north-east corner: row -1 (north), column +1
        let (x, y) = pat[2];
        assert!((x - 0.100_334_672_085_450_5).abs() < 1e-15);
        assert!((y - 0.1f64.tan() / 0.1f64.cos()).abs() < 1e-15);
        assert!((y - 0.10084).abs() < 1e-5);
        // north axis tap
        let (x, y) = pat[1];
        assert!(x == 0.0 && (y - 0.1f64.tan()).abs() < 1e-15);
    }

    #[test]
    fn center_tap_is_own_pixel() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        for row in 0..intr.height() {
            for col in 0..intr.width() {
                let p = grid.pixel_taps(col, row)[k.center_tap()];
                assert!((p.u - col as f64).abs() < 1e-12, "{col},{row}: {p:?}");
                assert!((p.v - row as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_offsets_depend_only_on_row() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        let w = intr.width() as f64;
        for row in [1usize, 5, 8, 13] {
            let base = grid.pixel_taps(0, row).to_vec();
            for col in 1..intr.width() {
                for (t, p) in grid.pixel_taps(col, row).iter().enumerate() {
                    let du = wrap_coord(p.u - base[t].u - col as f64 + w / 2.0, w) - w / 2.0;
                    assert!(du.abs() < 1e-9);
                    assert!((p.v - base[t].v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sample_constant_image() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        let img = Image::filled(32, 16, 2, 0.7f64);
        let s = sphere_sample(&img, &grid).unwrap();
        assert_eq!(s.channels(), 18);
        assert!(s.data().iter().all(|&v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn sample_dimension_mismatch() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        let img = Image::filled(16, 8, 1, 0.0f64);
        assert!(sphere_sample(&img, &grid).is_err());
        assert!(sphere_conv(&img, &KernelWeights::identity(3, 1), &grid).is_err());
    }

    #[test]
    fn identity_and_ones_kernels() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        let img = Image::from_fn(32, 16, 2, |c, r, ch| ((c * 7 + r * 3 + ch) % 11) as f64 / 11.0);
        let out = sphere_conv(&img, &KernelWeights::identity(3, 2), &grid).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let ones = KernelWeights::new(3, 1, 1, vec![1.0; 9]).unwrap();
        let c = Image::filled(32, 16, 1, 0.5f64);
        let out = sphere_conv(&c, &ones, &grid).unwrap();
        assert!(out.data().iter().all(|&v| (v - 4.5).abs() < 1e-12));
    }

    #[test]
    fn kernel_shape_errors() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        let img = Image::filled(32, 16, 3, 0.0f64);
        assert!(sphere_conv(&img, &KernelWeights::identity(3, 2), &grid).is_err());
        assert!(regular_conv(&img, &KernelWeights::identity(3, 2)).is_err());
        let a = KernelWeights::<f64>::zeros(3, 3, 2);
        let b = KernelWeights::<f64>::zeros(3, 3, 4);
        assert!(fused_layer(&img, &a, &b, &grid).is_err());
        assert!(KernelWeights::<f64>::new(3, 1, 1, vec![0.0; 8]).is_err());
    }

    #[test]
    fn fused_with_zero_branch() {
        let (intr, k) = small();
        let grid = sample_grid(&k, &intr);
        let img = Image::from_fn(32, 16, 1, |c, r, _| ((c * 5 + r * 9) % 13) as f64);
        let w = KernelWeights::new(3, 1, 2, (0..18).map(|i| i as f64 * 0.1 - 0.7).collect()).unwrap();
        let z = KernelWeights::zeros(3, 1, 2);
        assert_eq!(fused_layer(&img, &w, &z, &grid).unwrap(), regular_conv(&img, &w).unwrap());
        let only_sphere = fused_layer(&img, &z, &w, &grid).unwrap();
        let sphere = sphere_conv(&img, &w, &grid).unwrap();
        for (a, b) in only_sphere.data().iter().zip(sphere.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_file_roundtrip_and_errors() {
        let w = KernelWeights::new(3, 2, 1, (0..18).map(|i| i as f64 * 0.25).collect()).unwrap();
        let mut buf = Vec::new();
        w.write(&mut buf).unwrap();
        assert!(buf.starts_with(b"SPHK 3 2 1\n"));
        assert_eq!(buf.len(), 11 + 18 * 4);
        let back = KernelWeights::<f64>::read(&mut &buf[..]).unwrap();
        assert_eq!(back, w);
        assert!(KernelWeights::<f64>::read(&mut &buf[..buf.len() - 1]).is_err());
        assert!(KernelWeights::<f64>::read(&mut &b"SPHX 3 1 1\n"[..]).is_err());
        assert!(KernelWeights::<f64>::read(&mut &b"SPHK 2 1 1\n\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
