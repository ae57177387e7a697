//! Dense multi-channel raster used for images, feature maps and
//! intermediate convolution results. ERP rasters wrap horizontally and
//! clamp vertically when sampled.

use std::path::Path;

use crate::error::{dimension, domain, Result};
use crate::scalar::{wrap_coord, Real};

/// Row-major, interleaved-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return domain("image dimensions must be positive");
        }
        if data.len() != width * height * channels {
            return dimension(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("image samples must be finite");
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image by evaluating `f(col, row, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for c in 0..channels {
                    data.push(f(col, row, c));
                }
            }
        }
        Self { width, height, channels, data }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, channels: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self { width, height, channels, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize, c: usize) -> T {
        self.data[(row * self.width + col) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, c: usize, v: T) {
        self.data[(row * self.width + col) * self.channels + c] = v;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, col: usize, row: usize) -> &[T] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Sample with integer offsets, wrapping columns and clamping rows.
    #[inline]
    pub fn get_wrapped(&self, col: isize, row: isize, c: usize) -> T {
        let w = self.width as isize;
        let col = col.rem_euclid(w) as usize;
        let row = row.clamp(0, self.height as isize - 1) as usize;
        self.get(col, row, c)
    }

    /// Bilinear interpolation of every channel at continuous `(u, v)`,
    /// written into `out`. Columns wrap modulo the width; rows clamp.
    #[inline]
    pub fn sample_bilinear_into(&self, u: T, v: T, out: &mut [T]) {
        let w = self.width;
        let h = self.height;
        let u = wrap_coord(u, T::from_usize_lossy(w));
        let v = v.max(T::zero()).min(T::from_usize_lossy(h - 1));
        let u0f = u.floor();
        let v0f = v.floor();
        let fu = u - u0f;
        let fv = v - v0f;
        let u0 = u0f.to_usize().unwrap_or(0).min(w - 1);
        let v0 = v0f.to_usize().unwrap_or(0).min(h - 1);
        let u1 = (u0 + 1) % w;
        let v1 = (v0 + 1).min(h - 1);
        let one = T::one();
        let w00 = (one - fu) * (one - fv);
        let w10 = fu * (one - fv);
        let w01 = (one - fu) * fv;
        let w11 = fu * fv;
        let p00 = self.pixel(u0, v0);
        let p10 = self.pixel(u1, v0);
        let p01 = self.pixel(u0, v1);
        let p11 = self.pixel(u1, v1);
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
        }
    }

    pub fn sample_bilinear(&self, u: T, v: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels];
        self.sample_bilinear_into(u, v, &mut out);
        out
    }

    /// Rolls the image horizontally by `k` columns (positive moves content
    /// towards larger column indices).
    pub fn shift_cols(&self, k: isize) -> Self {
        let w = self.width as isize;
        Self::from_fn(self.width, self.height, self.channels, |col, row, c| {
            let src = (col as isize - k).rem_euclid(w) as usize;
            self.get(src, row, c)
        })
    }

    /// Single-channel luminance. One-channel images are returned as is;
    /// three-channel images use Rec. 601 weights; otherwise channels are averaged.
    pub fn to_gray(&self) -> Self {
        match self.channels {
            1 => self.clone(),
            3 => {
                let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
                Self::from_fn(self.width, self.height, 1, |col, row, _| {
                    let p = self.pixel(col, row);
                    wr * p[0] + wg * p[1] + wb * p[2]
                })
            }
            n => {
                let inv = T::one() / T::from_usize_lossy(n);
                Self::from_fn(self.width, self.height, 1, |col, row, _| {
                    self.pixel(col, row).iter().copied().sum::<T>() * inv
                })
            }
        }
    }

    /// Blur with a separable `[1, 2, 1] / 4` kernel (wrapping columns,
    /// clamping rows) and keep every `factor`-th pixel, repeated for each
    /// factor of two. Kept pixels are those with even indices, so pixel
    /// `(c, r)` of the result shares its spherical direction with pixel
    /// `(2c, 2r)` of the input.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !factor.is_power_of_two() {
            return domain(format!("downsample factor must be a power of two, got {factor}"));
        }
        let mut img = self.clone();
        let mut f = factor;
        while f > 1 {
            if img.width % 2 != 0 || img.height % 2 != 0 {
                return dimension(format!(
                    "image {}x{} not divisible by {factor}",
                    self.width, self.height
                ));
            }
            img = img.half();
            f /= 2;
        }
        Ok(img)
    }

    fn half(&self) -> Self {
        let quarter = T::lit(0.25);
        let two = T::lit(2.0);
        let ch = self.channels;
        let horiz = Self::from_fn(self.width, self.height, ch, |col, row, c| {
            let (col, row) = (col as isize, row as isize);
            (self.get_wrapped(col - 1, row, c) + two * self.get_wrapped(col, row, c)
                + self.get_wrapped(col + 1, row, c))
                * quarter
        });
        Self::from_fn(self.width / 2, self.height / 2, ch, |col, row, c| {
            let (col, row) = (2 * col as isize, 2 * row as isize);
            (horiz.get_wrapped(col, row - 1, c) + two * horiz.get_wrapped(col, row, c)
                + horiz.get_wrapped(col, row + 1, c))
                * quarter
        })
    }

    /// Reads an 8-bit PNG into `[0, 1]` samples (gray or RGB).
    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let dynimg = image::open(path.as_ref())?;
        let (width, height) = (dynimg.width() as usize, dynimg.height() as usize);
        let scale = T::lit(1.0 / 255.0);
        if dynimg.color().channel_count() == 1 {
            let buf = dynimg.to_luma8();
            let data = buf.into_raw().into_iter().map(|b| T::from_u8(b).unwrap() * scale).collect();
            Ok(Self::from_raw_unchecked(width, height, 1, data))
        } else {
            let buf = dynimg.to_rgb8();
            let data = buf.into_raw().into_iter().map(|b| T::from_u8(b).unwrap() * scale).collect();
            Ok(Self::from_raw_unchecked(width, height, 3, data))
        }
    }

    /// Writes a 1- or 3-channel image with samples in `[0, 1]` as 8-bit PNG.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize_u8(v)).collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            n => return dimension(format!("PNG export supports 1 or 3 channels, got {n}")),
        };
        image::save_buffer(
            path.as_ref(),
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
        )?;
        Ok(())
    }
}

/// `[0, 1]` sample to byte with rounding and saturation.
#[inline]
pub fn quantize_u8<T: Real>(v: T) -> u8 {
    let x = (v.max(T::zero()).min(T::one()) * T::lit(255.0)).round();
    x.to_u8().unwrap_or(255)
}
