//! Spherical sweeping: radial depth hypotheses, feature warping, cost
//! volume assembly, reduction to a probability volume and depth
//! extraction.
//!
//! Depth is radial everywhere: the distance from the camera center to the
//! 3D point, so each hypothesis is a sphere around the reference camera.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::erp_camera::{
    cartesian_to_spherical, direction, project, transform_point, unproject, ErpIntrinsics, PixelCoord,
    Pose,
};
use crate::error::{dimension, domain, Result};
use crate::features::{FeatureMap, MlpWeights};
use crate::pfm;
use crate::scalar::Real;

/// Points closer than this to the source camera center cannot be
/// projected (meters).
pub const DEGENERATE_RADIUS: f64 = 1e-9;

/// Ascending, log-uniformly spaced radial distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypotheses<T> {
    values: Vec<T>,
}

impl<T: Real> DepthHypotheses<T> {
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// Constant ratio between consecutive hypotheses.
    pub fn ratio(&self) -> T {
        (self.max().ln() - self.min().ln()).exp().powf(T::one() / T::from_usize_lossy(self.len() - 1))
    }

    /// Gap between neighbouring hypotheses around `depth`, in meters.
    pub fn spacing_at(&self, depth: T) -> T {
        depth * (self.ratio() - T::one())
    }
}

/// `count` radial distances from `d_min` to `d_max`, uniform in log depth.
pub fn make_hypotheses<T: Real>(d_min: T, d_max: T, count: usize) -> Result<DepthHypotheses<T>> {
    if !(d_min > T::zero()) || !(d_max > d_min) || !d_max.is_finite() {
        return domain(format!("need 0 < d_min < d_max, got {d_min}, {d_max}"));
    }
    if count < 2 {
        return domain(format!("need at least two hypotheses, got {count}"));
    }
    let (lo, hi) = (d_min.ln(), d_max.ln());
    let last = T::from_usize_lossy(count - 1);
    let mut values: Vec<T> = (0..count)
        .map(|i| (lo + T::from_usize_lossy(i) / last * (hi - lo)).exp())
        .collect();
    values[0] = d_min;
    values[count - 1] = d_max;
    Ok(DepthHypotheses { values })
}

/// Radial depth raster with an explicit validity mask. Invalid pixels hold
/// NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Real> DepthMap<T> {
    /// Builds a map from raw values; non-finite or non-positive entries are
    /// marked invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return dimension(format!(
                "depth data length {} does not match {width}x{height}",
                values.len()
            ));
        }
        let valid: Vec<bool> = values.iter().map(|&v| v.is_finite() && v > T::zero()).collect();
        let data = values
            .into_iter()
            .zip(&valid)
            .map(|(v, &ok)| if ok { v } else { T::nan() })
            .collect();
        Ok(Self { width, height, data, valid })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<T>) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(col, row).unwrap_or_else(T::nan));
            }
        }
        Self::from_values(width, height, values).expect("sizes agree")
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
    pub fn intrinsics(&self) -> Result<ErpIntrinsics> {
        ErpIntrinsics::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<T> {
        let i = row * self.width + col;
        if self.valid[i] {
            Some(self.data[i])
        } else {
            None
        }
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.width + col]
    }

    /// Raw values, NaN where invalid.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Multiplies every valid depth by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self::from_values(self.width, self.height, self.data.iter().map(|&v| v * s).collect())
            .expect("sizes agree")
    }

    /// Keeps pixels whose indices are multiples of `factor`, which for ERP
    /// rasters preserves pixel-center directions exactly.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return dimension(format!(
                "cannot subsample {}x{} by {factor}",
                self.width, self.height
            ));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        Ok(Self::from_fn(w, h, |c, r| self.get(c * factor, r * factor)))
    }

    pub fn write_pfm<W: Write>(&self, w: W) -> Result<()> {
        let vals: Vec<f32> = self.data.iter().map(|v| v.as_f32()).collect();
        pfm::write_pfm(w, self.width, self.height, &vals)
    }

    pub fn read_pfm<R: BufRead>(r: R) -> Result<Self> {
        let (w, h, vals) = pfm::read_pfm(r)?;
        Self::from_values(w, h, vals.into_iter().map(|v| T::lit(v as f64)).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_pfm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_pfm(std::io::BufReader::new(f))
    }
}

/// Source pixel hit by reference pixel `p_r` at radial depth `r`, or `None`
/// when the 3D point coincides with the source camera center. Identical
/// poses map every pixel to itself.
#[inline]
pub fn warp_pixel<T: Real>(
    p_r: PixelCoord<T>,
    r: T,
    ref_pose: &Pose<T>,
    src_pose: &Pose<T>,
    intr: &ErpIntrinsics,
) -> Result<Option<PixelCoord<T>>> {
    if !(r > T::zero()) {
        return domain(format!("hypothesis depth must be positive, got {r}"));
    }
    let s = unproject(p_r, intr)?;
    if ref_pose == src_pose {
        return Ok(Some(p_r));
    }
    Ok(warp_direction(direction(s), r, ref_pose, src_pose, intr))
}

#[inline]
fn warp_direction<T: Real>(
    dir: crate::geometry::Point3<T>,
    r: T,
    ref_pose: &Pose<T>,
    src_pose: &Pose<T>,
    intr: &ErpIntrinsics,
) -> Option<PixelCoord<T>> {
    let p_src = transform_point(dir * r, ref_pose, src_pose);
    if !(p_src.norm() > T::lit(DEGENERATE_RADIUS)) {
        return None;
    }
    let (s, _) = cartesian_to_spherical(p_src).ok()?;
    Some(project(s, intr))
}

/// Bilinearly sampled source feature at the warped location of `p_r`, and
/// whether the warp was valid. Invalid warps return a zero vector.
pub fn warp_feature<T: Real>(
    p_r: PixelCoord<T>,
    r: T,
    ref_pose: &Pose<T>,
    src_pose: &Pose<T>,
    intr: &ErpIntrinsics,
    src_feat: &FeatureMap<T>,
) -> Result<(Vec<T>, bool)> {
    let mut out = vec![T::zero(); src_feat.dim()];
    match warp_pixel(p_r, r, ref_pose, src_pose, intr)? {
        Some(p) => {
            src_feat.as_image().sample_bilinear_into(p.u, p.v, &mut out);
            Ok((out, true))
        }
        None => Ok((out, false)),
    }
}

/// A frame taking part in the sweep: its features and world-to-camera pose.
#[derive(Debug, Clone, Copy)]
pub struct View<'a, T> {
    pub features: &'a FeatureMap<T>,
    pub pose: Pose<T>,
}

/// `C x D x H x W` matching volume with a `D x H x W` validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume<T> {
    channels: usize,
    depth: usize,
    height: usize,
    width: usize,
    sources: usize,
    feature_dim: usize,
    data: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Real> CostVolume<T> {
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.channels, self.depth, self.height, self.width)
    }

    #[inline]
    pub fn sources(&self) -> usize {
        self.sources
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, row: usize, col: usize) -> T {
        self.data[((c * self.depth + d) * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, d: usize, row: usize, col: usize) -> bool {
        self.valid[(d * self.height + row) * self.width + col]
    }

    /// Gathers the cost vector of one `(hypothesis, pixel)` cell.
    pub fn vector(&self, d: usize, row: usize, col: usize) -> Vec<T> {
        (0..self.channels).map(|c| self.get(c, d, row, col)).collect()
    }
}

/// Channel count of a cost volume over `n` sources with `f`-dim features.
#[inline]
pub fn cost_channels(n: usize, f: usize) -> usize {
    (n + 1) * f + n
}

struct SweepSetup<T> {
    intr: ErpIntrinsics,
    dim: usize,
    channels: usize,
    dirs: Vec<crate::geometry::Point3<T>>,
}

fn setup<T: Real>(reference: &View<'_, T>, sources: &[View<'_, T>]) -> Result<SweepSetup<T>> {
    if sources.is_empty() {
        return domain("sweep needs at least one source view");
    }
    let f = reference.features;
    for (i, s) in sources.iter().enumerate() {
        let g = s.features;
        if g.dim() != f.dim() || g.width() != f.width() || g.height() != f.height() {
            return dimension(format!(
                "source {i} features are {}x{}x{}, reference {}x{}x{}",
                g.width(),
                g.height(),
                g.dim(),
                f.width(),
                f.height(),
                f.dim()
            ));
        }
    }
    let intr = f.intrinsics()?;
    let (w, h) = (intr.width(), intr.height());
    let mut dirs = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let p = PixelCoord::new(T::from_usize_lossy(col), T::from_usize_lossy(row));
            dirs.push(direction(unproject(p, &intr)?));
        }
    }
    Ok(SweepSetup {
        intr,
        dim: f.dim(),
        channels: cost_channels(sources.len(), f.dim()),
        dirs,
    })
}

/// Fills `out` (length `C`) with `[f_r, f_s1..f_sn, f_r.f_s1..f_r.f_sn]`
/// for one pixel and hypothesis. Returns whether every warp was valid.
#[inline]
fn fill_cost_vector<T: Real>(
    setup: &SweepSetup<T>,
    reference: &View<'_, T>,
    sources: &[View<'_, T>],
    col: usize,
    row: usize,
    r: T,
    out: &mut [T],
) -> bool {
    let f = setup.dim;
    let n = sources.len();
    let fr = reference.features.descriptor(col, row);
    out[..f].copy_from_slice(fr);
    let dir = setup.dirs[row * setup.intr.width() + col];
    let mut all_valid = true;
    for (i, src) in sources.iter().enumerate() {
        let slot = (i + 1) * f;
        let dot_slot = (n + 1) * f + i;
        // a camera sees itself at the same pixel for every depth
        let warped = if src.pose == reference.pose {
            Some(PixelCoord::new(T::from_usize_lossy(col), T::from_usize_lossy(row)))
        } else {
            warp_direction(dir, r, &reference.pose, &src.pose, &setup.intr)
        };
        match warped {
            Some(p) => {
                let (head, tail) = out.split_at_mut(slot);
                let fs = &mut tail[..f];
                src.features.as_image().sample_bilinear_into(p.u, p.v, fs);
                let mut dot = T::zero();
                for (a, b) in head[..f].iter().zip(fs.iter()) {
                    dot = dot + *a * *b;
                }
                out[dot_slot] = dot;
            }
            None => {
                for v in &mut out[slot..slot + f] {
                    *v = T::zero();
                }
                out[dot_slot] = T::zero();
                all_valid = false;
            }
        }
    }
    all_valid
}

/// Assembles the full `C x D x H x W` cost volume.
pub fn build_cost_volume<T: Real>(
    reference: &View<'_, T>,
    sources: &[View<'_, T>],
    hyps: &DepthHypotheses<T>,
) -> Result<CostVolume<T>> {
    let s = setup(reference, sources)?;
    let (w, h, d, c) = (s.intr.width(), s.intr.height(), hyps.len(), s.channels);
    // pixel-major scratch, scattered into channel-major layout afterwards
    let cells: Vec<(Vec<T>, Vec<bool>)> = (0..w * h)
        .into_par_iter()
        .map(|pix| {
            let (row, col) = (pix / w, pix % w);
            let mut vecs = vec![T::zero(); d * c];
            let mut valid = vec![false; d];
            for (k, &r) in hyps.values().iter().enumerate() {
                valid[k] = fill_cost_vector(&s, reference, sources, col, row, r, &mut vecs[k * c..(k + 1) * c]);
            }
            (vecs, valid)
        })
        .collect();
    let mut data = vec![T::zero(); c * d * h * w];
    let mut valid = vec![false; d * h * w];
    for (pix, (vecs, ok)) in cells.into_iter().enumerate() {
        for k in 0..d {
            valid[k * h * w + pix] = ok[k];
            for ch in 0..c {
                data[(ch * d + k) * h * w + pix] = vecs[k * c + ch];
            }
        }
    }
    Ok(CostVolume {
        channels: c,
        depth: d,
        height: h,
        width: w,
        sources: sources.len(),
        feature_dim: s.dim,
        data,
        valid,
    })
}

/// How cost vectors are turned into per-hypothesis scores.
#[derive(Debug, Clone, Copy)]
pub enum Reducer<'a, T> {
    /// Mean of the `n` dot-product channels.
    Classical,
    /// Learned per-cell MLP over the full cost vector.
    Mlp(&'a MlpWeights<T>),
}

struct Scorer<'a, T> {
    reducer: Reducer<'a, T>,
    channels: usize,
    dots_start: usize,
    n: usize,
}

impl<'a, T: Real> Scorer<'a, T> {
    fn new(reducer: Reducer<'a, T>, n: usize, f: usize) -> Result<Self> {
        let channels = cost_channels(n, f);
        if let Reducer::Mlp(m) = reducer {
            if m.input_dim() != channels {
                return dimension(format!(
                    "MLP expects {} inputs but the cost volume has {channels} channels",
                    m.input_dim()
                ));
            }
        }
        Ok(Self { reducer, channels, dots_start: (n + 1) * f, n })
    }

    #[inline]
    fn score(&self, v: &[T], a: &mut Vec<T>, b: &mut Vec<T>) -> T {
        match self.reducer {
            Reducer::Classical => {
                let mut s = T::zero();
                for &x in &v[self.dots_start..self.channels] {
                    s = s + x;
                }
                s / T::from_usize_lossy(self.n)
            }
            Reducer::Mlp(m) => m.forward_with(v, a, b),
        }
    }

    fn scratch(&self) -> (Vec<T>, Vec<T>) {
        match self.reducer {
            Reducer::Classical => (Vec::new(), Vec::new()),
            Reducer::Mlp(m) => m.scratch(),
        }
    }
}

/// In-place softmax with max subtraction (temperature 1).
#[inline]
pub fn softmax_in_place<T: Real>(scores: &mut [T]) {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for s in scores.iter_mut() {
        *s = (*s - m).exp();
        sum = sum + *s;
    }
    for s in scores.iter_mut() {
        *s = *s / sum;
    }
}

/// Per-pixel distribution over the `D` hypotheses, stored `D x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume<T> {
    depth: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> ProbabilityVolume<T> {
    /// Wraps raw `D x H x W` probabilities, checking normalization.
    pub fn new(depth: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != depth * height * width {
            return dimension("probability volume size mismatch");
        }
        let tol = T::lit(1e-5);
        for pix in 0..height * width {
            let mut sum = T::zero();
            for k in 0..depth {
                let p = data[k * height * width + pix];
                if !(p >= T::zero()) {
                    return domain("probabilities must be non-negative");
                }
                sum = sum + p;
            }
            if (sum - T::one()).abs() > tol {
                return domain(format!("pixel {pix}: probabilities sum to {sum}"));
            }
        }
        Ok(Self { depth, height, width, data })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    #[inline]
    pub fn get(&self, d: usize, row: usize, col: usize) -> T {
        self.data[(d * self.height + row) * self.width + col]
    }

    /// Distribution of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> Vec<T> {
        (0..self.depth).map(|d| self.get(d, row, col)).collect()
    }

    /// Largest probability of each pixel, row-major.
    pub fn confidence(&self) -> Vec<T> {
        (0..self.height * self.width)
            .map(|pix| {
                (0..self.depth)
                    .map(|k| self.data[k * self.height * self.width + pix])
                    .fold(T::zero(), T::max)
            })
            .collect()
    }
}

/// Scores every cell with `reducer` and normalizes per pixel with softmax.
pub fn reduce_volume<T: Real>(cv: &CostVolume<T>, reducer: Reducer<'_, T>) -> Result<ProbabilityVolume<T>> {
    let scorer = Scorer::new(reducer, cv.sources, cv.feature_dim)?;
    let (c, d, h, w) = cv.dims();
    let per_pixel: Vec<Vec<T>> = (0..h * w)
        .into_par_iter()
        .map(|pix| {
            let (row, col) = (pix / w, pix % w);
            let (mut a, mut b) = scorer.scratch();
            let mut v = vec![T::zero(); c];
            let mut scores = vec![T::zero(); d];
            for (k, s) in scores.iter_mut().enumerate() {
                for (ch, slot) in v.iter_mut().enumerate() {
                    *slot = cv.get(ch, k, row, col);
                }
                *s = scorer.score(&v, &mut a, &mut b);
            }
            softmax_in_place(&mut scores);
            scores
        })
        .collect();
    let mut data = vec![T::zero(); d * h * w];
    for (pix, probs) in per_pixel.into_iter().enumerate() {
        for (k, p) in probs.into_iter().enumerate() {
            data[k * h * w + pix] = p;
        }
    }
    Ok(ProbabilityVolume { depth: d, height: h, width: w, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractMode {
    /// Most probable hypothesis; ties resolve to the nearer depth.
    Argmax,
    /// Expectation in log depth: `exp(sum p_i ln d_i)`.
    Soft,
}

#[inline]
fn depth_from_distribution<T: Real>(probs: &[T], hyps: &DepthHypotheses<T>, mode: ExtractMode) -> T {
    match mode {
        ExtractMode::Argmax => {
            let mut best = 0;
            for (k, &p) in probs.iter().enumerate().skip(1) {
                if p > probs[best] {
                    best = k;
                }
            }
            hyps.values()[best]
        }
        ExtractMode::Soft => {
            let mut acc = T::zero();
            for (&p, &dv) in probs.iter().zip(hyps.values()) {
                acc = acc + p * dv.ln();
            }
            acc.exp().max(hyps.min()).min(hyps.max())
        }
    }
}

/// Converts a probability volume into a radial depth map.
pub fn extract_depth<T: Real>(
    pv: &ProbabilityVolume<T>,
    hyps: &DepthHypotheses<T>,
    mode: ExtractMode,
    median: bool,
) -> Result<DepthMap<T>> {
    let (d, h, w) = pv.dims();
    if d != hyps.len() {
        return dimension(format!("volume has {d} hypotheses, schedule has {}", hyps.len()));
    }
    let values: Vec<T> = (0..h * w)
        .into_par_iter()
        .map(|pix| {
            let probs: Vec<T> = (0..d).map(|k| pv.data[k * h * w + pix]).collect();
            depth_from_distribution(&probs, hyps, mode)
        })
        .collect();
    let map = DepthMap::from_values(w, h, values)?;
    Ok(if median { median_filter3(&map) } else { map })
}

/// 3x3 median over valid neighbours (columns wrap, rows stop at the
/// border). With an even number of samples the lower median is taken.
pub fn median_filter3<T: Real>(map: &DepthMap<T>) -> DepthMap<T> {
    let (w, h) = (map.width, map.height);
    let values: Vec<T> = (0..w * h)
        .into_par_iter()
        .map(|pix| {
            let (row, col) = (pix / w, pix % w);
            if !map.valid[pix] {
                return T::nan();
            }
            let mut win: Vec<T> = Vec::with_capacity(9);
            for dr in -1isize..=1 {
                let rr = row as isize + dr;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for dc in -1isize..=1 {
                    let cc = (col as isize + dc).rem_euclid(w as isize) as usize;
                    if let Some(v) = map.get(cc, rr as usize) {
                        win.push(v);
                    }
                }
            }
            win.sort_by(|a, b| a.partial_cmp(b).expect("finite depths"));
            win[(win.len() - 1) / 2]
        })
        .collect();
    DepthMap::from_values(w, h, values).expect("sizes agree")
}

/// Depth map and per-pixel peak probability produced by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<T> {
    pub depth: DepthMap<T>,
    pub confidence: Vec<T>,
}

/// Build, reduce and extract in one pass without materializing the cost
/// volume. Produces results identical to running [`build_cost_volume`],
/// [`reduce_volume`] and [`extract_depth`] in sequence.
pub fn sweep_depth<T: Real>(
    reference: &View<'_, T>,
    sources: &[View<'_, T>],
    hyps: &DepthHypotheses<T>,
    reducer: Reducer<'_, T>,
    mode: ExtractMode,
    median: bool,
) -> Result<SweepResult<T>> {
    let s = setup(reference, sources)?;
    let scorer = Scorer::new(reducer, sources.len(), s.dim)?;
    let (w, h, c) = (s.intr.width(), s.intr.height(), s.channels);
    let per_pixel: Vec<(T, T)> = (0..w * h)
        .into_par_iter()
        .map(|pix| {
            let (row, col) = (pix / w, pix % w);
            let (mut a, mut b) = scorer.scratch();
            let mut v = vec![T::zero(); c];
            let mut scores: Vec<T> = hyps
                .values()
                .iter()
                .map(|&r| {
                    fill_cost_vector(&s, reference, sources, col, row, r, &mut v);
                    scorer.score(&v, &mut a, &mut b)
                })
                .collect();
            softmax_in_place(&mut scores);
            let conf = scores.iter().copied().fold(T::zero(), T::max);
            (depth_from_distribution(&scores, hyps, mode), conf)
        })
        .collect();
    let (values, confidence): (Vec<T>, Vec<T>) = per_pixel.into_iter().unzip();
    let map = DepthMap::from_values(w, h, values)?;
    let depth = if median { median_filter3(&map) } else { map };
    Ok(SweepResult { depth, confidence })
}

/// Distance between two camera centers.
pub fn baseline<T: Real>(a: &Pose<T>, b: &Pose<T>) -> T {
    a.center().distance(b.center())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Activation, MlpLayer};
    use crate::geometry::Point3;
    use crate::image::Image;

    #[test]
    fn hypotheses_examples() {
        let h = make_hypotheses(0.25f64, 8.0, 64).unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h.values()[0], 0.25);
        assert_eq!(h.values()[63], 8.0);
        let h = make_hypotheses(0.25f64, 8.0, 3).unwrap();
        assert!((h.values()[1] - 2f64.sqrt()).abs() < 1e-15);
        let h = make_hypotheses(1.0f64, 1e3, 4).unwrap();
        for (a, b) in h.values().iter().zip([1.0, 10.0, 100.0, 1000.0]) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn hypotheses_errors() {
        assert!(make_hypotheses(0.0f64, 8.0, 4).is_err());
        assert!(make_hypotheses(2.0f64, 1.0, 4).is_err());
        assert!(make_hypotheses(1.0f64, 2.0, 1).is_err());
    }

    #[test]
    fn identity_warp_is_identity() {
        let intr = ErpIntrinsics::new(64, 32).unwrap();
        let pose = Pose::from_center_ypr(Point3::new(0.3, -0.1, 0.2), 0.7, 0.1, -0.2);
        for &(u, v) in &[(10.0f64, 5.0f64), (0.0, 16.0), (63.0, 30.0), (32.0, 16.0)] {
            for &r in &[0.3, 1.0, 7.5] {
                let p = warp_pixel(PixelCoord::new(u, v), r, &pose, &pose, &intr).unwrap().unwrap();
                let du = (p.u - u).abs().min(64.0 - (p.u - u).abs());
                assert!(du < 1e-9 && (p.v - v).abs() < 1e-9, "{u},{v} -> {p:?}");
            }
        }
    }

    #[test]
    fn warp_to_source_center_is_invalid() {
        let intr = ErpIntrinsics::new(64, 32).unwrap();
        let reference = Pose::identity();
        // source camera sits 2 m along the optical axis of the reference
        let src = Pose::from_center_ypr(Point3::new(0.0, 0.0, 2.0), 0.0, 0.0, 0.0);
        let feat = FeatureMap::new(Image::filled(64, 32, 2, 1.0f64), 1).unwrap();
        let (v, ok) = warp_feature(PixelCoord::new(32.0, 16.0), 2.0, &reference, &src, &intr, &feat).unwrap();
        assert!(!ok);
        assert_eq!(v, vec![0.0, 0.0]);
        let (_, ok) = warp_feature(PixelCoord::new(32.0, 16.0), 1.0, &reference, &src, &intr, &feat).unwrap();
        assert!(ok);
        assert!(warp_pixel(PixelCoord::new(32.0, 16.0), 0.0, &reference, &src, &intr).is_err());
    }

    fn feat(w: usize, h: usize, dim: usize, seed: usize) -> FeatureMap<f64> {
        FeatureMap::new(
            Image::from_fn(w, h, dim, |c, r, k| (((c * 31 + r * 17 + k * 7 + seed * 13) % 23) as f64 - 11.0) / 11.0),
            1,
        )
        .unwrap()
    }

    #[test]
    fn channel_count_and_identity_dots() {
        assert_eq!(cost_channels(2, 16), 50);
        let f = feat(16, 8, 3, 0);
        let reference = View { features: &f, pose: Pose::identity() };
        let sources = [reference, reference];
        let hyps = make_hypotheses(0.5, 4.0, 4).unwrap();
        let cv = build_cost_volume(&reference, &sources, &hyps).unwrap();
        assert_eq!(cv.dims(), (cost_channels(2, 3), 4, 8, 16));
        for d in 0..4 {
            for row in 0..8 {
                for col in 0..16 {
                    let fr = f.descriptor(col, row);
                    let n2: f64 = fr.iter().map(|x| x * x).sum();
                    assert!((cv.get(9, d, row, col) - n2).abs() < 1e-12);
                    assert!((cv.get(10, d, row, col) - n2).abs() < 1e-12);
                    assert!(cv.is_valid(d, row, col));
                }
            }
        }
    }

    #[test]
    fn mismatched_features_rejected() {
        let a = feat(16, 8, 3, 0);
        let b = feat(16, 8, 4, 0);
        let hyps = make_hypotheses(0.5, 4.0, 4).unwrap();
        let r = View { features: &a, pose: Pose::identity() };
        let s = View { features: &b, pose: Pose::identity() };
        assert!(build_cost_volume(&r, &[s], &hyps).is_err());
        assert!(build_cost_volume(&r, &[], &hyps).is_err());
    }

    #[test]
    fn softmax_cases() {
        let mut s = vec![0.3f64; 5];
        softmax_in_place(&mut s);
        assert!(s.iter().all(|&p| (p - 0.2).abs() < 1e-15));
        let mut s = vec![0.0f64, 60.0, 0.0];
        softmax_in_place(&mut s);
        assert!((s[1] - 1.0).abs() < 1e-15 && s[0] < 1e-25);
    }

    #[test]
    fn extraction_modes() {
        let hyps = make_hypotheses(0.5f64, 8.0, 5).unwrap();
        let delta = |j: usize| {
            let mut data = vec![0.0; 5 * 2];
            data[j * 2] = 1.0;
            data[j * 2 + 1] = 1.0;
            ProbabilityVolume::new(5, 1, 2, data).unwrap()
        };
        for j in 0..5 {
            for mode in [ExtractMode::Argmax, ExtractMode::Soft] {
                let d = extract_depth(&delta(j), &hyps, mode, false).unwrap();
                assert!((d.get(0, 0).unwrap() - hyps.values()[j]).abs() < 1e-12);
            }
        }
        let uniform = ProbabilityVolume::new(5, 1, 2, vec![0.2; 10]).unwrap();
        let d = extract_depth(&uniform, &hyps, ExtractMode::Soft, false).unwrap();
        assert!((d.get(1, 0).unwrap() - 2.0).abs() < 1e-12); // sqrt(0.5 * 8)
        let d = extract_depth(&uniform, &hyps, ExtractMode::Argmax, false).unwrap();
        assert_eq!(d.get(1, 0).unwrap(), 0.5);
        assert!(ProbabilityVolume::new(5, 1, 2, vec![0.3; 10]).is_err());
        let h3 = make_hypotheses(0.5f64, 8.0, 3).unwrap();
        assert!(extract_depth(&uniform, &h3, ExtractMode::Soft, false).is_err());
    }

    #[test]
    fn median_filter_removes_spike() {
        let mut vals = vec![2.0f64; 8 * 4];
        vals[8 + 3] = 7.0;
        vals[2 * 8 + 5] = f64::NAN;
        let m = median_filter3(&DepthMap::from_values(8, 4, vals).unwrap());
        assert_eq!(m.get(3, 1), Some(2.0));
        assert_eq!(m.get(5, 2), None);
        assert_eq!(m.valid_count(), 31);
    }

    #[test]
    fn mlp_reducer_dimension_check() {
        let f = feat(16, 8, 3, 0);
        let v = View { features: &f, pose: Pose::identity() };
        let hyps = make_hypotheses(0.5, 4.0, 3).unwrap();
        let cv = build_cost_volume(&v, &[v], &hyps).unwrap();
        let bad = MlpWeights::<f64>::mean(5).unwrap();
        assert!(reduce_volume(&cv, Reducer::Mlp(&bad)).is_err());
        let good = MlpWeights::new(vec![
            MlpLayer { rows: 2, cols: 7, activation: Activation::Relu, weights: vec![0.1; 14], bias: vec![0.0; 2] },
            MlpLayer { rows: 1, cols: 2, activation: Activation::Linear, weights: vec![1.0, -1.0], bias: vec![0.5] },
        ])
        .unwrap();
        let pv = reduce_volume(&cv, Reducer::Mlp(&good)).unwrap();
        assert_eq!(pv.dims(), (3, 8, 16));
    }

    #[test]
    fn depth_map_validity_and_subsample() {
        let d = DepthMap::from_values(4, 2, vec![1.0f64, -1.0, f64::NAN, 2.0, 0.0, 3.0, 4.0, f64::INFINITY]).unwrap();
        assert_eq!(d.valid_count(), 4);
        assert_eq!(d.get(1, 0), None);
        let s = d.subsample(2).unwrap();
        assert_eq!((s.width(), s.height()), (2, 1));
        assert_eq!(s.get(0, 0), Some(1.0));
        assert_eq!(s.get(1, 0), None);
        assert!(d.subsample(3).is_err());
        let mut buf = Vec::new();
        d.write_pfm(&mut buf).unwrap();
        let back = DepthMap::<f64>::read_pfm(&buf[..]).unwrap();
        assert_eq!(back.valid_count(), 4);
        assert_eq!(back.get(3, 0), Some(2.0));
    }
}
