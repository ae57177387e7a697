//! Depth and mesh evaluation metrics and the supervision loss terms.
//!
//! Inputs are in meters; reported distances are in centimeters and ratios
//! in percent. Accumulation happens in `f64` and in a fixed order, so
//! results do not depend on the thread count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::erp_camera::{cartesian_to_spherical, direction, project, Pose};
use crate::error::{dimension, domain, Error, Result};
use crate::geometry::Point3;
use crate::mesh::TriangleMesh;
use crate::scalar::Real;
use crate::sweep::{DepthMap, DEGENERATE_RADIUS};

/// Ratio threshold for the δ₁ accuracy.
pub const DELTA1_THRESHOLD: f64 = 1.25;
/// Default F-score distance threshold.
pub const DEFAULT_FSCORE_THRESHOLD_CM: f64 = 5.0;
/// Default number of surface samples per mesh.
pub const DEFAULT_MESH_SAMPLES: usize = 200_000;
/// Source pixels whose observed depth is shorter than the warped depth by
/// more than this (meters) are treated as occluded by the multi-view term.
pub const MV_OCCLUSION_M: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub mae_cm: f64,
    pub mre_pct: f64,
    pub rmse_cm: f64,
    pub delta1_pct: f64,
}

/// Error statistics over pixels valid in both maps.
pub fn depth_metrics<T: Real>(pred: &DepthMap<T>, gt: &DepthMap<T>) -> Result<DepthMetrics> {
    same_dims(pred, gt)?;
    let (mut n, mut abs, mut rel, mut sq, mut good) = (0usize, 0.0, 0.0, 0.0, 0usize);
    for (p, g) in joint_valid(pred, gt) {
        let e = p - g;
        n += 1;
        abs += e.abs();
        rel += e.abs() / g;
        sq += e * e;
        if (p / g).max(g / p) < DELTA1_THRESHOLD {
            good += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no pixel is valid in both depth maps".into()));
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        mae_cm: 100.0 * abs / nf,
        mre_pct: 100.0 * rel / nf,
        rmse_cm: 100.0 * (sq / nf).sqrt(),
        delta1_pct: 100.0 * good as f64 / nf,
    })
}

fn same_dims<T: Real>(a: &DepthMap<T>, b: &DepthMap<T>) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return dimension(format!(
            "depth maps are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    Ok(())
}

fn joint_valid<'a, T: Real>(a: &'a DepthMap<T>, b: &'a DepthMap<T>) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.values()
        .iter()
        .zip(b.values())
        .filter(|(p, g)| p.is_finite() && g.is_finite())
        .map(|(p, g)| (p.as_f64(), g.as_f64()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshMetrics {
    pub comp_cm: f64,
    pub acc_cm: f64,
    pub chamfer_cm: f64,
    pub fscore_pct: f64,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub threshold_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshEvalConfig {
    pub threshold_cm: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MeshEvalConfig {
    fn default() -> Self {
        Self { threshold_cm: DEFAULT_FSCORE_THRESHOLD_CM, samples: DEFAULT_MESH_SAMPLES, seed: 0 }
    }
}

/// Area-weighted uniform surface samples. Identical meshes and seeds give
/// identical samples.
pub fn sample_surface<T: Real>(mesh: &TriangleMesh<T>, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t).as_f64()).collect();
    let pick = WeightedIndex::new(&areas)
        .map_err(|e| Error::Empty(format!("mesh has no surface to sample: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let [a, b, c] = mesh.corners(pick.sample(&mut rng)).map(|p| p.to_array().map(T::as_f64));
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        out.push([0, 1, 2].map(|i| wa * a[i] + wb * b[i] + wc * c[i]));
    }
    Ok(out)
}

/// Nearest-neighbour distance from every query point to `cloud` (R*-tree
/// index), in query order.
pub fn nearest_distances(cloud: &[[f64; 3]], queries: &[[f64; 3]]) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(Error::Empty("empty reference point set".into()));
    }
    let tree = RTree::bulk_load(cloud.to_vec());
    Ok(queries
        .par_iter()
        .map(|q| {
            let p = tree.nearest_neighbor(q).expect("non-empty tree");
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
        })
        .collect())
}

/// Accuracy (pred to gt), completeness (gt to pred), their mean and the
/// F-score, from point-to-point distances between surface samples.
pub fn mesh_metrics<T: Real>(pred: &TriangleMesh<T>, gt: &TriangleMesh<T>, cfg: &MeshEvalConfig) -> Result<MeshMetrics> {
    if !(cfg.threshold_cm > 0.0) {
        return domain(format!("F-score threshold must be positive, got {}", cfg.threshold_cm));
    }
    if cfg.samples == 0 {
        return domain("need at least one surface sample");
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("mesh metrics need two non-empty meshes".into()));
    }
    let ps = sample_surface(pred, cfg.samples, cfg.seed)?;
    let gs = sample_surface(gt, cfg.samples, cfg.seed)?;
    let to_gt = nearest_distances(&gs, &ps)?;
    let to_pred = nearest_distances(&ps, &gs)?;
    let thr = cfg.threshold_cm / 100.0;
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let frac = |d: &[f64]| d.iter().filter(|&&x| x < thr).count() as f64 / d.len() as f64;
    let (acc, comp) = (100.0 * mean(&to_gt), 100.0 * mean(&to_pred));
    let (p, r) = (frac(&to_gt), frac(&to_pred));
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Ok(MeshMetrics {
        comp_cm: comp,
        acc_cm: acc,
        chamfer_cm: (comp + acc) / 2.0,
        fscore_pct: 100.0 * f,
        precision_pct: 100.0 * p,
        recall_pct: 100.0 * r,
        threshold_cm: cfg.threshold_cm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub grad: f64,
    pub normals: f64,
    pub mv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { grad: 1.0, normals: 1.0, mv: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub depth: f64,
    pub grad: f64,
    pub normals: f64,
    pub mv: f64,
    pub total: f64,
    pub weights: LossWeights,
}

/// Ground-truth depth of a source frame and its world-to-camera pose.
#[derive(Debug, Clone, Copy)]
pub struct SourceDepth<'a, T> {
    pub depth: &'a DepthMap<T>,
    pub pose: Pose<T>,
}

/// Loss terms for a predicted depth pyramid against its ground truth.
///
/// `pred[s]` and `gt[s]` must have equal sizes; scale 0 is the finest.
/// `depth` and `grad` are averaged over scales, `normals` and `mv` use the
/// finest scale. Terms with nothing to compare are 0.
pub fn losses<T: Real>(
    pred: &[DepthMap<T>],
    gt: &[DepthMap<T>],
    ref_pose: &Pose<T>,
    sources: &[SourceDepth<'_, T>],
    weights: LossWeights,
) -> Result<LossBreakdown> {
    if pred.is_empty() || pred.len() != gt.len() {
        return dimension(format!("{} prediction scales vs {} ground-truth scales", pred.len(), gt.len()));
    }
    for (p, g) in pred.iter().zip(gt) {
        same_dims(p, g)?;
    }
    let scales = pred.len() as f64;
    let depth = pred.iter().zip(gt).map(|(p, g)| log_l1(p, g)).sum::<f64>() / scales;
    let grad = pred.iter().zip(gt).map(|(p, g)| grad_l1(p, g)).sum::<f64>() / scales;
    let normals = normal_loss(&pred[0], &gt[0])?;
    let mv = multiview_loss(&pred[0], ref_pose, sources)?;
    let total = depth + weights.grad * grad + weights.normals * normals + weights.mv * mv;
    Ok(LossBreakdown { depth, grad, normals, mv, total, weights })
}

fn mean_or_zero(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn log_l1<T: Real>(p: &DepthMap<T>, g: &DepthMap<T>) -> f64 {
    let (mut s, mut n) = (0.0, 0);
    for (a, b) in joint_valid(p, g) {
        s += (a.ln() - b.ln()).abs();
        n += 1;
    }
    mean_or_zero(s, n)
}

/// L1 difference of forward log-depth differences, horizontal (wrapping)
/// and vertical.
fn grad_l1<T: Real>(p: &DepthMap<T>, g: &DepthMap<T>) -> f64 {
    let (w, h) = (p.width(), p.height());
    let ln = |m: &DepthMap<T>, c: usize, r: usize| m.get(c, r).map(|v| v.as_f64().ln());
    let (mut s, mut n) = (0.0, 0);
    for r in 0..h {
        for c in 0..w {
            for (c2, r2) in [((c + 1) % w, r), (c, r + 1)] {
                if r2 >= h {
                    continue;
                }
                if let (Some(p0), Some(p1), Some(g0), Some(g1)) = (ln(p, c, r), ln(p, c2, r2), ln(g, c, r), ln(g, c2, r2)) {
                    s += ((p1 - p0) - (g1 - g0)).abs();
                    n += 1;
                }
            }
        }
    }
    mean_or_zero(s, n)
}

/// Surface normals from back-projected depth: cross product of the
/// forward differences to the right and lower neighbours.
fn normals_of<T: Real>(m: &DepthMap<T>) -> Result<Vec<Option<Point3<f64>>>> {
    let intr = m.intrinsics()?;
    let (w, h) = (m.width(), m.height());
    let point = |c: usize, r: usize| m.get(c, r).map(|d| direction(intr.pixel_direction::<f64>(c, r)) * d.as_f64());
    let mut out = vec![None; w * h];
    for r in 0..h.saturating_sub(1) {
        for c in 0..w {
            if let (Some(p), Some(pr), Some(pd)) = (point(c, r), point((c + 1) % w, r), point(c, r + 1)) {
                out[r * w + c] = (pr - p).cross(pd - p).normalized();
            }
        }
    }
    Ok(out)
}

fn normal_loss<T: Real>(p: &DepthMap<T>, g: &DepthMap<T>) -> Result<f64> {
    let (np, ng) = (normals_of(p)?, normals_of(g)?);
    let (mut s, mut n) = (0.0, 0);
    for (a, b) in np.iter().zip(&ng) {
        if let (Some(a), Some(b)) = (a, b) {
            // equals 1 - cos for unit normals, and is exactly 0 when they agree
            let e = *a - *b;
            s += 0.5 * e.dot(e);
            n += 1;
        }
    }
    Ok(mean_or_zero(s, n))
}

/// Warps the reference prediction into each source and compares log
/// radial depth with the interpolated source ground truth.
fn multiview_loss<T: Real>(pred: &DepthMap<T>, ref_pose: &Pose<T>, sources: &[SourceDepth<'_, T>]) -> Result<f64> {
    let intr = pred.intrinsics()?;
    let ref_pose = pose_f64(ref_pose);
    let (mut s, mut n) = (0.0, 0);
    for src in sources {
        let sintr = src.depth.intrinsics()?;
        let spose = pose_f64(&src.pose);
        let (sw, sh) = (src.depth.width(), src.depth.height());
        let same_pose = spose == ref_pose && (sw, sh) == (pred.width(), pred.height());
        for r in 0..pred.height() {
            for c in 0..pred.width() {
                let Some(d) = pred.get(c, r) else { continue };
                if same_pose {
                    // the warp is the identity; skip its rounding
                    let Some(g) = src.depth.get(c, r).map(T::as_f64) else { continue };
                    if d.as_f64() - g > MV_OCCLUSION_M {
                        continue;
                    }
                    s += (d.as_f64().ln() - g.ln()).abs();
                    n += 1;
                    continue;
                }
                let pc = direction(intr.pixel_direction::<f64>(c, r)) * d.as_f64();
                let q = spose.apply(ref_pose.apply_inverse(pc));
                if !(q.norm() > DEGENERATE_RADIUS) {
                    continue;
                }
                let (dir, radius) = cartesian_to_spherical(q)?;
                let px = project(dir, &sintr);
                let Some(g) = sample_depth(src.depth, px.u, px.v, sw, sh) else { continue };
                if radius - g > MV_OCCLUSION_M {
                    continue;
                }
                s += (radius.ln() - g.ln()).abs();
                n += 1;
            }
        }
    }
    Ok(mean_or_zero(s, n))
}

/// Bilinear depth when all four neighbours are valid, otherwise the
/// nearest pixel's depth.
fn sample_depth<T: Real>(m: &DepthMap<T>, u: f64, v: f64, w: usize, h: usize) -> Option<f64> {
    let u = u.rem_euclid(w as f64);
    let v = v.max(0.0).min((h - 1) as f64);
    let (u0, v0) = (u.floor(), v.floor());
    let (fu, fv) = (u - u0, v - v0);
    let (c0, r0) = ((u0 as usize) % w, (v0 as usize).min(h - 1));
    let (c1, r1) = ((c0 + 1) % w, (r0 + 1).min(h - 1));
    let get = |c, r| m.get(c, r).map(T::as_f64);
    if let (Some(a), Some(b), Some(c), Some(d)) = (get(c0, r0), get(c1, r0), get(c0, r1), get(c1, r1)) {
        return Some((1.0 - fu) * (1.0 - fv) * a + fu * (1.0 - fv) * b + (1.0 - fu) * fv * c + fu * fv * d);
    }
    let col = if fu < 0.5 { c0 } else { c1 };
    let row = if fv < 0.5 { r0 } else { r1 };
    get(col, row)
}

fn pose_f64<T: Real>(p: &Pose<T>) -> Pose<f64> {
    let r = p.rotation();
    let m = crate::geometry::Mat3 { m: r.m.map(|row| row.map(T::as_f64)) };
    let t = p.translation();
    Pose::new(m, Point3::new(t.x.as_f64(), t.y.as_f64(), t.z.as_f64())).expect("rotation stays orthonormal")
}

/// Combined evaluation report. Absent groups are omitted from both
/// serializations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthMetrics>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSummary>,
}

/// The mesh fields that appear in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub comp_cm: f64,
    pub acc_cm: f64,
    pub chamfer_cm: f64,
    pub fscore_pct: f64,
}

impl From<MeshMetrics> for MeshSummary {
    fn from(m: MeshMetrics) -> Self {
        Self { comp_cm: m.comp_cm, acc_cm: m.acc_cm, chamfer_cm: m.chamfer_cm, fscore_pct: m.fscore_pct }
    }
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One `key=value` line per metric, in the JSON key order.
    pub fn to_text(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        let mut out = String::new();
        if let serde_json::Value::Object(map) = v {
            for (k, v) in map {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::box_mesh;

    fn map(w: usize, h: usize, v: Vec<f64>) -> DepthMap<f64> {
        DepthMap::from_values(w, h, v).unwrap()
    }

    #[test]
    fn hand_computed_depth_metrics() {
        let gt = map(3, 1, vec![1.0, 2.0, 4.0]);
        let pred = map(3, 1, vec![1.1, 2.0, 5.0]);
        let m = depth_metrics(&pred, &gt).unwrap();
        assert!((m.mae_cm - 100.0 * 1.1 / 3.0).abs() < 1e-9);
        assert!((m.mre_pct - 100.0 * (0.1 + 0.25) / 3.0).abs() < 1e-9);
        assert!((m.rmse_cm - 100.0 * (1.01f64 / 3.0).sqrt()).abs() < 1e-9);
        // 5/4 is not below the threshold
        assert!((m.delta1_pct - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn depth_metrics_identity_and_scale() {
        let gt = map(4, 2, vec![1.0, 2.0, f64::NAN, 3.0, 0.5, 7.0, 2.5, 1.5]);
        let m = depth_metrics(&gt, &gt).unwrap();
        assert_eq!((m.mae_cm, m.mre_pct, m.rmse_cm, m.delta1_pct), (0.0, 0.0, 0.0, 100.0));
        let s = depth_metrics(&gt.scaled(1.2), &gt).unwrap();
        assert!((s.mre_pct - 20.0).abs() < 1e-9);
        assert_eq!(s.delta1_pct, 100.0);
    }

    #[test]
    fn depth_metrics_errors() {
        let a = map(2, 1, vec![f64::NAN, 1.0]);
        let b = map(2, 1, vec![1.0, f64::NAN]);
        assert!(depth_metrics(&a, &b).is_err());
        assert!(depth_metrics(&a, &map(1, 2, vec![1.0, 1.0])).is_err());
    }

    fn cube() -> TriangleMesh<f64> {
        box_mesh(Point3::splat(0.0), Point3::splat(1.0), false, [200; 3])
    }

    #[test]
    fn mesh_self_eval_is_perfect() {
        let cfg = MeshEvalConfig { samples: 5_000, ..Default::default() };
        let m = mesh_metrics(&cube(), &cube(), &cfg).unwrap();
        assert_eq!((m.acc_cm, m.comp_cm, m.chamfer_cm, m.fscore_pct), (0.0, 0.0, 0.0, 100.0));
    }

    #[test]
    fn shifted_cube_chamfer() {
        // a (1, 1, 1) cm shift moves each face 1 cm along its normal and
        // slides it 1 cm in-plane along both other axes
        let cfg = MeshEvalConfig { samples: 100_000, ..Default::default() };
        let shifted = cube().translated(Point3::splat(0.01));
        let m = mesh_metrics(&shifted, &cube(), &cfg).unwrap();
        assert!((m.chamfer_cm - 1.0).abs() < 0.15, "{m:?}");
        assert_eq!(m.fscore_pct, 100.0);
        let back = mesh_metrics(&cube(), &shifted, &cfg).unwrap();
        assert_eq!((back.acc_cm, back.comp_cm), (m.comp_cm, m.acc_cm));
    }

    #[test]
    fn mesh_metrics_rejects_empty() {
        let cfg = MeshEvalConfig::default();
        assert!(mesh_metrics(&TriangleMesh::<f64>::empty(), &cube(), &cfg).is_err());
    }

    fn ramp(w: usize, h: usize) -> DepthMap<f64> {
        DepthMap::from_fn(w, h, |c, r| Some(1.0 + 0.1 * ((c * 3 + r * 5) % 7) as f64))
    }

    #[test]
    fn losses_vanish_for_exact_prediction() {
        let gt = ramp(32, 16);
        // same center, yawed by whole pixels: warps land on pixel centers
        let k = 3;
        let yaw = -(k as f64) * std::f64::consts::TAU / 32.0;
        let src_depth = DepthMap::from_fn(32, 16, |c, r| gt.get((c + 32 - k) % 32, r));
        let src = SourceDepth { depth: &src_depth, pose: Pose::from_center_ypr(Point3::zero(), yaw, 0.0, 0.0) };
        let src_same = SourceDepth { depth: &gt, pose: Pose::identity() };
        let l = losses(&[gt.clone()], &[gt.clone()], &Pose::identity(), &[src, src_same], LossWeights::default()).unwrap();
        assert!(l.depth == 0.0 && l.grad == 0.0 && l.normals.abs() < 1e-12, "{l:?}");
        assert!(l.mv < 1e-12, "{l:?}");
    }

    #[test]
    fn scaled_prediction_losses() {
        let gt = ramp(32, 16);
        let pyramid = [gt.clone(), gt.subsample(2).unwrap()];
        let pred: Vec<_> = pyramid.iter().map(|g| g.scaled(2.0)).collect();
        let l = losses(&pred, &pyramid, &Pose::identity(), &[], LossWeights::default()).unwrap();
        assert!((l.depth - 2f64.ln()).abs() < 1e-9);
        assert!(l.grad < 1e-12);
        // scaling depth keeps the surface orientation
        assert!(l.normals < 1e-12);
        assert_eq!(l.mv, 0.0);
        assert!(losses(&pred[..1], &pyramid, &Pose::identity(), &[], LossWeights::default()).is_err());
    }

    #[test]
    fn multiview_term_flags_inconsistency() {
        let gt = ramp(32, 16);
        let src = SourceDepth { depth: &gt, pose: Pose::identity() };
        let pred = gt.scaled(0.9);
        let l = losses(&[pred], &[gt.clone()], &Pose::identity(), &[src], LossWeights::default()).unwrap();
        assert!((l.mv - (1.0f64 / 0.9).ln()).abs() < 1e-9);
        let w2 = LossWeights { mv: 0.4, ..Default::default() };
        let l2 = losses(&[gt.scaled(0.9)], &[gt.clone()], &Pose::identity(), &[src], w2).unwrap();
        assert!(((l2.total - l.total) - 0.2 * l.mv).abs() < 1e-12);
        // predictions far behind the source surface count as occluded
        let far = losses(&[gt.scaled(1.5)], &[gt.clone()], &Pose::identity(), &[src], LossWeights::default()).unwrap();
        assert_eq!(far.mv, 0.0);
    }

    #[test]
    fn report_serializations() {
        let r = Report {
            depth: Some(DepthMetrics { mae_cm: 1.0, mre_pct: 2.0, rmse_cm: 3.0, delta1_pct: 99.5 }),
            mesh: Some(MeshSummary { comp_cm: 1.5, acc_cm: 2.5, chamfer_cm: 2.0, fscore_pct: 90.0 }),
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(
            keys,
            ["mae_cm", "mre_pct", "rmse_cm", "delta1_pct", "comp_cm", "acc_cm", "chamfer_cm", "fscore_pct"]
        );
        let text = r.to_text().unwrap();
        assert!(text.starts_with("mae_cm=1.0\n"));
        assert_eq!(text.lines().count(), 8);
        let depth_only = Report { depth: r.depth, mesh: None };
        assert_eq!(depth_only.to_text().unwrap().lines().count(), 4);
    }
}
