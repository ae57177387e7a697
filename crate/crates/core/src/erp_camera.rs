//! Equirectangular (ERP) camera model.
//!
//! Camera frame: `+z` looks at longitude 0 on the equator, `+x` points to
//! longitude `+pi/2`, and `+y` points to the south pole (latitude `-pi/2`).
//! Image columns grow with longitude and rows grow towards the south pole.
//! Pixel centers sit at integer coordinates, so the continuous image domain
//! is `[0, W) x [0, H]`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{domain, parse, Result};
use crate::geometry::{Mat3, Point3};
use crate::scalar::{wrap_angle, wrap_coord, Real};

/// Direction on the unit sphere: longitude `theta` in `[-pi, pi)` and
/// latitude `phi` in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord<T> {
    pub theta: T,
    pub phi: T,
}

impl<T: Real> SphericalCoord<T> {
    /// Checked constructor.
    pub fn new(theta: T, phi: T) -> Result<Self> {
        let s = Self { theta, phi };
        if s.is_valid() {
            Ok(s)
        } else {
            domain(format!("spherical coordinate out of range: theta={theta}, phi={phi}"))
        }
    }

    /// Wraps longitude into `[-pi, pi)` and clamps latitude to the poles.
    pub fn wrapped(theta: T, phi: T) -> Self {
        let half = T::FRAC_PI_2();
        Self {
            theta: wrap_angle(theta),
            phi: phi.max(-half).min(half),
        }
    }

    pub fn is_valid(&self) -> bool {
        let half = T::FRAC_PI_2();
        self.theta >= -T::PI()
            && self.theta < T::PI()
            && self.phi >= -half
            && self.phi <= half
    }
}

/// Continuous pixel position: `u` is the column, `v` the row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> PixelCoord<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }
}

/// Full-sphere ERP intrinsics. Width is always twice the height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErpIntrinsics {
    width: usize,
    height: usize,
}

impl ErpIntrinsics {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return domain("ERP image dimensions must be positive");
        }
        if width % 2 != 0 || height % 2 != 0 {
            return domain(format!("ERP dimensions must be even, got {width}x{height}"));
        }
        if width != 2 * height {
            return domain(format!("ERP width must be twice the height, got {width}x{height}"));
        }
        Ok(Self { width, height })
    }

    /// Intrinsics for an image whose height is `height`.
    pub fn from_height(height: usize) -> Result<Self> {
        Self::new(2 * height, height)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Intrinsics of the same sphere sampled `factor` times coarser.
    pub fn downscaled(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.height % factor != 0 {
            return domain(format!(
                "cannot downscale {}x{} by {factor}",
                self.width, self.height
            ));
        }
        Self::from_height(self.height / factor)
    }

    /// Spherical direction of the center of integer pixel `(col, row)`.
    #[inline]
    pub fn pixel_direction<T: Real>(&self, col: usize, row: usize) -> SphericalCoord<T> {
        let (w, h) = (T::from_usize_lossy(self.width), T::from_usize_lossy(self.height));
        let u = T::from_usize_lossy(col);
        let v = T::from_usize_lossy(row);
        SphericalCoord {
            theta: (u - w / T::lit(2.0)) * T::TAU() / w,
            phi: (h / T::lit(2.0) - v) * T::PI() / h,
        }
    }
}

/// ERP projection: spherical direction to continuous pixel.
#[inline]
pub fn project<T: Real>(s: SphericalCoord<T>, k: &ErpIntrinsics) -> PixelCoord<T> {
    let w = T::from_usize_lossy(k.width);
    let h = T::from_usize_lossy(k.height);
    let two = T::lit(2.0);
    PixelCoord {
        u: w / T::TAU() * s.theta + w / two,
        v: -h / T::PI() * s.phi + h / two,
    }
}

/// Inverse ERP projection. Fails outside `[0, W) x [0, H]`.
#[inline]
pub fn unproject<T: Real>(p: PixelCoord<T>, k: &ErpIntrinsics) -> Result<SphericalCoord<T>> {
    let w = T::from_usize_lossy(k.width);
    let h = T::from_usize_lossy(k.height);
    if !(p.u >= T::zero() && p.u < w && p.v >= T::zero() && p.v <= h) {
        return domain(format!("pixel ({}, {}) outside {}x{} ERP image", p.u, p.v, k.width, k.height));
    }
    let two = T::lit(2.0);
    Ok(SphericalCoord {
        theta: (p.u - w / two) * T::TAU() / w,
        phi: (h / two - p.v) * T::PI() / h,
    })
}

/// Point at radius `r` along direction `s`.
#[inline]
pub fn spherical_to_cartesian<T: Real>(s: SphericalCoord<T>, r: T) -> Result<Point3<T>> {
    if !(r > T::zero()) || !r.is_finite() {
        return domain(format!("radius must be positive and finite, got {r}"));
    }
    Ok(direction(s) * r)
}

/// Unit direction vector of `s`.
#[inline]
pub fn direction<T: Real>(s: SphericalCoord<T>) -> Point3<T> {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    Point3::new(cp * st, -sp, cp * ct)
}

/// Spherical direction and radius of a non-zero point.
#[inline]
pub fn cartesian_to_spherical<T: Real>(p: Point3<T>) -> Result<(SphericalCoord<T>, T)> {
    let r = p.norm();
    if !(r > T::zero()) || !r.is_finite() {
        return domain("cannot take the direction of a zero or non-finite vector");
    }
    let mut theta = p.x.atan2(p.z);
    if theta >= T::PI() {
        theta = -T::PI();
    }
    // atan2 stays well conditioned near the poles, unlike asin(y / r)
    let phi = (-p.y).atan2(p.x.hypot(p.z));
    Ok((SphericalCoord { theta, phi }, r))
}

/// Continuous pixel with the column wrapped into `[0, W)`.
#[inline]
pub fn wrap_pixel<T: Real>(p: PixelCoord<T>, k: &ErpIntrinsics) -> PixelCoord<T> {
    PixelCoord {
        u: wrap_coord(p.u, T::from_usize_lossy(k.width)),
        v: p.v,
    }
}

/// Rigid world-to-camera transform: `p_cam = rotation * p_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    rotation: Mat3<T>,
    translation: Point3<T>,
}

impl<T: Real> Pose<T> {
    /// Checked constructor: the rotation must be orthonormal with unit
    /// determinant.
    pub fn new(rotation: Mat3<T>, translation: Point3<T>) -> Result<Self> {
        let tol = T::identity_tolerance();
        let ortho = rotation.orthonormality_error();
        let det = rotation.determinant();
        if !(ortho <= tol) {
            return domain(format!("rotation not orthonormal (error {ortho})"));
        }
        if !((det - T::one()).abs() <= tol) {
            return domain(format!("rotation determinant {det} is not +1"));
        }
        if !translation.is_finite() {
            return domain("translation must be finite");
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Point3::zero(),
        }
    }

    /// Pose of a camera whose center sits at `center` (world) and whose
    /// orientation is `yaw` about `y`, then `pitch` about `x`, then `roll`
    /// about `z` (camera-to-world, radians).
    pub fn from_center_ypr(center: Point3<T>, yaw: T, pitch: T, roll: T) -> Self {
        let cam_to_world = Mat3::rot_y(yaw)
            .mul_mat(&Mat3::rot_x(pitch))
            .mul_mat(&Mat3::rot_z(roll));
        let rotation = cam_to_world.transpose();
        let translation = -rotation.mul_vec(center);
        Self { rotation, translation }
    }

    #[inline]
    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> Point3<T> {
        self.translation
    }

    /// World point to camera frame.
    #[inline]
    pub fn apply(&self, p_world: Point3<T>) -> Point3<T> {
        self.rotation.mul_vec(p_world) + self.translation
    }

    /// Camera point to world frame.
    #[inline]
    pub fn apply_inverse(&self, p_cam: Point3<T>) -> Point3<T> {
        self.rotation.transpose().mul_vec(p_cam - self.translation)
    }

    /// Camera-frame direction expressed in the world frame.
    #[inline]
    pub fn rotate_to_world(&self, d_cam: Point3<T>) -> Point3<T> {
        self.rotation.transpose().mul_vec(d_cam)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<T> {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.rotation.mul_vec(other.translation) + self.translation,
        }
    }

    /// Transform taking points from the camera frame of `from` into the
    /// camera frame of `to`: `to * from^-1`.
    pub fn relative(from: &Self, to: &Self) -> Self {
        to.compose(&from.inverse())
    }
}

/// Maps a camera-frame point of pose `from` into the camera frame of `to`.
#[inline]
pub fn transform_point<T: Real>(p: Point3<T>, from: &Pose<T>, to: &Pose<T>) -> Point3<T> {
    to.apply(from.apply_inverse(p))
}

/// One line of a pose file.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord<T> {
    pub frame_id: usize,
    pub pose: Pose<T>,
}

/// Parses the pose text format:
/// `frame_id r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz` per line,
/// whitespace separated, `#` starts a comment.
pub fn read_poses<T: Real, R: BufRead>(reader: R) -> Result<Vec<PoseRecord<T>>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 13 {
            return parse(format!(
                "pose line {}: expected 13 fields, found {}",
                lineno + 1,
                fields.len()
            ));
        }
        let frame_id: usize = fields[0]
            .parse()
            .map_err(|_| crate::Error::Parse(format!("pose line {}: bad frame id", lineno + 1)))?;
        let mut vals = [T::zero(); 12];
        for (slot, tok) in vals.iter_mut().zip(&fields[1..]) {
            let x: f64 = tok.parse().map_err(|_| {
                crate::Error::Parse(format!("pose line {}: bad number '{tok}'", lineno + 1))
            })?;
            *slot = T::lit(x);
        }
        let rotation = Mat3::from_rows([
            [vals[0], vals[1], vals[2]],
            [vals[4], vals[5], vals[6]],
            [vals[8], vals[9], vals[10]],
        ]);
        let translation = Point3::new(vals[3], vals[7], vals[11]);
        let pose = Pose::new(rotation, translation)
            .map_err(|e| crate::Error::Parse(format!("pose line {}: {e}", lineno + 1)))?;
        out.push(PoseRecord { frame_id, pose });
    }
    Ok(out)
}

/// Formats one pose line (no trailing newline).
pub fn format_pose_line<T: Real>(frame_id: usize, pose: &Pose<T>) -> String {
    let r = &pose.rotation.m;
    let t = pose.translation;
    let mut s = format!("{frame_id}");
    for (row, tv) in r.iter().zip([t.x, t.y, t.z]) {
        for v in row {
            let _ = write!(s, " {}", v.as_f64());
        }
        let _ = write!(s, " {}", tv.as_f64());
    }
    s
}

pub fn write_poses<T: Real, W: Write>(mut w: W, records: &[PoseRecord<T>]) -> Result<()> {
    writeln!(w, "# frame_id r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz (world-to-camera)")?;
    for rec in records {
        writeln!(w, "{}", format_pose_line(rec.frame_id, &rec.pose))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn k() -> ErpIntrinsics {
        ErpIntrinsics::new(1024, 512).unwrap()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(ErpIntrinsics::new(1024, 512).is_ok());
        assert!(ErpIntrinsics::new(1000, 512).is_err());
        assert!(ErpIntrinsics::new(0, 0).is_err());
        assert!(ErpIntrinsics::new(6, 3).is_err());
    }

    #[test]
    fn project_center_and_edges() {
        let p = project(SphericalCoord { theta: 0.0, phi: 0.0 }, &k());
        assert_eq!((p.u, p.v), (512.0, 256.0));
        let p = project(SphericalCoord { theta: -PI, phi: 0.0 }, &k());
        assert_eq!((p.u, p.v), (0.0, 256.0));
    }

    #[test]
    fn unproject_center_and_pole() {
        let s = unproject(PixelCoord::new(512.0, 256.0), &k()).unwrap();
        assert_eq!((s.theta, s.phi), (0.0, 0.0));
        let s = unproject(PixelCoord::new(512.0, 0.0), &k()).unwrap();
        assert_eq!(s.theta, 0.0);
        assert!((s.phi - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn unproject_rejects_outside_pixels() {
        assert!(unproject(PixelCoord::new(1024.0, 10.0), &k()).is_err());
        assert!(unproject(PixelCoord::new(-0.1, 10.0), &k()).is_err());
        assert!(unproject(PixelCoord::new(3.0, 512.5), &k()).is_err());
        assert!(unproject(PixelCoord::new(3.0, 512.0), &k()).is_ok());
    }

    #[test]
    fn spherical_cartesian_examples() {
        let p = spherical_to_cartesian(SphericalCoord { theta: 0.0, phi: 0.0 }, 1.0).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 1.0));
        let p = spherical_to_cartesian(SphericalCoord { theta: 0.0, phi: FRAC_PI_2 }, 2.0).unwrap();
        assert!(p.x.abs() < 1e-15 && (p.y + 2.0).abs() < 1e-15 && p.z.abs() < 1e-15);
        assert!(spherical_to_cartesian(SphericalCoord { theta: 0.0, phi: 0.0 }, 0.0).is_err());
        assert!(spherical_to_cartesian(SphericalCoord { theta: 0.0, phi: 0.0 }, -1.0).is_err());

        let (s, r) = cartesian_to_spherical(Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((s.theta, s.phi, r), (0.0, 0.0, 1.0));
        let (s, r) = cartesian_to_spherical(Point3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((s.theta - FRAC_PI_2).abs() < 1e-15 && s.phi == 0.0 && r == 1.0);
        assert!(cartesian_to_spherical(Point3::<f64>::zero()).is_err());
    }

    #[test]
    fn back_direction_maps_to_left_edge() {
        let (s, _) = cartesian_to_spherical(Point3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(s.theta, -PI);
        assert!(s.is_valid());
    }

    #[test]
    fn longitude_wrap_gives_same_pixel() {
        for &theta in &[-3.0, -1.0, 0.0, 0.5, 3.1] {
            let a = project(SphericalCoord::wrapped(theta, 0.3), &k());
            let b = project(SphericalCoord::wrapped(theta + 2.0 * PI, 0.3), &k());
            assert!((a.u - b.u).abs() < 1e-9 && a.v == b.v);
        }
    }

    #[test]
    fn transform_identity_cases() {
        let p = Point3::new(0.3, -1.2, 2.5);
        let id = Pose::identity();
        assert_eq!(transform_point(p, &id, &id), p);
        let pose = Pose::from_center_ypr(Point3::new(1.0, 0.5, -0.2), 0.4, 0.1, -0.3);
        let q = transform_point(p, &pose, &pose);
        assert!((q - p).norm() < 1e-12);
    }

    #[test]
    fn pose_rejects_non_rotations() {
        let mut m = Mat3::identity();
        m.m[0][0] = 1.1;
        assert!(Pose::new(m, Point3::zero()).is_err());
        let mut m = Mat3::<f64>::identity();
        m.m[2][2] = -1.0;
        assert!(Pose::new(m, Point3::zero()).is_err());
    }

    #[test]
    fn pose_center_roundtrip() {
        let c = Point3::new(0.25, -0.5, 1.0);
        let pose = Pose::from_center_ypr(c, 1.0, -0.2, 0.7);
        assert!((pose.center() - c).norm() < 1e-14);
        assert!(pose.apply(c).norm() < 1e-14);
    }

    #[test]
    fn pose_file_roundtrip() {
        let recs = vec![
            PoseRecord { frame_id: 0, pose: Pose::<f64>::identity() },
            PoseRecord {
                frame_id: 7,
                pose: Pose::from_center_ypr(Point3::new(0.1, 0.2, 0.3), 0.5, 0.0, 0.2),
            },
        ];
        let mut buf = Vec::new();
        write_poses(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with('#'));
        let back: Vec<PoseRecord<f64>> = read_poses(&buf[..]).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn pose_file_errors() {
        let bad = "0 1 0 0 0 0 1 0 0 0 0 1\n";
        assert!(read_poses::<f64, _>(bad.as_bytes()).is_err());
        let not_rot = "0 2 0 0 0 0 1 0 0 0 0 1 0\n";
        assert!(read_poses::<f64, _>(not_rot.as_bytes()).is_err());
        let ok = "# comment\n\n3 1 0 0 0 0 1 0 0 0 0 1 0 # trailing\n";
        let recs = read_poses::<f64, _>(ok.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].frame_id, 3);
    }
}
