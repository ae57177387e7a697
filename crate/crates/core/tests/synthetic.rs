use panomvs::erp_camera::{project, cartesian_to_spherical, PixelCoord};
use panomvs::geometry::Point3;
use panomvs::mesh::TriangleMesh;
use panomvs::metrics::*;
use panomvs::sweep::{warp_pixel, DepthMap};
use panomvs::synth::*;
use panomvs::tsdf::TsdfGrid;

const GRADIENT_ROOM: &str = "\
resolution 256 128
room -2 -1.5 -2.5 2.5 1.5 2 gradient 1.7 0.2 0.8
box 0.6 -0.3 1.0 1.2 0.5 1.6 gradient 0.9 0.3 0.9
camera 0 0 0
camera 0.25 0.05 -0.1 15 0 0
";

#[test]
fn warped_colors_match_on_smooth_texture() {
    let spec = SceneSpec::<f64>::parse(GRADIENT_ROOM).unwrap();
    let (a, b) = (render(&spec, 0).unwrap(), render(&spec, 1).unwrap());
    let intr = spec.intrinsics().unwrap();
    let gray = b.image.to_gray();
    let ref_gray = a.image.to_gray();
    let (mut n, mut good) = (0, 0);
    for row in 8..intr.height() - 8 {
        for col in 0..intr.width() {
            let d = a.depth.get(col, row).unwrap();
            let p = PixelCoord::new(col as f64, row as f64);
            let q = warp_pixel(p, d, &a.pose, &b.pose, &intr).unwrap().unwrap();
            // skip points hidden from the source camera
            let world = a.pose.apply_inverse(panomvs::erp_camera::direction(intr.pixel_direction(col, row)) * d);
            let (_, r) = cartesian_to_spherical(b.pose.apply(world)).unwrap();
            let (qc, qr) = ((q.u.round() as usize) % intr.width(), (q.v.round() as usize).min(intr.height() - 1));
            if (b.depth.get(qc, qr).unwrap() - r).abs() > 0.02 {
                continue;
            }
            n += 1;
            let s = gray.sample_bilinear(q.u, q.v)[0];
            if (s - ref_gray.get(col, row, 0)).abs() <= 2.0 / 255.0 {
                good += 1;
            }
        }
    }
    assert!(n > 20_000);
    assert!(good as f64 / n as f64 > 0.95, "{good}/{n}");
}

#[test]
fn warp_agrees_with_ray_traced_correspondence() {
    let spec = checker_room::<f64>(128).unwrap();
    let (a, b) = (render(&spec, 0).unwrap(), render(&spec, 2).unwrap());
    let intr = spec.intrinsics().unwrap();
    let mut worst: f64 = 0.0;
    for row in 0..intr.height() {
        for col in 0..intr.width() {
            let dir = panomvs::erp_camera::direction(intr.pixel_direction(col, row));
            let (hit, _) = spec.cast(a.pose.center(), a.pose.rotate_to_world(dir)).unwrap();
            let world = a.pose.center() + a.pose.rotate_to_world(dir) * hit.t;
            let (s, _) = cartesian_to_spherical(b.pose.apply(world)).unwrap();
            let truth = project(s, &intr);
            let d = a.depth.get(col, row).unwrap();
            let q = warp_pixel(PixelCoord::new(col as f64, row as f64), d, &a.pose, &b.pose, &intr).unwrap().unwrap();
            let du = (q.u - truth.u).rem_euclid(intr.width() as f64);
            let err = du.min(intr.width() as f64 - du).hypot(q.v - truth.v);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn fused_room_walls_within_one_voxel() {
    let spec = checker_room::<f64>(256).unwrap();
    let voxel = 0.02;
    let mut g = TsdfGrid::covering(Point3::splat(-2.0), Point3::splat(2.0), voxel, 4.0 * voxel).unwrap();
    for i in 0..spec.trajectory.len() {
        let f = render(&spec, i).unwrap();
        g.integrate_frame(&f.depth, &f.image, &f.pose, 3.0 * voxel).unwrap();
    }
    let m = g.extract_mesh(0.0);
    assert!(m.triangles.len() > 100_000);
    for v in &m.vertices {
        let wall = [v.x, v.y, v.z].iter().map(|c| (c.abs() - 2.0).abs()).fold(f64::MAX, f64::min);
        assert!(wall <= voxel, "{v:?}");
    }
}

#[test]
fn fused_mesh_ply_roundtrip_is_stable() {
    let spec = checker_room::<f64>(64).unwrap();
    let voxel = 0.08;
    let mut g = TsdfGrid::covering(Point3::splat(-2.0), Point3::splat(2.0), voxel, 4.0 * voxel).unwrap();
    let f = render(&spec, 0).unwrap();
    g.integrate_frame(&f.depth, &f.image, &f.pose, 3.0 * voxel).unwrap();
    let m = g.extract_mesh(0.0);
    assert!(!m.is_empty());
    let mut first = Vec::new();
    m.write_ply(&mut first).unwrap();
    let back = TriangleMesh::<f64>::read_ply(&first[..]).unwrap();
    assert_eq!(back.triangles, m.triangles);
    assert_eq!(back.colors, m.colors);
    let mut second = Vec::new();
    back.write_ply(&mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn multiview_loss_detects_moved_wall() {
    let spec = checker_room::<f64>(64).unwrap();
    let frames: Vec<_> = (0..3).map(|i| render(&spec, i).unwrap()).collect();
    let sources: Vec<_> = frames[1..].iter().map(|f| SourceDepth { depth: &f.depth, pose: f.pose }).collect();
    let gt = &frames[0].depth;
    let exact = losses(&[gt.clone()], &[gt.clone()], &frames[0].pose, &sources, LossWeights::default()).unwrap();
    // pull the +x wall 10 cm towards the reference camera
    let intr = gt.intrinsics().unwrap();
    let moved = DepthMap::from_fn(gt.width(), gt.height(), |c, r| {
        let d = gt.get(c, r)?;
        let p = frames[0].pose.apply_inverse(panomvs::erp_camera::direction(intr.pixel_direction(c, r)) * d);
        Some(if p.x > 1.999 { d * 1.9 / 2.0 } else { d })
    });
    let perturbed = losses(&[moved], &[gt.clone()], &frames[0].pose, &sources, LossWeights::default()).unwrap();
    assert_eq!(exact.depth, 0.0);
    assert!(exact.mv < 2e-3, "{exact:?}");
    assert!(perturbed.mv > 5.0 * exact.mv, "{perturbed:?} vs {exact:?}");
}
