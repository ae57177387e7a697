mod common {
    pub mod sweep_oracle;
}

use common::sweep_oracle::oracle_sweep;
use panomvs::erp_camera::Pose;
use panomvs::features::classical_features;
use panomvs::geometry::Point3;
use panomvs::image::Image;
use panomvs::sweep::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image<f64> {
    Image::from_fn(w, h, 1, |_, _, _| rng.gen::<f64>())
}

#[test]
fn sweep_matches_naive_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(w, h, d, n) in &[(32, 16, 8, 2), (16, 8, 5, 1), (32, 16, 3, 2)] {
        let imgs: Vec<_> = (0..=n).map(|_| random_image(&mut rng, w, h)).collect();
        let feats: Vec<_> = imgs.iter().map(|i| classical_features(i, 1).unwrap()).collect();
        let poses: Vec<Pose<f64>> = (0..=n)
            .map(|i| {
                if i == 0 {
                    return Pose::identity();
                }
                let c = Point3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.2..0.2), rng.gen_range(-0.4..0.4));
                Pose::from_center_ypr(c, rng.gen_range(-0.5..0.5), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2))
            })
            .collect();
        let hyps = make_hypotheses(0.5, 6.0, d).unwrap();
        let views: Vec<_> = feats.iter().zip(&poses).map(|(f, p)| View { features: f, pose: *p }).collect();

        let cv = build_cost_volume(&views[0], &views[1..], &hyps).unwrap();
        let pv = reduce_volume(&cv, Reducer::Classical).unwrap();
        let depth = extract_depth(&pv, &hyps, ExtractMode::Argmax, false).unwrap();
        let streamed = sweep_depth(&views[0], &views[1..], &hyps, Reducer::Classical, ExtractMode::Argmax, false).unwrap();

        let srcs: Vec<_> = feats[1..].iter().zip(&poses[1..]).map(|(f, p)| (f, *p)).collect();
        let o = oracle_sweep((&feats[0], poses[0]), &srcs, hyps.values());
        let (c, dd, hh, ww) = cv.dims();
        assert_eq!((c, dd, hh, ww), (cost_channels(n, feats[0].dim()), d, h, w));
        for k in 0..d {
            for r in 0..h {
                for col in 0..w {
                    assert_eq!(cv.vector(k, r, col), o.cost[k][r][col]);
                    assert_eq!(cv.is_valid(k, r, col), o.valid[k][r][col]);
                }
            }
        }
        for r in 0..h {
            for col in 0..w {
                assert_eq!(pv.pixel(r, col), o.probs[r][col]);
                assert_eq!(depth.get(col, r), Some(o.depth[r][col]));
            }
        }
        assert_eq!(streamed.depth, depth);
        assert_eq!(streamed.confidence, pv.confidence());
    }
}

#[test]
fn identity_sweep_ties_resolve_to_nearest() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random_image(&mut rng, 32, 16);
    let f = classical_features(&img, 1).unwrap();
    let v = View { features: &f, pose: Pose::identity() };
    let hyps = make_hypotheses(0.5, 4.0, 6).unwrap();
    for _ in 0..2 {
        let r = sweep_depth(&v, &[v], &hyps, Reducer::Classical, ExtractMode::Argmax, false).unwrap();
        assert!(r.depth.values().iter().all(|&d| d == 0.5));
    }
    let srcs = [(&f, Pose::identity())];
    let o = oracle_sweep((&f, Pose::identity()), &srcs, hyps.values());
    assert!(o.depth.iter().flatten().all(|&d| d == 0.5));
}
