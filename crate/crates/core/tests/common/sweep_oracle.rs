//! Naive loop implementation of the sweep used as a test oracle: cost
//! volume, classical reduction and argmax depth, one cell at a time.

use panomvs::erp_camera::{cartesian_to_spherical, direction, project, ErpIntrinsics, Pose};
use panomvs::features::FeatureMap;
use panomvs::geometry::Point3;

pub struct OracleSweep {
    /// `[d][row][col]` cost vectors.
    pub cost: Vec<Vec<Vec<Vec<f64>>>>,
    pub valid: Vec<Vec<Vec<bool>>>,
    /// `[row][col]` probabilities over hypotheses.
    pub probs: Vec<Vec<Vec<f64>>>,
    pub depth: Vec<Vec<f64>>,
}

fn bilinear(f: &FeatureMap<f64>, u: f64, v: f64) -> Vec<f64> {
    let img = f.as_image();
    let (w, h) = (img.width(), img.height());
    let wf = w as f64;
    let mut u = u - wf * (u / wf).floor();
    if u >= wf {
        u -= wf;
    }
    if u < 0.0 {
        u = 0.0;
    }
    let v = v.max(0.0).min((h - 1) as f64);
    let (u0, v0) = (u.floor() as usize, v.floor() as usize);
    let (fu, fv) = (u - u.floor(), v - v.floor());
    let (u0, v0) = (u0.min(w - 1), v0.min(h - 1));
    let (u1, v1) = ((u0 + 1) % w, (v0 + 1).min(h - 1));
    (0..img.channels())
        .map(|c| {
            (1.0 - fu) * (1.0 - fv) * img.get(u0, v0, c)
                + fu * (1.0 - fv) * img.get(u1, v0, c)
                + (1.0 - fu) * fv * img.get(u0, v1, c)
                + fu * fv * img.get(u1, v1, c)
        })
        .collect()
}

pub fn oracle_sweep(
    reference: (&FeatureMap<f64>, Pose<f64>),
    sources: &[(&FeatureMap<f64>, Pose<f64>)],
    hyps: &[f64],
) -> OracleSweep {
    let (fr, pr) = reference;
    let (w, h, dim) = (fr.width(), fr.height(), fr.dim());
    let intr = ErpIntrinsics::new(w, h).unwrap();
    let n = sources.len();
    let mut cost = vec![vec![vec![Vec::new(); w]; h]; hyps.len()];
    let mut valid = vec![vec![vec![true; w]; h]; hyps.len()];
    for (k, &r) in hyps.iter().enumerate() {
        for row in 0..h {
            for col in 0..w {
                let mut v: Vec<f64> = fr.descriptor(col, row).to_vec();
                let mut dots = Vec::new();
                let world = pr.apply_inverse(direction(intr.pixel_direction::<f64>(col, row)) * r);
                for (fs, ps) in sources {
                    if *ps == pr {
                        let sample = fs.descriptor(col, row).to_vec();
                        let mut dot = 0.0;
                        for i in 0..dim {
                            dot += v[i] * sample[i];
                        }
                        v.extend(sample);
                        dots.push(dot);
                        continue;
                    }
                    let q: Point3<f64> = ps.apply(world);
                    if q.norm() <= 1e-9 {
                        v.extend(std::iter::repeat(0.0).take(dim));
                        dots.push(0.0);
                        valid[k][row][col] = false;
                        continue;
                    }
                    let (s, _) = cartesian_to_spherical(q).unwrap();
                    let p = project(s, &intr);
                    let sample = bilinear(fs, p.u, p.v);
                    let mut dot = 0.0;
                    for i in 0..dim {
                        dot += v[i] * sample[i];
                    }
                    v.extend(sample);
                    dots.push(dot);
                }
                v.extend(dots);
                cost[k][row][col] = v;
            }
        }
    }
    let mut probs = vec![vec![Vec::new(); w]; h];
    let mut depth = vec![vec![0.0; w]; h];
    for row in 0..h {
        for col in 0..w {
            let scores: Vec<f64> = (0..hyps.len())
                .map(|k| {
                    let v = &cost[k][row][col];
                    let mut s = 0.0;
                    for i in 0..n {
                        s += v[(n + 1) * dim + i];
                    }
                    s / n as f64
                })
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let mut z = 0.0;
            for x in &e {
                z += x;
            }
            let p: Vec<f64> = e.iter().map(|x| x / z).collect();
            let mut best = 0;
            for k in 1..p.len() {
                if p[k] > p[best] {
                    best = k;
                }
            }
            depth[row][col] = hyps[best];
            probs[row][col] = p;
        }
    }
    OracleSweep { cost, valid, probs, depth }
}
