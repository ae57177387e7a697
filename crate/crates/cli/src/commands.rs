//! Subcommand implementations. Everything runs in f64.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::{info, warn};

use panomvs::erp_camera::{direction, read_poses};
use panomvs::features::{classical_features_world, network_features, FeatureMap, MlpWeights, NetworkWeights};
use panomvs::metrics::{
    depth_metrics, losses, mesh_metrics, DepthMetrics, LossBreakdown, LossWeights, MeshEvalConfig, Report,
    SourceDepth,
};
use panomvs::sweep::{baseline, make_hypotheses, sweep_depth, ExtractMode, Reducer, SweepResult, View};
use panomvs::synth::{frame_name, gt_mesh, render_sequence, POSE_FILE};
use panomvs::{DepthMap64, Image64, Point3f64, Pose64, SceneSpec64, TriangleMesh64, TsdfGrid64};

use crate::args::{Cli, Command, DepthKind, EvalKind};
use crate::config::{ExtractChoice, FeatureMode, PipelineConfig, ReducerMode};
use crate::error::{CliError, CliResult};

/// Baselines shorter than this (meters) make the sweep meaningless.
const MIN_BASELINE_M: f64 = 1e-6;

pub fn pred_name(i: usize) -> String {
    format!("pred_{i:04}.pfm")
}

pub fn conf_name(i: usize) -> String {
    format!("conf_{i:04}.pfm")
}

/// Resolves the config, then runs the command on a pool of the requested
/// size.
pub fn run(cli: Cli) -> CliResult<()> {
    let ca = cli.command.config_args();
    let cfg = PipelineConfig::resolve(ca.config.as_deref(), &ca.overrides()?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(cmd: Command, cfg: &PipelineConfig) -> CliResult<()> {
    match cmd {
        Command::Render { scene, out, height, .. } => {
            let spec = load_scene(&scene, height)?;
            create_dir(&out)?;
            cfg.write_echo(&out)?;
            render_sequence(&spec, &out)?;
            info!("rendered {} frames into {}", spec.trajectory.len(), out.display());
            Ok(())
        }
        Command::Depth { frames, reference, src, out, .. } => {
            let seq = Sequence::load(&frames)?;
            create_dir(&out)?;
            cfg.write_echo(&out)?;
            let models = Models::load(cfg)?;
            let ri = seq.position(reference)?;
            let sources = if src.is_empty() {
                seq.nearest_sources(ri, cfg.sources)
            } else {
                src.iter().map(|&j| seq.position(j)).collect::<CliResult<_>>()?
            };
            let mut wanted = sources.clone();
            wanted.push(ri);
            let feats: Vec<Option<FeatureMap<f64>>> = (0..seq.len())
                .map(|k| wanted.contains(&k).then(|| seq.features(k, cfg, &models)).transpose())
                .collect::<CliResult<_>>()?;
            let r = estimate(&seq, &feats, ri, &sources, cfg, &models)?;
            save_depth(&out, seq.ids[ri], &r)
        }
        Command::Fuse { frames, depth_dir, depth_kind, out, .. } => {
            let seq = Sequence::load(&frames)?;
            create_dir(&out)?;
            cfg.write_echo(&out)?;
            let depths = seq.load_depths(&depth_dir, depth_kind)?;
            fuse_to_dir(&seq, &depths, cfg, &out).map(|_| ())
        }
        Command::Eval { kind, pred, gt, out, .. } => {
            create_dir(&out)?;
            cfg.write_echo(&out)?;
            let report = match kind {
                EvalKind::Depth => {
                    let p = load_depth(&pred)?;
                    let g = match_resolution(load_depth(&gt)?, &p)?;
                    Report { depth: Some(depth_metrics(&p, &g)?), mesh: None }
                }
                EvalKind::Mesh => {
                    let p = load_mesh(&pred)?;
                    let g = load_mesh(&gt)?;
                    Report { depth: None, mesh: Some(mesh_metrics(&p, &g, &eval_config(cfg))?.into()) }
                }
            };
            write_report(&out, &report)
        }
        Command::Pipeline { scene, out, height, .. } => pipeline(&scene, &out, height, cfg),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_scene(path: &Path, height: Option<usize>) -> CliResult<SceneSpec64> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read scene {}: {e}", path.display())))?;
    let spec = SceneSpec64::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    match height {
        Some(h) => spec.with_height(h).map_err(|e| CliError::Usage(format!("--height {h}: {e}"))),
        None => Ok(spec),
    }
}

fn load_depth(path: &Path) -> CliResult<DepthMap64> {
    DepthMap64::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_mesh(path: &Path) -> CliResult<TriangleMesh64> {
    TriangleMesh64::load_ply(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Subsamples `gt` onto the grid of `pred` when it is an integer multiple.
pub fn match_resolution(gt: DepthMap64, pred: &DepthMap64) -> CliResult<DepthMap64> {
    if (gt.width(), gt.height()) == (pred.width(), pred.height()) {
        return Ok(gt);
    }
    let f = gt.width() / pred.width().max(1);
    if f == 0 || gt.width() != f * pred.width() || gt.height() != f * pred.height() {
        return Err(CliError::Runtime(format!(
            "ground truth {}x{} is not a multiple of prediction {}x{}",
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height()
        )));
    }
    Ok(gt.subsample(f)?)
}

fn eval_config(cfg: &PipelineConfig) -> MeshEvalConfig {
    MeshEvalConfig { threshold_cm: cfg.fscore_threshold_cm, samples: cfg.mesh_samples, seed: cfg.seed }
}

fn write_report(dir: &Path, report: &Report) -> CliResult<()> {
    let text = report.to_text()?;
    for (name, body) in [("report.json", report.to_json()?), ("report.txt", text.clone())] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::io(&p, e))?;
    }
    print!("{text}");
    Ok(())
}

/// Optional learned components named by the config.
pub struct Models {
    pub network: Option<NetworkWeights<f64>>,
    pub mlp: Option<MlpWeights<f64>>,
}

impl Models {
    pub fn load(cfg: &PipelineConfig) -> CliResult<Self> {
        fn open(p: &Path) -> CliResult<BufReader<File>> {
            File::open(p)
                .map(BufReader::new)
                .map_err(|e| CliError::Usage(format!("cannot open weights {}: {e}", p.display())))
        }
        let bad = |p: &Path, e: panomvs::Error| CliError::Usage(format!("{}: {e}", p.display()));
        let network = match (cfg.features, &cfg.network_weights) {
            (FeatureMode::Network, Some(p)) => Some(NetworkWeights::read(&mut open(p)?).map_err(|e| bad(p, e))?),
            _ => None,
        };
        let mlp = match (cfg.reducer, &cfg.mlp_weights) {
            (ReducerMode::Mlp, Some(p)) => Some(MlpWeights::read(&mut open(p)?).map_err(|e| bad(p, e))?),
            _ => None,
        };
        Ok(Self { network, mlp })
    }

    fn reducer(&self) -> Reducer<'_, f64> {
        match &self.mlp {
            Some(m) => Reducer::Mlp(m),
            None => Reducer::Classical,
        }
    }
}

/// Frames of a rendered or captured sequence, in pose-file order.
pub struct Sequence {
    pub dir: PathBuf,
    pub ids: Vec<usize>,
    pub images: Vec<Image64>,
    pub poses: Vec<Pose64>,
}

impl Sequence {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let pose_path = dir.join(POSE_FILE);
        let f = File::open(&pose_path).map_err(|e| CliError::io(&pose_path, e))?;
        let records = read_poses::<f64, _>(BufReader::new(f))?;
        if records.is_empty() {
            return Err(CliError::Runtime(format!("{} lists no frames", pose_path.display())));
        }
        let mut seq = Self { dir: dir.to_path_buf(), ids: vec![], images: vec![], poses: vec![] };
        for r in records {
            let p = dir.join(frame_name(r.frame_id));
            let img = Image64::read_png(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            seq.ids.push(r.frame_id);
            seq.images.push(img);
            seq.poses.push(r.pose);
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: usize) -> CliResult<usize> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| CliError::Usage(format!("frame {id} not in {}", self.dir.display())))
    }

    /// The `n` other frames with the shortest baselines, ties by order.
    pub fn nearest_sources(&self, reference: usize, n: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.len()).filter(|&k| k != reference).collect();
        others.sort_by(|&a, &b| {
            let (da, db) = (baseline(&self.poses[reference], &self.poses[a]), baseline(&self.poses[reference], &self.poses[b]));
            da.total_cmp(&db)
        });
        others.truncate(n);
        others
    }

    pub fn features(&self, k: usize, cfg: &PipelineConfig, models: &Models) -> CliResult<FeatureMap<f64>> {
        Ok(match &models.network {
            Some(net) => network_features(&self.images[k], net)?,
            None => classical_features_world(&self.images[k], cfg.feature_radius, cfg.feature_scale, &self.poses[k])?,
        })
    }

    /// Depth maps in `dir` for every frame that has one.
    pub fn load_depths(&self, dir: &Path, kind: DepthKind) -> CliResult<Vec<Option<DepthMap64>>> {
        self.ids
            .iter()
            .map(|&id| {
                let p = dir.join(match kind {
                    DepthKind::Pred => pred_name(id),
                    DepthKind::Gt => panomvs::synth::depth_name(id),
                });
                if p.exists() {
                    load_depth(&p).map(Some)
                } else {
                    warn!("no depth for frame {id} ({})", p.display());
                    Ok(None)
                }
            })
            .collect()
    }
}

/// Sweeps frame `ri` against `sources` (indices into the sequence).
pub fn estimate(
    seq: &Sequence,
    feats: &[Option<FeatureMap<f64>>],
    ri: usize,
    sources: &[usize],
    cfg: &PipelineConfig,
    models: &Models,
) -> CliResult<SweepResult<f64>> {
    if sources.is_empty() {
        return Err(CliError::Usage("no source frames to sweep against".into()));
    }
    let view = |k: usize| -> CliResult<View<'_, f64>> {
        let features = feats[k]
            .as_ref()
            .ok_or_else(|| CliError::Runtime(format!("features of frame {} missing", seq.ids[k])))?;
        Ok(View { features, pose: seq.poses[k] })
    };
    for &s in sources {
        let b = baseline(&seq.poses[ri], &seq.poses[s]);
        if b < MIN_BASELINE_M {
            warn!("frames {} and {} share a camera center; depth is unobservable", seq.ids[ri], seq.ids[s]);
        }
    }
    let reference = view(ri)?;
    let src: Vec<View<'_, f64>> = sources.iter().map(|&s| view(s)).collect::<CliResult<_>>()?;
    let hyps = make_hypotheses(cfg.d_min, cfg.d_max, cfg.n_planes)?;
    let mode = match cfg.extract {
        ExtractChoice::Argmax => ExtractMode::Argmax,
        ExtractChoice::Soft => ExtractMode::Soft,
    };
    let ids: Vec<usize> = sources.iter().map(|&s| seq.ids[s]).collect();
    info!("sweeping frame {} against {ids:?}", seq.ids[ri]);
    Ok(sweep_depth(&reference, &src, &hyps, models.reducer(), mode, cfg.median)?)
}

fn save_depth(dir: &Path, id: usize, r: &SweepResult<f64>) -> CliResult<()> {
    r.depth.save(dir.join(pred_name(id)))?;
    let conf = DepthMap64::from_values(r.depth.width(), r.depth.height(), r.confidence.clone())?;
    conf.save(dir.join(conf_name(id)))?;
    Ok(())
}

/// Integrates every available depth map and extracts the zero crossing.
pub fn fuse(seq: &Sequence, depths: &[Option<DepthMap64>], cfg: &PipelineConfig) -> CliResult<(TsdfGrid64, TriangleMesh64)> {
    let mut lo = Point3f64::splat(f64::INFINITY);
    let mut hi = Point3f64::splat(f64::NEG_INFINITY);
    for (k, d) in depths.iter().enumerate() {
        let Some(d) = d else { continue };
        let intr = d.intrinsics()?;
        for row in 0..d.height() {
            for col in 0..d.width() {
                if let Some(r) = d.get(col, row) {
                    let p = seq.poses[k].apply_inverse(direction(intr.pixel_direction::<f64>(col, row)) * r);
                    lo = lo.component_min(p);
                    hi = hi.component_max(p);
                }
            }
        }
    }
    if !lo.is_finite() {
        return Err(CliError::Runtime("no valid depth to fuse".into()));
    }
    let trunc = cfg.trunc_m();
    let mut grid = TsdfGrid64::covering(lo, hi, cfg.voxel_size, trunc + cfg.voxel_size)?.with_max_weight(cfg.max_weight)?;
    let [nx, ny, nz] = grid.dims();
    info!("fusing into a {nx}x{ny}x{nz} grid at {} m", cfg.voxel_size);
    for (k, d) in depths.iter().enumerate() {
        let Some(d) = d else { continue };
        let img = &seq.images[k];
        let f = img.width() / d.width();
        if f == 0 || img.width() != f * d.width() || img.height() != f * d.height() {
            return Err(CliError::Runtime(format!(
                "frame {} is {}x{} but its depth is {}x{}",
                seq.ids[k],
                img.width(),
                img.height(),
                d.width(),
                d.height()
            )));
        }
        let color = img.downsample(f)?;
        grid.integrate_frame(d, &color, &seq.poses[k], trunc)?;
    }
    let mesh = grid.extract_mesh(0.0);
    if mesh.is_empty() {
        warn!("fused surface is empty");
    }
    Ok((grid, mesh))
}

fn fuse_to_dir(seq: &Sequence, depths: &[Option<DepthMap64>], cfg: &PipelineConfig, out: &Path) -> CliResult<TriangleMesh64> {
    let (grid, mesh) = fuse(seq, depths, cfg)?;
    grid.save(out.join("tsdf.bin"))?;
    mesh.save_ply(out.join("mesh.ply"))?;
    Ok(mesh)
}

fn mean_depth_metrics(all: &[DepthMetrics]) -> DepthMetrics {
    let n = all.len() as f64;
    let avg = |f: fn(&DepthMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    DepthMetrics {
        mae_cm: avg(|m| m.mae_cm),
        mre_pct: avg(|m| m.mre_pct),
        rmse_cm: avg(|m| m.rmse_cm),
        delta1_pct: avg(|m| m.delta1_pct),
    }
}

fn mean_losses(all: &[LossBreakdown], weights: LossWeights) -> LossBreakdown {
    let n = all.len() as f64;
    let avg = |f: fn(&LossBreakdown) -> f64| all.iter().map(f).sum::<f64>() / n;
    LossBreakdown {
        depth: avg(|l| l.depth),
        grad: avg(|l| l.grad),
        normals: avg(|l| l.normals),
        mv: avg(|l| l.mv),
        total: avg(|l| l.total),
        weights,
    }
}

fn pipeline(scene: &Path, out: &Path, height: Option<usize>, cfg: &PipelineConfig) -> CliResult<()> {
    let spec = load_scene(scene, height)?;
    let (frames_dir, depth_dir, fusion_dir, eval_dir) =
        (out.join("frames"), out.join("depth"), out.join("fusion"), out.join("eval"));
    for d in [&frames_dir, &depth_dir, &fusion_dir, &eval_dir] {
        create_dir(d)?;
    }
    cfg.write_echo(out)?;

    render_sequence(&spec, &frames_dir)?;
    // later stages read the frames back, exactly as the separate commands do
    let seq = Sequence::load(&frames_dir)?;
    if seq.len() < 2 {
        return Err(CliError::Usage("pipeline needs at least two cameras".into()));
    }
    let models = Models::load(cfg)?;
    let feats: Vec<Option<FeatureMap<f64>>> =
        (0..seq.len()).map(|k| seq.features(k, cfg, &models).map(Some)).collect::<CliResult<_>>()?;

    let mut preds = Vec::with_capacity(seq.len());
    for ri in 0..seq.len() {
        let sources = seq.nearest_sources(ri, cfg.sources);
        let r = estimate(&seq, &feats, ri, &sources, cfg, &models)?;
        save_depth(&depth_dir, seq.ids[ri], &r)?;
        preds.push(r.depth);
    }

    let gts: Vec<DepthMap64> = seq
        .load_depths(&frames_dir, DepthKind::Gt)?
        .into_iter()
        .zip(&preds)
        .map(|(g, p)| {
            let g = g.ok_or_else(|| CliError::Runtime("rendered ground truth missing".into()))?;
            match_resolution(g, p)
        })
        .collect::<CliResult<_>>()?;
    let per_frame: Vec<DepthMetrics> =
        preds.iter().zip(&gts).map(|(p, g)| depth_metrics(p, g)).collect::<panomvs::Result<_>>()?;
    let weights = LossWeights { grad: cfg.alpha_grad, normals: cfg.alpha_normals, mv: cfg.alpha_mv };
    let frame_losses: Vec<LossBreakdown> = (0..seq.len())
        .map(|ri| {
            let sources: Vec<SourceDepth<'_, f64>> = seq
                .nearest_sources(ri, cfg.sources)
                .into_iter()
                .map(|s| SourceDepth { depth: &gts[s], pose: seq.poses[s] })
                .collect();
            losses(std::slice::from_ref(&preds[ri]), std::slice::from_ref(&gts[ri]), &seq.poses[ri], &sources, weights)
        })
        .collect::<panomvs::Result<_>>()?;

    let depths: Vec<Option<DepthMap64>> = preds.into_iter().map(Some).collect();
    let mesh = fuse_to_dir(&seq, &depths, cfg, &fusion_dir)?;
    let mesh_summary = if mesh.is_empty() {
        warn!("skipping mesh metrics: fused mesh is empty");
        None
    } else {
        Some(mesh_metrics(&mesh, &gt_mesh(&spec), &eval_config(cfg))?.into())
    };

    let report = Report { depth: Some(mean_depth_metrics(&per_frame)), mesh: mesh_summary };
    let losses_json = serde_json::json!({
        "frames": frame_losses,
        "mean": mean_losses(&frame_losses, weights),
    });
    let lp = eval_dir.join("losses.json");
    let body = serde_json::to_string_pretty(&losses_json).map_err(panomvs::Error::from)? + "\n";
    std::fs::write(&lp, body).map_err(|e| CliError::io(&lp, e))?;
    write_report(&eval_dir, &report)
}
