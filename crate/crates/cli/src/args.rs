use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "panomvs", version, about = "Multi-view stereo and fusion for equirectangular panoramas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ray cast a scene file into frames, GT depth and poses.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scene's ERP height (width follows as 2x).
        #[arg(long)]
        height: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sweep one reference frame against source frames.
    Depth {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long = "ref")]
        reference: usize,
        /// Comma-separated source frame ids; default picks the nearest.
        #[arg(long, value_delimiter = ',')]
        src: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fuse depth maps into a TSDF and extract a mesh.
    Fuse {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        depth_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = DepthKind::Pred)]
        depth_kind: DepthKind,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a depth map or mesh against ground truth.
    Eval {
        #[arg(long, value_enum)]
        kind: EvalKind,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// render, depth, fuse and eval in one go.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        height: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthKind {
    /// `pred_XXXX.pfm` written by `depth`.
    Pred,
    /// `depth_XXXX.pfm` written by `render`.
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalKind {
    Depth,
    Mesh,
}

/// Config sources shared by every subcommand. Named flags are applied after
/// `--set` pairs, which are applied after the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_planes: Option<usize>,
    #[arg(long)]
    pub d_min: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long)]
    pub sources: Option<usize>,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub extract: Option<String>,
    #[arg(long)]
    pub voxel_size: Option<f64>,
    #[arg(long)]
    pub mesh_samples: Option<usize>,
}

impl ConfigArgs {
    /// Override pairs in application order.
    pub fn overrides(&self) -> CliResult<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named: [(&str, Option<String>); 10] = [
            ("threads", self.threads.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("n_planes", self.n_planes.map(|v| v.to_string())),
            ("d_min", self.d_min.map(|v| v.to_string())),
            ("d_max", self.d_max.map(|v| v.to_string())),
            ("sources", self.sources.map(|v| v.to_string())),
            ("features", self.features.clone()),
            ("extract", self.extract.clone()),
            ("voxel_size", self.voxel_size.map(|v| v.to_string())),
            ("mesh_samples", self.mesh_samples.map(|v| v.to_string())),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

impl Command {
    pub fn config_args(&self) -> &ConfigArgs {
        match self {
            Command::Render { config, .. }
            | Command::Depth { config, .. }
            | Command::Fuse { config, .. }
            | Command::Eval { config, .. }
            | Command::Pipeline { config, .. } => config,
        }
    }
}
