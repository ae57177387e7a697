//! Resolved run configuration: defaults, then a `key = value` file, then
//! command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use panomvs::metrics::{DEFAULT_FSCORE_THRESHOLD_CM, DEFAULT_MESH_SAMPLES};
use panomvs::tsdf::{DEFAULT_MAX_WEIGHT, DEFAULT_TRUNC_VOXELS, DEFAULT_VOXEL_SIZE};

use crate::error::CliError;

/// File name of the config echo written beside every run's outputs.
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    Classical,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducerMode {
    Classical,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractChoice {
    Argmax,
    Soft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub n_planes: usize,
    pub features: FeatureMode,
    pub feature_radius: usize,
    pub feature_scale: usize,
    pub network_weights: Option<PathBuf>,
    pub reducer: ReducerMode,
    pub mlp_weights: Option<PathBuf>,
    pub extract: ExtractChoice,
    pub median: bool,
    pub sources: usize,
    pub voxel_size: f64,
    /// `None` resolves to a multiple of the voxel size.
    pub trunc: Option<f64>,
    pub max_weight: f64,
    pub fscore_threshold_cm: f64,
    pub mesh_samples: usize,
    pub alpha_grad: f64,
    pub alpha_normals: f64,
    pub alpha_mv: f64,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            d_min: 0.25,
            d_max: 8.0,
            n_planes: 64,
            features: FeatureMode::Classical,
            feature_radius: 1,
            feature_scale: 2,
            network_weights: None,
            reducer: ReducerMode::Classical,
            mlp_weights: None,
            extract: ExtractChoice::Argmax,
            median: true,
            sources: 2,
            voxel_size: DEFAULT_VOXEL_SIZE,
            trunc: None,
            max_weight: DEFAULT_MAX_WEIGHT,
            fscore_threshold_cm: DEFAULT_FSCORE_THRESHOLD_CM,
            mesh_samples: DEFAULT_MESH_SAMPLES,
            alpha_grad: 1.0,
            alpha_normals: 1.0,
            alpha_mv: 0.2,
            threads: 0,
            seed: 0,
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "d_min",
    "d_max",
    "n_planes",
    "features",
    "feature_radius",
    "feature_scale",
    "network_weights",
    "reducer",
    "mlp_weights",
    "extract",
    "median",
    "sources",
    "voxel_size",
    "trunc",
    "max_weight",
    "fscore_threshold_cm",
    "mesh_samples",
    "alpha_grad",
    "alpha_normals",
    "alpha_mv",
    "threads",
    "seed",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}")))
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid boolean {v:?} for {key}"))),
    }
}

fn path_or_none(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl PipelineConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "d_min" => self.d_min = num(key, v)?,
            "d_max" => self.d_max = num(key, v)?,
            "n_planes" => self.n_planes = num(key, v)?,
            "features" => {
                self.features = match v {
                    "classical" => FeatureMode::Classical,
                    "network" => FeatureMode::Network,
                    _ => return Err(CliError::Usage(format!("features must be classical or network, got {v:?}"))),
                }
            }
            "feature_radius" => self.feature_radius = num(key, v)?,
            "feature_scale" => self.feature_scale = num(key, v)?,
            "network_weights" => self.network_weights = path_or_none(v),
            "reducer" => {
                self.reducer = match v {
                    "classical" => ReducerMode::Classical,
                    "mlp" => ReducerMode::Mlp,
                    _ => return Err(CliError::Usage(format!("reducer must be classical or mlp, got {v:?}"))),
                }
            }
            "mlp_weights" => self.mlp_weights = path_or_none(v),
            "extract" => {
                self.extract = match v {
                    "argmax" => ExtractChoice::Argmax,
                    "soft" => ExtractChoice::Soft,
                    _ => return Err(CliError::Usage(format!("extract must be argmax or soft, got {v:?}"))),
                }
            }
            "median" => self.median = flag(key, v)?,
            "sources" => self.sources = num(key, v)?,
            "voxel_size" => self.voxel_size = num(key, v)?,
            "trunc" => self.trunc = if v == "auto" { None } else { Some(num(key, v)?) },
            "max_weight" => self.max_weight = num(key, v)?,
            "fscore_threshold_cm" => self.fscore_threshold_cm = num(key, v)?,
            "mesh_samples" => self.mesh_samples = num(key, v)?,
            "alpha_grad" => self.alpha_grad = num(key, v)?,
            "alpha_normals" => self.alpha_normals = num(key, v)?,
            "alpha_mv" => self.alpha_mv = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` document. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Defaults, then `file`, then `overrides` (`key=value` pairs).
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn trunc_m(&self) -> f64 {
        self.trunc.unwrap_or(DEFAULT_TRUNC_VOXELS * self.voxel_size)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if !(self.d_min > 0.0 && self.d_max > self.d_min && self.d_max.is_finite()) {
            return bad(format!("need 0 < d_min < d_max, got {} and {}", self.d_min, self.d_max));
        }
        if self.n_planes < 2 {
            return bad(format!("n_planes must be at least 2, got {}", self.n_planes));
        }
        if !self.feature_scale.is_power_of_two() {
            return bad(format!("feature_scale must be a power of two, got {}", self.feature_scale));
        }
        if self.features == FeatureMode::Network && self.network_weights.is_none() {
            return bad("features = network needs network_weights".into());
        }
        if self.reducer == ReducerMode::Mlp && self.mlp_weights.is_none() {
            return bad("reducer = mlp needs mlp_weights".into());
        }
        if self.sources == 0 {
            return bad("sources must be at least 1".into());
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return bad(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        if !(self.trunc_m() > 0.0 && self.trunc_m().is_finite()) {
            return bad(format!("trunc must be positive, got {}", self.trunc_m()));
        }
        if !(self.max_weight >= 1.0) {
            return bad(format!("max_weight must be at least 1, got {}", self.max_weight));
        }
        if !(self.fscore_threshold_cm > 0.0) {
            return bad(format!("fscore_threshold_cm must be positive, got {}", self.fscore_threshold_cm));
        }
        if self.mesh_samples == 0 {
            return bad("mesh_samples must be positive".into());
        }
        for (k, a) in [("alpha_grad", self.alpha_grad), ("alpha_normals", self.alpha_normals), ("alpha_mv", self.alpha_mv)] {
            if !(a >= 0.0 && a.is_finite()) {
                return bad(format!("{k} must be non-negative, got {a}"));
            }
        }
        Ok(())
    }

    fn value(&self, key: &str) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        match key {
            "d_min" => self.d_min.to_string(),
            "d_max" => self.d_max.to_string(),
            "n_planes" => self.n_planes.to_string(),
            "features" => match self.features {
                FeatureMode::Classical => "classical".into(),
                FeatureMode::Network => "network".into(),
            },
            "feature_radius" => self.feature_radius.to_string(),
            "feature_scale" => self.feature_scale.to_string(),
            "network_weights" => p(&self.network_weights),
            "reducer" => match self.reducer {
                ReducerMode::Classical => "classical".into(),
                ReducerMode::Mlp => "mlp".into(),
            },
            "mlp_weights" => p(&self.mlp_weights),
            "extract" => match self.extract {
                ExtractChoice::Argmax => "argmax".into(),
                ExtractChoice::Soft => "soft".into(),
            },
            "median" => self.median.to_string(),
            "sources" => self.sources.to_string(),
            "voxel_size" => self.voxel_size.to_string(),
            "trunc" => self.trunc_m().to_string(),
            "max_weight" => self.max_weight.to_string(),
            "fscore_threshold_cm" => self.fscore_threshold_cm.to_string(),
            "mesh_samples" => self.mesh_samples.to_string(),
            "alpha_grad" => self.alpha_grad.to_string(),
            "alpha_normals" => self.alpha_normals.to_string(),
            "alpha_mv" => self.alpha_mv.to_string(),
            "threads" => self.threads.to_string(),
            "seed" => self.seed.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Fully resolved config as `key = value` lines; parses back to the
    /// same config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.value(k));
        }
        s
    }

    pub fn write_echo(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(CONFIG_ECHO);
        std::fs::write(&path, self.echo()).map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# comment\nn_planes = 32\nextract = soft  # trailing\n\nmedian=off\n").unwrap();
        assert_eq!((cfg.n_planes, cfg.extract, cfg.median), (32, ExtractChoice::Soft, false));
        cfg.set("n_planes", "16").unwrap();
        assert_eq!(cfg.n_planes, 16);
    }

    #[test]
    fn echo_roundtrip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("voxel_size", "0.02").unwrap();
        cfg.set("seed", "9").unwrap();
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.echo()).unwrap();
        // trunc is echoed resolved
        assert_eq!(back.trunc_m(), cfg.trunc_m());
        assert_eq!(back.echo(), cfg.echo());
        assert_eq!(back.seed, 9);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("n_planes 4").is_err());
        assert!(cfg.set("median", "maybe").is_err());
        assert!(PipelineConfig::resolve(None, &[("d_min".into(), "9".into())]).is_err());
        assert!(PipelineConfig::resolve(None, &[("reducer".into(), "mlp".into())]).is_err());
        let e = PipelineConfig::resolve(Some(Path::new("/nonexistent/cfg")), &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
