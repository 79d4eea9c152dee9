//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strandline::losses::DEFAULT_PROBABILITY_EPS;
use strandline::report::OutputFormat;
use strandline::{ClassList, Interpolation, LossMode, LossWeights};

use crate::CliError;

pub const DEFAULT_CONFUSION_IOU: f64 = 0.45;
pub const DEFAULT_CONFUSION_CONF: f64 = 0.25;

/// Keys accepted in the config file. Every field is optional; unknown keys
/// are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub classes: Option<String>,
    pub format: Option<OutputFormat>,
    pub iou: Option<f64>,
    pub conf: Option<f64>,
    pub loss_mode: Option<LossMode>,
    pub interpolation: Option<Interpolation>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda_cls: Option<f64>,
    pub lambda_bbox: Option<f64>,
    pub lambda_giou: Option<f64>,
    pub prob_eps: Option<f64>,
    pub workers: Option<usize>,
    pub manifest: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fills unset fields of `self` from `base`. Fields already set win.
    pub fn or(self, base: FileConfig) -> FileConfig {
        FileConfig {
            classes: self.classes.or(base.classes),
            format: self.format.or(base.format),
            iou: self.iou.or(base.iou),
            conf: self.conf.or(base.conf),
            loss_mode: self.loss_mode.or(base.loss_mode),
            interpolation: self.interpolation.or(base.interpolation),
            alpha: self.alpha.or(base.alpha),
            gamma: self.gamma.or(base.gamma),
            lambda_cls: self.lambda_cls.or(base.lambda_cls),
            lambda_bbox: self.lambda_bbox.or(base.lambda_bbox),
            lambda_giou: self.lambda_giou.or(base.lambda_giou),
            prob_eps: self.prob_eps.or(base.prob_eps),
            workers: self.workers.or(base.workers),
            manifest: self.manifest.or(base.manifest),
        }
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub classes: Option<Vec<String>>,
    pub format: OutputFormat,
    pub iou: f64,
    pub conf: f64,
    pub loss_mode: Option<LossMode>,
    pub interpolation: Interpolation,
    pub weights: LossWeights,
    pub prob_eps: f64,
    pub workers: Option<usize>,
    pub manifest: Option<PathBuf>,
}

fn unit_open(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

/// Resolves `--classes`: an existing file (one name per line) or an inline
/// comma-separated list.
pub fn resolve_classes(spec: &str) -> Result<ClassList, CliError> {
    let path = Path::new(spec);
    let list = if path.is_file() {
        ClassList::from_file(path)
    } else {
        ClassList::parse_inline(spec)
    };
    list.map_err(|e| CliError::Usage(format!("--classes: {e}")))
}

impl RunConfig {
    pub fn resolve(cfg: FileConfig) -> Result<Self, CliError> {
        let defaults = LossWeights::default();
        let weights = LossWeights {
            alpha: cfg.alpha.unwrap_or(defaults.alpha),
            gamma: cfg.gamma.unwrap_or(defaults.gamma),
            lambda_cls: cfg.lambda_cls.unwrap_or(defaults.lambda_cls),
            lambda_bbox: cfg.lambda_bbox.unwrap_or(defaults.lambda_bbox),
            lambda_giou: cfg.lambda_giou.unwrap_or(defaults.lambda_giou),
        };
        weights.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if cfg.workers == Some(0) {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        if let Some(m) = &cfg.manifest {
            if !m.is_file() {
                return Err(CliError::Usage(format!("manifest {} does not exist", m.display())));
            }
        }
        let prob_eps = cfg.prob_eps.unwrap_or(DEFAULT_PROBABILITY_EPS);
        if !(0.0..0.5).contains(&prob_eps) {
            return Err(CliError::Usage(format!("--prob-eps must lie in [0, 0.5), got {prob_eps}")));
        }
        let classes = match &cfg.classes {
            Some(spec) => Some(resolve_classes(spec)?.names().to_vec()),
            None => None,
        };
        Ok(RunConfig {
            classes,
            format: cfg.format.unwrap_or_default(),
            iou: unit_open("iou", cfg.iou.unwrap_or(DEFAULT_CONFUSION_IOU))?,
            conf: unit_open("conf", cfg.conf.unwrap_or(DEFAULT_CONFUSION_CONF))?,
            loss_mode: cfg.loss_mode,
            interpolation: cfg.interpolation.unwrap_or_default(),
            weights,
            prob_eps,
            workers: cfg.workers,
            manifest: cfg.manifest,
        })
    }

    pub fn class_list(&self) -> Result<ClassList, CliError> {
        let names = self
            .classes
            .clone()
            .ok_or_else(|| CliError::Usage("--classes is required for this command".into()))?;
        ClassList::new(names).map_err(|e| CliError::Usage(e.to_string()))
    }
}
