use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoise::{default_epsilon, gradient_percentile, CffParams};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::imagestack::{SequenceFormat, SequenceMeta, DEFAULT_CLAMP_MAX, DEFAULT_HOT_SIGMA};
use crate::segment::SegmentConfig;
use crate::track::{FilterPolicy, GateParams};

/// Where the frames and their references live. Relative paths are taken
/// from the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub frames: PathBuf,
    #[serde(default = "default_format")]
    pub format: SequenceFormat,
    /// Dark and open-beam frames, in the same format as `frames`.
    #[serde(default)]
    pub dark: Option<PathBuf>,
    #[serde(default)]
    pub flat: Option<PathBuf>,
    /// Prebuilt calibration file; replaces `dark` and `flat`.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default = "default_hot_sigma")]
    pub hot_sigma: f64,
    #[serde(default = "default_clamp_max")]
    pub clamp_max: f64,
}

fn default_format() -> SequenceFormat {
    SequenceFormat::TiffStack
}

fn default_hot_sigma() -> f64 {
    DEFAULT_HOT_SIGMA
}

fn default_clamp_max() -> f64 {
    DEFAULT_CLAMP_MAX
}

/// Curvature flow settings; `k` and `epsilon` are derived from the first
/// normalised frame when left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CffConfig {
    pub k: Option<f64>,
    /// Percentile of the gradient magnitude used for an automatic `k`.
    pub k_percentile: f64,
    pub tau: f64,
    pub dt: f64,
    pub epsilon: Option<f64>,
}

impl Default for CffConfig {
    fn default() -> Self {
        CffConfig {
            k: None,
            k_percentile: CffParams::K_PERCENTILE,
            tau: CffParams::DEFAULT_TAU,
            dt: CffParams::DEFAULT_DT,
            epsilon: None,
        }
    }
}

impl CffConfig {
    /// Concrete parameters for a sequence whose first frame is `sample`.
    pub fn resolve(&self, sample: &Frame) -> Result<CffParams> {
        let eps = self.epsilon.unwrap_or_else(|| default_epsilon(sample));
        let params = CffParams {
            k: self
                .k
                .unwrap_or_else(|| gradient_percentile(sample, self.k_percentile).max(eps)),
            tau: self.tau,
            dt: self.dt,
            epsilon: eps,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        // placeholders stand in for the values only known after loading
        CffParams {
            k: self.k.unwrap_or(1.0),
            tau: self.tau,
            dt: self.dt,
            epsilon: self.epsilon.unwrap_or(1.0),
        }
        .validate()?;
        if !(0.0..=100.0).contains(&self.k_percentile) {
            return Err(Error::InvalidParameter("CffConfig.k_percentile must lie in [0, 100]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    /// Elevation bin height of the velocity profile and envelope, mm.
    pub bin_height: f64,
    /// Largest clipping window of the envelope baseline, in bins.
    pub snip_m: usize,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            bin_height: 2.0,
            snip_m: 12,
        }
    }
}

/// Everything one pipeline run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub meta: SequenceMeta,
    #[serde(default)]
    pub cff: CffConfig,
    #[serde(default)]
    pub segment: SegmentConfig,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default)]
    pub gate: GateParams,
    #[serde(default)]
    pub bins: BinConfig,
    pub output: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Also write normalised and filtered frames.
    #[serde(default)]
    pub dump_intermediate: bool,
}

fn default_workers() -> usize {
    1
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input.frames);
        for p in [&mut self.input.dark, &mut self.input.flat, &mut self.input.calibration]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.cff.validate()?;
        self.segment.validate()?;
        if !(self.meta.frame_rate > 0.0) || !(self.meta.pixel_pitch > 0.0) {
            return Err(Error::InvalidParameter("meta.frame_rate and meta.pixel_pitch must be > 0".into()));
        }
        if !(self.bins.bin_height > 0.0) || self.bins.snip_m == 0 {
            return Err(Error::InvalidParameter("bins.bin_height must be > 0 and bins.snip_m >= 1".into()));
        }
        if !(self.gate.v_max > 0.0) {
            return Err(Error::InvalidParameter("GateParams.v_max must be > 0".into()));
        }
        if !(self.filter.area_sigma > 0.0) || !(self.filter.max_aspect >= 1.0) {
            return Err(Error::InvalidParameter(
                "FilterPolicy.area_sigma must be > 0 and max_aspect >= 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        if !(self.input.clamp_max > 0.0) || !(self.input.hot_sigma > 0.0) {
            return Err(Error::InvalidParameter("input.clamp_max and input.hot_sigma must be > 0".into()));
        }
        match (&self.input.calibration, &self.input.dark, &self.input.flat) {
            (Some(_), _, _) | (None, Some(_), Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "input needs either `calibration` or both `dark` and `flat`".into(),
                ))
            }
        }
        let paths = [Some(&self.input.frames), self.input.dark.as_ref(), self.input.flat.as_ref(), self.input.calibration.as_ref()];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
