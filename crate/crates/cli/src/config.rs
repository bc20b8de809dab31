use std::fs;
use std::path::{Path, PathBuf};

use deforest_core::stats::DateInterval;
use deforest_core::synth::SceneConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub incidence_angle_deg: f64,
    #[serde(default)]
    pub look_azimuth_deg: f64,
}

fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.05]
}

fn default_confirmation() -> usize {
    2
}

fn default_true() -> bool {
    true
}

fn default_combination() -> String {
    "bench".into()
}

/// One JSON document driving every subcommand. Relative paths resolve
/// against the directory of the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Scene to generate with `synth`; its outputs become the default inputs.
    pub synth: Option<SceneConfig>,
    /// Input stack in linear power. Defaults to `<out>/stack`.
    pub stack: Option<PathBuf>,
    /// Slope/aspect grid directory. Flat terrain when absent.
    pub terrain: Option<PathBuf>,
    /// Acquisition geometry; when set, `calibrate` runs and later stages read
    /// `<out>/gamma0`.
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub lia_max_deg: Option<f64>,
    pub forest_samples: Option<PathBuf>,
    pub cleared_samples: Option<PathBuf>,
    /// Bands to fit and monitor. Defaults to every stack band.
    pub bands: Option<Vec<String>>,
    /// Band scored by `bench`. Defaults to the first monitored band.
    pub bench_band: Option<String>,
    /// Filter combination name, or `bench` to use the top-scoring one.
    #[serde(default = "default_combination")]
    pub combination: String,
    /// Combinations scored by `bench`. Defaults to the full 25-cell grid.
    pub bench_combinations: Option<Vec<String>>,
    pub calibration_window: Option<DateInterval>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_confirmation")]
    pub confirmation: usize,
    #[serde(default = "default_true")]
    pub nodata_resets: bool,
    /// Locations dumped as `series_<row>_<col>.csv`. Defaults to the first
    /// cleared and first forest sample.
    pub series_locations: Option<Vec<[usize; 2]>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields optional")
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.stack,
            &mut cfg.terrain,
            &mut cfg.forest_samples,
            &mut cfg.cleared_samples,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.alphas.is_empty() {
            return Err(CliError::usage("alphas must not be empty"));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 0.5) {
                return Err(CliError::usage(format!("alpha {a} outside (0, 0.5]")));
            }
        }
        if self.confirmation == 0 {
            return Err(CliError::usage("confirmation must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(CliError::usage("threads must be at least 1"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn input_stack(&self) -> PathBuf {
        self.stack.clone().unwrap_or_else(|| self.out_dir().join("stack"))
    }

    /// Linear stack read by `bench` and `fit`.
    pub fn analysis_stack(&self) -> PathBuf {
        if self.geometry.is_some() {
            self.out_dir().join("gamma0")
        } else {
            self.input_stack()
        }
    }

    pub fn forest_path(&self) -> PathBuf {
        self.forest_samples
            .clone()
            .unwrap_or_else(|| self.out_dir().join("forest.csv"))
    }

    pub fn cleared_path(&self) -> PathBuf {
        self.cleared_samples
            .clone()
            .unwrap_or_else(|| self.out_dir().join("cleared.csv"))
    }

    pub fn filtered_dir(&self) -> PathBuf {
        self.out_dir().join("filtered")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir().join("model")
    }
}
