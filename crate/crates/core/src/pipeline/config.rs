//! Experiment configuration, read from TOML.
//!
//! ```toml
//! mode = "synthetic"
//! seed = 7
//! replications = 50
//! sigma = 0.5
//! r_grid = [5, 10, 20]
//! alpha = [1.0, 2.0]
//! methods = ["pcr", "cls-gaussian", "subsample", "averaged"]
//! ensemble_sizes = [8]
//!
//! [synthetic]
//! n = 300
//! d = 150
//! spectrum = "polynomial:1"
//! base = "gaussian"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Base, SpectrumSpec};
use crate::error::{Error, Result};
use crate::sketch::SketchKind;

pub const DEFAULT_ALPHA: [f64; 6] = [1.0, 1.2, 1.5, 2.0, 2.5, 3.0];
pub const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pcr,
    ClsGaussian,
    ClsRademacher,
    Subsample,
    /// Average of `B` Gaussian-sketch fits, one row per configured `B`.
    Averaged,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pcr => "pcr",
            Method::ClsGaussian => "cls-gaussian",
            Method::ClsRademacher => "cls-rademacher",
            Method::Subsample => "subsample",
            Method::Averaged => "averaged",
        }
    }

    pub fn sketch_kind(self) -> Option<SketchKind> {
        match self {
            Method::Pcr => None,
            Method::ClsGaussian | Method::Averaged => Some(SketchKind::Gaussian),
            Method::ClsRademacher => Some(SketchKind::Rademacher),
            Method::Subsample => Some(SketchKind::Subsample),
        }
    }

    pub fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Synthetic,
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n: usize,
    pub d: usize,
    /// `flat`, `polynomial:<q>` or `exponential[:<θ>]`.
    pub spectrum: String,
    #[serde(default)]
    pub base: Base,
    /// Draw a fresh design and `w*` for every replicate.
    #[serde(default)]
    pub redraw_design: bool,
}

impl SyntheticSection {
    pub fn spectrum(&self) -> Result<SpectrumSpec> {
        self.spectrum.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub train: PathBuf,
    /// Holdout file; when absent the training file is split.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_y_col")]
    pub y_col: usize,
    #[serde(default)]
    pub log_cols: Vec<usize>,
    #[serde(default)]
    pub interact_cols: Vec<usize>,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_y_col() -> usize {
    1
}

fn default_alpha() -> Vec<f64> {
    DEFAULT_ALPHA.to_vec()
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_methods() -> Vec<Method> {
    vec![Method::Pcr, Method::ClsGaussian]
}

fn default_ensemble_sizes() -> Vec<usize> {
    vec![10]
}

fn default_eps() -> f64 {
    0.5
}

fn default_kaban_c() -> f64 {
    2.0
}

fn default_outdir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Noise level of the synthetic response.
    #[serde(default)]
    pub sigma: f64,
    pub r_grid: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_ensemble_sizes")]
    pub ensemble_sizes: Vec<usize>,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
    #[serde(default = "default_kaban_c")]
    pub kaban_c: f64,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default)]
    pub ingest: Option<IngestSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative ingest paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(ing), Some(dir)) = (cfg.ingest.as_mut(), path.parent()) {
            if ing.train.is_relative() {
                ing.train = dir.join(&ing.train);
            }
            if let Some(t) = ing.test.as_mut() {
                if t.is_relative() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return bad("replications must be ≥ 1".into());
        }
        if self.r_grid.is_empty() || self.r_grid.contains(&0) {
            return bad("r_grid must be non-empty with entries ≥ 1".into());
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("alpha must be non-empty with positive entries".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be non-empty".into());
        }
        if self.methods.contains(&Method::Averaged) && (self.ensemble_sizes.is_empty() || self.ensemble_sizes.contains(&0)) {
            return bad("ensemble_sizes must be non-empty with entries ≥ 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and ≥ 0, got {}", self.sigma));
        }
        if !(self.eps2 > 0.0 && self.eps2 < 1.0) {
            return bad(format!("eps2 must lie in (0, 1), got {}", self.eps2));
        }
        if !(1.0..=2.0).contains(&self.kaban_c) {
            return bad(format!("kaban_c must lie in [1, 2], got {}", self.kaban_c));
        }
        for r in &self.r_grid {
            for a in &self.alpha {
                if self.k_for(*r, *a) == 0 {
                    return bad(format!("alpha = {a} gives k = 0 at r = {r}"));
                }
            }
        }
        match self.mode {
            Mode::Synthetic => {
                let s = self.synthetic.as_ref().ok_or_else(|| Error::Config("synthetic mode needs a [synthetic] section".into()))?;
                if s.n == 0 || s.d == 0 {
                    return bad("n and d must be ≥ 1".into());
                }
                s.spectrum()?;
                if let Some(&r) = self.r_grid.iter().find(|&&r| r > s.n.min(s.d)) {
                    return bad(format!("r = {r} exceeds d∧n = {}", s.n.min(s.d)));
                }
            }
            Mode::Ingest => {
                let i = self.ingest.as_ref().ok_or_else(|| Error::Config("ingest mode needs an [ingest] section".into()))?;
                if i.test.is_none() && !(i.test_fraction > 0.0 && i.test_fraction < 1.0) {
                    return bad("test_fraction must lie in (0, 1)".into());
                }
            }
        }
        Ok(())
    }

    /// `k = round(α·r)`.
    pub fn k_for(&self, r: usize, alpha: f64) -> usize {
        (alpha * r as f64).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
mode = "synthetic"
seed = 3
r_grid = [2, 4]
methods = ["pcr", "cls-gaussian", "averaged"]
sigma = 0.5

[synthetic]
n = 40
d = 20
spectrum = "polynomial:2"
"#;

    #[test]
    fn defaults_are_filled() {
        let c = ExperimentConfig::from_toml(SYNTH).unwrap();
        assert_eq!(c.alpha, DEFAULT_ALPHA.to_vec());
        assert_eq!(c.replications, 100);
        assert_eq!(c.ensemble_sizes, vec![10]);
        assert_eq!(c.synthetic.as_ref().unwrap().base, Base::Gaussian);
        assert_eq!(c.synthetic.as_ref().unwrap().spectrum().unwrap(), SpectrumSpec::Polynomial { q: 2.0 });
        assert_eq!(c.k_for(4, 1.2), 5);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for (from, to) in [
            ("r_grid = [2, 4]", "r_grid = []"),
            ("r_grid = [2, 4]", "r_grid = [2, 40]"),
            ("sigma = 0.5", "sigma = -1.0"),
            ("spectrum = \"polynomial:2\"", "spectrum = \"wobbly\""),
            ("seed = 3", "seed = 3\nreplications = 0"),
            ("seed = 3", "seed = 3\nalpha = [0.1]"),
            ("seed = 3", "seed = 3\nunknown_key = 1"),
            ("\"averaged\"", "\"nonsense\""),
        ] {
            let text = SYNTH.replace(from, to);
            assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))), "{to}");
        }
        let no_section = "mode = \"ingest\"\nr_grid = [1]\n";
        assert!(ExperimentConfig::from_toml(no_section).is_err());
    }

    #[test]
    fn relative_ingest_paths_resolve_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "mode = \"ingest\"\nr_grid = [1]\n[ingest]\ntrain = \"a.csv\"\n").unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.ingest.unwrap().train, dir.path().join("a.csv"));
    }
}
