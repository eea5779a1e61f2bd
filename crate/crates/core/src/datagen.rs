//! Synthetic designs with a prescribed spectrum and the matching ground truth.
//!
//! A base matrix `X₀` is drawn i.i.d. (Gaussian or Cauchy), its singular
//! values are replaced by a deterministic decay profile scaled to
//! `Σσ_j² = n·d`, and the response follows `y = Xw* + σξ`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compute_svd, DesignMatrix};
use crate::risk::Scenario;
use crate::rng::{gaussian_matrix, gaussian_vector, stream, substream};

/// Decay profile of the singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum SpectrumSpec {
    Flat,
    /// `σ_j ∝ j^{−q}`.
    Polynomial { q: f64 },
    /// `σ_j ∝ θ^j`.
    Exponential { theta: f64 },
}

pub const DEFAULT_THETA: f64 = 0.9;

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SpectrumSpec::Flat => Ok(()),
            SpectrumSpec::Polynomial { q } if q > 0.0 && q.is_finite() => Ok(()),
            SpectrumSpec::Polynomial { q } => Err(Error::arg(format!("polynomial decay needs q > 0, got {q}"))),
            SpectrumSpec::Exponential { theta } if theta > 0.0 && theta < 1.0 => Ok(()),
            SpectrumSpec::Exponential { theta } => Err(Error::arg(format!("theta must lie in (0, 1), got {theta}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SpectrumSpec::Flat => "flat",
            SpectrumSpec::Polynomial { .. } => "polynomial",
            SpectrumSpec::Exponential { .. } => "exponential",
        }
    }

    /// The PCR scenario for this spectrum. Scenarios describe `σ_j²` while the
    /// generator describes `σ_j`, so exponents and ratios are squared. `None`
    /// when the implied decay of `σ_j²` is slower than `j⁻²`.
    pub fn scenario(&self) -> Option<Scenario> {
        match *self {
            SpectrumSpec::Flat => Some(Scenario::Flat),
            SpectrumSpec::Polynomial { q } if 2.0 * q >= 2.0 => Some(Scenario::Polynomial { q: 2.0 * q }),
            SpectrumSpec::Polynomial { .. } => None,
            SpectrumSpec::Exponential { theta } => Some(Scenario::Exponential { theta: theta * theta }),
        }
    }

    /// The `d∧n` singular values, nonincreasing, with `Σσ_j² = n·d`.
    pub fn values(&self, n: usize, d: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let m = n.min(d);
        if m == 0 {
            return Err(Error::arg("n and d must be ≥ 1"));
        }
        let raw: Vec<f64> = (1..=m)
            .map(|j| match *self {
                SpectrumSpec::Flat => 1.0,
                SpectrumSpec::Polynomial { q } => (j as f64).powf(-q),
                SpectrumSpec::Exponential { theta } => theta.powi(j as i32),
            })
            .collect();
        let energy: f64 = raw.iter().map(|s| s * s).sum();
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::arg("spectrum underflows; use a milder decay"));
        }
        let scale = ((n * d) as f64 / energy).sqrt();
        Ok(raw.into_iter().map(|s| s * scale).collect())
    }
}

impl fmt::Display for SpectrumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumSpec::Flat => write!(f, "flat"),
            SpectrumSpec::Polynomial { q } => write!(f, "polynomial:{q}"),
            SpectrumSpec::Exponential { theta } => write!(f, "exponential:{theta}"),
        }
    }
}

/// Parses `flat`, `polynomial:<q>` (or `poly:<q>`) and `exponential[:<θ>]` (or `exp`).
impl FromStr for SpectrumSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, param) = match s.split_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (s, None),
        };
        let num = |p: Option<&str>| -> Result<Option<f64>> {
            p.map(|v| v.trim().parse::<f64>().map_err(|_| Error::arg(format!("bad spectrum parameter {v:?}"))))
                .transpose()
        };
        let spec = match head.trim().to_ascii_lowercase().as_str() {
            "flat" => SpectrumSpec::Flat,
            "polynomial" | "poly" => SpectrumSpec::Polynomial {
                q: num(param)?.ok_or_else(|| Error::arg("polynomial spectrum needs q, e.g. polynomial:2"))?,
            },
            "exponential" | "exp" => SpectrumSpec::Exponential {
                theta: num(param)?.unwrap_or(DEFAULT_THETA),
            },
            other => return Err(Error::arg(format!("unknown spectrum {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Base {
    #[default]
    Gaussian,
    /// Ratio of two independent standard normals.
    Cauchy,
}

impl Base {
    pub fn name(self) -> &'static str {
        match self {
            Base::Gaussian => "gaussian",
            Base::Cauchy => "cauchy",
        }
    }
}

impl FromStr for Base {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Base::Gaussian),
            "cauchy" => Ok(Base::Cauchy),
            other => Err(Error::arg(format!("unknown base distribution {other:?}"))),
        }
    }
}

/// The i.i.d. matrix `X₀` whose singular vectors are kept.
pub fn base_matrix(n: usize, d: usize, base: Base, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed);
    let num = gaussian_matrix(&mut rng, n, d, 1.0);
    match base {
        Base::Gaussian => num,
        Base::Cauchy => num.component_div(&gaussian_matrix(&mut rng, n, d, 1.0)),
    }
}

/// `X = U₀ Σ V₀ᵀ` where `X₀ = U₀ Σ₀ V₀ᵀ` is drawn from `base`.
pub fn synth_design(n: usize, d: usize, spectrum: SpectrumSpec, base: Base, seed: u64) -> Result<DesignMatrix> {
    let sigma = spectrum.values(n, d)?;
    let f = compute_svd(&base_matrix(n, d, base, seed))?;
    let mut us = f.u;
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= sigma[j];
    }
    DesignMatrix::new(us * f.v.transpose())
}

/// Uniform direction on the unit sphere in `ℝ^d`.
pub fn draw_direction(d: usize, seed: u64) -> Result<DVector<f64>> {
    if d == 0 {
        return Err(Error::arg("d must be ≥ 1"));
    }
    let mut rng = stream(seed);
    loop {
        let g = gaussian_vector(&mut rng, d);
        let norm = g.norm();
        if norm > 0.0 {
            return Ok(g / norm);
        }
    }
}

/// `(w*, 2^p)` with `w*` uniform on the unit sphere.
pub fn draw_truth(d: usize, p: f64, seed: u64) -> Result<(DVector<f64>, f64)> {
    Ok((draw_direction(d, seed)?, 2f64.powf(p)))
}

/// `y = Xw* + σξ` with `ξ` standard Gaussian drawn from `noise_seed`.
pub fn gen_response(x: &DesignMatrix, wstar: &DVector<f64>, sigma: f64, noise_seed: u64) -> Result<DVector<f64>> {
    if wstar.len() != x.ncols() {
        return Err(Error::arg(format!("w* has length {}, design has {} columns", wstar.len(), x.ncols())));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("noise level must be finite and ≥ 0, got {sigma}")));
    }
    let signal = x.matrix() * wstar;
    if sigma == 0.0 {
        return Ok(signal);
    }
    Ok(signal + gaussian_vector(&mut stream(noise_seed), x.nrows()) * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    pub d: usize,
    pub spectrum: SpectrumSpec,
    pub base: Base,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub params: SynthParams,
    pub x: DesignMatrix,
    pub wstar: DVector<f64>,
    pub y: DVector<f64>,
}

impl SyntheticInstance {
    /// Design, direction and noise come from substreams 0, 1 and 2 of the seed.
    pub fn generate(params: SynthParams) -> Result<Self> {
        let x = synth_design(params.n, params.d, params.spectrum, params.base, substream(params.seed, 0))?;
        let wstar = draw_direction(params.d, substream(params.seed, 1))?;
        let y = gen_response(&x, &wstar, params.sigma, substream(params.seed, 2))?;
        Ok(Self { params, x, wstar, y })
    }

    pub fn paths(dir: &Path, stem: &str) -> InstancePaths {
        InstancePaths {
            data: dir.join(format!("{stem}.csv")),
            wstar: dir.join(format!("{stem}_wstar.csv")),
            meta: dir.join(format!("{stem}.meta")),
        }
    }

    /// Writes `y` and `X` as CSV (header `y,x1,…,xd`), `w*` one value per line,
    /// and a `key = value` metadata file.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<InstancePaths> {
        fs::create_dir_all(dir)?;
        let paths = Self::paths(dir, stem);
        let x = self.x.matrix();
        let mut w = csv::Writer::from_path(&paths.data).map_err(csv_io)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=x.ncols()).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(csv_io)?;
        for i in 0..x.nrows() {
            let mut rec = vec![self.y[i].to_string()];
            rec.extend(x.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        let ws: String = self.wstar.iter().map(|v| format!("{v}\n")).collect();
        fs::write(&paths.wstar, ws)?;
        fs::write(&paths.meta, self.metadata())?;
        Ok(paths)
    }

    pub fn metadata(&self) -> String {
        let p = &self.params;
        let mut out = format!("n = {}\nd = {}\nregime = {}\n", p.n, p.d, p.spectrum.name());
        match p.spectrum {
            SpectrumSpec::Polynomial { q } => out += &format!("q = {q}\n"),
            SpectrumSpec::Exponential { theta } => out += &format!("theta = {theta}\n"),
            SpectrumSpec::Flat => {}
        }
        out += &format!("base = {}\nseed = {}\nsigma = {}\n", p.base.name(), p.seed, p.sigma);
        out
    }

    /// Reads an instance written by [`SyntheticInstance::write`].
    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let paths = Self::paths(dir, stem);
        let meta = parse_metadata(&fs::read_to_string(&paths.meta)?)?;
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Data(format!("metadata lacks {k:?}")));
        let parse_num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|_| Error::Data(format!("metadata value for {k:?} is not a number")))
        };
        let spectrum = match get("regime")?.as_str() {
            "flat" => SpectrumSpec::Flat,
            "polynomial" => SpectrumSpec::Polynomial { q: parse_num("q")? },
            "exponential" => SpectrumSpec::Exponential { theta: parse_num("theta")? },
            other => return Err(Error::Data(format!("unknown regime {other:?}"))),
        };
        let params = SynthParams {
            n: parse_num("n")? as usize,
            d: parse_num("d")? as usize,
            spectrum,
            base: get("base")?.parse()?,
            sigma: parse_num("sigma")?,
            seed: get("seed")?.parse().map_err(|_| Error::Data("metadata seed is not an integer".into()))?,
        };

        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(&paths.data).map_err(csv_io)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                line: i + 2,
                col: None,
                reason: e.to_string(),
            })?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        col: Some(j + 1),
                        reason: format!("not a number: {v:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.len() != params.n || rows.iter().any(|r| r.len() != params.d + 1) {
            return Err(Error::Data("instance CSV does not match the metadata dimensions".into()));
        }
        let y = DVector::from_iterator(params.n, rows.iter().map(|r| r[0]));
        let x = DesignMatrix::new(DMatrix::from_fn(params.n, params.d, |i, j| rows[i][j + 1]))?;
        let wstar = fs::read_to_string(&paths.wstar)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Data(format!("bad w* entry {l:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if wstar.len() != params.d {
            return Err(Error::Data("w* length does not match d".into()));
        }
        Ok(Self {
            params,
            x,
            wstar: DVector::from_vec(wstar),
            y,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstancePaths {
    pub data: PathBuf,
    pub wstar: PathBuf,
    pub meta: PathBuf,
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            col: None,
            reason: "expected key = value".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
