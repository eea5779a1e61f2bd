//! Random reduction matrices `R ∈ ℝ^{d×k}` and empirical checks of the
//! Johnson–Lindenstrauss and subspace-embedding conditions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compute_svd, orthonormality_defect, DesignMatrix};
use crate::rng::{gaussian_vector, stream, substream, StreamRng};

/// Default absolute constants for [`recommended_k`].
pub const DEFAULT_C1: f64 = 4.0;
pub const DEFAULT_C2: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchKind {
    /// i.i.d. `N(0, 1/k)` entries.
    Gaussian,
    /// i.i.d. `±1/√k` entries.
    Rademacher,
    /// `k` distinct canonical basis vectors, uniform without replacement.
    Subsample,
}

impl SketchKind {
    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Gaussian => "gaussian",
            SketchKind::Rademacher => "rademacher",
            SketchKind::Subsample => "subsample",
        }
    }
}

impl std::str::FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(SketchKind::Gaussian),
            "rademacher" => Ok(SketchKind::Rademacher),
            "subsample" => Ok(SketchKind::Subsample),
            other => Err(Error::arg(format!("unknown sketch kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SketchSpec {
    pub kind: SketchKind,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
}

impl SketchSpec {
    pub fn new(kind: SketchKind, d: usize, k: usize, seed: u64) -> Result<Self> {
        let spec = Self { kind, d, k, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 {
            return Err(Error::arg(format!("sketch needs d ≥ 1 and k ≥ 1, got d = {}, k = {}", self.d, self.k)));
        }
        if self.kind == SketchKind::Subsample && self.k > self.d {
            return Err(Error::arg(format!(
                "column subsampling needs k ≤ d, got k = {} > d = {}",
                self.k, self.d
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchEntries {
    Dense(DMatrix<f64>),
    /// Selected column indices `i_1 … i_k`.
    Columns(Vec<usize>),
}

/// A realized reduction matrix. `spec` is `None` for matrices supplied
/// directly by the caller rather than drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    spec: Option<SketchSpec>,
    d: usize,
    entries: SketchEntries,
}

impl SketchMatrix {
    pub fn from_matrix(r: DMatrix<f64>) -> Self {
        Self {
            spec: None,
            d: r.nrows(),
            entries: SketchEntries::Dense(r),
        }
    }

    pub fn spec(&self) -> Option<&SketchSpec> {
        self.spec.as_ref()
    }

    pub fn kind(&self) -> Option<SketchKind> {
        self.spec.map(|s| s.kind)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        match &self.entries {
            SketchEntries::Dense(m) => m.ncols(),
            SketchEntries::Columns(idx) => idx.len(),
        }
    }

    pub fn entries(&self) -> &SketchEntries {
        &self.entries
    }

    pub fn indices(&self) -> Option<&[usize]> {
        match &self.entries {
            SketchEntries::Columns(idx) => Some(idx),
            SketchEntries::Dense(_) => None,
        }
    }

    /// Materialized `d × k` matrix (a 0/1 selector for subsampling).
    pub fn dense(&self) -> DMatrix<f64> {
        match &self.entries {
            SketchEntries::Dense(m) => m.clone(),
            SketchEntries::Columns(idx) => {
                let mut s = DMatrix::zeros(self.d, idx.len());
                for (j, &i) in idx.iter().enumerate() {
                    s[(i, j)] = 1.0;
                }
                s
            }
        }
    }

    /// First `k` columns. Column spaces of prefixes are nested, which the tail
    /// estimator uses to sweep `k` with one draw.
    pub fn prefix(&self, k: usize) -> Result<SketchMatrix> {
        if k == 0 || k > self.k() {
            return Err(Error::arg(format!("prefix width {k} outside 1..={}", self.k())));
        }
        let entries = match &self.entries {
            SketchEntries::Dense(m) => SketchEntries::Dense(m.columns(0, k).into_owned()),
            SketchEntries::Columns(idx) => SketchEntries::Columns(idx[..k].to_vec()),
        };
        Ok(SketchMatrix {
            spec: self.spec.map(|s| s.with_k(k)),
            d: self.d,
            entries,
        })
    }

    /// `Rᵀv`.
    pub fn transpose_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.entries {
            SketchEntries::Dense(m) => m.tr_mul(v),
            SketchEntries::Columns(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i])),
        }
    }

    /// `Rᵀ M` for a `d × m` block.
    pub fn transpose_apply_matrix(&self, mtx: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.entries {
            SketchEntries::Dense(m) => m.tr_mul(mtx),
            SketchEntries::Columns(idx) => mtx.select_rows(idx.iter()),
        }
    }

    /// `R c` for a coefficient vector of length `k`.
    pub fn apply_to_coeffs(&self, c: &DVector<f64>) -> DVector<f64> {
        match &self.entries {
            SketchEntries::Dense(m) => m * c,
            SketchEntries::Columns(idx) => {
                let mut w = DVector::zeros(self.d);
                for (j, &i) in idx.iter().enumerate() {
                    w[i] += c[j];
                }
                w
            }
        }
    }
}

/// Draws the reduction matrix described by `spec`; a pure function of it.
pub fn draw_sketch(spec: &SketchSpec) -> Result<SketchMatrix> {
    spec.validate()?;
    let mut rng = stream(spec.seed);
    let (d, k) = (spec.d, spec.k);
    let entries = match spec.kind {
        SketchKind::Gaussian => {
            SketchEntries::Dense(crate::rng::gaussian_matrix(&mut rng, d, k, 1.0 / (k as f64).sqrt()))
        }
        SketchKind::Rademacher => {
            let a = 1.0 / (k as f64).sqrt();
            SketchEntries::Dense(DMatrix::from_fn(d, k, |_, _| if rng.random::<bool>() { a } else { -a }))
        }
        SketchKind::Subsample => SketchEntries::Columns(partial_fisher_yates(&mut rng, d, k)),
    };
    Ok(SketchMatrix {
        spec: Some(*spec),
        d,
        entries,
    })
}

fn partial_fisher_yates(rng: &mut StreamRng, d: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..d).collect();
    for i in 0..k {
        let j = rng.random_range(i..d);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// `X_R = X·R`; subsampling gathers columns without arithmetic.
pub fn apply_sketch(x: &DesignMatrix, r: &SketchMatrix) -> Result<DMatrix<f64>> {
    apply_sketch_matrix(x.matrix(), r)
}

pub fn apply_sketch_matrix(x: &DMatrix<f64>, r: &SketchMatrix) -> Result<DMatrix<f64>> {
    if x.ncols() != r.d() {
        return Err(Error::arg(format!(
            "design has {} columns but sketch expects d = {}",
            x.ncols(),
            r.d()
        )));
    }
    Ok(match &r.entries {
        SketchEntries::Dense(m) => x * m,
        SketchEntries::Columns(idx) => x.select_columns(idx.iter()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    /// Largest observed distortion over the tested set.
    pub eps_observed: f64,
    pub passed: bool,
    pub tested_points: usize,
    /// Restricted-isometry checks only: worst distortion over random vectors
    /// of the subspace, never larger than `eps_observed`.
    pub probe_distortion: Option<f64>,
}

/// Max over points of `|‖Rᵀv‖²/‖v‖² − 1|`, compared against `eps`.
pub fn jlt_check(r: &SketchMatrix, points: &[DVector<f64>], eps: f64) -> Result<DistortionReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
    }
    if points.is_empty() {
        return Err(Error::arg("jlt_check needs at least one point"));
    }
    let mut worst: f64 = 0.0;
    for (i, v) in points.iter().enumerate() {
        if v.len() != r.d() {
            return Err(Error::arg(format!("point {i} has length {}, expected {}", v.len(), r.d())));
        }
        let norm_sq = v.norm_squared();
        if norm_sq == 0.0 {
            return Err(Error::arg(format!("point {i} is the zero vector; distortion undefined")));
        }
        let ratio = r.transpose_apply(v).norm_squared() / norm_sq;
        worst = worst.max((ratio - 1.0).abs());
    }
    Ok(DistortionReport {
        eps_observed: worst,
        passed: worst <= eps,
        tested_points: points.len(),
        probe_distortion: None,
    })
}

/// Checks `(1 − ε)‖v‖ ≤ ‖Rᵀv‖ ≤ (1 + ε)‖v‖` on all of `span(basis)`.
///
/// Exact via the singular values of `RᵀV`; `probes` random vectors of the
/// subspace are also measured as a consistency check.
pub fn restricted_isometry_check(
    r: &SketchMatrix,
    basis: &DMatrix<f64>,
    eps: f64,
    probes: usize,
) -> Result<DistortionReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::arg(format!("eps must lie in (0, 1), got {eps}")));
    }
    if probes == 0 {
        return Err(Error::arg("need at least one probe"));
    }
    if basis.nrows() != r.d() || basis.ncols() == 0 {
        return Err(Error::arg(format!(
            "basis must be {} x s with s ≥ 1, got {}x{}",
            r.d(),
            basis.nrows(),
            basis.ncols()
        )));
    }
    let defect = orthonormality_defect(basis);
    if defect > 1e-8 {
        return Err(Error::arg(format!("basis is not orthonormal (defect {defect:.3e})")));
    }
    let rv = r.transpose_apply_matrix(basis);
    let s = compute_svd(&rv)?.sigma;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    // A wide RᵀV (k < s) has a nontrivial null space inside the subspace.
    let s_min = if rv.nrows() < rv.ncols() {
        0.0
    } else {
        s.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let eps_observed = (s_max - 1.0).abs().max((1.0 - s_min).abs());

    let probe_seed = substream(r.spec().map_or(0, |s| s.seed), 0x5249_5043);
    let mut rng = stream(probe_seed);
    let mut probe_worst: f64 = 0.0;
    for _ in 0..probes {
        let c = gaussian_vector(&mut rng, basis.ncols());
        let v = basis * c;
        let ratio = r.transpose_apply(&v).norm() / v.norm();
        probe_worst = probe_worst.max((ratio - 1.0).abs());
    }
    Ok(DistortionReport {
        eps_observed,
        passed: eps_observed <= eps,
        tested_points: probes,
        probe_distortion: Some(probe_worst),
    })
}

/// Sketch width sufficient for the JLT and subspace-embedding conditions:
/// `⌈max(c1 ε1⁻² r (ln r + ln n), c2 ε2⁻² ln(1/ε2) max(r, ln n))⌉`.
pub fn recommended_k(r: usize, n: usize, eps1: f64, eps2: f64, c1: f64, c2: f64) -> Result<usize> {
    for (name, e) in [("eps1", eps1), ("eps2", eps2)] {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::arg(format!("{name} must lie in (0, 1), got {e}")));
        }
    }
    if !(c1 > 0.0 && c2 > 0.0) || r == 0 || n == 0 {
        return Err(Error::arg("recommended_k needs r, n ≥ 1 and positive constants"));
    }
    let (rf, nf) = (r as f64, n as f64);
    let jlt = c1 * rf * (rf.ln() + nf.ln()) / (eps1 * eps1);
    let subspace = c2 * (1.0 / eps2).ln() * rf.max(nf.ln()) / (eps2 * eps2);
    Ok(jlt.max(subspace).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    fn gaussian(d: usize, k: usize, seed: u64) -> SketchMatrix {
        draw_sketch(&SketchSpec::new(SketchKind::Gaussian, d, k, seed).unwrap()).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(SketchSpec::new(SketchKind::Subsample, 5, 6, 0).is_err());
        assert!(SketchSpec::new(SketchKind::Gaussian, 5, 6, 0).is_ok());
        assert!(SketchSpec::new(SketchKind::Gaussian, 5, 0, 0).is_err());
    }

    #[test]
    fn full_subsample_is_permutation() {
        let r = draw_sketch(&SketchSpec::new(SketchKind::Subsample, 5, 5, 3).unwrap()).unwrap();
        let mut idx = r.indices().unwrap().to_vec();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        let x = DesignMatrix::new(gaussian_matrix(&mut stream(1), 4, 5, 1.0)).unwrap();
        let xr = apply_sketch(&x, &r).unwrap();
        for (j, &i) in r.indices().unwrap().iter().enumerate() {
            assert_eq!(xr.column(j), x.matrix().column(i));
        }
    }

    #[test]
    fn subsample_selector_is_orthonormal() {
        let r = draw_sketch(&SketchSpec::new(SketchKind::Subsample, 30, 12, 8).unwrap()).unwrap();
        let s = r.dense();
        assert_eq!(s.tr_mul(&s), DMatrix::identity(12, 12));
    }

    #[test]
    fn gaussian_moments() {
        let (d, k) = (1000, 50);
        let r = gaussian(d, k, 11).dense();
        let count = (d * k) as f64;
        let mean = r.sum() / count;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
        let sd = (1.0 / k as f64).sqrt();
        assert!(mean.abs() <= 4.0 * sd / count.sqrt(), "mean {mean}");
        assert!((var - 1.0 / k as f64).abs() <= 0.05 / k as f64, "var {var}");
    }

    #[test]
    fn rademacher_support() {
        let r = draw_sketch(&SketchSpec::new(SketchKind::Rademacher, 10, 3, 5).unwrap()).unwrap();
        let a = 1.0 / 3f64.sqrt();
        assert!(r.dense().iter().all(|&v| v == a || v == -a));
    }

    #[test]
    fn draws_are_reproducible() {
        for kind in [SketchKind::Gaussian, SketchKind::Rademacher, SketchKind::Subsample] {
            let spec = SketchSpec::new(kind, 20, 7, 99).unwrap();
            assert_eq!(draw_sketch(&spec).unwrap(), draw_sketch(&spec).unwrap());
            assert_ne!(draw_sketch(&spec).unwrap(), draw_sketch(&spec.with_seed(100)).unwrap());
        }
    }

    #[test]
    fn apply_identity_design() {
        let r = gaussian(6, 3, 2);
        let x = DesignMatrix::new(DMatrix::identity(6, 6)).unwrap();
        assert_eq!(apply_sketch(&x, &r).unwrap(), r.dense());
        let bad = DesignMatrix::new(DMatrix::identity(5, 5)).unwrap();
        assert!(apply_sketch(&bad, &r).is_err());
    }

    #[test]
    fn apply_matches_naive_product() {
        let x = gaussian_matrix(&mut stream(3), 7, 9, 1.0);
        let r = gaussian(9, 4, 4);
        let rd = r.dense();
        let xr = apply_sketch_matrix(&x, &r).unwrap();
        for i in 0..7 {
            for j in 0..4 {
                let mut acc = 0.0;
                for l in 0..9 {
                    acc += x[(i, l)] * rd[(l, j)];
                }
                assert!((acc - xr[(i, j)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_sketch_has_no_distortion() {
        let q = compute_svd(&gaussian_matrix(&mut stream(5), 8, 8, 1.0)).unwrap().u;
        let r = SketchMatrix::from_matrix(q);
        let points: Vec<_> = (0..5).map(|i| gaussian_vector(&mut stream(10 + i), 8)).collect();
        let rep = jlt_check(&r, &points, 0.1).unwrap();
        assert!(rep.eps_observed < 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn subsample_collapses_unselected_coordinate() {
        let (d, k) = (10, 5);
        let mut seed = 0;
        let r = loop {
            let r = draw_sketch(&SketchSpec::new(SketchKind::Subsample, d, k, seed).unwrap()).unwrap();
            if !r.indices().unwrap().contains(&0) {
                break r;
            }
            seed += 1;
        };
        let mut e1 = DVector::zeros(d);
        e1[0] = 1.0;
        let rep = jlt_check(&r, &[e1], 0.99).unwrap();
        assert_eq!(rep.eps_observed, 1.0);
        assert!(!rep.passed);
    }

    #[test]
    fn jlt_rejects_bad_input() {
        let r = gaussian(4, 2, 0);
        assert!(jlt_check(&r, &[DVector::zeros(4)], 0.5).is_err());
        assert!(jlt_check(&r, &[], 0.5).is_err());
        assert!(jlt_check(&r, &[DVector::from_element(4, 1.0)], 1.5).is_err());
    }

    #[test]
    fn gaussian_jlt_usually_passes() {
        let (d, k) = (500, 200);
        let points: Vec<_> = (0..50).map(|i| gaussian_vector(&mut stream(1000 + i), d)).collect();
        let passes = (0..100)
            .filter(|&s| jlt_check(&gaussian(d, k, s), &points, 0.5).unwrap().passed)
            .count();
        assert!(passes >= 99, "{passes}/100");
    }

    #[test]
    fn jlt_concentration_at_recommended_width() {
        // k = 8 ε⁻² ln m; failure frequency across 200 seeds ≤ 5 %.
        let (d, m, eps) = (300usize, 20usize, 0.5f64);
        let k = (8.0 * (m as f64).ln() / (eps * eps)).ceil() as usize;
        let points: Vec<_> = (0..m as u64).map(|i| gaussian_vector(&mut stream(2000 + i), d)).collect();
        let failures = (0..200)
            .filter(|&s| !jlt_check(&gaussian(d, k, 5000 + s), &points, eps).unwrap().passed)
            .count();
        assert!(failures <= 10, "{failures}/200");
    }

    #[test]
    fn rip_on_exact_isometry() {
        let basis = compute_svd(&gaussian_matrix(&mut stream(6), 12, 3, 1.0)).unwrap().u;
        // R = [V_r, 0]: RᵀV_r = I.
        let mut r = DMatrix::zeros(12, 5);
        r.columns_mut(0, 3).copy_from(&basis);
        let rep = restricted_isometry_check(&SketchMatrix::from_matrix(r), &basis, 0.1, 20).unwrap();
        assert!(rep.eps_observed < 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn rip_single_vector() {
        let r = gaussian(6, 4, 12);
        let mut e1 = DMatrix::zeros(6, 1);
        e1[(0, 0)] = 1.0;
        let rep = restricted_isometry_check(&r, &e1, 0.5, 5).unwrap();
        let row_norm = r.dense().row(0).norm();
        assert!((rep.eps_observed - (row_norm - 1.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn rip_rejects_non_orthonormal_basis() {
        let r = gaussian(6, 4, 1);
        let b = DMatrix::from_element(6, 1, 1.0);
        assert!(restricted_isometry_check(&r, &b, 0.5, 5).is_err());
    }

    #[test]
    fn rip_probe_never_exceeds_exact() {
        for seed in 0..30 {
            let basis = compute_svd(&gaussian_matrix(&mut stream(100 + seed), 40, 4, 1.0)).unwrap().u;
            let rep = restricted_isometry_check(&gaussian(40, 10, seed), &basis, 0.9, 50).unwrap();
            assert!(rep.probe_distortion.unwrap() <= rep.eps_observed + 1e-12);
        }
    }

    #[test]
    fn rip_at_recommended_width() {
        let (n, r) = (100, 5);
        let k = recommended_k(r, n, 0.5, 0.5, DEFAULT_C1, DEFAULT_C2).unwrap();
        let d = 400;
        let basis = compute_svd(&gaussian_matrix(&mut stream(77), d, r, 1.0)).unwrap().u;
        let passes = (0..100)
            .filter(|&s| restricted_isometry_check(&gaussian(d, k, 300 + s), &basis, 0.5, 10).unwrap().passed)
            .count();
        assert!(passes >= 95, "{passes}/100 at k = {k}");
    }

    #[test]
    fn recommended_k_formula() {
        let direct = (4.0 * 10.0 * (10f64.ln() + 1000f64.ln()))
            .max(4.0 * 2f64.ln() * 10f64.max(1000f64.ln()));
        assert_eq!(recommended_k(10, 1000, 0.5, 0.5, 1.0, 1.0).unwrap(), direct.ceil() as usize);
        let base = recommended_k(40, 1000, 0.5, 0.5, 1.0, 1.0).unwrap();
        assert!(recommended_k(80, 1000, 0.5, 0.5, 1.0, 1.0).unwrap() >= 2 * base);
        // ε1 halved: the JLT branch quadruples.
        let jlt = |e: f64| 40.0 * (40f64.ln() + 1000f64.ln()) / (e * e);
        assert!((jlt(0.25) / jlt(0.5) - 4.0).abs() < 1e-12);
        assert!(recommended_k(40, 1000, 0.25, 0.5, 1.0, 1.0).unwrap() >= 4 * base - 4);
        assert!(recommended_k(3, 10, 1.5, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn subsample_outer_product_mean() {
        // E[SSᵀ] = (k/d) I
        let (d, k, b) = (8, 3, 20000);
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for s in 0..b {
            let sm = draw_sketch(&SketchSpec::new(SketchKind::Subsample, d, k, s).unwrap()).unwrap().dense();
            acc += &sm * sm.transpose();
        }
        acc /= b as f64;
        for i in 0..d {
            assert!((acc[(i, i)] - k as f64 / d as f64).abs() < 4.0 * (0.375f64 * 0.625 / b as f64).sqrt());
            for j in 0..d {
                if i != j {
                    assert_eq!(acc[(i, j)], 0.0);
                }
            }
        }
    }
}
