//! Randomized estimation of the tail energy `δ²_R = ‖(I − P_{X_R})X‖_F²`.
//!
//! The estimator averages `‖Xω − P_{X_R}Xω‖²` over `L` standard Gaussian
//! probes `ω ∈ ℝ^d`. Probe images `Z = XΩ` are formed once and reused for
//! every `k` on the grid, and the basis of `col(X_R)` is grown one sketch
//! column at a time, so a whole `k` sweep costs little more than one fit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{rank_cutoff, DesignMatrix, OrthoBasis};
use crate::risk::{McEstimate, RunningStats};
use crate::rng::{gaussian_matrix, stream, substream};
use crate::sketch::{apply_sketch, draw_sketch, SketchMatrix, SketchSpec};

/// A per-probe residual below this fraction of `‖Xω‖²` is reported as zero,
/// so that `k ≥ rank(X)` yields an estimate of exactly zero despite rounding.
pub const EXACT_ZERO_RTOL: f64 = 1e-12;

/// Smallest `L` with `ℙ(cδ² ≤ δ̂² ≤ Cδ²) ≥ 0.96`:
/// `⌈max(16/(1 − c)², 144/(C − 1)²)⌉`.
pub fn required_probe_count(c: f64, big_c: f64) -> Result<usize> {
    if !(c > 0.0 && c < 1.0 && big_c > 1.0 && big_c.is_finite()) {
        return Err(Error::arg(format!("need 0 < c < 1 < C, got c = {c}, C = {big_c}")));
    }
    let lower = 16.0 / ((1.0 - c) * (1.0 - c));
    let upper = 144.0 / ((big_c - 1.0) * (big_c - 1.0));
    let l = lower.max(upper);
    // Guard against 36.000000000000004 style rounding before taking the ceiling.
    let rounded = l.round();
    let count = if (l - rounded).abs() <= 1e-9 * rounded { rounded } else { l.ceil() };
    if count > usize::MAX as f64 {
        return Err(Error::arg("probe count overflows"));
    }
    Ok(count as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TailOptions {
    /// One draw at the largest `k`, with smaller `k` using its leading columns.
    pub nested: bool,
    /// Fresh probes for every grid point instead of one shared set.
    pub refresh_probes: bool,
    /// Also compute `δ²_R` exactly for every grid point.
    pub with_exact: bool,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            nested: true,
            refresh_probes: false,
            with_exact: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub k_grid: Vec<usize>,
    pub estimates: Vec<f64>,
    pub exact: Option<Vec<f64>>,
    pub probes: usize,
    pub probe_seed: u64,
    pub sketch_seed: u64,
    pub nested: bool,
    pub shared_probes: bool,
}

/// Orthonormal basis grown column by column with two passes of classical
/// Gram–Schmidt; numerically dependent columns are skipped.
#[derive(Debug, Clone)]
pub struct IncrementalBasis {
    q: DMatrix<f64>,
    rank: usize,
    cutoff: f64,
}

impl IncrementalBasis {
    /// `cutoff` is the absolute residual norm below which a column counts as dependent.
    pub fn new(rows: usize, capacity: usize, cutoff: f64) -> Self {
        Self {
            q: DMatrix::zeros(rows, capacity),
            rank: 0,
            cutoff,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn q(&self) -> DMatrix<f64> {
        self.q.columns(0, self.rank).into_owned()
    }

    /// Returns whether the column extended the basis.
    pub fn push(&mut self, col: &DVector<f64>) -> bool {
        let mut v = col.clone();
        for _ in 0..2 {
            if self.rank > 0 {
                let basis = self.q.columns(0, self.rank);
                let c = basis.tr_mul(&v);
                v -= basis * c;
            }
        }
        let norm = v.norm();
        if norm <= self.cutoff || norm == 0.0 {
            return false;
        }
        if self.rank == self.q.ncols() {
            self.q = self.q.clone().insert_column(self.rank, 0.0);
        }
        self.q.set_column(self.rank, &(v / norm));
        self.rank += 1;
        true
    }
}

/// Builds the basis of `col(X_R)` and records its rank after each sketch column.
fn grow_basis(xr: &DMatrix<f64>) -> (IncrementalBasis, Vec<usize>) {
    let (n, k) = xr.shape();
    let max_norm = xr.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis = IncrementalBasis::new(n, k, rank_cutoff(max_norm, n, k));
    let mut ranks = Vec::with_capacity(k + 1);
    ranks.push(0);
    for j in 0..k {
        basis.push(&xr.column(j).into_owned());
        ranks.push(basis.rank());
    }
    (basis, ranks)
}

/// Per-probe `‖z‖²` and the running sums `Σ_{j<m} (q_jᵀz)²` for every `m`.
struct ProbeEnergy {
    total: Vec<f64>,
    /// `captured[m][l]`, `m = 0..=rank`.
    captured: Vec<Vec<f64>>,
}

impl ProbeEnergy {
    fn new(z: &DMatrix<f64>, q: &DMatrix<f64>) -> Self {
        let total: Vec<f64> = z.column_iter().map(|c| c.norm_squared()).collect();
        let coeffs = q.tr_mul(z);
        let mut captured = Vec::with_capacity(q.ncols() + 1);
        let mut acc = vec![0.0; z.ncols()];
        captured.push(acc.clone());
        for j in 0..q.ncols() {
            for (l, a) in acc.iter_mut().enumerate() {
                let c = coeffs[(j, l)];
                *a += c * c;
            }
            captured.push(acc.clone());
        }
        Self { total, captured }
    }

    /// `(1/L) Σ_l ‖(I − P)z_l‖²` for the first `m` basis vectors.
    fn estimate(&self, m: usize) -> f64 {
        let cap = &self.captured[m];
        let sum: f64 = self
            .total
            .iter()
            .zip(cap)
            .map(|(&t, &c)| {
                let r = t - c;
                if r <= EXACT_ZERO_RTOL * t {
                    0.0
                } else {
                    r
                }
            })
            .sum();
        sum / self.total.len() as f64
    }
}

fn probe_images(x: &DesignMatrix, probes: usize, seed: u64) -> DMatrix<f64> {
    x.matrix() * gaussian_matrix(&mut stream(seed), x.ncols(), probes, 1.0)
}

/// Single-probe-set estimate `(1/L) Σ_l ‖Xω_l − P Xω_l‖²` for a fixed basis.
pub fn probe_estimate(x: &DesignMatrix, basis: &OrthoBasis, probes: usize, seed: u64) -> Result<f64> {
    if probes == 0 {
        return Err(Error::arg("need at least one probe"));
    }
    let z = probe_images(x, probes, seed);
    let energy = ProbeEnergy::new(&z, basis.q());
    Ok(energy.estimate(basis.rank()))
}

/// Estimates `δ²_R` on a grid of `k`. The spec supplies kind, `d` and the
/// sketch seed; its `k` is ignored. `k = 0` means no reduction (an empty basis).
pub fn estimate_delta_sq(
    x: &DesignMatrix,
    spec: &SketchSpec,
    k_grid: &[usize],
    probes: usize,
    probe_seed: u64,
    opts: TailOptions,
) -> Result<TailEstimate> {
    if probes == 0 {
        return Err(Error::arg("need at least one probe"));
    }
    if k_grid.is_empty() {
        return Err(Error::arg("k grid is empty"));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("k grid must be strictly increasing"));
    }
    if spec.d != x.ncols() {
        return Err(Error::arg(format!("sketch d = {} but design has {} columns", spec.d, x.ncols())));
    }
    let k_max = *k_grid.last().expect("non-empty grid");
    if k_max > 0 {
        spec.with_k(k_max).validate()?;
    }

    let shared = (!opts.refresh_probes).then(|| probe_images(x, probes, probe_seed));
    let mut estimates = Vec::with_capacity(k_grid.len());
    let mut exact = opts.with_exact.then(Vec::new);

    let mut record = |k: usize, xr: &DMatrix<f64>, q: &DMatrix<f64>, m: usize| {
        let z = match &shared {
            Some(z) => z.clone(),
            None => probe_images(x, probes, substream(probe_seed, k as u64)),
        };
        estimates.push(ProbeEnergy::new(&z, q).estimate(m));
        if let Some(ex) = exact.as_mut() {
            ex.push(exact_delta_sq_reduced(x.matrix(), xr));
        }
    };

    if opts.nested {
        let full = if k_max > 0 {
            Some(draw_sketch(&spec.with_k(k_max))?)
        } else {
            None
        };
        let xr_full = match &full {
            Some(s) => apply_sketch(x, s)?,
            None => DMatrix::zeros(x.nrows(), 0),
        };
        let (basis, ranks) = grow_basis(&xr_full);
        let q = basis.q();
        for &k in k_grid {
            let xr = xr_full.columns(0, k).into_owned();
            record(k, &xr, &q, ranks[k]);
        }
    } else {
        for &k in k_grid {
            let xr = if k == 0 {
                DMatrix::zeros(x.nrows(), 0)
            } else {
                let s = draw_sketch(&spec.with_k(k).with_seed(substream(spec.seed, k as u64)))?;
                apply_sketch(x, &s)?
            };
            let (basis, ranks) = grow_basis(&xr);
            record(k, &xr, &basis.q(), ranks[k]);
        }
    }

    Ok(TailEstimate {
        k_grid: k_grid.to_vec(),
        estimates,
        exact,
        probes,
        probe_seed,
        sketch_seed: spec.seed,
        nested: opts.nested,
        shared_probes: !opts.refresh_probes,
    })
}

fn exact_delta_sq_reduced(x: &DMatrix<f64>, xr: &DMatrix<f64>) -> f64 {
    match OrthoBasis::of_colspace(xr) {
        Ok(b) => b.residual_fro_sq(x),
        Err(_) => f64::NAN,
    }
}

/// `‖(I − P_{X_R})X‖_F²` through an orthonormal factor of `X_R`.
pub fn exact_delta_sq(x: &DesignMatrix, sketch: &SketchMatrix) -> Result<f64> {
    let xr = apply_sketch(x, sketch)?;
    Ok(OrthoBasis::of_colspace(&xr)?.residual_fro_sq(x.matrix()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Fraction of probe sets with `cδ² ≤ δ̂² ≤ Cδ²`; `None` when `δ² = 0`.
    pub rate: Option<f64>,
    pub trials: usize,
    pub probes: usize,
    pub exact: f64,
    /// `δ² = 0`, so the interval collapses and no rate is reported.
    pub degenerate: bool,
}

/// Empirical coverage of `[cδ², Cδ²]` over independent probe sets for one
/// fixed sketch, with `L = required_probe_count(c, C)`.
pub fn coverage_experiment(
    x: &DesignMatrix,
    sketch: &SketchMatrix,
    c: f64,
    big_c: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    let probes = required_probe_count(c, big_c)?;
    if trials == 0 {
        return Err(Error::arg("need at least one trial"));
    }
    let basis = OrthoBasis::of_colspace(&apply_sketch(x, sketch)?)?;
    let exact = basis.residual_fro_sq(x.matrix());
    if exact <= EXACT_ZERO_RTOL * x.frobenius_sq() {
        return Ok(CoverageReport {
            rate: None,
            trials,
            probes,
            exact,
            degenerate: true,
        });
    }
    let mut hits = 0usize;
    for t in 0..trials {
        let est = probe_estimate(x, &basis, probes, substream(seed, t as u64))?;
        if c * exact <= est && est <= big_c * exact {
            hits += 1;
        }
    }
    Ok(CoverageReport {
        rate: Some(hits as f64 / trials as f64),
        trials,
        probes,
        exact,
        degenerate: false,
    })
}

/// Mean and standard error of the estimate over independent probe sets.
pub fn estimator_mean(x: &DesignMatrix, sketch: &SketchMatrix, probes: usize, sets: usize, seed: u64) -> Result<McEstimate> {
    let basis = OrthoBasis::of_colspace(&apply_sketch(x, sketch)?)?;
    let mut stats = RunningStats::default();
    for t in 0..sets {
        stats.push(probe_estimate(x, &basis, probes, substream(seed, t as u64))?);
    }
    Ok(stats.estimate())
}
