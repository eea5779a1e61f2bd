//! The averaged projector `𝒫_k = E[P_{XR}]`, estimated from an ensemble of
//! sketches, and the closed forms for the bias and variance of averaging.
//!
//! All averaging happens in the basis of left singular vectors: each member
//! contributes `UᵀP_bU = (UᵀQ_b)(UᵀQ_b)ᵀ`, a `(d∧n) × (d∧n)` matrix, so no
//! `n × n` projector is ever formed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{DesignMatrix, OrthoBasis};
use crate::regress::member_seed;
use crate::risk::{GroundTruth, McEstimate, RunningStats};
use crate::rng::substream2;
use crate::sketch::{apply_sketch, draw_sketch, SketchKind, SketchSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMeanEstimate {
    /// Requested ensemble size.
    pub b: usize,
    /// Members with `rank(X_R) = k` that entered the average.
    pub used: usize,
    pub degenerate_count: usize,
    pub k: usize,
    /// `Uᵀ 𝒫̂_k U`.
    pub pk_u: DMatrix<f64>,
    /// Diagonal of `pk_u`.
    pub eta_hat: DVector<f64>,
    /// Largest off-diagonal magnitude of `pk_u`.
    pub offdiag_max: f64,
    /// The sketch is not Gaussian, so the `η` theory does not apply.
    pub non_gaussian_warning: bool,
}

impl ProjectorMeanEstimate {
    /// `U (Uᵀ𝒫̂_kU) Uᵀ`, the `n × n` averaged projector, for small checks.
    pub fn dense(&self, x: &DesignMatrix) -> Result<DMatrix<f64>> {
        let u = &x.svd()?.u;
        Ok(u * &self.pk_u * u.transpose())
    }
}

/// `UᵀQ` for member `b`, or `None` if the draw is rank deficient.
fn member_coords(x: &DesignMatrix, u: &DMatrix<f64>, spec: &SketchSpec, b: usize) -> Result<Option<DMatrix<f64>>> {
    let sketch = draw_sketch(&spec.with_seed(member_seed(spec.seed, b)))?;
    let basis = OrthoBasis::of_colspace(&apply_sketch(x, &sketch)?)?;
    if basis.rank() < spec.k {
        return Ok(None);
    }
    Ok(Some(u.tr_mul(basis.q())))
}

/// Averages `UᵀP_bU` over `B` sketches drawn from `spec`, with member seeds
/// as in [`crate::regress::fit_averaged`].
pub fn estimate_projector_mean(x: &DesignMatrix, spec: &SketchSpec, b: usize) -> Result<ProjectorMeanEstimate> {
    if b == 0 {
        return Err(Error::arg("ensemble needs B ≥ 1"));
    }
    if spec.d != x.ncols() {
        return Err(Error::arg(format!("sketch d = {} but design has {} columns", spec.d, x.ncols())));
    }
    spec.validate()?;
    let u = &x.svd()?.u;
    let m = u.ncols();
    let members: Vec<Option<DMatrix<f64>>> = (0..b)
        .into_par_iter()
        .map(|i| member_coords(x, u, spec, i))
        .collect::<Result<_>>()?;

    let mut sum = DMatrix::zeros(m, m);
    let mut used = 0;
    for c in members.iter().flatten() {
        sum += c * c.transpose();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Numerical {
            rows: x.nrows(),
            cols: spec.k,
            reason: "every ensemble member was rank deficient".into(),
        });
    }
    let pk_u = (&sum + sum.transpose()) / (2.0 * used as f64);
    let eta_hat = pk_u.diagonal();
    let mut offdiag_max: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                offdiag_max = offdiag_max.max(pk_u[(i, j)].abs());
            }
        }
    }
    Ok(ProjectorMeanEstimate {
        b,
        used,
        degenerate_count: b - used,
        k: spec.k,
        pk_u,
        eta_hat,
        offdiag_max,
        non_gaussian_warning: spec.kind != SketchKind::Gaussian,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedRisk {
    /// `(1/n) Σ (α*_j)² σ_j² (1 − η_j)²`.
    pub bias_pk: f64,
    /// `(σ²/n) Σ η_j²`.
    pub var_pk: f64,
    /// `(1/n) Σ (α*_j)² σ_j² (1 − η_j)`, the mean bias of a single projection.
    pub bias_single_mean: f64,
}

pub fn averaged_bias_and_variance(x: &DesignMatrix, truth: &GroundTruth, est: &ProjectorMeanEstimate) -> Result<AveragedRisk> {
    let svd = x.svd()?;
    if est.eta_hat.len() != svd.width() {
        return Err(Error::arg("η estimate does not match the design"));
    }
    let nf = x.nrows() as f64;
    let (mut bias_pk, mut bias_single, mut eta_sq) = (0.0, 0.0, 0.0);
    for j in 0..svd.width() {
        let e = truth.alphastar[j] * truth.alphastar[j] * svd.sigma[j] * svd.sigma[j];
        let eta = est.eta_hat[j];
        bias_pk += e * (1.0 - eta) * (1.0 - eta);
        bias_single += e * (1.0 - eta);
        eta_sq += eta * eta;
    }
    Ok(AveragedRisk {
        bias_pk: bias_pk / nf,
        var_pk: truth.sigma * truth.sigma * eta_sq / nf,
        bias_single_mean: bias_single / nf,
    })
}

/// `Σ_ℓ cos²θ_ℓ = ‖QᵀQ′‖_F²` for two orthonormal bases.
pub fn cos2_sum(a: &OrthoBasis, b: &OrthoBasis) -> f64 {
    a.q().tr_mul(b.q()).norm_squared()
}

/// Monte-Carlo mean of `Σ cos²θ_ℓ(range(XR), range(XR′))` over independent
/// pairs; it estimates `Σ η_j²`.
pub fn canonical_angle_variance(x: &DesignMatrix, spec: &SketchSpec, pairs: usize, seed: u64) -> Result<McEstimate> {
    if pairs < 2 {
        return Err(Error::arg("need at least two pairs"));
    }
    let basis = |s: u64| -> Result<OrthoBasis> {
        let sketch = draw_sketch(&spec.with_seed(s))?;
        OrthoBasis::of_colspace(&apply_sketch(x, &sketch)?)
    };
    let values: Vec<f64> = (0..pairs)
        .into_par_iter()
        .map(|i| Ok(cos2_sum(&basis(substream2(seed, i as u64, 0))?, &basis(substream2(seed, i as u64, 1))?)))
        .collect::<Result<_>>()?;
    let mut stats = RunningStats::default();
    for v in values {
        stats.push(v);
    }
    Ok(stats.estimate())
}

/// Rows `(j, σ_j, η̂_j)` with `j` starting at 1.
pub fn eta_table(x: &DesignMatrix, est: &ProjectorMeanEstimate) -> Result<Vec<(usize, f64, f64)>> {
    let s = &x.svd()?.sigma;
    Ok((0..est.eta_hat.len()).map(|j| (j + 1, s[j], est.eta_hat[j])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, gaussian_vector, stream};

    fn gaussian(seed: u64, n: usize, d: usize) -> DesignMatrix {
        DesignMatrix::new(gaussian_matrix(&mut stream(seed), n, d, 1.0)).unwrap()
    }

    /// `√n · Q` with `Q` orthonormal, so every singular value equals `√n`.
    fn flat(seed: u64, n: usize, d: usize) -> DesignMatrix {
        let q = OrthoBasis::of_colspace(&gaussian_matrix(&mut stream(seed), n, d, 1.0)).unwrap();
        DesignMatrix::new(q.q() * (n as f64).sqrt()).unwrap()
    }

    /// Design with the given spectrum and random singular vectors.
    fn with_spectrum(seed: u64, n: usize, d: usize, spec: &[f64]) -> DesignMatrix {
        let u = OrthoBasis::of_colspace(&gaussian_matrix(&mut stream(seed), n, d, 1.0)).unwrap();
        let v = OrthoBasis::of_colspace(&gaussian_matrix(&mut stream(seed + 1), d, d, 1.0)).unwrap();
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(spec));
        DesignMatrix::new(u.q() * s * v.q().transpose()).unwrap()
    }

    fn gspec(d: usize, k: usize, seed: u64) -> SketchSpec {
        SketchSpec::new(SketchKind::Gaussian, d, k, seed).unwrap()
    }

    #[test]
    fn full_width_sketch_gives_identity() {
        let x = gaussian(1, 20, 8);
        let est = estimate_projector_mean(&x, &gspec(8, 8, 2), 5).unwrap();
        for e in est.eta_hat.iter() {
            assert!((e - 1.0).abs() < 1e-10);
        }
        assert!(est.offdiag_max <= 1e-10);
        assert_eq!(est.degenerate_count, 0);
    }

    #[test]
    fn eta_sums_to_k() {
        let x = gaussian(3, 30, 12);
        for b in [1, 7, 64] {
            let est = estimate_projector_mean(&x, &gspec(12, 5, 4), b).unwrap();
            assert!((est.eta_hat.sum() - 5.0).abs() <= 1e-8);
            assert!(est.eta_hat.iter().all(|&e| (-1e-12..=1.0 + 1e-12).contains(&e)));
        }
    }

    #[test]
    fn averaged_projector_is_symmetric_with_unit_spectrum() {
        let x = gaussian(5, 15, 9);
        let est = estimate_projector_mean(&x, &gspec(9, 3, 6), 40).unwrap();
        let p = est.dense(&x).unwrap();
        assert!((&p - p.transpose()).amax() <= 1e-10);
        for ev in p.symmetric_eigenvalues().iter() {
            assert!((-1e-8..=1.0 + 1e-8).contains(ev));
        }
        assert!((p.trace() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn flat_spectrum_gives_uniform_eta() {
        let x = flat(7, 40, 20);
        let est = estimate_projector_mean(&x, &gspec(20, 5, 8), 4000).unwrap();
        for e in est.eta_hat.iter() {
            assert!((e - 0.25).abs() < 0.04, "{e}");
        }
    }

    #[test]
    fn eta_depends_only_on_spectrum() {
        let spec: Vec<f64> = (1..=12).map(|j| 10.0 / j as f64).collect();
        let a = estimate_projector_mean(&with_spectrum(10, 30, 12, &spec), &gspec(12, 4, 1), 3000).unwrap();
        let b = estimate_projector_mean(&with_spectrum(20, 30, 12, &spec), &gspec(12, 4, 2), 3000).unwrap();
        for (x, y) in a.eta_hat.iter().zip(b.eta_hat.iter()) {
            assert!((x - y).abs() < 0.05, "{x} vs {y}");
        }
        // Larger singular values are kept more often.
        assert!(a.eta_hat[0] > a.eta_hat[11]);
    }

    #[test]
    fn offdiagonal_shrinks_with_ensemble_size() {
        let mut wins = 0;
        for seed in 0..20u64 {
            let x = gaussian(100 + seed, 20, 10);
            let small = estimate_projector_mean(&x, &gspec(10, 3, seed), 64).unwrap();
            let large = estimate_projector_mean(&x, &gspec(10, 3, seed + 1000), 4096).unwrap();
            if large.offdiag_max < small.offdiag_max {
                wins += 1;
            }
        }
        assert!(wins >= 19, "{wins}/20");
    }

    #[test]
    fn degenerate_members_are_counted() {
        let x = DesignMatrix::new(gaussian_matrix(&mut stream(9), 10, 2, 1.0) * gaussian_matrix(&mut stream(10), 2, 6, 1.0)).unwrap();
        let est = estimate_projector_mean(&x, &gspec(6, 3, 0), 5).unwrap_err();
        assert!(matches!(est, Error::Numerical { .. }));
    }

    #[test]
    fn non_gaussian_sketches_are_flagged() {
        let x = gaussian(11, 20, 10);
        let spec = SketchSpec::new(SketchKind::Subsample, 10, 4, 0).unwrap();
        let est = estimate_projector_mean(&x, &spec, 10).unwrap();
        assert!(est.non_gaussian_warning);
        assert!((est.eta_hat.sum() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn averaged_risk_examples() {
        let x = gaussian(12, 25, 10);
        let truth = GroundTruth::new(&x, gaussian_vector(&mut stream(13), 10), 0.6).unwrap();
        let full = estimate_projector_mean(&x, &gspec(10, 10, 1), 2).unwrap();
        let r = averaged_bias_and_variance(&x, &truth, &full).unwrap();
        assert!(r.bias_pk.abs() < 1e-20);
        assert!((r.var_pk - 0.36 * 10.0 / 25.0).abs() < 1e-10);

        for k in 1..10 {
            let est = estimate_projector_mean(&x, &gspec(10, k, k as u64), 50).unwrap();
            let r = averaged_bias_and_variance(&x, &truth, &est).unwrap();
            assert!(r.bias_pk <= r.bias_single_mean);
        }

        let xf = flat(14, 30, 12);
        let tf = GroundTruth::new(&xf, gaussian_vector(&mut stream(15), 12), 1.0).unwrap();
        let mut est = estimate_projector_mean(&xf, &gspec(12, 3, 1), 2).unwrap();
        est.eta_hat = DVector::from_element(12, 0.25);
        let r = averaged_bias_and_variance(&xf, &tf, &est).unwrap();
        assert!((r.var_pk - 9.0 / (12.0 * 30.0)).abs() < 1e-14);
    }

    #[test]
    fn canonical_angles_of_identical_and_full_ranges() {
        let x = gaussian(16, 20, 10);
        let s = draw_sketch(&gspec(10, 4, 3)).unwrap();
        let b = OrthoBasis::of_colspace(&apply_sketch(&x, &s).unwrap()).unwrap();
        assert!((cos2_sum(&b, &b) - 4.0).abs() < 1e-12);

        let low = DesignMatrix::new(gaussian_matrix(&mut stream(17), 20, 3, 1.0) * gaussian_matrix(&mut stream(18), 3, 10, 1.0)).unwrap();
        let mc = canonical_angle_variance(&low, &gspec(10, 5, 0), 20, 4).unwrap();
        assert!((mc.mean - 3.0).abs() < 1e-10);
        assert!(mc.stderr < 1e-10);
        assert!(canonical_angle_variance(&x, &gspec(10, 2, 0), 1, 0).is_err());
    }

    #[test]
    fn canonical_angles_match_eta() {
        let spec: Vec<f64> = (1..=10).map(|j| 8.0 / j as f64).collect();
        let x = with_spectrum(30, 25, 10, &spec);
        let est = estimate_projector_mean(&x, &gspec(10, 3, 5), 4000).unwrap();
        let mc = canonical_angle_variance(&x, &gspec(10, 3, 6), 4000, 7).unwrap();
        let target = est.eta_hat.norm_squared();
        assert!((mc.mean - target).abs() <= 3.0 * mc.stderr + 1e-3, "{} vs {target} ± {}", mc.mean, mc.stderr);
    }

    #[test]
    fn eta_table_rows() {
        let x = gaussian(19, 8, 4);
        let est = estimate_projector_mean(&x, &gspec(4, 2, 0), 3).unwrap();
        let t = eta_table(&x, &est).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t[0].0, 1);
        assert!(t[0].1 >= t[3].1);
    }
}
