//! Dense linear algebra: SVD, rank-r truncation, projectors, minimum-norm
//! least squares and tail-energy functionals.
//!
//! Every rank decision uses the same numerical cutoff,
//! `ε_mach · σ_1 · max(rows, cols)`. Projectors are never materialized as
//! `n × n` matrices; an [`OrthoBasis`] holds the orthonormal factor and
//! applies `Q(QᵀY)`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense `n × d` design matrix with a lazily computed SVD.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    data: DMatrix<f64>,
    svd: OnceLock<SvdFactors>,
}

impl DesignMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::arg(format!(
                "design matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::arg(format!("non-finite entry at ({i}, {j})")));
        }
        Ok(Self {
            data,
            svd: OnceLock::new(),
        })
    }

    pub fn from_row_slice(n: usize, d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * d {
            return Err(Error::arg(format!(
                "expected {} entries for {n}x{d}, got {}",
                n * d,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, d, entries))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// `d ∧ n`, the width of the thin SVD.
    pub fn width(&self) -> usize {
        self.nrows().min(self.ncols())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Thin SVD, computed on first use and cached.
    pub fn svd(&self) -> Result<&SvdFactors> {
        if let Some(f) = self.svd.get() {
            return Ok(f);
        }
        let factors = compute_svd(&self.data)?;
        // A concurrent caller may have won the race; both results are identical.
        let _ = self.svd.set(factors);
        Ok(self.svd.get().expect("svd cache populated"))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.norm_squared()
    }
}

/// Thin SVD `X = U Σ Vᵀ` of width `d ∧ n`.
///
/// Singular values are nonincreasing; ties keep the solver's original order.
/// Each right singular vector has its largest-magnitude entry positive (lowest
/// index wins ties), with the matching left vector flipped alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn width(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v.transpose()
    }

    /// Numerical rank under the crate-wide cutoff.
    pub fn rank(&self) -> usize {
        let cutoff = rank_cutoff(self.sigma.get(0).copied().unwrap_or(0.0), self.u.nrows(), self.v.nrows());
        self.sigma.iter().filter(|&&s| s > cutoff).count()
    }

    /// Squared singular values `σ_j²`.
    pub fn sigma_sq(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }

    pub fn partition(&self, r: usize) -> Result<SpectralPartition> {
        check_truncation(r, self.width())?;
        let m = self.width();
        Ok(SpectralPartition {
            r,
            head: SvdBlock {
                u: self.u.columns(0, r).into_owned(),
                sigma: self.sigma.rows(0, r).into_owned(),
                v: self.v.columns(0, r).into_owned(),
            },
            tail: SvdBlock {
                u: self.u.columns(r, m - r).into_owned(),
                sigma: self.sigma.rows(r, m - r).into_owned(),
                v: self.v.columns(r, m - r).into_owned(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdBlock {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdBlock {
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

/// Head `(U_r, Σ_r, V_r)` and tail `(U_{r+}, Σ_{r+}, V_{r+})` of an SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPartition {
    pub r: usize,
    pub head: SvdBlock,
    pub tail: SvdBlock,
}

fn check_truncation(r: usize, width: usize) -> Result<()> {
    if r == 0 || r > width {
        return Err(Error::arg(format!("truncation level r = {r} outside 1..={width}")));
    }
    Ok(())
}

pub fn rank_cutoff(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    f64::EPSILON * sigma_max * rows.max(cols) as f64
}

/// Thin SVD with the deterministic ordering and sign convention described on
/// [`SvdFactors`].
pub fn compute_svd(x: &DMatrix<f64>) -> Result<SvdFactors> {
    let (n, d) = x.shape();
    let fail = |reason: &str| Error::Numerical {
        rows: n,
        cols: d,
        reason: reason.to_string(),
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite entries"));
    }
    let m = n.min(d);
    if m == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(n, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(d, 0),
        });
    }
    let f = faer::Mat::<f64>::from_fn(n, d, |i, j| x[(i, j)]);
    let svd = f.thin_svd().map_err(|_| fail("SVD iteration did not converge"))?;
    let (fu, fv) = (svd.U(), svd.V());
    let fs = svd.S().column_vector();
    let u_raw = DMatrix::from_fn(n, m, |i, j| fu[(i, j)]);
    let v_raw = DMatrix::from_fn(d, m, |i, j| fv[(i, j)]);
    let s_raw = DVector::from_fn(m, |i, _| fs[i]);

    let mut order: Vec<usize> = (0..m).collect();
    // Stable: equal singular values keep their original index order.
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));

    let mut u = DMatrix::zeros(n, m);
    let mut v = DMatrix::zeros(d, m);
    let mut sigma = DVector::zeros(m);
    for (dst, &src) in order.iter().enumerate() {
        let vc = v_raw.column(src);
        let mut lead = 0;
        for i in 1..d {
            if vc[i].abs() > vc[lead].abs() {
                lead = i;
            }
        }
        let sign = if vc[lead] < 0.0 { -1.0 } else { 1.0 };
        v.set_column(dst, &(vc * sign));
        u.set_column(dst, &(u_raw.column(src) * sign));
        sigma[dst] = s_raw[src].max(0.0);
    }
    Ok(SvdFactors { u, sigma, v })
}

/// Best rank-`r` approximation `T_r = U_rΣ_rV_rᵀ` and the remainder
/// `Δ_r = X − T_r = U_{r+}Σ_{r+}V_{r+}ᵀ`.
pub fn truncate(svd: &SvdFactors, r: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let part = svd.partition(r)?;
    Ok((part.head.product(), part.tail.product()))
}

/// `tails[r] = Σ_{j>r} σ_j²` for `r = 0..=len`, summed from the smallest value up.
pub fn tail_sums(sigma_sq: &[f64]) -> Vec<f64> {
    let m = sigma_sq.len();
    let mut tails = vec![0.0; m + 1];
    for r in (0..m).rev() {
        tails[r] = tails[r + 1] + sigma_sq[r];
    }
    tails
}

/// Cumulative and relative tail energy of a spectrum scaled to `Σσ_j² = n·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEnergy {
    /// `gamma[s] = Σ_{j≤s} σ_j²`, `s = 0..=d∧n`.
    pub gamma: Vec<f64>,
    /// `tau[s] = (γ(d∧n) − γ(s)) / γ(d∧n)`.
    pub tau: Vec<f64>,
    pub scale: f64,
    pub n: usize,
    pub d: usize,
}

impl TailEnergy {
    /// `‖Δ_r‖_F²/n = τ(r)·d`.
    pub fn delta_fro_sq_over_n(&self, r: usize) -> f64 {
        self.tau[r] * self.d as f64
    }
}

pub fn tail_energy(svd: &SvdFactors, n: usize, d: usize) -> Result<TailEnergy> {
    let sq = svd.sigma_sq();
    let expected = (n * d) as f64;
    let tails = tail_sums(&sq);
    let scale = tails[0];
    if ((scale - expected) / expected).abs() > 1e-8 {
        return Err(Error::Scaling {
            actual: scale,
            expected,
        });
    }
    let m = sq.len();
    let mut gamma = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    gamma.push(0.0);
    for s in &sq {
        acc += s;
        gamma.push(acc);
    }
    // Tails come from the backward sums so that τ(d∧n) = 0 exactly and
    // γ(s) + τ(s)·scale = scale up to rounding.
    let tau = tails.iter().map(|t| t / scale).collect();
    Ok(TailEnergy {
        gamma,
        tau,
        scale,
        n,
        d,
    })
}

/// Orthonormal basis `Q` of a column space; represents the projector `QQᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    q: DMatrix<f64>,
}

impl OrthoBasis {
    /// Wraps columns the caller guarantees to be orthonormal.
    pub fn from_orthonormal(q: DMatrix<f64>) -> Self {
        Self { q }
    }

    pub fn empty(rows: usize) -> Self {
        Self {
            q: DMatrix::zeros(rows, 0),
        }
    }

    /// Rank-revealing basis of `col(m)`.
    pub fn of_colspace(m: &DMatrix<f64>) -> Result<Self> {
        Ok(RankRevealed::new(m)?.basis())
    }

    pub fn rows(&self) -> usize {
        self.q.nrows()
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn coords(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.q.tr_mul(y)
    }

    pub fn project(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q * self.q.tr_mul(y)
    }

    pub fn project_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.q * self.q.tr_mul(y)
    }

    pub fn residual_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        y - self.project_vec(y)
    }

    /// `‖(I − QQᵀ)Y‖_F²`, evaluated on the explicit residual.
    pub fn residual_fro_sq(&self, y: &DMatrix<f64>) -> f64 {
        (y - self.project(y)).norm_squared()
    }

    /// Dense `n × n` projector; for tests and small problems only.
    pub fn dense_projector(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }
}

/// Thin SVD truncated at the numerical rank: `A ≈ U_k S_k V_kᵀ`.
#[derive(Debug, Clone)]
pub struct RankRevealed {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

impl RankRevealed {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows.min(cols) == 0 {
            return Ok(Self {
                u: DMatrix::zeros(rows, 0),
                s: DVector::zeros(0),
                v: DMatrix::zeros(cols, 0),
            });
        }
        let f = compute_svd(a)?;
        let rank = f.rank();
        Ok(Self {
            u: f.u.columns(0, rank).into_owned(),
            s: f.sigma.rows(0, rank).into_owned(),
            v: f.v.columns(0, rank).into_owned(),
        })
    }

    /// Like [`RankRevealed::new`] but keeps at most `max_rank` directions.
    pub fn with_max_rank(a: &DMatrix<f64>, max_rank: usize) -> Result<Self> {
        let mut rr = Self::new(a)?;
        let keep = rr.rank().min(max_rank);
        rr.u = rr.u.columns(0, keep).into_owned();
        rr.s = rr.s.rows(0, keep).into_owned();
        rr.v = rr.v.columns(0, keep).into_owned();
        Ok(rr)
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn basis(&self) -> OrthoBasis {
        OrthoBasis::from_orthonormal(self.u.clone())
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s
    }

    /// Minimum-norm solution `A⁺y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut c = self.u.tr_mul(y);
        c.component_div_assign(&self.s);
        &self.v * c
    }

    /// `A⁺B` for a block of right-hand sides.
    pub fn solve_many(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.u.tr_mul(b);
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row /= self.s[i];
        }
        &self.v * c
    }

    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let mut vt = self.v.clone();
        for (j, mut col) in vt.column_iter_mut().enumerate() {
            col /= self.s[j];
        }
        vt * self.u.transpose()
    }
}

/// `P_M·Y` through a rank-revealing orthonormal factor of `M`.
pub fn project_onto_colspace(m: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != y.nrows() {
        return Err(Error::arg(format!(
            "row mismatch: M has {} rows, Y has {}",
            m.nrows(),
            y.nrows()
        )));
    }
    Ok(OrthoBasis::of_colspace(m)?.project(y))
}

/// Minimum-norm least-squares solution of `A w ≈ y`.
pub fn least_squares_min_norm(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != y.len() {
        return Err(Error::arg(format!(
            "row mismatch: A has {} rows, y has length {}",
            a.nrows(),
            y.len()
        )));
    }
    Ok(RankRevealed::new(a)?.solve(y))
}

/// Largest absolute entry of `QᵀQ − I`.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, stream};

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn diagonal_svd() {
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let f = compute_svd(&x).unwrap();
        assert!((f.sigma - DVector::from_vec(vec![3.0, 2.0, 1.0])).amax() < 1e-14);
        assert!((f.v.clone() - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((f.u.clone() - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn zero_matrix_svd() {
        let f = compute_svd(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(f.sigma.as_slice(), &[0.0, 0.0]);
        assert_eq!(f.rank(), 0);
    }

    #[test]
    fn random_svd_reconstructs_and_is_orthonormal() {
        let x = gaussian_matrix(&mut stream(1), 8, 5, 1.0);
        let f = compute_svd(&x).unwrap();
        let err = (f.reconstruct() - &x).norm() / x.norm();
        assert!(err <= 1e-10, "relative error {err}");
        assert!(orthonormality_defect(&f.u) <= 1e-10);
        assert!(orthonormality_defect(&f.v) <= 1e-10);
        for j in 1..f.width() {
            assert!(f.sigma[j - 1] >= f.sigma[j]);
        }
        for j in 0..f.width() {
            let col = f.v.column(j);
            let lead = col.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn wide_matrix_svd_has_width_n() {
        let x = gaussian_matrix(&mut stream(2), 4, 9, 1.0);
        let f = compute_svd(&x).unwrap();
        assert_eq!(f.u.shape(), (4, 4));
        assert_eq!(f.v.shape(), (9, 4));
        assert!((f.reconstruct() - &x).norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn wide_rank_deficient_svd_reconstructs() {
        for seed in 0..50u64 {
            let low = gaussian_matrix(&mut stream(100 + seed), 6, 3, 1.0) * gaussian_matrix(&mut stream(200 + seed), 3, 10, 1.0);
            let f = compute_svd(&low).unwrap();
            assert!(max_abs(&(f.reconstruct() - &low)) <= 1e-12 * max_abs(&low).max(1.0), "seed {seed}");
            assert_eq!(f.rank(), 3);
        }
    }

    #[test]
    fn svd_is_bitwise_deterministic() {
        let x = gaussian_matrix(&mut stream(3), 12, 7, 1.0);
        assert_eq!(compute_svd(&x).unwrap(), compute_svd(&x).unwrap());
    }

    #[test]
    fn design_matrix_rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(DesignMatrix::new(m), Err(Error::Argument(_))));
        assert!(DesignMatrix::new(DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn truncation_of_diagonal() {
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let f = compute_svd(&x).unwrap();
        let (_, delta) = truncate(&f, 2).unwrap();
        assert!((delta.norm_squared() - 1.0).abs() < 1e-14);
        let (t3, delta3) = truncate(&f, 3).unwrap();
        assert!(max_abs(&delta3) == 0.0);
        assert!((t3 - x).amax() < 1e-14);
        assert!(matches!(truncate(&f, 0), Err(Error::Argument(_))));
        assert!(matches!(truncate(&f, 4), Err(Error::Argument(_))));
    }

    /// Alternating least squares over rank-3 factorizations `X ≈ ABᵀ`,
    /// restarted several times; the best residual approximates the optimum.
    fn als_best_rank(x: &DMatrix<f64>, r: usize) -> f64 {
        let mut best = f64::INFINITY;
        for restart in 0..5 {
            let mut a = gaussian_matrix(&mut stream(100 + restart), x.nrows(), r, 1.0);
            let mut b = DMatrix::zeros(x.ncols(), r);
            for _ in 0..3000 {
                // b = argmin ‖X − A Bᵀ‖ ⇒ Bᵀ = (AᵀA)⁻¹AᵀX
                let ata = a.tr_mul(&a).try_inverse().unwrap();
                b = (ata * a.tr_mul(x)).transpose();
                let btb = b.tr_mul(&b).try_inverse().unwrap();
                a = x * &b * btb;
            }
            best = best.min((x - &a * b.transpose()).norm_squared());
        }
        best
    }

    #[test]
    fn truncation_matches_als_optimum() {
        let x = gaussian_matrix(&mut stream(4), 10, 6, 1.0);
        let f = compute_svd(&x).unwrap();
        let (_, delta) = truncate(&f, 3).unwrap();
        let als = als_best_rank(&x, 3);
        assert!((delta.norm_squared() - als).abs() <= 1e-6, "{} vs {als}", delta.norm_squared());
        assert!((x - (truncate(&f, 3).unwrap().0 + delta)).amax() < 1e-12);
    }

    #[test]
    fn delta_norm_nonincreasing() {
        let x = gaussian_matrix(&mut stream(5), 9, 6, 1.0);
        let f = compute_svd(&x).unwrap();
        let norms: Vec<f64> = (1..=6).map(|r| truncate(&f, r).unwrap().1.norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn flat_spectrum_tail_energy() {
        let f = SvdFactors {
            u: DMatrix::identity(4, 4),
            sigma: DVector::from_element(4, 2.0),
            v: DMatrix::identity(4, 4),
        };
        let te = tail_energy(&f, 4, 4).unwrap();
        assert_eq!(te.tau[2], 0.5);
        assert_eq!(te.delta_fro_sq_over_n(2), 2.0);
        assert_eq!(te.tau[4], 0.0);
        for s in 0..=4 {
            assert!((te.gamma[s] + te.tau[s] * te.scale - te.scale).abs() <= 1e-12 * te.scale);
        }
    }

    #[test]
    fn polynomial_tau_bound() {
        let q = 2.0f64;
        let (n, d) = (100usize, 100usize);
        let raw: Vec<f64> = (1..=100).map(|j| (j as f64).powf(-q / 2.0)).collect();
        let total: f64 = raw.iter().map(|s| s * s).sum();
        let c = ((n * d) as f64 / total).sqrt();
        let f = SvdFactors {
            u: DMatrix::identity(100, 100),
            sigma: DVector::from_iterator(100, raw.iter().map(|s| s * c)),
            v: DMatrix::identity(100, 100),
        };
        let te = tail_energy(&f, n, d).unwrap();
        for r in 1..=100 {
            assert!(te.tau[r] <= 1.0 / ((q - 1.0) * (r as f64).powf(q - 1.0)));
        }
        assert!(te.gamma.windows(2).all(|w| w[1] >= w[0]));
        assert!(te.tau.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unscaled_spectrum_is_rejected() {
        let f = compute_svd(&DMatrix::identity(3, 3)).unwrap();
        match tail_energy(&f, 3, 3) {
            Err(Error::Scaling { actual, .. }) => assert!((actual - 3.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tail_energy_matches_delta() {
        let x = gaussian_matrix(&mut stream(6), 12, 7, 1.0);
        let scale = ((12 * 7) as f64 / x.norm_squared()).sqrt();
        let x = x * scale;
        let f = compute_svd(&x).unwrap();
        let te = tail_energy(&f, 12, 7).unwrap();
        for r in 1..=7 {
            let lhs = truncate(&f, r).unwrap().1.norm_squared() / 12.0;
            let rhs = te.delta_fro_sq_over_n(r);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1e-300) + 1e-12, "r={r}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn projection_examples() {
        let y = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(project_onto_colspace(&DMatrix::identity(2, 2), &y).unwrap(), y);
        let e1 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let p = project_onto_colspace(&e1, &y).unwrap();
        assert!((p - DMatrix::from_row_slice(2, 1, &[3.0, 0.0])).amax() < 1e-15);
        assert!(project_onto_colspace(&e1, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn range_members_are_fixed_points() {
        let m = gaussian_matrix(&mut stream(7), 20, 5, 1.0);
        let w = gaussian_matrix(&mut stream(8), 5, 1, 1.0);
        let y = &m * w;
        let p = project_onto_colspace(&m, &y).unwrap();
        assert!((p - &y).amax() <= 1e-10 * y.amax().max(1.0));
    }

    #[test]
    fn projector_properties() {
        let m = gaussian_matrix(&mut stream(9), 15, 4, 1.0);
        let basis = OrthoBasis::of_colspace(&m).unwrap();
        let p = basis.dense_projector();
        assert!((&p * &p - &p).amax() <= 1e-10);
        assert!((&p - p.transpose()).amax() <= 1e-10);
        let y = gaussian_matrix(&mut stream(10), 15, 3, 1.0);
        let once = basis.project(&y);
        assert!((basis.project(&once) - &once).amax() <= 1e-10);
        let total = y.norm_squared();
        let parts = once.norm_squared() + basis.residual_fro_sq(&y);
        assert!((total - parts).abs() <= 1e-8 * total);
    }

    #[test]
    fn rank_deficient_projector() {
        let a = gaussian_matrix(&mut stream(11), 10, 3, 1.0);
        let b = gaussian_matrix(&mut stream(12), 3, 6, 1.0);
        let m = a * b;
        let basis = OrthoBasis::of_colspace(&m).unwrap();
        assert_eq!(basis.rank(), 3);
        assert!(orthonormality_defect(basis.q()) <= 1e-10);
    }

    #[test]
    fn min_norm_examples() {
        let y = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let w = least_squares_min_norm(&DMatrix::identity(3, 3), &y).unwrap();
        assert!((w - &y).amax() < 1e-15);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let w = least_squares_min_norm(&a, &DVector::from_vec(vec![2.0])).unwrap();
        assert!((w - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn min_norm_on_rank_deficient_system() {
        let a = gaussian_matrix(&mut stream(13), 10, 5, 1.0) * gaussian_matrix(&mut stream(14), 5, 8, 1.0);
        let y = gaussian_matrix(&mut stream(15), 10, 1, 1.0).column(0).into_owned();
        let w = least_squares_min_norm(&a, &y).unwrap();
        let fitted = &a * &w;
        let proj = project_onto_colspace(&a, &DMatrix::from_column_slice(10, 1, y.as_slice())).unwrap();
        assert!((fitted.clone() - proj.column(0)).amax() <= 1e-10);
        let pinv = RankRevealed::new(&a).unwrap().pseudo_inverse();
        assert!((&w - &pinv * (&a * &w)).norm() <= 1e-10);
        // Every other solution w + z, z ∈ null(A), is at least as long.
        let null_proj = DMatrix::identity(8, 8) - &pinv * &a;
        let mut rng = stream(16);
        for _ in 0..1000 {
            let z = &null_proj * gaussian_matrix(&mut rng, 8, 1, 1.0).column(0);
            let alt = &w + z;
            assert!((&a * &alt - &fitted).amax() <= 1e-9);
            assert!(w.norm() <= alt.norm() + 1e-12);
        }
    }

    #[test]
    fn design_svd_is_cached() {
        let x = DesignMatrix::new(gaussian_matrix(&mut stream(17), 6, 4, 1.0)).unwrap();
        let a = x.svd().unwrap() as *const SvdFactors;
        let b = x.svd().unwrap() as *const SvdFactors;
        assert_eq!(a, b);
    }
}
