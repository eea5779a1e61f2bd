//! Excess risk of reduced least squares: the exact bias/variance split, the
//! closed form for PCR, Monte-Carlo estimates and the upper bounds for CLS.
//!
//! Everything here is in the fixed-design setting: `y = Xw* + σξ` with `X`
//! held fixed and the expectation taken over the noise `ξ` (and the sketch,
//! where one is drawn).

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compute_svd, tail_sums, DesignMatrix, OrthoBasis, RankRevealed};
use crate::regress::{fit_cls, fit_pcr, ReducedModel, Reducer};
use crate::rng::{gaussian_vector, stream, substream};
use crate::sketch::{draw_sketch, SketchKind, SketchMatrix, SketchSpec};

/// Regression target `w*`, noise level `σ` and `α* = Vᵀw*`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub wstar: DVector<f64>,
    pub sigma: f64,
    pub alphastar: DVector<f64>,
}

impl GroundTruth {
    pub fn new(x: &DesignMatrix, wstar: DVector<f64>, sigma: f64) -> Result<Self> {
        if wstar.len() != x.ncols() {
            return Err(Error::arg(format!(
                "w* has length {}, design has {} columns",
                wstar.len(),
                x.ncols()
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::arg(format!("noise level must be finite and ≥ 0, got {sigma}")));
        }
        let alphastar = x.svd()?.v.tr_mul(&wstar);
        Ok(Self {
            wstar,
            sigma,
            alphastar,
        })
    }

    /// `(α*_r, α*_{r+})`.
    pub fn split(&self, r: usize) -> (DVector<f64>, DVector<f64>) {
        let m = self.alphastar.len();
        let r = r.min(m);
        (
            self.alphastar.rows(0, r).into_owned(),
            self.alphastar.rows(r, m - r).into_owned(),
        )
    }

    pub fn alpha_inf_sq(&self) -> f64 {
        let a = self.alphastar.amax();
        a * a
    }

    /// Largest deviation between the stored `α*` and `Vᵀw*` recomputed from `x`.
    pub fn alphastar_drift(&self, x: &DesignMatrix) -> Result<f64> {
        Ok((x.svd()?.v.tr_mul(&self.wstar) - &self.alphastar).amax())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// `r` for PCR, `k` for sketches.
    pub width: usize,
    pub kind: Option<SketchKind>,
    pub n: usize,
    pub d: usize,
}

/// Bias, variance and excess risk of one fitted configuration, plus any
/// theoretical bounds evaluated for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub bias: f64,
    pub variance: f64,
    pub excess: f64,
    /// `rank(X_R)` fell below the nominal width.
    pub degenerate: bool,
    pub config: RiskConfig,
    pub bounds: BTreeMap<String, f64>,
}

/// `(‖(I − P)Xw*‖²/n, σ² rank/n)` for the projector of `basis`.
pub fn bias_variance(x: &DesignMatrix, truth: &GroundTruth, basis: &OrthoBasis) -> (f64, f64) {
    let n = x.nrows() as f64;
    let f = x.matrix() * &truth.wstar;
    let bias = basis.residual_vec(&f).norm_squared() / n;
    let variance = truth.sigma * truth.sigma * basis.rank() as f64 / n;
    (bias, variance)
}

/// Exact decomposition `𝓔 = bias + variance` for a fitted model, with the
/// variance using the realized `rank(X_R)`.
pub fn excess_decomposition(x: &DesignMatrix, truth: &GroundTruth, model: &ReducedModel) -> RiskReport {
    let (bias, variance) = bias_variance(x, truth, &model.basis());
    let kind = match model.reducer() {
        Reducer::Sketch(s) => s.kind(),
        Reducer::Principal { .. } => None,
    };
    RiskReport {
        bias,
        variance,
        excess: bias + variance,
        degenerate: model.degenerate(),
        config: RiskConfig {
            width: model.reducer().width(),
            kind,
            n: x.nrows(),
            d: x.ncols(),
        },
        bounds: BTreeMap::new(),
    }
}

/// `Σ_{j>r} σ_j²(α*_j)²/n + σ² r/n`.
pub fn pcr_excess_exact(sigma_spec: &[f64], alphastar: &[f64], r: usize, sigma: f64, n: usize) -> Result<f64> {
    if sigma_spec.len() != alphastar.len() {
        return Err(Error::arg(format!(
            "spectrum has {} values, α* has {}",
            sigma_spec.len(),
            alphastar.len()
        )));
    }
    if r > sigma_spec.len() {
        return Err(Error::arg(format!("r = {r} exceeds d∧n = {}", sigma_spec.len())));
    }
    let nf = n as f64;
    let bias: f64 = sigma_spec[r..]
        .iter()
        .zip(&alphastar[r..])
        .map(|(s, a)| s * s * a * a)
        .sum();
    Ok(bias / nf + sigma * sigma * r as f64 / nf)
}

/// Source of the reduction used in each Monte-Carlo draw.
#[derive(Debug, Clone)]
pub enum ReducerFactory {
    Principal(usize),
    Fixed(SketchMatrix),
    /// A fresh sketch per draw, seeded from the spec seed and the draw index.
    Random(SketchSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub draws: usize,
}

/// Streaming mean and standard error (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            mean: self.mean,
            stderr: self.stderr(),
            draws: self.count,
        }
    }
}

/// Empirical mean of `‖Xw* − X_R ŵ_R‖²/n` over fresh noise (and fresh
/// sketches for [`ReducerFactory::Random`]).
pub fn monte_carlo_excess(
    x: &DesignMatrix,
    truth: &GroundTruth,
    factory: &ReducerFactory,
    noise_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    if noise_draws < 2 {
        return Err(Error::arg("monte_carlo_excess needs at least two draws"));
    }
    let n = x.nrows();
    let f = x.matrix() * &truth.wstar;
    let fixed = match factory {
        ReducerFactory::Principal(r) => Some(fit_pcr(x, &f, *r)?),
        ReducerFactory::Fixed(s) => Some(fit_cls(x, &f, s)?),
        ReducerFactory::Random(_) => None,
    };
    let mut stats = RunningStats::default();
    for i in 0..noise_draws {
        let xi = gaussian_vector(&mut stream(substream(seed, i as u64)), n);
        let y = &f + xi * truth.sigma;
        let fitted = match (&fixed, factory) {
            (Some(model), _) => model.refit_fitted(&y),
            (None, ReducerFactory::Random(spec)) => {
                let sketch = draw_sketch(&spec.with_seed(substream(spec.seed, i as u64)))?;
                fit_cls(x, &y, &sketch)?.fitted().clone()
            }
            (None, _) => unreachable!("non-random factories are fitted once"),
        };
        stats.push((&f - fitted).norm_squared() / n as f64);
    }
    Ok(stats.estimate())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KabanBound {
    pub bound: f64,
    /// Minimizer of the bound over real `k`.
    pub opt_k: f64,
    pub opt_bound: f64,
}

/// `c tr(Γ)‖w*‖²/k + σ²k/n` with its optimum over `k`, `c ∈ [1, 2]`.
///
/// The minimizer is `k* = c′‖w*‖√(n tr(Γ))/σ` with `c′ = √c`, attaining
/// `2σc′‖w*‖√(tr(Γ)/n)`.
pub fn kaban_bound(gamma_trace: f64, wstar_norm: f64, k: usize, sigma: f64, n: usize, c: f64) -> Result<KabanBound> {
    if !(1.0..=2.0).contains(&c) {
        return Err(Error::arg(format!("constant c must lie in [1, 2], got {c}")));
    }
    if k == 0 || n == 0 {
        return Err(Error::arg("kaban_bound needs k, n ≥ 1"));
    }
    let (kf, nf) = (k as f64, n as f64);
    let c_prime = c.sqrt();
    let bound = c * gamma_trace * wstar_norm * wstar_norm / kf + sigma * sigma * kf / nf;
    let opt_k = c_prime * wstar_norm * (nf * gamma_trace).sqrt() / sigma;
    let opt_bound = 2.0 * sigma * c_prime * wstar_norm * (gamma_trace / nf).sqrt();
    Ok(KabanBound {
        bound,
        opt_k,
        opt_bound,
    })
}

/// Normalized spectrum `a_j = σ_j²/Σσ²` and the weights
/// `ω_j = (1 + a_j)/(1 + a_j + a_j k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThaneiWeights {
    pub a: Vec<f64>,
    pub omega: Vec<f64>,
    pub k: usize,
}

impl ThaneiWeights {
    pub fn new(sigma_spec: &[f64], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("k must be ≥ 1"));
        }
        let total: f64 = sigma_spec.iter().map(|s| s * s).sum();
        if !(total > 0.0) {
            return Err(Error::arg("spectrum must have positive energy"));
        }
        let a: Vec<f64> = sigma_spec.iter().map(|s| s * s / total).collect();
        let omega = a.iter().map(|&aj| omega_weight(aj, k)).collect();
        Ok(Self { a, omega, k })
    }

    /// `2/(2 + k)`, the weight at `a_j = 1` and the minimum over `a_j ∈ [0, 1]`.
    pub fn floor(&self) -> f64 {
        omega_weight(1.0, self.k)
    }
}

pub fn omega_weight(a: f64, k: usize) -> f64 {
    (1.0 + a) / (1.0 + a + a * k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThaneiBound {
    pub bound: f64,
    pub weights: ThaneiWeights,
    /// `(2/(2+k)) w*ᵀΓw* + σ²k/n`, a lower bound on `bound`.
    pub floor_bound: f64,
}

pub fn thanei_bound(sigma_spec: &[f64], alphastar: &[f64], k: usize, sigma: f64, n: usize) -> Result<ThaneiBound> {
    if sigma_spec.len() != alphastar.len() {
        return Err(Error::arg("spectrum and α* lengths differ"));
    }
    let weights = ThaneiWeights::new(sigma_spec, k)?;
    let nf = n as f64;
    let variance = sigma * sigma * k as f64 / nf;
    let mut weighted = 0.0;
    let mut quad = 0.0;
    for ((s, a), w) in sigma_spec.iter().zip(alphastar).zip(&weights.omega) {
        let e = s * s * a * a;
        weighted += e * w;
        quad += e;
    }
    let floor_bound = weights.floor() * quad / nf + variance;
    Ok(ThaneiBound {
        bound: weighted / nf + variance,
        weights,
        floor_bound,
    })
}

/// `(1 + ε1²/(1 − ε2)⁴) ‖w*‖² ‖Δ_r‖_F²/n + σ²k/n`.
pub fn main_theorem_bound(
    delta_fro_sq: f64,
    wstar_norm: f64,
    eps1: f64,
    eps2: f64,
    k: usize,
    sigma: f64,
    n: usize,
) -> Result<f64> {
    if !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(Error::arg(format!("eps2 must lie in (0, 1), got {eps2}")));
    }
    let nf = n as f64;
    Ok(main_theorem_factor(eps1, eps2) * wstar_norm * wstar_norm * delta_fro_sq / nf + sigma * sigma * k as f64 / nf)
}

/// `1 + ε1²/(1 − ε2)⁴`, the inflation of `‖Δ_r‖_F²` allowed for `‖(I − P_{X_R})X‖_F²`.
pub fn main_theorem_factor(eps1: f64, eps2: f64) -> f64 {
    1.0 + eps1 * eps1 / (1.0 - eps2).powi(4)
}

/// `1 + r/(k − r − 1)`; requires `k ≥ r + 2`.
pub fn halko_factor(r: usize, k: usize) -> Result<f64> {
    if k < r + 2 {
        return Err(Error::arg(format!("Gaussian range bound needs k ≥ r + 2, got r = {r}, k = {k}")));
    }
    Ok(1.0 + r as f64 / (k - r - 1) as f64)
}

/// Expected `‖(I − P_{X_R})X‖_F²` bound for Gaussian sketches.
pub fn halko_bound(delta_fro_sq: f64, r: usize, k: usize) -> Result<f64> {
    Ok(halko_factor(r, k)? * delta_fro_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum Scenario {
    Flat,
    Polynomial { q: f64 },
    Exponential { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptimum {
    /// Closed-form optimizer (real-valued).
    pub r_opt: f64,
    /// Closed-form bound at `r_opt`.
    pub risk_bound: f64,
    /// Exact integer minimizer of the scenario's risk bound over `r`.
    pub r_int: usize,
    pub risk_int: f64,
}

/// Optimal truncation level for PCR under a flat, polynomially or
/// exponentially decaying spectrum, with `A = ‖α*‖∞²`.
///
/// For exponential decay `σ_j² ∝ θ^j` the tail obeys
/// `τ(r) ≤ θ^r/(1 − θ) = C₁e^{−cr}` with `c = ln(1/θ)`, `C₁ = 1/(1 − θ)`; the
/// continuous minimizer then has `C₂ = c·C₁`.
pub fn scenario_optimum(scenario: Scenario, alphainf_sq: f64, n: usize, d: usize, sigma: f64) -> Result<ScenarioOptimum> {
    if !(sigma > 0.0) {
        return Err(Error::arg("scenario optimum needs σ > 0"));
    }
    let (nf, df) = (n as f64, d as f64);
    let m = n.min(d);
    let s2n = sigma * sigma / nf;
    let a = alphainf_sq;
    let (r_opt, risk_bound, first, bound): (f64, f64, usize, Box<dyn Fn(f64) -> f64>) = match scenario {
        Scenario::Flat => {
            let lift = (df / nf).max(1.0);
            let r_opt = if a.sqrt() > sigma / (n.max(d) as f64).sqrt() { m as f64 } else { 0.0 };
            let g = move |r: f64| a * lift * (m as f64 - r) + s2n * r;
            (r_opt, g(r_opt), 0, Box::new(g))
        }
        Scenario::Polynomial { q } => {
            if q < 2.0 {
                return Err(Error::arg(format!("polynomial scenario needs q ≥ 2, got {q}")));
            }
            let r_opt = (a * nf * df / (sigma * sigma)).powf(1.0 / q);
            let risk = 2.0 * (df * a).powf(1.0 / q) * s2n.powf((q - 1.0) / q);
            let g = move |r: f64| df * a / ((q - 1.0) * r.powf(q - 1.0)) + s2n * r;
            (r_opt, risk, 1, Box::new(g))
        }
        Scenario::Exponential { theta } => {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::arg(format!("theta must lie in (0, 1), got {theta}")));
            }
            let c = (1.0 / theta).ln();
            let c1 = 1.0 / (1.0 - theta);
            let c2 = c * c1;
            let log_term = (c2 * a * nf * df / (sigma * sigma)).ln();
            let r_opt = log_term / c;
            let risk = 2.0 / c * log_term.max(1.0) * s2n;
            let g = move |r: f64| c1 * (-c * r).exp() * df * a + s2n * r;
            (r_opt, risk, 0, Box::new(g))
        }
    };
    let (r_int, risk_int) = (first..=m)
        .map(|r| (r, bound(r as f64)))
        .fold((first, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(ScenarioOptimum {
        r_opt,
        risk_bound,
        r_int,
        risk_int,
    })
}

/// Expected excess risk of a dense sketch or of column subsampling under a
/// flat spectrum.
///
/// For `n ≥ d` (`σ_j = √n`) both equal `(1 − k/d)‖α*‖² + kσ²/n`. For `n < d`
/// (`σ_j = √d`) the dense sketch gives `(d/n)(1 − k/n)‖α*‖² + kσ²/n`, and
/// subsampling the larger `(d/n)(1 − k/d)‖α*‖² + kσ²/n`.
pub fn flat_spectrum_expected_risk(kind: SketchKind, n: usize, d: usize, k: usize, alpha_sq: f64, sigma: f64) -> Result<f64> {
    let m = n.min(d);
    if k > m {
        return Err(Error::arg(format!("k = {k} exceeds d∧n = {m}")));
    }
    let (nf, df, kf) = (n as f64, d as f64, k as f64);
    let variance = kf * sigma * sigma / nf;
    let bias = if n >= d {
        (1.0 - kf / df) * alpha_sq
    } else {
        match kind {
            SketchKind::Gaussian | SketchKind::Rademacher => df / nf * (1.0 - kf / nf) * alpha_sq,
            SketchKind::Subsample => df / nf * (1.0 - kf / df) * alpha_sq,
        }
    };
    Ok(bias + variance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    /// `max_i ‖V_rᵀRRᵀV_r β_i − V_rᵀRRᵀw_i‖ / (1 + ‖V_rᵀRRᵀw_i‖)`.
    pub max_residual: f64,
    /// `RᵀV_r` was numerically rank deficient; the identity is not evaluated.
    pub degenerate: bool,
    pub passed: bool,
}

/// Numerically checks the sketched-regression identity
/// `V_rᵀRRᵀV_r β_i = V_rᵀRRᵀw_i` for every row `i` of `X`.
///
/// With `A = T_r(X)ᵀ` and `b_i` the `i`-th row of `X`, `λ*_i` solves
/// `min ‖b_i − Aλ‖` and `λ̃_i` solves the sketched problem
/// `min ‖Rᵀb_i − RᵀAλ‖`. Then `w_i = b_i − Aλ*_i` and `β_i` holds the
/// coordinates of `A(λ̃_i − λ*_i)` in the basis `V_r`.
pub fn sketched_identity_check(x: &DesignMatrix, r: usize, sketch: &SketchMatrix, tol: f64) -> Result<IdentityCheck> {
    if sketch.d() != x.ncols() {
        return Err(Error::arg("sketch dimension does not match design"));
    }
    let part = x.svd()?.partition(r)?;
    let v_r = &part.head.v;
    let rt_v = sketch.transpose_apply_matrix(v_r);
    let s = compute_svd(&rt_v)?.sigma;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let s_min = if rt_v.nrows() < r {
        0.0
    } else {
        s.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if !(s_min > 1e-10 * s_max) {
        return Ok(IdentityCheck {
            max_residual: f64::NAN,
            degenerate: true,
            passed: false,
        });
    }

    let b = x.matrix().transpose(); // columns b_i
    let a = part.head.product().transpose(); // A = T_rᵀ, so Aλ*_i = (T_rᵀ)_{:,i}
    let w = &b - &a;
    // RᵀA has rank exactly r; truncating there keeps rounding noise out of the pseudo-inverse.
    let sketched = RankRevealed::with_max_rank(&sketch.transpose_apply_matrix(&a), r)?;
    let lambda_tilde = sketched.solve_many(&sketch.transpose_apply_matrix(&b));
    let beta = v_r.tr_mul(&(&a * lambda_tilde - &a));

    let gram = rt_v.tr_mul(&rt_v); // V_rᵀRRᵀV_r
    let lhs = &gram * &beta;
    let rhs = rt_v.tr_mul(&sketch.transpose_apply_matrix(&w));
    let mut worst: f64 = 0.0;
    for i in 0..lhs.ncols() {
        let num = (lhs.column(i) - rhs.column(i)).norm();
        worst = worst.max(num / (1.0 + rhs.column(i).norm()));
    }
    Ok(IdentityCheck {
        max_residual: worst,
        degenerate: false,
        passed: worst <= tol,
    })
}

/// Inputs for evaluating every bound from spectrum and norms alone.
#[derive(Debug, Clone)]
pub struct BoundInputs<'a> {
    pub sigma_spec: &'a [f64],
    pub alphastar: &'a [f64],
    pub wstar_norm: f64,
    pub sigma: f64,
    pub n: usize,
    pub d: usize,
    /// Truncation level the sketch is compared against.
    pub r: usize,
    pub k: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub kaban_c: f64,
    pub scenario: Option<Scenario>,
}

/// Named bound values; bounds whose preconditions fail (e.g. `k < r + 2`
/// for the Gaussian range bound) are omitted.
pub fn evaluate_bounds(inp: &BoundInputs<'_>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    let sq: Vec<f64> = inp.sigma_spec.iter().map(|s| s * s).collect();
    let tails = tail_sums(&sq);
    let trace = tails[0] / inp.n as f64;
    if inp.k >= 1 {
        if inp.sigma > 0.0 {
            let kb = kaban_bound(trace, inp.wstar_norm, inp.k, inp.sigma, inp.n, inp.kaban_c)?;
            out.insert("kaban".into(), kb.bound);
            out.insert("kaban_opt_k".into(), kb.opt_k);
        }
        let tb = thanei_bound(inp.sigma_spec, inp.alphastar, inp.k, inp.sigma, inp.n)?;
        out.insert("thanei".into(), tb.bound);
        out.insert("thanei_floor".into(), tb.floor_bound);
    }
    if inp.r >= 1 && inp.r <= sq.len() {
        let delta = tails[inp.r];
        out.insert(
            "main_thm".into(),
            main_theorem_bound(delta, inp.wstar_norm, inp.eps1, inp.eps2, inp.k, inp.sigma, inp.n)?,
        );
        if inp.k >= inp.r + 2 {
            out.insert("halko".into(), halko_bound(delta, inp.r, inp.k)?);
        }
        out.insert(
            "pcr_exact".into(),
            pcr_excess_exact(inp.sigma_spec, inp.alphastar, inp.r, inp.sigma, inp.n)?,
        );
    }
    if let Some(sc) = inp.scenario {
        let a = inp.alphastar.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Ok(opt) = scenario_optimum(sc, a * a, inp.n, inp.d, inp.sigma) {
            out.insert("scenario_opt".into(), opt.risk_bound);
        }
    }
    Ok(out)
}
