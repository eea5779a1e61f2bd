//! Replicated sweeps over methods and grid points.
//!
//! Replicates run in parallel and each owns the seed `substream(seed, rep)`.
//! Within a replicate the sketch for a grid point is seeded from the method
//! and `k`, so methods sharing `k` across `α` values see the same draw.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method, Mode};
use super::ingest::{ingest_csv, IngestOptions};
use super::preprocess::{preprocess_train_test, split_rows};
use crate::datagen::{gen_response, SpectrumSpec, SynthParams, SyntheticInstance};
use crate::ensemble::cos2_sum;
use crate::error::{Error, Result};
use crate::linalg::{DesignMatrix, OrthoBasis};
use crate::regress::{fit_averaged, fit_cls, fit_pcr, ReducedModel};
use crate::risk::{evaluate_bounds, excess_decomposition, BoundInputs, GroundTruth, Scenario};
use crate::rng::{substream, substream2};
use crate::sketch::{draw_sketch, SketchSpec};

/// Seed index reserved for the shared design and truth.
const DESIGN_STREAM: u64 = u64::MAX;
/// Seed index reserved for the train/test split.
const SPLIT_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub method: Method,
    /// Ensemble size for averaged rows.
    pub ensemble: Option<usize>,
    pub r: usize,
    /// Oversampling factor; `None` for PCR.
    pub alpha: Option<f64>,
    pub k: usize,
    /// Synthetic runs only: exact conditional on the reduction.
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub excess: Option<f64>,
    /// Synthetic: realized `‖Xw* − Xŵ‖²/n`. Ingest: holdout mean squared error.
    pub prediction_error: Option<f64>,
    /// `‖X − P_{X_R}X‖_F²` on the (training) design.
    pub approx_error: Option<f64>,
    pub bounds: BTreeMap<String, f64>,
    pub degenerate: bool,
    pub failed: Option<String>,
}

impl ResultRow {
    /// Curve label: method, ensemble size and oversampling factor.
    pub fn series(&self) -> String {
        let mut s = match self.ensemble {
            Some(b) => format!("{}-{b}", self.method),
            None => self.method.to_string(),
        };
        if let Some(a) = self.alpha {
            s += &format!(" alpha={a}");
        }
        s
    }
}

/// One configured (method, ensemble size, α, r) combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub method: Method,
    pub ensemble: Option<usize>,
    pub r: usize,
    pub alpha: Option<f64>,
    pub k: usize,
}

pub fn plan(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        if method == Method::Pcr {
            for &r in &cfg.r_grid {
                out.push(GridPoint {
                    method,
                    ensemble: None,
                    r,
                    alpha: None,
                    k: r,
                });
            }
            continue;
        }
        let sizes: Vec<Option<usize>> = if method == Method::Averaged {
            cfg.ensemble_sizes.iter().map(|&b| Some(b)).collect()
        } else {
            vec![None]
        };
        for ensemble in sizes {
            for &alpha in &cfg.alpha {
                for &r in &cfg.r_grid {
                    out.push(GridPoint {
                        method,
                        ensemble,
                        r,
                        alpha: Some(alpha),
                        k: cfg.k_for(r, alpha),
                    });
                }
            }
        }
    }
    out
}

/// The design, response and (for synthetic runs) truth of one replicate.
struct Problem {
    x: DesignMatrix,
    y: DVector<f64>,
    truth: Option<Truth>,
    holdout: Option<(DMatrix<f64>, DVector<f64>)>,
}

struct Truth {
    gt: GroundTruth,
    spectrum: Vec<f64>,
    scenario: Option<Scenario>,
}

fn synth_instance(cfg: &ExperimentConfig, seed: u64) -> Result<SyntheticInstance> {
    let s = cfg.synthetic.as_ref().ok_or_else(|| Error::Config("missing [synthetic] section".into()))?;
    SyntheticInstance::generate(SynthParams {
        n: s.n,
        d: s.d,
        spectrum: s.spectrum()?,
        base: s.base,
        sigma: cfg.sigma,
        seed,
    })
}

fn truth_of(cfg: &ExperimentConfig, inst: &SyntheticInstance) -> Result<Truth> {
    let gt = GroundTruth::new(&inst.x, inst.wstar.clone(), cfg.sigma)?;
    Ok(Truth {
        gt,
        spectrum: inst.x.svd()?.sigma.iter().copied().collect(),
        scenario: SpectrumSpec::scenario(&inst.params.spectrum),
    })
}

/// Loads, splits and standardizes the ingest data.
fn ingest_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let ing = cfg.ingest.as_ref().ok_or_else(|| Error::Config("missing [ingest] section".into()))?;
    let opts = IngestOptions {
        y_col: ing.y_col,
        log_cols: ing.log_cols.clone(),
        interact_cols: ing.interact_cols.clone(),
    };
    let train = ingest_csv(&ing.train, &opts)?;
    let (xtr, ytr, xte, yte) = match &ing.test {
        Some(path) => {
            let test = ingest_csv(path, &opts)?;
            if test.x.ncols() != train.x.ncols() {
                return Err(Error::Data("train and test files have different widths".into()));
            }
            (train.x, train.y, test.x, test.y)
        }
        None => {
            let (tr, te) = split_rows(train.x.nrows(), ing.test_fraction, substream(cfg.seed, SPLIT_STREAM))?;
            (
                train.x.select_rows(tr.iter()),
                train.y.select_rows(tr.iter()),
                train.x.select_rows(te.iter()),
                train.y.select_rows(te.iter()),
            )
        }
    };
    let p = preprocess_train_test(&xtr, &ytr, &xte)?;
    let y_test = p.transform.apply_y(&yte);
    Ok(Problem {
        x: DesignMatrix::new(p.x_train)?,
        y: p.y_train,
        truth: None,
        holdout: Some((p.x_test, y_test)),
    })
}

/// Fitted quantities shared by single and averaged reductions.
struct Fit {
    fitted: DVector<f64>,
    coeffs: DVector<f64>,
    bases: Vec<OrthoBasis>,
    degenerate: bool,
    single: Option<ReducedModel>,
}

fn fit_point(p: &Problem, gp: &GridPoint, rep_seed: u64) -> Result<Fit> {
    let d = p.x.ncols();
    let spec = |kind| SketchSpec::new(kind, d, gp.k, substream2(rep_seed, gp.method.code(), gp.k as u64));
    let single = |m: ReducedModel| Fit {
        fitted: m.fitted().clone(),
        coeffs: m.back_mapped().clone(),
        bases: vec![m.basis()],
        degenerate: m.degenerate(),
        single: Some(m),
    };
    match (gp.method, gp.method.sketch_kind()) {
        (Method::Pcr, _) => Ok(single(fit_pcr(&p.x, &p.y, gp.r)?)),
        (Method::Averaged, Some(kind)) => {
            let b = gp.ensemble.unwrap_or(1);
            let (ens, fitted) = fit_averaged(&p.x, &p.y, &spec(kind)?, b)?;
            Ok(Fit {
                fitted,
                coeffs: ens.averaged_coeffs(),
                bases: ens.members.iter().map(|m| m.basis()).collect(),
                degenerate: ens.members.iter().any(|m| m.degenerate()),
                single: None,
            })
        }
        (_, Some(kind)) => Ok(single(fit_cls(&p.x, &p.y, &draw_sketch(&spec(kind)?)?)?)),
        (_, None) => unreachable!("only PCR lacks a sketch kind"),
    }
}

/// `(1/B) Σ_b P_b M` column by column.
fn mean_projection(bases: &[OrthoBasis], m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(m.nrows(), m.ncols());
    for b in bases {
        acc += b.project(m);
    }
    acc / bases.len() as f64
}

fn evaluate(cfg: &ExperimentConfig, p: &Problem, gp: &GridPoint, rep: usize, rep_seed: u64) -> ResultRow {
    let mut row = ResultRow {
        replicate: rep,
        method: gp.method,
        ensemble: gp.ensemble,
        r: gp.r,
        alpha: gp.alpha,
        k: gp.k,
        bias: None,
        variance: None,
        excess: None,
        prediction_error: None,
        approx_error: None,
        bounds: BTreeMap::new(),
        degenerate: false,
        failed: None,
    };
    let fit = match fit_point(p, gp, rep_seed) {
        Ok(f) => f,
        Err(e) => {
            row.failed = Some(e.to_string());
            return row;
        }
    };
    row.degenerate = fit.degenerate;
    let x = p.x.matrix();
    row.approx_error = Some(if fit.bases.len() == 1 {
        fit.bases[0].residual_fro_sq(x)
    } else {
        (x - mean_projection(&fit.bases, x)).norm_squared()
    });

    if let Some(t) = &p.truth {
        let n = x.nrows() as f64;
        let f = x * &t.gt.wstar;
        let (bias, variance) = match &fit.single {
            Some(m) => {
                let rep = excess_decomposition(&p.x, &t.gt, m);
                (rep.bias, rep.variance)
            }
            None => {
                let fm = DMatrix::from_column_slice(f.len(), 1, f.as_slice());
                let bias = (&fm - mean_projection(&fit.bases, &fm)).norm_squared() / n;
                let b = fit.bases.len() as f64;
                let mut frob = 0.0;
                for q1 in &fit.bases {
                    for q2 in &fit.bases {
                        frob += cos2_sum(q1, q2);
                    }
                }
                (bias, t.gt.sigma * t.gt.sigma * frob / (b * b * n))
            }
        };
        row.bias = Some(bias);
        row.variance = Some(variance);
        row.excess = Some(bias + variance);
        row.prediction_error = Some((&f - &fit.fitted).norm_squared() / n);
        row.bounds = bounds_for(cfg, p, t, gp);
    }
    if let Some((xt, yt)) = &p.holdout {
        let pred = xt * &fit.coeffs;
        row.prediction_error = Some((pred - yt).norm_squared() / yt.len() as f64);
    }
    row
}

fn bounds_for(cfg: &ExperimentConfig, p: &Problem, t: &Truth, gp: &GridPoint) -> BTreeMap<String, f64> {
    let alpha: Vec<f64> = t.gt.alphastar.iter().copied().collect();
    if gp.method == Method::Pcr {
        let sq: Vec<f64> = t.spectrum.iter().map(|s| s * s).collect();
        let n = p.x.nrows() as f64;
        let bias: f64 = sq[gp.r..].iter().zip(&alpha[gp.r..]).map(|(s, a)| s * a * a).sum::<f64>() / n;
        return BTreeMap::from([("pcr_exact".to_string(), bias + t.gt.sigma * t.gt.sigma * gp.r as f64 / n)]);
    }
    evaluate_bounds(&BoundInputs {
        sigma_spec: &t.spectrum,
        alphastar: &alpha,
        wstar_norm: t.gt.wstar.norm(),
        sigma: t.gt.sigma,
        n: p.x.nrows(),
        d: p.x.ncols(),
        r: gp.r,
        k: gp.k,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        kaban_c: cfg.kaban_c,
        scenario: t.scenario,
    })
    .unwrap_or_default()
}

/// Runs every (replicate, grid point) of the config. Rows come back ordered
/// by replicate, then in plan order; single fit failures are flagged on the
/// row and do not abort the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points = plan(cfg);
    let shared: Option<(SyntheticInstance, Truth)> = match cfg.mode {
        Mode::Synthetic if !cfg.synthetic.as_ref().is_some_and(|s| s.redraw_design) => {
            let inst = synth_instance(cfg, substream(cfg.seed, DESIGN_STREAM))?;
            let truth = truth_of(cfg, &inst)?;
            Some((inst, truth))
        }
        _ => None,
    };
    let ingest = match cfg.mode {
        Mode::Ingest => Some(ingest_problem(cfg)?),
        Mode::Synthetic => None,
    };

    let per_rep: Vec<Vec<ResultRow>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ResultRow>> {
            let rep_seed = substream(cfg.seed, rep as u64);
            let owned;
            let problem: &Problem = match (&ingest, &shared) {
                (Some(p), _) => p,
                (None, Some((inst, truth))) => {
                    let y = gen_response(&inst.x, &inst.wstar, cfg.sigma, substream(rep_seed, 2))?;
                    owned = Problem {
                        x: inst.x.clone(),
                        y,
                        truth: Some(Truth {
                            gt: truth.gt.clone(),
                            spectrum: truth.spectrum.clone(),
                            scenario: truth.scenario,
                        }),
                        holdout: None,
                    };
                    &owned
                }
                (None, None) => {
                    let inst = synth_instance(cfg, rep_seed)?;
                    let truth = truth_of(cfg, &inst)?;
                    owned = Problem {
                        x: inst.x,
                        y: inst.y,
                        truth: Some(truth),
                        holdout: None,
                    };
                    &owned
                }
            };
            Ok(points.iter().map(|gp| evaluate(cfg, problem, gp, rep, rep_seed)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}
