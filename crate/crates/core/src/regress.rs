//! PCR, compressed least squares and averaged sketched fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{DesignMatrix, OrthoBasis, RankRevealed};
use crate::rng::substream;
use crate::sketch::{apply_sketch, draw_sketch, SketchMatrix, SketchSpec};

/// How the reduced design `X_R` was formed.
#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    /// `R = V_r`.
    Principal { r: usize, v_r: DMatrix<f64> },
    Sketch(SketchMatrix),
}

impl Reducer {
    /// `R c`, mapping reduced coefficients back to `ℝ^d`.
    fn lift(&self, c: &DVector<f64>) -> DVector<f64> {
        match self {
            Reducer::Principal { v_r, .. } => v_r * c,
            Reducer::Sketch(s) => s.apply_to_coeffs(c),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Reducer::Principal { r, .. } => *r,
            Reducer::Sketch(s) => s.k(),
        }
    }
}

/// Least-squares fit on a reduced design.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    reducer: Reducer,
    solver: RankRevealed,
    coeffs: DVector<f64>,
    /// `w̃ = R ŵ_R`, so `X w̃ = X_R ŵ_R`.
    back_mapped: DVector<f64>,
    fitted: DVector<f64>,
}

impl ReducedModel {
    fn fit(reducer: Reducer, xr: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if xr.nrows() != y.len() {
            return Err(Error::arg(format!(
                "response length {} does not match {} rows",
                y.len(),
                xr.nrows()
            )));
        }
        let solver = RankRevealed::new(xr)?;
        let coeffs = solver.solve(y);
        let back_mapped = reducer.lift(&coeffs);
        let fitted = xr * &coeffs;
        Ok(Self {
            reducer,
            solver,
            coeffs,
            back_mapped,
            fitted,
        })
    }

    pub fn reducer(&self) -> &Reducer {
        &self.reducer
    }

    /// `ŵ_R`.
    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn back_mapped(&self) -> &DVector<f64> {
        &self.back_mapped
    }

    pub fn fitted(&self) -> &DVector<f64> {
        &self.fitted
    }

    /// Numerical rank of `X_R`.
    pub fn effective_rank(&self) -> usize {
        self.solver.rank()
    }

    /// Orthonormal factor of `col(X_R)`.
    pub fn basis(&self) -> OrthoBasis {
        self.solver.basis()
    }

    /// Fitted values `X_R ŵ_R = P_{X_R} y'` for a new response on the same
    /// design, reusing the factorization.
    pub fn refit_fitted(&self, y: &DVector<f64>) -> DVector<f64> {
        self.solver.basis().project_vec(y)
    }

    pub fn degenerate(&self) -> bool {
        self.effective_rank() < self.reducer.width()
    }
}

pub fn fit_pcr(x: &DesignMatrix, y: &DVector<f64>, r: usize) -> Result<ReducedModel> {
    let part = x.svd()?.partition(r)?;
    // X V_r = U_r Σ_r
    let mut design = part.head.u.clone();
    for (j, mut col) in design.column_iter_mut().enumerate() {
        col *= part.head.sigma[j];
    }
    ReducedModel::fit(
        Reducer::Principal {
            r,
            v_r: part.head.v,
        },
        &design,
        y,
    )
}

pub fn fit_cls(x: &DesignMatrix, y: &DVector<f64>, sketch: &SketchMatrix) -> Result<ReducedModel> {
    let xr = apply_sketch(x, sketch)?;
    ReducedModel::fit(Reducer::Sketch(sketch.clone()), &xr, y)
}

/// `Xnew · w̃`.
pub fn predict(model: &ReducedModel, xnew: &DMatrix<f64>) -> Result<DVector<f64>> {
    if xnew.ncols() != model.back_mapped.len() {
        return Err(Error::arg(format!(
            "new data has {} columns, model expects {}",
            xnew.ncols(),
            model.back_mapped.len()
        )));
    }
    Ok(xnew * &model.back_mapped)
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub members: Vec<ReducedModel>,
    pub spec: SketchSpec,
}

impl EnsembleModel {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Average of the members' back-mapped coefficients.
    pub fn averaged_coeffs(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.spec.d);
        for m in &self.members {
            acc += m.back_mapped();
        }
        acc / self.members.len() as f64
    }
}

/// Seed of ensemble member `b`.
pub fn member_seed(seed: u64, b: usize) -> u64 {
    if b == 0 {
        seed
    } else {
        substream(seed, b as u64)
    }
}

/// Fits `B` independent sketches and returns `(1/B) Σ_b P_{XR_b} y`.
///
/// Member 0 uses `spec.seed` itself, so `B = 1` coincides with [`fit_cls`].
pub fn fit_averaged(
    x: &DesignMatrix,
    y: &DVector<f64>,
    spec: &SketchSpec,
    b: usize,
) -> Result<(EnsembleModel, DVector<f64>)> {
    if b == 0 {
        return Err(Error::arg("ensemble needs B ≥ 1"));
    }
    let members = (0..b)
        .map(|i| {
            let sketch = draw_sketch(&spec.with_seed(member_seed(spec.seed, i)))?;
            fit_cls(x, y, &sketch)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fitted = DVector::zeros(x.nrows());
    for m in &members {
        fitted += m.fitted();
    }
    fitted /= b as f64;
    Ok((EnsembleModel { members, spec: *spec }, fitted))
}
