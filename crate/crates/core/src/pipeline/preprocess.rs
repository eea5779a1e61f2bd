//! Train/test standardization: columns are centered and scaled to unit norm
//! with training statistics only, and the response is centered.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Columns whose centered norm falls below this fraction of their raw norm
/// are treated as constant and dropped.
pub const CONSTANT_COLUMN_RTOL: f64 = 1e-12;

/// Everything needed to map raw data into the standardized space and back.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    /// Indices (into the raw columns) that were kept.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Training means of the kept columns.
    pub means: Vec<f64>,
    /// Training norms of the kept, centered columns.
    pub norms: Vec<f64>,
    pub y_mean: f64,
    pub raw_width: usize,
}

impl Transform {
    pub fn fit(x_train: &DMatrix<f64>, y_train: &DVector<f64>) -> Result<Self> {
        let (n, d) = x_train.shape();
        if n == 0 {
            return Err(Error::Data("training set is empty".into()));
        }
        if y_train.len() != n {
            return Err(Error::arg(format!("response has length {}, training set has {n} rows", y_train.len())));
        }
        let (mut kept, mut dropped, mut means, mut norms) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for j in 0..d {
            let col = x_train.column(j);
            let mean = col.mean();
            let norm = col.map(|v| v - mean).norm();
            if norm > CONSTANT_COLUMN_RTOL * col.norm() && norm > 0.0 {
                kept.push(j);
                means.push(mean);
                norms.push(norm);
            } else {
                dropped.push(j);
            }
        }
        Ok(Self {
            kept,
            dropped,
            means,
            norms,
            y_mean: y_train.mean(),
            raw_width: d,
        })
    }

    pub fn apply_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.raw_width {
            return Err(Error::arg(format!("expected {} columns, got {}", self.raw_width, x.ncols())));
        }
        Ok(DMatrix::from_fn(x.nrows(), self.kept.len(), |i, j| {
            (x[(i, self.kept[j])] - self.means[j]) / self.norms[j]
        }))
    }

    pub fn apply_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.add_scalar(-self.y_mean)
    }

    /// Raw-space coefficients (zero for dropped columns) and intercept with
    /// `ŷ_raw = intercept + x_raw · coeffs`.
    pub fn back_transform(&self, w: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if w.len() != self.kept.len() {
            return Err(Error::arg(format!("expected {} coefficients, got {}", self.kept.len(), w.len())));
        }
        let mut raw = DVector::zeros(self.raw_width);
        let mut intercept = self.y_mean;
        for (j, &col) in self.kept.iter().enumerate() {
            let b = w[j] / self.norms[j];
            raw[col] = b;
            intercept -= self.means[j] * b;
        }
        Ok((raw, intercept))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub x_train: DMatrix<f64>,
    pub y_train: DVector<f64>,
    pub x_test: DMatrix<f64>,
    pub transform: Transform,
}

pub fn preprocess_train_test(x_train: &DMatrix<f64>, y_train: &DVector<f64>, x_test: &DMatrix<f64>) -> Result<Preprocessed> {
    let transform = Transform::fit(x_train, y_train)?;
    if transform.kept.is_empty() {
        return Err(Error::Data("every predictor column is constant on the training set".into()));
    }
    Ok(Preprocessed {
        x_train: transform.apply_x(x_train)?,
        y_train: transform.apply_y(y_train),
        x_test: transform.apply_x(x_test)?,
        transform,
    })
}

/// Row split with a random permutation; returns `(train, test)` row indices.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::arg(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Data(format!("cannot split {n} rows with test fraction {test_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut crate::rng::stream(seed));
    let mut test = idx.split_off(n - n_test);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, gaussian_vector, stream};

    #[test]
    fn standardized_columns() {
        let x = gaussian_matrix(&mut stream(1), 30, 4, 3.0).add_scalar(5.0);
        let y = gaussian_vector(&mut stream(2), 30);
        let p = preprocess_train_test(&x, &y, &x).unwrap();
        for col in p.x_train.column_iter() {
            assert!(col.mean().abs() < 1e-12);
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
        assert!(p.y_train.mean().abs() < 1e-12);
    }

    #[test]
    fn standardized_input_is_left_alone() {
        let raw = gaussian_matrix(&mut stream(3), 20, 3, 1.0);
        let first = preprocess_train_test(&raw, &gaussian_vector(&mut stream(4), 20), &raw).unwrap().x_train;
        let again = preprocess_train_test(&first, &DVector::zeros(20), &first).unwrap();
        assert!((&again.x_train - &first).amax() < 1e-14);
        assert!(again.transform.means.iter().all(|m| m.abs() < 1e-15));
        assert!(again.transform.norms.iter().all(|s| (s - 1.0).abs() < 1e-14));
    }

    #[test]
    fn constant_columns_are_dropped() {
        let mut x = gaussian_matrix(&mut stream(5), 10, 3, 1.0);
        x.column_mut(1).fill(0.1);
        let p = preprocess_train_test(&x, &DVector::zeros(10), &x).unwrap();
        assert_eq!(p.transform.dropped, vec![1]);
        assert_eq!(p.transform.kept, vec![0, 2]);
        assert_eq!(p.x_train.ncols(), 2);
        let all_const = DMatrix::from_element(4, 2, 3.0);
        assert!(preprocess_train_test(&all_const, &DVector::zeros(4), &all_const).is_err());
    }

    #[test]
    fn back_transform_round_trip() {
        let x = gaussian_matrix(&mut stream(6), 25, 5, 2.0).add_scalar(-1.0);
        let y = gaussian_vector(&mut stream(7), 25).add_scalar(4.0);
        let xt = gaussian_matrix(&mut stream(8), 9, 5, 2.0);
        let p = preprocess_train_test(&x, &y, &xt).unwrap();
        let w = gaussian_vector(&mut stream(9), 5);
        let (raw, intercept) = p.transform.back_transform(&w).unwrap();
        let raw_pred = (&xt * raw).add_scalar(intercept);
        let std_pred = (&p.x_test * &w).add_scalar(p.transform.y_mean);
        assert!((raw_pred - std_pred).amax() < 1e-8);
    }

    #[test]
    fn test_rows_do_not_influence_transform() {
        let x = gaussian_matrix(&mut stream(10), 15, 3, 1.0);
        let y = gaussian_vector(&mut stream(11), 15);
        let a = preprocess_train_test(&x, &y, &gaussian_matrix(&mut stream(12), 4, 3, 1.0)).unwrap();
        let b = preprocess_train_test(&x, &y, &gaussian_matrix(&mut stream(13), 7, 3, 100.0)).unwrap();
        assert_eq!(a.transform, b.transform);
        assert_eq!(a.x_train, b.x_train);
    }

    #[test]
    fn split_is_a_partition() {
        let (train, test) = split_rows(50, 0.2, 3).unwrap();
        assert_eq!(test.len(), 10);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(split_rows(50, 0.2, 3).unwrap(), (train, test));
        assert!(split_rows(3, 0.01, 0).is_err());
        assert!(split_rows(10, 1.0, 0).is_err());
    }
}
