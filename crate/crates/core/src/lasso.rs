//! LASSO regression by cyclic coordinate descent.
//!
//! Minimizes `(1/2n)·‖y − Xω − b‖² + α·‖ω‖₁`. Columns are centred (and by
//! default scaled to unit population variance) before fitting, so the
//! intercept is the target mean and `α` is comparable across features.
//! Columns with zero variance are flagged and keep a zero weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidData(
                "design matrix needs at least one column".into(),
            ));
        }
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::InvalidData(format!(
                "design matrix storage has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }
}

/// Per-column centring and scaling applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Zero-variance columns; their scale is 1 and their weight is pinned to 0.
    pub constant: Vec<bool>,
}

impl Standardization {
    fn identity(cols: usize) -> Self {
        Self {
            means: vec![0.0; cols],
            scales: vec![1.0; cols],
            constant: vec![false; cols],
        }
    }
}

fn column_moments(x: &DesignMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows as f64;
    let mut means = vec![0.0; x.cols];
    for i in 0..x.rows {
        for (m, v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; x.cols];
    for i in 0..x.rows {
        for ((s, v), m) in vars.iter_mut().zip(x.row(i)).zip(&means) {
            let d = v - m;
            *s += d * d;
        }
    }
    vars.iter_mut().for_each(|s| *s /= n);
    (means, vars)
}

fn is_constant(mean: f64, var: f64) -> bool {
    let floor = 1e-12 * mean.abs().max(1.0);
    var <= floor * floor
}

fn fit_standardization(x: &DesignMatrix, scale: bool) -> Result<Standardization> {
    if x.rows < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 rows, got {}",
            x.rows
        )));
    }
    let (means, vars) = column_moments(x);
    let constant: Vec<bool> = means
        .iter()
        .zip(&vars)
        .map(|(&m, &v)| is_constant(m, v))
        .collect();
    let scales = vars
        .iter()
        .zip(&constant)
        .map(|(&v, &c)| if c || !scale { 1.0 } else { v.sqrt() })
        .collect();
    Ok(Standardization {
        means,
        scales,
        constant,
    })
}

/// Centres every column and scales it to unit population variance.
pub fn standardize(x: &DesignMatrix) -> Result<(DesignMatrix, Standardization)> {
    let st = fit_standardization(x, true)?;
    let mut values = x.values.clone();
    for row in values.chunks_exact_mut(x.cols) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - st.means[j]) / st.scales[j];
        }
    }
    Ok((
        DesignMatrix {
            rows: x.rows,
            cols: x.cols,
            values,
        },
        st,
    ))
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub penalty: f64,
    /// Convergence threshold on the largest weight change in one sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub standardize: bool,
}

impl LassoParams {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_SWEEPS: usize = 1000;

    pub fn new(penalty: f64) -> Self {
        Self {
            penalty,
            tol: Self::DEFAULT_TOL,
            max_sweeps: Self::DEFAULT_MAX_SWEEPS,
            standardize: true,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn with_standardize(mut self, standardize: bool) -> Self {
        self.standardize = standardize;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.penalty >= 0.0) || !self.penalty.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalty must be finite and >= 0, got {}",
                self.penalty
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Fitted model. Weights live in the standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: f64,
    pub n_sweeps: usize,
    pub standardization: Standardization,
}

impl LassoModel {
    /// Model acting directly on raw features: `x·weights + intercept`.
    pub fn from_raw(weights: Vec<f64>, intercept: f64) -> Self {
        let d = weights.len();
        Self {
            weights,
            intercept,
            penalty: 0.0,
            n_sweeps: 0,
            standardization: Standardization::identity(d),
        }
    }

    /// Weights and intercept mapped back to the raw feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let st = &self.standardization;
        let w: Vec<f64> = self.weights.iter().zip(&st.scales).map(|(w, s)| w / s).collect();
        let b = self.intercept - w.iter().zip(&st.means).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r_squared: f64,
    pub nonzero_count: usize,
    pub converged: bool,
    pub final_max_delta: f64,
    pub sweeps: usize,
    /// Objective at the start and after every sweep.
    pub objective_history: Vec<f64>,
}

impl FitReport {
    /// True when no sweep raised the objective by more than rounding noise.
    pub fn objective_monotone(&self) -> bool {
        self.objective_history
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1e-12))
    }
}

pub fn fit(x: &DesignMatrix, y: &[f64], params: &LassoParams) -> Result<(LassoModel, FitReport)> {
    params.validate()?;
    if y.len() != x.rows {
        return Err(Error::InvalidData(format!(
            "target has {} entries but design matrix has {} rows",
            y.len(),
            x.rows
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite target at index {i}")));
    }
    let st = fit_standardization(x, params.standardize)?;
    let (n, d) = (x.rows, x.cols);
    let nf = n as f64;

    // column-major standardized copy
    let mut z = vec![0.0; n * d];
    for i in 0..n {
        for (j, v) in x.row(i).iter().enumerate() {
            z[j * n + i] = (v - st.means[j]) / st.scales[j];
        }
    }
    let col_sq: Vec<f64> = (0..d)
        .map(|j| {
            if st.constant[j] {
                0.0
            } else {
                z[j * n..(j + 1) * n].iter().map(|v| v * v).sum::<f64>() / nf
            }
        })
        .collect();

    let y_mean = y.iter().sum::<f64>() / nf;
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut w = vec![0.0; d];
    let alpha = params.penalty;

    let objective = |resid: &[f64], w: &[f64]| {
        resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * nf) + alpha * w.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut history = vec![objective(&resid, &w)];
    let mut converged = false;
    let mut max_delta = 0.0;
    let mut sweeps = 0;
    while sweeps < params.max_sweeps {
        sweeps += 1;
        max_delta = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = &z[j * n..(j + 1) * n];
            let old = w[j];
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + col_sq[j] * old;
            let new = soft_threshold(rho, alpha) / col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col) {
                    *r -= a * delta;
                }
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        history.push(objective(&resid, &w));
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }

    let model = LassoModel {
        weights: w,
        intercept: y_mean,
        penalty: alpha,
        n_sweeps: sweeps,
        standardization: st,
    };
    let fitted = predict(&model, x)?;
    let report = FitReport {
        r_squared: r_squared(y, &fitted)?,
        nonzero_count: model.nonzero_count(),
        converged,
        final_max_delta: max_delta,
        sweeps,
        objective_history: history,
    };
    Ok((model, report))
}

pub fn predict(model: &LassoModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.cols != model.weights.len() {
        return Err(Error::InvalidData(format!(
            "model expects {} features, matrix has {}",
            model.weights.len(),
            x.cols
        )));
    }
    let st = &model.standardization;
    Ok((0..x.rows)
        .map(|i| {
            x.row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| (v - st.means[j]) / st.scales[j] * model.weights[j])
                .sum::<f64>()
                + model.intercept
        })
        .collect())
}

/// Coefficient of determination; 0 when the target has no variance.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidData(format!(
            "length mismatch: {} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidData("r_squared needs at least 2 points".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(0.0);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Out-of-fold R² over `folds` contiguous folds.
pub fn cross_validated_r_squared(
    x: &DesignMatrix,
    y: &[f64],
    params: &LassoParams,
    folds: usize,
) -> Result<f64> {
    if folds < 2 || folds > x.rows {
        return Err(Error::InvalidParameter(format!(
            "folds must be in [2, {}], got {folds}",
            x.rows
        )));
    }
    if y.len() != x.rows {
        return Err(Error::InvalidData("target length does not match rows".into()));
    }
    let n = x.rows;
    let mut pred = vec![0.0; n];
    for k in 0..folds {
        let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
        let test: Vec<usize> = (lo..hi).collect();
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let (model, _) = fit(&x.select_rows(&train), &y_train, params)?;
        let p = predict(&model, &x.select_rows(&test))?;
        pred[lo..hi].copy_from_slice(&p);
    }
    r_squared(y, &pred)
}
