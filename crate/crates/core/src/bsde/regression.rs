//! Least-squares conditional expectations on a monomial basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest accepted ratio between the extreme singular values of `R`.
const RANK_TOLERANCE: f64 = 1e-10;

pub fn basis_size(order: usize) -> usize {
    order + 1
}

/// Rows `(1, x, …, x^order)`.
pub fn monomial_design(states: &[f64], order: usize) -> DMatrix<f64> {
    DMatrix::from_fn(states.len(), basis_size(order), |i, j| states[i].powi(j as i32))
}

/// Horner evaluation of `Σ c_j x^j`.
pub fn eval_poly(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Thin QR factorization of one design matrix, reusable for many targets.
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    order: usize,
    condition: f64,
}

impl LeastSquares {
    /// `step` only labels errors.
    pub fn new(states: &[f64], order: usize, step: usize) -> Result<Self> {
        Self::from_design(monomial_design(states, order), order, step)
    }

    /// Factorizes an arbitrary design; `order` only labels errors.
    pub fn from_design(design: DMatrix<f64>, order: usize, step: usize) -> Result<Self> {
        let p = design.ncols();
        if design.nrows() < 10 * p {
            return Err(Error::InvalidConfig(format!(
                "regression needs at least {} samples for {p} regressors, got {}",
                10 * p,
                design.nrows()
            )));
        }
        let qr = design.qr();
        let r = qr.r();
        let sv = r.singular_values();
        let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
        if !(smin > RANK_TOLERANCE * smax) {
            return Err(Error::Solver {
                step,
                order,
                reason: format!("rank-deficient design (singular values {smin:e} / {smax:e})"),
            });
        }
        Ok(Self {
            q: qr.q(),
            r,
            order,
            condition: smax / smin,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Coefficients (one column per target column).
    pub fn solve(&self, targets: &DMatrix<f64>) -> DMatrix<f64> {
        let qty = self.q.tr_mul(targets);
        self.r
            .solve_upper_triangular(&qty)
            .expect("triangular factor checked for full rank")
    }

    /// Fitted values `X β` for coefficients returned by [`solve`](Self::solve).
    pub fn fitted(&self, coefficients: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q * (&self.r * coefficients)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub condition: f64,
    pub residual_rms: f64,
}

/// Regresses `targets` on `(1, x, …, x^order)` of `states`.
pub fn regression_step(order: usize, states: &[f64], targets: &[f64]) -> Result<RegressionFit> {
    if states.len() != targets.len() {
        return Err(Error::InvalidConfig(format!(
            "{} states but {} targets",
            states.len(),
            targets.len()
        )));
    }
    let ls = LeastSquares::new(states, order, 0)?;
    let y = DMatrix::from_column_slice(targets.len(), 1, targets);
    let beta = ls.solve(&y);
    let fitted = ls.fitted(&beta);
    let resid = DVector::from_iterator(targets.len(), (0..targets.len()).map(|i| targets[i] - fitted[(i, 0)]));
    Ok(RegressionFit {
        coefficients: beta.column(0).iter().copied().collect(),
        fitted: fitted.column(0).iter().copied().collect(),
        condition: ls.condition(),
        residual_rms: resid.norm() / (targets.len() as f64).sqrt(),
    })
}
