//! Least-squares and M-estimation on the labeled design.
//!
//! Robust fits use iteratively reweighted least squares started from the OLS
//! solution. The residual scale is re-estimated by MAD at every iteration, so the
//! tuning constant `k = k_factor · σ̂` tracks the current fit rather than a possibly
//! contaminated OLS start.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::numstats::{mad_scale, sample_sd};
use crate::scalar::Scalar;

/// Huber tuning constant giving 95% efficiency under normal errors.
pub const HUBER_K: f64 = 1.345;
/// Tukey bisquare tuning constant giving 95% efficiency under normal errors.
pub const TUKEY_K: f64 = 4.685;

pub const IRLS_MAX_ITER: usize = 50;
pub const IRLS_TOL: f64 = 1e-8;

/// Leverage values this close to one make leave-one-out residuals undefined.
pub const LEVERAGE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Ols,
    Huber { k_factor: f64 },
    Tukey { k_factor: f64 },
}

impl LossKind {
    pub const fn huber() -> Self {
        LossKind::Huber { k_factor: HUBER_K }
    }

    pub const fn tukey() -> Self {
        LossKind::Tukey { k_factor: TUKEY_K }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ols => "ols",
            LossKind::Huber { .. } => "huber",
            LossKind::Tukey { .. } => "tukey",
        }
    }

    pub fn k_factor(&self) -> Option<f64> {
        match *self {
            LossKind::Ols => None,
            LossKind::Huber { k_factor } | LossKind::Tukey { k_factor } => Some(k_factor),
        }
    }

    pub fn is_robust(&self) -> bool {
        !matches!(self, LossKind::Ols)
    }

    /// IRLS weight for residual `e` at threshold `k`.
    pub fn weight<T: Scalar>(&self, e: T, k: T) -> T {
        match self {
            LossKind::Ols => T::one(),
            LossKind::Huber { .. } => huber_weight(e, k),
            LossKind::Tukey { .. } => tukey_weight(e, k),
        }
    }

    /// The loss `ρ(e)` at threshold `k`.
    pub fn rho<T: Scalar>(&self, e: T, k: T) -> T {
        let a = e.abs();
        match self {
            LossKind::Ols => e * e,
            LossKind::Huber { .. } => {
                if a <= k {
                    e * e
                } else {
                    T::lit(2.0) * k * a - k * k
                }
            }
            LossKind::Tukey { .. } => {
                let cap = k * k / T::lit(6.0);
                if a <= k {
                    let u = T::one() - (e / k) * (e / k);
                    cap * (T::one() - u * u * u)
                } else {
                    cap
                }
            }
        }
    }
}

/// `1` inside `[−k, k]`, `k/|e|` outside.
pub fn huber_weight<T: Scalar>(e: T, k: T) -> T {
    let a = e.abs();
    if a <= k {
        T::one()
    } else {
        k / a
    }
}

/// `[1 − (e/k)²]²` inside `[−k, k]`, zero outside.
pub fn tukey_weight<T: Scalar>(e: T, k: T) -> T {
    if e.abs() > k {
        T::zero()
    } else {
        let u = T::one() - (e / k) * (e / k);
        u * u
    }
}

/// Maps a whitened observation to the row used by the regression model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Expansion {
    #[default]
    Identity,
    /// Appends a constant `1` column.
    Intercept,
}

impl Expansion {
    pub fn expand<'a, T: Scalar>(&self, z: &'a [T]) -> Cow<'a, [T]> {
        match self {
            Expansion::Identity => Cow::Borrowed(z),
            Expansion::Intercept => {
                let mut v = Vec::with_capacity(z.len() + 1);
                v.extend_from_slice(z);
                v.push(T::one());
                Cow::Owned(v)
            }
        }
    }

    pub fn width(&self, p: usize) -> usize {
        match self {
            Expansion::Identity => p,
            Expansion::Intercept => p + 1,
        }
    }
}

/// The labeled design: model rows, responses and the cached Gram matrix with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState<T> {
    rows: Matrix<T>,
    y: Vec<T>,
    gram: Matrix<T>,
    gram_inverse: Option<Matrix<T>>,
    expansion: Expansion,
}

impl<T: Scalar> DesignState<T> {
    /// Design from already-expanded model rows.
    pub fn new(rows: Matrix<T>, y: Vec<T>) -> Result<Self> {
        Self::with_expansion(rows, y, Expansion::Identity)
    }

    /// `rows` must already be expanded; `expansion` is applied to later augmentations
    /// and to prediction-variance queries.
    pub fn with_expansion(rows: Matrix<T>, y: Vec<T>, expansion: Expansion) -> Result<Self> {
        if rows.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                actual: y.len(),
            });
        }
        let gram = rows.gram();
        let gram_inverse = gram.inverse().ok();
        Ok(Self {
            rows,
            y,
            gram,
            gram_inverse,
            expansion,
        })
    }

    /// Expands each raw (whitened) row before building the design.
    pub fn from_raw(raw: &Matrix<T>, y: Vec<T>, expansion: Expansion) -> Result<Self> {
        let mut rows = Matrix::with_capacity(raw.nrows(), expansion.width(raw.ncols()));
        for r in raw.row_iter() {
            rows.push_row(&expansion.expand(r))?;
        }
        Self::with_expansion(rows, y, expansion)
    }

    pub fn rows(&self) -> &Matrix<T> {
        &self.rows
    }

    pub fn responses(&self) -> &[T] {
        &self.y
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.gram
    }

    /// `None` when the Gram matrix is numerically singular.
    pub fn gram_inverse(&self) -> Option<&Matrix<T>> {
        self.gram_inverse.as_ref()
    }

    pub fn expansion(&self) -> Expansion {
        self.expansion
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of model columns.
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Appends one labeled observation. `z` is the raw whitened point; the expansion is
    /// applied here. The Gram matrix is updated by `+ zzᵀ` and its inverse recomputed.
    pub fn augment(&self, z: &[T], y: T) -> Result<Self> {
        let row = self.expansion.expand(z);
        let mut rows = self.rows.clone();
        rows.push_row(&row)?;
        let mut gram = self.gram.clone();
        gram.rank_one_update(&row, T::one())?;
        let gram_inverse = gram.inverse().ok();
        let mut ys = self.y.clone();
        ys.push(y);
        Ok(Self {
            rows,
            y: ys,
            gram,
            gram_inverse,
            expansion: self.expansion,
        })
    }

    /// The design with row `i` removed.
    pub fn without_row(&self, i: usize) -> Result<Self> {
        let mut y = self.y.clone();
        y.remove(i);
        Self::with_expansion(self.rows.without_row(i), y, self.expansion)
    }

    pub fn residuals(&self, beta: &[T]) -> Result<Vec<T>> {
        let fitted = self.rows.matvec(beta)?;
        Ok(self.y.iter().zip(fitted).map(|(&y, f)| y - f).collect())
    }

    /// Hat-matrix diagonal `h_ii = z_iᵀ(ZᵀZ)⁻¹z_i`.
    pub fn leverages(&self) -> Result<Vec<T>> {
        let inv = self.gram_inverse.as_ref().ok_or(Error::Singular)?;
        self.rows.row_iter().map(|r| inv.quad_form(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T> {
    pub coefficients: Vec<T>,
    /// Diagonal of the IRLS weight matrix, one entry per training row.
    pub weights: Vec<T>,
    pub scale: T,
    pub loss: LossKind,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> FittedModel<T> {
    /// `Σ ρ(e_i)` on `design` at the model's final threshold `k_factor · σ̂`.
    pub fn objective(&self, design: &DesignState<T>) -> Result<T> {
        objective_at(design, &self.coefficients, self.loss, self.threshold())
    }

    /// `k_factor · σ̂`, or infinity for OLS.
    pub fn threshold(&self) -> T {
        match self.loss.k_factor() {
            Some(f) => T::lit(f) * self.scale,
            None => T::infinity(),
        }
    }
}

/// `Σ ρ(e_i)` for arbitrary coefficients.
pub fn objective_at<T: Scalar>(
    design: &DesignState<T>,
    beta: &[T],
    loss: LossKind,
    k: T,
) -> Result<T> {
    Ok(design
        .residuals(beta)?
        .into_iter()
        .map(|e| loss.rho(e, k))
        .sum())
}

/// MAD scale with the residual standard deviation as fallback.
pub fn residual_scale<T: Scalar>(residuals: &[T]) -> T {
    match mad_scale(residuals) {
        Ok(s) => s,
        Err(_) => {
            let sd = sample_sd(residuals);
            if sd > T::zero() {
                sd
            } else {
                T::min_positive_value()
            }
        }
    }
}

pub fn fit_ols<T: Scalar>(design: &DesignState<T>) -> Result<FittedModel<T>> {
    let (l, p) = (design.len(), design.dim());
    if l < p {
        return Err(Error::RankDeficient { rows: l, cols: p });
    }
    let rhs = design.rows.tr_matvec(&design.y)?;
    let beta = design.gram.solve(&rhs)?;
    let scale = residual_scale(&design.residuals(&beta)?);
    Ok(FittedModel {
        coefficients: beta,
        weights: vec![T::one(); l],
        scale,
        loss: LossKind::Ols,
        converged: true,
        iterations: 0,
    })
}

/// M-estimation by IRLS starting from OLS.
///
/// Each iteration re-estimates `σ̂` by MAD, sets `k = k_factor · σ̂`, recomputes the
/// weights and solves `(ZᵀWZ)β = ZᵀWy`. Stops when the largest coefficient change is
/// below `1e-8` or after 50 iterations. If the weighted Gram matrix turns singular the
/// last nonsingular iterate is returned with `converged = false`.
pub fn fit_robust<T: Scalar>(design: &DesignState<T>, loss: LossKind) -> Result<FittedModel<T>> {
    let ols = fit_ols(design)?;
    let k_factor = match loss.k_factor() {
        None => return Ok(ols),
        Some(f) if f > 0.0 => T::lit(f),
        Some(f) => {
            return Err(Error::Config(format!(
                "tuning factor must be positive, got {f}"
            )))
        }
    };

    let mut beta = ols.coefficients;
    let mut weights = ols.weights;
    let mut scale = ols.scale;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=IRLS_MAX_ITER {
        let e = design.residuals(&beta)?;
        let s = residual_scale(&e);
        let k = k_factor * s;
        let w: Vec<T> = e.iter().map(|&ei| loss.weight(ei, k)).collect();
        let g = design.rows.weighted_gram(&w)?;
        let wy: Vec<T> = design.y.iter().zip(&w).map(|(&y, &wi)| y * wi).collect();
        let rhs = design.rows.tr_matvec(&wy)?;
        let next = match g.solve(&rhs) {
            Ok(b) => b,
            Err(Error::Singular) => break,
            Err(err) => return Err(err),
        };
        let delta = next
            .iter()
            .zip(&beta)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let magnitude = next.iter().fold(T::one(), |m, &b| m.max(b.abs()));
        let tol = T::lit(IRLS_TOL).max(T::epsilon() * T::lit(64.0) * magnitude);
        beta = next;
        weights = w;
        scale = s;
        iterations = it;
        if delta < tol {
            converged = true;
            break;
        }
    }

    Ok(FittedModel {
        coefficients: beta,
        weights,
        scale,
        loss,
        converged,
        iterations,
    })
}

/// OLS or IRLS according to `loss`.
pub fn fit<T: Scalar>(design: &DesignState<T>, loss: LossKind) -> Result<FittedModel<T>> {
    match loss {
        LossKind::Ols => fit_ols(design),
        _ => fit_robust(design, loss),
    }
}

/// `ŷ = Xβ̂`; rows of `x` must already be in model form.
pub fn predict<T: Scalar>(model: &FittedModel<T>, x: &Matrix<T>) -> Result<Vec<T>> {
    x.matvec(&model.coefficients)
}

pub fn rmse<T: Scalar>(predictions: &[T], truth: &[T]) -> Result<T> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ss: T = predictions
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok((ss / T::count(truth.len())).sqrt())
}

/// Leave-one-out RMSE on the labeled design.
///
/// OLS uses the closed form `e_i / (1 − h_ii)`. Robust losses refit on every
/// leave-one-out subset.
pub fn loo_cv<T: Scalar>(design: &DesignState<T>, loss: LossKind) -> Result<T> {
    let (l, p) = (design.len(), design.dim());
    if l < p + 1 {
        return Err(Error::RankDeficient {
            rows: l,
            cols: p + 1,
        });
    }
    let h = design.leverages()?;
    let limit = T::one() - T::lit(LEVERAGE_EPS);
    if let Some((row, &hv)) = h.iter().enumerate().find(|(_, &hv)| hv >= limit) {
        return Err(Error::DegenerateLeverage {
            row,
            leverage: hv.as_f64(),
        });
    }

    let loo: Vec<T> = match loss {
        LossKind::Ols => {
            let beta = fit_ols(design)?.coefficients;
            design
                .residuals(&beta)?
                .into_iter()
                .zip(&h)
                .map(|(e, &hi)| e / (T::one() - hi))
                .collect()
        }
        _ => (0..l)
            .map(|i| {
                let sub = design.without_row(i)?;
                let m = fit_robust(&sub, loss)?;
                Ok(design.y[i] - dot(design.rows.row(i), &m.coefficients))
            })
            .collect::<Result<_>>()?,
    };
    let zeros = vec![T::zero(); l];
    rmse(&loo, &zeros)
}
