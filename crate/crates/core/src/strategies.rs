//! Stream query strategies and their KDE-calibrated thresholds.
//!
//! Every threshold is a quantile of a Gaussian KDE fitted to a statistic evaluated on
//! the whitened, unlabeled calibration set `V`:
//!
//! | strategy        | statistic                  | accept when               |
//! |-----------------|----------------------------|---------------------------|
//! | random          | `r ~ U(0,1)`               | `r ≥ 1 − α`               |
//! | norm threshold  | `‖z‖`                      | `‖z‖ ≥ Γ`, `Γ = Q(1−α)`   |
//! | CDO             | `zᵀ(ZᵀZ)⁻¹z`               | `upv ≥ Γ`, `Γ = Q(1−α)`   |
//! | bounded CDO     | `zᵀ(ZᵀZ)⁻¹z` (or weighted) | `Γ1 ≤ upv ≤ Γ2`           |
//!
//! with `Γ2 = Q(1−c)` and `Γ1 = Q(1−c−α)` for the bounded variant.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{DesignState, FittedModel};
use crate::linalg::{norm, Matrix};
use crate::numstats::KernelDensity;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Random,
    NormThreshold,
    Cdo,
    BoundedCdo,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::NormThreshold,
        StrategyKind::Cdo,
        StrategyKind::BoundedCdo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::NormThreshold => "norm-threshold",
            StrategyKind::Cdo => "cdo",
            StrategyKind::BoundedCdo => "bounded-cdo",
        }
    }

    /// Whether the threshold depends on the labeled design.
    pub fn uses_design(&self) -> bool {
        matches!(self, StrategyKind::Cdo | StrategyKind::BoundedCdo)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thresholds<T> {
    None,
    Lower(T),
    /// `upper` is `+∞` when the protection cut-off is zero.
    Band {
        lower: T,
        upper: T,
    },
}

impl<T: Scalar> Thresholds<T> {
    pub fn lower(&self) -> Option<T> {
        match *self {
            Thresholds::None => None,
            Thresholds::Lower(g) | Thresholds::Band { lower: g, .. } => Some(g),
        }
    }

    pub fn upper(&self) -> Option<T> {
        match *self {
            Thresholds::Band { upper, .. } => Some(upper),
            _ => None,
        }
    }
}

/// Outcome of one accept/reject decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<T> {
    pub accept: bool,
    /// The value compared against the thresholds: the uniform draw for random
    /// sampling, the norm or the (weighted) UPV otherwise.
    pub statistic: T,
    /// Set when the weighted statistic was requested but the weighted Gram matrix was
    /// singular, so the plain UPV was used instead.
    pub weighted_fallback: bool,
}

/// `(ZᵀZ)⁻¹` or `(ZᵀWZ)⁻¹` together with the model expansion, for repeated UPV queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Precision<T> {
    inverse: Matrix<T>,
    design_len: usize,
    weighted: bool,
    expansion: crate::estimators::Expansion,
}

impl<T: Scalar> Precision<T> {
    pub fn plain(design: &DesignState<T>) -> Result<Self> {
        Ok(Self {
            inverse: design.gram_inverse().ok_or(Error::Singular)?.clone(),
            design_len: design.len(),
            weighted: false,
            expansion: design.expansion(),
        })
    }

    /// Fails with [`Error::Singular`] when too many weights vanish.
    pub fn weighted(design: &DesignState<T>, weights: &[T]) -> Result<Self> {
        let g = design.rows().weighted_gram(weights)?;
        Ok(Self {
            inverse: g.inverse()?,
            design_len: design.len(),
            weighted: true,
            expansion: design.expansion(),
        })
    }

    pub fn upv(&self, z: &[T]) -> Result<T> {
        self.inverse.quad_form(&self.expansion.expand(z))
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }
}

/// Unscaled prediction variance `z⁽ᵐ⁾ᵀ(ZᵀZ)⁻¹z⁽ᵐ⁾`.
pub fn upv<T: Scalar>(z: &[T], design: &DesignState<T>) -> Result<T> {
    let inv = design.gram_inverse().ok_or(Error::Singular)?;
    inv.quad_form(&design.expansion().expand(z))
}

/// Weighted prediction variance `z⁽ᵐ⁾ᵀ(ZᵀWZ)⁻¹z⁽ᵐ⁾`. A singular weighted Gram matrix
/// surfaces as [`Error::Singular`]; callers fall back to [`upv`].
pub fn upv_weighted<T: Scalar>(z: &[T], design: &DesignState<T>, weights: &[T]) -> Result<T> {
    Precision::weighted(design, weights)?.upv(z)
}

fn kde_quantile_of<T: Scalar>(stats: Vec<T>, q: T) -> Result<T> {
    KernelDensity::with_silverman(stats)?.quantile(q)
}

/// `Γ` with `P(‖v‖ ≥ Γ) = α` under the KDE of calibration norms.
pub fn estimate_norm_threshold<T: Scalar>(calibration: &Matrix<T>, alpha: T) -> Result<T> {
    if calibration.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let norms: Vec<T> = calibration.row_iter().map(norm).collect();
    kde_quantile_of(norms, T::one() - alpha)
}

fn calibration_upv<T: Scalar>(calibration: &Matrix<T>, precision: &Precision<T>) -> Result<Vec<T>> {
    if calibration.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    calibration.row_iter().map(|v| precision.upv(v)).collect()
}

/// `Γ` with `P(upv ≥ Γ) = α` under the KDE of calibration UPVs.
pub fn estimate_cdo_threshold<T: Scalar>(
    calibration: &Matrix<T>,
    design: &DesignState<T>,
    alpha: T,
) -> Result<T> {
    let stats = calibration_upv(calibration, &Precision::plain(design)?)?;
    kde_quantile_of(stats, T::one() - alpha)
}

/// `(Γ1, Γ2)` at the `1−c−α` and `1−c` KDE quantiles. With `weights` the statistics are
/// weighted UPVs. `c = 0` gives `Γ2 = +∞`.
pub fn estimate_bounds<T: Scalar>(
    calibration: &Matrix<T>,
    design: &DesignState<T>,
    alpha: T,
    cutoff: T,
    weights: Option<&[T]>,
) -> Result<(T, T)> {
    let precision = match weights {
        Some(w) => Precision::weighted(design, w)?,
        None => Precision::plain(design)?,
    };
    bounds_with(calibration, &precision, alpha, cutoff)
}

fn bounds_with<T: Scalar>(
    calibration: &Matrix<T>,
    precision: &Precision<T>,
    alpha: T,
    cutoff: T,
) -> Result<(T, T)> {
    check_band(alpha, cutoff)?;
    let stats = calibration_upv(calibration, precision)?;
    let kd = KernelDensity::with_silverman(stats)?;
    let upper = if cutoff == T::zero() {
        T::infinity()
    } else {
        kd.quantile(T::one() - cutoff)?
    };
    let lower = kd.quantile(T::one() - cutoff - alpha)?;
    Ok((lower, upper))
}

fn check_band<T: Scalar>(alpha: T, cutoff: T) -> Result<()> {
    if !(cutoff >= T::zero() && cutoff < T::one()) {
        return Err(Error::Config(format!(
            "cut-off c = {cutoff} outside [0, 1)"
        )));
    }
    if !(alpha > T::zero()) || alpha + cutoff >= T::one() {
        return Err(Error::Config(format!(
            "need 0 < α and c + α < 1, got α = {alpha}, c = {cutoff}"
        )));
    }
    Ok(())
}

/// Decision state for one strategy. Immutable: refreshing returns a new value.
#[derive(Debug, Clone)]
pub struct StrategyState<T> {
    kind: StrategyKind,
    alpha: T,
    cutoff: T,
    weighted: bool,
    calibration: Arc<Matrix<T>>,
    thresholds: Thresholds<T>,
    precision: Option<Arc<Precision<T>>>,
    weighted_fallbacks: usize,
}

impl<T: Scalar> StrategyState<T> {
    /// Builds the state and estimates the initial thresholds against `design`/`model`.
    ///
    /// `calibration` holds the whitened warm-up rows (not model-expanded).
    pub fn new(
        kind: StrategyKind,
        alpha: T,
        cutoff: T,
        weighted: bool,
        calibration: Arc<Matrix<T>>,
        design: &DesignState<T>,
        model: &FittedModel<T>,
    ) -> Result<Self> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(Error::Config(format!(
                "sampling rate α = {alpha} outside [0, 1]"
            )));
        }
        if kind == StrategyKind::BoundedCdo {
            check_band(alpha, cutoff)?;
        }
        let mut state = Self {
            kind,
            alpha,
            cutoff,
            weighted,
            calibration,
            thresholds: Thresholds::None,
            precision: None,
            weighted_fallbacks: 0,
        };
        match kind {
            StrategyKind::Random => {}
            StrategyKind::NormThreshold => {
                state.thresholds =
                    Thresholds::Lower(estimate_norm_threshold(&state.calibration, alpha)?);
            }
            StrategyKind::Cdo | StrategyKind::BoundedCdo => {
                state = state.refresh_thresholds(design, model)?
            }
        }
        Ok(state)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn cutoff(&self) -> T {
        self.cutoff
    }

    pub fn weighted(&self) -> bool {
        self.weighted
    }

    pub fn thresholds(&self) -> Thresholds<T> {
        self.thresholds
    }

    pub fn calibration(&self) -> &Matrix<T> {
        &self.calibration
    }

    /// How many times the weighted statistic fell back to the plain UPV.
    pub fn weighted_fallbacks(&self) -> usize {
        self.weighted_fallbacks
    }

    // Weighted precision if requested and available, else plain.
    fn precision_for(
        &self,
        design: &DesignState<T>,
        model: &FittedModel<T>,
    ) -> Result<(Precision<T>, bool)> {
        if self.weighted {
            match Precision::weighted(design, &model.weights) {
                Ok(p) => return Ok((p, false)),
                Err(Error::Singular) => return Ok((Precision::plain(design)?, true)),
                Err(e) => return Err(e),
            }
        }
        Ok((Precision::plain(design)?, false))
    }

    /// Re-estimates design-dependent thresholds after the design changed.
    ///
    /// Random and norm-threshold states come back unchanged.
    pub fn refresh_thresholds(
        &self,
        design: &DesignState<T>,
        model: &FittedModel<T>,
    ) -> Result<Self> {
        if !self.kind.uses_design() {
            return Ok(self.clone());
        }
        let (precision, fell_back) = self.precision_for(design, model)?;
        let thresholds = match self.kind {
            StrategyKind::Cdo => {
                let stats = calibration_upv(&self.calibration, &precision)?;
                Thresholds::Lower(kde_quantile_of(stats, T::one() - self.alpha)?)
            }
            StrategyKind::BoundedCdo => {
                let (lower, upper) =
                    bounds_with(&self.calibration, &precision, self.alpha, self.cutoff)?;
                Thresholds::Band { lower, upper }
            }
            _ => unreachable!("design-independent strategies returned above"),
        };
        Ok(Self {
            thresholds,
            precision: Some(Arc::new(precision)),
            weighted_fallbacks: self.weighted_fallbacks + usize::from(fell_back),
            ..self.clone()
        })
    }

    /// The decision statistic for a whitened point.
    pub fn statistic(
        &self,
        z: &[T],
        design: &DesignState<T>,
        model: &FittedModel<T>,
    ) -> Result<(T, bool)> {
        match self.kind {
            StrategyKind::Random => Err(Error::Config("random sampling has no statistic".into())),
            StrategyKind::NormThreshold => Ok((norm(z), false)),
            StrategyKind::Cdo | StrategyKind::BoundedCdo => {
                if let Some(p) = self.precision.as_deref() {
                    if p.design_len == design.len() {
                        return Ok((p.upv(z)?, self.weighted && !p.is_weighted()));
                    }
                }
                let (p, fell_back) = self.precision_for(design, model)?;
                Ok((p.upv(z)?, fell_back))
            }
        }
    }

    /// Accept or reject the whitened point `z`. Only random sampling touches `rng`.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        z: &[T],
        design: &DesignState<T>,
        model: &FittedModel<T>,
        rng: &mut R,
    ) -> Result<Decision<T>> {
        if self.kind == StrategyKind::Random {
            let r = T::lit(rng.random::<f64>());
            return Ok(Decision {
                accept: r >= T::one() - self.alpha,
                statistic: r,
                weighted_fallback: false,
            });
        }
        let (statistic, weighted_fallback) = self.statistic(z, design, model)?;
        let accept = match self.thresholds {
            Thresholds::Lower(g) => statistic >= g,
            Thresholds::Band { lower, upper } => lower <= statistic && statistic <= upper,
            Thresholds::None => false,
        };
        Ok(Decision {
            accept,
            statistic,
            weighted_fallback,
        })
    }
}
