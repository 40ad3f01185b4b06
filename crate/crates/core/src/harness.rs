//! Stream-based active learning runs, their replication over seeds and the
//! aggregation of learning curves.
//!
//! One run: the first `m` stream points become the unlabeled calibration set, the
//! covariance estimated on them whitens everything afterwards, and points are then
//! screened one at a time until `B` labels are bought or the stream cap is hit.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    fit, loo_cv, predict, rmse, DesignState, Expansion, FittedModel, LossKind,
};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::strategies::{StrategyKind, StrategyState};
use crate::stream::{
    derive_seed, gen_initial_design, gen_test_set, open_stream, purpose, rng_for, Sample,
    ScenarioConfig, StreamState,
};
use crate::whitening::Whitener;

/// Attempts at drawing a nonsingular initial design.
pub const INIT_ATTEMPTS: u64 = 5;

/// Default window of the stabilization score.
pub const STABILIZATION_WINDOW: usize = 3;

/// A query strategy paired with the estimator refitted after each label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub loss: LossKind,
    /// Use the robust weights in the prediction variance (bounded CDO and CDO only).
    pub weighted: bool,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, loss: LossKind) -> Self {
        Self {
            kind,
            loss,
            weighted: false,
        }
    }

    pub fn weighted(self) -> Self {
        Self {
            weighted: true,
            ..self
        }
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind, self.loss.name())?;
        if self.weighted {
            f.write_str("/weighted")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Record the stabilization score after every refit.
    pub stabilization: bool,
    /// Record the leave-one-out score after every refit. Costly for robust losses.
    pub loocv: bool,
    pub window: usize,
    /// Stop as soon as the stabilization score drops below this value.
    pub stop_tol: Option<f64>,
    /// Keep one [`TraceRecord`] per screened stream point.
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stabilization: true,
            loocv: true,
            window: STABILIZATION_WINDOW,
            stop_tol: None,
            trace: false,
        }
    }
}

impl RunOptions {
    /// Learning curves only.
    pub fn curves_only() -> Self {
        Self {
            stabilization: false,
            loocv: false,
            ..Self::default()
        }
    }
}

/// One screened stream point.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    /// Labels bought before this decision.
    pub step: usize,
    /// 1-based position in the stream, calibration points included.
    pub stream_index: usize,
    pub statistic: T,
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub accept: bool,
    pub is_outlier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<T> {
    pub spec: StrategySpec,
    /// Test RMSE after the initial fit and after every label.
    pub rmse_curve: Vec<T>,
    pub labels_spent: usize,
    /// Stream observations consumed, calibration included.
    pub stream_position: usize,
    /// Labeled points that were outliers.
    pub outliers_sampled: usize,
    pub calibration_outliers: usize,
    pub initial_outliers: usize,
    /// Stream index of every accepted point.
    pub acceptances: Vec<usize>,
    /// One entry per step; `None` until `window + 1` models exist or when disabled.
    pub stabilization_curve: Vec<Option<T>>,
    pub loocv_curve: Vec<Option<T>>,
    pub trace: Vec<TraceRecord<T>>,
    pub weighted_fallbacks: usize,
    pub init_attempts: u64,
    /// Eigenvalues of the calibration covariance raised to the floor.
    pub clamped_eigenvalues: usize,
    pub stopped_early: bool,
}

/// Everything shared by the strategies of one replica: the whitened calibration set,
/// the initial design and the test set, plus the stream positioned after calibration.
#[derive(Debug, Clone)]
pub struct Replica<T> {
    pub seed: u64,
    stream: StreamState,
    stream_rng: ChaCha8Rng,
    whitener: Whitener<T>,
    calibration: Arc<Matrix<T>>,
    calibration_model: Matrix<T>,
    calibration_outliers: usize,
    init_raw: Sample<T>,
    init_design: DesignState<T>,
    init_attempts: u64,
    test_x: Matrix<T>,
    test_y: Vec<T>,
    budget: usize,
    stream_cap: usize,
    alpha: T,
    cutoff: T,
}

fn expand_rows<T: Scalar>(rows: &Matrix<T>, expansion: Expansion) -> Result<Matrix<T>> {
    let mut out = Matrix::with_capacity(rows.nrows(), expansion.width(rows.ncols()));
    for r in rows.row_iter() {
        out.push_row(&expansion.expand(r))?;
    }
    Ok(out)
}

impl<T: Scalar> Replica<T> {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let expansion = if config.intercept {
            Expansion::Intercept
        } else {
            Expansion::Identity
        };
        let (mut stream, mut stream_rng) = open_stream(config, seed);

        let mut cal_raw = Matrix::with_capacity(config.warm_up, config.p);
        let mut calibration_outliers = 0;
        for _ in 0..config.warm_up {
            let o = stream.next_observation::<_, T>(&mut stream_rng);
            calibration_outliers += usize::from(o.is_outlier);
            cal_raw.push_row(&o.x)?;
        }
        let whitener = Whitener::from_calibration(&cal_raw, config.center)?;
        let calibration = whitener.whiten_rows(&cal_raw)?;
        let calibration_model = expand_rows(&calibration, expansion)?;

        let mut found = None;
        for attempt in 0..INIT_ATTEMPTS {
            let mut rng = rng_for(seed, purpose::INIT + attempt);
            let raw: Sample<T> = gen_initial_design(&stream, &mut rng);
            let z = whitener.whiten_rows(&raw.x)?;
            let design = DesignState::from_raw(&z, raw.y.clone(), expansion)?;
            if design.gram_inverse().is_some() {
                found = Some((raw, design, attempt + 1));
                break;
            }
        }
        let (init_raw, init_design, init_attempts) =
            found.ok_or(Error::SingularInitialDesign(INIT_ATTEMPTS as usize))?;

        let test: Sample<T> = gen_test_set(&stream, &mut rng_for(seed, purpose::TEST));
        let test_x = expand_rows(&whitener.whiten_rows(&test.x)?, expansion)?;

        Ok(Self {
            seed,
            stream,
            stream_rng,
            whitener,
            calibration: Arc::new(calibration),
            calibration_model,
            calibration_outliers,
            init_raw,
            init_design,
            init_attempts,
            test_x,
            test_y: test.y,
            budget: config.budget,
            stream_cap: config.stream_cap,
            alpha: T::lit(config.alpha),
            cutoff: T::lit(config.cutoff),
        })
    }

    pub fn whitener(&self) -> &Whitener<T> {
        &self.whitener
    }

    /// Whitened calibration rows.
    pub fn calibration(&self) -> &Matrix<T> {
        &self.calibration
    }

    pub fn initial_design(&self) -> &DesignState<T> {
        &self.init_design
    }

    pub fn stream(&self) -> &StreamState {
        &self.stream
    }

    fn test_rmse(&self, model: &FittedModel<T>) -> Result<T> {
        rmse(&predict(model, &self.test_x)?, &self.test_y)
    }

    /// Runs one strategy on this replica's stream.
    pub fn run(&self, spec: StrategySpec, options: &RunOptions) -> Result<RunResult<T>> {
        let mut stream = self.stream.clone();
        let mut stream_rng = self.stream_rng.clone();
        let mut strategy_rng = rng_for(self.seed, purpose::STRATEGY);

        let mut design = self.init_design.clone();
        let mut model = fit(&design, spec.loss)?;
        let mut state = StrategyState::new(
            spec.kind,
            self.alpha,
            self.cutoff,
            spec.weighted,
            Arc::clone(&self.calibration),
            &design,
            &model,
        )?;

        let track_stab = options.stabilization || options.stop_tol.is_some();
        let mut history = VecDeque::with_capacity(options.window + 2);
        let mut out = RunResult {
            spec,
            rmse_curve: Vec::with_capacity(self.budget + 1),
            labels_spent: 0,
            stream_position: stream.position(),
            outliers_sampled: 0,
            calibration_outliers: self.calibration_outliers,
            initial_outliers: self.init_raw.outlier_count(),
            acceptances: Vec::new(),
            stabilization_curve: Vec::new(),
            loocv_curve: Vec::new(),
            trace: Vec::new(),
            weighted_fallbacks: 0,
            init_attempts: self.init_attempts,
            clamped_eigenvalues: self.whitener.clamped_eigenvalues(),
            stopped_early: false,
        };
        self.record_step(
            &mut out,
            &mut history,
            &design,
            &model,
            spec.loss,
            options,
            track_stab,
        )?;

        while out.labels_spent < self.budget && stream.position() < self.stream_cap {
            let obs = stream.next_observation::<_, T>(&mut stream_rng);
            let z = self.whitener.whiten(&obs.x)?;
            let d = state.decide(&z, &design, &model, &mut strategy_rng)?;
            if options.trace {
                let th = state.thresholds();
                out.trace.push(TraceRecord {
                    step: out.labels_spent,
                    stream_index: stream.position(),
                    statistic: d.statistic,
                    lower: th.lower(),
                    upper: th.upper(),
                    accept: d.accept,
                    is_outlier: obs.is_outlier,
                });
            }
            if !d.accept {
                continue;
            }
            design = design.augment(&z, obs.y)?;
            model = fit(&design, spec.loss)?;
            state = state.refresh_thresholds(&design, &model)?;
            out.labels_spent += 1;
            out.outliers_sampled += usize::from(obs.is_outlier);
            out.acceptances.push(stream.position());
            self.record_step(
                &mut out,
                &mut history,
                &design,
                &model,
                spec.loss,
                options,
                track_stab,
            )?;

            if let (Some(tol), Some(Some(s))) = (options.stop_tol, out.stabilization_curve.last()) {
                if s.as_f64() < tol {
                    out.stopped_early = true;
                    break;
                }
            }
        }
        out.stream_position = stream.position();
        out.weighted_fallbacks = state.weighted_fallbacks();
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn record_step(
        &self,
        out: &mut RunResult<T>,
        history: &mut VecDeque<Vec<T>>,
        design: &DesignState<T>,
        model: &FittedModel<T>,
        loss: LossKind,
        options: &RunOptions,
        track_stab: bool,
    ) -> Result<()> {
        out.rmse_curve.push(self.test_rmse(model)?);
        let stab = if track_stab {
            history.push_back(predict(model, &self.calibration_model)?);
            if history.len() > options.window + 1 {
                history.pop_front();
            }
            stabilization_score(history.make_contiguous(), options.window)
        } else {
            None
        };
        out.stabilization_curve.push(stab);
        out.loocv_curve.push(if options.loocv {
            loo_cv(design, loss).ok()
        } else {
            None
        });
        Ok(())
    }
}

/// Mean over the `w` most recent consecutive model pairs of the summed squared change
/// in predictions. `None` until `w + 1` prediction vectors exist.
pub fn stabilization_score<T: Scalar, V: AsRef<[T]>>(history: &[V], w: usize) -> Option<T> {
    if w == 0 || history.len() < w + 1 {
        return None;
    }
    let tail = &history[history.len() - w - 1..];
    let total: T = tail
        .windows(2)
        .map(|pair| {
            pair[0]
                .as_ref()
                .iter()
                .zip(pair[1].as_ref())
                .map(|(&a, &b)| (b - a) * (b - a))
                .sum::<T>()
        })
        .sum();
    Some(total / T::count(w))
}

/// Current stabilization score over the prediction history and LOO score on `design`.
pub fn stopping_diagnostics<T: Scalar, V: AsRef<[T]>>(
    history: &[V],
    w: usize,
    design: &DesignState<T>,
    loss: LossKind,
) -> (Option<T>, Option<T>) {
    (stabilization_score(history, w), loo_cv(design, loss).ok())
}

/// Runs every strategy on one replica seed.
pub fn run_single<T: Scalar>(
    config: &ScenarioConfig,
    spec: StrategySpec,
    seed: u64,
    options: &RunOptions,
) -> Result<RunResult<T>> {
    Replica::new(config, seed)?.run(spec, options)
}

/// Seed of replica `r`.
pub fn replica_seed(config: &ScenarioConfig, r: usize) -> u64 {
    derive_seed(config.seed, r as u64)
}

/// Per-replica results, `[replica][strategy]`, computed in parallel and returned in
/// replica order.
pub fn run_replicas<T: Scalar>(
    config: &ScenarioConfig,
    specs: &[StrategySpec],
    n_replicas: usize,
    options: &RunOptions,
) -> Result<Vec<Vec<RunResult<T>>>> {
    if n_replicas == 0 {
        return Err(Error::Config("n_replicas must be at least 1".into()));
    }
    if specs.is_empty() {
        return Err(Error::Config("no strategies given".into()));
    }
    config.validate()?;
    (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let replica = Replica::new(config, replica_seed(config, r))?;
            specs.iter().map(|&s| replica.run(s, options)).collect()
        })
        .collect()
}

/// Per-step summary of one strategy's learning curves across replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult<T> {
    pub scenario: String,
    pub spec: StrategySpec,
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub n_replicas: usize,
    /// Replicas whose curve was shorter than `steps` and padded with its last value.
    pub n_padded: usize,
}

impl<T: Scalar> AggregateResult<T> {
    pub fn steps(&self) -> usize {
        self.mean.len()
    }

    pub fn final_mean(&self) -> T {
        *self.mean.last().expect("aggregates have at least one step")
    }

    /// Standard error of the mean at `step`.
    pub fn standard_error(&self, step: usize) -> T {
        self.std[step] / T::count(self.n_replicas).sqrt()
    }
}

/// Mean and sample standard deviation per step over `curves`, each padded to `steps`
/// with its last value.
///
/// Values are summed in sorted order, so the result does not depend on replica order.
pub fn aggregate<T: Scalar, C: AsRef<[T]>>(
    scenario: &str,
    spec: StrategySpec,
    curves: &[C],
    steps: usize,
) -> Result<AggregateResult<T>> {
    if curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut n_padded = 0;
    let mut columns = vec![Vec::with_capacity(curves.len()); steps];
    for c in curves {
        let c = c.as_ref();
        let last = *c.last().ok_or(Error::EmptyInput)?;
        if c.len() > steps {
            return Err(Error::DimensionMismatch {
                expected: steps,
                actual: c.len(),
            });
        }
        n_padded += usize::from(c.len() < steps);
        for (t, col) in columns.iter_mut().enumerate() {
            col.push(c.get(t).copied().unwrap_or(last));
        }
    }
    let n = T::count(curves.len());
    let (mut mean, mut std) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for mut col in columns {
        col.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let m = col.iter().copied().sum::<T>() / n;
        let s = if col.len() < 2 {
            T::zero()
        } else {
            let mut dev: Vec<T> = col.iter().map(|&v| (v - m) * (v - m)).collect();
            dev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            (dev.into_iter().sum::<T>() / (n - T::one())).sqrt()
        };
        mean.push(m);
        std.push(s);
    }
    Ok(AggregateResult {
        scenario: scenario.to_string(),
        spec,
        mean,
        std,
        n_replicas: curves.len(),
        n_padded,
    })
}

/// One aggregate per strategy from `[replica][strategy]` results.
pub fn aggregate_runs<T: Scalar>(
    scenario: &str,
    config: &ScenarioConfig,
    specs: &[StrategySpec],
    runs: &[Vec<RunResult<T>>],
) -> Result<Vec<AggregateResult<T>>> {
    specs
        .iter()
        .enumerate()
        .map(|(j, &spec)| {
            let curves: Vec<&[T]> = runs.iter().map(|r| r[j].rmse_curve.as_slice()).collect();
            aggregate(scenario, spec, &curves, config.budget + 1)
        })
        .collect()
}

/// Runs `n_replicas` paired replicas of every strategy and aggregates their curves.
pub fn run_replicated<T: Scalar>(
    scenario: &str,
    config: &ScenarioConfig,
    specs: &[StrategySpec],
    n_replicas: usize,
    options: &RunOptions,
) -> Result<Vec<AggregateResult<T>>> {
    let runs = run_replicas(config, specs, n_replicas, options)?;
    aggregate_runs(scenario, config, specs, &runs)
}
