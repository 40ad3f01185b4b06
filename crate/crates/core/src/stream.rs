//! Seeded synthetic streams: contaminated observations, initial designs and clean
//! test sets.
//!
//! Every random quantity in a run comes from its own ChaCha8 sub-stream, keyed by
//! `(seed, purpose)`, so that the stream seen by one strategy does not depend on how
//! many draws another consumer made.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Sub-stream tags passed to [`derive_seed`].
pub mod purpose {
    pub const BETA: u64 = 0x6265_7461;
    pub const STREAM: u64 = 0x7374_7265;
    pub const TEST: u64 = 0x7465_7374;
    pub const STRATEGY: u64 = 0x7374_7261;
    /// Initial design; the retry attempt is added to this value.
    pub const INIT: u64 = 0x696e_6974_0000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a key (replica index or purpose tag).
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ key.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn rng_for(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}

/// Parameters of one simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub p: usize,
    pub sigma_x_normal: f64,
    pub sigma_x_outlier: f64,
    pub sigma_eps_normal: f64,
    pub sigma_eps_outlier: f64,
    pub beta_normal_range: (f64, f64),
    pub beta_outlier_range: (f64, f64),
    pub contamination: f64,
    /// Label budget `B`.
    pub budget: usize,
    /// Calibration set size `m`.
    pub warm_up: usize,
    pub alpha: f64,
    /// Protection cut-off `c` of the bounded strategy.
    pub cutoff: f64,
    pub initial_design_size: usize,
    pub contaminated_init: bool,
    pub test_size: usize,
    pub stream_cap: usize,
    pub seed: u64,
    /// Draw a new outlier coefficient vector for every outlying observation.
    pub fresh_outlier_beta: bool,
    /// Subtract the calibration mean before whitening.
    pub center: bool,
    /// Fit an intercept column in addition to the `p` slopes.
    pub intercept: bool,
}

impl ScenarioConfig {
    /// The simulation setup of the reference study for dimension `p`, without outliers.
    pub fn paper(p: usize) -> Self {
        Self {
            p,
            sigma_x_normal: 1.0,
            sigma_x_outlier: 3.0,
            sigma_eps_normal: 1.0,
            sigma_eps_outlier: 3.0,
            beta_normal_range: (-5.0, 5.0),
            beta_outlier_range: (10.0, 15.0),
            contamination: 0.0,
            budget: 50,
            warm_up: 500,
            alpha: 0.05,
            cutoff: 0.05,
            initial_design_size: p + 2,
            contaminated_init: false,
            test_size: 1000,
            stream_cap: 1_000_000,
            seed: 0,
            fresh_outlier_beta: false,
            center: false,
            intercept: false,
        }
    }

    /// Number of model coefficients.
    pub fn model_width(&self) -> usize {
        self.p + usize::from(self.intercept)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.p == 0 {
            return fail("p must be at least 1".into());
        }
        for (name, v) in [
            ("sigma_x_normal", self.sigma_x_normal),
            ("sigma_x_outlier", self.sigma_x_outlier),
            ("sigma_eps_normal", self.sigma_eps_normal),
            ("sigma_eps_outlier", self.sigma_eps_outlier),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, (lo, hi)) in [
            ("beta_normal_range", self.beta_normal_range),
            ("beta_outlier_range", self.beta_outlier_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return fail(format!("{name} must satisfy lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if !(0.0..=1.0).contains(&self.contamination) {
            return fail(format!(
                "contamination must lie in [0, 1], got {}",
                self.contamination
            ));
        }
        if self.warm_up < self.p + 1 {
            return fail(format!(
                "warm_up must be at least p + 1 = {}, got {}",
                self.p + 1,
                self.warm_up
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.cutoff >= 0.0 && self.cutoff + self.alpha < 1.0) {
            return fail(format!(
                "cutoff must satisfy 0 <= c and c + alpha < 1, got c = {}",
                self.cutoff
            ));
        }
        if self.initial_design_size < self.model_width() {
            return fail(format!(
                "initial_design_size must be at least {}, got {}",
                self.model_width(),
                self.initial_design_size
            ));
        }
        if self.test_size == 0 {
            return fail("test_size must be at least 1".into());
        }
        if self.stream_cap < self.warm_up {
            return fail(format!(
                "stream_cap ({}) is smaller than warm_up ({})",
                self.stream_cap, self.warm_up
            ));
        }
        Ok(())
    }
}

/// One stream point. `is_outlier` is ground truth for diagnostics only.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub x: Vec<T>,
    pub y: T,
    pub is_outlier: bool,
}

fn uniform_vector<R: Rng + ?Sized>(rng: &mut R, p: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    (0..p)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

/// Normal and outlier coefficient vectors, each coordinate uniform on its range.
pub fn draw_betas<R: Rng + ?Sized>(rng: &mut R, config: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    let normal = uniform_vector(rng, config.p, config.beta_normal_range);
    let outlier = uniform_vector(rng, config.p, config.beta_outlier_range);
    (normal, outlier)
}

fn regime_point<R: Rng + ?Sized, T: Scalar>(
    rng: &mut R,
    beta: &[f64],
    sigma_x: f64,
    sigma_eps: f64,
    is_outlier: bool,
) -> Observation<T> {
    let x: Vec<f64> = beta
        .iter()
        .map(|_| sigma_x * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let eps: f64 = sigma_eps * rng.sample::<f64, _>(StandardNormal);
    let y = x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + eps;
    Observation {
        x: x.into_iter().map(T::lit).collect(),
        y: T::lit(y),
        is_outlier,
    }
}

/// Generator state of one contaminated stream.
#[derive(Debug, Clone)]
pub struct StreamState {
    config: ScenarioConfig,
    beta_normal: Vec<f64>,
    beta_outlier: Vec<f64>,
    position: usize,
}

impl StreamState {
    pub fn new(config: &ScenarioConfig, beta_normal: Vec<f64>, beta_outlier: Vec<f64>) -> Self {
        Self {
            config: config.clone(),
            beta_normal,
            beta_outlier,
            position: 0,
        }
    }

    pub fn beta_normal(&self) -> &[f64] {
        &self.beta_normal
    }

    pub fn beta_outlier(&self) -> &[f64] {
        &self.beta_outlier
    }

    /// Observations drawn so far.
    pub fn position(&self) -> usize {
        self.position
    }

    pub fn next_observation<R: Rng + ?Sized, T: Scalar>(&mut self, rng: &mut R) -> Observation<T> {
        self.position += 1;
        let c = &self.config;
        let u: f64 = rng.random();
        if u < c.contamination {
            if c.fresh_outlier_beta {
                let beta = uniform_vector(rng, c.p, c.beta_outlier_range);
                regime_point(rng, &beta, c.sigma_x_outlier, c.sigma_eps_outlier, true)
            } else {
                regime_point(
                    rng,
                    &self.beta_outlier,
                    c.sigma_x_outlier,
                    c.sigma_eps_outlier,
                    true,
                )
            }
        } else {
            self.normal_observation(rng)
        }
    }

    /// A point from the normal regime regardless of the contamination rate.
    pub fn normal_observation<R: Rng + ?Sized, T: Scalar>(&self, rng: &mut R) -> Observation<T> {
        let c = &self.config;
        regime_point(
            rng,
            &self.beta_normal,
            c.sigma_x_normal,
            c.sigma_eps_normal,
            false,
        )
    }
}

/// Rows, responses and outlier flags of a generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub outliers: Vec<bool>,
}

impl<T: Scalar> Sample<T> {
    fn collect(p: usize, obs: impl Iterator<Item = Observation<T>>) -> Self {
        let mut x = Matrix::with_capacity(0, p);
        let (mut y, mut outliers) = (Vec::new(), Vec::new());
        for o in obs {
            x.push_row(&o.x).expect("generated rows have p columns");
            y.push(o.y);
            outliers.push(o.is_outlier);
        }
        Self { x, y, outliers }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn outlier_count(&self) -> usize {
        self.outliers.iter().filter(|&&o| o).count()
    }
}

/// The labeled starting design of `initial_design_size` rows.
///
/// With `contaminated_init` off the rows come from the normal regime only, which is
/// the same distribution as rejecting outlying draws.
pub fn gen_initial_design<R: Rng + ?Sized, T: Scalar>(
    stream: &StreamState,
    rng: &mut R,
) -> Sample<T> {
    let mut s = stream.clone();
    let n = s.config.initial_design_size;
    let dirty = s.config.contaminated_init;
    Sample::collect(
        s.config.p,
        (0..n).map(|_| {
            if dirty {
                s.next_observation(rng)
            } else {
                s.normal_observation(rng)
            }
        }),
    )
}

/// `test_size` observations from the normal regime.
pub fn gen_test_set<R: Rng + ?Sized, T: Scalar>(stream: &StreamState, rng: &mut R) -> Sample<T> {
    let n = stream.config.test_size;
    Sample::collect(
        stream.config.p,
        (0..n).map(|_| stream.normal_observation(rng)),
    )
}

/// Writes observations as `x_1,…,x_p,y,outlier` lines.
pub fn write_observations<W: Write, T: Scalar>(
    mut out: W,
    observations: &[Observation<T>],
) -> io::Result<()> {
    for o in observations {
        for v in &o.x {
            write!(out, "{:e},", v.as_f64())?;
        }
        writeln!(out, "{:e},{}", o.y.as_f64(), u8::from(o.is_outlier))?;
    }
    Ok(())
}

/// The first `n` raw stream observations of replica seed `seed`, as the harness sees them.
pub fn stream_prefix<T: Scalar>(
    config: &ScenarioConfig,
    seed: u64,
    n: usize,
) -> Vec<Observation<T>> {
    let (mut stream, mut rng) = open_stream(config, seed);
    (0..n).map(|_| stream.next_observation(&mut rng)).collect()
}

/// Stream state and its generator for replica seed `seed`.
pub fn open_stream(config: &ScenarioConfig, seed: u64) -> (StreamState, ChaCha8Rng) {
    let (bn, bo) = draw_betas(&mut rng_for(seed, purpose::BETA), config);
    (
        StreamState::new(config, bn, bo),
        rng_for(seed, purpose::STREAM),
    )
}
