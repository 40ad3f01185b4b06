//! Gaussian kernel density estimation, quantile inversion and robust scale.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::{std_normal_cdf, std_normal_pdf, Scalar};

/// One-dimensional Gaussian-kernel density estimate over a fixed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity<T> {
    samples: Vec<T>,
    bandwidth: T,
}

impl<T: Scalar> KernelDensity<T> {
    pub fn new(samples: Vec<T>, bandwidth: T) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::DegenerateDistribution(
                "kernel density needs at least two samples",
            ));
        }
        if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
            return Err(Error::DegenerateDistribution(
                "bandwidth must be positive and finite",
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::DegenerateDistribution("non-finite sample"));
        }
        Ok(Self { samples, bandwidth })
    }

    /// Density with the bandwidth picked by [`silverman_bandwidth`].
    pub fn with_silverman(samples: Vec<T>) -> Result<Self> {
        let h = silverman_bandwidth(&samples)?;
        Self::new(samples, h)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn density(&self, s: T) -> T {
        let h = self.bandwidth;
        let total: T = self
            .samples
            .iter()
            .map(|&si| std_normal_pdf((s - si) / h))
            .sum();
        total / (T::count(self.samples.len()) * h)
    }

    pub fn cdf(&self, s: T) -> T {
        let h = self.bandwidth;
        let total: T = self
            .samples
            .iter()
            .map(|&si| std_normal_cdf((s - si) / h))
            .sum();
        (total / T::count(self.samples.len()))
            .min(T::one())
            .max(T::zero())
    }

    /// Inverts [`cdf`](Self::cdf) by bisection.
    ///
    /// The bracket starts at `[min − 5h, max + 5h]` and is widened if the target lies
    /// outside it. Bisection stops once the CDF is within `1e-9` of `q` (or the bracket
    /// collapses to machine precision).
    pub fn quantile(&self, q: T) -> Result<T> {
        if !(q > T::zero() && q < T::one()) {
            return Err(Error::ProbabilityDomain(q.as_f64()));
        }
        let h = self.bandwidth;
        let (min, max) = self
            .samples
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &s| {
                (lo.min(s), hi.max(s))
            });
        let five = T::lit(5.0);
        let mut lo = min - five * h;
        let mut hi = max + five * h;
        let mut step = five * h;
        while self.cdf(lo) > q {
            step = step + step;
            lo = min - step;
        }
        step = five * h;
        while self.cdf(hi) < q {
            step = step + step;
            hi = max + step;
        }

        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
        let mut mid = (lo + hi) / T::lit(2.0);
        for _ in 0..400 {
            mid = (lo + hi) / T::lit(2.0);
            let f = self.cdf(mid);
            if (f - q).abs() <= tol {
                break;
            }
            if f < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * mid.abs().max(h) {
                break;
            }
        }
        Ok(mid)
    }
}

/// Free-function form of [`KernelDensity::density`].
pub fn kde_density<T: Scalar>(kd: &KernelDensity<T>, s: T) -> T {
    kd.density(s)
}

pub fn kde_cdf<T: Scalar>(kd: &KernelDensity<T>, s: T) -> T {
    kd.cdf(s)
}

pub fn kde_quantile<T: Scalar>(kd: &KernelDensity<T>, q: T) -> Result<T> {
    kd.quantile(q)
}

/// Silverman's rule of thumb: `0.9 · min(sd, IQR/1.34) · n^(−1/5)`.
///
/// Falls back to the standard deviation alone when the IQR is zero.
pub fn silverman_bandwidth<T: Scalar>(samples: &[T]) -> Result<T> {
    if samples.len() < 2 {
        return Err(Error::DegenerateDistribution(
            "bandwidth needs at least two samples",
        ));
    }
    let sd = sample_sd(samples);
    if !(sd > T::zero()) {
        return Err(Error::DegenerateDistribution("all samples identical"));
    }
    let sorted = sorted_copy(samples);
    let iqr = quantile_sorted(&sorted, T::lit(0.75)) - quantile_sorted(&sorted, T::lit(0.25));
    let spread = if iqr > T::zero() {
        sd.min(iqr / T::lit(1.34))
    } else {
        sd
    };
    let n = T::count(samples.len());
    Ok(T::lit(0.9) * spread * n.powf(T::lit(-0.2)))
}

/// Normal-consistent MAD: `median(|e − median(e)|) / 0.6745`.
pub fn mad_scale<T: Scalar>(residuals: &[T]) -> Result<T> {
    if residuals.len() < 2 {
        return Err(Error::DegenerateScale);
    }
    let med = median(residuals);
    let dev: Vec<T> = residuals.iter().map(|&e| (e - med).abs()).collect();
    let mad = median(&dev);
    if !(mad > T::zero()) {
        return Err(Error::DegenerateScale);
    }
    Ok(mad / T::lit(0.6745))
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().copied().sum::<T>() / T::count(xs.len())
}

/// Sample standard deviation with the `n − 1` denominator; zero for fewer than two values.
pub fn sample_sd<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / T::count(xs.len() - 1)).sqrt()
}

pub fn median<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    quantile_sorted(&sorted_copy(xs), T::lit(0.5))
}

/// Linear-interpolation empirical quantile (the "type 7" definition).
pub fn empirical_quantile<T: Scalar>(xs: &[T], q: T) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    quantile_sorted(&sorted_copy(xs), q)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal));
    let mut r = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = T::count(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` when either input is constant or too short.
pub fn spearman_correlation<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == T::zero() || sbb == T::zero() {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn sorted_copy<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.max(T::zero()).min(T::one()) * T::count(n - 1);
    let lo = pos.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    let frac = pos - lo;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}
