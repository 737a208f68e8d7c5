//! Moments, nonclassicality parameters and their uncertainties, crosstalk
//! calibration from the low-intensity limit, and naive photon inversion.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crosstalk::cascade_moments;
use crate::error::{ClickError, Result};
use crate::numeric::brent_root;
use crate::types::{ClickDistribution, DetectorConfig};

/// Upper end of the crosstalk bracket searched by [`extract_chi`].
pub const CHI_BRACKET_MAX: f64 = 0.2;

/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: usize = 2000;

/// Observed click counts: `counts[k]` pulses showed `k` clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickSample {
    counts: Vec<u64>,
    n_trials: u64,
}

impl ClickSample {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(ClickError::invalid("click histogram needs at least one bin"));
        }
        let n_trials = counts.iter().sum();
        if n_trials == 0 {
            return Err(ClickError::invalid("click sample is empty"));
        }
        Ok(ClickSample { counts, n_trials })
    }

    /// Histogram of per-pulse click numbers on an `n_pixels` detector.
    pub fn from_clicks<I: IntoIterator<Item = usize>>(clicks: I, n_pixels: usize) -> Result<Self> {
        let mut counts = vec![0u64; n_pixels + 1];
        for k in clicks {
            *counts
                .get_mut(k)
                .ok_or_else(|| ClickError::invalid(format!("click number {k} exceeds N = {n_pixels}")))? += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_trials(&self) -> u64 {
        self.n_trials
    }

    /// Sample moments `E[(k - m)^r]` for r = 2, 3, 4 (population normalization).
    fn central_moments(&self) -> (f64, f64, f64, f64) {
        let n = self.n_trials as f64;
        let mean = self.mean();
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for (k, &c) in self.counts.iter().enumerate() {
            let d = k as f64 - mean;
            let w = c as f64 / n;
            m2 += w * d * d;
            m3 += w * d * d * d;
            m4 += w * d * d * d * d;
        }
        (mean, m2, m3, m4)
    }
}

/// Anything with a click-number distribution over `0..=N`.
pub trait ClickStatistics {
    fn n_pixels(&self) -> usize;
    /// Relative frequencies of `0..=N` clicks.
    fn frequencies(&self) -> Vec<f64>;
    fn mean(&self) -> f64;
    /// Mean number of idle pixels `N - <c>`, computed without cancellation.
    fn mean_idle(&self) -> f64 {
        let n = self.n_pixels();
        self.frequencies()
            .iter()
            .enumerate()
            .map(|(k, f)| (n - k) as f64 * f)
            .sum()
    }
    /// Exact variance for distributions, unbiased estimate for samples.
    fn variance(&self) -> f64;
}

impl ClickStatistics for ClickDistribution {
    fn n_pixels(&self) -> usize {
        ClickDistribution::n_pixels(self)
    }

    fn frequencies(&self) -> Vec<f64> {
        self.probs().to_vec()
    }

    fn mean(&self) -> f64 {
        ClickDistribution::mean(self)
    }

    fn mean_idle(&self) -> f64 {
        ClickDistribution::mean_idle(self)
    }

    fn variance(&self) -> f64 {
        ClickDistribution::variance(self)
    }
}

impl ClickStatistics for ClickSample {
    fn n_pixels(&self) -> usize {
        self.counts.len() - 1
    }

    fn frequencies(&self) -> Vec<f64> {
        let n = self.n_trials as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    fn mean(&self) -> f64 {
        let total: f64 = self.counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
        total / self.n_trials as f64
    }

    fn variance(&self) -> f64 {
        if self.n_trials < 2 {
            return 0.0;
        }
        // centre on the smaller of the click and idle counts
        let n = self.n_pixels();
        let mean = self.mean();
        let ss: f64 = if mean <= 0.5 * n as f64 {
            self.counts
                .iter()
                .enumerate()
                .map(|(k, &c)| c as f64 * (k as f64 - mean).powi(2))
                .sum()
        } else {
            let idle = self.mean_idle();
            self.counts
                .iter()
                .enumerate()
                .map(|(k, &c)| c as f64 * ((n - k) as f64 - idle).powi(2))
                .sum()
        };
        ss / (self.n_trials - 1) as f64
    }
}

fn binomial_q_from_moments(mean: f64, idle: f64, variance: f64, n_pixels: usize) -> Result<f64> {
    if !(mean > 0.0 && idle > 0.0) {
        return Err(ClickError::UndefinedQ(format!(
            "binomial Q needs 0 < <c> < N, got <c> = {mean} with N = {n_pixels}"
        )));
    }
    Ok(variance * n_pixels as f64 / (mean * idle) - 1.0)
}

fn mandel_q_from_moments(mean: f64, variance: f64) -> Result<f64> {
    if !(mean > 0.0) {
        return Err(ClickError::UndefinedQ(format!(
            "Mandel Q needs a positive mean, got {mean}"
        )));
    }
    Ok(variance / mean - 1.0)
}

/// Binomial Q parameter `Var(c) / (<c> (1 - <c>/N)) - 1`.
pub fn q_binomial<S: ClickStatistics + ?Sized>(stats: &S, n_pixels: usize) -> Result<f64> {
    binomial_q_from_moments(stats.mean(), stats.mean_idle(), stats.variance(), n_pixels)
}

/// Mandel Q `Var / mean - 1` applied to click numbers.
pub fn q_mandel<S: ClickStatistics + ?Sized>(stats: &S) -> Result<f64> {
    mandel_q_from_moments(stats.mean(), stats.variance())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyMethod {
    Analytic,
    Bootstrap,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QReport {
    pub q_binomial: f64,
    pub q_mandel: f64,
    pub mean: f64,
    pub variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_binomial_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_mandel_stderr: Option<f64>,
    pub method: UncertaintyMethod,
}

/// Exact Q parameters of a model distribution.
pub fn q_report(dist: &ClickDistribution) -> Result<QReport> {
    let (mean, variance) = (dist.mean(), dist.variance());
    Ok(QReport {
        q_binomial: binomial_q_from_moments(mean, dist.mean_idle(), variance, dist.n_pixels())?,
        q_mandel: mandel_q_from_moments(mean, variance)?,
        mean,
        variance,
        q_binomial_stderr: None,
        q_mandel_stderr: None,
        method: UncertaintyMethod::Analytic,
    })
}

/// Q parameters of an observed sample with standard errors.
///
/// The bootstrap redraws the whole histogram from a multinomial with the
/// observed frequencies; resample `i` uses stream `i` of a ChaCha8 generator
/// seeded with `seed`, so results do not depend on the thread count.
pub fn q_uncertainty(
    sample: &ClickSample,
    n_pixels: usize,
    method: UncertaintyMethod,
    n_resamples: usize,
    seed: u64,
) -> Result<QReport> {
    if sample.n_pixels() != n_pixels {
        return Err(ClickError::invalid(format!(
            "sample has {} bins but N = {n_pixels}",
            sample.counts.len()
        )));
    }
    let mean = sample.mean();
    let variance = sample.variance();
    let q_b = binomial_q_from_moments(mean, sample.mean_idle(), variance, n_pixels)?;
    let q_m = mandel_q_from_moments(mean, variance)?;

    let (se_b, se_m) = match method {
        UncertaintyMethod::Analytic => (None, None),
        UncertaintyMethod::Delta => {
            let (b, m) = delta_stderr(sample, n_pixels);
            (Some(b), Some(m))
        }
        UncertaintyMethod::Bootstrap => {
            if sample.n_trials < 100 {
                return Err(ClickError::invalid(format!(
                    "bootstrap needs at least 100 trials, got {}",
                    sample.n_trials
                )));
            }
            let qs = bootstrap_map(sample, n_resamples, seed, |s| {
                let (m, v) = (s.mean(), s.variance());
                Some((
                    binomial_q_from_moments(m, s.mean_idle(), v, n_pixels).ok()?,
                    mandel_q_from_moments(m, v).ok()?,
                ))
            })?;
            let qb: Vec<f64> = qs.iter().map(|q| q.0).collect();
            let qm: Vec<f64> = qs.iter().map(|q| q.1).collect();
            (Some(std_dev(&qb)), Some(std_dev(&qm)))
        }
    };
    Ok(QReport {
        q_binomial: q_b,
        q_mandel: q_m,
        mean,
        variance,
        q_binomial_stderr: se_b,
        q_mandel_stderr: se_m,
        method,
    })
}

/// Evaluates `stat` on `n_resamples` multinomial resamples of `sample`.
///
/// Resamples on which `stat` returns `None` (degenerate draws) are dropped;
/// at least two must survive.
pub fn bootstrap_map<T, F>(sample: &ClickSample, n_resamples: usize, seed: u64, stat: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&ClickSample) -> Option<T> + Sync,
{
    if n_resamples < 2 {
        return Err(ClickError::invalid("bootstrap needs at least 2 resamples"));
    }
    let probs = sample.frequencies();
    let out: Vec<T> = (0..n_resamples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let counts = multinomial(sample.n_trials, &probs, &mut rng);
            stat(&ClickSample::new(counts).ok()?)
        })
        .collect();
    if out.len() < 2 {
        return Err(ClickError::UndefinedQ(
            "fewer than two bootstrap resamples gave a defined statistic".into(),
        ));
    }
    Ok(out)
}

/// Multinomial draw by successive conditional binomials.
fn multinomial<R: rand::Rng>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass_left = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 || i + 1 == probs.len() {
            out.push(left);
            left = 0;
            continue;
        }
        let cond = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let draw = Binomial::new(left, cond).map(|b| b.sample(rng)).unwrap_or(left);
        out.push(draw);
        left -= draw;
        mass_left -= p;
    }
    out
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Delta-method standard errors of (Q_B, Q_M) from the sample moments of
/// `k` and `k^2`.
fn delta_stderr(sample: &ClickSample, n_pixels: usize) -> (f64, f64) {
    let n = sample.n_trials as f64;
    let (m1, mu2, mu3, mu4) = sample.central_moments();
    let m2 = mu2 + m1 * m1;
    // covariance of (k, k^2) in terms of central moments
    let var_k = mu2;
    let cov = mu3 + 2.0 * m1 * mu2;
    let var_k2 = mu4 + 4.0 * m1 * mu3 + 4.0 * m1 * m1 * mu2 - mu2 * mu2;

    let v = m2 - m1 * m1;
    let propagate = |d1: f64, d2: f64| {
        let var = (d1 * d1 * var_k + 2.0 * d1 * d2 * cov + d2 * d2 * var_k2) / n;
        var.max(0.0).sqrt()
    };

    let nn = n_pixels as f64;
    let denom_b = m1 - m1 * m1 / nn;
    let db1 = (-2.0 * m1 * denom_b - v * (1.0 - 2.0 * m1 / nn)) / (denom_b * denom_b);
    let db2 = 1.0 / denom_b;
    let dm1 = (-2.0 * m1 * m1 - v) / (m1 * m1);
    let dm2 = 1.0 / m1;
    (propagate(db1, db2), propagate(dm1, dm2))
}

/// Zero-intensity limit of Q_M (and Q_B) under crosstalk alone:
/// `sum m^2 C_m / sum m C_m - 1`, with `C_m` the total click number seeded
/// by a single light click.
pub fn crosstalk_q_limit(chi: f64, n_pixels: usize) -> Result<f64> {
    if n_pixels == 0 {
        return Err(ClickError::invalid("n_pixels must be at least 1"));
    }
    // total clicks are 1 + T for a cascade T seeded by one pixel
    let (t1, t2) = cascade_moments(1, chi, n_pixels)?;
    Ok((1.0 + 2.0 * t1 + t2) / (1.0 + t1) - 1.0)
}

/// Inverts [`crosstalk_q_limit`] on `chi` in `[0, 0.2]` (tolerance 1e-10).
pub fn extract_chi(low_intensity_q: f64, n_pixels: usize) -> Result<f64> {
    if !(low_intensity_q >= 0.0) {
        return Err(ClickError::domain(format!(
            "low-intensity Q must be >= 0, got {low_intensity_q}"
        )));
    }
    if low_intensity_q == 0.0 {
        return Ok(0.0);
    }
    let upper = crosstalk_q_limit(CHI_BRACKET_MAX, n_pixels)?;
    if low_intensity_q > upper {
        return Err(ClickError::OutOfBracket {
            target: low_intensity_q,
            upper,
            chi_max: CHI_BRACKET_MAX,
        });
    }
    brent_root(
        |chi| Ok(crosstalk_q_limit(chi, n_pixels)? - low_intensity_q),
        0.0,
        CHI_BRACKET_MAX,
        1e-10,
        200,
    )
}

const CHEBYSHEV_NODES: usize = 17;

/// [`extract_chi`] over many values, e.g. bootstrap replicates of Q.
///
/// Values are inverted exactly at Chebyshev nodes spanning their range and
/// interpolated in between; `chi(Q)` is smooth, so the interpolation error
/// stays below the root tolerance. Negative values map to `chi = 0`.
pub fn extract_chi_many(qs: &[f64], n_pixels: usize) -> Result<Vec<f64>> {
    if let Some(bad) = qs.iter().find(|q| !q.is_finite()) {
        return Err(ClickError::domain(format!("non-finite Q value {bad}")));
    }
    let lo = qs.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    if qs.len() <= CHEBYSHEV_NODES || hi - lo <= 1e-12 * hi {
        return qs.iter().map(|&q| extract_chi(q.max(0.0), n_pixels)).collect();
    }
    let nodes: Vec<f64> = (0..CHEBYSHEV_NODES)
        .map(|j| {
            let t = (std::f64::consts::PI * (j as f64 + 0.5) / CHEBYSHEV_NODES as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect();
    let values = nodes
        .par_iter()
        .map(|&q| extract_chi(q, n_pixels))
        .collect::<Result<Vec<f64>>>()?;
    // barycentric weights of first-kind Chebyshev points
    let weights: Vec<f64> = (0..CHEBYSHEV_NODES)
        .map(|j| {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / CHEBYSHEV_NODES as f64;
            if j % 2 == 0 {
                theta.sin()
            } else {
                -theta.sin()
            }
        })
        .collect();
    Ok(qs
        .iter()
        .map(|&q| {
            let q = q.max(0.0);
            if q == 0.0 {
                return 0.0;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for ((x, v), w) in nodes.iter().zip(&values).zip(&weights) {
                if q == *x {
                    return *v;
                }
                let t = w / (q - x);
                num += t * v;
                den += t;
            }
            num / den
        })
        .collect())
}

/// Outcome of [`naive_photon_inversion`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    /// Signed photon-number "probabilities" `p_0..p_{n_max}`.
    pub probs: Vec<f64>,
    pub sum: f64,
    pub min: f64,
    pub argmin: usize,
    pub residual_norm: f64,
    /// Lower bound on log10 of the condition number of the system solved.
    pub log10_condition: f64,
}

/// `P(k clicks | n photons)` for `n = 0..=n_max`: each photon is kept with
/// probability `eta` and lands on a uniformly chosen pixel.
pub fn click_given_photons(n_pixels: usize, efficiency: f64, n_max: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n_pixels + 1, n_max + 1);
    let mut state = vec![0.0; n_pixels + 1];
    state[0] = 1.0;
    for n in 0..=n_max {
        for (k, s) in state.iter().enumerate() {
            m[(k, n)] = *s;
        }
        let mut next = vec![0.0; n_pixels + 1];
        for (j, s) in state.iter().enumerate() {
            let up = efficiency * (n_pixels - j) as f64 / n_pixels as f64;
            next[j] += s * (1.0 - up);
            if j < n_pixels {
                next[j + 1] += s * up;
            }
        }
        state = next;
    }
    m
}

/// Least-squares solution of `c = M p` with no sign constraint.
///
/// With `n_max <= N` (default `N`) the system is upper triangular and is
/// solved by back substitution; clicks above `n_max` only enter the
/// residual. With `n_max > N` the minimum-norm solution is taken from an
/// SVD, which fails when `M` is numerically rank deficient. Dark counts are
/// not part of `M`.
pub fn naive_photon_inversion<S: ClickStatistics + ?Sized>(
    clicks: &S,
    det: &DetectorConfig,
    n_max: Option<usize>,
) -> Result<InversionResult> {
    det.validate()?;
    let n = det.n_pixels;
    if clicks.n_pixels() != n {
        return Err(ClickError::invalid(format!(
            "click data covers N = {} but detector has N = {n}",
            clicks.n_pixels()
        )));
    }
    let n_max = n_max.unwrap_or(n);
    let c = clicks.frequencies();
    let m = click_given_photons(n, det.efficiency, n_max);

    let (probs, log10_condition) = if n_max <= n {
        let diag: Vec<f64> = (0..=n_max).map(|i| m[(i, i)]).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let log10_condition = (dmax / dmin).log10();
        if !(dmin > 0.0) || !log10_condition.is_finite() {
            return Err(ClickError::IllPosedInversion {
                reason: format!("P(n clicks | n photons) vanishes for some n <= {n_max}"),
                log10_condition: f64::INFINITY,
            });
        }
        let mut p = vec![0.0; n_max + 1];
        for row in (0..=n_max).rev() {
            let tail: f64 = ((row + 1)..=n_max).map(|col| m[(row, col)] * p[col]).sum();
            p[row] = (c[row] - tail) / diag[row];
        }
        (p, log10_condition)
    } else {
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let log10_condition = (smax / smin).log10();
        let tol = smax * (n_max + 1) as f64 * f64::EPSILON;
        if !(smin > tol) {
            return Err(ClickError::IllPosedInversion {
                reason: format!("click matrix is numerically rank deficient for n_max = {n_max} > N = {n}"),
                log10_condition,
            });
        }
        let rhs = DVector::from_column_slice(&c);
        let sol = svd.solve(&rhs, tol).map_err(|e| ClickError::IllPosedInversion {
            reason: e.to_string(),
            log10_condition,
        })?;
        (sol.iter().copied().collect(), log10_condition)
    };

    let p_vec = DVector::from_column_slice(&probs);
    let residual = &m * &p_vec - DVector::from_column_slice(&c);
    let (argmin, min) = probs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    Ok(InversionResult {
        sum: probs.iter().sum(),
        min,
        argmin,
        residual_norm: residual.norm(),
        log10_condition,
        probs,
    })
}
