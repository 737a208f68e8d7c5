//! Area-under-pulse (AuP) histograms and their Gaussian-mixture decomposition.
//!
//! The output charge of `i` simultaneous clicks is modeled as a Gaussian
//! centered at `x0 + i * delta_x` whose variance `sigma0^2 + i * sigma1^2`
//! is the electronic noise of the empty peak plus `i` independent
//! single-click gain fluctuations. The relative peak areas are the click
//! statistics.

mod fit;
mod init;
mod nnls;

use serde::{Deserialize, Serialize};

use crate::error::{ClickError, Result};
use crate::numeric::{normal_cdf, normal_pdf};
use crate::types::ClickDistribution;

pub use fit::{fit_mixture, fit_mixture_traced, FitOptions, IterationRecord};
pub use init::{initialize_fit, InitOptions};
pub use nnls::nnls;

/// Peak positions and widths of the mixture, in area units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakShape {
    pub delta_x: f64,
    pub x0: f64,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl PeakShape {
    pub fn new(delta_x: f64, x0: f64, sigma0: f64, sigma1: f64) -> Self {
        PeakShape {
            delta_x,
            x0,
            sigma0,
            sigma1,
        }
    }

    /// Shape with the given noise ratios `sigma0 / delta_x`, `sigma1 / delta_x`.
    pub fn from_ratios(delta_x: f64, x0: f64, sigma0_ratio: f64, sigma1_ratio: f64) -> Self {
        PeakShape::new(delta_x, x0, sigma0_ratio * delta_x, sigma1_ratio * delta_x)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_x > 0.0
            && self.sigma0 > 0.0
            && self.sigma1 >= 0.0
            && [self.delta_x, self.x0, self.sigma0, self.sigma1]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(ClickError::invalid(format!(
                "peak shape needs delta_x > 0, sigma0 > 0, sigma1 >= 0 (got {self:?})"
            )))
        }
    }

    pub fn center(&self, clicks: usize) -> f64 {
        self.x0 + clicks as f64 * self.delta_x
    }

    pub fn variance(&self, clicks: usize) -> f64 {
        self.sigma0 * self.sigma0 + clicks as f64 * self.sigma1 * self.sigma1
    }

    pub fn width(&self, clicks: usize) -> f64 {
        self.variance(clicks).sqrt()
    }

    /// Shape of the same detector with all areas multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        PeakShape::new(self.delta_x * s, self.x0 * s, self.sigma0 * s, self.sigma1 * s)
    }
}

/// Binned pulse areas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuPHistogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    n_samples: u64,
}

const MAX_AUTO_BINS: usize = 100_000;

impl AuPHistogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(ClickError::invalid(format!(
                "{} edges do not bound {} bins",
                bin_edges.len(),
                counts.len()
            )));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) || bin_edges.iter().any(|e| !e.is_finite()) {
            return Err(ClickError::invalid("bin edges must be finite and strictly increasing"));
        }
        let n_samples = counts.iter().sum();
        Ok(AuPHistogram {
            bin_edges,
            counts,
            n_samples,
        })
    }

    /// Bins raw areas into `bins` equal bins over their range, or with the
    /// Freedman-Diaconis width when `bins` is `None`.
    pub fn from_samples(samples: &[f64], bins: Option<usize>) -> Result<Self> {
        if samples.is_empty() {
            return Err(ClickError::invalid("no pulse areas to bin"));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
            return Err(ClickError::invalid(format!("non-finite pulse area {bad}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let pad = 0.5 * lo.abs().max(1.0);
            (lo - pad, hi + pad)
        };
        let n_bins = match bins {
            Some(0) => return Err(ClickError::invalid("bin count must be positive")),
            Some(b) => b,
            None => {
                let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
                if width > 0.0 {
                    (((hi - lo) / width).ceil() as usize).clamp(1, MAX_AUTO_BINS)
                } else {
                    (sorted.len() as f64).sqrt().ceil() as usize
                }
            }
        };
        let step = (hi - lo) / n_bins as f64;
        let mut edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * step).collect();
        edges[n_bins] = hi;
        let mut counts = vec![0u64; n_bins];
        for &x in samples {
            let idx = (((x - lo) / step) as usize).min(n_bins - 1);
            counts[idx] += 1;
        }
        AuPHistogram::new(edges, counts)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Fitted decomposition of an AuP histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureFit {
    pub delta_x: f64,
    pub x0: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    /// Peak areas `A_0..A_N` as fractions of all samples.
    pub amplitudes: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

impl GaussianMixtureFit {
    pub fn from_shape(shape: PeakShape, amplitudes: Vec<f64>) -> Self {
        GaussianMixtureFit {
            delta_x: shape.delta_x,
            x0: shape.x0,
            sigma0: shape.sigma0,
            sigma1: shape.sigma1,
            amplitudes,
            residual_norm: f64::NAN,
            converged: false,
            n_iterations: 0,
        }
    }

    pub fn shape(&self) -> PeakShape {
        PeakShape::new(self.delta_x, self.x0, self.sigma0, self.sigma1)
    }

    pub fn n_pixels(&self) -> usize {
        self.amplitudes.len().saturating_sub(1)
    }

    /// Fraction of each peak's mass lying closer to a neighbouring peak
    /// center than to its own, a measure of single-shot resolvability.
    pub fn overlap_fractions(&self) -> Vec<f64> {
        let shape = self.shape();
        (0..self.amplitudes.len())
            .map(|i| 2.0 * normal_cdf(-0.5 * self.delta_x / shape.width(i)))
            .collect()
    }

    /// Amplitudes below `rel * sum(A)`.
    pub fn negligible_peaks(&self, rel: f64) -> Vec<usize> {
        let total: f64 = self.amplitudes.iter().sum();
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| **a < rel * total)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Mixture density at `x`; each component is a normalized Gaussian so the
/// integral over the real line is `sum(A_i)`.
pub fn mixture_model(x: f64, fit: &GaussianMixtureFit) -> f64 {
    let shape = fit.shape();
    fit.amplitudes
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(i, a)| {
            let s = shape.width(i);
            a * normal_pdf((x - shape.center(i)) / s) / s
        })
        .sum()
}

/// `c_k = A_k / sum_i A_i`.
pub fn clicks_from_fit(fit: &GaussianMixtureFit) -> Result<ClickDistribution> {
    let total: f64 = fit.amplitudes.iter().sum();
    if !(total > 0.0) {
        return Err(ClickError::DegenerateFit("all peak amplitudes are zero".into()));
    }
    ClickDistribution::from_weights(&fit.amplitudes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_peak(sigma0: f64) -> GaussianMixtureFit {
        GaussianMixtureFit::from_shape(PeakShape::new(1.0, 0.25, sigma0, 0.01), vec![1.0, 0.0])
    }

    #[test]
    fn single_gaussian_peak_value() {
        let fit = single_peak(0.2);
        let expected = 1.0 / (0.2 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((mixture_model(0.25, &fit) - expected).abs() < 1e-12);
    }

    #[test]
    fn mixture_integrates_to_total_weight() {
        let fit = GaussianMixtureFit::from_shape(PeakShape::new(1.0, 0.0, 0.18, 0.05), vec![0.1, 0.2, 0.3, 0.25, 0.15]);
        // composite Simpson on [-4, 9], far beyond all tails
        let (a, b, n) = (-4.0, 9.0, 20_000);
        let h = (b - a) / n as f64;
        let mut s = mixture_model(a, &fit) + mixture_model(b, &fit);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * mixture_model(a + i as f64 * h, &fit);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn valley_between_narrow_peaks_is_empty() {
        let fit = GaussianMixtureFit::from_shape(PeakShape::new(1.0, 0.0, 0.02, 0.0), vec![0.5, 0.5]);
        let peak = mixture_model(0.0, &fit);
        assert!(mixture_model(0.5, &fit) < 1e-10 * peak);
    }

    #[test]
    fn peak_variance_law() {
        let shape = PeakShape::new(2.0, 1.0, 0.3, 0.1);
        for i in 0..10 {
            assert!((shape.variance(i) - (0.09 + i as f64 * 0.01)).abs() < 1e-15);
            assert_eq!(shape.center(i), 1.0 + 2.0 * i as f64);
        }
    }

    #[test]
    fn clicks_from_amplitudes() {
        let mut fit = single_peak(0.1);
        fit.amplitudes = vec![3.0, 0.0, 0.0];
        assert_eq!(clicks_from_fit(&fit).unwrap().probs(), &[1.0, 0.0, 0.0]);
        fit.amplitudes = vec![2.0; 5];
        assert!(clicks_from_fit(&fit)
            .unwrap()
            .probs()
            .iter()
            .all(|p| (p - 0.2).abs() < 1e-15));
        fit.amplitudes = vec![0.0; 5];
        assert!(matches!(clicks_from_fit(&fit), Err(ClickError::DegenerateFit(_))));
    }

    #[test]
    fn histogram_binning() {
        let h = AuPHistogram::from_samples(&[0.0, 1.0, 2.0, 3.0], Some(2)).unwrap();
        assert_eq!(h.counts(), &[2, 2]);
        assert_eq!(h.bin_edges(), &[0.0, 1.5, 3.0]);
        assert!(AuPHistogram::from_samples(&[], None).is_err());
        assert!(AuPHistogram::from_samples(&[1.0, f64::NAN], None).is_err());
        let flat = AuPHistogram::from_samples(&[5.0; 10], None).unwrap();
        assert_eq!(flat.n_samples(), 10);
        assert!(AuPHistogram::new(vec![0.0, 0.0], vec![1]).is_err());
    }

    #[test]
    fn overlap_grows_with_width() {
        let fit = GaussianMixtureFit::from_shape(PeakShape::new(1.0, 0.0, 0.18, 0.1), vec![0.0; 50]);
        let o = fit.overlap_fractions();
        assert!(o.windows(2).all(|w| w[1] > w[0]));
        assert!(o[0] < 0.01);
    }
}
