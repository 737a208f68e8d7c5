use serde::{Deserialize, Serialize};

use crate::error::{ClickError, Result};

/// Tolerance on `sum(c_k) == 1` for a [`ClickDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

/// Physical parameters of a homogeneously illuminated PPD.
///
/// `dark_rate` is the mean number of dark events over the whole array within
/// one measurement window, so each pixel sees a Poisson mean of
/// `dark_rate / n_pixels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub n_pixels: usize,
    pub efficiency: f64,
    pub dark_rate: f64,
    /// Probability that one fired pixel triggers a given idle pixel.
    pub crosstalk: f64,
    /// Probability that a pixel is already dead when the pulse arrives.
    pub preclick_prob: f64,
}

impl DetectorConfig {
    /// Unit efficiency, no noise.
    pub fn ideal(n_pixels: usize) -> Self {
        DetectorConfig {
            n_pixels,
            efficiency: 1.0,
            dark_rate: 0.0,
            crosstalk: 0.0,
            preclick_prob: 0.0,
        }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Self {
        self.efficiency = efficiency;
        self
    }

    pub fn with_dark_rate(mut self, dark_rate: f64) -> Self {
        self.dark_rate = dark_rate;
        self
    }

    pub fn with_crosstalk(mut self, chi: f64) -> Self {
        self.crosstalk = chi;
        self
    }

    pub fn with_preclick(mut self, p: f64) -> Self {
        self.preclick_prob = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pixels == 0 {
            return Err(ClickError::invalid("n_pixels must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(ClickError::invalid(format!(
                "efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(ClickError::invalid(format!(
                "dark_rate must be finite and >= 0, got {}",
                self.dark_rate
            )));
        }
        if !(0.0..1.0).contains(&self.crosstalk) {
            return Err(ClickError::invalid(format!(
                "crosstalk must lie in [0, 1), got {}",
                self.crosstalk
            )));
        }
        if !(0.0..1.0).contains(&self.preclick_prob) {
            return Err(ClickError::invalid(format!(
                "preclick_prob must lie in [0, 1), got {}",
                self.preclick_prob
            )));
        }
        Ok(())
    }
}

/// Single-mode input state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhotonSource {
    /// Laser light; `mean_photons` is |alpha|^2.
    Coherent { mean_photons: f64 },
    /// Single-mode chaotic light with Bose-Einstein photon statistics.
    Thermal { mean_photons: f64 },
    /// Definite photon number.
    Fock { photons: u64 },
}

impl PhotonSource {
    pub fn coherent(mean_photons: f64) -> Self {
        PhotonSource::Coherent { mean_photons }
    }

    pub fn thermal(mean_photons: f64) -> Self {
        PhotonSource::Thermal { mean_photons }
    }

    pub fn fock(photons: u64) -> Self {
        PhotonSource::Fock { photons }
    }

    pub fn mean_photons(&self) -> f64 {
        match *self {
            PhotonSource::Coherent { mean_photons } | PhotonSource::Thermal { mean_photons } => mean_photons,
            PhotonSource::Fock { photons } => photons as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PhotonSource::Coherent { mean_photons } | PhotonSource::Thermal { mean_photons } => {
                if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
                    return Err(ClickError::invalid(format!(
                        "mean photon number must be finite and >= 0, got {mean_photons}"
                    )));
                }
                Ok(())
            }
            PhotonSource::Fock { .. } => Ok(()),
        }
    }
}

/// Probabilities `c_0..c_N` of observing `k` clicks on an `N`-pixel detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClickDistribution {
    probs: Vec<f64>,
}

impl ClickDistribution {
    /// Validates entries in `[0, 1]` and normalization within 1e-10.
    ///
    /// Rounding residue down to -1e-14 is clamped to zero.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(ClickError::invalid("click distribution needs at least one entry"));
        }
        for (k, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < -1e-14 || *p > 1.0 + 1e-14 {
                return Err(ClickError::invalid(format!("c_{k} = {p} is not a probability")));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(ClickError::invalid(format!(
                "click distribution sums to {total}, expected 1"
            )));
        }
        Ok(ClickDistribution { probs })
    }

    /// Normalizes nonnegative weights (e.g. fitted peak areas).
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(ClickError::invalid(
                "weights must be nonnegative with a positive finite sum",
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// All mass on `k` clicks.
    pub fn delta(k: usize, n_pixels: usize) -> Result<Self> {
        if k > n_pixels {
            return Err(ClickError::invalid(format!("k = {k} exceeds N = {n_pixels}")));
        }
        let mut probs = vec![0.0; n_pixels + 1];
        probs[k] = 1.0;
        Ok(ClickDistribution { probs })
    }

    pub fn n_pixels(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Mean number of pixels that stay dark, `N - <c>` without cancellation.
    pub fn mean_idle(&self) -> f64 {
        let n = self.n_pixels();
        self.probs.iter().enumerate().map(|(k, p)| (n - k) as f64 * p).sum()
    }

    /// Two-pass central second moment, centred on whichever of the click or
    /// idle counts is smaller so that near-saturated light keeps precision.
    pub fn variance(&self) -> f64 {
        let n = self.n_pixels();
        let mean = self.mean();
        if mean <= 0.5 * n as f64 {
            self.probs
                .iter()
                .enumerate()
                .map(|(k, p)| (k as f64 - mean).powi(2) * p)
                .sum()
        } else {
            let idle = self.mean_idle();
            self.probs
                .iter()
                .enumerate()
                .map(|(k, p)| ((n - k) as f64 - idle).powi(2) * p)
                .sum()
        }
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        let n = self.probs.len().max(other.len());
        0.5 * (0..n)
            .map(|k| {
                let a = self.probs.get(k).copied().unwrap_or(0.0);
                let b = other.get(k).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for ClickDistribution {
    type Error = ClickError;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        ClickDistribution::new(probs)
    }
}

impl From<ClickDistribution> for Vec<f64> {
    fn from(d: ClickDistribution) -> Self {
        d.probs
    }
}

impl std::ops::Index<usize> for ClickDistribution {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.probs[k]
    }
}
