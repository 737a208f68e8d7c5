//! Event-level Monte Carlo of a PPD.
//!
//! Each trial throws photons and dark events onto individual pixels, fires
//! the crosstalk cascade pixel by pixel and counts the result. It shares no
//! code with the analytic models and serves as their oracle.
//!
//! Trials are grouped into fixed batches of [`BATCH_SIZE`]; batch `b` draws
//! from stream `b` of a ChaCha8 generator keyed by the master seed, so the
//! output is bitwise identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ClickError, Result};
use crate::pulsefit::PeakShape;
use crate::types::{ClickDistribution, DetectorConfig, PhotonSource};

pub const BATCH_SIZE: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub det: DetectorConfig,
    pub source: PhotonSource,
    pub n_trials: u64,
    pub seed: u64,
    /// Emit one pulse area per trial when set.
    pub aup: Option<PeakShape>,
}

impl SimConfig {
    pub fn new(det: DetectorConfig, source: PhotonSource, n_trials: u64, seed: u64) -> Self {
        SimConfig {
            det,
            source,
            n_trials,
            seed,
            aup: None,
        }
    }

    pub fn with_aup(mut self, shape: PeakShape) -> Self {
        self.aup = Some(shape);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.det.validate()?;
        self.source.validate()?;
        if self.n_trials == 0 {
            return Err(ClickError::invalid("n_trials must be at least 1"));
        }
        if let Some(shape) = &self.aup {
            shape.validate()?;
        }
        Ok(())
    }
}

/// Pixel totals summed over all trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimBreakdown {
    /// Pixels fired by at least one detected photon.
    pub light_clicks: u64,
    /// Pixels fired only by dark events.
    pub dark_clicks: u64,
    pub crosstalk_clicks: u64,
    pub preclicked_pixels: u64,
}

impl SimBreakdown {
    fn add(&mut self, other: &SimBreakdown) {
        self.light_clicks += other.light_clicks;
        self.dark_clicks += other.dark_clicks;
        self.crosstalk_clicks += other.crosstalk_clicks;
        self.preclicked_pixels += other.preclicked_pixels;
    }

    pub fn total_clicks(&self) -> u64 {
        self.light_clicks + self.dark_clicks + self.crosstalk_clicks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Trials per click number `0..=N`.
    pub click_histogram: Vec<u64>,
    pub breakdown: SimBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub areas: Option<Vec<f64>>,
}

impl SimResult {
    pub fn n_trials(&self) -> u64 {
        self.click_histogram.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_trials() as f64;
        self.click_histogram.iter().map(|&c| c as f64 / n).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pixel {
    Idle,
    Dead,
    Fired,
}

/// Photon-number sampler for one source.
enum PhotonDraw {
    Fixed(u64),
    Poisson(Poisson<f64>),
    Geometric(Geometric),
}

impl PhotonDraw {
    fn new(source: &PhotonSource) -> Result<Self> {
        let bad = |e: String| ClickError::invalid(format!("photon sampler: {e}"));
        Ok(match *source {
            PhotonSource::Fock { photons } => PhotonDraw::Fixed(photons),
            PhotonSource::Coherent { mean_photons } if mean_photons == 0.0 => PhotonDraw::Fixed(0),
            PhotonSource::Thermal { mean_photons } if mean_photons == 0.0 => PhotonDraw::Fixed(0),
            PhotonSource::Coherent { mean_photons } => {
                PhotonDraw::Poisson(Poisson::new(mean_photons).map_err(|e| bad(e.to_string()))?)
            }
            // Bose-Einstein: P(n) = nbar^n / (1 + nbar)^(n+1), failures before a
            // success of probability 1 / (1 + nbar)
            PhotonSource::Thermal { mean_photons } => {
                PhotonDraw::Geometric(Geometric::new(1.0 / (1.0 + mean_photons)).map_err(|e| bad(e.to_string()))?)
            }
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            PhotonDraw::Fixed(n) => *n,
            PhotonDraw::Poisson(p) => p.sample(rng) as u64,
            PhotonDraw::Geometric(g) => g.sample(rng),
        }
    }
}

struct Trial<'a> {
    det: &'a DetectorConfig,
    photons: &'a PhotonDraw,
    dark: Option<Poisson<f64>>,
    // ln(1 - chi), used for the per-target trigger probability
    ln_keep: f64,
    pixels: Vec<Pixel>,
}

impl<'a> Trial<'a> {
    fn new(det: &'a DetectorConfig, photons: &'a PhotonDraw) -> Self {
        let dark = (det.dark_rate > 0.0).then(|| Poisson::new(det.dark_rate).expect("validated rate"));
        Trial {
            det,
            photons,
            dark,
            ln_keep: (-det.crosstalk).ln_1p(),
            pixels: vec![Pixel::Idle; det.n_pixels],
        }
    }

    /// Runs one pulse and returns its click count.
    fn run<R: Rng>(&mut self, rng: &mut R, tally: &mut SimBreakdown) -> usize {
        let n = self.det.n_pixels;
        self.pixels.fill(Pixel::Idle);

        if self.det.preclick_prob > 0.0 {
            for px in self.pixels.iter_mut() {
                if rng.random::<f64>() < self.det.preclick_prob {
                    *px = Pixel::Dead;
                    tally.preclicked_pixels += 1;
                }
            }
        }

        let emitted = self.photons.sample(rng);
        let detected = if self.det.efficiency >= 1.0 {
            emitted
        } else if emitted == 0 || self.det.efficiency == 0.0 {
            0
        } else {
            Binomial::new(emitted, self.det.efficiency)
                .expect("validated efficiency")
                .sample(rng)
        };
        let mut fired = 0usize;
        for _ in 0..detected {
            let px = &mut self.pixels[rng.random_range(0..n)];
            if *px == Pixel::Idle {
                *px = Pixel::Fired;
                fired += 1;
                tally.light_clicks += 1;
            }
        }
        if let Some(dark) = &self.dark {
            let events = dark.sample(rng) as u64;
            for _ in 0..events {
                let px = &mut self.pixels[rng.random_range(0..n)];
                if *px == Pixel::Idle {
                    *px = Pixel::Fired;
                    fired += 1;
                    tally.dark_clicks += 1;
                }
            }
        }

        if self.det.crosstalk > 0.0 {
            let mut seeds = fired;
            while seeds > 0 {
                // every idle pixel escapes each of the `seeds` fired pixels
                // independently with probability 1 - chi
                let p_trigger = -(seeds as f64 * self.ln_keep).exp_m1();
                // single pass: each pixel is visited once per generation, so
                // marking in place never lets a fresh pixel act as a seed early
                let mut newly = 0usize;
                for px in self.pixels.iter_mut() {
                    if *px == Pixel::Idle && rng.random::<f64>() < p_trigger {
                        *px = Pixel::Fired;
                        newly += 1;
                    }
                }
                tally.crosstalk_clicks += newly as u64;
                fired += newly;
                seeds = newly;
            }
        }
        fired
    }
}

/// Simulates `cfg.n_trials` pulses.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let photons = PhotonDraw::new(&cfg.source)?;
    let n = cfg.det.n_pixels;
    let n_batches = cfg.n_trials.div_ceil(BATCH_SIZE);

    let batches: Vec<(Vec<u64>, SimBreakdown, Vec<f64>)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b);
            let trials = BATCH_SIZE.min(cfg.n_trials - b * BATCH_SIZE);
            let mut hist = vec![0u64; n + 1];
            let mut tally = SimBreakdown::default();
            let mut areas = Vec::new();
            let mut trial = Trial::new(&cfg.det, &photons);
            for _ in 0..trials {
                let k = trial.run(&mut rng, &mut tally);
                hist[k] += 1;
                if let Some(shape) = &cfg.aup {
                    areas.push(shape.draw_area(k, &mut rng));
                }
            }
            (hist, tally, areas)
        })
        .collect();

    let mut click_histogram = vec![0u64; n + 1];
    let mut breakdown = SimBreakdown::default();
    let mut areas = cfg.aup.map(|_| Vec::with_capacity(cfg.n_trials as usize));
    for (hist, tally, batch_areas) in batches {
        for (acc, h) in click_histogram.iter_mut().zip(hist) {
            *acc += h;
        }
        breakdown.add(&tally);
        if let Some(all) = areas.as_mut() {
            all.extend(batch_areas);
        }
    }
    Ok(SimResult {
        click_histogram,
        breakdown,
        areas,
    })
}

/// Draws `n_samples` pulse areas: a click number from `dist`, then an area
/// from that click number's Gaussian peak.
pub fn sample_aup(dist: &ClickDistribution, shape: &PeakShape, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    shape.validate()?;
    let cdf: Vec<f64> = dist
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let last = cdf.len() - 1;
    let n_batches = (n_samples as u64).div_ceil(BATCH_SIZE);
    let chunks: Vec<Vec<f64>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = BATCH_SIZE.min(n_samples as u64 - b * BATCH_SIZE);
            (0..count)
                .map(|_| {
                    let u: f64 = rng.random::<f64>() * cdf[last];
                    let k = cdf.partition_point(|&c| c <= u).min(last);
                    shape.draw_area(k, &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

impl PeakShape {
    pub(crate) fn draw_area<R: Rng>(&self, clicks: usize, rng: &mut R) -> f64 {
        let (mean, sd) = (self.center(clicks), self.width(clicks));
        if sd == 0.0 {
            return mean;
        }
        Normal::new(mean, sd).expect("validated widths").sample(rng)
    }
}
