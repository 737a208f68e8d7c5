use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{fit, AuPHistogram, GaussianMixtureFit, PeakShape};
use crate::error::{ClickError, Result};

const MIN_FFT_LEN: usize = 1 << 12;
const MAX_FFT_LEN: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    /// Known peak spacing; skips the spectral search and permits
    /// histograms with a single peak.
    pub delta_x: Option<f64>,
    /// The zero-click offset is only identified modulo the spacing; the
    /// representative closest to this value is taken.
    pub x0_hint: f64,
    pub sigma1_ratio: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            delta_x: None,
            x0_hint: 0.0,
            sigma1_ratio: 0.0037,
        }
    }
}

/// Starting point for [`super::fit_mixture`] with `n_pixels + 1` peaks.
///
/// The spacing is the dominant frequency of the histogram spectrum past the
/// envelope lobe. Its phase locates the peak comb and its magnitude, which
/// decays as `exp(-2 pi^2 f^2 sigma^2)`, gives the mean peak width.
pub fn initialize_fit(hist: &AuPHistogram, n_pixels: usize, options: &InitOptions) -> Result<GaussianMixtureFit> {
    let n = hist.n_samples() as f64;
    if hist.n_samples() == 0 {
        return Err(ClickError::InitializationFailed("histogram is empty".into()));
    }
    if !(options.sigma1_ratio >= 0.0) || !options.x0_hint.is_finite() {
        return Err(ClickError::invalid("sigma1_ratio must be >= 0 and x0_hint finite"));
    }
    let centers = hist.centers();
    let counts: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    let edges = hist.bin_edges();
    let bin_width = (edges[edges.len() - 1] - edges[0]) / hist.n_bins() as f64;

    let freq = match options.delta_x {
        Some(dx) if dx > 0.0 && dx.is_finite() => 1.0 / dx,
        Some(dx) => return Err(ClickError::invalid(format!("delta_x must be positive, got {dx}"))),
        None => dominant_frequency(&counts, &centers, bin_width).ok_or_else(|| {
            ClickError::InitializationFailed(
                "no periodic peak structure found; supply the peak spacing (delta_x) manually".into(),
            )
        })?,
    };
    let delta_x = 1.0 / freq;
    let s = spectrum(&counts, &centers, freq);
    let mean = counts.iter().zip(&centers).map(|(h, c)| h * c).sum::<f64>() / n;

    let sigma_floor = (1e-3 * delta_x).max(0.1 * bin_width);
    let (x0, sigma0) = if significant(s.norm(), n) {
        let phase_x0 = -s.arg() / (2.0 * PI * freq);
        let x0 = phase_x0 + ((options.x0_hint - phase_x0) / delta_x).round() * delta_x;
        let ratio = (s.norm() / (n * sinc(PI * freq * bin_width))).min(1.0 - 1e-12);
        let total_var = -ratio.ln() / (2.0 * PI * PI * freq * freq);
        let mean_clicks = ((mean - x0) / delta_x).max(0.0);
        let sigma1 = options.sigma1_ratio * delta_x;
        let var0 = total_var - mean_clicks * sigma1 * sigma1;
        (x0, var0.max(0.0).sqrt())
    } else {
        // a single broad peak: take its moments
        let var = counts
            .iter()
            .zip(&centers)
            .map(|(h, c)| h * (c - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    };
    let sigma0 = sigma0.max(sigma_floor).min(0.5 * delta_x);

    let mut amplitudes = vec![0.0; n_pixels + 1];
    for (h, c) in counts.iter().zip(&centers) {
        let i = ((c - x0) / delta_x).round().clamp(0.0, n_pixels as f64) as usize;
        amplitudes[i] += h / n;
    }
    let shape = PeakShape::new(delta_x, x0, sigma0, options.sigma1_ratio * delta_x);
    shape.validate()?;
    let mut init = GaussianMixtureFit::from_shape(shape, amplitudes);
    init.residual_norm = fit::residual_norm(hist, &init);
    Ok(init)
}

fn significant(magnitude: f64, n: f64) -> bool {
    magnitude > 5.0 * n.sqrt() && magnitude > 0.02 * n
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `sum_j h_j exp(-2 pi i f x_j)` over bin centers.
fn spectrum(counts: &[f64], centers: &[f64], freq: f64) -> Complex<f64> {
    counts
        .iter()
        .zip(centers)
        .filter(|(h, _)| **h != 0.0)
        .map(|(h, x)| Complex::from_polar(*h, -2.0 * PI * freq * x))
        .sum()
}

fn dominant_frequency(counts: &[f64], centers: &[f64], bin_width: f64) -> Option<f64> {
    let nb = counts.len();
    let len = (16 * nb).next_power_of_two().clamp(MIN_FFT_LEN, MAX_FFT_LEN);
    if len < 2 * nb {
        return None;
    }
    let mut buf: Vec<Complex<f64>> = counts.iter().map(|&h| Complex::new(h, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm()).collect();

    // skip the envelope lobe around zero frequency
    let mut m = 1;
    while m + 1 < mag.len() && mag[m + 1] < mag[m] {
        m += 1;
    }
    let (best, _) = mag[m..]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i + m, *v))?;
    let n: f64 = counts.iter().sum();
    if !significant(mag[best], n) || best + 1 >= mag.len() {
        return None;
    }

    let df = 1.0 / (len as f64 * bin_width);
    let f = golden_max(
        |f| spectrum(counts, centers, f).norm(),
        (best as f64 - 1.0) * df,
        (best as f64 + 1.0) * df,
    );
    Some(f)
}

/// Maximizer of a unimodal function on `[a, b]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > 1e-12 * b.abs() {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram_of(areas: &[f64], bins: usize) -> AuPHistogram {
        AuPHistogram::from_samples(areas, Some(bins)).unwrap()
    }

    #[test]
    fn empty_histogram_fails() {
        let h = AuPHistogram::new(vec![0.0, 1.0, 2.0], vec![0, 0]).unwrap();
        let err = initialize_fit(&h, 10, &InitOptions::default()).unwrap_err();
        assert!(matches!(err, ClickError::InitializationFailed(_)));
    }

    #[test]
    fn featureless_histogram_fails_without_spacing() {
        // one broad Gaussian hump
        let counts = (0..200)
            .map(|j| (1e4 * (-0.5 * ((j as f64 - 100.0) / 25.0).powi(2)).exp()).round() as u64)
            .collect();
        let h = AuPHistogram::new((0..=200).map(f64::from).collect(), counts).unwrap();
        let err = initialize_fit(&h, 10, &InitOptions::default()).unwrap_err();
        assert!(err.to_string().contains("delta_x"));
    }

    #[test]
    fn evenly_spaced_combs_recover_spacing() {
        // four flat-topped peaks of equal mass at 0, 7.5, 15, 22.5
        let mut areas = Vec::new();
        for k in 0..4 {
            for q in 0..2000 {
                areas.push(k as f64 * 7.5 + 0.9 * (q as f64 / 1000.0 - 1.0));
            }
        }
        let h = histogram_of(&areas, 400);
        let init = initialize_fit(&h, 5, &InitOptions::default()).unwrap();
        assert!((init.delta_x - 7.5).abs() < 0.05, "{}", init.delta_x);
        assert!(init.x0.abs() < 0.1, "{}", init.x0);
        assert!((init.amplitudes[..4].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
