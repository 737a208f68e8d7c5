//! Cascaded optical crosstalk.
//!
//! Every fired pixel triggers each idle pixel independently with
//! probability `chi`, and crosstalk-fired pixels seed the next generation.
//! One generation with `n_previous` seeds and `n_available` idle pixels
//! fires a Binomial(`n_available`, `1 - (1-chi)^n_previous`) number of new
//! pixels. The total number of crosstalk clicks follows from the generation
//! recursion
//!
//! ```text
//! f(0, A, P) = C_0(A, P)
//! f(k, A, P) = sum_{j=1..k} C_j(A, P) f(k - j, A - j, j)
//! ```
//!
//! which sums over all compositions of `k` (ordered generation sizes), each
//! cascade ending with an empty generation.

use std::sync::OnceLock;

use crate::click_model::click_distribution;
use crate::error::{ClickError, Result};
use crate::numeric::{binomial_pmf_ln, ln_binomial};
use crate::types::{ClickDistribution, DetectorConfig, PhotonSource, NORMALIZATION_TOLERANCE};

/// Probability of exactly `k` new clicks in one crosstalk generation.
pub fn crosstalk_generation(k: usize, n_available: usize, n_previous: usize, chi: f64) -> Result<f64> {
    check_chi(chi)?;
    if k > n_available {
        return Err(ClickError::domain(format!(
            "k = {k} exceeds the {n_available} available pixels"
        )));
    }
    let (ln_p, ln_q) = trigger_logs(n_previous, chi);
    if ln_p == f64::NEG_INFINITY {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    Ok((ln_binomial(n_available, k) + k as f64 * ln_p + (n_available - k) as f64 * ln_q).exp())
}

/// `ln(1 - (1-chi)^P)` and `ln((1-chi)^P)`.
fn trigger_logs(n_previous: usize, chi: f64) -> (f64, f64) {
    let ln_q = n_previous as f64 * (-chi).ln_1p();
    (((-ln_q.exp_m1()).ln()), ln_q)
}

fn check_chi(chi: f64) -> Result<()> {
    if !(0.0..1.0).contains(&chi) {
        return Err(ClickError::invalid(format!(
            "crosstalk chi must lie in [0, 1), got {chi}"
        )));
    }
    Ok(())
}

/// Memoized cascade probabilities `f(k, A, P)` for one `(chi, N)`.
///
/// Levels indexed by the number of available pixels `A` are filled lazily
/// in increasing `A` and are immutable afterwards, so a kernel can be shared
/// between threads. A full table holds about `N^3 / 6` entries.
pub struct CrosstalkKernel {
    chi: f64,
    n_pixels: usize,
    // levels[A][P][k] = f(k, A, P) for P in 0..=N-A, k in 0..=A
    levels: Vec<OnceLock<Vec<Vec<f64>>>>,
}

impl CrosstalkKernel {
    pub fn new(chi: f64, n_pixels: usize) -> Result<Self> {
        check_chi(chi)?;
        if n_pixels == 0 {
            return Err(ClickError::invalid("n_pixels must be at least 1"));
        }
        Ok(CrosstalkKernel {
            chi,
            n_pixels,
            levels: (0..=n_pixels).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    /// Distribution of the total cascade size, `k = 0..=n_available`.
    pub fn cascade_from(&self, n_available: usize, n_previous: usize) -> Result<&[f64]> {
        if n_available + n_previous > self.n_pixels {
            return Err(ClickError::domain(format!(
                "{n_available} available + {n_previous} fired pixels exceed N = {}",
                self.n_pixels
            )));
        }
        Ok(&self.level(n_available)[n_previous])
    }

    /// Crosstalk clicks added to `initial_clicks` light clicks, `k = 0..=N - a0`.
    pub fn cascade(&self, initial_clicks: usize) -> Result<&[f64]> {
        if initial_clicks > self.n_pixels {
            return Err(ClickError::domain(format!(
                "a0 = {initial_clicks} exceeds N = {}",
                self.n_pixels
            )));
        }
        self.cascade_from(self.n_pixels - initial_clicks, initial_clicks)
    }

    fn level(&self, n_available: usize) -> &Vec<Vec<f64>> {
        for a in 0..=n_available {
            self.levels[a].get_or_init(|| self.build_level(a));
        }
        self.levels[n_available].get().expect("level initialized above")
    }

    fn build_level(&self, a: usize) -> Vec<Vec<f64>> {
        (0..=self.n_pixels - a)
            .map(|p| {
                let (ln_p, ln_q) = trigger_logs(p, self.chi);
                let gen = binomial_pmf_ln(a, ln_p, ln_q);
                let mut row = vec![0.0; a + 1];
                row[0] = gen[0];
                for (k, slot) in row.iter_mut().enumerate().skip(1) {
                    *slot = (1..=k)
                        .map(|j| {
                            let lower = self.levels[a - j].get().expect("lower level built first");
                            gen[j] * lower[j][k - j]
                        })
                        .sum();
                }
                row
            })
            .collect()
    }
}

/// First two moments `(E[T], E[T^2])` of the cascade size `T` seeded by
/// `initial_clicks` fired pixels.
///
/// Runs the generation recursion on the moments instead of the full
/// distribution, which costs `O(N^3)` rather than `O(N^4)`.
pub fn cascade_moments(initial_clicks: usize, chi: f64, n_pixels: usize) -> Result<(f64, f64)> {
    check_chi(chi)?;
    if initial_clicks > n_pixels {
        return Err(ClickError::domain(format!(
            "a0 = {initial_clicks} exceeds N = {n_pixels}"
        )));
    }
    let target = n_pixels - initial_clicks;
    // moments[A][P] for P in 0..=N-A
    let mut moments: Vec<Vec<(f64, f64)>> = Vec::with_capacity(target + 1);
    for a in 0..=target {
        let row = (0..=n_pixels - a)
            .map(|p| {
                let (ln_p, ln_q) = trigger_logs(p, chi);
                let gen = binomial_pmf_ln(a, ln_p, ln_q);
                let (mut m1, mut m2) = (0.0, 0.0);
                for (j, &g) in gen.iter().enumerate().skip(1) {
                    if g == 0.0 {
                        continue;
                    }
                    let (r1, r2) = moments[a - j][j];
                    let jf = j as f64;
                    m1 += g * (jf + r1);
                    m2 += g * (jf * jf + 2.0 * jf * r1 + r2);
                }
                (m1, m2)
            })
            .collect();
        moments.push(row);
    }
    Ok(moments[target][initial_clicks])
}

/// Distribution of the number of crosstalk clicks seeded by `initial_clicks`.
pub fn cascade_distribution(initial_clicks: usize, det: &DetectorConfig) -> Result<Vec<f64>> {
    det.validate()?;
    if initial_clicks > det.n_pixels {
        return Err(ClickError::domain(format!(
            "a0 = {initial_clicks} exceeds N = {}",
            det.n_pixels
        )));
    }
    let kernel = CrosstalkKernel::new(det.crosstalk, det.n_pixels)?;
    Ok(kernel.cascade(initial_clicks)?.to_vec())
}

/// Convolution of light clicks with an independent noise count.
///
/// Fails if any mass would land beyond `N` pixels.
pub fn convolve_noise(light: &ClickDistribution, noise: &[f64]) -> Result<ClickDistribution> {
    let noise_total: f64 = noise.iter().sum();
    if noise.is_empty() || noise.iter().any(|p| !(*p >= 0.0)) || (noise_total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ClickError::invalid(
            "noise distribution must be nonnegative and sum to 1",
        ));
    }
    let n = light.n_pixels();
    let mut out = vec![0.0; n + 1];
    let mut overflow = 0.0;
    for (i, li) in light.probs().iter().enumerate() {
        for (j, nj) in noise.iter().enumerate() {
            let mass = li * nj;
            match out.get_mut(i + j) {
                Some(slot) => *slot += mass,
                None => overflow += mass,
            }
        }
    }
    if overflow > 1e-12 {
        return Err(ClickError::ModelInconsistency(format!(
            "probability mass {overflow:e} exceeds the {n} available pixels"
        )));
    }
    ClickDistribution::new(out)
}

/// Total clicks from light plus the crosstalk they seed:
/// `c_m = sum_{k=1..m} c_k(light) f_{m-k}(k)` and `c_0 = c_0(light)`.
pub fn click_distribution_with_crosstalk(source: &PhotonSource, det: &DetectorConfig) -> Result<ClickDistribution> {
    let light = click_distribution(source, det)?;
    if det.crosstalk == 0.0 {
        return Ok(light);
    }
    let kernel = CrosstalkKernel::new(det.crosstalk, det.n_pixels)?;
    combine_with_kernel(&light, &kernel)
}

/// Same as [`click_distribution_with_crosstalk`] with a prebuilt kernel.
pub fn combine_with_kernel(light: &ClickDistribution, kernel: &CrosstalkKernel) -> Result<ClickDistribution> {
    let n = light.n_pixels();
    if kernel.n_pixels() != n {
        return Err(ClickError::invalid(format!(
            "kernel built for N = {} used with N = {n}",
            kernel.n_pixels()
        )));
    }
    let mut out = vec![0.0; n + 1];
    out[0] = light[0];
    for (k, &ck) in light.probs().iter().enumerate().skip(1) {
        if ck == 0.0 {
            continue;
        }
        for (j, f) in kernel.cascade(k)?.iter().enumerate() {
            out[k + j] += ck * f;
        }
    }
    ClickDistribution::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_examples() {
        assert!((crosstalk_generation(0, 3, 1, 0.5).unwrap() - 0.125).abs() < 1e-15);
        assert!((crosstalk_generation(1, 3, 1, 0.5).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(crosstalk_generation(0, 5, 0, 0.3).unwrap(), 1.0);
        assert_eq!(crosstalk_generation(2, 5, 0, 0.3).unwrap(), 0.0);
        assert!(matches!(crosstalk_generation(4, 3, 1, 0.5), Err(ClickError::Domain(_))));
    }

    #[test]
    fn generation_matches_pattern_enumeration() {
        // all 2^3 trigger patterns of 3 idle pixels under one seed
        let chi: f64 = 0.5;
        let mut by_k = [0.0; 4];
        for mask in 0u32..8 {
            let k = mask.count_ones() as usize;
            by_k[k] += chi.powi(k as i32) * (1.0 - chi).powi(3 - k as i32);
        }
        for (k, expected) in by_k.iter().enumerate() {
            assert!((crosstalk_generation(k, 3, 1, chi).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn cascade_examples() {
        let det = DetectorConfig::ideal(4).with_crosstalk(0.5);
        let f = cascade_distribution(1, &det).unwrap();
        assert!((f[0] - 0.125).abs() < 1e-15);
        assert!((f[1] - 0.09375).abs() < 1e-15);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-14);

        assert_eq!(cascade_distribution(4, &det).unwrap(), vec![1.0]);
        let none = cascade_distribution(2, &DetectorConfig::ideal(6)).unwrap();
        assert_eq!(none, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(cascade_distribution(5, &det).is_err());
    }

    #[test]
    fn convolution_identities() {
        let light = ClickDistribution::new(vec![0.25, 0.5, 0.25, 0.0]).unwrap();
        let same = convolve_noise(&light, &[1.0]).unwrap();
        assert_eq!(same, light);
        let delta = ClickDistribution::delta(0, 3).unwrap();
        let noise = [0.2, 0.3, 0.5];
        assert_eq!(convolve_noise(&delta, &noise).unwrap().probs(), &[0.2, 0.3, 0.5, 0.0]);
        let shifted = convolve_noise(&light, &[0.0, 1.0]).unwrap();
        assert_eq!(shifted.probs(), &[0.0, 0.25, 0.5, 0.25]);
        assert!(matches!(
            convolve_noise(&light, &[0.0, 0.0, 1.0]),
            Err(ClickError::ModelInconsistency(_))
        ));
        assert!(convolve_noise(&light, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn crosstalk_needs_light() {
        let det = DetectorConfig::ideal(50).with_crosstalk(0.05);
        let d = click_distribution_with_crosstalk(&PhotonSource::coherent(0.0), &det).unwrap();
        assert_eq!(d[0], 1.0);
    }

    #[test]
    fn zero_chi_is_ideal_model() {
        let det = DetectorConfig::ideal(30).with_efficiency(0.7);
        let src = PhotonSource::thermal(12.0);
        assert_eq!(
            click_distribution_with_crosstalk(&src, &det).unwrap(),
            click_distribution(&src, &det).unwrap()
        );
    }

    #[test]
    fn kernel_is_shareable() {
        let kernel = CrosstalkKernel::new(0.01, 40).unwrap();
        let first: Vec<f64> = std::thread::scope(|s| {
            let h = s.spawn(|| kernel.cascade(3).unwrap().to_vec());
            h.join().unwrap()
        });
        assert_eq!(first.as_slice(), kernel.cascade(3).unwrap());
    }
}
