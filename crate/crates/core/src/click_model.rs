//! Click statistics of an ideal (crosstalk-free) PPD.
//!
//! For `N` homogeneously illuminated pixels the probability of `k` clicks is
//! the normally ordered expectation
//!
//! ```text
//! c_k = < : C(N,k) exp(-(eta n + nu)/N)^(N-k) (1 - exp(-(eta n + nu)/N))^k : >
//! ```
//!
//! Coherent light reduces this to a binomial with single-pixel click
//! probability `1 - exp(-(eta |alpha|^2 + nu)/N)`. Other states are evaluated
//! through the binomial expansion
//!
//! ```text
//! c_k = C(N,k) sum_j (-1)^j C(k,j) G((N-k+j)/N)
//! ```
//!
//! with `G(lambda) = < : exp(-lambda (eta n + nu)) : >`. The terms reach
//! `2^N` in magnitude and cancel almost completely, so the sum is carried
//! out in big-integer fixed point with `2N + 128` fractional bits. Every
//! input is an exact dyadic rational once it is an `f64`, so rounding only
//! happens inside the fixed-point products and stays far below `2^-96`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{ClickError, Result};
use crate::numeric::binomial_pmf_ln;
use crate::types::{ClickDistribution, DetectorConfig, PhotonSource};

/// Normally ordered generating function `< : exp(-lambda eta n - nu_term) : >`.
///
/// Closed forms: Fock `e^{-nu_term} (1 - lambda eta)^n`, coherent
/// `e^{-nu_term} e^{-lambda eta |alpha|^2}`, thermal
/// `e^{-nu_term} / (1 + lambda eta nbar)`.
pub fn normal_ordered_gf(source: &PhotonSource, lambda: f64, efficiency: f64, nu_term: f64) -> Result<f64> {
    source.validate()?;
    if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&efficiency) {
        return Err(ClickError::domain(format!(
            "lambda = {lambda} and efficiency = {efficiency} must both lie in [0, 1]"
        )));
    }
    let s = lambda * efficiency;
    if s > 1.0 {
        return Err(ClickError::domain(format!("lambda * eta = {s} exceeds 1")));
    }
    if !(nu_term >= 0.0) {
        return Err(ClickError::domain(format!("nu_term must be >= 0, got {nu_term}")));
    }
    let dark = (-nu_term).exp();
    let light = match *source {
        PhotonSource::Coherent { mean_photons } => (-s * mean_photons).exp(),
        PhotonSource::Thermal { mean_photons } => 1.0 / (1.0 + s * mean_photons),
        PhotonSource::Fock { photons } => powu(1.0 - s, photons),
    };
    Ok(dark * light)
}

fn powu(base: f64, n: u64) -> f64 {
    match i32::try_from(n) {
        Ok(n) => base.powi(n),
        Err(_) => base.powf(n as f64),
    }
}

/// Binomial click distribution of a coherent state with `mean_photons`
/// detected photons (efficiency and dark counts already folded in).
pub fn coherent_click_distribution(mean_photons: f64, n_pixels: usize) -> Result<ClickDistribution> {
    if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
        return Err(ClickError::invalid(format!(
            "mean photon number must be finite and >= 0, got {mean_photons}"
        )));
    }
    if n_pixels == 0 {
        return Err(ClickError::invalid("n_pixels must be at least 1"));
    }
    let per_pixel = mean_photons / n_pixels as f64;
    let ln_p = (-(-per_pixel).exp_m1()).ln();
    let ln_q = -per_pixel;
    ClickDistribution::new(binomial_pmf_ln(n_pixels, ln_p, ln_q))
}

/// Click distribution of an ideal detector for `source`.
///
/// Crosstalk and preclicks in `det` are ignored here; see
/// [`crate::crosstalk::click_distribution_with_crosstalk`].
pub fn click_distribution(source: &PhotonSource, det: &DetectorConfig) -> Result<ClickDistribution> {
    source.validate()?;
    det.validate()?;
    let n = det.n_pixels;
    match *source {
        PhotonSource::Coherent { mean_photons } => {
            coherent_click_distribution(det.efficiency * mean_photons + det.dark_rate, n)
        }
        PhotonSource::Fock { .. } | PhotonSource::Thermal { .. } => {
            let precision = 2 * n as u64 + 128;
            let gf = fixed_point_gf_table(source, det, precision);
            ClickDistribution::new(alternating_click_sum(&gf, n, precision))
        }
    }
}

/// `G(m/N) * 2^precision` for `m = 0..=N`.
fn fixed_point_gf_table(source: &PhotonSource, det: &DetectorConfig, precision: u64) -> Vec<BigUint> {
    let n = det.n_pixels;
    let one = BigUint::one() << precision;
    let big_n = BigUint::from(n);

    let per_pixel_dark = to_fixed(&Dyadic::from_f64((-det.dark_rate / n as f64).exp()), precision);
    let mut dark = Vec::with_capacity(n + 1);
    let mut acc = one.clone();
    for _ in 0..=n {
        dark.push(acc.clone());
        acc = (&acc * &per_pixel_dark) >> precision;
    }

    let light: Vec<BigUint> = match *source {
        PhotonSource::Fock { photons } => {
            // 1 - m eta / N = (N 2^s - m M) / (N 2^s), eta = M / 2^s
            let eta = Dyadic::from_f64(det.efficiency);
            let den = &big_n << eta.shift;
            (0..=n)
                .map(|m| {
                    let num = &den - BigUint::from(m) * &eta.num;
                    pow_fixed(&((num << precision) / &den), photons, precision)
                })
                .collect()
        }
        PhotonSource::Thermal { mean_photons } => {
            // N / (N + m a) with a = eta nbar = M / 2^s
            let a = Dyadic::from_f64(det.efficiency * mean_photons);
            let scaled_n = &big_n << a.shift;
            (0..=n)
                .map(|m| (&scaled_n << precision) / (&scaled_n + BigUint::from(m) * &a.num))
                .collect()
        }
        PhotonSource::Coherent { .. } => unreachable!("coherent states use the binomial form"),
    };

    dark.iter().zip(&light).map(|(d, l)| (d * l) >> precision).collect()
}

/// `c_k = C(N,k) sum_j (-1)^j C(k,j) G_{N-k+j}`, exact integer arithmetic.
fn alternating_click_sum(gf: &[BigUint], n: usize, precision: u64) -> Vec<f64> {
    let mut probs = Vec::with_capacity(n + 1);
    let mut row: Vec<BigUint> = vec![BigUint::one()];
    let mut c_nk = BigUint::one();
    for k in 0..=n {
        let mut sum = BigInt::zero();
        for (j, c_kj) in row.iter().enumerate() {
            let term = BigInt::from_biguint(Sign::Plus, c_kj * &gf[n - k + j]);
            if j % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        let value = sum * BigInt::from_biguint(Sign::Plus, c_nk.clone());
        probs.push(fixed_to_f64(&value, precision).max(0.0));

        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(BigUint::one());
        for w in row.windows(2) {
            next.push(&w[0] + &w[1]);
        }
        next.push(BigUint::one());
        row = next;
        c_nk = c_nk * BigUint::from(n - k) / BigUint::from(k + 1);
    }
    probs
}

/// Nonnegative `f64` as an exact `num / 2^shift`.
struct Dyadic {
    num: BigUint,
    shift: u64,
}

impl Dyadic {
    fn from_f64(x: f64) -> Self {
        debug_assert!(x >= 0.0 && x.is_finite());
        if x == 0.0 {
            return Dyadic {
                num: BigUint::zero(),
                shift: 0,
            };
        }
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        if exp >= 0 {
            Dyadic {
                num: BigUint::from(mantissa) << exp as u64,
                shift: 0,
            }
        } else {
            Dyadic {
                num: BigUint::from(mantissa),
                shift: (-exp) as u64,
            }
        }
    }
}

fn to_fixed(x: &Dyadic, precision: u64) -> BigUint {
    if x.shift <= precision {
        &x.num << (precision - x.shift)
    } else {
        &x.num >> (x.shift - precision)
    }
}

fn pow_fixed(base: &BigUint, mut exp: u64, precision: u64) -> BigUint {
    let mut result = BigUint::one() << precision;
    let mut b = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = (&result * &b) >> precision;
        }
        exp >>= 1;
        if exp > 0 {
            b = (&b * &b) >> precision;
        }
    }
    result
}

fn fixed_to_f64(v: &BigInt, precision: u64) -> f64 {
    let (sign, mag) = v.clone().into_parts();
    let bits = mag.bits();
    let (top, exp) = if bits > 64 {
        (
            (mag >> (bits - 64)).to_u64().unwrap(),
            bits as i64 - 64 - precision as i64,
        )
    } else {
        (mag.to_u64().unwrap(), -(precision as i64))
    };
    let x = ldexp(top as f64, exp);
    if sign == Sign::Minus {
        -x
    } else {
        x
    }
}

fn ldexp(mut x: f64, mut exp: i64) -> f64 {
    while exp < -1000 {
        x *= 2f64.powi(-1000);
        exp += 1000;
        if x == 0.0 {
            return 0.0;
        }
    }
    while exp > 1000 {
        x *= 2f64.powi(1000);
        exp -= 1000;
    }
    x * 2f64.powi(exp as i32)
}
