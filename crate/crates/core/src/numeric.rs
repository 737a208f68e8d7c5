//! Small numerical helpers shared by the models.

use statrs::function::factorial;

use crate::error::{ClickError, Result};

/// `ln C(n, k)`; exact table lookups below 171, Lanczos above.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    factorial::ln_binomial(n as u64, k as u64)
}

/// Binomial pmf over `0..=n` given `ln p` and `ln(1 - p)`.
///
/// Passing both logarithms lets callers keep full precision when `p` is
/// tiny or when `1 - p` comes from an exponential (`ln(1-p) = -mu/N`).
pub fn binomial_pmf_ln(n: usize, ln_p: f64, ln_q: f64) -> Vec<f64> {
    if ln_p == f64::NEG_INFINITY {
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0;
        return out;
    }
    if ln_q == f64::NEG_INFINITY {
        let mut out = vec![0.0; n + 1];
        out[n] = 1.0;
        return out;
    }
    (0..=n)
        .map(|k| (ln_binomial(n, k) + k as f64 * ln_p + (n - k) as f64 * ln_q).exp())
        .collect()
}

/// Binomial(n, p) pmf.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    binomial_pmf_ln(n, p.ln(), (-p).ln_1p())
}

/// Standard normal CDF, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Brent's bracketed root finder on `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them be zero).
/// Terminates when the bracket is narrower than `tol`.
pub fn brent_root<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(ClickError::domain(format!(
            "root not bracketed: f({lo}) = {fa}, f({hi}) = {fb}"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}
