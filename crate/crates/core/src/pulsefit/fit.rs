use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::{nnls, AuPHistogram, GaussianMixtureFit, PeakShape};
use crate::error::{ClickError, Result};
use crate::numeric::normal_cdf;

/// Columns are truncated this many peak widths from the center.
const SUPPORT_WIDTHS: f64 = 12.0;
/// Cost changes below this many units per bin count as no change.
const COST_FLOOR_PER_BIN: f64 = 1e-6;
const INITIAL_DAMPING: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;
const MAX_FAILED_SHAPE_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the relative change of the weighted cost falls below this.
    pub rel_tolerance: f64,
    /// Damping increases tried per shape step before it counts as failed.
    pub max_damping_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            rel_tolerance: 1e-8,
            max_damping_steps: 5,
        }
    }
}

/// Weighted cost at the stages of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost_start: f64,
    pub cost_after_amplitudes: f64,
    pub cost_after_shape: f64,
    pub shape_step_accepted: bool,
}

/// Sparse design column: expected counts per bin for unit amplitude, always
/// integrated over the bin so coarse and fine binning are treated alike.
struct Column {
    start: usize,
    values: Vec<f64>,
}

struct Binned<'a> {
    edges: &'a [f64],
    counts: Vec<f64>,
    weights: Vec<f64>,
    n: f64,
}

impl<'a> Binned<'a> {
    fn new(hist: &'a AuPHistogram) -> Self {
        let edges = hist.bin_edges();
        let counts: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
        let weights = counts.iter().map(|&c| 1.0 / c.max(1.0).sqrt()).collect();
        Binned {
            edges,
            counts,
            weights,
            n: hist.n_samples() as f64,
        }
    }

    fn n_bins(&self) -> usize {
        self.counts.len()
    }

    fn columns(&self, shape: &PeakShape, n_peaks: usize) -> Vec<Column> {
        (0..n_peaks).map(|i| self.column(shape, i)).collect()
    }

    fn column(&self, shape: &PeakShape, i: usize) -> Column {
        let (c, s) = (shape.center(i), shape.width(i));
        let lo = c - SUPPORT_WIDTHS * s;
        let hi = c + SUPPORT_WIDTHS * s;
        let nb = self.n_bins();
        let start = self.edges[1..].partition_point(|&e| e <= lo).min(nb);
        let end = self.edges[..nb].partition_point(|&e| e < hi).max(start);
        // lower tail below the center, upper tail above, so neither side
        // loses digits to cancellation against 1
        let tail = |e: f64| {
            let z = (e - c) / s;
            if z <= 0.0 {
                (normal_cdf(z), false)
            } else {
                (normal_cdf(-z), true)
            }
        };
        let tails: Vec<(f64, bool)> = self.edges[start..=end].iter().map(|&e| tail(e)).collect();
        let values = tails
            .windows(2)
            .map(|w| {
                let mass = match (w[0], w[1]) {
                    ((a, false), (b, false)) => b - a,
                    ((a, true), (b, true)) => a - b,
                    ((a, _), (b, _)) => 1.0 - a - b,
                };
                self.n * mass
            })
            .collect();
        Column { start, values }
    }

    fn residuals(&self, cols: &[Column], amps: &[f64]) -> Vec<f64> {
        let mut model = vec![0.0; self.n_bins()];
        for (col, &a) in cols.iter().zip(amps) {
            if a != 0.0 {
                for (m, v) in model[col.start..].iter_mut().zip(&col.values) {
                    *m += a * v;
                }
            }
        }
        model
            .iter()
            .zip(&self.counts)
            .zip(&self.weights)
            .map(|((m, h), w)| (h - m) * w)
            .collect()
    }

    fn cost(&self, shape: &PeakShape, amps: &[f64]) -> f64 {
        let cols = self.columns(shape, amps.len());
        self.residuals(&cols, amps).iter().map(|r| r * r).sum()
    }

    /// Optimal nonnegative amplitudes for a fixed shape.
    ///
    /// Peaks with less than half their mass inside the histogram range are
    /// held at zero: a few tail bins cannot determine their area.
    fn amplitudes(&self, shape: &PeakShape, n_peaks: usize) -> Vec<f64> {
        let all = self.columns(shape, n_peaks);
        let active: Vec<usize> = (0..n_peaks)
            .filter(|&i| all[i].values.iter().sum::<f64>() >= 0.5 * self.n)
            .collect();
        let cols: Vec<&Column> = active.iter().map(|&i| &all[i]).collect();
        let m = cols.len();
        let w2: Vec<f64> = self.weights.iter().map(|w| w * w).collect();
        let mut gram = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (a, ca) in cols.iter().enumerate() {
            let a_end = ca.start + ca.values.len();
            rhs[a] = ca
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v * w2[ca.start + k] * self.counts[ca.start + k])
                .sum();
            for (b, cb) in cols.iter().enumerate().skip(a) {
                let lo = ca.start.max(cb.start);
                let hi = a_end.min(cb.start + cb.values.len());
                let g: f64 = (lo..hi)
                    .map(|j| ca.values[j - ca.start] * cb.values[j - cb.start] * w2[j])
                    .sum();
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let mut amps = vec![0.0; n_peaks];
        for (&i, a) in active.iter().zip(nnls(&gram, &rhs).iter()) {
            amps[i] = *a;
        }
        amps
    }
}

fn shape_from(p: &Vector4<f64>) -> Option<PeakShape> {
    let shape = PeakShape::new(p[0], p[1], p[2], p[3].max(0.0));
    shape.validate().ok().map(|_| shape)
}

fn params(shape: &PeakShape) -> Vector4<f64> {
    Vector4::new(shape.delta_x, shape.x0, shape.sigma0, shape.sigma1)
}

/// Weighted residual norm `sqrt(sum_j (h_j - model_j)^2 / max(h_j, 1))`.
pub(super) fn residual_norm(hist: &AuPHistogram, fit: &GaussianMixtureFit) -> f64 {
    Binned::new(hist).cost(&fit.shape(), &fit.amplitudes).sqrt()
}

/// Fits peak shape and amplitudes to a histogram, starting from `init`.
///
/// The mixture order is fixed by `init.amplitudes.len()`.
pub fn fit_mixture(hist: &AuPHistogram, init: &GaussianMixtureFit, options: &FitOptions) -> Result<GaussianMixtureFit> {
    fit_mixture_traced(hist, init, options).map(|(fit, _)| fit)
}

/// [`fit_mixture`] that also returns the per-iteration cost trace.
pub fn fit_mixture_traced(
    hist: &AuPHistogram,
    init: &GaussianMixtureFit,
    options: &FitOptions,
) -> Result<(GaussianMixtureFit, Vec<IterationRecord>)> {
    init.shape().validate()?;
    if init.amplitudes.is_empty() || init.amplitudes.iter().any(|a| !(*a >= 0.0)) {
        return Err(ClickError::invalid(
            "initial amplitudes must be nonnegative and nonempty",
        ));
    }
    if options.max_iterations == 0 || !(options.rel_tolerance > 0.0) {
        return Err(ClickError::invalid(
            "fit needs max_iterations > 0 and rel_tolerance > 0",
        ));
    }
    let data = Binned::new(hist);
    let n_peaks = init.amplitudes.len();
    let floor = COST_FLOOR_PER_BIN * data.n_bins() as f64;

    let mut shape = init.shape();
    let mut amps = init.amplitudes.clone();
    let mut cost = data.cost(&shape, &amps);
    let mut damping = INITIAL_DAMPING;
    let mut failed_steps = 0;
    let mut trace = Vec::new();

    let snapshot = |shape: &PeakShape, amps: &[f64], cost: f64, converged: bool, it: usize| {
        let mut fit = GaussianMixtureFit::from_shape(*shape, amps.to_vec());
        fit.residual_norm = cost.sqrt();
        fit.converged = converged;
        fit.n_iterations = it;
        fit
    };

    if !cost.is_finite() {
        return Err(ClickError::FitFailed {
            reason: "initial cost is not finite".into(),
            best: Box::new(snapshot(&shape, &amps, cost, false, 0)),
        });
    }

    for it in 1..=options.max_iterations {
        let cost_start = cost;

        let candidate = data.amplitudes(&shape, n_peaks);
        let cand_cost = data.cost(&shape, &candidate);
        if cand_cost <= cost {
            amps = candidate;
            cost = cand_cost;
        }
        let cost_after_amplitudes = cost;

        let (accepted, new_damping) = shape_step(&data, &mut shape, &amps, &mut cost, damping, options);
        damping = new_damping;
        failed_steps = if accepted { 0 } else { failed_steps + 1 };

        trace.push(IterationRecord {
            iteration: it,
            cost_start,
            cost_after_amplitudes,
            cost_after_shape: cost,
            shape_step_accepted: accepted,
        });

        if !cost.is_finite() {
            return Err(ClickError::FitFailed {
                reason: "cost became non-finite".into(),
                best: Box::new(snapshot(&shape, &amps, cost_start, false, it)),
            });
        }
        if (cost_start - cost).abs() <= options.rel_tolerance * cost_start.max(floor) {
            return Ok((snapshot(&shape, &amps, cost, true, it), trace));
        }
        if failed_steps >= MAX_FAILED_SHAPE_STEPS {
            return Err(ClickError::FitFailed {
                reason: format!("{MAX_FAILED_SHAPE_STEPS} consecutive shape steps failed to reduce the residual"),
                best: Box::new(snapshot(&shape, &amps, cost, false, it)),
            });
        }
    }
    Ok((snapshot(&shape, &amps, cost, false, options.max_iterations), trace))
}

/// One Levenberg-Marquardt step on `(delta_x, x0, sigma0, sigma1)` with the
/// amplitudes held fixed. Returns whether a step was accepted and the
/// damping to use next.
fn shape_step(
    data: &Binned<'_>,
    shape: &mut PeakShape,
    amps: &[f64],
    cost: &mut f64,
    mut damping: f64,
    options: &FitOptions,
) -> (bool, f64) {
    let p0 = params(shape);
    let cols = data.columns(shape, amps.len());
    let r0 = data.residuals(&cols, amps);
    let h = FD_STEP * shape.delta_x;

    let mut jac = DMatrix::zeros(r0.len(), 4);
    for k in 0..4 {
        // sigma1 sits on its lower bound when zero, so difference forward there
        let central = !(k == 3 && p0[3] < h);
        let mut plus = p0;
        plus[k] += h;
        let r_plus = residuals_at(data, &plus, amps);
        let (r_minus, span) = if central {
            let mut minus = p0;
            minus[k] -= h;
            (residuals_at(data, &minus, amps), 2.0 * h)
        } else {
            (r0.clone(), h)
        };
        for j in 0..r0.len() {
            jac[(j, k)] = (r_plus[j] - r_minus[j]) / span;
        }
    }
    let jtj: Matrix4<f64> = (jac.transpose() * &jac).fixed_view::<4, 4>(0, 0).into_owned();
    let jtr: Vector4<f64> = (jac.transpose() * DVector::from_vec(r0))
        .fixed_rows::<4>(0)
        .into_owned();

    for _ in 0..options.max_damping_steps.max(1) {
        let mut a = jtj;
        for k in 0..4 {
            a[(k, k)] += damping * jtj[(k, k)].max(f64::MIN_POSITIVE);
        }
        let step = a.lu().solve(&(-jtr));
        if let Some(next) = step.map(|s| p0 + s).as_ref().and_then(shape_from) {
            let c = data.cost(&next, amps);
            if c < *cost {
                *shape = next;
                *cost = c;
                return (true, (damping / 10.0).max(1e-12));
            }
        }
        damping *= 10.0;
    }
    (false, damping.min(1e12))
}

fn residuals_at(data: &Binned<'_>, p: &Vector4<f64>, amps: &[f64]) -> Vec<f64> {
    // finite-difference probes may leave the feasible region slightly
    let shape = PeakShape::new(p[0], p[1], p[2], p[3].max(0.0));
    data.residuals(&data.columns(&shape, amps.len()), amps)
}
