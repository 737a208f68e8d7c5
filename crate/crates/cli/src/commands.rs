use std::path::Path;

use clickstat::{
    bootstrap_map, click_distribution, click_distribution_with_crosstalk, clicks_from_fit, combine_with_kernel,
    extract_chi, extract_chi_many, fit_mixture, initialize_fit, naive_photon_inversion, q_binomial, q_mandel,
    q_uncertainty, simulate, AuPHistogram, ClickDistribution, ClickError, ClickSample, ClickStatistics,
    CrosstalkKernel, DetectorConfig, FitOptions, GaussianMixtureFit, InitOptions, PeakShape, PhotonSource,
    SimBreakdown, SimConfig, UncertaintyMethod,
};
use serde::Serialize;

use crate::args::{
    CalibrateArgs, ClassicalState, DetectorArgs, FitArgs, InvertArgs, ModelArgs, QscanArgs, SimulateArgs, SourceArgs,
    State,
};
use crate::error::CliError;
use crate::io::{output_path, read_clicks, read_histogram, read_values, write_csv, write_json, SCHEMA_VERSION};

type Result<T> = std::result::Result<T, CliError>;

fn detector(a: &DetectorArgs) -> Result<DetectorConfig> {
    let det = DetectorConfig::ideal(a.pixels)
        .with_efficiency(a.eta)
        .with_dark_rate(a.nu)
        .with_crosstalk(a.chi)
        .with_preclick(a.preclick);
    det.validate()?;
    Ok(det)
}

fn photon_source(state: State, mean_photons: Option<f64>, n: Option<u64>) -> Result<PhotonSource> {
    let src = match (state, mean_photons, n) {
        (State::Coherent, Some(m), None) => PhotonSource::coherent(m),
        (State::Thermal, Some(m), None) => PhotonSource::thermal(m),
        (State::Fock, None, Some(n)) => PhotonSource::fock(n),
        (State::Fock, _, _) => {
            return Err(CliError::Validation(
                "--state fock takes --n and no --mean-photons".into(),
            ))
        }
        _ => {
            return Err(CliError::Validation(
                "--state coherent/thermal takes --mean-photons and no --n".into(),
            ))
        }
    };
    src.validate()?;
    Ok(src)
}

fn source(a: &SourceArgs) -> Result<PhotonSource> {
    photon_source(a.state, a.mean_photons, a.n)
}

/// Shortest round-trip representation, with exponents for tiny values.
fn fmt(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map_or_else(|| "nan".into(), |n| n.to_string())
    } else {
        "nan".into()
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn write_distribution(path: &Path, dist: &ClickDistribution) -> Result<()> {
    write_csv(
        path,
        &["k", "probability"],
        dist.probs().iter().enumerate().map(|(k, p)| [k.to_string(), fmt(*p)]),
    )
}

#[derive(Serialize)]
struct ModelReport {
    schema_version: u32,
    detector: DetectorConfig,
    source: PhotonSource,
    mean: f64,
    variance: f64,
    q_binomial: Option<f64>,
    q_mandel: Option<f64>,
}

pub fn model(a: &ModelArgs) -> Result<()> {
    let det = detector(&a.detector)?;
    let src = source(&a.source)?;
    if det.preclick_prob > 0.0 {
        eprintln!("clickstat: warning: preclicks are only simulated; the analytic model ignores them");
    }
    let dist = click_distribution_with_crosstalk(&src, &det)?;
    let report = ModelReport {
        schema_version: SCHEMA_VERSION,
        detector: det,
        source: src,
        mean: dist.mean(),
        variance: dist.variance(),
        q_binomial: q_binomial(&dist, det.n_pixels).ok(),
        q_mandel: q_mandel(&dist).ok(),
    };
    write_distribution(&output_path(&a.output.out_dir, "clicks.csv")?, &dist)?;
    write_json(&output_path(&a.output.out_dir, "model.json")?, &report)?;
    println!(
        "mean clicks {}, Q_B {:?}, Q_M {:?}",
        report.mean, report.q_binomial, report.q_mandel
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    schema_version: u32,
    config: &'a SimConfig,
    n_trials: u64,
    breakdown: SimBreakdown,
    mean: f64,
    variance: f64,
    q_binomial: Option<f64>,
    q_mandel: Option<f64>,
    q_binomial_stderr: Option<f64>,
    q_mandel_stderr: Option<f64>,
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let det = detector(&a.detector)?;
    let src = source(&a.source)?;
    let mut cfg = SimConfig::new(det, src, a.trials, a.seed);
    if a.areas {
        let p = &a.peaks;
        cfg = cfg.with_aup(PeakShape::from_ratios(p.delta_x, p.x0, p.sigma0_ratio, p.sigma1_ratio));
    }
    let result = simulate(&cfg)?;
    let sample = ClickSample::new(result.click_histogram.clone())?;
    let stats = q_uncertainty(&sample, det.n_pixels, UncertaintyMethod::Delta, 0, 0).ok();
    let report = SimulationReport {
        schema_version: SCHEMA_VERSION,
        config: &cfg,
        n_trials: result.n_trials(),
        breakdown: result.breakdown,
        mean: sample.mean(),
        variance: sample.variance(),
        q_binomial: stats.as_ref().map(|s| s.q_binomial),
        q_mandel: stats.as_ref().map(|s| s.q_mandel),
        q_binomial_stderr: stats.as_ref().and_then(|s| s.q_binomial_stderr),
        q_mandel_stderr: stats.as_ref().and_then(|s| s.q_mandel_stderr),
    };
    let dir = &a.output.out_dir;
    write_csv(
        &output_path(dir, "histogram.csv")?,
        &["k", "count"],
        result
            .click_histogram
            .iter()
            .enumerate()
            .map(|(k, c)| [k.to_string(), c.to_string()]),
    )?;
    write_json(&output_path(dir, "simulation.json")?, &report)?;
    if let Some(areas) = &result.areas {
        write_csv(
            &output_path(dir, "areas.csv")?,
            &["area"],
            areas.iter().map(|x| [fmt(*x)]),
        )?;
    }
    println!(
        "{} trials, mean clicks {}, Q_B {:?} +- {:?}",
        report.n_trials, report.mean, report.q_binomial, report.q_binomial_stderr
    );
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    schema_version: u32,
    n_pixels: usize,
    n_samples: u64,
    n_bins: usize,
    #[serde(flatten)]
    fit: &'a GaussianMixtureFit,
    /// Mass fraction of each peak lying nearer a neighbouring center.
    overlap_fractions: Vec<f64>,
    /// Peaks below 1e-6 of the total amplitude, kept in the fit.
    negligible_peaks: Vec<usize>,
}

#[derive(Serialize)]
struct QReportFile {
    schema_version: u32,
    mean: f64,
    variance: f64,
    q_binomial: Option<f64>,
    q_mandel: Option<f64>,
    q_binomial_stderr: Option<f64>,
    q_mandel_stderr: Option<f64>,
    method: UncertaintyMethod,
    n_resamples: usize,
}

fn fit_report<'a>(fit: &'a GaussianMixtureFit, hist: &AuPHistogram) -> FitReport<'a> {
    FitReport {
        schema_version: SCHEMA_VERSION,
        n_pixels: fit.n_pixels(),
        n_samples: hist.n_samples(),
        n_bins: hist.n_bins(),
        fit,
        overlap_fractions: fit.overlap_fractions(),
        negligible_peaks: fit.negligible_peaks(1e-6),
    }
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let areas = read_values(&a.input)?;
    let hist = AuPHistogram::from_samples(&areas, a.bins)?;
    let init_opts = InitOptions {
        delta_x: a.delta_x,
        x0_hint: a.x0_hint,
        sigma1_ratio: a.sigma1_ratio,
    };
    let init = initialize_fit(&hist, a.pixels, &init_opts)?;
    let options = FitOptions {
        max_iterations: a.max_iterations,
        ..FitOptions::default()
    };
    let dir = &a.output.out_dir;
    let fit = match fit_mixture(&hist, &init, &options) {
        Ok(fit) => fit,
        Err(ClickError::FitFailed { reason, best }) => {
            write_json(&output_path(dir, "fit.json")?, &fit_report(&best, &hist))?;
            return Err(ClickError::FitFailed { reason, best }.into());
        }
        Err(e) => return Err(e.into()),
    };
    if !fit.converged {
        eprintln!(
            "clickstat: warning: fit stopped after {} iterations without converging",
            fit.n_iterations
        );
    }
    let clicks = clicks_from_fit(&fit)?;

    // resample the fitted click counts; the fit's own parameter error is not included
    let n = hist.n_samples() as f64;
    let counts = clicks.probs().iter().map(|c| (c * n).round() as u64).collect();
    let sample = ClickSample::new(counts)?;
    let (method, resamples) = if a.resamples >= 2 && sample.n_trials() >= 100 {
        (UncertaintyMethod::Bootstrap, a.resamples)
    } else {
        (UncertaintyMethod::Delta, 0)
    };
    let q = q_uncertainty(&sample, a.pixels, method, resamples, a.seed).ok();
    let q_file = QReportFile {
        schema_version: SCHEMA_VERSION,
        mean: clicks.mean(),
        variance: clicks.variance(),
        q_binomial: q_binomial(&clicks, a.pixels).ok(),
        q_mandel: q_mandel(&clicks).ok(),
        q_binomial_stderr: q.as_ref().and_then(|r| r.q_binomial_stderr),
        q_mandel_stderr: q.as_ref().and_then(|r| r.q_mandel_stderr),
        method,
        n_resamples: resamples,
    };
    write_json(&output_path(dir, "fit.json")?, &fit_report(&fit, &hist))?;
    write_distribution(&output_path(dir, "clicks.csv")?, &clicks)?;
    write_json(&output_path(dir, "q_report.json")?, &q_file)?;
    println!(
        "delta_x {}, x0 {}, sigma0 {}, sigma1 {}, mean clicks {}, Q_B {:?}",
        fit.delta_x, fit.x0, fit.sigma0, fit.sigma1, q_file.mean, q_file.q_binomial
    );
    Ok(())
}

#[derive(Serialize)]
struct CrosstalkReport {
    schema_version: u32,
    n_pixels: usize,
    q_binomial: f64,
    q_binomial_stderr: Option<f64>,
    chi: f64,
    chi_stderr: Option<f64>,
    n_trials: Option<u64>,
    n_resamples: Option<usize>,
    /// Set when the input Q was negative and chi was reported as 0.
    negative_q: bool,
}

pub fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let n = a.pixels;
    if n == 0 {
        return Err(CliError::Validation("--pixels must be at least 1".into()));
    }
    let sample = match (&a.q, &a.clicks, &a.histogram) {
        (Some(_), _, _) => None,
        (None, Some(path), _) => Some(read_clicks(path, n)?),
        (None, None, Some(path)) => Some(read_histogram(path, n)?),
        (None, None, None) => {
            return Err(CliError::Validation(
                "one of --q, --clicks or --histogram is required".into(),
            ))
        }
    };
    let q = match (&sample, a.q) {
        (Some(s), _) => q_binomial(s, n)?,
        (None, Some(q)) if q.is_finite() => q,
        (None, q) => return Err(CliError::Validation(format!("--q must be finite, got {q:?}"))),
    };
    let negative_q = q < 0.0;
    if negative_q {
        eprintln!(
            "clickstat: warning: Q_B = {q} < 0 (nonclassical light or a statistical fluctuation); reporting chi = 0"
        );
    }
    let chi = if negative_q { 0.0 } else { extract_chi(q, n)? };

    let (mut q_se, mut chi_se, mut resamples) = (None, None, None);
    if let Some(s) = &sample {
        if a.resamples >= 2 {
            let qs = bootstrap_map(s, a.resamples, a.seed, |r| q_binomial(r, n).ok())?;
            let chis = extract_chi_many(&qs, n)?;
            q_se = Some(std_dev(&qs));
            chi_se = Some(std_dev(&chis));
            resamples = Some(a.resamples);
        }
    }
    let report = CrosstalkReport {
        schema_version: SCHEMA_VERSION,
        n_pixels: n,
        q_binomial: q,
        q_binomial_stderr: q_se,
        chi,
        chi_stderr: chi_se,
        n_trials: sample.as_ref().map(|s| s.n_trials()),
        n_resamples: resamples,
        negative_q,
    };
    write_json(&output_path(&a.output.out_dir, "crosstalk.json")?, &report)?;
    println!(
        "chi {} +- {:?} from Q_B {}",
        report.chi, report.chi_stderr, report.q_binomial
    );
    Ok(())
}

pub fn qscan(a: &QscanArgs) -> Result<()> {
    let det = detector(&a.detector)?;
    let ok_range = a.mu_min > 0.0 && a.mu_max >= a.mu_min && a.mu_max.is_finite();
    if !ok_range || a.points == 0 {
        return Err(CliError::Validation(format!(
            "need 0 < mu-min <= mu-max and points >= 1 (got {}, {}, {})",
            a.mu_min, a.mu_max, a.points
        )));
    }
    let grid: Vec<f64> = (0..a.points)
        .map(|i| {
            let t = if a.points == 1 {
                0.0
            } else {
                i as f64 / (a.points - 1) as f64
            };
            if a.linear {
                a.mu_min + t * (a.mu_max - a.mu_min)
            } else {
                a.mu_min * (a.mu_max / a.mu_min).powf(t)
            }
        })
        .collect();
    let nf = det.n_pixels as f64;
    let kernel = CrosstalkKernel::new(det.crosstalk, det.n_pixels)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &mu in &grid {
        let src = match a.state {
            ClassicalState::Coherent => PhotonSource::coherent(mu * nf),
            ClassicalState::Thermal => PhotonSource::thermal(mu * nf),
        };
        let light = click_distribution(&src, &det)?;
        let dist = if det.crosstalk > 0.0 {
            combine_with_kernel(&light, &kernel)?
        } else {
            light
        };
        let show = |q: std::result::Result<f64, ClickError>| q.map_or_else(|_| "nan".to_string(), fmt);
        let reference = (-(det.efficiency * mu * nf + det.dark_rate) / nf).exp_m1();
        rows.push([
            fmt(mu),
            show(q_binomial(&dist, det.n_pixels)),
            show(q_mandel(&dist)),
            fmt(reference),
        ]);
    }
    write_csv(
        &output_path(&a.output.out_dir, "qscan.csv")?,
        &["mu_per_pixel", "q_binomial", "q_mandel", "q_mandel_coherent_reference"],
        rows,
    )?;
    println!("{} grid points written", grid.len());
    Ok(())
}

#[derive(Serialize)]
struct InversionReport {
    schema_version: u32,
    n_pixels: usize,
    efficiency: f64,
    n_max: usize,
    sum: f64,
    min: f64,
    argmin: usize,
    residual_norm: f64,
    log10_condition: f64,
    has_negative: bool,
}

pub fn invert(a: &InvertArgs) -> Result<()> {
    let det = DetectorConfig::ideal(a.pixels).with_efficiency(a.eta);
    det.validate()?;
    let result = match (&a.state, &a.clicks, &a.histogram) {
        (Some(state), _, _) => {
            let dist = click_distribution(&photon_source(*state, a.mean_photons, a.n)?, &det)?;
            run_inversion(&dist, &det, a.n_max)?
        }
        (None, Some(path), _) => run_inversion(&read_clicks(path, a.pixels)?, &det, a.n_max)?,
        (None, None, Some(path)) => run_inversion(&read_histogram(path, a.pixels)?, &det, a.n_max)?,
        (None, None, None) => {
            return Err(CliError::Validation(
                "one of --state, --clicks or --histogram is required".into(),
            ))
        }
    };
    let report = InversionReport {
        schema_version: SCHEMA_VERSION,
        n_pixels: a.pixels,
        efficiency: a.eta,
        n_max: result.probs.len() - 1,
        sum: result.sum,
        min: result.min,
        argmin: result.argmin,
        residual_norm: result.residual_norm,
        log10_condition: result.log10_condition,
        has_negative: result.min < 0.0,
    };
    let dir = &a.output.out_dir;
    write_csv(
        &output_path(dir, "photons.csv")?,
        &["n", "probability"],
        result.probs.iter().enumerate().map(|(n, p)| [n.to_string(), fmt(*p)]),
    )?;
    write_json(&output_path(dir, "inversion.json")?, &report)?;
    println!("min p_n {} at n = {}", report.min, report.argmin);
    Ok(())
}

fn run_inversion<S: ClickStatistics + ?Sized>(
    clicks: &S,
    det: &DetectorConfig,
    n_max: Option<usize>,
) -> Result<clickstat::InversionResult> {
    Ok(naive_photon_inversion(clicks, det, n_max)?)
}
