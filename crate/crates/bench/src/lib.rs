//! Fixed workloads shared by the criterion benches and their smoke tests.

use clickstat::numeric::binomial_pmf;
use clickstat::{sample_aup, AuPHistogram, ClickDistribution, DetectorConfig, PeakShape};

pub const N_PIXELS: usize = 100;

/// Detector at the typical operating point: 100 pixels, 0.25% crosstalk.
pub fn detector() -> DetectorConfig {
    DetectorConfig::ideal(N_PIXELS)
        .with_efficiency(0.6)
        .with_dark_rate(0.001)
        .with_crosstalk(0.0025)
}

/// Pulse-area histogram of 1e5 pulses with Binomial(100, 0.3) clicks.
pub fn aup_histogram() -> AuPHistogram {
    let truth = ClickDistribution::new(binomial_pmf(N_PIXELS, 0.3)).expect("binomial is normalized");
    let shape = PeakShape::from_ratios(100.0, 0.0, 0.18, 0.0037);
    let areas = sample_aup(&truth, &shape, 100_000, 1).expect("valid sampling setup");
    AuPHistogram::from_samples(&areas, None).expect("nonempty samples")
}
