//! Click-counting statistics for pixelated photon detectors (PPDs).
//!
//! A PPD is an array of binary "click" detectors read out as a single
//! channel: per light pulse it reports how many pixels fired, not how many
//! photons arrived. This crate provides
//!
//! - [`click_model`]: exact click distributions of ideal detectors for
//!   coherent, thermal and Fock inputs at any intensity,
//! - [`crosstalk`]: cascaded optical crosstalk and its convolution with the
//!   light-induced clicks,
//! - [`estimators`]: moments, the binomial and Mandel Q parameters with
//!   uncertainties, crosstalk extraction from the low-intensity limit, and a
//!   naive click-to-photon inversion,
//! - [`pulsefit`]: decomposition of area-under-pulse histograms into click
//!   statistics with a Gaussian mixture,
//! - [`mc_sim`]: an event-level Monte Carlo detector simulator used as the
//!   independent oracle for all of the above.

pub mod click_model;
pub mod crosstalk;
pub mod error;
pub mod estimators;
pub mod mc_sim;
pub mod numeric;
pub mod pulsefit;
mod types;

pub use click_model::{click_distribution, coherent_click_distribution, normal_ordered_gf};
pub use crosstalk::{
    cascade_distribution, cascade_moments, click_distribution_with_crosstalk, combine_with_kernel, convolve_noise,
    crosstalk_generation, CrosstalkKernel,
};
pub use error::{ClickError, Result};
pub use estimators::{
    bootstrap_map, crosstalk_q_limit, extract_chi, extract_chi_many, naive_photon_inversion, q_binomial, q_mandel,
    q_report, q_uncertainty, ClickSample, ClickStatistics, InversionResult, QReport, UncertaintyMethod,
};
pub use mc_sim::{sample_aup, simulate, SimBreakdown, SimConfig, SimResult};
pub use pulsefit::{
    clicks_from_fit, fit_mixture, fit_mixture_traced, initialize_fit, mixture_model, AuPHistogram, FitOptions,
    GaussianMixtureFit, InitOptions, PeakShape,
};
pub use types::{ClickDistribution, DetectorConfig, PhotonSource};
