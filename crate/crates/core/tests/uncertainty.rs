use clickstat::{
    click_distribution_with_crosstalk, q_uncertainty, simulate, ClickSample, DetectorConfig, PhotonSource, SimConfig,
    UncertaintyMethod,
};

fn sample(trials: u64, seed: u64) -> ClickSample {
    let det = DetectorConfig::ideal(50).with_crosstalk(0.01);
    let sim = simulate(&SimConfig::new(det, PhotonSource::coherent(20.0), trials, seed)).unwrap();
    ClickSample::new(sim.click_histogram).unwrap()
}

#[test]
fn bootstrap_and_delta_errors_agree() {
    let s = sample(20_000, 1);
    let boot = q_uncertainty(&s, 50, UncertaintyMethod::Bootstrap, 1000, 7).unwrap();
    let delta = q_uncertainty(&s, 50, UncertaintyMethod::Delta, 0, 0).unwrap();
    assert_eq!(boot.q_binomial, delta.q_binomial);
    for (b, d) in [
        (boot.q_binomial_stderr.unwrap(), delta.q_binomial_stderr.unwrap()),
        (boot.q_mandel_stderr.unwrap(), delta.q_mandel_stderr.unwrap()),
    ] {
        assert!((b / d - 1.0).abs() < 0.25, "bootstrap {b} vs delta {d}");
    }
}

#[test]
fn errors_shrink_as_inverse_square_root() {
    let small = q_uncertainty(&sample(10_000, 2), 50, UncertaintyMethod::Delta, 0, 0).unwrap();
    let large = q_uncertainty(&sample(160_000, 3), 50, UncertaintyMethod::Delta, 0, 0).unwrap();
    let ratio = small.q_binomial_stderr.unwrap() / large.q_binomial_stderr.unwrap();
    assert!((ratio / 4.0 - 1.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn sample_q_brackets_the_model() {
    let det = DetectorConfig::ideal(50).with_crosstalk(0.01);
    let exact = click_distribution_with_crosstalk(&PhotonSource::coherent(20.0), &det).unwrap();
    let q_exact = clickstat::q_binomial(&exact, 50).unwrap();
    let r = q_uncertainty(&sample(100_000, 4), 50, UncertaintyMethod::Delta, 0, 0).unwrap();
    assert!((r.q_binomial - q_exact).abs() < 4.0 * r.q_binomial_stderr.unwrap());
}

#[test]
fn bootstrap_is_reproducible() {
    let s = sample(5_000, 5);
    let a = q_uncertainty(&s, 50, UncertaintyMethod::Bootstrap, 200, 9).unwrap();
    let b = q_uncertainty(&s, 50, UncertaintyMethod::Bootstrap, 200, 9).unwrap();
    assert_eq!(a, b);
}
