use clickstat::{
    click_distribution, click_distribution_with_crosstalk, q_binomial, q_mandel, DetectorConfig, PhotonSource,
};
use proptest::prelude::*;

fn source() -> impl Strategy<Value = PhotonSource> {
    prop_oneof![
        (0.0..200.0f64).prop_map(PhotonSource::coherent),
        (0.0..100.0f64).prop_map(PhotonSource::thermal),
        (0u64..300).prop_map(PhotonSource::fock),
    ]
}

fn detector() -> impl Strategy<Value = DetectorConfig> {
    (1usize..60, 0.0..=1.0f64, 0.0..0.5f64, 0.0..0.05f64).prop_map(|(n, eta, nu, chi)| {
        DetectorConfig::ideal(n)
            .with_efficiency(eta)
            .with_dark_rate(nu)
            .with_crosstalk(chi)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_normalized(src in source(), det in detector()) {
        let d = click_distribution_with_crosstalk(&src, &det).unwrap();
        prop_assert_eq!(d.probs().len(), det.n_pixels + 1);
        prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
        let total: f64 = d.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn classical_light_never_shows_negative_q(
        mean in 0.01..150.0f64,
        thermal in any::<bool>(),
        det in detector(),
    ) {
        let src = if thermal { PhotonSource::thermal(mean) } else { PhotonSource::coherent(mean) };
        let d = click_distribution_with_crosstalk(&src, &det).unwrap();
        if let Ok(q) = q_binomial(&d, det.n_pixels) {
            prop_assert!(q >= -1e-10, "Q_B = {}", q);
        }
    }

    #[test]
    fn coherent_clicks_are_binomial(per_pixel in 1e-3..5.0f64, n in 1usize..200) {
        let mean = per_pixel * n as f64;
        let d = click_distribution(&PhotonSource::coherent(mean), &DetectorConfig::ideal(n)).unwrap();
        prop_assert!(q_binomial(&d, n).unwrap().abs() < 1e-10);
        let mandel = (-mean / n as f64).exp_m1();
        prop_assert!((q_mandel(&d).unwrap() - mandel).abs() < 1e-10);
    }

    #[test]
    fn crosstalk_only_adds_clicks(src in source(), det in detector()) {
        let plain = click_distribution(&src, &det).unwrap();
        let with = click_distribution_with_crosstalk(&src, &det).unwrap();
        prop_assert!(with.mean() >= plain.mean() - 1e-10);
        prop_assert!((with[0] - plain[0]).abs() < 1e-15);
    }

    #[test]
    fn single_photon_gives_single_click(n in 1usize..100) {
        let d = click_distribution(&PhotonSource::fock(1), &DetectorConfig::ideal(n)).unwrap();
        prop_assert!((d[1] - 1.0).abs() < 1e-14);
    }
}

#[test]
fn saturated_coherent_light_keeps_zero_q() {
    // fewer than 1e-15 idle pixels on average: N - <c> must not cancel
    let det = DetectorConfig::ideal(4)
        .with_efficiency(0.9814748655514779)
        .with_dark_rate(0.1935370567147805);
    let d = click_distribution_with_crosstalk(&PhotonSource::coherent(143.9854135681475), &det).unwrap();
    let q = q_binomial(&d, 4).unwrap();
    assert!(q.abs() < 1e-10, "Q_B = {q}");
}
