use qefb::filters::{arma1, FeedbackMode, GraphFilter, ShiftSource};
use qefb::graph::{build_shift, generate_sensor_graph, spectral_decompose, Connectivity, ResModel, ShiftKind};
use qefb::harness::{make_scaled_input, run_experiment, upper_bound_snr, Scenario, SNR_CAP_DB};

fn mini() -> Scenario {
    Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/mini.json")).unwrap()
}

#[test]
fn one_trial_at_52_bits_reaches_the_rounding_floor() {
    let mut sc = mini();
    sc.trials = 1;
    sc.quantizer.bits = vec![52];
    let t = run_experiment(&sc).unwrap();
    for pair in t.rows.chunks(2) {
        for r in pair {
            assert!(r.snr_unbiased >= 270.0 && r.snr_unbiased <= SNR_CAP_DB, "{r:?}");
        }
        assert!((pair[0].snr_unbiased - pair[1].snr_unbiased).abs() < 20.0);
    }
}

#[test]
fn off_rows_do_not_depend_on_the_other_modes() {
    let with = run_experiment(&mini()).unwrap();
    let mut sc = mini();
    sc.feedback = FeedbackMode::Off;
    let without = run_experiment(&sc).unwrap();
    assert_eq!(without.rows.len() * 2, with.rows.len());
    let off: Vec<_> = with.rows_for(FeedbackMode::Off).cloned().collect();
    assert_eq!(off, without.rows);
}

#[test]
fn predicted_and_empirical_gains_agree_in_sign() {
    let t = run_experiment(&mini()).unwrap();
    for pair in t.rows.chunks(2) {
        let predicted = pair[0].zeta_predicted - pair[1].zeta_predicted;
        let empirical = pair[1].snr_unbiased - pair[0].snr_unbiased;
        assert!(predicted > 0.0 && empirical > 0.0, "{pair:?}");
    }
}

#[test]
fn upper_bound_is_capped_at_p_one_and_stable_across_batches() {
    let g = generate_sensor_graph(64, Connectivity::Edges(236), 1).unwrap();
    let shift = build_shift(&g, &ShiftKind::ScaledLaplacian).unwrap();
    let spectrum = spectral_decompose(&shift).unwrap();
    let filter = GraphFilter::Arma(arma1(0.5, &shift).unwrap());
    let full = ResModel::new(g.clone(), 1.0, ShiftKind::ScaledLaplacian).unwrap();
    let (x, _) = make_scaled_input(&spectrum, 0, ShiftSource::Random(&full), &filter, 1.0, 60).unwrap();
    assert_eq!(upper_bound_snr(&full, &filter, &x, 100, 1, 1e-8).unwrap(), SNR_CAP_DB);

    let model = ResModel::new(g, 0.95, ShiftKind::ScaledLaplacian).unwrap();
    let a = upper_bound_snr(&model, &filter, &x, 10_000, 11, 1e-8).unwrap();
    let b = upper_bound_snr(&model, &filter, &x, 10_000, 12, 1e-8).unwrap();
    assert!(a.is_finite() && a < SNR_CAP_DB);
    assert!((a - b).abs() <= 0.2, "{a} vs {b}");
}
