//! End-to-end checks of the rounds and traces through the public API.

use mcp_core::channel::SignConvention;
use mcp_core::sim::EventKind;
use mcp_core::*;
use proptest::prelude::*;

fn pilot_states(ch: &ChannelMatrix) -> (BsState, BsState) {
    (
        BsState::with_pilots(Mac::One, [CsiRow::pilot(ch, Mac::One)]).unwrap(),
        BsState::with_pilots(Mac::Two, [CsiRow::pilot(ch, Mac::Two)]).unwrap(),
    )
}

/// Cooperation should not lose to congestion; discrete-input objectives are
/// not concave, so violations are reported rather than fatal.
#[test]
fn cooperation_is_not_worse_than_congestion() {
    let cfg = SolverConfig {
        policy: PowerPolicy::Optimized,
        engine: IntegrationEngine::gauss_hermite(24),
        ..Default::default()
    };
    let mut violations = Vec::new();
    for seed in 0..30 {
        let ch = sample_channel(seed, 2.0, true).unwrap();
        let (mut a, mut b) = pilot_states(&ch);
        let coop = ul_round(&mut a, &mut b, &BackhaulConfig::default(), &cfg).unwrap();
        let (mut a, mut b) = pilot_states(&ch);
        let alone = ul_round(
            &mut a,
            &mut b,
            &BackhaulConfig::new(1.0, 1.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(coop.mode, Mode::Cooperative);
        assert_eq!(alone.mode, Mode::NoCooperation);
        if alone.rate.nats() > coop.rate.nats() + 1e-9 {
            violations.push((seed, alone.rate.bits() - coop.rate.bits()));
        }
    }
    println!(
        "no-cooperation above cooperation on {} of 30 channels: {violations:?}",
        violations.len()
    );
}

fn batch_se(xs: &[f64], batch: usize) -> f64 {
    let means: Vec<f64> = xs
        .chunks(batch)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}

#[test]
fn two_seeds_agree_within_three_standard_errors() {
    let s = Scenario {
        snr_grid: vec![1.0, 4.0],
        ar: ArModel::new(1, 0.5, SignConvention::Standard, 0.75).unwrap(),
        ..Default::default()
    };
    let n = 200;
    let a = run_trace(n, &s, 100).unwrap();
    let b = run_trace(n, &s, 200).unwrap();
    assert_ne!(a.records[0].mi_inst, b.records[0].mi_inst);
    for (i, _) in s.snr_grid.iter().enumerate() {
        let xa: Vec<f64> = a.records[i * n..(i + 1) * n]
            .iter()
            .map(|r| r.mi_inst)
            .collect();
        let xb: Vec<f64> = b.records[i * n..(i + 1) * n]
            .iter()
            .map(|r| r.mi_inst)
            .collect();
        let gap = (a.records[(i + 1) * n - 1].mi_avg - b.records[(i + 1) * n - 1].mi_avg).abs();
        let se = batch_se(&xa, 10).hypot(batch_se(&xb, 10));
        assert!(gap <= 3.0 * se, "gap {gap} vs se {se}");
    }
}

#[test]
fn every_pilot_resets_the_noise() {
    let s = Scenario {
        link: Link::Downlink,
        snr_grid: vec![1.0],
        ar: ArModel::new(1, 0.8, SignConvention::Standard, 0.1).unwrap(),
        feedback: sim::FeedbackPolicy::Ceiling { max_sigma_sq: 1.4 },
        ..Default::default()
    };
    let t = run_trace(25, &s, 4).unwrap();
    let events = t.events_table();
    assert_eq!(events.header(), ["block", "event_type"]);
    for e in t.events.iter().filter(|e| e.kind == EventKind::PilotSent) {
        if let Some(next) = t.records.get(e.block + 1) {
            // the design after a pilot is one step past a horizon-0 estimate
            assert_eq!(next.estimate.horizon(), 1);
            assert_eq!(
                next.estimate.sigma_sq(Mac::One),
                1.0 + 2.0 * s.ar.error_variance(1)
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(8) })]

    #[test]
    fn traces_are_pure_functions_of_the_seed(seed in any::<u64>(), n in 1usize..6) {
        let s = Scenario { snr_grid: vec![0.5, 3.0], ..Default::default() };
        let a = run_trace(n, &s, seed).unwrap();
        let b = run_trace(n, &s, seed).unwrap();
        prop_assert!(a.running_means_exact());
        prop_assert_eq!(a.trace_table(Unit::Bits).to_csv_string(), b.trace_table(Unit::Bits).to_csv_string());
        prop_assert_eq!(a.events_table(), b.events_table());
    }
}
