mod common;

use common::naive_lens;
use latentlens::fixtures::{constant_offset_fixture, offset_fixture_with, sparse_delta};
use latentlens::steering::{
    apply_shift, compute_shift, recovery_report, sparsity_profile, total_variation,
    PositionSelector, ShiftVector,
};
use latentlens::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shift_of(delta: Vec<f64>) -> ShiftVector {
    ShiftVector {
        layer_a: 1,
        layer_b: 2,
        n_examples: 1,
        delta,
    }
}

#[test]
fn offset_is_recovered_and_reproduces_target() {
    let fx = constant_offset_fixture(9, 40, 16, 24, 30, 26, 40);
    let shift = compute_shift(&fx.traces, &fx.pack, 26, 40, PositionSelector::FinalPrompt).unwrap();
    assert_eq!(shift.n_examples, 30);
    for (got, want) in shift.delta.iter().zip(&fx.offset) {
        assert!((got - want).abs() < 1e-9);
    }
    for trace in &fx.traces {
        let pos = trace.final_prompt_position().unwrap();
        let out = apply_shift(trace, &fx.pack, &shift, pos).unwrap();
        let target = naive_lens(&fx.pack, &trace.hidden[40 * 16..41 * 16]);
        assert!(total_variation(&out.after.probs, &target) < 1e-9);
    }
    let report =
        recovery_report(&fx.traces, &fx.pack, &shift, PositionSelector::FinalPrompt).unwrap();
    assert_eq!(report.top1_agreement, 1.0);
    assert!(report.mean_tv_after_target < 1e-9);
}

#[test]
fn identical_layers_give_zero_shift_and_identity() {
    let fx = offset_fixture_with(3, 4, 8, 10, 5, (1, 3), Some(vec![0.0; 8]));
    let shift = compute_shift(&fx.traces, &fx.pack, 1, 3, PositionSelector::FinalPrompt).unwrap();
    assert!(shift.delta.iter().all(|v| *v == 0.0));
    let t = &fx.traces[0];
    let out = apply_shift(t, &fx.pack, &shift, t.positions[0]).unwrap();
    assert_eq!(out.before, out.after);
    assert_eq!(out.top1_before, out.top1_after);
}

#[test]
fn single_example_shift_is_its_raw_difference() {
    let fx = constant_offset_fixture(5, 6, 8, 10, 1, 2, 5);
    let t = &fx.traces[0];
    let shift = compute_shift(&fx.traces, &fx.pack, 0, 4, PositionSelector::FinalPrompt).unwrap();
    for j in 0..8 {
        assert_eq!(
            shift.delta[j],
            f64::from(t.hidden[4 * 8 + j]) - f64::from(t.hidden[j])
        );
    }
}

#[test]
fn shift_errors() {
    let fx = constant_offset_fixture(5, 6, 8, 10, 2, 2, 5);
    assert!(matches!(
        compute_shift(&[], &fx.pack, 2, 5, PositionSelector::FinalPrompt),
        Err(Error::EmptyCorpus)
    ));
    assert!(matches!(
        compute_shift(&fx.traces, &fx.pack, 2, 7, PositionSelector::FinalPrompt),
        Err(Error::LayerOutOfRange { layer: 7, .. })
    ));
    assert!(matches!(
        compute_shift(&fx.traces, &fx.pack, 2, 5, PositionSelector::Absolute(999)),
        Err(Error::PositionNotStored { .. })
    ));
    let short = shift_of(vec![0.0; 3]);
    let t = &fx.traces[0];
    assert!(matches!(
        apply_shift(t, &fx.pack, &short, t.positions[0]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn ten_sparse_delta_in_model_width() {
    let planted = sparse_delta(17, 5120, 10);
    let shift = shift_of(planted.iter().map(|v| f64::from(*v)).collect());
    let profile = sparsity_profile(&shift, &[10]);
    let mut want: Vec<usize> = (0..5120).filter(|&i| planted[i] != 0.0).collect();
    let mut got: Vec<usize> = profile.top_dims.iter().map(|d| d.0).collect();
    got.sort();
    want.sort();
    assert_eq!(got, want);
    assert_eq!(profile.energy_fraction(10), 1.0);
    assert_eq!(profile.energy_at, vec![(10, 1.0)]);
}

#[test]
fn random_profile_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let delta: Vec<f64> = (0..64)
        .map(|_| (rng.gen_range(-64..=64) as f64) / 16.0)
        .collect();
    let profile = sparsity_profile(&shift_of(delta.clone()), &[]);
    let mut oracle: Vec<(usize, f64)> = delta
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| *v != 0.0)
        .collect();
    oracle.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    assert_eq!(profile.top_dims, oracle);
    let ranks = profile.ranks();
    for (r, (i, _)) in oracle.iter().enumerate() {
        assert_eq!(ranks[*i], r + 1);
    }
}

proptest! {
    #[test]
    fn shift_is_size_weighted_average(seed in 0u64..10_000, n1 in 1usize..8, n2 in 1usize..8) {
        let fx = constant_offset_fixture(seed, 5, 6, 7, n1 + n2, 1, 4);
        // layers 0 and 3 hold unrelated random states
        let (a, b) = fx.traces.split_at(n1);
        let all = compute_shift(&fx.traces, &fx.pack, 0, 3, PositionSelector::FinalPrompt).unwrap();
        let sa = compute_shift(a, &fx.pack, 0, 3, PositionSelector::FinalPrompt).unwrap();
        let sb = compute_shift(b, &fx.pack, 0, 3, PositionSelector::FinalPrompt).unwrap();
        let total = (n1 + n2) as f64;
        for j in 0..6 {
            let weighted = (n1 as f64 * sa.delta[j] + n2 as f64 * sb.delta[j]) / total;
            prop_assert!((all.delta[j] - weighted).abs() < 1e-9);
        }
        prop_assert_eq!(all.n_examples, n1 + n2);
    }

    #[test]
    fn energy_is_monotone_and_terminal_one(delta in proptest::collection::vec(-100.0f64..100.0, 1..80)) {
        let d = delta.len();
        let profile = sparsity_profile(&shift_of(delta), &[]);
        let mut prev = 0.0;
        for k in 0..=d {
            let e = profile.energy_fraction(k);
            prop_assert!(e + 1e-15 >= prev);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&e));
            prev = e;
        }
        prop_assert!((profile.energy_fraction(d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovery_holds_for_any_planted_offset(seed in 0u64..10_000) {
        let fx = constant_offset_fixture(seed, 8, 12, 16, 6, 3, 8);
        let shift = compute_shift(&fx.traces, &fx.pack, 3, 8, PositionSelector::FinalPrompt).unwrap();
        let report = recovery_report(&fx.traces, &fx.pack, &shift, PositionSelector::FinalPrompt).unwrap();
        prop_assert!(report.rows.iter().all(|r| r.tv_after_target < 1e-9));
    }
}
