mod common;

use profdenoise::dataset::{stratified_sample, temporal_split};
use profdenoise::synth::{generate, SynthSpec};

#[test]
fn kcore_matches_peeling_oracle() {
    assert_eq!(common::kcore_mismatches(200, 11), 0);
}

#[test]
fn synthetic_splits_hold_invariants() {
    for seed in 1..=4 {
        let spec = SynthSpec {
            n_users: 120,
            seed,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        let split = temporal_split(&data.interactions, Some(&data.titles)).unwrap();
        let v = common::split_violations(&data.interactions, &split);
        assert!(v.is_empty(), "seed {seed}: {v:?}");
        assert!(split.catalog.items().iter().all(|i| i.title.is_some()));
    }
}

#[test]
fn stratified_sample_on_synthetic_split() {
    let data = generate(&SynthSpec::default()).unwrap();
    let split = temporal_split(&data.interactions, None).unwrap();
    let s = stratified_sample(&split, 100, 4).unwrap();
    assert_eq!(s.len(), 100);
    assert!(s.windows(2).all(|w| w[0] < w[1]));
}
