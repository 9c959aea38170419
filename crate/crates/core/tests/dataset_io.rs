mod common;

use proptest::prelude::*;
use turntaking::dataset::{load_dataset, write_dataset};
use turntaking::stats;
use turntaking::synthetic::{self, FixtureSpec, GroupSizeSpec, TraitFunctionSpec, TrialSpec};

#[test]
fn bundled_fixture_loads_with_expected_shape() {
    let bundle = load_dataset(common::fixture_dir()).unwrap();
    assert_eq!(bundle.teams.len(), 20);
    assert_eq!(bundle.trait_names.len(), 4);
    let sizes: Vec<f64> = bundle.teams.iter().map(|t| t.member_ids.len() as f64).collect();
    assert!(sizes.iter().all(|&s| (4.0..=6.0).contains(&s)));
    assert_eq!(stats::median(&sizes), 5.0);
    assert!(bundle.teams.iter().all(|t| t.meetings.len() > 1));
    let partial = bundle.teams.iter().flat_map(|t| &t.meetings).filter(|m| m.present.contains(&false)).count();
    assert!(partial > 0, "fixture should contain absences");
    assert_eq!(bundle, synthetic::team_fixture(&FixtureSpec::default()).unwrap());
}

#[test]
fn study1_splits_round_trip() {
    let trial = synthetic::build_trial(&TrialSpec { n_turns: 80, ..TrialSpec::study1(3, 1) }).unwrap();
    for teams in [&trial.train, &trial.val, &trial.test] {
        let bundle = synthetic::to_bundle(teams, "t");
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), bundle);
    }
}

#[test]
fn group_size_splits_round_trip() {
    let spec = GroupSizeSpec {
        pool_size: 24,
        team_size: 6,
        n_val_teams: 2,
        n_test_teams: 2,
        n_turns: 40,
        function: TraitFunctionSpec::COMPLEX_NEGATIVE,
        base_seed: 9,
        trial_index: 0,
    };
    let trial = synthetic::build_group_size_trial(&spec).unwrap();
    let bundle = synthetic::to_bundle(&trial.train, "g");
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&bundle, dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap(), bundle);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fixtures_load_for_any_seed(seed in any::<u64>(), absence_rate in 0.0f64..0.9) {
        let spec = FixtureSpec { seed, absence_rate, n_teams: 5, max_meetings: 4, max_turns: 90, ..FixtureSpec::default() };
        let bundle = synthetic::team_fixture(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&bundle, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(loaded, bundle);
    }
}
