mod common;

use std::collections::HashMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use turntaking::model::{
    meeting_nll, next_speaker_distribution, sample_conversation, sample_conversation_with, AttendanceMask, HistoryState, Meeting,
    SpeakerParams, TeamConversation, sequence_nll,
};
use turntaking::seeds;

use common::{legal_sequences, sequence_probability, uniform_no_memory_nll};

fn team3() -> Vec<SpeakerParams> {
    vec![
        SpeakerParams::new(0.4, 2.0).unwrap(),
        SpeakerParams::new(1.3, 0.5).unwrap(),
        SpeakerParams::new(0.8, 3.5).unwrap(),
    ]
}

#[test]
fn closed_form_loss_for_uniform_no_memory_team() {
    let team = vec![SpeakerParams::new(0.7, 0.0).unwrap(); 5];
    let meeting = sample_conversation(&team, 600, &AttendanceMask::all(5), 3).unwrap();
    let nll = meeting_nll(&team, &meeting).unwrap();
    assert_abs_diff_eq!(nll, 5f64.ln() + 599.0 * 4f64.ln(), epsilon = 1e-9);
    assert_abs_diff_eq!(nll, 831.999_760_223_248_6, epsilon = 1e-9);
}

#[test]
fn closed_form_with_absences_sums_over_meetings() {
    let team = vec![SpeakerParams::new(1.1, 0.0).unwrap(); 4];
    let full = Meeting::new(vec![0, 1, 2, 3, 0, 2], AttendanceMask::all(4)).unwrap();
    let partial = Meeting::new(vec![1, 3, 1, 3], AttendanceMask::new(vec![false, true, true, true]).unwrap()).unwrap();
    let conv = TeamConversation::new((0..4).map(|i| i.to_string()).collect(), vec![full, partial]).unwrap();
    let expected = uniform_no_memory_nll(4, 6) + uniform_no_memory_nll(3, 4);
    assert_abs_diff_eq!(sequence_nll(&team, &conv).unwrap(), expected, epsilon = 1e-12);
}

#[test]
fn exhaustive_enumeration_matches_definition() {
    let team = team3();
    let seqs = legal_sequences(3, 5);
    assert_eq!(seqs.len(), 48);
    let mut total = 0.0;
    for s in &seqs {
        let meeting = Meeting::new(s.clone(), AttendanceMask::all(3)).unwrap();
        let p_model = (-meeting_nll(&team, &meeting).unwrap()).exp();
        let p_oracle = sequence_probability(&team, s);
        assert_abs_diff_eq!(p_model, p_oracle, epsilon = 1e-10);
        total += p_model;
    }
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
}

#[test]
fn sampler_frequencies_within_three_sigma() {
    let team = team3();
    let n = 100_000;
    let mut rng = seeds::rng(seeds::named(11, "monte-carlo"));
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..n {
        let m = sample_conversation_with(&team, 5, &AttendanceMask::all(3), &mut rng).unwrap();
        *counts.entry(m.turns().to_vec()).or_default() += 1;
    }
    assert!(counts.len() <= 48);
    for s in legal_sequences(3, 5) {
        let p = sequence_probability(&team, &s);
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let got = *counts.get(&s).unwrap_or(&0) as f64;
        assert!((got - expected).abs() <= 3.0 * sigma, "{s:?}: {got} vs {expected:.1} ± {sigma:.1}");
    }
}

#[test]
fn history_resets_between_meetings() {
    let team = team3();
    let a = Meeting::new(vec![0, 1, 2], AttendanceMask::all(3)).unwrap();
    let b = Meeting::new(vec![2, 0, 1, 0], AttendanceMask::all(3)).unwrap();
    let conv = TeamConversation::new(vec!["x".into(), "y".into(), "z".into()], vec![a.clone(), b.clone()]).unwrap();
    let separate = meeting_nll(&team, &a).unwrap() + meeting_nll(&team, &b).unwrap();
    assert_abs_diff_eq!(sequence_nll(&team, &conv).unwrap(), separate, epsilon = 1e-12);
    assert_abs_diff_eq!(
        (-meeting_nll(&team, &b).unwrap()).exp(),
        sequence_probability(&team, b.turns()),
        epsilon = 1e-14
    );
}

fn params_strategy(n: usize) -> impl Strategy<Value = Vec<SpeakerParams>> {
    prop::collection::vec((1e-3f64..10.0, 0.0f64..10.0), n)
        .prop_map(|v| v.into_iter().map(|(pi, d)| SpeakerParams::new(pi, d).unwrap()).collect())
}

fn sequence_strategy(n: usize, len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..n - 1, len).prop_map(move |steps| {
        let mut seq = Vec::with_capacity(steps.len());
        for s in steps {
            let next = match seq.last() {
                Some(&last) => (last + 1 + s) % n,
                None => s,
            };
            seq.push(next);
        }
        seq
    })
}

proptest! {
    #[test]
    fn distribution_is_a_probability_vector(
        team in params_strategy(5),
        seq in sequence_strategy(5, 12),
        absent in 0usize..6,
    ) {
        let mut present = vec![true; 5];
        if absent < 5 {
            present[absent] = false;
        }
        let mask = AttendanceMask::new(present.clone()).unwrap();
        let mut state = HistoryState::new(5);
        for &s in seq.iter().filter(|&&s| present[s]) {
            state.record(s);
        }
        let probs = next_speaker_distribution(&team, &state, &mask).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, p) in probs.iter().enumerate() {
            prop_assert!(*p >= 0.0);
            if !present[i] || state.last_speaker() == Some(i) {
                prop_assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn loss_is_invariant_to_joint_scaling(
        team in params_strategy(4),
        seq in sequence_strategy(4, 30),
        c in 1e-2f64..1e2,
    ) {
        let meeting = Meeting::new(seq, AttendanceMask::all(4)).unwrap();
        let scaled: Vec<SpeakerParams> =
            team.iter().map(|p| SpeakerParams::new(p.pi * c, p.d * c).unwrap()).collect();
        let a = meeting_nll(&team, &meeting).unwrap();
        let b = meeting_nll(&scaled, &meeting).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn loss_matches_reference_definition(team in params_strategy(4), seq in sequence_strategy(4, 20)) {
        let meeting = Meeting::new(seq.clone(), AttendanceMask::all(4)).unwrap();
        let a = meeting_nll(&team, &meeting).unwrap();
        let b = -sequence_probability(&team, &seq).ln();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}
