//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use turntaking::model::{AttendanceMask, Meeting, SpeakerParams, TeamConversation};
use turntaking::net::{dataset_nll, gradient, NetworkWeights, OutputHead, TeamData, TraitVector};

/// Probability of `seq` computed straight from the likelihood definition,
/// scanning the sequence for each member's last turn.
pub fn sequence_probability(team: &[SpeakerParams], seq: &[usize]) -> f64 {
    let mut prob = 1.0;
    for t in 0..seq.len() {
        let weights: Vec<f64> = (0..team.len())
            .map(|i| match (0..t).rev().find(|&s| seq[s] == i) {
                Some(s) if s + 1 == t => 0.0,
                Some(s) => team[i].pi + team[i].d * (-0.5 * (t - s) as f64).exp(),
                None => team[i].pi,
            })
            .collect();
        prob *= weights[seq[t]] / weights.iter().sum::<f64>();
    }
    prob
}

/// Every sequence of length `t` over `n` speakers with no immediate repeats.
pub fn legal_sequences(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..n).filter(|&i| s.last() != Some(&i)).map(|i| [s.as_slice(), &[i]].concat()).collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

/// `ln n + (T - 1) ln(n - 1)`: loss of any sequence under equal propensities
/// and no memory.
pub fn uniform_no_memory_nll(n_present: usize, n_turns: usize) -> f64 {
    (n_present as f64).ln() + (n_turns as f64 - 1.0) * (n_present as f64 - 1.0).ln()
}

/// Small random team data set for gradient checks.
pub fn random_teams(seed: u64, n_teams: usize, n_traits: usize, n_turns: usize) -> Vec<TeamData> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n_teams)
        .map(|_| {
            let size = rng.gen_range(3..=5);
            let traits: Vec<TraitVector> =
                (0..size).map(|_| TraitVector((0..n_traits).map(|_| rng.gen::<f64>()).collect())).collect();
            let mut present = vec![true; size];
            if size > 3 && rng.gen_bool(0.5) {
                present[rng.gen_range(0..size)] = false;
            }
            let meetings = [AttendanceMask::all(size), AttendanceMask::new(present).unwrap()]
                .into_iter()
                .map(|mask| {
                    let speakers: Vec<usize> = (0..size).filter(|&i| mask.is_present(i)).collect();
                    let mut turns = vec![speakers[rng.gen_range(0..speakers.len())]];
                    while turns.len() < n_turns {
                        let s = speakers[rng.gen_range(0..speakers.len())];
                        if Some(&s) != turns.last() {
                            turns.push(s);
                        }
                    }
                    Meeting::new(turns, mask).unwrap()
                })
                .collect();
            let ids = (0..size).map(|i| format!("m{i}")).collect();
            TeamData::new(traits, TeamConversation::new(ids, meetings).unwrap()).unwrap()
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`.
pub fn max_gradient_error(weights: &NetworkWeights, teams: &[TeamData], h: f64) -> f64 {
    let analytic: Vec<f64> = gradient(weights, teams).unwrap().params().copied().collect();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let shifted = |delta: f64| {
            let mut w = weights.clone();
            *w.params_mut().nth(i).unwrap() += delta;
            dataset_nll(&w, teams).unwrap()
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let scale = a.abs().max(numeric.abs());
        if scale > 0.0 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

pub fn heads() -> [OutputHead; 3] {
    [OutputHead::Full, OutputHead::NoMemory, OutputHead::SharedPi]
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("study3")
}
