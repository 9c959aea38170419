//! Comparison models.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SpeakerParams, PI_FLOOR};
use crate::net::{self, OutputHead, TeamData, TrainConfig, TrainOutcome, TraitVector};
use crate::seeds;

/// Ratio between consecutive rank propensities in the rank model.
pub const SPEAK_RATIO: f64 = 0.7;
/// Shared memory weight of the rank model in the five-member synthetic setting.
pub const SPEAK_D: f64 = 2.26;
/// Trait value every member receives in the same-traits models.
pub const SAME_TRAIT_VALUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    SameTraits,
    SameTraitsNoMemory,
    RandomizedTraits,
    LinearRegression,
    SpeakRank,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::SameTraits,
        BaselineKind::SameTraitsNoMemory,
        BaselineKind::RandomizedTraits,
        BaselineKind::LinearRegression,
        BaselineKind::SpeakRank,
    ];
}

/// Replaces every trait value with [`SAME_TRAIT_VALUE`].
pub fn same_traits(teams: &[TeamData]) -> Vec<TeamData> {
    teams
        .iter()
        .map(|t| t.map_traits(|v| TraitVector(vec![SAME_TRAIT_VALUE; v.len()])))
        .collect()
}

/// Trains on constant traits. With `memory == false` the network's `d`
/// output is dropped.
pub fn fit_same_traits(train: &[TeamData], val: &[TeamData], memory: bool, config: &TrainConfig) -> Result<TrainOutcome> {
    let head = if memory { OutputHead::Full } else { OutputHead::NoMemory };
    net::train(&same_traits(train), &same_traits(val), head, config)
}

/// Permutes each trait column independently within every team.
pub fn shuffle_traits_within_teams(teams: &[TeamData], seed: u64) -> Vec<TeamData> {
    let mut rng = seeds::rng(seed);
    teams
        .iter()
        .map(|team| {
            let n = team.traits.len();
            let k = team.n_traits();
            let mut traits = team.traits.clone();
            for j in 0..k {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                for (i, &src) in order.iter().enumerate() {
                    traits[i].0[j] = team.traits[src][j];
                }
            }
            TeamData { traits, conversation: team.conversation.clone() }
        })
        .collect()
}

pub fn fit_randomized_traits(train: &[TeamData], val: &[TeamData], seed: u64, config: &TrainConfig) -> Result<TrainOutcome> {
    let train = shuffle_traits_within_teams(train, seeds::named(seed, "train"));
    let val = shuffle_traits_within_teams(val, seeds::named(seed, "val"));
    net::train(&train, &val, OutputHead::Full, config)
}

/// Ordinary least squares from traits to a member's total turn count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl RegressionModel {
    pub fn predict(&self, traits: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(traits).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[pivot][col].abs() <= 1e-12 * scale {
            return Err(Error::SingularDesign);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Least squares with intercept on `(traits, y)` observations. The design is
/// centred first, so the fit passes exactly through the centroid.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64]) -> Result<RegressionModel> {
    let n = y.len();
    let k = x.first().map_or(0, Vec::len);
    if n < k + 2 {
        return Err(Error::InsufficientData(format!("{n} observations for {k} predictors")));
    }
    let nf = n as f64;
    let mx: Vec<f64> = (0..k).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let my = y.iter().sum::<f64>() / nf;
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in x.iter().zip(y) {
        for a in 0..k {
            let da = row[a] - mx[a];
            xty[a] += da * (yi - my);
            for b in 0..k {
                xtx[a][b] += da * (row[b] - mx[b]);
            }
        }
    }
    let coefficients = if k == 0 { vec![] } else { solve(xtx, xty)? };
    let intercept = my - coefficients.iter().zip(&mx).map(|(c, m)| c * m).sum::<f64>();
    Ok(RegressionModel { intercept, coefficients })
}

/// Regresses each member's total turn count over all of their team's
/// meetings on their traits.
pub fn fit_turncount_regression(train: &[TeamData]) -> Result<RegressionModel> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for team in train {
        for (traits, count) in team.traits.iter().zip(team.conversation.turn_counts()) {
            x.push(traits.0.clone());
            y.push(count as f64);
        }
    }
    fit_ols(&x, &y)
}

/// Predicted turn counts, floored and normalised within the team, as `pi`
/// with no memory.
pub fn regression_to_params(model: &RegressionModel, team: &[TraitVector]) -> Vec<SpeakerParams> {
    let preds: Vec<f64> = team.iter().map(|t| model.predict(t).max(PI_FLOOR)).collect();
    let total: f64 = preds.iter().sum();
    preds.into_iter().map(|p| SpeakerParams { pi: p / total, d: 0.0 }).collect()
}

/// Rank of each member (1 = most talkative) by descending prediction; ties
/// keep member order.
pub fn talk_ranks(predictions: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&i, &j| predictions[j].total_cmp(&predictions[i]));
    let mut ranks = vec![0; predictions.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Geometric rank propensities `r^i / sum_j r^j` for a team of `n`.
pub fn rank_propensities(n: usize) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|i| SPEAK_RATIO.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

pub fn speak_rank_params(model: &RegressionModel, team: &[TraitVector], d_value: f64) -> Vec<SpeakerParams> {
    let preds: Vec<f64> = team.iter().map(|t| model.predict(t)).collect();
    let by_rank = rank_propensities(team.len());
    talk_ranks(&preds).into_iter().map(|r| SpeakerParams { pi: by_rank[r - 1], d: d_value }).collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Memory weight for the rank model that reproduces the trained network's
/// ratio of median `d` to median `pi`, given the rank model's `pi` values.
pub fn calibrated_speak_d(rank_pis: &[f64], learned: &[SpeakerParams]) -> f64 {
    let mut rp = rank_pis.to_vec();
    let mut lp: Vec<f64> = learned.iter().map(|p| p.pi).collect();
    let mut ld: Vec<f64> = learned.iter().map(|p| p.d).collect();
    median(&mut rp) * median(&mut ld) / median(&mut lp)
}
