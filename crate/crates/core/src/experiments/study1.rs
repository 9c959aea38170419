//! Synthetic benchmark: the trait network against five comparison models on
//! two-trait data with known generating functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::curves::{extract_curves, linspace, CurveModel, CurveSet};
use super::{
    column, compare_groups, par_trials, total_nll, GroupComparison, Study1Config, TrialResult, COMPARED_MODELS,
    LINEAR_REGRESSION, LEARNED_MODEL, RANDOMIZED_TRAITS, SAME_TRAITS, SAME_TRAITS_NO_MEMORY, SPEAK,
};
use crate::baselines::{self, calibrated_speak_d, rank_propensities, talk_ranks};
use crate::error::Result;
use crate::model::sequence_nll;
use crate::net::{self, NetworkWeights, OutputHead, TeamData};
use crate::seeds;
use crate::stats::{self, nullable, spearman};
use crate::synthetic::{build_trial, team_data, DataType, TrialSpec, SYNTHETIC_TRAITS, TRAIT_HIGH, TRAIT_LOW};

/// Agreement between learned and generating curves, per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecovery {
    /// Spearman correlation of learned `pi(a)` with `sqrt(a)`.
    #[serde(deserialize_with = "nullable::vec")]
    pub pi_spearman: Vec<f64>,
    /// Spearman correlation of learned `d(b)` with `b`.
    #[serde(deserialize_with = "nullable::vec")]
    pub d_spearman: Vec<f64>,
    #[serde(deserialize_with = "nullable::f64")]
    pub mean_pi_spearman: f64,
    #[serde(deserialize_with = "nullable::f64")]
    pub mean_d_spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study1Report {
    pub seed: u64,
    pub config: Study1Config,
    pub trials: Vec<TrialResult>,
    /// Rank-model memory weight used on each trial.
    pub speak_d: Vec<f64>,
    pub median_loss_diff: BTreeMap<String, f64>,
    /// Tests over the loss differences of the compared models.
    pub comparison: GroupComparison,
    pub curves: CurveSet,
    pub recovery: FunctionRecovery,
}

struct TrialOutput {
    result: TrialResult,
    weights: NetworkWeights,
    speak_d: f64,
}

/// Rank-model parameters for every test team given a shared memory weight.
fn speak_nll(test: &[TeamData], model: &baselines::RegressionModel, d: f64) -> Result<f64> {
    total_nll(test, |t| Ok(baselines::speak_rank_params(model, &t.traits, d)))
}

/// Memory weight that matches the network's median d / median pi ratio on
/// the test members.
pub(crate) fn calibrate_speak_d(test: &[TeamData], model: &baselines::RegressionModel, weights: &NetworkWeights) -> f64 {
    let mut rank_pis = Vec::new();
    let mut learned = Vec::new();
    for team in test {
        let preds: Vec<f64> = team.traits.iter().map(|t| model.predict(t)).collect();
        let by_rank = rank_propensities(preds.len());
        rank_pis.extend(talk_ranks(&preds).into_iter().map(|r| by_rank[r - 1]));
        learned.extend(team.params(weights));
    }
    calibrated_speak_d(&rank_pis, &learned)
}

fn run_trial(config: &Study1Config, seed: u64, k: usize) -> Result<TrialOutput> {
    let spec = TrialSpec {
        n_train_teams: config.n_train_teams,
        n_val_teams: config.n_val_teams,
        n_test_teams: config.n_test_teams,
        team_size: config.team_size,
        n_turns: config.n_turns,
        function: config.function,
        data_type: DataType::Memory,
        base_seed: seeds::named(seed, "study1-data"),
        trial_index: k,
    };
    let trial = build_trial(&spec)?;
    let (train, val, test) = (team_data(&trial.train), team_data(&trial.val), team_data(&trial.test));
    let cfg = |label: &str| config.train.with_seed(seeds::child(seeds::named(seed, label), k as u64));

    let ml = net::train(&train, &val, OutputHead::Full, &cfg(LEARNED_MODEL))?;
    let same = baselines::fit_same_traits(&train, &val, true, &cfg(SAME_TRAITS))?;
    let same_nm = baselines::fit_same_traits(&train, &val, false, &cfg(SAME_TRAITS_NO_MEMORY))?;
    let randomized = baselines::fit_randomized_traits(
        &train,
        &val,
        seeds::child(seeds::named(seed, "randomize"), k as u64),
        &cfg(RANDOMIZED_TRAITS),
    )?;
    let regression = baselines::fit_turncount_regression(&train)?;
    let speak_d = config.speak_d.unwrap_or_else(|| calibrate_speak_d(&test, &regression, &ml.weights));

    let same_test = baselines::same_traits(&test);
    let mut nll = BTreeMap::new();
    nll.insert(LEARNED_MODEL.to_string(), total_nll(&test, |t| Ok(t.params(&ml.weights)))?);
    nll.insert(SAME_TRAITS.to_string(), total_nll(&same_test, |t| Ok(t.params(&same.weights)))?);
    nll.insert(SAME_TRAITS_NO_MEMORY.to_string(), total_nll(&same_test, |t| Ok(t.params(&same_nm.weights)))?);
    nll.insert(RANDOMIZED_TRAITS.to_string(), total_nll(&test, |t| Ok(t.params(&randomized.weights)))?);
    nll.insert(
        LINEAR_REGRESSION.to_string(),
        total_nll(&test, |t| Ok(baselines::regression_to_params(&regression, &t.traits)))?,
    );
    nll.insert(SPEAK.to_string(), speak_nll(&test, &regression, speak_d)?);

    let mut true_nll = 0.0;
    for team in &trial.test {
        true_nll += sequence_nll(&team.params, &team.conversation)?;
    }
    Ok(TrialOutput { result: TrialResult::new(k, nll, Some(true_nll))?, weights: ml.weights, speak_d })
}

pub fn run_study1(config: &Study1Config, seed: u64) -> Result<Study1Report> {
    config.validate()?;
    let outputs = par_trials(config.n_trials, |k| run_trial(config, seed, k))?;
    let trials: Vec<TrialResult> = outputs.iter().map(|o| o.result.clone()).collect();

    let groups: Vec<(String, Vec<f64>)> =
        COMPARED_MODELS.iter().map(|m| (m.to_string(), column(&trials, m, true))).collect();
    let comparison = compare_groups("loss-difference", &groups)?;
    let mut median_loss_diff: BTreeMap<String, f64> =
        groups.iter().map(|(m, v)| (m.clone(), stats::median(v))).collect();
    median_loss_diff.insert(SAME_TRAITS.to_string(), 0.0);

    let names: Vec<String> = SYNTHETIC_TRAITS.iter().map(|s| s.to_string()).collect();
    let grid = linspace(TRAIT_LOW, TRAIT_HIGH, config.curve_points);
    let models: Vec<CurveModel> = outputs.iter().map(|o| CurveModel::identity(o.weights.clone())).collect();
    let mid = 0.5;
    let curves = extract_curves(&models, &names, &[mid, mid], &grid, &[], (TRAIT_LOW, TRAIT_HIGH));

    let sqrt_grid: Vec<f64> = grid.iter().map(|a| a.sqrt()).collect();
    let pi_spearman: Vec<f64> = curves.curves[0]
        .per_trial
        .iter()
        .map(|c| spearman(&c.iter().map(|p| p.pi).collect::<Vec<_>>(), &sqrt_grid))
        .collect();
    let d_spearman: Vec<f64> = curves.curves[1]
        .per_trial
        .iter()
        .map(|c| spearman(&c.iter().map(|p| p.d).collect::<Vec<_>>(), &grid))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let recovery = FunctionRecovery {
        mean_pi_spearman: mean(&pi_spearman),
        mean_d_spearman: mean(&d_spearman),
        pi_spearman,
        d_spearman,
    };

    Ok(Study1Report {
        seed,
        config: config.clone(),
        speak_d: outputs.iter().map(|o| o.speak_d).collect(),
        trials,
        median_loss_diff,
        comparison,
        curves,
        recovery,
    })
}
