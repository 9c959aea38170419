//! Study drivers: data trials, model fitting, test losses and the tests run
//! over them.
//!
//! Every driver runs its trials in parallel and gathers results in trial
//! order, so reports depend only on the configuration and the base seed.

mod config;
mod curves;
mod study1;
mod study2;
mod study3;

pub use config::{Preset, Study1Config, Study2Config, Study3Config, TraitScaling};
pub use curves::{extract_curves, linspace, Curve, CurveModel, CurvePoint, CurveSet, Surface};
pub use study1::{run_study1, FunctionRecovery, Study1Report};
pub use study2::{run_study2, ConditionResult, Study2Kind, Study2Report};
pub use study3::{
    run_baseline_comparison, run_forward_selection, run_study3, sliding_split_indices, sliding_splits, ComparisonReport, SelectionResult,
    SelectionStep, Study3Report, TraitSetTrials,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sequence_nll, SpeakerParams};
use crate::net::TeamData;
use crate::stats::{self, Alternative, PairwiseMatrix, Summary, TestResult};

pub const LEARNED_MODEL: &str = "ml-speak";
pub const SPEAK: &str = "speak";
pub const RANDOMIZED_TRAITS: &str = "randomized-traits";
pub const LINEAR_REGRESSION: &str = "linear-regression";
pub const SAME_TRAITS_NO_MEMORY: &str = "same-traits-no-memory";
pub const SAME_TRAITS: &str = "same-traits";

/// Models compared against the same-traits baseline, in their expected order
/// from best to worst.
pub const COMPARED_MODELS: [&str; 5] = [LEARNED_MODEL, SPEAK, RANDOMIZED_TRAITS, LINEAR_REGRESSION, SAME_TRAITS_NO_MEMORY];

/// Test losses of every model on one data trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub nll: BTreeMap<String, f64>,
    /// `nll[model] - nll["same-traits"]`.
    pub loss_diff: BTreeMap<String, f64>,
    /// Loss under the generating parameters, when they are known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_nll: Option<f64>,
}

impl TrialResult {
    pub fn new(trial_index: usize, nll: BTreeMap<String, f64>, true_nll: Option<f64>) -> Result<Self> {
        let reference = *nll
            .get(SAME_TRAITS)
            .ok_or_else(|| Error::InvalidConfig(format!("trial {trial_index} has no {SAME_TRAITS} loss")))?;
        let loss_diff = nll.iter().map(|(k, v)| (k.clone(), v - reference)).collect();
        Ok(Self { trial_index, nll, loss_diff, true_nll })
    }
}

/// Kruskal-Wallis plus pairwise rank-sum tests over named samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub label: String,
    pub groups: Vec<String>,
    pub summaries: Vec<Summary>,
    pub kruskal_wallis: TestResult,
    pub pairwise: PairwiseMatrix,
}

pub fn compare_groups(label: &str, groups: &[(String, Vec<f64>)]) -> Result<GroupComparison> {
    let samples: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
    Ok(GroupComparison {
        label: label.to_string(),
        groups: groups.iter().map(|(n, _)| n.clone()).collect(),
        summaries: samples.iter().map(|s| stats::summarize(s)).collect(),
        kruskal_wallis: stats::kruskal_wallis(&samples)?,
        pairwise: stats::pairwise_wilcoxon(&samples, Alternative::TwoSided)?,
    })
}

/// A single labelled test result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub label: String,
    pub result: TestResult,
}

/// Summed test loss of `teams` with parameters from `params`.
pub fn total_nll(teams: &[TeamData], params: impl Fn(&TeamData) -> Result<Vec<SpeakerParams>>) -> Result<f64> {
    let mut total = 0.0;
    for team in teams {
        total += sequence_nll(&params(team)?, &team.conversation)?;
    }
    Ok(total)
}

/// Column of one model's values across trials.
pub fn column(trials: &[TrialResult], model: &str, diff: bool) -> Vec<f64> {
    trials
        .iter()
        .map(|t| {
            let map = if diff { &t.loss_diff } else { &t.nll };
            map.get(model).copied().unwrap_or(f64::NAN)
        })
        .collect()
}

/// Runs `f` for each trial index in parallel and returns results in order.
pub(crate) fn par_trials<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_traits_diff_is_zero() {
        let nll: BTreeMap<String, f64> =
            [(SAME_TRAITS.to_string(), 812.25), (LEARNED_MODEL.to_string(), 790.5)].into_iter().collect();
        let t = TrialResult::new(3, nll, None).unwrap();
        assert_eq!(t.loss_diff[SAME_TRAITS], 0.0);
        assert_eq!(t.loss_diff[LEARNED_MODEL], 790.5 - 812.25);
        assert!(TrialResult::new(0, BTreeMap::new(), None).is_err());
    }
}
