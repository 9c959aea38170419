//! Sensitivity experiments on synthetic data: data/model mismatch, function
//! complexity, conversation length and group size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compare_groups, par_trials, total_nll, GroupComparison, NamedTest, Study2Config};
use crate::error::{Error, Result};
use crate::model::sequence_nll;
use crate::net::{self, OutputHead, TrainConfig};
use crate::seeds;
use crate::stats::{self, Alternative, Summary};
use crate::synthetic::{
    build_group_size_trial, build_trial, crop_teams, team_data, Complexity, DataType, GroupSizeSpec, SyntheticTeam,
    SyntheticTrial, TraitFunctionSpec, TrialSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study2Kind {
    DataModel,
    Complexity,
    Length,
    GroupSize,
}

impl std::str::FromStr for Study2Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "data-model" => Ok(Self::DataModel),
            "complexity" => Ok(Self::Complexity),
            "length" => Ok(Self::Length),
            "group-size" => Ok(Self::GroupSize),
            other => Err(Error::InvalidConfig(format!("unknown study2 kind '{other}'"))),
        }
    }
}

/// Test losses of one experimental cell across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub factors: BTreeMap<String, String>,
    pub nll: Vec<f64>,
    /// Loss under the generating parameters on the same test teams.
    pub true_nll: Vec<f64>,
    pub summary: Summary,
    pub true_summary: Summary,
}

impl ConditionResult {
    fn new(name: String, factors: &[(&str, String)], scores: Vec<(f64, f64)>) -> Self {
        let nll: Vec<f64> = scores.iter().map(|s| s.0).collect();
        let true_nll: Vec<f64> = scores.iter().map(|s| s.1).collect();
        Self {
            name,
            factors: factors.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            summary: stats::summarize(&nll),
            true_summary: stats::summarize(&true_nll),
            nll,
            true_nll,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study2Report {
    pub kind: Study2Kind,
    pub seed: u64,
    pub config: Study2Config,
    pub conditions: Vec<ConditionResult>,
    pub comparisons: Vec<GroupComparison>,
    pub tests: Vec<NamedTest>,
}

impl Study2Report {
    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn true_nll(teams: &[SyntheticTeam]) -> Result<f64> {
    teams.iter().map(|t| sequence_nll(&t.params, &t.conversation)).sum()
}

/// Fits one network and returns (test loss, generating-parameter loss).
fn fit_and_score(trial: &SyntheticTrial, head: OutputHead, cfg: &TrainConfig) -> Result<(f64, f64)> {
    let test = team_data(&trial.test);
    let out = net::train(&team_data(&trial.train), &team_data(&trial.val), head, cfg)?;
    Ok((total_nll(&test, |t| Ok(t.params(&out.weights)))?, true_nll(&trial.test)?))
}

fn head_label(head: OutputHead) -> &'static str {
    match head {
        OutputHead::Full => "mem",
        OutputHead::NoMemory => "no-mem",
        OutputHead::SharedPi => "same-pi",
    }
}

fn data_label(dt: DataType) -> &'static str {
    match dt {
        DataType::Memory => "memory",
        DataType::NoMemory => "no-memory",
        DataType::SamePi => "same-pi",
    }
}

fn train_cfg(config: &Study2Config, seed: u64, label: &str, k: usize) -> TrainConfig {
    config.train.with_seed(seeds::child(seeds::named(seed, label), k as u64))
}

fn trial_spec(config: &Study2Config, function: TraitFunctionSpec, data_type: DataType, base_seed: u64, k: usize) -> TrialSpec {
    TrialSpec {
        n_train_teams: config.n_train_teams,
        n_val_teams: config.n_val_teams,
        n_test_teams: config.n_test_teams,
        team_size: config.team_size,
        n_turns: config.n_turns,
        function,
        data_type,
        base_seed,
        trial_index: k,
    }
}

/// `scores[trial][cell]` to one column per cell.
fn transpose(scores: Vec<Vec<(f64, f64)>>, n_cells: usize) -> Vec<Vec<(f64, f64)>> {
    (0..n_cells).map(|c| scores.iter().map(|t| t[c]).collect()).collect()
}

fn named_groups(conditions: &[&ConditionResult], key: &str) -> Vec<(String, Vec<f64>)> {
    conditions.iter().map(|c| (c.factors[key].clone(), c.nll.clone())).collect()
}

fn pooled(conditions: &[ConditionResult], pred: impl Fn(&ConditionResult) -> bool) -> Vec<f64> {
    conditions.iter().filter(|c| pred(c)).flat_map(|c| c.nll.clone()).collect()
}

fn complexity_label(f: &TraitFunctionSpec) -> &'static str {
    match f.complexity {
        Complexity::Simple => "simple",
        Complexity::Complex => "complex",
    }
}

/// Rank-sum of pooled simple-function losses against pooled complex ones.
fn simple_vs_complex(conditions: &[ConditionResult]) -> Result<Option<NamedTest>> {
    let simple = pooled(conditions, |c| c.factors["complexity"] == "simple");
    let complex = pooled(conditions, |c| c.factors["complexity"] == "complex");
    if simple.is_empty() || complex.is_empty() {
        return Ok(None);
    }
    Ok(Some(NamedTest {
        label: "simple-vs-complex".into(),
        result: stats::wilcoxon_rank_sum(&simple, &complex, Alternative::TwoSided)?,
    }))
}

fn data_model(config: &Study2Config, seed: u64) -> Result<(Vec<ConditionResult>, Vec<GroupComparison>, Vec<NamedTest>)> {
    let data_types = [DataType::Memory, DataType::NoMemory, DataType::SamePi];
    let heads = [OutputHead::Full, OutputHead::NoMemory, OutputHead::SharedPi];
    let base = seeds::named(seed, "data-model");
    let scores = par_trials(config.n_trials, |k| {
        let mut row = Vec::new();
        for dt in data_types {
            let trial = build_trial(&trial_spec(config, TraitFunctionSpec::COMPLEX_UNCORRELATED, dt, base, k))?;
            for head in heads {
                let label = format!("dm-{}-{}", data_label(dt), head_label(head));
                row.push(fit_and_score(&trial, head, &train_cfg(config, seed, &label, k))?);
            }
        }
        Ok(row)
    })?;
    let mut columns = transpose(scores, data_types.len() * heads.len()).into_iter();
    let mut conditions = Vec::new();
    for dt in data_types {
        for head in heads {
            let (d, m) = (data_label(dt), head_label(head));
            conditions.push(ConditionResult::new(
                format!("{d}-data/{m}-model"),
                &[("data", d.to_string()), ("model", m.to_string())],
                columns.next().expect("one column per cell"),
            ));
        }
    }
    let mut comparisons = Vec::new();
    for dt in data_types {
        let d = data_label(dt);
        let cells: Vec<&ConditionResult> = conditions.iter().filter(|c| c.factors["data"] == d).collect();
        comparisons.push(compare_groups(&format!("{d}-data"), &named_groups(&cells, "model"))?);
    }
    Ok((conditions, comparisons, vec![]))
}

fn complexity(config: &Study2Config, seed: u64) -> Result<(Vec<ConditionResult>, Vec<GroupComparison>, Vec<NamedTest>)> {
    let functions = TraitFunctionSpec::all();
    let scores = par_trials(config.n_trials, |k| {
        // Fresh validation and test teams for every trial; the traits are
        // shared by all six conditions.
        let base = seeds::child(seeds::named(seed, "complexity"), k as u64);
        functions
            .iter()
            .enumerate()
            .map(|(c, &f)| {
                let trial = build_trial(&trial_spec(config, f, DataType::Memory, base, 0))?;
                fit_and_score(&trial, OutputHead::Full, &train_cfg(config, seed, &format!("complexity-{}", c + 1), k))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let conditions: Vec<ConditionResult> = transpose(scores, functions.len())
        .into_iter()
        .zip(&functions)
        .enumerate()
        .map(|(c, (col, f))| {
            let correlation = f.label().split('-').nth(1).unwrap_or_default().to_string();
            ConditionResult::new(
                format!("{}:{}", c + 1, f.label()),
                &[
                    ("condition", (c + 1).to_string()),
                    ("complexity", complexity_label(f).to_string()),
                    ("correlation", correlation),
                ],
                col,
            )
        })
        .collect();
    let mut comparisons = Vec::new();
    for level in ["simple", "complex"] {
        let cells: Vec<&ConditionResult> = conditions.iter().filter(|c| c.factors["complexity"] == level).collect();
        comparisons.push(compare_groups(level, &named_groups(&cells, "correlation"))?);
    }
    let tests = simple_vs_complex(&conditions)?.into_iter().collect();
    Ok((conditions, comparisons, tests))
}

fn length(config: &Study2Config, seed: u64) -> Result<(Vec<ConditionResult>, Vec<GroupComparison>, Vec<NamedTest>)> {
    let longest = *config.lengths.iter().max().expect("validated nonempty");
    let source = Study2Config { n_turns: longest, ..config.clone() };
    let mut conditions = Vec::new();
    let mut comparisons = Vec::new();
    let mut tests = Vec::new();
    for f in &config.functions {
        let base = seeds::named(seed, &format!("length-{}", f.label()));
        let scores = par_trials(config.n_trials, |k| {
            let full = build_trial(&trial_spec(&source, *f, DataType::Memory, base, k))?;
            config
                .lengths
                .iter()
                .map(|&len| {
                    let trial = SyntheticTrial {
                        train: crop_teams(&full.train, len)?,
                        val: if config.crop_eval { crop_teams(&full.val, len)? } else { full.val.clone() },
                        test: if config.crop_eval { crop_teams(&full.test, len)? } else { full.test.clone() },
                    };
                    let label = format!("length-{}-{len}", f.label());
                    fit_and_score(&trial, OutputHead::Full, &train_cfg(config, seed, &label, k))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let start = conditions.len();
        for (col, len) in transpose(scores, config.lengths.len()).into_iter().zip(&config.lengths) {
            conditions.push(ConditionResult::new(
                format!("{}/{len}", f.label()),
                &[
                    ("function", f.label()),
                    ("complexity", complexity_label(f).to_string()),
                    ("length", len.to_string()),
                ],
                col,
            ));
        }
        let cells: Vec<&ConditionResult> = conditions[start..].iter().collect();
        comparisons.push(compare_groups(&f.label(), &named_groups(&cells, "length"))?);
        let (shortest, longest) = (cells.first().expect("nonempty"), cells.last().expect("nonempty"));
        if cells.len() > 1 {
            tests.push(NamedTest {
                label: format!("{}: {} > {}", f.label(), shortest.factors["length"], longest.factors["length"]),
                result: stats::wilcoxon_rank_sum(&shortest.nll, &longest.nll, Alternative::Greater)?,
            });
        }
    }
    tests.extend(simple_vs_complex(&conditions)?);
    Ok((conditions, comparisons, tests))
}

fn group_size(config: &Study2Config, seed: u64) -> Result<(Vec<ConditionResult>, Vec<GroupComparison>, Vec<NamedTest>)> {
    let base = seeds::named(seed, "group-size");
    let mut conditions = Vec::new();
    let mut comparisons = Vec::new();
    for f in &config.functions {
        let scores = par_trials(config.n_trials, |k| {
            config
                .group_sizes
                .iter()
                .map(|&s| {
                    let trial = build_group_size_trial(&GroupSizeSpec {
                        pool_size: config.pool_size,
                        team_size: s,
                        n_val_teams: config.n_val_teams,
                        n_test_teams: config.n_test_teams,
                        n_turns: config.n_turns,
                        function: *f,
                        base_seed: base,
                        trial_index: k,
                    })?;
                    let label = format!("group-size-{}-{s}", f.label());
                    fit_and_score(&trial, OutputHead::Full, &train_cfg(config, seed, &label, k))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let start = conditions.len();
        for (col, s) in transpose(scores, config.group_sizes.len()).into_iter().zip(&config.group_sizes) {
            conditions.push(ConditionResult::new(
                format!("{}/{s}", f.label()),
                &[
                    ("function", f.label()),
                    ("complexity", complexity_label(f).to_string()),
                    ("group_size", s.to_string()),
                ],
                col,
            ));
        }
        let cells: Vec<&ConditionResult> = conditions[start..].iter().collect();
        if cells.len() > 1 {
            comparisons.push(compare_groups(&f.label(), &named_groups(&cells, "group_size"))?);
        }
    }
    let tests = simple_vs_complex(&conditions)?.into_iter().collect();
    Ok((conditions, comparisons, tests))
}

pub fn run_study2(kind: Study2Kind, config: &Study2Config, seed: u64) -> Result<Study2Report> {
    config.validate()?;
    let (conditions, comparisons, tests) = match kind {
        Study2Kind::DataModel => data_model(config, seed)?,
        Study2Kind::Complexity => complexity(config, seed)?,
        Study2Kind::Length => length(config, seed)?,
        Study2Kind::GroupSize => group_size(config, seed)?,
    };
    Ok(Study2Report { kind, seed, config: config.clone(), conditions, comparisons, tests })
}
