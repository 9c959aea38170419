//! Real-format team data: sliding train/validation/test windows over a fixed
//! team order, greedy trait selection, baseline comparison and learned
//! relationships.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::curves::{extract_curves, linspace, CurveModel, CurveSet};
use super::study1::calibrate_speak_d;
use super::{
    column, compare_groups, par_trials, total_nll, GroupComparison, Study3Config, TraitScaling, TrialResult,
    COMPARED_MODELS, LINEAR_REGRESSION, LEARNED_MODEL, RANDOMIZED_TRAITS, SAME_TRAITS, SAME_TRAITS_NO_MEMORY, SPEAK,
};
use crate::baselines;
use crate::dataset::DatasetBundle;
use crate::error::{Error, Result};
use crate::net::{self, normalize_traits, NetworkWeights, OutputHead, TeamData, TraitNormalizer, TraitVector};
use crate::seeds;
use crate::stats::{self, Alternative};

/// Team indices of one circular window: `train` starts at `trial_index`.
pub fn sliding_split_indices(
    n_teams: usize,
    trial_index: usize,
    sizes: (usize, usize, usize),
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let expected = sizes.0 + sizes.1 + sizes.2;
    if n_teams != expected {
        return Err(Error::WrongTeamCount { expected, found: n_teams });
    }
    if trial_index >= n_teams {
        return Err(Error::InvalidConfig(format!("trial index {trial_index} outside 0..{n_teams}")));
    }
    let window = |from: usize, len: usize| (from..from + len).map(|i| (trial_index + i) % n_teams).collect();
    Ok((window(0, sizes.0), window(sizes.0, sizes.1), window(sizes.0 + sizes.1, sizes.2)))
}

/// 12/4/4 circular split of exactly 20 teams.
pub fn sliding_splits<T: Clone>(teams: &[T], trial_index: usize) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (a, b, c) = sliding_split_indices(teams.len(), trial_index, (12, 4, 4))?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| teams[i].clone()).collect();
    Ok((pick(a), pick(b), pick(c)))
}

/// One candidate evaluated at one selection stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub stage: usize,
    pub candidate: String,
    pub trait_set: Vec<String>,
    /// Median over trials of the candidate set's test loss minus the
    /// incumbent's.
    pub median_loss_diff: f64,
    /// Signed-rank statistic of the paired differences ("less").
    pub statistic: f64,
    pub p_value: f64,
    pub accepted: bool,
    pub selected: bool,
}

/// Test losses of one trait set across the sliding trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitSetTrials {
    pub traits: Vec<String>,
    pub nll: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub pool: Vec<String>,
    /// Selected steps, in stage order.
    pub path: Vec<SelectionStep>,
    /// Every evaluated candidate.
    pub steps: Vec<SelectionStep>,
    pub selected_traits: Vec<String>,
    pub same_traits_nll: Vec<f64>,
    pub evaluated: Vec<TraitSetTrials>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub traits: Vec<String>,
    /// Losses on full-attendance test meetings.
    pub trials: Vec<TrialResult>,
    pub speak_d: Vec<f64>,
    pub median_loss_diff: BTreeMap<String, f64>,
    pub comparison: GroupComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study3Report {
    pub seed: u64,
    pub config: Study3Config,
    /// Team ids in the randomized order the windows slide over.
    pub team_order: Vec<String>,
    pub selection: SelectionResult,
    /// Traits of the model compared against the baselines.
    pub final_traits: Vec<String>,
    /// True when selection accepted nothing and the best single trait was
    /// used instead.
    pub final_is_fallback: bool,
    pub comparison: ComparisonReport,
    pub curves: CurveSet,
}

#[derive(Clone)]
struct FittedTrial {
    nll: f64,
    weights: NetworkWeights,
    normalizer: TraitNormalizer,
}

/// Shared state of one Study 3 run: the team order and every trait set
/// fitted so far.
struct Runner<'a> {
    bundle: &'a DatasetBundle,
    config: &'a Study3Config,
    seed: u64,
    order: Vec<usize>,
    fitted: HashMap<Vec<String>, Vec<FittedTrial>>,
    same_traits: Option<Vec<f64>>,
}

impl<'a> Runner<'a> {
    fn new(bundle: &'a DatasetBundle, config: &'a Study3Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let needed = config.n_teams();
        let found = bundle.teams.len();
        if found < needed {
            return Err(Error::InsufficientTeams { needed, found });
        }
        if found != needed {
            return Err(Error::WrongTeamCount { expected: needed, found });
        }
        bundle.validate()?;
        let mut order: Vec<usize> = (0..found).collect();
        order.shuffle(&mut seeds::rng(seeds::named(seed, "team-order")));
        Ok(Self { bundle, config, seed, order, fitted: HashMap::new(), same_traits: None })
    }

    fn sizes(&self) -> (usize, usize, usize) {
        (self.config.n_train_teams, self.config.n_val_teams, self.config.n_test_teams)
    }

    /// Raw team data for `columns`, split for trial `k`.
    fn split(&self, columns: &[usize], k: usize) -> Result<(Vec<TeamData>, Vec<TeamData>, Vec<TeamData>)> {
        let (a, b, c) = sliding_split_indices(self.order.len(), k, self.sizes())?;
        let pick = |idx: Vec<usize>| -> Result<Vec<TeamData>> {
            idx.into_iter().map(|i| self.bundle.teams[self.order[i]].team_data(columns)).collect()
        };
        Ok((pick(a)?, pick(b)?, pick(c)?))
    }

    fn normalizer(&self, names: &[String], train: &[TeamData], columns: &[usize]) -> Result<TraitNormalizer> {
        match self.config.scaling {
            TraitScaling::PerSplit => TraitNormalizer::fit(names.to_vec(), train.iter().flat_map(|t| t.traits.iter())),
            TraitScaling::Dataset => {
                let all: Vec<TraitVector> =
                    self.bundle.teams.iter().flat_map(|t| t.traits.iter().map(|v| v.select(columns))).collect();
                TraitNormalizer::fit(names.to_vec(), all.iter())
            }
        }
    }

    /// Normalized (train, val, test) for trait set `names` on trial `k`.
    fn prepared(&self, names: &[String], k: usize) -> Result<([Vec<TeamData>; 3], TraitNormalizer)> {
        let columns = self.bundle.trait_columns(names)?;
        let (train, val, test) = self.split(&columns, k)?;
        let norm = self.normalizer(names, &train, &columns)?;
        let scale = |teams: Vec<TeamData>| -> Result<Vec<TeamData>> {
            teams
                .into_iter()
                .map(|t| TeamData::new(normalize_traits(&t.traits, &norm)?, t.conversation))
                .collect()
        };
        Ok(([scale(train)?, scale(val)?, scale(test)?], norm))
    }

    fn train_cfg(&self, label: &str, k: usize) -> net::TrainConfig {
        self.config.train.with_seed(seeds::child(seeds::named(self.seed, label), k as u64))
    }

    fn fit_set(&mut self, names: &[String]) -> Result<&[FittedTrial]> {
        if !self.fitted.contains_key(names) {
            let label = format!("set:{}", names.join("+"));
            let this = &*self;
            let trials = par_trials(this.config.n_trials, |k| {
                let ([train, val, test], normalizer) = this.prepared(names, k)?;
                let out = net::train(&train, &val, OutputHead::Full, &this.train_cfg(&label, k))?;
                let nll = total_nll(&test, |t| Ok(t.params(&out.weights)))?;
                Ok(FittedTrial { nll, weights: out.weights, normalizer })
            })?;
            self.fitted.insert(names.to_vec(), trials);
        }
        Ok(&self.fitted[names])
    }

    /// Same-traits losses on all test meetings.
    fn same_traits_nll(&mut self) -> Result<Vec<f64>> {
        if self.same_traits.is_none() {
            let columns = [0];
            let this = &*self;
            let nll = par_trials(this.config.n_trials, |k| {
                let (train, val, test) = this.split(&columns, k)?;
                let out = baselines::fit_same_traits(&train, &val, true, &this.train_cfg(SAME_TRAITS, k))?;
                total_nll(&baselines::same_traits(&test), |t| Ok(t.params(&out.weights)))
            })?;
            self.same_traits = Some(nll);
        }
        Ok(self.same_traits.clone().expect("filled above"))
    }

    fn forward_selection(&mut self, pool: &[String]) -> Result<SelectionResult> {
        if pool.is_empty() {
            return Err(Error::InvalidConfig("trait pool is empty".into()));
        }
        self.bundle.trait_columns(pool)?;
        let same = self.same_traits_nll()?;
        let mut incumbent: Vec<String> = Vec::new();
        let mut incumbent_nll = same.clone();
        let mut steps = Vec::new();
        let mut path = Vec::new();
        let mut evaluated = Vec::new();

        for stage in 1..=self.config.max_traits.min(pool.len()) {
            let mut stage_steps = Vec::new();
            let mut stage_nll = Vec::new();
            for candidate in pool.iter().filter(|c| !incumbent.contains(c)) {
                let mut set = incumbent.clone();
                set.push(candidate.clone());
                let nll: Vec<f64> = self.fit_set(&set)?.iter().map(|t| t.nll).collect();
                let diffs: Vec<f64> = nll.iter().zip(&incumbent_nll).map(|(a, b)| a - b).collect();
                let median = stats::median(&diffs);
                let (statistic, p_value) = match stats::wilcoxon_signed_rank(&diffs, Alternative::Less) {
                    Ok(r) => (r.statistic, r.p_value),
                    Err(Error::AllZeroDiffs) => (0.0, 1.0),
                    Err(e) => return Err(e),
                };
                evaluated.push(TraitSetTrials { traits: set.clone(), nll: nll.clone() });
                stage_steps.push(SelectionStep {
                    stage,
                    candidate: candidate.clone(),
                    trait_set: set,
                    median_loss_diff: median,
                    statistic,
                    p_value,
                    accepted: median < 0.0,
                    selected: false,
                });
                stage_nll.push(nll);
            }
            // Lowest p among accepted candidates; ties go to the lower median,
            // then to pool order.
            let best = stage_steps
                .iter()
                .enumerate()
                .filter(|(_, s)| s.accepted)
                .min_by(|(_, a), (_, b)| {
                    a.p_value.total_cmp(&b.p_value).then(a.median_loss_diff.total_cmp(&b.median_loss_diff))
                })
                .map(|(i, _)| i);
            let Some(i) = best else {
                steps.extend(stage_steps);
                break;
            };
            stage_steps[i].selected = true;
            incumbent = stage_steps[i].trait_set.clone();
            incumbent_nll = stage_nll.swap_remove(i);
            path.push(stage_steps[i].clone());
            steps.extend(stage_steps);
        }

        Ok(SelectionResult {
            pool: pool.to_vec(),
            path,
            steps,
            selected_traits: incumbent,
            same_traits_nll: same,
            evaluated,
        })
    }

    fn comparison(&mut self, names: &[String]) -> Result<ComparisonReport> {
        let ml = self.fit_set(names)?.to_vec();
        let this = &*self;
        let outputs = par_trials(this.config.n_trials, |k| {
            let ([train, val, test], _) = this.prepared(names, k)?;
            let full = |teams: &[TeamData]| -> Vec<TeamData> {
                teams
                    .iter()
                    .map(|t| TeamData { traits: t.traits.clone(), conversation: t.conversation.full_attendance_only() })
                    .collect()
            };
            let test_full = full(&test);
            let weights = &ml[k].weights;
            let same = baselines::fit_same_traits(&train, &val, true, &this.train_cfg(SAME_TRAITS, k))?;
            let same_nm = baselines::fit_same_traits(&train, &val, false, &this.train_cfg(SAME_TRAITS_NO_MEMORY, k))?;
            let randomized = baselines::fit_randomized_traits(
                &train,
                &val,
                seeds::child(seeds::named(this.seed, "randomize"), k as u64),
                &this.train_cfg(RANDOMIZED_TRAITS, k),
            )?;
            let regression = baselines::fit_turncount_regression(&full(&train))?;
            let speak_d = this.config.speak_d.unwrap_or_else(|| calibrate_speak_d(&test_full, &regression, weights));

            let same_test = baselines::same_traits(&test_full);
            let mut nll = BTreeMap::new();
            nll.insert(LEARNED_MODEL.to_string(), total_nll(&test_full, |t| Ok(t.params(weights)))?);
            nll.insert(SAME_TRAITS.to_string(), total_nll(&same_test, |t| Ok(t.params(&same.weights)))?);
            nll.insert(SAME_TRAITS_NO_MEMORY.to_string(), total_nll(&same_test, |t| Ok(t.params(&same_nm.weights)))?);
            nll.insert(RANDOMIZED_TRAITS.to_string(), total_nll(&test_full, |t| Ok(t.params(&randomized.weights)))?);
            nll.insert(
                LINEAR_REGRESSION.to_string(),
                total_nll(&test_full, |t| Ok(baselines::regression_to_params(&regression, &t.traits)))?,
            );
            nll.insert(
                SPEAK.to_string(),
                total_nll(&test_full, |t| Ok(baselines::speak_rank_params(&regression, &t.traits, speak_d)))?,
            );
            Ok((TrialResult::new(k, nll, None)?, speak_d))
        })?;
        let trials: Vec<TrialResult> = outputs.iter().map(|o| o.0.clone()).collect();
        let groups: Vec<(String, Vec<f64>)> =
            COMPARED_MODELS.iter().map(|m| (m.to_string(), column(&trials, m, true))).collect();
        let comparison = compare_groups("full-attendance-loss-difference", &groups)?;
        let mut median_loss_diff: BTreeMap<String, f64> =
            groups.iter().map(|(m, v)| (m.clone(), stats::median(v))).collect();
        median_loss_diff.insert(SAME_TRAITS.to_string(), 0.0);
        Ok(ComparisonReport {
            traits: names.to_vec(),
            speak_d: outputs.iter().map(|o| o.1).collect(),
            trials,
            median_loss_diff,
            comparison,
        })
    }

    /// Curves on a [0, 1] axis scaled by the whole dataset's min and max,
    /// with non-varied traits at the dataset mean.
    fn curves(&mut self, names: &[String]) -> Result<CurveSet> {
        let columns = self.bundle.trait_columns(names)?;
        let all: Vec<TraitVector> =
            self.bundle.teams.iter().flat_map(|t| t.traits.iter().map(|v| v.select(&columns))).collect();
        let dataset = TraitNormalizer::fit(names.to_vec(), all.iter())?;
        let n = all.len() as f64;
        let base: Vec<f64> = (0..names.len())
            .map(|j| (all.iter().map(|v| v[j]).sum::<f64>() / n - dataset.min[j]) / (dataset.max[j] - dataset.min[j]))
            .collect();
        let models: Vec<CurveModel> = self
            .fit_set(names)?
            .iter()
            .map(|t| {
                let norm = &t.normalizer;
                let (offset, scale) = (0..names.len())
                    .map(|j| {
                        let span = norm.max[j] - norm.min[j];
                        ((dataset.min[j] - norm.min[j]) / span, (dataset.max[j] - dataset.min[j]) / span)
                    })
                    .unzip();
                CurveModel { weights: t.weights.clone(), offset, scale }
            })
            .collect();
        Ok(extract_curves(
            &models,
            names,
            &base,
            &linspace(0.0, 1.0, self.config.curve_points),
            &linspace(0.0, 1.0, self.config.surface_points),
            (0.0, 1.0),
        ))
    }
}

fn pool_of(bundle: &DatasetBundle, config: &Study3Config) -> Vec<String> {
    config.candidates.clone().unwrap_or_else(|| bundle.trait_names.clone())
}

/// Greedy trait selection over the sliding trials.
pub fn run_forward_selection(
    bundle: &DatasetBundle,
    pool: &[String],
    config: &Study3Config,
    seed: u64,
) -> Result<SelectionResult> {
    Runner::new(bundle, config, seed)?.forward_selection(pool)
}

/// Trait model on `traits` against the baselines, on full-attendance test
/// meetings.
pub fn run_baseline_comparison(
    bundle: &DatasetBundle,
    traits: &[String],
    config: &Study3Config,
    seed: u64,
) -> Result<ComparisonReport> {
    if traits.is_empty() {
        return Err(Error::InvalidConfig("baseline comparison needs at least one trait".into()));
    }
    Runner::new(bundle, config, seed)?.comparison(traits)
}

pub fn run_study3(bundle: &DatasetBundle, config: &Study3Config, seed: u64) -> Result<Study3Report> {
    let mut runner = Runner::new(bundle, config, seed)?;
    let pool = pool_of(bundle, config);
    let selection = runner.forward_selection(&pool)?;
    let (final_traits, final_is_fallback) = if selection.selected_traits.is_empty() {
        let best = selection
            .steps
            .iter()
            .filter(|s| s.stage == 1)
            .min_by(|a, b| a.median_loss_diff.total_cmp(&b.median_loss_diff))
            .expect("stage 1 evaluates every candidate");
        (best.trait_set.clone(), true)
    } else {
        (selection.selected_traits.clone(), false)
    };
    let comparison = runner.comparison(&final_traits)?;
    let curves = runner.curves(&final_traits)?;
    Ok(Study3Report {
        seed,
        config: config.clone(),
        team_order: runner.order.iter().map(|&i| bundle.teams[i].team_id.clone()).collect(),
        selection,
        final_traits,
        final_is_fallback,
        comparison,
        curves,
    })
}
