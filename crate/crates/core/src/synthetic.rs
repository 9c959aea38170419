//! Synthetic trait/conversation generators.

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetBundle, MeetingRecord, TeamRecord};
use crate::error::{Error, Result};
use crate::model::{sample_conversation, AttendanceMask, SpeakerParams, TeamConversation};
use crate::net::{TeamData, TraitVector};
use crate::seeds;

pub const TRAIT_LOW: f64 = 0.1;
pub const TRAIT_HIGH: f64 = 1.0;
pub const SYNTHETIC_TRAITS: [&str; 2] = ["a", "b"];
/// Baseline propensity given to every member of a shared-`pi` dataset.
pub const SAME_PI_VALUE: f64 = 0.1;

pub fn sample_traits_with<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<TraitVector> {
    let u = Uniform::new_inclusive(TRAIT_LOW, TRAIT_HIGH);
    (0..n).map(|_| TraitVector(vec![u.sample(rng), u.sample(rng)])).collect()
}

/// `n` members with two traits each, drawn i.i.d. from Uniform[0.1, 1].
pub fn sample_traits(n: usize, seed: u64) -> Vec<TraitVector> {
    sample_traits_with(n, &mut seeds::rng(seed))
}

pub fn f_simple(x: f64) -> f64 {
    x
}

pub fn g_simple(x: f64) -> f64 {
    5.0 / 3.0 * (5.0 * x + 1.0)
}

pub fn f_complex(x: f64) -> f64 {
    x.sqrt()
}

pub fn g_complex(x: f64) -> f64 {
    let e2 = (-2.0f64).exp();
    7.5 * ((-2.0 * x).exp() / ((-0.2f64).exp() - e2) - e2 + 1.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Complexity {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correlation {
    Uncorrelated,
    Positive,
    Negative,
}

/// Which pair of trait functions generates `(pi, d)` from `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitFunctionSpec {
    pub complexity: Complexity,
    pub correlation: Correlation,
}

impl TraitFunctionSpec {
    pub const SIMPLE_UNCORRELATED: Self = Self { complexity: Complexity::Simple, correlation: Correlation::Uncorrelated };
    pub const COMPLEX_UNCORRELATED: Self =
        Self { complexity: Complexity::Complex, correlation: Correlation::Uncorrelated };
    pub const COMPLEX_NEGATIVE: Self = Self { complexity: Complexity::Complex, correlation: Correlation::Negative };

    /// Conditions are numbered 1-6: simple then complex, each as
    /// uncorrelated, positive, negative.
    pub fn condition(k: usize) -> Option<Self> {
        let complexity = match k {
            1..=3 => Complexity::Simple,
            4..=6 => Complexity::Complex,
            _ => return None,
        };
        let correlation = match (k - 1) % 3 {
            0 => Correlation::Uncorrelated,
            1 => Correlation::Positive,
            _ => Correlation::Negative,
        };
        Some(Self { complexity, correlation })
    }

    pub fn all() -> Vec<Self> {
        (1..=6).filter_map(Self::condition).collect()
    }

    pub fn label(&self) -> String {
        let c = match self.complexity {
            Complexity::Simple => "simple",
            Complexity::Complex => "complex",
        };
        let r = match self.correlation {
            Correlation::Uncorrelated => "uncorrelated",
            Correlation::Positive => "positive",
            Correlation::Negative => "negative",
        };
        format!("{c}-{r}")
    }
}

pub fn traits_to_params(a: f64, b: f64, spec: TraitFunctionSpec) -> SpeakerParams {
    let (f, g): (fn(f64) -> f64, fn(f64) -> f64) = match spec.complexity {
        Complexity::Simple => (f_simple, g_simple),
        Complexity::Complex => (f_complex, g_complex),
    };
    let mean = 0.5 * (a + b);
    let (pi, d) = match spec.correlation {
        Correlation::Uncorrelated => (f(a), g(b)),
        Correlation::Positive => (f(mean), g(mean)),
        Correlation::Negative => (f(mean), g(1.1 - mean)),
    };
    SpeakerParams { pi, d }
}

/// How ground-truth parameters are altered before conversations are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataType {
    Memory,
    NoMemory,
    SamePi,
}

impl DataType {
    pub fn apply(&self, p: SpeakerParams) -> SpeakerParams {
        match self {
            DataType::Memory => p,
            DataType::NoMemory => SpeakerParams { pi: p.pi, d: 0.0 },
            DataType::SamePi => SpeakerParams { pi: SAME_PI_VALUE, d: p.d },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub n_train_teams: usize,
    pub n_val_teams: usize,
    pub n_test_teams: usize,
    pub team_size: usize,
    pub n_turns: usize,
    pub function: TraitFunctionSpec,
    pub data_type: DataType,
    pub base_seed: u64,
    pub trial_index: usize,
}

impl TrialSpec {
    /// 20/5/5 teams of five, one 600-turn conversation each, complex
    /// uncorrelated functions.
    pub fn study1(base_seed: u64, trial_index: usize) -> Self {
        Self {
            n_train_teams: 20,
            n_val_teams: 5,
            n_test_teams: 5,
            team_size: 5,
            n_turns: 600,
            function: TraitFunctionSpec::COMPLEX_UNCORRELATED,
            data_type: DataType::Memory,
            base_seed,
            trial_index,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train_teams == 0 || self.n_val_teams == 0 || self.n_test_teams == 0 || self.n_turns == 0 {
            return Err(Error::InvalidConfig("team and turn counts must be positive".into()));
        }
        if self.team_size < 2 {
            return Err(Error::InvalidConfig("teams need at least two members".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTeam {
    pub traits: Vec<TraitVector>,
    /// Parameters that generated the conversation.
    pub params: Vec<SpeakerParams>,
    pub conversation: TeamConversation,
}

impl SyntheticTeam {
    pub fn team_data(&self) -> TeamData {
        TeamData { traits: self.traits.clone(), conversation: self.conversation.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrial {
    pub train: Vec<SyntheticTeam>,
    pub val: Vec<SyntheticTeam>,
    pub test: Vec<SyntheticTeam>,
}

pub fn team_data(teams: &[SyntheticTeam]) -> Vec<TeamData> {
    teams.iter().map(SyntheticTeam::team_data).collect()
}

/// Simulates one single-meeting conversation per team. Team `k` draws its
/// turns from `seeds::child(conv_seed, k)`.
pub fn simulate_teams(
    members: Vec<Vec<TraitVector>>,
    function: TraitFunctionSpec,
    data_type: DataType,
    n_turns: usize,
    conv_seed: u64,
) -> Result<Vec<SyntheticTeam>> {
    members
        .into_iter()
        .enumerate()
        .map(|(k, traits)| {
            let params: Vec<SpeakerParams> =
                traits.iter().map(|t| data_type.apply(traits_to_params(t[0], t[1], function))).collect();
            let n = traits.len();
            let meeting = sample_conversation(&params, n_turns, &AttendanceMask::all(n), seeds::child(conv_seed, k as u64))?;
            let ids = (0..n).map(|i| format!("m{}", i + 1)).collect();
            Ok(SyntheticTeam { traits, params, conversation: TeamConversation::new(ids, vec![meeting])? })
        })
        .collect()
}

fn chunk(traits: Vec<TraitVector>, size: usize) -> Vec<Vec<TraitVector>> {
    traits.chunks(size).map(<[TraitVector]>::to_vec).collect()
}

/// One data trial. Training members and conversations depend on
/// `trial_index`; validation and test sets depend only on `base_seed`.
pub fn build_trial(spec: &TrialSpec) -> Result<SyntheticTrial> {
    spec.validate()?;
    let base = spec.base_seed;
    let k = spec.trial_index as u64;
    let split = |n_teams: usize, trait_seed: u64, conv_seed: u64| {
        let traits = sample_traits(n_teams * spec.team_size, trait_seed);
        simulate_teams(chunk(traits, spec.team_size), spec.function, spec.data_type, spec.n_turns, conv_seed)
    };
    Ok(SyntheticTrial {
        train: split(
            spec.n_train_teams,
            seeds::child(seeds::named(base, "train-traits"), k),
            seeds::child(seeds::named(base, "train-conv"), k),
        )?,
        val: split(spec.n_val_teams, seeds::named(base, "val-traits"), seeds::named(base, "val-conv"))?,
        test: split(spec.n_test_teams, seeds::named(base, "test-traits"), seeds::named(base, "test-conv"))?,
    })
}

pub fn crop_teams(teams: &[SyntheticTeam], length: usize) -> Result<Vec<SyntheticTeam>> {
    teams
        .iter()
        .map(|t| {
            let meetings = t.conversation.meetings().iter().map(|m| m.truncated(length)).collect::<Result<Vec<_>>>()?;
            Ok(SyntheticTeam { traits: t.traits.clone(), params: t.params.clone(), conversation: t.conversation.with_meetings(meetings)? })
        })
        .collect()
}

/// Every meeting of every split truncated to its first `length` turns.
pub fn crop_conversations(trial: &SyntheticTrial, length: usize) -> Result<SyntheticTrial> {
    Ok(SyntheticTrial {
        train: crop_teams(&trial.train, length)?,
        val: crop_teams(&trial.val, length)?,
        test: crop_teams(&trial.test, length)?,
    })
}

/// Random assignment of a member pool into teams of `team_size`, as lists of
/// pool indices.
pub fn partition_group_size(pool: &[TraitVector], team_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if team_size == 0 || pool.is_empty() || !pool.len().is_multiple_of(team_size) {
        return Err(Error::IndivisiblePool { pool: pool.len(), team_size });
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut seeds::rng(seed));
    Ok(order.chunks(team_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSizeSpec {
    pub pool_size: usize,
    pub team_size: usize,
    pub n_val_teams: usize,
    pub n_test_teams: usize,
    pub n_turns: usize,
    pub function: TraitFunctionSpec,
    pub base_seed: u64,
    pub trial_index: usize,
}

/// The member pool shared by every group-size trial of one experiment.
pub fn group_size_pool(base_seed: u64, pool_size: usize) -> Vec<TraitVector> {
    sample_traits(pool_size, seeds::named(base_seed, "pool"))
}

/// Training teams come from reshuffling the fixed pool; validation and test
/// teams are fresh members of the same team size.
pub fn build_group_size_trial(spec: &GroupSizeSpec) -> Result<SyntheticTrial> {
    let base = spec.base_seed;
    let s = spec.team_size;
    let k = spec.trial_index as u64;
    let pool = group_size_pool(base, spec.pool_size);
    let assignment = partition_group_size(&pool, s, seeds::child(seeds::named(base, &format!("assign-{s}")), k))?;
    let members: Vec<Vec<TraitVector>> =
        assignment.iter().map(|team| team.iter().map(|&i| pool[i].clone()).collect()).collect();
    let dt = DataType::Memory;
    let train = simulate_teams(members, spec.function, dt, spec.n_turns, seeds::child(seeds::named(base, &format!("gs{s}-train-conv")), k))?;
    let fresh = |label: &str, n_teams: usize| {
        let traits = sample_traits(n_teams * s, seeds::named(base, &format!("gs{s}-{label}-traits")));
        simulate_teams(chunk(traits, s), spec.function, dt, spec.n_turns, seeds::named(base, &format!("gs{s}-{label}-conv")))
    };
    Ok(SyntheticTrial { train, val: fresh("val", spec.n_val_teams)?, test: fresh("test", spec.n_test_teams)? })
}

/// Exports synthetic teams in the on-disk dataset format.
pub fn to_bundle(teams: &[SyntheticTeam], team_prefix: &str) -> DatasetBundle {
    DatasetBundle {
        trait_names: SYNTHETIC_TRAITS.iter().map(|s| s.to_string()).collect(),
        teams: teams
            .iter()
            .enumerate()
            .map(|(k, t)| TeamRecord {
                team_id: format!("{team_prefix}{:02}", k + 1),
                member_ids: t.conversation.member_ids().to_vec(),
                traits: t.traits.clone(),
                meetings: t
                    .conversation
                    .meetings()
                    .iter()
                    .enumerate()
                    .map(|(j, m)| MeetingRecord {
                        meeting_id: format!("s{}", j + 1),
                        speakers: m.turns().to_vec(),
                        present: m.attendance().as_slice().to_vec(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Shape of a multi-meeting team dataset with questionnaire-style traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub n_teams: usize,
    pub min_team_size: usize,
    pub max_team_size: usize,
    pub min_meetings: usize,
    pub max_meetings: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Chance that a meeting after the first misses one member.
    pub absence_rate: f64,
    /// Trait names; the first one drives `pi`, the rest are noise.
    pub trait_names: Vec<String>,
    /// Memory weight shared by every member.
    pub memory_weight: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_teams: 20,
            min_team_size: 4,
            max_team_size: 6,
            min_meetings: 3,
            max_meetings: 6,
            min_turns: 60,
            max_turns: 140,
            absence_rate: 0.25,
            trait_names: ["extraversion", "agreeableness", "conscientiousness", "openness"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            memory_weight: 3.0,
            seed: 20_240_501,
        }
    }
}

/// Baseline propensity implied by a fixture member's driving trait (1-5 scale).
pub fn fixture_pi(driver: f64) -> f64 {
    0.1 + 0.9 * ((driver - 1.0) / 4.0).clamp(0.0, 1.0)
}

/// Multi-meeting dataset with absences in which only the first trait matters.
/// Traits are on a 1-5 scale in steps of 0.1.
pub fn team_fixture(spec: &FixtureSpec) -> Result<DatasetBundle> {
    if spec.trait_names.is_empty() || spec.min_team_size < 3 || spec.min_team_size > spec.max_team_size {
        return Err(Error::InvalidConfig("fixture needs traits and teams of at least 3".into()));
    }
    let mut rng = seeds::rng(spec.seed);
    let likert = Uniform::new_inclusive(10, 50);
    let mut teams = Vec::with_capacity(spec.n_teams);
    for t in 0..spec.n_teams {
        let n = rng.gen_range(spec.min_team_size..=spec.max_team_size);
        let traits: Vec<TraitVector> = (0..n)
            .map(|_| TraitVector(spec.trait_names.iter().map(|_| f64::from(likert.sample(&mut rng)) / 10.0).collect()))
            .collect();
        let params: Vec<SpeakerParams> =
            traits.iter().map(|v| SpeakerParams { pi: fixture_pi(v[0]), d: spec.memory_weight }).collect();
        let n_meetings = rng.gen_range(spec.min_meetings..=spec.max_meetings);
        let mut meetings = Vec::with_capacity(n_meetings);
        for m in 0..n_meetings {
            let mut present = vec![true; n];
            if m > 0 && rng.gen_bool(spec.absence_rate) {
                present[rng.gen_range(0..n)] = false;
            }
            let n_turns = rng.gen_range(spec.min_turns..=spec.max_turns);
            let meeting = sample_conversation(&params, n_turns, &AttendanceMask::new(present.clone())?, rng.gen())?;
            meetings.push(MeetingRecord { meeting_id: format!("M{:02}", m + 1), speakers: meeting.turns().to_vec(), present });
        }
        teams.push(TeamRecord {
            team_id: format!("T{:02}", t + 1),
            member_ids: (0..n).map(|i| format!("T{:02}-P{}", t + 1, i + 1)).collect(),
            traits,
            meetings,
        });
    }
    let bundle = DatasetBundle { trait_names: spec.trait_names.clone(), teams };
    bundle.validate()?;
    Ok(bundle)
}
