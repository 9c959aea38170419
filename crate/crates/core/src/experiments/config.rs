use serde::{Deserialize, Serialize};

use crate::baselines::SPEAK_D;
use crate::error::{Error, Result};
use crate::net::TrainConfig;
use crate::synthetic::TraitFunctionSpec;

/// Experiment scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Ten trials per condition.
    Desk,
    /// Twenty trials per condition.
    Paper,
}

impl Preset {
    fn n_trials(self) -> usize {
        match self {
            Preset::Desk => 10,
            Preset::Paper => 20,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

fn check_positive(pairs: &[(&str, usize)]) -> Result<()> {
    for (name, v) in pairs {
        if *v == 0 {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study1Config {
    pub n_trials: usize,
    pub n_train_teams: usize,
    pub n_val_teams: usize,
    pub n_test_teams: usize,
    pub team_size: usize,
    pub n_turns: usize,
    pub function: TraitFunctionSpec,
    /// Shared memory weight of the rank model; `null` calibrates it from the
    /// trained network on each trial.
    pub speak_d: Option<f64>,
    pub curve_points: usize,
    pub train: TrainConfig,
}

impl Study1Config {
    pub fn preset(preset: Preset) -> Self {
        Self {
            n_trials: preset.n_trials(),
            n_train_teams: 20,
            n_val_teams: 5,
            n_test_teams: 5,
            team_size: 5,
            n_turns: 600,
            function: TraitFunctionSpec::COMPLEX_UNCORRELATED,
            speak_d: Some(SPEAK_D),
            curve_points: 50,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("n_trials", self.n_trials),
            ("n_train_teams", self.n_train_teams),
            ("n_val_teams", self.n_val_teams),
            ("n_test_teams", self.n_test_teams),
            ("n_turns", self.n_turns),
            ("curve_points", self.curve_points),
        ])?;
        if self.team_size < 2 {
            return Err(Error::InvalidConfig("team_size must be at least 2".into()));
        }
        if let Some(d) = self.speak_d {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidConfig("speak_d must be positive".into()));
            }
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study2Config {
    pub n_trials: usize,
    pub n_train_teams: usize,
    pub n_val_teams: usize,
    pub n_test_teams: usize,
    pub team_size: usize,
    pub n_turns: usize,
    /// Training lengths for the conversation-length experiment.
    pub lengths: Vec<usize>,
    /// Also crop validation and test conversations to each length.
    pub crop_eval: bool,
    pub group_sizes: Vec<usize>,
    pub pool_size: usize,
    /// Trait functions compared in the length and group-size experiments.
    pub functions: Vec<TraitFunctionSpec>,
    pub train: TrainConfig,
}

impl Study2Config {
    pub fn preset(preset: Preset) -> Self {
        Self {
            n_trials: preset.n_trials(),
            n_train_teams: 20,
            n_val_teams: 5,
            n_test_teams: 5,
            team_size: 5,
            n_turns: 600,
            lengths: (1..=10).map(|i| 50 * i).collect(),
            crop_eval: false,
            group_sizes: vec![4, 6, 8, 10],
            pool_size: 120,
            functions: vec![TraitFunctionSpec::SIMPLE_UNCORRELATED, TraitFunctionSpec::COMPLEX_NEGATIVE],
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("n_trials", self.n_trials),
            ("n_train_teams", self.n_train_teams),
            ("n_val_teams", self.n_val_teams),
            ("n_test_teams", self.n_test_teams),
            ("n_turns", self.n_turns),
            ("pool_size", self.pool_size),
        ])?;
        if self.team_size < 2 || self.group_sizes.iter().any(|&s| s < 2) {
            return Err(Error::InvalidConfig("team sizes must be at least 2".into()));
        }
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return Err(Error::InvalidConfig("lengths must be nonempty and positive".into()));
        }
        if self.functions.is_empty() {
            return Err(Error::InvalidConfig("at least one trait function is required".into()));
        }
        self.train.validate()
    }
}

/// Which members' traits set the min-max scaling of network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraitScaling {
    /// Members of each trial's training teams.
    PerSplit,
    /// Every member in the dataset.
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study3Config {
    pub n_trials: usize,
    pub n_train_teams: usize,
    pub n_val_teams: usize,
    pub n_test_teams: usize,
    pub max_traits: usize,
    /// Candidate traits; `null` means every trait in the dataset.
    pub candidates: Option<Vec<String>>,
    pub scaling: TraitScaling,
    /// `null` calibrates the rank model's memory weight per trial.
    pub speak_d: Option<f64>,
    pub curve_points: usize,
    pub surface_points: usize,
    pub train: TrainConfig,
}

impl Study3Config {
    pub fn preset(_preset: Preset) -> Self {
        Self {
            n_trials: 20,
            n_train_teams: 12,
            n_val_teams: 4,
            n_test_teams: 4,
            max_traits: 3,
            candidates: None,
            scaling: TraitScaling::PerSplit,
            speak_d: None,
            curve_points: 50,
            surface_points: 21,
            train: TrainConfig::default(),
        }
    }

    pub fn n_teams(&self) -> usize {
        self.n_train_teams + self.n_val_teams + self.n_test_teams
    }

    pub fn validate(&self) -> Result<()> {
        check_positive(&[
            ("n_trials", self.n_trials),
            ("n_train_teams", self.n_train_teams),
            ("n_val_teams", self.n_val_teams),
            ("n_test_teams", self.n_test_teams),
            ("max_traits", self.max_traits),
            ("curve_points", self.curve_points),
            ("surface_points", self.surface_points),
        ])?;
        if self.n_trials > self.n_teams() {
            return Err(Error::InvalidConfig(format!("at most {} sliding trials", self.n_teams())));
        }
        if let Some(d) = self.speak_d {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidConfig("speak_d must be positive".into()));
            }
        }
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [Preset::Desk, Preset::Paper] {
            Study1Config::preset(p).validate().unwrap();
            Study2Config::preset(p).validate().unwrap();
            Study3Config::preset(p).validate().unwrap();
        }
        assert_eq!(Study1Config::preset(Preset::Paper).n_trials, 20);
        assert_eq!(Study2Config::preset(Preset::Desk).lengths, vec![50, 100, 150, 200, 250, 300, 350, 400, 450, 500]);
        assert!("huge".parse::<Preset>().is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = Study1Config::preset(Preset::Desk);
        c.speak_d = Some(-1.0);
        assert!(c.validate().is_err());
        let mut c = Study3Config::preset(Preset::Desk);
        c.n_trials = 21;
        assert!(c.validate().is_err());
    }
}
