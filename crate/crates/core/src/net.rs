//! Trait-to-parameter network and its maximum-likelihood fit.
//!
//! A single shared network maps each member's trait vector to a parameter dyad:
//! `n_traits -> 10 (tanh) -> 2`, with softplus on both outputs and a small floor
//! on `pi`. The network is fitted by full-batch Adam on the summed negative
//! log-likelihood of the training teams' conversations, keeping the weights
//! with the best validation loss.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{memory_factor, SpeakerParams, TeamConversation, PI_FLOOR};
use crate::seeds;

pub const HIDDEN_UNITS: usize = 10;

/// One member's trait values, in the order of the dataset's trait schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitVector(pub Vec<f64>);

impl TraitVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Keeps only the listed columns, in the listed order.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self(columns.iter().map(|&c| self.0[c]).collect())
    }
}

impl std::ops::Deref for TraitVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Min-max scaling fitted on a training split. Values outside the training
/// range extrapolate linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitNormalizer {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl TraitNormalizer {
    pub fn new(names: Vec<String>, min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if names.len() != min.len() || names.len() != max.len() {
            return Err(Error::SchemaMismatch("normalizer bounds do not match trait names".into()));
        }
        for ((name, lo), hi) in names.iter().zip(&min).zip(&max) {
            if !(hi > lo) {
                return Err(Error::DegenerateTrait(name.clone()));
            }
        }
        Ok(Self { names, min, max })
    }

    pub fn fit<'a, I>(names: Vec<String>, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TraitVector>,
    {
        let k = names.len();
        let mut min = vec![f64::INFINITY; k];
        let mut max = vec![f64::NEG_INFINITY; k];
        for v in samples {
            if v.len() != k {
                return Err(Error::SchemaMismatch(format!("expected {k} traits, got {}", v.len())));
            }
            for j in 0..k {
                min[j] = min[j].min(v[j]);
                max[j] = max[j].max(v[j]);
            }
        }
        Self::new(names, min, max)
    }

    pub fn normalize(&self, raw: &TraitVector) -> Result<TraitVector> {
        if raw.len() != self.names.len() {
            return Err(Error::SchemaMismatch(format!(
                "normalizer has {} traits, vector has {}",
                self.names.len(),
                raw.len()
            )));
        }
        Ok(TraitVector(
            raw.iter()
                .zip(self.min.iter().zip(&self.max))
                .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo))
                .collect(),
        ))
    }

    pub fn denormalize(&self, unit: &[f64]) -> TraitVector {
        TraitVector(
            unit.iter()
                .zip(self.min.iter().zip(&self.max))
                .map(|(&u, (&lo, &hi))| lo + u * (hi - lo))
                .collect(),
        )
    }
}

pub fn normalize_traits(raw: &[TraitVector], normalizer: &TraitNormalizer) -> Result<Vec<TraitVector>> {
    raw.iter().map(|v| normalizer.normalize(v)).collect()
}

/// How the two output units become a parameter dyad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    /// Individual `pi` and `d`.
    Full,
    /// Individual `pi`, `d` fixed at zero.
    NoMemory,
    /// One learned `pi` shared by everyone, individual `d`.
    SharedPi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub n_inputs: usize,
    pub head: OutputHead,
    /// `HIDDEN_UNITS x n_inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `2 x HIDDEN_UNITS`, row-major; row 0 feeds `pi`, row 1 feeds `d`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Pre-activation of the shared `pi`, used only by [`OutputHead::SharedPi`].
    pub shared_pi: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Activations {
    hidden: [f64; HIDDEN_UNITS],
    pre_pi: f64,
    pre_d: f64,
}

impl NetworkWeights {
    pub fn zeros(n_inputs: usize, head: OutputHead) -> Self {
        Self {
            n_inputs,
            head,
            w1: vec![0.0; HIDDEN_UNITS * n_inputs],
            b1: vec![0.0; HIDDEN_UNITS],
            w2: vec![0.0; 2 * HIDDEN_UNITS],
            b2: vec![0.0; 2],
            shared_pi: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(n_inputs: usize, head: OutputHead, seed: u64) -> Self {
        let mut w = Self::zeros(n_inputs, head);
        let mut rng = seeds::rng(seed);
        let a1 = (6.0 / (n_inputs + HIDDEN_UNITS) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-a1, a1);
        for x in &mut w.w1 {
            *x = u1.sample(&mut rng);
        }
        let a2 = (6.0 / (HIDDEN_UNITS + 2) as f64).sqrt();
        let u2 = Uniform::new_inclusive(-a2, a2);
        for x in &mut w.w2 {
            *x = u2.sample(&mut rng);
        }
        w
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + 1
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).chain(std::iter::once(&self.shared_pi))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .chain(std::iter::once(&mut self.shared_pi))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|x| x.is_finite())
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let n = self.n_inputs;
        let mut hidden = [0.0; HIDDEN_UNITS];
        for (k, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[k * n..(k + 1) * n];
            let z: f64 = self.b1[k] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            *h = z.tanh();
        }
        let out = |r: usize| {
            self.b2[r]
                + self.w2[r * HIDDEN_UNITS..(r + 1) * HIDDEN_UNITS]
                    .iter()
                    .zip(&hidden)
                    .map(|(w, h)| w * h)
                    .sum::<f64>()
        };
        Activations { hidden, pre_pi: out(0), pre_d: out(1) }
    }

    fn params_from(&self, a: &Activations) -> SpeakerParams {
        let pi = match self.head {
            OutputHead::SharedPi => softplus(self.shared_pi),
            _ => softplus(a.pre_pi),
        } + PI_FLOOR;
        let d = match self.head {
            OutputHead::NoMemory => 0.0,
            _ => softplus(a.pre_d),
        };
        SpeakerParams { pi, d }
    }

    pub fn forward(&self, traits: &[f64]) -> SpeakerParams {
        debug_assert_eq!(traits.len(), self.n_inputs);
        self.params_from(&self.activations(traits))
    }

    /// Accumulates into `grad` the gradient of a loss whose derivatives with
    /// respect to this member's `pi` and `d` are `g_pi` and `g_d`.
    fn backward(&self, x: &[f64], a: &Activations, g_pi: f64, g_d: f64, grad: &mut NetworkWeights) {
        let n = self.n_inputs;
        let du = match self.head {
            OutputHead::SharedPi => {
                grad.shared_pi += g_pi * sigmoid(self.shared_pi);
                0.0
            }
            _ => g_pi * sigmoid(a.pre_pi),
        };
        let dv = match self.head {
            OutputHead::NoMemory => 0.0,
            _ => g_d * sigmoid(a.pre_d),
        };
        grad.b2[0] += du;
        grad.b2[1] += dv;
        for k in 0..HIDDEN_UNITS {
            let h = a.hidden[k];
            grad.w2[k] += du * h;
            grad.w2[HIDDEN_UNITS + k] += dv * h;
            let dh = du * self.w2[k] + dv * self.w2[HIDDEN_UNITS + k];
            let dz = dh * (1.0 - h * h);
            grad.b1[k] += dz;
            for (g, xi) in grad.w1[k * n..(k + 1) * n].iter_mut().zip(x) {
                *g += dz * xi;
            }
        }
    }
}

/// One team ready for fitting: (normalised) trait vectors plus conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamData {
    pub traits: Vec<TraitVector>,
    pub conversation: TeamConversation,
}

impl TeamData {
    pub fn new(traits: Vec<TraitVector>, conversation: TeamConversation) -> Result<Self> {
        if traits.len() != conversation.n_members() {
            return Err(Error::SchemaMismatch(format!(
                "{} trait vectors for {} members",
                traits.len(),
                conversation.n_members()
            )));
        }
        Ok(Self { traits, conversation })
    }

    pub fn n_traits(&self) -> usize {
        self.traits.first().map_or(0, TraitVector::len)
    }

    pub fn map_traits(&self, f: impl Fn(&TraitVector) -> TraitVector) -> Self {
        Self { traits: self.traits.iter().map(f).collect(), conversation: self.conversation.clone() }
    }

    pub fn params(&self, weights: &NetworkWeights) -> Vec<SpeakerParams> {
        self.traits.iter().map(|t| weights.forward(t)).collect()
    }
}

/// Meeting with the memory factor of every member at every turn precomputed.
/// `memory[t * n + j]` is negative when member `j` cannot speak at turn `t`.
#[derive(Debug, Clone)]
struct CompiledMeeting {
    n: usize,
    speakers: Vec<usize>,
    memory: Vec<f64>,
}

impl CompiledMeeting {
    fn compile(meeting: &crate::model::Meeting, n: usize) -> Self {
        let turns = meeting.turns();
        let mut memory = vec![0.0; turns.len() * n];
        let mut last: Vec<Option<usize>> = vec![None; n];
        for (idx, &speaker) in turns.iter().enumerate() {
            let t = idx + 1;
            let row = &mut memory[idx * n..(idx + 1) * n];
            for (j, m) in row.iter_mut().enumerate() {
                *m = if !meeting.attendance().is_present(j) {
                    -1.0
                } else {
                    match last[j] {
                        Some(lt) if lt + 1 == t => -1.0,
                        Some(lt) => memory_factor(t - lt),
                        None => 0.0,
                    }
                };
            }
            last[speaker] = Some(t);
        }
        Self { n, speakers: turns.to_vec(), memory }
    }

    /// Adds this meeting's loss to the return value and its derivatives with
    /// respect to each member's `pi` and `d` into `g_pi`, `g_d`.
    fn accumulate(
        &self,
        params: &[SpeakerParams],
        grads: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<f64> {
        let n = self.n;
        let mut loss = 0.0;
        let mut grads = grads;
        for (idx, &i) in self.speakers.iter().enumerate() {
            let row = &self.memory[idx * n..(idx + 1) * n];
            let mut total = 0.0;
            for (p, &m) in params.iter().zip(row) {
                if m >= 0.0 {
                    total += p.pi + p.d * m;
                }
            }
            let mi = row[i];
            let li = if mi >= 0.0 { params[i].pi + params[i].d * mi } else { 0.0 };
            if !(li > 0.0 && total > 0.0) {
                return Err(Error::ZeroProbabilityEvent { turn: idx + 1, speaker: i });
            }
            loss += total.ln() - li.ln();
            if let Some((g_pi, g_d)) = grads.as_mut() {
                let inv_total = 1.0 / total;
                for (j, &m) in row.iter().enumerate() {
                    if m >= 0.0 {
                        g_pi[j] += inv_total;
                        g_d[j] += m * inv_total;
                    }
                }
                let inv_li = 1.0 / li;
                g_pi[i] -= inv_li;
                g_d[i] -= mi * inv_li;
            }
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone)]
struct CompiledTeam {
    inputs: Vec<Vec<f64>>,
    meetings: Vec<CompiledMeeting>,
}

/// Dataset with every meeting's memory table precomputed, for repeated
/// loss/gradient evaluation during training.
#[derive(Debug, Clone)]
pub struct CompiledDataset {
    teams: Vec<CompiledTeam>,
    n_inputs: Option<usize>,
}

impl CompiledDataset {
    pub fn new(teams: &[TeamData]) -> Result<Self> {
        let mut n_inputs = None;
        let mut compiled = Vec::with_capacity(teams.len());
        for team in teams {
            for v in &team.traits {
                match n_inputs {
                    None => n_inputs = Some(v.len()),
                    Some(k) if k != v.len() => {
                        return Err(Error::SchemaMismatch(format!("mixed trait widths {k} and {}", v.len())))
                    }
                    _ => {}
                }
            }
            let n = team.conversation.n_members();
            compiled.push(CompiledTeam {
                inputs: team.traits.iter().map(|t| t.0.clone()).collect(),
                meetings: team.conversation.meetings().iter().map(|m| CompiledMeeting::compile(m, n)).collect(),
            });
        }
        Ok(Self { teams: compiled, n_inputs })
    }

    fn check(&self, weights: &NetworkWeights) -> Result<()> {
        match self.n_inputs {
            Some(k) if k != weights.n_inputs => Err(Error::SchemaMismatch(format!(
                "network expects {} traits, data has {k}",
                weights.n_inputs
            ))),
            _ => Ok(()),
        }
    }

    pub fn nll(&self, weights: &NetworkWeights) -> Result<f64> {
        self.check(weights)?;
        let mut total = 0.0;
        for team in &self.teams {
            let params: Vec<SpeakerParams> = team.inputs.iter().map(|x| weights.forward(x)).collect();
            for m in &team.meetings {
                total += m.accumulate(&params, None)?;
            }
        }
        Ok(total)
    }

    pub fn nll_and_gradient(&self, weights: &NetworkWeights) -> Result<(f64, NetworkWeights)> {
        self.check(weights)?;
        let mut grad = NetworkWeights::zeros(weights.n_inputs, weights.head);
        let mut total = 0.0;
        for team in &self.teams {
            let acts: Vec<Activations> = team.inputs.iter().map(|x| weights.activations(x)).collect();
            let params: Vec<SpeakerParams> = acts.iter().map(|a| weights.params_from(a)).collect();
            let n = params.len();
            let mut g_pi = vec![0.0; n];
            let mut g_d = vec![0.0; n];
            for m in &team.meetings {
                total += m.accumulate(&params, Some((&mut g_pi, &mut g_d)))?;
            }
            for j in 0..n {
                weights.backward(&team.inputs[j], &acts[j], g_pi[j], g_d[j], &mut grad);
            }
        }
        Ok((total, grad))
    }
}

/// Summed negative log-likelihood of every team's conversation under the
/// parameters the network assigns to its members.
pub fn dataset_nll(weights: &NetworkWeights, teams: &[TeamData]) -> Result<f64> {
    CompiledDataset::new(teams)?.nll(weights)
}

/// Exact gradient of [`dataset_nll`] with respect to every weight.
pub fn gradient(weights: &NetworkWeights, teams: &[TeamData]) -> Result<NetworkWeights> {
    Ok(CompiledDataset::new(teams)?.nll_and_gradient(weights)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, max_epochs: 2000, patience: 100, seed: 0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidConfig("patience cannot exceed max_epochs".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("Adam moments need beta in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub weights: NetworkWeights,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub history: Vec<EpochRecord>,
}

/// Fits a network on `train`, selecting the epoch with the lowest validation
/// loss. Each epoch records both losses at the current weights, then takes
/// one Adam step. Training stops after `patience` epochs without a strict
/// improvement in validation loss, or at `max_epochs`.
pub fn train(train: &[TeamData], val: &[TeamData], head: OutputHead, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("training and validation splits must be nonempty".into()));
    }
    let n_inputs = train[0].n_traits();
    if n_inputs == 0 {
        return Err(Error::SchemaMismatch("teams carry no traits".into()));
    }
    let train_set = CompiledDataset::new(train)?;
    let val_set = CompiledDataset::new(val)?;
    let mut weights = NetworkWeights::init(n_inputs, head, config.seed);
    train_set.check(&weights)?;
    val_set.check(&weights)?;

    let n_params = weights.n_params();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut best = weights.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 0..config.max_epochs {
        let (train_nll, grad) = train_set.nll_and_gradient(&weights)?;
        let val_nll = val_set.nll(&weights)?;
        if !train_nll.is_finite() || !val_nll.is_finite() || !grad.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(EpochRecord { epoch, train_nll, val_nll });
        if val_nll < best_val {
            best_val = val_nll;
            best = weights.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }

        let step = (epoch + 1) as i32;
        let c1 = 1.0 - config.beta1.powi(step);
        let c2 = 1.0 - config.beta2.powi(step);
        for (((w, g), mi), vi) in weights.params_mut().zip(grad.params()).zip(&mut m).zip(&mut v) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * g;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * g * g;
            *w -= config.learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + config.epsilon);
        }
    }
    Ok(TrainOutcome { weights: best, best_epoch, best_val_nll: best_val, history })
}
