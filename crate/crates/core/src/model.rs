//! The two-parameter speaker model.
//!
//! Each member carries a baseline propensity `pi` and a memory weight `d`. At
//! turn `t` the member's likelihood of taking the floor is zero if they spoke
//! on turn `t - 1`, otherwise `pi + d * exp(-0.5 * (t - t_last))`. Members who
//! have not yet spoken in the current meeting have no memory term. Likelihoods
//! of present members are normalised into the next-speaker distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Decay rate of the memory term per elapsed turn.
pub const MEMORY_DECAY: f64 = 0.5;

/// Lower bound applied to externally supplied baseline propensities.
pub const PI_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerParams {
    pub pi: f64,
    pub d: f64,
}

impl SpeakerParams {
    pub fn new(pi: f64, d: f64) -> Result<Self> {
        if !(pi.is_finite() && pi > 0.0) {
            return Err(Error::InvalidParams(format!("pi must be positive and finite, got {pi}")));
        }
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::InvalidParams(format!("d must be nonnegative and finite, got {d}")));
        }
        Ok(Self { pi, d })
    }

    /// Builds parameters from possibly out-of-range values, flooring `pi` at
    /// [`PI_FLOOR`] and `d` at zero.
    pub fn clamped(pi: f64, d: f64) -> Self {
        Self { pi: pi.max(PI_FLOOR), d: d.max(0.0) }
    }

    /// Overall speaking likelihood used for trait-relationship plots.
    pub fn peak_likelihood(&self) -> f64 {
        peak_likelihood(*self)
    }
}

/// `pi + d * exp(-0.5)`, the conventional "highest post-turn likelihood"
/// summary. Note this uses a single decay step, not the two-turn gap that
/// [`speaking_likelihood`] would apply at `t_last + 2`.
pub fn peak_likelihood(params: SpeakerParams) -> f64 {
    params.pi + params.d * (-MEMORY_DECAY).exp()
}

/// Memory factor `exp(-decay * gap)`.
pub fn memory_factor(gap: usize) -> f64 {
    (-MEMORY_DECAY * gap as f64).exp()
}

/// Who spoke last and when, within one meeting. Turns are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryState {
    last_turn: Vec<Option<usize>>,
    current_turn: usize,
}

impl HistoryState {
    /// State at the first turn of a meeting: nobody has spoken.
    pub fn new(n_members: usize) -> Self {
        Self { last_turn: vec![None; n_members], current_turn: 1 }
    }

    pub fn from_parts(last_turn: Vec<Option<usize>>, current_turn: usize) -> Result<Self> {
        if current_turn == 0 {
            return Err(Error::InvalidHistory("turns are numbered from 1".into()));
        }
        let mut previous = 0;
        for (i, last) in last_turn.iter().enumerate() {
            if let Some(t) = *last {
                if t == 0 || t >= current_turn {
                    return Err(Error::InvalidHistory(format!(
                        "member {i} last spoke at turn {t}, current turn is {current_turn}"
                    )));
                }
                if t + 1 == current_turn {
                    previous += 1;
                }
            }
        }
        if previous > 1 {
            return Err(Error::InvalidHistory("more than one member spoke on the previous turn".into()));
        }
        Ok(Self { last_turn, current_turn })
    }

    pub fn current_turn(&self) -> usize {
        self.current_turn
    }

    pub fn last_turn(&self, member: usize) -> Option<usize> {
        self.last_turn[member]
    }

    pub fn n_members(&self) -> usize {
        self.last_turn.len()
    }

    /// The member who spoke on the previous turn, if any.
    pub fn last_speaker(&self) -> Option<usize> {
        let prev = self.current_turn.checked_sub(1)?;
        self.last_turn.iter().position(|&t| t == Some(prev))
    }

    /// Records `speaker` on the current turn and advances to the next one.
    pub fn record(&mut self, speaker: usize) {
        self.last_turn[speaker] = Some(self.current_turn);
        self.current_turn += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendanceMask {
    present: Vec<bool>,
}

impl AttendanceMask {
    pub fn new(present: Vec<bool>) -> Result<Self> {
        let n = present.iter().filter(|&&p| p).count();
        if n < 2 {
            return Err(Error::InvalidMeeting(format!("need at least 2 members present, got {n}")));
        }
        Ok(Self { present })
    }

    pub fn all(n_members: usize) -> Self {
        Self { present: vec![true; n_members] }
    }

    pub fn is_present(&self, member: usize) -> bool {
        self.present.get(member).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn n_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    pub fn is_full(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.present
    }
}

/// One sitting: the ordered speakers (member indices) and who attended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meeting {
    turns: Vec<usize>,
    attendance: AttendanceMask,
}

impl Meeting {
    pub fn new(turns: Vec<usize>, attendance: AttendanceMask) -> Result<Self> {
        for (t, &s) in turns.iter().enumerate() {
            if !attendance.is_present(s) {
                return Err(Error::InvalidMeeting(format!(
                    "member {s} speaks at turn {} but is not present",
                    t + 1
                )));
            }
            if t > 0 && turns[t - 1] == s {
                return Err(Error::InvalidMeeting(format!(
                    "member {s} speaks on consecutive turns {} and {}",
                    t,
                    t + 1
                )));
            }
        }
        Ok(Self { turns, attendance })
    }

    pub fn turns(&self) -> &[usize] {
        &self.turns
    }

    pub fn attendance(&self) -> &AttendanceMask {
        &self.attendance
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// The first `len` turns of this meeting.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len > self.turns.len() {
            return Err(Error::LengthExceeded { requested: len, available: self.turns.len() });
        }
        Ok(Self { turns: self.turns[..len].to_vec(), attendance: self.attendance.clone() })
    }
}

/// All meetings of one team.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamConversation {
    member_ids: Vec<String>,
    meetings: Vec<Meeting>,
}

impl TeamConversation {
    pub fn new(member_ids: Vec<String>, meetings: Vec<Meeting>) -> Result<Self> {
        let n = member_ids.len();
        if n < 2 {
            return Err(Error::InvalidMeeting(format!("team needs at least 2 members, got {n}")));
        }
        for (m, meeting) in meetings.iter().enumerate() {
            if meeting.attendance().len() != n {
                return Err(Error::InvalidMeeting(format!(
                    "meeting {m} attendance covers {} members, team has {n}",
                    meeting.attendance().len()
                )));
            }
            if let Some(&s) = meeting.turns().iter().find(|&&s| s >= n) {
                return Err(Error::InvalidMeeting(format!("meeting {m} references member {s} of {n}")));
            }
        }
        Ok(Self { member_ids, meetings })
    }

    pub fn member_ids(&self) -> &[String] {
        &self.member_ids
    }

    pub fn n_members(&self) -> usize {
        self.member_ids.len()
    }

    pub fn meetings(&self) -> &[Meeting] {
        &self.meetings
    }

    pub fn n_turns(&self) -> usize {
        self.meetings.iter().map(Meeting::len).sum()
    }

    /// Same team restricted to the meetings every member attended.
    pub fn full_attendance_only(&self) -> Self {
        Self {
            member_ids: self.member_ids.clone(),
            meetings: self.meetings.iter().filter(|m| m.attendance().is_full()).cloned().collect(),
        }
    }

    pub fn with_meetings(&self, meetings: Vec<Meeting>) -> Result<Self> {
        Self::new(self.member_ids.clone(), meetings)
    }

    /// Per-member count of turns over all meetings.
    pub fn turn_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_members()];
        for meeting in &self.meetings {
            for &s in meeting.turns() {
                counts[s] += 1;
            }
        }
        counts
    }
}

/// Unnormalised likelihood that `member` takes the current turn.
pub fn speaking_likelihood(params: SpeakerParams, state: &HistoryState, member: usize) -> f64 {
    match state.last_turn(member) {
        Some(last) if last + 1 == state.current_turn() => 0.0,
        Some(last) => params.pi + params.d * memory_factor(state.current_turn() - last),
        None => params.pi,
    }
}

/// Probability of each member taking the current turn. Absent members get 0.
pub fn next_speaker_distribution(
    team: &[SpeakerParams],
    state: &HistoryState,
    attendance: &AttendanceMask,
) -> Result<Vec<f64>> {
    if attendance.n_present() < 2 {
        return Err(Error::InvalidMeeting("need at least 2 members present".into()));
    }
    let mut probs: Vec<f64> = team
        .iter()
        .enumerate()
        .map(|(i, &p)| if attendance.is_present(i) { speaking_likelihood(p, state, i) } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroLikelihood { turn: state.current_turn() });
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Draws an index from `probs` with a single uniform variate.
fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

pub fn sample_conversation_with<R: rand::Rng + ?Sized>(
    team: &[SpeakerParams],
    n_turns: usize,
    attendance: &AttendanceMask,
    rng: &mut R,
) -> Result<Meeting> {
    if attendance.len() != team.len() {
        return Err(Error::InvalidMeeting("attendance and team sizes differ".into()));
    }
    let mut state = HistoryState::new(team.len());
    let mut turns = Vec::with_capacity(n_turns);
    for _ in 0..n_turns {
        let probs = next_speaker_distribution(team, &state, attendance)?;
        let speaker = draw(&probs, rng.gen::<f64>());
        turns.push(speaker);
        state.record(speaker);
    }
    Meeting::new(turns, attendance.clone())
}

/// Simulates one meeting of `n_turns` turns.
pub fn sample_conversation(
    team: &[SpeakerParams],
    n_turns: usize,
    attendance: &AttendanceMask,
    seed: u64,
) -> Result<Meeting> {
    let mut rng = seeds::rng(seed);
    sample_conversation_with(team, n_turns, attendance, &mut rng)
}

/// Negative log-likelihood (natural log) of one meeting.
pub fn meeting_nll(team: &[SpeakerParams], meeting: &Meeting) -> Result<f64> {
    let mut state = HistoryState::new(team.len());
    let mut total = 0.0;
    for &speaker in meeting.turns() {
        let probs = next_speaker_distribution(team, &state, meeting.attendance())?;
        let p = probs[speaker];
        if !(p > 0.0) {
            return Err(Error::ZeroProbabilityEvent { turn: state.current_turn(), speaker });
        }
        total -= p.ln();
        state.record(speaker);
    }
    Ok(total)
}

/// Negative log-likelihood of every meeting of a team. History restarts at
/// each meeting.
pub fn sequence_nll(team: &[SpeakerParams], conversation: &TeamConversation) -> Result<f64> {
    if team.len() != conversation.n_members() {
        return Err(Error::InvalidParams(format!(
            "{} parameter dyads for a team of {}",
            team.len(),
            conversation.n_members()
        )));
    }
    conversation.meetings().iter().map(|m| meeting_nll(team, m)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sp(pi: f64, d: f64) -> SpeakerParams {
        SpeakerParams::new(pi, d).unwrap()
    }

    #[test]
    fn likelihood_with_memory() {
        let state = HistoryState::from_parts(vec![Some(1), Some(2)], 3).unwrap();
        assert_abs_diff_eq!(speaking_likelihood(sp(0.2, 1.0), &state, 0), 0.567_879_4, epsilon = 1e-7);
        assert_eq!(speaking_likelihood(sp(0.2, 1.0), &state, 1), 0.0);
    }

    #[test]
    fn likelihood_without_prior_turn() {
        let state = HistoryState::from_parts(vec![None, Some(1)], 2).unwrap();
        assert_eq!(speaking_likelihood(sp(0.4, 2.0), &state, 0), 0.4);
    }

    #[test]
    fn memory_decays_to_baseline() {
        let p = sp(0.3, 2.0);
        let mut prev = f64::INFINITY;
        for gap in 2..60 {
            let state = HistoryState::from_parts(vec![Some(1), None], 1 + gap).unwrap();
            let l = speaking_likelihood(p, &state, 0);
            assert!(l < prev);
            assert!(l > 0.3);
            prev = l;
        }
        assert_abs_diff_eq!(prev, 0.3, epsilon = 1e-10);
    }

    #[test]
    fn history_validation() {
        assert!(HistoryState::from_parts(vec![Some(3)], 3).is_err());
        assert!(HistoryState::from_parts(vec![Some(2), Some(2)], 3).is_err());
        assert!(HistoryState::from_parts(vec![Some(1)], 0).is_err());
        let s = HistoryState::from_parts(vec![Some(1), Some(2)], 3).unwrap();
        assert_eq!(s.last_speaker(), Some(1));
    }

    #[test]
    fn distribution_examples() {
        let team = [sp(0.5, 0.0), sp(0.3, 0.0), sp(0.2, 0.0)];
        let mut state = HistoryState::new(3);
        state.record(0);
        let p = next_speaker_distribution(&team, &state, &AttendanceMask::all(3)).unwrap();
        assert_eq!(p[0], 0.0);
        assert_abs_diff_eq!(p[1], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 0.4, epsilon = 1e-15);

        let uniform = vec![sp(0.7, 0.0); 5];
        let p = next_speaker_distribution(&uniform, &HistoryState::new(5), &AttendanceMask::all(5)).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn proportional_normalisation() {
        // likelihoods (0, 0.5, 0.5): member 0 just spoke, the others are equal
        let team = [sp(1.0, 0.0), sp(0.5, 0.0), sp(0.5, 0.0)];
        let mut state = HistoryState::new(3);
        state.record(0);
        let p = next_speaker_distribution(&team, &state, &AttendanceMask::all(3)).unwrap();
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn absent_members_get_zero() {
        let team = vec![sp(0.5, 1.0); 4];
        let mask = AttendanceMask::new(vec![true, false, true, true]).unwrap();
        let p = next_speaker_distribution(&team, &HistoryState::new(4), &mask).unwrap();
        assert_eq!(p[1], 0.0);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_zero_likelihood_is_reported() {
        let team = [SpeakerParams { pi: 0.0, d: 0.0 }, SpeakerParams { pi: 0.0, d: 0.0 }];
        let err = next_speaker_distribution(&team, &HistoryState::new(2), &AttendanceMask::all(2));
        assert!(matches!(err, Err(Error::AllZeroLikelihood { turn: 1 })));
    }

    #[test]
    fn two_members_alternate() {
        let team = [sp(0.9, 3.0), sp(0.1, 0.5)];
        let m = sample_conversation(&team, 6, &AttendanceMask::all(2), 11).unwrap();
        let t = m.turns();
        for w in t.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let team = vec![sp(0.3, 2.0), sp(0.6, 1.0), sp(0.9, 0.0), sp(0.2, 5.0)];
        let a = sample_conversation(&team, 200, &AttendanceMask::all(4), 42).unwrap();
        let b = sample_conversation(&team, 200, &AttendanceMask::all(4), 42).unwrap();
        let c = sample_conversation(&team, 200, &AttendanceMask::all(4), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn nll_examples() {
        let team = [sp(0.5, 0.0), sp(0.3, 0.0), sp(0.2, 0.0)];
        let meeting = Meeting::new(vec![0, 1], AttendanceMask::all(3)).unwrap();
        let conv = TeamConversation::new(vec!["a".into(), "b".into(), "c".into()], vec![meeting]).unwrap();
        assert_abs_diff_eq!(sequence_nll(&team, &conv).unwrap(), 1.203_972_8, epsilon = 1e-7);

        let uniform = vec![sp(1.0, 0.0); 5];
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let one = TeamConversation::new(ids, vec![Meeting::new(vec![3], AttendanceMask::all(5)).unwrap()]).unwrap();
        assert_abs_diff_eq!(sequence_nll(&uniform, &one).unwrap(), 5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn history_resets_between_meetings() {
        let team = [sp(0.5, 0.0), sp(0.3, 0.0), sp(0.2, 0.0)];
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let m1 = Meeting::new(vec![0, 1], AttendanceMask::all(3)).unwrap();
        let m2 = Meeting::new(vec![1, 0], AttendanceMask::all(3)).unwrap();
        let both = TeamConversation::new(ids, vec![m1.clone(), m2.clone()]).unwrap();
        let expected = meeting_nll(&team, &m1).unwrap() + meeting_nll(&team, &m2).unwrap();
        assert_abs_diff_eq!(sequence_nll(&team, &both).unwrap(), expected, epsilon = 1e-15);
        // second meeting opens with member 1, scored on the fresh distribution
        assert_abs_diff_eq!(meeting_nll(&team, &m2).unwrap(), -(0.3f64.ln()) - (0.5f64 / 0.7).ln(), epsilon = 1e-12);
    }

    #[test]
    fn peak_examples() {
        assert_eq!(peak_likelihood(sp(0.5, 0.0)), 0.5);
        assert_abs_diff_eq!(peak_likelihood(sp(0.2, 1.0)), 0.806_530_7, epsilon = 1e-7);
        assert_abs_diff_eq!(peak_likelihood(SpeakerParams { pi: 0.0, d: 1.0 }), 0.606_530_7, epsilon = 1e-7);
    }

    #[test]
    fn invalid_meetings_rejected() {
        assert!(Meeting::new(vec![0, 0], AttendanceMask::all(2)).is_err());
        let mask = AttendanceMask::new(vec![true, true, false]).unwrap();
        assert!(Meeting::new(vec![0, 2], mask).is_err());
        assert!(AttendanceMask::new(vec![true, false]).is_err());
        assert!(SpeakerParams::new(0.0, 1.0).is_err());
        assert!(SpeakerParams::new(0.1, -1.0).is_err());
    }

    #[test]
    fn truncation_is_a_prefix() {
        let team = vec![sp(0.5, 1.0); 3];
        let m = sample_conversation(&team, 500, &AttendanceMask::all(3), 1).unwrap();
        let c = m.truncated(50).unwrap();
        assert_eq!(c.turns(), &m.turns()[..50]);
        assert_eq!(m.truncated(500).unwrap(), m);
        assert_eq!(m.truncated(300).unwrap().truncated(100).unwrap(), m.truncated(100).unwrap());
        assert!(matches!(m.truncated(501), Err(Error::LengthExceeded { .. })));
    }
}
