//! On-disk team dataset: three CSV tables in one directory.
//!
//! * `members.csv`: `team_id,member_id,<trait>...`, one numeric column per trait.
//! * `turns.csv`: `team_id,meeting_id,turn_index,speaker_member_id`, with
//!   `turn_index` running 1..T inside each meeting.
//! * `attendance.csv` (optional): `team_id,meeting_id,member_id,present`.
//!   Members without a row are taken as present.
//!
//! An optional `columns.json` object maps external header names onto these
//! canonical names.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttendanceMask, Meeting, TeamConversation};
use crate::net::{TeamData, TraitVector};

pub const MEMBERS_FILE: &str = "members.csv";
pub const TURNS_FILE: &str = "turns.csv";
pub const ATTENDANCE_FILE: &str = "attendance.csv";
pub const COLUMN_MAP_FILE: &str = "columns.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingRecord {
    pub meeting_id: String,
    /// Speaker of each turn as an index into the team's members.
    pub speakers: Vec<usize>,
    pub present: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamRecord {
    pub team_id: String,
    pub member_ids: Vec<String>,
    /// Raw trait values, one vector per member, in `DatasetBundle::trait_names` order.
    pub traits: Vec<TraitVector>,
    pub meetings: Vec<MeetingRecord>,
}

impl TeamRecord {
    pub fn conversation(&self) -> Result<TeamConversation> {
        let meetings = self
            .meetings
            .iter()
            .map(|m| Meeting::new(m.speakers.clone(), AttendanceMask::new(m.present.clone())?))
            .collect::<Result<Vec<_>>>()?;
        TeamConversation::new(self.member_ids.clone(), meetings)
    }

    /// Team data restricted to the given trait columns (raw values).
    pub fn team_data(&self, columns: &[usize]) -> Result<TeamData> {
        TeamData::new(self.traits.iter().map(|t| t.select(columns)).collect(), self.conversation()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub trait_names: Vec<String>,
    pub teams: Vec<TeamRecord>,
}

impl DatasetBundle {
    pub fn trait_index(&self, name: &str) -> Option<usize> {
        self.trait_names.iter().position(|n| n == name)
    }

    pub fn trait_columns(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| self.trait_index(n).ok_or_else(|| Error::Schema(format!("unknown trait `{n}`"))))
            .collect()
    }

    pub fn n_members(&self) -> usize {
        self.teams.iter().map(|t| t.member_ids.len()).sum()
    }

    pub fn team_data(&self, columns: &[usize]) -> Result<Vec<TeamData>> {
        self.teams.iter().map(|t| t.team_data(columns)).collect()
    }

    /// Checks every invariant the loader enforces.
    pub fn validate(&self) -> Result<()> {
        for team in &self.teams {
            let n = team.member_ids.len();
            if team.traits.len() != n {
                return Err(Error::Schema(format!("team {}: trait rows do not match members", team.team_id)));
            }
            if team.traits.iter().any(|t| t.len() != self.trait_names.len() || t.iter().any(|x| !x.is_finite())) {
                return Err(Error::Schema(format!("team {}: malformed trait values", team.team_id)));
            }
            let mut ever_present = vec![team.meetings.is_empty(); n];
            for m in &team.meetings {
                if m.present.len() != n {
                    return Err(Error::Schema(format!("meeting {}: attendance width", m.meeting_id)));
                }
                for (t, &s) in m.speakers.iter().enumerate() {
                    if s >= n {
                        return Err(Error::Referential(format!(
                            "team {} meeting {}: speaker index {s} out of range",
                            team.team_id, m.meeting_id
                        )));
                    }
                    if !m.present[s] {
                        return Err(Error::AbsentSpeaker(format!(
                            "team {} meeting {}: member {} speaks at turn {} but is marked absent",
                            team.team_id,
                            m.meeting_id,
                            team.member_ids[s],
                            t + 1
                        )));
                    }
                    if t > 0 && m.speakers[t - 1] == s {
                        return Err(Error::RepeatedSpeaker(format!(
                            "team {} meeting {}: member {} speaks on turns {t} and {}",
                            team.team_id,
                            m.meeting_id,
                            team.member_ids[s],
                            t + 1
                        )));
                    }
                }
                if m.present.iter().filter(|&&p| p).count() < 2 {
                    return Err(Error::Schema(format!(
                        "team {} meeting {}: fewer than two members present",
                        team.team_id, m.meeting_id
                    )));
                }
                for (e, &p) in ever_present.iter_mut().zip(&m.present) {
                    *e |= p;
                }
            }
            if let Some(i) = ever_present.iter().position(|&e| !e) {
                return Err(Error::NeverPresent(format!(
                    "team {}: member {} is absent from every meeting",
                    team.team_id, team.member_ids[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// External header name -> canonical header name.
    pub column_map: BTreeMap<String, String>,
}

fn read_table(path: &Path, opts: &LoadOptions) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| opts.column_map.get(h).cloned().unwrap_or_else(|| h.to_string()))
        .collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((headers, rows))
}

fn column(headers: &[String], name: &str, file: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("{file}: missing column `{name}`")))
}

fn parse_present(raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(Error::Schema(format!("{ATTENDANCE_FILE}: bad present value `{other}`"))),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = dir.as_ref();
    let map_path = dir.join(COLUMN_MAP_FILE);
    let opts = if map_path.exists() {
        LoadOptions { column_map: serde_json::from_str(&fs::read_to_string(map_path)?)? }
    } else {
        LoadOptions::default()
    };
    load_dataset_with(dir, &opts)
}

pub fn load_dataset_with(dir: impl AsRef<Path>, opts: &LoadOptions) -> Result<DatasetBundle> {
    let dir = dir.as_ref();

    let (headers, rows) = read_table(&dir.join(MEMBERS_FILE), opts)?;
    let team_col = column(&headers, "team_id", MEMBERS_FILE)?;
    let member_col = column(&headers, "member_id", MEMBERS_FILE)?;
    let trait_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != team_col && c != member_col).collect();
    if trait_cols.is_empty() {
        return Err(Error::Schema(format!("{MEMBERS_FILE}: no trait columns")));
    }
    let trait_names: Vec<String> = trait_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut teams: Vec<TeamRecord> = Vec::new();
    let mut team_pos: HashMap<String, usize> = HashMap::new();
    let mut member_pos: HashMap<(String, String), usize> = HashMap::new();
    for (line, row) in rows.iter().enumerate() {
        let team_id = row.get(team_col).unwrap_or_default().to_string();
        let member_id = row.get(member_col).unwrap_or_default().to_string();
        let values = trait_cols
            .iter()
            .map(|&c| {
                let raw = row.get(c).unwrap_or_default();
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Schema(format!("{MEMBERS_FILE} row {}: `{}` is not a number ({raw:?})", line + 2, headers[c]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let t = *team_pos.entry(team_id.clone()).or_insert_with(|| {
            teams.push(TeamRecord { team_id: team_id.clone(), member_ids: vec![], traits: vec![], meetings: vec![] });
            teams.len() - 1
        });
        if member_pos.insert((team_id.clone(), member_id.clone()), teams[t].member_ids.len()).is_some() {
            return Err(Error::Schema(format!("{MEMBERS_FILE}: duplicate member {member_id} in team {team_id}")));
        }
        teams[t].member_ids.push(member_id);
        teams[t].traits.push(TraitVector(values));
    }

    let (headers, rows) = read_table(&dir.join(TURNS_FILE), opts)?;
    let team_col = column(&headers, "team_id", TURNS_FILE)?;
    let meeting_col = column(&headers, "meeting_id", TURNS_FILE)?;
    let index_col = column(&headers, "turn_index", TURNS_FILE)?;
    let speaker_col = column(&headers, "speaker_member_id", TURNS_FILE)?;

    // (team, meeting) -> position in that team's meeting list, and its (turn_index, speaker) rows
    let mut meeting_pos: HashMap<(String, String), usize> = HashMap::new();
    let mut raw_turns: Vec<Vec<Vec<(usize, usize)>>> = vec![Vec::new(); teams.len()];
    for (line, row) in rows.iter().enumerate() {
        let team_id = row.get(team_col).unwrap_or_default().to_string();
        let meeting_id = row.get(meeting_col).unwrap_or_default().to_string();
        let speaker = row.get(speaker_col).unwrap_or_default().to_string();
        let index: usize = row
            .get(index_col)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Schema(format!("{TURNS_FILE} row {}: bad turn_index", line + 2)))?;
        let &t = team_pos
            .get(&team_id)
            .ok_or_else(|| Error::Referential(format!("{TURNS_FILE} row {}: unknown team {team_id}", line + 2)))?;
        let &s = member_pos.get(&(team_id.clone(), speaker.clone())).ok_or_else(|| {
            Error::Referential(format!("{TURNS_FILE} row {}: unknown speaker {speaker} in team {team_id}", line + 2))
        })?;
        let m = *meeting_pos.entry((team_id.clone(), meeting_id.clone())).or_insert_with(|| {
            let n = teams[t].member_ids.len();
            teams[t].meetings.push(MeetingRecord { meeting_id: meeting_id.clone(), speakers: vec![], present: vec![true; n] });
            raw_turns[t].push(Vec::new());
            teams[t].meetings.len() - 1
        });
        raw_turns[t][m].push((index, s));
    }
    for (t, meetings) in raw_turns.into_iter().enumerate() {
        for (m, mut rows) in meetings.into_iter().enumerate() {
            rows.sort_by_key(|&(i, _)| i);
            for (k, &(i, _)) in rows.iter().enumerate() {
                if i != k + 1 {
                    return Err(Error::Gap(format!(
                        "team {} meeting {}: expected turn_index {}, found {i}",
                        teams[t].team_id,
                        teams[t].meetings[m].meeting_id,
                        k + 1
                    )));
                }
            }
            teams[t].meetings[m].speakers = rows.into_iter().map(|(_, s)| s).collect();
        }
    }

    let attendance_path = dir.join(ATTENDANCE_FILE);
    if attendance_path.exists() {
        let (headers, rows) = read_table(&attendance_path, opts)?;
        let team_col = column(&headers, "team_id", ATTENDANCE_FILE)?;
        let meeting_col = column(&headers, "meeting_id", ATTENDANCE_FILE)?;
        let member_col = column(&headers, "member_id", ATTENDANCE_FILE)?;
        let present_col = column(&headers, "present", ATTENDANCE_FILE)?;
        for (line, row) in rows.iter().enumerate() {
            let team_id = row.get(team_col).unwrap_or_default().to_string();
            let meeting_id = row.get(meeting_col).unwrap_or_default().to_string();
            let member_id = row.get(member_col).unwrap_or_default().to_string();
            let present = parse_present(row.get(present_col).unwrap_or_default())?;
            let &t = team_pos.get(&team_id).ok_or_else(|| {
                Error::Referential(format!("{ATTENDANCE_FILE} row {}: unknown team {team_id}", line + 2))
            })?;
            let &s = member_pos.get(&(team_id.clone(), member_id.clone())).ok_or_else(|| {
                Error::Referential(format!("{ATTENDANCE_FILE} row {}: unknown member {member_id}", line + 2))
            })?;
            let &m = meeting_pos.get(&(team_id.clone(), meeting_id.clone())).ok_or_else(|| {
                Error::Referential(format!("{ATTENDANCE_FILE} row {}: unknown meeting {meeting_id}", line + 2))
            })?;
            teams[t].meetings[m].present[s] = present;
        }
    }

    let bundle = DatasetBundle { trait_names, teams };
    bundle.validate()?;
    Ok(bundle)
}

/// Writes `bundle` in the directory layout [`load_dataset`] reads.
pub fn write_dataset(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join(MEMBERS_FILE))?;
    let mut header = vec!["team_id".to_string(), "member_id".to_string()];
    header.extend(bundle.trait_names.iter().cloned());
    w.write_record(&header)?;
    for team in &bundle.teams {
        for (id, traits) in team.member_ids.iter().zip(&team.traits) {
            let mut rec = vec![team.team_id.clone(), id.clone()];
            rec.extend(traits.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(TURNS_FILE))?;
    w.write_record(["team_id", "meeting_id", "turn_index", "speaker_member_id"])?;
    for team in &bundle.teams {
        for m in &team.meetings {
            for (k, &s) in m.speakers.iter().enumerate() {
                w.write_record([&team.team_id, &m.meeting_id, &(k + 1).to_string(), &team.member_ids[s]])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(ATTENDANCE_FILE))?;
    w.write_record(["team_id", "meeting_id", "member_id", "present"])?;
    for team in &bundle.teams {
        for m in &team.meetings {
            for (id, &p) in team.member_ids.iter().zip(&m.present) {
                w.write_record([team.team_id.as_str(), m.meeting_id.as_str(), id.as_str(), if p { "1" } else { "0" }])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
