use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }

    /// Class index used by the classifier.
    pub fn class_index(self) -> usize {
        match self {
            Label::Bonafide => 0,
            Label::Spoof => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(format!("unknown label `{other}` (expected `bonafide` or `spoof`)")),
        }
    }
}

/// Whitespace-free utterance token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UtteranceId(String);

impl UtteranceId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("invalid utterance id `{id}`")));
        }
        Ok(UtteranceId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UtteranceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub id: UtteranceId,
    /// Relative to the protocol's directory.
    pub wav_path: PathBuf,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub id: UtteranceId,
    pub score: f64,
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses `utt_id wav_path label` lines; `path` is only used in messages.
pub fn parse_protocol_str(text: &str, path: &Path) -> Result<Vec<TrialRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, fields) in content_lines(text) {
        let [id, wav, label] = fields[..] else {
            return Err(parse_err(
                path,
                line,
                format!("expected `utt_id wav_path label`, found {} fields", fields.len()),
            ));
        };
        let label = label.parse().map_err(|m: String| parse_err(path, line, m))?;
        if !seen.insert(id) {
            return Err(parse_err(path, line, format!("duplicate utterance id `{id}`")));
        }
        out.push(TrialRecord {
            id: UtteranceId(id.to_string()),
            wav_path: PathBuf::from(wav),
            label,
        });
    }
    Ok(out)
}

pub fn parse_protocol(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_protocol_str(&text, path)
}

pub fn parse_scores_str(text: &str, path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, fields) in content_lines(text) {
        let [id, score] = fields[..] else {
            return Err(parse_err(
                path,
                line,
                format!("expected `utt_id score`, found {} fields", fields.len()),
            ));
        };
        let score: f64 = score
            .parse()
            .map_err(|_| parse_err(path, line, format!("invalid score `{score}`")))?;
        if !score.is_finite() {
            return Err(parse_err(path, line, "score is not finite"));
        }
        if !seen.insert(id) {
            return Err(parse_err(path, line, format!("duplicate utterance id `{id}`")));
        }
        out.push(ScoreRecord {
            id: UtteranceId(id.to_string()),
            score,
        });
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scores_str(&text, path)
}

/// One `utt_id score` line per record, six decimals.
pub fn format_scores(scores: &[ScoreRecord]) -> Result<String> {
    let mut out = String::new();
    for r in scores {
        if !r.score.is_finite() {
            return Err(Error::NonFinite("score"));
        }
        writeln!(out, "{} {:.6}", r.id, r.score).expect("writing to a String");
    }
    Ok(out)
}

pub fn write_scores(path: &Path, scores: &[ScoreRecord]) -> Result<()> {
    fs::write(path, format_scores(scores)?).map_err(|e| Error::io(path, e))
}

/// Pairs every trial with its score. Protocol ids without a score and
/// scores for ids absent from the protocol are both reported.
pub fn join_scores(trials: &[TrialRecord], scores: &[ScoreRecord]) -> Result<Vec<(f64, Label)>> {
    let by_id: HashMap<&UtteranceId, f64> = scores.iter().map(|s| (&s.id, s.score)).collect();
    let known: HashSet<&UtteranceId> = trials.iter().map(|t| &t.id).collect();
    let missing: Vec<&str> = trials
        .iter()
        .filter(|t| !by_id.contains_key(&t.id))
        .map(|t| t.id.as_str())
        .collect();
    let unknown: Vec<&str> = scores
        .iter()
        .filter(|s| !known.contains(&s.id))
        .map(|s| s.id.as_str())
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        let mut msg = String::new();
        if !missing.is_empty() {
            write!(msg, "no score for: {}", missing.join(", ")).expect("writing to a String");
        }
        if !unknown.is_empty() {
            if !msg.is_empty() {
                msg.push_str("; ");
            }
            write!(msg, "scores for ids not in the protocol: {}", unknown.join(", ")).expect("writing to a String");
        }
        return Err(Error::invalid(msg));
    }
    Ok(trials.iter().map(|t| (by_id[&t.id], t.label)).collect())
}
