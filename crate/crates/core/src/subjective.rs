//! Subjective scores from crowdsourced pairwise comparisons.
//!
//! Votes pass through session filtering (every verification pair must be
//! answered as expected), then a Bradley-Terry model is fitted by
//! minorization-maximization. Ties count as half a win for each side.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Log-strengths of items that never win (or never lose) are held within this bound.
pub const LOG_STRENGTH_BOUND: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Left,
    Right,
    Tie,
}

impl Outcome {
    pub fn inverted(self) -> Self {
        match self {
            Outcome::Left => Outcome::Right,
            Outcome::Right => Outcome::Left,
            Outcome::Tie => Outcome::Tie,
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Outcome::Left),
            "right" => Ok(Outcome::Right),
            "tie" => Ok(Outcome::Tie),
            other => Err(Error::Validation(format!(
                "unknown outcome `{other}` (expected left, right or tie)"
            ))),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Left => "left",
            Outcome::Right => "right",
            Outcome::Tie => "tie",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteRecord {
    pub session_id: String,
    pub left_id: String,
    pub right_id: String,
    pub outcome: Outcome,
    pub is_verification: bool,
    pub expected_outcome: Option<Outcome>,
}

impl VoteRecord {
    /// An ordinary (non-verification) vote.
    pub fn new(
        session_id: impl Into<String>,
        left_id: impl Into<String>,
        right_id: impl Into<String>,
        outcome: Outcome,
    ) -> Result<Self> {
        let vote = Self {
            session_id: session_id.into(),
            left_id: left_id.into(),
            right_id: right_id.into(),
            outcome,
            is_verification: false,
            expected_outcome: None,
        };
        vote.validate()?;
        Ok(vote)
    }

    pub fn verification(
        session_id: impl Into<String>,
        left_id: impl Into<String>,
        right_id: impl Into<String>,
        outcome: Outcome,
        expected: Outcome,
    ) -> Result<Self> {
        let vote = Self {
            session_id: session_id.into(),
            left_id: left_id.into(),
            right_id: right_id.into(),
            outcome,
            is_verification: true,
            expected_outcome: Some(expected),
        };
        vote.validate()?;
        Ok(vote)
    }

    pub fn validate(&self) -> Result<()> {
        if self.left_id == self.right_id {
            return Err(Error::Validation(format!(
                "vote in session {} compares {} with itself",
                self.session_id, self.left_id
            )));
        }
        if self.is_verification && self.expected_outcome.is_none() {
            return Err(Error::Validation(format!(
                "verification vote in session {} has no expected outcome",
                self.session_id
            )));
        }
        Ok(())
    }

    /// The same judgment with sides swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            session_id: self.session_id.clone(),
            left_id: self.right_id.clone(),
            right_id: self.left_id.clone(),
            outcome: self.outcome.inverted(),
            is_verification: self.is_verification,
            expected_outcome: self.expected_outcome.map(Outcome::inverted),
        }
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" | "" => Some(false),
        _ => None,
    }
}

const VOTE_COLUMNS: [&str; 6] = [
    "session_id",
    "left_id",
    "right_id",
    "outcome",
    "is_verification",
    "expected_outcome",
];

/// Reads the votes CSV (`session_id,left_id,right_id,outcome,is_verification,expected_outcome`).
pub fn read_votes_csv(path: impl AsRef<Path>) -> Result<Vec<VoteRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut idx = [0usize; 6];
    for (slot, column) in idx.iter_mut().zip(VOTE_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: column.to_string(),
            })?;
    }
    let mut votes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let context = |e: Error| Error::Validation(format!("{} row {}: {e}", path.display(), row + 2));
        let is_verification = parse_flag(field(4)).ok_or_else(|| {
            context(Error::Validation(format!(
                "bad is_verification `{}`",
                field(4)
            )))
        })?;
        let expected_outcome = if field(5).is_empty() {
            None
        } else {
            Some(field(5).parse().map_err(context)?)
        };
        let vote = VoteRecord {
            session_id: field(0).to_string(),
            left_id: field(1).to_string(),
            right_id: field(2).to_string(),
            outcome: field(3).parse().map_err(context)?,
            is_verification,
            expected_outcome,
        };
        vote.validate().map_err(context)?;
        votes.push(vote);
    }
    Ok(votes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilteredVotes {
    /// Non-verification votes from accepted sessions, in input order.
    pub kept: Vec<VoteRecord>,
    /// Sessions that failed a verification pair, in order of first appearance.
    pub rejected_sessions: Vec<String>,
}

/// Drops every session that answered any verification pair wrongly.
///
/// A tie on a verification pair that expects a side counts as wrong.
pub fn filter_sessions(votes: &[VoteRecord]) -> FilteredVotes {
    let mut rejected_sessions = Vec::new();
    let mut rejected = HashSet::new();
    for vote in votes.iter().filter(|v| v.is_verification) {
        if vote.expected_outcome != Some(vote.outcome) && rejected.insert(vote.session_id.as_str()) {
            rejected_sessions.push(vote.session_id.clone());
        }
    }
    let kept = votes
        .iter()
        .filter(|v| !v.is_verification && !rejected.contains(v.session_id.as_str()))
        .cloned()
        .collect();
    FilteredVotes {
        kept,
        rejected_sessions,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectiveScores {
    /// Zero-mean log-strength per image.
    pub scores: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Items with no effective wins or no effective losses; their scores sit at the bound.
    pub flagged: Vec<String>,
    /// Log-likelihood before the first update and after each iteration.
    pub log_likelihoods: Vec<f64>,
}

struct Comparisons {
    ids: Vec<String>,
    /// wins[i][j]: effective wins of i over j
    wins: Vec<Vec<f64>>,
}

impl Comparisons {
    fn build(votes: &[VoteRecord]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut ids = Vec::new();
        for vote in votes {
            for id in [&vote.left_id, &vote.right_id] {
                index.entry(id.as_str()).or_insert_with(|| {
                    ids.push(id.clone());
                    ids.len() - 1
                });
            }
        }
        let n = ids.len();
        let mut wins = vec![vec![0.0; n]; n];
        for vote in votes {
            let (l, r) = (index[vote.left_id.as_str()], index[vote.right_id.as_str()]);
            match vote.outcome {
                Outcome::Left => wins[l][r] += 1.0,
                Outcome::Right => wins[r][l] += 1.0,
                Outcome::Tie => {
                    wins[l][r] += 0.5;
                    wins[r][l] += 0.5;
                }
            }
        }
        Self { ids, wins }
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn games(&self, i: usize, j: usize) -> f64 {
        self.wins[i][j] + self.wins[j][i]
    }

    fn components(&self) -> Vec<Vec<String>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut members = Vec::new();
            while let Some(i) = stack.pop() {
                members.push(self.ids[i].clone());
                for j in 0..n {
                    if !seen[j] && self.games(i, j) > 0.0 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            members.sort();
            components.push(members);
        }
        components.sort();
        components
    }

    fn log_likelihood(&self, strengths: &[f64]) -> f64 {
        let n = self.len();
        let mut ll = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = self.wins[i][j];
                if w > 0.0 {
                    ll += w * (strengths[i].ln() - (strengths[i] + strengths[j]).ln());
                }
            }
        }
        ll
    }
}

/// Bradley-Terry maximum-likelihood log-strengths.
///
/// Fails when the comparison graph is disconnected. Hitting `max_iter`
/// returns the current estimate with `converged == false`.
pub fn bradley_terry(votes: &[VoteRecord], tol: f64, max_iter: usize) -> Result<SubjectiveScores> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    for vote in votes {
        vote.validate()?;
    }
    let cmp = Comparisons::build(votes);
    let n = cmp.len();
    if n < 2 {
        return Err(Error::Parameter(
            "need votes over at least two images".into(),
        ));
    }
    let components = cmp.components();
    if components.len() > 1 {
        return Err(Error::DisconnectedGraph { components });
    }

    let total_wins: Vec<f64> = cmp.wins.iter().map(|row| row.iter().sum()).collect();
    let total_losses: Vec<f64> = (0..n).map(|j| (0..n).map(|i| cmp.wins[i][j]).sum()).collect();
    let flagged: Vec<bool> = (0..n)
        .map(|i| total_wins[i] == 0.0 || total_losses[i] == 0.0)
        .collect();
    let any_regular = flagged.iter().any(|f| !f);

    let mut logs = vec![0.0; n];
    let mut strengths = vec![1.0; n];
    let mut log_likelihoods = vec![cmp.log_likelihood(&strengths)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut next_logs: Vec<f64> = (0..n)
            .map(|i| {
                let denom: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| cmp.games(i, j) / (strengths[i] + strengths[j]))
                    .sum();
                (total_wins[i] / denom).max(f64::MIN_POSITIVE).ln()
            })
            .collect();

        let anchor: Vec<f64> = next_logs
            .iter()
            .zip(&flagged)
            .filter(|(_, f)| !any_regular || !**f)
            .map(|(l, _)| *l)
            .collect();
        let center = anchor.iter().sum::<f64>() / anchor.len() as f64;
        for l in &mut next_logs {
            *l = (*l - center).clamp(-LOG_STRENGTH_BOUND, LOG_STRENGTH_BOUND);
        }

        let change = next_logs
            .iter()
            .zip(&logs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        logs = next_logs;
        strengths = logs.iter().map(|l| l.exp()).collect();
        log_likelihoods.push(cmp.log_likelihood(&strengths));
        if change < tol {
            converged = true;
            break;
        }
    }

    let mean = logs.iter().sum::<f64>() / n as f64;
    let scores = cmp
        .ids
        .iter()
        .zip(&logs)
        .map(|(id, l)| (id.clone(), l - mean))
        .collect();
    let mut flagged_ids: Vec<String> = cmp
        .ids
        .iter()
        .zip(&flagged)
        .filter(|(_, f)| **f)
        .map(|(id, _)| id.clone())
        .collect();
    flagged_ids.sort();

    Ok(SubjectiveScores {
        scores,
        iterations,
        converged,
        flagged: flagged_ids,
        log_likelihoods,
    })
}

/// Writes `image_id,score` rows sorted by image id.
pub fn write_scores_csv(path: impl AsRef<Path>, scores: &SubjectiveScores) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer
        .write_record(["image_id", "score"])
        .map_err(|e| Error::csv(path, e))?;
    for (id, score) in &scores.scores {
        writer
            .write_record([id.as_str(), &crate::harness::format_value(*score)])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
