use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

fn check_reward(r: u8) -> Result<usize> {
    match r {
        0 | 1 => Ok(r as usize),
        other => Err(Error::Ingest(format!("reward {other} is not binary"))),
    }
}

/// Success counts of consecutive groups of `n` rewards.
pub fn collect_k_contiguous(rewards: &[u8], n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Ingest("group size N must be at least 1".into()));
    }
    if rewards.len() % n != 0 {
        return Err(Error::Ingest(format!(
            "{} rewards do not split into groups of {n}",
            rewards.len()
        )));
    }
    rewards
        .chunks(n)
        .map(|g| g.iter().map(|r| check_reward(*r)).sum())
        .collect()
}

/// Success counts keyed by prompt id; every id must appear exactly `n` times.
pub fn collect_k_by_id<I>(pairs: &[(I, u8)], n: usize) -> Result<BTreeMap<I, usize>>
where
    I: Ord + Clone + Display,
{
    let mut tally: BTreeMap<I, (usize, usize)> = BTreeMap::new();
    for (id, r) in pairs {
        let entry = tally.entry(id.clone()).or_default();
        entry.0 += 1;
        entry.1 += check_reward(*r)?;
    }
    tally
        .into_iter()
        .map(|(id, (seen, k))| {
            if seen != n {
                Err(Error::Ingest(format!("prompt {id} has {seen} responses, expected {n}")))
            } else {
                Ok((id, k))
            }
        })
        .collect()
}

/// One line of a counts file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRecord {
    pub prompt_id: String,
    pub k: usize,
    pub n: usize,
}

pub const COUNTS_HEADER: &str = "prompt_id,K,N";

/// Parses `prompt_id,K,N` lines. An optional header line, blank lines and
/// `#` comments are skipped. All records must share one N.
pub fn read_counts<R: BufRead>(reader: R) -> Result<Vec<CountRecord>> {
    let mut records: Vec<CountRecord> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || text == COUNTS_HEADER {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let [id, k, n] = fields[..] else {
            return Err(err(format!("expected 3 fields prompt_id,K,N, found {}", fields.len())));
        };
        if id.is_empty() {
            return Err(err("empty prompt_id".into()));
        }
        let k: usize = k.parse().map_err(|_| err(format!("K '{k}' is not a nonnegative integer")))?;
        let n: usize = n.parse().map_err(|_| err(format!("N '{n}' is not a nonnegative integer")))?;
        if n == 0 {
            return Err(err("N must be at least 1".into()));
        }
        if k > n {
            return Err(err(format!("K = {k} exceeds N = {n}")));
        }
        if let Some(first) = records.first() {
            if first.n != n {
                return Err(Error::Ingest(format!(
                    "line {line_no}: N = {n} differs from N = {} used earlier",
                    first.n
                )));
            }
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::Ingest(format!("line {line_no}: duplicate prompt_id '{id}'")));
        }
        records.push(CountRecord {
            prompt_id: id.to_string(),
            k,
            n,
        });
    }
    Ok(records)
}

pub fn parse_counts(text: &str) -> Result<Vec<CountRecord>> {
    read_counts(text.as_bytes())
}

pub fn write_counts<W: Write>(mut out: W, records: &[CountRecord]) -> Result<()> {
    writeln!(out, "{COUNTS_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{}", r.prompt_id, r.k, r.n)?;
    }
    Ok(())
}

/// The shared N of a parsed counts file and its K column.
pub fn counts_to_ks(records: &[CountRecord]) -> Result<(usize, Vec<usize>)> {
    let first = records
        .first()
        .ok_or_else(|| Error::EmptyInput("counts file has no records".into()))?;
    Ok((first.n, records.iter().map(|r| r.k).collect()))
}
