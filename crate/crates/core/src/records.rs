//! Session record parsing, CSV ingest, and the validated canonical dataset.
//!
//! Two input routes produce the same [`Dataset`]: a plain-text record format
//! (one block per session, blank-line separated) and a pair of CSV tables
//! (`sessions.csv` + `personnel.csv`). A dataset is immutable once built and
//! iterates its sessions in (year, session_id) order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted calendar-year range for sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearBounds {
    pub min: i32,
    pub max: i32,
}

impl Default for YearBounds {
    fn default() -> Self {
        YearBounds { min: 1890, max: 2030 }
    }
}

/// One musician's role in a session: a non-empty set of instruments.
///
/// A multi-instrumentalist appears once, with every instrument they played
/// in the session collected into one entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonnelEntry {
    pub musician_id: String,
    pub instruments: BTreeSet<String>,
}

/// One recording event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub leader_id: String,
    pub year: i32,
    pub personnel: Vec<PersonnelEntry>,
    /// Number of unique releases the session's material appeared on.
    pub releases: u32,
}

impl SessionRecord {
    fn validate(&self, bounds: YearBounds) -> Result<()> {
        if self.personnel.is_empty() {
            return Err(Error::Validation(format!(
                "session '{}' has empty personnel",
                self.session_id
            )));
        }
        let mut seen = HashSet::new();
        for entry in &self.personnel {
            if entry.musician_id.is_empty() {
                return Err(Error::Validation(format!(
                    "session '{}' has a personnel entry with empty musician id",
                    self.session_id
                )));
            }
            if entry.instruments.is_empty() || entry.instruments.iter().any(|i| i.is_empty()) {
                return Err(Error::Validation(format!(
                    "session '{}': musician '{}' has an empty instrument set",
                    self.session_id, entry.musician_id
                )));
            }
            if !seen.insert(entry.musician_id.as_str()) {
                return Err(Error::Validation(format!(
                    "session '{}': musician '{}' listed twice",
                    self.session_id, entry.musician_id
                )));
            }
        }
        if self.year < bounds.min || self.year > bounds.max {
            return Err(Error::Validation(format!(
                "session '{}': year {} outside bounds {}..={}",
                self.session_id, self.year, bounds.min, bounds.max
            )));
        }
        Ok(())
    }
}

/// Validated, immutable collection of sessions sorted by (year, session_id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    sessions: Vec<SessionRecord>,
    by_id: HashMap<String, usize>,
    by_year: BTreeMap<i32, Vec<usize>>,
    bounds: YearBounds,
}

impl Dataset {
    pub fn new(mut records: Vec<SessionRecord>, bounds: YearBounds) -> Result<Dataset> {
        records.sort_by(|a, b| (a.year, &a.session_id).cmp(&(b.year, &b.session_id)));
        let mut by_id = HashMap::with_capacity(records.len());
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate(bounds)?;
            if by_id.insert(r.session_id.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate session_id '{}'",
                    r.session_id
                )));
            }
            by_year.entry(r.year).or_default().push(i);
        }
        Ok(Dataset { sessions: records, by_id, by_year, bounds })
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn bounds(&self) -> YearBounds {
        self.bounds
    }

    pub fn get(&self, session_id: &str) -> Option<&SessionRecord> {
        self.by_id.get(session_id).map(|&i| &self.sessions[i])
    }

    pub fn index_of(&self, session_id: &str) -> Option<usize> {
        self.by_id.get(session_id).copied()
    }

    /// Session indices recorded in `year`, in dataset order.
    pub fn sessions_in_year(&self, year: i32) -> &[usize] {
        self.by_year.get(&year).map(Vec::as_slice).unwrap_or(&[])
    }

    /// First and last session year, if the dataset is non-empty.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        let first = self.by_year.keys().next()?;
        let last = self.by_year.keys().next_back()?;
        Some((*first, *last))
    }

    /// Retain sessions with `year <= max_year` (if given) whose leader is not
    /// in `excluded_leaders` (if given). The original dataset is untouched.
    pub fn filter(
        &self,
        max_year: Option<i32>,
        excluded_leaders: Option<&HashSet<String>>,
    ) -> Dataset {
        let kept: Vec<SessionRecord> = self
            .sessions
            .iter()
            .filter(|s| max_year.is_none_or(|y| s.year <= y))
            .filter(|s| excluded_leaders.is_none_or(|ex| !ex.contains(&s.leader_id)))
            .cloned()
            .collect();
        // Records came from a valid dataset, so revalidation cannot fail.
        Dataset::new(kept, self.bounds).expect("filtered subset of a valid dataset")
    }
}

// ---------------------------------------------------------------------------
// Plain-text record format
// ---------------------------------------------------------------------------

/// Parse one session block. Line numbers in errors are relative to the block.
///
/// ```text
/// [SESSION s1]
/// LEADER: davis_m
/// DATE: 1959
/// RELEASES: 45
/// kelly_w : piano
/// davis_m : trumpet, flugelhorn
/// ```
pub fn parse_session_record(text_block: &str) -> Result<SessionRecord> {
    parse_block(text_block, 0)
}

/// Parse a whole file of blank-line separated session blocks.
pub fn parse_records(text: &str) -> Result<Vec<SessionRecord>> {
    let mut records = Vec::new();
    let mut block_start = 0usize; // 0-based line number of current block start
    let mut current: Vec<&str> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                records.push(parse_block(&current.join("\n"), block_start)?);
                current.clear();
            }
            block_start = lineno + 1;
        } else {
            if current.is_empty() {
                block_start = lineno;
            }
            current.push(line);
        }
    }
    if !current.is_empty() {
        records.push(parse_block(&current.join("\n"), block_start)?);
    }
    Ok(records)
}

fn parse_block(block: &str, line_offset: usize) -> Result<SessionRecord> {
    let err = |rel: usize, msg: String| Error::Parse { line: line_offset + rel + 1, msg };
    let lines: Vec<&str> = block.lines().collect();
    if lines.len() < 4 {
        return Err(err(0, "record needs header, LEADER, DATE, RELEASES lines".into()));
    }

    let header = lines[0].trim();
    let session_id = header
        .strip_prefix("[SESSION ")
        .and_then(|rest| rest.strip_suffix(']'))
        .map(str::trim)
        .filter(|id| !id.is_empty())
        .ok_or_else(|| err(0, format!("malformed header '{header}', expected '[SESSION <id>]'")))?
        .to_string();

    let field = |idx: usize, key: &str| -> Result<String> {
        let line = lines[idx].trim();
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(':'))
            .map(|v| v.trim().to_string())
            .ok_or_else(|| err(idx, format!("expected '{key}: ...', got '{line}'")))
    };

    let leader_id = field(1, "LEADER")?;
    if leader_id.is_empty() {
        return Err(err(1, "empty leader id".into()));
    }
    let date = field(2, "DATE")?;
    let year = parse_year(&date).ok_or_else(|| err(2, format!("missing year in date '{date}'")))?;
    let releases_raw = field(3, "RELEASES")?;
    let releases: u32 = releases_raw
        .parse()
        .map_err(|_| err(3, format!("non-integer releases '{releases_raw}'")))?;

    let mut personnel: Vec<PersonnelEntry> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (rel, line) in lines.iter().enumerate().skip(4) {
        let (musician, instruments) = line
            .split_once(':')
            .ok_or_else(|| err(rel, format!("expected '<musician> : <instruments>', got '{line}'")))?;
        let musician_id = musician.trim().to_string();
        if musician_id.is_empty() {
            return Err(err(rel, "empty musician id".into()));
        }
        if !seen.insert(musician_id.clone()) {
            return Err(err(rel, format!("duplicate musician line for '{musician_id}'")));
        }
        let instruments: BTreeSet<String> = instruments
            .split(',')
            .map(|i| i.trim().to_string())
            .filter(|i| !i.is_empty())
            .collect();
        if instruments.is_empty() {
            return Err(err(rel, format!("no instruments listed for '{musician_id}'")));
        }
        personnel.push(PersonnelEntry { musician_id, instruments });
    }
    if personnel.is_empty() {
        return Err(err(lines.len() - 1, format!("session '{session_id}' lists no musicians")));
    }

    Ok(SessionRecord { session_id, leader_id, year, personnel, releases })
}

/// Extract a year from `<year>` or `<Month D, YYYY>`.
fn parse_year(date: &str) -> Option<i32> {
    let date = date.trim();
    if let Ok(y) = date.parse::<i32>() {
        return Some(y);
    }
    // Full-date form: the year follows the last comma.
    let (_, tail) = date.rsplit_once(',')?;
    tail.trim().parse::<i32>().ok()
}

/// Render sessions back into the plain-text record format.
pub fn write_records(dataset: &Dataset) -> String {
    let mut out = String::new();
    for s in dataset.sessions() {
        let _ = writeln!(out, "[SESSION {}]", s.session_id);
        let _ = writeln!(out, "LEADER: {}", s.leader_id);
        let _ = writeln!(out, "DATE: {}", s.year);
        let _ = writeln!(out, "RELEASES: {}", s.releases);
        for entry in &s.personnel {
            let instruments: Vec<&str> = entry.instruments.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{} : {}", entry.musician_id, instruments.join(", "));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// Row counts observed while loading the CSV tables.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadReport {
    pub session_rows: usize,
    pub personnel_rows: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct SessionRow {
    session_id: String,
    leader_id: String,
    year: i32,
    releases: u32,
}

#[derive(Debug, Deserialize, Serialize)]
struct PersonnelRow {
    session_id: String,
    musician_id: String,
    instrument_id: String,
}

/// Load a dataset from `sessions.csv` + `personnel.csv`.
///
/// Personnel rows for the same (session, musician) merge into one entry with
/// the union of instruments. A personnel row citing an unknown session is a
/// referential error naming the row.
pub fn load_dataset(
    sessions_path: &Path,
    personnel_path: &Path,
    bounds: YearBounds,
) -> Result<(Dataset, LoadReport)> {
    let mut report = LoadReport::default();

    let mut reader = csv::Reader::from_path(sessions_path)?;
    let mut headers: Vec<(String, String, i32, u32)> = Vec::new();
    for row in reader.deserialize() {
        let row: SessionRow = row?;
        headers.push((row.session_id, row.leader_id, row.year, row.releases));
        report.session_rows += 1;
    }

    let mut personnel: HashMap<String, Vec<PersonnelEntry>> = HashMap::new();
    let known: HashSet<&str> = headers.iter().map(|(id, ..)| id.as_str()).collect();
    let mut reader = csv::Reader::from_path(personnel_path)?;
    for (i, row) in reader.deserialize().enumerate() {
        let row: PersonnelRow = row?;
        report.personnel_rows += 1;
        if !known.contains(row.session_id.as_str()) {
            return Err(Error::Referential {
                row: i + 2, // 1-based, counting the header line
                msg: format!("personnel row cites unknown session_id '{}'", row.session_id),
            });
        }
        let entries = personnel.entry(row.session_id).or_default();
        match entries.iter_mut().find(|e| e.musician_id == row.musician_id) {
            Some(entry) => {
                entry.instruments.insert(row.instrument_id);
            }
            None => entries.push(PersonnelEntry {
                musician_id: row.musician_id,
                instruments: BTreeSet::from([row.instrument_id]),
            }),
        }
    }

    let mut records = Vec::with_capacity(headers.len());
    for (session_id, leader_id, year, releases) in headers {
        let entries = personnel.remove(&session_id).ok_or_else(|| {
            Error::Validation(format!("session '{session_id}' has no personnel rows"))
        })?;
        records.push(SessionRecord { session_id, leader_id, year, personnel: entries, releases });
    }
    let dataset = Dataset::new(records, bounds)?;
    Ok((dataset, report))
}

/// Write `sessions.csv` + `personnel.csv` into `dir` in canonical order.
pub fn write_csv(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut sessions = csv::Writer::from_path(dir.join("sessions.csv"))?;
    for s in dataset.sessions() {
        sessions.serialize(SessionRow {
            session_id: s.session_id.clone(),
            leader_id: s.leader_id.clone(),
            year: s.year,
            releases: s.releases,
        })?;
    }
    sessions.flush()?;

    let mut personnel = csv::Writer::from_path(dir.join("personnel.csv"))?;
    for s in dataset.sessions() {
        for entry in &s.personnel {
            for instrument in &entry.instruments {
                personnel.serialize(PersonnelRow {
                    session_id: s.session_id.clone(),
                    musician_id: entry.musician_id.clone(),
                    instrument_id: instrument.clone(),
                })?;
            }
        }
    }
    personnel.flush()?;
    Ok(())
}

/// Load a dataset previously written by [`write_csv`].
pub fn load_dataset_dir(dir: &Path, bounds: YearBounds) -> Result<(Dataset, LoadReport)> {
    load_dataset(&dir.join("sessions.csv"), &dir.join("personnel.csv"), bounds)
}
