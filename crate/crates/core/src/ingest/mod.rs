//! Parsing, filtering, labelling and day-partitioning of authentication
//! event streams.
//!
//! The wire format is the 9-field comma-separated auth line:
//!
//! ```text
//! time,src_user@domain,dst_user@domain,src_pc,dst_pc,auth_type,logon_type,auth_orientation,outcome
//! ```
//!
//! Files ending in `.gz` are decompressed transparently.

pub mod synth;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};

/// Seconds per day bucket.
pub const SECONDS_PER_DAY: u64 = 86_400;

/// Placeholder used for absent string fields.
pub const MISSING: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Fail,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "Success",
            Outcome::Fail => "Fail",
        }
    }
}

/// One parsed authentication log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    /// Seconds since the start of the (anonymized) epoch.
    pub time: u64,
    pub src_user: String,
    pub src_domain: String,
    pub dst_user: String,
    pub dst_domain: String,
    pub src_pc: String,
    pub dst_pc: String,
    pub auth_type: String,
    pub logon_type: String,
    pub auth_orientation: String,
    pub outcome: Outcome,
    /// Evaluation-only ground truth. Never read by training code.
    pub is_redteam: bool,
}

impl EventRecord {
    /// Day bucket of this event; every event belongs to exactly one.
    pub fn day(&self) -> u32 {
        (self.time / SECONDS_PER_DAY) as u32
    }

    /// The entity key used for per-user grouping and label matching.
    pub fn user_key(&self) -> String {
        format!("{}@{}", self.src_user, self.src_domain)
    }

    /// The ten modeled fields in fixed order (time excluded).
    pub fn fields(&self) -> [&str; 10] {
        [
            &self.src_user,
            &self.src_domain,
            &self.dst_user,
            &self.dst_domain,
            &self.src_pc,
            &self.dst_pc,
            &self.auth_type,
            &self.logon_type,
            &self.auth_orientation,
            self.outcome.as_str(),
        ]
    }

    /// Serialize back to the 9-field wire format.
    pub fn to_line(&self) -> String {
        format!(
            "{},{}@{},{}@{},{},{},{},{},{},{}",
            self.time,
            self.src_user,
            self.src_domain,
            self.dst_user,
            self.dst_domain,
            self.src_pc,
            self.dst_pc,
            self.auth_type,
            self.logon_type,
            self.auth_orientation,
            self.outcome.as_str()
        )
    }
}

fn non_empty(s: &str) -> String {
    if s.is_empty() {
        MISSING.to_string()
    } else {
        s.to_string()
    }
}

fn split_principal(s: &str) -> (String, String) {
    match s.split_once('@') {
        Some((u, d)) => (non_empty(u), non_empty(d)),
        None => (non_empty(s), MISSING.to_string()),
    }
}

/// Parse one 9-field auth line. `line_no` is carried into the error so
/// callers can skip-and-count malformed lines.
pub fn parse_auth_line(line: &str, line_no: u64) -> Result<EventRecord> {
    let parts: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if parts.len() != 9 {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("expected 9 fields, got {}", parts.len()),
        });
    }
    let time: u64 = parts[0].parse().map_err(|_| Error::Parse {
        line: line_no,
        reason: format!("non-numeric time field {:?}", parts[0]),
    })?;
    let outcome = match parts[8] {
        "Success" => Outcome::Success,
        "Fail" => Outcome::Fail,
        other => {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("unknown outcome {other:?}"),
            })
        }
    };
    let (src_user, src_domain) = split_principal(parts[1]);
    let (dst_user, dst_domain) = split_principal(parts[2]);
    Ok(EventRecord {
        time,
        src_user,
        src_domain,
        dst_user,
        dst_domain,
        src_pc: non_empty(parts[3]),
        dst_pc: non_empty(parts[4]),
        auth_type: non_empty(parts[5]),
        logon_type: non_empty(parts[6]),
        auth_orientation: non_empty(parts[7]),
        outcome,
        is_redteam: false,
    })
}

/// A known red-team action used only for evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedTeamLabel {
    pub time: u64,
    /// `user@domain` as it appears in the source field of the event.
    pub user: String,
    pub src_pc: String,
    pub dst_pc: String,
}

/// Parse one 4-field red-team label line: `time,user@domain,src_pc,dst_pc`.
pub fn parse_redteam_line(line: &str, line_no: u64) -> Result<RedTeamLabel> {
    let parts: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("expected 4 fields, got {}", parts.len()),
        });
    }
    let time: u64 = parts[0].parse().map_err(|_| Error::Parse {
        line: line_no,
        reason: format!("non-numeric time field {:?}", parts[0]),
    })?;
    Ok(RedTeamLabel {
        time,
        user: parts[1].to_string(),
        src_pc: parts[2].to_string(),
        dst_pc: parts[3].to_string(),
    })
}

/// Index over red-team labels keyed by (time, user, src_pc, dst_pc).
///
/// An event is red team iff all four keys match a label exactly.
pub struct LabelIndex {
    keys: HashMap<(u64, String, String, String), bool>,
}

impl LabelIndex {
    pub fn new(labels: &[RedTeamLabel]) -> Self {
        let mut keys = HashMap::new();
        for l in labels {
            keys.insert(
                (l.time, l.user.clone(), l.src_pc.clone(), l.dst_pc.clone()),
                false,
            );
        }
        LabelIndex { keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Set `is_redteam` on a matching event; records the hit.
    pub fn mark(&mut self, ev: &mut EventRecord) {
        let key = (
            ev.time,
            ev.user_key(),
            ev.src_pc.clone(),
            ev.dst_pc.clone(),
        );
        if let Some(hit) = self.keys.get_mut(&key) {
            ev.is_redteam = true;
            *hit = true;
        }
    }

    /// Labels that never matched any event.
    pub fn unmatched(&self) -> usize {
        self.keys.values().filter(|hit| !**hit).count()
    }
}

/// Apply red-team labels in place. Returns (flagged events, unmatched labels).
/// Only `is_redteam` is ever modified.
pub fn apply_redteam_labels(events: &mut [EventRecord], labels: &[RedTeamLabel]) -> (usize, usize) {
    let mut index = LabelIndex::new(labels);
    let mut flagged = 0usize;
    for ev in events.iter_mut() {
        index.mark(ev);
        if ev.is_redteam {
            flagged += 1;
        }
    }
    (flagged, index.unmatched())
}

/// Dev/test day split with withheld days, pure configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaySplit {
    /// Inclusive day-index range.
    pub dev_days: (u32, u32),
    /// Inclusive day-index range.
    pub test_days: (u32, u32),
    pub skip_days: BTreeSet<u32>,
}

impl DaySplit {
    pub fn new(dev_days: (u32, u32), test_days: (u32, u32), skip_days: BTreeSet<u32>) -> Result<Self> {
        if dev_days.0 > dev_days.1 || test_days.0 > test_days.1 {
            return Err(Error::Config("day split ranges must be nondecreasing".into()));
        }
        if dev_days.1 >= test_days.0 && test_days.1 >= dev_days.0 {
            return Err(Error::Config("dev and test day ranges overlap".into()));
        }
        Ok(DaySplit { dev_days, test_days, skip_days })
    }
}

/// Retains only events linked to an actual user and outside skip days.
///
/// The machine-account rule follows the LANL convention: a source user
/// ending in `$` denotes a computer account. The regex is configurable.
#[derive(Debug, Clone)]
pub struct UserFilter {
    machine_re: Regex,
    skip_days: BTreeSet<u32>,
}

impl UserFilter {
    pub fn new(machine_account_regex: &str, skip_days: BTreeSet<u32>) -> Result<Self> {
        let machine_re = Regex::new(machine_account_regex)
            .map_err(|e| Error::Config(format!("bad machine account regex: {e}")))?;
        Ok(UserFilter { machine_re, skip_days })
    }

    pub fn default_rule(skip_days: BTreeSet<u32>) -> Self {
        UserFilter::new(r"\$$", skip_days).expect("builtin regex is valid")
    }

    pub fn keep(&self, ev: &EventRecord) -> bool {
        !self.machine_re.is_match(&ev.src_user) && !self.skip_days.contains(&ev.day())
    }
}

/// Filter an event stream down to human-account events outside skip days.
/// Idempotent by construction.
pub fn filter_user_events<'a, I>(events: I, filter: &'a UserFilter) -> impl Iterator<Item = EventRecord> + 'a
where
    I: Iterator<Item = EventRecord> + 'a,
{
    events.filter(move |ev| filter.keep(ev))
}

/// Open a log file, decompressing gzip when the extension says so.
pub fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read + Send>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(flate2::read::MultiGzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Counters from a load pass over an event file.
#[derive(Debug, Clone, Default)]
pub struct LoadStats {
    pub parsed: u64,
    pub skipped_malformed: u64,
    pub dropped_by_filter: u64,
    pub flagged_redteam: u64,
    pub unmatched_labels: usize,
}

/// Events of one day, in stream order.
#[derive(Debug, Clone)]
pub struct DayBatch {
    pub day: u32,
    pub events: Vec<EventRecord>,
}

/// Load, filter and label an event file, partitioned by day.
///
/// Malformed lines are skipped and counted. Day buckets come out in
/// nondecreasing day order; out-of-order input is an error.
pub fn load_day_batches(
    events_path: &Path,
    labels_path: Option<&Path>,
    filter: &UserFilter,
) -> Result<(Vec<DayBatch>, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut index = match labels_path {
        Some(p) => {
            let labels = read_redteam_file(p)?;
            LabelIndex::new(&labels)
        }
        None => LabelIndex::new(&[]),
    };

    let reader = BufReader::new(open_maybe_gz(events_path)?);
    let mut batches: Vec<DayBatch> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = (i + 1) as u64;
        let mut ev = match parse_auth_line(&line, line_no) {
            Ok(ev) => ev,
            Err(Error::Parse { .. }) => {
                stats.skipped_malformed += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        stats.parsed += 1;
        if !filter.keep(&ev) {
            stats.dropped_by_filter += 1;
            continue;
        }
        index.mark(&mut ev);
        if ev.is_redteam {
            stats.flagged_redteam += 1;
        }
        let day = ev.day();
        match batches.last_mut() {
            Some(b) if b.day == day => b.events.push(ev),
            Some(b) if b.day > day => {
                return Err(Error::DayOrder { prev: b.day, seen: day });
            }
            _ => batches.push(DayBatch { day, events: vec![ev] }),
        }
    }
    stats.unmatched_labels = index.unmatched();
    Ok((batches, stats))
}

/// Read a 4-field red-team label file.
pub fn read_redteam_file(path: &Path) -> Result<Vec<RedTeamLabel>> {
    let reader = BufReader::new(open_maybe_gz(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        labels.push(parse_redteam_line(&line, (i + 1) as u64)?);
    }
    Ok(labels)
}

/// Distinct day indices present in a set of batches.
pub fn days_present(batches: &[DayBatch]) -> HashSet<u32> {
    batches.iter().map(|b| b.day).collect()
}
