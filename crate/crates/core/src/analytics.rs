//! Request log and usage statistics.
//!
//! The log is JSON Lines, one `{ts, text, intent, score}` object per line,
//! with `ts` in RFC 3339 UTC. Weekdays are indexed from Monday = 0.

use std::collections::{BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{load_file, Error, Result};
use crate::text::normalize;

pub const FALLBACK_INTENT: &str = "fallback";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub ts: DateTime<Utc>,
    pub text: String,
    pub intent: String,
    pub score: f64,
}

impl RequestRecord {
    pub fn new(ts: DateTime<Utc>, text: &str, intent: &str, score: f64) -> Self {
        RequestRecord {
            ts,
            text: text.to_owned(),
            intent: intent.to_owned(),
            score,
        }
    }
}

enum Backend {
    File(PathBuf),
    Memory(Vec<RequestRecord>),
}

/// Append-only request log. Appends are serialized; reads return a snapshot
/// of what was written when the read started.
pub struct RequestLog {
    backend: Mutex<Backend>,
}

impl RequestLog {
    pub fn in_memory() -> Self {
        RequestLog {
            backend: Mutex::new(Backend::Memory(Vec::new())),
        }
    }

    /// The file is created on first append.
    pub fn open(path: impl Into<PathBuf>) -> Self {
        RequestLog {
            backend: Mutex::new(Backend::File(path.into())),
        }
    }

    pub fn path(&self) -> Option<PathBuf> {
        match &*self.backend.lock().expect("log lock poisoned") {
            Backend::File(p) => Some(p.clone()),
            Backend::Memory(_) => None,
        }
    }

    pub fn record(&self, req: &RequestRecord) -> Result<()> {
        if req.text.trim().is_empty() {
            return Err(Error::InvalidArgument("request text is empty".into()));
        }
        let mut backend = self.backend.lock().expect("log lock poisoned");
        match &mut *backend {
            Backend::Memory(v) => v.push(req.clone()),
            Backend::File(path) => {
                let mut line = serde_json::to_string(req).expect("record serializes");
                line.push('\n');
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&*path)
                    .map_err(|e| Error::io(&*path, e))?;
                f.write_all(line.as_bytes())
                    .and_then(|_| f.sync_data())
                    .map_err(|e| Error::io(&*path, e))?;
            }
        }
        Ok(())
    }

    pub fn read_all(&self) -> Result<Vec<RequestRecord>> {
        let backend = self.backend.lock().expect("log lock poisoned");
        match &*backend {
            Backend::Memory(v) => Ok(v.clone()),
            Backend::File(path) => match std::fs::read_to_string(path) {
                Ok(text) => parse_log(&text).map_err(|e| e.in_file(path)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
                Err(e) => Err(Error::io(path, e)),
            },
        }
    }
}

pub fn parse_log(text: &str) -> Result<Vec<RequestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                what: "request log".into(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads a log file; unlike [`RequestLog::read_all`] a missing file is an error.
pub fn load_log(path: &Path) -> Result<Vec<RequestRecord>> {
    load_file(path, parse_log)
}

/// Denominator used for the mean daily usage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayCount {
    /// Every calendar day from the first to the last record, inclusive,
    /// including days without requests.
    #[default]
    CalendarSpan,
    /// Only days with at least one request.
    ActiveDays,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopRequest {
    pub text: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageStats {
    pub total: u64,
    /// Index 0 is Monday.
    pub by_weekday: [u64; 7],
    pub days: u64,
    pub mean_daily: f64,
    pub day_count: DayCount,
    pub top_requests: Vec<TopRequest>,
}

pub fn compute_stats(records: &[RequestRecord], top_k: usize, day_count: DayCount) -> UsageStats {
    let mut by_weekday = [0u64; 7];
    let mut dates: BTreeSet<NaiveDate> = BTreeSet::new();
    let mut freq: HashMap<String, u64> = HashMap::new();
    for r in records {
        by_weekday[r.ts.weekday().num_days_from_monday() as usize] += 1;
        dates.insert(r.ts.date_naive());
        *freq.entry(normalize(&r.text)).or_insert(0) += 1;
    }

    let days = match (day_count, dates.first(), dates.last()) {
        (DayCount::CalendarSpan, Some(first), Some(last)) => (*last - *first).num_days() as u64 + 1,
        (DayCount::ActiveDays, _, _) => dates.len() as u64,
        _ => 0,
    };
    let total = records.len() as u64;

    let mut top_requests: Vec<TopRequest> = freq
        .into_iter()
        .map(|(text, count)| TopRequest { text, count })
        .collect();
    top_requests.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
    top_requests.truncate(top_k);

    UsageStats {
        total,
        by_weekday,
        days,
        mean_daily: if days == 0 {
            0.0
        } else {
            total as f64 / days as f64
        },
        day_count,
        top_requests,
    }
}
