//! Hourly trends, cross-patient averages and log-assisted trends.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LogicalState, SessionId, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrendError {
    #[error("states are not strictly increasing at index {index} (ts {ts})")]
    UnsortedInput { index: usize, ts: Timestamp },
    #[error("input mixes sessions {0} and {1}")]
    MixedSessions(SessionId, SessionId),
    #[error("interval [{start}, {end}) lies outside [{grid_start}, {grid_end})")]
    IntervalOutOfBounds {
        start: Timestamp,
        end: Timestamp,
        grid_start: Timestamp,
        grid_end: Timestamp,
    },
    #[error("intervals [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingIntervals(Timestamp, Timestamp, Timestamp, Timestamp),
    #[error("empty or reversed interval [{0}, {1})")]
    InvalidInterval(Timestamp, Timestamp),
    #[error("log is for session {log} but states are for {states}")]
    SessionMismatch { log: SessionId, states: SessionId },
    #[error("no states to aggregate")]
    EmptyInput,
}

/// Clock hour of `ts` (UTC) as (date, hour).
pub fn date_hour(ts: Timestamp) -> (NaiveDate, u32) {
    let dt = DateTime::from_timestamp(ts, 0).expect("timestamp in chrono range");
    (dt.date_naive(), dt.hour())
}

/// Minutes per state within one clock hour of one patient-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyTrend {
    pub session_id: SessionId,
    pub date: NaiveDate,
    pub hour: u32,
    pub monitored_minutes: f64,
    pub alone: f64,
    pub alone_and_moving: f64,
    pub supervised_by_staff: f64,
    pub moving: f64,
}

impl HourlyTrend {
    /// Share of monitored time alone, in percent.
    pub fn alone_percent(&self) -> f64 {
        percent(self.alone, self.monitored_minutes)
    }

    pub fn moving_percent(&self) -> f64 {
        percent(self.moving, self.monitored_minutes)
    }

    pub fn supervised_percent(&self) -> f64 {
        percent(self.supervised_by_staff, self.monitored_minutes)
    }
}

fn percent(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        100.0 * part / whole
    } else {
        0.0
    }
}

/// The three per-second flags a trend is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrendSample {
    pub ts: Timestamp,
    pub alone: bool,
    pub moving: bool,
    pub supervised: bool,
}

impl From<&LogicalState> for TrendSample {
    fn from(s: &LogicalState) -> Self {
        Self {
            ts: s.ts,
            alone: s.patient_alone,
            moving: s.moving,
            supervised: s.supervised_by_staff,
        }
    }
}

fn check_states(states: &[LogicalState]) -> Result<(), TrendError> {
    let Some(first) = states.first() else {
        return Ok(());
    };
    for (i, pair) in states.windows(2).enumerate() {
        if pair[1].session_id != first.session_id {
            return Err(TrendError::MixedSessions(
                first.session_id.clone(),
                pair[1].session_id.clone(),
            ));
        }
        if pair[1].ts <= pair[0].ts {
            return Err(TrendError::UnsortedInput {
                index: i + 1,
                ts: pair[1].ts,
            });
        }
    }
    Ok(())
}

/// Per clock hour: seconds with each flag set, in minutes. Missing seconds
/// count toward neither the states nor `monitored_minutes`; hours without
/// any second produce no row.
pub fn aggregate_samples(
    session_id: &SessionId,
    samples: &[TrendSample],
) -> Result<Vec<HourlyTrend>, TrendError> {
    for (i, pair) in samples.windows(2).enumerate() {
        if pair[1].ts <= pair[0].ts {
            return Err(TrendError::UnsortedInput {
                index: i + 1,
                ts: pair[1].ts,
            });
        }
    }
    #[derive(Default)]
    struct Counts {
        present: u32,
        alone: u32,
        alone_moving: u32,
        supervised: u32,
        moving: u32,
    }
    let mut hours: BTreeMap<i64, Counts> = BTreeMap::new();
    for s in samples {
        let c = hours.entry(s.ts.div_euclid(3600)).or_default();
        c.present += 1;
        c.alone += s.alone as u32;
        c.moving += s.moving as u32;
        c.alone_moving += (s.alone && s.moving) as u32;
        c.supervised += s.supervised as u32;
    }
    Ok(hours
        .into_iter()
        .map(|(key, c)| {
            let (date, hour) = date_hour(key * 3600);
            HourlyTrend {
                session_id: session_id.clone(),
                date,
                hour,
                monitored_minutes: c.present as f64 / 60.0,
                alone: c.alone as f64 / 60.0,
                alone_and_moving: c.alone_moving as f64 / 60.0,
                supervised_by_staff: c.supervised as f64 / 60.0,
                moving: c.moving as f64 / 60.0,
            }
        })
        .collect())
}

/// Hourly trends of one session's states; "alone" is `patient_alone`.
pub fn aggregate_hourly(states: &[LogicalState]) -> Result<Vec<HourlyTrend>, TrendError> {
    check_states(states)?;
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let samples: Vec<TrendSample> = states.iter().map(TrendSample::from).collect();
    aggregate_samples(&first.session_id, &samples)
}

/// Normative value for one hour of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortHour {
    pub hour: u32,
    /// Patient-day rows contributing to this hour.
    pub patient_days: usize,
    pub monitored_minutes: Option<f64>,
    pub alone: Option<f64>,
    pub alone_and_moving: Option<f64>,
    pub supervised_by_staff: Option<f64>,
    pub moving: Option<f64>,
}

/// Unweighted mean per hour of day across the patient-day rows that have
/// that hour. Always 24 rows; hours without data carry `None`.
pub fn cohort_average(trends: &[HourlyTrend]) -> Vec<CohortHour> {
    let mut sorted: Vec<&HourlyTrend> = trends.iter().collect();
    sorted.sort_by(|a, b| (a.hour, &a.session_id, a.date).cmp(&(b.hour, &b.session_id, b.date)));
    (0..24)
        .map(|hour| {
            let rows: Vec<&&HourlyTrend> = sorted.iter().filter(|t| t.hour == hour).collect();
            let n = rows.len();
            let mean = |f: fn(&HourlyTrend) -> f64| {
                (n > 0).then(|| rows.iter().map(|t| f(t)).sum::<f64>() / n as f64)
            };
            CohortHour {
                hour,
                patient_days: n,
                monitored_minutes: mean(|t| t.monitored_minutes),
                alone: mean(|t| t.alone),
                alone_and_moving: mean(|t| t.alone_and_moving),
                supervised_by_staff: mean(|t| t.supervised_by_staff),
                moving: mean(|t| t.moving),
            }
        })
        .collect()
}

/// Human-logged periods during which the patient was alone. Intervals are
/// half-open `[start, end)`, sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    pub session_id: SessionId,
    intervals: Vec<(Timestamp, Timestamp)>,
}

impl ObservationLog {
    pub fn new(
        session_id: SessionId,
        mut intervals: Vec<(Timestamp, Timestamp)>,
    ) -> Result<Self, TrendError> {
        if let Some(&(s, e)) = intervals.iter().find(|(s, e)| e <= s) {
            return Err(TrendError::InvalidInterval(s, e));
        }
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(TrendError::OverlappingIntervals(
                    w[0].0, w[0].1, w[1].0, w[1].1,
                ));
            }
        }
        Ok(Self {
            session_id,
            intervals,
        })
    }

    /// Merges runs of consecutive alone seconds into intervals.
    pub fn from_seconds(
        session_id: SessionId,
        seconds: impl IntoIterator<Item = (Timestamp, bool)>,
    ) -> Self {
        let mut intervals: Vec<(Timestamp, Timestamp)> = Vec::new();
        for (ts, alone) in seconds {
            if !alone {
                continue;
            }
            match intervals.last_mut() {
                Some(last) if last.1 == ts => last.1 = ts + 1,
                _ => intervals.push((ts, ts + 1)),
            }
        }
        Self {
            session_id,
            intervals,
        }
    }

    pub fn intervals(&self) -> &[(Timestamp, Timestamp)] {
        &self.intervals
    }

    pub fn alone_seconds(&self) -> i64 {
        self.intervals.iter().map(|(s, e)| e - s).sum()
    }
}

/// Half-open span of session seconds `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecondGrid {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl SecondGrid {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest grid covering all `states`.
    pub fn spanning(states: &[LogicalState]) -> Option<Self> {
        let first = states.first()?;
        let last = states.last()?;
        Some(Self::new(first.ts, last.ts + 1))
    }
}

/// Per-second alone flags for `grid` (index 0 is `grid.start`).
pub fn log_to_states(log: &ObservationLog, grid: SecondGrid) -> Result<Vec<bool>, TrendError> {
    let mut out = vec![false; grid.len()];
    let mut prev_end = Timestamp::MIN;
    for &(s, e) in &log.intervals {
        if s < prev_end {
            return Err(TrendError::OverlappingIntervals(s, e, s, prev_end));
        }
        if s < grid.start || e > grid.end {
            return Err(TrendError::IntervalOutOfBounds {
                start: s,
                end: e,
                grid_start: grid.start,
                grid_end: grid.end,
            });
        }
        out[(s - grid.start) as usize..(e - grid.start) as usize]
            .iter_mut()
            .for_each(|v| *v = true);
        prev_end = e;
    }
    Ok(out)
}

/// Per-second alone flags from `log` aligned to each state's timestamp.
pub fn log_alone_for(
    states: &[LogicalState],
    log: &ObservationLog,
) -> Result<Vec<bool>, TrendError> {
    check_states(states)?;
    let grid = SecondGrid::spanning(states).ok_or(TrendError::EmptyInput)?;
    if log.session_id != states[0].session_id {
        return Err(TrendError::SessionMismatch {
            log: log.session_id.clone(),
            states: states[0].session_id.clone(),
        });
    }
    let flags = log_to_states(log, grid)?;
    Ok(states
        .iter()
        .map(|s| flags[(s.ts - grid.start) as usize])
        .collect())
}

/// Hourly trends with the AI's alone status replaced by the logged one;
/// moving and supervised stay as inferred.
pub fn assisted_trends(
    states: &[LogicalState],
    log: &ObservationLog,
) -> Result<Vec<HourlyTrend>, TrendError> {
    let alone = log_alone_for(states, log)?;
    let samples: Vec<TrendSample> = states
        .iter()
        .zip(alone)
        .map(|(s, a)| TrendSample {
            alone: a,
            ..TrendSample::from(s)
        })
        .collect();
    aggregate_samples(&states[0].session_id, &samples)
}
