//! Boundary to the object detector. The model itself lives elsewhere; these
//! adapters replay recorded detections or read them from a simulated
//! scenario.

use std::collections::HashMap;
use std::sync::Arc;

use crate::logic::{RawDetection, RoleConfidences};
use crate::model::{CanonicalRow, Frame, SessionId, Timestamp};
use crate::sim::Scenario;

use super::IoError;

pub trait DetectorPort: Send {
    /// Whether [`DetectorPort::detect`] looks at pixels. When false the
    /// runtime skips producing the detector-sized frame.
    fn needs_pixels(&self) -> bool {
        true
    }

    fn detect(
        &mut self,
        session: &SessionId,
        ts: Timestamp,
        frame: Option<&Frame>,
    ) -> Result<Vec<RawDetection>, IoError>;
}

/// Serves recorded detections keyed by `(session, ts)`.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    records: HashMap<(SessionId, Timestamp), Vec<RawDetection>>,
}

impl ReplayDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, session: SessionId, ts: Timestamp, dets: Vec<RawDetection>) {
        self.records.insert((session, ts), dets);
    }

    /// Stored rows back to detector output. Each person's distribution is
    /// reduced to its primary role and that role's score, which attribution
    /// maps back to the same distribution.
    pub fn from_rows(rows: &[CanonicalRow]) -> Self {
        let mut d = Self::new();
        for r in rows {
            let dets = r
                .boxes
                .iter()
                .zip(&r.roles)
                .map(|(b, role)| match role {
                    Some(dist) => {
                        let primary = dist.argmax();
                        RawDetection::new(*b, RoleConfidences::only(primary, dist.score(primary)))
                    }
                    None => RawDetection::object(*b),
                })
                .collect();
            d.insert(r.session_id.clone(), r.ts, dets);
        }
        d
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl DetectorPort for ReplayDetector {
    fn needs_pixels(&self) -> bool {
        false
    }

    fn detect(
        &mut self,
        session: &SessionId,
        ts: Timestamp,
        _frame: Option<&Frame>,
    ) -> Result<Vec<RawDetection>, IoError> {
        self.records
            .get(&(session.clone(), ts))
            .cloned()
            .ok_or_else(|| IoError::Adapter {
                session: session.clone(),
                ts,
                reason: "no recorded detections".into(),
            })
    }
}

/// Noisy detections straight from a simulated scenario.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    scenario: Arc<Scenario>,
}

impl SyntheticDetector {
    pub fn new(scenario: Arc<Scenario>) -> Self {
        Self { scenario }
    }
}

impl DetectorPort for SyntheticDetector {
    fn needs_pixels(&self) -> bool {
        false
    }

    fn detect(
        &mut self,
        session: &SessionId,
        ts: Timestamp,
        _frame: Option<&Frame>,
    ) -> Result<Vec<RawDetection>, IoError> {
        let adapter = |reason: &str| IoError::Adapter {
            session: session.clone(),
            ts,
            reason: reason.into(),
        };
        if session != self.scenario.session_id() {
            return Err(adapter("session not in scenario"));
        }
        self.scenario
            .detections_at(ts)
            .map(<[RawDetection]>::to_vec)
            .ok_or_else(|| adapter("ts outside scenario"))
    }
}
