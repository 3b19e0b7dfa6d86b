//! Frame-level detection metrics and trend accuracy against observation
//! logs.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BoundingBox, CanonicalRow, LogicalState, ObjectClass, PipelineConfig, Role, SessionId,
    Timestamp,
};
use crate::par;
use crate::trend::{date_hour, log_alone_for, ObservationLog, TrendError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("target has a single class; use manual accuracy")]
    SingleClassTarget,
    #[error("logistic fit did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no samples in period")]
    EmptyPeriod,
    #[error("frame sets are misaligned at position {0}")]
    MisalignedFrames(usize),
    #[error("states and log share no evaluable seconds")]
    NoOverlap,
    #[error(transparent)]
    Trend(#[from] TrendError),
}

/// Ground-truth box with an optional person role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub cls: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default = "one")]
    pub conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

fn one() -> f64 {
    1.0
}

impl LabeledBox {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.cls, self.x, self.y, self.w, self.h, self.conf)
    }
}

/// Manual annotation of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub session_id: SessionId,
    pub ts: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    pub boxes: Vec<LabeledBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_bed: Option<bool>,
    #[serde(default)]
    pub exception: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_alone: Option<bool>,
}

impl FrameLabel {
    /// Explicit flag if annotated, otherwise fewer than two people with at
    /// least one patient among them.
    pub fn patient_alone_flag(&self) -> bool {
        self.patient_alone.unwrap_or_else(|| {
            let persons: Vec<_> = self
                .boxes
                .iter()
                .filter(|b| b.cls == ObjectClass::Person)
                .collect();
            persons.len() < 2 && persons.iter().any(|b| b.role == Some(Role::Patient))
        })
    }

    pub fn dims_or(&self, default: (usize, usize)) -> (usize, usize) {
        (
            self.width.unwrap_or(default.0),
            self.height.unwrap_or(default.1),
        )
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fneg: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, fneg: u64) -> Self {
        Self { tp, fp, fneg }
    }

    pub fn add(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fneg += other.fneg;
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fneg += 1,
            (false, false) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1; any zero denominator yields 0.
pub fn prf1(c: Confusion) -> Prf1 {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf1 {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMatching {
    /// `(pred_index, gt_index, iou)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub counts: Confusion,
}

/// Greedy matching by descending prediction confidence: each prediction
/// takes the unmatched ground truth with the highest IoU at or above the
/// threshold. Ties go to the earlier index.
pub fn match_boxes(preds: &[BoundingBox], gts: &[BoundingBox], iou_threshold: f64) -> BoxMatching {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&preds[p], gt);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            taken[g] = true;
            pairs.push((p, g, v));
        }
    }
    let tp = pairs.len() as u64;
    BoxMatching {
        counts: Confusion::new(tp, preds.len() as u64 - tp, gts.len() as u64 - tp),
        pairs,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub counts: Confusion,
    #[serde(flatten)]
    pub scores: Prf1,
}

impl ClassMetrics {
    pub fn from_counts(counts: Confusion) -> Self {
        Self {
            counts,
            scores: prf1(counts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<ObjectClass, ClassMetrics>,
    /// Mean F1 over the object classes present in labels or predictions.
    pub macro_f1: f64,
    /// Patient-vs-rest on matched person pairs with a labelled role.
    pub patient_role: ClassMetrics,
    pub patient_alone: Option<ClassMetrics>,
    pub frames_evaluated: usize,
    pub frames_excluded: usize,
}

/// Binary metrics with "alone" as the positive class. Both slices must
/// list the same `(session, ts)` keys in the same order.
pub fn eval_patient_alone(
    preds: &[(SessionId, Timestamp, bool)],
    labels: &[(SessionId, Timestamp, bool)],
) -> Result<ClassMetrics, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch(preds.len(), labels.len()));
    }
    let mut c = Confusion::default();
    for (i, (p, l)) in preds.iter().zip(labels).enumerate() {
        if p.0 != l.0 || p.1 != l.1 {
            return Err(EvalError::MisalignedFrames(i));
        }
        c.record(p.2, l.2);
    }
    Ok(ClassMetrics::from_counts(c))
}

/// Frame-level evaluation of predicted rows against labels, joined on
/// `(session, ts)`. Labelled frames without a prediction count every
/// ground-truth box as missed.
pub fn evaluate_frames(
    labels: &[FrameLabel],
    preds: &[CanonicalRow],
    cfg: &PipelineConfig,
) -> EvalReport {
    let by_key: HashMap<(&SessionId, Timestamp), &CanonicalRow> =
        preds.iter().map(|r| ((&r.session_id, r.ts), r)).collect();
    let (kept, excluded): (Vec<&FrameLabel>, Vec<&FrameLabel>) = labels
        .iter()
        .partition(|l| !(cfg.exclude_exception_frames && l.exception));

    let per_frame = par::map(&kept, |label| {
        let row = by_key.get(&(&label.session_id, label.ts)).copied();
        frame_counts(label, row, cfg.iou_threshold)
    });

    let mut per_class: BTreeMap<ObjectClass, Confusion> = BTreeMap::new();
    let mut role = Confusion::default();
    for fc in &per_frame {
        for (cls, c) in &fc.classes {
            per_class.entry(*cls).or_default().add(*c);
        }
        role.add(fc.role);
    }
    per_class.retain(|_, c| c.tp + c.fp + c.fneg > 0);
    let per_class: BTreeMap<_, _> = per_class
        .into_iter()
        .map(|(k, c)| (k, ClassMetrics::from_counts(c)))
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|m| m.scores.f1).sum::<f64>() / per_class.len() as f64
    };

    let mut alone_pred = Vec::new();
    let mut alone_label = Vec::new();
    for label in &kept {
        if let Some(flags) = by_key
            .get(&(&label.session_id, label.ts))
            .and_then(|r| r.logical)
        {
            alone_pred.push((label.session_id.clone(), label.ts, flags.patient_alone));
            alone_label.push((
                label.session_id.clone(),
                label.ts,
                label.patient_alone_flag(),
            ));
        }
    }
    let patient_alone = if alone_pred.is_empty() {
        None
    } else {
        Some(eval_patient_alone(&alone_pred, &alone_label).expect("built aligned"))
    };

    EvalReport {
        per_class,
        macro_f1,
        patient_role: ClassMetrics::from_counts(role),
        patient_alone,
        frames_evaluated: kept.len(),
        frames_excluded: excluded.len(),
    }
}

struct FrameCounts {
    classes: Vec<(ObjectClass, Confusion)>,
    role: Confusion,
}

fn frame_counts(label: &FrameLabel, row: Option<&CanonicalRow>, thr: f64) -> FrameCounts {
    let mut classes = Vec::new();
    let mut role = Confusion::default();
    for cls in ObjectClass::ALL {
        let (pidx, preds): (Vec<usize>, Vec<BoundingBox>) = row
            .map(|r| {
                r.boxes
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.cls == cls)
                    .map(|(i, b)| (i, *b))
                    .unzip()
            })
            .unwrap_or_default();
        let gt_labels: Vec<&LabeledBox> = label.boxes.iter().filter(|b| b.cls == cls).collect();
        let gts: Vec<BoundingBox> = gt_labels.iter().map(|b| b.bbox()).collect();
        let m = match_boxes(&preds, &gts, thr);
        if cls == ObjectClass::Person {
            if let Some(r) = row {
                for &(p, g, _) in &m.pairs {
                    if let (Some(actual), Some(dist)) = (gt_labels[g].role, r.roles[pidx[p]]) {
                        role.record(dist.argmax() == Role::Patient, actual == Role::Patient);
                    }
                }
            }
        }
        classes.push((cls, m.counts));
    }
    FrameCounts { classes, role }
}

/// Ridge strength on both coefficients.
pub const LOGISTIC_RIDGE: f64 = 1e-6;
pub const LOGISTIC_TOL: f64 = 1e-8;
pub const LOGISTIC_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub weight: f64,
    /// In-sample accuracy at probability threshold 0.5.
    pub accuracy: f64,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn probability(&self, x: bool) -> f64 {
        sigmoid(self.intercept + if x { self.weight } else { 0.0 })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Single binary feature plus intercept, fitted by damped Newton-Raphson on
/// the mean negative log-likelihood with a small ridge.
pub fn fit_logistic(x: &[bool], y: &[bool]) -> Result<LogisticFit, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(EvalError::SingleClassTarget);
    }
    // Sufficient statistics per feature value: (count, positives).
    let mut n = [0f64; 2];
    let mut k = [0f64; 2];
    for (&xi, &yi) in x.iter().zip(y) {
        n[xi as usize] += 1.0;
        k[xi as usize] += yi as u8 as f64;
    }
    let total = x.len() as f64;
    let lambda = LOGISTIC_RIDGE;
    let objective = |b: f64, w: f64| {
        let z = [b, b + w];
        let nll: f64 = (0..2)
            .map(|g| n[g] * softplus(z[g]) - k[g] * z[g])
            .sum::<f64>()
            / total;
        nll + 0.5 * lambda * (b * b + w * w)
    };

    let (mut b, mut w) = (0.0f64, 0.0f64);
    let mut iterations = 0;
    loop {
        let p = [sigmoid(b), sigmoid(b + w)];
        let r = [n[0] * p[0] - k[0], n[1] * p[1] - k[1]];
        let gb = (r[0] + r[1]) / total + lambda * b;
        let gw = r[1] / total + lambda * w;
        if gb.hypot(gw) < LOGISTIC_TOL {
            break;
        }
        if iterations == LOGISTIC_MAX_ITER {
            return Err(EvalError::NonConvergence(iterations));
        }
        iterations += 1;
        let v = [n[0] * p[0] * (1.0 - p[0]), n[1] * p[1] * (1.0 - p[1])];
        let hbb = (v[0] + v[1]) / total + lambda;
        let hbw = v[1] / total;
        let hww = v[1] / total + lambda;
        let det = hbb * hww - hbw * hbw;
        let db = (hww * gb - hbw * gw) / det;
        let dw = (hbb * gw - hbw * gb) / det;
        let f0 = objective(b, w);
        let mut step = 1.0;
        while step > 1e-10 && objective(b - step * db, w - step * dw) > f0 {
            step *= 0.5;
        }
        b -= step * db;
        w -= step * dw;
    }

    let predict = |z: f64| sigmoid(z) >= 0.5;
    let correct: f64 = (0..2)
        .map(|g| {
            let z = if g == 1 { b + w } else { b };
            if predict(z) {
                k[g]
            } else {
                n[g] - k[g]
            }
        })
        .sum();
    Ok(LogisticFit {
        intercept: b,
        weight: w,
        accuracy: correct / total,
        iterations,
    })
}

/// Fraction of positions where `x` and `y` agree.
pub fn manual_accuracy(x: &[bool], y: &[bool]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(EvalError::EmptyPeriod);
    }
    Ok(x.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Day,
    Night,
    Full,
}

impl Period {
    pub const ALL: [Period; 3] = [Period::Day, Period::Night, Period::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Period::Day => "day",
            Period::Night => "night",
            Period::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMethod {
    Logistic,
    Manual,
}

/// Agreement of the AI alone stream with the log for one patient-day and
/// period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendAccuracyRow {
    pub session_id: SessionId,
    pub date: NaiveDate,
    pub period: Period,
    pub method: AccuracyMethod,
    pub accuracy: f64,
    pub seconds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub period: Period,
    pub patient_days: usize,
    pub mean: f64,
    /// Sample standard deviation across patient-days (0 for a single day).
    pub std: f64,
    pub logistic_days: usize,
    pub manual_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendAccuracyReport {
    pub rows: Vec<TrendAccuracyRow>,
    pub summary: Vec<PeriodSummary>,
}

fn period_accuracy(x: &[bool], y: &[bool]) -> Result<(AccuracyMethod, f64), EvalError> {
    match fit_logistic(x, y) {
        Ok(fit) => Ok((AccuracyMethod::Logistic, fit.accuracy)),
        Err(EvalError::SingleClassTarget) => Ok((AccuracyMethod::Manual, manual_accuracy(x, y)?)),
        Err(e) => Err(e),
    }
}

/// Per-second agreement for one session, split by patient-day and
/// day/night/full period. Periods without seconds are skipped.
/// Per-second AI labels paired with manual-log labels.
type Paired = (Vec<bool>, Vec<bool>);

pub fn trend_accuracy(
    states: &[LogicalState],
    log: &ObservationLog,
    cfg: &PipelineConfig,
) -> Result<Vec<TrendAccuracyRow>, EvalError> {
    if states.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    let truth = log_alone_for(states, log)?;
    let mut days: BTreeMap<NaiveDate, BTreeMap<Period, Paired>> = BTreeMap::new();
    for (s, &y) in states.iter().zip(&truth) {
        let (date, hour) = date_hour(s.ts);
        let part = if cfg.is_daytime(hour) {
            Period::Day
        } else {
            Period::Night
        };
        let day = days.entry(date).or_default();
        for p in [part, Period::Full] {
            let (xs, ys) = day.entry(p).or_default();
            xs.push(s.patient_alone);
            ys.push(y);
        }
    }
    let mut rows = Vec::new();
    for (date, periods) in days {
        for (period, (x, y)) in periods {
            let (method, accuracy) = period_accuracy(&x, &y)?;
            rows.push(TrendAccuracyRow {
                session_id: states[0].session_id.clone(),
                date,
                period,
                method,
                accuracy,
                seconds: x.len(),
            });
        }
    }
    Ok(rows)
}

pub fn summarize(rows: Vec<TrendAccuracyRow>) -> TrendAccuracyReport {
    let summary = Period::ALL
        .iter()
        .filter_map(|&period| {
            let sel: Vec<&TrendAccuracyRow> = rows.iter().filter(|r| r.period == period).collect();
            if sel.is_empty() {
                return None;
            }
            let n = sel.len() as f64;
            let mean = sel.iter().map(|r| r.accuracy).sum::<f64>() / n;
            let std = if sel.len() > 1 {
                (sel.iter().map(|r| (r.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Some(PeriodSummary {
                period,
                patient_days: sel.len(),
                mean,
                std,
                logistic_days: sel
                    .iter()
                    .filter(|r| r.method == AccuracyMethod::Logistic)
                    .count(),
                manual_days: sel
                    .iter()
                    .filter(|r| r.method == AccuracyMethod::Manual)
                    .count(),
            })
        })
        .collect();
    TrendAccuracyReport { rows, summary }
}

/// Trend accuracy over many sessions, evaluated in parallel and reported in
/// input order.
pub fn trend_accuracy_report(
    sessions: &[(Vec<LogicalState>, ObservationLog)],
    cfg: &PipelineConfig,
) -> Result<TrendAccuracyReport, EvalError> {
    let per = par::map(sessions, |(states, log)| trend_accuracy(states, log, cfg));
    let mut rows = Vec::new();
    for r in per {
        rows.extend(r?);
    }
    Ok(summarize(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LogicalFlags, RoleDistribution};

    fn b(x: f64, y: f64, w: f64, h: f64, conf: f64) -> BoundingBox {
        BoundingBox::new(ObjectClass::Person, x, y, w, h, conf)
    }

    #[test]
    fn identical_box_matches() {
        let m = match_boxes(
            &[b(0.0, 0.0, 10.0, 10.0, 0.9)],
            &[b(0.0, 0.0, 10.0, 10.0, 1.0)],
            0.5,
        );
        assert_eq!(m.counts, Confusion::new(1, 0, 0));
        assert_eq!(m.pairs[0].2, 1.0);
    }

    #[test]
    fn disjoint_boxes_miss() {
        let m = match_boxes(
            &[b(0.0, 0.0, 10.0, 10.0, 0.9)],
            &[b(50.0, 50.0, 10.0, 10.0, 1.0)],
            0.5,
        );
        assert_eq!(m.counts, Confusion::new(0, 1, 1));
        assert_eq!(
            iou(&b(0.0, 0.0, 1.0, 1.0, 1.0), &b(5.0, 5.0, 1.0, 1.0, 1.0)),
            0.0
        );
    }

    #[test]
    fn higher_confidence_claims_first() {
        // Both preds overlap the single gt; the confident one wins even
        // though the other overlaps more.
        let gt = [b(0.0, 0.0, 10.0, 10.0, 1.0)];
        let preds = [b(0.0, 0.0, 10.0, 10.0, 0.3), b(1.0, 0.0, 10.0, 10.0, 0.8)];
        let m = match_boxes(&preds, &gt, 0.5);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].0, 1);
        assert_eq!(m.counts, Confusion::new(1, 1, 0));
    }

    #[test]
    fn prf1_values() {
        let p = prf1(Confusion::new(9, 1, 1));
        assert!((p.precision - 0.9).abs() < 1e-12 && (p.recall - 0.9).abs() < 1e-12);
        assert!((p.f1 - 0.9).abs() < 1e-12);
        assert_eq!(prf1(Confusion::new(0, 0, 5)), Prf1::default());
        assert!((prf1(Confusion::new(92, 8, 8)).f1 - 0.92).abs() < 1e-12);
    }

    fn keyed(v: &[bool]) -> Vec<(SessionId, Timestamp, bool)> {
        v.iter()
            .enumerate()
            .map(|(i, &b)| ("s".into(), i as i64, b))
            .collect()
    }

    #[test]
    fn patient_alone_metrics() {
        let truth = [true, false, true, true, false];
        let perfect = eval_patient_alone(&keyed(&truth), &keyed(&truth)).unwrap();
        assert_eq!(perfect.scores.f1, 1.0);
        let inverted: Vec<bool> = truth.iter().map(|b| !b).collect();
        assert_eq!(
            eval_patient_alone(&keyed(&inverted), &keyed(&truth))
                .unwrap()
                .scores
                .f1,
            0.0
        );
        let mut shifted = keyed(&truth);
        shifted[2].1 = 99;
        assert_eq!(
            eval_patient_alone(&shifted, &keyed(&truth)),
            Err(EvalError::MisalignedFrames(2))
        );
    }

    #[test]
    fn manual_accuracy_cases() {
        let t = [true, true, false, true];
        let u = [true, false, false, true];
        assert_eq!(manual_accuracy(&t, &u).unwrap(), 0.75);
        assert_eq!(manual_accuracy(&t, &t).unwrap(), 1.0);
        let c: Vec<bool> = t.iter().map(|b| !b).collect();
        assert_eq!(manual_accuracy(&t, &c).unwrap(), 0.0);
        assert_eq!(manual_accuracy(&[], &[]), Err(EvalError::EmptyPeriod));
    }

    #[test]
    fn logistic_identity_and_single_class() {
        let x = [true, false, true, false, false, true];
        let fit = fit_logistic(&x, &x).unwrap();
        assert_eq!(fit.accuracy, 1.0);
        assert!(fit.iterations <= LOGISTIC_MAX_ITER);
        assert_eq!(
            fit_logistic(&x, &[true; 6]),
            Err(EvalError::SingleClassTarget)
        );
        assert!(fit.probability(true) > 0.99 && fit.probability(false) < 0.01);
    }

    #[test]
    fn logistic_matches_group_majorities() {
        // x=0: 3 of 4 positive -> predict 1; x=1: 1 of 5 positive -> predict 0.
        let x = [false, false, false, false, true, true, true, true, true];
        let y = [true, true, true, false, true, false, false, false, false];
        let fit = fit_logistic(&x, &y).unwrap();
        assert!((fit.accuracy - 7.0 / 9.0).abs() < 1e-12);
    }

    fn st(ts: Timestamp, alone: bool) -> LogicalState {
        LogicalState::from_flags(
            "s".into(),
            ts,
            LogicalFlags {
                person_alone: alone,
                patient_alone: alone,
                supervised_by_staff: false,
                moving: false,
                smoothed_person_count: 1.0,
            },
        )
    }

    #[test]
    fn night_all_alone_uses_manual() {
        let cfg = PipelineConfig::default();
        // One full day; log says alone all night and 08:00-12:00.
        let day0 = 86_400 * 10;
        let in_log = |ts: i64| {
            let h = (ts - day0) / 3600;
            !(6..21).contains(&h) || (8..12).contains(&h)
        };
        let states: Vec<_> = (0..86_400)
            .map(|t| st(day0 + t, (t / 60) % 3 == 0))
            .collect();
        let log = ObservationLog::from_seconds(
            "s".into(),
            (0..86_400).map(|t| (day0 + t, in_log(day0 + t))),
        );
        let rows = trend_accuracy(&states, &log, &cfg).unwrap();
        let night = rows.iter().find(|r| r.period == Period::Night).unwrap();
        assert_eq!(night.method, AccuracyMethod::Manual);
        let day = rows.iter().find(|r| r.period == Period::Day).unwrap();
        assert_eq!(day.method, AccuracyMethod::Logistic);
        assert_eq!(night.seconds + day.seconds, 86_400);

        let exact = ObservationLog::from_seconds(
            "s".into(),
            states.iter().map(|s| (s.ts, s.patient_alone)),
        );
        let rows = trend_accuracy(&states, &exact, &cfg).unwrap();
        assert!(rows.iter().all(|r| r.accuracy == 1.0));
        let rep = summarize(rows);
        assert_eq!(rep.summary.len(), 3);
        assert!(rep.summary.iter().all(|s| s.mean == 1.0 && s.std == 0.0));
    }

    #[test]
    fn frame_eval_role_and_exclusion() {
        let label = |ts: i64, role: Role, exception: bool| FrameLabel {
            session_id: "s".into(),
            ts,
            frame_id: None,
            width: None,
            height: None,
            boxes: vec![LabeledBox {
                cls: ObjectClass::Person,
                x: 0.0,
                y: 0.0,
                w: 10.0,
                h: 10.0,
                conf: 1.0,
                role: Some(role),
            }],
            in_bed: None,
            exception,
            patient_alone: None,
        };
        let pred = |ts: i64, role: Role| CanonicalRow {
            session_id: "s".into(),
            ts,
            boxes: vec![b(0.0, 0.0, 10.0, 10.0, 0.9)],
            roles: vec![Some(RoleDistribution::from_primary(role, 0.9))],
            motion: None,
            logical: None,
        };
        let labels = vec![
            label(0, Role::Patient, false),
            label(1, Role::Staff, false),
            label(2, Role::Patient, true),
        ];
        let preds = vec![
            pred(0, Role::Patient),
            pred(1, Role::Patient),
            pred(2, Role::Staff),
        ];
        let rep = evaluate_frames(&labels, &preds, &PipelineConfig::default());
        assert_eq!(rep.frames_evaluated, 2);
        assert_eq!(rep.frames_excluded, 1);
        assert_eq!(
            rep.per_class[&ObjectClass::Person].counts,
            Confusion::new(2, 0, 0)
        );
        assert_eq!(rep.patient_role.counts, Confusion::new(1, 1, 0));
        assert_eq!(rep.macro_f1, 1.0);
        assert!(rep.patient_alone.is_none());
    }
}
