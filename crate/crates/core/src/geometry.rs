//! Regions of interest: polygons, pixel masks and boundary crossings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, DetectionRecord, ObjectClass, SessionId, Timestamp};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("expansion factor must be >= 0, got {0}")]
    NegativeFactor(f64),
    #[error("expected a person box, got {0:?}")]
    WrongClass(ObjectClass),
    #[error("zone mask is {zone:?} but frame is {frame:?}")]
    ZoneDimensionMismatch {
        zone: (usize, usize),
        frame: (usize, usize),
    },
    #[error("records are not consecutive seconds ({prev} -> {cur})")]
    NotConsecutive { prev: Timestamp, cur: Timestamp },
    #[error("records belong to different sessions ({0} vs {1})")]
    SessionMismatch(SessionId, SessionId),
}

/// Simple polygon with implicitly closed vertex list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = GeometryError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Polygon::new(v.into_iter().map(|[x, y]| (x, y)).collect())
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices.into_iter().map(|(x, y)| [x, y]).collect()
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if vertices
            .iter()
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(GeometryError::DegeneratePolygon("non-finite vertex".into()));
        }
        let p = Self { vertices };
        if p.signed_area().abs() <= f64::EPSILON {
            return Err(GeometryError::DegeneratePolygon("zero area".into()));
        }
        // Non-adjacent edges must not touch.
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = p.edge(i);
                let (c, d) = p.edge(j);
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(p)
    }

    /// Axis-aligned rectangle `[x, x + w] x [y, y + h]`.
    pub fn rect(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(vec![(x, y), (x + w, y), (x + w, y + h), (x, y + h)])
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn edge(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        (
            self.vertices[i],
            self.vertices[(i + 1) % self.vertices.len()],
        )
    }

    pub fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        (0..self.vertices.len()).map(move |i| self.edge(i))
    }

    /// Shoelace area, positive for counter-clockwise order in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        self.edges()
            .map(|(a, b)| a.0 * b.1 - b.0 * a.1)
            .sum::<f64>()
            / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(a, b)| (b.0 - a.0).hypot(b.1 - a.1))
            .sum()
    }

    /// Area centroid.
    pub fn centroid(&self) -> (f64, f64) {
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.edges() {
            let c = p.0 * q.1 - q.0 * p.1;
            cx += (p.0 + q.0) * c;
            cy += (p.1 + q.1) * c;
        }
        (cx / (6.0 * a), cy / (6.0 * a))
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let mut sign = 0.0f64;
        for i in 0..n {
            let c = cross(
                self.vertices[i],
                self.vertices[(i + 1) % n],
                self.vertices[(i + 2) % n],
            );
            if c != 0.0 {
                if sign != 0.0 && c.signum() != sign {
                    return false;
                }
                sign = c.signum();
            }
        }
        true
    }

    /// Independent per-axis scaling about the origin, e.g. to move between
    /// analysis and flow resolution.
    pub fn scaled(&self, sx: f64, sy: f64) -> Result<Self, GeometryError> {
        Self::new(
            self.vertices
                .iter()
                .map(|&(x, y)| (x * sx, y * sy))
                .collect(),
        )
    }

    /// Even-odd containment of a point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.1 <= y) != (b.1 <= y) {
                let xi = a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if x < xi {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Grows `p` by scaling it about its area centroid by `1 + factor`; the
/// perimeter scales by the same ratio.
pub fn expand_polygon(p: &Polygon, factor: f64) -> Result<Polygon, GeometryError> {
    if factor.is_nan() || factor < 0.0 {
        return Err(GeometryError::NegativeFactor(factor));
    }
    if p.area() <= f64::EPSILON {
        return Err(GeometryError::DegeneratePolygon("zero area".into()));
    }
    if factor == 0.0 {
        return Ok(p.clone());
    }
    let (cx, cy) = p.centroid();
    let s = 1.0 + factor;
    Ok(Polygon {
        vertices: p
            .vertices
            .iter()
            .map(|&(x, y)| (cx + (x - cx) * s, cy + (y - cy) * s))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiKind {
    Scene,
    Bed,
    SafetyZone,
}

/// One bit per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    kind: RoiKind,
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl RoiMask {
    pub fn empty(kind: RoiKind, width: usize, height: usize) -> Self {
        Self {
            kind,
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn scene(width: usize, height: usize) -> Self {
        let n = width * height;
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if !n.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        Self {
            kind: RoiKind::Scene,
            width,
            height,
            words,
        }
    }

    /// Pixels whose centres fall inside `[x, x + w) x [y, y + h)`.
    pub fn from_box(kind: RoiKind, width: usize, height: usize, b: &BoundingBox) -> Self {
        let mut mask = Self::empty(kind, width, height);
        let (c0, c1) = center_span(b.x, b.right(), width);
        let (r0, r1) = center_span(b.y, b.bottom(), height);
        for y in r0..r1 {
            for x in c0..c1 {
                mask.set(x, y, true);
            }
        }
        mask
    }

    fn from_rows(kind: RoiKind, width: usize, height: usize, rows: &[bool]) -> Self {
        let mut mask = Self::empty(kind, width, height);
        for (i, _) in rows.iter().enumerate().filter(|(_, &b)| b) {
            mask.words[i / 64] |= 1 << (i % 64);
        }
        mask
    }

    pub fn kind(&self) -> RoiKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.width + x;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        let i = y * self.width + x;
        if on {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Whether the pixel containing point `(x, y)` is set. Points on the far
    /// frame edge map to the last row/column; points outside are not set.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        if !(x >= 0.0 && y >= 0.0 && x <= self.width as f64 && y <= self.height as f64) {
            return false;
        }
        let px = (x.floor() as usize).min(self.width - 1);
        let py = (y.floor() as usize).min(self.height - 1);
        self.get(px, py)
    }

    /// True if every bit set in `other` is set here.
    pub fn is_superset_of(&self, other: &RoiMask) -> bool {
        self.dims() == other.dims()
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| b & !a == 0)
    }
}

/// Index range of pixel centres (i + 0.5) lying in `[lo, hi)`, clipped.
fn center_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let start = (lo - 0.5).ceil().max(0.0);
    let end = (hi - 0.5).ceil().min(n as f64);
    if end <= start {
        return (0, 0);
    }
    (start as usize, end as usize)
}

/// Scanline rasterisation: pixel `(i, j)` is set iff its centre lies inside
/// `p` under the even-odd rule. Parts of `p` outside the frame are dropped.
pub fn rasterize(p: &Polygon, kind: RoiKind, width: usize, height: usize) -> RoiMask {
    let mut bits = vec![false; width * height];
    par::for_each_row(&mut bits, width, |j, row| {
        let yc = j as f64 + 0.5;
        let mut xs: Vec<f64> = p
            .edges()
            .filter(|(a, b)| (a.1 <= yc) != (b.1 <= yc))
            .map(|(a, b)| a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1))
            .collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        for pair in xs.chunks_exact(2) {
            let (c0, c1) = center_span(pair[0], pair[1], width);
            row[c0..c1].iter_mut().for_each(|b| *b = true);
        }
    });
    RoiMask::from_rows(kind, width, height, &bits)
}

/// Rectangle mask of the most confident bed box, if any.
pub fn bed_roi_from_detection(
    rec: &DetectionRecord,
    width: usize,
    height: usize,
) -> Option<RoiMask> {
    let bed = rec.best_of(ObjectClass::Bed)?;
    let clamped = bed.clamped(width as f64, height as f64)?;
    Some(RoiMask::from_box(RoiKind::Bed, width, height, &clamped))
}

/// Bottom-centre of a person box, used as a foot-position proxy.
pub fn anchor_point(b: &BoundingBox) -> Result<(f64, f64), GeometryError> {
    if b.cls != ObjectClass::Person {
        return Err(GeometryError::WrongClass(b.cls));
    }
    Ok((b.x + b.w / 2.0, b.y + b.h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingDirection {
    Exit,
    Entry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub session_id: SessionId,
    pub ts: Timestamp,
    pub direction: CrossingDirection,
    /// Index into the current second's boxes.
    pub person_index: usize,
}

/// Greedy nearest-anchor matching between two frames' persons.
///
/// Returns `(prev_box_index, cur_box_index)` pairs whose anchors lie within
/// `gate` pixels, claimed in order of increasing distance.
pub fn match_anchors(
    prev: &DetectionRecord,
    cur: &DetectionRecord,
    gate: f64,
) -> Vec<(usize, usize)> {
    let anchors = |rec: &DetectionRecord| -> Vec<(usize, (f64, f64))> {
        rec.persons()
            .filter_map(|(i, b, _)| anchor_point(b).ok().map(|a| (i, a)))
            .collect()
    };
    let (pa, ca) = (anchors(prev), anchors(cur));
    let mut candidates = Vec::new();
    for &(i, a) in &pa {
        for &(j, b) in &ca {
            let d = (a.0 - b.0).hypot(a.1 - b.1);
            if d <= gate {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_prev = vec![false; prev.boxes.len()];
    let mut used_cur = vec![false; cur.boxes.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_prev[i] && !used_cur[j] {
            used_prev[i] = true;
            used_cur[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_by_key(|&(_, j)| j);
    pairs
}

/// Zone exits and entries between two consecutive seconds.
///
/// `gate_frac` is the matching gate as a fraction of the frame diagonal.
pub fn detect_crossings(
    prev: &DetectionRecord,
    cur: &DetectionRecord,
    zone: &RoiMask,
    frame_dims: (usize, usize),
    gate_frac: f64,
) -> Result<Vec<CrossingEvent>, GeometryError> {
    if zone.dims() != frame_dims {
        return Err(GeometryError::ZoneDimensionMismatch {
            zone: zone.dims(),
            frame: frame_dims,
        });
    }
    if prev.session_id != cur.session_id {
        return Err(GeometryError::SessionMismatch(
            prev.session_id.clone(),
            cur.session_id.clone(),
        ));
    }
    if prev.ts + 1 != cur.ts {
        return Err(GeometryError::NotConsecutive {
            prev: prev.ts,
            cur: cur.ts,
        });
    }
    let gate = gate_frac * (frame_dims.0 as f64).hypot(frame_dims.1 as f64);
    let inside = |b: &BoundingBox| {
        let (x, y) = anchor_point(b).expect("persons only");
        zone.contains_point(x, y)
    };
    Ok(match_anchors(prev, cur, gate)
        .into_iter()
        .filter_map(|(i, j)| {
            let direction = match (inside(&prev.boxes[i]), inside(&cur.boxes[j])) {
                (true, false) => CrossingDirection::Exit,
                (false, true) => CrossingDirection::Entry,
                _ => return None,
            };
            Some(CrossingEvent {
                session_id: cur.session_id.clone(),
                ts: cur.ts,
                direction,
                person_index: j,
            })
        })
        .collect())
}
