//! Bed placement statistics across camera installations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eval::FrameLabel;
use crate::model::{ObjectClass, SessionId};
use crate::par;

/// Printed into every output so the numbers carry their own definition.
pub const ANGLE_DEFINITION: &str =
    "angle_deg = atan2(cx_px - W/2, H - cy_px) in degrees; horizontal offset of the bed centroid against its distance from the bottom edge";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BedPlacementStat {
    pub session_id: SessionId,
    pub frame_id: String,
    pub area_fraction: f64,
    pub cx: f64,
    pub cy: f64,
    pub angle_deg: f64,
}

/// Placement of the highest-confidence bed box, or `None` when no bed is
/// labelled. Earlier boxes win confidence ties.
pub fn bed_stats(label: &FrameLabel, frame_dims: (usize, usize)) -> Option<BedPlacementStat> {
    let bed = label
        .boxes
        .iter()
        .filter(|b| b.cls == ObjectClass::Bed)
        .fold(
            None,
            |best: Option<&crate::eval::LabeledBox>, b| match best {
                Some(cur) if cur.conf >= b.conf => Some(cur),
                _ => Some(b),
            },
        )?;
    let (fw, fh) = (frame_dims.0 as f64, frame_dims.1 as f64);
    let clamped = bed.bbox().clamped(fw, fh)?;
    let cx_px = clamped.x + clamped.w / 2.0;
    let cy_px = clamped.y + clamped.h / 2.0;
    Some(BedPlacementStat {
        session_id: label.session_id.clone(),
        frame_id: label
            .frame_id
            .clone()
            .unwrap_or_else(|| label.ts.to_string()),
        area_fraction: clamped.area() / (fw * fh),
        cx: cx_px / fw,
        cy: cy_px / fh,
        angle_deg: (cx_px - fw / 2.0).atan2(fh - cy_px).to_degrees(),
    })
}

/// Stats for every label with a bed, using each label's own dimensions when
/// present.
pub fn bed_stats_all(labels: &[FrameLabel], default_dims: (usize, usize)) -> Vec<BedPlacementStat> {
    par::map(labels, |l| bed_stats(l, l.dims_or(default_dims)))
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramBins {
    pub centroid_x: usize,
    pub centroid_y: usize,
    pub area: usize,
    pub angle: usize,
}

impl Default for HistogramBins {
    fn default() -> Self {
        Self {
            centroid_x: 20,
            centroid_y: 20,
            area: 10,
            angle: 18,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementDistribution {
    pub bins: HistogramBins,
    /// Row-major `[y][x]` counts of normalized centroids.
    pub centroid: Vec<Vec<u64>>,
    /// `[area_bin][angle_bin]` counts; area over (0, 1], angle over [-90, 90].
    pub area_angle: Vec<Vec<u64>>,
    pub total: u64,
}

fn bin(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * n as f64).floor();
    (t.max(0.0) as usize).min(n - 1)
}

pub fn placement_distribution(
    stats: &[BedPlacementStat],
    bins: HistogramBins,
) -> PlacementDistribution {
    let mut centroid = vec![vec![0u64; bins.centroid_x]; bins.centroid_y];
    let mut area_angle = vec![vec![0u64; bins.angle]; bins.area];
    for s in stats {
        centroid[bin(s.cy, 0.0, 1.0, bins.centroid_y)][bin(s.cx, 0.0, 1.0, bins.centroid_x)] += 1;
        area_angle[bin(s.area_fraction, 0.0, 1.0, bins.area)]
            [bin(s.angle_deg, -90.0, 90.0, bins.angle)] += 1;
    }
    PlacementDistribution {
        bins,
        centroid,
        area_angle,
        total: stats.len() as u64,
    }
}

impl PlacementDistribution {
    /// Long-format CSV: `table,row_lo,row_hi,col_lo,col_hi,count`, preceded
    /// by comment lines carrying the schema and angle definition.
    pub fn write_csv<W: Write>(&self, mut out: W, schema_header: &str) -> std::io::Result<()> {
        writeln!(out, "{schema_header}")?;
        writeln!(out, "# {ANGLE_DEFINITION}")?;
        writeln!(out, "table,row_lo,row_hi,col_lo,col_hi,count")?;
        let b = self.bins;
        for (yi, row) in self.centroid.iter().enumerate() {
            for (xi, &c) in row.iter().enumerate() {
                let (ylo, yhi) = edges(yi, 0.0, 1.0, b.centroid_y);
                let (xlo, xhi) = edges(xi, 0.0, 1.0, b.centroid_x);
                writeln!(out, "centroid_yx,{ylo},{yhi},{xlo},{xhi},{c}")?;
            }
        }
        for (ai, row) in self.area_angle.iter().enumerate() {
            for (gi, &c) in row.iter().enumerate() {
                let (alo, ahi) = edges(ai, 0.0, 1.0, b.area);
                let (glo, ghi) = edges(gi, -90.0, 90.0, b.angle);
                writeln!(out, "area_angle,{alo},{ahi},{glo},{ghi},{c}")?;
            }
        }
        Ok(())
    }
}

fn edges(i: usize, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let step = (hi - lo) / n as f64;
    (lo + step * i as f64, lo + step * (i + 1) as f64)
}

pub fn write_stats_csv<W: Write>(
    stats: &[BedPlacementStat],
    mut out: W,
    schema_header: &str,
) -> std::io::Result<()> {
    writeln!(out, "{schema_header}")?;
    writeln!(out, "# {ANGLE_DEFINITION}")?;
    writeln!(out, "session_id,frame_id,area_fraction,cx,cy,angle_deg")?;
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.session_id, s.frame_id, s.area_fraction, s.cx, s.cy, s.angle_deg
        )?;
    }
    Ok(())
}
