//! ROC curves and area under the curve normalized to a false-alarm cutoff.
//!
//! The curve is a threshold sweep over unique scores in descending order, so
//! tied scores collapse into a single step and the result does not depend on
//! input order. The normalized area restricts the curve to false-positive
//! rates in `[0, cutoff]` (linearly interpolating at the cutoff) and divides
//! by the cutoff, giving a value in `[0, 1]`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio;

/// One detection score paired with instance-level truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredInstance {
    pub score: f64,
    pub is_target: bool,
}

impl ScoredInstance {
    pub fn new(score: f64, is_target: bool) -> Self {
        ScoredInstance { score, is_target }
    }
}

/// One vertex of the ROC step function: the rates obtained by classifying
/// every instance with score `>= threshold` as a detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC vertices ordered by descending threshold, from `(inf, 0, 0)` to the
/// point classifying everything as a detection.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    /// Builds a curve from explicit vertices, checking the sweep shape:
    /// starts at (0, 0), rates within [0, 1] and non-decreasing, thresholds
    /// strictly decreasing.
    pub fn from_points(points: Vec<RocPoint>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Invalid("ROC curve needs at least one point".into()))?;
        if first.fpr != 0.0 || first.tpr != 0.0 {
            return Err(Error::Invalid("ROC curve must start at fpr 0, tpr 0".into()));
        }
        for pair in points.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if !(b.threshold < a.threshold) {
                return Err(Error::Invalid("ROC thresholds must strictly decrease".into()));
            }
            if b.fpr < a.fpr || b.tpr < a.tpr {
                return Err(Error::Invalid("ROC rates must be non-decreasing".into()));
            }
        }
        for p in &points {
            if !(0.0..=1.0).contains(&p.fpr) || !(0.0..=1.0).contains(&p.tpr) {
                return Err(Error::Invalid("ROC rates must lie in [0, 1]".into()));
            }
        }
        Ok(RocCurve { points })
    }

    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    /// Writes `threshold,fpr,tpr`; the opening threshold is written as `inf`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = textio::create(path)?;
        writeln!(out, "threshold,fpr,tpr").map_err(|e| Error::io(path, e))?;
        for p in &self.points {
            let threshold = if p.threshold == f64::INFINITY {
                "inf".to_string()
            } else {
                textio::fmt_f64(p.threshold)
            };
            writeln!(out, "{},{},{}", threshold, textio::fmt_f64(p.fpr), textio::fmt_f64(p.tpr))
                .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Threshold sweep over unique scores, descending, with tied scores grouped
/// into one step. Requires both classes to be present and all scores finite.
pub fn roc_curve(scored: &[ScoredInstance]) -> Result<RocCurve> {
    let mut num_positive = 0usize;
    let mut num_negative = 0usize;
    for s in scored {
        if !s.score.is_finite() {
            return Err(Error::Invalid(format!("scores must be finite, got {}", s.score)));
        }
        if s.is_target {
            num_positive += 1;
        } else {
            num_negative += 1;
        }
    }
    if num_positive == 0 {
        return Err(Error::SingleClass("ROC needs at least one target instance"));
    }
    if num_negative == 0 {
        return Err(Error::SingleClass("ROC needs at least one non-target instance"));
    }

    let mut sorted: Vec<&ScoredInstance> = scored.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].is_target {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / num_negative as f64,
            tpr: tp as f64 / num_positive as f64,
        });
    }
    Ok(RocCurve { points })
}

/// Area under the curve on `fpr in [0, cutoff]`, divided by `cutoff`.
pub fn nauc(curve: &RocCurve, far_cutoff: f64) -> Result<f64> {
    nauc_flagged(curve, far_cutoff).map(|(value, _)| value)
}

/// Like [`nauc`], also reporting whether the curve ended short of the cutoff
/// and its last tpr had to be extended horizontally.
pub fn nauc_flagged(curve: &RocCurve, far_cutoff: f64) -> Result<(f64, bool)> {
    if !(far_cutoff > 0.0 && far_cutoff <= 1.0) {
        return Err(Error::Invalid(format!(
            "false-alarm cutoff must be in (0, 1], got {far_cutoff}"
        )));
    }
    let points = &curve.points;
    let mut area = 0.0;
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.fpr <= far_cutoff {
            area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
        } else {
            if a.fpr < far_cutoff {
                let t = (far_cutoff - a.fpr) / (b.fpr - a.fpr);
                let tpr_at_cutoff = a.tpr + t * (b.tpr - a.tpr);
                area += (far_cutoff - a.fpr) * (a.tpr + tpr_at_cutoff) / 2.0;
            }
            return Ok((area / far_cutoff, false));
        }
    }
    let last = points.last().expect("validated non-empty");
    if last.fpr < far_cutoff {
        area += (far_cutoff - last.fpr) * last.tpr;
        return Ok((area / far_cutoff, true));
    }
    Ok((area / far_cutoff, false))
}
