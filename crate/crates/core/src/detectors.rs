//! ACE and SMF detection statistics, single-signature and dictionary-fused.
//!
//! Both statistics compare a whitened, mean-subtracted pixel against a
//! whitened signature. ACE is the cosine between the two (bounded to
//! [-1, 1]); SMF drops the pixel normalization, so its magnitude scales with
//! pixel energy. Signatures are whitened without mean subtraction.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::BagCollection;
use crate::error::{Error, Result};
use crate::learner::TargetDictionary;
use crate::textio;
use crate::vecmath;
use crate::whitening::BackgroundStats;

/// Which detection statistic to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Ace,
    Smf,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Ace => "ace",
            DetectorKind::Smf => "smf",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "ace" => Some(DetectorKind::Ace),
            "smf" => Some(DetectorKind::Smf),
            _ => None,
        }
    }
}

/// How per-signature scores combine into one dictionary score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Score of the best-matching signature (the default).
    Max,
    /// Average score across signatures, kept as an ablation.
    Mean,
}

impl Fusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::Max => "max",
            Fusion::Mean => "mean",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "max" => Some(Fusion::Max),
            "mean" => Some(Fusion::Mean),
            _ => None,
        }
    }
}

/// One scored instance, keyed the same way as ground truth records.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceScore {
    pub bag_id: i64,
    /// 0-based position within the bag.
    pub instance_index: usize,
    pub score: f64,
}

/// Batch result carrying both the fused score and the per-signature scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailedScore {
    pub bag_id: i64,
    pub instance_index: usize,
    pub score: f64,
    pub per_signature: Vec<f64>,
}

/// Whitens a signature (no mean subtraction) and normalizes it.
fn whitened_unit_signature(s: &[f64], stats: &BackgroundStats) -> Result<Vec<f64>> {
    stats.whiten_signature_unit(s)
}

fn score_whitened(unit_sig: &[f64], whitened_pixel: &[f64], kind: DetectorKind) -> Result<f64> {
    match kind {
        DetectorKind::Smf => Ok(vecmath::dot(unit_sig, whitened_pixel)),
        DetectorKind::Ace => {
            let unit_pixel = vecmath::normalized(whitened_pixel).ok_or_else(|| {
                Error::Degenerate(
                    "pixel equals the background mean, ACE statistic undefined".into(),
                )
            })?;
            Ok(vecmath::dot(unit_sig, &unit_pixel).clamp(-1.0, 1.0))
        }
    }
}

/// Scores one pixel against one signature in the original spectral space.
pub fn detect(
    x: &[f64],
    s: &[f64],
    stats: &BackgroundStats,
    kind: DetectorKind,
) -> Result<f64> {
    let unit_sig = whitened_unit_signature(s, stats)?;
    let whitened = stats.whiten(x)?;
    score_whitened(&unit_sig, &whitened, kind)
}

/// Scores one pixel against every dictionary signature and fuses the results.
pub fn detect_dictionary(
    x: &[f64],
    dict: &TargetDictionary,
    stats: &BackgroundStats,
    kind: DetectorKind,
    fusion: Fusion,
) -> Result<f64> {
    let units = dictionary_units(dict, stats)?;
    let whitened = stats.whiten(x)?;
    let mut scores = Vec::with_capacity(units.len());
    for unit in &units {
        scores.push(score_whitened(unit, &whitened, kind)?);
    }
    Ok(fuse(&scores, fusion))
}

/// Scores every instance of every bag, preserving bag order and in-bag order.
/// Scores are bit-identical to per-instance [`detect_dictionary`] calls.
pub fn detect_batch(
    collection: &BagCollection,
    dict: &TargetDictionary,
    stats: &BackgroundStats,
    kind: DetectorKind,
    fusion: Fusion,
) -> Result<Vec<InstanceScore>> {
    Ok(detect_batch_detailed(collection, dict, stats, kind, fusion)?
        .into_iter()
        .map(|d| InstanceScore {
            bag_id: d.bag_id,
            instance_index: d.instance_index,
            score: d.score,
        })
        .collect())
}

/// Like [`detect_batch`] but also reports each signature's score.
pub fn detect_batch_detailed(
    collection: &BagCollection,
    dict: &TargetDictionary,
    stats: &BackgroundStats,
    kind: DetectorKind,
    fusion: Fusion,
) -> Result<Vec<DetailedScore>> {
    if collection.dim() != stats.dim() {
        return Err(Error::dims(stats.dim(), collection.dim(), "bag collection"));
    }
    let units = dictionary_units(dict, stats)?;
    let mut out = Vec::with_capacity(collection.num_instances());
    for bag in collection.bags() {
        for (i, inst) in bag.instances().iter().enumerate() {
            let whitened = stats.whiten(inst.values())?;
            let mut per_signature = Vec::with_capacity(units.len());
            for unit in &units {
                per_signature.push(score_whitened(unit, &whitened, kind)?);
            }
            out.push(DetailedScore {
                bag_id: bag.id(),
                instance_index: i,
                score: fuse(&per_signature, fusion),
                per_signature,
            });
        }
    }
    Ok(out)
}

fn dictionary_units(dict: &TargetDictionary, stats: &BackgroundStats) -> Result<Vec<Vec<f64>>> {
    if dict.count() == 0 {
        return Err(Error::Invalid("dictionary is empty".into()));
    }
    if dict.dim() != stats.dim() {
        return Err(Error::dims(stats.dim(), dict.dim(), "dictionary"));
    }
    dict.output_signatures()
        .iter()
        .map(|s| whitened_unit_signature(s, stats))
        .collect()
}

fn fuse(scores: &[f64], fusion: Fusion) -> f64 {
    match fusion {
        Fusion::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Fusion::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    }
}

/// Writes scores as `bag_id,instance_index,score`; with `per_signature`, adds
/// one `score_<k>` column per dictionary signature (1-based).
pub fn save_scores(path: &Path, rows: &[DetailedScore], per_signature: bool) -> Result<()> {
    let mut out = textio::create(path)?;
    let width = rows.first().map(|r| r.per_signature.len()).unwrap_or(0);
    let mut header = String::from("bag_id,instance_index,score");
    if per_signature {
        for k in 1..=width {
            header.push_str(&format!(",score_{k}"));
        }
    }
    writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
    for row in rows {
        let mut line = format!(
            "{},{},{}",
            row.bag_id,
            row.instance_index,
            textio::fmt_f64(row.score)
        );
        if per_signature {
            if row.per_signature.len() != width {
                return Err(Error::Invalid(
                    "per-signature score rows have inconsistent widths".into(),
                ));
            }
            for v in &row.per_signature {
                line.push(',');
                line.push_str(&textio::fmt_f64(*v));
            }
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a scores CSV. Per-signature columns are optional; when present they
/// populate `per_signature`, otherwise it is empty.
pub fn load_scores(path: &Path) -> Result<Vec<DetailedScore>> {
    let reader = textio::open(path)?;
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 3
        || columns[0] != "bag_id"
        || columns[1] != "instance_index"
        || columns[2] != "score"
    {
        return Err(Error::parse(
            path,
            1,
            "header must start with bag_id,instance_index,score",
        ));
    }
    for (k, col) in columns[3..].iter().enumerate() {
        if *col != format!("score_{}", k + 1) {
            return Err(Error::parse(
                path,
                1,
                format!("expected column score_{}, got {col:?}", k + 1),
            ));
        }
    }
    let extra = columns.len() - 3;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} fields, got {}", columns.len(), fields.len()),
            ));
        }
        let bag_id: i64 = fields[0].trim().parse().map_err(|_| {
            Error::parse(path, line_no, format!("bag_id: not an integer: {:?}", fields[0]))
        })?;
        let instance_index = textio::parse_usize(path, line_no, "instance_index", fields[1])?;
        let score = textio::parse_f64(path, line_no, "score", fields[2])?;
        let mut per_signature = Vec::with_capacity(extra);
        for (f, col) in fields[3..].iter().zip(&columns[3..]) {
            per_signature.push(textio::parse_f64(path, line_no, col, f)?);
        }
        rows.push(DetailedScore {
            bag_id,
            instance_index,
            score,
            per_signature,
        });
    }
    Ok(rows)
}
