//! Dictionary training: alternating optimization over representatives, bag
//! assignments, pruning, and closed-form signature updates.
//!
//! All optimization happens in whitened space (instances additionally
//! unit-normalized for ACE). The objective balances three terms: the mean
//! score of each positive bag's best representative under its assigned
//! signature, the mean background response, and a uniqueness penalty on
//! pairwise signature similarity. Each signature update has a closed form:
//! the average of its assigned representatives, minus the average negative
//! instance, minus a scaled sum of the other signatures, renormalized.

mod kmeans;

pub use kmeans::kmeans;

use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

use crate::data::BagCollection;
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::textio;
use crate::vecmath;
use crate::whitening::{BackgroundSource, BackgroundStats, DEFAULT_EIGENVALUE_FLOOR_REL};

/// Signature movement below which an iteration counts as a numerical fixed
/// point (checked on top of unchanged representatives and assignments).
const MOVEMENT_TOLERANCE: f64 = 1e-12;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Number of signatures to initialize (K). Pruning may return fewer.
    pub initial_targets: usize,
    /// Weight of the uniqueness penalty (alpha).
    pub uniqueness_weight: f64,
    /// K-Means candidate count (C); `None` resolves to
    /// `min(10 * K, number of positive instances)`.
    pub kmeans_clusters: Option<usize>,
    pub kmeans_max_iter: usize,
    /// Cap on alternating-optimization iterations.
    pub max_iter: usize,
    pub detector: DetectorKind,
    pub seed: u64,
    pub background_source: BackgroundSource,
    /// Relative eigenvalue floor for background whitening.
    pub eigenvalue_floor_rel: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            initial_targets: 1,
            uniqueness_weight: 0.0,
            kmeans_clusters: None,
            kmeans_max_iter: 100,
            max_iter: 1000,
            detector: DetectorKind::Ace,
            seed: 0,
            background_source: BackgroundSource::NegativeBagsOnly,
            eigenvalue_floor_rel: DEFAULT_EIGENVALUE_FLOOR_REL,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_targets == 0 {
            return Err(Error::Invalid("initial_targets must be at least 1".into()));
        }
        if !(self.uniqueness_weight >= 0.0 && self.uniqueness_weight.is_finite()) {
            return Err(Error::Invalid(format!(
                "uniqueness_weight must be non-negative and finite, got {}",
                self.uniqueness_weight
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::Invalid("kmeans_max_iter must be at least 1".into()));
        }
        if self.kmeans_clusters == Some(0) {
            return Err(Error::Invalid("kmeans_clusters must be at least 1".into()));
        }
        Ok(())
    }

    /// The candidate count actually used for `num_positive_instances`.
    pub fn resolved_clusters(&self, num_positive_instances: usize) -> usize {
        self.kmeans_clusters
            .unwrap_or_else(|| (10 * self.initial_targets).min(num_positive_instances))
    }
}

/// The learned dictionary: unit-norm whitened signatures paired with their
/// de-whitened, renormalized counterparts in the original spectral space.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDictionary {
    whitened: Vec<Vec<f64>>,
    output: Vec<Vec<f64>>,
}

impl TargetDictionary {
    /// Builds a dictionary from unit-norm whitened signatures, de-whitening
    /// each through `stats`.
    pub fn from_whitened(whitened: Vec<Vec<f64>>, stats: &BackgroundStats) -> Result<Self> {
        if whitened.is_empty() {
            return Err(Error::Invalid("dictionary needs at least one signature".into()));
        }
        let mut output = Vec::with_capacity(whitened.len());
        for (k, s) in whitened.iter().enumerate() {
            check_unit(s, k, stats.dim())?;
            output.push(stats.dewhiten_signature(s)?);
        }
        Ok(TargetDictionary { whitened, output })
    }

    /// Builds a dictionary from unit-norm signatures in the original space,
    /// deriving the whitened form of each through `stats`.
    pub fn from_output(output: Vec<Vec<f64>>, stats: &BackgroundStats) -> Result<Self> {
        if output.is_empty() {
            return Err(Error::Invalid("dictionary needs at least one signature".into()));
        }
        let mut whitened = Vec::with_capacity(output.len());
        for (k, s) in output.iter().enumerate() {
            check_unit(s, k, stats.dim())?;
            whitened.push(stats.whiten_signature_unit(s)?);
        }
        Ok(TargetDictionary { whitened, output })
    }

    pub fn count(&self) -> usize {
        self.whitened.len()
    }

    pub fn dim(&self) -> usize {
        self.whitened[0].len()
    }

    pub fn whitened_signatures(&self) -> &[Vec<f64>] {
        &self.whitened
    }

    pub fn output_signatures(&self) -> &[Vec<f64>] {
        &self.output
    }

    /// Writes the de-whitened signatures as `target_index,b1,...,bD` rows
    /// (1-based index).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        save_signature_rows(path, &self.output)
    }

    /// Same layout as [`save_csv`](Self::save_csv) for the whitened form.
    pub fn save_whitened_csv(&self, path: &Path) -> Result<()> {
        save_signature_rows(path, &self.whitened)
    }

    /// Reads a de-whitened dictionary file and reconstitutes the whitened
    /// form through `stats`.
    pub fn load_csv(path: &Path, stats: &BackgroundStats) -> Result<Self> {
        let rows = load_signature_rows(path)?;
        TargetDictionary::from_output(rows, stats).map_err(|e| match e {
            Error::Invalid(msg) | Error::Degenerate(msg) => {
                Error::Parse { path: path.into(), line: 0, message: msg }
            }
            other => other,
        })
    }
}

fn check_unit(s: &[f64], k: usize, dim: usize) -> Result<()> {
    if s.len() != dim {
        return Err(Error::dims(dim, s.len(), format!("signature {}", k + 1)));
    }
    let norm = vecmath::norm(s);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Invalid(format!(
            "signature {} must be unit norm, got {norm}",
            k + 1
        )));
    }
    Ok(())
}

fn save_signature_rows(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = textio::create(path)?;
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut header = String::from("target_index");
    for b in 1..=dim {
        header.push_str(&format!(",b{b}"));
    }
    writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
    for (k, row) in rows.iter().enumerate() {
        let mut line = format!("{}", k + 1);
        for v in row {
            line.push(',');
            line.push_str(&textio::fmt_f64(*v));
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn load_signature_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    use std::io::BufRead;
    let reader = textio::open(path)?;
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first().map(|s| s.trim()) != Some("target_index") || columns.len() < 2 {
        return Err(Error::parse(path, 1, "header must start with target_index"));
    }
    let dim = columns.len() - 1;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} fields, got {}", dim + 1, fields.len()),
            ));
        }
        let index = textio::parse_usize(path, line_no, "target_index", fields[0])?;
        if index != rows.len() + 1 {
            return Err(Error::parse(
                path,
                line_no,
                format!("target_index out of order: expected {}", rows.len() + 1),
            ));
        }
        let mut values = Vec::with_capacity(dim);
        for f in &fields[1..] {
            values.push(textio::parse_f64(path, line_no, "signature value", f)?);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, 0, "dictionary file has no signatures"));
    }
    Ok(rows)
}

/// One bag after whitening, instances in original order.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedBag {
    bag_id: i64,
    instances: Vec<Vec<f64>>,
}

impl WhitenedBag {
    pub fn bag_id(&self) -> i64 {
        self.bag_id
    }

    pub fn instances(&self) -> &[Vec<f64>] {
        &self.instances
    }
}

/// The training view of a collection: whitened positives and negatives plus
/// the precomputed bag-weighted negative mean.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedDataset {
    dim: usize,
    positives: Vec<WhitenedBag>,
    negatives: Vec<WhitenedBag>,
    /// `(1/N-) * sum over negative bags of their instance mean`; zeros when
    /// there are no negative bags.
    negative_mean: Vec<f64>,
}

impl WhitenedDataset {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positive_bags(&self) -> &[WhitenedBag] {
        &self.positives
    }

    pub fn negative_bags(&self) -> &[WhitenedBag] {
        &self.negatives
    }

    pub fn negative_mean(&self) -> &[f64] {
        &self.negative_mean
    }
}

/// Whitens every instance (and normalizes it when `detector` is ACE, which
/// rejects instances equal to the background mean).
pub fn whiten_dataset(
    collection: &BagCollection,
    stats: &BackgroundStats,
    detector: DetectorKind,
) -> Result<WhitenedDataset> {
    if collection.dim() != stats.dim() {
        return Err(Error::dims(stats.dim(), collection.dim(), "bag collection"));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for bag in collection.bags() {
        let mut instances = Vec::with_capacity(bag.len());
        for (i, inst) in bag.instances().iter().enumerate() {
            let w = match detector {
                DetectorKind::Ace => stats.whiten_normalize(inst.values()).map_err(|e| match e {
                    Error::Degenerate(_) => Error::Degenerate(format!(
                        "instance {} of bag {} equals the background mean; \
                         ACE whitened normalization is undefined",
                        i, bag.id()
                    )),
                    other => other,
                })?,
                DetectorKind::Smf => stats.whiten(inst.values())?,
            };
            instances.push(w);
        }
        let wb = WhitenedBag { bag_id: bag.id(), instances };
        if bag.label().is_positive() {
            positives.push(wb);
        } else {
            negatives.push(wb);
        }
    }

    let mut negative_mean = vec![0.0; stats.dim()];
    if !negatives.is_empty() {
        for bag in &negatives {
            let weight = 1.0 / (negatives.len() as f64 * bag.instances.len() as f64);
            for inst in &bag.instances {
                vecmath::add_scaled(&mut negative_mean, inst, weight);
            }
        }
    }

    Ok(WhitenedDataset {
        dim: stats.dim(),
        positives,
        negatives,
        negative_mean,
    })
}

/// For each positive bag `j` and signature `k`, the index of the in-bag
/// instance with the highest dot product against signature `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Representatives {
    indices: Vec<Vec<usize>>,
}

impl Representatives {
    /// Wraps explicit indices; rows must share one width (the target count).
    pub fn from_indices(indices: Vec<Vec<usize>>) -> Result<Self> {
        let width = indices.first().map(|r| r.len()).unwrap_or(0);
        if indices.iter().any(|r| r.len() != width) {
            return Err(Error::Invalid("representative rows differ in width".into()));
        }
        Ok(Representatives { indices })
    }

    pub fn num_bags(&self) -> usize {
        self.indices.len()
    }

    pub fn num_targets(&self) -> usize {
        self.indices.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Instance index selected for positive bag `j` under signature `k`.
    pub fn index(&self, j: usize, k: usize) -> usize {
        self.indices[j][k]
    }

    fn retain_columns(&self, kept: &[usize]) -> Representatives {
        Representatives {
            indices: self
                .indices
                .iter()
                .map(|row| kept.iter().map(|&k| row[k]).collect())
                .collect(),
        }
    }
}

/// Positive-bag assignments: each bag points at exactly one signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Indicators {
    assignments: Vec<usize>,
    num_targets: usize,
}

impl Indicators {
    pub fn from_assignments(assignments: Vec<usize>, num_targets: usize) -> Result<Self> {
        if num_targets == 0 {
            return Err(Error::Invalid("indicator matrix needs at least one target".into()));
        }
        if let Some(bad) = assignments.iter().find(|&&k| k >= num_targets) {
            return Err(Error::Invalid(format!(
                "assignment {bad} out of range for {num_targets} targets"
            )));
        }
        Ok(Indicators { assignments, num_targets })
    }

    pub fn num_bags(&self) -> usize {
        self.assignments.len()
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    /// The signature positive bag `j` is assigned to.
    pub fn assignment(&self, j: usize) -> usize {
        self.assignments[j]
    }

    /// How many bags each signature owns.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_targets];
        for &a in &self.assignments {
            counts[a] += 1;
        }
        counts
    }

    fn remap_columns(&self, kept: &[usize]) -> Indicators {
        let mut position = vec![usize::MAX; self.num_targets];
        for (new, &old) in kept.iter().enumerate() {
            position[old] = new;
        }
        Indicators {
            assignments: self.assignments.iter().map(|&a| position[a]).collect(),
            num_targets: kept.len(),
        }
    }
}

/// Picks, per positive bag and signature, the instance with the maximum dot
/// product; exact ties go to the lowest instance index.
pub fn select_representatives(
    signatures: &[Vec<f64>],
    data: &WhitenedDataset,
) -> Representatives {
    let indices = data
        .positives
        .iter()
        .map(|bag| {
            signatures
                .iter()
                .map(|s| {
                    let mut best = 0;
                    let mut best_score = f64::NEG_INFINITY;
                    for (i, inst) in bag.instances.iter().enumerate() {
                        let score = vecmath::dot(inst, s);
                        if score > best_score {
                            best_score = score;
                            best = i;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    Representatives { indices }
}

/// Assigns each positive bag to the signature whose representative scores
/// strictly highest; exact ties go to the lowest signature index.
pub fn compute_indicators(
    signatures: &[Vec<f64>],
    data: &WhitenedDataset,
    reps: &Representatives,
) -> Indicators {
    let assignments = data
        .positives
        .iter()
        .enumerate()
        .map(|(j, bag)| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (k, s) in signatures.iter().enumerate() {
                let score = vecmath::dot(&bag.instances[reps.index(j, k)], s);
                if score > best_score {
                    best_score = score;
                    best = k;
                }
            }
            best
        })
        .collect();
    Indicators {
        assignments,
        num_targets: signatures.len(),
    }
}

/// The training objective under the current representatives: mean best
/// representative score, minus mean background response, minus the pairwise
/// uniqueness penalty (zero when K = 1).
pub fn objective(
    signatures: &[Vec<f64>],
    data: &WhitenedDataset,
    reps: &Representatives,
    alpha: f64,
) -> f64 {
    let k_count = signatures.len();
    let mut positive = 0.0;
    for (j, bag) in data.positives.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for (k, s) in signatures.iter().enumerate() {
            best = best.max(vecmath::dot(&bag.instances[reps.index(j, k)], s));
        }
        positive += best;
    }
    positive /= data.positives.len() as f64;

    let mut background = 0.0;
    for s in signatures {
        background += vecmath::dot(&data.negative_mean, s);
    }
    background /= k_count as f64;

    let mut uniqueness = 0.0;
    if k_count > 1 {
        let mut pair_sum = 0.0;
        for k in 0..k_count {
            for l in (k + 1)..k_count {
                pair_sum += vecmath::dot(&signatures[k], &signatures[l]);
            }
        }
        let pairs = (k_count * (k_count - 1) / 2) as f64;
        uniqueness = alpha / pairs * pair_sum;
    }

    positive - background - uniqueness
}

/// Closed-form refresh of signature `k`: mean of its assigned
/// representatives, minus the negative mean, minus `alpha/(K-1)` times the
/// other signatures, renormalized. A signature that owns no bags is returned
/// unchanged; a zero update vector is a degeneracy error.
pub fn update_signature(
    k: usize,
    signatures: &[Vec<f64>],
    data: &WhitenedDataset,
    reps: &Representatives,
    indicators: &Indicators,
    alpha: f64,
) -> Result<Vec<f64>> {
    let k_count = signatures.len();
    if k >= k_count {
        return Err(Error::Invalid(format!(
            "signature index {k} out of range for {k_count} targets"
        )));
    }
    if reps.num_bags() != data.positives.len()
        || reps.num_targets() != k_count
        || indicators.num_bags() != data.positives.len()
        || indicators.num_targets() != k_count
    {
        return Err(Error::Invalid(
            "representatives/indicators do not match the dictionary and data".into(),
        ));
    }

    let assigned: Vec<usize> = (0..data.positives.len())
        .filter(|&j| indicators.assignment(j) == k)
        .collect();
    if assigned.is_empty() {
        return Ok(signatures[k].clone());
    }

    let mut t = vec![0.0; data.dim];
    let weight = 1.0 / assigned.len() as f64;
    for &j in &assigned {
        vecmath::add_scaled(&mut t, &data.positives[j].instances[reps.index(j, k)], weight);
    }
    vecmath::add_scaled(&mut t, &data.negative_mean, -1.0);
    if k_count > 1 {
        let pull = alpha / (k_count as f64 - 1.0);
        for (l, s) in signatures.iter().enumerate() {
            if l != k {
                vecmath::add_scaled(&mut t, s, -pull);
            }
        }
    }

    vecmath::normalized(&t).ok_or_else(|| {
        Error::Degenerate(format!("update for signature {} is the zero vector", k + 1))
    })
}

/// Drops signatures no bag is assigned to, returning the surviving
/// signatures and their original indices. The last signature is never
/// dropped.
pub fn prune(
    signatures: Vec<Vec<f64>>,
    indicators: &Indicators,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    if signatures.is_empty() {
        return (signatures, Vec::new());
    }
    let counts = indicators.column_counts();
    let mut kept: Vec<usize> = (0..signatures.len()).filter(|&k| counts[k] > 0).collect();
    if kept.is_empty() {
        kept.push(0);
    }
    let mut keep_flag = vec![false; signatures.len()];
    for &k in &kept {
        keep_flag[k] = true;
    }
    let survivors = signatures
        .into_iter()
        .zip(keep_flag)
        .filter_map(|(s, keep)| keep.then_some(s))
        .collect();
    (survivors, kept)
}

/// Greedy initialization: K times, add the unused unit-normalized K-Means
/// center that maximizes the objective alongside the centers already chosen.
/// Ties resolve to the earliest candidate in canonical center order.
pub fn init_greedy(
    data: &WhitenedDataset,
    centers: &[Vec<f64>],
    k: usize,
    alpha: f64,
) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Invalid("cannot initialize zero targets".into()));
    }
    if centers.len() < k {
        return Err(Error::Invalid(format!(
            "{} candidate centers cannot seed {} targets",
            centers.len(),
            k
        )));
    }
    let candidates: Vec<Option<Vec<f64>>> = centers
        .iter()
        .map(|c| vecmath::normalized(c))
        .collect();
    if candidates.iter().filter(|c| c.is_some()).count() < k {
        return Err(Error::Degenerate(
            "not enough non-zero cluster centers to initialize the dictionary".into(),
        ));
    }

    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut used = vec![false; candidates.len()];
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (c, candidate) in candidates.iter().enumerate() {
            let Some(candidate) = candidate else { continue };
            if used[c] {
                continue;
            }
            let mut tentative = chosen.clone();
            tentative.push(candidate.clone());
            let reps = select_representatives(&tentative, data);
            let value = objective(&tentative, data, &reps, alpha);
            if best.map_or(true, |(_, v)| value > v) {
                best = Some((c, value));
            }
        }
        let (c, _) = best.expect("at least one unused candidate remains");
        used[c] = true;
        chosen.push(candidates[c].clone().expect("chosen candidate is non-zero"));
    }
    Ok(chosen)
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Representatives and assignments repeated and signatures stopped moving.
    Converged,
    /// The iteration cap was reached first.
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iter",
        }
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective after this iteration's updates, under this iteration's
    /// representatives.
    pub objective: f64,
    /// Dictionary size after this iteration's prune.
    pub num_targets: usize,
}

/// Per-iteration diagnostics plus the stop condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// A representative/assignment state recurred without being the
    /// immediately preceding state (a cycle, not convergence).
    pub oscillation_detected: bool,
    /// Updates skipped because the update vector was exactly zero.
    pub degenerate_updates: usize,
}

impl TrainingTrace {
    /// Writes `iteration,objective,num_targets,stop_reason`; the stop reason
    /// appears only on the final row.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = textio::create(path)?;
        writeln!(out, "iteration,objective,num_targets,stop_reason")
            .map_err(|e| Error::io(path, e))?;
        for (i, rec) in self.iterations.iter().enumerate() {
            let reason = if i + 1 == self.iterations.len() {
                self.stop_reason.as_str()
            } else {
                ""
            };
            writeln!(
                out,
                "{},{},{},{}",
                rec.iteration,
                textio::fmt_f64(rec.objective),
                rec.num_targets,
                reason
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Everything `train` produces: the dictionary, the background statistics it
/// was learned under, and the optimization trace.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dictionary: TargetDictionary,
    pub stats: BackgroundStats,
    pub trace: TrainingTrace,
}

/// Full training pipeline: background statistics, whitening, K-Means, greedy
/// initialization, then alternating representative selection, assignment,
/// pruning, and closed-form updates until the state stops changing (or
/// `max_iter`).
pub fn train(collection: &BagCollection, config: &LearnerConfig) -> Result<TrainOutput> {
    config.validate()?;
    if collection.num_positive() == 0 {
        return Err(Error::Invalid("training needs at least one positive bag".into()));
    }
    if collection.num_negative() == 0 {
        return Err(Error::Invalid("training needs at least one negative bag".into()));
    }

    let stats = BackgroundStats::estimate_with_floor(
        collection,
        config.background_source,
        config.eigenvalue_floor_rel,
    )?;
    let data = whiten_dataset(collection, &stats, config.detector)?;

    let positive_instances: Vec<Vec<f64>> = data
        .positives
        .iter()
        .flat_map(|bag| bag.instances.iter().cloned())
        .collect();
    let clusters = config.resolved_clusters(positive_instances.len());
    if clusters < config.initial_targets {
        return Err(Error::Invalid(format!(
            "{} k-means clusters cannot seed {} targets (too few positive instances?)",
            clusters, config.initial_targets
        )));
    }
    let centers = kmeans(&positive_instances, clusters, config.seed, config.kmeans_max_iter)?;
    let mut signatures = init_greedy(&data, &centers, config.initial_targets, config.uniqueness_weight)?;

    let mut trace = TrainingTrace {
        iterations: Vec::new(),
        stop_reason: StopReason::MaxIterations,
        oscillation_detected: false,
        degenerate_updates: 0,
    };
    let mut previous: Option<(Representatives, Indicators)> = None;
    let mut seen_states: HashSet<u64> = HashSet::new();

    for iteration in 1..=config.max_iter {
        let reps = select_representatives(&signatures, &data);
        let inds = compute_indicators(&signatures, &data, &reps);
        let state_unchanged = previous
            .as_ref()
            .map_or(false, |(pr, pi)| *pr == reps && *pi == inds);
        if !state_unchanged && !seen_states.insert(state_hash(&reps, &inds)) {
            trace.oscillation_detected = true;
        }

        let before_prune = signatures.len();
        let (kept_signatures, kept) = prune(signatures, &inds);
        signatures = kept_signatures;
        let pruned = signatures.len() != before_prune;
        let reps = if pruned { reps.retain_columns(&kept) } else { reps };
        let inds = if pruned { inds.remap_columns(&kept) } else { inds };

        let snapshot = signatures.clone();
        let mut movement = 0.0f64;
        for k in 0..signatures.len() {
            match update_signature(k, &snapshot, &data, &reps, &inds, config.uniqueness_weight) {
                Ok(new_signature) => {
                    for (a, b) in new_signature.iter().zip(&signatures[k]) {
                        movement = movement.max((a - b).abs());
                    }
                    signatures[k] = new_signature;
                }
                Err(Error::Degenerate(_)) => trace.degenerate_updates += 1,
                Err(other) => return Err(other),
            }
        }

        trace.iterations.push(IterationRecord {
            iteration,
            objective: objective(&signatures, &data, &reps, config.uniqueness_weight),
            num_targets: signatures.len(),
        });

        if state_unchanged && !pruned && movement <= MOVEMENT_TOLERANCE {
            trace.stop_reason = StopReason::Converged;
            break;
        }
        previous = Some((reps, inds));
    }

    let dictionary = TargetDictionary::from_whitened(signatures, &stats)?;
    Ok(TrainOutput { dictionary, stats, trace })
}

fn state_hash(reps: &Representatives, inds: &Indicators) -> u64 {
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    reps.hash(&mut hasher);
    inds.hash(&mut hasher);
    hasher.finish()
}
