//! Synthetic bagged mixed-pixel datasets with exact ground truth.
//!
//! Target instances follow the linear mixing model
//! `p * target + (1 - p) * background + noise`; background instances are pure
//! spectra plus noise. By default each positive bag carries one target type
//! (round-robin over the target list); per-instance uniform identities are
//! available via [`TargetPlacement::PerInstance`]. Proportions are uniform on
//! `[max(0, 2m - 1), min(1, 2m)]` so their mean is `m`. The noise standard
//! deviation derives from the requested SNR (in dB, amplitude convention)
//! against the mean RMS of all clean signals, computed per signal over its
//! bands before noise is applied. Generation is two-pass (clean signals
//! first, then noise) and single-threaded, so a seed pins every byte of the
//! output.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Bag, BagCollection, BagLabel, Instance, SpectralLibrary};
use crate::error::{Error, Result};
use crate::textio;

/// How target identities are distributed over positive bags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetPlacement {
    /// Each positive bag carries a single target type, assigned round-robin
    /// over `targets` in bag order. With fewer positive bags than targets,
    /// later targets go unused.
    #[default]
    PerBag,
    /// Every target instance draws its identity uniformly, so bags mix
    /// target types.
    PerInstance,
}

impl TargetPlacement {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetPlacement::PerBag => "per-bag",
            TargetPlacement::PerInstance => "per-instance",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "per-bag" => Some(TargetPlacement::PerBag),
            "per-instance" => Some(TargetPlacement::PerInstance),
            _ => None,
        }
    }
}

/// Generation parameters for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Library names mixed into positive bags.
    pub targets: Vec<String>,
    /// Library names drawn as background, disjoint from `targets`.
    pub backgrounds: Vec<String>,
    pub num_pos_bags: usize,
    pub num_neg_bags: usize,
    pub points_per_bag: usize,
    /// Leading instances of each positive bag that carry a target.
    pub targets_per_pos_bag: usize,
    /// Mean of the proportion distribution, in (0, 1].
    pub mean_target_proportion: f64,
    /// Amplitude SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub placement: TargetPlacement,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self, library: &SpectralLibrary) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Invalid("simulation needs at least one target name".into()));
        }
        if self.backgrounds.is_empty() {
            return Err(Error::Invalid(
                "simulation needs at least one background name".into(),
            ));
        }
        let target_set: HashSet<&str> = self.targets.iter().map(String::as_str).collect();
        if target_set.len() != self.targets.len() {
            return Err(Error::Invalid("duplicate target names".into()));
        }
        let background_set: HashSet<&str> =
            self.backgrounds.iter().map(String::as_str).collect();
        if background_set.len() != self.backgrounds.len() {
            return Err(Error::Invalid("duplicate background names".into()));
        }
        if let Some(shared) = target_set.intersection(&background_set).next() {
            return Err(Error::Invalid(format!(
                "{shared:?} appears as both target and background"
            )));
        }
        for name in self.targets.iter().chain(&self.backgrounds) {
            if library.get(name).is_none() {
                return Err(Error::Invalid(format!(
                    "spectrum {name:?} not found in the library"
                )));
            }
        }
        if self.num_pos_bags == 0 || self.num_neg_bags == 0 {
            return Err(Error::Invalid(
                "simulation needs at least one positive and one negative bag".into(),
            ));
        }
        if self.points_per_bag == 0 {
            return Err(Error::Invalid("points_per_bag must be at least 1".into()));
        }
        if self.targets_per_pos_bag == 0 || self.targets_per_pos_bag > self.points_per_bag {
            return Err(Error::Invalid(format!(
                "targets_per_pos_bag must be in 1..={}, got {}",
                self.points_per_bag, self.targets_per_pos_bag
            )));
        }
        if !(self.mean_target_proportion > 0.0 && self.mean_target_proportion <= 1.0) {
            return Err(Error::Invalid(format!(
                "mean_target_proportion must be in (0, 1], got {}",
                self.mean_target_proportion
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Invalid(format!(
                "snr_db must be a real value or +infinity, got {}",
                self.snr_db
            )));
        }
        Ok(())
    }
}

/// Instance-level truth: which target (if any) was mixed in, at what
/// proportion.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub bag_id: i64,
    pub instance_index: usize,
    pub target_name: Option<String>,
    pub proportion: f64,
}

/// The ground-truth sidecar for a generated dataset: one record per instance,
/// in the same order as the collection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    records: Vec<TruthRecord>,
}

impl GroundTruth {
    pub fn new(records: Vec<TruthRecord>) -> Self {
        GroundTruth { records }
    }

    pub fn records(&self) -> &[TruthRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct target names in record order of first appearance.
    pub fn target_names(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut names = Vec::new();
        for r in &self.records {
            if let Some(name) = &r.target_name {
                if seen.insert(name.clone()) {
                    names.push(name.clone());
                }
            }
        }
        names
    }

    /// Lookup by (bag id, instance index).
    pub fn index_map(&self) -> HashMap<(i64, usize), &TruthRecord> {
        self.records
            .iter()
            .map(|r| ((r.bag_id, r.instance_index), r))
            .collect()
    }

    /// Writes `bag_id,instance_index,target_name,proportion`; background
    /// instances have an empty target_name.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        writer
            .write_record(["bag_id", "instance_index", "target_name", "proportion"])
            .map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            writer
                .write_record([
                    r.bag_id.to_string(),
                    r.instance_index.to_string(),
                    r.target_name.clone().unwrap_or_default(),
                    textio::fmt_f64(r.proportion),
                ])
                .map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, e))?;
        let expected = ["bag_id", "instance_index", "target_name", "proportion"];
        if header.iter().map(str::trim).ne(expected) {
            return Err(Error::parse(
                path,
                1,
                "header must be bag_id,instance_index,target_name,proportion",
            ));
        }
        let mut records = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line_no = i + 2;
            let record = record.map_err(|e| csv_error(path, e))?;
            if record.len() != 4 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 4 fields, got {}", record.len()),
                ));
            }
            let bag_id: i64 = record[0].trim().parse().map_err(|_| {
                Error::parse(path, line_no, format!("bag_id: not an integer: {:?}", &record[0]))
            })?;
            let instance_index =
                textio::parse_usize(path, line_no, "instance_index", &record[1])?;
            let name = record[2].trim();
            let target_name = (!name.is_empty()).then(|| name.to_string());
            let proportion = textio::parse_f64(path, line_no, "proportion", &record[3])?;
            if !(0.0..=1.0).contains(&proportion) {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("proportion must be in [0,1], got {proportion}"),
                ));
            }
            if target_name.is_none() && proportion != 0.0 {
                return Err(Error::parse(
                    path,
                    line_no,
                    "background instance with non-zero proportion",
                ));
            }
            records.push(TruthRecord { bag_id, instance_index, target_name, proportion });
        }
        Ok(GroundTruth { records })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                Error::io(path, io)
            } else {
                unreachable!()
            }
        }
        _ => Error::parse(path, e.position().map(|p| p.line() as usize).unwrap_or(0), e.to_string()),
    }
}

/// Uniform draw on `[max(0, 2m - 1), min(1, 2m)]`, resampled away from an
/// exact zero so designated target instances always carry some target.
pub fn draw_proportion(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    let lo = (2.0 * mean - 1.0).max(0.0);
    let hi = (2.0 * mean).min(1.0);
    if lo >= hi {
        return hi;
    }
    loop {
        let p = rng.random_range(lo..hi);
        if p > 0.0 {
            return p;
        }
    }
}

/// Linear mix of a target and a background plus i.i.d. Gaussian band noise.
/// `target` of `None` requires `p = 0` and yields a pure background pixel.
pub fn mix_instance(
    target: Option<&[f64]>,
    background: &[f64],
    p: f64,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Instance> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("proportion must be in [0,1], got {p}")));
    }
    match target {
        Some(t) if t.len() != background.len() => {
            return Err(Error::dims(background.len(), t.len(), "mix target"));
        }
        None if p != 0.0 => {
            return Err(Error::Invalid(
                "cannot mix a non-zero proportion without a target".into(),
            ));
        }
        _ => {}
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::Invalid(format!(
            "noise scale must be non-negative, got {noise_scale}"
        )));
    }
    let clean = clean_mix(target, background, p);
    let values = clean
        .into_iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(rng);
            v + noise_scale * n
        })
        .collect();
    Instance::new(values)
}

fn clean_mix(target: Option<&[f64]>, background: &[f64], p: f64) -> Vec<f64> {
    match target {
        Some(t) if p > 0.0 => t
            .iter()
            .zip(background)
            .map(|(tv, bv)| p * tv + (1.0 - p) * bv)
            .collect(),
        _ => background.to_vec(),
    }
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Generates one dataset and its ground truth. Positive bags get ids
/// `1..=num_pos_bags`; negative bags follow. Within a positive bag the first
/// `targets_per_pos_bag` instances carry targets, with identities set by
/// `config.placement`.
pub fn generate_dataset(
    library: &SpectralLibrary,
    config: &SimConfig,
) -> Result<(BagCollection, GroundTruth)> {
    config.validate(library)?;
    let targets: Vec<&[f64]> = config
        .targets
        .iter()
        .map(|n| library.get(n).expect("validated name"))
        .collect();
    let backgrounds: Vec<&[f64]> = config
        .backgrounds
        .iter()
        .map(|n| library.get(n).expect("validated name"))
        .collect();

    struct PlannedInstance {
        target: Option<usize>,
        proportion: f64,
        clean: Vec<f64>,
    }
    struct PlannedBag {
        id: i64,
        label: BagLabel,
        instances: Vec<PlannedInstance>,
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut plan: Vec<PlannedBag> = Vec::new();
    let mut next_id = 1i64;
    for bag_index in 0..config.num_pos_bags {
        let mut instances = Vec::with_capacity(config.points_per_bag);
        for i in 0..config.points_per_bag {
            if i < config.targets_per_pos_bag {
                let t = match config.placement {
                    TargetPlacement::PerBag => bag_index % targets.len(),
                    TargetPlacement::PerInstance => rng.random_range(0..targets.len()),
                };
                let b = rng.random_range(0..backgrounds.len());
                let p = draw_proportion(config.mean_target_proportion, &mut rng);
                instances.push(PlannedInstance {
                    target: Some(t),
                    proportion: p,
                    clean: clean_mix(Some(targets[t]), backgrounds[b], p),
                });
            } else {
                let b = rng.random_range(0..backgrounds.len());
                instances.push(PlannedInstance {
                    target: None,
                    proportion: 0.0,
                    clean: backgrounds[b].to_vec(),
                });
            }
        }
        plan.push(PlannedBag { id: next_id, label: BagLabel::Positive, instances });
        next_id += 1;
    }
    for _ in 0..config.num_neg_bags {
        let mut instances = Vec::with_capacity(config.points_per_bag);
        for _ in 0..config.points_per_bag {
            let b = rng.random_range(0..backgrounds.len());
            instances.push(PlannedInstance {
                target: None,
                proportion: 0.0,
                clean: backgrounds[b].to_vec(),
            });
        }
        plan.push(PlannedBag { id: next_id, label: BagLabel::Negative, instances });
        next_id += 1;
    }

    let noise_scale = if config.snr_db == f64::INFINITY {
        0.0
    } else {
        let mut mean_rms = 0.0;
        let mut count = 0usize;
        for bag in &plan {
            for inst in &bag.instances {
                mean_rms += rms(&inst.clean);
                count += 1;
            }
        }
        mean_rms /= count as f64;
        mean_rms / 10f64.powf(config.snr_db / 20.0)
    };

    let mut bags = Vec::with_capacity(plan.len());
    let mut records = Vec::new();
    for planned in plan {
        let mut instances = Vec::with_capacity(planned.instances.len());
        for (i, inst) in planned.instances.into_iter().enumerate() {
            let values: Vec<f64> = inst
                .clean
                .into_iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + noise_scale * n
                })
                .collect();
            instances.push(Instance::new(values)?);
            records.push(TruthRecord {
                bag_id: planned.id,
                instance_index: i,
                target_name: inst.target.map(|t| config.targets[t].clone()),
                proportion: inst.proportion,
            });
        }
        bags.push(Bag::new(planned.id, planned.label, instances)?);
    }
    Ok((BagCollection::new(bags)?, GroundTruth::new(records)))
}

/// Number of bands in the built-in demo library (400-2500 nm at 10 nm).
pub const DEMO_BANDS: usize = 211;

/// A synthetic five-spectrum rock library: two targets (`basalt`,
/// `verde_antique`) with narrow features the smooth backgrounds
/// (`pyroxenite`, `phyllite`, `slate`) cannot explain. Values are smooth
/// positive reflectance-like curves over 211 bands.
pub fn demo_library() -> SpectralLibrary {
    fn bump(i: usize, center: f64, width: f64) -> f64 {
        let z = (i as f64 - center) / width;
        (-0.5 * z * z).exp()
    }
    let band = |i: usize| i as f64;

    let mut names = Vec::new();
    let mut spectra = Vec::new();
    let mut push = |name: &str, f: &dyn Fn(usize) -> f64| {
        names.push(name.to_string());
        let values: Vec<f64> = (0..DEMO_BANDS).map(f).collect();
        spectra.push(Instance::new(values).expect("demo spectra are finite"));
    };

    push("basalt", &|i| {
        0.25 + 0.0002 * band(i)
            + 0.05 * bump(i, 150.0, 60.0)
            + 0.16 * bump(i, 45.0, 10.0)
            + 0.10 * bump(i, 65.0, 8.0)
    });
    push("verde_antique", &|i| {
        0.28 + 0.0001 * band(i)
            + 0.06 * bump(i, 70.0, 40.0)
            + 0.30 * bump(i, 165.0, 14.0)
            + 0.12 * bump(i, 185.0, 10.0)
    });
    push("pyroxenite", &|i| {
        0.24 + 0.0003 * band(i) + 0.08 * bump(i, 40.0, 50.0) + 0.05 * bump(i, 160.0, 55.0)
    });
    push("phyllite", &|i| {
        0.35 - 0.0004 * band(i) + 0.10 * bump(i, 90.0, 40.0) + 0.04 * bump(i, 190.0, 30.0)
    });
    push("slate", &|i| {
        0.18 + 0.0002 * band(i) + 0.05 * bump(i, 120.0, 70.0) + 0.03 * bump(i, 20.0, 25.0)
    });

    let band_labels = (0..DEMO_BANDS).map(|i| format!("{}", 400 + 10 * i)).collect();
    SpectralLibrary::new(names, spectra, band_labels).expect("demo library is well-formed")
}
