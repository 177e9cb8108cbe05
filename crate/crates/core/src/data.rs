//! Core data model: spectral instances, labeled bags, bag collections, and
//! named spectral libraries, with CSV persistence for each.
//!
//! Bag files are plain CSV with header `bag_id,label,b1,...,bD`, one instance
//! per row. Rows belonging to the same bag may appear anywhere in the file;
//! bags are ordered by first appearance. Library files use header
//! `name,<band>,...` with one named spectrum per row.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio;

/// Minimum number of spectral bands accepted anywhere in the crate.
pub const MIN_BANDS: usize = 2;

/// Bag-level supervision: positive bags contain at least one target instance,
/// negative bags contain none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagLabel {
    Negative,
    Positive,
}

impl BagLabel {
    pub fn is_positive(self) -> bool {
        matches!(self, BagLabel::Positive)
    }

    pub fn as_u8(self) -> u8 {
        match self {
            BagLabel::Negative => 0,
            BagLabel::Positive => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(BagLabel::Negative),
            1 => Some(BagLabel::Positive),
            _ => None,
        }
    }
}

/// One spectrum: a finite, non-empty vector of band values.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<f64>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("instance has no bands".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "instance band {} is not finite",
                i + 1
            )));
        }
        Ok(Instance { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A labeled set of instances sharing one bag id.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    id: i64,
    label: BagLabel,
    instances: Vec<Instance>,
}

impl Bag {
    pub fn new(id: i64, label: BagLabel, instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Invalid(format!("bag {id} has no instances")));
        }
        let dim = instances[0].dim();
        for inst in &instances[1..] {
            if inst.dim() != dim {
                return Err(Error::dims(dim, inst.dim(), format!("within bag {id}")));
            }
        }
        Ok(Bag {
            id,
            label,
            instances,
        })
    }

    pub fn id(&self) -> i64 {
        self.id
    }

    pub fn label(&self) -> BagLabel {
        self.label
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].dim()
    }
}

/// All bags of a dataset, with a consistent band count `dim >= 2` and
/// distinct bag ids.
#[derive(Debug, Clone, PartialEq)]
pub struct BagCollection {
    bags: Vec<Bag>,
    dim: usize,
}

impl BagCollection {
    pub fn new(bags: Vec<Bag>) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::Invalid("bag collection is empty".into()));
        }
        let dim = bags[0].dim();
        if dim < MIN_BANDS {
            return Err(Error::Invalid(format!(
                "bag collection needs at least {MIN_BANDS} bands, got {dim}"
            )));
        }
        let mut seen = HashMap::new();
        for bag in &bags {
            if bag.dim() != dim {
                return Err(Error::dims(dim, bag.dim(), format!("bag {}", bag.id())));
            }
            if seen.insert(bag.id(), ()).is_some() {
                return Err(Error::Invalid(format!("duplicate bag id {}", bag.id())));
            }
        }
        Ok(BagCollection { bags, dim })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn num_positive(&self) -> usize {
        self.bags.iter().filter(|b| b.label().is_positive()).count()
    }

    pub fn num_negative(&self) -> usize {
        self.bags.len() - self.num_positive()
    }

    pub fn num_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    /// Loads a bag CSV. Bags keep the order in which their id first appears;
    /// a bag id seen with two different labels is rejected.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let reader = textio::open(path)?;
        let mut lines = reader.lines().enumerate();

        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "empty file")),
        };
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 2 || columns[0].trim() != "bag_id" || columns[1].trim() != "label" {
            return Err(Error::parse(
                path,
                1,
                "header must start with bag_id,label",
            ));
        }
        let dim = columns.len() - 2;
        if dim < MIN_BANDS {
            return Err(Error::parse(
                path,
                1,
                format!("need at least {MIN_BANDS} band columns, got {dim}"),
            ));
        }

        struct Pending {
            id: i64,
            label: BagLabel,
            instances: Vec<Instance>,
        }
        let mut order: Vec<Pending> = Vec::new();
        let mut index: HashMap<i64, usize> = HashMap::new();

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
            let id: i64 = fields[0].trim().parse().map_err(|_| {
                Error::parse(path, line_no, format!("bag_id: not an integer: {:?}", fields[0]))
            })?;
            let label_raw: u8 = fields[1].trim().parse().map_err(|_| {
                Error::parse(path, line_no, format!("label: not 0 or 1: {:?}", fields[1]))
            })?;
            let label = BagLabel::from_u8(label_raw).ok_or_else(|| {
                Error::parse(path, line_no, format!("label: not 0 or 1: {:?}", fields[1]))
            })?;
            let mut values = Vec::with_capacity(dim);
            for (f, name) in fields[2..].iter().zip(&columns[2..]) {
                values.push(textio::parse_f64(path, line_no, name, f)?);
            }
            let instance = Instance::new(values)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;

            match index.get(&id) {
                Some(&slot) => {
                    let pending = &mut order[slot];
                    if pending.label != label {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("bag {id} has conflicting labels"),
                        ));
                    }
                    pending.instances.push(instance);
                }
                None => {
                    index.insert(id, order.len());
                    order.push(Pending {
                        id,
                        label,
                        instances: vec![instance],
                    });
                }
            }
        }

        let bags = order
            .into_iter()
            .map(|p| Bag::new(p.id, p.label, p.instances))
            .collect::<Result<Vec<_>>>()?;
        BagCollection::new(bags)
    }

    /// Writes the collection as CSV with band columns `b1..bD` and floats
    /// formatted to 17 significant digits (exact round trip).
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = textio::create(path)?;
        let mut header = String::from("bag_id,label");
        for b in 1..=self.dim {
            header.push_str(&format!(",b{b}"));
        }
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        for bag in &self.bags {
            for inst in bag.instances() {
                let mut row = format!("{},{}", bag.id(), bag.label().as_u8());
                for v in inst.values() {
                    row.push(',');
                    row.push_str(&textio::fmt_f64(*v));
                }
                writeln!(out, "{row}").map_err(|e| Error::io(path, e))?;
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Named reference spectra with per-band labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    names: Vec<String>,
    spectra: Vec<Instance>,
    band_labels: Vec<String>,
}

impl SpectralLibrary {
    pub fn new(
        names: Vec<String>,
        spectra: Vec<Instance>,
        band_labels: Vec<String>,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Invalid("spectral library is empty".into()));
        }
        if names.len() != spectra.len() {
            return Err(Error::Invalid(format!(
                "{} names but {} spectra",
                names.len(),
                spectra.len()
            )));
        }
        let dim = band_labels.len();
        if dim < MIN_BANDS {
            return Err(Error::Invalid(format!(
                "library needs at least {MIN_BANDS} bands, got {dim}"
            )));
        }
        let mut seen = HashMap::new();
        for (name, spectrum) in names.iter().zip(&spectra) {
            if name.trim().is_empty() {
                return Err(Error::Invalid("library entry has an empty name".into()));
            }
            if spectrum.dim() != dim {
                return Err(Error::dims(dim, spectrum.dim(), format!("spectrum {name:?}")));
            }
            if seen.insert(name.clone(), ()).is_some() {
                return Err(Error::Invalid(format!("duplicate spectrum name {name:?}")));
            }
        }
        Ok(SpectralLibrary {
            names,
            spectra,
            band_labels,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn band_labels(&self) -> &[String] {
        &self.band_labels
    }

    pub fn dim(&self) -> usize {
        self.band_labels.len()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.spectra[i].values())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.spectra.iter().map(Instance::values))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.len() < 2 || header.get(0).map(str::trim) != Some("name") {
            return Err(Error::parse(path, 1, "header must start with name"));
        }
        let band_labels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();

        let mut names = Vec::new();
        let mut spectra = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line_no = i + 2;
            let record = record.map_err(|e| csv_error(path, e))?;
            if record.len() != header.len() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {} fields, got {}", header.len(), record.len()),
                ));
            }
            let name = record.get(0).unwrap_or("").trim().to_string();
            let mut values = Vec::with_capacity(band_labels.len());
            for (field, band) in record.iter().skip(1).zip(&band_labels) {
                values.push(textio::parse_f64(path, line_no, band, field)?);
            }
            names.push(name);
            spectra.push(
                Instance::new(values).map_err(|e| Error::parse(path, line_no, e.to_string()))?,
            );
        }
        SpectralLibrary::new(names, spectra, band_labels)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["name".to_string()];
        header.extend(self.band_labels.iter().cloned());
        writer.write_record(&header).map_err(|e| csv_error(path, e))?;
        for (name, spectrum) in self.entries() {
            let mut row = vec![name.to_string()];
            row.extend(spectrum.iter().map(|v| textio::fmt_f64(*v)));
            writer.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
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
        _ => {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            Error::parse(path, line, e.to_string())
        }
    }
}
