//! Background statistics and the whitening / de-whitening transforms.
//!
//! The background distribution is summarized by its sample mean and the
//! eigendecomposition of its sample covariance. The whitener `P = E^(-1/2) U^T`
//! maps a spectrum into a space where the background has identity covariance;
//! the dewhitener `P^(-1) = U E^(1/2)` maps learned signatures back.
//!
//! Eigenvalues are clamped from below so that near-collinear backgrounds
//! (ubiquitous with real spectra) stay invertible, and eigenvector signs are
//! canonicalized (largest-magnitude entry positive) so repeated runs emit
//! bit-identical statistics.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{BagCollection, MIN_BANDS};
use crate::error::{Error, Result};
use crate::textio;
use crate::vecmath;

/// Which instances feed the background estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundSource {
    /// Instances from negative bags only (the default: positive bags are
    /// contaminated by targets).
    NegativeBagsOnly,
    /// Every instance in the collection, useful when negatives are scarce or
    /// when mimicking global-background protocols.
    AllInstances,
}

impl BackgroundSource {
    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundSource::NegativeBagsOnly => "negative",
            BackgroundSource::AllInstances => "all",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "negative" | "neg" => Some(BackgroundSource::NegativeBagsOnly),
            "all" => Some(BackgroundSource::AllInstances),
            _ => None,
        }
    }
}

/// Relative eigenvalue floor applied by default: `1e-8 * largest eigenvalue`.
pub const DEFAULT_EIGENVALUE_FLOOR_REL: f64 = 1e-8;

/// Immutable background summary: mean, eigenpairs of the covariance, and the
/// derived whitening operators.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundStats {
    mean: DVector<f64>,
    /// Descending, already clamped to `eigenvalue_floor`.
    eigenvalues: DVector<f64>,
    /// Columns are eigenvectors, signs canonicalized.
    eigenvectors: DMatrix<f64>,
    whitener: DMatrix<f64>,
    dewhitener: DMatrix<f64>,
    eigenvalue_floor: f64,
    clamped: usize,
}

impl BackgroundStats {
    /// Estimates statistics with the default relative eigenvalue floor.
    pub fn estimate(collection: &BagCollection, source: BackgroundSource) -> Result<Self> {
        Self::estimate_with_floor(collection, source, DEFAULT_EIGENVALUE_FLOOR_REL)
    }

    /// Estimates statistics, clamping eigenvalues below
    /// `floor_rel * largest eigenvalue`.
    pub fn estimate_with_floor(
        collection: &BagCollection,
        source: BackgroundSource,
        floor_rel: f64,
    ) -> Result<Self> {
        if !(floor_rel > 0.0 && floor_rel.is_finite()) {
            return Err(Error::Invalid(format!(
                "eigenvalue floor must be a positive finite number, got {floor_rel}"
            )));
        }
        let dim = collection.dim();
        let mut rows: Vec<&[f64]> = Vec::new();
        for bag in collection.bags() {
            if source == BackgroundSource::NegativeBagsOnly && bag.label().is_positive() {
                continue;
            }
            for inst in bag.instances() {
                rows.push(inst.values());
            }
        }
        if rows.is_empty() {
            return Err(Error::Invalid(
                "background estimation found no source instances (no negative bags?)".into(),
            ));
        }
        if rows.len() < 2 {
            return Err(Error::Invalid(
                "background estimation needs at least 2 instances for a sample covariance".into(),
            ));
        }

        let n = rows.len();
        let mut mean = DVector::zeros(dim);
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        mean /= n as f64;

        let mut centered = DMatrix::zeros(n, dim);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                centered[(i, j)] = v - mean[j];
            }
        }
        let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
        // Exact symmetry keeps the eigensolver deterministic.
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(
                "background covariance has non-finite entries".into(),
            ));
        }

        let eigen = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .expect("finite eigenvalues")
        });

        let mut eigenvalues = DVector::zeros(dim);
        let mut eigenvectors = DMatrix::zeros(dim, dim);
        for (col, &src) in order.iter().enumerate() {
            eigenvalues[col] = eigen.eigenvalues[src];
            eigenvectors
                .column_mut(col)
                .copy_from(&eigen.eigenvectors.column(src));
        }
        canonicalize_columns(&mut eigenvectors);

        let lambda_max = eigenvalues[0];
        let floor = if lambda_max > 0.0 {
            floor_rel * lambda_max
        } else {
            floor_rel
        };
        let mut clamped = 0;
        for v in eigenvalues.iter_mut() {
            if *v < floor {
                *v = floor;
                clamped += 1;
            }
        }

        let (whitener, dewhitener) = build_operators(&eigenvalues, &eigenvectors);
        Ok(BackgroundStats {
            mean,
            eigenvalues,
            eigenvectors,
            whitener,
            dewhitener,
            eigenvalue_floor: floor,
            clamped,
        })
    }

    /// Builds statistics from explicit parts. `eigenvector_rows` are the rows
    /// of the matrix whose columns are eigenvectors. Eigenvalues must be
    /// positive and descending; they are taken as already clamped, so the
    /// floor is their minimum.
    pub fn from_parts(
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        eigenvector_rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = mean.len();
        if dim < MIN_BANDS {
            return Err(Error::Invalid(format!(
                "background stats need at least {MIN_BANDS} bands, got {dim}"
            )));
        }
        if eigenvalues.len() != dim {
            return Err(Error::dims(dim, eigenvalues.len(), "eigenvalues"));
        }
        if eigenvector_rows.len() != dim {
            return Err(Error::dims(dim, eigenvector_rows.len(), "eigenvector rows"));
        }
        for (i, w) in eigenvalues.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Invalid(format!(
                    "eigenvalue {} must be positive and finite, got {w}",
                    i + 1
                )));
            }
            if i > 0 && eigenvalues[i - 1] < *w {
                return Err(Error::Invalid("eigenvalues must be descending".into()));
            }
        }
        let mut eigenvectors = DMatrix::zeros(dim, dim);
        for (i, row) in eigenvector_rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::dims(dim, row.len(), format!("eigenvector row {}", i + 1)));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Invalid("eigenvector entries must be finite".into()));
                }
                eigenvectors[(i, j)] = *v;
            }
        }
        let gram = eigenvectors.tr_mul(&eigenvectors);
        for i in 0..dim {
            for j in 0..dim {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expected).abs() > 1e-6 {
                    return Err(Error::Invalid(
                        "eigenvector matrix is not orthonormal".into(),
                    ));
                }
            }
        }

        let eigenvalues = DVector::from_vec(eigenvalues);
        let floor = eigenvalues[dim - 1];
        let (whitener, dewhitener) = build_operators(&eigenvalues, &eigenvectors);
        Ok(BackgroundStats {
            mean: DVector::from_vec(mean),
            eigenvalues,
            eigenvectors,
            whitener,
            dewhitener,
            eigenvalue_floor: floor,
            clamped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    /// Descending, clamped eigenvalues of the background covariance.
    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    /// Row `i` of the matrix whose columns are eigenvectors.
    pub fn eigenvector_row(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.row(i).iter().copied().collect()
    }

    pub fn eigenvalue_floor(&self) -> f64 {
        self.eigenvalue_floor
    }

    /// How many eigenvalues the floor replaced during estimation.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.clamped > 0
    }

    #[cfg(test)]
    pub(crate) fn whitener(&self) -> &DMatrix<f64> {
        &self.whitener
    }

    #[cfg(test)]
    pub(crate) fn dewhitener(&self) -> &DMatrix<f64> {
        &self.dewhitener
    }

    /// `P (x - mean)`.
    pub fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if x.len() != dim {
            return Err(Error::dims(dim, x.len(), "whiten input"));
        }
        let mut centered = DVector::from_column_slice(x);
        centered -= &self.mean;
        let out = &self.whitener * centered;
        Ok(out.data.into())
    }

    /// Unit-norm whitened vector; rejects `x` equal to the background mean.
    pub fn whiten_normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.whiten(x)?;
        vecmath::normalized(&w).ok_or_else(|| {
            Error::Degenerate(
                "instance equals the background mean, cannot normalize whitened form".into(),
            )
        })
    }

    /// Whitens a signature (`P s`, no mean subtraction) and normalizes it.
    pub fn whiten_signature_unit(&self, s: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if s.len() != dim {
            return Err(Error::dims(dim, s.len(), "signature"));
        }
        let w = &self.whitener * DVector::from_column_slice(s);
        vecmath::normalized(w.as_slice())
            .ok_or_else(|| Error::Degenerate("signature whitens to the zero vector".into()))
    }

    /// Maps a whitened signature back to the original space and renormalizes.
    pub fn dewhiten_signature(&self, s_hat: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if s_hat.len() != dim {
            return Err(Error::dims(dim, s_hat.len(), "dewhiten input"));
        }
        let raw = &self.dewhitener * DVector::from_column_slice(s_hat);
        vecmath::normalized(raw.as_slice())
            .ok_or_else(|| Error::Degenerate("cannot de-whiten a zero signature".into()))
    }

    /// Writes `component,c1..cD` rows: `mean`, `eigenvalue`, then the D rows
    /// of the eigenvector matrix as `u1..uD`. 17 significant digits.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let dim = self.dim();
        let mut out = textio::create(path)?;
        let mut header = String::from("component");
        for c in 1..=dim {
            header.push_str(&format!(",c{c}"));
        }
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        let write_row = |out: &mut dyn Write, label: &str, values: &[f64]| -> Result<()> {
            let mut row = String::from(label);
            for v in values {
                row.push(',');
                row.push_str(&textio::fmt_f64(*v));
            }
            writeln!(out, "{row}").map_err(|e| Error::io(path, e))
        };
        write_row(&mut out, "mean", self.mean.as_slice())?;
        write_row(&mut out, "eigenvalue", self.eigenvalues.as_slice())?;
        for i in 0..dim {
            let row: Vec<f64> = self.eigenvectors.row(i).iter().copied().collect();
            write_row(&mut out, &format!("u{}", i + 1), &row)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let reader = textio::open(path)?;
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "empty file")),
        };
        let columns: Vec<&str> = header.split(',').collect();
        if columns.first().map(|s| s.trim()) != Some("component") {
            return Err(Error::parse(path, 1, "header must start with component"));
        }
        let dim = columns.len() - 1;

        let mut mean = None;
        let mut eigenvalues = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
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
            let mut values = Vec::with_capacity(dim);
            for f in &fields[1..] {
                values.push(textio::parse_f64(path, line_no, fields[0], f)?);
            }
            match fields[0].trim() {
                "mean" => mean = Some(values),
                "eigenvalue" => eigenvalues = Some(values),
                label if label.starts_with('u') => {
                    let idx = textio::parse_usize(path, line_no, "row index", &label[1..])?;
                    if idx != rows.len() + 1 {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("eigenvector rows out of order: expected u{}", rows.len() + 1),
                        ));
                    }
                    rows.push(values);
                }
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown component {other:?}"),
                    ))
                }
            }
        }
        let mean = mean.ok_or_else(|| Error::parse(path, 0, "missing mean row"))?;
        let eigenvalues =
            eigenvalues.ok_or_else(|| Error::parse(path, 0, "missing eigenvalue row"))?;
        if rows.len() != dim {
            return Err(Error::parse(
                path,
                0,
                format!("expected {dim} eigenvector rows, got {}", rows.len()),
            ));
        }
        Self::from_parts(mean, eigenvalues, rows)
    }
}

/// Flips each column so its largest-magnitude entry is positive. Ties on
/// magnitude resolve to the earliest entry.
fn canonicalize_columns(matrix: &mut DMatrix<f64>) {
    let (nrows, ncols) = matrix.shape();
    for j in 0..ncols {
        let mut best = 0;
        let mut best_mag = f64::NEG_INFINITY;
        for i in 0..nrows {
            let mag = matrix[(i, j)].abs();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if matrix[(best, j)] < 0.0 {
            for i in 0..nrows {
                matrix[(i, j)] = -matrix[(i, j)];
            }
        }
    }
}

fn build_operators(
    eigenvalues: &DVector<f64>,
    eigenvectors: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = eigenvalues.len();
    let mut whitener = DMatrix::zeros(dim, dim);
    let mut dewhitener = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let root = eigenvalues[k].sqrt();
        for i in 0..dim {
            whitener[(k, i)] = eigenvectors[(i, k)] / root;
            dewhitener[(i, k)] = eigenvectors[(i, k)] * root;
        }
    }
    (whitener, dewhitener)
}
