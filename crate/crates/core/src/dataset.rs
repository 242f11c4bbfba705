//! Labeled point clouds with integer multiplicities.
//!
//! Rows with identical coordinates (bitwise) and identical label collapse into
//! one support point whose count is the number of copies. The empirical
//! probability of support point `i` is `counts[i] / total_count`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const BINARY_MAGIC: &[u8; 6] = b"RBND1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Plus,
    Minus,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Plus => 1,
            Label::Minus => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Label::Plus),
            -1 => Some(Label::Minus),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Plus => Label::Minus,
            Label::Minus => Label::Plus,
        }
    }

    fn stream(self) -> u64 {
        match self {
            Label::Plus => 0,
            Label::Minus => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    /// Row-major `n x dim`.
    points: Vec<f64>,
    labels: Vec<Label>,
    counts: Vec<u32>,
    total: u64,
    /// Raw label values mapped to `(+1, -1)`, when ingest used a class pair.
    pub raw_labels: Option<(String, String)>,
}

impl LabeledDataset {
    /// Builds a dataset from unit or weighted rows and deduplicates it.
    pub fn new(dim: usize, points: Vec<f64>, labels: Vec<Label>, counts: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        if counts.len() != n {
            return Err(Error::Invalid(format!(
                "{} labels but {} counts",
                n,
                counts.len()
            )));
        }
        if points.len() != n * dim {
            return Err(Error::Invalid(format!(
                "{} coordinates do not form {} rows of dimension {}",
                points.len(),
                n,
                dim
            )));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::Invalid("points must have dimension >= 1".into()));
        }
        if let Some(pos) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Invalid(format!("row {pos} has count 0")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite coordinate".into()));
        }
        let raw = LabeledDataset {
            dim,
            points,
            labels,
            counts,
            total: 0,
            raw_labels: None,
        };
        raw.dedup()
    }

    pub fn from_unit_rows(dim: usize, points: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let counts = vec![1; labels.len()];
        Self::new(dim, points, labels, counts)
    }

    /// Merge rows with bitwise-equal coordinates and equal label, keeping
    /// first-appearance order.
    pub fn dedup(&self) -> Result<Self> {
        let mut index: HashMap<(Label, Vec<u64>), usize> = HashMap::with_capacity(self.len());
        let mut points = Vec::with_capacity(self.points.len());
        let mut labels = Vec::with_capacity(self.len());
        let mut counts: Vec<u32> = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let row = self.point(i);
            let key = (self.labels[i], row.iter().map(|x| x.to_bits()).collect());
            match index.get(&key) {
                Some(&j) => {
                    counts[j] = counts[j]
                        .checked_add(self.counts[i])
                        .ok_or(Error::Overflow("support point count"))?;
                }
                None => {
                    index.insert(key, labels.len());
                    points.extend_from_slice(row);
                    labels.push(self.labels[i]);
                    counts.push(self.counts[i]);
                }
            }
        }
        let total = counts.iter().map(|&c| c as u64).sum();
        Ok(LabeledDataset {
            dim: self.dim,
            points,
            labels,
            counts,
            total,
            raw_labels: self.raw_labels.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn class_count(&self, label: Label) -> u64 {
        self.labels
            .iter()
            .zip(&self.counts)
            .filter(|(l, _)| **l == label)
            .map(|(_, &c)| c as u64)
            .sum()
    }

    /// True when only one class is present. Allowed, but the bound is then
    /// trivially zero.
    pub fn is_single_class(&self) -> bool {
        self.class_count(Label::Plus) == 0 || self.class_count(Label::Minus) == 0
    }

    /// Same points with every label flipped.
    pub fn with_labels_swapped(&self) -> Self {
        let mut out = self.clone();
        for l in &mut out.labels {
            *l = l.flipped();
        }
        out.raw_labels = self.raw_labels.as_ref().map(|(a, b)| (b.clone(), a.clone()));
        out
    }

    /// Draws `k_per_class` unit samples per class without replacement from the
    /// multiset expansion, then deduplicates.
    ///
    /// Each class is shuffled in full under its own stream before truncation,
    /// so for a fixed seed the sample for `k` is a prefix of the sample for
    /// any larger `k`.
    pub fn subsample(&self, k_per_class: u64, seed: u64) -> Result<Self> {
        if k_per_class == 0 {
            return Err(Error::Invalid("k_per_class must be positive".into()));
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for label in [Label::Plus, Label::Minus] {
            let available = self.class_count(label);
            if available < k_per_class {
                return Err(Error::InsufficientClassMass {
                    label: label.as_i8(),
                    available,
                    requested: k_per_class,
                });
            }
            let mut units: Vec<u32> = Vec::with_capacity(available as usize);
            for (i, (&l, &c)) in self.labels.iter().zip(&self.counts).enumerate() {
                if l == label {
                    units.extend(std::iter::repeat_n(i as u32, c as usize));
                }
            }
            let mut rng = stream_rng(seed, label.stream());
            units.shuffle(&mut rng);
            for &i in &units[..k_per_class as usize] {
                points.extend_from_slice(self.point(i as usize));
                labels.push(label);
            }
        }
        let mut out = Self::from_unit_rows(self.dim, points, labels)?;
        out.raw_labels = self.raw_labels.clone();
        Ok(out)
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_binary()?;
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_binary(&bytes)
    }

    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let n = u32::try_from(self.len()).map_err(|_| Error::Overflow("row count"))?;
        let d = u32::try_from(self.dim).map_err(|_| Error::Overflow("dimension"))?;
        let mut out = Vec::with_capacity(14 + self.points.len() * 8 + self.len() * 5);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        for x in &self.points {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend(self.labels.iter().map(|l| l.as_i8() as u8));
        for c in &self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let header = BINARY_MAGIC.len() + 8;
        if bytes.len() < BINARY_MAGIC.len() || &bytes[..BINARY_MAGIC.len()] != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if bytes.len() < header {
            return Err(Error::Truncated {
                expected: header,
                found: bytes.len(),
            });
        }
        let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .and_then(|b| b.checked_add(n * 5))
            .and_then(|b| b.checked_add(header))
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let mut pos = header;
        let points: Vec<f64> = bytes[pos..pos + n * d * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        pos += n * d * 8;
        let labels = bytes[pos..pos + n]
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                Label::from_i8(b as i8)
                    .ok_or_else(|| Error::Format(format!("row {i}: label byte {} is not +1/-1", b as i8)))
            })
            .collect::<Result<Vec<_>>>()?;
        pos += n;
        let counts: Vec<u32> = bytes[pos..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Format(format!("row {i}: zero count")));
        }
        Self::new(d, points, labels, counts).map_err(|e| match e {
            Error::Invalid(m) => Error::Format(m),
            other => other,
        })
    }

    /// Reads a comma-separated file. A first row that fails to parse as
    /// numbers is taken as a header.
    ///
    /// Without `class_pair`, labels must be `1` or `-1`. With it, rows whose
    /// label matches neither value are dropped and the pair maps to
    /// `(+1, -1)` in the given order.
    pub fn load_csv(
        path: impl AsRef<Path>,
        label_column: usize,
        class_pair: Option<(&str, &str)>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ds = Self::read_csv(file, label_column, class_pair)?;
        ds.raw_labels = class_pair.map(|(a, b)| (a.to_string(), b.to_string()));
        Ok(ds)
    }

    pub fn read_csv(
        reader: impl Read,
        label_column: usize,
        class_pair: Option<(&str, &str)>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut dim: Option<usize> = None;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let line = row_idx + 1;
            let record = record.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            if label_column >= record.len() {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "label column {label_column} out of range for {} fields",
                        record.len()
                    ),
                });
            }
            let parsed: std::result::Result<Vec<f64>, _> = record
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != label_column)
                .map(|(_, f)| f.parse::<f64>())
                .collect();
            let coords = match parsed {
                Ok(c) => c,
                Err(e) => {
                    if row_idx == 0 {
                        continue; // header
                    }
                    return Err(Error::Parse {
                        line,
                        message: format!("non-numeric feature: {e}"),
                    });
                }
            };
            let raw = &record[label_column];
            let label = match class_pair {
                Some((plus, minus)) => {
                    if raw_label_eq(raw, plus) {
                        Label::Plus
                    } else if raw_label_eq(raw, minus) {
                        Label::Minus
                    } else {
                        continue;
                    }
                }
                None => match raw.parse::<f64>() {
                    Ok(1.0) => Label::Plus,
                    Ok(-1.0) => Label::Minus,
                    Ok(_) => {
                        return Err(Error::Parse {
                            line,
                            message: format!("label {raw:?} is not +1/-1; pass a class pair"),
                        })
                    }
                    Err(_) if row_idx == 0 => continue,
                    Err(_) => {
                        return Err(Error::Parse {
                            line,
                            message: format!("non-numeric label {raw:?}"),
                        })
                    }
                },
            };
            if let Some(bad) = coords.iter().position(|x| !x.is_finite()) {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value in feature {bad}"),
                });
            }
            match dim {
                None => dim = Some(coords.len()),
                Some(d) if d != coords.len() => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {d} features, found {}", coords.len()),
                    })
                }
                _ => {}
            }
            points.extend(coords);
            labels.push(label);
        }
        let dim = dim.ok_or(Error::EmptyDataset)?;
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "rows have no feature columns".into(),
            });
        }
        Self::from_unit_rows(dim, points, labels)
    }
}

fn raw_label_eq(raw: &str, wanted: &str) -> bool {
    match (raw.parse::<f64>(), wanted.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => raw == wanted,
    }
}
