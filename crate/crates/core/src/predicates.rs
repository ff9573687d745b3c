//! Class × attribute predicate matrices and the Hamming margin between rows.

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Binary class–attribute relations. Row `k` belongs to `class_names[k]`;
/// row order is file order and doubles as the class index.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateMatrix {
    class_names: Vec<String>,
    attribute_names: Vec<String>,
    rows: Vec<Vec<bool>>,
}

/// Symmetric K×K matrix of pairwise margins.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginMatrix {
    k: usize,
    values: Vec<f64>,
}

impl MarginMatrix {
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                values[i * k + j] = if i == j { 0.0 } else { f(i, j) };
            }
        }
        Self { k, values }
    }

    /// Δ ≡ `delta` off the diagonal, for data without a predicate matrix.
    pub fn constant(k: usize, delta: f64) -> Self {
        Self::from_fn(k, |_, _| delta)
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }
}

/// Fraction of positions where the two rows differ.
pub fn hamming_margin(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::TooFewAttrs);
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

fn check_distinct(names: &[String], dup: impl Fn(String) -> Error) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(dup(n.clone()));
        }
    }
    Ok(())
}

impl PredicateMatrix {
    /// A training matrix: at least two classes and one attribute.
    pub fn new(class_names: Vec<String>, attribute_names: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self> {
        let m = Self::extension(class_names, attribute_names, rows)?;
        if m.num_classes() < 2 {
            return Err(Error::TooFewClasses {
                needed: 2,
                found: m.num_classes(),
            });
        }
        Ok(m)
    }

    /// Like [`PredicateMatrix::new`] but admits any number of classes,
    /// including none. Used for rows appended to a training matrix.
    pub fn extension(class_names: Vec<String>, attribute_names: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self> {
        if attribute_names.is_empty() {
            return Err(Error::TooFewAttrs);
        }
        if class_names.len() != rows.len() {
            return Err(Error::LengthMismatch(class_names.len(), rows.len()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != attribute_names.len() {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: attribute_names.len(),
                    found: row.len(),
                });
            }
        }
        check_distinct(&class_names, Error::DupClass)?;
        check_distinct(&attribute_names, Error::DupAttr)?;
        Ok(Self {
            class_names,
            attribute_names,
            rows,
        })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[bool] {
        &self.rows[k]
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Pairwise Hamming margins between all rows.
    pub fn margins(&self) -> MarginMatrix {
        MarginMatrix::from_fn(self.num_classes(), |i, j| {
            hamming_margin(&self.rows[i], &self.rows[j]).expect("rows share the attribute count")
        })
    }

    /// Rows for the given class indices, in the given order.
    pub fn select(&self, classes: &[usize]) -> Result<Self> {
        Self::extension(
            classes.iter().map(|&k| self.class_names[k].clone()).collect(),
            self.attribute_names.clone(),
            classes.iter().map(|&k| self.rows[k].clone()).collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "class")?;
        for a in &self.attribute_names {
            write!(out, ",{a}")?;
        }
        writeln!(out)?;
        for (name, row) in self.class_names.iter().zip(&self.rows) {
            write!(out, "{name}")?;
            for &b in row {
                write!(out, ",{}", u8::from(b))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Appends `extra`'s classes below `base`'s. Attribute lists must agree
/// exactly and class names must not overlap.
pub fn merge_predicates(base: &PredicateMatrix, extra: &PredicateMatrix) -> Result<PredicateMatrix> {
    if base.attribute_names != extra.attribute_names {
        return Err(Error::AttrMismatch);
    }
    if let Some(c) = extra.class_names.iter().find(|c| base.class_names.contains(c)) {
        return Err(Error::ClassCollision(c.clone()));
    }
    let mut merged = base.clone();
    merged.class_names.extend(extra.class_names.iter().cloned());
    merged.rows.extend(extra.rows.iter().cloned());
    Ok(merged)
}

/// Reads `class,<attr_1>,...,<attr_A>` followed by one row per class.
/// Without a threshold every cell must be exactly 0 or 1; with one, cells
/// at or above it become 1.
pub fn parse_predicate_csv<R: Read>(reader: R, binarize_threshold: Option<f64>) -> Result<PredicateMatrix> {
    let (classes, attrs, rows) = read_predicate_cells(reader, binarize_threshold)?;
    PredicateMatrix::new(classes, attrs, rows)
}

/// As [`parse_predicate_csv`], but accepts any number of class rows.
pub fn parse_predicate_extension_csv<R: Read>(reader: R, binarize_threshold: Option<f64>) -> Result<PredicateMatrix> {
    let (classes, attrs, rows) = read_predicate_cells(reader, binarize_threshold)?;
    PredicateMatrix::extension(classes, attrs, rows)
}

type Cells = (Vec<String>, Vec<String>, Vec<Vec<bool>>);

fn read_predicate_cells<R: Read>(reader: R, threshold: Option<f64>) -> Result<Cells> {
    if let Some(t) = threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::BadConfig(format!("binarize threshold {t} not in (0,1)")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Io(e.to_string()))?,
        None => return Err(Error::BadHeader("missing header row".into())),
    };
    if header.get(0) != Some("class") {
        return Err(Error::BadHeader("first header cell must be `class`".into()));
    }
    let attrs: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if attrs.is_empty() {
        return Err(Error::TooFewAttrs);
    }
    check_distinct(&attrs, Error::DupAttr)?;

    let mut classes = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let rowno = i + 2;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != attrs.len() + 1 {
            return Err(Error::RaggedRow {
                row: rowno,
                expected: attrs.len() + 1,
                found: rec.len(),
            });
        }
        let mut row = Vec::with_capacity(attrs.len());
        for (cell, attr) in rec.iter().skip(1).zip(&attrs) {
            let x: f64 = cell.parse().map_err(|_| Error::BadCell {
                row: rowno,
                column: attr.clone(),
                value: cell.to_string(),
            })?;
            let bit = match threshold {
                Some(t) if x.is_finite() => x >= t,
                _ if x == 0.0 => false,
                _ if x == 1.0 => true,
                _ => {
                    return Err(Error::NonBinary {
                        row: rowno,
                        column: attr.clone(),
                        value: cell.to_string(),
                    })
                }
            };
            row.push(bit);
        }
        classes.push(rec[0].to_string());
        rows.push(row);
    }
    Ok((classes, attrs, rows))
}
