//! Attribute profiles, class lists, evaluation reports and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::zsl::{AttributeProfile, EvaluationReport};

/// Reads `image_id,true_class,<attr_1>,...,<attr_A>`. With `expected`, the
/// attribute columns must equal it in order; otherwise the header defines the
/// attribute list. Returns the attribute names alongside the profiles.
pub fn parse_attribute_profiles<R: Read>(
    reader: R,
    expected: Option<&[String]>,
) -> Result<(Vec<String>, Vec<AttributeProfile>)> {
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
    if header.get(0) != Some("image_id") || header.get(1) != Some("true_class") {
        return Err(Error::BadHeader("header must start with `image_id,true_class`".into()));
    }
    let attrs: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    if attrs.is_empty() {
        return Err(Error::TooFewAttrs);
    }
    if let Some(exp) = expected {
        if exp != attrs.as_slice() {
            return Err(Error::AttrOrderMismatch {
                expected: exp.to_vec(),
                found: attrs,
            });
        }
    }

    let mut profiles = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let row = i + 2;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != attrs.len() + 2 {
            return Err(Error::RaggedRow {
                row,
                expected: attrs.len() + 2,
                found: rec.len(),
            });
        }
        let mut posteriors = Vec::with_capacity(attrs.len());
        for (cell, column) in rec.iter().skip(2).zip(&attrs) {
            let value: f64 = cell.parse().map_err(|_| Error::BadCell {
                row,
                column: column.clone(),
                value: cell.to_string(),
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange {
                    row,
                    column: column.clone(),
                    value,
                });
            }
            posteriors.push(value);
        }
        profiles.push(AttributeProfile::new(&rec[0], &rec[1], posteriors)?);
    }
    Ok((attrs, profiles))
}

pub fn write_attribute_profiles<W: Write>(attr_names: &[String], profiles: &[AttributeProfile], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(
        ["image_id", "true_class"]
            .into_iter()
            .chain(attr_names.iter().map(String::as_str)),
    )
    .map_err(io_err)?;
    for p in profiles {
        let cells = [p.image_id.clone(), p.true_class.clone()]
            .into_iter()
            .chain(p.posteriors.iter().map(|x| format!("{x:?}")));
        w.write_record(cells).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One class name per line; blank lines are ignored.
pub fn parse_class_list<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let name = line.trim_end_matches('\r').trim();
        if name.is_empty() {
            continue;
        }
        if names.iter().any(|n| n == name) {
            return Err(Error::DupClass(name.to_string()));
        }
        names.push(name.to_string());
    }
    if names.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(names)
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfusionEntry {
    #[serde(rename = "true")]
    true_class: String,
    predicted: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportDoc {
    normalized_accuracy: f64,
    per_class: BTreeMap<String, f64>,
    confusion: Vec<ConfusionEntry>,
    n_images: usize,
}

/// Pretty JSON with every float written as 17 significant digits.
struct PreciseFormatter(PrettyFormatter<'static>);

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with full-precision floats.
pub fn to_precise_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn report_to_json(report: &EvaluationReport) -> Result<Vec<u8>> {
    let doc = ReportDoc {
        normalized_accuracy: report.normalized_accuracy,
        per_class: report.per_class_accuracy.clone(),
        confusion: report
            .confusion
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|((t, p), &count)| ConfusionEntry {
                true_class: t.clone(),
                predicted: p.clone(),
                count,
            })
            .collect(),
        n_images: report.n_images,
    };
    to_precise_json(&doc)
}

pub fn write_report(report: &EvaluationReport, path: &Path) -> Result<()> {
    write_atomic(path, &report_to_json(report)?)
}

pub fn read_report<R: Read>(reader: R) -> Result<EvaluationReport> {
    let doc: ReportDoc = serde_json::from_reader(reader).map_err(|e| Error::Io(e.to_string()))?;
    Ok(EvaluationReport {
        per_class_accuracy: doc.per_class,
        normalized_accuracy: doc.normalized_accuracy,
        confusion: doc
            .confusion
            .into_iter()
            .map(|e| ((e.true_class, e.predicted), e.count))
            .collect(),
        n_images: doc.n_images,
    })
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io(format!("{}: {e}", path.display())));
    }
    Ok(())
}

/// Reads a whole input file, mapping failures to `E_IO` with the path.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What a command ran with and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    /// Input path → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            seed: None,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        to_precise_json(self)
    }
}
