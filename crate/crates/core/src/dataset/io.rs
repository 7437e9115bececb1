//! Dataset file format.
//!
//! The table is comma-separated text. The header names the event columns
//! followed by `label` and `tag` (on load the two may appear anywhere; the
//! remaining columns define the schema in header order). Values use the
//! shortest round-trip decimal representation, so integer counts are
//! written as plain integers.
//!
//! Metadata lives in a sidecar `<file>.meta` with one `key = value` per line
//! and `#` comments:
//!
//! ```text
//! format = 1
//! seed = 7
//! backend = synthetic(seed=7)
//! warmup = 10
//! tag = O0
//! timestamp = 1760000000
//! classes = quicksort,crc32,sha256
//! extra.config_hash = 3f2a...
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const META_FORMAT: &str = "1";
const LABEL: &str = "label";
const TAG: &str = "tag";

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta");
    PathBuf::from(name)
}

fn check_meta_value(key: &str, value: &str) -> Result<()> {
    if value.contains('\n') || value.trim() != value {
        return Err(Error::invalid(format!(
            "metadata {key} must be a single line without surrounding whitespace"
        )));
    }
    Ok(())
}

pub fn render_meta(meta: &DatasetMeta) -> Result<String> {
    let mut out = String::from("# fnprint dataset metadata\n");
    let mut line = |k: &str, v: &str| -> Result<()> {
        check_meta_value(k, v)?;
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
        Ok(())
    };
    line("format", META_FORMAT)?;
    line("seed", &meta.seed.to_string())?;
    line("backend", &meta.backend)?;
    line("warmup", &meta.warmup.to_string())?;
    line("tag", &meta.tag)?;
    if let Some(ts) = meta.timestamp {
        line("timestamp", &ts.to_string())?;
    }
    if let Some(bad) = meta.classes.iter().find(|c| c.contains(',') || c.is_empty()) {
        return Err(Error::invalid(format!("class name {bad:?} is empty or contains a comma")));
    }
    line("classes", &meta.classes.join(","))?;
    for (k, v) in &meta.extra {
        line(&format!("extra.{k}"), v)?;
    }
    Ok(out)
}

pub fn parse_meta(text: &str, origin: &Path) -> Result<DatasetMeta> {
    let malformed = |line: usize, column: usize, message: String| Error::Malformed {
        path: origin.to_path_buf(),
        line: line as u64,
        column,
        message,
    };
    let mut meta = DatasetMeta::default();
    let mut extra = BTreeMap::new();
    let mut saw_classes = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(lineno, 1, "expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let value_col = raw.find('=').unwrap_or(0) + 2;
        let int = |v: &str| {
            v.parse::<u64>()
                .map_err(|e| malformed(lineno, value_col, format!("{key}: {e}")))
        };
        match key {
            "format" => {
                if value != META_FORMAT {
                    return Err(malformed(lineno, value_col, format!("unsupported format {value}")));
                }
            }
            "seed" => meta.seed = int(value)?,
            "backend" => meta.backend = value.to_string(),
            "warmup" => meta.warmup = int(value)?,
            "tag" => meta.tag = value.to_string(),
            "timestamp" => meta.timestamp = Some(int(value)?),
            "classes" => {
                saw_classes = true;
                meta.classes = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(str::to_string).collect()
                };
            }
            other => match other.strip_prefix("extra.") {
                Some(k) => {
                    extra.insert(k.to_string(), value.to_string());
                }
                None => return Err(malformed(lineno, 1, format!("unknown key {other}"))),
            },
        }
    }
    if !saw_classes {
        return Err(malformed(0, 0, "missing `classes`".into()));
    }
    meta.extra = extra;
    Ok(meta)
}

impl<T: Scalar> Dataset<T> {
    /// Writes the table to `path` and the metadata to `<path>.meta`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io_err = |e: std::io::Error| Error::io(path, e);
        let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let meta = render_meta(&self.meta)?;
        let mut w = csv::WriterBuilder::new().from_path(path).map_err(csv_err)?;
        let mut header: Vec<&str> = self.schema.iter().map(String::as_str).collect();
        header.push(LABEL);
        header.push(TAG);
        w.write_record(&header).map_err(csv_err)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, row) in self.rows().enumerate() {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(self.labels[i].to_string());
            record.push(self.tags[i].clone());
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)?;
        let mp = meta_path(path);
        fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::save`] (or any table with a
    /// `label` column). Without a sidecar the class table is `0..=max label`.
    pub fn load(path: &Path) -> Result<Self> {
        let malformed = |line: u64, column: usize, message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let mut records = r.records();
        let header = match records.next() {
            Some(rec) => rec.map_err(|e| malformed(1, 1, e.to_string()))?,
            None => return Err(malformed(1, 1, "empty file".into())),
        };
        let label_col = header
            .iter()
            .position(|h| h == LABEL)
            .ok_or_else(|| malformed(1, 1, "header lacks a `label` column".into()))?;
        let tag_col = header.iter().position(|h| h == TAG);
        let feature_cols: Vec<usize> = (0..header.len())
            .filter(|&c| c != label_col && Some(c) != tag_col)
            .collect();
        let schema: Vec<String> = feature_cols.iter().map(|&c| header[c].to_string()).collect();

        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut tags = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                malformed(line, 1, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(malformed(
                    line,
                    rec.len().min(header.len()) + 1,
                    format!("{} fields, header has {}", rec.len(), header.len()),
                ));
            }
            for &c in &feature_cols {
                let v: T = rec[c]
                    .parse()
                    .map_err(|_| malformed(line, c + 1, format!("{:?} is not a number", &rec[c])))?;
                values.push(v);
            }
            labels.push(
                rec[label_col]
                    .parse::<usize>()
                    .map_err(|_| malformed(line, label_col + 1, format!("{:?} is not a label", &rec[label_col])))?,
            );
            tags.push(tag_col.map(|c| rec[c].to_string()).unwrap_or_default());
        }

        let mp = meta_path(path);
        let meta = match fs::read_to_string(&mp) {
            Ok(text) => parse_meta(&text, &mp)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let classes = labels.iter().max().map_or(0, |m| m + 1);
                DatasetMeta::with_classes((0..classes).map(|c| c.to_string()).collect())
            }
            Err(e) => return Err(Error::io(&mp, e)),
        };
        Dataset::from_flat(schema, values, labels, tags, meta).map_err(|e| match e {
            Error::Degenerate(m) | Error::SchemaMismatch(m) => malformed(0, 0, m),
            other => other,
        })
    }
}
