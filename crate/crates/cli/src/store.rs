//! Content-addressed stage cache, CSV tables and atomic file writes.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Columns of f64 data written with 17 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    #[serde(with = "float_rows")]
    pub rows: Vec<Vec<f64>>,
}

/// JSON has no infinities or NaN; those travel as strings.
mod float_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Cell {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| if v.is_finite() { Cell::Num(v) } else { Cell::Text(super::format_number(v)) }).collect())
            .collect();
        cells.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let cells: Vec<Vec<Cell>> = Vec::deserialize(d)?;
        cells
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| match c {
                        Cell::Num(v) => Ok(v),
                        Cell::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom),
                    })
                    .collect()
            })
            .collect()
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v)))?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?)
    }
}

/// Scientific notation, 17 significant digits, '.' decimal.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageArtifact {
    pub stage: String,
    pub key: String,
    pub summary: serde_json::Value,
    pub tables: BTreeMap<String, Table>,
}

/// SHA-256 over the canonical JSON of `parts`, prefixed by the code version.
pub fn content_key<T: Serialize>(stage: &str, parts: &T) -> Result<String> {
    let mut h = Sha256::new();
    h.update(CODE_VERSION.as_bytes());
    h.update([0]);
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(parts)?);
    Ok(hex::encode(h.finalize()))
}

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(out_dir: &Path) -> Self {
        Self { root: out_dir.join("cache") }
    }

    fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(format!("{stage}-{key}.json"))
    }

    pub fn contains(&self, stage: &str, key: &str) -> bool {
        self.path(stage, key).is_file()
    }

    /// A corrupt entry counts as a miss.
    pub fn load(&self, stage: &str, key: &str) -> Option<StageArtifact> {
        let bytes = std::fs::read(self.path(stage, key)).ok()?;
        let a: StageArtifact = serde_json::from_slice(&bytes).ok()?;
        (a.key == key && a.stage == stage).then_some(a)
    }

    pub fn store(&self, artifact: &StageArtifact) -> Result<()> {
        write_atomic(&self.path(&artifact.stage, &artifact.key), &serde_json::to_vec(artifact)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_through_csv_text() {
        for v in [0.1, -1.0 / 3.0, 6.844736130305111, 1e-300, f64::MIN_POSITIVE, 123456789.123456789] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(format_number(f64::INFINITY), "inf");
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let mut t = Table::new(&["x", "y"]);
        t.push(vec![0.1 + 0.2, std::f64::consts::PI]);
        t.push(vec![f64::INFINITY, f64::NEG_INFINITY]);
        let key = content_key("profile", &("a", 1.5)).unwrap();
        let art = StageArtifact { stage: "profile".into(), key: key.clone(), summary: serde_json::json!({"v": 1.0 / 3.0}), tables: [("t".to_string(), t)].into() };
        assert!(!cache.contains("profile", &key));
        cache.store(&art).unwrap();
        let back = cache.load("profile", &key).unwrap();
        assert_eq!(back, art);
        assert_eq!(back.tables["t"].rows[0][0].to_bits(), (0.1f64 + 0.2).to_bits());
        assert!(cache.load("profile", "other").is_none());
    }

    #[test]
    fn keys_depend_on_content() {
        let a = content_key("s", &vec![1.0, 2.0]).unwrap();
        assert_eq!(a, content_key("s", &vec![1.0, 2.0]).unwrap());
        assert_ne!(a, content_key("s", &vec![1.0, 2.0000001]).unwrap());
        assert_ne!(a, content_key("t", &vec![1.0, 2.0]).unwrap());
    }
}
