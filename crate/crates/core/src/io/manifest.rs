//! Pair manifests (tab-separated text) and the positional train/test split.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One sharp/blurred pair written by the simulator. Paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub sharp: PathBuf,
    pub blurred: PathBuf,
    pub z: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SyntheticManifest {
    /// Global generation parameters, written as `key=value` on the header line.
    pub params: Vec<(String, String)>,
    pub records: Vec<PairRecord>,
}

impl SyntheticManifest {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&header.join("\t"));
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.sharp.display(), r.blurred.display(), r.z, r.seed);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(0, "empty manifest"))?;
        let mut params = Vec::new();
        for field in header.split('\t').filter(|f| !f.is_empty()) {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::format(0, format!("header field {field:?} is not key=value")))?;
            params.push((k.to_string(), v.to_string()));
        }
        let mut records = Vec::new();
        let mut offset = header.len() as u64 + 1;
        for line in lines {
            let bad = |what: &str| Error::format(offset, format!("{what} in record {line:?}"));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            records.push(PairRecord {
                sharp: PathBuf::from(f[0]),
                blurred: PathBuf::from(f[1]),
                z: f[2].parse().map_err(|_| bad("bad z"))?,
                seed: f[3].parse().map_err(|_| bad("bad seed"))?,
            });
            offset += line.len() as u64 + 1;
        }
        Ok(SyntheticManifest { params, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// Dataset records with paths resolved against `root` and `z` as the tag.
    pub fn dataset_records(&self, root: &Path) -> Vec<DatasetRecord> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| DatasetRecord {
                input: root.join(&r.blurred),
                target: root.join(&r.sharp),
                site: i,
                tag: format!("z{}", r.z),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetRecord {
    pub input: PathBuf,
    pub target: PathBuf,
    pub site: usize,
    /// Opaque distance label used to group metrics.
    pub tag: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<(DatasetRecord, Split)>,
}

impl DatasetManifest {
    pub fn split(&self, which: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |(_, s)| *s == which).map(|(r, _)| r)
    }
}

/// Sorts by input path (stable) and assigns the first `train_count` records to training.
pub fn split_manifest(mut records: Vec<DatasetRecord>, train_count: usize) -> Result<DatasetManifest> {
    if train_count > records.len() {
        return Err(Error::Config(format!(
            "train_count {train_count} exceeds the {} available records",
            records.len()
        )));
    }
    records.sort_by(|a, b| a.input.cmp(&b.input));
    Ok(DatasetManifest {
        records: records
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r, if i < train_count { Split::Train } else { Split::Test }))
            .collect(),
    })
}
