//! Precomputed modality features and their on-disk format.
//!
//! Binary layout (little-endian): 8-byte magic, `u32` version, `u32` tag
//! length, UTF-8 modality tag, `u32` row count, `u32` dimension, then the rows
//! as `f32`. Keys live in a companion JSON object mapping key to row index.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SUBALFEA";
pub const VERSION: u32 = 1;

/// Feature rows of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub modality: String,
    pub dim: usize,
    data: Vec<f32>,
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureMatrix {
    pub fn new(modality: impl Into<String>, dim: usize) -> Self {
        Self {
            modality: modality.into(),
            dim,
            data: Vec::new(),
            keys: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, row: &[f32]) -> Result<usize> {
        let key = key.into();
        if row.len() != self.dim {
            return Err(Error::Data(format!(
                "feature `{key}` has dimension {}, modality `{}` expects {}",
                row.len(),
                self.modality,
                self.dim
            )));
        }
        if self.index.contains_key(&key) {
            return Err(Error::Data(format!("duplicate feature key `{key}`")));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(row);
        Ok(self.keys.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn write(&self, bin: &Path, keys: &Path) -> Result<()> {
        let file = std::fs::File::create(bin).map_err(|e| Error::io(bin, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(bin, e));
        put(MAGIC)?;
        put(&VERSION.to_le_bytes())?;
        put(&(self.modality.len() as u32).to_le_bytes())?;
        put(self.modality.as_bytes())?;
        put(&(self.len() as u32).to_le_bytes())?;
        put(&(self.dim as u32).to_le_bytes())?;
        for v in &self.data {
            put(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(bin, e))?;
        let map: BTreeMap<&str, usize> = self.keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        crate::kg::write_file(keys, serde_json::to_string_pretty(&map)?.as_bytes())
    }

    pub fn read(bin: &Path, keys: &Path) -> Result<Self> {
        let file = std::fs::File::open(bin).map_err(|e| Error::io(bin, e))?;
        let mut r = BufReader::new(file);
        let bad = |what: &str| Error::Data(format!("{}: {what}", bin.display()));
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|_| bad("truncated feature file"))?;
            Ok(buf)
        };
        let u32_of = |b: Vec<u8>| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if take(8)?.as_slice() != MAGIC {
            return Err(bad("not a feature file (bad magic)"));
        }
        let version = u32_of(take(4)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported feature file version {version}")));
        }
        let tag_len = u32_of(take(4)?) as usize;
        let modality = String::from_utf8(take(tag_len)?).map_err(|_| bad("modality tag is not UTF-8"))?;
        let count = u32_of(take(4)?) as usize;
        let dim = u32_of(take(4)?) as usize;
        let raw = take(count * dim * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let text = std::fs::read_to_string(keys).map_err(|e| Error::io(keys, e))?;
        let map: BTreeMap<String, usize> = serde_json::from_str(&text)?;
        if map.len() != count {
            return Err(Error::Data(format!(
                "{}: key map has {} entries, feature file has {count} rows",
                keys.display(),
                map.len()
            )));
        }
        let mut ordered = vec![None; count];
        for (k, i) in map {
            match ordered.get_mut(i) {
                Some(slot @ None) => *slot = Some(k),
                _ => return Err(Error::Data(format!("{}: bad row index {i} for key `{k}`", keys.display()))),
            }
        }
        let keys: Vec<String> = ordered.into_iter().map(|k| k.expect("all rows assigned")).collect();
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(Self {
            modality,
            dim,
            data,
            keys,
            index,
        })
    }
}

/// All registered modalities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    pub matrices: Vec<FeatureMatrix>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, m: FeatureMatrix) -> Result<()> {
        if self.modality(&m.modality).is_some() {
            return Err(Error::Config(format!("modality `{}` registered twice", m.modality)));
        }
        self.matrices.push(m);
        Ok(())
    }

    pub fn modality(&self, tag: &str) -> Option<usize> {
        self.matrices.iter().position(|m| m.modality == tag)
    }

    /// (modality index, row) of a value key; earlier modalities win.
    pub fn lookup(&self, key: &str) -> Option<(usize, usize)> {
        self.matrices
            .iter()
            .enumerate()
            .find_map(|(m, mat)| mat.row_of(key).map(|r| (m, r)))
    }
}
