//! Standard on-disk layout of an alignment dataset.

use super::{dump_pairs, load_kg, load_kg_with_ids, load_pairs, AlignedPair, KnowledgeGraph, Side};
use crate::error::Result;
use std::path::{Path, PathBuf};

pub const KG1_TRIPLES: &str = "kg1_triples.tsv";
pub const KG2_TRIPLES: &str = "kg2_triples.tsv";
pub const KG1_ATTRS: &str = "kg1_attrs.tsv";
pub const KG2_ATTRS: &str = "kg2_attrs.tsv";
pub const KG1_IDS: &str = "kg1_ids.json";
pub const KG2_IDS: &str = "kg2_ids.json";
pub const SEEDS: &str = "seeds.tsv";
pub const TEST: &str = "test.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub kg1_triples: PathBuf,
    pub kg2_triples: PathBuf,
    pub kg1_attrs: Option<PathBuf>,
    pub kg2_attrs: Option<PathBuf>,
    pub kg1_ids: Option<PathBuf>,
    pub kg2_ids: Option<PathBuf>,
    pub seeds: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    /// Standard file names under `dir`; optional files are only picked up
    /// when present.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Self {
            kg1_triples: dir.join(KG1_TRIPLES),
            kg2_triples: dir.join(KG2_TRIPLES),
            kg1_attrs: opt(KG1_ATTRS),
            kg2_attrs: opt(KG2_ATTRS),
            kg1_ids: opt(KG1_IDS),
            kg2_ids: opt(KG2_IDS),
            seeds: dir.join(SEEDS),
            test: dir.join(TEST),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = vec![&self.kg1_triples, &self.kg2_triples, &self.seeds, &self.test];
        v.extend(
            [&self.kg1_attrs, &self.kg2_attrs, &self.kg1_ids, &self.kg2_ids]
                .into_iter()
                .flatten()
                .map(|p| p.as_path()),
        );
        v
    }
}

/// Two graphs with their seed alignments S and test alignments S_te.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub g1: KnowledgeGraph,
    pub g2: KnowledgeGraph,
    pub seeds: Vec<AlignedPair>,
    pub test: Vec<AlignedPair>,
}

impl Dataset {
    pub fn load(paths: &DatasetPaths) -> Result<Self> {
        let load = |side, triples: &Path, attrs: &Option<PathBuf>, ids: &Option<PathBuf>| match ids {
            Some(ids) => load_kg_with_ids(side, triples, attrs.as_deref(), ids),
            None => load_kg(side, triples, attrs.as_deref()),
        };
        let g1 = load(Side::Kg1, &paths.kg1_triples, &paths.kg1_attrs, &paths.kg1_ids)?;
        let g2 = load(Side::Kg2, &paths.kg2_triples, &paths.kg2_attrs, &paths.kg2_ids)?;
        let seeds = load_pairs(&paths.seeds, &g1, &g2)?;
        let test = load_pairs(&paths.test, &g1, &g2)?;
        Ok(Self { g1, g2, seeds, test })
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(&DatasetPaths::in_dir(dir))
    }

    /// Writes the standard layout (including id maps) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        let has_attrs1 = !self.g1.attribute_triples().is_empty();
        let has_attrs2 = !self.g2.attribute_triples().is_empty();
        self.g1.dump(
            &dir.join(KG1_TRIPLES),
            has_attrs1.then(|| dir.join(KG1_ATTRS)).as_deref(),
            &dir.join(KG1_IDS),
        )?;
        self.g2.dump(
            &dir.join(KG2_TRIPLES),
            has_attrs2.then(|| dir.join(KG2_ATTRS)).as_deref(),
            &dir.join(KG2_IDS),
        )?;
        dump_pairs(&dir.join(SEEDS), &self.seeds, &self.g1, &self.g2)?;
        dump_pairs(&dir.join(TEST), &self.test, &self.g1, &self.g2)
    }
}
