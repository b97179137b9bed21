//! Knowledge-graph data model: interned vocabularies, relation and attribute
//! triples, TSV ingestion and the JSON id maps used for round-tripping.

mod dataset;
mod merged;
mod seeds;

pub use dataset::{Dataset, DatasetPaths};
pub use merged::{build_merged_graph, Edge, MergedGraph, RelationKind, UNREACHABLE};
pub use seeds::{split_seeds, SeedSplit};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Kg1,
    Kg2,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Kg1 => Side::Kg2,
            Side::Kg2 => Side::Kg1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Kg1 => f.write_str("KG1"),
            Side::Kg2 => f.write_str("KG2"),
        }
    }
}

/// An entity of one of the two graphs; `index` is local to its side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId {
    pub index: u32,
    pub side: Side,
}

impl EntityId {
    pub fn new(side: Side, index: u32) -> Self {
        Self { index, side }
    }
}

/// A known or hypothesised alignment, always stored KG1 → KG2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignedPair {
    pub left: u32,
    pub right: u32,
}

impl AlignedPair {
    pub fn new(left: u32, right: u32) -> Self {
        Self { left, right }
    }

    pub fn left_entity(&self) -> EntityId {
        EntityId::new(Side::Kg1, self.left)
    }

    pub fn right_entity(&self) -> EntityId {
        EntityId::new(Side::Kg2, self.right)
    }
}

/// Anchor links as supplied by the caller. Side consistency is checked when
/// the merged graph is built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnchorSet {
    pairs: Vec<(EntityId, EntityId)>,
}

impl AnchorSet {
    pub fn new(pairs: Vec<(EntityId, EntityId)>) -> Self {
        Self { pairs }
    }

    pub fn from_aligned<'a>(pairs: impl IntoIterator<Item = &'a AlignedPair>) -> Self {
        Self {
            pairs: pairs
                .into_iter()
                .map(|p| (p.left_entity(), p.right_entity()))
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[(EntityId, EntityId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = (EntityId, EntityId)>) {
        self.pairs.extend(other);
    }
}

/// String interner with dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut vocab = Vocab::default();
        for name in names {
            if vocab.lookup.contains_key(&name) {
                return Err(Error::Data(format!("duplicate name `{name}` in id map")));
            }
            vocab.intern(&name);
        }
        Ok(vocab)
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.lookup.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeTriple {
    pub entity: u32,
    pub attr: u32,
    /// Key into a [`crate::mm::FeatureStore`].
    pub value_key: String,
}

/// Persisted id maps; the position of a name is its id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMaps {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
}

/// One side of the alignment problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub side: Side,
    pub entities: Vocab,
    pub relations: Vocab,
    pub attributes: Vocab,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    attr_triples: Vec<AttributeTriple>,
}

impl KnowledgeGraph {
    pub fn new(side: Side) -> Self {
        Self {
            side,
            entities: Vocab::default(),
            relations: Vocab::default(),
            attributes: Vocab::default(),
            triples: Vec::new(),
            seen: HashSet::new(),
            attr_triples: Vec::new(),
        }
    }

    pub fn with_id_maps(side: Side, maps: &IdMaps) -> Result<Self> {
        let mut g = Self::new(side);
        g.entities = Vocab::from_names(maps.entities.clone())?;
        g.relations = Vocab::from_names(maps.relations.clone())?;
        g.attributes = Vocab::from_names(maps.attributes.clone())?;
        Ok(g)
    }

    /// Interns names and adds the triple. Returns `false` for a duplicate.
    pub fn add_triple(&mut self, head: &str, rel: &str, tail: &str) -> bool {
        let t = Triple {
            head: self.entities.intern(head),
            rel: self.relations.intern(rel),
            tail: self.entities.intern(tail),
        };
        self.insert(t)
    }

    pub fn add_triple_ids(&mut self, head: u32, rel: u32, tail: u32) -> Result<bool> {
        if head as usize >= self.entities.len() || tail as usize >= self.entities.len() {
            return Err(Error::Data(format!(
                "triple ({head}, {rel}, {tail}) references an unknown entity"
            )));
        }
        if rel as usize >= self.relations.len() {
            return Err(Error::Data(format!("unknown relation id {rel}")));
        }
        Ok(self.insert(Triple { head, rel, tail }))
    }

    fn insert(&mut self, t: Triple) -> bool {
        if self.seen.insert(t) {
            self.triples.push(t);
            true
        } else {
            false
        }
    }

    pub fn add_attribute(&mut self, entity: &str, attr: &str, value_key: &str) {
        let t = AttributeTriple {
            entity: self.entities.intern(entity),
            attr: self.attributes.intern(attr),
            value_key: value_key.to_owned(),
        };
        self.attr_triples.push(t);
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn attribute_triples(&self) -> &[AttributeTriple] {
        &self.attr_triples
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(|i| EntityId::new(self.side, i))
    }

    pub fn id_maps(&self) -> IdMaps {
        IdMaps {
            entities: self.entities.names().to_vec(),
            relations: self.relations.names().to_vec(),
            attributes: self.attributes.names().to_vec(),
        }
    }

    /// Writes the triple TSV, the optional attribute TSV and the id-map JSON.
    pub fn dump(&self, triples_path: &Path, attr_path: Option<&Path>, ids_path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(self.entities.name(t.head));
            out.push('\t');
            out.push_str(self.relations.name(t.rel));
            out.push('\t');
            out.push_str(self.entities.name(t.tail));
            out.push('\n');
        }
        write_file(triples_path, out.as_bytes())?;
        if let Some(path) = attr_path {
            let mut out = String::new();
            for a in &self.attr_triples {
                out.push_str(self.entities.name(a.entity));
                out.push('\t');
                out.push_str(self.attributes.name(a.attr));
                out.push('\t');
                out.push_str(&a.value_key);
                out.push('\n');
            }
            write_file(path, out.as_bytes())?;
        }
        let json = serde_json::to_vec_pretty(&self.id_maps())?;
        write_file(ids_path, &json)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .map(|l| l.map_err(|e| Error::io(path, e)))
        .collect()
}

/// Splits a TSV row into exactly `n` columns, or reports the 1-based line.
fn columns<'a>(path: &Path, line_no: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
    if cols.len() != n || cols.iter().any(|c| c.is_empty()) {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message: format!("expected {n} tab-separated columns, found {}", cols.len()),
        });
    }
    Ok(cols)
}

pub fn load_id_maps(path: &Path) -> Result<IdMaps> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Loads one graph from `head<TAB>relation<TAB>tail` rows and an optional
/// `entity<TAB>attribute<TAB>feature_key` file.
pub fn load_kg(side: Side, triples_path: &Path, attr_path: Option<&Path>) -> Result<KnowledgeGraph> {
    load_kg_into(KnowledgeGraph::new(side), triples_path, attr_path)
}

/// Like [`load_kg`], but seeds the vocabularies from persisted id maps so ids
/// are stable across runs.
pub fn load_kg_with_ids(
    side: Side,
    triples_path: &Path,
    attr_path: Option<&Path>,
    ids_path: &Path,
) -> Result<KnowledgeGraph> {
    let maps = load_id_maps(ids_path)?;
    load_kg_into(KnowledgeGraph::with_id_maps(side, &maps)?, triples_path, attr_path)
}

fn load_kg_into(
    mut g: KnowledgeGraph,
    triples_path: &Path,
    attr_path: Option<&Path>,
) -> Result<KnowledgeGraph> {
    let lines = read_lines(triples_path)?;
    let mut rows = 0usize;
    let mut duplicates = 0usize;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c = columns(triples_path, i + 1, line, 3)?;
        rows += 1;
        if !g.add_triple(c[0], c[1], c[2]) {
            duplicates += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Data(format!(
            "{}: triple file is empty",
            triples_path.display()
        )));
    }
    if duplicates > 0 {
        log::warn!(
            "{}: dropped {duplicates} duplicate triple(s)",
            triples_path.display()
        );
    }
    if let Some(path) = attr_path {
        for (i, line) in read_lines(path)?.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let c = columns(path, i + 1, line, 3)?;
            g.add_attribute(c[0], c[1], c[2]);
        }
    }
    Ok(g)
}

/// Reads `kg1_entity<TAB>kg2_entity` rows against the two vocabularies.
pub fn load_pairs(path: &Path, g1: &KnowledgeGraph, g2: &KnowledgeGraph) -> Result<Vec<AlignedPair>> {
    let mut pairs = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c = columns(path, i + 1, line, 2)?;
        let lookup = |g: &KnowledgeGraph, name: &str| {
            g.entities.get(name).ok_or_else(|| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("unknown {} entity `{name}`", g.side),
            })
        };
        pairs.push(AlignedPair::new(lookup(g1, c[0])?, lookup(g2, c[1])?));
    }
    Ok(pairs)
}

pub fn dump_pairs(path: &Path, pairs: &[AlignedPair], g1: &KnowledgeGraph, g2: &KnowledgeGraph) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(g1.entities.name(p.left));
        out.push('\t');
        out.push_str(g2.entities.name(p.right));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}
