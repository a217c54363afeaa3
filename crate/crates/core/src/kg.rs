//! Triple store for the domain knowledge graph.
//!
//! The graph is ingested once from TSV (`head<TAB>relation<TAB>tail`), after
//! which the store is immutable: vocabularies are dense integer ids assigned
//! in first-appearance order, adjacency lists are sorted, and lookups are
//! cheap. Surface labels are normalized (lowercase, trimmed, internal
//! whitespace collapsed) before id assignment so the same fact spelled two
//! ways deduplicates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
    Both,
}

/// Which side of the triple a neighbor entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDir {
    Out,
    In,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphStats {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    /// Triple count per relation label.
    pub relation_counts: BTreeMap<String, usize>,
}

/// Canonicalize a surface label: lowercase, trim, collapse internal whitespace.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Default, Clone)]
struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn get_or_insert(&mut self, normalized: &str) -> u32 {
        if let Some(&id) = self.index.get(normalized) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(normalized.to_string());
        self.index.insert(normalized.to_string(), id);
        id
    }

    fn get(&self, normalized: &str) -> Option<u32> {
        self.index.get(normalized).copied()
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Default, Clone)]
pub struct KgStore {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    outgoing: Vec<Vec<(RelationId, EntityId)>>,
    incoming: Vec<Vec<(RelationId, EntityId)>>,
    /// normalized alias surface -> canonical entity.
    aliases: HashMap<String, EntityId>,
}

impl KgStore {
    /// Ingest a triple stream (and optional alias stream) into a fresh store.
    pub fn ingest_triples<R: BufRead, A: BufRead>(
        triples: R,
        aliases: Option<A>,
    ) -> Result<KgStore> {
        let mut store = KgStore::default();
        for (i, line) in triples.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Ingest {
                    line: line_no,
                    msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let head = normalize_label(fields[0]);
            let rel = normalize_label(fields[1]);
            let tail = normalize_label(fields[2]);
            if head.is_empty() || rel.is_empty() || tail.is_empty() {
                return Err(Error::Ingest {
                    line: line_no,
                    msg: "empty field after normalization".to_string(),
                });
            }
            store.add_triple(&head, &rel, &tail);
        }
        if let Some(alias_reader) = aliases {
            for (i, line) in alias_reader.lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 2 {
                    return Err(Error::Ingest {
                        line: line_no,
                        msg: format!("alias line: expected 2 fields, got {}", fields.len()),
                    });
                }
                let surface = normalize_label(fields[0]);
                let canonical = normalize_label(fields[1]);
                let entity = store.entities.get(&canonical).ok_or_else(|| Error::Ingest {
                    line: line_no,
                    msg: format!("alias target '{canonical}' is not a known entity"),
                })?;
                store.aliases.insert(surface, EntityId(entity));
            }
        }
        store.finalize();
        Ok(store)
    }

    fn add_triple(&mut self, head: &str, relation: &str, tail: &str) {
        let h = EntityId(self.entities.get_or_insert(head));
        let r = RelationId(self.relations.get_or_insert(relation));
        let t = EntityId(self.entities.get_or_insert(tail));
        let triple = Triple::new(h, r, t);
        if self.triple_set.insert(triple) {
            self.triples.push(triple);
            let n = self.entities.len();
            if self.outgoing.len() < n {
                self.outgoing.resize_with(n, Vec::new);
                self.incoming.resize_with(n, Vec::new);
            }
            self.outgoing[h.0 as usize].push((r, t));
            self.incoming[t.0 as usize].push((r, h));
        }
    }

    fn finalize(&mut self) {
        let n = self.entities.len();
        self.outgoing.resize_with(n, Vec::new);
        self.incoming.resize_with(n, Vec::new);
        for list in self.outgoing.iter_mut().chain(self.incoming.iter_mut()) {
            list.sort_unstable();
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_label(&self, e: EntityId) -> Result<&str> {
        self.entities
            .labels
            .get(e.0 as usize)
            .map(String::as_str)
            .ok_or(Error::UnknownEntity(e.0))
    }

    pub fn relation_label(&self, r: RelationId) -> Result<&str> {
        self.relations
            .labels
            .get(r.0 as usize)
            .map(String::as_str)
            .ok_or(Error::UnknownRelation(r.0))
    }

    /// Look up an entity by (unnormalized) label.
    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(&normalize_label(label)).map(EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get(&normalize_label(label)).map(RelationId)
    }

    pub fn aliases(&self) -> &HashMap<String, EntityId> {
        &self.aliases
    }

    fn check_entity(&self, e: EntityId) -> Result<()> {
        if (e.0 as usize) < self.entities.len() {
            Ok(())
        } else {
            Err(Error::UnknownEntity(e.0))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<()> {
        if (r.0 as usize) < self.relations.len() {
            Ok(())
        } else {
            Err(Error::UnknownRelation(r.0))
        }
    }

    pub fn contains_triple(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<bool> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        self.check_entity(t)?;
        Ok(self.triple_set.contains(&Triple::new(h, r, t)))
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    /// Neighbors of `e`, ordered by (relation id, entity id); for `Both`,
    /// outgoing entries precede incoming ones at equal keys.
    pub fn neighbors(
        &self,
        e: EntityId,
        direction: Direction,
    ) -> Result<Vec<(RelationId, EntityId, EdgeDir)>> {
        self.check_entity(e)?;
        let out = &self.outgoing[e.0 as usize];
        let inc = &self.incoming[e.0 as usize];
        let mut result = Vec::new();
        match direction {
            Direction::Outgoing => {
                result.extend(out.iter().map(|&(r, t)| (r, t, EdgeDir::Out)));
            }
            Direction::Incoming => {
                result.extend(inc.iter().map(|&(r, h)| (r, h, EdgeDir::In)));
            }
            Direction::Both => {
                // merge two sorted lists
                let (mut i, mut j) = (0, 0);
                while i < out.len() || j < inc.len() {
                    let take_out = match (out.get(i), inc.get(j)) {
                        (Some(o), Some(n)) => o <= n,
                        (Some(_), None) => true,
                        _ => false,
                    };
                    if take_out {
                        let (r, t) = out[i];
                        result.push((r, t, EdgeDir::Out));
                        i += 1;
                    } else {
                        let (r, h) = inc[j];
                        result.push((r, h, EdgeDir::In));
                        j += 1;
                    }
                }
            }
        }
        Ok(result)
    }

    /// Degree counting every incident triple in either direction, self-loops excluded.
    pub fn degree(&self, e: EntityId) -> Result<usize> {
        Ok(self
            .neighbors(e, Direction::Both)?
            .iter()
            .filter(|&&(_, other, _)| other != e)
            .count())
    }

    pub fn graph_stats(&self) -> GraphStats {
        let mut relation_counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in &self.triples {
            let label = self.relations.labels[t.relation.0 as usize].clone();
            *relation_counts.entry(label).or_insert(0) += 1;
        }
        GraphStats {
            num_entities: self.num_entities(),
            num_relations: self.num_relations(),
            num_triples: self.num_triples(),
            relation_counts,
        }
    }

    /// Persist as TSV plus sidecar vocabulary/alias files (line number = id).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut triples = fs::File::create(dir.join("triples.tsv"))?;
        for t in &self.triples {
            writeln!(
                triples,
                "{}\t{}\t{}",
                self.entities.labels[t.head.0 as usize],
                self.relations.labels[t.relation.0 as usize],
                self.entities.labels[t.tail.0 as usize],
            )?;
        }
        let mut ents = fs::File::create(dir.join("entities.tsv"))?;
        for label in &self.entities.labels {
            writeln!(ents, "{label}")?;
        }
        let mut rels = fs::File::create(dir.join("relations.tsv"))?;
        for label in &self.relations.labels {
            writeln!(rels, "{label}")?;
        }
        let mut aliases = fs::File::create(dir.join("aliases.tsv"))?;
        let mut sorted: Vec<_> = self.aliases.iter().collect();
        sorted.sort();
        for (surface, entity) in sorted {
            writeln!(
                aliases,
                "{surface}\t{}",
                self.entities.labels[entity.0 as usize]
            )?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<KgStore> {
        let mut store = KgStore::default();
        let entities = fs::read_to_string(dir.join("entities.tsv"))?;
        for label in entities.lines() {
            store.entities.get_or_insert(label);
        }
        let relations = fs::read_to_string(dir.join("relations.tsv"))?;
        for label in relations.lines() {
            store.relations.get_or_insert(label);
        }
        let triples = fs::read_to_string(dir.join("triples.tsv"))?;
        for (i, line) in triples.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Ingest {
                    line: i + 1,
                    msg: "expected 3 tab-separated fields".to_string(),
                });
            }
            store.add_triple(fields[0], fields[1], fields[2]);
        }
        let alias_path = dir.join("aliases.tsv");
        if alias_path.exists() {
            let aliases = fs::read_to_string(alias_path)?;
            for (i, line) in aliases.lines().enumerate() {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 2 {
                    return Err(Error::Ingest {
                        line: i + 1,
                        msg: "alias line: expected 2 fields".to_string(),
                    });
                }
                let entity = store.entities.get(fields[1]).ok_or_else(|| Error::Ingest {
                    line: i + 1,
                    msg: format!("alias target '{}' is not a known entity", fields[1]),
                })?;
                store.aliases.insert(fields[0].to_string(), EntityId(entity));
            }
        }
        store.finalize();
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ingest(tsv: &str) -> KgStore {
        KgStore::ingest_triples(Cursor::new(tsv), None::<Cursor<&str>>).unwrap()
    }

    #[test]
    fn worked_example_triple_ingests() {
        let store =
            ingest("tobacco mosaic disease\ttreated by\tspraying antiviral agents\n");
        let stats = store.graph_stats();
        assert_eq!(stats.num_entities, 2);
        assert_eq!(stats.num_relations, 1);
        assert_eq!(stats.num_triples, 1);
        let h = store.entity_id("tobacco mosaic disease").unwrap();
        let r = store.relation_id("treated by").unwrap();
        let t = store.entity_id("spraying antiviral agents").unwrap();
        assert!(store.contains_triple(h, r, t).unwrap());
        // directed: reversed triple absent
        assert!(!store.contains_triple(t, r, h).unwrap());
    }

    #[test]
    fn empty_stream_is_valid_empty_graph() {
        let store = ingest("");
        let stats = store.graph_stats();
        assert_eq!(
            (stats.num_entities, stats.num_relations, stats.num_triples),
            (0, 0, 0)
        );
    }

    #[test]
    fn duplicates_deduplicated() {
        let store = ingest("a\tr\tb\na\tr\tb\n");
        assert_eq!(store.num_triples(), 1);
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let err = KgStore::ingest_triples(
            Cursor::new("a\tr\tb\nbroken line\n"),
            None::<Cursor<&str>>,
        )
        .unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let store = ingest("# comment\n\na\tr\tb\n");
        assert_eq!(store.num_triples(), 1);
    }

    #[test]
    fn labels_normalized() {
        let store = ingest("  Tobacco   Mosaic  Disease \tTreated By\tX\n");
        assert!(store.entity_id("tobacco mosaic disease").is_some());
        assert_eq!(store.num_entities(), 2);
    }

    #[test]
    fn neighbors_ordering_and_directions() {
        // 6-triple toy graph: entity "c" has 3 out-edges and 2 in-edges
        let store = ingest(
            "c\tr1\tx\nc\tr1\ty\nc\tr2\tz\na\tr1\tc\nb\tr2\tc\nx\tr2\ty\n",
        );
        let c = store.entity_id("c").unwrap();
        let out = store.neighbors(c, Direction::Outgoing).unwrap();
        assert_eq!(out.len(), 3);
        let inc = store.neighbors(c, Direction::Incoming).unwrap();
        assert_eq!(inc.len(), 2);
        let both = store.neighbors(c, Direction::Both).unwrap();
        assert_eq!(both.len(), 5);
        // sorted by (relation id, entity id)
        let keys: Vec<(u32, u32)> = both.iter().map(|&(r, e, _)| (r.0, e.0)).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn isolated_entity_neighbors_empty() {
        let store = ingest("a\tr\tb\n");
        // b has only one incoming edge; outgoing is empty
        let b = store.entity_id("b").unwrap();
        assert!(store.neighbors(b, Direction::Outgoing).unwrap().is_empty());
    }

    #[test]
    fn invalid_id_is_lookup_error() {
        let store = ingest("a\tr\tb\n");
        assert!(store.neighbors(EntityId(99), Direction::Both).is_err());
        assert!(store
            .contains_triple(EntityId(0), RelationId(9), EntityId(1))
            .is_err());
    }

    #[test]
    fn vocabulary_determinism() {
        let tsv = "a\tr\tb\nb\ts\tc\nc\tr\ta\n";
        let s1 = ingest(tsv);
        let s2 = ingest(tsv);
        for label in ["a", "b", "c"] {
            assert_eq!(s1.entity_id(label), s2.entity_id(label));
        }
        for label in ["r", "s"] {
            assert_eq!(s1.relation_id(label), s2.relation_id(label));
        }
    }

    #[test]
    fn degree_matches_neighbors_excluding_self_loops() {
        let store = ingest("a\tr\ta\na\tr\tb\nc\ts\ta\n");
        let a = store.entity_id("a").unwrap();
        assert_eq!(store.degree(a).unwrap(), 2);
    }

    #[test]
    fn contains_matches_brute_force_on_small_graph() {
        // 10-entity graph; enumerate every possible triple
        let mut tsv = String::new();
        for i in 0..10 {
            tsv.push_str(&format!("e{}\tr\te{}\n", i, (i + 3) % 10));
        }
        let store = ingest(&tsv);
        let r = store.relation_id("r").unwrap();
        let stored: HashSet<Triple> = store.triples().iter().copied().collect();
        for h in 0..store.num_entities() as u32 {
            for t in 0..store.num_entities() as u32 {
                let triple = Triple::new(EntityId(h), r, EntityId(t));
                assert_eq!(
                    store.contains_triple(triple.head, r, triple.tail).unwrap(),
                    stored.contains(&triple)
                );
            }
        }
    }

    #[test]
    fn alias_registration_and_bad_target() {
        let store = KgStore::ingest_triples(
            Cursor::new("tobacco mosaic disease\ttreated by\tx\n"),
            Some(Cursor::new("TMV\ttobacco mosaic disease\n")),
        )
        .unwrap();
        let e = store.entity_id("tobacco mosaic disease").unwrap();
        assert_eq!(store.aliases().get("tmv"), Some(&e));

        let err = KgStore::ingest_triples(
            Cursor::new("a\tr\tb\n"),
            Some(Cursor::new("x\tnot an entity\n")),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
    }

    #[test]
    fn save_load_round_trip_preserves_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = KgStore::ingest_triples(
            Cursor::new("a\tr\tb\nb\ts\tc\n"),
            Some(Cursor::new("alpha\ta\n")),
        )
        .unwrap();
        store.save(dir.path()).unwrap();
        let loaded = KgStore::load(dir.path()).unwrap();
        assert_eq!(loaded.num_entities(), store.num_entities());
        assert_eq!(loaded.num_triples(), store.num_triples());
        for label in ["a", "b", "c"] {
            assert_eq!(loaded.entity_id(label), store.entity_id(label));
        }
        assert_eq!(loaded.aliases(), store.aliases());
    }
}
