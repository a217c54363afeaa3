//! Query-focused evidence retrieval: entity linking, budgeted k-hop subgraph
//! extraction, evidence ranking, and representation fusion.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::gcn::NodeRepresentations;
use crate::kg::{Direction, EdgeDir, EntityId, KgStore, Triple};
use crate::transe::{self, EmbeddingTable, Norm};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub entity: EntityId,
    /// Character offsets (start, end) into the question.
    pub span: (usize, usize),
    pub matched_surface: String,
}

#[derive(Debug, Clone)]
pub struct Subgraph {
    pub seeds: Vec<EntityId>,
    pub triples: Vec<(Triple, usize)>,
    pub hop_limit: usize,
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub struct EvidenceBundle {
    pub ranked_triples: Vec<(Triple, f64)>,
    pub fused_vector: Vec<f64>,
    pub context_text: String,
}

#[derive(Debug, Clone, Copy)]
pub struct RankParams {
    /// Per-hop penalty (alpha).
    pub hop_penalty: f64,
    /// Weight on the TransE distance (beta).
    pub distance_weight: f64,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            hop_penalty: 1.0,
            distance_weight: 0.1,
        }
    }
}

pub const DEFAULT_HOP_LIMIT: usize = 2;
pub const DEFAULT_BUDGET: usize = 64;
pub const DEFAULT_TOP_K: usize = 12;

/// Alphanumeric word tokens with their (start, end) character offsets.
fn tokenize(text: &str) -> Vec<(usize, usize, String)> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    for (idx, ch) in text.chars().enumerate() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = idx;
            }
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push((start, idx, std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push((start, text.chars().count(), current));
    }
    tokens
}

/// Longest-match-first left-to-right scan over normalized entity labels and
/// aliases. Canonical labels take precedence over aliases at equal phrases.
pub fn link_entities(question: &str, store: &KgStore) -> Vec<EntityMention> {
    let mut phrases: HashMap<String, EntityId> = HashMap::new();
    for id in 0..store.num_entities() as u32 {
        let e = EntityId(id);
        if let Ok(label) = store.entity_label(e) {
            phrases.insert(label.to_string(), e);
        }
    }
    for (surface, &entity) in store.aliases() {
        phrases.entry(surface.clone()).or_insert(entity);
    }
    let max_words = phrases
        .keys()
        .map(|p| p.split(' ').count())
        .max()
        .unwrap_or(0);
    if max_words == 0 {
        return Vec::new();
    }

    let chars: Vec<char> = question.chars().collect();
    let tokens = tokenize(question);
    let mut mentions = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = false;
        let longest = max_words.min(tokens.len() - i);
        for len in (1..=longest).rev() {
            let phrase = tokens[i..i + len]
                .iter()
                .map(|(_, _, w)| w.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if let Some(&entity) = phrases.get(&phrase) {
                let start = tokens[i].0;
                let end = tokens[i + len - 1].1;
                mentions.push(EntityMention {
                    entity,
                    span: (start, end),
                    matched_surface: chars[start..end].iter().collect(),
                });
                i += len;
                matched = true;
                break;
            }
        }
        if !matched {
            i += 1;
        }
    }
    mentions
}

/// Breadth-first expansion over both edge directions from all seeds. Triples
/// are emitted hop by hop, sorted by ids within each hop, and truncated at
/// `budget` (lower hops kept first).
pub fn extract_subgraph(
    seeds: &[EntityId],
    store: &KgStore,
    hop_limit: usize,
    budget: usize,
) -> Result<Subgraph> {
    if seeds.is_empty() {
        return Err(Error::Config("subgraph extraction needs at least one seed".to_string()));
    }
    if hop_limit == 0 {
        return Err(Error::Config("hop_limit must be at least 1".to_string()));
    }
    let mut seed_list = Vec::new();
    let mut visited: HashSet<EntityId> = HashSet::new();
    for &s in seeds {
        store.entity_label(s)?;
        if visited.insert(s) {
            seed_list.push(s);
        }
    }
    let mut collected: HashSet<Triple> = HashSet::new();
    let mut ordered: Vec<(Triple, usize)> = Vec::new();
    let mut frontier = seed_list.clone();
    for hop in 1..=hop_limit {
        let mut next = Vec::new();
        let mut batch = Vec::new();
        for &u in &frontier {
            for (r, v, dir) in store.neighbors(u, Direction::Both)? {
                let triple = match dir {
                    EdgeDir::Out => Triple::new(u, r, v),
                    EdgeDir::In => Triple::new(v, r, u),
                };
                if collected.insert(triple) {
                    batch.push((triple, hop));
                }
                if visited.insert(v) {
                    next.push(v);
                }
            }
        }
        batch.sort_unstable_by_key(|&(t, _)| (t.head, t.relation, t.tail));
        ordered.extend(batch);
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    ordered.truncate(budget);
    Ok(Subgraph {
        seeds: seed_list,
        triples: ordered,
        hop_limit,
        budget,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean_rows(reps: &NodeRepresentations, ids: &[EntityId]) -> Vec<f64> {
    let dim = reps.matrix.ncols();
    let mut acc = vec![0.0; dim];
    for &id in ids {
        for (a, v) in acc.iter_mut().zip(reps.matrix.row(id.0 as usize)) {
            *a += v;
        }
    }
    let n = ids.len().max(1) as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// score(triple) = -alpha * hop - beta * d(h+r, t) + cos(query, refined tail),
/// query being the mean of the refined seed representations. Ties break
/// lexicographically by (head, relation, tail) labels.
pub fn rank_evidence(
    sub: &Subgraph,
    store: &KgStore,
    table: &EmbeddingTable,
    refined: &NodeRepresentations,
    norm: Norm,
    params: &RankParams,
) -> Result<Vec<(Triple, f64)>> {
    if sub.triples.is_empty() {
        return Ok(Vec::new());
    }
    let query = mean_rows(refined, &sub.seeds);
    let mut scored = Vec::with_capacity(sub.triples.len());
    for &(triple, hop) in &sub.triples {
        let distance = transe::score_triple(table, triple.head, triple.relation, triple.tail, norm)?;
        let tail_row = refined.matrix.row(triple.tail.0 as usize);
        let similarity = cosine(&query, tail_row.to_slice().unwrap());
        let score = -params.hop_penalty * hop as f64 - params.distance_weight * distance + similarity;
        let key = (
            store.entity_label(triple.head)?.to_string(),
            store.relation_label(triple.relation)?.to_string(),
            store.entity_label(triple.tail)?.to_string(),
        );
        scored.push((triple, score, key));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.2.cmp(&b.2))
    });
    Ok(scored.into_iter().map(|(t, s, _)| (t, s)).collect())
}

/// Concatenate [e_d; g_d].
pub fn fuse_representations(e_d: &[f64], g_d: &[f64]) -> Result<Vec<f64>> {
    if e_d.is_empty() && g_d.is_empty() {
        return Err(Error::Config("cannot fuse two empty vectors".to_string()));
    }
    let mut out = Vec::with_capacity(e_d.len() + g_d.len());
    out.extend_from_slice(e_d);
    out.extend_from_slice(g_d);
    Ok(out)
}

/// Serialize the top-k triples under an `EVIDENCE:` header and fuse the
/// mention entity's TransE and refined vectors (mean over distinct mention
/// entities when several link).
pub fn build_evidence_context(
    ranked: &[(Triple, f64)],
    mentions: &[EntityMention],
    store: &KgStore,
    table: &EmbeddingTable,
    refined: &NodeRepresentations,
    top_k: usize,
) -> Result<EvidenceBundle> {
    if mentions.is_empty() {
        return Err(Error::NoEntityLinked);
    }
    let mut entities: Vec<EntityId> = Vec::new();
    for m in mentions {
        if !entities.contains(&m.entity) {
            entities.push(m.entity);
        }
    }
    let dim = table.dim;
    let mut e_d = vec![0.0; dim];
    for &e in &entities {
        for (a, v) in e_d.iter_mut().zip(table.entity(e)) {
            *a += v;
        }
    }
    let n = entities.len() as f64;
    e_d.iter_mut().for_each(|v| *v /= n);
    let g_d = mean_rows(refined, &entities);
    let fused_vector = fuse_representations(&e_d, &g_d)?;

    let mut context_text = String::from("EVIDENCE:");
    for (triple, _) in ranked.iter().take(top_k) {
        context_text.push_str(&format!(
            "\n- {} | {} | {}",
            store.entity_label(triple.head)?,
            store.relation_label(triple.relation)?,
            store.entity_label(triple.tail)?,
        ));
    }
    Ok(EvidenceBundle {
        ranked_triples: ranked.to_vec(),
        fused_vector,
        context_text,
    })
}
