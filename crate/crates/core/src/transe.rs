//! TransE embedding training: translation scoring, margin ranking loss with
//! filtered negative sampling, SGD with unit-ball projection of entity
//! vectors, and filtered link-prediction evaluation.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KgStore, RelationId, Triple};
use crate::vecfile::{read_vec_file, write_vec_file, VecFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    L1,
    L2,
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::Config(format!("unknown norm '{other}'"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Norm::L1 => write!(f, "L1"),
            Norm::L2 => write!(f, "L2"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
}

impl EmbeddingTable {
    pub fn entity(&self, e: EntityId) -> &[f64] {
        self.entities.row(e.0 as usize).to_slice().unwrap()
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        self.relations.row(r.0 as usize).to_slice().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub norm: Norm,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            learning_rate: 0.01,
            epochs: 100,
            norm: Norm::L2,
            negatives_per_positive: 1,
            seed: 0,
            batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(Error::Config("margin must be positive".to_string()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".to_string()));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config(
                "negatives_per_positive must be at least 1".to_string(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeTriple {
    pub triple: Triple,
    pub corrupted_slot: Slot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch_index: usize,
    pub mean_loss: f64,
    pub active_margin_fraction: f64,
}

/// Entries uniform in [-6/sqrt(dim), +6/sqrt(dim)]; relation vectors
/// L2-normalized once at init. Deterministic given the seed.
pub fn init_embeddings(
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dim must be at least 1".to_string()));
    }
    let bound = 6.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |rows: usize| -> Array2<f64> {
        let mut m = Array2::zeros((rows, dim));
        for v in m.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        m
    };
    let entities = fill(num_entities);
    let mut relations = fill(num_relations);
    for mut row in relations.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(EmbeddingTable {
        dim,
        entities,
        relations,
    })
}

fn distance(diff: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L1 => diff.iter().map(|v| v.abs()).sum(),
        Norm::L2 => diff.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn translation_diff(table: &EmbeddingTable, h: EntityId, r: RelationId, t: EntityId) -> Vec<f64> {
    let hv = table.entity(h);
    let rv = table.relation(r);
    let tv = table.entity(t);
    hv.iter()
        .zip(rv)
        .zip(tv)
        .map(|((h, r), t)| h + r - t)
        .collect()
}

/// d(h + r, t) under the chosen norm.
pub fn score_triple(
    table: &EmbeddingTable,
    h: EntityId,
    r: RelationId,
    t: EntityId,
    norm: Norm,
) -> Result<f64> {
    if (h.0 as usize) >= table.entities.nrows() || (t.0 as usize) >= table.entities.nrows() {
        return Err(Error::UnknownEntity(h.0.max(t.0)));
    }
    if (r.0 as usize) >= table.relations.nrows() {
        return Err(Error::UnknownRelation(r.0));
    }
    Ok(distance(&translation_diff(table, h, r, t), norm))
}

pub fn hinge_loss(d_pos: f64, d_neg: f64, margin: f64) -> f64 {
    (margin + d_pos - d_neg).max(0.0)
}

/// Corrupt head or tail with probability 1/2 each, rejecting corruptions that
/// are members of the positive set (filtered) until one is found or |V|
/// rejections have occurred.
pub fn sample_negative<R: Rng>(
    positive: &Triple,
    store: &KgStore,
    rng: &mut R,
) -> Result<NegativeTriple> {
    let n = store.num_entities();
    if n < 2 {
        return Err(Error::Config(
            "negative sampling needs at least 2 entities".to_string(),
        ));
    }
    let corrupt_head = rng.gen_bool(0.5);
    let mut rejected = vec![false; n];
    let mut rejections = 0;
    loop {
        let candidate = EntityId(rng.gen_range(0..n as u32));
        let (triple, original) = if corrupt_head {
            (
                Triple::new(candidate, positive.relation, positive.tail),
                positive.head,
            )
        } else {
            (
                Triple::new(positive.head, positive.relation, candidate),
                positive.tail,
            )
        };
        if candidate != original && !store.contains(&triple) {
            return Ok(NegativeTriple {
                triple,
                corrupted_slot: if corrupt_head { Slot::Head } else { Slot::Tail },
            });
        }
        // count distinct rejected candidates so redraws don't exhaust early
        if !rejected[candidate.0 as usize] {
            rejected[candidate.0 as usize] = true;
            rejections += 1;
            if rejections >= n {
                return Err(Error::SamplingExhausted(rejections));
            }
        }
    }
}

/// Gradient of d(h+r, t) with respect to the head vector (the tail gradient
/// is its negation, and the relation gradient equals the head gradient).
pub fn distance_grad(diff: &[f64], norm: Norm) -> Vec<f64> {
    match norm {
        Norm::L1 => diff
            .iter()
            .map(|&v| if v == 0.0 { 0.0 } else { v.signum() })
            .collect(),
        Norm::L2 => {
            let d = distance(diff, Norm::L2).max(1e-9);
            diff.iter().map(|v| v / d).collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub active: bool,
    /// d loss / d (positive head vector); also the relation contribution from
    /// the positive term.
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
    /// Gradients with respect to the negative triple's head/tail vectors.
    /// The uncorrupted slot coincides with a positive entity by id; callers
    /// accumulate per-row.
    pub neg_head: Vec<f64>,
    pub neg_tail: Vec<f64>,
}

impl LossGradient {
    fn zeros(dim: usize, loss: f64) -> Self {
        LossGradient {
            loss,
            active: false,
            head: vec![0.0; dim],
            relation: vec![0.0; dim],
            tail: vec![0.0; dim],
            neg_head: vec![0.0; dim],
            neg_tail: vec![0.0; dim],
        }
    }
}

/// Analytic gradient of `[margin + d_pos - d_neg]_+` over the five involved
/// vectors. Subgradient 0 exactly at the margin boundary.
pub fn loss_gradient(
    positive: &Triple,
    negative: &NegativeTriple,
    table: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<LossGradient> {
    let pos_diff = translation_diff(table, positive.head, positive.relation, positive.tail);
    let neg = &negative.triple;
    let neg_diff = translation_diff(table, neg.head, neg.relation, neg.tail);
    let d_pos = distance(&pos_diff, config.norm);
    let d_neg = distance(&neg_diff, config.norm);
    let loss = hinge_loss(d_pos, d_neg, config.margin);
    if loss <= 0.0 {
        return Ok(LossGradient::zeros(table.dim, loss));
    }
    let g_pos = distance_grad(&pos_diff, config.norm);
    let g_neg = distance_grad(&neg_diff, config.norm);
    let relation: Vec<f64> = g_pos.iter().zip(&g_neg).map(|(p, n)| p - n).collect();
    Ok(LossGradient {
        loss,
        active: true,
        tail: g_pos.iter().map(|v| -v).collect(),
        head: g_pos,
        relation,
        neg_head: g_neg.iter().map(|v| -v).collect(),
        neg_tail: g_neg,
    })
}

fn project_entities(table: &mut EmbeddingTable) {
    for mut row in table.entities.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
}

fn apply_row(matrix: &mut Array2<f64>, row: usize, grad: &[f64], lr: f64) {
    let mut r = matrix.row_mut(row);
    for (v, g) in r.iter_mut().zip(grad) {
        *v -= lr * g;
    }
}

/// One seeded-shuffled pass over all positives with per-pair SGD updates and
/// unit-ball projection of entity vectors after each batch.
pub fn train_epoch<R: Rng>(
    store: &KgStore,
    table: &mut EmbeddingTable,
    config: &TrainConfig,
    rng: &mut R,
    epoch_index: usize,
) -> Result<EpochStats> {
    if table.entities.nrows() != store.num_entities()
        || table.relations.nrows() != store.num_relations()
    {
        return Err(Error::Shape(
            "embedding table does not match store vocabularies".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..store.num_triples()).collect();
    order.shuffle(rng);
    let lr = config.learning_rate;
    let mut total_loss = 0.0;
    let mut active = 0usize;
    let mut pairs = 0usize;
    let mut in_batch = 0usize;
    for idx in order {
        let positive = store.triples()[idx];
        for _ in 0..config.negatives_per_positive {
            let negative = sample_negative(&positive, store, rng)?;
            let grad = loss_gradient(&positive, &negative, table, config)?;
            total_loss += grad.loss;
            pairs += 1;
            if grad.active {
                active += 1;
                apply_row(&mut table.entities, positive.head.0 as usize, &grad.head, lr);
                apply_row(&mut table.entities, positive.tail.0 as usize, &grad.tail, lr);
                apply_row(
                    &mut table.relations,
                    positive.relation.0 as usize,
                    &grad.relation,
                    lr,
                );
                apply_row(
                    &mut table.entities,
                    negative.triple.head.0 as usize,
                    &grad.neg_head,
                    lr,
                );
                apply_row(
                    &mut table.entities,
                    negative.triple.tail.0 as usize,
                    &grad.neg_tail,
                    lr,
                );
            }
            in_batch += 1;
            if in_batch >= config.batch_size {
                project_entities(table);
                in_batch = 0;
            }
        }
    }
    project_entities(table);
    if table.entities.iter().chain(table.relations.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Diverged(format!(
            "non-finite embedding after epoch {epoch_index}"
        )));
    }
    let pairs = pairs.max(1);
    Ok(EpochStats {
        epoch_index,
        mean_loss: total_loss / pairs as f64,
        active_margin_fraction: active as f64 / pairs as f64,
    })
}

/// Full training run; a pure function of (store, config).
pub fn train(store: &KgStore, table: &mut EmbeddingTable, config: &TrainConfig) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stats = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        stats.push(train_epoch(store, table, config, &mut rng, epoch)?);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkPredictionReport {
    pub mrr: f64,
    pub hits_at: BTreeMap<usize, f64>,
}

/// Filtered tail ranking: the true tail competes against every entity except
/// other known-true tails (store triples plus the test set itself). Rank is
/// 1 + the number of strictly better candidates.
pub fn evaluate_link_prediction(
    table: &EmbeddingTable,
    test_triples: &[Triple],
    store: &KgStore,
    norm: Norm,
) -> Result<LinkPredictionReport> {
    if test_triples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let known: HashSet<Triple> = store
        .triples()
        .iter()
        .chain(test_triples.iter())
        .copied()
        .collect();
    let ks = [1usize, 3, 10];
    let mut reciprocal_sum = 0.0;
    let mut hit_counts = [0usize; 3];
    for triple in test_triples {
        let true_score = score_triple(table, triple.head, triple.relation, triple.tail, norm)?;
        let mut rank = 1usize;
        for cand in 0..table.entities.nrows() as u32 {
            let candidate = EntityId(cand);
            if candidate == triple.tail {
                continue;
            }
            if known.contains(&Triple::new(triple.head, triple.relation, candidate)) {
                continue;
            }
            let s = score_triple(table, triple.head, triple.relation, candidate, norm)?;
            if s < true_score {
                rank += 1;
            }
        }
        reciprocal_sum += 1.0 / rank as f64;
        for (i, &k) in ks.iter().enumerate() {
            if rank <= k {
                hit_counts[i] += 1;
            }
        }
    }
    let n = test_triples.len() as f64;
    Ok(LinkPredictionReport {
        mrr: reciprocal_sum / n,
        hits_at: ks
            .iter()
            .zip(hit_counts)
            .map(|(&k, c)| (k, c as f64 / n))
            .collect(),
    })
}

pub fn save_table(table: &EmbeddingTable, norm: Norm, path: &Path) -> Result<()> {
    write_vec_file(
        path,
        &VecFile {
            dim: table.dim,
            entities: table.entities.clone(),
            relations: table.relations.clone(),
            tags: [("norm".to_string(), norm.to_string())].into(),
        },
    )
}

pub fn load_table(path: &Path) -> Result<(EmbeddingTable, Norm)> {
    let file = read_vec_file(path)?;
    let norm = file
        .tags
        .get("norm")
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(Norm::L2);
    Ok((
        EmbeddingTable {
            dim: file.dim,
            entities: file.entities,
            relations: file.relations,
        },
        norm,
    ))
}
