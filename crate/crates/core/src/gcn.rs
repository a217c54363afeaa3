//! Degree-normalized graph convolution over the knowledge graph.
//!
//! Edge directions are symmetrized and every node carries a self-loop, so an
//! isolated node keeps its own features. Aggregation weight between adjacent
//! nodes i, j is 1/sqrt(deg(i) deg(j)) with degrees taken on the augmented
//! simple graph. Relation types do not enter the aggregation; relation
//! semantics come in only through the TransE initialization.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::KgStore;
use crate::transe::{self, EmbeddingTable, TrainConfig};
use crate::vecfile::{read_vec_file, write_vec_file, VecFile};

#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    node_count: usize,
    /// Per-row sorted (neighbor, weight) lists, self-loop included.
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedAdjacency {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }

    /// Sparse product: out = A_hat_norm * m.
    fn aggregate(&self, m: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(m.raw_dim());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                let src = m.row(j);
                let mut dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += w * s;
                }
            }
        }
        out
    }
}

/// Symmetrize edges, add self-loops, weight by 1/sqrt(deg(i) deg(j)).
pub fn normalized_adjacency(store: &KgStore) -> Result<NormalizedAdjacency> {
    let n = store.num_entities();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut adjacent: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, set) in adjacent.iter_mut().enumerate() {
        set.insert(i);
    }
    for t in store.triples() {
        let (h, tl) = (t.head.0 as usize, t.tail.0 as usize);
        adjacent[h].insert(tl);
        adjacent[tl].insert(h);
    }
    let degrees: Vec<f64> = adjacent.iter().map(|s| s.len() as f64).collect();
    let rows = adjacent
        .iter()
        .enumerate()
        .map(|(i, set)| {
            set.iter()
                .map(|&j| (j, 1.0 / (degrees[i] * degrees[j]).sqrt()))
                .collect()
        })
        .collect();
    Ok(NormalizedAdjacency { node_count: n, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut Array2<f64>) {
        if self == Activation::Relu {
            m.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Debug, Clone)]
pub struct GcnLayerWeights {
    pub weights: Array2<f64>,
    pub activation: Activation,
}

impl GcnLayerWeights {
    pub fn identity(dim: usize, activation: Activation) -> Self {
        GcnLayerWeights {
            weights: Array2::eye(dim),
            activation,
        }
    }

    pub fn random<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut weights = Array2::zeros((in_dim, out_dim));
        for v in weights.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        GcnLayerWeights { weights, activation }
    }
}

/// Default stack: `count` layers with hidden dim = embedding dim, ReLU on all
/// but the last, identity on the last. Seeded uniform init in
/// [-1/sqrt(in_dim), +1/sqrt(in_dim)].
pub fn default_layers(dim: usize, count: usize, seed: u64) -> Result<Vec<GcnLayerWeights>> {
    if count == 0 {
        return Err(Error::Config("layer count must be at least 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| {
            let activation = if i + 1 == count {
                Activation::Identity
            } else {
                Activation::Relu
            };
            GcnLayerWeights::random(dim, dim, activation, &mut rng)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct NodeRepresentations {
    pub matrix: Array2<f64>,
    pub layer_index: usize,
}

/// One message-passing step: sigma(A_hat_norm * H * W).
pub fn gcn_layer_forward(
    h: &NodeRepresentations,
    adjacency: &NormalizedAdjacency,
    layer: &GcnLayerWeights,
) -> Result<NodeRepresentations> {
    if h.matrix.ncols() != layer.weights.nrows() {
        return Err(Error::Shape(format!(
            "input width {} does not match layer in_dim {}",
            h.matrix.ncols(),
            layer.weights.nrows()
        )));
    }
    if h.matrix.nrows() != adjacency.node_count() {
        return Err(Error::Shape(format!(
            "input has {} rows but the graph has {} nodes",
            h.matrix.nrows(),
            adjacency.node_count()
        )));
    }
    let projected = h.matrix.dot(&layer.weights);
    let mut out = adjacency.aggregate(&projected);
    layer.activation.apply(&mut out);
    Ok(NodeRepresentations {
        matrix: out,
        layer_index: h.layer_index + 1,
    })
}

/// Forward pass keeping per-layer inputs and pre-activations for backprop.
struct ForwardTrace {
    /// inputs[l] is the input to layer l (inputs[0] = H0).
    inputs: Vec<Array2<f64>>,
    /// preacts[l] = A * inputs[l] * W_l, before the activation.
    preacts: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn forward_trace(
    h0: &Array2<f64>,
    adjacency: &NormalizedAdjacency,
    layers: &[GcnLayerWeights],
) -> ForwardTrace {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut preacts = Vec::with_capacity(layers.len());
    let mut current = h0.clone();
    for layer in layers {
        inputs.push(current.clone());
        let z = adjacency.aggregate(&current.dot(&layer.weights));
        preacts.push(z.clone());
        let mut a = z;
        layer.activation.apply(&mut a);
        current = a;
    }
    ForwardTrace {
        inputs,
        preacts,
        output: current,
    }
}

/// Backprop a gradient on the output rows down to per-layer weight gradients.
/// A_hat_norm is symmetric, so the adjoint of aggregation is aggregation.
fn backward(
    trace: &ForwardTrace,
    adjacency: &NormalizedAdjacency,
    layers: &[GcnLayerWeights],
    grad_output: &Array2<f64>,
) -> Vec<Array2<f64>> {
    let mut grads = vec![Array2::zeros((0, 0)); layers.len()];
    let mut grad_h = grad_output.clone();
    for l in (0..layers.len()).rev() {
        let mut grad_z = grad_h;
        if layers[l].activation == Activation::Relu {
            for (g, &z) in grad_z.iter_mut().zip(trace.preacts[l].iter()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let agg_grad = adjacency.aggregate(&grad_z);
        grads[l] = trace.inputs[l].t().dot(&agg_grad);
        grad_h = agg_grad.dot(&layers[l].weights.t());
    }
    grads
}

/// Refine TransE entity vectors through the layer stack. With `fine_tune`,
/// layer weights are first optimized against the margin ranking loss computed
/// on GCN-output entity vectors (relation vectors stay frozen).
pub fn refine_embeddings(
    table: &EmbeddingTable,
    store: &KgStore,
    layers: &mut [GcnLayerWeights],
    fine_tune: Option<&TrainConfig>,
) -> Result<NodeRepresentations> {
    if layers.is_empty() {
        return Err(Error::Config("empty GCN layer list".to_string()));
    }
    if layers[0].weights.nrows() != table.dim {
        return Err(Error::Shape(format!(
            "first layer in_dim {} does not match embedding dim {}",
            layers[0].weights.nrows(),
            table.dim
        )));
    }
    let adjacency = normalized_adjacency(store)?;
    if let Some(config) = fine_tune {
        fine_tune_layers(table, store, &adjacency, layers, config)?;
    }
    let mut reps = NodeRepresentations {
        matrix: table.entities.clone(),
        layer_index: 0,
    };
    for layer in layers.iter() {
        reps = gcn_layer_forward(&reps, &adjacency, layer)?;
    }
    Ok(reps)
}

/// Full-batch gradient descent per epoch on the margin loss, sampling one
/// filtered negative per positive with the config's seed.
fn fine_tune_layers(
    table: &EmbeddingTable,
    store: &KgStore,
    adjacency: &NormalizedAdjacency,
    layers: &mut [GcnLayerWeights],
    config: &TrainConfig,
) -> Result<()> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.epochs {
        let trace = forward_trace(&table.entities, adjacency, layers);
        let refined = EmbeddingTable {
            dim: trace.output.ncols(),
            entities: trace.output.clone(),
            relations: table.relations.clone(),
        };
        let mut order: Vec<usize> = (0..store.num_triples()).collect();
        order.shuffle(&mut rng);
        let mut grad_output: Array2<f64> = Array2::zeros(trace.output.raw_dim());
        let mut any_active = false;
        for idx in order {
            let positive = store.triples()[idx];
            for _ in 0..config.negatives_per_positive {
                let negative = transe::sample_negative(&positive, store, &mut rng)?;
                let grad = transe::loss_gradient(&positive, &negative, &refined, config)?;
                if !grad.active {
                    continue;
                }
                any_active = true;
                for (row, g) in [
                    (positive.head.0 as usize, &grad.head),
                    (positive.tail.0 as usize, &grad.tail),
                    (negative.triple.head.0 as usize, &grad.neg_head),
                    (negative.triple.tail.0 as usize, &grad.neg_tail),
                ] {
                    let mut r = grad_output.row_mut(row);
                    for (acc, v) in r.iter_mut().zip(g) {
                        *acc += v;
                    }
                }
            }
        }
        if !any_active {
            break;
        }
        let scale = 1.0 / store.num_triples().max(1) as f64;
        grad_output.mapv_inplace(|v| v * scale);
        let weight_grads = backward(&trace, adjacency, layers, &grad_output);
        for (layer, grad) in layers.iter_mut().zip(weight_grads) {
            layer.weights.scaled_add(-config.learning_rate, &grad);
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Diverged(format!(
                "non-finite GCN weight after fine-tune epoch {epoch}"
            )));
        }
    }
    Ok(())
}

pub fn save_representations(reps: &NodeRepresentations, num_layers: usize, path: &Path) -> Result<()> {
    write_vec_file(
        path,
        &VecFile {
            dim: reps.matrix.ncols(),
            entities: reps.matrix.clone(),
            relations: Array2::zeros((0, reps.matrix.ncols())),
            tags: [
                ("kind".to_string(), "gcn".to_string()),
                ("layers".to_string(), num_layers.to_string()),
            ]
            .into(),
        },
    )
}

pub fn load_representations(path: &Path) -> Result<NodeRepresentations> {
    let file = read_vec_file(path)?;
    let layer_index = file
        .tags
        .get("layers")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    Ok(NodeRepresentations {
        matrix: file.entities,
        layer_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transe::init_embeddings;
    use ndarray::array;
    use std::io::Cursor;

    fn ingest(tsv: &str) -> KgStore {
        KgStore::ingest_triples(Cursor::new(tsv), None::<Cursor<&str>>).unwrap()
    }

    /// Dense oracle: D^{-1/2} (A + I) D^{-1/2}.
    fn dense_normalized(store: &KgStore) -> Array2<f64> {
        let n = store.num_entities();
        let mut a = Array2::<f64>::eye(n);
        for t in store.triples() {
            a[(t.head.0 as usize, t.tail.0 as usize)] = 1.0;
            a[(t.tail.0 as usize, t.head.0 as usize)] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        let mut out = a;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] /= (deg[i] * deg[j]).sqrt();
            }
        }
        out
    }

    #[test]
    fn single_node_self_loop_weight_one() {
        let store = ingest("a\tr\ta\n");
        let adj = normalized_adjacency(&store).unwrap();
        assert_eq!(adj.node_count(), 1);
        assert_eq!(adj.weight(0, 0), 1.0);
    }

    #[test]
    fn two_node_weights_half() {
        let store = ingest("a\tr\tb\n");
        let adj = normalized_adjacency(&store).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((adj.weight(i, j) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn star_graph_weights() {
        let store = ingest("center\tr\tl1\ncenter\tr\tl2\ncenter\tr\tl3\n");
        let adj = normalized_adjacency(&store).unwrap();
        let c = store.entity_id("center").unwrap().0 as usize;
        let l = store.entity_id("l1").unwrap().0 as usize;
        assert!((adj.weight(c, c) - 0.25).abs() < 1e-12);
        assert!((adj.weight(c, l) - 1.0 / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adjacency_symmetric() {
        let store = ingest("a\tr\tb\nb\tr\tc\na\ts\tc\nc\tr\td\n");
        let adj = normalized_adjacency(&store).unwrap();
        for (i, j, w) in adj.edges() {
            assert!((adj.weight(j, i) - w).abs() < 1e-12);
            assert!(w > 0.0 && w <= 1.0);
        }
        for i in 0..adj.node_count() {
            assert!(adj.weight(i, i) > 0.0, "missing self-loop on {i}");
        }
    }

    #[test]
    fn empty_graph_rejected() {
        let store = ingest("");
        assert!(matches!(normalized_adjacency(&store), Err(Error::EmptyGraph)));
    }

    #[test]
    fn two_node_forward_hand_example() {
        let store = ingest("a\tr\tb\n");
        let adj = normalized_adjacency(&store).unwrap();
        let h = NodeRepresentations {
            matrix: Array2::eye(2),
            layer_index: 0,
        };
        let layer = GcnLayerWeights::identity(2, Activation::Identity);
        let out = gcn_layer_forward(&h, &adj, &layer).unwrap();
        let expected = array![[0.5, 0.5], [0.5, 0.5]];
        for (a, b) in out.matrix.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_node_passthrough() {
        // b and c are connected; a only appears as a head of a self-triple
        let store = ingest("a\tr\ta\nb\tr\tc\n");
        let adj = normalized_adjacency(&store).unwrap();
        let h = NodeRepresentations {
            matrix: array![[3.0, -1.0], [1.0, 1.0], [2.0, 0.0]],
            layer_index: 0,
        };
        let layer = GcnLayerWeights::identity(2, Activation::Identity);
        let out = gcn_layer_forward(&h, &adj, &layer).unwrap();
        let a = store.entity_id("a").unwrap().0 as usize;
        assert!((out.matrix[(a, 0)] - 3.0).abs() < 1e-12);
        assert!((out.matrix[(a, 1)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn relu_output_nonnegative() {
        let store = ingest("a\tr\tb\nb\tr\tc\n");
        let adj = normalized_adjacency(&store).unwrap();
        let h = NodeRepresentations {
            matrix: array![[-5.0, 1.0], [2.0, -3.0], [0.5, 0.5]],
            layer_index: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = GcnLayerWeights::random(2, 3, Activation::Relu, &mut rng);
        let out = gcn_layer_forward(&h, &adj, &layer).unwrap();
        assert!(out.matrix.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let store = ingest("a\tr\tb\n");
        let adj = normalized_adjacency(&store).unwrap();
        let h = NodeRepresentations {
            matrix: Array2::zeros((2, 3)),
            layer_index: 0,
        };
        let layer = GcnLayerWeights::identity(2, Activation::Identity);
        assert!(gcn_layer_forward(&h, &adj, &layer).is_err());
    }

    #[test]
    fn sparse_matches_dense_oracle() {
        let store = ingest("a\tr\tb\nb\tr\tc\nc\ts\td\nd\ts\ta\nb\ts\td\n");
        let adj = normalized_adjacency(&store).unwrap();
        let dense = dense_normalized(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h0 = Array2::zeros((store.num_entities(), 4));
        for v in h0.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let layer = GcnLayerWeights::random(4, 4, Activation::Relu, &mut rng);
        let sparse = gcn_layer_forward(
            &NodeRepresentations {
                matrix: h0.clone(),
                layer_index: 0,
            },
            &adj,
            &layer,
        )
        .unwrap();
        let mut expected = dense.dot(&h0.dot(&layer.weights));
        expected.mapv_inplace(|v| v.max(0.0));
        for (a, b) in sparse.matrix.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_layers_is_contract_error() {
        let store = ingest("a\tr\tb\n");
        let table = init_embeddings(2, 1, 4, 0).unwrap();
        assert!(refine_embeddings(&table, &store, &mut [], None).is_err());
    }

    #[test]
    fn identity_layers_on_edgeless_graph_preserve_table() {
        // self-triples only: aggregation reduces to the self-loop
        let store = ingest("a\tr\ta\nb\tr\tb\n");
        let table = init_embeddings(2, 1, 4, 5).unwrap();
        let mut layers = vec![GcnLayerWeights::identity(4, Activation::Identity)];
        let reps = refine_embeddings(&table, &store, &mut layers, None).unwrap();
        for (a, b) in reps.matrix.iter().zip(table.entities.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn refine_equals_composed_layers() {
        let store = ingest("a\tr\tb\nb\tr\tc\nc\ts\td\nd\ts\ta\nb\ts\td\n");
        let table = init_embeddings(store.num_entities(), store.num_relations(), 6, 8).unwrap();
        let mut layers = default_layers(6, 2, 8).unwrap();
        let reps = refine_embeddings(&table, &store, &mut layers, None).unwrap();

        let adj = normalized_adjacency(&store).unwrap();
        let step1 = gcn_layer_forward(
            &NodeRepresentations {
                matrix: table.entities.clone(),
                layer_index: 0,
            },
            &adj,
            &layers[0],
        )
        .unwrap();
        let step2 = gcn_layer_forward(&step1, &adj, &layers[1]).unwrap();
        for (a, b) in reps.matrix.iter().zip(step2.matrix.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(reps.layer_index, 2);
    }

    #[test]
    fn node_order_equivariance() {
        // the same graph ingested with entity first-appearance order permuted
        let tsv_a = "a\tr\tb\nb\tr\tc\nc\ts\ta\n";
        let tsv_b = "c\ts\ta\nb\tr\tc\na\tr\tb\n";
        let s1 = ingest(tsv_a);
        let s2 = ingest(tsv_b);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut h = Array2::zeros((3, 3));
        for v in h.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let layer = GcnLayerWeights::random(3, 3, Activation::Identity, &mut rng);
        // permute rows of H to follow each store's id assignment for labels a,b,c
        let out = |store: &KgStore| {
            let mut hp = Array2::zeros((3, 3));
            for (row, label) in ["a", "b", "c"].iter().enumerate() {
                let id = store.entity_id(label).unwrap().0 as usize;
                hp.row_mut(id).assign(&h.row(row));
            }
            let adj = normalized_adjacency(store).unwrap();
            let reps = gcn_layer_forward(
                &NodeRepresentations {
                    matrix: hp,
                    layer_index: 0,
                },
                &adj,
                &layer,
            )
            .unwrap();
            reps.matrix
        };
        let o1 = out(&s1);
        let o2 = out(&s2);
        for (row, label) in ["a", "b", "c"].iter().enumerate() {
            let i1 = s1.entity_id(label).unwrap().0 as usize;
            let i2 = s2.entity_id(label).unwrap().0 as usize;
            for k in 0..3 {
                assert!((o1[(i1, k)] - o2[(i2, k)]).abs() < 1e-9, "row {row}");
            }
        }
    }

    #[test]
    fn locality_outside_l_hop_neighborhood() {
        // chain a-b-c-d-e; editing the far end must not move node a after 2 layers
        let base = "a\tr\tb\nb\tr\tc\nc\tr\td\nd\tr\te\n";
        let edited = "a\tr\tb\nb\tr\tc\nc\tr\td\nd\tr\te\nd\ts\te\ne\tr\tf\n";
        let s1 = ingest(base);
        let s2 = ingest(edited);
        let dim = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let feats: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let layers: Vec<GcnLayerWeights> = (0..2)
            .map(|i| {
                GcnLayerWeights::random(
                    dim,
                    dim,
                    if i == 0 { Activation::Relu } else { Activation::Identity },
                    &mut rng,
                )
            })
            .collect();
        let run = |store: &KgStore| {
            let n = store.num_entities();
            let mut h = Array2::zeros((n, dim));
            for (idx, label) in ["a", "b", "c", "d", "e", "f"].iter().enumerate() {
                if let Some(id) = store.entity_id(label) {
                    for k in 0..dim {
                        h[(id.0 as usize, k)] = feats[idx][k];
                    }
                }
            }
            let adj = normalized_adjacency(store).unwrap();
            let mut reps = NodeRepresentations {
                matrix: h,
                layer_index: 0,
            };
            for layer in &layers {
                reps = gcn_layer_forward(&reps, &adj, layer).unwrap();
            }
            reps.matrix
        };
        let o1 = run(&s1);
        let o2 = run(&s2);
        // the edits touch only d/e/f, all at distance >= 3 from a
        let a1 = s1.entity_id("a").unwrap().0 as usize;
        let a2 = s2.entity_id("a").unwrap().0 as usize;
        for k in 0..dim {
            assert!((o1[(a1, k)] - o2[(a2, k)]).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        // quadratic objective L = 0.5 * ||H_out - T||^2 against a fixed target
        let store = ingest("a\tr\tb\nb\tr\tc\nc\ts\td\nd\ts\ta\n");
        let adj = normalized_adjacency(&store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = store.num_entities();
        let dim = 3;
        let mut h0 = Array2::zeros((n, dim));
        let mut target = Array2::zeros((n, dim));
        for v in h0.iter_mut().chain(target.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut layers = vec![
            GcnLayerWeights::random(dim, dim, Activation::Relu, &mut rng),
            GcnLayerWeights::random(dim, dim, Activation::Identity, &mut rng),
        ];
        let loss = |layers: &[GcnLayerWeights]| {
            let trace = forward_trace(&h0, &adj, layers);
            trace
                .output
                .iter()
                .zip(target.iter())
                .map(|(o, t)| 0.5 * (o - t) * (o - t))
                .sum::<f64>()
        };
        let trace = forward_trace(&h0, &adj, &layers);
        let grad_out = &trace.output - &target;
        let grads = backward(&trace, &adj, &layers, &grad_out);
        let step = 1e-6;
        for l in 0..layers.len() {
            for i in 0..dim {
                for j in 0..dim {
                    let orig = layers[l].weights[(i, j)];
                    layers[l].weights[(i, j)] = orig + step;
                    let up = loss(&layers);
                    layers[l].weights[(i, j)] = orig - step;
                    let down = loss(&layers);
                    layers[l].weights[(i, j)] = orig;
                    let numeric = (up - down) / (2.0 * step);
                    let analytic = grads[l][(i, j)];
                    assert!(
                        (numeric - analytic).abs() < 1e-5 * numeric.abs().max(1.0),
                        "layer {l} ({i},{j}): analytic {analytic} vs numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn fine_tune_reduces_margin_loss() {
        // chain with one chord; a complete graph would collapse every row to
        // the mean under normalized aggregation and freeze the loss
        let store = ingest("a\tr\tb\nb\tr\tc\nc\ts\td\nd\ts\te\na\ts\tc\ne\tr\tf\n");
        let table = init_embeddings(store.num_entities(), store.num_relations(), 8, 12).unwrap();
        let config = TrainConfig {
            epochs: 40,
            learning_rate: 0.1,
            seed: 12,
            ..TrainConfig::default()
        };
        let loss_of = |layers: &mut [GcnLayerWeights], tune: Option<&TrainConfig>| {
            let reps = refine_embeddings(&table, &store, layers, tune).unwrap();
            let refined = EmbeddingTable {
                dim: reps.matrix.ncols(),
                entities: reps.matrix,
                relations: table.relations.clone(),
            };
            // deterministic sweep of margin losses against a fixed negative set
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut total = 0.0;
            for positive in store.triples() {
                let negative = transe::sample_negative(positive, &store, &mut rng).unwrap();
                total += transe::loss_gradient(positive, &negative, &refined, &config)
                    .unwrap()
                    .loss;
            }
            total
        };
        let mut untouched = default_layers(8, 2, 12).unwrap();
        let before = loss_of(&mut untouched, None);
        let mut tuned = default_layers(8, 2, 12).unwrap();
        let after = loss_of(&mut tuned, Some(&config));
        assert!(after < before, "fine-tune did not reduce loss: {after} vs {before}");
    }

    #[test]
    fn representations_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gcn.txt");
        let reps = NodeRepresentations {
            matrix: array![[1.0, 2.0], [3.0, 4.0]],
            layer_index: 2,
        };
        save_representations(&reps, 2, &path).unwrap();
        let loaded = load_representations(&path).unwrap();
        assert_eq!(loaded.layer_index, 2);
        for (a, b) in reps.matrix.iter().zip(loaded.matrix.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
