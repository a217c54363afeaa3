use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kgqa::evaluation::{self, compute_metrics, score_prediction};
use kgqa::gcn::{self, NodeRepresentations};
use kgqa::generation::{Backend, HttpGeneratorConfig};
use kgqa::kg::KgStore;
use kgqa::pipeline::{run_pipeline, PipelineConfig, PipelineOutcome};
use kgqa::retrieval::RankParams;
use kgqa::transe::{self, EmbeddingTable, Norm, TrainConfig};

#[derive(Parser)]
#[command(name = "kgqa", about = "Knowledge-graph-augmented question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-graph ingestion and inspection
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// TransE embedding training and link-prediction evaluation
    Embed {
        #[command(subcommand)]
        command: EmbedCommand,
    },
    /// GCN refinement of trained embeddings
    Gcn {
        #[command(subcommand)]
        command: GcnCommand,
    },
    /// One-shot question answering
    Query {
        #[command(subcommand)]
        command: QueryCommand,
    },
    /// QA dataset evaluation
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum KgCommand {
    /// Ingest a triple TSV (and optional alias TSV) into a store directory
    Ingest {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print graph statistics as JSON
    Stats {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long, default_value = "l2")]
        norm: String,
        #[arg(long, default_value_t = 1)]
        negatives: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filtered link-prediction metrics (MRR, Hits@{1,3,10}) on held-out triples
    Eval {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
}

#[derive(Subcommand)]
enum GcnCommand {
    Refine {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long)]
        fine_tune: bool,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RetrievalArgs {
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 64)]
    budget: usize,
    #[arg(long, default_value_t = 12)]
    top_k: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value = "template")]
    backend: String,
    #[arg(long, default_value_t = 30)]
    gen_timeout_secs: u64,
}

#[derive(Subcommand)]
enum QueryCommand {
    Ask {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        gcn: PathBuf,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    Run {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        gcn: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report_csv: Option<PathBuf>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
    },
}

fn load_store(path: &PathBuf) -> Result<KgStore> {
    KgStore::load(path).with_context(|| format!("loading store from {}", path.display()))
}

fn pipeline_config(args: &RetrievalArgs, norm: Norm) -> Result<PipelineConfig> {
    let backend = match args.backend.as_str() {
        "template" => Backend::Template,
        "http" => {
            let mut config = HttpGeneratorConfig::from_env()?;
            config.timeout_secs = args.gen_timeout_secs;
            Backend::Http(config)
        }
        other => bail!("unknown backend '{other}' (expected 'template' or 'http')"),
    };
    Ok(PipelineConfig {
        hop_limit: args.hops,
        budget: args.budget,
        top_k: args.top_k,
        rank_params: RankParams {
            hop_penalty: args.alpha,
            distance_weight: args.beta,
        },
        norm,
        backend,
        max_answer_entities: 16,
    })
}

fn load_artifacts(
    store: &PathBuf,
    vectors: &PathBuf,
    gcn_path: &PathBuf,
) -> Result<(KgStore, EmbeddingTable, Norm, NodeRepresentations)> {
    let store = load_store(store)?;
    let (table, norm) = transe::load_table(vectors)?;
    let refined = gcn::load_representations(gcn_path)?;
    if table.entities.nrows() != store.num_entities() {
        bail!(
            "vector file has {} entities but the store has {}",
            table.entities.nrows(),
            store.num_entities()
        );
    }
    Ok((store, table, norm, refined))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Kg { command } => match command {
            KgCommand::Ingest { triples, aliases, out } => {
                let reader = BufReader::new(fs::File::open(&triples)?);
                let alias_reader = aliases
                    .map(|p| fs::File::open(p).map(BufReader::new))
                    .transpose()?;
                let store = KgStore::ingest_triples(reader, alias_reader)?;
                store.save(&out)?;
                println!("{}", serde_json::to_string_pretty(&store.graph_stats())?);
            }
            KgCommand::Stats { store } => {
                let store = load_store(&store)?;
                println!("{}", serde_json::to_string_pretty(&store.graph_stats())?);
            }
        },
        Command::Embed { command } => match command {
            EmbedCommand::Train {
                store,
                dim,
                epochs,
                lr,
                margin,
                norm,
                negatives,
                batch_size,
                seed,
                out,
            } => {
                let store = load_store(&store)?;
                let norm: Norm = norm.parse()?;
                let config = TrainConfig {
                    margin,
                    learning_rate: lr,
                    epochs,
                    norm,
                    negatives_per_positive: negatives,
                    seed,
                    batch_size,
                };
                let mut table =
                    transe::init_embeddings(store.num_entities(), store.num_relations(), dim, seed)?;
                let stats = transe::train(&store, &mut table, &config)?;
                transe::save_table(&table, norm, &out)?;
                let last = stats.last();
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "epochs": stats.len(),
                        "final": last,
                    }))?
                );
            }
            EmbedCommand::Eval { store, vectors, test } => {
                let store = load_store(&store)?;
                let (table, norm) = transe::load_table(&vectors)?;
                let test_store = KgStore::ingest_triples(
                    BufReader::new(fs::File::open(&test)?),
                    None::<BufReader<fs::File>>,
                )?;
                // test triples are expressed over the training vocabulary
                let mut test_triples = Vec::new();
                for t in test_store.triples() {
                    let h = store
                        .entity_id(test_store.entity_label(t.head)?)
                        .context("test head not in training vocabulary")?;
                    let r = store
                        .relation_id(test_store.relation_label(t.relation)?)
                        .context("test relation not in training vocabulary")?;
                    let tl = store
                        .entity_id(test_store.entity_label(t.tail)?)
                        .context("test tail not in training vocabulary")?;
                    test_triples.push(kgqa::Triple::new(h, r, tl));
                }
                let report =
                    transe::evaluate_link_prediction(&table, &test_triples, &store, norm)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
        },
        Command::Gcn { command } => match command {
            GcnCommand::Refine {
                store,
                vectors,
                layers,
                fine_tune,
                epochs,
                lr,
                seed,
                out,
            } => {
                let store = load_store(&store)?;
                let (table, norm) = transe::load_table(&vectors)?;
                let mut layer_stack = gcn::default_layers(table.dim, layers, seed)?;
                let tune_config = fine_tune.then(|| TrainConfig {
                    learning_rate: lr,
                    epochs,
                    norm,
                    seed,
                    ..TrainConfig::default()
                });
                let reps =
                    gcn::refine_embeddings(&table, &store, &mut layer_stack, tune_config.as_ref())?;
                gcn::save_representations(&reps, layers, &out)?;
                println!(
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "nodes": reps.matrix.nrows(),
                        "dim": reps.matrix.ncols(),
                        "layers": layers,
                        "fine_tuned": fine_tune,
                    }))?
                );
            }
        },
        Command::Query { command } => match command {
            QueryCommand::Ask {
                store,
                vectors,
                gcn,
                question,
                retrieval,
            } => {
                let (store, table, norm, refined) = load_artifacts(&store, &vectors, &gcn)?;
                let config = pipeline_config(&retrieval, norm)?;
                let result = run_pipeline(&question, &store, &table, &refined, &config)?;
                let output = match &result.outcome {
                    PipelineOutcome::Abstained { reason } => json!({
                        "abstained": true,
                        "reason": reason,
                        "timings": result.timings,
                    }),
                    PipelineOutcome::Answered { answer, evidence } => {
                        let labels: Vec<String> = answer
                            .answer_entities
                            .iter()
                            .map(|&e| store.entity_label(e).map(str::to_string))
                            .collect::<kgqa::Result<_>>()?;
                        json!({
                            "abstained": false,
                            "answer": answer.text,
                            "answer_entities": labels,
                            "context": evidence.context_text,
                            "fused_vector_len": evidence.fused_vector.len(),
                            "timings": result.timings,
                        })
                    }
                };
                println!("{}", serde_json::to_string_pretty(&output)?);
            }
        },
        Command::Eval { command } => match command {
            EvalCommand::Run {
                store,
                vectors,
                gcn,
                dataset,
                report_csv,
                retrieval,
            } => {
                let (store, table, norm, refined) = load_artifacts(&store, &vectors, &gcn)?;
                let config = pipeline_config(&retrieval, norm)?;
                let examples =
                    evaluation::load_qa_dataset(BufReader::new(fs::File::open(&dataset)?))?;
                let mut scored = Vec::with_capacity(examples.len());
                for example in &examples {
                    let result =
                        run_pipeline(&example.question, &store, &table, &refined, &config)?;
                    let predicted = result.predicted_labels(&store)?;
                    let gold: BTreeSet<String> = example
                        .gold
                        .iter()
                        .map(|g| kgqa::kg::normalize_label(g))
                        .collect();
                    scored.push((example.qtype, score_prediction(&predicted, &gold)));
                }
                let report = compute_metrics(&scored)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                if let Some(path) = report_csv {
                    fs::write(&path, evaluation::metrics_csv(&retrieval.backend, &report))?;
                }
            }
        },
    }
    Ok(())
}
