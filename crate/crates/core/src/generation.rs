//! Answer generation over retrieved evidence.
//!
//! Two interchangeable backends: a deterministic template backend that keys
//! on question intent and evidence relation labels, and an HTTP backend that
//! posts the prompt plus serialized evidence to an external generator.
//! Toy-scale attention and autoregressive log-likelihood operators live here
//! as verifiable primitives; no sequence model is trained.

use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KgStore, Triple};
use crate::retrieval::{self, EvidenceBundle};

/// softmax(Q K^T / sqrt(d_k)) V, row-wise.
pub fn scaled_dot_product_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
) -> Result<Array2<f64>> {
    let d_k = q.ncols();
    if d_k == 0 {
        return Err(Error::Shape("d_k must be at least 1".to_string()));
    }
    if k.ncols() != d_k {
        return Err(Error::Shape(format!(
            "K has width {}, expected {d_k}",
            k.ncols()
        )));
    }
    if k.nrows() != v.nrows() {
        return Err(Error::Shape(format!(
            "K has {} rows but V has {}",
            k.nrows(),
            v.nrows()
        )));
    }
    let mut logits = q.dot(&k.t());
    logits.mapv_inplace(|x| x / (d_k as f64).sqrt());
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    Ok(logits.dot(v))
}

/// Conditional next-token distribution oracle.
pub trait NextTokenModel {
    fn next_distribution(&self, prefix: &[usize]) -> Vec<f64>;
}

impl<F> NextTokenModel for F
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    fn next_distribution(&self, prefix: &[usize]) -> Vec<f64> {
        self(prefix)
    }
}

/// Sum of log p(x_i | x_<i) under the model's autoregressive factorization.
pub fn sequence_log_prob(tokens: &[usize], model: &dyn NextTokenModel) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Config("token sequence must be non-empty".to_string()));
    }
    let mut total = 0.0;
    for i in 0..tokens.len() {
        let dist = model.next_distribution(&tokens[..i]);
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::UnnormalizedDistribution(sum));
        }
        let p = dist.get(tokens[i]).copied().ok_or_else(|| {
            Error::Shape(format!(
                "token {} out of vocabulary (size {})",
                tokens[i],
                dist.len()
            ))
        })?;
        total += p.ln();
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct HttpGeneratorConfig {
    pub base_url: String,
    pub timeout_secs: u64,
    pub max_tokens: usize,
}

impl HttpGeneratorConfig {
    pub fn from_env() -> Result<Self> {
        let base_url = std::env::var("GENERATOR_URL")
            .map_err(|_| Error::Config("GENERATOR_URL is not set".to_string()))?;
        Ok(HttpGeneratorConfig {
            base_url,
            timeout_secs: 30,
            max_tokens: 256,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Template,
    Http(HttpGeneratorConfig),
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub question: String,
    pub evidence: EvidenceBundle,
    pub max_answer_entities: usize,
    pub backend: Backend,
}

#[derive(Debug, Clone)]
pub struct Answer {
    pub text: String,
    pub answer_entities: Vec<EntityId>,
    pub supporting_triples: Vec<Triple>,
}

pub const ABSTENTION_TEXT: &str = "no supported answer";

impl Answer {
    pub fn abstention() -> Self {
        Answer {
            text: ABSTENTION_TEXT.to_string(),
            answer_entities: Vec::new(),
            supporting_triples: Vec::new(),
        }
    }

    pub fn is_abstention(&self) -> bool {
        self.answer_entities.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Intent {
    Prevent,
    Treat,
    Symptom,
}

impl Intent {
    fn relation_key(self) -> &'static str {
        match self {
            Intent::Prevent => "prevent",
            Intent::Treat => "treat",
            Intent::Symptom => "symptom",
        }
    }
}

fn detect_intent(question: &str) -> Option<Intent> {
    for token in question.split(|c: char| !c.is_alphanumeric()) {
        let token = token.to_lowercase();
        for (keywords, intent) in [
            (&["prevent", "prevention"][..], Intent::Prevent),
            (&["treat", "cure", "control"][..], Intent::Treat),
            (&["symptom", "sign"][..], Intent::Symptom),
        ] {
            if keywords.iter().any(|kw| token.starts_with(kw)) {
                return Some(intent);
            }
        }
    }
    None
}

#[derive(Serialize)]
struct GeneratorRequestBody<'a> {
    prompt: &'a str,
    evidence: &'a str,
    fused_vector: &'a [f64],
    max_tokens: usize,
}

#[derive(Deserialize)]
struct GeneratorResponseBody {
    text: Option<String>,
}

/// POST to `{base_url}/generate`, returning the `text` field of the response.
pub fn call_generator_endpoint(
    prompt: &str,
    evidence: &str,
    fused_vector: &[f64],
    config: &HttpGeneratorConfig,
) -> Result<String> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let url = format!("{}/generate", config.base_url.trim_end_matches('/'));
    let response = client
        .post(&url)
        .json(&GeneratorRequestBody {
            prompt,
            evidence,
            fused_vector,
            max_tokens: config.max_tokens,
        })
        .send()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let status = response.status();
    if !status.is_success() {
        return Err(Error::HttpStatus(status.as_u16()));
    }
    let body: GeneratorResponseBody = response
        .json()
        .map_err(|e| Error::Decode(e.to_string()))?;
    body.text
        .ok_or_else(|| Error::Decode("response is missing the 'text' field".to_string()))
}

/// Template backend: pick evidence triples whose relation label matches the
/// question's intent (falling back to all evidence when none match), emit
/// their tails. HTTP backend: forward prompt + evidence, link entities in the
/// returned text.
pub fn generate_answer(req: &GenerationRequest, store: &KgStore) -> Result<Answer> {
    match &req.backend {
        Backend::Template => generate_template(req, store),
        Backend::Http(config) => {
            let prompt = format!("{}\n\n{}", req.question, req.evidence.context_text);
            let text = call_generator_endpoint(
                &prompt,
                &req.evidence.context_text,
                &req.evidence.fused_vector,
                config,
            )?;
            let mentions = retrieval::link_entities(&text, store);
            let mut answer_entities = Vec::new();
            for m in mentions {
                if !answer_entities.contains(&m.entity) {
                    answer_entities.push(m.entity);
                }
            }
            answer_entities.truncate(req.max_answer_entities);
            let supporting_triples = req
                .evidence
                .ranked_triples
                .iter()
                .map(|&(t, _)| t)
                .filter(|t| {
                    answer_entities.contains(&t.head) || answer_entities.contains(&t.tail)
                })
                .collect();
            Ok(Answer {
                text,
                answer_entities,
                supporting_triples,
            })
        }
    }
}

fn generate_template(req: &GenerationRequest, store: &KgStore) -> Result<Answer> {
    if req.evidence.ranked_triples.is_empty() {
        return Ok(Answer::abstention());
    }
    let intent = detect_intent(&req.question);
    let matches_intent = |triple: &Triple| -> bool {
        match intent {
            None => true,
            Some(i) => store
                .relation_label(triple.relation)
                .map(|label| label.contains(i.relation_key()))
                .unwrap_or(false),
        }
    };
    let mut selected: Vec<Triple> = req
        .evidence
        .ranked_triples
        .iter()
        .map(|&(t, _)| t)
        .filter(matches_intent)
        .collect();
    if selected.is_empty() {
        // intent named a relation family absent from the evidence: answer
        // from everything retrieved rather than abstaining
        selected = req.evidence.ranked_triples.iter().map(|&(t, _)| t).collect();
    }
    let mut answer_entities: Vec<EntityId> = Vec::new();
    for t in &selected {
        if !answer_entities.contains(&t.tail) {
            answer_entities.push(t.tail);
        }
    }
    answer_entities.truncate(req.max_answer_entities);
    let supporting_triples: Vec<Triple> = selected
        .into_iter()
        .filter(|t| answer_entities.contains(&t.tail))
        .collect();
    let labels: Vec<&str> = answer_entities
        .iter()
        .map(|&e| store.entity_label(e))
        .collect::<Result<_>>()?;
    Ok(Answer {
        text: format!("Answer: {}.", labels.join("; ")),
        answer_entities,
        supporting_triples,
    })
}
