//! Answer scoring against gold entity sets: micro-averaged precision, recall,
//! F1 and exact-match accuracy, with a per-question-type breakdown.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Direct,
    Multihop,
    Comparative,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Direct => "direct",
            QuestionType::Multihop => "multihop",
            QuestionType::Comparative => "comparative",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    #[serde(rename = "type")]
    pub qtype: QuestionType,
    pub gold: Vec<String>,
}

/// UTF-8 JSON-lines, one example per line.
pub fn load_qa_dataset<R: BufRead>(reader: R) -> Result<Vec<QaExample>> {
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example: QaExample = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        examples.push(example);
    }
    Ok(examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub exact_match: bool,
}

pub fn score_prediction(
    predicted: &BTreeSet<String>,
    gold: &BTreeSet<String>,
) -> PredictionScore {
    let tp = predicted.intersection(gold).count();
    PredictionScore {
        true_positives: tp,
        false_positives: predicted.len() - tp,
        false_negatives: gold.len() - tp,
        exact_match: predicted == gold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeMetrics {
    pub questions: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counts {
    pub questions: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_type: BTreeMap<String, TypeMetrics>,
    pub counts: Counts,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// Micro-averaged metrics over pooled counts; accuracy is the exact-set-match
/// fraction. Per-type buckets are computed identically over each subset.
pub fn compute_metrics(per_question: &[(QuestionType, PredictionScore)]) -> Result<MetricsReport> {
    if per_question.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let bucket = |items: &[&PredictionScore]| -> TypeMetrics {
        let tp: usize = items.iter().map(|s| s.true_positives).sum();
        let fp: usize = items.iter().map(|s| s.false_positives).sum();
        let fn_: usize = items.iter().map(|s| s.false_negatives).sum();
        let exact = items.iter().filter(|s| s.exact_match).count();
        let (precision, recall, f1) = prf(tp, fp, fn_);
        TypeMetrics {
            questions: items.len(),
            accuracy: exact as f64 / items.len() as f64,
            precision,
            recall,
            f1,
        }
    };
    let all: Vec<&PredictionScore> = per_question.iter().map(|(_, s)| s).collect();
    let overall = bucket(&all);
    let mut per_type = BTreeMap::new();
    for qtype in [
        QuestionType::Direct,
        QuestionType::Multihop,
        QuestionType::Comparative,
    ] {
        let subset: Vec<&PredictionScore> = per_question
            .iter()
            .filter(|(t, _)| *t == qtype)
            .map(|(_, s)| s)
            .collect();
        if !subset.is_empty() {
            per_type.insert(qtype.as_str().to_string(), bucket(&subset));
        }
    }
    Ok(MetricsReport {
        accuracy: overall.accuracy,
        precision: overall.precision,
        recall: overall.recall,
        f1: overall.f1,
        per_type,
        counts: Counts {
            questions: per_question.len(),
            true_positives: all.iter().map(|s| s.true_positives).sum(),
            false_positives: all.iter().map(|s| s.false_positives).sum(),
            false_negatives: all.iter().map(|s| s.false_negatives).sum(),
        },
    })
}

/// One CSV row per (method, qtype) plus an overall row.
pub fn metrics_csv(method: &str, report: &MetricsReport) -> String {
    let mut out = String::from("method,qtype,questions,accuracy,precision,recall,f1\n");
    out.push_str(&format!(
        "{method},overall,{},{:.6},{:.6},{:.6},{:.6}\n",
        report.counts.questions, report.accuracy, report.precision, report.recall, report.f1
    ));
    for (qtype, m) in &report.per_type {
        out.push_str(&format!(
            "{method},{qtype},{},{:.6},{:.6},{:.6},{:.6}\n",
            m.questions, m.accuracy, m.precision, m.recall, m.f1
        ));
    }
    out
}
