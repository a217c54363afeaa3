//! Text persistence for embedding tables and refined node representations.
//!
//! Header line: `dim=<d> entities=<n> relations=<m> norm=<L1|L2>` with
//! optional extra `key=value` tags (`kind=gcn layers=<L>`). One line per
//! vector: `E<TAB><id><TAB><v1> <v2> ...` then `R<TAB><id><TAB>...`, floats
//! printed with 9 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct VecFile {
    pub dim: usize,
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
    /// Header fields beyond the row counts and dim (norm, kind, layers, ...).
    pub tags: BTreeMap<String, String>,
}

pub fn write_vec_file(path: &Path, file: &VecFile) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let mut header = format!(
        "dim={} entities={} relations={}",
        file.dim,
        file.entities.nrows(),
        file.relations.nrows()
    );
    for (k, v) in &file.tags {
        header.push_str(&format!(" {k}={v}"));
    }
    writeln!(w, "{header}")?;
    for (kind, matrix) in [("E", &file.entities), ("R", &file.relations)] {
        for (id, row) in matrix.rows().into_iter().enumerate() {
            let values: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(w, "{kind}\t{id}\t{}", values.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_vec_file(path: &Path) -> Result<VecFile> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty vector file".to_string()))?;
    let mut fields = BTreeMap::new();
    for part in header.split_whitespace() {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field '{part}'")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get_count = |key: &str| -> Result<usize> {
        fields
            .get(key)
            .ok_or_else(|| Error::Parse(format!("missing header field '{key}'")))?
            .parse()
            .map_err(|_| Error::Parse(format!("bad header field '{key}'")))
    };
    let dim = get_count("dim")?;
    let num_entities = get_count("entities")?;
    let num_relations = get_count("relations")?;
    let tags: BTreeMap<String, String> = fields
        .into_iter()
        .filter(|(k, _)| !matches!(k.as_str(), "dim" | "entities" | "relations"))
        .collect();

    let mut entities = Array2::zeros((num_entities, dim));
    let mut relations = Array2::zeros((num_relations, dim));
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let kind = parts.next().unwrap_or_default();
        let id: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("line {}: bad vector id", line_no + 2)))?;
        let values = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: missing values", line_no + 2)))?;
        let target = match kind {
            "E" => &mut entities,
            "R" => &mut relations,
            other => {
                return Err(Error::Parse(format!(
                    "line {}: unknown row kind '{other}'",
                    line_no + 2
                )))
            }
        };
        if id >= target.nrows() {
            return Err(Error::Parse(format!("line {}: id out of range", line_no + 2)));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            values.split_whitespace().map(str::parse).collect();
        let parsed =
            parsed.map_err(|_| Error::Parse(format!("line {}: bad float", line_no + 2)))?;
        if parsed.len() != dim {
            return Err(Error::Parse(format!(
                "line {}: expected {dim} values, got {}",
                line_no + 2,
                parsed.len()
            )));
        }
        for (j, v) in parsed.into_iter().enumerate() {
            target[(id, j)] = v;
        }
    }
    Ok(VecFile {
        dim,
        entities,
        relations,
        tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        let file = VecFile {
            dim: 2,
            entities: array![[0.123456789, -1.5], [2.0, 3.25]],
            relations: array![[1e-9, 42.0]],
            tags: [("norm".to_string(), "L2".to_string())].into(),
        };
        write_vec_file(&path, &file).unwrap();
        let loaded = read_vec_file(&path).unwrap();
        assert_eq!(loaded.dim, 2);
        assert_eq!(loaded.tags.get("norm").map(String::as_str), Some("L2"));
        for (a, b) in file.entities.iter().zip(loaded.entities.iter()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
        assert_eq!(loaded.relations.nrows(), 1);
    }

    #[test]
    fn nine_significant_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        let file = VecFile {
            dim: 1,
            entities: array![[std::f64::consts::PI]],
            relations: Array2::zeros((0, 1)),
            tags: BTreeMap::new(),
        };
        write_vec_file(&path, &file).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("3.14159265e0"));
    }
}
