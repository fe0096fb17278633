//! Word-vector tables and class-embedding assembly.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HkgError, Result};
use crate::hierarchy::LabelTree;
use crate::matrix::Matrix;

/// Token -> vector table with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

/// What to do when a class-name token is not in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Every token of a class must be found.
    Strict,
    /// Average over the tokens that are found; error only if none are.
    #[default]
    Skip,
    /// Average over found tokens; a class with none gets the zero vector.
    Zero,
}

impl std::str::FromStr for OovPolicy {
    type Err = HkgError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(OovPolicy::Strict),
            "skip" => Ok(OovPolicy::Skip),
            "zero" => Ok(OovPolicy::Zero),
            other => Err(HkgError::Parameter(format!("unknown OOV policy {other:?}"))),
        }
    }
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(&token.to_lowercase()).map(Vec::as_slice)
    }

    /// Parse `token v1 ... vd` lines. The dimension is taken from the first line.
    pub fn parse(reader: impl Read, source_name: &str) -> Result<Self> {
        let fmt = |line: usize, message: String| HkgError::Format {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut dim = None;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| fmt(lineno, e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|e| fmt(lineno, format!("bad value {p:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(fmt(lineno, "non-finite value".into()));
            }
            let d = *dim.get_or_insert(values.len());
            if d == 0 {
                return Err(fmt(lineno, "line has no vector values".into()));
            }
            if values.len() != d {
                return Err(fmt(
                    lineno,
                    format!("expected {d} values, found {}", values.len()),
                ));
            }
            entries.insert(token.to_lowercase(), values);
        }
        match dim {
            Some(dim) => Ok(EmbeddingTable { dim, entries }),
            None => Err(fmt(0, "embedding file is empty".into())),
        }
    }

    /// Load a text table; files ending in `.gz` are decompressed.
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| HkgError::io(path, e))?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e == "gz") {
            Self::parse(flate2::read::GzDecoder::new(file), &name)
        } else {
            Self::parse(file, &name)
        }
    }
}

/// Split a class name into lowercase tokens on whitespace and hyphens.
pub fn tokenize(name: &str) -> Vec<String> {
    name.split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `C x d` matrix of class embeddings in the tree's class order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings {
    pub matrix: Matrix,
    pub node_order: Vec<String>,
}

/// Embed each class as the mean of its name's token vectors.
pub fn class_embeddings(
    tree: &LabelTree,
    table: &EmbeddingTable,
    policy: OovPolicy,
) -> Result<ClassEmbeddings> {
    let names = tree.class_names();
    let d = table.dim();
    let mut data = Vec::with_capacity(names.len() * d);
    for name in &names {
        data.extend(embed_name(name, table, policy)?);
    }
    Ok(ClassEmbeddings {
        matrix: Matrix::from_vec(names.len(), d, data)?,
        node_order: names,
    })
}

fn embed_name(name: &str, table: &EmbeddingTable, policy: OovPolicy) -> Result<Vec<f64>> {
    let tokens = tokenize(name);
    let mut sum = vec![0.0; table.dim()];
    let mut found = 0usize;
    let mut missing = Vec::new();
    for t in &tokens {
        match table.get(t) {
            Some(v) => {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
            None => missing.push(t.as_str()),
        }
    }
    if policy == OovPolicy::Strict && !missing.is_empty() {
        return Err(HkgError::Lookup(format!(
            "class {name:?}: tokens {missing:?} not in table"
        )));
    }
    if found == 0 {
        return match policy {
            OovPolicy::Zero => Ok(sum),
            _ => Err(HkgError::Lookup(format!(
                "class {name:?}: no token found in table"
            ))),
        };
    }
    let inv = 1.0 / found as f64;
    Ok(sum.into_iter().map(|s| s * inv).collect())
}

/// The 16-token, 8-dimensional table shipped with the crate.
pub fn fixture_table() -> EmbeddingTable {
    EmbeddingTable::parse(FIXTURE.as_bytes(), "fixture").expect("bundled fixture parses")
}

pub const FIXTURE: &str = include_str!("../fixtures/embeddings_d8.txt");
