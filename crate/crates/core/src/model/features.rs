use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HkgError, Result};

/// One pooled feature vector with its leaf class name.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub features: Vec<f64>,
    pub label: String,
}

/// Read `f0,...,f{D-1},label` rows after a header line.
pub fn import_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| HkgError::io(path, e))?;
    parse_features(&text, &path.display().to_string())
}

pub(crate) fn parse_features(text: &str, source_name: &str) -> Result<Vec<FeatureRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| HkgError::EmptyInput(format!("{source_name}: no header")))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(HkgError::Format {
            source_name: source_name.into(),
            line: 1,
            message: "expected at least one feature column and a label column".into(),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |message: String| HkgError::Format {
            source_name: source_name.into(),
            line: idx + 1,
            message,
        };
        if fields.len() != columns {
            return Err(err(format!(
                "expected {columns} fields, found {}",
                fields.len()
            )));
        }
        let (label, values) = fields.split_last().expect("columns >= 2");
        let features = values
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| err(format!("bad value `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(FeatureRecord {
            features,
            label: (*label).to_owned(),
        });
    }
    if records.is_empty() {
        return Err(HkgError::EmptyInput(format!(
            "{source_name}: header only, no records"
        )));
    }
    Ok(records)
}

/// Write records with a `f0..f{D-1},label` header. Values use the shortest
/// representation that parses back to the same bits.
pub fn export_features(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let dim = records
        .first()
        .map(|r| r.features.len())
        .ok_or_else(|| HkgError::EmptyInput("no feature records to export".into()))?;
    let mut out = String::new();
    for i in 0..dim {
        let _ = write!(out, "f{i},");
    }
    out.push_str("label\n");
    for r in records {
        if r.features.len() != dim {
            return Err(HkgError::shape(
                "export_features",
                &[dim],
                &[r.features.len()],
            ));
        }
        for v in &r.features {
            let _ = write!(out, "{v},");
        }
        out.push_str(&r.label);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| HkgError::io(path, e))
}
