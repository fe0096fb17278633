//! Stream files: `<root>/<leaf_class>/<stream_id>.csv`, one amplitude per
//! line, with a `# sample_rate=<Hz>` header on line 1.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::RawStream;
use crate::error::{HkgError, Result};

pub fn write_stream(root: &Path, stream: &RawStream) -> Result<()> {
    let dir = root.join(&stream.leaf_class);
    fs::create_dir_all(&dir).map_err(|e| HkgError::io(&dir, e))?;
    let path = dir.join(format!("{}.csv", stream.stream_id));
    let file = fs::File::create(&path).map_err(|e| HkgError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| HkgError::io(&path, e);
    writeln!(w, "# sample_rate={}", stream.sample_rate).map_err(io)?;
    for v in &stream.samples {
        writeln!(w, "{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_stream(path: &Path, leaf_class: &str) -> Result<RawStream> {
    let name = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| HkgError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let fmt = |line: usize, message: String| HkgError::Format {
        source_name: name.clone(),
        line,
        message,
    };
    let header = lines
        .next()
        .ok_or_else(|| fmt(1, "missing sample_rate header".into()))?
        .map_err(|e| HkgError::io(path, e))?;
    let sample_rate = header
        .trim_start_matches('#')
        .trim()
        .strip_prefix("sample_rate=")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| fmt(1, format!("expected `sample_rate=<Hz>`, got {header:?}")))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| HkgError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        samples.push(
            t.parse::<f64>()
                .map_err(|e| fmt(i + 2, format!("bad amplitude {t:?}: {e}")))?,
        );
    }
    let stream_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    RawStream::new(samples, sample_rate, leaf_class, stream_id)
}

/// Read every `<leaf>/<id>.csv` under `root`, sorted by class then id.
pub fn read_stream_dir(root: &Path) -> Result<Vec<RawStream>> {
    let mut class_dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| HkgError::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    let mut out = Vec::new();
    for dir in class_dirs {
        let leaf = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<_> = fs::read_dir(&dir)
            .map_err(|e| HkgError::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in files {
            out.push(read_stream(&f, &leaf)?);
        }
    }
    Ok(out)
}
