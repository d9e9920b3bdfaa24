//! Bundle directory layout:
//!
//! ```text
//! meta.json      {"num_nodes": N, "num_features": d0, "num_classes": K}
//! edges.tsv      src<TAB>dst, one undirected pair per line
//! features.tsv   N lines of d0 space-separated decimals
//! labels.tsv     N lines, one class index each
//! split.tsv      N lines of train|valid|test
//! features.f32   optional raw little-endian f32 sidecar, row-major
//! ```
//!
//! `features.tsv` wins over the sidecar when both are present.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GraphBundle, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn node_lines<'a>(path: &Path, text: &'a str, n: usize) -> Result<Vec<(usize, &'a str)>> {
    let rows: Vec<_> = lines(text).collect();
    if rows.len() != n {
        let line = rows.last().map_or(1, |(l, _)| *l);
        return Err(Error::parse(
            path,
            line,
            format!("expected {n} lines to match meta.json, found {}", rows.len()),
        ));
    }
    Ok(rows)
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphBundle> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| Error::parse(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.tsv");
    let edges_text = read(&edges_path)?;
    let mut edges = Vec::new();
    for (line, row) in lines(&edges_text) {
        let mut it = row.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(&edges_path, line, "expected \"src<TAB>dst\""));
        };
        let parse = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::parse(&edges_path, line, format!("bad node index {s:?}")))?;
            if v >= n {
                return Err(Error::parse(
                    &edges_path,
                    line,
                    format!("node index {v} out of range for {n} nodes"),
                ));
            }
            Ok(v)
        };
        edges.push((parse(a)?, parse(b)?));
    }

    let features = load_features(dir, n, meta.num_features)?;

    let labels_path = dir.join("labels.tsv");
    let labels = read_labels(&labels_path, n, meta.num_classes)?;

    let split_path = dir.join("split.tsv");
    let split_text = read(&split_path)?;
    let split = node_lines(&split_path, &split_text, n)?
        .into_iter()
        .map(|(line, s)| s.parse::<Split>().map_err(|m| Error::parse(&split_path, line, m)))
        .collect::<Result<Vec<_>>>()?;

    GraphBundle::new(features, edges, labels, split, meta.num_classes)
}

/// Reads a labels file (same format as `labels.tsv`), checking range.
pub fn read_labels(path: &Path, n: usize, num_classes: usize) -> Result<Vec<usize>> {
    let text = read(path)?;
    node_lines(path, &text, n)?
        .into_iter()
        .map(|(line, s)| {
            let y: usize = s
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad class index {s:?}")))?;
            if y >= num_classes {
                return Err(Error::parse(
                    path,
                    line,
                    format!("class index out of range: {y} >= {num_classes}"),
                ));
            }
            Ok(y)
        })
        .collect()
}

fn load_features(dir: &Path, n: usize, d0: usize) -> Result<DMatrix<f64>> {
    let text_path = dir.join("features.tsv");
    let sidecar = dir.join("features.f32");
    if !text_path.exists() && sidecar.exists() {
        let bytes = fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        if bytes.len() != n * d0 * 4 {
            return Err(Error::parse(
                &sidecar,
                1,
                format!("expected {} bytes for {n}x{d0} f32, found {}", n * d0 * 4, bytes.len()),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        return Ok(DMatrix::from_row_slice(n, d0, &values));
    }
    let text = read(&text_path)?;
    let mut values = Vec::with_capacity(n * d0);
    for (line, row) in node_lines(&text_path, &text, n)? {
        let before = values.len();
        for tok in row.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(&text_path, line, format!("bad float {tok:?}")))?;
            values.push(v);
        }
        if values.len() - before != d0 {
            return Err(Error::parse(
                &text_path,
                line,
                format!("expected {d0} features, found {}", values.len() - before),
            ));
        }
    }
    Ok(DMatrix::from_row_slice(n, d0, &values))
}

fn create(path: PathBuf) -> Result<BufWriter<fs::File>> {
    fs::File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, w: BufWriter<fs::File>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

/// Writes the text form of `bundle` into `dir`, creating it if needed.
pub fn write_bundle(bundle: &GraphBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = Meta {
        num_nodes: bundle.num_nodes,
        num_features: bundle.num_features,
        num_classes: bundle.num_classes,
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p, e)
    };

    let path = dir.join("edges.tsv");
    let mut w = create(path.clone())?;
    for (i, j) in &bundle.edges {
        writeln!(w, "{i}\t{j}").map_err(io_err(&path))?;
    }
    finish(&path, w)?;

    let path = dir.join("features.tsv");
    let mut w = create(path.clone())?;
    for row in bundle.features.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(io_err(&path))?;
    }
    finish(&path, w)?;

    write_labels(&dir.join("labels.tsv"), &bundle.labels)?;

    let path = dir.join("split.tsv");
    let mut w = create(path.clone())?;
    for s in &bundle.split {
        writeln!(w, "{s}").map_err(io_err(&path))?;
    }
    finish(&path, w)
}

/// Writes one class index per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = create(path.to_path_buf())?;
    for y in labels {
        writeln!(w, "{y}").map_err(|e| Error::io(path, e))?;
    }
    finish(path, w)
}

/// Writes `features.f32` next to the text features.
pub fn write_features_sidecar(bundle: &GraphBundle, dir: impl AsRef<Path>) -> Result<()> {
    let path = dir.as_ref().join("features.f32");
    let mut bytes = Vec::with_capacity(bundle.num_nodes * bundle.num_features * 4);
    for row in bundle.features.row_iter() {
        for v in row.iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}
