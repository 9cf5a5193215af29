//! On-disk graph bundles: a directory holding `meta.json`, `nodes.csv`
//! and `edges.csv`. Floats are written in scientific notation with 17
//! significant digits, so a bundle reads back bit-for-bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adjacency, CellGraph, Grade, GraphConfig};
use crate::error::{Error, Result};
use crate::features::DESCRIPTOR_LEN;

pub const META_FILE: &str = "meta.json";
pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub n: usize,
    pub n_edges: usize,
    pub label: Option<Grade>,
    #[serde(default)]
    pub image_id: Option<String>,
    pub seed: u64,
    pub config: GraphConfig,
    /// Identifier of the normalization statistics the graph is meant for.
    #[serde(default)]
    pub normalization_id: Option<String>,
}

impl BundleMeta {
    pub fn of(graph: &CellGraph, normalization_id: Option<String>) -> Self {
        BundleMeta {
            n: graph.n(),
            n_edges: graph.adjacency.n_edges(),
            label: graph.label,
            image_id: graph.image_id.clone(),
            seed: graph.seed,
            config: graph.config.clone(),
            normalization_id,
        }
    }
}

fn node_header() -> String {
    let mut h = String::from("id,row,col");
    for i in 0..DESCRIPTOR_LEN {
        let _ = write!(h, ",f{i}");
    }
    h
}

pub fn encode_meta(meta: &BundleMeta) -> String {
    let mut s = serde_json::to_string_pretty(meta).expect("meta is always serializable");
    s.push('\n');
    s
}

pub fn encode_nodes(graph: &CellGraph) -> String {
    let mut out = node_header();
    out.push('\n');
    for (i, (c, d)) in graph.coords.iter().zip(&graph.descriptors).enumerate() {
        let _ = write!(out, "{i}");
        for v in c.iter().chain(d.iter()) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn encode_edges(adjacency: &Adjacency) -> String {
    let mut out = String::from("i,j\n");
    for (i, j) in adjacency.edges() {
        let _ = writeln!(out, "{i},{j}");
    }
    out
}

pub fn parse_meta(text: &str) -> Result<BundleMeta> {
    let meta: BundleMeta = serde_json::from_str(text).map_err(|e| Error::parse("meta.json", e.to_string()))?;
    meta.config.sampler.validate()?;
    meta.config.edges.validate()?;
    Ok(meta)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Coordinates and descriptors, one entry per node.
pub type NodeColumns = (Vec<[f64; 2]>, Vec<[f64; DESCRIPTOR_LEN]>);

/// Node coordinates and descriptors; ids must run `0..n` in order.
pub fn parse_nodes(text: &str) -> Result<NodeColumns> {
    let err = |msg: String| Error::parse("nodes.csv", msg);
    let mut reader = csv_reader(text);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != node_header() {
        return Err(err(format!("unexpected header {:?}", header.join(","))));
    }
    let mut coords = Vec::new();
    let mut descriptors = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != 3 + DESCRIPTOR_LEN {
            return Err(err(format!("record {line} has {} fields", record.len())));
        }
        let id: usize = record[0].parse().map_err(|_| err(format!("record {line}: bad id")))?;
        if id != line {
            return Err(err(format!("record {line}: id {id} out of order")));
        }
        let mut values = [0.0f64; 2 + DESCRIPTOR_LEN];
        for (k, v) in values.iter_mut().enumerate() {
            let field = &record[k + 1];
            *v = field
                .parse()
                .map_err(|_| err(format!("record {line}: bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("record {line}: non-finite value")));
            }
        }
        coords.push([values[0], values[1]]);
        descriptors.push(std::array::from_fn(|k| values[k + 2]));
    }
    Ok((coords, descriptors))
}

/// Undirected edges with `i < j` for a graph of `n` nodes.
pub fn parse_edges(text: &str, n: usize) -> Result<Adjacency> {
    let err = |msg: String| Error::parse("edges.csv", msg);
    let mut reader = csv_reader(text);
    let header = reader.headers().map_err(|e| err(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["i", "j"] {
        return Err(err("expected header i,j".into()));
    }
    let mut edges = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != 2 {
            return Err(err(format!("record {line} has {} fields", record.len())));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("record {line}: bad index {s:?}")))
        };
        let (i, j) = (parse(&record[0])?, parse(&record[1])?);
        if i >= j || j >= n {
            return Err(err(format!("record {line}: edge ({i}, {j}) needs i < j < {n}")));
        }
        edges.push((i, j));
    }
    let count = edges.len();
    let adjacency = Adjacency::from_edges(n, edges)?;
    if adjacency.n_edges() != count {
        return Err(err("duplicate edge".into()));
    }
    Ok(adjacency)
}

/// Rebuilds a graph from the three file contents.
pub fn decode(meta: &str, nodes: &str, edges: &str) -> Result<(CellGraph, BundleMeta)> {
    let meta = parse_meta(meta)?;
    let (coords, descriptors) = parse_nodes(nodes)?;
    if coords.len() != meta.n {
        return Err(Error::parse(
            "nodes.csv",
            format!("meta declares {} nodes, found {}", meta.n, coords.len()),
        ));
    }
    let adjacency = parse_edges(edges, meta.n)?;
    if adjacency.n_edges() != meta.n_edges {
        return Err(Error::parse(
            "edges.csv",
            format!("meta declares {} edges, found {}", meta.n_edges, adjacency.n_edges()),
        ));
    }
    let mut graph = CellGraph::new(
        coords,
        descriptors,
        adjacency,
        meta.label,
        meta.config.clone(),
        meta.seed,
    )?;
    graph.image_id = meta.image_id.clone();
    Ok((graph, meta))
}

pub fn write(dir: impl AsRef<Path>, graph: &CellGraph, normalization_id: Option<String>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let files = [
        (META_FILE, encode_meta(&BundleMeta::of(graph, normalization_id))),
        (NODES_FILE, encode_nodes(graph)),
        (EDGES_FILE, encode_edges(&graph.adjacency)),
    ];
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::file(path, e))?;
    }
    Ok(())
}

pub fn read(dir: impl AsRef<Path>) -> Result<(CellGraph, BundleMeta)> {
    let dir = dir.as_ref();
    let load = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| Error::file(path, e))
    };
    decode(&load(META_FILE)?, &load(NODES_FILE)?, &load(EDGES_FILE)?)
}
