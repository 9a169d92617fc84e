//! Loading real-data collections: attribute matrices turned into similarity
//! graphs, precomputed distance matrices, edge-weight binarization and vertex
//! matching across graphs, all driven by a JSON manifest.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{fields, is_skippable, parse_err, parse_labels, read_edgelist, DenseGraph, Edge, EdgeList, Graph, GraphCollection, LabelVector};

/// Above this many vertices a similarity graph stays a dense matrix instead of
/// being expanded into `n (n + 1) / 2` edges.
pub const EDGE_EXPANSION_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    pub x: Array2<f64>,
    pub metric: Metric,
}

impl AttributeMatrix {
    pub fn new(x: Array2<f64>, metric: Metric) -> Result<Self> {
        if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Dimension(format!("attribute ({}, {}) is {v}", i + 1, j + 1)));
        }
        Ok(AttributeMatrix { x, metric })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// Reads a numeric matrix, one row per line, comma- or whitespace-separated.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let before = data.len();
        for tok in fields(&line) {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad number {tok:?}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(path, lineno + 1, format!("row has {width} values, expected {c}")));
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::Dimension(e.to_string()))
}

/// Pairwise distances between rows. Under cosine, a zero row is at distance 1
/// from everything, itself included.
pub fn distance_matrix(attrs: &AttributeMatrix) -> Result<Array2<f64>> {
    let x = &attrs.x;
    let n = x.nrows();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut d = Array2::zeros((n, n));
    d.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
        let xi = x.row(i);
        for j in 0..n {
            let xj = x.row(j);
            row[j] = match attrs.metric {
                Metric::Cosine if norms[i] == 0.0 || norms[j] == 0.0 => 1.0,
                Metric::Cosine if i == j => 0.0,
                Metric::Cosine => 1.0 - xi.dot(&xj) / (norms[i] * norms[j]),
                Metric::Euclidean => xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            };
        }
    });
    if let Some(((i, j), _)) = d.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteDistance(i + 1, j + 1));
    }
    Ok(d)
}

/// Dense similarity graph `1 - D` with the count of negative entries
/// (upper triangle, diagonal included).
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub graph: Graph,
    pub negative: usize,
}

pub fn distance_to_similarity(d: &Array2<f64>) -> Result<SimilarityGraph> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::Dimension(format!("distance matrix is {n} x {}", d.ncols())));
    }
    let mut negative = 0;
    for i in 0..n {
        for j in i..n {
            let (a, b) = (d[[i, j]], d[[j, i]]);
            if !a.is_finite() {
                return Err(Error::NonFiniteDistance(i + 1, j + 1));
            }
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Err(Error::Dimension(format!("distance matrix not symmetric at ({}, {})", i + 1, j + 1)));
            }
            if 1.0 - a < 0.0 {
                negative += 1;
            }
        }
    }
    let graph = if n <= EDGE_EXPANSION_LIMIT {
        let mut edges = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                edges.push(Edge::new(i as u32, j as u32, 1.0 - d[[i, j]]));
            }
        }
        Graph::Edges(EdgeList::new(n, edges))
    } else {
        Graph::Dense(DenseGraph::from_array(d.mapv(|v| 1.0 - v))?)
    };
    if negative > 0 {
        log::warn!("similarity graph has {negative} negative entries; passed through unclipped");
    }
    Ok(SimilarityGraph { graph, negative })
}

pub fn attributes_to_similarity(attrs: &AttributeMatrix) -> Result<SimilarityGraph> {
    distance_to_similarity(&distance_matrix(attrs)?)
}

/// Edges with weight above `threshold` become weight 1; the rest are dropped.
/// Duplicate edges are merged first.
pub fn binarize(e: &EdgeList, threshold: f64) -> EdgeList {
    let c = e.canonical();
    let edges = c.edges().iter().filter(|x| x.w > threshold).map(|x| Edge::new(x.u, x.v, 1.0)).collect();
    let mut out = EdgeList::new(c.n(), edges);
    out.set_directed(c.is_directed());
    out
}

pub fn binarize_graph(g: &Graph, threshold: f64) -> Result<Graph> {
    Ok(match g {
        Graph::Edges(e) => Graph::Edges(binarize(e, threshold)),
        Graph::Dense(d) => Graph::Dense(DenseGraph::from_array(
            d.to_array().mapv(|w| if w > threshold { 1.0 } else { 0.0 }),
        )?),
    })
}

/// Result of restricting graphs to their common vertices.
#[derive(Debug, Clone)]
pub struct Intersection {
    pub collection: GraphCollection,
    /// Common ids in the first graph's order.
    pub ids: Vec<String>,
    /// Original position of each common id in every input graph.
    pub positions: Vec<Vec<usize>>,
    /// Vertices dropped, summed over graphs.
    pub removed: usize,
}

fn restrict(g: &Graph, keep: &[usize]) -> Result<Graph> {
    let mut remap = vec![u32::MAX; g.n()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new as u32;
    }
    Ok(match g {
        Graph::Edges(e) => {
            let edges = e
                .edges()
                .iter()
                .filter_map(|x| {
                    let (u, v) = (remap[x.u as usize], remap[x.v as usize]);
                    (u != u32::MAX && v != u32::MAX).then(|| Edge::new(u, v, x.w))
                })
                .collect();
            let mut out = EdgeList::new(keep.len(), edges);
            out.set_directed(e.is_directed());
            Graph::Edges(out)
        }
        Graph::Dense(d) => {
            let a = d.to_array();
            Graph::Dense(DenseGraph::from_array(a.select(Axis(0), keep).select(Axis(1), keep))?)
        }
    })
}

/// Keeps the vertices whose ids appear in every graph and reindexes them
/// consistently. `ids[m][i]` names vertex `i` of graph `m`.
pub fn intersect_vertices(graphs: &[Graph], ids: &[Vec<String>]) -> Result<Intersection> {
    if graphs.is_empty() || graphs.len() != ids.len() {
        return Err(Error::Dimension(format!("{} graphs with {} id lists", graphs.len(), ids.len())));
    }
    let mut lookups = Vec::with_capacity(ids.len());
    for (m, (g, list)) in graphs.iter().zip(ids).enumerate() {
        if list.len() != g.n() {
            return Err(Error::Dimension(format!("graph {} has {} vertices but {} ids", m + 1, g.n(), list.len())));
        }
        let mut map = HashMap::with_capacity(list.len());
        for (i, id) in list.iter().enumerate() {
            if map.insert(id.as_str(), i).is_some() {
                return Err(Error::Dimension(format!("graph {}: duplicate vertex id {id:?}", m + 1)));
            }
        }
        lookups.push(map);
    }
    let common: Vec<&String> = ids[0].iter().filter(|id| lookups.iter().all(|l| l.contains_key(id.as_str()))).collect();
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let positions: Vec<Vec<usize>> = lookups.iter().map(|l| common.iter().map(|id| l[id.as_str()]).collect()).collect();
    let removed = ids.iter().map(|l| l.len() - common.len()).sum();
    let restricted = graphs
        .iter()
        .zip(&positions)
        .map(|(g, keep)| restrict(g, keep))
        .collect::<Result<Vec<_>>>()?;
    Ok(Intersection {
        collection: GraphCollection::new(restricted),
        ids: common.into_iter().cloned().collect(),
        positions,
        removed,
    })
}

/// Where one graph of a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceKind {
    Edgelist {
        path: PathBuf,
        #[serde(default)]
        directed: bool,
        #[serde(default)]
        n: Option<usize>,
    },
    Attributes {
        path: PathBuf,
        metric: Metric,
    },
    Distance {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSource {
    #[serde(flatten)]
    pub kind: SourceKind,
    /// File with one vertex id per line, line `i` naming vertex `i`.
    #[serde(default)]
    pub ids: Option<PathBuf>,
    /// Threshold for weight binarization.
    #[serde(default)]
    pub binarize: Option<f64>,
    /// Drop self-loops.
    #[serde(default)]
    pub simple: bool,
}

/// Dataset description. Relative paths resolve against the manifest's
/// directory. Labels are one per line in the first graph's vertex order,
/// 0 marking an unknown label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub name: Option<String>,
    pub labels: PathBuf,
    pub graphs: Vec<GraphSource>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.graphs.is_empty() {
            return Err(Error::Manifest("manifest lists no graphs".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub collection: GraphCollection,
    pub labels: LabelVector,
    pub ids: Vec<String>,
    pub removed: usize,
    /// Negative similarity entries over all similarity graphs.
    pub negative_similarities: usize,
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !is_skippable(&line) {
            ids.push(line.trim().to_string());
        }
    }
    Ok(ids)
}

fn load_source(src: &GraphSource, base: &Path) -> Result<(Graph, usize)> {
    let (mut graph, negative) = match &src.kind {
        SourceKind::Edgelist { path, directed, n } => (Graph::Edges(read_edgelist(base.join(path), *n, *directed)?), 0),
        SourceKind::Attributes { path, metric } => {
            let attrs = AttributeMatrix::new(read_matrix_csv(base.join(path))?, *metric)?;
            let s = attributes_to_similarity(&attrs)?;
            (s.graph, s.negative)
        }
        SourceKind::Distance { path } => {
            let s = distance_to_similarity(&read_matrix_csv(base.join(path))?)?;
            (s.graph, s.negative)
        }
    };
    if src.simple {
        graph = match graph {
            Graph::Edges(mut e) => {
                e.drop_self_loops();
                Graph::Edges(e)
            }
            Graph::Dense(d) => {
                let mut a = d.to_array();
                a.diag_mut().fill(0.0);
                Graph::Dense(DenseGraph::from_array(a)?)
            }
        };
    }
    if let Some(t) = src.binarize {
        graph = binarize_graph(&graph, t)?;
    }
    Ok((graph, negative))
}

/// Loads every graph, applies its transforms, matches vertices by id and
/// aligns the labels.
pub fn load_dataset(manifest: &Manifest, base: &Path) -> Result<Dataset> {
    let mut graphs = Vec::with_capacity(manifest.graphs.len());
    let mut ids = Vec::with_capacity(manifest.graphs.len());
    let mut negative = 0;
    for src in &manifest.graphs {
        let (g, neg) = load_source(src, base)?;
        negative += neg;
        let list = match &src.ids {
            Some(p) => read_ids(&base.join(p))?,
            None => (1..=g.n()).map(|i| i.to_string()).collect(),
        };
        graphs.push(g);
        ids.push(list);
    }
    let labels_path = base.join(&manifest.labels);
    let raw = parse_labels(BufReader::new(File::open(&labels_path)?), &labels_path)?;
    if raw.len() != graphs[0].n() {
        return Err(Error::Manifest(format!(
            "{} labels for a first graph of {} vertices",
            raw.len(),
            graphs[0].n()
        )));
    }
    let inter = intersect_vertices(&graphs, &ids)?;
    if inter.removed > 0 {
        log::info!("removed {} unmatched vertices", inter.removed);
    }
    let labels = LabelVector::from_labels(inter.positions[0].iter().map(|&i| raw[i]).collect());
    Ok(Dataset {
        name: manifest.name.clone().unwrap_or_else(|| "dataset".into()),
        collection: inter.collection,
        labels,
        ids: inter.ids,
        removed: inter.removed,
        negative_similarities: negative,
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = Manifest::from_json(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_dataset(&manifest, base)
}
