//! Data model shared by every stage: edge lists, dense similarity graphs,
//! multi-graph collections on a common vertex set, and label vectors.
//!
//! Vertex indices are 0-based in memory. Files are 1-based; the rebasing
//! happens in [`read_edgelist`] / [`write_edgelist`] and nowhere else.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub w: f64,
}

impl Edge {
    pub fn new(u: u32, v: u32, w: f64) -> Self {
        Edge { u, v, w }
    }
}

/// Sparse graph stored as an edge list.
///
/// An undirected edge is stored once and applied in both directions by every
/// consumer. Duplicate edges are allowed; their weights add up.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    n: usize,
    edges: Vec<Edge>,
    directed: bool,
}

impl EdgeList {
    pub fn new(n: usize, edges: Vec<Edge>) -> Self {
        EdgeList { n, edges, directed: false }
    }

    pub fn directed(n: usize, edges: Vec<Edge>) -> Self {
        EdgeList { n, edges, directed: true }
    }

    pub fn empty(n: usize) -> Self {
        Self::new(n, Vec::new())
    }

    /// Unit-weight undirected graph from 0-based pairs.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Self::new(n, pairs.into_iter().map(|(u, v)| Edge::new(u, v, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn set_directed(&mut self, directed: bool) {
        self.directed = directed;
    }

    pub fn into_edges(self) -> Vec<Edge> {
        self.edges
    }

    /// Removes self-loops, returning how many were dropped.
    pub fn drop_self_loops(&mut self) -> usize {
        let before = self.edges.len();
        self.edges.retain(|e| e.u != e.v);
        before - self.edges.len()
    }

    /// Maps every weight through `f`, keeping the structure.
    pub fn map_weights(&self, f: impl Fn(f64) -> f64) -> EdgeList {
        EdgeList {
            n: self.n,
            edges: self.edges.iter().map(|e| Edge::new(e.u, e.v, f(e.w))).collect(),
            directed: self.directed,
        }
    }

    /// Canonical form: undirected pairs oriented `u <= v`, duplicates merged by
    /// summing, zero weights dropped, sorted by `(u, v)`.
    pub fn canonical(&self) -> EdgeList {
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                if !self.directed && e.u > e.v {
                    Edge::new(e.v, e.u, e.w)
                } else {
                    *e
                }
            })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        let mut merged: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            match merged.last_mut() {
                Some(last) if last.u == e.u && last.v == e.v => last.w += e.w,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.w != 0.0);
        EdgeList { n: self.n, edges: merged, directed: self.directed }
    }

    /// Re-extracts a canonical edge list from a dense adjacency matrix.
    pub fn from_adjacency(a: &Array2<f64>, directed: bool) -> EdgeList {
        let n = a.nrows();
        let mut edges = Vec::new();
        for i in 0..n {
            let start = if directed { 0 } else { i };
            for j in start..n {
                let w = a[[i, j]];
                if w != 0.0 {
                    edges.push(Edge::new(i as u32, j as u32, w));
                }
            }
        }
        EdgeList { n, edges, directed }
    }
}

/// Dense weighted graph, used for similarity matrices too large to expand into
/// an edge list. Row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGraph {
    n: usize,
    data: Vec<f64>,
}

impl DenseGraph {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "dense graph needs {} entries for n = {n}, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(DenseGraph { n, data })
    }

    pub fn from_array(a: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("dense graph must be square, got {:?}", a.dim())));
        }
        let n = a.nrows();
        Self::new(n, a.as_standard_layout().iter().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.data.clone()).expect("shape checked at construction")
    }
}

/// One member of a collection.
#[derive(Debug, Clone, PartialEq)]
pub enum Graph {
    Edges(EdgeList),
    Dense(DenseGraph),
}

impl Graph {
    pub fn n(&self) -> usize {
        match self {
            Graph::Edges(e) => e.n(),
            Graph::Dense(d) => d.n(),
        }
    }

    pub fn is_directed(&self) -> bool {
        match self {
            Graph::Edges(e) => e.is_directed(),
            Graph::Dense(_) => false,
        }
    }

    /// Number of stored entries (edges, or `n^2` for dense graphs).
    pub fn size(&self) -> usize {
        match self {
            Graph::Edges(e) => e.len(),
            Graph::Dense(d) => d.n() * d.n(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Graph::Edges(e) => to_adjacency(e, !e.is_directed()),
            Graph::Dense(d) => d.to_array(),
        }
    }
}

impl From<EdgeList> for Graph {
    fn from(e: EdgeList) -> Self {
        Graph::Edges(e)
    }
}

impl From<DenseGraph> for Graph {
    fn from(d: DenseGraph) -> Self {
        Graph::Dense(d)
    }
}

/// Ordered graphs sharing one vertex set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphCollection {
    graphs: Vec<Graph>,
}

impl GraphCollection {
    pub fn new(graphs: Vec<Graph>) -> Self {
        GraphCollection { graphs }
    }

    pub fn from_edgelists(graphs: Vec<EdgeList>) -> Self {
        Self::new(graphs.into_iter().map(Graph::Edges).collect())
    }

    pub fn push(&mut self, g: impl Into<Graph>) {
        self.graphs.push(g.into());
    }

    /// Vertex count of the first graph (0 when empty).
    pub fn n(&self) -> usize {
        self.graphs.first().map_or(0, Graph::n)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    /// Sub-collection with the graphs at the given 0-based indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<GraphCollection> {
        let mut graphs = Vec::with_capacity(indices.len());
        for &i in indices {
            let g = self.graphs.get(i).ok_or_else(|| {
                Error::Dimension(format!("graph index {} out of range for {} graphs", i + 1, self.len()))
            })?;
            graphs.push(g.clone());
        }
        Ok(GraphCollection { graphs })
    }
}

/// Per-vertex labels in `0..=K`; `0` marks an unknown label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<u32>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<u32>, k: usize) -> Self {
        LabelVector { labels, k }
    }

    /// Infers `K` as the largest label present.
    pub fn from_labels(labels: Vec<u32>) -> Self {
        let k = labels.iter().copied().max().unwrap_or(0) as usize;
        LabelVector { labels, k }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Copy with the listed vertices set to unknown.
    pub fn masked(&self, hidden: impl IntoIterator<Item = usize>) -> LabelVector {
        let mut labels = self.labels.clone();
        for i in hidden {
            labels[i] = 0;
        }
        LabelVector { labels, k: self.k }
    }

    /// Number of vertices per class `1..=K`; unknown labels are skipped.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for &y in &self.labels {
            if y >= 1 && (y as usize) <= self.k {
                counts[y as usize - 1] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyCollection,
    VertexCountMismatch { graph: usize, expected: usize, found: usize },
    LabelCountMismatch { expected: usize, found: usize },
    IndexOutOfRange { graph: usize, edge: usize, vertex: u32, n: usize },
    NonFiniteWeight { graph: usize, edge: usize },
    LabelOutOfRange { vertex: usize, label: u32, k: usize },
    NoTrainingLabels,
    EmptyClass { class: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Graph, edge, vertex and class numbers are reported 1-based, like the files.
        match self {
            Violation::EmptyCollection => write!(f, "collection has no graphs"),
            Violation::VertexCountMismatch { graph, expected, found } => {
                write!(f, "vertex-count mismatch: graph {} has n = {found}, expected {expected}", graph + 1)
            }
            Violation::LabelCountMismatch { expected, found } => {
                write!(f, "label-count mismatch: {found} labels for {expected} vertices")
            }
            Violation::IndexOutOfRange { graph, edge, vertex, n } => write!(
                f,
                "index out of range: graph {} edge {} references vertex {} but n = {n}",
                graph + 1,
                edge + 1,
                *vertex as u64 + 1
            ),
            Violation::NonFiniteWeight { graph, edge } => {
                write!(f, "non-finite weight: graph {} edge {}", graph + 1, edge + 1)
            }
            Violation::LabelOutOfRange { vertex, label, k } => {
                write!(f, "label out of range: vertex {} has label {label} but K = {k}", vertex + 1)
            }
            Violation::NoTrainingLabels => write!(f, "no training labels: every label is 0"),
            Violation::EmptyClass { class } => write!(f, "empty class: class {class} has no labeled vertex"),
        }
    }
}

/// Everything wrong with a collection/label pair. Empty iff usable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Checks a collection and its labels. Never fails; callers decide what to do
/// with the report.
pub fn validate_collection(g: &GraphCollection, y: &LabelVector) -> ValidationReport {
    let mut violations = Vec::new();
    if g.is_empty() {
        violations.push(Violation::EmptyCollection);
    }
    let n = g.n();
    for (gi, graph) in g.graphs().iter().enumerate() {
        if graph.n() != n {
            violations.push(Violation::VertexCountMismatch { graph: gi, expected: n, found: graph.n() });
        }
        match graph {
            Graph::Edges(e) => {
                for (ei, edge) in e.edges().iter().enumerate() {
                    for vertex in [edge.u, edge.v] {
                        if vertex as usize >= graph.n() {
                            violations.push(Violation::IndexOutOfRange { graph: gi, edge: ei, vertex, n: graph.n() });
                        }
                    }
                    if !edge.w.is_finite() {
                        violations.push(Violation::NonFiniteWeight { graph: gi, edge: ei });
                    }
                }
            }
            Graph::Dense(d) => {
                if let Some(pos) = d.data.iter().position(|w| !w.is_finite()) {
                    violations.push(Violation::NonFiniteWeight { graph: gi, edge: pos });
                }
            }
        }
    }
    if !g.is_empty() && y.len() != n {
        violations.push(Violation::LabelCountMismatch { expected: n, found: y.len() });
    }
    for (i, &label) in y.labels().iter().enumerate() {
        if label as usize > y.k() {
            violations.push(Violation::LabelOutOfRange { vertex: i, label, k: y.k() });
        }
    }
    let counts = y.counts();
    if counts.iter().all(|&c| c == 0) {
        violations.push(Violation::NoTrainingLabels);
    } else {
        for (k, &c) in counts.iter().enumerate() {
            if c == 0 {
                violations.push(Violation::EmptyClass { class: k as u32 + 1 });
            }
        }
    }
    ValidationReport { violations }
}

/// Dense adjacency of an edge list. Duplicate edges sum; with `symmetric` each
/// edge is also written at `(v, u)`. A self-loop lands on the diagonal once.
pub fn to_adjacency(e: &EdgeList, symmetric: bool) -> Array2<f64> {
    let mut a = Array2::zeros((e.n(), e.n()));
    for edge in e.edges() {
        let (u, v) = (edge.u as usize, edge.v as usize);
        a[[u, v]] += edge.w;
        if symmetric && u != v {
            a[[v, u]] += edge.w;
        }
    }
    a
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

pub(crate) fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty())
}

pub(crate) fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Parses edge lines `u v [w]` (1-based, whitespace- or comma-separated).
pub fn parse_edgelist(reader: impl BufRead, path: &Path, n: Option<usize>, directed: bool) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let parts: Vec<&str> = fields(&line).collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(parse_err(path, lineno + 1, format!("expected `u v [w]`, got {line:?}")));
        }
        let mut ends = [0u32; 2];
        for (slot, tok) in ends.iter_mut().zip(&parts[..2]) {
            let idx: u64 = tok
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad vertex index {tok:?}")))?;
            if idx == 0 || idx > u32::MAX as u64 {
                return Err(parse_err(path, lineno + 1, format!("vertex index {idx} outside 1..={}", u32::MAX)));
            }
            *slot = (idx - 1) as u32;
            max_index = max_index.max(idx as usize);
        }
        let w = match parts.get(2) {
            Some(tok) => tok
                .parse::<f64>()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad weight {tok:?}")))?,
            None => 1.0,
        };
        edges.push(Edge::new(ends[0], ends[1], w));
    }
    let n = n.unwrap_or(max_index);
    Ok(EdgeList { n, edges, directed })
}

pub fn read_edgelist(path: impl AsRef<Path>, n: Option<usize>, directed: bool) -> Result<EdgeList> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_edgelist(BufReader::new(file), path, n, directed)
}

pub fn write_edgelist(e: &EdgeList, mut out: impl Write) -> Result<()> {
    for edge in e.edges() {
        writeln!(out, "{} {} {}", edge.u as u64 + 1, edge.v as u64 + 1, edge.w)?;
    }
    Ok(())
}

pub fn save_edgelist(e: &EdgeList, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_edgelist(e, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parses one label per line; line `i` is the label of vertex `i`.
pub fn parse_labels(reader: impl BufRead, path: &Path) -> Result<Vec<u32>> {
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let tok = line.trim();
        let y: u32 = tok
            .parse()
            .map_err(|_| parse_err(path, lineno + 1, format!("bad label {tok:?}")))?;
        labels.push(y);
    }
    Ok(labels)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let file = File::open(path)?;
    Ok(LabelVector::from_labels(parse_labels(BufReader::new(file), path)?))
}

pub fn write_labels(y: &LabelVector, mut out: impl Write) -> Result<()> {
    for l in y.labels() {
        writeln!(out, "{l}")?;
    }
    Ok(())
}
