//! Graph fusion encoder embedding.
//!
//! For labels `y` with `n_k` training vertices in class `k`, the encoder `W`
//! holds `1 / n_k` at `(i, y_i)` for every labeled vertex. Each graph is
//! embedded as `Z_m = A_m W` by a single pass over its edges, the nonzero rows
//! of `Z_m` are scaled to unit Euclidean norm, and the per-graph blocks are
//! concatenated into an `n x (M K)` matrix that covers every vertex, labeled or
//! not.

use std::io::{Read, Write};

use ndarray::{s, Array2, ArrayView2, ArrayViewMut1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{validate_collection, DenseGraph, EdgeList, Graph, GraphCollection, LabelVector};

/// Per-class training counts. Fails if any class `1..=K` is empty.
pub fn class_counts(y: &LabelVector) -> Result<Vec<usize>> {
    let counts = y.counts();
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(k as u32 + 1));
    }
    Ok(counts)
}

const NO_CLASS: u32 = u32::MAX;

/// The class-normalized one-hot matrix `W`, stored as one `(column, weight)`
/// pair per vertex since each row has at most one nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderMatrix {
    column: Vec<u32>,
    weight: Vec<f64>,
    counts: Vec<usize>,
}

impl EncoderMatrix {
    /// Builds `W`; every class must have at least one labeled vertex.
    pub fn new(y: &LabelVector) -> Result<Self> {
        class_counts(y)?;
        Ok(Self::build(y))
    }

    /// Builds `W` leaving the columns of empty classes at zero. Used when a
    /// cross-validation fold happens to hold every member of a rare class.
    pub fn new_lenient(y: &LabelVector) -> Self {
        Self::build(y)
    }

    fn build(y: &LabelVector) -> Self {
        let counts = y.counts();
        let mut column = vec![NO_CLASS; y.len()];
        let mut weight = vec![0.0; y.len()];
        for (i, &label) in y.labels().iter().enumerate() {
            if label >= 1 && (label as usize) <= y.k() {
                column[i] = label - 1;
                weight[i] = 1.0 / counts[label as usize - 1] as f64;
            }
        }
        EncoderMatrix { column, weight, counts }
    }

    pub fn n(&self) -> usize {
        self.column.len()
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.counts
    }

    /// `(column, 1/n_k)` for a labeled vertex, `None` for an unknown one.
    #[inline]
    pub fn entry(&self, i: usize) -> Option<(usize, f64)> {
        match self.column[i] {
            NO_CLASS => None,
            c => Some((c as usize, self.weight[i])),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n(), self.k()));
        for i in 0..self.n() {
            if let Some((c, wt)) = self.entry(i) {
                w[[i, c]] = wt;
            }
        }
        w
    }
}

pub fn build_encoder(y: &LabelVector) -> Result<EncoderMatrix> {
    EncoderMatrix::new(y)
}

/// `n x K` embedding of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PerGraphEmbedding {
    pub z: Array2<f64>,
    pub normalized: bool,
}

/// Computes `A W` without normalizing.
pub fn embed_graph_raw(graph: &Graph, enc: &EncoderMatrix) -> Result<Array2<f64>> {
    if graph.n() != enc.n() {
        return Err(Error::Dimension(format!(
            "graph has {} vertices but the label vector has {}",
            graph.n(),
            enc.n()
        )));
    }
    let mut z = Array2::zeros((enc.n(), enc.k()));
    match graph {
        Graph::Edges(e) => accumulate_edges(e, enc, &mut z),
        Graph::Dense(d) => accumulate_dense(d, enc, &mut z),
    }
    Ok(z)
}

fn accumulate_edges(e: &EdgeList, enc: &EncoderMatrix, z: &mut Array2<f64>) {
    let k = enc.k();
    let out = z.as_slice_mut().expect("fresh array is contiguous");
    let directed = e.is_directed();
    for edge in e.edges() {
        let (u, v) = (edge.u as usize, edge.v as usize);
        if let Some((c, wt)) = enc.entry(v) {
            out[u * k + c] += edge.w * wt;
        }
        if !directed && u != v {
            if let Some((c, wt)) = enc.entry(u) {
                out[v * k + c] += edge.w * wt;
            }
        }
    }
}

fn accumulate_dense(d: &DenseGraph, enc: &EncoderMatrix, z: &mut Array2<f64>) {
    let k = enc.k();
    z.axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            for (j, &s) in d.row(i).iter().enumerate() {
                if let Some((c, wt)) = enc.entry(j) {
                    row[c] += s * wt;
                }
            }
            debug_assert_eq!(row.len(), k);
        });
}

fn normalize_row(mut row: ArrayViewMut1<f64>) {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.mapv_inplace(|x| x / norm);
    }
}

/// Scales every nonzero row to unit Euclidean norm; zero rows stay zero.
pub fn normalize_rows(z: &mut Array2<f64>) {
    for row in z.rows_mut() {
        normalize_row(row);
    }
}

/// Embeds one graph and normalizes its rows.
pub fn embed_graph(graph: &Graph, enc: &EncoderMatrix) -> Result<PerGraphEmbedding> {
    let mut z = embed_graph_raw(graph, enc)?;
    normalize_rows(&mut z);
    Ok(PerGraphEmbedding { z, normalized: true })
}

/// Row-concatenated per-graph embeddings, `n x (M K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionEmbedding {
    pub z: Array2<f64>,
    pub m: usize,
    pub k: usize,
}

impl FusionEmbedding {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// The `K`-wide column block of graph `m` (0-based).
    pub fn block(&self, m: usize) -> ArrayView2<'_, f64> {
        self.z.slice(s![.., m * self.k..(m + 1) * self.k])
    }

    /// CSV with header `vertex,dim_1,...,dim_MK`; vertices are 1-based.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        write!(out, "vertex")?;
        for j in 1..=self.dim() {
            write!(out, ",dim_{j}")?;
        }
        writeln!(out)?;
        for (i, row) in self.z.rows().into_iter().enumerate() {
            write!(out, "{}", i + 1)?;
            for x in row {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_bin(&self, out: impl Write) -> Result<()> {
        write_matrix_bin(&self.z.view(), out)
    }
}

/// Binary dump: `n` and `cols` as little-endian `u32`, then the entries as
/// little-endian `f64` in column-major order.
pub fn write_matrix_bin(z: &ArrayView2<'_, f64>, mut out: impl Write) -> Result<()> {
    let (n, cols) = z.dim();
    let dims = [n, cols].map(|d| {
        u32::try_from(d).map_err(|_| Error::Dimension(format!("dimension {d} does not fit the 32-bit header")))
    });
    for d in dims {
        out.write_all(&d?.to_le_bytes())?;
    }
    for col in z.columns() {
        for x in col {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_bin(mut input: impl Read) -> Result<Array2<f64>> {
    let mut header = [0u8; 8];
    input.read_exact(&mut header)?;
    let n = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != n * cols * 8 {
        return Err(Error::Dimension(format!(
            "binary dump declares {n} x {cols} but carries {} bytes",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    // Stored column-major: read as (cols, n) and transpose.
    let t = Array2::from_shape_vec((cols, n), values).expect("length checked");
    Ok(t.reversed_axes().as_standard_layout().into_owned())
}

/// Embeds every graph with a shared encoder and concatenates the blocks.
pub fn fuse_with_encoder(collection: &GraphCollection, enc: &EncoderMatrix) -> Result<FusionEmbedding> {
    let (n, k, m) = (enc.n(), enc.k(), collection.len());
    let blocks = collection
        .graphs()
        .par_iter()
        .map(|g| embed_graph(g, enc))
        .collect::<Result<Vec<_>>>()?;
    let mut z = Array2::zeros((n, m * k));
    for (mi, block) in blocks.into_iter().enumerate() {
        z.slice_mut(s![.., mi * k..(mi + 1) * k]).assign(&block.z);
    }
    Ok(FusionEmbedding { z, m, k })
}

/// Validates, builds `W` once and embeds all graphs (concurrently).
pub fn fuse(collection: &GraphCollection, y: &LabelVector) -> Result<FusionEmbedding> {
    validate_collection(collection, y).into_result()?;
    let enc = EncoderMatrix::new(y)?;
    fuse_with_encoder(collection, &enc)
}
