//! Spectral multi-graph baselines: omnibus embedding, multiple adjacency
//! spectral embedding (MASE) and unfolded spectral embedding (USE).
//!
//! Each method is decomposed once at `d_max`; the representation for any
//! smaller `d` is a column prefix, so a dimension sweep reuses one
//! decomposition and the same folds.

use ndarray::{concatenate, s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{cross_validate_fixed, ErrorReport, EvalProtocol};
use crate::error::{Error, Result};
use crate::graph::{GraphCollection, LabelVector};
use crate::spectral::{thin_svd, top_eigenpairs, OmnibusOperator, SparseSymmetric, UnfoldedGram};

/// Default upper end of the dimension sweep.
pub const DEFAULT_D_MAX: usize = 30;

/// Rank of the per-graph embeddings that MASE concatenates.
pub const MASE_GRAPH_RANK: usize = 30;

/// Eigen/singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMethod {
    Omnibus,
    Mase,
    Use,
}

impl SpectralMethod {
    pub const ALL: [SpectralMethod; 3] = [SpectralMethod::Omnibus, SpectralMethod::Mase, SpectralMethod::Use];

    pub fn name(&self) -> &'static str {
        match self {
            SpectralMethod::Omnibus => "omnibus",
            SpectralMethod::Mase => "mase",
            SpectralMethod::Use => "use",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub method: SpectralMethod,
    pub d_max: usize,
}

impl SpectralConfig {
    pub fn new(method: SpectralMethod, d_max: usize) -> Self {
        SpectralConfig { method, d_max }
    }
}

fn check_collection(collection: &GraphCollection, d: usize) -> Result<()> {
    if collection.is_empty() {
        return Err(Error::Dimension("spectral embedding of an empty collection".into()));
    }
    let n = collection.n();
    if let Some(g) = collection.graphs().iter().find(|g| g.n() != n) {
        return Err(Error::Dimension(format!("graph with {} vertices in a collection of n = {n}", g.n())));
    }
    if d == 0 {
        return Err(Error::Dimension("embedding dimension must be at least 1".into()));
    }
    Ok(())
}

fn numerical_rank(values: &[f64]) -> usize {
    let lead = values.first().map_or(0.0, |v| v.abs());
    values.iter().take_while(|v| v.abs() > RANK_TOL * lead && lead > 0.0).count()
}

fn truncate_to_rank(requested: usize, rank: usize, what: &str) -> usize {
    if rank < requested {
        log::warn!("{what}: requested d = {requested} exceeds numerical rank {rank}; truncating");
    }
    rank.min(requested)
}

/// Omnibus embedding: `Mn x d`, rows grouped by graph.
#[derive(Debug, Clone)]
pub struct OmnibusEmbedding {
    pub stacked: Array2<f64>,
    pub m: usize,
}

impl OmnibusEmbedding {
    pub fn block(&self, graph: usize) -> ndarray::ArrayView2<'_, f64> {
        let n = self.stacked.nrows() / self.m;
        self.stacked.slice(s![graph * n..(graph + 1) * n, ..])
    }

    /// Per-vertex representation: the vertex's rows averaged over the `M` blocks.
    pub fn vertex_representation(&self) -> Array2<f64> {
        let n = self.stacked.nrows() / self.m;
        let mut avg = Array2::zeros((n, self.stacked.ncols()));
        for g in 0..self.m {
            avg += &self.block(g);
        }
        avg / self.m as f64
    }
}

pub fn omnibus_embed(collection: &GraphCollection, d: usize) -> Result<OmnibusEmbedding> {
    check_collection(collection, d)?;
    let op = OmnibusOperator::new(collection);
    let eig = top_eigenpairs(&op, d);
    let keep = truncate_to_rank(d, numerical_rank(&eig.values), "omnibus");
    let stacked = eig.scaled().slice(s![.., ..keep]).to_owned();
    Ok(OmnibusEmbedding { stacked, m: collection.len() })
}

fn adjacencies(collection: &GraphCollection) -> Vec<SparseSymmetric> {
    collection.graphs().par_iter().map(SparseSymmetric::from_graph).collect()
}

/// MASE: per-graph adjacency spectral embeddings (rank `min(30, n)`),
/// concatenated into `n x 30M`; the result is the top `d` left singular
/// vectors of that, scaled by their singular values.
///
/// The per-graph eigenvectors are weighted by `|lambda|^(1/2)` before the
/// joint decomposition. Unweighted orthonormal blocks have flat singular
/// values, which leaves the leading directions undetermined.
pub fn mase_embed(collection: &GraphCollection, d: usize) -> Result<Array2<f64>> {
    check_collection(collection, d)?;
    let adj = adjacencies(collection);
    let r = MASE_GRAPH_RANK.min(collection.n());
    let per_graph: Vec<Array2<f64>> = adj
        .par_iter()
        .map(|a| {
            let e = top_eigenpairs(a, r);
            let rank = numerical_rank(&e.values);
            e.scaled().slice(s![.., ..rank]).to_owned()
        })
        .collect();
    let views: Vec<_> = per_graph.iter().map(|u| u.view()).collect();
    let joint = concatenate(Axis(1), &views).map_err(|e| Error::Dimension(e.to_string()))?;
    let svd = thin_svd(&joint.view(), d);
    let rank = numerical_rank(svd.s.as_slice().unwrap());
    let keep = truncate_to_rank(d, rank, "mase");
    let mut x = svd.u.slice(s![.., ..keep]).to_owned();
    for (mut col, &sv) in x.columns_mut().into_iter().zip(svd.s.iter()) {
        col *= sv;
    }
    Ok(x)
}

/// USE factors at a given `d`: one `n x d` block per graph from the right
/// singular factor of the unfolding `[A_1 | ... | A_M]`.
#[derive(Debug, Clone)]
pub struct UnfoldedEmbedding {
    pub blocks: Vec<Array2<f64>>,
}

impl UnfoldedEmbedding {
    /// `n x (M d)`: the per-graph blocks side by side, first `d` columns each.
    pub fn representation(&self, d: usize) -> Array2<f64> {
        let views: Vec<_> = self.blocks.iter().map(|b| b.slice(s![.., ..d.min(b.ncols())])).collect();
        concatenate(Axis(1), &views).expect("blocks share n")
    }

    pub fn dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }
}

fn unfolded_factors(collection: &GraphCollection, d: usize) -> Result<UnfoldedEmbedding> {
    check_collection(collection, d)?;
    let adj = adjacencies(collection);
    let eig = top_eigenpairs(&UnfoldedGram { adj: &adj }, d);
    let sigma: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let keep = truncate_to_rank(d, numerical_rank(&sigma), "use");
    let n = collection.n();
    let blocks = adj
        .par_iter()
        .map(|a| {
            let mut y = Array2::zeros((n, keep));
            let mut out = vec![0.0; n];
            for c in 0..keep {
                let u: Vec<f64> = eig.vectors.column(c).to_vec();
                a.apply(&u, &mut out);
                let scale = 1.0 / sigma[c].sqrt();
                for i in 0..n {
                    y[[i, c]] = out[i] * scale;
                }
            }
            y
        })
        .collect();
    Ok(UnfoldedEmbedding { blocks })
}

use crate::spectral::SymmetricOperator;

/// USE: `n x (M d)` representation.
pub fn use_embed(collection: &GraphCollection, d: usize) -> Result<Array2<f64>> {
    let f = unfolded_factors(collection, d)?;
    Ok(f.representation(d))
}

/// One decomposition at `d_max`, sliced per `d`.
#[derive(Debug, Clone)]
pub enum SpectralEmbedding {
    Omnibus(Array2<f64>),
    Mase(Array2<f64>),
    Use(UnfoldedEmbedding),
}

impl SpectralEmbedding {
    pub fn compute(collection: &GraphCollection, config: &SpectralConfig) -> Result<Self> {
        Ok(match config.method {
            SpectralMethod::Omnibus => {
                SpectralEmbedding::Omnibus(omnibus_embed(collection, config.d_max)?.vertex_representation())
            }
            SpectralMethod::Mase => SpectralEmbedding::Mase(mase_embed(collection, config.d_max)?),
            SpectralMethod::Use => SpectralEmbedding::Use(unfolded_factors(collection, config.d_max)?),
        })
    }

    /// Largest `d` available.
    pub fn d_available(&self) -> usize {
        match self {
            SpectralEmbedding::Omnibus(x) | SpectralEmbedding::Mase(x) => x.ncols(),
            SpectralEmbedding::Use(u) => u.dim(),
        }
    }

    pub fn at(&self, d: usize) -> Array2<f64> {
        match self {
            SpectralEmbedding::Omnibus(x) | SpectralEmbedding::Mase(x) => x.slice(s![.., ..d.min(x.ncols())]).to_owned(),
            SpectralEmbedding::Use(u) => u.representation(d),
        }
    }
}

/// Sweeps `d = 1..=d_max` with identical folds and returns the minimizing `d`
/// (smallest on ties) with its report.
pub fn best_d_error<F>(embed_at: F, d_max: usize, y: &LabelVector, protocol: &EvalProtocol) -> Result<(usize, ErrorReport)>
where
    F: Fn(usize) -> Array2<f64> + Sync,
{
    if d_max == 0 {
        return Err(Error::Dimension("d_max must be at least 1".into()));
    }
    let reports = (1..=d_max)
        .into_par_iter()
        .map(|d| cross_validate_fixed(&embed_at(d), y, protocol).map(|r| (d, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(usize, ErrorReport)> = None;
    for (d, r) in reports {
        let better = match &best {
            None => true,
            Some((_, b)) => r.mean_error < b.mean_error,
        };
        if better {
            best = Some((d, r));
        }
    }
    Ok(best.expect("d_max >= 1"))
}

/// Decomposes once and sweeps `d`.
pub fn best_d_for(
    collection: &GraphCollection,
    y: &LabelVector,
    config: &SpectralConfig,
    protocol: &EvalProtocol,
) -> Result<(usize, ErrorReport)> {
    let emb = SpectralEmbedding::compute(collection, config)?;
    let d_max = config.d_max.min(emb.d_available());
    best_d_error(|d| emb.at(d), d_max, y, protocol)
}
