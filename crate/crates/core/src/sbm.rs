//! Stochastic block model generators for multi-graph collections, the
//! row-normalized block matrix and the row-distinctness test that decides
//! whether the fusion embedding can separate every class.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeList, GraphCollection, LabelVector};

/// Row-distinctness tolerance on Euclidean distance between normalized rows.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Largest `n` sampled pair by pair; larger graphs use the skip sampler.
pub const PER_PAIR_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DegreeLaw {
    Uniform { a: f64, b: f64 },
}

impl DegreeLaw {
    pub fn max(&self) -> f64 {
        match *self {
            DegreeLaw::Uniform { b, .. } => b,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DegreeLaw::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            DegreeLaw::Uniform { a, b } if a == b => a,
            DegreeLaw::Uniform { a, b } => rng.gen_range(a..b),
        }
    }
}

/// Generative description of `M` graphs over one labeled vertex set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub priors: Vec<f64>,
    pub blocks: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub degree_law: Option<DegreeLaw>,
}

impl BlockSpec {
    pub fn new(priors: Vec<f64>, blocks: Vec<Vec<Vec<f64>>>, degree_law: Option<DegreeLaw>) -> Result<Self> {
        let spec = BlockSpec { k: priors.len(), priors, blocks, degree_law };
        spec.validate()?;
        Ok(spec)
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::BlockSpec(msg));
        if self.k == 0 {
            return err("K must be at least 1".into());
        }
        if self.priors.len() != self.k {
            return err(format!("{} priors for K = {}", self.priors.len(), self.k));
        }
        if self.priors.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return err(format!("priors must lie in (0, 1], got {:?}", self.priors));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return err(format!("priors sum to {total}, not 1"));
        }
        if self.blocks.is_empty() {
            return err("at least one block matrix is required".into());
        }
        let mut max_entry = 0.0f64;
        for (m, b) in self.blocks.iter().enumerate() {
            if b.len() != self.k || b.iter().any(|row| row.len() != self.k) {
                return err(format!("block matrix {} is not {k} x {k}", m + 1, k = self.k));
            }
            for (i, row) in b.iter().enumerate() {
                for (j, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        return err(format!("block {} entry ({}, {}) = {p} outside [0, 1]", m + 1, i + 1, j + 1));
                    }
                    if (p - b[j][i]).abs() > 1e-12 {
                        return err(format!("block matrix {} is not symmetric at ({}, {})", m + 1, i + 1, j + 1));
                    }
                    max_entry = max_entry.max(p);
                }
            }
        }
        if let Some(DegreeLaw::Uniform { a, b }) = self.degree_law {
            if !(a > 0.0 && a <= b) {
                return err(format!("uniform degree law needs 0 < a <= b, got a = {a}, b = {b}"));
            }
            if b * b * max_entry > 1.0 {
                return err(format!("theta_i theta_j B can reach {} > 1", b * b * max_entry));
            }
        }
        Ok(())
    }

    /// Spec restricted to the graphs at the given 0-based indices.
    pub fn subset(&self, graphs: &[usize]) -> Result<BlockSpec> {
        let blocks = graphs
            .iter()
            .map(|&g| {
                self.blocks
                    .get(g)
                    .cloned()
                    .ok_or_else(|| Error::BlockSpec(format!("graph {} out of range", g + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockSpec { k: self.k, priors: self.priors.clone(), blocks, degree_law: self.degree_law })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: BlockSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// Short content hash, used to tag result tables.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Built-in simulation settings: `sim1`, `sim2`, `sim3`.
    pub fn named(name: &str) -> Option<BlockSpec> {
        match name {
            "sim1" => Some(sim1()),
            "sim2" => Some(sim2()),
            "sim3" => Some(sim3()),
            _ => None,
        }
    }
}

fn constant_block(k: usize, value: f64) -> Vec<Vec<f64>> {
    vec![vec![value; k]; k]
}

const SIM_PRIORS: [f64; 4] = [0.3, 0.2, 0.2, 0.3];

/// Four classes, three graphs; graph `j` raises the within-class probability
/// of class `j` to 0.2 over a 0.1 background.
pub fn sim1() -> BlockSpec {
    let blocks = (0..3)
        .map(|j| {
            let mut b = constant_block(4, 0.1);
            b[j][j] = 0.2;
            b
        })
        .collect();
    BlockSpec { k: 4, priors: SIM_PRIORS.to_vec(), blocks, degree_law: None }
}

/// `sim1` under degree correction with `theta ~ U[0.1, 0.5]`.
pub fn sim2() -> BlockSpec {
    BlockSpec { degree_law: Some(DegreeLaw::Uniform { a: 0.1, b: 0.5 }), ..sim1() }
}

/// One signal graph (0.2 diagonal, 0.1 elsewhere) followed by five
/// independent all-0.1 graphs.
pub fn sim3() -> BlockSpec {
    let mut signal = constant_block(4, 0.1);
    for (k, row) in signal.iter_mut().enumerate() {
        row[k] = 0.2;
    }
    let mut blocks = vec![signal];
    blocks.extend((0..5).map(|_| constant_block(4, 0.1)));
    BlockSpec { k: 4, priors: SIM_PRIORS.to_vec(), blocks, degree_law: None }
}

/// I.i.d. categorical labels in `1..=K`.
pub fn sample_labels(n: usize, priors: &[f64], rng: &mut impl Rng) -> Result<LabelVector> {
    let dist = WeightedIndex::new(priors).map_err(|e| Error::BlockSpec(format!("bad priors: {e}")))?;
    let labels = (0..n).map(|_| dist.sample(rng) as u32 + 1).collect();
    Ok(LabelVector::new(labels, priors.len()))
}

pub fn sample_theta(n: usize, law: &DegreeLaw, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| law.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeSampler {
    /// Per-pair for `n <= PER_PAIR_LIMIT`, skip sampling above.
    #[default]
    Auto,
    PerPair,
    Skip,
}

fn check_block(labels: &LabelVector, block: &[Vec<f64>]) -> Result<()> {
    let k = labels.k();
    if block.len() != k || block.iter().any(|r| r.len() != k) {
        return Err(Error::BlockSpec(format!("block matrix is not {k} x {k}")));
    }
    if let Some(i) = labels.labels().iter().position(|&y| y == 0 || y as usize > k) {
        return Err(Error::BlockSpec(format!("vertex {} has label {} outside 1..={k}", i + 1, labels.get(i))));
    }
    Ok(())
}

/// Undirected SBM graph: each pair `i < j` is an edge with probability
/// `B(y_i, y_j)`; no self-loops.
pub fn sample_sbm(labels: &LabelVector, block: &[Vec<f64>], sampler: EdgeSampler, rng: &mut impl Rng) -> Result<EdgeList> {
    sample_graph(labels, block, None, sampler, rng)
}

/// Undirected DC-SBM graph with edge probability `theta_i theta_j B(y_i, y_j)`.
pub fn sample_dcsbm(
    labels: &LabelVector,
    block: &[Vec<f64>],
    theta: &[f64],
    sampler: EdgeSampler,
    rng: &mut impl Rng,
) -> Result<EdgeList> {
    if theta.len() != labels.len() {
        return Err(Error::Dimension(format!("{} degree parameters for {} vertices", theta.len(), labels.len())));
    }
    if let Some(i) = theta.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::BlockSpec(format!("degree parameter of vertex {} is {}", i + 1, theta[i])));
    }
    sample_graph(labels, block, Some(theta), sampler, rng)
}

fn sample_graph(
    labels: &LabelVector,
    block: &[Vec<f64>],
    theta: Option<&[f64]>,
    sampler: EdgeSampler,
    rng: &mut impl Rng,
) -> Result<EdgeList> {
    check_block(labels, block)?;
    if let Some(theta) = theta {
        let tmax = theta.iter().copied().fold(0.0, f64::max);
        let bmax = block.iter().flatten().copied().fold(0.0, f64::max);
        if tmax * tmax * bmax > 1.0 {
            return Err(Error::BlockSpec(format!("theta_i theta_j B reaches {} > 1", tmax * tmax * bmax)));
        }
    }
    let n = labels.len();
    let per_pair = match sampler {
        EdgeSampler::Auto => n <= PER_PAIR_LIMIT,
        EdgeSampler::PerPair => true,
        EdgeSampler::Skip => false,
    };
    let edges = if per_pair {
        sample_per_pair(labels, block, theta, rng)
    } else {
        sample_skip(labels, block, theta, rng)
    };
    Ok(EdgeList::new(n, edges))
}

fn sample_per_pair(labels: &LabelVector, block: &[Vec<f64>], theta: Option<&[f64]>, rng: &mut impl Rng) -> Vec<Edge> {
    let y = labels.labels();
    let mut edges = Vec::new();
    for i in 0..y.len() {
        let row = &block[y[i] as usize - 1];
        for j in i + 1..y.len() {
            let mut p = row[y[j] as usize - 1];
            if let Some(t) = theta {
                p *= t[i] * t[j];
            }
            if rng.gen::<f64>() < p {
                edges.push(Edge::new(i as u32, j as u32, 1.0));
            }
        }
    }
    edges
}

/// Number of failures before the next success of a Bernoulli(p) sequence.
#[inline]
fn geometric_skip(log_q: f64, rng: &mut impl Rng) -> u64 {
    // 1 - U lies in (0, 1], so the log is finite
    let u: f64 = rng.gen();
    let s = ((1.0 - u).ln() / log_q).floor();
    if s >= u64::MAX as f64 {
        u64::MAX
    } else {
        s as u64
    }
}

/// Walks the candidate pairs of every class block with geometric jumps. Under
/// degree correction it proposes at the block's largest probability and thins.
fn sample_skip(labels: &LabelVector, block: &[Vec<f64>], theta: Option<&[f64]>, rng: &mut impl Rng) -> Vec<Edge> {
    let k = labels.k();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (i, &y) in labels.labels().iter().enumerate() {
        members[y as usize - 1].push(i as u32);
    }
    let class_tmax: Vec<f64> = members
        .iter()
        .map(|m| match theta {
            Some(t) => m.iter().map(|&i| t[i as usize]).fold(0.0, f64::max),
            None => 1.0,
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..k {
        for b in a..k {
            let base = block[a][b];
            let p_max = (base * class_tmax[a] * class_tmax[b]).min(1.0);
            if p_max <= 0.0 {
                continue;
            }
            let (ma, mb) = (&members[a], &members[b]);
            let total: u64 = if a == b {
                let m = ma.len() as u64;
                m * m.saturating_sub(1) / 2
            } else {
                ma.len() as u64 * mb.len() as u64
            };
            let log_q = (1.0 - p_max).ln();
            let mut accept = |i: u32, j: u32, rng: &mut _| {
                let keep = match theta {
                    Some(t) => {
                        let p = base * t[i as usize] * t[j as usize];
                        p >= p_max || Rng::gen::<f64>(rng) * p_max < p
                    }
                    None => true,
                };
                if keep {
                    let (u, v) = if i < j { (i, j) } else { (j, i) };
                    edges.push(Edge::new(u, v, 1.0));
                }
            };
            if a == b {
                // pairs (r, c) with r < c in row-major order; row r holds m - 1 - r pairs
                let m = ma.len() as u64;
                let (mut r, mut row_start) = (0u64, 0u64);
                let mut pos: u64 = 0;
                let mut started = false;
                loop {
                    let step = if p_max >= 1.0 { 0 } else { geometric_skip(log_q, rng) };
                    pos = pos.saturating_add(if started { step.saturating_add(1) } else { step });
                    started = true;
                    if pos >= total {
                        break;
                    }
                    while pos >= row_start + (m - 1 - r) {
                        row_start += m - 1 - r;
                        r += 1;
                    }
                    let c = r + 1 + (pos - row_start);
                    accept(ma[r as usize], ma[c as usize], rng);
                }
            } else {
                let mut pos: u64 = 0;
                let mut started = false;
                loop {
                    let step = if p_max >= 1.0 { 0 } else { geometric_skip(log_q, rng) };
                    pos = pos.saturating_add(if started { step.saturating_add(1) } else { step });
                    started = true;
                    if pos >= total {
                        break;
                    }
                    let (r, c) = (pos / mb.len() as u64, pos % mb.len() as u64);
                    accept(ma[r as usize], mb[c as usize], rng);
                }
            }
        }
    }
    edges
}

/// RNG for one named stream of a seeded replicate.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Monte-Carlo draw of a full spec.
#[derive(Debug, Clone)]
pub struct SampledCollection {
    pub graphs: GraphCollection,
    pub labels: LabelVector,
    pub theta: Option<Vec<f64>>,
}

/// Draws labels, then degree parameters (once per vertex, shared by all
/// graphs), then every graph on its own RNG stream, in parallel.
pub fn sample_collection(spec: &BlockSpec, n: usize, seed: u64, sampler: EdgeSampler) -> Result<SampledCollection> {
    spec.validate()?;
    let labels = sample_labels(n, &spec.priors, &mut stream_rng(seed, 0))?;
    let theta = spec.degree_law.map(|law| sample_theta(n, &law, &mut stream_rng(seed, 1)));
    let graphs = spec
        .blocks
        .par_iter()
        .enumerate()
        .map(|(m, block)| {
            let mut rng = stream_rng(seed, 2 + m as u64);
            match &theta {
                Some(t) => sample_dcsbm(&labels, block, t, sampler, &mut rng),
                None => sample_sbm(&labels, block, sampler, &mut rng),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledCollection { graphs: GraphCollection::from_edgelists(graphs), labels, theta })
}

/// Per-graph row-normalized block matrices, concatenated: `K x (M K)`.
/// All-zero rows stay zero.
pub fn normalized_blocks(spec: &BlockSpec) -> Array2<f64> {
    let k = spec.k;
    let mut out = Array2::zeros((k, spec.m() * k));
    for (m, block) in spec.blocks.iter().enumerate() {
        for (r, row) in block.iter().enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (c, &x) in row.iter().enumerate() {
                    out[[r, m * k + c]] = x / norm;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identifiability {
    pub identifiable: bool,
    /// First pair of coinciding classes (1-based), when not identifiable.
    pub witness: Option<(usize, usize)>,
}

/// True iff every row of the normalized block matrix is distinct.
pub fn is_identifiable(spec: &BlockSpec) -> Identifiability {
    let bt = normalized_blocks(spec);
    for a in 0..spec.k {
        for b in a + 1..spec.k {
            let d = (&bt.row(a) - &bt.row(b)).mapv(|x| x * x).sum().sqrt();
            if d <= ROW_TOLERANCE {
                return Identifiability { identifiable: false, witness: Some((a + 1, b + 1)) };
            }
        }
    }
    Identifiability { identifiable: true, witness: None }
}

/// Classes grouped by coinciding normalized rows; singleton groups are
/// separable classes. Classes are 1-based.
pub fn confusable_groups(spec: &BlockSpec) -> Vec<Vec<usize>> {
    let bt = normalized_blocks(spec);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'class: for a in 0..spec.k {
        for g in groups.iter_mut() {
            let rep = g[0] - 1;
            if (&bt.row(a) - &bt.row(rep)).mapv(|x| x * x).sum().sqrt() <= ROW_TOLERANCE {
                g.push(a + 1);
                continue 'class;
            }
        }
        groups.push(vec![a + 1]);
    }
    groups
}
