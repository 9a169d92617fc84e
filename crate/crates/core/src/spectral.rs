//! Truncated symmetric eigendecomposition and thin SVD for the spectral
//! baselines.
//!
//! Small operators are decomposed exactly with a dense symmetric solver. Larger
//! ones go through Lanczos with full reorthogonalization, which only needs
//! matrix-vector products; the Krylov space grows until the requested Ritz
//! pairs converge. Eigenpairs come back ordered by decreasing `|lambda|`, with
//! each vector's largest-magnitude coordinate made positive.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::graph::{Graph, GraphCollection};
use crate::sbm::stream_rng;

/// Operators up to this dimension are decomposed densely.
pub const DENSE_LIMIT: usize = 600;

/// Relative residual accepted for a Lanczos Ritz pair.
pub const LANCZOS_TOL: f64 = 1e-8;

/// A real symmetric linear operator.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Symmetric adjacency in CSR form. Directed graphs are symmetrized as
/// `(A + A^T) / 2`.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    pub fn from_graph(g: &Graph) -> SparseSymmetric {
        match g {
            Graph::Edges(e) => {
                let n = e.n();
                let half = if e.is_directed() { 0.5 } else { 1.0 };
                let mut triples: Vec<(u32, u32, f64)> = Vec::with_capacity(2 * e.len());
                for edge in e.edges() {
                    triples.push((edge.u, edge.v, edge.w * half));
                    if edge.u != edge.v {
                        triples.push((edge.v, edge.u, edge.w * half));
                    } else if e.is_directed() {
                        triples.push((edge.u, edge.u, edge.w * half));
                    }
                }
                Self::from_triples(n, triples)
            }
            Graph::Dense(d) => {
                let n = d.n();
                let mut triples = Vec::new();
                for i in 0..n {
                    for j in i..n {
                        let w = 0.5 * (d.row(i)[j] + d.row(j)[i]);
                        if w != 0.0 {
                            triples.push((i as u32, j as u32, w));
                            if i != j {
                                triples.push((j as u32, i as u32, w));
                            }
                        }
                    }
                }
                Self::from_triples(n, triples)
            }
        }
    }

    fn from_triples(n: usize, mut triples: Vec<(u32, u32, f64)>) -> SparseSymmetric {
        triples.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triples.len());
        let mut values: Vec<f64> = Vec::with_capacity(triples.len());
        let mut last: Option<(u32, u32)> = None;
        for (u, v, w) in triples {
            if last == Some((u, v)) {
                *values.last_mut().unwrap() += w;
                continue;
            }
            last = Some((u, v));
            indptr[u as usize + 1] += 1;
            indices.push(v);
            values.push(w);
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        SparseSymmetric { n, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

impl SymmetricOperator for SparseSymmetric {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, yi)| {
            let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
            *yi = self.indices[lo..hi].iter().zip(&self.values[lo..hi]).map(|(&j, &w)| w * x[j as usize]).sum();
        });
    }
}

/// Dense symmetric matrix as an operator.
pub struct DenseSymmetric<'a>(pub ArrayView2<'a, f64>);

impl SymmetricOperator for DenseSymmetric<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = ndarray::ArrayView1::from(x);
        let out = self.0.dot(&xv);
        y.copy_from_slice(out.as_slice().unwrap());
    }
}

/// The omnibus matrix of `M` graphs: block `(a, b)` is `(A_a + A_b) / 2`, so
/// diagonal blocks are the adjacencies themselves. Never materialized.
pub struct OmnibusOperator {
    adj: Vec<SparseSymmetric>,
    n: usize,
}

impl OmnibusOperator {
    pub fn new(collection: &GraphCollection) -> Self {
        let adj: Vec<_> = collection.graphs().iter().map(SparseSymmetric::from_graph).collect();
        OmnibusOperator { n: collection.n(), adj }
    }
}

impl SymmetricOperator for OmnibusOperator {
    fn dim(&self) -> usize {
        self.n * self.adj.len()
    }

    // y_a = 1/2 A_a (sum_b x_b) + 1/2 sum_b A_b x_b
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, m) = (self.n, self.adj.len());
        let mut sum_x = vec![0.0; n];
        for b in 0..m {
            for (s, xi) in sum_x.iter_mut().zip(&x[b * n..(b + 1) * n]) {
                *s += xi;
            }
        }
        let mut common = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for b in 0..m {
            self.adj[b].apply(&x[b * n..(b + 1) * n], &mut tmp);
            for (c, t) in common.iter_mut().zip(&tmp) {
                *c += 0.5 * t;
            }
        }
        for a in 0..m {
            let ya = &mut y[a * n..(a + 1) * n];
            self.adj[a].apply(&sum_x, ya);
            for (yi, c) in ya.iter_mut().zip(&common) {
                *yi = 0.5 * *yi + c;
            }
        }
    }
}

/// `sum_m A_m A_m^T`, whose eigenvectors are the left singular vectors of the
/// unfolding `[A_1 | ... | A_M]`.
pub struct UnfoldedGram<'a> {
    pub adj: &'a [SparseSymmetric],
}

impl SymmetricOperator for UnfoldedGram<'_> {
    fn dim(&self) -> usize {
        self.adj.first().map_or(0, |a| a.n)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut t = vec![0.0; n];
        let mut u = vec![0.0; n];
        for a in self.adj {
            a.apply(x, &mut t);
            a.apply(&t, &mut u);
            for (yi, ui) in y.iter_mut().zip(&u) {
                *yi += ui;
            }
        }
    }
}

/// Eigenpairs ordered by decreasing `|value|`; `vectors` is `dim x d`.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

impl Eigenpairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `U |Lambda|^{1/2}`, the usual adjacency spectral embedding.
    pub fn scaled(&self) -> Array2<f64> {
        let mut x = self.vectors.clone();
        for (mut col, &l) in x.axis_iter_mut(Axis(1)).zip(&self.values) {
            col.mapv_inplace(|v| v * l.abs().sqrt());
        }
        x
    }
}

fn pivot_sign(col: ndarray::ArrayView1<'_, f64>) -> f64 {
    let mut pivot = 0.0f64;
    for &v in col.iter() {
        if v.abs() > pivot.abs() {
            pivot = v;
        }
    }
    if pivot < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        if pivot_sign(col.view()) < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

fn order_by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx
}

fn dense_of(op: &dyn SymmetricOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    // symmetrize away rounding
    (&m + m.transpose()) * 0.5
}

fn top_dense(op: &dyn SymmetricOperator, d: usize) -> Eigenpairs {
    let eig = SymmetricEigen::new(dense_of(op));
    let order = order_by_magnitude(eig.eigenvalues.as_slice());
    let n = op.dim();
    let mut vectors = Array2::zeros((n, d));
    let mut values = Vec::with_capacity(d);
    for (c, &j) in order.iter().take(d).enumerate() {
        values.push(eig.eigenvalues[j]);
        for i in 0..n {
            vectors[[i, c]] = eig.eigenvectors[(i, j)];
        }
    }
    fix_signs(&mut vectors);
    Eigenpairs { values, vectors }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of classical Gram-Schmidt against every basis vector.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.par_iter().map(|q| dot(q, w)).collect();
        for (q, c) in basis.iter().zip(coeffs) {
            axpy(-c, q, w);
        }
    }
}

fn random_unit(n: usize, basis: &[Vec<f64>], rng: &mut impl Rng) -> Option<Vec<f64>> {
    for _ in 0..4 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        reorthogonalize(basis, &mut v);
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            return Some(v);
        }
    }
    None
}

fn top_lanczos(op: &dyn SymmetricOperator, d: usize) -> Eigenpairs {
    let n = op.dim();
    let mut rng = stream_rng(0x6c616e637a6f73, 0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = random_unit(n, &basis, &mut rng).expect("n > 0");
    let mut w = vec![0.0; n];
    let mut target = n.min((2 * d + 40).max(60));
    let step = target;
    let mut exhausted = false;

    loop {
        while basis.len() < target && !exhausted {
            op.apply(&q, &mut w);
            let a = dot(&q, &w);
            axpy(-a, &q, &mut w);
            if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
                axpy(-b, prev, &mut w);
            }
            basis.push(q.clone());
            alpha.push(a);
            reorthogonalize(&basis, &mut w);
            let b = dot(&w, &w).sqrt();
            if basis.len() == n {
                beta.push(0.0);
                exhausted = true;
                break;
            }
            let scale = alpha.iter().chain(beta.iter()).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            if b <= 1e-12 * scale {
                // invariant subspace: restart in its orthogonal complement
                beta.push(0.0);
                match random_unit(n, &basis, &mut rng) {
                    Some(v) => q = v,
                    None => exhausted = true,
                }
            } else {
                beta.push(b);
                q = w.iter().map(|x| x / b).collect();
            }
        }

        let m = basis.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let order = order_by_magnitude(eig.eigenvalues.as_slice());
        let keep = d.min(m);
        let last_beta = beta[m - 1];
        let lead = eig.eigenvalues[order[0]].abs().max(1e-300);
        let converged = order
            .iter()
            .take(keep)
            .all(|&j| (last_beta * eig.eigenvectors[(m - 1, j)]).abs() <= LANCZOS_TOL * lead);

        if converged || exhausted || m >= n {
            let mut vectors = Array2::zeros((n, keep));
            let mut values = Vec::with_capacity(keep);
            for (c, &j) in order.iter().take(keep).enumerate() {
                values.push(eig.eigenvalues[j]);
                let s = eig.eigenvectors.column(j);
                let mut col = vectors.column_mut(c);
                for (qi, &sij) in basis.iter().zip(s.iter()) {
                    for (x, &qv) in col.iter_mut().zip(qi) {
                        *x += sij * qv;
                    }
                }
            }
            fix_signs(&mut vectors);
            return Eigenpairs { values, vectors };
        }
        target = (target + step).min(n);
    }
}

/// The `d` eigenpairs of largest magnitude. `d` is clamped to the dimension.
pub fn top_eigenpairs(op: &dyn SymmetricOperator, d: usize) -> Eigenpairs {
    let n = op.dim();
    let d = d.min(n);
    if n == 0 || d == 0 {
        return Eigenpairs { values: Vec::new(), vectors: Array2::zeros((n, 0)) };
    }
    if n <= DENSE_LIMIT {
        top_dense(op, d)
    } else {
        top_lanczos(op, d)
    }
}

/// Same as [`top_eigenpairs`] but always through Lanczos (for testing).
pub fn top_eigenpairs_lanczos(op: &dyn SymmetricOperator, d: usize) -> Eigenpairs {
    let d = d.min(op.dim());
    top_lanczos(op, d)
}

/// Thin SVD of a dense matrix truncated to `r` triples, ordered by decreasing
/// singular value with sign-fixed left vectors.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

pub fn thin_svd(a: &ArrayView2<'_, f64>, r: usize) -> ThinSvd {
    let (rows, cols) = a.dim();
    let r = r.min(rows).min(cols);
    let m = DMatrix::from_fn(rows, cols, |i, j| a[[i, j]]);
    let svd = m.svd(true, true);
    let u_full = svd.u.expect("requested");
    let vt_full = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]).then(x.cmp(&y)));
    let mut u = Array2::zeros((rows, r));
    let mut vt = Array2::zeros((r, cols));
    let mut s = Array1::zeros(r);
    for (c, &j) in order.iter().take(r).enumerate() {
        s[c] = svd.singular_values[j];
        for i in 0..rows {
            u[[i, c]] = u_full[(i, j)];
        }
        for i in 0..cols {
            vt[[c, i]] = vt_full[(j, i)];
        }
    }
    for c in 0..r {
        if pivot_sign(u.column(c)) < 0.0 {
            u.column_mut(c).mapv_inplace(|v| -v);
            vt.row_mut(c).mapv_inplace(|v| -v);
        }
    }
    ThinSvd { u, s, vt }
}
