//! Brute-force k-nearest-neighbor classification and the cross-validation
//! harness. Every fold re-embeds with that fold's labels hidden, so held-out
//! labels never reach the encoder.

use std::borrow::Cow;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{fuse_with_encoder, EncoderMatrix};
use crate::error::{Error, Result};
use crate::graph::{validate_collection, GraphCollection, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub folds: usize,
    pub replicates: usize,
    pub neighbors: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol { folds: 10, replicates: 20, neighbors: 5, seed: 0 }
    }
}

impl EvalProtocol {
    pub fn new(folds: usize, replicates: usize, neighbors: usize, seed: u64) -> Self {
        EvalProtocol { folds, replicates, neighbors, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Protocol(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.replicates < 1 {
            return Err(Error::Protocol("need at least 1 replicate".into()));
        }
        if self.neighbors < 1 {
            return Err(Error::Protocol("need at least 1 neighbor".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean_error: f64,
    /// Sample standard deviation of the per-replicate errors.
    pub std_error: f64,
    pub per_replicate: Vec<f64>,
    /// `per_fold[r][f]`: error on fold `f` of replicate `r`.
    pub per_fold: Vec<Vec<f64>>,
    /// `confusion[true - 1][predicted - 1]`, summed over all replicates.
    pub confusion: Vec<Vec<u64>>,
}

impl ErrorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Squared distance, abandoned once it exceeds `bound` (the returned value is
/// then some partial sum above `bound`).
fn squared_distance_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut total = 0.0;
    for (ca, cb) in a.chunks(16).zip(b.chunks(16)) {
        let mut acc = [0.0f64; 4];
        let mut i = 0;
        while i + 4 <= ca.len() {
            for l in 0..4 {
                let t = ca[i + l] - cb[i + l];
                acc[l] += t * t;
            }
            i += 4;
        }
        for j in i..ca.len() {
            let t = ca[j] - cb[j];
            acc[0] += t * t;
        }
        total += (acc[0] + acc[1]) + (acc[2] + acc[3]);
        if total > bound {
            return total;
        }
    }
    total
}

/// Indices and squared distances of the `k` nearest training rows. Ties in
/// distance keep the lower training index.
fn nearest(train: &ArrayView2<'_, f64>, query: ArrayView1<'_, f64>, k: usize) -> Vec<(f64, usize)> {
    let train = train.as_standard_layout();
    let query = query.to_vec();
    let dim = query.len();
    let flat = train.as_slice().expect("standard layout");
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for j in 0..train.nrows() {
        let bound = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
        let d = squared_distance_bounded(&flat[j * dim..(j + 1) * dim], &query, bound);
        if d >= bound {
            continue;
        }
        // after the last entry with distance <= d, so equal distances stay in index order
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, j));
        best.truncate(k);
    }
    best
}

/// Majority vote; ties go to the larger summed inverse distance, then to the
/// smaller class.
fn vote(neighbors: &[(f64, usize)], train_labels: &[u32]) -> u32 {
    let max_label = neighbors.iter().map(|&(_, j)| train_labels[j]).max().unwrap_or(0) as usize;
    let mut count = vec![0usize; max_label + 1];
    let mut closeness = vec![0.0f64; max_label + 1];
    for &(d2, j) in neighbors {
        let c = train_labels[j] as usize;
        count[c] += 1;
        closeness[c] += 1.0 / d2.sqrt();
    }
    let mut best = 0usize;
    for c in 1..=max_label {
        if count[c] == 0 {
            continue;
        }
        let better = best == 0
            || count[c] > count[best]
            || (count[c] == count[best] && closeness[c] > closeness[best]);
        if better {
            best = c;
        }
    }
    best as u32
}

/// Predicts the label of `query` from its `k` Euclidean-nearest training rows.
pub fn knn_predict(train: ArrayView2<'_, f64>, train_labels: &[u32], query: ArrayView1<'_, f64>, k: usize) -> Result<u32> {
    if train.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if train.nrows() != train_labels.len() {
        return Err(Error::Dimension(format!(
            "{} training rows but {} labels",
            train.nrows(),
            train_labels.len()
        )));
    }
    if train.ncols() != query.len() {
        return Err(Error::Dimension(format!("query has {} dims, training rows {}", query.len(), train.ncols())));
    }
    let k = k.clamp(1, train.nrows());
    Ok(vote(&nearest(&train, query, k), train_labels))
}

/// Batch prediction, parallel over queries.
pub fn knn_predict_many(train: ArrayView2<'_, f64>, train_labels: &[u32], queries: ArrayView2<'_, f64>, k: usize) -> Result<Vec<u32>> {
    if train.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let k = k.clamp(1, train.nrows());
    Ok(queries
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|q| vote(&nearest(&train, q, k), train_labels))
        .collect())
}

/// Class-stratified fold assignment for the labeled vertices; unlabeled
/// vertices get `None`. Each class is shuffled and dealt round-robin, with the
/// dealing position carried across classes so fold sizes stay balanced.
pub fn stratified_folds(y: &LabelVector, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); y.k()];
    for (i, &label) in y.labels().iter().enumerate() {
        if label >= 1 && label as usize <= y.k() {
            by_class[label as usize - 1].push(i);
        }
    }
    let mut assignment = vec![None; y.len()];
    let mut next = 0usize;
    for members in &mut by_class {
        members.shuffle(rng);
        for &i in members.iter() {
            assignment[i] = Some(next % folds);
            next += 1;
        }
    }
    assignment
}

/// RNG stream for one replicate of a seeded run.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

struct FoldOutcome {
    replicate: usize,
    fold: usize,
    evaluated: usize,
    wrong: usize,
    pairs: Vec<(u32, u32)>,
}

/// Cross-validates an arbitrary embedding. `embed` receives the labels with the
/// current fold hidden and returns an `n x d` embedding; label-free embeddings
/// may ignore the argument and return a borrowed matrix.
pub fn cross_validate_with<'a, F>(y: &LabelVector, p: &EvalProtocol, embed: F) -> Result<ErrorReport>
where
    F: Fn(&LabelVector) -> Result<Cow<'a, Array2<f64>>> + Sync,
{
    p.validate()?;
    let k = y.k();
    let jobs: Vec<(usize, Vec<Option<usize>>)> = (0..p.replicates)
        .map(|r| (r, stratified_folds(y, p.folds, &mut replicate_rng(p.seed, r))))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..p.replicates).flat_map(|r| (0..p.folds).map(move |f| (r, f))).collect();

    let outcomes = tasks
        .par_iter()
        .map(|&(r, f)| -> Result<FoldOutcome> {
            let assignment = &jobs[r].1;
            let test: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == Some(f)).collect();
            let masked = y.masked(test.iter().copied());
            if test.is_empty() {
                return Ok(FoldOutcome { replicate: r, fold: f, evaluated: 0, wrong: 0, pairs: Vec::new() });
            }
            if masked.counts().iter().all(|&c| c == 0) {
                return Err(Error::Protocol(format!(
                    "replicate {} fold {} leaves no training vertex in any class",
                    r + 1,
                    f + 1
                )));
            }
            let z = embed(&masked)?;
            if z.nrows() != y.len() {
                return Err(Error::Dimension(format!("embedding has {} rows for {} vertices", z.nrows(), y.len())));
            }
            let train: Vec<usize> = (0..y.len()).filter(|&i| masked.get(i) != 0).collect();
            let train_rows = z.select(Axis(0), &train);
            let train_labels: Vec<u32> = train.iter().map(|&i| masked.get(i)).collect();
            let test_rows = z.select(Axis(0), &test);
            let predicted = knn_predict_many(train_rows.view(), &train_labels, test_rows.view(), p.neighbors)?;
            let pairs: Vec<(u32, u32)> = test.iter().zip(&predicted).map(|(&i, &yhat)| (y.get(i), yhat)).collect();
            let wrong = pairs.iter().filter(|(t, yhat)| t != yhat).count();
            Ok(FoldOutcome { replicate: r, fold: f, evaluated: test.len(), wrong, pairs })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_fold = vec![vec![0.0; p.folds]; p.replicates];
    let mut wrong = vec![0usize; p.replicates];
    let mut evaluated = vec![0usize; p.replicates];
    let mut confusion = vec![vec![0u64; k]; k];
    for o in &outcomes {
        per_fold[o.replicate][o.fold] = if o.evaluated > 0 { o.wrong as f64 / o.evaluated as f64 } else { 0.0 };
        wrong[o.replicate] += o.wrong;
        evaluated[o.replicate] += o.evaluated;
        for &(t, yhat) in &o.pairs {
            confusion[t as usize - 1][yhat as usize - 1] += 1;
        }
    }
    let per_replicate: Vec<f64> = wrong
        .iter()
        .zip(&evaluated)
        .map(|(&w, &e)| if e > 0 { w as f64 / e as f64 } else { 0.0 })
        .collect();
    let (mean_error, std_error) = mean_std(&per_replicate);
    Ok(ErrorReport { mean_error, std_error, per_replicate, per_fold, confusion })
}

/// Cross-validates a fixed (label-free) embedding.
pub fn cross_validate_fixed(z: &Array2<f64>, y: &LabelVector, p: &EvalProtocol) -> Result<ErrorReport> {
    cross_validate_with(y, p, |_| Ok(Cow::Borrowed(z)))
}

/// Cross-validates the fusion embedding, re-embedding every fold with the
/// fold's labels hidden.
pub fn cross_validate(collection: &GraphCollection, y: &LabelVector, p: &EvalProtocol) -> Result<ErrorReport> {
    // Empty classes are tolerated inside a fold but not in the full label vector.
    validate_collection(collection, y).into_result()?;
    cross_validate_with(y, p, |masked| {
        let enc = EncoderMatrix::new_lenient(masked);
        Ok(Cow::Owned(fuse_with_encoder(collection, &enc)?.z))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn majority_of_three() {
        let train = array![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]];
        let y = knn_predict(train.view(), &[1, 2, 2], array![0.9, 0.9].view(), 3).unwrap();
        assert_eq!(y, 2);
    }

    #[test]
    fn single_point() {
        let train = array![[3.0, -1.0]];
        assert_eq!(knn_predict(train.view(), &[7], array![0.0, 0.0].view(), 1).unwrap(), 7);
    }

    #[test]
    fn duplicated_points_win() {
        let train = array![[0.5, 0.5], [0.5, 0.5], [0.5, 0.5], [9.0, 9.0], [-9.0, 9.0]];
        let labels = [1, 1, 1, 2, 2];
        // brute force: sort all distances, take 5 -> three label-1 at distance 0
        let q = array![0.5, 0.5];
        let mut d: Vec<(f64, u32)> = train
            .rows()
            .into_iter()
            .zip(labels)
            .map(|(r, l)| ((&r - &q).mapv(|x| x * x).sum(), l))
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let ones = d.iter().take(5).filter(|x| x.1 == 1).count();
        assert!(ones >= 3);
        assert_eq!(knn_predict(train.view(), &labels, q.view(), 5).unwrap(), 1);
    }

    #[test]
    fn empty_training_set_errors() {
        let train = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            knn_predict(train.view(), &[], array![0.0, 0.0].view(), 5),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn vote_ties_prefer_closer_then_smaller_class() {
        // two of each class; class 2 is closer
        let train = array![[3.0], [3.0], [1.0], [1.0]];
        assert_eq!(knn_predict(train.view(), &[1, 1, 2, 2], array![0.0].view(), 4).unwrap(), 2);
        // perfectly symmetric: smallest class wins
        let train = array![[-1.0], [1.0]];
        assert_eq!(knn_predict(train.view(), &[2, 1], array![0.0].view(), 2).unwrap(), 1);
    }

    #[test]
    fn kth_distance_tie_keeps_lower_index() {
        let train = array![[1.0], [-1.0], [1.0]];
        let near = nearest(&train.view(), array![0.0].view(), 2);
        assert_eq!(near.iter().map(|x| x.1).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn folds_are_stratified_and_cover_labeled_vertices() {
        let y = LabelVector::new((0..103).map(|i| if i % 10 == 0 { 0 } else { (i % 3) as u32 + 1 }).collect(), 3);
        let folds = stratified_folds(&y, 5, &mut replicate_rng(1, 0));
        for (i, f) in folds.iter().enumerate() {
            assert_eq!(f.is_none(), y.get(i) == 0);
        }
        for class in 1..=3u32 {
            let mut sizes = [0usize; 5];
            for (i, f) in folds.iter().enumerate() {
                if y.get(i) == class {
                    sizes[f.unwrap()] += 1;
                }
            }
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn separated_clusters_have_zero_error() {
        let mut rng = replicate_rng(3, 0);
        let n = 200;
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32 + 1).collect();
        let z = Array2::from_shape_fn((n, 2), |(i, j)| {
            let centre = if labels[i] == 1 { 0.0 } else { 100.0 };
            centre + rng.gen::<f64>() + j as f64
        });
        let y = LabelVector::new(labels, 2);
        let report = cross_validate_fixed(&z, &y, &EvalProtocol::new(5, 3, 5, 11)).unwrap();
        assert_eq!(report.mean_error, 0.0);
        assert_eq!(report.std_error, 0.0);
        assert_eq!(report.per_fold.len(), 3);
        let row_sums: Vec<u64> = report.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![300, 300]);
    }

    #[test]
    fn random_labels_sit_at_chance() {
        let mut rng = replicate_rng(4, 0);
        let n = 2000;
        let z = Array2::from_shape_fn((n, 3), |_| rng.gen::<f64>());
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32 + 1).collect();
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        let y = LabelVector::new(shuffled, 2);
        let report = cross_validate_fixed(&z, &y, &EvalProtocol::new(5, 2, 5, 5)).unwrap();
        assert!((report.mean_error - 0.5).abs() <= 0.05, "{}", report.mean_error);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut rng = replicate_rng(8, 0);
        let z = Array2::from_shape_fn((120, 2), |_| rng.gen::<f64>());
        let y = LabelVector::new((0..120).map(|i| (i % 3) as u32 + 1).collect(), 3);
        let p = EvalProtocol::new(5, 4, 5, 99);
        let a = cross_validate_fixed(&z, &y, &p).unwrap();
        let b = cross_validate_fixed(&z, &y, &p).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.mean_error) && a.std_error >= 0.0);
    }

    #[test]
    fn protocol_validation() {
        assert!(EvalProtocol::new(1, 1, 5, 0).validate().is_err());
        assert!(EvalProtocol::new(2, 0, 5, 0).validate().is_err());
        assert!(EvalProtocol::new(2, 1, 0, 0).validate().is_err());
        assert!(EvalProtocol::default().validate().is_ok());
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[0.1, 0.3]);
        assert!((m - 0.2).abs() < 1e-15);
        assert!((s - (0.02f64).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.4]), (0.4, 0.0));
    }

    proptest::proptest! {
        #[test]
        fn nearest_matches_sorted_brute_force(
            rows in proptest::collection::vec(proptest::collection::vec(-2i32..3, 20), 1..40),
            q in proptest::collection::vec(-2i32..3, 20),
            k in 1usize..7,
        ) {
            // small integer coordinates force many exact distance ties
            let n = rows.len();
            let train = Array2::from_shape_fn((n, 20), |(i, j)| rows[i][j] as f64);
            let q = ndarray::Array1::from_iter(q.iter().map(|&x| x as f64));
            let mut all: Vec<(f64, usize)> = (0..n).map(|j| ((&train.row(j) - &q).mapv(|x| x * x).sum(), j)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            all.truncate(k.min(n));
            proptest::prop_assert_eq!(nearest(&train.view(), q.view(), k.min(n)), all);
        }
    }
}
