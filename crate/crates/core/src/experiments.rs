//! Monte-Carlo simulation runner and the checks behind the convergence,
//! identifiability and graph-subset monotonicity results.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{SpectralConfig, SpectralEmbedding, SpectralMethod, DEFAULT_D_MAX};
use crate::classifier::{cross_validate, cross_validate_fixed, mean_std, EvalProtocol};
use crate::encoder::fuse;
use crate::error::{Error, Result};
use crate::graph::GraphCollection;
use crate::sbm::{confusable_groups, is_identifiable, normalized_blocks, sample_collection, stream_rng, BlockSpec, EdgeSampler};

pub const DEFAULT_N_GRID: [usize; 5] = [500, 1000, 2000, 5000, 10000];

/// `git describe` of the build, or "unknown".
pub const CODE_VERSION: &str = match option_env!("GFEE_CODE_VERSION") {
    Some(v) => v,
    None => "unknown",
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gfee,
    Omnibus,
    Mase,
    Use,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Gfee => "gfee",
            Method::Omnibus => "omnibus",
            Method::Mase => "mase",
            Method::Use => "use",
        }
    }

    pub fn spectral(&self) -> Option<SpectralMethod> {
        match self {
            Method::Gfee => None,
            Method::Omnibus => Some(SpectralMethod::Omnibus),
            Method::Mase => Some(SpectralMethod::Mase),
            Method::Use => Some(SpectralMethod::Use),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gfee" => Ok(Method::Gfee),
            "omnibus" => Ok(Method::Omnibus),
            "mase" => Ok(Method::Mase),
            "use" => Ok(Method::Use),
            other => Err(Error::Protocol(format!("unknown method {other:?}; expected gfee, omnibus, mase or use"))),
        }
    }
}

/// Nested prefixes `{1} ⊂ {1,2} ⊂ ... ⊂ {1..M}`, 0-based.
pub fn nested_prefixes(m: usize) -> Vec<Vec<usize>> {
    (1..=m).map(|k| (0..k).collect()).collect()
}

/// 1-based subset label such as `1+2+3`.
pub fn subset_label(subset: &[usize]) -> String {
    subset.iter().map(|g| (g + 1).to_string()).collect::<Vec<_>>().join("+")
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of Monte-Carlo replicate `r` at sample size `n`; shared by every
/// subset and method so arms are compared on the same draws.
pub fn replicate_seed(seed: u64, n: usize, r: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(n as u64)) ^ r as u64)
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub name: String,
    pub spec: BlockSpec,
    pub n_grid: Vec<usize>,
    pub subsets: Vec<Vec<usize>>,
    pub methods: Vec<Method>,
    pub d_max: usize,
    /// Monte-Carlo replicates; each is a fresh sample with one cross-validation.
    pub replicates: usize,
    pub folds: usize,
    pub neighbors: usize,
    pub seed: u64,
    pub sampler: EdgeSampler,
}

impl SimulationConfig {
    pub fn new(name: &str, spec: BlockSpec) -> Self {
        let subsets = nested_prefixes(spec.m());
        SimulationConfig {
            name: name.to_string(),
            spec,
            n_grid: DEFAULT_N_GRID.to_vec(),
            subsets,
            methods: vec![Method::Gfee],
            d_max: DEFAULT_D_MAX,
            replicates: 20,
            folds: 10,
            neighbors: 5,
            seed: 0,
            sampler: EdgeSampler::Auto,
        }
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        EvalProtocol::new(self.folds, 1, self.neighbors, self.seed).validate()?;
        if self.replicates == 0 {
            return Err(Error::Protocol("at least one replicate is required".into()));
        }
        if let Some(s) = self.subsets.iter().find(|s| s.is_empty() || s.iter().any(|&g| g >= self.spec.m())) {
            return Err(Error::Protocol(format!("graph subset {s:?} does not fit {} graphs", self.spec.m())));
        }
        Ok(())
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub n: usize,
    pub subset: String,
    pub method: String,
    pub mean_error: f64,
    pub std_error: f64,
    pub best_d: Option<usize>,
    pub seed: u64,
    pub spec_hash: String,
    pub code_version: String,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub rows: Vec<Row>,
}

impl Table {
    pub fn find(&self, n: usize, subset: &str, method: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.n == n && r.subset == subset && r.method == method)
    }

    /// CSV with a header line. Without `timing` the wall-time column is
    /// omitted, making seeded runs byte-identical.
    pub fn write_csv(&self, mut out: impl Write, timing: bool) -> Result<()> {
        write!(out, "n,subset,method,mean_error,std_error,best_d,seed,spec_hash,code_version")?;
        writeln!(out, "{}", if timing { ",wall_ms" } else { "" })?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{:.6},{:.6},{},{},{},{}",
                r.n,
                r.subset,
                r.method,
                r.mean_error,
                r.std_error,
                r.best_d.map_or(String::new(), |d| d.to_string()),
                r.seed,
                r.spec_hash,
                r.code_version
            )?;
            if timing {
                write!(out, ",{}", r.wall_ms)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Gnuplot data: one indexed block per (method, subset) with columns
    /// `n mean std`, blocks separated by two blank lines.
    pub fn write_gnuplot(&self, mut out: impl Write) -> Result<()> {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.method.as_str(), r.subset.as_str())) {
                keys.push((r.method.as_str(), r.subset.as_str()));
            }
        }
        for (i, (method, subset)) in keys.iter().enumerate() {
            if i > 0 {
                writeln!(out, "\n")?;
            }
            writeln!(out, "# method={method} graphs={subset}")?;
            writeln!(out, "# n mean_error std_error")?;
            for r in self.rows.iter().filter(|r| r.method == *method && r.subset == *subset) {
                writeln!(out, "{} {:.6} {:.6}", r.n, r.mean_error, r.std_error)?;
            }
        }
        Ok(())
    }
}

/// Errors of one arm over the Monte-Carlo replicates; spectral arms keep one
/// column per `d`.
struct ArmResult {
    errors: Vec<f64>,
    per_d: Option<Vec<f64>>,
    millis: u128,
}

fn run_arm(collection: &GraphCollection, y: &crate::graph::LabelVector, method: Method, cfg: &SimulationConfig, cv_seed: u64) -> Result<ArmResult> {
    let protocol = EvalProtocol::new(cfg.folds, 1, cfg.neighbors, cv_seed);
    let start = Instant::now();
    let result = match method.spectral() {
        None => ArmResult { errors: vec![cross_validate(collection, y, &protocol)?.mean_error], per_d: None, millis: 0 },
        Some(sm) => {
            let emb = SpectralEmbedding::compute(collection, &SpectralConfig::new(sm, cfg.d_max))?;
            let per_d = (1..=cfg.d_max)
                .into_par_iter()
                .map(|d| cross_validate_fixed(&emb.at(d), y, &protocol).map(|r| r.mean_error))
                .collect::<Result<Vec<_>>>()?;
            ArmResult { errors: Vec::new(), per_d: Some(per_d), millis: 0 }
        }
    };
    Ok(ArmResult { millis: start.elapsed().as_millis(), ..result })
}

/// Runs every (n, subset, method) arm. Replicates draw all graphs once and
/// evaluate every arm on that draw.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<Table> {
    cfg.validate()?;
    let spec_hash = cfg.spec.hash();
    let arms: Vec<(usize, Method)> = (0..cfg.subsets.len())
        .flat_map(|s| cfg.methods.iter().map(move |&m| (s, m)))
        .collect();
    let mut table = Table::default();
    for &n in &cfg.n_grid {
        let per_rep = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(cfg.seed, n, r);
                let sample = sample_collection(&cfg.spec, n, seed, cfg.sampler)?;
                let cv_seed = splitmix(seed);
                arms.iter()
                    .map(|&(s, m)| run_arm(&sample.graphs.subset(&cfg.subsets[s])?, &sample.labels, m, cfg, cv_seed))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (a, &(s, method)) in arms.iter().enumerate() {
            let results: Vec<&ArmResult> = per_rep.iter().map(|rep| &rep[a]).collect();
            let millis = results.iter().map(|r| r.millis).sum();
            let (errors, best_d) = if method.spectral().is_some() {
                let d_max = cfg.d_max;
                let mean_at = |d: usize| results.iter().map(|r| r.per_d.as_ref().unwrap()[d]).sum::<f64>() / results.len() as f64;
                let mut best = 0;
                for d in 1..d_max {
                    if mean_at(d) < mean_at(best) {
                        best = d;
                    }
                }
                (results.iter().map(|r| r.per_d.as_ref().unwrap()[best]).collect::<Vec<_>>(), Some(best + 1))
            } else {
                (results.iter().map(|r| r.errors[0]).collect(), None)
            };
            let (mean_error, std_error) = mean_std(&errors);
            table.rows.push(Row {
                n,
                subset: subset_label(&cfg.subsets[s]),
                method: method.name().to_string(),
                mean_error,
                std_error,
                best_d,
                seed: cfg.seed,
                spec_hash: spec_hash.clone(),
                code_version: CODE_VERSION.to_string(),
                wall_ms: millis,
            });
        }
    }
    Ok(table)
}

/// `max_k || mean of Z over class k - B̃(k, :) ||_2`, with the embedding
/// built from the true labels of every vertex.
pub fn class_mean_deviation(spec: &BlockSpec, n: usize, seed: u64) -> Result<f64> {
    let sample = sample_collection(spec, n, seed, EdgeSampler::Auto)?;
    let z = fuse(&sample.graphs, &sample.labels)?.z;
    let target = normalized_blocks(spec);
    let k = spec.k;
    let mut sums = Array2::<f64>::zeros((k, z.ncols()));
    let counts = sample.labels.counts();
    for (i, &y) in sample.labels.labels().iter().enumerate() {
        let mut row = sums.row_mut(y as usize - 1);
        row += &z.row(i);
    }
    let mut worst = 0.0f64;
    for (c, &count) in counts.iter().enumerate().take(k) {
        if count == 0 {
            continue;
        }
        let dev = sums
            .row(c)
            .iter()
            .zip(target.row(c).iter())
            .map(|(s, t)| (s / count as f64 - t).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Error of the oracle that knows which confusable group a vertex is in and
/// guesses within the group by a prior-weighted coin, in closed form.
pub fn confusion_floor(spec: &BlockSpec) -> f64 {
    confusable_groups(spec)
        .iter()
        .map(|g| {
            let mass: f64 = g.iter().map(|&k| spec.priors[k - 1]).sum();
            g.iter().map(|&k| spec.priors[k - 1] * (1.0 - spec.priors[k - 1] / mass)).sum::<f64>()
        })
        .sum()
}

/// The same oracle by brute-force simulation over `trials` labeled vertices.
pub fn confusion_oracle_floor(spec: &BlockSpec, trials: usize, seed: u64) -> Result<f64> {
    let groups = confusable_groups(spec);
    let mut group_of = vec![0; spec.k];
    for (gi, g) in groups.iter().enumerate() {
        for &k in g {
            group_of[k - 1] = gi;
        }
    }
    let mut rng = stream_rng(seed, 0);
    let labels = crate::sbm::sample_labels(trials, &spec.priors, &mut rng)?;
    let mut wrong = 0usize;
    for &y in labels.labels() {
        let g = &groups[group_of[y as usize - 1]];
        let mass: f64 = g.iter().map(|&k| spec.priors[k - 1]).sum();
        let mut u = rng.gen::<f64>() * mass;
        let mut guess = *g.last().unwrap();
        for &k in g {
            if u < spec.priors[k - 1] {
                guess = k;
                break;
            }
            u -= spec.priors[k - 1];
        }
        if guess != y as usize {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / trials as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub mean_deviation: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub spec_hash: String,
    pub seed: u64,
    pub convergence: Vec<ConvergencePoint>,
    pub identifiable: bool,
    /// Pair of 1-based classes with equal normalized rows, when not identifiable.
    pub witness: Option<(usize, usize)>,
    pub oracle_floor: f64,
    /// Monotonicity table over nested prefixes.
    pub subsets: Table,
    pub monotone: bool,
    pub slack: f64,
}

impl PropertyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "convergence (n, mean, max of max_k class-mean deviation):").unwrap();
        for p in &self.convergence {
            writeln!(s, "  {} {:.6} {:.6}", p.n, p.mean_deviation, p.max_deviation).unwrap();
        }
        writeln!(s, "identifiable: {}", self.identifiable).unwrap();
        if let Some((a, b)) = self.witness {
            writeln!(s, "  classes {a} and {b} share a normalized block row").unwrap();
        }
        writeln!(s, "oracle error floor: {:.4}", self.oracle_floor).unwrap();
        writeln!(s, "nested subsets non-increasing within {:.3}: {}", self.slack, self.monotone).unwrap();
        s
    }
}

/// True when every later entry is at most the earlier one plus `slack`.
pub fn non_increasing(errors: &[f64], slack: f64) -> bool {
    errors.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Convergence curve, identifiability verdict with its error floor, and the
/// nested-subset table, all from one seed.
pub fn verify_properties(cfg: &SimulationConfig, slack: f64) -> Result<PropertyReport> {
    cfg.validate()?;
    let mut convergence = Vec::new();
    for &n in &cfg.n_grid {
        let devs = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| class_mean_deviation(&cfg.spec, n, replicate_seed(cfg.seed, n, r)))
            .collect::<Result<Vec<_>>>()?;
        convergence.push(ConvergencePoint {
            n,
            mean_deviation: devs.iter().sum::<f64>() / devs.len() as f64,
            max_deviation: devs.iter().cloned().fold(0.0, f64::max),
        });
    }
    let ident = is_identifiable(&cfg.spec);
    let subsets = run_simulation(&SimulationConfig { methods: vec![Method::Gfee], subsets: nested_prefixes(cfg.spec.m()), ..cfg.clone() })?;
    let monotone = cfg.n_grid.iter().all(|&n| {
        let errs: Vec<f64> = subsets.rows.iter().filter(|r| r.n == n).map(|r| r.mean_error).collect();
        non_increasing(&errs, slack)
    });
    Ok(PropertyReport {
        spec_hash: cfg.spec.hash(),
        seed: cfg.seed,
        convergence,
        identifiable: ident.identifiable,
        witness: ident.witness,
        oracle_floor: confusion_floor(&cfg.spec),
        subsets,
        monotone,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{sim1, sim3};
    use approx::assert_abs_diff_eq;

    fn small(spec: BlockSpec, n_grid: Vec<usize>) -> SimulationConfig {
        SimulationConfig { n_grid, replicates: 3, folds: 5, seed: 11, ..SimulationConfig::new("t", spec) }
    }

    #[test]
    fn labels_and_parsing() {
        assert_eq!(subset_label(&[0, 1, 2]), "1+2+3");
        assert_eq!(nested_prefixes(3), vec![vec![0], vec![0, 1], vec![0, 1, 2]]);
        assert_eq!("MASE".parse::<Method>().unwrap(), Method::Mase);
        assert!("pca".parse::<Method>().is_err());
    }

    #[test]
    fn table_shape_and_reproducibility() {
        let cfg = small(sim1(), vec![200, 400]);
        let a = run_simulation(&cfg).unwrap();
        assert_eq!(a.rows.len(), 6);
        let b = run_simulation(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca, false).unwrap();
        b.write_csv(&mut cb, false).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca).unwrap();
        assert!(text.starts_with("n,subset,method,mean_error,std_error,best_d,seed,spec_hash,code_version\n"));
        assert!(text.contains(&format!(",{},", sim1().hash())));
    }

    #[test]
    fn gnuplot_blocks() {
        let cfg = small(sim1().subset(&[0, 1]).unwrap(), vec![150, 300]);
        let t = run_simulation(&cfg).unwrap();
        let mut out = Vec::new();
        t.write_gnuplot(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.matches("# method=gfee").count(), 2);
        assert_eq!(text.matches("\n\n\n").count(), 1);
    }

    #[test]
    fn spectral_arm_reports_best_d() {
        let cfg = SimulationConfig { methods: vec![Method::Use], d_max: 4, ..small(sim3().subset(&[0]).unwrap(), vec![300]) };
        let t = run_simulation(&cfg).unwrap();
        let d = t.rows[0].best_d.unwrap();
        assert!((1..=4).contains(&d));
    }

    #[test]
    fn invalid_subsets_rejected() {
        let cfg = SimulationConfig { subsets: vec![vec![5]], ..small(sim1(), vec![100]) };
        assert!(run_simulation(&cfg).is_err());
    }

    #[test]
    fn oracle_floor_matches_closed_form() {
        let spec = BlockSpec::new(
            vec![0.3, 0.3, 0.4],
            vec![vec![vec![0.1, 0.1, 0.05], vec![0.1, 0.1, 0.05], vec![0.05, 0.05, 0.2]]],
            None,
        )
        .unwrap();
        // coin over {1, 2} with equal mass: each errs half the time
        assert_abs_diff_eq!(confusion_floor(&spec), 0.3, epsilon = 1e-12);
        let sim = confusion_oracle_floor(&spec, 200_000, 3).unwrap();
        assert!((sim - 0.3).abs() < 0.005, "{sim}");
        assert_eq!(confusion_floor(&sim1()), 0.0);
    }

    #[test]
    fn monotonicity_helper() {
        assert!(non_increasing(&[0.3, 0.2, 0.205], 0.01));
        assert!(!non_increasing(&[0.3, 0.2, 0.25], 0.01));
    }

    #[test]
    fn deviation_shrinks_with_n() {
        let a = class_mean_deviation(&sim1(), 300, 1).unwrap();
        let b = class_mean_deviation(&sim1(), 3000, 1).unwrap();
        assert!(b < a, "{a} {b}");
    }
}
