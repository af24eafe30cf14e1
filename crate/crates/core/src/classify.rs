//! Distance matrices, 1-NN prediction and the benchmark protocols.

use std::ops::RangeInclusive;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SolveConfig, View};
use crate::error::{Error, Result};
use crate::io::{load_omniglot_run, LabeledDataset, PngOptions};
use crate::optimizer::SolvePlan;
use crate::raster::DigitalImage;

/// Row `i`, column `j` holds the distance from train image `j`, deformed
/// toward test image `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub values: Vec<f64>,
    /// Label of each column.
    pub train_labels: Vec<usize>,
    pub mode: View,
    pub config: SolveConfig,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// The first `cols` columns.
    pub fn column_prefix(&self, cols: usize) -> DistanceMatrix {
        let cols = cols.min(self.cols);
        DistanceMatrix {
            rows: self.rows,
            cols,
            values: (0..self.rows).flat_map(|i| self.row(i)[..cols].to_vec()).collect(),
            train_labels: self.train_labels[..cols].to_vec(),
            mode: self.mode,
            config: self.config.clone(),
            elapsed: self.elapsed,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Builds a thread pool of `workers` threads (`0` = rayon default).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))
}

/// Solves every `(reference, moving)` pair on `workers` threads. Results
/// come back in input order; the first failing pair (in that order) is
/// reported.
pub(crate) fn solve_pairs(
    plan: &SolvePlan,
    pairs: &[(&DigitalImage, &DigitalImage, usize, usize)],
    workers: usize,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<Vec<f64>> {
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<f64>> = worker_pool(workers)?.install(|| {
        pairs
            .par_iter()
            .map(|&(reference, moving, i, j)| {
                let r = plan.pair_distance(reference, moving);
                if let Some(cb) = progress {
                    cb(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
                }
                r.map_err(|e| Error::Pair {
                    test: i,
                    train: j,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn plan_for(test: &LabeledDataset, train: &LabeledDataset, config: &SolveConfig) -> Result<SolvePlan> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::InvalidInput("distance matrix needs nonempty test and train sets".into()));
    }
    let a = test.uniform_dims()?.expect("nonempty");
    let b = train.uniform_dims()?.expect("nonempty");
    if a != b {
        return Err(Error::SizeMismatch { expected: a, found: b });
    }
    SolvePlan::new(a.0, a.1, config)
}

/// All test × train distances, with each train image deformed toward the
/// test image (and back, for a symmetric configuration). Entries do not
/// depend on `workers`.
pub fn distance_matrix(
    test: &LabeledDataset,
    train: &LabeledDataset,
    config: &SolveConfig,
    workers: usize,
) -> Result<DistanceMatrix> {
    distance_matrix_with_progress(test, train, config, workers, None)
}

/// [`distance_matrix`] calling `progress(solved)` after each solve.
pub fn distance_matrix_with_progress(
    test: &LabeledDataset,
    train: &LabeledDataset,
    config: &SolveConfig,
    workers: usize,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<DistanceMatrix> {
    let start = Instant::now();
    let plan = plan_for(test, train, config)?;
    let pairs: Vec<_> = (0..test.len())
        .flat_map(|i| (0..train.len()).map(move |j| (i, j)))
        .map(|(i, j)| (&test.images[i], &train.images[j], i, j))
        .collect();
    let values = solve_pairs(&plan, &pairs, workers, progress)?;
    Ok(DistanceMatrix {
        rows: test.len(),
        cols: train.len(),
        values,
        train_labels: train.labels.clone(),
        mode: config.mode,
        config: config.clone(),
        elapsed: start.elapsed(),
    })
}

/// Index of the smallest entry; the lowest index wins ties. NaN never wins.
pub fn argmin(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in row.iter().enumerate() {
        match best {
            Some((_, b)) if !(v < b) => {}
            _ if v.is_nan() => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

/// Nearest-neighbour label of every row.
pub fn nn_classify(matrix: &DistanceMatrix) -> Vec<usize> {
    (0..matrix.rows)
        .map(|i| argmin(matrix.row(i)).map_or(0, |j| matrix.train_labels[j]))
        .collect()
}

/// Accuracy of one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyDataResult {
    /// Training images per class.
    pub n: usize,
    pub accuracy: f64,
    pub correct: usize,
    pub predictions: Vec<usize>,
    /// `confusion[true][predicted]`, over class indices.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub mode: View,
    pub class_names: Vec<String>,
    /// Classes taking part (those present in the training set).
    pub classes: Vec<usize>,
    pub test_count: usize,
    pub test_labels: Vec<usize>,
    /// Training indices in column order: rank-major, then class order.
    pub train_indices: Vec<usize>,
    pub results: Vec<TinyDataResult>,
    #[serde(skip)]
    pub matrix: Option<DistanceMatrix>,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Training columns for the first `n_max` images of every class present in
/// `train`, ordered so that the first `N·C` columns are exactly the first
/// `N` images per class.
pub fn tiny_data_columns(train: &LabeledDataset, n_max: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let counts = train.class_counts();
    let classes: Vec<usize> = (0..train.class_count()).filter(|&c| counts[c] > 0).collect();
    if classes.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if let Some(&c) = classes.iter().find(|&&c| counts[c] < n_max) {
        return Err(Error::InvalidInput(format!(
            "class {:?} has {} training images, fewer than n_max = {n_max}",
            train.class_names[c], counts[c]
        )));
    }
    let mut columns = Vec::with_capacity(n_max * classes.len());
    for rank in 0..n_max {
        let occ = train.occurrence_index(rank);
        columns.extend(classes.iter().map(|&c| occ[c].expect("count checked")));
    }
    Ok((classes, columns))
}

/// Tiny-data protocol: for `N = 1..=n_max`, 1-NN over the first `N`
/// training images per class, evaluated on the first `test_limit` test
/// images (all when `None`). One matrix is solved; smaller `N` use its
/// column prefixes.
pub fn run_tiny_data(
    train: &LabeledDataset,
    test: &LabeledDataset,
    n_max: usize,
    test_limit: Option<usize>,
    config: &SolveConfig,
    workers: usize,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<BenchmarkReport> {
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    if train.class_names.len() < test.class_names.len() {
        return Err(Error::InvalidInput("test labels exceed the training class table".into()));
    }
    let (classes, columns) = tiny_data_columns(train, n_max)?;
    let test = match test_limit {
        Some(k) => test.take(k),
        None => test.clone(),
    };
    let train_sub = train.subset(&columns);
    let matrix = distance_matrix_with_progress(&test, &train_sub, config, workers, progress)?;
    let n_classes = train.class_count();

    let results = (1..=n_max)
        .map(|n| {
            let m = matrix.column_prefix(n * classes.len());
            let predictions = nn_classify(&m);
            let mut confusion = vec![vec![0; n_classes]; n_classes];
            let mut correct = 0;
            for (&truth, &pred) in test.labels.iter().zip(&predictions) {
                if truth < n_classes {
                    confusion[truth][pred] += 1;
                }
                correct += usize::from(truth == pred);
            }
            TinyDataResult {
                n,
                accuracy: correct as f64 / test.len().max(1) as f64,
                correct,
                predictions,
                confusion,
            }
        })
        .collect();

    Ok(BenchmarkReport {
        mode: config.mode,
        class_names: train.class_names.clone(),
        classes,
        test_count: test.len(),
        test_labels: test.labels.clone(),
        train_indices: columns,
        results,
        elapsed: matrix.elapsed,
        matrix: Some(matrix),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmniglotRunResult {
    pub run: usize,
    pub tasks: usize,
    pub errors: usize,
    pub error_rate: f64,
    /// Predicted training index for each test image.
    pub predictions: Vec<usize>,
    pub answers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmniglotReport {
    pub mode: View,
    pub tasks: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub runs: Vec<OmniglotRunResult>,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Name of run folder `k` (1-based): `run01`, `run02`, ...
pub fn omniglot_run_name(k: usize) -> String {
    format!("run{k:02}")
}

/// One-shot protocol over `runs` (1-based) of an all-runs folder: every
/// test image is classified 1-NN against its run's training images.
pub fn run_omniglot(
    runs_dir: &Path,
    runs: RangeInclusive<usize>,
    options: PngOptions,
    config: &SolveConfig,
    workers: usize,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<OmniglotReport> {
    let start = Instant::now();
    if runs.is_empty() || *runs.start() == 0 {
        return Err(Error::InvalidInput(format!("invalid run range {runs:?}")));
    }
    let loaded = runs
        .clone()
        .map(|k| load_omniglot_run(&runs_dir.join(omniglot_run_name(k)), options).map(|r| (k, r)))
        .collect::<Result<Vec<_>>>()?;

    let dims = loaded[0].1.train.uniform_dims()?.expect("run has training images");
    for (_, r) in &loaded {
        for ds in [&r.train, &r.test] {
            if let Some(d) = ds.uniform_dims()? {
                if d != dims {
                    return Err(Error::SizeMismatch { expected: dims, found: d });
                }
            }
        }
    }
    let plan = SolvePlan::new(dims.0, dims.1, config)?;
    let mut pairs = Vec::new();
    for (_, r) in &loaded {
        for i in 0..r.test.len() {
            for j in 0..r.train.len() {
                pairs.push((&r.test.images[i], &r.train.images[j], i, j));
            }
        }
    }
    let values = solve_pairs(&plan, &pairs, workers, progress)?;

    let mut offset = 0;
    let mut run_results = Vec::with_capacity(loaded.len());
    for (k, r) in &loaded {
        let width = r.train.len();
        let predictions: Vec<usize> = (0..r.test.len())
            .map(|i| {
                let row = &values[offset + i * width..offset + (i + 1) * width];
                argmin(row).unwrap_or(0)
            })
            .collect();
        offset += r.test.len() * width;
        let errors = predictions.iter().zip(&r.test.labels).filter(|(p, a)| p != a).count();
        run_results.push(OmniglotRunResult {
            run: *k,
            tasks: r.test.len(),
            errors,
            error_rate: errors as f64 / r.test.len().max(1) as f64,
            predictions,
            answers: r.test.labels.clone(),
        });
    }
    let tasks: usize = run_results.iter().map(|r| r.tasks).sum();
    let errors: usize = run_results.iter().map(|r| r.errors).sum();
    Ok(OmniglotReport {
        mode: config.mode,
        tasks,
        errors,
        error_rate: errors as f64 / tasks.max(1) as f64,
        runs: run_results,
        elapsed: start.elapsed(),
    })
}
