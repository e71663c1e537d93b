//! Repeated train/test benchmark over a list of classifier specs.
//!
//! Each repeat `r` reshuffles the training order with
//! `derive_seed(master, r)` (also used as the model seed), fits on the
//! training split and scores on the fixed test split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    self, ClassifierError, Criterion, LinearConfig, Loss, ModelSpec, Penalty, Splitter, Weights,
};
use crate::dataset::{LabeledDataset, SplitIndices};
use crate::seed;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repeats must be >= 1")]
    NoRepeats,
    #[error("split index {index} out of range for {len} samples")]
    BadSplit { index: usize, len: usize },
    #[error("cap of {cap} is below one sample per class ({classes} classes)")]
    CapTooSmall { cap: usize, classes: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// One benchmark row: a Table 1 style name, its parameter text, the spec
/// that realises it and the published MNIST-Fraction accuracy, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub name: String,
    pub params: String,
    pub spec: ModelSpec,
    #[serde(default)]
    pub published: Option<f64>,
    /// Minimum mean accuracy accepted at desk scale.
    #[serde(default)]
    pub floor: Option<f64>,
}

impl BenchEntry {
    pub fn new(name: &str, params: &str, spec: ModelSpec) -> Self {
        BenchEntry {
            name: name.to_string(),
            params: params.to_string(),
            spec,
            published: None,
            floor: None,
        }
    }

    fn published(mut self, v: f64) -> Self {
        self.published = Some(v);
        self
    }

    fn floor(mut self, v: f64) -> Self {
        self.floor = Some(v);
        self
    }
}

/// Trees per forest; the published rows do not list a count.
pub const DEFAULT_TREES: usize = 100;

/// Every classical row of the published benchmark that this crate implements,
/// with its published MNIST-Fraction accuracy.
pub fn table1() -> Vec<BenchEntry> {
    use Criterion::*;
    let dt = |c: Criterion, d: usize, s: Splitter, cs: &str, ss: &str, acc: f64| {
        BenchEntry::new(
            "DecisionTree",
            &format!("crit.={cs}, m-d.={d}, splt.={ss}"),
            ModelSpec::decision_tree(c, d, s),
        )
        .published(acc)
    };
    let rf = |c: Criterion, d: usize, cs: &str, acc: f64| {
        BenchEntry::new(
            "RandomForest",
            &format!("crit.={cs}, m-d.={d}"),
            ModelSpec::random_forest(c, d, DEFAULT_TREES),
        )
        .published(acc)
    };
    let knn = |w: Weights, k: usize, p: u8, ws: &str, acc: f64| {
        BenchEntry::new(
            "KNeighbors",
            &format!("wt.={ws}, n-neighbors={k}, p={p}"),
            ModelSpec::knn(k, w, p),
        )
        .published(acc)
    };
    let lin = |name: &str, params: &str, cfg: LinearConfig, acc: f64| {
        BenchEntry::new(name, params, ModelSpec::linear(cfg)).published(acc)
    };
    vec![
        dt(Entropy, 10, Splitter::Best, "entropy", "best", 0.859),
        dt(Entropy, 10, Splitter::Random, "entropy", "random", 0.843),
        dt(Entropy, 50, Splitter::Best, "entropy", "best", 0.876).floor(0.80),
        dt(Gini, 50, Splitter::Best, "gini", "best", 0.860),
        dt(Gini, 10, Splitter::Random, "gini", "random", 0.827),
        dt(Gini, 50, Splitter::Random, "gini", "random", 0.861),
        rf(Entropy, 10, "entropy", 0.948),
        rf(Entropy, 50, "entropy", 0.967),
        rf(Gini, 10, "gini", 0.938),
        rf(Gini, 50, "gini", 0.967),
        BenchEntry::new("GaussianNB", "priors = 1 / 11", ModelSpec::gaussian_nb())
            .published(0.641)
            .floor(0.55),
        knn(Weights::Uniform, 5, 1, "uniform", 0.967).floor(0.93),
        knn(Weights::Uniform, 9, 2, "uniform", 0.970),
        knn(Weights::Distance, 5, 1, "distance", 0.968),
        knn(Weights::Distance, 9, 2, "distance", 0.971),
        lin("Perceptron", "penalty=l1", LinearConfig::perceptron(Penalty::L1), 0.850),
        lin("Perceptron", "penalty=l2", LinearConfig::perceptron(Penalty::L2), 0.837),
        lin("Perceptron", "penalty=elasticnet", LinearConfig::perceptron(Penalty::ElasticNet), 0.836),
        lin("PassiveAggr.", "C=1", LinearConfig::passive_aggressive(1.0), 0.867),
        lin("PassiveAggr.", "C=10", LinearConfig::passive_aggressive(10.0), 0.867),
        lin("PassiveAggr.", "C=100", LinearConfig::passive_aggressive(100.0), 0.867),
        lin("SGDClassifier", "loss=hinge, penalty=l2", LinearConfig::sgd(Loss::Hinge, Penalty::L2), 0.922),
        lin("SGDClassifier", "loss=perceptron, penalty=l1", LinearConfig::sgd(Loss::Perceptron, Penalty::L1), 0.886),
        lin("SGDClassifier", "loss=modified-huber, penalty=l1", LinearConfig::sgd(Loss::ModifiedHuber, Penalty::L1), 0.899),
        lin("SGDClassifier", "loss=modified-huber, penalty=l2", LinearConfig::sgd(Loss::ModifiedHuber, Penalty::L2), 0.917),
        lin("SGDClassifier", "loss=log-loss, penalty=elasticnet", LinearConfig::sgd(Loss::Log, Penalty::ElasticNet), 0.921),
        lin("SGDClassifier", "loss=hinge, penalty=elasticnet", LinearConfig::sgd(Loss::Hinge, Penalty::ElasticNet), 0.915),
        lin("LogisticReg.", "C=1, penalty=l2", LinearConfig::logistic_regression(1.0, Penalty::L2), 0.929).floor(0.85),
        lin("LogisticReg.", "C=10, penalty=l2", LinearConfig::logistic_regression(10.0, Penalty::L2), 0.928),
        lin("LogisticReg.", "C=1, penalty=l1", LinearConfig::logistic_regression(1.0, Penalty::L1), 0.929),
        lin("LogisticReg.", "C=10, penalty=l1", LinearConfig::logistic_regression(10.0, Penalty::L1), 0.928),
    ]
}

/// The rows carrying a desk-scale floor.
pub fn desk_checks() -> Vec<BenchEntry> {
    table1().into_iter().filter(|e| e.floor.is_some()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub entries: Vec<BenchEntry>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub cap_train: Option<usize>,
    #[serde(default)]
    pub cap_test: Option<usize>,
}

fn default_repeats() -> usize {
    5
}

impl BenchConfig {
    pub fn new(entries: Vec<BenchEntry>, master_seed: u64) -> Self {
        BenchConfig {
            entries,
            repeats: default_repeats(),
            master_seed,
            cap_train: None,
            cap_test: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub params: String,
    pub spec: ModelSpec,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub published: Option<f64>,
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub master_seed: u64,
    pub repeats: usize,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub cap_train: Option<usize>,
    pub cap_test: Option<usize>,
    pub crate_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub fingerprint: Fingerprint,
    pub rows: Vec<BenchRow>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Keeps at most `cap` of `indices`, preserving class proportions by
/// largest remainder (ties to the smaller class) and taking the earliest
/// indices of each class.
pub fn cap_indices(indices: &[usize], labels: &[u8], cap: usize) -> Result<Vec<usize>, BenchError> {
    if indices.len() <= cap {
        return Ok(indices.to_vec());
    }
    let k = indices.iter().map(|&i| labels[i] as usize + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in indices {
        by_class[labels[i] as usize].push(i);
    }
    let present = by_class.iter().filter(|c| !c.is_empty()).count();
    if cap < present {
        return Err(BenchError::CapTooSmall { cap, classes: present });
    }
    let total = indices.len() as f64;
    let quotas: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * cap as f64 / total).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - take[a] as f64, quotas[b] - take[b] as f64);
        if (fa - fb).abs() <= 1e-9 {
            a.cmp(&b)
        } else {
            fb.total_cmp(&fa)
        }
    });
    let missing = cap - take.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        take[c] += 1;
    }
    let mut out: Vec<usize> = by_class.iter().zip(&take).flat_map(|(c, &t)| c[..t].iter().copied()).collect();
    out.sort_unstable();
    Ok(out)
}

pub fn run_benchmark(cfg: &BenchConfig, data: &LabeledDataset, split: &SplitIndices) -> Result<BenchResult, BenchError> {
    run_benchmark_with(cfg, data, split, |_, _, _| {})
}

/// Like [`run_benchmark`], calling `progress(row, repeat, accuracy)` after
/// every fit.
pub fn run_benchmark_with(
    cfg: &BenchConfig,
    data: &LabeledDataset,
    split: &SplitIndices,
    mut progress: impl FnMut(&BenchEntry, usize, f64),
) -> Result<BenchResult, BenchError> {
    if cfg.repeats == 0 {
        return Err(BenchError::NoRepeats);
    }
    for &index in split.train.iter().chain(&split.test) {
        if index >= data.len() {
            return Err(BenchError::BadSplit { index, len: data.len() });
        }
    }
    let train = match cfg.cap_train {
        Some(c) => cap_indices(&split.train, &data.labels, c)?,
        None => split.train.clone(),
    };
    let test = match cfg.cap_test {
        Some(c) => cap_indices(&split.test, &data.labels, c)?,
        None => split.test.clone(),
    };
    let x_test = data.features(&test);
    let y_test = data.labels_at(&test);

    let seeds: Vec<u64> = (0..cfg.repeats).map(|r| seed::derive_seed(cfg.master_seed, r as u64)).collect();
    let shuffled: Vec<Vec<usize>> = seeds
        .iter()
        .map(|&s| {
            let mut order = train.clone();
            order.shuffle(&mut seed::rng(s));
            order
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.entries.len());
    for entry in &cfg.entries {
        let mut accuracies = Vec::with_capacity(cfg.repeats);
        for (r, (&s, order)) in seeds.iter().zip(&shuffled).enumerate() {
            let x = data.features(order);
            let y = data.labels_at(order);
            let model = classifiers::fit(&entry.spec.clone().with_seed(s), &x, &y)?;
            let pred = model.predict(&x_test)?;
            let acc = pred.iter().zip(&y_test).filter(|(p, t)| p == t).count() as f64 / y_test.len() as f64;
            progress(entry, r, acc);
            accuracies.push(acc);
        }
        let (mean, std) = mean_std(&accuracies);
        rows.push(BenchRow {
            name: entry.name.clone(),
            params: entry.params.clone(),
            spec: entry.spec.clone(),
            seeds: seeds.clone(),
            accuracies,
            mean,
            std,
            published: entry.published,
            floor: entry.floor,
        });
    }
    Ok(BenchResult {
        fingerprint: Fingerprint {
            master_seed: cfg.master_seed,
            repeats: cfg.repeats,
            split_seed: split.seed,
            n_train: train.len(),
            n_test: test.len(),
            cap_train: cfg.cap_train,
            cap_test: cfg.cap_test,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        rows,
    })
}

/// How `--check` judges a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Mean at or above the row's floor.
    Desk,
    /// Mean within `PUBLISHED_TOLERANCE` of the published value.
    Published,
}

pub const PUBLISHED_TOLERANCE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub params: String,
    pub mean: f64,
    pub target: String,
    pub pass: bool,
}

impl BenchResult {
    /// One line per row that has a target under `mode`.
    pub fn check(&self, mode: CheckMode) -> Vec<CheckLine> {
        self.rows
            .iter()
            .filter_map(|r| {
                let (target, pass) = match mode {
                    CheckMode::Desk => {
                        let f = r.floor?;
                        (format!(">= {f:.3}"), r.mean >= f)
                    }
                    CheckMode::Published => {
                        let p = r.published?;
                        (
                            format!("{p:.3} +/- {PUBLISHED_TOLERANCE:.2}"),
                            (r.mean - p).abs() <= PUBLISHED_TOLERANCE,
                        )
                    }
                };
                Some(CheckLine {
                    name: r.name.clone(),
                    params: r.params.clone(),
                    mean: r.mean,
                    target,
                    pass,
                })
            })
            .collect()
    }

    /// Aligned text table: classifier, parameters, mean, std, published.
    pub fn render(&self) -> String {
        let w_name = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(10);
        let w_par = self.rows.iter().map(|r| r.params.len()).max().unwrap_or(0).max(9);
        let mut s = format!(
            "{:<w_name$}  {:<w_par$}  {:>8}  {:>7}  {:>9}\n",
            "Classifier", "Parameter", "mean", "std", "published"
        );
        let mut last = "";
        for r in &self.rows {
            let name = if r.name == last { "" } else { r.name.as_str() };
            last = &r.name;
            let published = r.published.map_or("-".to_string(), |p| format!("{p:.3}"));
            s += &format!(
                "{:<w_name$}  {:<w_par$}  {:>8.3}  {:>7.4}  {:>9}\n",
                name, r.params, r.mean, r.std, published
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{stratified_split, DEFAULT_RATIOS};
    use crate::image::GrayImage;

    #[test]
    fn mean_std_by_hand() {
        // mean 0.9, deviations (-0.02, 0.01, 0.01): variance 0.0006 / 3
        let (m, s) = mean_std(&[0.88, 0.91, 0.91]);
        assert!((m - 0.9).abs() < 1e-12);
        assert!((s - (0.0002f64).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }

    #[test]
    fn cap_keeps_proportions() {
        let labels: Vec<u8> = (0..100).map(|i| if i < 70 { 0 } else { 1 }).collect();
        let idx: Vec<usize> = (0..100).collect();
        let capped = cap_indices(&idx, &labels, 10).unwrap();
        assert_eq!(capped, vec![0, 1, 2, 3, 4, 5, 6, 70, 71, 72]);
        assert_eq!(cap_indices(&idx, &labels, 200).unwrap(), idx);
        assert!(cap_indices(&idx, &labels, 1).is_err());
    }

    #[test]
    fn table_rows_are_unique_and_valid() {
        let rows = table1();
        assert_eq!(rows.len(), 31);
        for r in &rows {
            r.spec.validate().unwrap();
            assert!(r.published.is_some());
        }
        let mut keys: Vec<_> = rows.iter().map(|r| (r.name.clone(), r.params.clone())).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), rows.len());
        assert_eq!(desk_checks().len(), 4);
    }

    fn tiny_dataset() -> LabeledDataset {
        // two classes told apart by the left column's brightness
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40u8 {
            let c = i % 2;
            let mut img = GrayImage::filled(4, 4, 255);
            for y in 0..4 {
                img.set(0, y, if c == 0 { 10 + i } else { 200 + i / 4 });
            }
            images.push(img);
            labels.push(c);
        }
        LabeledDataset::new(images, labels).unwrap()
    }

    #[test]
    fn knn_repeats_agree_and_tree_repeats_are_recorded() {
        let data = tiny_dataset();
        let split = stratified_split(&data.labels, DEFAULT_RATIOS, 3).unwrap();
        let mut cfg = BenchConfig::new(
            vec![
                BenchEntry::new("KNeighbors", "k=3", ModelSpec::knn(3, Weights::Uniform, 1)),
                BenchEntry::new("DecisionTree", "d=3", ModelSpec::decision_tree(Criterion::Gini, 3, Splitter::Random)),
            ],
            9,
        );
        cfg.repeats = 3;
        let res = run_benchmark(&cfg, &data, &split).unwrap();
        assert_eq!(res.rows[0].accuracies.len(), 3);
        assert_eq!(res.rows[0].std, 0.0);
        assert_eq!(res.rows[0].mean, 1.0);
        let (m, s) = mean_std(&res.rows[1].accuracies);
        assert_eq!((m, s), (res.rows[1].mean, res.rows[1].std));
        assert_eq!(res.rows[1].seeds, (0..3).map(|r| seed::derive_seed(9, r)).collect::<Vec<_>>());
        assert!(res.render().contains("KNeighbors"));
        let again = run_benchmark(&cfg, &data, &split).unwrap();
        assert_eq!(serde_json::to_string(&res).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn check_modes() {
        let row = |mean: f64, floor: Option<f64>| BenchRow {
            name: "X".into(),
            params: "p".into(),
            spec: ModelSpec::gaussian_nb(),
            seeds: vec![0],
            accuracies: vec![mean],
            mean,
            std: 0.0,
            published: Some(0.9),
            floor,
        };
        let res = BenchResult {
            fingerprint: Fingerprint {
                master_seed: 0,
                repeats: 1,
                split_seed: 0,
                n_train: 1,
                n_test: 1,
                cap_train: None,
                cap_test: None,
                crate_version: String::new(),
            },
            rows: vec![row(0.86, Some(0.85)), row(0.84, Some(0.85)), row(0.92, None)],
        };
        let desk: Vec<bool> = res.check(CheckMode::Desk).iter().map(|c| c.pass).collect();
        assert_eq!(desk, vec![true, false]);
        let full: Vec<bool> = res.check(CheckMode::Published).iter().map(|c| c.pass).collect();
        assert_eq!(full, vec![false, false, true]);
    }
}
