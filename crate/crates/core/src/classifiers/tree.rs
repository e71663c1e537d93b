//! CART decision trees and random forests.
//!
//! Features are rank-coded once per fit (each distinct value of a column gets
//! its rank), so split search never compares floats. Large nodes count
//! classes per rank in a histogram; small nodes sort their ranks instead.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::seed::{self, Rng};

use super::vote;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitter {
    /// Best threshold for every candidate feature.
    Best,
    /// One uniformly drawn threshold per candidate feature.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: u8,
        counts: Vec<u32>,
    },
    Split {
        feature: u32,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f32,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub n_features: usize,
}

/// Column-major rank codes plus the sorted distinct values of each column.
struct Binned {
    n: usize,
    codes: Vec<u32>,
    values: Vec<Vec<f32>>,
}

impl Binned {
    fn new(x: &Features) -> Self {
        let (n, d) = (x.rows, x.cols);
        let columns: Vec<(Vec<u32>, Vec<f32>)> = (0..d)
            .into_par_iter()
            .map(|f| {
                let col: Vec<f32> = (0..n).map(|i| x.data[i * d + f]).collect();
                let mut uniq = col.clone();
                uniq.sort_by(f32::total_cmp);
                uniq.dedup();
                let codes = col
                    .iter()
                    .map(|v| uniq.binary_search_by(|u| u.total_cmp(v)).expect("value present") as u32)
                    .collect();
                (codes, uniq)
            })
            .collect();
        let mut codes = Vec::with_capacity(n * d);
        let mut values = Vec::with_capacity(d);
        for (c, v) in columns {
            codes.extend(c);
            values.push(v);
        }
        Binned { n, codes, values }
    }

    #[inline]
    fn column(&self, f: usize) -> &[u32] {
        &self.codes[f * self.n..(f + 1) * self.n]
    }
}

/// `x ln x` for integer counts, with `0 ln 0 = 0`.
fn xlogx_table(n: usize) -> Vec<f64> {
    (0..=n).map(|i| if i == 0 { 0.0 } else { i as f64 * (i as f64).ln() }).collect()
}

/// Running impurity of a left/right partition, scaled by sample count.
///
/// Entropy: `n ln n - sum c ln c` per side. Gini: `n - sum c^2 / n` per side.
struct Sweep<'a> {
    criterion: Criterion,
    xlogx: &'a [f64],
    left: Vec<u32>,
    right: Vec<u32>,
    n_left: u32,
    n_right: u32,
    acc_left: f64,
    acc_right: f64,
}

impl<'a> Sweep<'a> {
    fn new(criterion: Criterion, xlogx: &'a [f64], totals: &[u32]) -> Self {
        let mut s = Sweep {
            criterion,
            xlogx,
            left: vec![0; totals.len()],
            right: totals.to_vec(),
            n_left: 0,
            n_right: totals.iter().sum(),
            acc_left: 0.0,
            acc_right: 0.0,
        };
        s.acc_right = totals.iter().map(|&c| s.term(c)).sum();
        s
    }

    #[inline]
    fn term(&self, c: u32) -> f64 {
        match self.criterion {
            Criterion::Entropy => self.xlogx[c as usize],
            Criterion::Gini => (c as f64) * (c as f64),
        }
    }

    #[inline]
    fn move_left(&mut self, class: usize, m: u32) {
        let (l, r) = (self.left[class], self.right[class]);
        self.acc_left += self.term(l + m) - self.term(l);
        self.acc_right += self.term(r - m) - self.term(r);
        self.left[class] = l + m;
        self.right[class] = r - m;
        self.n_left += m;
        self.n_right -= m;
    }

    fn side(&self, n: u32, acc: f64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self.criterion {
            Criterion::Entropy => self.xlogx[n as usize] - acc,
            Criterion::Gini => n as f64 - acc / n as f64,
        }
    }

    fn impurity(&self) -> f64 {
        self.side(self.n_left, self.acc_left) + self.side(self.n_right, self.acc_right)
    }
}

/// Weighted impurity of a node with class `counts`, scaled by its size.
fn node_impurity(criterion: Criterion, xlogx: &[f64], counts: &[u32]) -> f64 {
    Sweep::new(criterion, xlogx, counts).impurity()
}

struct Candidate {
    impurity: f64,
    feature: usize,
    /// Codes `<= split_code` go left.
    split_code: u32,
    threshold: f32,
}

struct Builder<'a> {
    binned: &'a Binned,
    y: &'a [u8],
    k: usize,
    criterion: Criterion,
    splitter: Splitter,
    max_depth: usize,
    max_features: usize,
    xlogx: Vec<f64>,
    rng: Rng,
    nodes: Vec<Node>,
    hist: Vec<u32>,
    pairs: Vec<(u32, u8)>,
}

fn threshold_between(lo: f32, hi: f32) -> f32 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

impl<'a> Builder<'a> {
    fn counts(&self, samples: &[u32]) -> Vec<u32> {
        let mut c = vec![0u32; self.k];
        for &s in samples {
            c[self.y[s as usize] as usize] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: Vec<u32>) -> u32 {
        let class = vote_counts(&counts);
        self.nodes.push(Node::Leaf { class, counts });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, samples: Vec<u32>, depth: usize) -> u32 {
        let counts = self.counts(&samples);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || samples.len() < 2 {
            return self.leaf(counts);
        }
        let parent = node_impurity(self.criterion, &self.xlogx, &counts);
        let Some(best) = self.find_split(&samples, &counts) else {
            return self.leaf(counts);
        };
        if best.impurity >= parent - 1e-9 * parent.abs().max(1.0) {
            return self.leaf(counts);
        }
        let column = self.binned.column(best.feature);
        let (left, right): (Vec<u32>, Vec<u32>) =
            samples.into_iter().partition(|&s| column[s as usize] <= best.split_code);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: 0,
            counts: Vec::new(),
        });
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id as u32
    }

    /// Visits features in a random order until `max_features` non-constant
    /// ones have been evaluated; keeps the first strictly best candidate.
    fn find_split(&mut self, samples: &[u32], counts: &[u32]) -> Option<Candidate> {
        let d = self.binned.values.len();
        let mut order: Vec<usize> = (0..d).collect();
        if self.max_features < d {
            order.shuffle(&mut self.rng);
        }
        let mut best: Option<Candidate> = None;
        let mut evaluated = 0;
        for f in order {
            if evaluated >= self.max_features {
                break;
            }
            if self.binned.values[f].len() < 2 {
                continue;
            }
            let column = self.binned.column(f);
            let (mut lo, mut hi) = (u32::MAX, 0);
            for &s in samples {
                let c = column[s as usize];
                lo = lo.min(c);
                hi = hi.max(c);
            }
            if lo == hi {
                continue;
            }
            evaluated += 1;
            let cand = match self.splitter {
                Splitter::Best => self.best_threshold(f, samples, counts),
                Splitter::Random => self.random_threshold(f, samples, counts, lo, hi),
            };
            if let Some(c) = cand {
                if best.as_ref().map_or(true, |b| c.impurity < b.impurity - 1e-12) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_threshold(&mut self, f: usize, samples: &[u32], counts: &[u32]) -> Option<Candidate> {
        let column = self.binned.column(f);
        let values = &self.binned.values[f];
        let nbins = values.len();
        let k = self.k;
        let mut sweep = Sweep::new(self.criterion, &self.xlogx, counts);
        let mut best: Option<(f64, u32, u32)> = None;
        let mut consider = |sweep: &Sweep, code: u32, next: u32| {
            if sweep.n_right == 0 {
                return;
            }
            let imp = sweep.impurity();
            if best.map_or(true, |(b, _, _)| imp < b - 1e-12) {
                best = Some((imp, code, next));
            }
        };
        if samples.len() * 4 >= nbins {
            self.hist.clear();
            self.hist.resize(nbins * k, 0);
            for &s in samples {
                self.hist[column[s as usize] as usize * k + self.y[s as usize] as usize] += 1;
            }
            let mut prev: Option<u32> = None;
            for code in 0..nbins {
                let row = &self.hist[code * k..(code + 1) * k];
                if row.iter().all(|&c| c == 0) {
                    continue;
                }
                if let Some(p) = prev {
                    consider(&sweep, p, code as u32);
                }
                for (class, &m) in row.iter().enumerate() {
                    if m > 0 {
                        sweep.move_left(class, m);
                    }
                }
                prev = Some(code as u32);
            }
        } else {
            self.pairs.clear();
            self.pairs
                .extend(samples.iter().map(|&s| (column[s as usize], self.y[s as usize])));
            self.pairs.sort_unstable();
            let mut i = 0;
            while i < self.pairs.len() {
                let code = self.pairs[i].0;
                if i > 0 {
                    consider(&sweep, self.pairs[i - 1].0, code);
                }
                while i < self.pairs.len() && self.pairs[i].0 == code {
                    sweep.move_left(self.pairs[i].1 as usize, 1);
                    i += 1;
                }
            }
        }
        best.map(|(impurity, code, next)| Candidate {
            impurity,
            feature: f,
            split_code: code,
            threshold: threshold_between(values[code as usize], values[next as usize]),
        })
    }

    fn random_threshold(&mut self, f: usize, samples: &[u32], counts: &[u32], lo: u32, hi: u32) -> Option<Candidate> {
        let values = &self.binned.values[f];
        let (vmin, vmax) = (values[lo as usize], values[hi as usize]);
        let mut t = self.rng.gen_range(vmin..vmax);
        if t < vmin {
            t = vmin;
        }
        // last code with value <= t
        let split_code = match values.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i as u32,
            Err(i) => i as u32 - 1,
        };
        let column = self.binned.column(f);
        let mut sweep = Sweep::new(self.criterion, &self.xlogx, counts);
        for &s in samples {
            if column[s as usize] <= split_code {
                sweep.move_left(self.y[s as usize] as usize, 1);
            }
        }
        if sweep.n_left == 0 || sweep.n_right == 0 {
            return None;
        }
        Some(Candidate {
            impurity: sweep.impurity(),
            feature: f,
            split_code,
            threshold: t.max(values[split_code as usize]),
        })
    }
}

fn vote_counts(counts: &[u32]) -> u8 {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as u8
}

fn grow(
    binned: &Binned,
    y: &[u8],
    k: usize,
    criterion: Criterion,
    max_depth: usize,
    splitter: Splitter,
    max_features: usize,
    samples: Vec<u32>,
    rng: Rng,
) -> DecisionTree {
    let mut b = Builder {
        binned,
        y,
        k,
        criterion,
        splitter,
        max_depth,
        max_features,
        xlogx: xlogx_table(samples.len()),
        rng,
        nodes: Vec::new(),
        hist: Vec::new(),
        pairs: Vec::new(),
    };
    b.build(samples, 0);
    DecisionTree {
        nodes: b.nodes,
        n_classes: k,
        n_features: binned.values.len(),
    }
}

impl DecisionTree {
    pub fn fit(
        x: &Features,
        y: &[u8],
        k: usize,
        criterion: Criterion,
        max_depth: usize,
        splitter: Splitter,
        seed: u64,
    ) -> Self {
        let binned = Binned::new(x);
        let samples = (0..x.rows as u32).collect();
        grow(&binned, y, k, criterion, max_depth, splitter, x.cols, samples, seed::rng(seed))
    }

    fn leaf_for(&self, row: &[f32]) -> &Node {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict_row(&self, row: &[f32]) -> u8 {
        match self.leaf_for(row) {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts, .. } => Some(counts.as_slice()),
            _ => None,
        })
    }
}

/// Bagged trees with `sqrt(D)` candidate features per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl RandomForest {
    pub fn fit(
        x: &Features,
        y: &[u8],
        k: usize,
        criterion: Criterion,
        max_depth: usize,
        n_trees: usize,
        seed: u64,
    ) -> Self {
        let binned = Binned::new(x);
        let n = x.rows;
        let max_features = ((x.cols as f64).sqrt().floor() as usize).max(1);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::child_rng(seed, t as u64);
                let samples: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
                grow(&binned, y, k, criterion, max_depth, Splitter::Best, max_features, samples, rng)
            })
            .collect();
        RandomForest {
            trees,
            n_classes: k,
            n_features: x.cols,
        }
    }

    pub fn predict_row(&self, row: &[f32]) -> u8 {
        vote(self.trees.iter().map(|t| t.predict_row(row)), self.n_classes)
    }

    /// Fraction of trees voting for each class.
    pub fn proba_row(&self, row: &[f32]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            p[t.predict_row(row) as usize] += 1.0;
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::super::testdata::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_threshold_dataset_needs_one_split() {
        // pixel 2 separates the classes; the others are noise
        let rows = [
            [0.3, 0.9, 0.1, 0.5],
            [0.7, 0.2, 0.2, 0.1],
            [0.1, 0.4, 0.3, 0.9],
            [0.9, 0.6, 0.8, 0.4],
            [0.5, 0.1, 0.9, 0.7],
            [0.2, 0.8, 0.7, 0.3],
        ];
        let y = [0, 0, 0, 1, 1, 1];
        let x = Features::new(6, 4, rows.iter().flatten().copied().collect());
        for criterion in [Criterion::Gini, Criterion::Entropy] {
            let t = DecisionTree::fit(&x, &y, 2, criterion, 1, Splitter::Best, 0);
            assert_eq!(t.depth(), 1);
            let pred: Vec<u8> = (0..6).map(|i| t.predict_row(x.row(i))).collect();
            assert_eq!(pred, y);
            match &t.nodes[0] {
                Node::Split { feature, threshold, .. } => {
                    assert_eq!(*feature, 2);
                    assert!((threshold - 0.5).abs() < 1e-6);
                }
                _ => panic!("root should split"),
            }
        }
    }

    #[test]
    fn identical_trees_vote_like_one_tree() {
        let (x, y) = blobs(20, 3, 5, 0.4, 2);
        let tree = DecisionTree::fit(&x, &y, 3, Criterion::Gini, 4, Splitter::Best, 0);
        let forest = RandomForest {
            trees: vec![tree.clone(); 5],
            n_classes: 3,
            n_features: 5,
        };
        let (probe, _) = blobs(15, 3, 5, 0.9, 3);
        for i in 0..probe.rows {
            assert_eq!(forest.predict_row(probe.row(i)), tree.predict_row(probe.row(i)));
        }
    }

    #[test]
    fn impurity_matches_direct_formulas() {
        let xl = xlogx_table(20);
        let counts = [3u32, 5, 2];
        let n = 10.0f64;
        let gini = n * (1.0 - [0.3f64, 0.5, 0.2].iter().map(|p| p * p).sum::<f64>());
        let ent = -n * [0.3f64, 0.5, 0.2].iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((node_impurity(Criterion::Gini, &xl, &counts) - gini).abs() < 1e-12);
        assert!((node_impurity(Criterion::Entropy, &xl, &counts) - ent).abs() < 1e-12);
    }

    #[test]
    fn random_splitter_still_fits_training_data() {
        let (x, y) = blobs(30, 3, 6, 0.2, 9);
        let t = DecisionTree::fit(&x, &y, 3, Criterion::Entropy, 30, Splitter::Random, 4);
        let pred: Vec<u8> = (0..x.rows).map(|i| t.predict_row(x.row(i))).collect();
        assert_eq!(accuracy(&pred, &y), 1.0);
    }

    proptest! {
        #[test]
        fn depth_is_capped_and_leaves_are_nonempty(seed in any::<u64>(), depth in 1usize..6, random in any::<bool>()) {
            let (x, y) = blobs(15, 3, 4, 0.6, seed);
            let splitter = if random { Splitter::Random } else { Splitter::Best };
            let t = DecisionTree::fit(&x, &y, 3, Criterion::Gini, depth, splitter, seed);
            prop_assert!(t.depth() <= depth);
            for counts in t.leaves() {
                prop_assert!(counts.iter().sum::<u32>() >= 1);
            }
        }
    }
}
