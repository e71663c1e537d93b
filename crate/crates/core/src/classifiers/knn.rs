//! Brute-force k-nearest neighbours under the L1 or L2 metric.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Features;

use super::vote;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    Uniform,
    /// Votes weighted by `1 / distance`.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub weights: Weights,
    pub p: u8,
    pub n_classes: usize,
    train: Features,
    labels: Vec<u8>,
}

const LANES: usize = 16;
/// Queries scored together against each training row.
const TILE: usize = 8;

#[inline]
fn l1(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += (x[l] - y[l]).abs();
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        s += (x - y).abs();
    }
    s
}

/// Squared Euclidean distance; same ordering as the true distance.
#[inline]
fn l2_sq(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        s += (x - y) * (x - y);
    }
    s
}

/// The `k` smallest `(distance, index)` pairs seen so far, ascending.
struct TopK {
    k: usize,
    items: Vec<(f32, u32)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, d: f32, i: u32) {
        if self.items.len() == self.k {
            let worst = self.items[self.k - 1];
            if (d, i) >= worst {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&e| e < (d, i));
        self.items.insert(pos, (d, i));
    }
}

impl Knn {
    pub fn fit(x: &Features, y: &[u8], n_classes: usize, k: usize, weights: Weights, p: u8) -> Self {
        Knn {
            k,
            weights,
            p,
            n_classes,
            train: x.clone(),
            labels: y.to_vec(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.train.cols
    }

    fn distance(&self, a: &[f32], b: &[f32]) -> f32 {
        if self.p == 1 {
            l1(a, b)
        } else {
            l2_sq(a, b)
        }
    }

    /// Nearest neighbours of each query, ties broken toward the smaller
    /// training index. Distances are true distances (not squared).
    pub fn neighbours(&self, x: &Features) -> Vec<Vec<(f32, u32)>> {
        let k = self.k.min(self.train.rows);
        let tiles: Vec<Vec<Vec<(f32, u32)>>> = (0..x.rows)
            .collect::<Vec<_>>()
            .par_chunks(TILE)
            .map(|qs| {
                let mut tops: Vec<TopK> = qs.iter().map(|_| TopK::new(k)).collect();
                for i in 0..self.train.rows {
                    let r = self.train.row(i);
                    for (t, &q) in tops.iter_mut().zip(qs) {
                        t.push(self.distance(x.row(q), r), i as u32);
                    }
                }
                tops.into_iter()
                    .map(|t| {
                        let mut items = t.items;
                        if self.p == 2 {
                            items.iter_mut().for_each(|e| e.0 = e.0.sqrt());
                        }
                        items
                    })
                    .collect()
            })
            .collect();
        tiles.into_iter().flatten().collect()
    }

    fn decide(&self, nn: &[(f32, u32)]) -> u8 {
        match self.weights {
            Weights::Uniform => vote(nn.iter().map(|&(_, i)| self.labels[i as usize]), self.n_classes),
            Weights::Distance => {
                let exact: Vec<u8> = nn.iter().filter(|e| e.0 == 0.0).map(|&(_, i)| self.labels[i as usize]).collect();
                if !exact.is_empty() {
                    return vote(exact, self.n_classes);
                }
                let mut w = vec![0.0f64; self.n_classes];
                for &(d, i) in nn {
                    w[self.labels[i as usize] as usize] += 1.0 / d as f64;
                }
                super::argmax(&w)
            }
        }
    }

    pub fn predict(&self, x: &Features) -> Vec<u8> {
        self.neighbours(x).iter().map(|nn| self.decide(nn)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testdata::*;
    use super::*;

    #[test]
    fn one_neighbour_reproduces_training_labels() {
        let (x, y) = blobs(25, 4, 7, 0.9, 11);
        for p in [1, 2] {
            let m = Knn::fit(&x, &y, 4, 1, Weights::Uniform, p);
            assert_eq!(m.predict(&x), y);
        }
    }

    #[test]
    fn distances_match_naive_sums() {
        let (x, _) = blobs(3, 2, 37, 1.0, 12);
        let (a, b) = (x.row(0), x.row(1));
        let naive1: f64 = a.iter().zip(b).map(|(p, q)| (p - q).abs() as f64).sum();
        let naive2: f64 = a.iter().zip(b).map(|(p, q)| ((p - q) as f64).powi(2)).sum();
        assert!((l1(a, b) as f64 - naive1).abs() < 1e-4);
        assert!((l2_sq(a, b) as f64 - naive2).abs() < 1e-4);
    }

    #[test]
    fn ties_go_to_smaller_index() {
        // two training points at the same distance from the query
        let x = Features::new(2, 1, vec![0.0, 2.0]);
        let m = Knn::fit(&x, &[1, 0], 2, 1, Weights::Uniform, 1);
        assert_eq!(m.predict(&Features::new(1, 1, vec![1.0])), vec![1]);
        let m = Knn::fit(&x, &[0, 1], 2, 1, Weights::Uniform, 1);
        assert_eq!(m.predict(&Features::new(1, 1, vec![1.0])), vec![0]);
    }

    #[test]
    fn vote_ties_go_to_smaller_class() {
        let x = Features::new(2, 1, vec![0.0, 1.0]);
        let m = Knn::fit(&x, &[2, 1], 3, 2, Weights::Uniform, 2);
        assert_eq!(m.predict(&Features::new(1, 1, vec![0.1])), vec![1]);
    }

    #[test]
    fn distance_weighting_prefers_close_points() {
        // one close class-1 point against two far class-0 points
        let x = Features::new(3, 1, vec![0.0, 3.0, 3.1]);
        let y = [1, 0, 0];
        let q = Features::new(1, 1, vec![0.5]);
        assert_eq!(Knn::fit(&x, &y, 2, 3, Weights::Uniform, 1).predict(&q), vec![0]);
        assert_eq!(Knn::fit(&x, &y, 2, 3, Weights::Distance, 1).predict(&q), vec![1]);
        // an exact hit wins outright
        let q = Features::new(1, 1, vec![3.0]);
        assert_eq!(Knn::fit(&x, &[0, 1, 0], 2, 3, Weights::Distance, 1).predict(&q), vec![1]);
    }

    #[test]
    fn neighbours_are_sorted_and_euclidean() {
        let x = Features::new(3, 2, vec![0.0, 0.0, 3.0, 4.0, 1.0, 0.0]);
        let m = Knn::fit(&x, &[0, 1, 0], 2, 3, Weights::Uniform, 2);
        let nn = m.neighbours(&Features::new(1, 2, vec![0.0, 0.0]));
        assert_eq!(nn[0], vec![(0.0, 0), (1.0, 2), (5.0, 1)]);
    }
}
