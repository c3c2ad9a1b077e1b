use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Criterion, ForestParams};
use crate::error::{invalid, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `x[feature] ≤ threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    nodes: Vec<Node>,
    leaves: Vec<L>,
    /// Training sample ids (with bootstrap multiplicity) per leaf.
    leaf_samples: Vec<Vec<usize>>,
    n_features: usize,
}

impl<L> Tree<L> {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[L] {
        &self.leaves
    }

    pub fn leaf_samples(&self, leaf: usize) -> &[usize] {
        &self.leaf_samples[leaf]
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Index of the leaf that `x` falls into. `x` must be complete (no
    /// missing values) and of the training dimension.
    pub fn route(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return invalid(format!("feature vector has dimension {}, tree expects {}", x.len(), self.n_features));
        }
        Ok(self.route_unchecked(x))
    }

    pub(crate) fn route_unchecked(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(l) => return l,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaf_for(&self, x: &[f64]) -> Result<&L> {
        Ok(&self.leaves[self.route(x)?])
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Best split of a node across the sampled features, or `None` when no
/// admissible split improves the criterion.
fn find_split<C: Criterion>(
    x: &[Vec<f64>],
    samples: &[usize],
    criterion: &C,
    params: &ForestParams,
    mtry: usize,
    rng: &mut Rng,
) -> Option<(usize, f64)> {
    let d = x[samples[0]].len();
    let mut features: Vec<usize> = (0..d).collect();
    features.shuffle(rng);

    let mut best: Option<(f64, usize, f64)> = None;
    let mut examined = 0;
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
    for f in features {
        if examined == mtry {
            break;
        }
        pairs.clear();
        pairs.extend(samples.iter().map(|&i| (x[i][f], i)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            // constant in this node; does not count towards mtry
            continue;
        }
        examined += 1;
        let ids: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        if let Some((pos, gain)) = criterion.best_split(&ids, &vals, params) {
            let thr = midpoint(vals[pos - 1], vals[pos]);
            let better = match best {
                None => true,
                Some((g, bf, bt)) => gain > g || (gain == g && (f < bf || (f == bf && thr < bt))),
            };
            if better {
                best = Some((gain, f, thr));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Grows one tree on `samples` (ids into `x`, duplicates allowed).
pub fn fit_tree<C: Criterion>(
    x: &[Vec<f64>],
    samples: Vec<usize>,
    criterion: &C,
    params: &ForestParams,
    rng: &mut Rng,
) -> Result<Tree<C::Leaf>> {
    if samples.is_empty() {
        return invalid("cannot fit a tree on zero samples");
    }
    let n_features = x[samples[0]].len();
    let mtry = params.max_features.resolve(n_features);

    let mut nodes = vec![Node::Leaf(usize::MAX)];
    let mut leaves = Vec::new();
    let mut leaf_samples = Vec::new();
    let mut stack = vec![(0usize, samples, 0usize)];
    while let Some((node, samples, depth)) = stack.pop() {
        let depth_ok = params.max_depth.is_none_or(|m| depth < m);
        let split = if depth_ok && n_features > 0 && criterion.splittable(&samples, params) {
            find_split(x, &samples, criterion, params, mtry, rng)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| x[i][feature] <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf(usize::MAX));
                let right = nodes.len();
                nodes.push(Node::Leaf(usize::MAX));
                nodes[node] = Node::Split { feature, threshold, left, right };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
            None => {
                nodes[node] = Node::Leaf(leaves.len());
                leaves.push(criterion.leaf(&samples));
                leaf_samples.push(samples);
            }
        }
    }
    Ok(Tree {
        nodes,
        leaves,
        leaf_samples,
        n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{LogRank, MaxFeatures, Variance};
    use crate::rng::rng_from;

    fn rows(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&a| vec![a]).collect()
    }

    #[test]
    fn identical_labels_single_leaf() {
        let x = rows(&[1.0, 2.0, 3.0, 4.0]);
        let y = [2.0; 4];
        let t = fit_tree(&x, vec![0, 1, 2, 3], &Variance::new(&y), &ForestParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.leaves()[0].mean, 2.0);
    }

    #[test]
    fn root_threshold_in_gap() {
        let x = rows(&[0.0, 1.0, 10.0, 11.0]);
        let y = [0.0, 0.0, 5.0, 5.0];
        let t = fit_tree(&x, vec![0, 1, 2, 3], &Variance::new(&y), &ForestParams::default(), &mut rng_from(0)).unwrap();
        match t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!(threshold > 1.0 && threshold < 10.0);
                assert_eq!(threshold, 5.5);
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn all_censored_single_leaf() {
        let x = rows(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let time = [10.0; 8];
        let event = [false; 8];
        let t = fit_tree(&x, (0..8).collect(), &LogRank::new(&time, &event), &ForestParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert!(t.leaves()[0].is_empty());
    }

    #[test]
    fn routing_convention() {
        let x = rows(&[0.0, 10.0]);
        let y = [0.0, 1.0];
        let t = fit_tree(&x, vec![0, 1], &Variance::new(&y), &ForestParams::default(), &mut rng_from(0)).unwrap();
        let Node::Split { threshold, left, right, .. } = t.nodes()[0] else { panic!() };
        assert_eq!(threshold, 5.0);
        let Node::Leaf(l) = t.nodes()[left] else { panic!() };
        let Node::Leaf(r) = t.nodes()[right] else { panic!() };
        assert_eq!(t.route(&[5.0]).unwrap(), l);
        assert_eq!(t.route(&[5.0001]).unwrap(), r);
        assert!(t.route(&[1.0, 2.0]).is_err());

        let single = fit_tree(&x, vec![0, 1], &Variance::new(&[1.0, 1.0]), &ForestParams::default(), &mut rng_from(0)).unwrap();
        assert_eq!(single.route(&[-1e9]).unwrap(), 0);
        assert_eq!(single.route(&[1e9]).unwrap(), 0);
    }

    #[test]
    fn every_sample_in_exactly_one_leaf() {
        let mut rng = rng_from(9);
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i * 37 % 101) as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = (0..200).map(|i| (i % 13) as f64).collect();
        let samples: Vec<usize> = (0..200).chain(0..50).collect();
        let params = ForestParams { max_features: MaxFeatures::All, ..Default::default() };
        let t = fit_tree(&x, samples.clone(), &Variance::new(&y), &params, &mut rng).unwrap();
        let mut seen = vec![0usize; 200];
        for l in 0..t.n_leaves() {
            for &i in t.leaf_samples(l) {
                seen[i] += 1;
                assert_eq!(t.route(&x[i]).unwrap(), l);
            }
        }
        let expect: Vec<usize> = (0..200).map(|i| 1 + usize::from(i < 50)).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn survival_leaves_respect_d0() {
        let mut rng = rng_from(3);
        let n = 300;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 13) % 17) as f64]).collect();
        let time: Vec<f64> = (0..n).map(|i| 1.0 + (i % 50) as f64).collect();
        let event: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let params = ForestParams { min_uncensored_leaf: 5, ..Default::default() };
        let t = fit_tree(&x, (0..n).collect(), &LogRank::new(&time, &event), &params, &mut rng).unwrap();
        assert!(t.n_leaves() > 1);
        for l in 0..t.n_leaves() {
            assert!(t.leaf_samples(l).iter().filter(|&&i| event[i]).count() >= 5);
        }
    }

    #[test]
    fn max_depth_zero_is_stump() {
        let x = rows(&[0.0, 10.0]);
        let params = ForestParams { max_depth: Some(0), ..Default::default() };
        let t = fit_tree(&x, vec![0, 1], &Variance::new(&[0.0, 1.0]), &params, &mut rng_from(0)).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.depth(), 0);
    }
}
