use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{fit_tree, ClassLeaf, Criterion, ForestParams, RegLeaf, Tree};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::rng::child_rng;

const FORMAT: &str = "survsel-forest";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<L> {
    trees: Vec<Tree<L>>,
    n_features: usize,
}

/// Fits `params.n_trees` trees. Tree `t` draws from its own RNG stream
/// derived from `(params.seed, t)`, so the forest does not depend on how
/// trees are scheduled across threads. When `sample_weights` is given and
/// `params.bootstrap` is set, bootstrap draws are proportional to the weights.
pub fn fit_forest<C: Criterion>(
    x: &[Vec<f64>],
    criterion: &C,
    sample_weights: Option<&[f64]>,
    params: &ForestParams,
) -> Result<Forest<C::Leaf>> {
    params.validate()?;
    let n = x.len();
    if n == 0 {
        return invalid("cannot fit a forest on an empty dataset");
    }
    if criterion.n_samples() != n {
        return invalid(format!("{} targets for {n} feature rows", criterion.n_samples()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return invalid("feature rows differ in dimension");
    }
    let sampler = match sample_weights {
        Some(w) if params.bootstrap => {
            if w.len() != n {
                return invalid("one weight per sample required");
            }
            Some(WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(format!("bad sample weights: {e}")))?)
        }
        _ => None,
    };

    let trees = exec::map_range(params.n_trees, |t| {
        let mut rng = child_rng(params.seed, t as u64);
        let samples: Vec<usize> = if !params.bootstrap {
            (0..n).collect()
        } else if let Some(s) = &sampler {
            (0..n).map(|_| s.sample(&mut rng)).collect()
        } else {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        };
        fit_tree(x, samples, criterion, params, &mut rng)
    });
    Ok(Forest {
        trees: trees.into_iter().collect::<Result<_>>()?,
        n_features: d,
    })
}

impl<L> Forest<L> {
    pub fn trees(&self) -> &[Tree<L>] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return invalid(format!("feature vector has dimension {}, forest expects {}", x.len(), self.n_features));
        }
        Ok(())
    }

    /// The leaf `x` reaches in every tree, in tree order.
    pub fn leaves_for(&self, x: &[f64]) -> Result<Vec<&L>> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| &t.leaves()[t.route_unchecked(x)]).collect())
    }
}

impl Forest<RegLeaf> {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_mean_var(x)?.0)
    }

    /// Mean and (population) variance of the per-tree predictions.
    pub fn predict_mean_var(&self, x: &[f64]) -> Result<(f64, f64)> {
        let preds: Vec<f64> = self.leaves_for(x)?.iter().map(|l| l.mean).collect();
        let n = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / n;
        let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        Ok((mean, var))
    }
}

impl Forest<ClassLeaf> {
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let leaves = self.leaves_for(x)?;
        let k = leaves[0].probs.len();
        let mut probs = vec![0.0; k];
        for l in &leaves {
            for (p, q) in probs.iter_mut().zip(&l.probs) {
                *p += q;
            }
        }
        let n = leaves.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        Ok(probs)
    }

    /// Most probable class, lowest index on ties.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let probs = self.predict_proba(x)?;
        Ok(crate::argmin_by(&probs, |p| -p))
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    forest: T,
}

/// Writes a forest as versioned JSON.
pub fn save_forest<L: Serialize>(forest: &Forest<L>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let env = Envelope {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        forest,
    };
    let text = serde_json::to_string(&env)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_forest<L: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Forest<L>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<Forest<L>> = serde_json::from_str(&text)?;
    if env.format != FORMAT || env.version != FORMAT_VERSION {
        return Err(Error::format(
            path.display().to_string(),
            format!("unsupported model file {} v{}", env.format, env.version),
        ));
    }
    Ok(env.forest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Gini, LogRank, Variance};
    use crate::rng::rng_from;
    use crate::survival::StepFunction;
    use rand::Rng;

    fn noisy_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = rng_from(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y = x.iter().map(|r| 3.0 * r[0] + r[1] * r[1] + 0.1 * rng.random::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn constant_labels_predict_constant() {
        let (x, _) = noisy_data(50, 1);
        let y = vec![4.25; 50];
        let f = fit_forest(&x, &Variance::new(&y), None, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
        for r in &x {
            assert_eq!(f.predict(r).unwrap(), 4.25);
        }
        assert_eq!(f.predict(&[9.0, 9.0, 9.0]).unwrap(), 4.25);
        assert!(f.predict(&[1.0]).is_err());
    }

    #[test]
    fn ensemble_of_one_equals_tree() {
        let (x, y) = noisy_data(80, 2);
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            seed: 17,
            ..Default::default()
        };
        let f = fit_forest(&x, &Variance::new(&y), None, &params).unwrap();
        let tree = fit_tree(&x, (0..80).collect(), &Variance::new(&y), &params, &mut child_rng(17, 0)).unwrap();
        for r in &x {
            assert_eq!(f.predict(r).unwrap(), tree.leaf_for(r).unwrap().mean);
        }
    }

    #[test]
    fn separable_classes_fit_perfectly() {
        // 20 samples, class given by the sign of feature 0
        let mut rng = rng_from(4);
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { -1.0 - i as f64 } else { 1.0 + i as f64 }, rng.random::<f64>()]).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let f = fit_forest(&x, &Gini::new(&labels, 2), None, &ForestParams { n_trees: 25, ..Default::default() }).unwrap();
        let correct = x.iter().zip(&labels).filter(|(r, &l)| f.predict_class(r).unwrap() == l).count();
        assert_eq!(correct, 20);
    }

    #[test]
    fn reproducible_and_serializable() {
        let (x, y) = noisy_data(120, 3);
        let params = ForestParams { n_trees: 8, seed: 5, ..Default::default() };
        let a = fit_forest(&x, &Variance::new(&y), None, &params).unwrap();
        let b = fit_forest(&x, &Variance::new(&y), None, &params).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&x, &Variance::new(&y), None, &params.with_seed(6)).unwrap();
        assert_ne!(a, c);

        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("forest.json");
        save_forest(&a, &path).unwrap();
        assert_eq!(load_forest::<RegLeaf>(&path).unwrap(), a);

        let time: Vec<f64> = y.iter().map(|v| v + 0.5).collect();
        let event: Vec<bool> = (0..120).map(|i| i % 4 != 0).collect();
        let s = fit_forest(&x, &LogRank::new(&time, &event), None, &params).unwrap();
        save_forest(&s, &path).unwrap();
        assert_eq!(load_forest::<StepFunction>(&path).unwrap(), s);
    }

    #[test]
    fn weighted_bootstrap_ignores_zero_weight() {
        let (x, y) = noisy_data(40, 8);
        let w: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let f = fit_forest(&x, &Variance::weighted(&y, &w), Some(&w), &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        for t in f.trees() {
            for l in 0..t.n_leaves() {
                assert!(t.leaf_samples(l).iter().all(|&i| i < 20));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let y: Vec<f64> = vec![];
        assert!(fit_forest(&[], &Variance::new(&y), None, &ForestParams::default()).is_err());
        let x = vec![vec![1.0], vec![2.0]];
        assert!(fit_forest(&x, &Variance::new(&[1.0]), None, &ForestParams::default()).is_err());
    }
}
