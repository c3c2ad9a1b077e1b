//! Baseline selectors that learn from imputed runtime labels, plus the
//! single best solver.

use log::warn;

use crate::censoring::ImputationStrategy;
use crate::error::Result;
use crate::exec;
use crate::features::FeatureImputer;
use crate::forest::{fit_forest, ClassLeaf, Forest, ForestParams, Gini, RegLeaf, Variance};
use crate::rng::derive_seed;
use crate::scenario::View;

use super::gmeans::{gmeans, nearest};
use super::{label_matrix, LabelMatrix, Selector};

/// Per-feature affine map `x' = (x − shift) / scale`.
#[derive(Debug, Clone)]
struct Scaler {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaler {
    fn z_score(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let d = x[0].len();
        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            shift[j] = mean;
            if sd > 0.0 {
                scale[j] = sd;
            }
        }
        Scaler { shift, scale }
    }

    /// Maps the training range of every feature onto [−1, 1].
    fn min_max(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let lo = x.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = x.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            shift[j] = 0.5 * (lo + hi);
            if hi > lo {
                scale[j] = 0.5 * (hi - lo);
            }
        }
        Scaler { shift, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).zip(&self.scale).map(|((v, s), c)| (v - s) / c).collect()
    }
}

/// Mean of the finite entries, or `fallback` when there are none.
fn finite_mean(values: impl Iterator<Item = f64>, fallback: f64) -> f64 {
    let (sum, n) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        fallback
    } else {
        sum / n as f64
    }
}

/// Mean imputed label per algorithm over the given rows.
fn mean_labels(labels: &[Vec<f64>], rows: impl Iterator<Item = usize> + Clone, fallback: f64) -> Vec<f64> {
    let m = labels.first().map_or(0, Vec::len);
    (0..m).map(|a| finite_mean(rows.clone().map(|k| labels[k][a]), fallback)).collect()
}

/// One regression forest per algorithm predicting its imputed runtime.
pub struct PerAlgorithmRegressor {
    imputer: FeatureImputer,
    models: Vec<Option<Forest<RegLeaf>>>,
    fallback: f64,
}

impl PerAlgorithmRegressor {
    pub fn fit(view: View<'_>, strategy: ImputationStrategy, forest: &ForestParams) -> Result<Self> {
        let LabelMatrix { imputer, x, labels } = label_matrix(view, strategy, forest)?;
        let models = exec::map_range(view.n_algorithms(), |a| -> Result<Option<Forest<RegLeaf>>> {
            let rows: Vec<usize> = (0..x.len()).filter(|&k| labels[k][a].is_finite()).collect();
            if rows.is_empty() {
                return Ok(None);
            }
            let xa: Vec<Vec<f64>> = rows.iter().map(|&k| x[k].clone()).collect();
            let ya: Vec<f64> = rows.iter().map(|&k| labels[k][a]).collect();
            fit_forest(&xa, &Variance::new(&ya), None, &forest.with_seed(derive_seed(forest.seed, 100 + a as u64))).map(Some)
        });
        Ok(PerAlgorithmRegressor {
            imputer,
            models: models.into_iter().collect::<Result<_>>()?,
            fallback: 10.0 * view.cutoff(),
        })
    }
}

impl Selector for PerAlgorithmRegressor {
    fn n_algorithms(&self) -> usize {
        self.models.len()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.imputer.transform(x)?;
        self.models
            .iter()
            .map(|m| m.as_ref().map_or(Ok(self.fallback), |f| f.predict(&z)))
            .collect()
    }
}

/// Classification forest predicting the per-instance best algorithm.
pub struct MultiClassSelector {
    imputer: FeatureImputer,
    forest: Option<Forest<ClassLeaf>>,
    n_algorithms: usize,
}

impl MultiClassSelector {
    pub fn fit(view: View<'_>, strategy: ImputationStrategy, forest: &ForestParams) -> Result<Self> {
        let LabelMatrix { imputer, x, labels } = label_matrix(view, strategy, forest)?;
        let m = view.n_algorithms();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (row, lab) in x.into_iter().zip(&labels) {
            // rows whose every run was dropped carry no preference
            if lab.iter().any(|v| v.is_finite()) {
                xs.push(row);
                ys.push(crate::argmin(lab));
            }
        }
        let forest = if xs.is_empty() {
            None
        } else {
            Some(fit_forest(&xs, &Gini::new(&ys, m), None, forest)?)
        };
        Ok(MultiClassSelector {
            imputer,
            forest,
            n_algorithms: m,
        })
    }

    /// Best-algorithm label of every training row under `strategy`; `None`
    /// for rows without any retained run.
    pub fn training_labels(view: View<'_>, strategy: ImputationStrategy, forest: &ForestParams) -> Result<Vec<Option<usize>>> {
        let lm = label_matrix(view, strategy, forest)?;
        Ok(lm
            .labels
            .iter()
            .map(|lab| lab.iter().any(|v| v.is_finite()).then(|| crate::argmin(lab)))
            .collect())
    }
}

impl Selector for MultiClassSelector {
    fn n_algorithms(&self) -> usize {
        self.n_algorithms
    }

    /// Negated class probabilities.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.imputer.transform(x)?;
        match &self.forest {
            Some(f) => Ok(f.predict_proba(&z)?.iter().map(|p| -p).collect()),
            None => Ok(vec![0.0; self.n_algorithms]),
        }
    }
}

/// k-nearest-neighbour selector on standardized features.
pub struct SunnySelector {
    imputer: FeatureImputer,
    scaler: Scaler,
    x: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    k: usize,
    fallback: f64,
}

impl SunnySelector {
    pub fn fit(view: View<'_>, strategy: ImputationStrategy, forest: &ForestParams, k: usize) -> Result<Self> {
        let LabelMatrix { imputer, x, labels } = label_matrix(view, strategy, forest)?;
        let k = if k > x.len() {
            warn!("sunny: k = {k} exceeds the {} training instances; using k = {}", x.len(), x.len());
            x.len()
        } else {
            k.max(1)
        };
        let scaler = Scaler::z_score(&x);
        let x = x.iter().map(|r| scaler.apply(r)).collect();
        Ok(SunnySelector {
            imputer,
            scaler,
            x,
            labels,
            k,
            fallback: 10.0 * view.cutoff(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl Selector for SunnySelector {
    fn n_algorithms(&self) -> usize {
        self.labels[0].len()
    }

    /// Mean imputed label of each algorithm over the k nearest neighbours;
    /// equidistant neighbours are taken in training order.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.scaler.apply(&self.imputer.transform(x)?);
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(k, r)| (r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), k))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(mean_labels(&self.labels, dist[..self.k].iter().map(|d| d.1), self.fallback))
    }
}

/// Clusters instances with g-means and assigns each cluster the algorithm
/// with the best mean imputed label.
pub struct IsacSelector {
    imputer: FeatureImputer,
    scaler: Scaler,
    centers: Vec<Vec<f64>>,
    /// Mean label per algorithm for each cluster.
    cluster_scores: Vec<Vec<f64>>,
}

impl IsacSelector {
    pub fn fit(
        view: View<'_>,
        strategy: ImputationStrategy,
        forest: &ForestParams,
        max_clusters: usize,
        seed: u64,
    ) -> Result<Self> {
        let LabelMatrix { imputer, x, labels } = label_matrix(view, strategy, forest)?;
        let scaler = Scaler::min_max(&x);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
        let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
        let centers = gmeans(&refs, max_clusters.max(1), derive_seed(seed, 0x15AC));
        let overall = mean_labels(&labels, 0..labels.len(), 10.0 * view.cutoff());
        let assign: Vec<usize> = refs.iter().map(|p| nearest(&centers, p)).collect();
        let cluster_scores = (0..centers.len())
            .map(|c| {
                let rows: Vec<usize> = (0..assign.len()).filter(|&k| assign[k] == c).collect();
                if rows.is_empty() {
                    overall.clone()
                } else {
                    mean_labels(&labels, rows.into_iter(), 10.0 * view.cutoff())
                }
            })
            .collect();
        Ok(IsacSelector {
            imputer,
            scaler,
            centers,
            cluster_scores,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }
}

impl Selector for IsacSelector {
    fn n_algorithms(&self) -> usize {
        self.cluster_scores[0].len()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.scaler.apply(&self.imputer.transform(x)?);
        Ok(self.cluster_scores[nearest(&self.centers, &q)].clone())
    }
}

enum PairModel {
    Forest(Forest<ClassLeaf>),
    /// No informative training row; the pair always votes for this side.
    Constant(usize),
}

/// Pairwise cost-sensitive voting: one weighted classification forest per
/// algorithm pair decides which of the two is faster.
pub struct SatzillaSelector {
    imputer: FeatureImputer,
    pairs: Vec<(usize, usize, PairModel)>,
    /// Rank of each algorithm by mean training PAR10, 0 = best.
    sbs_rank: Vec<usize>,
}

impl SatzillaSelector {
    pub fn fit(view: View<'_>, strategy: ImputationStrategy, forest: &ForestParams) -> Result<Self> {
        let LabelMatrix { imputer, x, labels } = label_matrix(view, strategy, forest)?;
        let m = view.n_algorithms();
        let sbs = SbsSelector::fit(view);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| sbs.mean_par10[a].total_cmp(&sbs.mean_par10[b]).then(a.cmp(&b)));
        let mut sbs_rank = vec![0; m];
        for (r, &a) in order.iter().enumerate() {
            sbs_rank[a] = r;
        }

        let pair_ids: Vec<(usize, usize)> = (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
        let models = exec::map_slice(&pair_ids, |&(a, b)| -> Result<(usize, usize, PairModel)> {
            let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
            for (k, lab) in labels.iter().enumerate() {
                let w = (lab[a] - lab[b]).abs();
                if w.is_finite() && w > 0.0 {
                    xs.push(x[k].clone());
                    // class 0: a is faster
                    ys.push(usize::from(lab[b] < lab[a]));
                    ws.push(w);
                }
            }
            let model = if xs.is_empty() {
                PairModel::Constant(if sbs_rank[a] <= sbs_rank[b] { a } else { b })
            } else {
                let seed = derive_seed(forest.seed, 1000 + (a * m + b) as u64);
                PairModel::Forest(fit_forest(&xs, &Gini::weighted(&ys, 2, &ws), Some(&ws), &forest.with_seed(seed))?)
            };
            Ok((a, b, model))
        });
        Ok(SatzillaSelector {
            imputer,
            pairs: models.into_iter().collect::<Result<_>>()?,
            sbs_rank,
        })
    }
}

impl Selector for SatzillaSelector {
    fn n_algorithms(&self) -> usize {
        self.sbs_rank.len()
    }

    /// `−wins + rank/(m + 1)`: most wins first, SBS rank breaks ties.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.imputer.transform(x)?;
        let m = self.sbs_rank.len();
        let mut wins = vec![0usize; m];
        for (a, b, model) in &self.pairs {
            let winner = match model {
                PairModel::Constant(w) => *w,
                PairModel::Forest(f) => {
                    if f.predict_class(&z)? == 0 {
                        *a
                    } else {
                        *b
                    }
                }
            };
            wins[winner] += 1;
        }
        Ok((0..m).map(|a| -(wins[a] as f64) + self.sbs_rank[a] as f64 / (m + 1) as f64).collect())
    }
}

/// Constant selector: the algorithm with the lowest mean training PAR10.
#[derive(Debug, Clone)]
pub struct SbsSelector {
    mean_par10: Vec<f64>,
}

impl SbsSelector {
    pub fn fit(view: View<'_>) -> Self {
        let s = view.scenario;
        let mean_par10 = (0..s.n_algorithms())
            .map(|a| view.instances.iter().map(|&i| s.par10(i, a)).sum::<f64>() / view.len() as f64)
            .collect();
        SbsSelector { mean_par10 }
    }

    pub fn choice(&self) -> usize {
        crate::argmin(&self.mean_par10)
    }

    pub fn mean_par10(&self) -> &[f64] {
        &self.mean_par10
    }
}

impl Selector for SbsSelector {
    fn n_algorithms(&self) -> usize {
        self.mean_par10.len()
    }

    fn scores(&self, _: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mean_par10.clone())
    }

    fn uses_features(&self) -> bool {
        false
    }
}
