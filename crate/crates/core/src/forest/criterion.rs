use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ForestParams;
use crate::survival::{nelson_aalen, StepFunction, TimedEvent};

/// A split criterion together with the targets it scores.
///
/// `best_split` receives the node's sample ids sorted by one feature
/// (`values[k]` is the feature value of `ids[k]`) and returns the split
/// position `p` (left = `ids[..p]`) with the largest gain, preferring the
/// lowest position on ties.
pub trait Criterion: Sync {
    type Leaf: Clone + Debug + Send + Sync + Serialize + DeserializeOwned;

    fn n_samples(&self) -> usize;
    fn splittable(&self, samples: &[usize], params: &ForestParams) -> bool;
    fn best_split(&self, ids: &[usize], values: &[f64], params: &ForestParams) -> Option<(usize, f64)>;
    fn leaf(&self, samples: &[usize]) -> Self::Leaf;
}

fn weight_of(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

/// Positions where a threshold can separate two distinct feature values and
/// both children keep `min_leaf` samples.
fn is_cut(values: &[f64], pos: usize, min_leaf: usize) -> bool {
    pos >= min_leaf && values.len() - pos >= min_leaf && values[pos - 1] < values[pos]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegLeaf {
    pub mean: f64,
    pub weight: f64,
}

/// Weighted variance reduction.
#[derive(Debug, Clone, Copy)]
pub struct Variance<'a> {
    y: &'a [f64],
    weights: Option<&'a [f64]>,
}

impl<'a> Variance<'a> {
    pub fn new(y: &'a [f64]) -> Self {
        Variance { y, weights: None }
    }

    pub fn weighted(y: &'a [f64], weights: &'a [f64]) -> Self {
        Variance { y, weights: Some(weights) }
    }
}

impl Criterion for Variance<'_> {
    type Leaf = RegLeaf;

    fn n_samples(&self) -> usize {
        self.y.len()
    }

    fn splittable(&self, samples: &[usize], params: &ForestParams) -> bool {
        samples.len() >= 2 * params.min_samples_leaf && {
            let first = self.y[samples[0]];
            samples.iter().any(|&i| self.y[i] != first)
        }
    }

    fn best_split(&self, ids: &[usize], values: &[f64], params: &ForestParams) -> Option<(usize, f64)> {
        let (mut w_tot, mut s_tot) = (0.0, 0.0);
        for &i in ids {
            let w = weight_of(self.weights, i);
            w_tot += w;
            s_tot += w * self.y[i];
        }
        if w_tot <= 0.0 {
            return None;
        }
        let mean = s_tot / w_tot;
        let sse: f64 = ids.iter().map(|&i| weight_of(self.weights, i) * (self.y[i] - mean).powi(2)).sum();
        let min_gain = 1e-12 * sse;
        let base = s_tot * s_tot / w_tot;

        let mut best: Option<(usize, f64)> = None;
        let (mut w_l, mut s_l) = (0.0, 0.0);
        for pos in 1..ids.len() {
            let i = ids[pos - 1];
            let w = weight_of(self.weights, i);
            w_l += w;
            s_l += w * self.y[i];
            if !is_cut(values, pos, params.min_samples_leaf) {
                continue;
            }
            let w_r = w_tot - w_l;
            if w_l <= 0.0 || w_r <= 0.0 {
                continue;
            }
            let s_r = s_tot - s_l;
            let gain = s_l * s_l / w_l + s_r * s_r / w_r - base;
            if gain > min_gain && best.is_none_or(|(_, g)| gain > g) {
                best = Some((pos, gain));
            }
        }
        best
    }

    fn leaf(&self, samples: &[usize]) -> RegLeaf {
        let (mut w, mut s) = (0.0, 0.0);
        for &i in samples {
            let wi = weight_of(self.weights, i);
            w += wi;
            s += wi * self.y[i];
        }
        if w > 0.0 {
            RegLeaf { mean: s / w, weight: w }
        } else {
            let n = samples.len() as f64;
            RegLeaf {
                mean: samples.iter().map(|&i| self.y[i]).sum::<f64>() / n,
                weight: 0.0,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLeaf {
    pub probs: Vec<f64>,
}

/// Weighted Gini impurity decrease.
#[derive(Debug, Clone, Copy)]
pub struct Gini<'a> {
    labels: &'a [usize],
    n_classes: usize,
    weights: Option<&'a [f64]>,
}

impl<'a> Gini<'a> {
    pub fn new(labels: &'a [usize], n_classes: usize) -> Self {
        Gini { labels, n_classes, weights: None }
    }

    pub fn weighted(labels: &'a [usize], n_classes: usize, weights: &'a [f64]) -> Self {
        Gini {
            labels,
            n_classes,
            weights: Some(weights),
        }
    }

    fn counts(&self, samples: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in samples {
            c[self.labels[i]] += weight_of(self.weights, i);
        }
        c
    }
}

impl Criterion for Gini<'_> {
    type Leaf = ClassLeaf;

    fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn splittable(&self, samples: &[usize], params: &ForestParams) -> bool {
        samples.len() >= 2 * params.min_samples_leaf && self.counts(samples).iter().filter(|&&c| c > 0.0).count() > 1
    }

    fn best_split(&self, ids: &[usize], values: &[f64], params: &ForestParams) -> Option<(usize, f64)> {
        let total = self.counts(ids);
        let w_tot: f64 = total.iter().sum();
        if w_tot <= 0.0 {
            return None;
        }
        let sq_tot: f64 = total.iter().map(|c| c * c).sum();
        let base = sq_tot / w_tot;
        let min_gain = 1e-12 * w_tot;

        let mut left = vec![0.0; self.n_classes];
        let mut right = total;
        let (mut sq_l, mut sq_r) = (0.0, sq_tot);
        let mut w_l = 0.0;
        let mut best: Option<(usize, f64)> = None;
        for pos in 1..ids.len() {
            let i = ids[pos - 1];
            let c = self.labels[i];
            let w = weight_of(self.weights, i);
            sq_l += (left[c] + w).powi(2) - left[c].powi(2);
            sq_r += (right[c] - w).powi(2) - right[c].powi(2);
            left[c] += w;
            right[c] -= w;
            w_l += w;
            if !is_cut(values, pos, params.min_samples_leaf) {
                continue;
            }
            let w_r = w_tot - w_l;
            if w_l <= 0.0 || w_r <= 0.0 {
                continue;
            }
            let gain = sq_l / w_l + sq_r / w_r - base;
            if gain > min_gain && best.is_none_or(|(_, g)| gain > g) {
                best = Some((pos, gain));
            }
        }
        best
    }

    fn leaf(&self, samples: &[usize]) -> ClassLeaf {
        let mut c = self.counts(samples);
        let total: f64 = c.iter().sum();
        if total > 0.0 {
            c.iter_mut().for_each(|v| *v /= total);
        } else {
            for &i in samples {
                c[self.labels[i]] += 1.0 / samples.len() as f64;
            }
        }
        ClassLeaf { probs: c }
    }
}

/// Two-sample log-rank statistic `U² / V` computed directly over the pooled
/// distinct event times. Zero when there are no events or no variance.
pub fn log_rank_statistic<S: TimedEvent>(left: &[S], right: &[S]) -> f64 {
    let mut times: Vec<f64> = left.iter().chain(right).filter(|s| s.is_event()).map(|s| s.time()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let (mut u, mut v) = (0.0, 0.0);
    for &t in &times {
        let at_risk = |g: &[S]| g.iter().filter(|s| s.time() >= t).map(|s| s.weight()).sum::<f64>();
        let deaths = |g: &[S]| g.iter().filter(|s| s.is_event() && s.time() == t).map(|s| s.weight()).sum::<f64>();
        let (y_l, d_l) = (at_risk(left), deaths(left));
        let (y, d) = (y_l + at_risk(right), d_l + deaths(right));
        if y <= 0.0 {
            continue;
        }
        u += d_l - y_l * d / y;
        if y > 1.0 {
            v += d * (y - d) / (y - 1.0) * (y_l / y) * (1.0 - y_l / y);
        }
    }
    if v > 1e-12 {
        u * u / v
    } else {
        0.0
    }
}

/// Fenwick tree over ranks `0..n` for prefix sums.
struct Fenwick(Vec<f64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0.0; n + 1])
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut k = i + 1;
        while k < self.0.len() {
            self.0[k] += v;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum over ranks `0..=i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut k = i + 1;
        let mut s = 0.0;
        while k > 0 {
            s += self.0[k];
            k -= k & k.wrapping_neg();
        }
        s
    }
}

/// Log-rank splitting for survival trees, with the `d0` minimum of
/// uncensored samples per child.
#[derive(Debug, Clone, Copy)]
pub struct LogRank<'a> {
    time: &'a [f64],
    event: &'a [bool],
    weights: Option<&'a [f64]>,
}

impl<'a> LogRank<'a> {
    pub fn new(time: &'a [f64], event: &'a [bool]) -> Self {
        LogRank { time, event, weights: None }
    }

    pub fn weighted(time: &'a [f64], event: &'a [bool], weights: &'a [f64]) -> Self {
        LogRank {
            time,
            event,
            weights: Some(weights),
        }
    }

    fn n_events(&self, samples: &[usize]) -> usize {
        samples.iter().filter(|&&i| self.event[i]).count()
    }
}

impl Criterion for LogRank<'_> {
    type Leaf = StepFunction;

    fn n_samples(&self) -> usize {
        self.time.len()
    }

    fn splittable(&self, samples: &[usize], params: &ForestParams) -> bool {
        samples.len() >= 2 * params.min_samples_leaf && self.n_events(samples) >= 2 * params.min_uncensored_leaf
    }

    /// Sweeps the split position once, updating the statistic in O(log E)
    /// per moved sample.
    ///
    /// With `r_j` the number of event times `≤ y_j`, sample `j` is at risk at
    /// the k-th event time iff `k ≤ r_j`. Then
    /// `U = Σ_L w_j (δ_j − A(r_j))` and
    /// `V = Σ_L w_j B(r_j) − Σ_{i,j ∈ L} w_i w_j G(min(r_i, r_j))`
    /// where `A`, `B`, `G` are prefix sums of `d/Y`, `c/Y`, `c/Y²` and
    /// `c = d (Y − d) / (Y − 1)`.
    fn best_split(&self, ids: &[usize], values: &[f64], params: &ForestParams) -> Option<(usize, f64)> {
        let mut event_times: Vec<f64> = ids.iter().filter(|&&i| self.event[i]).map(|&i| self.time[i]).collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let n_ev = event_times.len();
        if n_ev == 0 {
            return None;
        }
        let rank = |i: usize| event_times.partition_point(|&t| t <= self.time[i]);
        let ranks: Vec<usize> = ids.iter().map(|&i| rank(i)).collect();

        // risk-set and death totals per event rank (1-based)
        let mut deaths = vec![0.0; n_ev + 1];
        let mut leaving = vec![0.0; n_ev + 1];
        for (k, &i) in ids.iter().enumerate() {
            let w = weight_of(self.weights, i);
            leaving[ranks[k]] += w;
            if self.event[i] {
                deaths[ranks[k]] += w;
            }
        }
        let mut a = vec![0.0; n_ev + 1];
        let mut b = vec![0.0; n_ev + 1];
        let mut g = vec![0.0; n_ev + 1];
        let mut at_risk: f64 = leaving[1..].iter().sum();
        for k in 1..=n_ev {
            let (y, d) = (at_risk, deaths[k]);
            let c = if y > 1.0 { d * (y - d) / (y - 1.0) } else { 0.0 };
            a[k] = a[k - 1] + if y > 0.0 { d / y } else { 0.0 };
            b[k] = b[k - 1] + if y > 0.0 { c / y } else { 0.0 };
            g[k] = g[k - 1] + if y > 0.0 { c / (y * y) } else { 0.0 };
            at_risk -= leaving[k];
        }

        let total_events = self.n_events(ids);
        let d0 = params.min_uncensored_leaf;
        let mut by_rank_w = Fenwick::new(n_ev + 1);
        let mut by_rank_wg = Fenwick::new(n_ev + 1);
        let (mut u, mut v1, mut q, mut w_l) = (0.0, 0.0, 0.0, 0.0);
        let mut events_l = 0;
        let mut best: Option<(usize, f64)> = None;
        for pos in 1..ids.len() {
            let i = ids[pos - 1];
            let r = ranks[pos - 1];
            let w = weight_of(self.weights, i);
            let ev = self.event[i];
            u += w * (f64::from(u8::from(ev)) - a[r]);
            v1 += w * b[r];
            let (below_w, below_wg) = if r == 0 { (0.0, 0.0) } else { (by_rank_w.prefix(r - 1), by_rank_wg.prefix(r - 1)) };
            q += w * w * g[r] + 2.0 * w * (g[r] * (w_l - below_w) + below_wg);
            by_rank_w.add(r, w);
            by_rank_wg.add(r, w * g[r]);
            w_l += w;
            events_l += usize::from(ev);

            if !is_cut(values, pos, params.min_samples_leaf) || events_l < d0 || total_events - events_l < d0 {
                continue;
            }
            let var = v1 - q;
            if var <= 1e-12 {
                continue;
            }
            let stat = u * u / var;
            if stat > 1e-12 && best.is_none_or(|(_, s)| stat > s) {
                best = Some((pos, stat));
            }
        }
        best
    }

    fn leaf(&self, samples: &[usize]) -> StepFunction {
        let obs: Vec<(f64, bool, f64)> = samples
            .iter()
            .map(|&i| (self.time[i], self.event[i], weight_of(self.weights, i)))
            .collect();
        nelson_aalen(&obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn params() -> ForestParams {
        ForestParams {
            min_uncensored_leaf: 1,
            ..Default::default()
        }
    }

    #[test]
    fn log_rank_symmetric_cases() {
        let g = [(1.0, true), (2.0, true), (3.0, false)];
        assert!(log_rank_statistic(&g, &g).abs() < 1e-12);
        let c = [(1.0, false), (2.0, false)];
        assert_eq!(log_rank_statistic(&c, &c), 0.0);
    }

    #[test]
    fn separated_groups_beat_every_interleaving() {
        let all = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0];
        let separated = log_rank_statistic(&[(1.0, true), (2.0, true), (3.0, true)], &[(10.0, true), (11.0, true), (12.0, true)]);
        // every 3/3 partition other than the separated one (and its mirror)
        for mask in 0u32..64 {
            if mask.count_ones() != 3 || mask == 0b000111 || mask == 0b111000 {
                continue;
            }
            let (l, r): (Vec<_>, Vec<_>) = (0..6).partition(|k| mask & (1 << k) != 0);
            let l: Vec<(f64, bool)> = l.iter().map(|&k| (all[k], true)).collect();
            let r: Vec<(f64, bool)> = r.iter().map(|&k| (all[k], true)).collect();
            assert!(separated > log_rank_statistic(&l, &r), "mask {mask:06b}");
        }
    }

    #[test]
    fn incremental_matches_direct() {
        let mut rng = rng_from(5);
        for case in 0..200 {
            let n = rng.random_range(4..40);
            let time: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..12u8))).collect();
            let event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
            let weights: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..4u8))).collect();
            let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8))).collect();
            let mut ids: Vec<usize> = (0..n).collect();
            ids.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
            let vals: Vec<f64> = ids.iter().map(|&i| x[i]).collect();
            let crit = if case % 2 == 0 { LogRank::new(&time, &event) } else { LogRank::weighted(&time, &event, &weights) };
            let w = |i: usize| if case % 2 == 0 { 1.0 } else { weights[i] };
            let p = params();
            // best over direct evaluation of every admissible cut
            let mut direct: Option<(usize, f64)> = None;
            for pos in 1..n {
                if vals[pos - 1] == vals[pos] {
                    continue;
                }
                let side = |s: &[usize]| s.iter().map(|&i| (time[i], event[i], w(i))).collect::<Vec<_>>();
                let (l, r) = (side(&ids[..pos]), side(&ids[pos..]));
                if l.iter().filter(|s| s.1).count() < 1 || r.iter().filter(|s| s.1).count() < 1 {
                    continue;
                }
                let stat = log_rank_statistic(&l, &r);
                if stat > 1e-12 && direct.is_none_or(|(_, s)| stat > s + 1e-9 * s.max(1.0)) {
                    direct = Some((pos, stat));
                }
            }
            let fast = crit.best_split(&ids, &vals, &p);
            match (direct, fast) {
                (None, None) => {}
                (Some((_, s1)), Some((_, s2))) => assert!((s1 - s2).abs() <= 1e-8 * s1.max(1.0), "case {case}: {s1} vs {s2}"),
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn variance_finds_gap() {
        let y = [0.0, 0.0, 5.0, 5.0];
        let ids = [0, 1, 2, 3];
        let vals = [0.0, 1.0, 10.0, 11.0];
        let (pos, gain) = Variance::new(&y).best_split(&ids, &vals, &ForestParams::default()).unwrap();
        assert_eq!(pos, 2);
        assert!((gain - 25.0).abs() < 1e-12);
        let flat = [3.0; 4];
        assert!(!Variance::new(&flat).splittable(&ids, &ForestParams::default()));
    }

    #[test]
    fn gini_perfect_split() {
        let labels = [0, 0, 1, 1];
        let ids = [0, 1, 2, 3];
        let vals = [0.0, 1.0, 2.0, 3.0];
        let (pos, gain) = Gini::new(&labels, 2).best_split(&ids, &vals, &ForestParams::default()).unwrap();
        assert_eq!(pos, 2);
        assert!((gain - 2.0).abs() < 1e-12);
        assert_eq!(Gini::new(&labels, 2).leaf(&[0, 1, 2]).probs, vec![2.0 / 3.0, 1.0 / 3.0]);
    }
}
