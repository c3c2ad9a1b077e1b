use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossSpec;

/// Tolerance for the SF/CHF shape checks.
const SHAPE_TOL: f64 = 1e-9;
/// Probability masses summing to within this of 1 are accepted as is.
const MASS_TOL: f64 = 1e-9;
/// Beyond this the masses are considered corrupt rather than rounded.
const MASS_HARD_TOL: f64 = 1e-6;

/// Piecewise-constant function on `[0, ∞)`: `initial` on `[0, t_1)` and
/// `values[j]` on `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return invalid("step function needs one value per knot");
        }
        if knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("step function knots must be finite and strictly increasing");
        }
        Ok(StepFunction { knots, values, initial })
    }

    pub fn constant(value: f64) -> Self {
        StepFunction {
            knots: Vec::new(),
            values: Vec::new(),
            initial: value,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => self.initial,
            j => self.values[j - 1],
        }
    }

    /// Value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k < t) {
            0 => self.initial,
            j => self.values[j - 1],
        }
    }

    pub fn is_cumulative_hazard(&self) -> bool {
        self.initial == 0.0
            && self.values.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.values.windows(2).all(|w| w[1] >= w[0])
            && self.values.first().is_none_or(|&v| v >= 0.0)
    }

    pub fn is_survival(&self) -> bool {
        (self.initial - 1.0).abs() <= SHAPE_TOL
            && self.values.iter().all(|&v| (-SHAPE_TOL..=1.0 + SHAPE_TOL).contains(&v))
            && self.values.first().is_none_or(|&v| v <= self.initial + SHAPE_TOL)
            && self.values.windows(2).all(|w| w[1] <= w[0] + SHAPE_TOL)
    }

    /// Pointwise mean of several step functions over the union of their
    /// knots plus `extra_knots`.
    pub fn mean(functions: &[&StepFunction], extra_knots: &[f64]) -> StepFunction {
        if functions.is_empty() {
            return StepFunction::constant(0.0);
        }
        let mut grid: Vec<f64> = functions.iter().flat_map(|f| f.knots.iter().copied()).chain(extra_knots.iter().copied()).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut sums = vec![0.0; grid.len()];
        let mut initial = 0.0;
        for f in functions {
            initial += f.initial;
            let mut j = 0;
            let mut cur = f.initial;
            for (g, sum) in grid.iter().zip(sums.iter_mut()) {
                while j < f.knots.len() && f.knots[j] <= *g {
                    cur = f.values[j];
                    j += 1;
                }
                *sum += cur;
            }
        }
        let n = functions.len() as f64;
        StepFunction {
            knots: grid,
            values: sums.into_iter().map(|s| s / n).collect(),
            initial: initial / n,
        }
    }

    /// Keeps at most `max_knots` knots by retaining every k-th one (and always
    /// the last). Values at retained knots are exact; a removed jump moves to
    /// the next retained knot.
    pub fn thin(self, max_knots: usize) -> StepFunction {
        let n = self.knots.len();
        if n <= max_knots || max_knots == 0 {
            return self;
        }
        let stride = n.div_ceil(max_knots);
        let keep: Vec<usize> = (0..n).filter(|j| (j + 1) % stride == 0 || *j == n - 1).collect();
        StepFunction {
            knots: keep.iter().map(|&j| self.knots[j]).collect(),
            values: keep.iter().map(|&j| self.values[j]).collect(),
            initial: self.initial,
        }
    }
}

/// A sample as it enters a survival estimator.
pub trait TimedEvent {
    fn time(&self) -> f64;
    fn is_event(&self) -> bool;
    fn weight(&self) -> f64 {
        1.0
    }
}

impl TimedEvent for (f64, bool) {
    fn time(&self) -> f64 {
        self.0
    }
    fn is_event(&self) -> bool {
        self.1
    }
}

impl TimedEvent for (f64, bool, f64) {
    fn time(&self) -> f64 {
        self.0
    }
    fn is_event(&self) -> bool {
        self.1
    }
    fn weight(&self) -> f64 {
        self.2
    }
}

/// Nelson–Aalen cumulative hazard: `H(t) = Σ_{t_i ≤ t} d_i / Y_i` over the
/// distinct event times `t_i`, with `d_i` the (weighted) number of events at
/// `t_i` and `Y_i` the (weighted) number of samples with `y ≥ t_i`.
pub fn nelson_aalen<S: TimedEvent>(samples: &[S]) -> StepFunction {
    let mut sorted: Vec<(f64, bool, f64)> = samples.iter().map(|s| (s.time(), s.is_event(), s.weight())).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|s| s.2).sum();

    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut at_risk = total;
    let mut cum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut events = 0.0;
        let mut leaving = 0.0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                events += sorted[i].2;
            }
            leaving += sorted[i].2;
            i += 1;
        }
        if events > 0.0 {
            cum += events / at_risk;
            knots.push(t);
            values.push(cum);
        }
        at_risk -= leaving;
    }
    StepFunction {
        knots,
        values,
        initial: 0.0,
    }
}

/// `S(t) = exp(−H(t))` on the knots of `chf`.
pub fn chf_to_survival(chf: &StepFunction) -> StepFunction {
    StepFunction {
        knots: chf.knots.clone(),
        values: chf.values.iter().map(|h| (-h).exp()).collect(),
        initial: (-chf.initial).exp(),
    }
}

/// Product-limit conversion `S(t) = Π_{t_j ≤ t} (1 − ΔH_j)`, clamped to
/// `[0, 1]`. Treats each CHF increment as a discrete hazard, so a leaf whose
/// samples all fail at one time yields `S = 0` after it.
pub fn chf_to_survival_product_limit(chf: &StepFunction) -> StepFunction {
    let mut prev = chf.initial;
    let mut s: f64 = 1.0;
    let values = chf
        .values
        .iter()
        .map(|&h| {
            s *= (1.0 - (h - prev)).clamp(0.0, 1.0);
            prev = h;
            s
        })
        .collect();
    StepFunction {
        knots: chf.knots.clone(),
        values,
        initial: 1.0,
    }
}

/// How an ensemble cumulative hazard becomes a survival function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalConversion {
    /// `S = exp(−H)`.
    Exponential,
    /// `S = Π (1 − ΔH)`.
    #[default]
    ProductLimit,
}

impl SurvivalConversion {
    pub fn apply(self, chf: &StepFunction) -> StepFunction {
        match self {
            SurvivalConversion::Exponential => chf_to_survival(chf),
            SurvivalConversion::ProductLimit => chf_to_survival_product_limit(chf),
        }
    }
}

/// Expected loss of a runtime whose law is given by a survival step function.
///
/// Each drop `S(t_j⁻) − S(t_j)` at a knot `t_j ≤ C` is the probability of
/// finishing at `t_j`; whatever mass remains after the last knot `≤ C` is the
/// probability of a timeout and is charged the loss's timeout value.
pub fn expected_loss(sf: &StepFunction, loss: &LossSpec, cutoff: f64) -> Result<f64> {
    if !sf.is_survival() {
        return Err(Error::Invariant("expected_loss needs a nonincreasing survival function starting at 1".into()));
    }
    let mut prev = sf.initial;
    let mut mass = 0.0;
    let mut acc = 0.0;
    for (&t, &v) in sf.knots.iter().zip(&sf.values) {
        if t > cutoff {
            break;
        }
        let p = prev - v;
        if p != 0.0 {
            acc += loss.eval_unchecked(t.max(0.0), cutoff) * p;
            mass += p;
        }
        prev = v;
    }
    let p_timeout = prev.max(0.0);
    acc += loss.timeout_value(cutoff) * p_timeout;
    mass += p_timeout;

    let deviation = (mass - 1.0).abs();
    if deviation > MASS_HARD_TOL {
        return Err(Error::Invariant(format!("survival masses sum to {mass}")));
    }
    if deviation > MASS_TOL {
        log::debug!("renormalizing survival masses (sum {mass})");
        acc /= mass;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sf(knots: &[f64], values: &[f64]) -> StepFunction {
        StepFunction::new(knots.to_vec(), values.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn nelson_aalen_worked_example() {
        let h = nelson_aalen(&[(2.0, true), (4.0, false), (5.0, true)]);
        assert_eq!(h.knots(), &[2.0, 5.0]);
        assert_eq!(h.values(), &[1.0 / 3.0, 1.0 / 3.0 + 1.0]);
        assert_eq!(h.eval(1.99), 0.0);
        assert_eq!(h.eval(4.0), 1.0 / 3.0);
        assert_relative_eq!(h.eval(100.0), 4.0 / 3.0);
    }

    #[test]
    fn nelson_aalen_degenerate() {
        let h = nelson_aalen(&[(3.0, false), (9.0, false)]);
        assert!(h.is_empty());
        assert_eq!(h.eval(50.0), 0.0);
        assert_eq!(chf_to_survival(&h).eval(50.0), 1.0);

        let h = nelson_aalen(&[(7.0, true)]);
        assert_eq!(h.eval(6.9), 0.0);
        assert_eq!(h.eval(7.0), 1.0);
        assert_relative_eq!(chf_to_survival(&h).eval(7.0), (-1.0f64).exp());
    }

    #[test]
    fn exp_conversion() {
        let h = StepFunction::new(vec![3.0], vec![2.0f64.ln()], 0.0).unwrap();
        let s = chf_to_survival(&h);
        assert_relative_eq!(s.eval(3.0), 0.5);
        assert_eq!(s.eval(2.0), 1.0);
        assert!(chf_to_survival(&StepFunction::constant(0.0)).eval(1.0) == 1.0);
    }

    #[test]
    fn product_limit_conversion() {
        // all three samples fail at 5 → everything gone after 5
        let h = nelson_aalen(&[(5.0, true), (5.0, true), (5.0, true)]);
        let s = chf_to_survival_product_limit(&h);
        assert_eq!(s.eval(5.0), 0.0);
        // Nelson–Aalen increments d/Y reproduce Kaplan–Meier exactly
        let h = nelson_aalen(&[(1.0, true), (2.0, false), (3.0, true), (4.0, true)]);
        let s = chf_to_survival_product_limit(&h);
        assert_relative_eq!(s.eval(1.0), 0.75);
        assert_relative_eq!(s.eval(3.0), 0.75 * 0.5);
        assert_relative_eq!(s.eval(4.0), 0.0);
    }

    #[test]
    fn mean_of_functions() {
        let a = StepFunction::new(vec![1.0, 3.0], vec![1.0, 2.0], 0.0).unwrap();
        let b = StepFunction::new(vec![2.0], vec![4.0], 0.0).unwrap();
        let m = StepFunction::mean(&[&a, &b], &[10.0]);
        assert_eq!(m.knots(), &[1.0, 2.0, 3.0, 10.0]);
        assert_eq!(m.values(), &[0.5, 2.5, 3.0, 3.0]);
    }

    #[test]
    fn thinning_caps_knots() {
        let n = 25_000;
        let f = StepFunction::new((1..=n).map(f64::from).collect(), (1..=n).map(f64::from).collect(), 0.0).unwrap();
        let t = f.clone().thin(10_000);
        assert!(t.len() <= 10_000);
        assert_eq!(*t.knots().last().unwrap(), f64::from(n));
        for (&k, &v) in t.knots().iter().zip(t.values()) {
            assert_eq!(f.eval(k), v);
        }
    }

    #[test]
    fn expected_loss_examples() {
        let s = sf(&[3.0, 7.0], &[0.4, 0.0]);
        assert_relative_eq!(expected_loss(&s, &LossSpec::Identity, 10.0).unwrap(), 4.6, epsilon = 1e-12);
        assert_relative_eq!(expected_loss(&s, &LossSpec::Par10, 10.0).unwrap(), 4.6, epsilon = 1e-12);
        let s = sf(&[3.0], &[0.2]);
        assert_relative_eq!(expected_loss(&s, &LossSpec::Par10, 10.0).unwrap(), 22.4, epsilon = 1e-12);
        assert_relative_eq!(expected_loss(&s, &LossSpec::Identity, 10.0).unwrap(), 0.8 * 3.0 + 0.2 * 10.0, epsilon = 1e-12);
        // drops past the cutoff count as timeouts
        let s = sf(&[3.0, 12.0], &[0.2, 0.0]);
        assert_relative_eq!(expected_loss(&s, &LossSpec::Par10, 10.0).unwrap(), 22.4, epsilon = 1e-12);
    }

    #[test]
    fn expected_loss_rejects_malformed() {
        let bad = StepFunction::new(vec![1.0, 2.0], vec![0.3, 0.6], 1.0).unwrap();
        assert!(matches!(expected_loss(&bad, &LossSpec::Identity, 10.0), Err(Error::Invariant(_))));
        let bad = StepFunction::new(vec![1.0], vec![0.3], 0.5).unwrap();
        assert!(expected_loss(&bad, &LossSpec::Identity, 10.0).is_err());
    }

    #[test]
    fn step_function_validation() {
        assert!(StepFunction::new(vec![1.0, 1.0], vec![0.0, 0.0], 0.0).is_err());
        assert!(StepFunction::new(vec![1.0], vec![], 0.0).is_err());
        let f = StepFunction::new(vec![1.0, 2.0], vec![5.0, 6.0], 4.0).unwrap();
        assert_eq!(f.eval_left(1.0), 4.0);
        assert_eq!(f.eval_left(1.5), 5.0);
    }
}
