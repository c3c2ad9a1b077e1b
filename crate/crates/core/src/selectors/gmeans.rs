//! k-means and g-means clustering used by the ISAC selector.

use rand::Rng as _;
use statrs::function::erf::erfc;

use crate::rng::rng_from;

/// Critical value of the adjusted Anderson–Darling statistic at significance
/// 0.05 when mean and variance are estimated from the sample.
pub const AD_CRITICAL_5PCT: f64 = 0.752;

const KMEANS_MAX_ITER: usize = 100;
const POWER_ITER: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest center, lowest index on ties.
pub(crate) fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let d: Vec<f64> = centers.iter().map(|c| sq_dist(c, x)).collect();
    crate::argmin(&d)
}

fn mean_of(points: &[&[f64]]) -> Vec<f64> {
    let d = points[0].len();
    let mut m = vec![0.0; d];
    for p in points {
        for (a, b) in m.iter_mut().zip(p.iter()) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= points.len() as f64);
    m
}

/// Lloyd iterations from the given centers. A center that loses all its
/// points stays where it was. Returns final centers and assignments.
pub fn kmeans(points: &[&[f64]], mut centers: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(&centers, p)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            if !members.is_empty() {
                *center = mean_of(&members);
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centers, p)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    (centers, assign)
}

/// Adjusted Anderson–Darling statistic `A*² = A²(1 + 4/n − 25/n²)` of the
/// sample against a normal with the sample's own mean and variance.
/// Returns 0 for samples that are too small or have no spread.
pub fn anderson_darling(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return 0.0;
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    // ln Φ(z) and ln(1 − Φ(z)) through erfc keep precision in both tails
    let ln_cdf = |x: f64| (0.5 * erfc(-x / std::f64::consts::SQRT_2)).max(f64::MIN_POSITIVE).ln();
    let ln_sf = |x: f64| (0.5 * erfc(x / std::f64::consts::SQRT_2)).max(f64::MIN_POSITIVE).ln();
    let s: f64 = (0..n).map(|i| (2 * i + 1) as f64 * (ln_cdf(z[i]) + ln_sf(z[n - 1 - i]))).sum();
    let a2 = -nf - s / nf;
    a2 * (1.0 + 4.0 / nf - 25.0 / (nf * nf))
}

/// Leading eigenvector and eigenvalue of the sample covariance.
fn principal_component(points: &[&[f64]], mean: &[f64], seed: u64) -> (Vec<f64>, f64) {
    let d = mean.len();
    let n = points.len() as f64;
    let mut rng = rng_from(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (vec![0.0; d], 0.0);
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let mut w = vec![0.0; d];
        for p in points {
            let proj: f64 = p.iter().zip(mean).zip(&v).map(|((x, m), vi)| (x - m) * vi).sum();
            for ((wi, x), m) in w.iter_mut().zip(p.iter()).zip(mean) {
                *wi += proj * (x - m);
            }
        }
        w.iter_mut().for_each(|a| *a /= n);
        lambda = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = w;
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    (v, lambda.max(0.0))
}

/// Tries to split one cluster in two. The split stands when both children
/// have at least `min_size` points and the projection of the points onto
/// the axis joining the children fails the Gaussianity test.
fn try_split(points: &[&[f64]], center: &[f64], min_size: usize, seed: u64) -> Option<(Vec<f64>, Vec<f64>)> {
    if points.len() < 2 * min_size {
        return None;
    }
    let (pc, lambda) = principal_component(points, center, seed);
    if lambda <= 0.0 {
        return None;
    }
    let m = (2.0 * lambda / std::f64::consts::PI).sqrt();
    let c1: Vec<f64> = center.iter().zip(&pc).map(|(c, v)| c + m * v).collect();
    let c2: Vec<f64> = center.iter().zip(&pc).map(|(c, v)| c - m * v).collect();
    let (children, assign) = kmeans(points, vec![c1, c2]);
    let n_left = assign.iter().filter(|&&a| a == 0).count();
    if n_left < min_size || points.len() - n_left < min_size {
        return None;
    }
    let axis: Vec<f64> = children[0].iter().zip(&children[1]).map(|(a, b)| a - b).collect();
    let len2: f64 = axis.iter().map(|a| a * a).sum();
    if len2 == 0.0 {
        return None;
    }
    let proj: Vec<f64> = points.iter().map(|p| p.iter().zip(&axis).map(|(x, a)| x * a).sum::<f64>() / len2).collect();
    if anderson_darling(&proj) > AD_CRITICAL_5PCT {
        let [a, b]: [Vec<f64>; 2] = children.try_into().expect("two centers");
        Some((a, b))
    } else {
        None
    }
}

/// g-means: starting from one cluster, split every cluster whose points do
/// not look Gaussian along their principal axis, then re-run k-means; stop
/// when no cluster splits or `max_clusters` is reached. A child cluster
/// must hold at least `max(2·d, 2)` points.
pub fn gmeans(points: &[&[f64]], max_clusters: usize, seed: u64) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let d = points[0].len();
    let min_size = (2 * d).max(2);
    let mut centers = vec![mean_of(points)];
    let mut assign = vec![0usize; points.len()];
    let mut round = 0u64;
    while centers.len() < max_clusters {
        let mut next = Vec::with_capacity(2 * centers.len());
        let mut split_any = false;
        for (c, center) in centers.iter().enumerate() {
            let members: Vec<&[f64]> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            let room = max_clusters - (next.len() + centers.len() - c);
            let split = if room > 0 {
                try_split(&members, center, min_size, crate::rng::derive_seed(seed, round * 1_000_003 + c as u64))
            } else {
                None
            };
            match split {
                Some((a, b)) => {
                    next.push(a);
                    next.push(b);
                    split_any = true;
                }
                None => next.push(center.clone()),
            }
        }
        if !split_any {
            break;
        }
        let (c, a) = kmeans(points, next);
        centers = c;
        assign = a;
        round += 1;
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[(f64, f64)], per: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        centers
            .iter()
            .flat_map(|&(x, y)| (0..per).map(|_| vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn ad_accepts_normal_rejects_bimodal() {
        let mut rng = rng_from(1);
        let normal: Vec<f64> = (0..500).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        assert!(anderson_darling(&normal) < AD_CRITICAL_5PCT);
        let bimodal: Vec<f64> = (0..500).map(|i| if i % 2 == 0 { -5.0 } else { 5.0 } + 0.1 * normal[i]).collect();
        assert!(anderson_darling(&bimodal) > AD_CRITICAL_5PCT);
        assert_eq!(anderson_darling(&[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn gmeans_finds_separated_blobs() {
        let pts = blobs(&[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)], 150, 0.5, 2);
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let c = gmeans(&refs, 30, 7);
        assert_eq!(c.len(), 3, "{c:?}");
        assert_eq!(gmeans(&refs, 30, 7), c);
        assert_eq!(gmeans(&refs, 2, 7).len(), 2);
        assert_eq!(gmeans(&refs, 1, 7).len(), 1);
    }

    #[test]
    fn gmeans_single_gaussian_stays_whole() {
        let pts = blobs(&[(3.0, 3.0)], 400, 1.0, 4);
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert_eq!(gmeans(&refs, 30, 1).len(), 1);
    }

    #[test]
    fn kmeans_two_groups() {
        let pts = [vec![0.0], vec![0.1], vec![5.0], vec![5.2]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let (c, a) = kmeans(&refs, vec![vec![0.0], vec![1.0]]);
        assert_eq!(a, vec![0, 0, 1, 1]);
        assert!((c[1][0] - 5.1).abs() < 1e-12);
    }
}
