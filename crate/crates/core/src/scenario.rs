//! Representative days by k-means over daily profile vectors.

use mgplan_optim::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ScenarioError;
use crate::instance::RepresentativeDay;

pub const RESTARTS: usize = 20;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Result of one k-means run in whatever space it was given.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<T> {
    pub centroids: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    pub sse: T,
    /// SSE after every Lloyd iteration.
    pub history: Vec<T>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub days: Vec<RepresentativeDay>,
    /// Cluster of every input day.
    pub assignment: Vec<usize>,
    /// SSE in normalized feature space.
    pub normalized_sse: f64,
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Scalar>(point: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn check_input<T: Scalar>(points: &[Vec<T>], k: usize) -> Result<(), ScenarioError> {
    if points.is_empty() {
        return Err(ScenarioError::EmptyInput);
    }
    if k == 0 {
        return Err(ScenarioError::ZeroK);
    }
    if k > points.len() {
        return Err(ScenarioError::KTooLarge {
            k,
            days: points.len(),
        });
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::Ragged(i));
        }
    }
    Ok(())
}

fn plus_plus_seed<T: Scalar>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<T> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: T = dist.iter().copied().sum();
        let pick = if total > T::zero() {
            let target = T::lit(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            let d = squared_distance(p, &centroids[centroids.len() - 1]);
            if d < dist[i] {
                dist[i] = d;
            }
        }
    }
    centroids
}

fn mean_of<T: Scalar>(points: &[Vec<T>], members: impl Iterator<Item = usize>) -> Option<Vec<T>> {
    let mut sum: Option<Vec<T>> = None;
    let mut count = 0usize;
    for i in members {
        count += 1;
        match &mut sum {
            None => sum = Some(points[i].clone()),
            Some(s) => s.iter_mut().zip(&points[i]).for_each(|(a, &b)| *a += b),
        }
    }
    let n = T::from_usize(count)?;
    sum.map(|mut s| {
        s.iter_mut().for_each(|v| *v /= n);
        s
    })
}

fn sse_of<T: Scalar>(points: &[Vec<T>], centroids: &[Vec<T>], assignment: &[usize]) -> T {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

fn lloyd<T: Scalar>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> KMeans<T> {
    let mut centroids = plus_plus_seed(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        // Refill empty clusters with the point farthest from its centroid.
        for c in 0..k {
            if !assignment.contains(&c) {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| assignment.iter().filter(|&&a| a == assignment[i]).count() > 1)
                    .map(|(i, p)| (i, squared_distance(p, &centroids[assignment[i]])))
                    .fold((usize::MAX, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
                if far != usize::MAX {
                    assignment[far] = c;
                    centroids[c] = points[far].clone();
                }
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members = assignment.iter().enumerate().filter(|&(_, &a)| a == c).map(|(i, _)| i);
            if let Some(m) = mean_of(points, members) {
                *centroid = m;
            }
        }
        history.push(sse_of(points, &centroids, &assignment));
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let current = squared_distance(p, &centroids[assignment[i]]);
            let (c, d) = nearest(p, &centroids);
            if d < current {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
    }
    let sse = *history.last().expect("at least one iteration");
    KMeans {
        centroids,
        assignment,
        sse,
        history,
        iterations,
    }
}

/// k-means with k-means++ seeding and [`RESTARTS`] seeded restarts; the run
/// with the lowest SSE wins.
pub fn kmeans<T: Scalar>(points: &[Vec<T>], k: usize, seed: u64) -> Result<KMeans<T>, ScenarioError> {
    check_input(points, k)?;
    let mut best: Option<KMeans<T>> = None;
    for restart in 0..RESTARTS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        let run = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("RESTARTS > 0"))
}

/// Per-feature min-max scaling to `[0, 1]`. Constant features map to 0.
pub fn normalize<T: Scalar>(series: &[Vec<T>]) -> Vec<Vec<T>> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    let dim = first.len();
    let mut lo = vec![T::infinity(); dim];
    let mut hi = vec![T::neg_infinity(); dim];
    for day in series {
        for (j, &v) in day.iter().enumerate().take(dim) {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    series
        .iter()
        .map(|day| {
            day.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let span = hi[j] - lo[j];
                    if span > T::zero() {
                        (v - lo[j]) / span
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect()
}

/// Clusters days jointly over all features. Centroids are returned in the
/// input's physical units and weighted by cluster size.
pub fn cluster_days(series: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering, ScenarioError> {
    check_input(series, k)?;
    let normalized = normalize(series);
    let run = kmeans(&normalized, k, seed)?;
    let days = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..series.len()).filter(|&i| run.assignment[i] == c).collect();
            RepresentativeDay {
                weight: members.len() as f64,
                member_count: members.len(),
                centroid: mean_of(series, members.iter().copied()).expect("clusters are non-empty"),
            }
        })
        .collect();
    Ok(Clustering {
        days,
        assignment: run.assignment,
        normalized_sse: run.sse,
    })
}

/// Sum of squared distances from every day to its nearest representative.
pub fn sse<T: Scalar>(series: &[Vec<T>], centroids: &[Vec<T>]) -> T {
    series.iter().map(|p| nearest(p, centroids).1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_days_form_one_cluster() {
        let day = vec![0.2, 0.4, 0.9];
        let series = vec![day.clone(); 4];
        let out = cluster_days(&series, 1, 1).unwrap();
        assert_eq!(out.days.len(), 1);
        assert_eq!(out.days[0].weight, 4.0);
        assert_eq!(out.days[0].centroid, day);
        assert_eq!(sse(&series, &[day]), 0.0);
    }

    #[test]
    fn scalar_pair_sse() {
        let series = vec![vec![0.0], vec![1.0]];
        assert_eq!(sse(&series, &[vec![0.5]]), 0.5);
        let out = kmeans(&series, 2, 3).unwrap();
        assert_eq!(out.sse, 0.0);
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert_eq!(cluster_days(&empty, 1, 0).unwrap_err(), ScenarioError::EmptyInput);
        assert_eq!(
            cluster_days(&[vec![1.0]], 2, 0).unwrap_err(),
            ScenarioError::KTooLarge { k: 2, days: 1 }
        );
        assert_eq!(
            cluster_days(&[vec![1.0], vec![1.0, 2.0]], 1, 0).unwrap_err(),
            ScenarioError::Ragged(1)
        );
    }

    #[test]
    fn works_in_single_precision() {
        let series: Vec<Vec<f32>> = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
        let out = kmeans(&series, 2, 9).unwrap();
        assert!(out.sse < 0.011);
    }
}
