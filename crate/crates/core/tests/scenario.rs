use mgplan_core::scenario::*;
use mgplan_core::ScenarioError;
use proptest::prelude::*;

fn days() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6).prop_flat_map(|len| prop::collection::vec(prop::collection::vec(0.0..10.0f64, len), 1..40))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_conserved(series in days(), k in 1usize..8, seed in any::<u64>()) {
        prop_assume!(k <= series.len());
        let c = cluster_days(&series, k, seed).unwrap();
        prop_assert_eq!(c.days.len(), k);
        let total: f64 = c.days.iter().map(|d| d.weight).sum();
        prop_assert_eq!(total, series.len() as f64);
        prop_assert_eq!(c.days.iter().map(|d| d.member_count).sum::<usize>(), series.len());
        for (i, d) in c.days.iter().enumerate() {
            let members = c.assignment.iter().filter(|&&a| a == i).count();
            prop_assert_eq!(d.member_count, members);
            prop_assert!(members > 0);
        }
    }

    #[test]
    fn centroids_are_member_means(series in days(), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(k <= series.len());
        let c = cluster_days(&series, k, seed).unwrap();
        for (i, d) in c.days.iter().enumerate() {
            for f in 0..series[0].len() {
                let vals: Vec<f64> = (0..series.len()).filter(|&j| c.assignment[j] == i).map(|j| series[j][f]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                prop_assert!((d.centroid[f] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lloyd_history_never_increases(series in days(), k in 1usize..6, seed in any::<u64>()) {
        prop_assume!(k <= series.len());
        let run = kmeans(&normalize(&series), k, seed).unwrap();
        for w in run.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert_eq!(run.assignment.len(), series.len());
    }

    #[test]
    fn distinct_days_are_reproduced_exactly(
        distinct in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 4), 1..6),
        repeats in prop::collection::vec(1usize..5, 6),
        seed in any::<u64>(),
    ) {
        let mut unique: Vec<Vec<f64>> = Vec::new();
        for d in distinct {
            if !unique.contains(&d) {
                unique.push(d);
            }
        }
        let mut series = Vec::new();
        for (d, &r) in unique.iter().zip(&repeats) {
            series.extend(std::iter::repeat_n(d.clone(), r));
        }
        let c = cluster_days(&series, unique.len(), seed).unwrap();
        // Zero up to the rounding of a mean of identical values.
        prop_assert!(c.normalized_sse < 1e-20, "{}", c.normalized_sse);
        let centroids: Vec<Vec<f64>> = c.days.iter().map(|d| d.centroid.clone()).collect();
        prop_assert!(sse(&series, &centroids) < 1e-20);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        for (d, &r) in unique.iter().zip(&repeats) {
            let rep = c.days.iter().find(|x| close(&x.centroid, d)).unwrap();
            prop_assert_eq!(rep.member_count, r);
        }
    }
}

#[test]
fn same_seed_same_clusters() {
    let year = mgplan_core::io::synth_profiles(9, 60, 2, 1);
    let a = cluster_days(&year, 4, 11).unwrap();
    let b = cluster_days(&year, 4, 11).unwrap();
    assert_eq!(a.days, b.days);
    assert_eq!(a.assignment, b.assignment);
}

#[test]
fn more_clusters_fit_better() {
    let year = mgplan_core::io::synth_profiles(3, 120, 2, 1);
    let sse_of = |k| cluster_days(&year, k, 5).unwrap().normalized_sse;
    assert!(sse_of(8) < sse_of(2));
    assert!(sse_of(2) < sse_of(1));
}

#[test]
fn input_errors() {
    assert_eq!(cluster_days(&[], 1, 0).unwrap_err(), ScenarioError::EmptyInput);
    assert_eq!(cluster_days(&[vec![1.0]], 0, 0).unwrap_err(), ScenarioError::ZeroK);
    assert_eq!(
        cluster_days(&[vec![1.0]], 2, 0).unwrap_err(),
        ScenarioError::KTooLarge { k: 2, days: 1 }
    );
    assert_eq!(
        cluster_days(&[vec![1.0, 2.0], vec![1.0]], 1, 0).unwrap_err(),
        ScenarioError::Ragged(1)
    );
    assert_eq!(
        cluster_days(&[vec![1.0], vec![f64::NAN]], 1, 0).unwrap_err(),
        ScenarioError::Ragged(1)
    );
}
