//! Exact kNN against a brute-force all-pairs sort.

use daedalus_core::features::FeatureMatrix;
use daedalus_core::projection::{knn_graph, Metric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every other point sorted by (squared distance, index), first k kept.
fn brute_force(points: &[Vec<f64>], k: usize) -> Vec<Vec<u32>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut all: Vec<(f64, u32)> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| {
                    (
                        p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
                        j as u32,
                    )
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

fn matrix(points: &[Vec<f64>]) -> FeatureMatrix {
    let dim = points[0].len();
    FeatureMatrix::from_points(dim, points.iter().flatten().copied().collect()).unwrap()
}

fn check(points: &[Vec<f64>], k: usize) {
    let knn = knn_graph(&matrix(points), k, Metric::Euclidean).unwrap();
    let oracle = brute_force(points, k);
    for (i, expected) in oracle.iter().enumerate() {
        assert_eq!(knn.neighbors(i), expected.as_slice(), "row {i}");
        for (&j, &d) in knn.neighbors(i).iter().zip(knn.distances(i)) {
            let exact: f64 = points[i]
                .iter()
                .zip(&points[j as usize])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!((d - exact.sqrt()).abs() <= 1e-12 * exact.sqrt().max(1.0));
        }
    }
}

#[test]
fn random_17d_points_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Vec<f64>> = (0..400)
        .map(|_| (0..17).map(|_| rng.random::<f64>()).collect())
        .collect();
    check(&points, 15);
}

#[test]
fn lattice_ties_break_by_index() {
    // many exactly equal distances on an integer lattice
    let points: Vec<Vec<f64>> = (0..7)
        .flat_map(|x| (0..7).map(move |y| vec![f64::from(x), f64::from(y)]))
        .collect();
    check(&points, 8);
}

#[test]
fn duplicate_points() {
    let points = vec![
        vec![1.0, 1.0],
        vec![1.0, 1.0],
        vec![1.0, 1.0],
        vec![5.0, 5.0],
    ];
    check(&points, 2);
}

#[test]
fn k_out_of_range_is_rejected() {
    let points = vec![vec![0.0], vec![1.0], vec![2.0]];
    assert!(knn_graph(&matrix(&points), 3, Metric::Euclidean).is_err());
    assert!(knn_graph(&matrix(&points), 0, Metric::Euclidean).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn small_sets_match_brute_force(
        raw in prop::collection::vec(prop::collection::vec(-3i8..3, 3), 5..40),
        k in 1usize..5,
    ) {
        let points: Vec<Vec<f64>> = raw.iter().map(|p| p.iter().map(|&v| f64::from(v)).collect()).collect();
        prop_assume!(k < points.len());
        check(&points, k);
    }
}
