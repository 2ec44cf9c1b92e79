//! The SGD layout against a hand-written update rule, plus determinism and
//! cancellation of the full pipeline.

mod common;

use daedalus_core::labels::LabelStore;
use daedalus_core::projection::{
    fit_curve_params, optimize_embedding, project, FuzzyGraph, ProjectionConfig,
};
use daedalus_core::Error;

/// Attractive steps for two points joined by one unit-weight edge, written
/// out from the loss `ln(1 + a·d^(2b))`. A unit-weight edge is sampled in
/// both directions once per epoch, first due at epoch 1.
fn two_point_oracle(mut y: [[f64; 2]; 2], a: f64, b: f64, epochs: usize, lr: f64) -> [[f64; 2]; 2] {
    for epoch in 1..epochs {
        let alpha = lr * (1.0 - epoch as f64 / epochs as f64);
        for (i, j) in [(0, 1), (1, 0)] {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let d2 = dx * dx + dy * dy;
            let coeff = if d2 > 0.0 {
                2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b))
            } else {
                0.0
            };
            let g = [(coeff * dx).clamp(-4.0, 4.0), (coeff * dy).clamp(-4.0, 4.0)];
            for d in 0..2 {
                y[i][d] -= alpha * g[d];
                y[j][d] += alpha * g[d];
            }
        }
    }
    y
}

#[test]
fn two_point_layout_matches_hand_written_updates() {
    let graph = FuzzyGraph::from_undirected(2, [(0, 1, 1.0)]);
    let config = ProjectionConfig {
        n_epochs: 25,
        negative_sample_rate: 0,
        learning_rate: 0.5,
        ..Default::default()
    };
    let (a, b) = fit_curve_params(config.min_dist, config.spread).unwrap();
    for init in [
        [[0.0, 0.0], [30.0, 40.0]],
        [[9.0, 1.0], [-8.5, 1.25]],
        [[-20.0, 0.0], [20.0, 0.0]],
    ] {
        let got = optimize_embedding(&graph, &config, Some(&init), &mut |_, _| true).unwrap();
        let want = two_point_oracle(init, a, b, config.n_epochs, config.learning_rate);
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (g[0] - w[0]).abs() < 1e-12 && (g[1] - w[1]).abs() < 1e-12,
                "{got:?} vs {want:?}"
            );
        }
        // the pair moves closer and its midpoint stays put
        let gap =
            |y: &[[f64; 2]]| ((y[0][0] - y[1][0]).powi(2) + (y[0][1] - y[1][1]).powi(2)).sqrt();
        assert!(gap(&got) <= gap(&init));
        assert!(((got[0][0] + got[1][0]) - (init[0][0] + init[1][0])).abs() < 1e-9);
    }
}

#[test]
fn projection_is_deterministic_and_cancellable() {
    let ds = common::dataset(300, 12);
    let labels = LabelStore::new(ds.ids().map(String::from));
    let attrs = vec!["Area".to_string(), "Elongation".to_string()];
    let config = ProjectionConfig {
        n_epochs: 60,
        seed: 5,
        ..Default::default()
    };
    let run = || project(&ds, &labels, &attrs, None, &config, None, &mut |_, _| true).unwrap();
    let first = run();
    assert_eq!(first, run());
    assert_eq!(first.coordinates.len(), 300);
    assert!(first
        .coordinates
        .iter()
        .all(|p| p[0].is_finite() && p[1].is_finite()));

    let other = project(
        &ds,
        &labels,
        &attrs,
        None,
        &ProjectionConfig {
            seed: 6,
            ..config.clone()
        },
        None,
        &mut |_, _| true,
    )
    .unwrap();
    assert_ne!(first.coordinates, other.coordinates);

    let mut seen = Vec::new();
    let cancelled = project(
        &ds,
        &labels,
        &attrs,
        None,
        &config,
        None,
        &mut |epoch, total| {
            seen.push((epoch, total));
            epoch < 10
        },
    );
    assert!(matches!(cancelled, Err(Error::Cancelled)));
    assert_eq!(seen.last(), Some(&(10, 60)));
}

#[test]
fn invalid_requests_are_rejected_before_work() {
    let ds = common::dataset(20, 1);
    let labels = LabelStore::new(ds.ids().map(String::from));
    let mut never = |_: usize, _: usize| -> bool { panic!("no epochs expected") };
    let one = vec!["Area".to_string()];
    assert!(matches!(
        project(
            &ds,
            &labels,
            &one,
            None,
            &ProjectionConfig::default(),
            None,
            &mut never
        ),
        Err(Error::InvalidConfig {
            field: "attributes",
            ..
        })
    ));
    let two = vec!["Area".to_string(), "Elongation".to_string()];
    let config = ProjectionConfig {
        n_neighbors: 20,
        ..Default::default()
    };
    assert!(matches!(
        project(&ds, &labels, &two, None, &config, None, &mut never),
        Err(Error::InvalidConfig {
            field: "n_neighbors",
            ..
        })
    ));
}
