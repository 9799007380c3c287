mod common;

use invoice_lifecycle::caseselect::{dbscan, svd_reduce};
use invoice_lifecycle::featurize::{fit_billing_mode_gmm_with, GmmOptions, Point2};
use invoice_lifecycle::learn::{grow_tree, smo, Binned, Kernel, Node, Targets, TreeParams};
use invoice_lifecycle::matrix::Matrix;
use invoice_lifecycle::synth::combo_counts;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

#[test]
fn dbscan_matches_brute_force_on_seeded_sets() {
    for seed in 0..10 {
        let pts = blob_points(seed, 200);
        for (eps, min) in [(0.5, 5), (0.8, 10), (0.3, 3)] {
            let (labels, k) = dbscan(&Matrix::from_rows(&pts), eps, min);
            let oracle = brute_force_dbscan(&pts, eps, min);
            assert!(same_partition(&labels, &oracle), "seed {seed} eps {eps}");
            let oracle_k = oracle
                .iter()
                .filter(|&&l| l >= 0)
                .max()
                .map_or(0, |m| m + 1);
            assert_eq!(k as i32, oracle_k);
        }
    }
}

#[test]
fn dbscan_isolated_points_are_noise() {
    let pts = [[0.0, 0.0], [10.0, 10.0], [20.0, 0.0]];
    let (labels, k) = dbscan(&Matrix::from_rows(&pts), 1.0, 2);
    assert_eq!(labels, vec![-1, -1, -1]);
    assert_eq!(k, 0);
    let (labels, k) = dbscan(&Matrix::from_rows(&pts), 1.0, 1);
    assert_eq!(labels, vec![0, 1, 2]);
    assert_eq!(k, 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dbscan_partition_is_independent_of_input_order(seed in 0u64..1000, eps in 0.3f64..1.0) {
        let pts = blob_points(seed, 120);
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.shuffle(&mut rng(seed ^ 0xabc));
        let shuffled: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
        let (a, _) = dbscan(&Matrix::from_rows(&pts), eps, 5);
        let (b, _) = dbscan(&Matrix::from_rows(&shuffled), eps, 5);
        let a_reordered: Vec<i32> = order.iter().map(|&i| a[i]).collect();
        prop_assert!(same_partition(&a_reordered, &b));
    }

    #[test]
    fn cart_root_split_matches_exhaustive_search(
        seed in 0u64..10_000,
        n in 8usize..60,
        d in 1usize..5,
    ) {
        let mut r = rng(seed);
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| (r.gen_range(0..40) as f64) / 4.0).collect());
        let y: Vec<u8> = (0..n).map(|_| r.gen_bool(0.4) as u8).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let tree = grow_tree(
            &Binned::new(&x, 256),
            &Targets { count: &vec![1; n], weight: &vec![1.0; n], y: &yf, classification: true },
            &TreeParams { max_depth: Some(1), min_leaf: 1, m_features: None },
            &mut rng(0),
        );
        let got = match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        };
        prop_assert_eq!(got, exhaustive_root_split(&x, &y));
    }

    #[test]
    fn gmm_single_component_is_closed_form(seed in 0u64..10_000, n in 5usize..200) {
        let mut r = rng(seed);
        let pts: Vec<Point2> = (0..n)
            .map(|_| {
                let a: f64 = r.gen_range(0.0..8.0);
                [a, 0.5 * a + r.gen_range(-1.0..1.0)]
            })
            .collect();
        let opts = GmmOptions { regularization: 0.0, ..GmmOptions::default() };
        let m = fit_billing_mode_gmm_with(&pts, 1, seed, opts).unwrap();
        let nf = n as f64;
        let mean = [
            pts.iter().map(|p| p[0]).sum::<f64>() / nf,
            pts.iter().map(|p| p[1]).sum::<f64>() / nf,
        ];
        prop_assert!((m.weights[0] - 1.0).abs() <= 1e-9);
        for a in 0..2 {
            prop_assert!((m.means[0][a] - mean[a]).abs() <= 1e-9);
            for b in 0..2 {
                let cov = pts.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / nf;
                prop_assert!((m.covariances[0][a][b] - cov).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn svd_explained_variance_matches_covariance_eigenvalues() {
    for seed in 0..12 {
        let m = random_matrix(seed, 40 + seed as usize * 7, 3 + (seed as usize % 6));
        let oracle = covariance_explained_ratios(&m);
        let r = svd_reduce(vec![String::new(); m.rows()], &m, 1.0).unwrap();
        assert_eq!(r.explained_variance_ratio.len(), oracle.len());
        for (a, b) in r.explained_variance_ratio.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "seed {seed}: {a} vs {b}");
        }
        let r95 = svd_reduce(vec![String::new(); m.rows()], &m, 0.95).unwrap();
        let mut cum = 0.0;
        let k = oracle
            .iter()
            .position(|v| {
                cum += v;
                cum >= 0.95
            })
            .unwrap()
            + 1;
        assert_eq!(r95.components(), k);
    }
}

#[test]
fn smo_two_point_case_is_analytic() {
    let x = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]);
    let sol = smo(
        &x,
        &[1.0, -1.0],
        &[10.0, 10.0],
        Kernel::Linear,
        1e-9,
        1000,
        100,
    );
    assert!((sol.alpha[0] - 0.5).abs() <= 1e-6);
    assert!((sol.alpha[1] - 0.5).abs() <= 1e-6);
    assert!(sol.rho.abs() <= 1e-6);
    assert!(sol.converged);
}

#[test]
fn smo_respects_box_and_equality_constraints() {
    let data = two_class(3, 150, 4, 1.0);
    let y: Vec<f64> = data
        .y
        .iter()
        .map(|&v| if v == 1 { 1.0 } else { -1.0 })
        .collect();
    let c = vec![2.0; y.len()];
    let sol = smo(
        &data.x,
        &y,
        &c,
        Kernel::Rbf { gamma: 0.3 },
        1e-3,
        100_000,
        1000,
    );
    assert!(sol.converged);
    assert!(sol
        .alpha
        .iter()
        .all(|&a| (-1e-12..=2.0 + 1e-12).contains(&a)));
    let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
    assert!(eq.abs() < 1e-9);
    assert!(sol.kkt_gap <= 1e-3);
}

#[test]
fn combo_stats_match_two_pass_counting() {
    for seed in 0..4 {
        let rows = feature_rows(seed, 40);
        assert_eq!(combo_counts(&rows).combos, two_pass_combo_stats(&rows));
    }
}
