mod common;

use mondrian_core::gaussian::fast_posterior_read;
use mondrian_core::gaussian::HyperParams;
use mondrian_core::rng::tree_rng;
use mondrian_core::stats::RunningStats;
use mondrian_core::tree::MondrianTree;
use mondrian_core::TrainingSlice;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn split_dimension_is_proportional_to_range() {
    // Ranges 1 and 3: the second dimension should be chosen 3/4 of the time.
    let slice = TrainingSlice::new(2, vec![0.0, 0.0, 1.0, 3.0], vec![0.0, 1.0]).unwrap();
    let mut second = 0;
    let mut locs = Vec::new();
    for s in 0..1000 {
        let tree = MondrianTree::sample(&slice, 2, &mut tree_rng(5, s)).unwrap();
        let root = tree.node(tree.root());
        if root.split_dim == Some(1) {
            second += 1;
            locs.push(root.split_loc.unwrap() / 3.0);
        }
    }
    let p = second as f64 / 1000.0;
    let sd = (0.75 * 0.25 / 1000.0f64).sqrt();
    assert!((p - 0.75).abs() < 4.0 * sd, "p = {p}");
    let uniform: Vec<f64> = (0..locs.len()).map(|i| (i as f64 + 0.5) / locs.len() as f64).collect();
    let (_, pval) = common::ks_two_sample(&locs, &uniform);
    assert!(pval > 0.001);
}

#[test]
fn root_split_time_is_exponential_in_linear_dimension() {
    let slice = TrainingSlice::new(2, vec![0.0, 0.0, 2.0, 0.5], vec![0.0, 1.0]).unwrap();
    let n = 4000;
    let taus: Vec<f64> = (0..n)
        .map(|s| {
            let t = MondrianTree::sample(&slice, 2, &mut tree_rng(6, s)).unwrap();
            t.node(t.root()).split_time
        })
        .collect();
    let avg = taus.iter().sum::<f64>() / n as f64;
    // Exp(2.5) has mean 0.4 and standard deviation 0.4.
    assert!((avg - 0.4).abs() < 4.0 * 0.4 / (n as f64).sqrt());
}

#[test]
fn structural_scan() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..=4);
        let n = rng.random_range(1..=300);
        let mss = rng.random_range(1..=12);
        let slice = common::uniform_slice(&mut rng, n, dim, |x| x[0], 0.1);
        let tree = MondrianTree::sample(&slice, mss, &mut rng).unwrap();
        tree.validate(Some(&slice)).unwrap();
        assert_eq!(tree.node(tree.root()).count, n);
        for id in tree.node_ids() {
            let node = tree.node(id);
            if !node.is_leaf() {
                assert!(node.count >= mss.max(2));
            }
            if let Some(p) = node.parent {
                assert!(tree.extent(p).contains_box(&tree.extent(id)));
                assert!(tree.node(p).split_time < node.split_time);
            }
        }
    }
}

#[test]
fn duplicated_rows_make_a_single_leaf() {
    let slice = TrainingSlice::new(2, [0.3, 0.7].repeat(20), (0..20).map(f64::from).collect()).unwrap();
    let tree = MondrianTree::sample(&slice, 2, &mut tree_rng(1, 0)).unwrap();
    assert_eq!(tree.len(), 1);
    assert_eq!(tree.node(tree.root()).count, 20);
}

#[test]
fn online_extension_keeps_invariants() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let dim = rng.random_range(1..=3);
        let mss = rng.random_range(1..=6);
        let pool = common::uniform_slice(&mut rng, 200, dim, |x| x[0], 0.1);
        let mut seen = TrainingSlice::new(dim, pool.row(0).to_vec(), vec![pool.label(0)]).unwrap();
        let mut tree = MondrianTree::sample(&seen, mss, &mut rng).unwrap();
        for i in 1..pool.len() {
            // Some points land far outside the current extent.
            let x: Vec<f64> = if i % 17 == 0 { pool.row(i).iter().map(|v| v * 4.0 - 1.5).collect() } else { pool.row(i).to_vec() };
            let k = seen.push(&x, pool.label(i)).unwrap();
            tree.extend(&seen, k, &mut rng).unwrap();
        }
        tree.validate(Some(&seen)).unwrap();
        assert_eq!(tree.node(tree.root()).count, seen.len());
    }
}

#[test]
fn sampling_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let slice = common::uniform_slice(&mut rng, 500, 3, |x| x[1], 0.1);
    let a = MondrianTree::sample(&slice, 5, &mut tree_rng(42, 7)).unwrap();
    let b = MondrianTree::sample(&slice, 5, &mut tree_rng(42, 7)).unwrap();
    let c = MondrianTree::sample(&slice, 5, &mut tree_rng(42, 8)).unwrap();
    assert_eq!(a.nodes(), b.nodes());
    assert_ne!(a.nodes(), c.nodes());
}

#[test]
fn welford_matches_batch_for_any_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut labels: Vec<f64> = (0..50).map(|_| rng.random_range(-1e3..1e3) + 1e6).collect();
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let var = labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    for _ in 0..20 {
        labels.shuffle(&mut rng);
        let mut s = RunningStats::new();
        for &y in &labels {
            s.push(y);
        }
        assert!((s.mean - mean).abs() <= 1e-10 * mean.abs());
        assert!((s.variance() - var).abs() <= 1e-10 * var);
    }
}

#[test]
fn fast_statistics_match_node_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pool = common::uniform_slice(&mut rng, 400, 2, |x| 5.0 * x[0] + x[1], 0.3);
    let mut seen = TrainingSlice::new(2, pool.features()[..2 * 100].to_vec(), pool.labels()[..100].to_vec()).unwrap();
    let mut tree = MondrianTree::sample(&seen, 4, &mut rng).unwrap();
    for i in 100..pool.len() {
        let k = seen.push(pool.row(i), pool.label(i)).unwrap();
        tree.extend(&seen, k, &mut rng).unwrap();
    }
    let hp = HyperParams::fit(seen.labels(), 2).unwrap();
    for id in tree.node_ids() {
        let rows = common::subtree_rows(&tree, id);
        let ys: Vec<f64> = rows.iter().map(|&r| seen.label(r)).collect();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let (m, v) = fast_posterior_read(&tree, id, &hp);
        assert!((m - mean).abs() < 1e-10);
        assert!((v - var).abs() < 1e-10);
    }
}
