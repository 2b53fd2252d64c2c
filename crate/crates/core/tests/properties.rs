use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use skg::select::{measure_noise_up, sigma_ed};
use skg::weights::{
    noise_up_theoretical, similarity, similarity_approx, similarity_conditional_variance, DEFAULT_STEP_CAP,
};
use skg::*;

fn binary_vectors(rng: &mut ChaCha20Rng, n: usize, m: usize, p: f64) -> Vec<AdjacencyVector> {
    (0..n)
        .map(|_| AdjacencyVector::new((0..m).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect()))
        .collect()
}

#[test]
fn bank_entries_pass_ks_against_normal() {
    for (sigma_sq, seed) in [(1.0, 1u64), (4.0, 2), (0.3, 3)] {
        let bank = sample_bank(sigma_sq, 2500, 4, seed).unwrap();
        let mut xs = bank.frequencies().to_vec();
        xs.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, (1.0 / sigma_sq).sqrt()).unwrap();
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = normal.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        // asymptotic critical value at significance 0.01
        assert!(d < 1.628 / n.sqrt(), "σ²={sigma_sq}: KS statistic {d}");
    }
}

#[test]
fn similarity_is_bounded_and_close_to_exponential() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (eta, sigma_sq, d) = (0.1, 8.0, 5000);
    let bank = sample_bank(sigma_sq, d, 30, 4).unwrap();
    let vectors = binary_vectors(&mut rng, 60, 30, 0.3);
    let mut within = 0;
    let mut total = 0;
    let mut sum = 0.0;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let b = similarity(&bank, &vectors[i], &vectors[j], eta).unwrap();
            assert!(b.abs() <= 2.0 * eta + 1e-15);
            let d_sq = vectors[i].sq_distance(&vectors[j]).unwrap();
            let sd = similarity_conditional_variance(d_sq, sigma_sq, eta, d).unwrap().sqrt();
            if (b - similarity_approx(d_sq, sigma_sq, eta).unwrap()).abs() <= 5.0 * sd {
                within += 1;
            }
            total += 1;
            sum += b;
        }
    }
    assert!(within as f64 >= 0.99 * total as f64, "{within}/{total}");
    let mean = sum / total as f64;
    assert!(mean > 0.0 && mean < 2.0 * eta);
}

#[test]
fn theta_is_sum_of_scaled_errors() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let vectors = binary_vectors(&mut rng, 25, 12, 0.4);
    let values: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
    let set = TrainingSet::from_pairs(vectors.clone(), values).unwrap();
    let bank = Arc::new(sample_bank(3.0, 80, 12, 9).unwrap());
    let eta = 0.07;
    let mut model = SkgModel::new(bank.clone(), eta).unwrap();
    let trace = model.train(&set, 3, 2).unwrap();
    let mut theta = vec![0.0; bank.feature_dim()];
    for (&i, e) in trace.order.iter().zip(&trace.errors) {
        let z = bank.feature_map(&vectors[i]).unwrap();
        for (t, zk) in theta.iter_mut().zip(z.as_slice()) {
            *t += 2.0 * eta * e * zk;
        }
    }
    let scale = theta.iter().map(|t| t.abs()).fold(0.0, f64::max);
    for (a, b) in model.theta().iter().zip(&theta) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn predictions_equal_weighted_earlier_values(
        seed in any::<u64>(),
        n in 2usize..=50,
        m in 1usize..=15,
        epochs in 1usize..=3,
        sigma_sq in 0.3f64..30.0,
        eta in 0.01f64..0.25,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let vectors = binary_vectors(&mut rng, n, m, 0.3);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let set = TrainingSet::from_pairs(vectors, values.clone()).unwrap();
        let bank = Arc::new(sample_bank(sigma_sq, 60, m, seed).unwrap());
        let mut model = SkgModel::new(bank.clone(), eta).unwrap();
        let trace = model.train(&set, epochs, seed).unwrap();
        let analyzer = WeightAnalyzer::new(&bank, eta, set.vectors(), &trace.order, DEFAULT_STEP_CAP).unwrap();
        for t in 1..trace.len() {
            let w = analyzer.at_step(t).unwrap();
            let oracle: f64 = trace.order[..t].iter().zip(&w.weights).map(|(&i, f)| values[i] * f).sum();
            let f_hat = trace.predictions[t];
            prop_assert!((f_hat - oracle).abs() <= 1e-9 * f_hat.abs().max(1.0));
        }
    }

    #[test]
    fn gnmse_ignores_joint_permutation(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40), seed in any::<u64>()) {
        prop_assume!(pairs.iter().any(|p| p.0 != 0.0));
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut idx: Vec<usize> = (0..t.len()).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut ChaCha20Rng::seed_from_u64(seed));
        let tp: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let (a, b) = (gnmse(&t, &p).unwrap(), gnmse(&tp, &pp).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn boundaries_scale_with_square_of_vector_scale(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let vectors = binary_vectors(&mut rng, 12, 8, 0.5);
        prop_assume!(pairwise_stats(&vectors).unwrap().d_sq_min_nonzero.is_some());
        let opts = SelectOptions::new(0.1, 200);
        let base = select(&vectors, &opts).unwrap();
        let scaled: Vec<AdjacencyVector> = vectors.iter().map(|v| v.scaled(c)).collect();
        let s = select(&scaled, &opts).unwrap();
        let c2 = c * c;
        prop_assert!(base.sigma_sq_ce <= base.sigma_sq_ed);
        prop_assert!((s.sigma_sq_ed / (c2 * base.sigma_sq_ed) - 1.0).abs() < 1e-12);
        prop_assert!((s.sigma_sq_ce / (c2 * base.sigma_sq_ce) - 1.0).abs() < 1e-12);
        prop_assert!((s.sigma_sq_da / (c2 * base.sigma_sq_da) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn feature_count_impact_on_selected_variance_decays() {
    // σ²_ed ∝ 1 / ln √(2D) with the theoretical ceiling
    for (d_max, eta) in [(8.0, 0.05), (43.0, 0.1), (671.0, 0.03)] {
        let at = |big_d| sigma_ed(d_max, noise_up_theoretical(eta, big_d).unwrap(), eta).unwrap();
        assert_relative_eq!(at(800) / at(200), 20f64.ln() / 40f64.ln(), max_relative = 1e-12);
        let steps: Vec<f64> = [200, 800, 3200, 12800]
            .windows(2)
            .map(|w| 1.0 - at(w[1]) / at(w[0]))
            .collect();
        assert!(steps.windows(2).all(|s| s[1] < s[0]), "{steps:?}");
    }
}

#[test]
fn scaling_by_two_quadruples_boundaries() {
    let vectors = vec![
        AdjacencyVector::new(vec![1.0, 0.0, 1.0]),
        AdjacencyVector::new(vec![0.0, 1.0, 1.0]),
        AdjacencyVector::new(vec![1.0, 1.0, 1.0]),
    ];
    let opts = SelectOptions::new(0.1, 200);
    let a = select(&vectors, &opts).unwrap();
    let doubled: Vec<_> = vectors.iter().map(|v| v.scaled(2.0)).collect();
    let b = select(&doubled, &opts).unwrap();
    assert_relative_eq!(b.d_sq_max, 4.0 * a.d_sq_max);
    assert_relative_eq!(b.sigma_sq_ed, 4.0 * a.sigma_sq_ed, max_relative = 1e-12);
    assert_relative_eq!(b.sigma_sq_ce, 4.0 * a.sigma_sq_ce, max_relative = 1e-12);
}

fn acceptance_dataset() -> Dataset {
    planted_communities(&CommunityParams::default(), 20_240_601).unwrap()
}

#[test]
fn weight_sums_near_one_at_selected_variance() {
    let data = acceptance_dataset();
    let cfg = ExperimentConfig::default();
    let mut sums = Vec::new();
    for seed in 0..20 {
        let report = select_for_run(&data, &cfg, seed, false).unwrap();
        let run = skg::run_once(&data, &cfg, report.sigma_sq_ed, seed, true).unwrap();
        let art = run.artifacts.unwrap();
        assert!(art.trace.len() >= 99);
        let analyzer = art.analyzer().unwrap();
        for a in art.prepared.tested_vectors.iter().take(10) {
            sums.push(
                analyzer
                    .probe(&art.bank().feature_map(a).unwrap())
                    .unwrap()
                    .weight_sum(),
            );
        }
    }
    let mean = sums.iter().sum::<f64>() / sums.len() as f64;
    assert!((mean - 1.0).abs() <= 0.1, "mean weight sum {mean}");
}

#[test]
fn second_refinement_pass_is_stable() {
    let data = acceptance_dataset();
    let cfg = ExperimentConfig::default();
    let mut changes = Vec::new();
    for seed in 0..10 {
        let prepared = skg::harness::prepare(&data, &cfg, seed).unwrap();
        let mut opts = SelectOptions::new(cfg.eta, cfg.num_features);
        opts.refine = true;
        opts.seed = seed;
        opts.probes = prepared.tested_vectors.clone();
        let first = select(prepared.train.vectors(), &opts).unwrap();
        let noise = measure_noise_up(prepared.train.vectors(), &opts, first.sigma_sq_ed).unwrap();
        let second = sigma_ed(first.d_sq_max, noise, cfg.eta).unwrap();
        changes.push((second / first.sigma_sq_ed - 1.0).abs());
    }
    let mean = changes.iter().sum::<f64>() / changes.len() as f64;
    assert!(mean < 0.20, "mean relative change {mean}, per seed {changes:?}");
}

#[test]
fn identical_values_are_recovered_in_averaging_range() {
    let mut graph = Graph::new(false);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for i in 0..20u64 {
        for j in i + 1..20 {
            if rng.random_bool(0.3) {
                graph.add_edge(NodeId::from(i), NodeId::from(j), 1.0).unwrap();
            }
        }
    }
    let values = NodeValues::new((0..20u64).map(|i| (NodeId::from(i), 2.5)).collect()).unwrap();
    let data = Dataset::new(graph, values);
    let cfg = ExperimentConfig {
        sample_fraction: 0.5,
        ..ExperimentConfig::default()
    };
    let report = select_for_run(&data, &cfg, 1, false).unwrap();
    let run = skg::run_once(&data, &cfg, 10.0 * report.sigma_sq_da, 1, false).unwrap();
    assert!(run.gnmse < 0.05, "GNMSE {}", run.gnmse);
}

#[test]
fn chaos_range_weights_mostly_inside_noise_band() {
    let data = acceptance_dataset();
    let cfg = ExperimentConfig::default();
    let run = skg::run_once(&data, &cfg, 0.1, 4, true).unwrap();
    let art = run.artifacts.as_ref().unwrap();
    let node = art.prepared.split.tested[0].clone();
    let rows = export_bf_trace(Some(art), &node).unwrap();
    assert_eq!(rows.len(), art.trace.len());
    // refined ceiling of this trace: |min F|
    let noise = rows.iter().map(|r| r.f).fold(f64::INFINITY, f64::min).abs();
    let inside = rows.iter().filter(|r| r.f.abs() <= noise).count();
    assert!(inside as f64 >= 0.9 * rows.len() as f64, "{inside}/{}", rows.len());
}

#[test]
fn averaging_range_weights_follow_geometric_decay() {
    let data = acceptance_dataset();
    let cfg = ExperimentConfig::default();
    let report = select_for_run(&data, &cfg, 4, false).unwrap();
    let run = skg::run_once(&data, &cfg, 50.0 * report.sigma_sq_da, 4, true).unwrap();
    let art = run.artifacts.as_ref().unwrap();
    let node = art.prepared.split.tested[0].clone();
    let rows = export_bf_trace(Some(art), &node).unwrap();
    let t = rows.len();
    let eta = cfg.eta;
    for r in &rows[t - 20..] {
        let expected = 2.0 * eta * (1.0 - 2.0 * eta).powi((t - r.step) as i32);
        assert!(
            (r.f / expected - 1.0).abs() <= 0.2,
            "step {}: F {} vs {expected}",
            r.step,
            r.f
        );
    }
}

#[test]
fn scatter_has_one_row_per_pair() {
    let data = acceptance_dataset();
    let prepared = skg::harness::prepare(&data, &ExperimentConfig::default(), 0).unwrap();
    let n = prepared.train.len();
    assert_eq!(export_scatter(&prepared.train).unwrap().len(), n * (n - 1) / 2);
}
