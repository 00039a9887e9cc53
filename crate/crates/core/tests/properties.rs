//! Invariants of the estimators, oracles and experiment runners over random inputs.

use lpcluster::blocks::{lp_modulus, order_stats, partition, PExponent};
use lpcluster::estimators::{
    cluster_size_probs, estimate_cluster_statistic, estimate_deterministic_threshold, ClusterFunctional,
    EstimatorConfig, FunctionalKind, HillCorrection,
};
use lpcluster::exec::Execution;
use lpcluster::experiments::{
    run_heatmap, run_mc, EstimatorSpec, FunctionalChoice, HeatmapConfig, McConfig,
    OracleSettings,
};
use lpcluster::models::{simulate, GaussianShift, ModelSpec};
use lpcluster::oracles::{
    model_truth, oracle_linear_cp, oracle_linear_pi, oracle_linear_theta, sample_kesten_q,
    sample_q_from_multipliers, LinearClusterOracle, OracleOptions, DEFAULT_HORIZON_EPS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Symmetric heavy-tailed values from uniforms, so proptest can shrink them.
fn heavy_series(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.0f64..1.0, any::<bool>()), min..=max).prop_map(|v| {
        v.into_iter()
            .map(|(u, neg)| {
                let x = (1.0 - u).powf(-1.0 / 1.2);
                if neg {
                    -x
                } else {
                    x
                }
            })
            .collect()
    })
}

fn builtins(alpha: f64) -> Vec<ClusterFunctional> {
    vec![
        ClusterFunctional::extremal_index(alpha),
        ClusterFunctional::sum_index(alpha),
        ClusterFunctional::cluster_size(1, alpha),
        ClusterFunctional::cluster_size(2, alpha),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn estimates_are_scale_invariant(x in heavy_series(60, 300), c in 1e-4f64..1e4, alpha in 0.5f64..3.0, k in 1usize..6) {
        let cfg = EstimatorConfig::alpha_blocks(alpha, k);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        for f in builtins(alpha) {
            let a = estimate_cluster_statistic(&x, &f, &cfg);
            let b = estimate_cluster_statistic(&cx, &f, &cfg);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a.estimate - b.estimate).abs() <= 1e-10, "{} {} vs {}", f.label(), a.estimate, b.estimate),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn cluster_sizes_telescope_to_extremal_index(x in heavy_series(60, 300), alpha in 0.5f64..3.0, k in 1usize..6) {
        let cfg = EstimatorConfig::alpha_blocks(alpha, k);
        let Ok(theta) = estimate_cluster_statistic(&x, &ClusterFunctional::extremal_index(alpha), &cfg) else {
            return Ok(());
        };
        let pis = cluster_size_probs(&x, &cfg, theta.b).unwrap();
        let total: f64 = pis.iter().map(|r| r.estimate).sum();
        prop_assert!((total - theta.estimate).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&theta.estimate));
        for r in &pis {
            prop_assert!(r.estimate >= -1e-15 && r.estimate <= 1.0);
        }
    }

    #[test]
    fn exactly_k_blocks_exceed(x in heavy_series(60, 300), alpha in 0.5f64..3.0, k in 1usize..6) {
        let cfg = EstimatorConfig::alpha_blocks(alpha, k);
        let Ok(r) = estimate_cluster_statistic(&x, &ClusterFunctional::extremal_index(alpha), &cfg) else {
            return Ok(());
        };
        let os = order_stats(&partition(&x, r.b).unwrap(), PExponent::Finite(alpha));
        prop_assert_eq!(os.norms.iter().filter(|&&v| v > r.threshold).count(), k);
        let one = estimate_cluster_statistic(&x, &ClusterFunctional::new(FunctionalKind::ConstantOne, alpha), &cfg).unwrap();
        prop_assert_eq!(one.estimate, 1.0);
        prop_assert_eq!(one.plug_in_variance, 0.0);
    }

    #[test]
    fn sum_index_dominates_extremal_index(x in heavy_series(60, 300), alpha in 0.5f64..3.0, k in 1usize..6) {
        let cfg = EstimatorConfig::alpha_blocks(alpha, k);
        let (Ok(t), Ok(s)) = (
            estimate_cluster_statistic(&x, &ClusterFunctional::extremal_index(alpha), &cfg),
            estimate_cluster_statistic(&x, &ClusterFunctional::sum_index(alpha), &cfg),
        ) else {
            return Ok(());
        };
        prop_assert!(s.estimate >= t.estimate);
    }

    #[test]
    fn deterministic_threshold_at_sample_level_agrees(x in heavy_series(60, 300), alpha in 0.5f64..3.0, k in 1usize..6) {
        let cfg = EstimatorConfig::alpha_blocks(alpha, k);
        for f in builtins(alpha) {
            let Ok(r) = estimate_cluster_statistic(&x, &f, &cfg) else {
                return Ok(());
            };
            let d = estimate_deterministic_threshold(&x, &f, cfg.p, r.threshold, 1.0, r.b).unwrap();
            prop_assert_eq!(d.exceedances, k);
            prop_assert_eq!(d.estimate.to_bits(), r.estimate.to_bits());
        }
    }

    #[test]
    fn functionals_are_shift_and_scale_invariant(
        block in heavy_series(1, 20),
        pad_left in 0usize..5,
        pad_right in 0usize..5,
        c in 1e-3f64..1e3,
        alpha in 0.5f64..3.0,
    ) {
        let mut padded = vec![0.0; pad_left];
        padded.extend_from_slice(&block);
        padded.extend(std::iter::repeat_n(0.0, pad_right));
        let scaled: Vec<f64> = block.iter().map(|v| c * v).collect();
        for f in builtins(alpha) {
            let v = f.eval(&block);
            prop_assert!((f.eval(&padded) - v).abs() <= 1e-12);
            prop_assert!((f.eval(&scaled) - v).abs() <= 1e-10 * v.abs().max(1.0));
            if !matches!(f.kind, FunctionalKind::SumIndex) {
                prop_assert!((-1e-15..=1.0 + 1e-12).contains(&v), "{} {v}", f.label());
            } else if alpha >= 1.0 {
                prop_assert!(v >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn linear_oracle_invariants(
        coeffs in prop::collection::vec(-3.0f64..3.0, 1..10),
        alpha in 0.3f64..4.0,
        p in 0.2f64..6.0,
        dp in 0.0f64..6.0,
    ) {
        prop_assume!(coeffs.iter().any(|c| c.abs() > 1e-3));
        let theta = oracle_linear_theta(&coeffs, alpha).unwrap();
        let pis: f64 = (1..=coeffs.len() + 1).map(|j| oracle_linear_pi(&coeffs, alpha, j).unwrap()).sum();
        prop_assert!((pis - theta).abs() <= 1e-15);
        let lo = oracle_linear_cp(&coeffs, alpha, PExponent::Finite(p)).unwrap();
        let hi = oracle_linear_cp(&coeffs, alpha, PExponent::Finite(p + dp)).unwrap();
        prop_assert!(hi <= lo * (1.0 + 1e-12));
        prop_assert!(oracle_linear_cp(&coeffs, alpha, PExponent::Infinity).unwrap() <= hi * (1.0 + 1e-12));
        // time change: the indicator of a nonzero origin integrates to one
        let cluster = LinearClusterOracle::new(&coeffs, alpha).unwrap().cluster();
        let mass: f64 = cluster.iter().map(|w| w.abs().powf(alpha)).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn q_samples_are_normalized(seed in any::<u64>(), mu in -1.5f64..-0.1, sigma in 0.3f64..1.5) {
        let shift = GaussianShift { mu, sigma };
        let alpha = shift.tail_index();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = sample_kesten_q(&shift, DEFAULT_HORIZON_EPS, &mut rng).unwrap();
        let mass: f64 = q.weights.iter().map(|w| w.powf(alpha)).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-10);
        prop_assert!(q.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
        prop_assert!(q.pareto_y >= 1.0);
        prop_assert!(q.origin < q.weights.len());
    }
}

#[test]
fn degenerate_multiplier_gives_point_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = sample_q_from_multipliers(|_| 0.0, 1.3, DEFAULT_HORIZON_EPS, &mut rng).unwrap();
    assert_eq!(q.weights, vec![1.0]);
    assert_eq!(q.origin, 0);
}

#[test]
fn time_change_on_random_filters() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    use rand::Rng;
    for _ in 0..10 {
        let len = rng.random_range(1..8);
        let phi: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = rng.random_range(0.5..2.5);
        let num: f64 = phi.iter().map(|p: &f64| p.abs().powf(alpha)).sum();
        let cluster = LinearClusterOracle::new(&phi, alpha).unwrap().cluster();
        let den = lp_modulus(&phi, PExponent::Finite(alpha)).powf(alpha);
        assert!((num / den - 1.0).abs() < 1e-12);
        assert!((cluster.iter().map(|w| w.abs().powf(alpha)).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn small_mc(model: ModelSpec, seed: u64) -> McConfig {
    McConfig {
        model,
        n: 2000,
        reps: 25,
        estimator: EstimatorSpec::alpha_blocks(FunctionalChoice::ClusterSize { j: 1 }, 6),
        master_seed: seed,
        oracle: Some(OracleSettings {
            reps: 1000,
            ..OracleSettings::default()
        }),
    }
}

#[test]
fn mse_is_variance_plus_squared_bias() {
    for model in [ModelSpec::Ar1 { phi: 0.4, alpha: 1.5 }, ModelSpec::kesten_reference()] {
        let r = run_mc(&small_mc(model, 5), Execution::Parallel).unwrap();
        let truth = r.oracle.as_ref().unwrap().value;
        let expect = r.sd * r.sd + (r.mean - truth).powi(2);
        let mse = r.mse.unwrap();
        assert!((mse - expect).abs() <= 1e-12 * expect.max(1e-300), "{mse} vs {expect}");
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = McConfig {
        reps: 2,
        ..small_mc(ModelSpec::kesten_reference(), 6)
    };
    assert_eq!(run_mc(&cfg, Execution::Parallel).unwrap(), run_mc(&cfg, Execution::Parallel).unwrap());
    let m = ModelSpec::Ar1 { phi: 0.3, alpha: 2.0 };
    assert_eq!(simulate(&m, 500, 1).unwrap(), simulate(&m, 500, 1).unwrap());
    assert_ne!(simulate(&m, 500, 1).unwrap(), simulate(&m, 500, 2).unwrap());
}

fn small_heatmap() -> HeatmapConfig {
    HeatmapConfig {
        model: ModelSpec::Ar1 { phi: 0.5, alpha: 1.0 },
        n: 3000,
        reps: 20,
        k_grid: vec![4, 8, 16],
        k_prime_grid: vec![100, 300],
        functional: FunctionalChoice::ExtremalIndex,
        correction: HillCorrection::None,
        master_seed: 9,
        oracle: OracleSettings::default(),
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mc = small_mc(ModelSpec::kesten_reference(), 8);
    let hm = small_heatmap();
    let truth = |exec| {
        model_truth(
            &ModelSpec::kesten_reference(),
            &ClusterFunctional::extremal_index(1.0),
            &OracleOptions {
                reps: 5000,
                ..OracleOptions::default()
            },
            exec,
        )
        .unwrap()
    };
    let (mc_seq, hm_seq, truth_seq) = (
        run_mc(&mc, Execution::Sequential).unwrap(),
        run_heatmap(&hm, Execution::Sequential).unwrap(),
        truth(Execution::Sequential),
    );
    #[cfg(feature = "parallel")]
    for threads in [1, 2, 7] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            assert_eq!(run_mc(&mc, Execution::Parallel).unwrap(), mc_seq);
            assert_eq!(run_heatmap(&hm, Execution::Parallel).unwrap(), hm_seq);
            assert_eq!(truth(Execution::Parallel), truth_seq);
        });
    }
    assert_eq!(run_mc(&mc, Execution::Parallel).unwrap(), mc_seq);
}

#[test]
fn heatmap_cells_share_series() {
    // every cell sees the same series, so a column computed alone matches
    // that column of a wider grid
    let full = run_heatmap(&small_heatmap(), Execution::Parallel).unwrap();
    let one = run_heatmap(
        &HeatmapConfig {
            k_prime_grid: vec![300],
            ..small_heatmap()
        },
        Execution::Parallel,
    )
    .unwrap();
    for &k in &full.k_values {
        assert_eq!(full.cell(k, 300), one.cell(k, 300));
    }
}
