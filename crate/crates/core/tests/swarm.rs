//! Swarm search on analytic objectives.

use std::sync::atomic::{AtomicUsize, Ordering};

use mltc::hypertune::{decode, pso_optimize, trace_to_text, HyperSpace, SwarmConfig};

fn neg_sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

/// 100 iterations with early stopping disabled (a zero threshold can never
/// be missed).
fn sphere_cfg(seed: u64, workers: usize) -> SwarmConfig<f64> {
    SwarmConfig {
        max_iters: 100,
        threshold: 0.0,
        parallelism: workers,
        ..SwarmConfig::standard(seed)
    }
}

#[test]
fn sphere_converges_on_most_seeds() {
    let space = HyperSpace::cube(4, -5.0, 5.0).unwrap();
    let mut solved = 0;
    for seed in 0..5 {
        let r = pso_optimize(&space, neg_sphere, &sphere_cfg(seed, 1)).unwrap();
        assert_eq!(r.trace.len(), 100);
        assert!(r.trace.windows(2).all(|w| w[1].gbest_score >= w[0].gbest_score));
        solved += usize::from(-r.best_score <= 1e-2);
    }
    assert!(solved >= 4, "{solved} of 5 seeds converged");
}

#[test]
fn worker_count_does_not_change_results() {
    let space = HyperSpace::cube(4, -5.0, 5.0).unwrap();
    for seed in 0..5 {
        let serial = pso_optimize(&space, neg_sphere, &sphere_cfg(seed, 1)).unwrap();
        let parallel = pso_optimize(&space, neg_sphere, &sphere_cfg(seed, 4)).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(
            trace_to_text(&serial, &space).unwrap(),
            trace_to_text(&parallel, &space).unwrap()
        );
    }
}

#[test]
fn scripted_improvements_stop_after_second_iteration() {
    let space = HyperSpace::cube(2, 0.0, 1.0).unwrap();
    let cfg = SwarmConfig {
        max_iters: 10,
        ..SwarmConfig::standard(0)
    };
    // gbest per iteration: 0.5, 0.5005, 1.5, ...
    let script = [0.5, 0.5005, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.5];
    let calls = AtomicUsize::new(0);
    let r = pso_optimize(
        &space,
        |_| script[calls.fetch_add(1, Ordering::SeqCst) / cfg.particles],
        &cfg,
    )
    .unwrap();
    assert_eq!(r.trace.len(), 2);
    assert!(r.stopped_early);
    assert_eq!(r.best_score, 0.5005);
}

#[test]
fn default_space_decodes_within_bounds() {
    let space = HyperSpace::<f64>::standard();
    let lows: Vec<f64> = space.dims().iter().map(|d| d.lower).collect();
    let highs: Vec<f64> = space.dims().iter().map(|d| d.upper).collect();
    for pos in [lows, highs] {
        let c = decode(&pos, &space).unwrap();
        c.validate().unwrap();
        assert!((1e-4..=1e-3).contains(&c.learning_rate));
    }
}
