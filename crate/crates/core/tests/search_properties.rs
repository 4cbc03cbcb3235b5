mod common;

use common::{fd_gradient, rel_err, uniform};
use nac_core::graph::{synth_graph, CitationParams, Split, SynthKind};
use nac_core::search::{alpha_gradient, nac_objective, search, SearchConfig, SearchMode};
use nac_core::supernet::{argmax_abs, build_supernet, derive_architecture, Trainable};
use nac_core::{Graph, Matrix, NullClock, SearchSpaceConfig};
use proptest::prelude::*;

fn sbm(n: usize, seed: u64) -> (Graph, Split) {
    synth_graph(
        &SynthKind::Sbm {
            blocks: 2,
            n,
            p_in: 0.4,
            p_out: 0.05,
            feature_noise: 0.5,
        },
        seed,
    )
    .unwrap()
}

fn space(hidden: usize) -> SearchSpaceConfig {
    SearchSpaceConfig {
        hidden_dim: hidden,
        ..SearchSpaceConfig::default()
    }
}

fn alpha_only() -> Trainable {
    Trainable {
        alpha: true,
        ..Trainable::default()
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let (g, split) = sbm(12, 4);
    let mut net = build_supernet(&space(4), &g, 9).unwrap();
    // Keep every coordinate well away from the L1 kink.
    net.alpha = uniform(3, 7, 5).map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 });
    for rho in [0.0, 1e-3, 0.5] {
        let obj = nac_objective(&net, &g, &split, rho, alpha_only(), None).unwrap();
        let (_, _, analytic) = alpha_gradient(&net, obj).unwrap();
        let numeric = fd_gradient(&net.alpha, |a| {
            let mut probe = net.clone();
            probe.alpha = a.clone();
            nac_objective(&probe, &g, &split, rho, Trainable::default(), None).unwrap().value()
        });
        let err = rel_err(&analytic, &numeric);
        assert!(err <= 1e-5, "rho {rho}: relative error {err:e}");
    }
}

#[test]
fn l1_term_adds_rho_times_sign() {
    let (g, split) = sbm(12, 4);
    let mut net = build_supernet(&space(4), &g, 2).unwrap();
    net.alpha = uniform(3, 7, 6);
    net.alpha.set(1, 2, 0.0);
    let base = alpha_gradient(&net, nac_objective(&net, &g, &split, 0.0, alpha_only(), None).unwrap()).unwrap().2;
    let with = alpha_gradient(&net, nac_objective(&net, &g, &split, 0.25, alpha_only(), None).unwrap()).unwrap().2;
    for r in 0..3 {
        for c in 0..7 {
            let a = net.alpha.get(r, c);
            let sign = if a > 0.0 { 1.0 } else if a < 0.0 { -1.0 } else { 0.0 };
            assert!((with.get(r, c) - base.get(r, c) - 0.25 * sign).abs() <= 1e-14);
        }
    }
}

#[test]
fn initial_cross_entropy_is_near_uniform_on_cora_fixture() {
    let (mut g, split) = synth_graph(&SynthKind::Citation(CitationParams::cora_like()), 0).unwrap();
    g.row_normalize_features();
    let uniform_ce = (7.0_f64).ln();
    for seed in 0..3 {
        let net = build_supernet(&space(64), &g, seed).unwrap();
        let ce = nac_objective(&net, &g, &split, 0.0, Trainable::default(), None).unwrap().ce;
        assert!((ce - uniform_ce).abs() <= 0.5, "seed {seed}: ce {ce}");
    }
}

#[test]
fn identical_runs_give_identical_traces() {
    let (g, split) = sbm(40, 1);
    for mode in SearchMode::ALL {
        let cfg = SearchConfig {
            space: space(8),
            mode,
            epochs: 6,
            seed: 3,
            track_validation: true,
            ..SearchConfig::default()
        };
        let a = search(&cfg, &g, &split, &NullClock).unwrap();
        let b = search(&cfg, &g, &split, &NullClock).unwrap();
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.network.alpha, b.network.alpha);
    }
}

#[test]
fn nac_plus_only_moves_alpha_and_output_layer() {
    let (g, split) = sbm(40, 1);
    let cfg = SearchConfig {
        space: space(8),
        mode: SearchMode::NacPlus,
        epochs: 5,
        ..SearchConfig::default()
    };
    let before = build_supernet(&cfg.space, &g, cfg.seed).unwrap();
    let out = search(&cfg, &g, &split, &NullClock).unwrap();
    assert_eq!(out.network.layer_weights, before.layer_weights);
    assert_eq!(out.network.operator_params, before.operator_params);
    assert_eq!(out.network.input_proj, before.input_proj);
    assert_ne!(out.network.output_weights, before.output_weights);
    assert_eq!(out.initial_weight_hash, before.fixed_weight_hash());
}

#[test]
fn updating_mode_changes_fixed_weights() {
    let (g, split) = sbm(40, 1);
    let cfg = SearchConfig {
        space: space(8),
        mode: SearchMode::NacUpdating,
        epochs: 3,
        ..SearchConfig::default()
    };
    let out = search(&cfg, &g, &split, &NullClock).unwrap();
    assert_ne!(out.network.fixed_weight_hash(), out.initial_weight_hash);
}

fn near_zero(alpha: &Matrix) -> usize {
    alpha.data().iter().filter(|v| v.abs() < 1e-3).count()
}

#[test]
fn sparsity_is_monotone_in_rho_at_defaults() {
    let (g, split) = sbm(40, 2);
    let mut counts = Vec::new();
    let mut smallest = Vec::new();
    for rho in [0.001, 0.1, 1.0, 10.0] {
        let cfg = SearchConfig {
            space: space(8),
            rho,
            ..SearchConfig::default()
        };
        let alpha = search(&cfg, &g, &split, &NullClock).unwrap().network.alpha;
        counts.push(near_zero(&alpha));
        smallest.push(alpha.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
    }
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?} (smallest |alpha| {smallest:?})");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_ignores_positive_scale(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let alpha = uniform(3, 7, seed);
        prop_assert_eq!(argmax_abs(&alpha), argmax_abs(&alpha.scale(c)));
    }

    #[test]
    fn derived_architecture_ignores_positive_scale(seed in 0u64..8, c in 1e-2f64..1e2) {
        let (g, _) = sbm(12, 4);
        let mut net = build_supernet(&space(4), &g, seed).unwrap();
        net.alpha = uniform(3, 7, seed);
        let a = derive_architecture(&net);
        net.alpha = net.alpha.scale(c);
        prop_assert_eq!(a.indices, derive_architecture(&net).indices);
    }
}
