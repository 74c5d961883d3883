mod common;

use common::gradcheck::{classifier_input, max_relative_error, randomized, sentence_input};
use common::random_matrix;
use pareto_probe::complexity::nuclear_norm;
use pareto_probe::corpus::TaskKind;
use pareto_probe::linalg::nuclear_subgradient;
use pareto_probe::probes::Architecture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const D: usize = 16;
const LABELS: usize = 5;
const BATCH: usize = 8;
const TOL: f64 = 1e-4;

#[test]
fn linear_probe_gradient() {
    for seed in 0..3 {
        let probe = randomized(Architecture::Linear { rank: None }, TaskKind::Posl, D, LABELS, seed);
        let err = max_relative_error(&probe, &classifier_input(BATCH, D, LABELS, seed));
        assert!(err <= TOL, "seed {seed}: {err}");
    }
}

#[test]
fn factorized_linear_probe_gradient() {
    let probe = randomized(Architecture::Linear { rank: Some(3) }, TaskKind::Posl, D, LABELS, 4);
    let err = max_relative_error(&probe, &classifier_input(BATCH, D, LABELS, 4));
    assert!(err <= TOL, "{err}");
}

#[test]
fn two_layer_mlp_gradient() {
    for seed in 0..3 {
        let arch = Architecture::Mlp { layers: 2, hidden: 12, dropout: 0.0 };
        let probe = randomized(arch, TaskKind::Posl, D, LABELS, seed);
        let err = max_relative_error(&probe, &classifier_input(BATCH, D, LABELS, seed));
        assert!(err <= TOL, "seed {seed}: {err}");
    }
}

#[test]
fn dal_sized_input_gradient() {
    let probe = randomized(Architecture::Mlp { layers: 1, hidden: 6, dropout: 0.0 }, TaskKind::Dal, 2 * 4, LABELS, 9);
    let err = max_relative_error(&probe, &classifier_input(BATCH, 8, LABELS, 9));
    assert!(err <= TOL, "{err}");
}

#[test]
fn bilinear_parser_gradient() {
    for seed in 0..2 {
        let probe = randomized(Architecture::Linear { rank: None }, TaskKind::Parse, D, 0, seed);
        let err = max_relative_error(&probe, &sentence_input(BATCH, D, seed));
        assert!(err <= TOL, "seed {seed}: {err}");
    }
    let probe = randomized(Architecture::Linear { rank: Some(2) }, TaskKind::Parse, D, 0, 7);
    let err = max_relative_error(&probe, &sentence_input(BATCH, D, 7));
    assert!(err <= TOL, "{err}");
}

#[test]
fn mlp_biaffine_parser_gradient() {
    for seed in 0..2 {
        let probe = randomized(Architecture::Mlp { layers: 1, hidden: 8, dropout: 0.0 }, TaskKind::Parse, D, 0, seed);
        let err = max_relative_error(&probe, &sentence_input(BATCH, D, seed));
        assert!(err <= TOL, "seed {seed}: {err}");
    }
}

#[test]
fn nuclear_subgradient_matches_directional_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for (m, n) in [(6, 4), (3, 7), (5, 5)] {
        let w = random_matrix(m, n, &mut rng);
        let g = nuclear_subgradient(w.view()).unwrap();
        for _ in 0..5 {
            let dir = random_matrix(m, n, &mut rng);
            let plus = nuclear_norm((&w + &(&dir * h)).view()).unwrap();
            let minus = nuclear_norm((&w - &(&dir * h)).view()).unwrap();
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = (&g * &dir).sum();
            assert!((numeric - analytic).abs() <= 1e-5, "{m}x{n}: {numeric} vs {analytic}");
        }
    }
}
