//! Central finite differences against the probes' analytic gradients.

use ndarray::Array2;
use pareto_probe::corpus::TaskKind;
use pareto_probe::probes::{Architecture, Gradient, Probe, ProbeSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::random_matrix;

pub const STEP: f64 = 1e-4;

pub enum Input {
    /// Classifier rows with one target each.
    Rows(Array2<f64>, Vec<usize>),
    /// One sentence with gold heads.
    Sentence(Array2<f64>, Vec<usize>),
}

impl Input {
    fn x(&self) -> &Array2<f64> {
        match self {
            Input::Rows(x, _) | Input::Sentence(x, _) => x,
        }
    }

    fn with_x(&self, x: Array2<f64>) -> Input {
        match self {
            Input::Rows(_, t) => Input::Rows(x, t.clone()),
            Input::Sentence(_, h) => Input::Sentence(x, h.clone()),
        }
    }
}

pub fn gradient(probe: &Probe, input: &Input) -> Gradient {
    match input {
        Input::Rows(x, t) => probe.classify_grad(x.view(), t, None),
        Input::Sentence(x, h) => probe.parse_grad(x.view(), h, None),
    }
}

fn loss(probe: &Probe, input: &Input) -> f64 {
    gradient(probe, input).loss
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, with a floor so all-zero gradients compare equal.
pub fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = (analytic - numeric).mapv(|v| v * v).sum().sqrt();
    let scale = analytic.mapv(|v| v * v).sum().sqrt().max(numeric.mapv(|v| v * v).sum().sqrt()).max(1e-8);
    diff / scale
}

/// Largest relative error over every parameter tensor and the input.
pub fn max_relative_error(probe: &Probe, input: &Input) -> f64 {
    let analytic = gradient(probe, input);
    let mut worst: f64 = 0.0;
    let mut p = probe.clone();
    for (k, g) in analytic.params.iter().enumerate() {
        let mut numeric = Array2::zeros(g.dim());
        for idx in ndarray::indices(g.dim()) {
            let orig = p.params()[k][idx];
            p.params_mut()[k][idx] = orig + STEP;
            let plus = loss(&p, input);
            p.params_mut()[k][idx] = orig - STEP;
            let minus = loss(&p, input);
            p.params_mut()[k][idx] = orig;
            numeric[idx] = (plus - minus) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(g, &numeric));
    }
    let x = input.x();
    let mut numeric = Array2::zeros(x.dim());
    for idx in ndarray::indices(x.dim()) {
        let mut xp = x.clone();
        xp[idx] += STEP;
        let plus = loss(probe, &input.with_x(xp));
        let mut xm = x.clone();
        xm[idx] -= STEP;
        let minus = loss(probe, &input.with_x(xm));
        numeric[idx] = (plus - minus) / (2.0 * STEP);
    }
    worst.max(relative_error(&analytic.input, &numeric))
}

/// A probe with every parameter redrawn from N(0, 0.5²), so no gradient
/// path is trivially zero.
pub fn randomized(spec: Architecture, task: TaskKind, d: usize, labels: usize, seed: u64) -> Probe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = ProbeSpec { id: 0, arch: spec }.build(task, d, labels, seed).unwrap();
    for p in probe.params_mut() {
        *p = random_matrix(p.nrows(), p.ncols(), &mut rng) * 0.5;
    }
    probe
}

pub fn classifier_input(n: usize, d: usize, labels: usize, seed: u64) -> Input {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = random_matrix(n, d, &mut rng);
    let t = (0..n).map(|_| rng.random_range(0..labels)).collect();
    Input::Rows(x, t)
}

/// A sentence of `n` tokens with valid, non-self heads.
pub fn sentence_input(n: usize, d: usize, seed: u64) -> Input {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let x = random_matrix(n, d, &mut rng);
    let heads = (1..=n)
        .map(|j| loop {
            let h = rng.random_range(0..=n);
            if h != j {
                break h;
            }
        })
        .collect();
    Input::Sentence(x, heads)
}
