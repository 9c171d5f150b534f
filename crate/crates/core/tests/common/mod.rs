#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solvability::mlp::{Activation, LabeledDataset, MlpModel, WeightInit};
use solvability::powerflow::SolvabilityLabel;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_json(name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

/// Receiving-end voltage of a lossless line with reactance `x` feeding a
/// unity power factor load `p` from a 1 pu source, or `None` past the nose.
pub fn two_bus_voltage(p: f64, x: f64) -> Option<f64> {
    let disc = 1.0 - 4.0 * (p * x).powi(2);
    (disc >= 0.0).then(|| ((1.0 + disc.sqrt()) / 2.0).sqrt())
}

/// Symmetric relative error with a small floor for near-zero gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest relative error between backprop and central differences over
/// every weight and bias of `model` on `data`.
pub fn gradient_check(model: &MlpModel, data: &LabeledDataset, h: f64) -> f64 {
    let rows: Vec<usize> = (0..data.len()).collect();
    let g = model.gradient(data, &rows).unwrap();
    let mut worst = 0.0f64;
    let mut m = model.clone();
    for k in 0..model.layers().len() {
        let (fi, fo) = model.layers()[k].weights.dim();
        for i in 0..fi {
            for j in 0..fo {
                let w0 = model.layers()[k].weights[[i, j]];
                m.layers_mut()[k].weights[[i, j]] = w0 + h;
                let up = m.loss(data).unwrap();
                m.layers_mut()[k].weights[[i, j]] = w0 - h;
                let dn = m.loss(data).unwrap();
                m.layers_mut()[k].weights[[i, j]] = w0;
                worst = worst.max(rel_err((up - dn) / (2.0 * h), g.layers[k].weights[[i, j]]));
            }
        }
        for j in 0..fo {
            let b0 = model.layers()[k].bias[j];
            m.layers_mut()[k].bias[j] = b0 + h;
            let up = m.loss(data).unwrap();
            m.layers_mut()[k].bias[j] = b0 - h;
            let dn = m.loss(data).unwrap();
            m.layers_mut()[k].bias[j] = b0;
            worst = worst.max(rel_err((up - dn) / (2.0 * h), g.layers[k].bias[j]));
        }
    }
    worst
}

/// A random small model (1-2 hidden layers, random biases) and a random
/// dataset with both classes present.
pub fn random_model_and_data(seed: u64) -> (MlpModel, LabeledDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=5);
    let mut sizes = vec![d];
    for _ in 0..rng.random_range(1..=2) {
        sizes.push(rng.random_range(1..=6));
    }
    sizes.push(2);
    let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Relu };
    let mut model = MlpModel::init(&sizes, act, WeightInit::Xavier, &mut rng).unwrap();
    for layer in model.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let n = rng.random_range(4..=12);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0));
    let labels = (0..n)
        .map(|i| if i % 2 == 0 { SolvabilityLabel::Solvable } else { SolvabilityLabel::NonSolvable })
        .collect();
    (model, LabeledDataset::new(x, labels).unwrap())
}

/// Toy oracle geometry: solvable inside the disc of radius 0.35 centred at
/// (0.5, 0.5) in normalized coordinates.
pub fn disc_label(x: f64, y: f64) -> SolvabilityLabel {
    if (x - 0.5).powi(2) + (y - 0.5).powi(2) < 0.35f64.powi(2) {
        SolvabilityLabel::Solvable
    } else {
        SolvabilityLabel::NonSolvable
    }
}

pub fn uniform_points(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, 2), |_| rng.random::<f64>())
}
