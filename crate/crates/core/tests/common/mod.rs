//! Random datasets shared by the integration tests.

#![allow(dead_code)]

use pdm::data::{build_working, Label, SparsePattern, WorkingDataset};
use rand::Rng;

/// Points in `[-1, 1]^dim` labelled by a random affine rule. With
/// `min_gap > 0` points closer than that to the rule are redrawn, so the set
/// is separable through the origin after augmentation. `flip` is the
/// probability of flipping a label afterwards.
pub fn random_patterns<R: Rng>(rng: &mut R, m: usize, dim: usize, min_gap: f64, flip: f64) -> Vec<SparsePattern> {
    let mut u: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // unit normal, so that `min_gap` is always attainable
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    u.iter_mut().for_each(|v| *v /= norm);
    let b: f64 = rng.gen_range(-0.3..0.3);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let x: Vec<f64> = (0..dim)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let s: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b;
        if s.abs() < min_gap {
            continue;
        }
        let mut label = if s > 0.0 { Label::Pos } else { Label::Neg };
        if rng.gen_bool(flip) {
            label = if label == Label::Pos { Label::Neg } else { Label::Pos };
        }
        let features = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        out.push(SparsePattern::new(features, label).unwrap());
    }
    out
}

/// A separable working dataset: by construction when `delta == 0`, through
/// the extension otherwise (with some label noise).
pub fn random_working<R: Rng>(rng: &mut R, m: usize, dim: usize, delta: f64) -> WorkingDataset {
    let ps = if delta == 0.0 {
        random_patterns(rng, m, dim, 0.1, 0.0)
    } else {
        random_patterns(rng, m, dim, 0.0, 0.05)
    };
    build_working(&ps, delta, 1.0, 1.0).unwrap()
}
