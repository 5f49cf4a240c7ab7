//! Plain-text model files.
//!
//! ```text
//! pdm-model 1
//! explicit_dim 4
//! rho 1
//! delta 1
//! scale 1
//! gamma_prime_d 0.1234
//! t_c 57
//! algorithm pdm
//! epsilon 0.01
//! seed 0
//! bias 0.75
//! weights 2
//! 1 0.5
//! 3 -2
//! ```
//!
//! Feature indices are 1-based like the data files. Only the explicit
//! weights are stored; `bias` multiplies `rho`. Floats are written in the
//! shortest form that parses back to the same value, so load then save is
//! byte-identical.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{SparsePattern, WorkingDataset};
use crate::driver::{Algorithm, TrainReport};
use crate::state::WeightState;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "pdm-model";

#[derive(Debug, Error, PartialEq)]
#[error("model file line {line}: {msg}")]
pub struct ModelError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    /// Feature dimension plus the augmentation coordinate.
    pub explicit_dim: usize,
    pub rho: f64,
    pub delta: f64,
    pub scale: f64,
    pub gamma_prime_d: f64,
    pub t_c: u64,
    pub algorithm: Algorithm,
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub bias: f64,
    /// `(0-based feature index, weight)`, ascending, nonzero only.
    pub weights: Vec<(u32, f64)>,
}

impl Model {
    pub fn from_training(ds: &WorkingDataset, state: &WeightState, report: &TrainReport, seed: u64) -> Self {
        let w = state.explicit_weights();
        let d = ds.feature_dim();
        let weights = w[..d]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        Self {
            explicit_dim: ds.explicit_dim(),
            rho: ds.rho(),
            delta: ds.delta(),
            scale: ds.scale(),
            gamma_prime_d: report.gamma_prime_d,
            t_c: report.t_c,
            algorithm: report.algorithm,
            epsilon: report.epsilon,
            beta: report.beta,
            seed,
            bias: w[d],
            weights,
        }
    }

    /// `w · [scale·x, rho]`. Indices beyond the trained dimension weigh zero.
    pub fn score(&self, x: &SparsePattern) -> f64 {
        let mut s = self.bias * self.rho;
        let mut j = 0;
        for (i, v) in x.iter() {
            let i = i as u32;
            while j < self.weights.len() && self.weights[j].0 < i {
                j += 1;
            }
            if j < self.weights.len() && self.weights[j].0 == i {
                s += self.weights[j].1 * self.scale * v;
            }
        }
        s
    }

    /// `+1` when the score is positive, `-1` otherwise.
    pub fn predict(&self, x: &SparsePattern) -> i8 {
        if self.score(x) > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(s, "explicit_dim {}", self.explicit_dim);
        let _ = writeln!(s, "rho {}", self.rho);
        let _ = writeln!(s, "delta {}", self.delta);
        let _ = writeln!(s, "scale {}", self.scale);
        let _ = writeln!(s, "gamma_prime_d {}", self.gamma_prime_d);
        let _ = writeln!(s, "t_c {}", self.t_c);
        let _ = writeln!(s, "algorithm {}", self.algorithm);
        if let Some(e) = self.epsilon {
            let _ = writeln!(s, "epsilon {e}");
        }
        if let Some(b) = self.beta {
            let _ = writeln!(s, "beta {b}");
        }
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "bias {}", self.bias);
        let _ = writeln!(s, "weights {}", self.weights.len());
        for (i, v) in &self.weights {
            let _ = writeln!(s, "{} {}", i + 1, v);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |want: &str| -> Result<(usize, String), ModelError> {
            let (n, l) = lines.next().ok_or(ModelError {
                line: 0,
                msg: format!("missing {want}"),
            })?;
            let (key, val) = l.split_once(' ').ok_or(ModelError {
                line: n,
                msg: format!("expected `{want} <value>`"),
            })?;
            if key != want {
                return Err(ModelError {
                    line: n,
                    msg: format!("expected {want}, found {key}"),
                });
            }
            Ok((n, val.to_string()))
        };

        let (n, v) = next(MAGIC)?;
        let version: u32 = parse(n, &v)?;
        if version != FORMAT_VERSION {
            return Err(ModelError {
                line: n,
                msg: format!("unsupported format version {version}"),
            });
        }
        let (n, v) = next("explicit_dim")?;
        let explicit_dim: usize = parse(n, &v)?;
        if explicit_dim == 0 {
            return Err(ModelError { line: n, msg: "explicit_dim must be positive".into() });
        }
        let rho = parse_f(next("rho")?)?;
        let delta = parse_f(next("delta")?)?;
        let scale = parse_f(next("scale")?)?;
        let gamma_prime_d = parse_f(next("gamma_prime_d")?)?;
        let (n, v) = next("t_c")?;
        let t_c: u64 = parse(n, &v)?;
        let (n, v) = next("algorithm")?;
        let algorithm = match v.as_str() {
            "pdm" => Algorithm::Pdm,
            "pdm-succ" => Algorithm::PdmSucc,
            "pfm" => Algorithm::Pfm,
            other => {
                return Err(ModelError {
                    line: n,
                    msg: format!("unknown algorithm {other:?}"),
                })
            }
        };
        let (epsilon, beta) = match algorithm {
            Algorithm::Pfm => (None, Some(parse_f(next("beta")?)?)),
            _ => (Some(parse_f(next("epsilon")?)?), None),
        };
        let (n, v) = next("seed")?;
        let seed: u64 = parse(n, &v)?;
        let bias = parse_f(next("bias")?)?;
        let (n, v) = next("weights")?;
        let count: usize = parse(n, &v)?;
        drop(next);

        let mut weights = Vec::with_capacity(count);
        let mut rest = text.lines().enumerate().skip(n).map(|(i, l)| (i + 1, l));
        for _ in 0..count {
            let (n, l) = rest.next().ok_or(ModelError {
                line: 0,
                msg: format!("expected {count} weights, file ended early"),
            })?;
            let (i, w) = l.split_once(' ').ok_or(ModelError {
                line: n,
                msg: "expected `<index> <weight>`".into(),
            })?;
            let i: u32 = parse(n, i)?;
            let w: f64 = parse(n, w)?;
            if i == 0 || i as usize >= explicit_dim {
                return Err(ModelError { line: n, msg: format!("index {i} out of range") });
            }
            if let Some((prev, _)) = weights.last() {
                if i - 1 <= *prev {
                    return Err(ModelError { line: n, msg: "indices must ascend".into() });
                }
            }
            if !w.is_finite() {
                return Err(ModelError { line: n, msg: "non-finite weight".into() });
            }
            weights.push((i - 1, w));
        }
        if let Some((n, _)) = rest.find(|(_, l)| !l.trim().is_empty()) {
            return Err(ModelError { line: n, msg: "trailing content".into() });
        }
        Ok(Self {
            explicit_dim,
            rho,
            delta,
            scale,
            gamma_prime_d,
            t_c,
            algorithm,
            epsilon,
            beta,
            seed,
            bias,
            weights,
        })
    }
}

fn parse<T: FromStr>(line: usize, s: &str) -> Result<T, ModelError> {
    s.trim().parse().map_err(|_| ModelError {
        line,
        msg: format!("malformed value {s:?}"),
    })
}

fn parse_f((line, s): (usize, String)) -> Result<f64, ModelError> {
    let v: f64 = parse(line, &s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError { line, msg: format!("non-finite value {s:?}") })
    }
}
