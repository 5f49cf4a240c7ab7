//! Sparse training data and the working (augmented, reflected, extended) dataset.
//!
//! Input files use the common `label idx:val ...` sparse text layout with
//! 1-based ascending feature indices:
//!
//! ```text
//! # comment
//! +1 1:0.5 3:2.0
//! -1 2:1
//! ```
//!
//! A [`WorkingDataset`] stores every pattern reflected by its label and
//! augmented with a bias coordinate `rho`. The 2-norm soft-margin extension
//! (one private coordinate of magnitude `delta` per pattern) is never
//! materialized: it only contributes `delta^2` to a pattern's self inner
//! product, and patterns never share an extension coordinate.

use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Binary label of a training instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    /// Any value greater than zero is positive.
    pub fn from_value(v: f64) -> Self {
        if v > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }
}

/// One training instance: sorted 0-based feature ids with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePattern {
    indices: Vec<u32>,
    values: Vec<f64>,
    label: Label,
}

impl SparsePattern {
    /// Builds a pattern from `(index, value)` pairs, checking that indices are
    /// strictly increasing and values finite.
    pub fn new(features: Vec<(u32, f64)>, label: Label) -> Result<Self, DataError> {
        let mut indices = Vec::with_capacity(features.len());
        let mut values = Vec::with_capacity(features.len());
        for (i, v) in features {
            if let Some(&last) = indices.last() {
                if i <= last {
                    return Err(DataError::Param(format!(
                        "feature index {i} does not follow {last}"
                    )));
                }
            }
            if !v.is_finite() {
                return Err(DataError::Param(format!("feature {i} has value {v}")));
            }
            indices.push(i);
            values.push(v);
        }
        Ok(Self {
            indices,
            values,
            label,
        })
    }

    /// Dense convenience constructor. Zeros are kept, so the pattern's
    /// dimension is `x.len()`.
    pub fn from_dense(x: &[f64], label: Label) -> Result<Self, DataError> {
        let features = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u32, v))
            .collect();
        Self::new(features, label)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    /// One past the largest feature id, or 0 for an empty pattern.
    pub fn dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }
}

/// Parses one data line. Returns `None` for blank and comment lines.
fn parse_line(
    line: &str,
    lineno: usize,
    positive_label: Option<f64>,
) -> Result<Option<SparsePattern>, DataError> {
    Ok(parse_line_opt(line, lineno, positive_label, false)?.map(|(p, _)| p))
}

/// Like [`parse_line`]; with `allow_unlabeled` a line may start directly
/// with a feature, and the flag in the result tells whether a label was read.
fn parse_line_opt(
    line: &str,
    lineno: usize,
    positive_label: Option<f64>,
    allow_unlabeled: bool,
) -> Result<Option<(SparsePattern, bool)>, DataError> {
    // trailing comments are allowed after the features
    let content = line.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(None);
    }
    let first = content.split_whitespace().next().expect("non-empty line has a token");
    let labeled = !(allow_unlabeled && first.contains(':'));
    let mut tokens = content.split_whitespace();
    let label_tok = if labeled {
        tokens.next().expect("non-empty line has a token")
    } else {
        "1"
    };
    let label_val: f64 = label_tok
        .parse()
        .map_err(|_| parse_err(lineno, format!("malformed label {label_tok:?}")))?;
    if !label_val.is_finite() {
        return Err(parse_err(lineno, format!("non-finite label {label_tok:?}")));
    }
    let label = match positive_label {
        Some(p) => {
            if label_val == p {
                Label::Pos
            } else {
                Label::Neg
            }
        }
        None => Label::from_value(label_val),
    };

    let mut features = Vec::new();
    let mut last: Option<u32> = None;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(lineno, format!("malformed token {tok:?}")))?;
        let idx: u32 = idx
            .parse()
            .map_err(|_| parse_err(lineno, format!("malformed index in {tok:?}")))?;
        if idx == 0 {
            return Err(parse_err(lineno, "feature indices are 1-based"));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(lineno, format!("malformed value in {tok:?}")))?;
        if !val.is_finite() {
            return Err(parse_err(lineno, format!("non-finite value in {tok:?}")));
        }
        if let Some(prev) = last {
            if idx <= prev {
                return Err(parse_err(
                    lineno,
                    format!("non-ascending index {idx} after {prev}"),
                ));
            }
        }
        last = Some(idx);
        features.push((idx - 1, val));
    }
    SparsePattern::new(features, label)
        .map(|p| Some((p, labeled)))
        .map_err(|e| parse_err(lineno, e.to_string()))
}

/// Parses sparse text. Labels greater than zero map to `+1`, everything
/// else to `-1`.
pub fn parse_dataset(text: &str) -> Result<Vec<SparsePattern>, DataError> {
    parse_dataset_with(text, None)
}

/// Same as [`parse_dataset`], but when `positive_label` is given only labels
/// equal to it are positive (one-vs-rest reduction).
pub fn parse_dataset_with(
    text: &str,
    positive_label: Option<f64>,
) -> Result<Vec<SparsePattern>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(p) = parse_line(line, i + 1, positive_label)? {
            out.push(p);
        }
    }
    Ok(out)
}

pub fn read_dataset<R: BufRead>(
    reader: R,
    positive_label: Option<f64>,
) -> Result<Vec<SparsePattern>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(p) = parse_line(&line, i + 1, positive_label)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// A pattern to classify; `labeled` is false when the line had no label
/// (the pattern's label is then meaningless).
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub pattern: SparsePattern,
    pub labeled: bool,
}

/// Reads patterns whose labels may be missing.
pub fn read_instances<R: BufRead>(
    reader: R,
    positive_label: Option<f64>,
) -> Result<Vec<Instance>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some((pattern, labeled)) = parse_line_opt(&line, i + 1, positive_label, true)? {
            out.push(Instance { pattern, labeled });
        }
    }
    Ok(out)
}

/// Patterns after reflection and augmentation, stored row-wise.
///
/// Row `k` holds the explicit part `[l_k * scale * x_k, l_k * rho]`; the
/// augmentation coordinate sits at index `explicit_dim - 1`.
#[derive(Debug, Clone)]
pub struct WorkingDataset {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<Label>,
    /// `‖ȳ_k‖²`, explicit part only.
    explicit_sq: Vec<f64>,
    delta: f64,
    rho: f64,
    scale: f64,
    r: f64,
    explicit_dim: usize,
}

impl WorkingDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Maximum norm of the working patterns, extension included.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Number of raw features `d` plus the augmentation coordinate.
    pub fn explicit_dim(&self) -> usize {
        self.explicit_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.explicit_dim - 1
    }

    pub fn label(&self, k: usize) -> Label {
        self.labels[k]
    }

    /// Explicit part `ȳ_k` as sorted `(index, value)` pairs.
    pub fn row(&self, k: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[k], self.offsets[k + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn explicit_sq_norm(&self, k: usize) -> f64 {
        self.explicit_sq[k]
    }

    /// `‖y_k‖² = ‖ȳ_k‖² + Δ²`.
    pub fn sq_norm(&self, k: usize) -> f64 {
        self.explicit_sq[k] + self.delta * self.delta
    }

    /// `w · ȳ_k` for a dense explicit-space vector `w`.
    #[inline]
    pub fn dot_explicit(&self, w: &[f64], k: usize) -> f64 {
        let (idx, val) = self.row(k);
        idx.iter()
            .zip(val)
            .map(|(&i, &v)| w[i as usize] * v)
            .sum()
    }

    /// `w += scale * ȳ_k`.
    #[inline]
    pub fn axpy_explicit(&self, scale: f64, k: usize, w: &mut [f64]) {
        let (idx, val) = self.row(k);
        for (&i, &v) in idx.iter().zip(val) {
            w[i as usize] += scale * v;
        }
    }

    /// `w += scale * ȳ_k` with one rounding per coordinate.
    #[inline]
    pub fn axpy_explicit_fused(&self, scale: f64, k: usize, w: &mut [f64]) {
        let (idx, val) = self.row(k);
        for (&i, &v) in idx.iter().zip(val) {
            let x = &mut w[i as usize];
            *x = scale.mul_add(v, *x);
        }
    }

    /// `ȳ_j · ȳ_k` over the explicit part.
    pub fn explicit_inner(&self, j: usize, k: usize) -> f64 {
        let (ia, va) = self.row(j);
        let (ib, vb) = self.row(k);
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < ia.len() && b < ib.len() {
            match ia[a].cmp(&ib[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += va[a] * vb[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    /// `y_j · y_k` in the full extended space: the extension coordinates only
    /// meet when `j == k`.
    pub fn inner(&self, j: usize, k: usize) -> f64 {
        let e = self.explicit_inner(j, k);
        if j == k {
            e + self.delta * self.delta
        } else {
            e
        }
    }
}

/// Reflects, rescales and augments `patterns`.
///
/// The feature dimension `d` is the largest index seen; the augmentation
/// coordinate is placed at 0-based index `d`.
pub fn build_working(
    patterns: &[SparsePattern],
    delta: f64,
    rho: f64,
    scale: f64,
) -> Result<WorkingDataset, DataError> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(DataError::Param(format!("rho must be > 0, got {rho}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(DataError::Param(format!("delta must be >= 0, got {delta}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DataError::Param(format!("scale must be > 0, got {scale}")));
    }
    if patterns.is_empty() {
        return Err(DataError::Empty);
    }
    let d = patterns.iter().map(SparsePattern::dim).max().unwrap_or(0);
    let nnz: usize = patterns.iter().map(|p| p.indices.len() + 1).sum();

    let mut offsets = Vec::with_capacity(patterns.len() + 1);
    let mut indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    let mut labels = Vec::with_capacity(patterns.len());
    let mut explicit_sq = Vec::with_capacity(patterns.len());
    offsets.push(0);
    for p in patterns {
        let l = p.label.sign();
        let mut sq = 0.0;
        for (i, v) in p.iter() {
            let y = l * scale * v;
            indices.push(i as u32);
            values.push(y);
            sq += y * y;
        }
        indices.push(d as u32);
        values.push(l * rho);
        sq += rho * rho;
        offsets.push(indices.len());
        labels.push(p.label);
        explicit_sq.push(sq);
    }
    let max_sq = explicit_sq.iter().cloned().fold(0.0, f64::max);
    let r = (max_sq + delta * delta).sqrt();
    Ok(WorkingDataset {
        offsets,
        indices,
        values,
        labels,
        explicit_sq,
        delta,
        rho,
        scale,
        r,
        explicit_dim: d + 1,
    })
}

/// Guaranteed lower bound `Δ/√m` on the maximum directional margin of an
/// extended dataset with `m` patterns.
pub fn margin_floor(delta: f64, m: usize) -> f64 {
    assert!(delta > 0.0 && m >= 1, "margin_floor needs delta > 0, m >= 1");
    delta / (m as f64).sqrt()
}
