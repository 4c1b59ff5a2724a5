//! Linear readouts over oscillator envelopes.
//!
//! Raw positions are demodulated into envelopes ([`envelope`]), training
//! statistics are accumulated per chain sub-section ([`accumulate`]) and each
//! sub-section gets its own ridge-regularized weight vector.

pub mod accumulate;
pub mod envelope;
pub mod filter;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use accumulate::{accumulate_statistics, CrossAccumulator, GramAccumulator};
pub use envelope::{extract_envelopes, EnvelopeExtractor, EnvelopeMatrix};
pub use filter::{design_lowpass, FilterCoefficients};

/// Contiguous slice `[start, start + len)` of the chain (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub start: usize,
    pub len: usize,
}

impl Section {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsectionLayout {
    pub sections: Vec<Section>,
}

impl SubsectionLayout {
    /// `count` non-overlapping sections of equal length tiling `n` oscillators.
    pub fn contiguous(n: usize, count: usize) -> Result<Self> {
        if count == 0 || n % count != 0 {
            return Err(Error::config(
                "layout",
                format!("{n} oscillators cannot be split into {count} equal sections"),
            ));
        }
        let len = n / count;
        Ok(Self {
            sections: (0..count).map(|k| Section { start: k * len, len }).collect(),
        })
    }

    /// Sections of length `len` starting every `stride` oscillators, as many as
    /// fit in `n`.
    pub fn overlapping(n: usize, len: usize, stride: usize) -> Result<Self> {
        if len == 0 || stride == 0 || len > n {
            return Err(Error::config("layout", "invalid section length or stride"));
        }
        let count = (n - len) / stride + 1;
        Ok(Self {
            sections: (0..count).map(|k| Section { start: k * stride, len }).collect(),
        })
    }

    pub fn whole(n: usize) -> Self {
        Self {
            sections: vec![Section { start: 0, len: n }],
        }
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for s in &self.sections {
            if s.len == 0 || s.start + s.len > n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.start + s.len,
                });
            }
        }
        Ok(())
    }
}

/// Regularization strength for the weight solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    Absolute(f64),
    /// Multiple of `trace(G) / dim` for each section's Gram matrix `G`. An
    /// all-zero `G` gets the smallest positive ridge, so silent sections
    /// yield zero weights.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-11)
    }
}

impl Ridge {
    pub fn resolve(&self, gram: &GramAccumulator) -> f64 {
        match *self {
            Ridge::Absolute(r) => r,
            Ridge::Relative(k) if k > 0.0 => (k * gram.trace() / gram.dim().max(1) as f64).max(f64::MIN_POSITIVE),
            Ridge::Relative(k) => k,
        }
    }
}

/// Solves `(G + ridge I) w = c` for every target in `cross` by Cholesky
/// factorization.
pub fn solve_weights_multi(
    gram: &GramAccumulator,
    cross: &CrossAccumulator,
    ridge: f64,
) -> Result<Vec<Vec<f64>>> {
    if gram.dim() != cross.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            found: cross.dim(),
        });
    }
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::SolveFailure(format!("ridge must be positive, got {ridge}")));
    }
    let d = gram.dim();
    let mut m = gram.to_dense();
    for i in 0..d {
        m[(i, i)] += ridge;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::SolveFailure("matrix is not positive definite".into()))?;
    let rhs = DMatrix::from_fn(d, cross.targets(), |i, t| cross.target(t)[i]);
    let sol = chol.solve(&rhs);
    let out: Vec<Vec<f64>> = (0..cross.targets())
        .map(|t| sol.column(t).iter().copied().collect())
        .collect();
    if out.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::SolveFailure("non-finite weights".into()));
    }
    Ok(out)
}

pub fn solve_weights(gram: &GramAccumulator, cross: &CrossAccumulator, ridge: f64) -> Result<Vec<f64>> {
    if cross.targets() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: cross.targets(),
        });
    }
    Ok(solve_weights_multi(gram, cross, ridge)?.remove(0))
}

/// Per-section statistics for any number of simultaneous targets.
#[derive(Debug, Clone)]
pub struct SectionTrainer {
    layout: SubsectionLayout,
    grams: Vec<GramAccumulator>,
    crosses: Vec<CrossAccumulator>,
}

impl SectionTrainer {
    pub fn new(layout: SubsectionLayout, targets: usize) -> Self {
        let grams = layout.sections.iter().map(|s| GramAccumulator::new(s.len)).collect();
        let crosses = layout
            .sections
            .iter()
            .map(|s| CrossAccumulator::new(s.len, targets))
            .collect();
        Self {
            layout,
            grams,
            crosses,
        }
    }

    pub fn push(&mut self, column: &[f64], targets: &[f64]) -> Result<()> {
        for ((s, g), c) in self.layout.sections.iter().zip(&mut self.grams).zip(&mut self.crosses) {
            let part = column.get(s.range()).ok_or(Error::DimensionMismatch {
                expected: s.start + s.len,
                found: column.len(),
            })?;
            g.push(part)?;
            c.push(part, targets)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &SectionTrainer) -> Result<()> {
        for (a, b) in self.grams.iter_mut().zip(&other.grams) {
            a.merge(b)?;
        }
        for (a, b) in self.crosses.iter_mut().zip(&other.crosses) {
            a.merge(b)?;
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.grams.first().map_or(0, |g| g.count())
    }

    /// One model per target.
    pub fn solve(&self, ridge: Ridge) -> Result<Vec<ReadoutModel>> {
        let targets = self.crosses.first().map_or(0, |c| c.targets());
        let mut weights: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(self.layout.len()); targets];
        let mut ridges = Vec::with_capacity(self.layout.len());
        for (g, c) in self.grams.iter().zip(&self.crosses) {
            let r = ridge.resolve(g);
            ridges.push(r);
            for (t, w) in solve_weights_multi(g, c, r)?.into_iter().enumerate() {
                weights[t].push(w);
            }
        }
        Ok(weights
            .into_iter()
            .map(|w| ReadoutModel {
                layout: self.layout.clone(),
                weights: w,
                ridge: ridges.clone(),
            })
            .collect())
    }
}

pub const READOUT_MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub layout: SubsectionLayout,
    /// One weight vector per section.
    pub weights: Vec<Vec<f64>>,
    /// Ridge value actually used for each section.
    pub ridge: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VersionedModel<T> {
    version: u32,
    model: T,
}

impl ReadoutModel {
    pub fn zeros(layout: SubsectionLayout) -> Self {
        let weights = layout.sections.iter().map(|s| vec![0.0; s.len]).collect();
        let ridge = vec![0.0; layout.len()];
        Self { layout, weights, ridge }
    }

    /// Section outputs `y_s(t_j)` for one envelope column.
    pub fn outputs_at(&self, column: &[f64], out: &mut [f64]) {
        for ((s, w), o) in self.layout.sections.iter().zip(&self.weights).zip(out.iter_mut()) {
            *o = column[s.range()].iter().zip(w).map(|(x, w)| x * w).sum();
        }
    }

    /// Mean over sections of the section outputs for one column.
    pub fn mean_output_at(&self, column: &[f64]) -> f64 {
        let mut out = vec![0.0; self.layout.len()];
        self.outputs_at(column, &mut out);
        out.iter().sum::<f64>() / out.len() as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_versioned(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_versioned(path)
    }
}

pub(crate) fn save_versioned<T: Serialize>(path: &Path, model: &T) -> Result<()> {
    let doc = VersionedModel {
        version: READOUT_MODEL_VERSION,
        model,
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub(crate) fn load_versioned<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let doc: VersionedModel<T> = serde_json::from_str(&text)?;
    if doc.version != READOUT_MODEL_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unsupported model version {}", doc.version),
        });
    }
    Ok(doc.model)
}

/// Section outputs over the whole envelope matrix: `result[s][j]`.
pub fn readout(model: &ReadoutModel, envelopes: &EnvelopeMatrix) -> Result<Vec<Vec<f64>>> {
    model.layout.validate(envelopes.n)?;
    for (s, w) in model.layout.sections.iter().zip(&model.weights) {
        if w.len() != s.len {
            return Err(Error::DimensionMismatch {
                expected: s.len,
                found: w.len(),
            });
        }
    }
    let m = envelopes.columns();
    let mut out = vec![vec![0.0; m]; model.layout.len()];
    let mut frame = vec![0.0; model.layout.len()];
    for j in 0..m {
        model.outputs_at(envelopes.column(j), &mut frame);
        for (s, &v) in frame.iter().enumerate() {
            out[s][j] = v;
        }
    }
    Ok(out)
}
