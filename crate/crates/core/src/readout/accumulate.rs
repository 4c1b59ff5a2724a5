//! Streaming sufficient statistics for least-squares readouts.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Running `sum_j c_j c_j^T` with only the upper triangle stored (packed by
/// rows: `(0,0), (0,1), ..., (0,d-1), (1,1), ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct GramAccumulator {
    dim: usize,
    upper: Vec<f64>,
    count: usize,
}

impl GramAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; dim * (dim + 1) / 2],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, column: &[f64]) -> Result<()> {
        if column.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: column.len(),
            });
        }
        let mut k = 0;
        for (i, &ci) in column.iter().enumerate() {
            let row = &mut self.upper[k..k + self.dim - i];
            for (acc, &cj) in row.iter_mut().zip(&column[i..]) {
                *acc += ci * cj;
            }
            k += self.dim - i;
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &GramAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row i starts after sum_{r<i} (dim - r) entries
        i * self.dim - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.index(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    #[cfg(test)]
    pub(crate) fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.upper
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

/// Running `sum_j c_j y_j^T` for one or more scalar targets per column.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAccumulator {
    dim: usize,
    targets: usize,
    // [target][dim]
    values: Vec<f64>,
}

impl CrossAccumulator {
    pub fn new(dim: usize, targets: usize) -> Self {
        Self {
            dim,
            targets,
            values: vec![0.0; dim * targets],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn push(&mut self, column: &[f64], target: &[f64]) -> Result<()> {
        if column.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: column.len(),
            });
        }
        if target.len() != self.targets {
            return Err(Error::DimensionMismatch {
                expected: self.targets,
                found: target.len(),
            });
        }
        for (t, &y) in target.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let row = &mut self.values[t * self.dim..(t + 1) * self.dim];
            for (acc, &c) in row.iter_mut().zip(column) {
                *acc += c * y;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CrossAccumulator) -> Result<()> {
        if other.dim != self.dim || other.targets != self.targets {
            return Err(Error::DimensionMismatch {
                expected: self.dim * self.targets,
                found: other.dim * other.targets,
            });
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn target(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// Accumulates `(gram, cross)` from a stream of `(column, targets)` pairs.
pub fn accumulate_statistics<'a, I>(
    dim: usize,
    targets: usize,
    stream: I,
) -> Result<(GramAccumulator, CrossAccumulator)>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut g = GramAccumulator::new(dim);
    let mut c = CrossAccumulator::new(dim, targets);
    for (col, y) in stream {
        g.push(col)?;
        c.push(col, y)?;
    }
    Ok((g, c))
}
