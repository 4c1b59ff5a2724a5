use crate::dynamics::{DriveConfig, Trajectory};
use crate::readout::filter::{FilterCoefficients, MultiChannelFilter};

/// Demodulated envelopes, column-major like [`Trajectory`]: column `j` holds
/// every oscillator's envelope at `times[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeMatrix {
    pub n: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EnvelopeMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.columns()).map(|j| self.values[j * self.n + i]).collect()
    }

    /// Uniform sample spacing (zero for fewer than two columns).
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            times: self.times.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Column indices whose time lies in `[t0, t1)`.
    pub fn column_range(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let a = self.times.partition_point(|&t| t < t0);
        let b = self.times.partition_point(|&t| t < t1);
        a..b
    }
}

/// Streaming demodulator: multiply by `cos(W t)`, keep every `decimation`-th
/// sample, low-pass filter causally. Samples arrive one column at a time so a
/// long run never needs the raw trajectory in memory.
#[derive(Debug, Clone)]
pub struct EnvelopeExtractor {
    omega: f64,
    decimation: usize,
    seen: usize,
    filter: MultiChannelFilter,
    frame: Vec<f64>,
    out: EnvelopeMatrix,
}

impl EnvelopeExtractor {
    pub fn new(n: usize, drive: &DriveConfig, decimation: usize, filter: &FilterCoefficients) -> Self {
        assert!(decimation >= 1, "decimation must be at least 1");
        Self {
            omega: drive.omega_drive,
            decimation,
            seen: 0,
            filter: MultiChannelFilter::new(filter, n),
            frame: vec![0.0; n],
            out: EnvelopeMatrix::new(n),
        }
    }

    pub fn push(&mut self, t: f64, positions: &[f64]) {
        self.seen += 1;
        // keep samples decimation-1, 2*decimation-1, ... so that M raw
        // columns yield floor(M / decimation) envelope columns
        if self.seen % self.decimation != 0 {
            return;
        }
        let c = (self.omega * t).cos();
        for (f, &x) in self.frame.iter_mut().zip(positions) {
            *f = x * c;
        }
        self.filter.process(&mut self.frame);
        self.out.times.push(t);
        self.out.values.extend_from_slice(&self.frame);
    }

    pub fn finish(self) -> EnvelopeMatrix {
        self.out
    }
}

pub fn extract_envelopes(
    traj: &Trajectory,
    drive: &DriveConfig,
    decimation: usize,
    filter: &FilterCoefficients,
) -> EnvelopeMatrix {
    let mut ex = EnvelopeExtractor::new(traj.n, drive, decimation, filter);
    for j in 0..traj.columns() {
        ex.push(traj.times[j], traj.column(j));
    }
    ex.finish()
}
