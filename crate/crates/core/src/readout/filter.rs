//! Butterworth low-pass design (bilinear transform with prewarping) and a
//! multichannel second-order-section filter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One biquad `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
/// First-order sections have `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, w: f64) -> (f64, f64) {
        // evaluate numerator and denominator at z^-1 = e^{-jw}
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b[0] + self.b[1] * c1 + self.b[2] * c2, self.b[1] * s1 + self.b[2] * s2);
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d2 = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d2,
            (num.1 * den.0 - num.0 * den.1) / d2,
        )
    }

    /// Pole magnitudes of this section.
    fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let r = disc.sqrt();
            ((-a1 + r) / 2.0).abs().max(((-a1 - r) / 2.0).abs())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub order: usize,
    /// Cutoff as a fraction of the sample rate.
    pub cutoff: f64,
    pub sections: Vec<Biquad>,
}

impl FilterCoefficients {
    /// Complex frequency response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> (f64, f64) {
        self.sections.iter().fold((1.0, 0.0), |(re, im), s| {
            let (r, i) = s.response(w);
            (re * r - im * i, re * i + im * r)
        })
    }

    pub fn magnitude(&self, w: f64) -> f64 {
        let (re, im) = self.response(w);
        re.hypot(im)
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.pole_radius() < 1.0)
    }

    /// Expanded transfer-function numerator, highest power of `z^-1` last.
    pub fn numerator(&self) -> Vec<f64> {
        let mut p = self.sections.iter().fold(vec![1.0], |acc, s| convolve(&acc, &s.b));
        p.truncate(self.order + 1);
        p
    }

    pub fn denominator(&self) -> Vec<f64> {
        let mut p = self
            .sections
            .iter()
            .fold(vec![1.0], |acc, s| convolve(&acc, &[1.0, s.a[0], s.a[1]]));
        p.truncate(self.order + 1);
        p
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Digital Butterworth low-pass of the given order, cutoff expressed as a
/// fraction of the sample rate.
pub fn design_lowpass(order: usize, cutoff: f64) -> Result<FilterCoefficients> {
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::InvalidCutoff(cutoff));
    }
    if order == 0 {
        return Err(Error::config("readout.filter_order", "must be at least 1"));
    }
    // prewarped analog cutoff for s = (1 - z^-1) / (1 + z^-1)
    let wc = (PI * cutoff).tan();
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        // conjugate pole pair at angle theta from the imaginary axis
        let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
        let a1 = 2.0 * wc * theta.sin();
        let a0 = wc * wc;
        let d0 = 1.0 + a1 + a0;
        sections.push(Biquad {
            b: [a0 / d0, 2.0 * a0 / d0, a0 / d0],
            a: [(2.0 * a0 - 2.0) / d0, (1.0 - a1 + a0) / d0],
        });
    }
    if order % 2 == 1 {
        let d0 = 1.0 + wc;
        sections.push(Biquad {
            b: [wc / d0, wc / d0, 0.0],
            a: [(wc - 1.0) / d0, 0.0],
        });
    }
    Ok(FilterCoefficients {
        order,
        cutoff,
        sections,
    })
}

/// Runs the same filter independently over `channels` parallel signals,
/// starting from zero state (transposed direct form II per section).
#[derive(Debug, Clone)]
pub struct MultiChannelFilter {
    sections: Vec<Biquad>,
    channels: usize,
    // [channel][section][2]
    state: Vec<[f64; 2]>,
}

impl MultiChannelFilter {
    pub fn new(coeffs: &FilterCoefficients, channels: usize) -> Self {
        Self {
            sections: coeffs.sections.clone(),
            channels,
            state: vec![[0.0; 2]; channels * coeffs.sections.len()],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Filters one sample per channel in place.
    pub fn process(&mut self, frame: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.channels);
        let ns = self.sections.len();
        for (ch, value) in frame.iter_mut().enumerate() {
            let mut x = *value;
            let states = &mut self.state[ch * ns..(ch + 1) * ns];
            for (s, z) in self.sections.iter().zip(states.iter_mut()) {
                let y = s.b[0] * x + z[0];
                z[0] = s.b[1] * x - s.a[0] * y + z[1];
                z[1] = s.b[2] * x - s.a[1] * y;
                x = y;
            }
            *value = x;
        }
    }

    pub fn filter_signal(coeffs: &FilterCoefficients, signal: &[f64]) -> Vec<f64> {
        let mut f = Self::new(coeffs, 1);
        signal
            .iter()
            .map(|&x| {
                let mut v = [x];
                f.process(&mut v);
                v[0]
            })
            .collect()
    }
}
