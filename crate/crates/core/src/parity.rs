//! Parity benchmark: random binary input, (delayed) parity targets,
//! sub-section voting and memory capacity.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveConfig, InputSignal, IntegratorSettings};
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::pipeline::{simulate_envelopes, EnvelopeSettings};
use crate::readout::{EnvelopeMatrix, ReadoutModel, Ridge, SectionTrainer, SubsectionLayout};
use crate::rng::rng_from_seed;
use crate::stats::Proportion;

/// A random ±1 sequence switching only at multiples of `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryStream {
    pub period: f64,
    pub bits: Vec<i8>,
}

impl BinaryStream {
    pub fn constant(period: f64, periods: usize, value: i8) -> Self {
        Self {
            period,
            bits: vec![value; periods],
        }
    }

    pub fn duration(&self) -> f64 {
        self.period * self.bits.len() as f64
    }

    pub fn to_signal(&self) -> InputSignal {
        let breakpoints = (0..=self.bits.len()).map(|k| k as f64 * self.period).collect();
        let values = self.bits.iter().map(|&b| f64::from(b)).collect();
        InputSignal::piecewise_constant(breakpoints, values)
            .expect("period is positive and the stream nonempty")
    }

    /// Period index containing time `t`.
    pub fn period_of(&self, t: f64) -> usize {
        (t / self.period).floor().max(0.0) as usize
    }
}

pub fn generate_binary_input(period: f64, periods: usize, seed: u64) -> Result<BinaryStream> {
    if !(period > 0.0) || periods == 0 {
        return Err(Error::config("parity", "period and duration must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let bits = (0..periods)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    Ok(BinaryStream { period, bits })
}

/// Product of the `order` bits ending `delay` periods before period `k`:
/// `prod_{i=0}^{order-1} u_{k - delay - i}`.
pub fn delayed_parity(bits: &[i8], order: usize, delay: usize, k: usize) -> Result<i8> {
    let needed = order + delay - 1;
    if order == 0 || k < needed || k >= bits.len() {
        return Err(Error::InsufficientHistory { index: k, needed });
    }
    Ok((0..order).map(|i| bits[k - delay - i]).product())
}

/// `P_n` during period `k`: the product of the `n` bits strictly preceding it.
pub fn parity_target(bits: &[i8], n: usize, k: usize) -> Result<i8> {
    delayed_parity(bits, n, 1, k)
}

/// One trainable parity task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParityTarget {
    pub order: usize,
    pub delay: usize,
}

impl ParityTarget {
    pub fn parity(order: usize) -> Self {
        Self { order, delay: 1 }
    }

    /// Third-order parity delayed by `tau` further periods, the
    /// memory-capacity probe. `delayed3(0)` is `parity(3)`.
    pub fn delayed3(tau: usize) -> Self {
        Self { order: 3, delay: tau + 1 }
    }

    pub fn history(&self) -> usize {
        self.order + self.delay - 1
    }

    pub fn eval(&self, bits: &[i8], k: usize) -> Result<i8> {
        delayed_parity(bits, self.order, self.delay, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityModel {
    pub readout: ReadoutModel,
    pub target: ParityTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityResult {
    pub decisions: Vec<i8>,
    pub truths: Vec<i8>,
    pub success: Proportion,
}

/// Fits one readout per target on the samples after `washout` periods, each
/// sample's target being the parity of the period it falls in.
pub fn train_parity(
    envelopes: &EnvelopeMatrix,
    stream: &BinaryStream,
    targets: &[ParityTarget],
    layout: &SubsectionLayout,
    ridge: Ridge,
    washout: usize,
) -> Result<Vec<ParityModel>> {
    layout.validate(envelopes.n)?;
    if let Some(t) = targets.iter().find(|t| t.history() > washout) {
        return Err(Error::InsufficientHistory {
            index: washout,
            needed: t.history(),
        });
    }
    let mut trainer = SectionTrainer::new(layout.clone(), targets.len());
    let mut y = vec![0.0; targets.len()];
    let cols = envelopes.column_range(washout as f64 * stream.period, stream.duration());
    for j in cols {
        let k = stream.period_of(envelopes.times[j]);
        for (yt, t) in y.iter_mut().zip(targets) {
            *yt = f64::from(t.eval(&stream.bits, k)?);
        }
        trainer.push(envelopes.column(j), &y)?;
    }
    if trainer.samples() == 0 {
        return Err(Error::config("parity.train_periods", "no training samples after washout"));
    }
    Ok(trainer
        .solve(ridge)?
        .into_iter()
        .zip(targets)
        .map(|(readout, &target)| ParityModel { readout, target })
        .collect())
}

/// Decision for one period from the section-averaged output integral; an
/// integral of exactly zero resolves to +1.
pub fn decide(integral: f64) -> i8 {
    if integral >= 0.0 {
        1
    } else {
        -1
    }
}

/// Section-averaged output integrated over each period from `washout` on.
pub fn period_integrals(
    model: &ReadoutModel,
    envelopes: &EnvelopeMatrix,
    stream: &BinaryStream,
    washout: usize,
) -> Result<Vec<f64>> {
    model.layout.validate(envelopes.n)?;
    let dt = envelopes.dt();
    (washout..stream.bits.len())
        .map(|k| {
            let cols = envelopes.column_range(k as f64 * stream.period, (k + 1) as f64 * stream.period);
            if cols.is_empty() {
                return Err(Error::config("parity", format!("period {k} has no envelope samples")));
            }
            Ok(cols.map(|j| model.mean_output_at(envelopes.column(j))).sum::<f64>() * dt)
        })
        .collect()
}

pub fn evaluate_parity(
    model: &ParityModel,
    envelopes: &EnvelopeMatrix,
    stream: &BinaryStream,
    washout: usize,
) -> Result<ParityResult> {
    if model.target.history() > washout {
        return Err(Error::InsufficientHistory {
            index: washout,
            needed: model.target.history(),
        });
    }
    let integrals = period_integrals(&model.readout, envelopes, stream, washout)?;
    let decisions: Vec<i8> = integrals.iter().map(|&v| decide(v)).collect();
    let truths = (washout..stream.bits.len())
        .map(|k| model.target.eval(&stream.bits, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(score(decisions, truths))
}

pub fn score(decisions: Vec<i8>, truths: Vec<i8>) -> ParityResult {
    assert_eq!(decisions.len(), truths.len());
    let hits = decisions.iter().zip(&truths).filter(|(a, b)| a == b).count();
    let success = Proportion::new(hits, decisions.len());
    ParityResult {
        decisions,
        truths,
        success,
    }
}

/// Mutual information (bits) of a binary channel with balanced inputs and
/// success probability `p`.
pub fn mutual_information(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let term = |q: f64| if q == 0.0 { 0.0 } else { q * (2.0 * q).log2() };
    Ok(term(p) + term(1.0 - p))
}

/// Sum of the mutual information over the delayed third-order parity tasks.
pub fn memory_capacity(success_probs: &[f64]) -> Result<f64> {
    success_probs.iter().map(|&p| mutual_information(p)).sum()
}

/// Range of the mutual information over the confidence interval of `p`.
pub fn mutual_information_interval(p: &Proportion) -> Result<(f64, f64)> {
    let (a, b) = (mutual_information(p.ci_lo)?, mutual_information(p.ci_hi)?);
    let lo = if p.ci_lo <= 0.5 && p.ci_hi >= 0.5 { 0.0 } else { a.min(b) };
    Ok((lo, a.max(b)))
}

/// True unless some delay's information exceeds the previous one by more
/// than their confidence intervals allow.
pub fn nonincreasing_within_ci(success: &[Proportion]) -> Result<bool> {
    let iv = success
        .iter()
        .map(mutual_information_interval)
        .collect::<Result<Vec<_>>>()?;
    Ok(iv.windows(2).all(|w| w[1].0 <= w[0].1))
}

/// Everything needed to simulate, train and evaluate parity tasks on a
/// fixed network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParitySetup {
    pub drive: DriveConfig,
    pub integrator: IntegratorSettings,
    pub envelope: EnvelopeSettings,
    pub period: f64,
    pub train_periods: usize,
    pub eval_periods: usize,
    pub washout_periods: usize,
    pub sections: usize,
    pub ridge: Ridge,
}

impl ParitySetup {
    /// Operating point of the reference parity experiment.
    pub fn reference() -> Self {
        let drive = DriveConfig {
            amplitude: 0.8,
            omega_drive: 1.14,
        };
        let integrator = IntegratorSettings::for_drive(&drive);
        let period = 65.0;
        Self {
            drive,
            integrator,
            envelope: EnvelopeSettings {
                decimation: EnvelopeSettings::DECIMATION,
                filter_order: EnvelopeSettings::FILTER_ORDER,
                cutoff: default_cutoff(period, &integrator, EnvelopeSettings::DECIMATION),
            },
            period,
            train_periods: 359,
            eval_periods: 500,
            washout_periods: 20,
            sections: 10,
            ridge: Ridge::default(),
        }
    }

    pub fn layout(&self, n: usize) -> Result<SubsectionLayout> {
        SubsectionLayout::contiguous(n, self.sections)
    }

    /// Simulates a fresh run of `washout + periods` bits from rest.
    pub fn simulate(&self, instance: &NetworkInstance, periods: usize, seed: u64) -> Result<(BinaryStream, EnvelopeMatrix)> {
        let stream = generate_binary_input(self.period, self.washout_periods + periods, seed)?;
        let env = simulate_envelopes(
            instance,
            &self.drive,
            &stream.to_signal(),
            stream.duration(),
            &self.integrator,
            &self.envelope,
        )?;
        Ok((stream, env))
    }

    pub fn train(&self, instance: &NetworkInstance, targets: &[ParityTarget], seed: u64) -> Result<Vec<ParityModel>> {
        let (stream, env) = self.simulate(instance, self.train_periods, seed)?;
        train_parity(&env, &stream, targets, &self.layout(instance.len())?, self.ridge, self.washout_periods)
    }

    pub fn evaluate(&self, instance: &NetworkInstance, models: &[ParityModel], seed: u64) -> Result<Vec<ParityResult>> {
        let (stream, env) = self.simulate(instance, self.eval_periods, seed)?;
        models
            .iter()
            .map(|m| evaluate_parity(m, &env, &stream, self.washout_periods))
            .collect()
    }
}

/// Cutoff frequency of the envelope filter, in cycles per time unit, for
/// input bits of length `period`.
pub const CUTOFF_BITS_PER_PERIOD: f64 = 0.5;

pub fn default_cutoff(period: f64, integ: &IntegratorSettings, decimation: usize) -> f64 {
    EnvelopeSettings::normalized_cutoff(CUTOFF_BITS_PER_PERIOD / period, integ, decimation)
}
