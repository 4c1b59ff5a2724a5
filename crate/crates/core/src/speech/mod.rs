//! Spoken-digit benchmark.
//!
//! Utterances are normalized and rectified, concatenated with silences into
//! one drive signal, and fed to the network. Ten per-digit readouts (one per
//! digit, each over 19 overlapping sections) are integrated over every
//! utterance to give a 10 x 19 feature matrix, which 45 pairwise Fisher
//! discriminants classify by one-vs-one voting.

pub mod classifier;
pub mod corpus;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveConfig, InputSignal, IntegratorSettings, Segment};
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::pipeline::{simulate_envelopes, EnvelopeSettings};
use crate::readout::{
    load_versioned, save_versioned, EnvelopeMatrix, ReadoutModel, Ridge, SectionTrainer, SubsectionLayout,
};
pub use classifier::{
    classify, confusion_matrix, fit_fisher, fit_pairs, tune_threshold, Classification, ConfusionMatrix,
    FeatureVector, PairClassifier, DIGITS,
};
pub use corpus::{load_corpus, read_manifest, split_indices, SplitStrategy, Utterance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeechPipelineConfig {
    /// Silence (simulation time) before, between and after utterances.
    pub silence_duration: f64,
    /// Simulation time units per second of audio.
    pub stretch: f64,
    pub amplitude: f64,
    pub delta_star: f64,
    pub omega_drive: f64,
    pub train_count: usize,
    pub fisher_ridge: f64,
    /// Envelope cutoff frequency in cycles per simulation time unit.
    pub cutoff_frequency: f64,
    pub section_len: usize,
    pub section_stride: usize,
    pub split: SplitStrategy,
    /// Cap on the number of test utterances (all remaining when absent).
    pub test_count: Option<usize>,
}

impl Default for SpeechPipelineConfig {
    fn default() -> Self {
        Self {
            silence_duration: 70.0,
            stretch: 97.2,
            amplitude: 2.0,
            delta_star: 6.0,
            omega_drive: 1.0,
            train_count: 800,
            fisher_ridge: 1.0,
            cutoff_frequency: 0.05,
            section_len: 40,
            section_stride: 20,
            split: SplitStrategy::Stratified,
            test_count: None,
        }
    }
}

impl SpeechPipelineConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Error> {
        let mut out = Vec::new();
        for (name, v) in [
            ("silence_duration", self.silence_duration),
            ("stretch", self.stretch),
            ("amplitude", self.amplitude),
            ("delta_star", self.delta_star),
            ("omega_drive", self.omega_drive),
            ("cutoff_frequency", self.cutoff_frequency),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(Error::config(format!("{prefix}{name}"), "must be positive"));
            }
        }
        if self.fisher_ridge < 0.0 {
            out.push(Error::config(format!("{prefix}fisher_ridge"), "must be non-negative"));
        }
        if self.train_count < 2 * DIGITS {
            out.push(Error::config(format!("{prefix}train_count"), "need at least two utterances per digit"));
        }
        if self.section_len == 0 || self.section_stride == 0 {
            out.push(Error::config(format!("{prefix}section_len"), "sections must be nonempty"));
        }
        out
    }

    pub fn drive(&self) -> DriveConfig {
        DriveConfig {
            amplitude: self.amplitude,
            omega_drive: self.omega_drive,
        }
    }
}

/// Zero-mean, unit-variance, rectified samples laid out on the simulation
/// time axis starting at 0.
pub fn preprocess_utterance(u: &Utterance, stretch: f64) -> Result<Segment> {
    let n = u.samples.len();
    if n < 2 || !(u.sample_rate > 0.0) {
        return Err(Error::DegenerateUtterance(u.id.clone()));
    }
    let normalized = normalize(&u.samples).ok_or_else(|| Error::DegenerateUtterance(u.id.clone()))?;
    Ok(Segment::Sampled {
        start: 0.0,
        dt: stretch / u.sample_rate,
        values: normalized.into_iter().map(f64::abs).collect(),
    })
}

/// Removes the mean and divides by the sample standard deviation.
pub fn normalize(samples: &[f64]) -> Option<Vec<f64>> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(samples.iter().map(|x| (x - mean) / sd).collect())
}

/// Simulation-time window of one utterance in the drive stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechStream {
    pub signal: InputSignal,
    pub spans: Vec<Span>,
    pub duration: f64,
}

/// Concatenates prepared utterances (each starting at time 0) with
/// `silence` before, between and after them.
pub fn build_input_stream(utterances: &[(Segment, u8)], silence: f64) -> Result<SpeechStream> {
    if utterances.is_empty() {
        return Err(Error::config("speech", "no utterances to stream"));
    }
    let mut t = silence;
    let mut segments = Vec::with_capacity(utterances.len());
    let mut spans = Vec::with_capacity(utterances.len());
    for (seg, label) in utterances {
        let Segment::Sampled { dt, values, .. } = seg else {
            return Err(Error::config("speech", "utterances must be sampled segments"));
        };
        let end = t + dt * values.len() as f64;
        segments.push(Segment::Sampled {
            start: t,
            dt: *dt,
            values: values.clone(),
        });
        spans.push(Span {
            start: t,
            end,
            label: *label,
        });
        t = end + silence;
    }
    Ok(SpeechStream {
        signal: InputSignal::from_segments(segments)?,
        spans,
        duration: t,
    })
}

fn span_columns(env: &EnvelopeMatrix, span: &Span) -> Result<std::ops::Range<usize>> {
    let (lo, hi) = match (env.times.first(), env.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    if span.start < lo || span.end > hi || span.start > span.end {
        return Err(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            lo,
            hi,
        });
    }
    // inclusive of both ends
    let a = env.times.partition_point(|&t| t < span.start);
    let b = env.times.partition_point(|&t| t <= span.end);
    Ok(a..b)
}

/// Trapezoidal integral over each span of every section output of every
/// digit readout.
pub fn compute_features(env: &EnvelopeMatrix, spans: &[Span], readouts: &[ReadoutModel]) -> Result<Vec<FeatureVector>> {
    for r in readouts {
        r.layout.validate(env.n)?;
    }
    spans
        .iter()
        .map(|span| {
            let cols = span_columns(env, span)?;
            let mut c: Vec<Vec<f64>> = readouts.iter().map(|r| vec![0.0; r.layout.len()]).collect();
            let mut prev: Option<(f64, Vec<Vec<f64>>)> = None;
            for j in cols {
                let t = env.times[j];
                let y: Vec<Vec<f64>> = readouts
                    .iter()
                    .map(|r| {
                        let mut o = vec![0.0; r.layout.len()];
                        r.outputs_at(env.column(j), &mut o);
                        o
                    })
                    .collect();
                if let Some((tp, yp)) = &prev {
                    let h = 0.5 * (t - tp);
                    for (ci, (a, b)) in c.iter_mut().zip(yp.iter().zip(&y)) {
                        for (cij, (p, q)) in ci.iter_mut().zip(a.iter().zip(b)) {
                            *cij += h * (p + q);
                        }
                    }
                }
                prev = Some((t, y));
            }
            Ok(FeatureVector { c })
        })
        .collect()
}

/// Fits one readout per digit: target 1 inside that digit's spans, 0
/// elsewhere, using samples after the first `washout` time units.
pub fn train_digit_readouts(
    env: &EnvelopeMatrix,
    spans: &[Span],
    layout: &SubsectionLayout,
    ridge: Ridge,
    washout: f64,
) -> Result<Vec<ReadoutModel>> {
    layout.validate(env.n)?;
    let mut trainer = SectionTrainer::new(layout.clone(), DIGITS);
    let mut y = [0.0; DIGITS];
    let mut k = 0;
    for j in 0..env.columns() {
        let t = env.times[j];
        if t < washout {
            continue;
        }
        while k < spans.len() && spans[k].end < t {
            k += 1;
        }
        y.fill(0.0);
        if let Some(s) = spans.get(k).filter(|s| s.start <= t) {
            y[s.label as usize] = 1.0;
        }
        trainer.push(env.column(j), &y)?;
    }
    trainer.solve(ridge)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechModel {
    pub readouts: Vec<ReadoutModel>,
    pub pairs: Vec<PairClassifier>,
}

impl SpeechModel {
    pub fn classify(&self, features: &FeatureVector) -> Classification {
        classify(features, &self.pairs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_versioned(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_versioned(path)
    }
}

/// Runtime settings of a speech experiment on a fixed network.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSetup {
    pub config: SpeechPipelineConfig,
    pub integrator: IntegratorSettings,
    pub envelope: EnvelopeSettings,
    pub ridge: Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtterancePrediction {
    pub id: String,
    pub speaker: String,
    pub label: u8,
    pub predicted: u8,
    pub votes: [usize; DIGITS],
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechOutcome {
    pub model: SpeechModel,
    pub predictions: Vec<UtterancePrediction>,
    pub confusion: ConfusionMatrix,
    pub train_accuracy: f64,
}

impl SpeechSetup {
    pub fn new(config: SpeechPipelineConfig, integrator: IntegratorSettings, envelope: EnvelopeSettings, ridge: Ridge) -> Self {
        Self {
            config,
            integrator,
            envelope,
            ridge,
        }
    }

    /// Standard integrator and envelope settings for the configured drive.
    pub fn with_defaults(config: SpeechPipelineConfig) -> Self {
        let drive = config.drive();
        let integrator = IntegratorSettings::for_drive(&drive);
        let envelope = EnvelopeSettings {
            decimation: EnvelopeSettings::DECIMATION,
            filter_order: EnvelopeSettings::FILTER_ORDER,
            cutoff: EnvelopeSettings::normalized_cutoff(config.cutoff_frequency, &integrator, EnvelopeSettings::DECIMATION),
        };
        Self::new(config, integrator, envelope, Ridge::default())
    }

    pub fn layout(&self, n: usize) -> Result<SubsectionLayout> {
        SubsectionLayout::overlapping(n, self.config.section_len, self.config.section_stride)
    }

    fn simulate(&self, instance: &NetworkInstance, utts: &[&Utterance]) -> Result<(SpeechStream, EnvelopeMatrix)> {
        let prepared = utts
            .par_iter()
            .map(|u| Ok((preprocess_utterance(u, self.config.stretch)?, u.label)))
            .collect::<Result<Vec<_>>>()?;
        let stream = build_input_stream(&prepared, self.config.silence_duration)?;
        let env = simulate_envelopes(
            instance,
            &self.config.drive(),
            &stream.signal,
            stream.duration,
            &self.integrator,
            &self.envelope,
        )?;
        Ok((stream, env))
    }

    pub fn train(&self, instance: &NetworkInstance, utts: &[&Utterance]) -> Result<(SpeechModel, f64)> {
        let (stream, env) = self.simulate(instance, utts)?;
        let readouts = train_digit_readouts(
            &env,
            &stream.spans,
            &self.layout(instance.len())?,
            self.ridge,
            self.config.silence_duration,
        )?;
        let features = compute_features(&env, &stream.spans, &readouts)?;
        drop(env);
        let labels: Vec<u8> = utts.iter().map(|u| u.label).collect();
        let pairs = fit_pairs(&features, &labels, self.config.fisher_ridge)?;
        let model = SpeechModel { readouts, pairs };
        let hits = features
            .iter()
            .zip(&labels)
            .filter(|(f, &l)| model.classify(f).digit == l)
            .count();
        Ok((model, hits as f64 / labels.len() as f64))
    }

    pub fn test(&self, instance: &NetworkInstance, model: &SpeechModel, utts: &[&Utterance]) -> Result<Vec<UtterancePrediction>> {
        let (stream, env) = self.simulate(instance, utts)?;
        let features = compute_features(&env, &stream.spans, &model.readouts)?;
        Ok(utts
            .iter()
            .zip(&features)
            .map(|(u, f)| {
                let c = model.classify(f);
                UtterancePrediction {
                    id: u.id.clone(),
                    speaker: u.speaker.clone(),
                    label: u.label,
                    predicted: c.digit,
                    votes: c.votes,
                    tie: c.tie,
                }
            })
            .collect())
    }

    /// Split, train on the training part and classify the test part.
    pub fn run(&self, instance: &NetworkInstance, corpus: &[Utterance], seed: u64) -> Result<SpeechOutcome> {
        let labels: Vec<u8> = corpus.iter().map(|u| u.label).collect();
        let speakers: Vec<String> = corpus.iter().map(|u| u.speaker.clone()).collect();
        let (train_idx, mut test_idx) =
            split_indices(&labels, &speakers, self.config.train_count, &self.config.split, seed);
        if let Some(cap) = self.config.test_count {
            test_idx.truncate(cap);
        }
        if test_idx.is_empty() {
            return Err(Error::config("speech.train_count", "no utterances left for testing"));
        }
        let train: Vec<&Utterance> = train_idx.iter().map(|&i| &corpus[i]).collect();
        let test: Vec<&Utterance> = test_idx.iter().map(|&i| &corpus[i]).collect();
        let (model, train_accuracy) = self.train(instance, &train)?;
        let predictions = self.test(instance, &model, &test)?;
        let (p, l): (Vec<u8>, Vec<u8>) = predictions.iter().map(|p| (p.predicted, p.label)).unzip();
        let confusion = confusion_matrix(&p, &l);
        Ok(SpeechOutcome {
            model,
            predictions,
            confusion,
            train_accuracy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(samples: Vec<f64>, rate: f64) -> Utterance {
        Utterance {
            samples,
            sample_rate: rate,
            label: 3,
            speaker: "s".into(),
            id: "u".into(),
        }
    }

    #[test]
    fn preprocessing_normalizes_and_rectifies() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 3.0 + 0.2).collect();
        let z = normalize(&s).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
        let Segment::Sampled { values, .. } = preprocess_utterance(&utt(s, 8000.0), 97.2).unwrap() else {
            panic!()
        };
        assert!(values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn one_second_maps_to_stretch() {
        let s: Vec<f64> = (0..12_500).map(|i| ((i * 7919) % 101) as f64).collect();
        let seg = preprocess_utterance(&utt(s, 12_500.0), 97.2).unwrap();
        assert!((seg.end() - seg.start() - 97.2).abs() < 1e-9);
    }

    #[test]
    fn degenerate_utterances() {
        assert!(matches!(
            preprocess_utterance(&utt(vec![0.5; 100], 8000.0), 97.2),
            Err(Error::DegenerateUtterance(_))
        ));
        assert!(preprocess_utterance(&utt(vec![1.0], 8000.0), 97.2).is_err());
    }

    #[test]
    fn stream_padding_and_spans() {
        let seg = |n: usize| Segment::Sampled {
            start: 0.0,
            dt: 0.5,
            values: vec![1.0; n],
        };
        let s = build_input_stream(&[(seg(10), 1)], 70.0).unwrap();
        assert_eq!(s.duration, 5.0 + 140.0);
        let s = build_input_stream(&[(seg(10), 1), (seg(4), 2), (seg(6), 0)], 70.0).unwrap();
        for w in s.spans.windows(2) {
            assert!(w[0].end < w[1].start);
        }
        // silence is exactly zero
        for t in [0.0, 69.99, 75.01, 144.0, s.duration - 0.01] {
            assert_eq!(s.signal.eval(t), 0.0, "t={t}");
        }
        assert_eq!(s.signal.eval(70.0), 1.0);
        assert!(build_input_stream(&[], 70.0).is_err());
    }

    #[test]
    fn features_zero_and_linear() {
        let env = EnvelopeMatrix {
            n: 4,
            times: (0..20).map(|j| j as f64).collect(),
            values: (0..80).map(|k| (k % 7) as f64 - 3.0).collect(),
        };
        let layout = SubsectionLayout::overlapping(4, 2, 1).unwrap();
        let zero = vec![ReadoutModel::zeros(layout.clone())];
        let spans = [Span { start: 2.0, end: 9.5, label: 0 }];
        let f = compute_features(&env, &spans, &zero).unwrap();
        assert!(f[0].c[0].iter().all(|&v| v == 0.0));

        let m = ReadoutModel {
            layout: layout.clone(),
            weights: vec![vec![1.0, 0.5], vec![-1.0, 2.0], vec![0.3, 0.3]],
            ridge: vec![0.0; 3],
        };
        let a = compute_features(&env, &spans, &[m.clone()]).unwrap();
        let b = compute_features(&env.scaled(2.0), &spans, &[m]).unwrap();
        for (x, y) in a[0].c[0].iter().zip(&b[0].c[0]) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        let bad = [Span { start: 2.0, end: 50.0, label: 0 }];
        assert!(matches!(compute_features(&env, &bad, &zero), Err(Error::SpanOutOfRange { .. })));
    }

    #[test]
    fn trapezoid_on_constant_output() {
        let env = EnvelopeMatrix {
            n: 1,
            times: (0..11).map(|j| j as f64 * 0.5).collect(),
            values: vec![1.0; 11],
        };
        let m = ReadoutModel {
            layout: SubsectionLayout::whole(1),
            weights: vec![vec![3.0]],
            ridge: vec![0.0],
        };
        let f = compute_features(&env, &[Span { start: 1.0, end: 4.0, label: 0 }], &[m]).unwrap();
        assert!((f[0].c[0][0] - 9.0).abs() < 1e-12);
    }
}
