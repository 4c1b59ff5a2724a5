//! Random network instances and static parameter disorder.
//!
//! A network is a chain of `N` Duffing oscillators. Each oscillator gets a
//! strong or weak cubic stiffness and is either coupled to the input signal
//! (gain `delta_star`) or not. All other parameters start at their nominal
//! values and only differ between oscillators after [`perturb_network`].

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::DriveConfig;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, CANONICAL_SEED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_oscillators: usize,
    pub omega0: f64,
    pub quality: f64,
    pub beta_strong: f64,
    pub beta_weak: f64,
    pub p_strong: f64,
    pub omega1: f64,
    pub delta_star: f64,
    pub p_input: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_oscillators: 400,
            omega0: 1.3,
            quality: 60.0,
            beta_strong: 1.0,
            beta_weak: 0.005,
            p_strong: 0.25,
            omega1: 1.5,
            delta_star: 0.7,
            p_input: 0.5,
            seed: CANONICAL_SEED,
        }
    }
}

impl NetworkConfig {
    /// Collects every violated invariant, prefixed with `prefix`.
    pub fn violations(&self, prefix: &str) -> Vec<Error> {
        let mut out = Vec::new();
        let f = |name: &str| format!("{prefix}{name}");
        if self.n_oscillators < 1 {
            out.push(Error::config(f("n_oscillators"), "must be at least 1"));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            out.push(Error::config(f("omega0"), "must be positive"));
        }
        if !(self.quality > 0.0 && self.quality.is_finite()) {
            out.push(Error::config(f("quality"), "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_strong) {
            out.push(Error::config(f("p_strong"), "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_input) {
            out.push(Error::config(f("p_input"), "must lie in [0, 1]"));
        }
        for (name, v) in [
            ("beta_strong", self.beta_strong),
            ("beta_weak", self.beta_weak),
            ("omega1", self.omega1),
            ("delta_star", self.delta_star),
        ] {
            if !v.is_finite() {
                out.push(Error::config(f(name), "must be finite"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations("network.").into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Per-oscillator parameters of one network draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub omega0: Vec<f64>,
    pub quality: Vec<f64>,
    pub omega1: Vec<f64>,
    pub amp_scale: Vec<f64>,
}

impl NetworkInstance {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// A homogeneous chain; handy for tests and analytic checks.
    pub fn uniform(n: usize, omega0: f64, quality: f64, omega1: f64, beta: f64, delta: f64) -> Self {
        Self {
            beta: vec![beta; n],
            delta: vec![delta; n],
            omega0: vec![omega0; n],
            quality: vec![quality; n],
            omega1: vec![omega1; n],
            amp_scale: vec![1.0; n],
        }
    }

    /// The chain relabelled `i -> N+1-i`.
    pub fn mirrored(&self) -> Self {
        let rev = |v: &Vec<f64>| v.iter().rev().copied().collect::<Vec<_>>();
        Self {
            beta: rev(&self.beta),
            delta: rev(&self.delta),
            omega0: rev(&self.omega0),
            quality: rev(&self.quality),
            omega1: rev(&self.omega1),
            amp_scale: rev(&self.amp_scale),
        }
    }

    pub fn strong_count(&self, beta_strong: f64) -> usize {
        self.beta.iter().filter(|&&b| b == beta_strong).count()
    }

    fn vector_mut(&mut self, p: PerturbedParameter) -> &mut Vec<f64> {
        match p {
            PerturbedParameter::A => &mut self.amp_scale,
            PerturbedParameter::Q => &mut self.quality,
            PerturbedParameter::Beta => &mut self.beta,
            PerturbedParameter::Omega0 => &mut self.omega0,
            PerturbedParameter::Omega1 => &mut self.omega1,
            PerturbedParameter::Delta => &mut self.delta,
        }
    }
}

pub fn build_network(config: &NetworkConfig) -> Result<NetworkInstance> {
    config.validate()?;
    let n = config.n_oscillators;
    let mut rng = rng_from_seed(config.seed);
    let mut beta = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    for _ in 0..n {
        let strong = rng.random::<f64>() < config.p_strong;
        beta.push(if strong { config.beta_strong } else { config.beta_weak });
        let coupled = rng.random::<f64>() < config.p_input;
        delta.push(if coupled { config.delta_star } else { 0.0 });
    }
    Ok(NetworkInstance {
        beta,
        delta,
        omega0: vec![config.omega0; n],
        quality: vec![config.quality; n],
        omega1: vec![config.omega1; n],
        amp_scale: vec![1.0; n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbedParameter {
    #[serde(alias = "a")]
    A,
    #[serde(alias = "q")]
    Q,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "omega0")]
    Omega0,
    #[serde(rename = "omega1")]
    Omega1,
    #[serde(rename = "delta")]
    Delta,
}

impl PerturbedParameter {
    pub const ALL: [PerturbedParameter; 6] = [
        PerturbedParameter::A,
        PerturbedParameter::Q,
        PerturbedParameter::Beta,
        PerturbedParameter::Omega0,
        PerturbedParameter::Omega1,
        PerturbedParameter::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbedParameter::A => "A",
            PerturbedParameter::Q => "Q",
            PerturbedParameter::Beta => "beta",
            PerturbedParameter::Omega0 => "omega0",
            PerturbedParameter::Omega1 => "omega1",
            PerturbedParameter::Delta => "delta",
        }
    }
}

impl std::fmt::Display for PerturbedParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    PreTraining,
    PostTraining,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub parameter: PerturbedParameter,
    pub sigma: f64,
    pub seed: u64,
    pub placement: Placement,
}

/// Multiplies the selected per-oscillator vector by independent `(1 + sigma z)`
/// factors, `z` standard normal. Values are not clamped, so very large `sigma`
/// may produce negative parameters.
///
/// The drive configuration is passed through unchanged: amplitude disorder is
/// carried per oscillator in `amp_scale`.
pub fn perturb_network(
    instance: &NetworkInstance,
    drive: &DriveConfig,
    spec: &PerturbationSpec,
) -> (NetworkInstance, DriveConfig) {
    assert!(spec.sigma >= 0.0, "sigma must be non-negative");
    let mut out = instance.clone();
    if spec.sigma > 0.0 {
        let mut rng = rng_from_seed(spec.seed);
        for v in out.vector_mut(spec.parameter).iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v *= 1.0 + spec.sigma * z;
        }
    }
    (out, *drive)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive() -> DriveConfig {
        DriveConfig {
            amplitude: 0.8,
            omega_drive: 1.14,
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let cfg = NetworkConfig::default();
        let a = build_network(&cfg).unwrap();
        let b = build_network(&cfg).unwrap();
        assert_eq!(a, b);
        let bits = |x: &NetworkInstance| x.beta.iter().chain(&x.delta).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn degenerate_probabilities() {
        let cfg = NetworkConfig {
            p_strong: 0.0,
            p_input: 0.0,
            ..Default::default()
        };
        let net = build_network(&cfg).unwrap();
        assert!(net.beta.iter().all(|&b| b == cfg.beta_weak));
        assert!(net.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn strong_count_is_plausibly_binomial() {
        // N=400, p=0.25: mean 100, std sqrt(75) ~ 8.66
        let net = build_network(&NetworkConfig::default()).unwrap();
        let c = net.strong_count(1.0) as f64;
        assert!((c - 100.0).abs() < 4.0 * 75f64.sqrt(), "count {c}");
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = NetworkConfig {
            quality: -1.0,
            ..Default::default()
        };
        let err = build_network(&cfg).unwrap_err();
        assert!(err.to_string().contains("quality"));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let net = build_network(&NetworkConfig::default()).unwrap();
        let spec = PerturbationSpec {
            parameter: PerturbedParameter::Omega0,
            sigma: 0.0,
            seed: 3,
            placement: Placement::PreTraining,
        };
        let (p, d) = perturb_network(&net, &drive(), &spec);
        assert_eq!(p, net);
        assert_eq!(d, drive());
    }

    #[test]
    fn perturbation_is_selective() {
        let net = build_network(&NetworkConfig::default()).unwrap();
        let spec = PerturbationSpec {
            parameter: PerturbedParameter::Q,
            sigma: 0.1,
            seed: 3,
            placement: Placement::PostTraining,
        };
        let (p, _) = perturb_network(&net, &drive(), &spec);
        assert_eq!(p.beta, net.beta);
        assert_eq!(p.delta, net.delta);
        assert_eq!(p.omega0, net.omega0);
        assert_eq!(p.omega1, net.omega1);
        assert_eq!(p.amp_scale, net.amp_scale);
        assert_ne!(p.quality, net.quality);
    }

    #[test]
    fn amplitude_perturbation_goes_to_amp_scale() {
        let net = build_network(&NetworkConfig::default()).unwrap();
        let spec = PerturbationSpec {
            parameter: PerturbedParameter::A,
            sigma: 0.05,
            seed: 9,
            placement: Placement::PreTraining,
        };
        let (p, d) = perturb_network(&net, &drive(), &spec);
        assert_eq!(d.amplitude, 0.8);
        assert_ne!(p.amp_scale, net.amp_scale);
    }

    #[test]
    fn perturbation_factor_statistics() {
        let cfg = NetworkConfig {
            n_oscillators: 10_000,
            ..Default::default()
        };
        let net = build_network(&cfg).unwrap();
        let spec = PerturbationSpec {
            parameter: PerturbedParameter::Omega0,
            sigma: 0.01,
            seed: 11,
            placement: Placement::PreTraining,
        };
        let (p, _) = perturb_network(&net, &drive(), &spec);
        let ratios: Vec<f64> = p.omega0.iter().zip(&net.omega0).map(|(a, b)| a / b).collect();
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 3e-4, "mean {mean}");
        assert!((var.sqrt() / 0.01 - 1.0).abs() < 0.05, "std {}", var.sqrt());
    }
}
