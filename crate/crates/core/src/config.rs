//! TOML experiment configuration with dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DriveConfig, IntegratorSettings};
use crate::error::{Error, Result};
use crate::experiments::{ReplicaSpec, RobustnessSpec, SweepSpec};
use crate::network::NetworkConfig;
use crate::parity::{default_cutoff, ParitySetup};
use crate::pipeline::EnvelopeSettings;
use crate::readout::{Ridge, SubsectionLayout};
use crate::speech::{SpeechPipelineConfig, SpeechSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// RK4 steps per drive cycle; ignored when `dt` is set.
    pub steps_per_cycle: usize,
    pub dt: Option<f64>,
    pub record_stride: usize,
    /// Leading input periods excluded from training and scoring.
    pub washout_periods: usize,
    pub blowup_bound: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            steps_per_cycle: IntegratorSettings::STEPS_PER_DRIVE_CYCLE,
            dt: None,
            record_stride: 1,
            washout_periods: 20,
            blowup_bound: IntegratorSettings::DEFAULT_BLOWUP_BOUND,
        }
    }
}

impl IntegratorConfig {
    pub fn settings(&self, drive: &DriveConfig) -> IntegratorSettings {
        IntegratorSettings {
            dt: self.dt.unwrap_or(drive.period() / self.steps_per_cycle.max(1) as f64),
            record_stride: self.record_stride,
            blowup_bound: self.blowup_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Envelope cutoff as a fraction of the decimated sample rate, in
    /// `(0, 0.5)`. Derived from the task's time scale when absent.
    pub cutoff: Option<f64>,
    pub decimation: usize,
    pub filter_order: usize,
    pub ridge: Ridge,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            cutoff: None,
            decimation: EnvelopeSettings::DECIMATION,
            filter_order: EnvelopeSettings::FILTER_ORDER,
            ridge: Ridge::default(),
        }
    }
}

/// Input-stream protocol shared by the parity-based tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParityProtocol {
    pub period: f64,
    pub train_periods: usize,
    pub eval_periods: usize,
    pub sections: usize,
}

impl Default for ParityProtocol {
    fn default() -> Self {
        let r = ParitySetup::reference();
        Self {
            period: r.period,
            train_periods: r.train_periods,
            eval_periods: r.eval_periods,
            sections: r.sections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParityTask {
    pub protocol: ParityProtocol,
    pub orders: Vec<usize>,
    /// Extra delays of the third-order parity for the memory capacity.
    pub delays: Vec<usize>,
    pub export_envelopes: bool,
}

impl Default for ParityTask {
    fn default() -> Self {
        Self {
            protocol: ParityProtocol::default(),
            orders: vec![3, 4, 5],
            delays: (0..5).collect(),
            export_envelopes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryTask {
    pub protocol: ParityProtocol,
    pub delays: Vec<usize>,
}

impl Default for MemoryTask {
    fn default() -> Self {
        Self {
            protocol: ParityProtocol::default(),
            delays: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeechTask {
    /// CSV manifest (`path,label,speaker`).
    pub manifest: Option<PathBuf>,
    pub pipeline: SpeechPipelineConfig,
    pub save_model: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepTask {
    pub protocol: ParityProtocol,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessTask {
    pub protocol: ParityProtocol,
    pub robustness: RobustnessSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicaTask {
    pub protocol: ParityProtocol,
    pub replicas: ReplicaSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Parity(ParityTask),
    MemoryCapacity(MemoryTask),
    Speech(SpeechTask),
    Sweep(SweepTask),
    Robustness(RobustnessTask),
    Replicas(ReplicaTask),
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Parity(ParityTask::default())
    }
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Parity(_) => "parity",
            TaskConfig::MemoryCapacity(_) => "memory_capacity",
            TaskConfig::Speech(_) => "speech",
            TaskConfig::Sweep(_) => "sweep",
            TaskConfig::Robustness(_) => "robustness",
            TaskConfig::Replicas(_) => "replicas",
        }
    }

    pub fn protocol(&self) -> Option<&ParityProtocol> {
        match self {
            TaskConfig::Parity(t) => Some(&t.protocol),
            TaskConfig::MemoryCapacity(t) => Some(&t.protocol),
            TaskConfig::Sweep(t) => Some(&t.protocol),
            TaskConfig::Robustness(t) => Some(&t.protocol),
            TaskConfig::Replicas(t) => Some(&t.protocol),
            TaskConfig::Speech(_) => None,
        }
    }
}

/// Everything a run needs. `network.seed` is the master seed: every other
/// random stream derives from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub workers: usize,
    pub network: NetworkConfig,
    pub drive: DriveConfig,
    pub integrator: IntegratorConfig,
    pub readout: ReadoutConfig,
    pub task: TaskConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            workers: 1,
            network: NetworkConfig::default(),
            drive: DriveConfig::default(),
            integrator: IntegratorConfig::default(),
            readout: ReadoutConfig::default(),
            task: TaskConfig::default(),
        }
    }
}

/// Sets `key` (dotted path) in a TOML table. The value is parsed as a TOML
/// literal when possible and taken as a bare string otherwise.
pub fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parsed: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty path segment in override"));
    }
    let (last, path) = parts.split_last().expect("nonempty split");
    let mut table = root;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), parsed);
    Ok(())
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::config(s, "override must look like key=value"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text, Path::new("<config>"))?, Path::new("<config>"))
    }

    fn from_table(table: toml::Table, origin: &Path) -> Result<Self> {
        Self::deserialize(toml::Value::Table(table)).map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Reads a config file, applies `key=value` overrides, and resolves
    /// relative file references against the config file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut table = parse_table(&text, path)?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let mut cfg = Self::from_table(table, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let TaskConfig::Speech(SpeechTask {
            manifest: Some(m), ..
        }) = &mut cfg.task
        {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("config", e.to_string()))
    }

    /// Hex digest identifying the experiment, independent of where results
    /// go and how many workers run it.
    pub fn spec_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.workers = 1;
        let digest = Sha256::digest(c.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    pub fn master_seed(&self) -> u64 {
        self.network.seed
    }

    /// Drive and network actually simulated: the speech task brings its own
    /// drive and input gain.
    pub fn effective_drive(&self) -> DriveConfig {
        match &self.task {
            TaskConfig::Speech(s) => s.pipeline.drive(),
            _ => self.drive,
        }
    }

    pub fn effective_network(&self) -> NetworkConfig {
        match &self.task {
            TaskConfig::Speech(s) => NetworkConfig {
                delta_star: s.pipeline.delta_star,
                ..self.network.clone()
            },
            _ => self.network.clone(),
        }
    }

    pub fn integrator_settings(&self) -> IntegratorSettings {
        self.integrator.settings(&self.effective_drive())
    }

    fn envelope_settings(&self, default_cutoff: f64) -> EnvelopeSettings {
        EnvelopeSettings {
            decimation: self.readout.decimation,
            filter_order: self.readout.filter_order,
            cutoff: self.readout.cutoff.unwrap_or(default_cutoff),
        }
    }

    /// Parity setup for the tasks that have a parity protocol.
    pub fn parity_setup(&self) -> Option<ParitySetup> {
        let p = self.task.protocol()?;
        let integrator = self.integrator_settings();
        Some(ParitySetup {
            drive: self.drive,
            integrator,
            envelope: self.envelope_settings(default_cutoff(p.period, &integrator, self.readout.decimation)),
            period: p.period,
            train_periods: p.train_periods,
            eval_periods: p.eval_periods,
            washout_periods: self.integrator.washout_periods,
            sections: p.sections,
            ridge: self.readout.ridge,
        })
    }

    pub fn speech_setup(&self) -> Option<SpeechSetup> {
        let TaskConfig::Speech(s) = &self.task else {
            return None;
        };
        let integrator = self.integrator_settings();
        let cutoff = EnvelopeSettings::normalized_cutoff(s.pipeline.cutoff_frequency, &integrator, self.readout.decimation);
        Some(SpeechSetup::new(
            s.pipeline.clone(),
            integrator,
            self.envelope_settings(cutoff),
            self.readout.ridge,
        ))
    }

    /// Every problem with the configuration, without running anything.
    pub fn violations(&self) -> Vec<Error> {
        let mut out = self.effective_network().violations("network.");
        let bad = |field: &str, reason: &str| Error::config(field, reason);
        if self.workers == 0 {
            out.push(bad("workers", "must be at least 1"));
        }
        if !(self.drive.amplitude >= 0.0 && self.drive.amplitude.is_finite()) {
            out.push(bad("drive.amplitude", "must be non-negative"));
        }
        if !(self.drive.omega_drive > 0.0 && self.drive.omega_drive.is_finite()) {
            out.push(bad("drive.omega_drive", "must be positive"));
        }
        let ig = &self.integrator;
        if ig.dt.is_none() && ig.steps_per_cycle < 4 {
            out.push(bad("integrator.steps_per_cycle", "must be at least 4"));
        }
        if let Some(dt) = ig.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                out.push(bad("integrator.dt", "must be positive"));
            }
        }
        if ig.record_stride == 0 {
            out.push(bad("integrator.record_stride", "must be at least 1"));
        }
        if !(ig.blowup_bound > 0.0) {
            out.push(bad("integrator.blowup_bound", "must be positive"));
        }
        let ro = &self.readout;
        if let Some(c) = ro.cutoff {
            if !(c > 0.0 && c < 0.5) {
                out.push(bad(
                    "readout.cutoff",
                    "normalized cutoff must lie in (0, 0.5) of the decimated sample rate",
                ));
            }
        }
        if ro.decimation == 0 {
            out.push(bad("readout.decimation", "must be at least 1"));
        }
        if ro.filter_order == 0 {
            out.push(bad("readout.filter_order", "must be at least 1"));
        }
        match ro.ridge {
            Ridge::Absolute(r) | Ridge::Relative(r) if !(r > 0.0 && r.is_finite()) => {
                out.push(bad("readout.ridge", "must be positive"));
            }
            _ => {}
        }

        if let Some(p) = self.task.protocol() {
            if !(p.period > 0.0 && p.period.is_finite()) {
                out.push(bad("task.protocol.period", "must be positive"));
            }
            if p.train_periods == 0 || p.eval_periods == 0 {
                out.push(bad("task.protocol", "train_periods and eval_periods must be at least 1"));
            }
            if let Err(e) = SubsectionLayout::contiguous(self.network.n_oscillators, p.sections) {
                out.push(bad("task.protocol.sections", &e.to_string()));
            }
        }
        match &self.task {
            TaskConfig::Parity(t) => {
                if t.orders.is_empty() && t.delays.is_empty() {
                    out.push(bad("task.orders", "need at least one order or delay"));
                }
                if t.orders.contains(&0) {
                    out.push(bad("task.orders", "orders must be at least 1"));
                }
                self.check_history(t.orders.iter().copied().chain(t.delays.iter().map(|d| d + 3)), &mut out);
            }
            TaskConfig::MemoryCapacity(t) => {
                if t.delays.is_empty() {
                    out.push(bad("task.delays", "need at least one delay"));
                }
                self.check_history(t.delays.iter().map(|d| d + 3), &mut out);
            }
            TaskConfig::Speech(s) => {
                match &s.manifest {
                    None => out.push(bad("task.manifest", "speech task needs a manifest path")),
                    Some(m) if !m.is_file() => {
                        out.push(bad("task.manifest", &format!("{} does not exist", m.display())))
                    }
                    _ => {}
                }
                out.extend(s.pipeline.violations("task.pipeline."));
                if let Err(e) = SubsectionLayout::overlapping(
                    self.network.n_oscillators,
                    s.pipeline.section_len,
                    s.pipeline.section_stride,
                ) {
                    out.push(bad("task.pipeline.section_len", &e.to_string()));
                }
            }
            TaskConfig::Sweep(t) => {
                out.extend(t.sweep.violations("task.sweep."));
                self.check_history(t.sweep.orders.iter().copied(), &mut out);
            }
            TaskConfig::Robustness(t) => {
                out.extend(t.robustness.violations("task.robustness."));
                self.check_history(t.robustness.orders.iter().copied(), &mut out);
            }
            TaskConfig::Replicas(t) => {
                out.extend(t.replicas.violations("task.replicas."));
                self.check_history(t.replicas.orders.iter().copied(), &mut out);
            }
        }

        if out.is_empty() {
            // cross-field checks need a sane base
            let env = self
                .parity_setup()
                .map(|p| (p.envelope, p.drive))
                .or_else(|| self.speech_setup().map(|s| (s.envelope, s.config.drive())));
            if let Some((env, drive)) = env {
                if !(env.cutoff > 0.0 && env.cutoff < 0.5) {
                    out.push(bad(
                        "readout.cutoff",
                        &format!("derived normalized cutoff {:.4} is outside (0, 0.5)", env.cutoff),
                    ));
                } else if let Err(e) = env.check_alias(&drive, &self.integrator_settings()) {
                    out.push(e);
                }
            }
        }
        out
    }

    fn check_history(&self, needed: impl Iterator<Item = usize>, out: &mut Vec<Error>) {
        if let Some(h) = needed.max() {
            if h > self.integrator.washout_periods {
                out.push(Error::config(
                    "integrator.washout_periods",
                    format!("must cover the {h} periods of history the targets need"),
                ));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn parse_table(text: &str, origin: &Path) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.violations().is_empty(), "{:?}", c.violations());
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut c = ExperimentConfig::default();
        c.task = TaskConfig::Robustness(RobustnessTask::default());
        c.readout.ridge = Ridge::Absolute(1e-3);
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_toml_str("[network]\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[task]\nkind = \"parity\"\nbogus = 2\n").is_err());
    }

    #[test]
    fn overrides_parse_values() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "network.seed", "7").unwrap();
        apply_override(&mut t, "task.kind", "sweep").unwrap();
        apply_override(&mut t, "task.sweep.a_values", "[0.5, 1.0]").unwrap();
        let c = ExperimentConfig::deserialize(toml::Value::Table(t)).unwrap();
        assert_eq!(c.network.seed, 7);
        let TaskConfig::Sweep(s) = c.task else { panic!() };
        assert_eq!(s.sweep.a_values, vec![0.5, 1.0]);
        assert!(parse_assignment("a.b=3").is_ok());
        assert!(parse_assignment("=3").is_err());
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn all_violations_listed() {
        let c = ExperimentConfig::from_toml_str(
            "[network]\nquality = -1.0\n[readout]\ncutoff = 0.7\n[drive]\nomega_drive = 0.0\n",
        )
        .unwrap();
        let fields: Vec<String> = c
            .violations()
            .iter()
            .map(|e| match e {
                Error::InvalidConfig { field, .. } => field.clone(),
                other => other.to_string(),
            })
            .collect();
        assert!(fields.contains(&"network.quality".to_string()));
        assert!(fields.contains(&"readout.cutoff".to_string()));
        assert!(fields.contains(&"drive.omega_drive".to_string()));
    }

    #[test]
    fn speech_manifest_required() {
        let c = ExperimentConfig::from_toml_str("[task]\nkind = \"speech\"\n").unwrap();
        assert!(c.violations().iter().any(|e| e.to_string().contains("task.manifest")));
        let c = ExperimentConfig::from_toml_str("[task]\nkind = \"speech\"\nmanifest = \"/no/such.csv\"\n").unwrap();
        assert!(c.violations().iter().any(|e| e.to_string().contains("does not exist")));
    }

    #[test]
    fn spec_hash_ignores_output_and_workers() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.workers = 4;
        assert_eq!(a.spec_hash().unwrap(), b.spec_hash().unwrap());
        b.network.seed = 1;
        assert_ne!(a.spec_hash().unwrap(), b.spec_hash().unwrap());
    }

    #[test]
    fn parity_setup_matches_reference() {
        let c = ExperimentConfig::default();
        assert_eq!(c.parity_setup().unwrap(), ParitySetup::reference());
    }
}
