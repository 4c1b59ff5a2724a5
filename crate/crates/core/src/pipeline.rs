//! Simulation-to-envelope plumbing shared by the benchmarks.

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_count, DriveConfig, InputSignal, IntegratorSettings, Integrator, State};
use crate::error::{Error, Result};
use crate::network::NetworkInstance;
use crate::readout::{design_lowpass, EnvelopeExtractor, EnvelopeMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSettings {
    pub decimation: usize,
    pub filter_order: usize,
    /// Cutoff as a fraction of the decimated sample rate.
    pub cutoff: f64,
}

impl EnvelopeSettings {
    pub const DECIMATION: usize = 10;
    pub const FILTER_ORDER: usize = 7;

    /// Sample spacing after decimation.
    pub fn decimated_dt(&self, integ: &IntegratorSettings) -> f64 {
        integ.dt * (integ.record_stride.max(1) * self.decimation) as f64
    }

    /// Normalized cutoff for a cutoff frequency given in cycles per time unit.
    pub fn normalized_cutoff(freq: f64, integ: &IntegratorSettings, decimation: usize) -> f64 {
        freq * integ.dt * (integ.record_stride.max(1) * decimation) as f64
    }

    /// Frequency (cycles per time unit) at which the `2W` demodulation image
    /// appears after decimation, folded into `[0, fs/2]`.
    pub fn aliased_image(&self, drive: &DriveConfig, integ: &IntegratorSettings) -> f64 {
        let fs = 1.0 / self.decimated_dt(integ);
        let image = 2.0 * drive.omega_drive / (2.0 * std::f64::consts::PI);
        let folded = image.rem_euclid(fs);
        folded.min(fs - folded)
    }

    /// Rejects settings where the folded carrier image would sit below twice
    /// the cutoff frequency, i.e. inside or next to the pass band.
    pub fn check_alias(&self, drive: &DriveConfig, integ: &IntegratorSettings) -> Result<()> {
        let fc = self.cutoff / self.decimated_dt(integ);
        let alias = self.aliased_image(drive, integ);
        if alias < 2.0 * fc {
            return Err(Error::config(
                "readout.cutoff",
                format!("demodulation image aliases to {alias:.4}, within 2x of cutoff {fc:.4}"),
            ));
        }
        Ok(())
    }
}

/// Integrates from rest over `[0, t_end]` and demodulates on the fly.
pub fn simulate_envelopes(
    instance: &NetworkInstance,
    drive: &DriveConfig,
    input: &InputSignal,
    t_end: f64,
    integ: &IntegratorSettings,
    env: &EnvelopeSettings,
) -> Result<EnvelopeMatrix> {
    let filter = design_lowpass(env.filter_order, env.cutoff)?;
    let mut extractor = EnvelopeExtractor::new(instance.len(), drive, env.decimation, &filter);
    let mut state = State::rest(instance.len());
    let steps = step_count(t_end, integ.dt);
    Integrator::new(instance, drive, input, *integ).run(&mut state, steps, |t, x| {
        extractor.push(t, x)
    })?;
    Ok(extractor.finish())
}
