//! Equations of motion for the oscillator chain and a fixed-step RK4 integrator.
//!
//! Each oscillator obeys
//!
//! ```text
//! x_i'' = -(w0_i/Q_i) x_i' - w0_i^2 x_i - beta_i x_i^3
//!         + A a_i [1 + delta_i u(t)] cos(W t)
//!         + w1_i^2 (x_{i-1} - 2 x_i + x_{i+1})
//! ```
//!
//! with free ends: the coupling reduces to `w1^2 (x_2 - x_1)` for the first
//! oscillator and `w1^2 (x_{N-1} - x_N)` for the last.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub amplitude: f64,
    pub omega_drive: f64,
}

impl Default for DriveConfig {
    /// Parity operating point.
    fn default() -> Self {
        Self {
            amplitude: 0.8,
            omega_drive: 1.14,
        }
    }
}

impl DriveConfig {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_drive
    }
}

/// One contiguous piece of an [`InputSignal`].
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// `values[k]` holds on `[breakpoints[k], breakpoints[k + 1])`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Uniform samples with zero-order hold: `values[k]` holds on
    /// `[start + k dt, start + (k + 1) dt)`.
    Sampled { start: f64, dt: f64, values: Vec<f64> },
}

impl Segment {
    pub fn start(&self) -> f64 {
        match self {
            Segment::PiecewiseConstant { breakpoints, .. } => breakpoints[0],
            Segment::Sampled { start, .. } => *start,
        }
    }

    pub fn end(&self) -> f64 {
        match self {
            Segment::PiecewiseConstant { breakpoints, .. } => *breakpoints.last().unwrap(),
            Segment::Sampled { start, dt, values } => start + dt * values.len() as f64,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        match self {
            Segment::PiecewiseConstant { breakpoints, values } => {
                // first breakpoint strictly greater than t, minus one
                let k = breakpoints.partition_point(|&b| b <= t);
                if k == 0 || k > values.len() {
                    0.0
                } else {
                    values[k - 1]
                }
            }
            Segment::Sampled { start, dt, values } => {
                let k = ((t - start) / dt).floor();
                if k < 0.0 {
                    return 0.0;
                }
                values.get(k as usize).copied().unwrap_or(0.0)
            }
        }
    }
}

/// Scalar input `u(t)`: a sorted list of non-overlapping segments, zero
/// everywhere outside them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputSignal {
    segments: Vec<Segment>,
}

impl InputSignal {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::config(
                "input.breakpoints",
                "need one more breakpoint than values",
            ));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(
                "input.breakpoints",
                "breakpoint times must be strictly increasing",
            ));
        }
        Ok(Self {
            segments: vec![Segment::PiecewiseConstant { breakpoints, values }],
        })
    }

    pub fn sampled(start: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::config("input.dt", "must be positive"));
        }
        Ok(Self {
            segments: vec![Segment::Sampled { start, dt, values }],
        })
    }

    /// Builds a signal from segments already placed in time.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        for w in segments.windows(2) {
            if w[0].end() > w[1].start() {
                return Err(Error::config("input.segments", "segments overlap or are unsorted"));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Time span `(start, end)` covered by the segments.
    pub fn extent(&self) -> Option<(f64, f64)> {
        Some((self.segments.first()?.start(), self.segments.last()?.end()))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.segments.partition_point(|s| s.start() <= t);
        if k == 0 {
            return 0.0;
        }
        let seg = &self.segments[k - 1];
        if t >= seg.end() {
            0.0
        } else {
            seg.eval(t)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn rest(n: usize) -> Self {
        Self {
            position: vec![0.0; n],
            velocity: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).all(|v| v.is_finite())
    }
}

/// Sampled positions, stored column-major: column `j` holds all oscillators at
/// `times[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub dt_record: f64,
}

impl Trajectory {
    pub fn columns(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.positions[j * self.n..(j + 1) * self.n]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.columns()).map(|j| self.positions[j * self.n + i]).collect()
    }
}

/// Per-oscillator coefficients of the right-hand side, precomputed once.
#[derive(Debug, Clone)]
pub struct Coefficients {
    damping: Vec<f64>,
    stiffness: Vec<f64>,
    beta: Vec<f64>,
    coupling: Vec<f64>,
    force: Vec<f64>,
    force_input: Vec<f64>,
    omega_drive: f64,
}

impl Coefficients {
    pub fn new(instance: &NetworkInstance, drive: &DriveConfig) -> Self {
        let n = instance.len();
        let mut c = Coefficients {
            damping: Vec::with_capacity(n),
            stiffness: Vec::with_capacity(n),
            beta: instance.beta.clone(),
            coupling: instance.omega1.iter().map(|w| w * w).collect(),
            force: Vec::with_capacity(n),
            force_input: Vec::with_capacity(n),
            omega_drive: drive.omega_drive,
        };
        for i in 0..n {
            let w0 = instance.omega0[i];
            c.damping.push(w0 / instance.quality[i]);
            c.stiffness.push(w0 * w0);
            let a = drive.amplitude * instance.amp_scale[i];
            c.force.push(a);
            c.force_input.push(a * instance.delta[i]);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Accelerations for positions `x`, velocities `v`, input value `u` and
    /// carrier value `carrier = cos(W t)`.
    #[inline]
    pub fn accel(&self, x: &[f64], v: &[f64], u: f64, carrier: f64, out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let xi = x[i];
            let lap = match (i, n) {
                (_, 1) => 0.0,
                (0, _) => x[1] - xi,
                (i, n) if i == n - 1 => x[i - 1] - xi,
                (i, _) => x[i - 1] - 2.0 * xi + x[i + 1],
            };
            out[i] = -self.damping[i] * v[i] - self.stiffness[i] * xi - self.beta[i] * xi * xi * xi
                + (self.force[i] + self.force_input[i] * u) * carrier
                + self.coupling[i] * lap;
        }
    }
}

/// Time derivative `(x', x'')` of a state.
pub fn rhs(
    state: &State,
    u_value: f64,
    instance: &NetworkInstance,
    drive: &DriveConfig,
) -> (Vec<f64>, Vec<f64>) {
    let coeffs = Coefficients::new(instance, drive);
    let mut acc = vec![0.0; state.position.len()];
    let carrier = (drive.omega_drive * state.time).cos();
    coeffs.accel(&state.position, &state.velocity, u_value, carrier, &mut acc);
    (state.velocity.clone(), acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub record_stride: usize,
    /// Largest admissible |x_i| before the run is declared unstable.
    pub blowup_bound: f64,
}

impl IntegratorSettings {
    pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;
    pub const STEPS_PER_DRIVE_CYCLE: usize = 80;

    /// 80 steps per drive cycle, every step recorded.
    pub fn for_drive(drive: &DriveConfig) -> Self {
        Self {
            dt: drive.period() / Self::STEPS_PER_DRIVE_CYCLE as f64,
            record_stride: 1,
            blowup_bound: Self::DEFAULT_BLOWUP_BOUND,
        }
    }
}

/// Classical fourth-order Runge-Kutta stepper over the chain.
pub struct Integrator<'a> {
    coeffs: Coefficients,
    input: &'a InputSignal,
    settings: IntegratorSettings,
    scratch: Scratch,
}

struct Scratch {
    kx: [Vec<f64>; 4],
    kv: [Vec<f64>; 4],
    x: Vec<f64>,
    v: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(
        instance: &NetworkInstance,
        drive: &DriveConfig,
        input: &'a InputSignal,
        settings: IntegratorSettings,
    ) -> Self {
        let n = instance.len();
        let z = || vec![0.0; n];
        Self {
            coeffs: Coefficients::new(instance, drive),
            input,
            settings,
            scratch: Scratch {
                kx: [z(), z(), z(), z()],
                kv: [z(), z(), z(), z()],
                x: z(),
                v: z(),
            },
        }
    }

    /// Advances `state` by one step of size `dt`, leaving `state.time`
    /// untouched; the caller owns the clock.
    fn step(&mut self, state: &mut State, t: f64, dt: f64) {
        let n = self.coeffs.len();
        let w = self.coeffs.omega_drive;
        let half = 0.5 * dt;
        let (u0, c0) = (self.input.eval(t), (w * t).cos());
        let (um, cm) = (self.input.eval(t + half), (w * (t + half)).cos());
        let (u1, c1) = (self.input.eval(t + dt), (w * (t + dt)).cos());
        let s = &mut self.scratch;

        s.kx[0].copy_from_slice(&state.velocity);
        self.coeffs.accel(&state.position, &state.velocity, u0, c0, &mut s.kv[0]);

        for i in 0..n {
            s.x[i] = state.position[i] + half * s.kx[0][i];
            s.v[i] = state.velocity[i] + half * s.kv[0][i];
        }
        s.kx[1].copy_from_slice(&s.v);
        self.coeffs.accel(&s.x, &s.v, um, cm, &mut s.kv[1]);

        for i in 0..n {
            s.x[i] = state.position[i] + half * s.kx[1][i];
            s.v[i] = state.velocity[i] + half * s.kv[1][i];
        }
        s.kx[2].copy_from_slice(&s.v);
        self.coeffs.accel(&s.x, &s.v, um, cm, &mut s.kv[2]);

        for i in 0..n {
            s.x[i] = state.position[i] + dt * s.kx[2][i];
            s.v[i] = state.velocity[i] + dt * s.kv[2][i];
        }
        s.kx[3].copy_from_slice(&s.v);
        self.coeffs.accel(&s.x, &s.v, u1, c1, &mut s.kv[3]);

        let sixth = dt / 6.0;
        for i in 0..n {
            state.position[i] +=
                sixth * (s.kx[0][i] + 2.0 * s.kx[1][i] + 2.0 * s.kx[2][i] + s.kx[3][i]);
            state.velocity[i] +=
                sixth * (s.kv[0][i] + 2.0 * s.kv[1][i] + 2.0 * s.kv[2][i] + s.kv[3][i]);
        }
    }

    /// Integrates `steps` steps from `state`, calling `record(t, positions)`
    /// on the initial state and after every `record_stride` steps.
    pub fn run<F>(&mut self, state: &mut State, steps: usize, mut record: F) -> Result<()>
    where
        F: FnMut(f64, &[f64]),
    {
        let dt = self.settings.dt;
        let stride = self.settings.record_stride.max(1);
        let bound = self.settings.blowup_bound;
        let t0 = state.time;
        record(t0, &state.position);
        for k in 0..steps {
            let t = t0 + k as f64 * dt;
            self.step(state, t, dt);
            state.time = t0 + (k + 1) as f64 * dt;
            if let Some((index, &value)) = state
                .position
                .iter()
                .enumerate()
                .find(|(_, x)| !(x.abs() <= bound))
            {
                return Err(Error::NumericalBlowup {
                    time: state.time,
                    index,
                    value,
                    bound,
                });
            }
            if (k + 1) % stride == 0 {
                record(state.time, &state.position);
            }
        }
        Ok(())
    }
}

/// Number of fixed steps covering `span`, rounding to the nearest integer.
pub fn step_count(span: f64, dt: f64) -> usize {
    (span / dt).round().max(0.0) as usize
}

/// Integrates over `t_span` and collects the recorded positions.
pub fn integrate(
    instance: &NetworkInstance,
    drive: &DriveConfig,
    input: &InputSignal,
    t_span: (f64, f64),
    settings: IntegratorSettings,
    initial: &State,
) -> Result<Trajectory> {
    if !(settings.dt > 0.0) {
        return Err(Error::config("integrator.dt", "must be positive"));
    }
    if initial.position.len() != instance.len() || initial.velocity.len() != instance.len() {
        return Err(Error::DimensionMismatch {
            expected: instance.len(),
            found: initial.position.len(),
        });
    }
    if !initial.is_finite() {
        return Err(Error::config("initial", "state must be finite"));
    }
    let steps = step_count(t_span.1 - t_span.0, settings.dt);
    let n = instance.len();
    let mut state = initial.clone();
    state.time = t_span.0;
    let cap = steps / settings.record_stride.max(1) + 1;
    let mut times = Vec::with_capacity(cap);
    let mut positions = Vec::with_capacity(cap * n);
    Integrator::new(instance, drive, input, settings).run(&mut state, steps, |t, x| {
        times.push(t);
        positions.extend_from_slice(x);
    })?;
    Ok(Trajectory {
        n,
        times,
        positions,
        dt_record: settings.dt * settings.record_stride.max(1) as f64,
    })
}
