//! Oracle measurements of the numerical core, shared by the numerics suite
//! and the acceptance harness. Each returns the measured error so callers
//! choose how to report it.

#![allow(dead_code)]

use std::f64::consts::PI;

use oscnet::dynamics::{integrate, DriveConfig, InputSignal, IntegratorSettings, State};
use oscnet::network::{build_network, NetworkConfig, NetworkInstance};
use oscnet::parity::{generate_binary_input, ParitySetup};
use oscnet::readout::{design_lowpass, solve_weights, CrossAccumulator, GramAccumulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const W0: f64 = 1.3;
pub const Q: f64 = 60.0;

pub fn settings(dt: f64) -> IntegratorSettings {
    IntegratorSettings {
        dt,
        record_stride: 1,
        blowup_bound: 1e6,
    }
}

pub fn linear_single() -> NetworkInstance {
    NetworkInstance::uniform(1, W0, Q, 1.5, 0.0, 0.0)
}

/// Exact solution of `x'' + 2g x' + w0^2 x = f cos(W t)` with `x(0) = x0`,
/// `x'(0) = v0`.
pub fn exact_linear(t: f64, x0: f64, v0: f64, f: f64, big_w: f64) -> f64 {
    let g = W0 / (2.0 * Q);
    let wd = (W0 * W0 - g * g).sqrt();
    // H = f / (w0^2 - W^2 + 2 i g W)
    let (re_d, im_d) = (W0 * W0 - big_w * big_w, 2.0 * g * big_w);
    let den = re_d * re_d + im_d * im_d;
    let (hr, hi) = (f * re_d / den, -f * im_d / den);
    let xp = hr * (big_w * t).cos() - hi * (big_w * t).sin();
    let c1 = x0 - hr;
    let c2 = (v0 + big_w * hi + g * c1) / wd;
    (-g * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin()) + xp
}

fn final_position(drive: &DriveConfig, t_end: f64, dt: f64, x0: f64, v0: f64) -> f64 {
    let init = State {
        position: vec![x0],
        velocity: vec![v0],
        time: 0.0,
    };
    let traj = integrate(&linear_single(), drive, &InputSignal::zero(), (0.0, t_end), settings(dt), &init).unwrap();
    *traj.positions.last().unwrap()
}

/// Global-error ratios under successive step halvings, for an undriven and
/// a driven linear oscillator.
pub fn rk4_error_ratios() -> Vec<f64> {
    let t_end = 20.0;
    let mut ratios = Vec::new();
    for (amp, big_w) in [(0.0, 1.0), (0.8, 1.14)] {
        let drive = DriveConfig {
            amplitude: amp,
            omega_drive: big_w,
        };
        let exact = exact_linear(t_end, 1.0, 0.3, amp, big_w);
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&dt| (final_position(&drive, t_end, dt, 1.0, 0.3) - exact).abs())
            .collect();
        ratios.extend(errs.windows(2).map(|w| w[0] / w[1]));
    }
    ratios
}

/// Relative error of the simulated steady-state amplitude of a driven linear
/// oscillator against `f / sqrt((w0^2 - W^2)^2 + (w0 W / Q)^2)`.
pub fn steady_state_amplitude_error() -> f64 {
    let (big_w, f) = (1.14, 0.8);
    let drive = DriveConfig {
        amplitude: f,
        omega_drive: big_w,
    };
    let period = 2.0 * PI / big_w;
    let dt = period / 200.0;
    // transient decays as exp(-w0 t / 2Q): 1500 units leaves < 1e-7
    let traj = integrate(
        &linear_single(),
        &drive,
        &InputSignal::zero(),
        (0.0, 1500.0),
        settings(dt),
        &State::rest(1),
    )
    .unwrap();
    let tail = (5.0 * period / dt) as usize;
    let measured = traj.positions[traj.positions.len() - tail..]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let analytic = f / ((W0 * W0 - big_w * big_w).powi(2) + (W0 * big_w / Q).powi(2)).sqrt();
    (measured / analytic - 1.0).abs()
}

/// Largest envelope difference between runs from rest and from a random
/// kick, once 100 input periods have passed.
pub fn echo_state_difference() -> f64 {
    let setup = ParitySetup::reference();
    let inst = build_network(&NetworkConfig::default()).unwrap();
    let washout = 100;
    let stream = generate_binary_input(setup.period, washout + 2, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = inst.len();
    let kicked = State {
        position: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        velocity: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        time: 0.0,
    };
    let mut integ = setup.integrator;
    integ.record_stride = 40;
    let span = (0.0, stream.duration());
    let signal = stream.to_signal();
    let a = integrate(&inst, &setup.drive, &signal, span, integ, &State::rest(n)).unwrap();
    let b = integrate(&inst, &setup.drive, &signal, span, integ, &kicked).unwrap();
    let t_wash = washout as f64 * setup.period;
    let mut worst = 0.0f64;
    for j in 0..a.columns() {
        if a.times[j] >= t_wash {
            for (x, y) in a.column(j).iter().zip(b.column(j)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

/// Worst deviation of the DC gain from 1 and of the cutoff gain from
/// `1/sqrt(2)` over a range of orders and cutoffs.
pub fn butterworth_gain_errors() -> (f64, f64) {
    let (mut dc, mut cut) = (0.0f64, 0.0f64);
    for order in [1, 2, 5, 7, 8] {
        for cutoff in [0.01, 0.05, 0.2, 0.4] {
            let f = design_lowpass(order, cutoff).unwrap();
            dc = dc.max((f.magnitude(0.0) - 1.0).abs());
            cut = cut.max((f.magnitude(2.0 * PI * cutoff) - std::f64::consts::FRAC_1_SQRT_2).abs());
        }
    }
    (dc, cut)
}

pub fn random_columns(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Largest relative entry difference between the streamed Gram matrix and
/// the dense product of the stacked columns.
pub fn gram_relative_error() -> f64 {
    let dim = 17;
    let cols = random_columns(dim, 500, 1);
    let mut g = GramAccumulator::new(dim);
    for c in &cols {
        g.push(c).unwrap();
    }
    let dense = g.to_dense();
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let oracle: f64 = cols.iter().map(|c| c[i] * c[j]).sum();
            worst = worst.max((dense[(i, j)] - oracle).abs() / oracle.abs().max(1.0));
        }
    }
    worst
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Worst relative error of the ridge solver against the dense normal
/// equations solved by elimination.
pub fn ridge_relative_error() -> f64 {
    let dim = 12;
    let cols = random_columns(dim, 300, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f64> = (0..cols.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = GramAccumulator::new(dim);
    let mut c = CrossAccumulator::new(dim, 1);
    for (col, &t) in cols.iter().zip(&y) {
        g.push(col).unwrap();
        c.push(col, &[t]).unwrap();
    }
    let mut worst = 0.0f64;
    for ridge in [1e-8, 1e-2, 10.0] {
        let w = solve_weights(&g, &c, ridge).unwrap();
        let a: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| cols.iter().map(|x| x[i] * x[j]).sum::<f64>() + if i == j { ridge } else { 0.0 })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..dim).map(|i| cols.iter().zip(&y).map(|(x, t)| x[i] * t).sum()).collect();
        let oracle = gauss_solve(a, b);
        let norm = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = w.iter().zip(&oracle).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
    }
    worst
}
