//! Parameter sweeps, perturbation robustness and training replication.
//!
//! Work items (grid cells, replicas) are independent: each derives its own
//! seeds from the master seed and its indices, so results do not depend on
//! the number of workers or the order in which items finish.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{perturb_network, NetworkInstance, PerturbationSpec, PerturbedParameter, Placement};
use crate::parity::{default_cutoff, ParityModel, ParitySetup, ParityTarget};
use crate::rng::derive_seed;
use crate::stats::{mean, percentile, std_dev, Proportion};

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// A parity setup on a fixed network with the master seed of the run.
#[derive(Debug, Clone)]
pub struct ParityBench<'a> {
    pub instance: &'a NetworkInstance,
    pub setup: ParitySetup,
    /// Normalized envelope cutoff used at every operating point; when absent
    /// the cutoff follows the input period.
    pub fixed_cutoff: Option<f64>,
    pub seed: u64,
}

impl ParityBench<'_> {
    /// Setup at drive amplitude `a` and input period `t`.
    pub fn at(&self, a: f64, t: f64) -> ParitySetup {
        let mut s = self.setup.clone();
        s.drive.amplitude = a;
        s.period = t;
        s.envelope.cutoff = self
            .fixed_cutoff
            .unwrap_or_else(|| default_cutoff(t, &s.integrator, s.envelope.decimation));
        s
    }
}

fn targets(orders: &[usize]) -> Vec<ParityTarget> {
    orders.iter().map(|&n| ParityTarget::parity(n)).collect()
}

fn run_once(
    instance: &NetworkInstance,
    setup: &ParitySetup,
    targets: &[ParityTarget],
    train_seed: u64,
    eval_seed: u64,
) -> Result<Vec<Proportion>> {
    let models = setup.train(instance, targets, train_seed)?;
    Ok(setup
        .evaluate(instance, &models, eval_seed)?
        .into_iter()
        .map(|r| r.success)
        .collect())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

fn check_orders(orders: &[usize]) -> Result<()> {
    if orders.is_empty() || orders.contains(&0) {
        return Err(Error::config("orders", "need at least one parity order, each >= 1"));
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub a_values: Vec<f64>,
    pub t_values: Vec<f64>,
    pub orders: Vec<usize>,
    pub replicas: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            a_values: linspace(0.4, 1.2, 8),
            t_values: linspace(30.0, 130.0, 8),
            orders: vec![3, 4, 5],
            replicas: 1,
        }
    }
}

impl SweepSpec {
    pub fn violations(&self, prefix: &str) -> Vec<Error> {
        let mut out = Vec::new();
        if self.a_values.is_empty() || self.a_values.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            out.push(Error::config(format!("{prefix}a_values"), "need nonempty, non-negative amplitudes"));
        }
        if self.t_values.is_empty() || self.t_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            out.push(Error::config(format!("{prefix}t_values"), "need nonempty, positive periods"));
        }
        if check_orders(&self.orders).is_err() {
            out.push(Error::config(format!("{prefix}orders"), "need at least one parity order, each >= 1"));
        }
        if self.replicas == 0 {
            out.push(Error::config(format!("{prefix}replicas"), "must be at least 1"));
        }
        out
    }
}

/// One row of the long-format sweep table. Failed cells carry the error
/// message and no counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub a_index: usize,
    pub t_index: usize,
    pub amplitude: f64,
    pub period: f64,
    pub replica: usize,
    pub order: usize,
    pub successes: Option<usize>,
    pub trials: Option<usize>,
    pub p: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub a_index: usize,
    pub t_index: usize,
    pub order: usize,
    /// Pooled over replicas; `None` when the cell failed.
    pub success: Option<Proportion>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub a_values: Vec<f64>,
    pub t_values: Vec<f64>,
    pub orders: Vec<usize>,
    pub cells: Vec<GridCell>,
}

impl ResultGrid {
    pub fn cell(&self, a_index: usize, t_index: usize, order: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.a_index == a_index && c.t_index == t_index && c.order == order)
    }
}

fn sweep_cell(bench: &ParityBench, spec: &SweepSpec, ia: usize, it: usize) -> Vec<SweepRecord> {
    let (a, t) = (spec.a_values[ia], spec.t_values[it]);
    // keyed by the operating point, not its grid position
    let cell_seed = derive_seed(derive_seed(bench.seed, "sweep-a", a.to_bits()), "sweep-t", t.to_bits());
    let setup = bench.at(a, t);
    let tg = targets(&spec.orders);
    let record = |replica: usize, order: usize| SweepRecord {
        a_index: ia,
        t_index: it,
        amplitude: a,
        period: t,
        replica,
        order,
        successes: None,
        trials: None,
        p: None,
        ci_lo: None,
        ci_hi: None,
        error: None,
    };
    let mut out = Vec::new();
    for r in 0..spec.replicas {
        let res = run_once(
            bench.instance,
            &setup,
            &tg,
            derive_seed(cell_seed, "train", r as u64),
            derive_seed(cell_seed, "eval", r as u64),
        );
        match res {
            Ok(props) => out.extend(spec.orders.iter().zip(props).map(|(&n, s)| SweepRecord {
                successes: Some(s.successes),
                trials: Some(s.trials),
                p: Some(s.p),
                ci_lo: Some(s.ci_lo),
                ci_hi: Some(s.ci_hi),
                ..record(r, n)
            })),
            Err(e) => {
                // a failed replica fails the whole cell
                let msg = e.to_string();
                return spec
                    .orders
                    .iter()
                    .map(|&n| SweepRecord {
                        error: Some(msg.clone()),
                        ..record(r, n)
                    })
                    .collect();
            }
        }
    }
    out
}

/// Rows of an earlier partial file; a torn last row from an interrupted write
/// is dropped.
fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let rows: Vec<_> = rdr.deserialize::<SweepRecord>().collect();
    let last = rows.len().saturating_sub(1);
    rows.into_iter()
        .enumerate()
        .filter(|(i, r)| r.is_ok() || *i != last)
        .map(|(_, r)| r.map_err(Error::from))
        .collect()
}

fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the incremental record file kept next to `csv_path`.
pub fn partial_path(csv_path: &Path) -> std::path::PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".partial");
    s.into()
}

/// Runs every `(A, T)` cell: build the drive, train on fresh data, evaluate
/// on fresh data. With `csv_path`, finished cells are appended to a partial
/// file as they complete, cells already present there are skipped, and the
/// final table is written to `csv_path` in grid order.
pub fn run_sweep(bench: &ParityBench, spec: &SweepSpec, workers: usize, csv_path: Option<&Path>) -> Result<ResultGrid> {
    if let Some(e) = spec.violations("sweep.").into_iter().next() {
        return Err(e);
    }
    let mut done: BTreeMap<(usize, usize), Vec<SweepRecord>> = BTreeMap::new();
    let partial = csv_path.map(partial_path);
    if let Some(p) = partial.as_deref().filter(|p| p.exists()) {
        for r in read_records(p)? {
            done.entry((r.a_index, r.t_index)).or_default().push(r);
        }
        // keep only complete cells from an interrupted run
        done.retain(|_, rows| {
            rows.iter().any(|r| r.error.is_some()) || rows.len() == spec.replicas * spec.orders.len()
        });
    }
    let writer = match partial.as_deref() {
        Some(p) => {
            // the partial file keeps exactly the completed cells
            let rows: Vec<&SweepRecord> = done.values().flatten().collect();
            write_records(p, &rows)?;
            let file = OpenOptions::new().append(true).open(p)?;
            let fresh = rows.is_empty();
            Some(Mutex::new(csv::WriterBuilder::new().has_headers(fresh).from_writer(file)))
        }
        None => None,
    };

    let todo: Vec<(usize, usize)> = (0..spec.a_values.len())
        .flat_map(|ia| (0..spec.t_values.len()).map(move |it| (ia, it)))
        .filter(|k| !done.contains_key(k))
        .collect();
    let fresh: Vec<((usize, usize), Vec<SweepRecord>)> = pool(workers)?.install(|| {
        todo.par_iter()
            .map(|&(ia, it)| {
                let rows = sweep_cell(bench, spec, ia, it);
                if let Some(w) = &writer {
                    let mut w = w.lock().expect("writer lock");
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
                Ok(((ia, it), rows))
            })
            .collect::<Result<_>>()
    })?;
    done.extend(fresh);

    let rows: Vec<SweepRecord> = done.into_values().flatten().collect();
    if let Some(p) = csv_path {
        write_records(p, &rows)?;
        if let Some(partial) = &partial {
            std::fs::remove_file(partial)?;
        }
    }
    Ok(grid_from_records(spec, &rows))
}

fn grid_from_records(spec: &SweepSpec, rows: &[SweepRecord]) -> ResultGrid {
    let mut cells = Vec::new();
    for ia in 0..spec.a_values.len() {
        for it in 0..spec.t_values.len() {
            for &n in &spec.orders {
                let mine: Vec<&SweepRecord> = rows
                    .iter()
                    .filter(|r| r.a_index == ia && r.t_index == it && r.order == n)
                    .collect();
                let error = mine.iter().find_map(|r| r.error.clone());
                let success = error.is_none().then(|| {
                    let s = mine.iter().filter_map(|r| r.successes).sum();
                    let t = mine.iter().filter_map(|r| r.trials).sum();
                    Proportion::new(s, t)
                });
                cells.push(GridCell {
                    a_index: ia,
                    t_index: it,
                    order: n,
                    success,
                    error,
                });
            }
        }
    }
    ResultGrid {
        a_values: spec.a_values.clone(),
        t_values: spec.t_values.clone(),
        orders: spec.orders.clone(),
        cells,
    }
}

// ----------------------------------------------------------- robustness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSpec {
    pub parameter: PerturbedParameter,
    pub sigma_values: Vec<f64>,
    pub placement: Placement,
    pub replicas: usize,
    pub orders: Vec<usize>,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        Self {
            parameter: PerturbedParameter::Q,
            sigma_values: vec![0.0, 1e-3, 1e-2, 1e-1],
            placement: Placement::PostTraining,
            replicas: 8,
            orders: vec![3, 4, 5],
        }
    }
}

impl RobustnessSpec {
    pub fn violations(&self, prefix: &str) -> Vec<Error> {
        let mut out = Vec::new();
        let s = &self.sigma_values;
        if s.is_empty() || s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || s.windows(2).any(|w| w[0] > w[1]) {
            out.push(Error::config(
                format!("{prefix}sigma_values"),
                "need a nonempty, sorted list of non-negative values",
            ));
        }
        if self.replicas == 0 {
            out.push(Error::config(format!("{prefix}replicas"), "must be at least 1"));
        }
        if check_orders(&self.orders).is_err() {
            out.push(Error::config(format!("{prefix}orders"), "need at least one parity order, each >= 1"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    pub parameter: PerturbedParameter,
    pub placement: Placement,
    pub sigma: f64,
    pub replica: usize,
    pub order: usize,
    pub successes: usize,
    pub trials: usize,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Success against `sigma` for one order, over replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub sigma: f64,
    pub order: usize,
    pub mean: f64,
    pub std: f64,
    /// Pooled over replicas.
    pub pooled: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurves {
    pub parameter: PerturbedParameter,
    pub placement: Placement,
    pub points: Vec<RobustnessPoint>,
}

impl RobustnessCurves {
    pub fn point(&self, sigma: f64, order: usize) -> Option<&RobustnessPoint> {
        self.points.iter().find(|p| p.sigma == sigma && p.order == order)
    }
}

fn robustness_replica(bench: &ParityBench, spec: &RobustnessSpec, r: usize) -> Result<Vec<RobustnessRecord>> {
    let setup = &bench.setup;
    let tg = targets(&spec.orders);
    let train_seed = derive_seed(bench.seed, "robust-train", r as u64);
    let eval_seed = derive_seed(bench.seed, "robust-eval", r as u64);
    // the same draws are rescaled for every sigma
    let perturb_seed = derive_seed(bench.seed, "robust-perturb", r as u64);
    let perturbed = |sigma: f64| {
        let p = PerturbationSpec {
            parameter: spec.parameter,
            sigma,
            seed: perturb_seed,
            placement: spec.placement,
        };
        let (inst, drive) = perturb_network(bench.instance, &setup.drive, &p);
        let mut s = setup.clone();
        s.drive = drive;
        (inst, s)
    };
    let nominal: Option<Vec<ParityModel>> = match spec.placement {
        Placement::PostTraining => Some(setup.train(bench.instance, &tg, train_seed)?),
        Placement::PreTraining => None,
    };
    let mut out = Vec::new();
    for &sigma in &spec.sigma_values {
        let (inst, s) = perturbed(sigma);
        let results = match &nominal {
            Some(models) => s.evaluate(&inst, models, eval_seed)?,
            None => {
                let models = s.train(&inst, &tg, train_seed)?;
                s.evaluate(&inst, &models, eval_seed)?
            }
        };
        out.extend(spec.orders.iter().zip(results).map(|(&order, res)| RobustnessRecord {
            parameter: spec.parameter,
            placement: spec.placement,
            sigma,
            replica: r,
            order,
            successes: res.success.successes,
            trials: res.success.trials,
            p: res.success.p,
            ci_lo: res.success.ci_lo,
            ci_hi: res.success.ci_hi,
        }));
    }
    Ok(out)
}

/// Pre-training: perturb, then train and evaluate. Post-training: train on
/// the nominal network, then evaluate the frozen weights on perturbed copies.
pub fn run_robustness(
    bench: &ParityBench,
    spec: &RobustnessSpec,
    workers: usize,
) -> Result<(RobustnessCurves, Vec<RobustnessRecord>)> {
    if let Some(e) = spec.violations("robustness.").into_iter().next() {
        return Err(e);
    }
    let per_replica: Vec<Vec<RobustnessRecord>> = pool(workers)?.install(|| {
        (0..spec.replicas)
            .into_par_iter()
            .map(|r| robustness_replica(bench, spec, r))
            .collect::<Result<_>>()
    })?;
    let records: Vec<RobustnessRecord> = per_replica.into_iter().flatten().collect();
    let mut points = Vec::new();
    for &sigma in &spec.sigma_values {
        for &order in &spec.orders {
            let mine: Vec<&RobustnessRecord> =
                records.iter().filter(|r| r.sigma == sigma && r.order == order).collect();
            let ps: Vec<f64> = mine.iter().map(|r| r.p).collect();
            points.push(RobustnessPoint {
                sigma,
                order,
                mean: mean(&ps),
                std: std_dev(&ps),
                pooled: Proportion::new(mine.iter().map(|r| r.successes).sum(), mine.iter().map(|r| r.trials).sum()),
            });
        }
    }
    Ok((
        RobustnessCurves {
            parameter: spec.parameter,
            placement: spec.placement,
            points,
        },
        records,
    ))
}

// ------------------------------------------------------------- replicas

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicaSpec {
    pub count: usize,
    pub orders: Vec<usize>,
    /// Explicit training seeds; derived from the master seed when empty.
    pub seeds: Vec<u64>,
}

impl Default for ReplicaSpec {
    fn default() -> Self {
        Self {
            count: 25,
            orders: vec![3, 4, 5],
            seeds: Vec::new(),
        }
    }
}

impl ReplicaSpec {
    pub fn violations(&self, prefix: &str) -> Vec<Error> {
        let mut out = Vec::new();
        if self.seeds.is_empty() && self.count < 2 {
            out.push(Error::config(format!("{prefix}count"), "need at least 2 replicas"));
        }
        if !self.seeds.is_empty() && self.seeds.len() < 2 {
            out.push(Error::config(format!("{prefix}seeds"), "need at least 2 seeds"));
        }
        if check_orders(&self.orders).is_err() {
            out.push(Error::config(format!("{prefix}orders"), "need at least one parity order, each >= 1"));
        }
        out
    }

    pub fn training_seeds(&self, master: u64) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.count as u64).map(|r| derive_seed(master, "replica-train", r)).collect()
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub seed: u64,
    pub order: usize,
    pub successes: usize,
    pub trials: usize,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub order: usize,
    pub replicas: usize,
    pub mean: f64,
    pub std: f64,
    pub p10: f64,
    pub min: f64,
    pub max: f64,
}

/// Retrains on independent training streams and evaluates every model on
/// one shared evaluation stream.
pub fn run_training_replicas(
    bench: &ParityBench,
    spec: &ReplicaSpec,
    workers: usize,
) -> Result<(Vec<ReplicaSummary>, Vec<ReplicaRecord>)> {
    if let Some(e) = spec.violations("replicas.").into_iter().next() {
        return Err(e);
    }
    let setup = &bench.setup;
    let tg = targets(&spec.orders);
    let seeds = spec.training_seeds(bench.seed);
    let (stream, env) = setup.simulate(bench.instance, setup.eval_periods, derive_seed(bench.seed, "replica-eval", 0))?;
    let per: Vec<Vec<ReplicaRecord>> = pool(workers)?.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(r, &seed)| {
                let models = setup.train(bench.instance, &tg, seed)?;
                models
                    .iter()
                    .map(|m| {
                        let s = crate::parity::evaluate_parity(m, &env, &stream, setup.washout_periods)?.success;
                        Ok(ReplicaRecord {
                            replica: r,
                            seed,
                            order: m.target.order,
                            successes: s.successes,
                            trials: s.trials,
                            p: s.p,
                            ci_lo: s.ci_lo,
                            ci_hi: s.ci_hi,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()
    })?;
    let records: Vec<ReplicaRecord> = per.into_iter().flatten().collect();
    let summaries = spec
        .orders
        .iter()
        .map(|&order| {
            let ps: Vec<f64> = records.iter().filter(|r| r.order == order).map(|r| r.p).collect();
            ReplicaSummary {
                order,
                replicas: ps.len(),
                mean: mean(&ps),
                std: std_dev(&ps),
                p10: percentile(&ps, 10.0),
                min: ps.iter().copied().fold(f64::INFINITY, f64::min),
                max: ps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok((summaries, records))
}
