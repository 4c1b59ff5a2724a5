//! End-to-end execution of an [`ExperimentConfig`].
//!
//! Every run writes `resolved_config.toml` (re-runnable as is), its result
//! files, and `manifest.json` with seeds, version and timings. Result files
//! depend only on the resolved config; the manifest also records wall-clock
//! timings.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, TaskConfig};
use crate::error::{Result, StageExt};
use crate::experiments::{run_robustness, run_sweep, run_training_replicas, ParityBench};
use crate::matrix_io::{write_binary, SampledMatrix};
use crate::network::build_network;
use crate::parity::{
    evaluate_parity, memory_capacity, mutual_information, nonincreasing_within_ci, train_parity, ParityTarget,
};
use crate::rng::derive_seed;
use crate::speech::{load_corpus, DIGITS};
use crate::stats::Proportion;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CONFIG_SNAPSHOT: &str = "resolved_config.toml";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub output_dir: PathBuf,
    /// Result files, relative to `output_dir`, excluding the manifest.
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

struct Recorder {
    dir: PathBuf,
    files: Vec<String>,
    timings: Vec<(String, f64)>,
    seeds: serde_json::Map<String, serde_json::Value>,
}

impl Recorder {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().stage(stage);
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    fn seed(&mut self, name: &str, value: u64) -> u64 {
        self.seeds.insert(name.to_string(), json!(value));
        value
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(p, text)?;
        Ok(())
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(p)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct ParityRow {
    task: &'static str,
    n_or_tau: usize,
    successes: usize,
    trials: usize,
    p: f64,
    ci_lo: f64,
    ci_hi: f64,
}

impl ParityRow {
    fn new(task: &'static str, n_or_tau: usize, s: &Proportion) -> Self {
        Self {
            task,
            n_or_tau,
            successes: s.successes,
            trials: s.trials,
            p: s.p,
            ci_lo: s.ci_lo,
            ci_hi: s.ci_hi,
        }
    }
}

/// Validates, then runs the configured task with results under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    if let Some(e) = cfg.violations().into_iter().next() {
        return Err(e);
    }
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut resolved = cfg.clone();
    resolved.output_dir = out_dir.to_path_buf();
    let mut rec = Recorder {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
        timings: Vec::new(),
        seeds: serde_json::Map::new(),
    };
    std::fs::write(rec.path(CONFIG_SNAPSHOT), resolved.to_toml()?)?;
    let hash = cfg.spec_hash()?;
    let master = rec.seed("master", cfg.master_seed());

    let net_cfg = cfg.effective_network();
    let instance = rec.timed("build network", || build_network(&net_cfg))?;

    let summary = match &cfg.task {
        TaskConfig::Parity(t) => run_parity(cfg, &instance, &t.orders, &t.delays, t.export_envelopes, &mut rec)?,
        TaskConfig::MemoryCapacity(t) => run_parity(cfg, &instance, &[], &t.delays, false, &mut rec)?,
        TaskConfig::Speech(t) => {
            let setup = cfg.speech_setup().expect("speech task has a speech setup");
            let manifest = t.manifest.clone().expect("validated manifest");
            let corpus = rec.timed("load corpus", || load_corpus(&manifest))?;
            let split_seed = rec.seed("split", derive_seed(master, "speech-split", 0));
            let outcome = rec.timed("speech", || setup.run(&instance, &corpus, split_seed))?;
            let cm = &outcome.confusion;
            let rows: Vec<Vec<String>> = (0..DIGITS)
                .map(|p| {
                    std::iter::once(p.to_string())
                        .chain(cm.probabilities[p].iter().map(|v| v.to_string()))
                        .collect()
                })
                .collect();
            let mut w = csv::Writer::from_path(rec.path("confusion.csv"))?;
            let mut header = vec!["predicted".to_string()];
            header.extend((0..DIGITS).map(|d| format!("actual_{d}")));
            w.write_record(&header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
            #[derive(Serialize)]
            struct PredRow<'a> {
                id: &'a str,
                speaker: &'a str,
                label: u8,
                predicted: u8,
                votes: usize,
                tie: bool,
            }
            let rows: Vec<PredRow> = outcome
                .predictions
                .iter()
                .map(|p| PredRow {
                    id: &p.id,
                    speaker: &p.speaker,
                    label: p.label,
                    predicted: p.predicted,
                    votes: p.votes[p.predicted as usize],
                    tie: p.tie,
                })
                .collect();
            rec.write_csv("predictions.csv", &rows)?;
            if t.save_model {
                let p = rec.path("speech_model.json");
                outcome.model.save(&p)?;
            }
            let column_sums: Vec<f64> = (0..DIGITS)
                .map(|a| (0..DIGITS).map(|p| cm.probabilities[p][a]).sum())
                .collect();
            let s = json!({
                "task": "speech",
                "accuracy": cm.accuracy,
                "train_accuracy": outcome.train_accuracy,
                "per_digit": cm.per_digit,
                "column_sums": column_sums,
                "test_utterances": outcome.predictions.len(),
                "ties": outcome.predictions.iter().filter(|p| p.tie).count(),
            });
            rec.write_json("summary.json", &s)?;
            s
        }
        TaskConfig::Sweep(t) => {
            let bench = bench(cfg, &instance);
            let name = format!("sweep-{hash}.csv");
            let csv_path = out_dir.join(&name);
            let grid = rec.timed("sweep", || run_sweep(&bench, &t.sweep, cfg.workers, Some(&csv_path)))?;
            rec.files.push(name);
            let s = json!({"task": "sweep", "spec_hash": hash, "grid": grid});
            rec.write_json(&format!("sweep-{hash}.json"), &s)?;
            s
        }
        TaskConfig::Robustness(t) => {
            let bench = bench(cfg, &instance);
            let (curves, records) = rec.timed("robustness", || run_robustness(&bench, &t.robustness, cfg.workers))?;
            rec.write_csv(&format!("robustness-{hash}.csv"), &records)?;
            let s = json!({"task": "robustness", "spec_hash": hash, "curves": curves});
            rec.write_json(&format!("robustness-{hash}.json"), &s)?;
            s
        }
        TaskConfig::Replicas(t) => {
            let bench = bench(cfg, &instance);
            let (summaries, records) =
                rec.timed("replicas", || run_training_replicas(&bench, &t.replicas, cfg.workers))?;
            rec.write_csv(&format!("replicas-{hash}.csv"), &records)?;
            let s = json!({"task": "replicas", "spec_hash": hash, "summary": summaries});
            rec.write_json(&format!("replicas-{hash}.json"), &s)?;
            s
        }
    };

    let manifest = json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": VERSION,
        "task": cfg.task.name(),
        "spec_hash": hash,
        "seeds": rec.seeds,
        "timings_seconds": rec.timings.iter().map(|(k, v)| json!({"stage": k, "seconds": v})).collect::<Vec<_>>(),
        "total_seconds": started.elapsed().as_secs_f64(),
        "config": CONFIG_SNAPSHOT,
        "files": rec.files,
    });
    std::fs::write(out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunReport {
        output_dir: out_dir.to_path_buf(),
        files: rec.files,
        summary,
    })
}

fn bench<'a>(cfg: &ExperimentConfig, instance: &'a crate::network::NetworkInstance) -> ParityBench<'a> {
    ParityBench {
        instance,
        setup: cfg.parity_setup().expect("parity-based task"),
        fixed_cutoff: cfg.readout.cutoff,
        seed: cfg.master_seed(),
    }
}

fn run_parity(
    cfg: &ExperimentConfig,
    instance: &crate::network::NetworkInstance,
    orders: &[usize],
    delays: &[usize],
    export: bool,
    rec: &mut Recorder,
) -> Result<serde_json::Value> {
    let setup = cfg.parity_setup().expect("parity-based task");
    let master = cfg.master_seed();
    let train_seed = rec.seed("train", derive_seed(master, "parity-train", 0));
    let eval_seed = rec.seed("eval", derive_seed(master, "parity-eval", 0));
    let targets: Vec<ParityTarget> = orders
        .iter()
        .map(|&n| ParityTarget::parity(n))
        .chain(delays.iter().map(|&d| ParityTarget::delayed3(d)))
        .collect();
    let layout = setup.layout(instance.len())?;

    let (stream, env) = rec.timed("simulate training", || setup.simulate(instance, setup.train_periods, train_seed))?;
    if export {
        write_binary(&rec.path("train_envelopes.bin"), &SampledMatrix::from(&env))?;
    }
    let models = rec.timed("train", || {
        train_parity(&env, &stream, &targets, &layout, setup.ridge, setup.washout_periods)
    })?;
    drop(env);
    rec.write_json("parity_models.json", &models)?;

    let (stream, env) = rec.timed("simulate evaluation", || setup.simulate(instance, setup.eval_periods, eval_seed))?;
    let results = rec.timed("evaluate", || {
        models
            .iter()
            .map(|m| evaluate_parity(m, &env, &stream, setup.washout_periods))
            .collect::<Result<Vec<_>>>()
    })?;

    let (p_results, d_results) = results.split_at(orders.len());
    let mut rows: Vec<ParityRow> = orders
        .iter()
        .zip(p_results)
        .map(|(&n, r)| ParityRow::new("parity", n, &r.success))
        .collect();
    rows.extend(delays.iter().zip(d_results).map(|(&d, r)| ParityRow::new("delayed_parity", d, &r.success)));
    rec.write_csv("parity.csv", &rows)?;

    let success: serde_json::Map<String, serde_json::Value> = orders
        .iter()
        .zip(p_results)
        .map(|(n, r)| (format!("P{n}"), json!(r.success)))
        .collect();
    let mut summary = json!({ "task": cfg.task.name(), "success": success });
    if !delays.is_empty() {
        let ps: Vec<f64> = d_results.iter().map(|r| r.success.p).collect();
        let mi = ps.iter().map(|&p| mutual_information(p)).collect::<Result<Vec<_>>>()?;
        let nonincreasing = mi.windows(2).all(|w| w[1] <= w[0]);
        summary["delays"] = json!(delays);
        summary["delayed_success"] = json!(d_results.iter().map(|r| r.success).collect::<Vec<_>>());
        summary["mutual_information"] = json!(mi);
        summary["memory_capacity"] = json!(memory_capacity(&ps)?);
        summary["mi_nonincreasing"] = json!(nonincreasing);
        let success: Vec<Proportion> = d_results.iter().map(|r| r.success).collect();
        summary["mi_nonincreasing_within_ci"] = json!(nonincreasing_within_ci(&success)?);
    }
    rec.write_json("summary.json", &summary)?;
    Ok(summary)
}
