//! Monte Carlo experiment harness: sweeps over relay counts, block counts or
//! pair counts, runs the competing policies on matched traces, and writes an
//! RFC-4180 CSV with a fixed column contract:
//!
//! `experiment,sweep_value,trial,method,eta_watts,no_outage_ratio,runtime_ms`
//!
//! Aggregate rows (`trial` = `median` / `iqr`) are appended per sweep point
//! and method. Per-trial RNG seeds are derived by hashing
//! `(seed, experiment, sweep_value, trial)` so adding trials never perturbs
//! existing rows. `runtime_ms` stays empty unless timing is requested, since
//! wall-clock values would break byte-for-byte output reproducibility.

use crate::model::{compute_gains, gen_eh_trace, Scenario};
use crate::optimizer::{self, LP_BOUND_VAR_CAP};
use crate::simulator;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    PowerVsRelays,
    PowerVsBlocks,
    OnlineHardening,
    PowerVsPairs,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::PowerVsRelays => "power_vs_relays",
            Experiment::PowerVsBlocks => "power_vs_blocks",
            Experiment::OnlineHardening => "online_hardening",
            Experiment::PowerVsPairs => "power_vs_pairs",
        }
    }

    fn default_sweep(&self) -> Vec<usize> {
        match self {
            Experiment::PowerVsRelays => vec![2, 4, 6, 8, 10, 15],
            Experiment::PowerVsBlocks => vec![1, 10, 100],
            Experiment::OnlineHardening => vec![2, 4, 8, 16, 20],
            Experiment::PowerVsPairs => vec![1, 2, 3, 4, 5],
        }
    }
}

/// Normalized experiment description.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Sweep-axis values: relay counts, blocks per EH interval, or pair
    /// counts, depending on the experiment.
    pub sweep: Vec<usize>,
    pub trials: usize,
    pub scenario: Scenario,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    experiment: Option<Experiment>,
    sweep: Option<Vec<usize>>,
    trials: Option<usize>,
    /// Path to a base scenario JSON, resolved relative to the config file.
    scenario: Option<PathBuf>,
    seed: Option<u64>,
}

/// Load and normalize a config file. An empty file yields the full default
/// spec (relay-count sweep over the standard scenario).
pub fn validate_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let trimmed = if text.trim().is_empty() { "{}" } else { &text };
    let raw: RawSpec = serde_json::from_str(trimmed)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let experiment = raw.experiment.unwrap_or(Experiment::PowerVsRelays);
    let sweep = raw.sweep.unwrap_or_else(|| experiment.default_sweep());
    if sweep.is_empty() || sweep.iter().any(|&v| v == 0) {
        return Err(Error::Config(
            "sweep values must be positive integers".into(),
        ));
    }
    let trials = raw.trials.unwrap_or(10);
    if trials < 1 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let scenario = match raw.scenario {
        None => Scenario::default(),
        Some(rel) => {
            let scn_path = path.parent().map_or(rel.clone(), |d| d.join(&rel));
            let text = std::fs::read_to_string(&scn_path).map_err(|e| {
                Error::Config(format!("cannot read scenario {}: {e}", scn_path.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", scn_path.display())))?
        }
    };
    scenario
        .validate()
        .map_err(|e| Error::Config(format!("scenario: {e}")))?;
    Ok(ExperimentSpec {
        experiment,
        sweep,
        trials,
        scenario,
        seed: raw.seed.unwrap_or(1),
    })
}

/// FNV-1a over the trial coordinates; the resulting stream is independent of
/// how many other trials run.
pub fn trial_seed(seed: u64, experiment: &str, sweep_value: usize, trial: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&seed.to_le_bytes());
    eat(experiment.as_bytes());
    eat(&(sweep_value as u64).to_le_bytes());
    eat(&(trial as u64).to_le_bytes());
    h
}

#[derive(Debug, Clone)]
struct CsvRow {
    sweep_value: usize,
    /// Numeric trial index, or `usize::MAX`/`MAX-1` markers for aggregates.
    trial_rank: usize,
    trial: String,
    method: String,
    eta: Option<f64>,
    ratio: Option<f64>,
    runtime_ms: Option<u128>,
}

/// Execution options supplied by the CLI.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
    /// Record wall-clock runtimes (sacrifices byte-identical outputs).
    pub timing: bool,
}

fn apply_sweep(scn: &mut Scenario, experiment: Experiment, v: usize) {
    match experiment {
        Experiment::PowerVsRelays | Experiment::OnlineHardening => scn.relays = v,
        Experiment::PowerVsBlocks => {
            scn.blocks_per_interval = v;
            // Keep the relaxation LP at desk scale on long-block sweeps.
            scn.intervals = scn.intervals.min(3);
        }
        Experiment::PowerVsPairs => scn.pairs = v,
    }
}

fn methods_for(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::PowerVsRelays | Experiment::PowerVsPairs => {
            &["proposed", "greedy", "lp_bound"]
        }
        Experiment::PowerVsBlocks => &["proposed", "lp_bound"],
        Experiment::OnlineHardening => &["proposed", "online"],
    }
}

fn run_trial(
    spec: &ExperimentSpec,
    sweep_value: usize,
    trial: usize,
    seed: u64,
    timing: bool,
) -> Result<Vec<CsvRow>> {
    let mut scn = spec.scenario.clone();
    apply_sweep(&mut scn, spec.experiment, sweep_value);
    scn.seed = trial_seed(seed, spec.experiment.as_str(), sweep_value, trial);
    scn.validate().map_err(|e| Error::Config(e.to_string()))?;
    let positions = scn.resolve_relay_positions();
    let gains = compute_gains(&scn, &positions)?;
    let trace = gen_eh_trace(&scn, &mut scn.trace_rng());
    let mut sim_rng: ChaCha12Rng = SeedableRng::seed_from_u64(scn.seed ^ 0x73_69_6d);
    let eps = optimizer::DEFAULT_EPS;

    let mut rows = Vec::new();
    let mut push = |method: &str,
                    started: Instant,
                    outcome: Result<(Option<f64>, Option<f64>)>|
     -> Result<()> {
        let runtime = timing.then(|| started.elapsed().as_millis());
        match outcome {
            Ok((eta, ratio)) => rows.push(CsvRow {
                sweep_value,
                trial_rank: trial,
                trial: trial.to_string(),
                method: method.to_string(),
                eta,
                ratio,
                runtime_ms: runtime,
            }),
            // Infeasible trials are data: flush an empty-valued row.
            Err(Error::InfeasibleScenario { .. }) => rows.push(CsvRow {
                sweep_value,
                trial_rank: trial,
                trial: trial.to_string(),
                method: method.to_string(),
                eta: None,
                ratio: None,
                runtime_ms: runtime,
            }),
            Err(e) => return Err(e),
        }
        Ok(())
    };

    for &method in methods_for(spec.experiment) {
        match method {
            "proposed" => {
                let t0 = Instant::now();
                let out = optimizer::bisect_eta(&scn, &trace, &gains, eps).and_then(|policy| {
                    let (sim, _) =
                        simulator::run_random_policy(&scn, &trace, &policy, &gains, &mut sim_rng)?;
                    Ok((Some(policy.eta_star), Some(sim.no_outage_ratio)))
                });
                push(method, t0, out)?;
            }
            "greedy" => {
                let t0 = Instant::now();
                let out = optimizer::greedy_policy(&scn, &trace, &gains).map(|run| {
                    let slots = (scn.pairs * scn.total_blocks()) as f64;
                    (
                        Some(run.policy.eta_star),
                        Some(1.0 - run.infeasible_blocks as f64 / slots),
                    )
                });
                push(method, t0, out)?;
            }
            "lp_bound" => {
                if scn.pairs * scn.relays * scn.total_blocks() > LP_BOUND_VAR_CAP {
                    continue;
                }
                let t0 = Instant::now();
                let out = optimizer::lp_bound(&scn, &trace, &gains, eps)
                    .map(|b| (Some(b.eta_star), None));
                push(method, t0, out)?;
            }
            "online" => {
                let t0 = Instant::now();
                let out =
                    simulator::run_online_mode(&scn, &trace, &gains, eps, &mut sim_rng).map(|r| {
                        let mean = r.eta_per_interval.iter().sum::<f64>()
                            / r.eta_per_interval.len() as f64;
                        (Some(mean), Some(r.outcome.no_outage_ratio))
                    });
                push(method, t0, out)?;
            }
            _ => unreachable!(),
        }
    }
    Ok(rows)
}

fn quantiles(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        let pos = p * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
    };
    (q(0.5), q(0.75) - q(0.25))
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

/// Run every (sweep point, trial) task on a worker pool, append median/IQR
/// aggregate rows, and write the CSV to `opts.out`. Rows are sorted before
/// flushing so the output order is independent of scheduling.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<()> {
    let trials = opts.trials.unwrap_or(spec.trials);
    let seed = opts.seed.unwrap_or(spec.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let tasks: Vec<(usize, usize)> = spec
        .sweep
        .iter()
        .flat_map(|&v| (0..trials).map(move |t| (v, t)))
        .collect();
    let results: Vec<Result<Vec<CsvRow>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(v, t)| run_trial(spec, v, t, seed, opts.timing))
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    // Aggregates per (sweep point, method) over successful trials.
    let mut aggregates = Vec::new();
    for &v in &spec.sweep {
        for &method in methods_for(spec.experiment) {
            let etas: Vec<f64> = rows
                .iter()
                .filter(|r| r.sweep_value == v && r.method == method)
                .filter_map(|r| r.eta)
                .collect();
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.sweep_value == v && r.method == method)
                .filter_map(|r| r.ratio)
                .collect();
            if etas.is_empty() {
                continue;
            }
            let (eta_med, eta_iqr) = quantiles(etas);
            let ratio_stats = (!ratios.is_empty()).then(|| quantiles(ratios));
            for (rank, name, eta, ratio) in [
                (usize::MAX - 1, "median", eta_med, ratio_stats.map(|s| s.0)),
                (usize::MAX, "iqr", eta_iqr, ratio_stats.map(|s| s.1)),
            ] {
                aggregates.push(CsvRow {
                    sweep_value: v,
                    trial_rank: rank,
                    trial: name.to_string(),
                    method: method.to_string(),
                    eta: Some(eta),
                    ratio,
                    runtime_ms: None,
                });
            }
        }
    }
    rows.extend(aggregates);
    rows.sort_by(|a, b| {
        (a.sweep_value, a.trial_rank, &a.method).cmp(&(b.sweep_value, b.trial_rank, &b.method))
    });
    let mut out =
        String::from("experiment,sweep_value,trial,method,eta_watts,no_outage_ratio,runtime_ms\r\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\r\n",
            spec.experiment.as_str(),
            r.sweep_value,
            r.trial,
            r.method,
            fmt_opt_f64(r.eta),
            fmt_opt_f64(r.ratio),
            r.runtime_ms.map_or(String::new(), |m| m.to_string()),
        ));
    }
    std::fs::write(&opts.out, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, content: &str) -> PathBuf {
        let path = std::env::temp_dir().join(format!("ehrelay-test-{name}-{}", std::process::id()));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn empty_config_yields_full_default_spec() {
        let path = write_tmp("empty.json", "");
        let spec = validate_config(&path).unwrap();
        assert_eq!(spec.experiment, Experiment::PowerVsRelays);
        assert_eq!(spec.sweep, vec![2, 4, 6, 8, 10, 15]);
        assert_eq!(spec.trials, 10);
        assert_eq!(spec.scenario.eh_mean, 0.02);
        assert_eq!(spec.seed, 1);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let path = write_tmp("unknown.json", r#"{"unknown_key": 3}"#);
        assert!(matches!(validate_config(&path), Err(Error::Config(_))));
        std::fs::remove_file(path).ok();

        let path = write_tmp("badsweep.json", r#"{"sweep": [0, 2]}"#);
        assert!(matches!(validate_config(&path), Err(Error::Config(_))));
        std::fs::remove_file(path).ok();

        let path = write_tmp("badtrials.json", r#"{"trials": 0}"#);
        assert!(matches!(validate_config(&path), Err(Error::Config(_))));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn config_scenario_overrides_are_reflected_and_validated() {
        let scn = write_tmp("scn40.json", r#"{"eh_mean": 0.04}"#);
        let cfg = write_tmp(
            "cfg40.json",
            &format!(r#"{{"scenario": "{}"}}"#, scn.display()),
        );
        let spec = validate_config(&cfg).unwrap();
        assert_eq!(spec.scenario.eh_mean, 0.04);
        std::fs::remove_file(&scn).ok();
        std::fs::remove_file(&cfg).ok();

        let scn = write_tmp("badscn.json", r#"{"bandwidth_hz": -1.0}"#);
        let cfg = write_tmp(
            "badcfg.json",
            &format!(r#"{{"scenario": "{}"}}"#, scn.display()),
        );
        assert!(matches!(validate_config(&cfg), Err(Error::Config(_))));
        std::fs::remove_file(&scn).ok();
        std::fs::remove_file(&cfg).ok();
    }

    #[test]
    fn trial_seed_is_stable_and_coordinate_sensitive() {
        let a = trial_seed(1, "power_vs_relays", 5, 0);
        assert_eq!(a, trial_seed(1, "power_vs_relays", 5, 0));
        assert_ne!(a, trial_seed(1, "power_vs_relays", 5, 1));
        assert_ne!(a, trial_seed(1, "power_vs_relays", 6, 0));
        assert_ne!(a, trial_seed(2, "power_vs_relays", 5, 0));
        assert_ne!(a, trial_seed(1, "power_vs_pairs", 5, 0));
    }

    #[test]
    fn tiny_run_is_byte_identical_and_schema_stable() {
        let cfg = write_tmp(
            "tiny.json",
            // Seed picked so every (sweep, trial) draw is a feasible
            // geometry and the row count below is exact.
            r#"{"experiment": "power_vs_relays", "sweep": [2, 3], "trials": 2, "seed": 20}"#,
        );
        let spec = validate_config(&cfg).unwrap();
        let out1 = std::env::temp_dir().join(format!("ehrelay-out1-{}.csv", std::process::id()));
        let out2 = std::env::temp_dir().join(format!("ehrelay-out2-{}.csv", std::process::id()));
        for (out, jobs) in [(&out1, Some(1)), (&out2, None)] {
            run_experiment(
                &spec,
                &RunOptions {
                    out: out.clone(),
                    seed: None,
                    trials: None,
                    jobs,
                    timing: false,
                },
            )
            .unwrap();
        }
        let a = std::fs::read(&out1).unwrap();
        let b = std::fs::read(&out2).unwrap();
        assert_eq!(a, b, "output depends on scheduling or reruns");
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.split("\r\n");
        assert_eq!(
            lines.next().unwrap(),
            "experiment,sweep_value,trial,method,eta_watts,no_outage_ratio,runtime_ms"
        );
        // 2 sweep points x (2 trials + median + iqr) x 3 methods.
        let data_lines: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
        assert_eq!(data_lines.len(), 2 * 4 * 3);
        // lp_bound never exceeds proposed on matched rows.
        let field = |line: &str, i: usize| line.split(',').nth(i).unwrap().to_string();
        for l in &data_lines {
            if field(l, 3) == "lp_bound" && field(l, 2).parse::<usize>().is_ok() {
                let eta: f64 = field(l, 4).parse().unwrap();
                let matched = data_lines
                    .iter()
                    .find(|m| {
                        field(m, 1) == field(l, 1)
                            && field(m, 2) == field(l, 2)
                            && field(m, 3) == "proposed"
                    })
                    .unwrap();
                let eta_prop: f64 = field(matched, 4).parse().unwrap();
                assert!(eta <= eta_prop + 1e-12);
            }
        }
        std::fs::remove_file(cfg).ok();
        std::fs::remove_file(out1).ok();
        std::fs::remove_file(out2).ok();
    }
}
