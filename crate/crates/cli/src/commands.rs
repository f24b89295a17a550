//! Subcommand bodies. Each one validates, computes, and returns the files
//! to write; nothing touches the disk until every check has passed.

use aqt_core::analytic::{expected_trials, AlgKind, ProbTable, SumForm, TrialBounds};
use aqt_core::analytic::{min_l, uncertainty_product};
use aqt_core::montecarlo::{
    estimate_random_sum_moments, min_l_sweep, run_error_stream_experiment, trial_rng,
    MomentEstimate, RecoveryPipeline,
};
use aqt_core::oracle::{CompositeOracle, ErrorStream, OracleParams, PairSet};
use aqt_core::recovery::{
    find_offset_decreasing, haar_constant_probability, haar_decide, HaarDecision, RecoveryStatus,
};
use aqt_core::simulator::{grover, simulated_distribution};
use rand::Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, DEFAULT_MAX_RETRIES};
use crate::CliError;

/// Agreement required between analytic tables and simulation.
pub const TABLE_TOL: f64 = 1e-9;

#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
    pub breach: Option<String>,
}

impl Report {
    /// A report whose summary doubles as the breach message when `breach`.
    fn checked(summary: String, breach: bool) -> Self {
        Report {
            breach: breach.then(|| summary.clone()),
            summary,
            files: Vec::new(),
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn jsonl<T: Serialize>(&mut self, name: &str, values: &[T]) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        for v in values {
            serde_json::to_writer(&mut bytes, v).map_err(|e| CliError::Runtime(e.to_string()))?;
            bytes.push(b'\n');
        }
        self.files.push((name.to_string(), bytes));
        Ok(())
    }
}

fn runtime(e: aqt_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn oracle_with_errors(
    params: &OracleParams,
    cfg: &ExperimentConfig,
) -> Result<CompositeOracle, CliError> {
    let set = params
        .periodic_set()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if params.p > 0.0 {
        let seed = cfg.seed()?;
        let errors =
            ErrorStream::sample(&set, params.p, &mut trial_rng(seed, u64::MAX)).map_err(runtime)?;
        Ok(CompositeOracle::new(set, Some(errors)))
    } else {
        Ok(CompositeOracle::new(set, None))
    }
}

#[derive(Serialize)]
struct SimulateRow {
    algorithm: AlgKind,
    max_abs_diff: f64,
    pr_zero: f64,
    total: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    params: OracleParams,
    errors: Vec<u64>,
    results: Vec<SimulateRow>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (params, _) = cfg.oracle_params()?;
    let oracle = oracle_with_errors(&params, cfg)?;
    let mut report = Report::default();
    let mut rows = Vec::new();
    for alg in cfg.algorithms_or(&AlgKind::ALL) {
        let table = ProbTable::analytic(alg, &oracle).map_err(runtime)?;
        let sim = simulated_distribution(alg, &oracle).map_err(runtime)?;
        let mut csv = Vec::new();
        let worst = table.write_csv(&mut csv, &sim).map_err(runtime)?;
        report.files.push((format!("simulate_{alg}.csv"), csv));
        rows.push(SimulateRow {
            algorithm: alg,
            max_abs_diff: worst,
            pr_zero: table.probs[0],
            total: table.total(),
        });
    }
    let worst = rows.iter().map(|r| r.max_abs_diff).fold(0.0, f64::max);
    report.summary = format!("max |analytic - simulated| = {worst:.3e}");
    if worst > TABLE_TOL {
        report.breach = Some(format!(
            "table disagreement {worst:.3e} exceeds {TABLE_TOL:e}"
        ));
    }
    report.json(
        "simulate.json",
        &SimulateSummary {
            params,
            errors: oracle.errors().labels().to_vec(),
            results: rows,
        },
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct RecoverRun {
    algorithm: AlgKind,
    run: u64,
    trials_used: u64,
    status: RecoveryStatus,
    d: u64,
    #[serde(rename = "P")]
    period: u64,
    offset: Option<u64>,
    offset_rounds: Option<u64>,
    algorithm_queries: u64,
}

#[derive(Serialize)]
struct RecoverSummary {
    algorithm: AlgKind,
    runs: u64,
    max_retries: u64,
    recovered: u64,
    mean_trials: Option<f64>,
    bounds: TrialBounds,
    mean_trials_meets_bound: Option<bool>,
}

pub fn recover(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (params, set) = cfg.oracle_params()?;
    let seed = cfg.seed()?;
    let runs = cfg.trials_or(1)?;
    let max_retries = cfg.max_retries.unwrap_or(DEFAULT_MAX_RETRIES);
    if max_retries == 0 {
        return Err(CliError::Validation("max_retries must be positive".into()));
    }
    let algs = cfg.algorithms_or(&[AlgKind::AmplifiedQft]);
    let bounds: Vec<TrialBounds> = algs
        .iter()
        .map(|&a| {
            expected_trials(a, set.n(), set.m()).map_err(|e| CliError::Validation(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let oracle = oracle_with_errors(&params, cfg)?;
    let mut report = Report::default();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for (slot, (&alg, bound)) in algs.iter().zip(&bounds).enumerate() {
        let pipeline = RecoveryPipeline::new(alg, &oracle).map_err(runtime)?;
        let mut used = Vec::new();
        for run in 0..runs {
            let mut rng = trial_rng(seed, slot as u64 * runs + run);
            let out = pipeline.run_traced(
                max_retries,
                &mut rng,
                cfg.trace.unwrap_or(false).then_some(&mut traces),
            );
            let recovered = out.result.status == RecoveryStatus::Recovered;
            let offset = if recovered {
                find_offset_decreasing(&oracle, out.result.period, set.m(), &mut rng).ok()
            } else {
                None
            };
            if recovered {
                used.push(out.runs as f64);
            }
            records.push(RecoverRun {
                algorithm: alg,
                run,
                trials_used: out.runs,
                status: out.result.status,
                d: out.result.d,
                period: out.result.period,
                offset: offset.as_ref().map(|o| o.s),
                offset_rounds: offset.as_ref().map(|o| o.rounds),
                algorithm_queries: out.algorithm_queries,
            });
        }
        let mean = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64);
        summaries.push(RecoverSummary {
            algorithm: alg,
            runs,
            max_retries,
            recovered: used.len() as u64,
            mean_trials: mean,
            bounds: *bound,
            mean_trials_meets_bound: mean.map(|m| m >= bound.mean_lower),
        });
    }
    report.summary = summaries
        .iter()
        .map(|s| match s.mean_trials {
            Some(m) => format!(
                "{}: {}/{} recovered, mean trials {m:.2}",
                s.algorithm, s.recovered, s.runs
            ),
            None => format!("{}: Failed after {} retries", s.algorithm, s.max_retries),
        })
        .collect::<Vec<_>>()
        .join("; ");
    report.json("recover.json", &summaries)?;
    report.jsonl("recover_runs.jsonl", &records)?;
    if cfg.trace.unwrap_or(false) {
        report.jsonl("recover_trace.jsonl", &traces)?;
    }
    Ok(report)
}

pub fn error_stream(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (mut params, _) = cfg.oracle_params()?;
    params.seed = cfg.seed()?;
    let trials = cfg.trials_or(100)?;
    let result = run_error_stream_experiment(&params, trials).map_err(runtime)?;
    let mut report = Report::default();
    let mut jl = Vec::new();
    result.write_jsonl(&mut jl).map_err(runtime)?;
    report.files.push(("error_stream.jsonl".into(), jl));
    let mut csv = Vec::new();
    result.write_csv(&mut csv).map_err(runtime)?;
    report.files.push(("error_stream.csv".into(), csv));
    let mean_l = result.trials.iter().map(|t| t.l as f64).sum::<f64>() / trials as f64;
    report.summary = format!(
        "{trials} trials, mean L {mean_l:.2}, max table diff {:.3e}, sandwich {}",
        result.max_table_diff,
        if result.all_sandwiches_hold {
            "holds"
        } else {
            "violated"
        }
    );
    if result.max_table_diff > TABLE_TOL || !result.all_sandwiches_hold {
        report.breach = Some(report.summary.clone());
    }
    Ok(report)
}

#[derive(Serialize)]
struct SweepSummary {
    n: u64,
    m: u64,
    trials: u64,
    min_l: f64,
    empirical_minimizer: u64,
}

pub fn minl_sweep(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let n = cfg.n()?;
    let m = cfg.m()?;
    let seed = cfg.seed()?;
    let trials = cfg.trials_or(100_000)?;
    let target = min_l(n, m).map_err(|e| CliError::Validation(e.to_string()))?;
    let cap = n - m - 1;
    let l_max = cfg.l_max.unwrap_or(((3.0 * target).ceil() as u64).min(cap));
    let step = cfg.l_step.unwrap_or(1);
    if step == 0 || l_max > cap {
        return Err(CliError::Validation(format!(
            "need l_step > 0 and l_max <= {cap}"
        )));
    }
    let ls: Vec<u64> = (0..=l_max).step_by(step as usize).collect();
    let curve = min_l_sweep(n, m, &ls, trials, seed).map_err(runtime)?;
    let mut report = Report::default();
    let mut csv = Vec::new();
    curve.write_csv(&mut csv).map_err(runtime)?;
    report.files.push(("minl_sweep.csv".into(), csv));
    report.summary = format!(
        "empirical minimizer {} vs MinL {:.2}",
        curve.empirical_minimizer, curve.min_l
    );
    report.json(
        "minl_sweep.json",
        &SweepSummary {
            n,
            m,
            trials,
            min_l: curve.min_l,
            empirical_minimizer: curve.empirical_minimizer,
        },
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct MomentsSummary {
    n: u64,
    l: u64,
    form: SumForm,
    estimate: MomentEstimate,
    theorem_mean: f64,
    theorem_variance: f64,
    mean_within_5se: bool,
    variance_within_band: Option<bool>,
}

/// Sum shape for `moments`: plain `|S|²`, or the Case-B form with
/// `a = M/T`, `b = 1/T` when `M` is given.
pub fn moments(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let n = cfg.n()?;
    let seed = cfg.seed()?;
    let l = cfg
        .l
        .ok_or_else(|| CliError::Validation("missing required parameter 'L'".into()))?;
    let trials = cfg.trials_or(100_000)?;
    if trials < 2 {
        return Err(CliError::Validation(
            "moments need at least 2 trials".into(),
        ));
    }
    let form = match cfg.m {
        Some(m) => {
            let t = (l + m) as f64;
            SumForm::WithOffset {
                a: m as f64 / t,
                b: 1.0 / t,
            }
        }
        None => SumForm::Plain,
    };
    let est = estimate_random_sum_moments(n, l, trials, seed, form).map_err(runtime)?;
    let (mean, var) = form.theorem_moments(l);
    let mean_ok = est.mean_within(mean, 5.0) || est.mean == mean;
    let var_ok = est.variance_within(var, 0.05, 5.0).ok();
    let mut report = Report::checked(
        format!(
            "mean {:.6} vs {mean:.6}, variance {:.6e} vs {var:.6e}",
            est.mean, est.variance
        ),
        !mean_ok || var_ok == Some(false),
    );
    report.json(
        "moments.json",
        &MomentsSummary {
            n,
            l,
            form,
            estimate: est,
            theorem_mean: mean,
            theorem_variance: var,
            mean_within_5se: mean_ok,
            variance_within_band: var_ok,
        },
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct HaarSummary {
    n: u64,
    pairs: u64,
    trials: u64,
    signal: &'static str,
    full_transform: bool,
    correct_rate: f64,
    bound: f64,
    floor_4sigma: f64,
    exact_correct_first_trial: f64,
}

pub fn haar(cfg: &ExperimentConfig, balanced: bool, full: bool) -> Result<Report, CliError> {
    let n = cfg.n()?;
    let m = cfg.m()?;
    let seed = cfg.seed()?;
    let trials = cfg.trials_or(1000)?;
    if m == 0 || 2 * m >= n {
        return Err(CliError::Validation(format!(
            "need 0 < 2M < N with N = {n}, got M = {m}"
        )));
    }
    let want = if balanced {
        HaarDecision::Balanced
    } else {
        HaarDecision::Constant
    };
    let mut hits = 0u64;
    let mut exact = 0.0;
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let starts: Vec<u64> = rand::seq::index::sample(&mut rng, (n / 2) as usize, m as usize)
            .into_iter()
            .map(|j| 2 * j as u64)
            .collect();
        let pairs = PairSet::new(n, starts.clone()).map_err(runtime)?;
        let mut signal: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        for &s in &starts {
            let b = rng.gen_bool(0.5);
            signal[s as usize] = b;
            signal[s as usize + 1] = b ^ balanced;
        }
        if i == 0 {
            let pc = haar_constant_probability(&pairs, &signal, full).map_err(runtime)?;
            exact = if balanced { 1.0 - pc } else { pc };
        }
        if haar_decide(&pairs, &signal, full, &mut rng).map_err(runtime)? == want {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    let bound = 1.0 - 2.0 * m as f64 / n as f64;
    let floor = bound - 4.0 * (bound * (1.0 - bound) / trials as f64).sqrt();
    let mut report = Report::checked(
        format!("correct rate {rate:.4} vs bound {bound:.4} (floor {floor:.4})"),
        rate < floor,
    );
    report.json(
        "haar.json",
        &HaarSummary {
            n,
            pairs: m,
            trials,
            signal: if balanced { "balanced" } else { "constant" },
            full_transform: full,
            correct_rate: rate,
            bound,
            floor_4sigma: floor,
            exact_correct_first_trial: exact,
        },
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct UncertaintySummary {
    n: u64,
    s: u64,
    #[serde(rename = "P")]
    period: u64,
    #[serde(rename = "M")]
    m: u64,
    n_y: u64,
    n_y_exact: u64,
    product: u64,
    holds: bool,
}

pub fn uncertainty(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (_, set) = cfg.oracle_params()?;
    let (state, _) = grover(&set).map_err(runtime)?;
    let r = uncertainty_product(&state, &set).map_err(runtime)?;
    let mut report = Report::checked(
        format!(
            "N_y = {} (exact {}), M*N_y = {} vs N = {}",
            r.n_y,
            r.n_y_exact,
            set.m() * r.n_y,
            set.n()
        ),
        !r.holds || r.n_y != r.n_y_exact,
    );
    report.json(
        "uncertainty.json",
        &UncertaintySummary {
            n: set.n(),
            s: set.offset(),
            period: set.period(),
            m: set.m(),
            n_y: r.n_y,
            n_y_exact: r.n_y_exact,
            product: set.m() * r.n_y,
            holds: r.holds,
        },
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ExperimentConfig {
        ExperimentConfig {
            n_exp: Some(10),
            s: Some(208),
            period: Some(5),
            m: Some(7),
            seed: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn simulate_agrees() {
        let r = simulate(&reference()).unwrap();
        assert!(r.breach.is_none());
        assert_eq!(r.files.len(), 4);
    }

    #[test]
    fn recover_finds_period_and_offset() {
        let r = recover(&reference()).unwrap();
        let runs = String::from_utf8(r.files[1].1.clone()).unwrap();
        assert!(runs.contains("\"P\":5"), "{runs}");
        assert!(runs.contains("\"offset\":208"), "{runs}");
    }

    #[test]
    fn recover_exhausted_is_failed() {
        let cfg = ExperimentConfig {
            algorithm: Some(vec![AlgKind::Qhs]),
            max_retries: Some(1),
            trials: Some(20),
            ..reference()
        };
        let r = recover(&cfg).unwrap();
        let runs = String::from_utf8(r.files[1].1.clone()).unwrap();
        assert!(runs.contains("Failed") || runs.contains("NeedRerun"));
    }

    #[test]
    fn stochastic_commands_need_seed() {
        let cfg = ExperimentConfig {
            seed: None,
            ..reference()
        };
        assert!(matches!(recover(&cfg), Err(CliError::Validation(_))));
        assert!(matches!(
            haar(&cfg, false, false),
            Err(CliError::Validation(_))
        ));
        assert!(simulate(&cfg).is_ok());
        let noisy = ExperimentConfig {
            p: Some(0.01),
            ..cfg
        };
        assert!(matches!(simulate(&noisy), Err(CliError::Validation(_))));
    }
}
