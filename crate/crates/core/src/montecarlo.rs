//! Seeded Monte Carlo: random phase-sum moments, error-stream experiments,
//! the MinL bound sweep and repeat-until-success recovery runs.
//!
//! Trial `i` draws from a ChaCha8 stream selected by `i` under the master
//! seed, and results are reduced in trial order, so records do not depend
//! on the thread count.

use std::io::Write;

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    min_l, min_l_objective, pr_ratio_bounds, success_probability, AlgKind, ProbTable, RatioPair,
    SumForm,
};
use crate::error::{Error, Result};
use crate::numerics::{classify_case, root_power, CaseTag};
use crate::oracle::{CompositeOracle, ErrorStream, OracleParams};
use crate::recovery::{
    recover_with_verification, verify_period, RecoveryResult, RecoveryStatus, RecoveryTrace,
};
use crate::simulator::{simulated_distribution, GroverParams};

/// Minimum trial count behind any variance claim.
pub const MIN_VARIANCE_TRIALS: u64 = 100;

/// RNG for trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Running mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub variance: f64,
    pub trials: u64,
    /// Sample standard deviation over `√trials`.
    pub std_error_mean: f64,
    /// `√((m₄ − s⁴)/trials)` from the fourth central moment.
    pub std_error_variance: f64,
}

impl MomentEstimate {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewTrials {
                min: 2,
                got: values.len() as u64,
            });
        }
        let mut acc = Welford::default();
        values.iter().for_each(|&v| acc.push(v));
        let n = values.len() as f64;
        let m4 = values.iter().map(|v| (v - acc.mean).powi(4)).sum::<f64>() / n;
        let var = acc.variance();
        Ok(MomentEstimate {
            mean: acc.mean,
            variance: var,
            trials: acc.n,
            std_error_mean: acc.std_error(),
            std_error_variance: ((m4 - var * var).max(0.0) / n).sqrt(),
        })
    }

    /// `|mean − expected| <= k·SE`.
    pub fn mean_within(&self, expected: f64, k_se: f64) -> bool {
        (self.mean - expected).abs() <= k_se * self.std_error_mean
    }

    /// `|variance − expected| <= rel·expected + k·SE`; needs at least
    /// [`MIN_VARIANCE_TRIALS`] trials.
    pub fn variance_within(&self, expected: f64, rel: f64, k_se: f64) -> Result<bool> {
        if self.trials < MIN_VARIANCE_TRIALS {
            return Err(Error::TooFewTrials {
                min: MIN_VARIANCE_TRIALS,
                got: self.trials,
            });
        }
        Ok((self.variance - expected).abs()
            <= rel * expected.abs() + k_se * self.std_error_variance)
    }
}

/// `(cos, sin)` of `ω^j` for `j < N`.
fn phase_table(n: u64) -> Result<Vec<(f64, f64)>> {
    (0..n)
        .map(|j| root_power(n, j as i64).map(|w| (w.re, w.im)))
        .collect()
}

/// `(Re S, Im S, |S|²)` for `S = Σ_j ω^{z_j y}`. Short sums expand `|S|²`
/// over pairs so that, for example, `L = 1` gives exactly 1.
fn phase_sum(table: &[(f64, f64)], mask: u64, labels: &[u64], y: u64) -> (f64, f64, f64) {
    let idx: Vec<u64> = labels.iter().map(|&z| z.wrapping_mul(y) & mask).collect();
    let (re, im) = idx.iter().fold((0.0, 0.0), |(r, i), &j| {
        (r + table[j as usize].0, i + table[j as usize].1)
    });
    let norm = if idx.len() <= 32 {
        let mut cross = 0.0;
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                cross += table[(idx[a].wrapping_sub(idx[b]) & mask) as usize].0;
            }
        }
        idx.len() as f64 + 2.0 * cross
    } else {
        re * re + im * im
    };
    (re, im, norm)
}

fn check_power_of_two(n: u64) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// Samples of `form(S)` with `S = Σ_{j<L} ω^{z_j y}`: per trial a label
/// `y` uniform on `[1, N)` and `L` labels `z_j` i.i.d. uniform on `[0, N)`.
pub fn random_sum_samples(
    n: u64,
    l: u64,
    trials: u64,
    seed: u64,
    form: SumForm,
) -> Result<Vec<f64>> {
    check_power_of_two(n)?;
    let table = phase_table(n)?;
    let mask = n - 1;
    Ok((0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let y = rng.gen_range(1..n);
            let labels: Vec<u64> = (0..l).map(|_| rng.gen_range(0..n)).collect();
            let (re, im, norm) = phase_sum(&table, mask, &labels, y);
            form.evaluate(re, im, norm)
        })
        .collect())
}

/// Mean and variance of `form(S)` under the i.i.d. model of
/// [`random_sum_samples`].
pub fn estimate_random_sum_moments(
    n: u64,
    l: u64,
    trials: u64,
    seed: u64,
    form: SumForm,
) -> Result<MomentEstimate> {
    MomentEstimate::from_samples(&random_sum_samples(n, l, trials, seed, form)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinLPoint {
    pub l: u64,
    /// Estimate of `E|M + S|²/T²`, the Case-B modulus factor.
    pub mean_modulus: f64,
    pub std_error: f64,
    /// `tan²θ sin²2kθ` times the modulus estimate, with `θ` from `T`.
    pub expected_prob: f64,
    /// `T/(N − T)` times the modulus estimate; the empirical bound curve.
    pub bound: f64,
    /// `f(L) = (L + M²)/((N − L − M)(L + M))`.
    pub analytic_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinLCurve {
    pub n: u64,
    pub m: u64,
    pub trials: u64,
    pub min_l: f64,
    pub empirical_minimizer: u64,
    pub points: Vec<MinLPoint>,
}

impl MinLCurve {
    /// One row per `L`, columns as in [`MinLPoint`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p).map_err(|e| Error::Invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}

const SWEEP_CHUNK: u64 = 4096;

/// Empirical bound curve over `l_values`. Each trial draws one `y` and one
/// i.i.d. label sequence and reads `|M + S_L|²` off its running prefix sums,
/// so all `L` share the same random numbers.
pub fn min_l_sweep(n: u64, m: u64, l_values: &[u64], trials: u64, seed: u64) -> Result<MinLCurve> {
    check_power_of_two(n)?;
    if trials < 2 {
        return Err(Error::TooFewTrials {
            min: 2,
            got: trials,
        });
    }
    if l_values.is_empty() || l_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(
            "L values must be non-empty and strictly increasing".into(),
        ));
    }
    let l_max = *l_values.last().expect("non-empty");
    if m == 0 || l_max + m + 1 > n {
        return Err(Error::Invalid(format!(
            "L values must lie in [0, {}]",
            n.saturating_sub(m + 1)
        )));
    }
    let table = phase_table(n)?;
    let mask = n - 1;
    let mf = m as f64;
    let chunks = trials.div_ceil(SWEEP_CHUNK);
    let partial: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Welford::default(); l_values.len()];
            for i in c * SWEEP_CHUNK..((c + 1) * SWEEP_CHUNK).min(trials) {
                let mut rng = trial_rng(seed, i);
                let y = rng.gen_range(1..n);
                let (mut re, mut im) = (mf, 0.0);
                let mut slot = 0;
                for l in 0..=l_max {
                    if l == l_values[slot] {
                        acc[slot].push(re * re + im * im);
                        slot += 1;
                    }
                    if l < l_max {
                        let z: u64 = rng.gen_range(0..n);
                        let (c, s) = table[(z.wrapping_mul(y) & mask) as usize];
                        re += c;
                        im += s;
                    }
                }
            }
            acc
        })
        .collect();
    let mut totals = vec![Welford::default(); l_values.len()];
    for chunk in &partial {
        for (t, a) in totals.iter_mut().zip(chunk) {
            t.merge(a);
        }
    }
    let nf = n as f64;
    let points = l_values
        .iter()
        .zip(&totals)
        .map(|(&l, acc)| {
            let t = l + m;
            let tf = t as f64;
            let amp = GroverParams::new(n, t)?.amplification_factor().powi(2);
            let modulus = acc.mean / (tf * tf);
            Ok(MinLPoint {
                l,
                mean_modulus: modulus,
                std_error: acc.std_error() / (tf * tf),
                expected_prob: amp * modulus,
                bound: tf / (nf - tf) * modulus,
                analytic_bound: min_l_objective(n, m, l as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let empirical_minimizer = points
        .iter()
        .fold((0, f64::INFINITY), |best, p| {
            if p.bound < best.1 {
                (p.l, p.bound)
            } else {
                best
            }
        })
        .0;
    Ok(MinLCurve {
        n,
        m,
        trials,
        min_l: min_l(n, m).unwrap_or(f64::NAN),
        empirical_minimizer,
        points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgTrial {
    pub alg: AlgKind,
    /// Max over `y` of |analytic − simulated| for this trial's `G`.
    pub max_abs_diff: f64,
    pub analytic_success: f64,
    pub measured_y: u64,
    pub recovered: bool,
}

/// One error-stream trial, written as one JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrialRecord {
    pub trial: u64,
    pub l: u64,
    pub t: u64,
    /// Every Case-B/C label has both ratios inside their sandwiches.
    pub sandwich_holds: bool,
    /// Mean of `Pr_Amplified(y)/Pr_QFT(y)` over Case-B/C labels.
    pub mean_ratio_qft: f64,
    pub mean_ratio_qhs: f64,
    pub algorithms: Vec<AlgTrial>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub param_set: String,
    pub algorithm: AlgKind,
    pub empirical_success: f64,
    pub analytic_success: f64,
    /// Smallest and largest observed `Pr_Amplified/Pr_alg` over Case-B/C
    /// labels across trials; 1 for Amplified-QFT itself.
    pub ratio_lower: f64,
    pub ratio_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStreamReport {
    pub params: OracleParams,
    pub trials: Vec<ErrorTrialRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub max_table_diff: f64,
    pub all_sandwiches_hold: bool,
}

impl ErrorStreamReport {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.trials {
            let line = serde_json::to_string(rec).map_err(|e| Error::Invalid(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Columns `param_set, algorithm, empirical_success, analytic_success,
    /// ratio_lower, ratio_upper`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.aggregate {
            w.serialize(row)
                .map_err(|e| Error::Invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}

struct RatioStats {
    holds: bool,
    qft: (f64, f64, f64),
    qhs: (f64, f64, f64),
}

/// Ratios `Pr_Amplified/Pr_QFT` and `Pr_Amplified/Pr_QHS` over Case-B/C
/// labels, as (mean, min, max), plus the sandwich check at `T`.
fn ratio_stats(oracle: &CompositeOracle, tables: &[ProbTable; 3]) -> Result<RatioStats> {
    let set = oracle.periodic();
    let (n, t) = (set.n(), oracle.t());
    let b_qft = pr_ratio_bounds(RatioPair::OverQft, n, t)?;
    let b_qhs = pr_ratio_bounds(RatioPair::OverQhs, n, t)?;
    let mut holds = true;
    let mut acc = [(0.0, f64::INFINITY, f64::NEG_INFINITY, 0u64); 2];
    for y in 1..n {
        if !matches!(
            classify_case(n, set.m(), set.period(), y),
            CaseTag::B | CaseTag::C
        ) {
            continue;
        }
        let amp = tables[0].probs[y as usize];
        for (slot, (table, bounds)) in [(&tables[1], &b_qft), (&tables[2], &b_qhs)]
            .into_iter()
            .enumerate()
        {
            let other = table.probs[y as usize];
            if other < 1e-300 {
                continue;
            }
            let r = amp / other;
            holds &= bounds.contains(r, 1e-9);
            let a = &mut acc[slot];
            a.0 += r;
            a.1 = a.1.min(r);
            a.2 = a.2.max(r);
            a.3 += 1;
        }
    }
    let fold = |a: (f64, f64, f64, u64)| {
        if a.3 == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (a.0 / a.3 as f64, a.1, a.2)
        }
    };
    Ok(RatioStats {
        holds,
        qft: fold(acc[0]),
        qhs: fold(acc[1]),
    })
}

/// Per trial: samples `G` with rate `p`, builds the analytic tables and the
/// simulated distributions of all three algorithms, measures each once and
/// attempts recovery of `P`.
pub fn run_error_stream_experiment(
    params: &OracleParams,
    trials: u64,
) -> Result<ErrorStreamReport> {
    let set = params.periodic_set()?;
    if trials == 0 {
        return Err(Error::TooFewTrials { min: 1, got: 0 });
    }
    let per_trial: Vec<(ErrorTrialRecord, [(f64, f64); 2])> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(params.seed, i);
            let errors = ErrorStream::sample(&set, params.p, &mut rng)?;
            let oracle = CompositeOracle::new(set, Some(errors));
            let tables = [
                ProbTable::analytic(AlgKind::AmplifiedQft, &oracle)?,
                ProbTable::analytic(AlgKind::Qft, &oracle)?,
                ProbTable::analytic(AlgKind::Qhs, &oracle)?,
            ];
            let ratios = ratio_stats(&oracle, &tables)?;
            let mut algorithms = Vec::with_capacity(3);
            for table in &tables {
                let sim = simulated_distribution(table.alg, &oracle)?;
                let y = WeightedIndex::new(&sim)
                    .map_err(|e| Error::Invalid(e.to_string()))?
                    .sample(&mut rng) as u64;
                let outcome = recover_with_verification(y, set.n(), |_, q| {
                    verify_period(&oracle, set.offset(), q, set.m())
                })
                .outcome;
                algorithms.push(AlgTrial {
                    alg: table.alg,
                    max_abs_diff: table.max_abs_diff(&sim),
                    analytic_success: success_probability(table.alg, &oracle)?,
                    measured_y: y,
                    recovered: outcome.status == RecoveryStatus::Recovered
                        && outcome.period == set.period(),
                });
            }
            let record = ErrorTrialRecord {
                trial: i,
                l: oracle.errors().len(),
                t: oracle.t(),
                sandwich_holds: ratios.holds,
                mean_ratio_qft: ratios.qft.0,
                mean_ratio_qhs: ratios.qhs.0,
                algorithms,
            };
            Ok((
                record,
                [(ratios.qft.1, ratios.qft.2), (ratios.qhs.1, ratios.qhs.2)],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let param_set = format!(
        "N={} s={} P={} M={} p={}",
        set.n(),
        set.offset(),
        set.period(),
        set.m(),
        params.p
    );
    let count = trials as f64;
    let aggregate = AlgKind::ALL
        .iter()
        .enumerate()
        .map(|(slot, &alg)| {
            let hits = per_trial
                .iter()
                .filter(|(r, _)| r.algorithms[slot].recovered)
                .count();
            let analytic = per_trial
                .iter()
                .map(|(r, _)| r.algorithms[slot].analytic_success)
                .sum::<f64>();
            let (lo, hi) = if slot == 0 {
                (1.0, 1.0)
            } else {
                per_trial
                    .iter()
                    .map(|(_, b)| b[slot - 1])
                    .filter(|b| b.0.is_finite())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, b| {
                        (acc.0.min(b.0), acc.1.max(b.1))
                    })
            };
            AggregateRow {
                param_set: param_set.clone(),
                algorithm: alg,
                empirical_success: hits as f64 / count,
                analytic_success: analytic / count,
                ratio_lower: lo,
                ratio_upper: hi,
            }
        })
        .collect();
    let trials: Vec<ErrorTrialRecord> = per_trial.into_iter().map(|(r, _)| r).collect();
    let max_table_diff = trials
        .iter()
        .flat_map(|r| r.algorithms.iter().map(|a| a.max_abs_diff))
        .fold(0.0, f64::max);
    let all_sandwiches_hold = trials.iter().all(|r| r.sandwich_holds);
    Ok(ErrorStreamReport {
        params: params.clone(),
        trials,
        aggregate,
        max_table_diff,
        all_sandwiches_hold,
    })
}

/// Outcome of one repeat-until-success recovery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Runs used, counting the successful one.
    pub runs: u64,
    /// Oracle applications made by the quantum runs.
    pub algorithm_queries: u64,
    /// Oracle queries spent verifying candidates.
    pub verification_queries: u64,
    pub result: RecoveryResult,
}

/// Measure, recover, verify, and repeat on failure, for a fixed
/// algorithm and oracle. The offset is taken as known when verifying `P`.
pub struct RecoveryPipeline<'a> {
    alg: AlgKind,
    oracle: &'a CompositeOracle,
    sampler: WeightedIndex<f64>,
    applications_per_run: u64,
}

impl<'a> RecoveryPipeline<'a> {
    pub fn new(alg: AlgKind, oracle: &'a CompositeOracle) -> Result<Self> {
        let dist = simulated_distribution(alg, oracle)?;
        let sampler = WeightedIndex::new(&dist).map_err(|e| Error::Invalid(e.to_string()))?;
        let applications_per_run = match alg {
            AlgKind::AmplifiedQft => GroverParams::new(oracle.n(), oracle.t())?.work_factor(),
            AlgKind::Qft | AlgKind::Qhs => 1,
        };
        Ok(RecoveryPipeline {
            alg,
            oracle,
            sampler,
            applications_per_run,
        })
    }

    pub fn alg(&self) -> AlgKind {
        self.alg
    }

    pub fn applications_per_run(&self) -> u64 {
        self.applications_per_run
    }

    /// Up to `max_runs` runs; the result is `Failed` or `NeedRerun` when
    /// the budget runs out.
    pub fn run<R: Rng + ?Sized>(&self, max_runs: u64, rng: &mut R) -> RunOutcome {
        self.run_traced(max_runs, rng, None)
    }

    /// [`RecoveryPipeline::run`], appending one trace per measured label.
    pub fn run_traced<R: Rng + ?Sized>(
        &self,
        max_runs: u64,
        rng: &mut R,
        mut trace: Option<&mut Vec<RecoveryTrace>>,
    ) -> RunOutcome {
        let set = self.oracle.periodic();
        let n = set.n();
        let mut verification_queries = 0;
        let mut last = RecoveryResult {
            status: RecoveryStatus::Failed,
            d: 0,
            period: 0,
        };
        for run in 1..=max_runs {
            let y = self.sampler.sample(rng) as u64;
            let before = self.oracle.query_count();
            let traced = recover_with_verification(y, n, |_, q| {
                verify_period(self.oracle, set.offset(), q, set.m())
            });
            let outcome = traced.outcome;
            if let Some(t) = trace.as_deref_mut() {
                t.push(traced);
            }
            verification_queries += self.oracle.query_count() - before;
            last = outcome;
            if outcome.status == RecoveryStatus::Recovered {
                return RunOutcome {
                    runs: run,
                    algorithm_queries: run * self.applications_per_run,
                    verification_queries,
                    result: outcome,
                };
            }
        }
        RunOutcome {
            runs: max_runs,
            algorithm_queries: max_runs * self.applications_per_run,
            verification_queries,
            result: last,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupSummary {
    pub alg: AlgKind,
    pub runs: u64,
    pub successes: u64,
    pub mean_trials: f64,
    pub mean_queries: f64,
    /// `(π/4)√(N/M)` for Amplified-QFT, `N/(4M)` for QFT, `N/(2M)` for QHS.
    pub reference_queries: f64,
}

impl SpeedupSummary {
    pub fn query_ratio(&self) -> f64 {
        self.mean_queries / self.reference_queries
    }
}

/// `runs` independent repeat-until-success recoveries, run `i` seeded by
/// stream `i`.
pub fn repeat_until_success(
    alg: AlgKind,
    oracle: &CompositeOracle,
    runs: u64,
    max_runs: u64,
    seed: u64,
) -> Result<(SpeedupSummary, Vec<RunOutcome>)> {
    if runs == 0 {
        return Err(Error::TooFewTrials { min: 1, got: 0 });
    }
    let pipeline = RecoveryPipeline::new(alg, oracle)?;
    let outcomes: Vec<RunOutcome> = (0..runs)
        .map(|i| pipeline.run(max_runs, &mut trial_rng(seed, i)))
        .collect();
    let done: Vec<&RunOutcome> = outcomes
        .iter()
        .filter(|o| o.result.status == RecoveryStatus::Recovered)
        .collect();
    let count = done.len().max(1) as f64;
    let (nf, mf) = (oracle.n() as f64, oracle.t() as f64);
    let reference_queries = match alg {
        AlgKind::AmplifiedQft => std::f64::consts::FRAC_PI_4 * (nf / mf).sqrt(),
        AlgKind::Qft => nf / (4.0 * mf),
        AlgKind::Qhs => nf / (2.0 * mf),
    };
    Ok((
        SpeedupSummary {
            alg,
            runs,
            successes: done.len() as u64,
            mean_trials: done.iter().map(|o| o.runs as f64).sum::<f64>() / count,
            mean_queries: done.iter().map(|o| o.algorithm_queries as f64).sum::<f64>() / count,
            reference_queries,
        },
        outcomes,
    ))
}

/// `Σ_{z∈G} ω^{zy}` for an explicit label list; used by tests and the CLI
/// to report individual sums.
pub fn error_sum(n: u64, labels: &[u64], y: u64) -> Result<Complex64> {
    labels
        .iter()
        .map(|&z| root_power(n, ((z as u128 * y as u128) % n as u128) as i64))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::PeriodicSet;

    fn reference_params(p: f64) -> OracleParams {
        OracleParams {
            n_exp: 10,
            s: 208,
            period: 5,
            m: 7,
            p,
            seed: 2024,
        }
    }

    #[test]
    fn single_label_is_exact() {
        let e = estimate_random_sum_moments(1024, 1, 500, 1, SumForm::Plain).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.variance, 0.0);
    }

    #[test]
    fn plain_mean_and_variance() {
        let e = estimate_random_sum_moments(1024, 6, 100_000, 7, SumForm::Plain).unwrap();
        let (mean, var) = SumForm::Plain.theorem_moments(6);
        assert_eq!((mean, var), (6.0, 30.0));
        assert!(e.mean_within(mean, 5.0), "{e:?}");
        assert!(e.variance_within(var, 0.05, 5.0).unwrap(), "{e:?}");
    }

    #[test]
    fn offset_and_complex_forms() {
        let form = SumForm::WithOffset {
            a: 7.0 / 13.0,
            b: 1.0 / 13.0,
        };
        let (mean, _) = form.theorem_moments(6);
        assert!((mean - 55.0 / 169.0).abs() < 1e-15);
        let e = estimate_random_sum_moments(1024, 6, 100_000, 8, form).unwrap();
        assert!(e.mean_within(mean, 5.0));
        let form = SumForm::WithComplex {
            a: 0.3,
            c: -0.4,
            b: 0.2,
        };
        let (mean, var) = form.theorem_moments(9);
        let e = estimate_random_sum_moments(512, 9, 100_000, 9, form).unwrap();
        assert!(e.mean_within(mean, 5.0));
        assert!(e.variance_within(var, 0.05, 5.0).unwrap());
    }

    #[test]
    fn variance_needs_enough_trials() {
        let e = estimate_random_sum_moments(64, 3, 50, 1, SumForm::Plain).unwrap();
        assert!(matches!(
            e.variance_within(6.0, 0.05, 5.0),
            Err(Error::TooFewTrials { .. })
        ));
        assert!(estimate_random_sum_moments(64, 3, 1, 1, SumForm::Plain).is_err());
        assert!(estimate_random_sum_moments(100, 3, 10, 1, SumForm::Plain).is_err());
    }

    #[test]
    fn standard_error_shrinks_with_trials() {
        let ladder: Vec<f64> = [2_000u64, 8_000, 32_000]
            .iter()
            .map(|&t| {
                estimate_random_sum_moments(1024, 6, t, 3, SumForm::Plain)
                    .unwrap()
                    .std_error_mean
            })
            .collect();
        for w in ladder.windows(2) {
            let r = w[0] / w[1];
            assert!((1.7..2.3).contains(&r), "{ladder:?}");
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let m = estimate_random_sum_moments(256, 5, 3000, 11, SumForm::Plain).unwrap();
                    let c = min_l_sweep(256, 3, &[0, 10, 20], 9000, 11).unwrap();
                    let e = run_error_stream_experiment(&reference_params(0.01), 4).unwrap();
                    (m, c, e)
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn sweep_tracks_closed_form() {
        let ls: Vec<u64> = (0..=400).step_by(50).collect();
        let c = min_l_sweep(1024, 7, &ls, 20_000, 5).unwrap();
        assert!((c.min_l - (-49.0 + 44772f64.sqrt())).abs() < 1e-9);
        for p in &c.points {
            assert!(
                (p.bound - p.analytic_bound).abs()
                    <= 5.0 * p.std_error * (p.l + 7) as f64 / (1017.0 - p.l as f64) + 1e-15
            );
        }
        let first = c.points.first().unwrap().bound;
        let at_min = c.points.iter().find(|p| p.l == 150).unwrap().bound;
        let last = c.points.last().unwrap().bound;
        assert!(first > at_min && last > at_min);
        assert!(min_l_sweep(1024, 7, &[5, 5], 10, 1).is_err());
        assert!(min_l_sweep(1024, 7, &[1017], 10, 1).is_err());
    }

    #[test]
    fn error_free_experiment_matches_tables() {
        let r = run_error_stream_experiment(&reference_params(0.0), 3).unwrap();
        assert!(r.max_table_diff < 1e-9);
        assert!(r.all_sandwiches_hold);
        let set = PeriodicSet::new(1024, 208, 5, 7).unwrap();
        let oracle = CompositeOracle::new(set, None);
        for rec in &r.trials {
            assert_eq!(rec.l, 0);
            for a in &rec.algorithms {
                assert_eq!(
                    a.analytic_success,
                    success_probability(a.alg, &oracle).unwrap()
                );
            }
        }
    }

    #[test]
    fn error_stream_sandwich_every_trial() {
        let r = run_error_stream_experiment(&reference_params(6.0 / 1017.0), 20).unwrap();
        assert!(r.max_table_diff < 1e-9);
        assert!(r.all_sandwiches_hold);
        assert!(r.trials.iter().any(|t| t.l > 0));
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(
            "param_set,algorithm,empirical_success,analytic_success,ratio_lower,ratio_upper"
        ));
        let mut jl = Vec::new();
        r.write_jsonl(&mut jl).unwrap();
        assert_eq!(String::from_utf8(jl).unwrap().lines().count(), 20);
    }

    #[test]
    fn amplified_success_falls_with_error_count() {
        let mean_success = |p| {
            let r = run_error_stream_experiment(&reference_params(p), 12).unwrap();
            r.aggregate[0].analytic_success
        };
        let few = mean_success(2.0 / 1017.0);
        let some = mean_success(40.0 / 1017.0);
        let many = mean_success(150.0 / 1017.0);
        assert!(few > some && some > many, "{few} {some} {many}");
    }

    #[test]
    fn repeat_until_success_counts() {
        let oracle = CompositeOracle::new(PeriodicSet::new(1024, 208, 5, 7).unwrap(), None);
        let (amp, outs) =
            repeat_until_success(AlgKind::AmplifiedQft, &oracle, 50, 1000, 1).unwrap();
        assert_eq!(amp.successes, 50);
        assert!(outs
            .iter()
            .all(|o| o.result.period == 5 && o.algorithm_queries == o.runs * 11));
        let (_, capped) = repeat_until_success(AlgKind::Qhs, &oracle, 5, 1, 1).unwrap();
        assert!(capped.iter().all(|o| o.runs == 1));
    }

    #[test]
    fn error_sum_matches_direct() {
        let s = error_sum(16, &[1, 3], 4).unwrap();
        assert!((s - Complex64::new(0.0, 0.0)).norm() < 1e-15);
        let s = error_sum(16, &[2, 6], 4).unwrap();
        assert_eq!(s, Complex64::new(-2.0, 0.0));
    }
}
