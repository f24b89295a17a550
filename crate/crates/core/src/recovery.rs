//! Classical post-processing: continued-fraction period recovery, offset
//! verification and search, and the Haar decision rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{convergents, gcd};
use crate::oracle::{CompositeOracle, ExplicitSet, MarkedSet, PairSet};
use crate::simulator::{grover, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryStatus {
    Recovered,
    NeedRerun,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub status: RecoveryStatus,
    pub d: u64,
    #[serde(rename = "P")]
    pub period: u64,
}

impl RecoveryResult {
    fn failed() -> Self {
        RecoveryResult {
            status: RecoveryStatus::Failed,
            d: 0,
            period: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergentCheck {
    pub d: u64,
    pub q: u64,
    pub passes: bool,
}

/// One recovery attempt, serialized as a JSON line under `--trace`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryTrace {
    pub y: u64,
    pub n: u64,
    pub convergents: Vec<ConvergentCheck>,
    pub outcome: RecoveryResult,
}

/// `|y/N − d/q| <= 1/(2q²)` as `2q·|yq − dN| <= N`.
pub fn passes_distance_test(y: u64, n: u64, d: u64, q: u64) -> bool {
    let dist = (y as u128 * q as u128).abs_diff(d as u128 * n as u128);
    2 * q as u128 * dist <= n as u128
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Convergents `d/q` of `y/N` with `2 <= q <= q_max`, each tagged with the
/// distance test.
pub fn scan_convergents(y: u64, n: u64, q_max: u64) -> Vec<ConvergentCheck> {
    if n == 0 || y == 0 || y >= n {
        return Vec::new();
    }
    convergents(y, n)
        .unwrap_or_default()
        .into_iter()
        .filter(|c| c.den >= 2 && c.den <= q_max && c.num > 0)
        .map(|c| ConvergentCheck {
            d: c.num,
            q: c.den,
            passes: passes_distance_test(y, n, c.num, c.den),
        })
        .collect()
}

/// Like [`recover_period`] but keeps the scanned convergents.
pub fn recover_period_traced(y: u64, n: u64) -> RecoveryTrace {
    recover_with_verification(y, n, |_, _| true)
}

/// Reads a period candidate off the convergents of `y/N`.
///
/// Among convergents with denominator `q <= floor(√N)` passing the
/// distance test, the one with the largest denominator is returned: when
/// `|{Py}_N| <= P/2` this is exactly `d/P`, whereas a smaller passing
/// denominator can be spurious (410/1024 passes at 1/2 as well as 2/5).
/// `y = 0` and labels with no passing convergent give `Failed`.
pub fn recover_period(y: u64, n: u64) -> RecoveryResult {
    recover_period_traced(y, n).outcome
}

/// Tries the passing convergents from the largest denominator down and
/// returns the first one `verify(d, q)` accepts. If some convergent passes
/// the distance test but none verifies, the outcome is `NeedRerun`; this
/// covers `gcd(d, P) > 1`, where the candidate is a proper divisor of `P`.
pub fn recover_with_verification<F: FnMut(u64, u64) -> bool>(
    y: u64,
    n: u64,
    mut verify: F,
) -> RecoveryTrace {
    let checks = scan_convergents(y, n, isqrt(n));
    let mut outcome = RecoveryResult::failed();
    for c in checks.iter().rev().filter(|c| c.passes) {
        if verify(c.d, c.q) {
            outcome = RecoveryResult {
                status: RecoveryStatus::Recovered,
                d: c.d,
                period: c.q,
            };
            break;
        }
        if outcome.status == RecoveryStatus::Failed {
            outcome = RecoveryResult {
                status: RecoveryStatus::NeedRerun,
                d: c.d,
                period: c.q,
            };
        }
    }
    debug_assert!(
        outcome.status != RecoveryStatus::Recovered || gcd(outcome.d, outcome.period) == 1
    );
    RecoveryTrace {
        y,
        n,
        convergents: checks,
        outcome,
    }
}

/// Counted probe; labels outside `[0, N)` read as 0.
fn probe(oracle: &CompositeOracle, x: u128) -> bool {
    if x >= oracle.n() as u128 {
        return false;
    }
    oracle.query(x as u64).unwrap_or(false)
}

/// `f(s) = f(s + P₁) = f(s + (M−1)P₁) = 1`. Needs `M >= 2` to say anything.
pub fn verify_period(oracle: &CompositeOracle, s: u64, p1: u64, m: u64) -> bool {
    verify_pair(oracle, s, p1, m)
}

/// Same three probes with a candidate offset `s₁`; for an error-free
/// oracle a `true` answer pins down both `s` and `P`.
pub fn verify_pair(oracle: &CompositeOracle, s1: u64, p1: u64, m: u64) -> bool {
    if p1 == 0 || m == 0 {
        return false;
    }
    let (s1, p1) = (s1 as u128, p1 as u128);
    probe(oracle, s1) && probe(oracle, s1 + p1) && probe(oracle, s1 + (m as u128 - 1) * p1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingOutcome {
    pub s: u64,
    pub count: u64,
    pub charged_queries: u64,
}

fn register_size(m: u64) -> u64 {
    m.max(1).next_power_of_two()
}

/// `g(x) = max(0, x₁ − (x + 1)P)`.
fn step_back(x1: u64, x: u64, p: u64) -> u64 {
    x1.saturating_sub((x + 1).saturating_mul(p))
}

/// Offset by exact counting: `R = #{x < T' : f(g(x)) = 1}` and
/// `s = x₁ − R·P`. The count is done classically and charged
/// `ceil(√((R+1)(T'−R+1)))` oracle applications, the cost of exact quantum
/// counting. Assumes `s != 0`, since `g` clamps at label 0.
pub fn find_offset_counting(
    oracle: &CompositeOracle,
    p: u64,
    m: u64,
    x1: u64,
) -> Result<CountingOutcome> {
    if p == 0 {
        return Err(Error::PeriodTooSmall { period: 0, min: 1 });
    }
    if !oracle.query(x1)? {
        return Err(Error::Invalid(format!("x1 = {x1} is not a marked label")));
    }
    let t = register_size(m);
    let count = (0..t)
        .filter(|&x| oracle.contains(step_back(x1, x, p)))
        .count() as u64;
    let charged = (((count + 1) * (t - count + 1)) as f64).sqrt().ceil() as u64;
    oracle.charge(charged);
    let back = count as u128 * p as u128;
    if back > x1 as u128 {
        return Err(Error::WrongPeriod(p));
    }
    let s = x1 - back as u64;
    if !verify_period(oracle, s, p, m) {
        return Err(Error::WrongPeriod(p));
    }
    Ok(CountingOutcome {
        s,
        count,
        charged_queries: charged,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecreasingOutcome {
    pub s: u64,
    pub rounds: u64,
    /// Marked labels visited, starting with `x₁`; strictly decreasing.
    pub sequence: Vec<u64>,
}

const MAX_INITIAL_ATTEMPTS: u32 = 64;

/// Grover-amplified measurement over a `T'`-point register whose label `j`
/// stands for `g(j)`; returns the measured `j`.
fn amplified_pick<R: Rng + ?Sized>(
    oracle: &CompositeOracle,
    marked: &ExplicitSet,
    rng: &mut R,
) -> Result<u64> {
    let size = marked.label_count();
    let t = marked.marked_count();
    if t == 0 || t == size {
        // Nothing to amplify; a uniform draw is what the circuit produces.
        return Ok(rng.gen_range(0..size));
    }
    let (state, params) = grover(marked)?;
    oracle.charge(params.k);
    Ok(state.measure(rng))
}

/// Offset by the decreasing-measurement method. A Grover run over all `N`
/// labels gives a member `x₁`; each round then amplifies the labels
/// `g(j) = max(0, x − (j+1)P)` that are still in `A` and measures a
/// strictly smaller member, until `f(x − P) = 0`. The final `x` is checked
/// with [`verify_period`]; a failure means the candidate `P` is wrong.
pub fn find_offset_decreasing<R: Rng + ?Sized>(
    oracle: &CompositeOracle,
    p: u64,
    m: u64,
    rng: &mut R,
) -> Result<DecreasingOutcome> {
    if p == 0 {
        return Err(Error::PeriodTooSmall { period: 0, min: 1 });
    }
    let (state, params) = grover(oracle)?;
    let mut x = None;
    for _ in 0..MAX_INITIAL_ATTEMPTS {
        oracle.charge(params.k);
        let cand = state.measure(rng);
        if oracle.query(cand)? {
            x = Some(cand);
            break;
        }
    }
    let mut x = x.ok_or_else(|| Error::Invalid("no marked label measured".into()))?;
    let mut sequence = vec![x];
    let t = register_size(m);
    let max_rounds = 16 * t + 64;
    let mut rounds = 0;
    loop {
        let smallest = x < p || !oracle.query(x - p)?;
        if smallest {
            if verify_period(oracle, x, p, m) {
                return Ok(DecreasingOutcome {
                    s: x,
                    rounds,
                    sequence,
                });
            }
            return Err(Error::WrongPeriod(p));
        }
        if rounds >= max_rounds {
            return Err(Error::WrongPeriod(p));
        }
        rounds += 1;
        let labels = (0..t)
            .filter(|&j| oracle.contains(step_back(x, j, p)))
            .collect();
        let marked = ExplicitSet::new(t, labels)?;
        let j = amplified_pick(oracle, &marked, rng)?;
        let next = step_back(x, j, p);
        if next < x && oracle.query(next)? {
            x = next;
            sequence.push(x);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HaarDecision {
    Constant,
    Balanced,
}

/// State just before the measurement of the Haar decision algorithm:
/// Grover over the `2M` paired labels, sign encoding `(−1)^{S(z)}`, then
/// `W₁` (or the full `W`).
pub fn haar_state(pairs: &PairSet, signal: &[bool], full: bool) -> Result<StateVector> {
    if signal.len() as u64 != pairs.label_count() {
        return Err(Error::DimensionMismatch {
            expected: pairs.label_count() as usize,
            got: signal.len(),
        });
    }
    let (mut state, _) = grover(pairs)?;
    state.sign_encode(signal)?;
    state.haar(full);
    Ok(state)
}

/// Probability that the Haar decision reports `Constant`.
pub fn haar_constant_probability(pairs: &PairSet, signal: &[bool], full: bool) -> Result<f64> {
    let state = haar_state(pairs, signal, full)?;
    let half = state.len() / 2;
    Ok(state.probabilities()[..half].iter().sum())
}

/// Runs the decision once: a measurement in `[0, N/2)` means the signal is
/// constant on every pair.
pub fn haar_decide<R: Rng + ?Sized>(
    pairs: &PairSet,
    signal: &[bool],
    full: bool,
    rng: &mut R,
) -> Result<HaarDecision> {
    let state = haar_state(pairs, signal, full)?;
    let z = state.measure(rng);
    Ok(if z < pairs.label_count() / 2 {
        HaarDecision::Constant
    } else {
        HaarDecision::Balanced
    })
}

/// Classical sample size `n = 36M(1 − M/N)/(1 − 2M/N)²` and whether it
/// exceeds the amplified method's `√(N/(2M))`.
pub fn classical_sample_size(n: u64, m: u64) -> Result<(f64, bool)> {
    if m == 0 || 2 * m >= n {
        return Err(Error::DegenerateMarkedCount { t: m, n });
    }
    let (nf, mf) = (n as f64, m as f64);
    let samples = 36.0 * mf * (1.0 - mf / nf) / (1.0 - 2.0 * mf / nf).powi(2);
    Ok((samples, samples > (nf / (2.0 * mf)).sqrt()))
}

/// Right-hand side of the crossover condition
/// `M > N^{1/3}(1 − 2M/N)^{4/3} / (2592^{1/3}(1 − M/N)^{2/3})`.
pub fn crossover_threshold(n: u64, m: u64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    nf.cbrt() * (1.0 - 2.0 * mf / nf).powf(4.0 / 3.0)
        / (2592f64.cbrt() * (1.0 - mf / nf).powf(2.0 / 3.0))
}
