//! Closed-form measurement probabilities, ratio bounds, success sets and
//! the supporting lemmas and moment formulas.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    classify_case, dirichlet_ratio, gcd, geometric_phase_sum, mul_mod, totient, unit_root, CaseTag,
};
use crate::oracle::{CompositeOracle, PeriodicSet};
use crate::simulator::{GroverParams, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgKind {
    AmplifiedQft,
    Qft,
    Qhs,
}

impl AlgKind {
    pub const ALL: [AlgKind; 3] = [AlgKind::AmplifiedQft, AlgKind::Qft, AlgKind::Qhs];
}

impl fmt::Display for AlgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgKind::AmplifiedQft => "amplified-qft",
            AlgKind::Qft => "qft",
            AlgKind::Qhs => "qhs",
        })
    }
}

impl FromStr for AlgKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "amplified-qft" | "amplified" => Ok(AlgKind::AmplifiedQft),
            "qft" => Ok(AlgKind::Qft),
            "qhs" => Ok(AlgKind::Qhs),
            other => Err(Error::Invalid(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// `Σ_{x∈C} ω^{xy} = ω^{sy}·Σ_r ω^{rPy} + Σ_{z∈G} ω^{zy}`, by direct sums.
pub fn marked_phase_sum(oracle: &CompositeOracle, y: u64) -> Complex64 {
    let set = oracle.periodic();
    let n = set.n();
    let y = y % n;
    let periodic = unit_root(n, mul_mod(set.offset(), y, n))
        * geometric_phase_sum(n, set.m(), set.period(), y);
    let errors: Complex64 = oracle
        .errors()
        .labels()
        .iter()
        .map(|&z| unit_root(n, mul_mod(z, y, n)))
        .sum();
    periodic + errors
}

/// `|(1/T) Σ_{x∈C} ω^{xy}|²`, the Case B/C/D modulus factor.
pub fn error_modulus(oracle: &CompositeOracle, y: u64) -> f64 {
    let t = oracle.t() as f64;
    (marked_phase_sum(oracle, y) / t).norm_sqr()
}

/// Error-free table value.
pub fn error_free_prob(alg: AlgKind, set: &PeriodicSet, y: u64) -> Result<f64> {
    let (n, m, p) = (set.n(), set.m(), set.period());
    let nf = n as f64;
    let mf = m as f64;
    let case = classify_case(n, m, p, y);
    let ratio = || dirichlet_ratio(n, m, p, y);
    Ok(match alg {
        AlgKind::AmplifiedQft => {
            let g = GroverParams::new(n, m)?;
            let amp = g.amplification_factor().powi(2);
            match case {
                CaseTag::A => (2.0 * g.k as f64 * g.theta).cos().powi(2),
                CaseTag::B => amp,
                CaseTag::C => amp * ratio() / (mf * mf),
                CaseTag::D => 0.0,
            }
        }
        AlgKind::Qft => match case {
            CaseTag::A => (1.0 - 2.0 * mf / nf).powi(2),
            CaseTag::B => 4.0 * mf * mf / (nf * nf),
            CaseTag::C => 4.0 * ratio() / (nf * nf),
            CaseTag::D => 0.0,
        },
        AlgKind::Qhs => match case {
            CaseTag::A => 1.0 - 2.0 * mf * (nf - mf) / (nf * nf),
            CaseTag::B => 2.0 * mf * mf / (nf * nf),
            CaseTag::C => 2.0 * ratio() / (nf * nf),
            CaseTag::D => 0.0,
        },
    })
}

/// Error-stream table value; `θ` and `k` come from `T = L + M`.
pub fn error_stream_prob(alg: AlgKind, oracle: &CompositeOracle, y: u64) -> Result<f64> {
    let set = oracle.periodic();
    let n = set.n();
    let (nf, tf) = (n as f64, oracle.t() as f64);
    let y = y % n;
    if y == 0 {
        return Ok(match alg {
            AlgKind::AmplifiedQft => {
                let g = GroverParams::new(n, oracle.t())?;
                (2.0 * g.k as f64 * g.theta).cos().powi(2)
            }
            AlgKind::Qft => (1.0 - 2.0 * tf / nf).powi(2),
            AlgKind::Qhs => 1.0 - 2.0 * tf * (nf - tf) / (nf * nf),
        });
    }
    let sum = marked_phase_sum(oracle, y).norm_sqr();
    Ok(match alg {
        AlgKind::AmplifiedQft => {
            let g = GroverParams::new(n, oracle.t())?;
            g.amplification_factor().powi(2) * sum / (tf * tf)
        }
        AlgKind::Qft => 4.0 * sum / (nf * nf),
        AlgKind::Qhs => 2.0 * sum / (nf * nf),
    })
}

/// Table value for the oracle's classified case: the error-free table when
/// `G` is empty, the error-stream table otherwise.
pub fn analytic_prob(alg: AlgKind, oracle: &CompositeOracle, y: u64) -> Result<f64> {
    if y >= oracle.n() {
        return Err(Error::LabelOutOfRange {
            label: y,
            n: oracle.n(),
        });
    }
    if oracle.errors().is_empty() {
        error_free_prob(alg, oracle.periodic(), y)
    } else {
        error_stream_prob(alg, oracle, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    pub alg: AlgKind,
    pub n: u64,
    pub m: u64,
    pub period: u64,
    pub s: u64,
    pub errors: Vec<u64>,
    pub probs: Vec<f64>,
    pub cases: Vec<CaseTag>,
}

impl ProbTable {
    pub fn analytic(alg: AlgKind, oracle: &CompositeOracle) -> Result<Self> {
        let set = oracle.periodic();
        let probs = (0..set.n())
            .map(|y| analytic_prob(alg, oracle, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbTable {
            alg,
            n: set.n(),
            m: set.m(),
            period: set.period(),
            s: set.offset(),
            errors: oracle.errors().labels().to_vec(),
            probs,
            cases: case_tags(set),
        })
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn max_abs_diff(&self, simulated: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(simulated)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `y, case, analytic_prob, simulated_prob, abs_diff`.
    pub fn write_csv<W: Write>(&self, out: W, simulated: &[f64]) -> Result<f64> {
        if simulated.len() != self.probs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.probs.len(),
                got: simulated.len(),
            });
        }
        let io = |e: csv::Error| Error::Invalid(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["y", "case", "analytic_prob", "simulated_prob", "abs_diff"])
            .map_err(io)?;
        let mut worst: f64 = 0.0;
        for (y, ((a, b), c)) in self
            .probs
            .iter()
            .zip(simulated)
            .zip(&self.cases)
            .enumerate()
        {
            let d = (a - b).abs();
            worst = worst.max(d);
            w.write_record([
                y.to_string(),
                c.to_string(),
                format!("{a:.17e}"),
                format!("{b:.17e}"),
                format!("{d:.3e}"),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Invalid(format!("csv flush failed: {e}")))?;
        Ok(worst)
    }
}

pub fn case_tags(set: &PeriodicSet) -> Vec<CaseTag> {
    (0..set.n())
        .map(|y| classify_case(set.n(), set.m(), set.period(), y))
        .collect()
}

/// Which single-query algorithm the Amplified-QFT is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioPair {
    OverQft,
    OverQhs,
}

/// Sandwich `lower <= PrRatio(y) <= upper`, held as exact rationals over a
/// common denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioBounds {
    pub lower_num: u128,
    pub upper_num: u128,
    pub den: u128,
}

impl RatioBounds {
    pub fn lower(&self) -> f64 {
        self.lower_num as f64 / self.den as f64
    }

    pub fn upper(&self) -> f64 {
        self.upper_num as f64 / self.den as f64
    }

    /// `upper − lower` in lowest terms.
    pub fn difference(&self) -> (u128, u128) {
        let num = self.upper_num - self.lower_num;
        let g = num_integer::gcd(num, self.den);
        (num / g, self.den / g)
    }

    pub fn contains(&self, x: f64, rel_tol: f64) -> bool {
        x >= self.lower() * (1.0 - rel_tol) && x <= self.upper() * (1.0 + rel_tol)
    }
}

/// `N/(cT)·N/(N−T)·(1−2T/N)² <= PrRatio <= N/(cT)·N/(N−T)` with `c = 4`
/// against the QFT and `c = 2` against QHS.
pub fn pr_ratio_bounds(pair: RatioPair, n: u64, t: u64) -> Result<RatioBounds> {
    if t == 0 || 2 * t >= n {
        return Err(Error::DegenerateMarkedCount { t, n });
    }
    let c: u128 = match pair {
        RatioPair::OverQft => 4,
        RatioPair::OverQhs => 2,
    };
    let (n, t) = (n as u128, t as u128);
    Ok(RatioBounds {
        lower_num: (n - 2 * t) * (n - 2 * t),
        upper_num: n * n,
        den: c * t * (n - t),
    })
}

/// Closed-form `Pr_Amplified(y) / Pr_other(y)` for `y` outside Case A/D:
/// `N² tan²θ sin²2kθ / (c T²)`.
pub fn pr_ratio_exact(pair: RatioPair, n: u64, t: u64) -> Result<f64> {
    let g = GroverParams::new(n, t)?;
    let c = match pair {
        RatioPair::OverQft => 4.0,
        RatioPair::OverQhs => 2.0,
    };
    let (nf, tf) = (n as f64, t as f64);
    Ok(nf * nf * g.amplification_factor().powi(2) / (c * tf * tf))
}

/// `AmpRatio = (a_k − b_k)√N / (−2) = (N/(−2T)) tanθ sin2kθ`.
pub fn amp_ratio_exact(n: u64, t: u64) -> Result<f64> {
    let g = GroverParams::new(n, t)?;
    Ok(n as f64 / (-2.0 * t as f64) * g.amplification_factor())
}

/// Labels `y` with some `d`, `gcd(d, P) = 1`, `|y/N − d/P| <= 1/(2P²)`,
/// tested as `2P·|yP − dN| <= N`.
pub fn success_set(n: u64, p: u64) -> Result<Vec<u64>> {
    if p < 2 {
        return Err(Error::PeriodTooSmall { period: p, min: 2 });
    }
    if p as u128 * p as u128 > n as u128 {
        return Err(Error::PeriodTooLarge { period: p, n });
    }
    // The window half-width 1/(2P²) is below half the spacing 1/P, so only
    // the nearest d can qualify.
    let (n128, p128) = (n as u128, p as u128);
    Ok((0..n)
        .filter(|&y| {
            let d = (2 * y as u128 * p128 + n128) / (2 * n128);
            let dist = (y as u128 * p128).abs_diff(d * n128);
            2 * p128 * dist <= n128 && gcd(d as u64, p) == 1
        })
        .collect())
}

/// `Σ_{y∈S} Pr(y)` for the oracle's period.
pub fn success_probability(alg: AlgKind, oracle: &CompositeOracle) -> Result<f64> {
    let set = oracle.periodic();
    success_set(set.n(), set.period())?
        .into_iter()
        .map(|y| analytic_prob(alg, oracle, y))
        .sum()
}

/// Lower bounds on the repeat-until-success trial count `X ~ Geom(p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialBounds {
    /// The stated bound `N/(4M)` (QFT) or `N/(2M)` (QHS); 1 for Amplified-QFT.
    pub mean_lower: f64,
    /// `1/p_max`, the bound before dropping the `N/(N−M)` factor.
    pub mean_lower_tight: f64,
    pub variance_lower: f64,
    /// Oracle calls per run: 1, or `ceil(π/(4θ)) + 1` for Amplified-QFT.
    pub applications_per_run: u64,
}

pub fn expected_trials(alg: AlgKind, n: u64, m: u64) -> Result<TrialBounds> {
    if m == 0 || 2 * m >= n {
        return Err(Error::DegenerateMarkedCount { t: m, n });
    }
    let (nf, mf) = (n as f64, m as f64);
    let scale = (nf / (nf - mf)).powi(2);
    Ok(match alg {
        AlgKind::Qft => {
            let pmax = 4.0 * mf * (nf - mf) / (nf * nf);
            TrialBounds {
                mean_lower: nf / (4.0 * mf),
                mean_lower_tight: 1.0 / pmax,
                variance_lower: scale * ((nf - 2.0 * mf) / (4.0 * mf)).powi(2),
                applications_per_run: 1,
            }
        }
        AlgKind::Qhs => {
            let pmax = 2.0 * mf * (nf - mf) / (nf * nf);
            TrialBounds {
                mean_lower: nf / (2.0 * mf),
                mean_lower_tight: 1.0 / pmax,
                variance_lower: scale * ((nf - mf).powi(2) + mf * mf) / (4.0 * mf * mf),
                applications_per_run: 1,
            }
        }
        AlgKind::AmplifiedQft => TrialBounds {
            mean_lower: 1.0,
            mean_lower_tight: 1.0,
            variance_lower: 0.0,
            applications_per_run: GroverParams::new(n, m)?.work_factor(),
        },
    })
}

/// Variance of a geometric trial count with success probability `p`.
pub fn geometric_variance(p: f64) -> f64 {
    (1.0 - p) / (p * p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentKind {
    Mean,
    Variance,
}

/// Mean or variance over i.i.d. uniform error labels of the Case B/C/D
/// modulus term `|(1/T)(ω^{sy}·Σ_r ω^{rPy} + Σ_G ω^{zy})|²`.
pub fn moment_formula(
    case: CaseTag,
    kind: MomentKind,
    m: u64,
    l: u64,
    n: u64,
    p: u64,
    y: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::CountTooSmall { m, min: 1 });
    }
    let (mf, lf) = (m as f64, l as f64);
    let t2 = (lf + mf).powi(2);
    let r = match case {
        CaseTag::A => return Err(Error::NoRandomSum(CaseTag::A)),
        CaseTag::B => mf * mf,
        CaseTag::C => {
            if n == 0 {
                return Err(Error::ZeroModulus);
            }
            if mul_mod(p, y, n) == 0 {
                return Err(Error::CaseMismatch);
            }
            dirichlet_ratio(n, m, p, y)
        }
        CaseTag::D => 0.0,
    };
    Ok(match kind {
        MomentKind::Mean => (r + lf) / t2,
        MomentKind::Variance => (lf * lf - lf + 2.0 * r * lf) / (t2 * t2),
    })
}

/// Shapes of random phase sums `S = Σ_{j<L} ω^{z_j y}` covered by the
/// moment theorems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SumForm {
    /// `|S|²`
    Plain,
    /// `|a + bS|²`; the phase `ω^{sy}` on `a` does not change the
    /// distribution because `S` is rotation invariant.
    WithOffset { a: f64, b: f64 },
    /// `|a + ic + bS|²`
    WithComplex { a: f64, c: f64, b: f64 },
}

impl SumForm {
    fn coefficients(&self) -> (f64, f64, f64) {
        match *self {
            SumForm::Plain => (0.0, 0.0, 1.0),
            SumForm::WithOffset { a, b } => (a, 0.0, b),
            SumForm::WithComplex { a, c, b } => (a, c, b),
        }
    }

    /// `|a + ic + bS|²` given `Re S`, `Im S` and `|S|²`.
    pub fn evaluate(&self, s_re: f64, s_im: f64, s_norm_sqr: f64) -> f64 {
        let (a, c, b) = self.coefficients();
        a * a + c * c + b * b * s_norm_sqr + 2.0 * b * (a * s_re + c * s_im)
    }

    /// Closed-form `(mean, variance)` for `L` i.i.d. uniform labels.
    pub fn theorem_moments(&self, l: u64) -> (f64, f64) {
        let (a, c, b) = self.coefficients();
        let lf = l as f64;
        let u = a * a + c * c;
        let b2 = b * b;
        (u + b2 * lf, b2 * b2 * (lf * lf - lf) + 2.0 * u * b2 * lf)
    }
}

/// `f(L) = (L + M²) / ((N − L − M)(L + M))`.
pub fn min_l_objective(n: u64, m: u64, l: f64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    (l + mf * mf) / ((nf - l - mf) * (l + mf))
}

/// `(A, B)` with `f(L) = A/(N − T) + B/T`.
pub fn min_l_decomposition(n: u64, m: u64) -> (f64, f64) {
    let b = (m * m.saturating_sub(1)) as f64 / n as f64;
    (1.0 + b, b)
}

/// `L² + 2M²L + M(2M² + N − M − NM)`, zero at the minimizer.
pub fn min_l_quadratic(n: u64, m: u64, l: f64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    l * l + 2.0 * mf * mf * l + mf * (2.0 * mf * mf + nf - mf - nf * mf)
}

/// `MinL = −M² + √(M(M−1)(M(M−1) + N))`.
pub fn min_l(n: u64, m: u64) -> Result<f64> {
    if m < 2 {
        return Err(Error::CountTooSmall { m, min: 2 });
    }
    if m >= n {
        return Err(Error::DegenerateMarkedCount { t: m, n });
    }
    let mf = m as f64;
    let q = mf * (mf - 1.0);
    Ok(-mf * mf + (q * (q + n as f64)).sqrt())
}

/// Minimizer of `f` over a uniform grid on `[0, N − M − 1]`.
pub fn min_l_grid(n: u64, m: u64, step: f64) -> f64 {
    let hi = (n - m - 1) as f64;
    let steps = (hi / step).floor() as u64;
    (0..=steps)
        .map(|i| i as f64 * step)
        .map(|l| (l, min_l_objective(n, m, l)))
        .fold((0.0, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
        .0
}

/// `(√(αM/N) + √((1−α)(1−M/N)))²`, the largest `Pr(y)` reachable when a
/// fraction `α` of the probability sits on the `M` marked labels.
pub fn general_amplification_bound(alpha: f64, m: u64, n: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidRate(alpha));
    }
    if n == 0 || m > n {
        return Err(Error::DegenerateMarkedCount { t: m, n });
    }
    let q = m as f64 / n as f64;
    // Expanded square, so the endpoints alpha = 0, 1 come out exact.
    let on = alpha * q;
    let off = (1.0 - alpha) * (1.0 - q);
    Ok(on + off + 2.0 * (on * off).sqrt())
}

/// Sandwich for `tan²θ sin²2kθ`: `(T/(N−T))(1 − 2T/N)²` and `T/(N−T)`.
pub fn amplification_bounds(n: u64, t: u64) -> (f64, f64) {
    let (nf, tf) = (n as f64, t as f64);
    let hi = tf / (nf - tf);
    (hi * (1.0 - 2.0 * tf / nf).powi(2), hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// Labels with post-QFT probability above `1e−18`.
    pub n_y: u64,
    /// `N` minus the Case-D labels, adjusted for a vanishing `y = 0` term.
    pub n_y_exact: u64,
    pub holds: bool,
}

pub const SUPPORT_THRESHOLD: f64 = 1e-18;

/// Support-size check `M·N_y >= N` on the Fourier transform of a Grover
/// output state for the error-free periodic oracle.
pub fn uncertainty_product(
    state_before_qft: &StateVector,
    set: &PeriodicSet,
) -> Result<UncertaintyReport> {
    let n = set.n();
    if state_before_qft.len() as u64 != n {
        return Err(Error::DimensionMismatch {
            expected: n as usize,
            got: state_before_qft.len(),
        });
    }
    let mut q = state_before_qft.clone();
    q.qft();
    let n_y = q
        .probabilities()
        .iter()
        .filter(|&&p| p > SUPPORT_THRESHOLD)
        .count() as u64;

    let g = GroverParams::new(n, set.m())?;
    let zero_term = (2.0 * g.k as f64 * g.theta).cos().abs() > 1e-9;
    let rest = if g.amplification_factor().abs() > 1e-12 {
        (1..n)
            .filter(|&y| classify_case(n, set.m(), set.period(), y) != CaseTag::D)
            .count() as u64
    } else {
        0
    };
    let n_y_exact = rest + zero_term as u64;
    Ok(UncertaintyReport {
        n_y,
        n_y_exact,
        holds: set.m() as u128 * n_y as u128 >= n as u128,
    })
}

/// `φ(P)/P`, the chance a uniformly random `d` is coprime to `P`.
pub fn totient_repeat_estimate(p: u64) -> Result<f64> {
    if p == 0 {
        return Err(Error::PeriodTooSmall { period: 0, min: 1 });
    }
    Ok(totient(p) as f64 / p as f64)
}

/// `P/φ(P)`, the expected number of runs until `gcd(d, P) = 1`.
pub fn expected_reruns(p: u64) -> Result<f64> {
    Ok(1.0 / totient_repeat_estimate(p)?)
}

/// `sin²2θ = 4(T/N)(1 − T/N)`, the ceiling on `cos²2kθ`.
pub fn zero_label_ceiling(n: u64, t: u64) -> f64 {
    let q = t as f64 / n as f64;
    4.0 * q * (1.0 - q)
}

/// `θ = asin √(T/N)` in radians, exposed for reporting.
pub fn grover_angle(n: u64, t: u64) -> f64 {
    (t as f64 / n as f64).sqrt().asin()
}

/// `π/(4θ)`.
pub fn grover_quarter_turns(n: u64, t: u64) -> f64 {
    PI / (4.0 * grover_angle(n, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ErrorStream;
    use crate::simulator::{grover, simulated_distribution};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_oracle() -> CompositeOracle {
        CompositeOracle::new(PeriodicSet::new(1024, 208, 5, 7).unwrap(), None)
    }

    #[test]
    fn spot_values_y0() {
        let o = reference_oracle();
        assert_eq!(
            analytic_prob(AlgKind::Qft, &o, 0).unwrap(),
            (1.0 - 14.0 / 1024.0f64).powi(2)
        );
        assert_eq!(
            analytic_prob(AlgKind::Qhs, &o, 0).unwrap(),
            1.0 - 2.0 * 7.0 * 1017.0 / (1024.0 * 1024.0)
        );
        let theta = (7.0f64 / 1024.0).sqrt().asin();
        assert_abs_diff_eq!(
            analytic_prob(AlgKind::AmplifiedQft, &o, 0).unwrap(),
            (18.0 * theta).cos().powi(2),
            epsilon = 1e-15
        );
    }

    #[test]
    fn tables_sum_to_one() {
        for (n, s, p, m) in [
            (1024u64, 208u64, 5u64, 7u64),
            (16, 0, 2, 4),
            (4096, 1, 64, 60),
        ] {
            let o = CompositeOracle::new(PeriodicSet::new(n, s, p, m).unwrap(), None);
            for alg in AlgKind::ALL {
                let t = ProbTable::analytic(alg, &o).unwrap();
                assert_abs_diff_eq!(t.total(), 1.0, epsilon = 1e-9);
                assert!(t.probs.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn tables_match_simulation_small() {
        for (n, s, p, m) in [(256u64, 3u64, 7u64, 20u64), (16, 0, 2, 4), (64, 5, 8, 3)] {
            let o = CompositeOracle::new(PeriodicSet::new(n, s, p, m).unwrap(), None);
            for alg in AlgKind::ALL {
                let t = ProbTable::analytic(alg, &o).unwrap();
                let sim = simulated_distribution(alg, &o).unwrap();
                assert!(t.max_abs_diff(&sim) < 1e-12, "{alg} {n} {p} {m}");
            }
        }
    }

    #[test]
    fn empty_error_stream_reduces_to_error_free() {
        let o = reference_oracle();
        for alg in AlgKind::ALL {
            for y in 0..1024 {
                let a = error_free_prob(alg, o.periodic(), y).unwrap();
                let b = error_stream_prob(alg, &o, y).unwrap();
                assert!(
                    (a - b).abs() <= 1e-15 + 1e-12 * a.abs(),
                    "{alg} {y} {a} {b}"
                );
            }
        }
    }

    #[test]
    fn error_stream_tables_match_simulation() {
        let set = PeriodicSet::new(1024, 208, 5, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let g = ErrorStream::sample(&set, 6.0 / 1017.0, &mut rng).unwrap();
            let o = CompositeOracle::new(set, Some(g));
            for alg in AlgKind::ALL {
                let t = ProbTable::analytic(alg, &o).unwrap();
                let sim = simulated_distribution(alg, &o).unwrap();
                assert!(t.max_abs_diff(&sim) < 1e-9);
                assert_abs_diff_eq!(t.total(), 1.0, epsilon = 1e-9);
            }
            for y in 1..1024 {
                assert!(error_modulus(&o, y) <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn csv_columns() {
        let o = CompositeOracle::new(PeriodicSet::new(16, 0, 2, 4).unwrap(), None);
        let t = ProbTable::analytic(AlgKind::Qft, &o).unwrap();
        let sim = simulated_distribution(AlgKind::Qft, &o).unwrap();
        let mut buf = Vec::new();
        let worst = t.write_csv(&mut buf, &sim).unwrap();
        assert!(worst < 1e-12);
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "y,case,analytic_prob,simulated_prob,abs_diff"
        );
        assert_eq!(lines.count(), 16);
        assert!(t.write_csv(Vec::new(), &sim[..3]).is_err());
    }

    #[test]
    fn ratio_bound_differences_exact() {
        let b = pr_ratio_bounds(RatioPair::OverQft, 1024, 7).unwrap();
        assert_eq!(b.difference(), (1, 1));
        let b = pr_ratio_bounds(RatioPair::OverQhs, 1024, 7).unwrap();
        assert_eq!(b.difference(), (2, 1));
        assert!(pr_ratio_bounds(RatioPair::OverQft, 1024, 512).is_err());
        assert!(pr_ratio_bounds(RatioPair::OverQft, 1024, 0).is_err());
    }

    #[test]
    fn success_set_examples() {
        let s = success_set(1024, 5).unwrap();
        assert!(s.contains(&205) && s.contains(&410));
        assert!(!s.contains(&0));
        assert!(success_set(1024, 1).is_err());
        assert!(success_set(1024, 33).is_err());
    }

    fn brute_success_set(n: u64, p: u64) -> Vec<u64> {
        (0..n)
            .filter(|&y| {
                (0..=p).any(|d| {
                    gcd(d, p) == 1
                        && 2 * p as i128 * ((y * p) as i128 - (d * n) as i128).abs() <= n as i128
                })
            })
            .collect()
    }

    #[test]
    fn success_set_brute_force() {
        for n in [16u64, 64, 256, 1024] {
            let root = (n as f64).sqrt() as u64;
            for p in 2..=root {
                assert_eq!(
                    success_set(n, p).unwrap(),
                    brute_success_set(n, p),
                    "{n} {p}"
                );
            }
        }
    }

    #[test]
    fn success_probabilities_and_ratio() {
        let o = reference_oracle();
        let amp = success_probability(AlgKind::AmplifiedQft, &o).unwrap();
        let qft = success_probability(AlgKind::Qft, &o).unwrap();
        let qhs = success_probability(AlgKind::Qhs, &o).unwrap();
        for p in [amp, qft, qhs] {
            assert!(p > 0.0 && p <= 1.0);
        }
        let b = pr_ratio_bounds(RatioPair::OverQft, 1024, 7).unwrap();
        assert!(b.contains(amp / qft, 1e-12));
        let b = pr_ratio_bounds(RatioPair::OverQhs, 1024, 7).unwrap();
        assert!(b.contains(amp / qhs, 1e-12));
    }

    #[test]
    fn ratio_near_n_over_4m_for_small_m() {
        let o = CompositeOracle::new(PeriodicSet::new(1 << 16, 100, 7, 3).unwrap(), None);
        let amp = success_probability(AlgKind::AmplifiedQft, &o).unwrap();
        let qft = success_probability(AlgKind::Qft, &o).unwrap();
        let approx = (1u64 << 16) as f64 / 12.0;
        assert!((amp / qft / approx - 1.0).abs() < 0.01);
    }

    #[test]
    fn expected_trials_examples() {
        let q = expected_trials(AlgKind::Qft, 1024, 7).unwrap();
        assert_eq!(q.mean_lower, 1024.0 / 28.0);
        assert!(q.mean_lower_tight >= q.mean_lower);
        let pmax = 4.0 * 7.0 * 1017.0 / (1024.0f64 * 1024.0);
        assert!(geometric_variance(pmax) >= q.variance_lower * (1.0 - 1e-12));
        let h = expected_trials(AlgKind::Qhs, 1024, 7).unwrap();
        assert_eq!(h.mean_lower, 1024.0 / 14.0);
        let pmax = 2.0 * 7.0 * 1017.0 / (1024.0f64 * 1024.0);
        assert!(geometric_variance(pmax) >= h.variance_lower * (1.0 - 1e-12));
        let a = expected_trials(AlgKind::AmplifiedQft, 1024, 7).unwrap();
        assert_eq!(a.applications_per_run, 11);
    }

    #[test]
    fn moment_formula_examples() {
        assert_eq!(
            moment_formula(CaseTag::B, MomentKind::Mean, 7, 0, 1024, 5, 0).unwrap(),
            1.0
        );
        assert_eq!(
            moment_formula(CaseTag::D, MomentKind::Variance, 7, 1, 1024, 5, 3).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            moment_formula(CaseTag::B, MomentKind::Mean, 7, 6, 1024, 5, 0).unwrap(),
            55.0 / 169.0,
            epsilon = 1e-15
        );
        assert!(moment_formula(CaseTag::A, MomentKind::Mean, 7, 6, 1024, 5, 0).is_err());
        assert!(moment_formula(CaseTag::C, MomentKind::Mean, 4, 6, 16, 2, 8).is_err());
        let c = moment_formula(CaseTag::C, MomentKind::Mean, 7, 6, 1024, 5, 205).unwrap();
        assert_abs_diff_eq!(
            c,
            (dirichlet_ratio(1024, 7, 5, 205) + 6.0) / 169.0,
            epsilon = 1e-15
        );
        let (mean, var) = SumForm::WithOffset {
            a: 7.0 / 13.0,
            b: 1.0 / 13.0,
        }
        .theorem_moments(6);
        assert_abs_diff_eq!(mean, 55.0 / 169.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            var,
            moment_formula(CaseTag::B, MomentKind::Variance, 7, 6, 1024, 5, 0).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn min_l_examples() {
        let v = min_l(1024, 7).unwrap();
        assert_abs_diff_eq!(v, -49.0 + (42.0f64 * 1066.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, -49.0 + 44772f64.sqrt(), epsilon = 1e-12);
        assert!((min_l_grid(1024, 7, 0.125) - v).abs() < 0.5);
        assert!(min_l_quadratic(1024, 7, v).abs() < 1e-6);
        let (a, b) = min_l_decomposition(1024, 7);
        for l in [0.0, 10.0, 162.6, 900.0] {
            let t = l + 7.0;
            assert_abs_diff_eq!(
                min_l_objective(1024, 7, l),
                a / (1024.0 - t) + b / t,
                epsilon = 1e-15
            );
        }
        assert!(min_l(1024, 1).is_err());
    }

    #[test]
    fn general_bound_limits() {
        assert_eq!(
            general_amplification_bound(1.0, 7, 1024).unwrap(),
            7.0 / 1024.0
        );
        assert_abs_diff_eq!(
            general_amplification_bound(0.0, 7, 1024).unwrap(),
            1.0 - 7.0 / 1024.0,
            epsilon = 1e-15
        );
        assert!(general_amplification_bound(1.5, 7, 1024).is_err());
    }

    #[test]
    fn uncertainty_examples() {
        let set = PeriodicSet::new(16, 0, 2, 4).unwrap();
        let (state, _) = grover(&set).unwrap();
        let r = uncertainty_product(&state, &set).unwrap();
        assert_eq!((r.n_y, r.n_y_exact, r.holds), (10, 10, true));
        let d: Vec<u64> = (0..16)
            .filter(|&y| classify_case(16, 4, 2, y) == CaseTag::D)
            .collect();
        assert_eq!(d, vec![2, 4, 6, 10, 12, 14]);
        let set = PeriodicSet::new(1024, 208, 5, 7).unwrap();
        let (state, _) = grover(&set).unwrap();
        let r = uncertainty_product(&state, &set).unwrap();
        assert_eq!((r.n_y, r.n_y_exact, r.holds), (1024, 1024, true));
    }

    #[test]
    fn totient_estimates() {
        assert_eq!(totient_repeat_estimate(5).unwrap(), 0.8);
        assert_abs_diff_eq!(
            totient_repeat_estimate(6).unwrap(),
            2.0 / 6.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(expected_reruns(6).unwrap(), 3.0, epsilon = 1e-12);
        assert!(totient_repeat_estimate(0).is_err());
    }

    proptest! {
        #[test]
        fn amplification_identities(e in 3u32..16, frac in 0.0f64..0.5) {
            let n = 1u64 << e;
            let t = ((n as f64 * frac) as u64).max(1);
            prop_assume!(2 * t < n);
            let g = GroverParams::new(n, t).unwrap();
            // Amplification factor from the amplitudes.
            let lhs = t as f64 / (n as f64).sqrt() * (g.a_k - g.b_k);
            prop_assert!((lhs - g.amplification_factor()).abs() < 1e-10);
            // Sandwich.
            let (lo, hi) = amplification_bounds(n, t);
            let x = g.amplification_factor().powi(2);
            prop_assert!(x <= hi * (1.0 + 1e-12) && x >= lo * (1.0 - 1e-12));
            // Zero-label ceiling.
            let c2 = (2.0 * g.k as f64 * g.theta).cos().powi(2);
            prop_assert!(c2 <= zero_label_ceiling(n, t) + 1e-12);
            // Exact ratio sits inside both sandwiches.
            for pair in [RatioPair::OverQft, RatioPair::OverQhs] {
                let b = pr_ratio_bounds(pair, n, t).unwrap();
                prop_assert!(b.contains(pr_ratio_exact(pair, n, t).unwrap(), 1e-12));
                let (dn, dd) = b.difference();
                prop_assert_eq!(dd, 1);
                prop_assert_eq!(dn, if pair == RatioPair::OverQft { 1 } else { 2 });
            }
        }

        #[test]
        fn min_l_matches_grid(e in 10u32..15, m in 2u64..33) {
            let n = 1u64 << e;
            let v = min_l(n, m).unwrap();
            prop_assume!(v >= 0.0 && v <= (n - m - 1) as f64);
            prop_assert!((min_l_grid(n, m, 0.125) - v).abs() < 0.5);
            prop_assert!(min_l_quadratic(n, m, v).abs() < 1e-6 * (n as f64) * (m as f64).powi(3));
        }
    }
}
