//! Hidden sets, error streams and the composite oracle `h = f XOR g`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::is_power_of_two;

/// A set of marked labels inside `[0, N)`.
pub trait MarkedSet: Sync {
    fn label_count(&self) -> u64;
    fn is_marked(&self, x: u64) -> bool;
    fn marked_count(&self) -> u64;

    /// Marked labels in increasing order.
    fn marked_labels(&self) -> Vec<u64> {
        (0..self.label_count())
            .filter(|&x| self.is_marked(x))
            .collect()
    }
}

fn check_label_count(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::ZeroModulus);
    }
    if !is_power_of_two(n) {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// `A = {s + rP : 0 <= r < M}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicSet {
    n: u64,
    s: u64,
    period: u64,
    m: u64,
}

impl PeriodicSet {
    pub fn new(n: u64, s: u64, period: u64, m: u64) -> Result<Self> {
        check_label_count(n)?;
        if period == 0 {
            return Err(Error::PeriodTooSmall { period, min: 1 });
        }
        if period as u128 * period as u128 > n as u128 {
            return Err(Error::PeriodTooLarge { period, n });
        }
        if m == 0 {
            return Err(Error::CountTooSmall { m, min: 1 });
        }
        let last = s as u128 + (m as u128 - 1) * period as u128;
        if last > n as u128 - 1 {
            return Err(Error::SetOverflow {
                last: last.min(u64::MAX as u128) as u64,
                max: n - 1,
            });
        }
        Ok(PeriodicSet { n, s, period, m })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn offset(&self) -> u64 {
        self.s
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn contains(&self, x: u64) -> bool {
        x >= self.s
            && (x - self.s).is_multiple_of(self.period)
            && (x - self.s) / self.period < self.m
    }

    pub fn enumerate(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.m).map(move |r| self.s + r * self.period)
    }
}

impl MarkedSet for PeriodicSet {
    fn label_count(&self) -> u64 {
        self.n
    }

    fn is_marked(&self, x: u64) -> bool {
        self.contains(x)
    }

    fn marked_count(&self) -> u64 {
        self.m
    }

    fn marked_labels(&self) -> Vec<u64> {
        self.enumerate().collect()
    }
}

/// Error set `G`, disjoint from the periodic set, stored sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStream {
    labels: Vec<u64>,
    rate: f64,
}

impl ErrorStream {
    pub fn empty() -> Self {
        ErrorStream {
            labels: Vec::new(),
            rate: 0.0,
        }
    }

    /// Includes every label outside `A` independently with probability `p`.
    pub fn sample<R: Rng + ?Sized>(set: &PeriodicSet, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidRate(p));
        }
        let labels = (0..set.n())
            .filter(|&x| !set.contains(x))
            .filter(|_| rng.gen_bool(p))
            .collect();
        Ok(ErrorStream { labels, rate: p })
    }

    /// A uniformly random `L`-subset of the complement of `A`.
    pub fn sample_subset<R: Rng + ?Sized>(set: &PeriodicSet, l: u64, rng: &mut R) -> Result<Self> {
        let free = set.n() - set.m();
        if l > free {
            return Err(Error::Invalid(format!(
                "error-set size {l} exceeds the {free} labels outside A"
            )));
        }
        let complement: Vec<u64> = (0..set.n()).filter(|&x| !set.contains(x)).collect();
        let mut labels: Vec<u64> = index::sample(rng, free as usize, l as usize)
            .into_iter()
            .map(|i| complement[i])
            .collect();
        labels.sort_unstable();
        Ok(ErrorStream {
            labels,
            rate: l as f64 / free as f64,
        })
    }

    /// A fixed error set; must be in range, distinct and disjoint from `A`.
    pub fn from_labels(set: &PeriodicSet, mut labels: Vec<u64>) -> Result<Self> {
        labels.sort_unstable();
        for w in labels.windows(2) {
            if w[0] == w[1] {
                return Err(Error::ErrorLabelCollision(w[0]));
            }
        }
        for &x in &labels {
            if x >= set.n() {
                return Err(Error::LabelOutOfRange {
                    label: x,
                    n: set.n(),
                });
            }
            if set.contains(x) {
                return Err(Error::ErrorLabelCollision(x));
            }
        }
        let free = (set.n() - set.m()) as f64;
        let rate = labels.len() as f64 / free;
        Ok(ErrorStream { labels, rate })
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> u64 {
        self.labels.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, x: u64) -> bool {
        self.labels.binary_search(&x).is_ok()
    }
}

/// `h(x) = 1` iff `x` lies in `C = A ∪ G`. Counts queries.
#[derive(Debug)]
pub struct CompositeOracle {
    periodic: PeriodicSet,
    errors: ErrorStream,
    queries: AtomicU64,
}

impl Clone for CompositeOracle {
    fn clone(&self) -> Self {
        CompositeOracle {
            periodic: self.periodic,
            errors: self.errors.clone(),
            queries: AtomicU64::new(self.query_count()),
        }
    }
}

impl CompositeOracle {
    pub fn new(periodic: PeriodicSet, errors: Option<ErrorStream>) -> Self {
        CompositeOracle {
            periodic,
            errors: errors.unwrap_or_else(ErrorStream::empty),
            queries: AtomicU64::new(0),
        }
    }

    pub fn periodic(&self) -> &PeriodicSet {
        &self.periodic
    }

    pub fn errors(&self) -> &ErrorStream {
        &self.errors
    }

    pub fn n(&self) -> u64 {
        self.periodic.n()
    }

    /// `T = L + M`.
    pub fn t(&self) -> u64 {
        self.periodic.m() + self.errors.len()
    }

    /// Membership in `C` without touching the query counter.
    pub fn contains(&self, x: u64) -> bool {
        self.periodic.contains(x) || self.errors.contains(x)
    }

    /// One counted oracle call.
    pub fn query(&self, x: u64) -> Result<bool> {
        if x >= self.n() {
            return Err(Error::LabelOutOfRange {
                label: x,
                n: self.n(),
            });
        }
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.contains(x))
    }

    /// Books `count` oracle applications made inside a simulated circuit.
    pub fn charge(&self, count: u64) {
        self.queries.fetch_add(count, Ordering::Relaxed);
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_queries(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }
}

impl MarkedSet for CompositeOracle {
    fn label_count(&self) -> u64 {
        self.n()
    }

    fn is_marked(&self, x: u64) -> bool {
        self.contains(x)
    }

    fn marked_count(&self) -> u64 {
        self.t()
    }

    fn marked_labels(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.periodic.enumerate().collect();
        v.extend_from_slice(self.errors.labels());
        v.sort_unstable();
        v
    }
}

/// An arbitrary sorted set of labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitSet {
    n: u64,
    labels: Vec<u64>,
}

impl ExplicitSet {
    pub fn new(n: u64, mut labels: Vec<u64>) -> Result<Self> {
        check_label_count(n)?;
        labels.sort_unstable();
        labels.dedup();
        if let Some(&x) = labels.iter().find(|&&x| x >= n) {
            return Err(Error::LabelOutOfRange { label: x, n });
        }
        Ok(ExplicitSet { n, labels })
    }
}

impl MarkedSet for ExplicitSet {
    fn label_count(&self) -> u64 {
        self.n
    }

    fn is_marked(&self, x: u64) -> bool {
        self.labels.binary_search(&x).is_ok()
    }

    fn marked_count(&self) -> u64 {
        self.labels.len() as u64
    }

    fn marked_labels(&self) -> Vec<u64> {
        self.labels.clone()
    }
}

/// Union of `M` disjoint even-aligned pairs `{i, i+1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    n: u64,
    starts: Vec<u64>,
}

impl PairSet {
    pub fn new(n: u64, mut starts: Vec<u64>) -> Result<Self> {
        check_label_count(n)?;
        if n < 2 {
            return Err(Error::MalformedPairs("need at least two labels".into()));
        }
        starts.sort_unstable();
        for w in starts.windows(2) {
            if w[0] == w[1] {
                return Err(Error::MalformedPairs(format!("pair at {} repeated", w[0])));
            }
        }
        for &i in &starts {
            if i % 2 != 0 {
                return Err(Error::MalformedPairs(format!("pair start {i} is odd")));
            }
            if i + 1 >= n {
                return Err(Error::LabelOutOfRange { label: i + 1, n });
            }
        }
        Ok(PairSet { n, starts })
    }

    pub fn starts(&self) -> &[u64] {
        &self.starts
    }

    /// Number of pairs `M`.
    pub fn pair_count(&self) -> u64 {
        self.starts.len() as u64
    }
}

impl MarkedSet for PairSet {
    fn label_count(&self) -> u64 {
        self.n
    }

    fn is_marked(&self, x: u64) -> bool {
        x < self.n && self.starts.binary_search(&(x & !1)).is_ok()
    }

    fn marked_count(&self) -> u64 {
        2 * self.pair_count()
    }
}

/// Oracle parameters as they appear in the experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub n_exp: u32,
    pub s: u64,
    #[serde(rename = "P")]
    pub period: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(default)]
    pub p: f64,
    pub seed: u64,
}

impl OracleParams {
    pub fn n(&self) -> Result<u64> {
        if self.n_exp >= 63 {
            return Err(Error::Invalid(format!("n_exp {} too large", self.n_exp)));
        }
        Ok(1u64 << self.n_exp)
    }

    pub fn periodic_set(&self) -> Result<PeriodicSet> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidRate(self.p));
        }
        PeriodicSet::new(self.n()?, self.s, self.period, self.m)
    }
}
