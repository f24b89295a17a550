//! Shared kernels: roots of unity, the M-term geometric phase sum and its
//! squared modulus, continued fractions and a few integer helpers.
//!
//! All modular reductions happen in integer arithmetic before any
//! trigonometric evaluation.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement-label classification used throughout the probability tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    A,
    B,
    C,
    D,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseTag::A => "A",
            CaseTag::B => "B",
            CaseTag::C => "C",
            CaseTag::D => "D",
        };
        f.write_str(s)
    }
}

/// Nonnegative rational in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::ZeroModulus);
        }
        let g = num.gcd(&den);
        Ok(Rational {
            num: num / g,
            den: den / g,
        })
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// `(a * b) mod n` without overflow.
pub fn mul_mod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

/// ω^r for ω = exp(−2πi/n), with `r` already reduced into `[0, n)`.
pub(crate) fn unit_root(n: u64, r: u64) -> Complex64 {
    debug_assert!(r < n);
    if r == 0 {
        return Complex64::new(1.0, 0.0);
    }
    // Exact values at the quarter turns.
    if 2 * r as u128 == n as u128 {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * r as u128 == n as u128 {
        return Complex64::new(0.0, -1.0);
    }
    if 4 * r as u128 == 3 * n as u128 {
        return Complex64::new(0.0, 1.0);
    }
    // Map to a signed residue so the angle stays in (−π, π].
    let signed = if 2 * r > n {
        r as f64 - n as f64
    } else {
        r as f64
    };
    let (s, c) = (-2.0 * PI * signed / n as f64).sin_cos();
    Complex64::new(c, s)
}

/// ω^e for ω = exp(−2πi/N), reducing `e` modulo `N` first.
pub fn root_power(n: u64, e: i64) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::ZeroModulus);
    }
    let r = (e as i128).rem_euclid(n as i128) as u64;
    Ok(unit_root(n, r))
}

/// Σ_{r<M} ω^{rPy}: equals M when Py ≡ 0 (mod N), otherwise the closed
/// form (1 − ω^{MPy}) / (1 − ω^{Py}).
pub fn geometric_phase_sum(n: u64, m: u64, p: u64, y: u64) -> Complex64 {
    let py = mul_mod(p, y, n);
    if py == 0 {
        return Complex64::new(m as f64, 0.0);
    }
    let mpy = mul_mod(m, py, n);
    let one = Complex64::new(1.0, 0.0);
    (one - unit_root(n, mpy)) / (one - unit_root(n, py))
}

/// sin²(πMPy/N) / sin²(πPy/N), with the limit M² when Py ≡ 0 (mod N).
pub fn dirichlet_ratio(n: u64, m: u64, p: u64, y: u64) -> f64 {
    let py = mul_mod(p, y, n);
    let m2 = (m as f64) * (m as f64);
    if py == 0 {
        return m2;
    }
    let mpy = mul_mod(m, py, n);
    if mpy == 0 {
        return 0.0;
    }
    let num = (PI * mpy as f64 / n as f64).sin();
    let den = (PI * py as f64 / n as f64).sin();
    ((num * num) / (den * den)).min(m2)
}

pub fn classify_case(n: u64, m: u64, p: u64, y: u64) -> CaseTag {
    if y == 0 {
        return CaseTag::A;
    }
    let py = mul_mod(p, y, n);
    if py == 0 {
        return CaseTag::B;
    }
    if mul_mod(m, py, n) == 0 {
        CaseTag::D
    } else {
        CaseTag::C
    }
}

/// Continued-fraction convergents of `num/den` by increasing denominator.
///
/// When the first partial quotient after the integer part is 1, the
/// convergents 0/1 and 1/1 share a denominator; only the later (closer)
/// one is kept so denominators strictly increase.
pub fn convergents(num: u64, den: u64) -> Result<Vec<Rational>> {
    if den == 0 {
        return Err(Error::ZeroModulus);
    }
    if num > den {
        return Err(Error::Invalid(format!(
            "convergents expects num <= den, got {num}/{den}"
        )));
    }
    let mut out: Vec<Rational> = Vec::new();
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    let (mut a, mut b) = (num as u128, den as u128);
    loop {
        let q = a / b;
        let h_next = q * h + h_prev;
        let k_next = q * k + k_prev;
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
        let c = Rational {
            num: h as u64,
            den: k as u64,
        };
        match out.last() {
            Some(last) if last.den == c.den => {
                out.pop();
            }
            _ => {}
        }
        out.push(c);
        let r = a - q * b;
        if r == 0 {
            break;
        }
        a = b;
        b = r;
    }
    Ok(out)
}

pub fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Euler's totient by trial-division factorization. φ(0) is taken as 0.
pub fn totient(p: u64) -> u64 {
    if p == 0 {
        return 0;
    }
    let mut n = p;
    let mut result = p;
    let mut f = 2u64;
    while f * f <= n {
        if n.is_multiple_of(f) {
            while n.is_multiple_of(f) {
                n /= f;
            }
            result -= result / f;
        }
        f += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

pub fn is_power_of_two(n: u64) -> bool {
    n != 0 && n & (n - 1) == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn direct_sum(n: u64, m: u64, p: u64, y: u64) -> Complex64 {
        (0..m)
            .map(|r| {
                let ang = -2.0 * PI * ((r * p * y) % n) as f64 / n as f64;
                Complex64::new(ang.cos(), ang.sin())
            })
            .sum()
    }

    #[test]
    fn root_power_examples() {
        assert_eq!(root_power(4, 0).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(root_power(4, 1).unwrap(), Complex64::new(0.0, -1.0));
        assert_eq!(root_power(1024, 1024).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(root_power(0, 3), Err(Error::ZeroModulus));
        let w = root_power(8, -1).unwrap();
        assert_abs_diff_eq!(w.re, (PI / 4.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(w.im, (PI / 4.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn root_power_large_exponent_reduced() {
        let a = root_power(1024, 3 + 1024 * 1_000_000_007).unwrap();
        let b = root_power(1024, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn geometric_sum_examples() {
        assert_eq!(geometric_phase_sum(1024, 7, 5, 0), Complex64::new(7.0, 0.0));
        let z = geometric_phase_sum(8, 2, 2, 2);
        assert!(z.norm() < 1e-15);
        let g = geometric_phase_sum(1024, 7, 5, 205);
        let d = direct_sum(1024, 7, 5, 205);
        assert!((g - d).norm() < 1e-10);
    }

    #[test]
    fn dirichlet_examples() {
        assert_eq!(dirichlet_ratio(8, 2, 2, 2), 0.0);
        assert_eq!(dirichlet_ratio(1024, 7, 5, 0), 49.0);
        let g = direct_sum(1024, 7, 5, 205).norm_sqr();
        assert_abs_diff_eq!(dirichlet_ratio(1024, 7, 5, 205), g, epsilon = 1e-9);
    }

    #[test]
    fn dirichlet_bounded_exhaustive() {
        for (n, m, p) in [
            (4096u64, 7u64, 5u64),
            (4096, 64, 64),
            (4096, 13, 63),
            (1024, 32, 32),
        ] {
            let m2 = (m * m) as f64;
            for y in 0..n {
                let r = dirichlet_ratio(n, m, p, y);
                assert!((0.0..=m2).contains(&r), "{n} {m} {p} {y} -> {r}");
            }
        }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_case(1024, 7, 5, 0), CaseTag::A);
        assert_eq!(classify_case(16, 4, 2, 8), CaseTag::B);
        assert_eq!(classify_case(16, 4, 2, 2), CaseTag::D);
        assert_eq!(classify_case(1024, 7, 5, 1), CaseTag::C);
    }

    #[test]
    fn classify_partitions_exhaustive() {
        for (n, m, p) in [
            (4096u64, 7u64, 5u64),
            (4096, 16, 64),
            (16, 4, 2),
            (256, 8, 16),
        ] {
            let mut counts = [0usize; 4];
            for y in 0..n {
                let py = (p * y) % n;
                let mpy = (m * p * y) % n;
                let expected = match (y == 0, py == 0, mpy == 0) {
                    (true, _, _) => CaseTag::A,
                    (false, true, _) => CaseTag::B,
                    (false, false, false) => CaseTag::C,
                    (false, false, true) => CaseTag::D,
                };
                let got = classify_case(n, m, p, y);
                assert_eq!(got, expected);
                counts[got as usize] += 1;
            }
            assert_eq!(counts.iter().sum::<usize>(), n as usize);
            assert_eq!(counts[0], 1);
        }
    }

    #[test]
    fn convergent_examples() {
        let c = convergents(205, 1024).unwrap();
        assert!(c.contains(&Rational { num: 1, den: 5 }));
        assert_eq!(
            c.last().unwrap(),
            &Rational {
                num: 205,
                den: 1024
            }
        );
        assert_eq!(
            convergents(0, 7).unwrap(),
            vec![Rational { num: 0, den: 1 }]
        );
        assert_eq!(
            convergents(1, 2).unwrap(),
            vec![Rational { num: 0, den: 1 }, Rational { num: 1, den: 2 }]
        );
        assert_eq!(
            convergents(2, 3).unwrap(),
            vec![Rational { num: 1, den: 1 }, Rational { num: 2, den: 3 }]
        );
        assert!(convergents(1, 0).is_err());
    }

    #[test]
    fn totient_examples() {
        assert_eq!(totient(5), 4);
        assert_eq!(totient(1), 1);
        assert_eq!(totient(12), 4);
        for p in 1..200u64 {
            let brute = (1..=p).filter(|d| gcd(*d, p) == 1).count() as u64;
            assert_eq!(totient(p), brute);
        }
    }

    #[test]
    fn rational_normalizes() {
        let r = Rational::new(10, 4).unwrap();
        assert_eq!((r.num, r.den), (5, 2));
        assert!(Rational::new(1, 0).is_err());
    }

    proptest! {
        #[test]
        fn geometric_sum_matches_direct(e in 2u32..13, m in 1u64..64, p in 1u64..64, y in 0u64..4096) {
            let n = 1u64 << e;
            let y = y % n;
            let g = geometric_phase_sum(n, m, p, y);
            prop_assert!((g - direct_sum(n, m, p, y)).norm() < 1e-9);
            prop_assert!((g.norm_sqr() - dirichlet_ratio(n, m, p, y)).abs() < 1e-9);
        }

        #[test]
        fn root_power_unit_modulus(n in 1u64..100_000, e in any::<i64>()) {
            prop_assert!((root_power(n, e).unwrap().norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn convergents_end_exact_and_increase(den in 1u64..1_000_000, frac in 0.0f64..=1.0) {
            let num = ((den as f64) * frac).floor() as u64;
            let c = convergents(num, den).unwrap();
            let last = *c.last().unwrap();
            prop_assert_eq!(last, Rational::new(num, den).unwrap());
            for w in c.windows(2) {
                prop_assert!(w[0].den < w[1].den);
            }
            for r in &c {
                prop_assert_eq!(gcd(r.num, r.den), 1);
            }
        }

        #[test]
        fn mediant_stays_between(
            a in 0u64..1000, b in 1u64..1000,
            q1 in 2u64..1000, q2 in 2u64..1000,
            t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
        ) {
            // Bounds B = a/b and A = (a+b)/b; P_i/Q_i drawn strictly inside.
            let inside = |p: u64, q: u64| {
                let x = p as u128 * b as u128;
                let lo = a as u128 * q as u128;
                let hi = (a + b) as u128 * q as u128;
                lo < x && x < hi
            };
            let pick = |q: u64, t: f64| {
                let lo = (a * q) / b + 1;
                let hi = ((a + b) * q).div_ceil(b) - 1;
                lo + ((hi.saturating_sub(lo)) as f64 * t) as u64
            };
            let (p1, p2) = (pick(q1 * b, t1), pick(q2 * b, t2));
            let (q1, q2) = (q1 * b, q2 * b);
            prop_assume!(inside(p1, q1) && inside(p2, q2));
            prop_assert!(inside(p1 + p2, q1 + q2));
        }
    }
}
