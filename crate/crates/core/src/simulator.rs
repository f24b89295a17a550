//! Explicit statevector dynamics over `N = 2^n` labels.

use std::cell::RefCell;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::distributions::WeightedIndex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::analytic::AlgKind;
use crate::error::{Error, Result};
use crate::numerics::{is_power_of_two, unit_root};
use crate::oracle::MarkedSet;

const NORM_TOL: f64 = 1e-10;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// Unnormalized forward DFT, `X[y] = Σ_z ω^{zy} x[z]`.
fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        forward_fft(buf.len()).process(buf);
    }
}

/// O(N²) reference transform `out[y] = (1/√N) Σ_z ω^{zy} in[z]`.
pub fn dft_direct(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len() as u64;
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|y| {
            input
                .iter()
                .enumerate()
                .map(|(z, a)| unit_root(n, (z as u64 * y) % n) * a)
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if !is_power_of_two(amps.len() as u64) {
            return Err(Error::NotPowerOfTwo(amps.len() as u64));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(StateVector { amps })
    }

    pub fn uniform(n: u64) -> Result<Self> {
        if !is_power_of_two(n) {
            return Err(Error::NotPowerOfTwo(n));
        }
        let a = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        Ok(StateVector {
            amps: vec![a; n as usize],
        })
    }

    pub fn basis(n: u64, z: u64) -> Result<Self> {
        if !is_power_of_two(n) {
            return Err(Error::NotPowerOfTwo(n));
        }
        if z >= n {
            return Err(Error::LabelOutOfRange { label: z, n });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); n as usize];
        amps[z as usize] = Complex64::new(1.0, 0.0);
        Ok(StateVector { amps })
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_dim(&self, n: u64) -> Result<()> {
        if n as usize != self.amps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amps.len(),
                got: n as usize,
            });
        }
        Ok(())
    }

    /// Negates the amplitude of every marked label.
    pub fn phase_flip<S: MarkedSet + ?Sized>(&mut self, marked: &S) -> Result<()> {
        self.check_dim(marked.label_count())?;
        for x in marked.marked_labels() {
            let a = &mut self.amps[x as usize];
            *a = -*a;
        }
        Ok(())
    }

    /// Multiplies amplitude `z` by `(−1)^{bits[z]}`.
    pub fn sign_encode(&mut self, bits: &[bool]) -> Result<()> {
        self.check_dim(bits.len() as u64)?;
        for (a, &b) in self.amps.iter_mut().zip(bits) {
            if b {
                *a = -*a;
            }
        }
        Ok(())
    }

    /// Inversion about the mean, `a -> 2·mean − a`.
    pub fn diffuse(&mut self) {
        let mean = self.amps.iter().sum::<Complex64>() / self.amps.len() as f64;
        for a in &mut self.amps {
            *a = 2.0 * mean - *a;
        }
    }

    /// `out[y] = (1/√N) Σ_z ω^{zy} in[z]` with `ω = exp(−2πi/N)`.
    pub fn qft(&mut self) {
        fft_in_place(&mut self.amps);
        let scale = 1.0 / (self.amps.len() as f64).sqrt();
        for a in &mut self.amps {
            *a *= scale;
        }
    }

    /// Unnormalized Haar butterfly on the leading `len` entries: pairwise
    /// sums to the first half, pairwise differences to the second.
    fn haar_butterfly(&mut self, len: usize) {
        let half = len / 2;
        let head: Vec<Complex64> = self.amps[..len].to_vec();
        for i in 0..half {
            let (x0, x1) = (head[2 * i], head[2 * i + 1]);
            self.amps[i] = x0 + x1;
            self.amps[half + i] = x0 - x1;
        }
    }

    /// Applies `W_1` only, or the full product `W_n ⋯ W_1` when `full`.
    ///
    /// The `1/√2` factors are collected per output entry and applied once,
    /// so entries touched by an even number of steps are scaled by an exact
    /// power of two.
    pub fn haar(&mut self, full: bool) {
        let n = self.amps.len();
        if n < 2 {
            return;
        }
        let mut len = n;
        let mut steps = 0u32;
        while len >= 2 {
            self.haar_butterfly(len);
            steps += 1;
            if !full {
                break;
            }
            len /= 2;
        }
        let scale = |levels: u32| {
            let s = 0.5f64.powi((levels / 2) as i32);
            if levels % 2 == 1 {
                s * FRAC_1_SQRT_2
            } else {
                s
            }
        };
        // Entry i was last written by step j when it lies in [len_j/2, len_j)
        // with len_j = n / 2^(j-1); entries below the final half-length saw
        // every step.
        let mut hi = n;
        for j in 1..=steps {
            let lo = if j == steps { 0 } else { hi / 2 };
            let f = scale(j);
            for a in &mut self.amps[lo..hi] {
                *a *= f;
            }
            hi /= 2;
        }
    }

    pub fn apply_unitary(&mut self, u: &UnitaryMatrix) -> Result<()> {
        self.check_dim(u.n)?;
        self.amps = u.apply(&self.amps);
        Ok(())
    }

    /// Draws `y` with probability `|amps[y]|²`.
    pub fn measure<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = self.norm_sqr();
        let r = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (y, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                last_nonzero = y;
            }
            acc += p;
            if r < acc {
                return y as u64;
            }
        }
        last_nonzero as u64
    }

    /// Reusable sampler for many draws from the same distribution.
    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.probabilities()).expect("state has positive norm")
    }
}

/// Grover rotation data for `T` marked labels out of `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroverParams {
    pub n: u64,
    pub t: u64,
    pub theta: f64,
    pub k: u64,
    pub a_k: f64,
    pub b_k: f64,
}

impl GroverParams {
    pub fn new(n: u64, t: u64) -> Result<Self> {
        if t == 0 || t >= n {
            return Err(Error::DegenerateMarkedCount { t, n });
        }
        let theta = (t as f64 / n as f64).sqrt().asin();
        // The tiny slack keeps θ = π/4 (T = N/2) at k = 1.
        let k = (PI / (4.0 * theta) + 1e-9).floor() as u64;
        let phase = (2 * k + 1) as f64 * theta;
        Ok(GroverParams {
            n,
            t,
            theta,
            k,
            a_k: phase.sin() / (t as f64).sqrt(),
            b_k: phase.cos() / ((n - t) as f64).sqrt(),
        })
    }

    /// `sin²((2k+1)θ)`, the probability mass on the marked labels.
    pub fn marked_probability(&self) -> f64 {
        ((2 * self.k + 1) as f64 * self.theta).sin().powi(2)
    }

    /// `tanθ · sin2kθ`.
    pub fn amplification_factor(&self) -> f64 {
        self.theta.tan() * (2.0 * self.k as f64 * self.theta).sin()
    }

    /// `ceil(π/(4θ)) + 1`, transform applications per Amplified-QFT run.
    pub fn work_factor(&self) -> u64 {
        (PI / (4.0 * self.theta)).ceil() as u64 + 1
    }
}

/// Dense `N × N` unitary stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    n: u64,
    entries: Vec<Complex64>,
}

impl UnitaryMatrix {
    pub fn new(n: u64, entries: Vec<Complex64>) -> Result<Self> {
        if !is_power_of_two(n) {
            return Err(Error::NotPowerOfTwo(n));
        }
        let len = (n * n) as usize;
        if entries.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: entries.len(),
            });
        }
        let u = UnitaryMatrix { n, entries };
        let dev = u.unitarity_deviation();
        if dev > 1e-8 {
            return Err(Error::NotUnitary(dev));
        }
        Ok(u)
    }

    /// Builds `U[y][z] = α(y, z)/√N`.
    pub fn from_alpha<F: Fn(u64, u64) -> Complex64>(n: u64, alpha: F) -> Result<Self> {
        let scale = 1.0 / (n as f64).sqrt();
        let entries = (0..n)
            .flat_map(|y| (0..n).map(move |z| (y, z)))
            .map(|(y, z)| alpha(y, z) * scale)
            .collect();
        Self::new(n, entries)
    }

    pub fn qft(n: u64) -> Result<Self> {
        Self::from_alpha(n, |y, z| unit_root(n, (y * z) % n))
    }

    /// A random unitary whose row 0 is the uniform vector, so every other
    /// row sums to zero. Built from the QFT matrix by random phases and
    /// Givens rotations among rows `1..N`.
    pub fn random_fixing_uniform<R: Rng + ?Sized>(n: u64, rng: &mut R) -> Result<Self> {
        let mut u = Self::qft(n)?;
        let dim = n as usize;
        if dim < 3 {
            return Ok(u);
        }
        for _ in 0..4 * dim {
            let i = rng.gen_range(1..dim);
            let mut j = rng.gen_range(1..dim - 1);
            if j >= i {
                j += 1;
            }
            let angle = rng.gen_range(0.0..PI / 2.0);
            let (phi, chi) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
            let c = Complex64::from_polar(angle.cos(), phi);
            let s = Complex64::from_polar(angle.sin(), chi);
            for z in 0..dim {
                let ri = u.entries[i * dim + z];
                let rj = u.entries[j * dim + z];
                u.entries[i * dim + z] = c * ri + s * rj;
                u.entries[j * dim + z] = -s.conj() * ri + c.conj() * rj;
            }
        }
        let dev = u.unitarity_deviation();
        if dev > 1e-8 {
            return Err(Error::NotUnitary(dev));
        }
        Ok(u)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn entry(&self, y: u64, z: u64) -> Complex64 {
        self.entries[(y * self.n + z) as usize]
    }

    /// `α(y, z) = √N · U[y][z]`.
    pub fn alpha(&self, y: u64, z: u64) -> Complex64 {
        self.entry(y, z) * (self.n as f64).sqrt()
    }

    fn row(&self, y: usize) -> &[Complex64] {
        let d = self.n as usize;
        &self.entries[y * d..(y + 1) * d]
    }

    /// max |(U U†) − I| entry.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.n as usize;
        let mut worst: f64 = 0.0;
        for a in 0..d {
            let ra = self.row(a);
            for b in a..d {
                let rb = self.row(b);
                let dot: Complex64 = ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).norm());
            }
        }
        worst
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n as usize)
            .map(|y| self.row(y).iter().zip(v).map(|(u, x)| u * x).sum())
            .collect()
    }
}

pub fn uniform_state(n: u64) -> Result<StateVector> {
    StateVector::uniform(n)
}

pub fn oracle_phase_flip<S: MarkedSet + ?Sized>(
    mut state: StateVector,
    marked: &S,
) -> Result<StateVector> {
    state.phase_flip(marked)?;
    Ok(state)
}

pub fn grover_diffusion(mut state: StateVector) -> StateVector {
    state.diffuse();
    state
}

/// Grover's algorithm without the final measurement: `k` rounds of
/// phase flip followed by inversion about the mean.
pub fn grover_no_measure<S: MarkedSet + ?Sized>(
    marked: &S,
    params: &GroverParams,
) -> Result<StateVector> {
    let n = marked.label_count();
    let t = marked.marked_count();
    if params.n != n || params.t != t {
        return Err(Error::Invalid(format!(
            "Grover parameters for (N={}, T={}) used on (N={n}, T={t})",
            params.n, params.t
        )));
    }
    let labels = marked.marked_labels();
    let mut state = StateVector::uniform(n)?;
    for _ in 0..params.k {
        for &x in &labels {
            let a = &mut state.amps[x as usize];
            *a = -*a;
        }
        state.diffuse();
    }
    Ok(state)
}

/// Convenience wrapper deriving `GroverParams` from the marked set.
pub fn grover<S: MarkedSet + ?Sized>(marked: &S) -> Result<(StateVector, GroverParams)> {
    let params = GroverParams::new(marked.label_count(), marked.marked_count())?;
    Ok((grover_no_measure(marked, &params)?, params))
}

pub fn apply_qft(mut state: StateVector) -> StateVector {
    state.qft();
    state
}

pub fn apply_haar(mut state: StateVector, full: bool) -> StateVector {
    state.haar(full);
    state
}

pub fn apply_general_unitary(mut state: StateVector, u: &UnitaryMatrix) -> Result<StateVector> {
    state.apply_unitary(u)?;
    Ok(state)
}

pub fn measure<R: Rng + ?Sized>(state: &StateVector, rng: &mut R) -> u64 {
    state.measure(rng)
}

/// State fed to the QFT by the single-query algorithm:
/// `(1/√N)(Σ_z |z> − 2 Σ_{z∈C} |z>)`.
pub fn qft_input_state<S: MarkedSet + ?Sized>(marked: &S) -> Result<StateVector> {
    let mut state = StateVector::uniform(marked.label_count())?;
    state.phase_flip(marked)?;
    Ok(state)
}

/// Simulated output distribution of one run of `alg` on the marked set.
pub fn simulated_distribution<S: MarkedSet + ?Sized>(alg: AlgKind, marked: &S) -> Result<Vec<f64>> {
    Ok(match alg {
        AlgKind::AmplifiedQft => apply_qft(grover(marked)?.0).probabilities(),
        AlgKind::Qft => apply_qft(qft_input_state(marked)?).probabilities(),
        AlgKind::Qhs => qhs_distribution(marked),
    })
}

/// Output distribution of the two-register algorithm,
/// `Pr(y) = (|Σ_{x∈C} ω^{xy}|² + |Σ_{x∉C} ω^{xy}|²)/N²`.
pub fn qhs_distribution<S: MarkedSet + ?Sized>(marked: &S) -> Vec<f64> {
    let n = marked.label_count() as usize;
    let mut ind = vec![Complex64::new(0.0, 0.0); n];
    for x in marked.marked_labels() {
        ind[x as usize] = Complex64::new(1.0, 0.0);
    }
    fft_in_place(&mut ind);
    let n2 = (n as f64) * (n as f64);
    ind.iter()
        .enumerate()
        .map(|(y, on)| {
            let all = if y == 0 { n as f64 } else { 0.0 };
            let off = Complex64::new(all, 0.0) - on;
            (on.norm_sqr() + off.norm_sqr()) / n2
        })
        .collect()
}

/// Reference for [`qhs_distribution`]: builds the joint state
/// `(1/√N) Σ_x |x>|f(x)>`, applies an O(N²) DFT to the first register of
/// each second-register slice and marginalizes.
pub fn qhs_distribution_joint<S: MarkedSet + ?Sized>(marked: &S) -> Vec<f64> {
    let n = marked.label_count();
    let a = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut slices = [vec![zero; n as usize], vec![zero; n as usize]];
    for x in 0..n {
        slices[marked.is_marked(x) as usize][x as usize] = a;
    }
    let f0 = dft_direct(&slices[0]);
    let f1 = dft_direct(&slices[1]);
    f0.iter()
        .zip(&f1)
        .map(|(u, v)| u.norm_sqr() + v.norm_sqr())
        .collect()
}
