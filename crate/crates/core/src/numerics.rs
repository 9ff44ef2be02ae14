//! Dense numerics shared by every model: stable special functions, binary
//! state enumeration and the seeded random-number contract.
//!
//! Matrices are [`ndarray`] arrays of `f64` in row-major order. All
//! stochastic operations take an explicit [`RngState`]; there is no global
//! generator anywhere in the crate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Clamp applied to probabilities before taking logarithms in cross-entropy.
pub const XENT_EPS: f64 = 1e-12;

/// Floor for linear-space probabilities inside inner loops.
pub const PROB_FLOOR: f64 = 1e-300;

/// Default limit on the number of binary units that may be enumerated.
pub const DEFAULT_ENUM_LIMIT: usize = 20;

/// Number of joint states evaluated per block when enumerating.
pub(crate) const STATE_CHUNK: usize = 2048;

/// A splittable, counter-based random stream.
///
/// The same `(seed, stream)` pair always yields the same sequence of draws.
/// Child streams are derived by hashing the parent stream with an index, so
/// components can be handed independent generators without sharing state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Derive the `index`-th child stream.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// `log Σ exp(v_i)`, computed with a max shift.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyReduction);
    }
    Ok(log_sum_exp_unchecked(v.iter().copied()))
}

pub(crate) fn log_sum_exp_unchecked(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let sum: f64 = v.map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator; adding terms in a fixed order gives a
/// deterministic result.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Logistic sigmoid, evaluated without overflow on either tail.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln σ(x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Bernoulli log-likelihood `Σ t ln p + (1-t) ln(1-p)` of soft targets `t`
/// under probabilities `p`, with `p` clamped to `[ε, 1-ε]`.
pub fn bernoulli_xent(target: ArrayView1<f64>, p: ArrayView1<f64>) -> Result<f64> {
    check_dim("bernoulli_xent", target.len(), p.len())?;
    Ok(bernoulli_xent_unchecked(target, p))
}

pub(crate) fn bernoulli_xent_unchecked(target: ArrayView1<f64>, p: ArrayView1<f64>) -> f64 {
    Zip::from(target).and(p).fold(0.0, |acc, &t, &p| {
        let p = p.clamp(XENT_EPS, 1.0 - XENT_EPS);
        acc + t * p.ln() + (1.0 - t) * (1.0 - p).ln()
    })
}

/// Bernoulli log-likelihood parameterised by logits `a`:
/// `Σ t a - softplus(a)`. Exact, no clamping required.
pub fn bernoulli_ll_logits(target: ArrayView1<f64>, logits: ArrayView1<f64>) -> f64 {
    Zip::from(target)
        .and(logits)
        .fold(0.0, |acc, &t, &a| acc + t * a - softplus(a))
}

/// Apply the sigmoid in place.
pub fn sigmoid_inplace<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) {
    a.mapv_inplace(sigmoid);
}

/// Matrix with i.i.d. `N(0, sigma²)` entries.
pub fn gaussian_matrix(rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> Matrix {
    if sigma <= 0.0 {
        return Matrix::zeros((rows, cols));
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    Matrix::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

/// Draw a binary sample from independent Bernoulli probabilities.
pub fn sample_bernoulli<D: ndarray::Dimension>(
    p: &ndarray::Array<f64, D>,
    rng: &mut impl Rng,
) -> ndarray::Array<f64, D> {
    p.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Binary state `s` of `n` units as a vector, unit `j` holding bit `j`.
pub fn state_vector(s: usize, n: usize) -> Vector {
    Vector::from_shape_fn(n, |j| ((s >> j) & 1) as f64)
}

/// Binary states `start..start+len` of `n` units, one per row.
pub(crate) fn state_block(start: usize, len: usize, n: usize) -> Matrix {
    Matrix::from_shape_fn((len, n), |(r, j)| (((start + r) >> j) & 1) as f64)
}

/// Iterate over all `2^n` binary states in blocks of at most [`STATE_CHUNK`].
pub(crate) fn state_blocks(n: usize) -> impl Iterator<Item = (usize, Matrix)> {
    let total = 1usize << n;
    (0..total)
        .step_by(STATE_CHUNK)
        .map(move |start| (start, state_block(start, STATE_CHUNK.min(total - start), n)))
}

pub(crate) fn check_enumerable(units: usize, limit: usize) -> Result<()> {
    if units > limit || units >= usize::BITS as usize - 1 {
        Err(Error::EnumerationTooLarge { units, limit })
    } else {
        Ok(())
    }
}

/// Row-wise `x · a_s - c_s + offset_s`, then folded into per-row
/// accumulators. Shared kernel of every exact mixture likelihood.
pub(crate) fn accumulate_mixture(
    data: ArrayView2<f64>,
    logits: ArrayView2<f64>,
    offsets: ArrayView1<f64>,
    acc: &mut [LogSumExp],
) {
    let norm: Vector = logits
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&a| softplus(a)).sum::<f64>())
        .collect();
    let scores = data.dot(&logits.t());
    for (n, row) in scores.rows().into_iter().enumerate() {
        let a = &mut acc[n];
        for ((&sc, &c), &off) in row.iter().zip(norm.iter()).zip(offsets.iter()) {
            if off != f64::NEG_INFINITY {
                a.add(sc - c + off);
            }
        }
    }
}

/// Flat view of a model's parameters, used by finite-difference checks.
pub trait FlatParams {
    fn to_flat(&self) -> Vec<f64>;
    fn set_flat(&mut self, values: &[f64]);
}

/// Append `a` in logical (row-major) order, whatever its memory layout.
pub(crate) fn push_flat<D: ndarray::Dimension>(out: &mut Vec<f64>, a: &ndarray::Array<f64, D>) {
    out.extend(a.iter());
}

pub(crate) fn take_flat<D: ndarray::Dimension>(
    dst: &mut ndarray::Array<f64, D>,
    values: &[f64],
    offset: &mut usize,
) {
    let n = dst.len();
    dst.iter_mut()
        .zip(&values[*offset..*offset + n])
        .for_each(|(d, &v)| *d = v);
    *offset += n;
}

/// `rows × cols` matrix from nested rows, checking every length.
pub(crate) fn matrix_from_rows(data: &[Vec<f64>], rows: usize, cols: usize) -> Result<Matrix> {
    check_dim_rows(data.len(), rows)?;
    let mut m = Matrix::zeros((rows, cols));
    for (mut dst, src) in m.rows_mut().into_iter().zip(data) {
        check_dim_rows(src.len(), cols)?;
        dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s);
    }
    Ok(m)
}

fn check_dim_rows(actual: usize, expected: usize) -> Result<()> {
    crate::error::check_dim("matrix rows", expected, actual)
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("pearson", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two points".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / (saa * sbb).sqrt())
}
