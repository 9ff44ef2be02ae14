//! Best latent marginal machinery: data-driven priors `q_D` over the latent
//! layer, the exact and sampled upper bounds they induce, the EM oracle that
//! finds the optimal prior for a fixed decoder, and related diagnostics.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::SoftDataset;
use crate::error::{check_dim, Error, Result};
use crate::nets::AffineSigmoidLayer;
use crate::numerics::{
    accumulate_mixture, check_enumerable, sample_bernoulli, sigmoid, state_blocks, LogSumExp,
    Matrix, RngState, Vector, PROB_FLOOR,
};
use crate::rbm::Rbm;

/// Normalisation slack accepted for tabular distributions.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// EM stopping rule: absolute log-likelihood gain in nats.
pub const DEFAULT_EM_TOL: f64 = 1e-9;
pub const DEFAULT_EM_MAX_ITER: usize = 10_000;

/// Decoder `P(x|h) = Π_i Bern(x_i; σ((W h + b)_i))`, `W` visible × hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeLayer {
    pub w: Matrix,
    pub b: Vector,
}

/// Encoder `q(h|x)`: a chain of sigmoid layers whose last output holds the
/// Bernoulli parameters of `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceModel {
    pub layers: Vec<AffineSigmoidLayer>,
}

/// `q_D(h) = (1/N) Σ_n Π_j Bern(h_j; μ_nj)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePosterior {
    /// One row of Bernoulli parameters per component.
    pub mu: Matrix,
}

/// Explicit distribution over all `2^nh` binary states, state bit `j`
/// being unit `j`. Stored as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDistribution {
    nh: usize,
    log_p: Vector,
}

/// Result of [`blm_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub q_hat: TabularDistribution,
    pub u_d: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GenerativeLayer {
    pub fn zeros(nv: usize, nh: usize) -> Self {
        Self {
            w: Matrix::zeros((nv, nh)),
            b: Vector::zeros(nv),
        }
    }

    pub fn from_parts(w: Matrix, b: Vector) -> Result<Self> {
        check_dim("generative bias", w.nrows(), b.len())?;
        Ok(Self { w, b })
    }

    /// Decoder part of an RBM: `P(x|h) = σ(Wᵀ h + b_vis)`.
    pub fn from_rbm(r: &Rbm) -> Self {
        Self {
            w: r.w.t().to_owned(),
            b: r.b_vis.clone(),
        }
    }

    pub fn nv(&self) -> usize {
        self.w.nrows()
    }

    pub fn nh(&self) -> usize {
        self.w.ncols()
    }

    /// Weights plus visible biases.
    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn cond_visible(&self, h: ArrayView1<f64>) -> Result<Vector> {
        check_dim("decoder code", self.nh(), h.len())?;
        Ok((self.w.dot(&h) + &self.b).mapv_into(sigmoid))
    }

    /// Logits `W h + b`, one row per row of `h`.
    pub fn logits_batch(&self, h: ArrayView2<f64>) -> Matrix {
        h.dot(&self.w.t()) + &self.b
    }
}

impl InferenceModel {
    /// Encoder part of an RBM: `q(h|x) = σ(W x + b_hid)`.
    pub fn from_rbm(r: &Rbm) -> Self {
        Self {
            layers: vec![AffineSigmoidLayer {
                w: r.w.clone(),
                b: r.b_hid.clone(),
            }],
        }
    }

    pub fn n_in(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in())
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out())
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Vector> {
        let mut a = x.to_owned();
        for l in &self.layers {
            a = l.forward(a.view())?;
        }
        Ok(a)
    }

    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut a = x.clone();
        for l in &self.layers {
            a = l.forward_batch(&a)?;
        }
        Ok(a)
    }
}

impl MixturePosterior {
    pub fn new(mu: Matrix) -> Result<Self> {
        if mu.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if mu.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
            return Err(Error::InvalidArgument(
                "mixture parameters must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { mu })
    }

    pub fn nh(&self) -> usize {
        self.mu.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.mu.nrows()
    }

    /// `log q_D(h)` for each row of `states`.
    pub fn log_prob_batch(&self, states: ArrayView2<f64>) -> Vector {
        let on = self.mu.mapv(|m| m.max(PROB_FLOOR).ln());
        let off = self.mu.mapv(|m| (1.0 - m).max(PROB_FLOOR).ln());
        // log Π_j on^h off^(1-h) = h·(on - off) + Σ off, per component.
        let diff = &on - &off;
        let base = off.sum_axis(Axis(1));
        let scores = states.dot(&diff.t()) + &base;
        let log_n = (self.n_components() as f64).ln();
        scores
            .rows()
            .into_iter()
            .map(|row| {
                let mut acc = LogSumExp::new();
                row.iter().for_each(|&s| acc.add(s));
                acc.value() - log_n
            })
            .collect()
    }

    pub fn tabulate(&self, limit: usize) -> Result<TabularDistribution> {
        check_enumerable(self.nh(), limit)?;
        let mut log_p = Vector::zeros(1 << self.nh());
        for (start, block) in state_blocks(self.nh()) {
            let lp = self.log_prob_batch(block.view());
            log_p
                .slice_mut(ndarray::s![start..start + lp.len()])
                .assign(&lp);
        }
        Ok(TabularDistribution {
            nh: self.nh(),
            log_p,
        })
    }
}

/// Push every data point through the encoder: `μ_n = encode(x_n)`.
pub fn mixture_from(q: &InferenceModel, data: &SoftDataset) -> Result<MixturePosterior> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim("mixture_from", q.n_in(), data.dim())?;
    MixturePosterior::new(q.encode_batch(&data.samples)?)
}

impl TabularDistribution {
    pub fn uniform(nh: usize, limit: usize) -> Result<Self> {
        check_enumerable(nh, limit)?;
        let n = 1usize << nh;
        Ok(Self {
            nh,
            log_p: Vector::from_elem(n, -(n as f64).ln()),
        })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "tabular distribution needs 2^nh entries, got {n}"
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument("negative probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self {
            nh: n.trailing_zeros() as usize,
            log_p: probs.into_iter().map(f64::ln).collect(),
        })
    }

    /// Normalises `log_w` (unnormalised log-weights) into a distribution.
    pub fn from_log_weights(log_w: Vector) -> Result<Self> {
        let n = log_w.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "tabular distribution needs 2^nh entries, got {n}"
            )));
        }
        let mut acc = LogSumExp::new();
        log_w.iter().for_each(|&l| acc.add(l));
        let z = acc.value();
        if !z.is_finite() {
            return Err(Error::NotNormalized(z.exp()));
        }
        Ok(Self {
            nh: n.trailing_zeros() as usize,
            log_p: log_w.mapv(|l| l - z),
        })
    }

    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn log_probs(&self) -> &Vector {
        &self.log_p
    }

    pub fn probs(&self) -> Vector {
        self.log_p.mapv(f64::exp)
    }

    pub fn total_mass(&self) -> f64 {
        self.log_p.iter().map(|l| l.exp()).sum()
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self
            .log_p
            .iter()
            .zip(other.log_p.iter())
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .sum::<f64>()
    }

    /// Draw states as binary rows.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Matrix {
        let p = self.probs();
        let mut cdf = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &pi in &p {
            acc += pi;
            cdf.push(acc);
        }
        let mut out = Matrix::zeros((n, self.nh));
        for mut row in out.rows_mut() {
            let u = rng.random::<f64>() * acc;
            let s = cdf.partition_point(|&c| c <= u).min(p.len() - 1);
            for j in 0..self.nh {
                row[j] = ((s >> j) & 1) as f64;
            }
        }
        out
    }

    /// States with positive mass as binary rows, with their log-probabilities.
    fn point_masses(&self) -> (Matrix, Vector) {
        let states: Vec<usize> = (0..self.log_p.len())
            .filter(|&s| self.log_p[s] > f64::NEG_INFINITY)
            .collect();
        let mut h = Matrix::zeros((states.len(), self.nh));
        for (r, &s) in states.iter().enumerate() {
            for j in 0..self.nh {
                h[[r, j]] = ((s >> j) & 1) as f64;
            }
        }
        let w = states.iter().map(|&s| self.log_p[s]).collect();
        (h, w)
    }
}

impl Serialize for TabularDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.probs().to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TabularDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        Self::from_probs(probs).map_err(serde::de::Error::custom)
    }
}

/// Mean over `eval` of `log Σ_s P(x|h_s) · exp(log_w_s)` where `h_s` runs
/// over the rows of each block yielded by `blocks`.
fn mixture_ll<I>(gen: &GenerativeLayer, eval: &SoftDataset, blocks: I) -> Result<Vector>
where
    I: Iterator<Item = (Matrix, Vector)>,
{
    check_dim("decoder visible", gen.nv(), eval.dim())?;
    let mut acc = vec![LogSumExp::new(); eval.len()];
    for (h, log_w) in blocks {
        check_dim("decoder code", gen.nh(), h.ncols())?;
        let logits = gen.logits_batch(h.view());
        accumulate_mixture(eval.samples.view(), logits.view(), log_w.view(), &mut acc);
    }
    Ok(acc.iter().map(LogSumExp::value).collect())
}

fn mean(v: &Vector) -> Result<f64> {
    v.mean().ok_or(Error::EmptyDataset)
}

/// Per-sample `log Σ_h P(x|h) Q(h)` for a tabular prior.
pub fn tabular_ll_per_sample(
    gen: &GenerativeLayer,
    q: &TabularDistribution,
    eval: &SoftDataset,
) -> Result<Vector> {
    check_dim("tabular prior", gen.nh(), q.nh())?;
    mixture_ll(
        gen,
        eval,
        state_blocks(q.nh()).map(|(start, block)| {
            let lw = q
                .log_p
                .slice(ndarray::s![start..start + block.nrows()])
                .to_owned();
            (block, lw)
        }),
    )
}

/// Empirical upper bound: mean over `eval` of `log Σ_h P(x|h) q_D(h)`,
/// with `q_D` tabulated over all hidden states.
pub fn blm_bound_exact(
    gen: &GenerativeLayer,
    q_d: &MixturePosterior,
    eval: &SoftDataset,
    limit: usize,
) -> Result<f64> {
    check_dim("mixture", gen.nh(), q_d.nh())?;
    let table = q_d.tabulate(limit)?;
    mean(&tabular_ll_per_sample(gen, &table, eval)?)
}

/// Sampled bound: `K` binary codes are drawn from `q(·|x̃)` for each `x̃` in
/// `source`, and each `x` in `eval` is scored by
/// `log (1/(N K)) Σ_{n,k} P(x|h_nk)`.
pub fn blm_bound_sampled(
    gen: &GenerativeLayer,
    q: &InferenceModel,
    source: &SoftDataset,
    eval: &SoftDataset,
    k: usize,
    rng: RngState,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("sampled bound needs K >= 1".into()));
    }
    let mix = mixture_from(q, source)?;
    check_dim("mixture", gen.nh(), mix.nh())?;
    let mut r = rng.rng();
    let mut codes = Matrix::zeros((mix.n_components() * k, mix.nh()));
    for rep in 0..k {
        let draw = sample_bernoulli(&mix.mu, &mut r);
        for (n, row) in draw.rows().into_iter().enumerate() {
            codes.row_mut(n * k + rep).assign(&row);
        }
    }
    let log_w = Vector::from_elem(codes.nrows(), -(codes.nrows() as f64).ln());
    mean(&mixture_ll(gen, eval, std::iter::once((codes, log_w)))?)
}

/// `log P(x_n|h_s)` for every data point and hidden state.
#[derive(Debug, Clone)]
pub struct LikelihoodTable {
    nh: usize,
    /// N × 2^nh.
    log_lik: Matrix,
}

impl LikelihoodTable {
    pub fn new(gen: &GenerativeLayer, data: &SoftDataset, limit: usize) -> Result<Self> {
        check_dim("decoder visible", gen.nv(), data.dim())?;
        check_enumerable(gen.nh(), limit)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let nh = gen.nh();
        let mut log_lik = Matrix::zeros((data.len(), 1 << nh));
        for (start, block) in state_blocks(nh) {
            let logits = gen.logits_batch(block.view());
            let norm: Vector = logits
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|&a| crate::numerics::softplus(a)).sum::<f64>())
                .collect();
            let scores = data.samples.dot(&logits.t()) - &norm;
            log_lik
                .slice_mut(ndarray::s![.., start..start + block.nrows()])
                .assign(&scores);
        }
        Ok(Self { nh, log_lik })
    }

    pub fn log_lik(&self) -> &Matrix {
        &self.log_lik
    }

    /// Per-sample `log Σ_h P(x|h) Q(h)`.
    pub fn ll_per_sample(&self, q: &TabularDistribution) -> Result<Vector> {
        check_dim("tabular prior", self.nh, q.nh())?;
        Ok(self
            .log_lik
            .rows()
            .into_iter()
            .map(|row| {
                let mut acc = LogSumExp::new();
                row.iter()
                    .zip(q.log_p.iter())
                    .for_each(|(&l, &p)| acc.add(l + p));
                acc.value()
            })
            .collect())
    }

    /// One data-incorporation (EM) step; returns the new prior and the
    /// log-likelihood of the data under the old one.
    pub fn step(&self, q: &TabularDistribution) -> Result<(TabularDistribution, f64)> {
        check_dim("tabular prior", self.nh, q.nh())?;
        let mass = q.total_mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(mass));
        }
        let norms = self.ll_per_sample(q)?;
        let n = self.log_lik.nrows();
        let mut acc = vec![LogSumExp::new(); self.log_lik.ncols()];
        for (row, &z) in self.log_lik.rows().into_iter().zip(norms.iter()) {
            for ((a, &l), &p) in acc.iter_mut().zip(row.iter()).zip(q.log_p.iter()) {
                a.add(l + p - z);
            }
        }
        let log_n = (n as f64).ln();
        let log_p: Vector = acc.iter().map(|a| a.value() - log_n).collect();
        // Renormalise away rounding drift.
        let next = TabularDistribution::from_log_weights(log_p)?;
        Ok((next, norms.sum() / n as f64))
    }
}

/// `Q ↦ (1/N) Σ_n P(h|x_n)` under prior `Q`, plus the data log-likelihood
/// under `Q`.
pub fn data_incorporation_step(
    gen: &GenerativeLayer,
    q: &TabularDistribution,
    data: &SoftDataset,
    limit: usize,
) -> Result<(TabularDistribution, f64)> {
    LikelihoodTable::new(gen, data, limit)?.step(q)
}

/// Iterate data incorporation from the uniform prior until one step
/// moves neither the log-likelihood nor the prior (in total variation) by
/// `tol` or more. The likelihood test alone is not enough when the
/// objective is flat along some directions of the prior.
///
/// Between steps the iterates are extrapolated along the last two steps
/// (SQUAREM); a jump is kept only if it does not lower the likelihood, so
/// the sequence stays monotone and has the same fixed points as plain
/// iteration.
pub fn blm_oracle(
    gen: &GenerativeLayer,
    data: &SoftDataset,
    tol: f64,
    max_iter: usize,
    limit: usize,
) -> Result<OracleResult> {
    let table = LikelihoodTable::new(gen, data, limit)?;
    blm_oracle_with_table(&table, tol, max_iter)
}

pub fn blm_oracle_with_table(
    table: &LikelihoodTable,
    tol: f64,
    max_iter: usize,
) -> Result<OracleResult> {
    let mut q = TabularDistribution::uniform(table.nh, usize::MAX)?;
    let (mut next, mut ll) = table.step(&q)?;
    for it in 1..=max_iter {
        let (after, next_ll) = table.step(&next)?;
        if next_ll - ll < tol && after.total_variation(&next) < tol {
            return Ok(OracleResult {
                q_hat: next,
                u_d: next_ll,
                iterations: it,
                converged: true,
            });
        }
        // Plain iteration would continue from `next`, with `after` and
        // `next_ll`; try a longer jump first.
        (q, next, ll) = match extrapolate(&q, &next, &after) {
            Some(jump) => {
                let (jump_next, jump_ll) = table.step(&jump)?;
                if jump_ll >= next_ll {
                    (jump, jump_next, jump_ll)
                } else {
                    (next, after, next_ll)
                }
            }
            None => (next, after, next_ll),
        };
    }
    Ok(OracleResult {
        q_hat: q,
        u_d: ll,
        iterations: max_iter,
        converged: false,
    })
}

/// SQUAREM point `q0 - 2αr + α²v` with `α = -|r|/|v|`, shrunk toward the
/// plain two-step point until it is a valid distribution.
fn extrapolate(
    q0: &TabularDistribution,
    q1: &TabularDistribution,
    q2: &TabularDistribution,
) -> Option<TabularDistribution> {
    let (p0, p1, p2) = (q0.probs(), q1.probs(), q2.probs());
    let r = &p1 - &p0;
    let v = &p2 - &p1 - &r;
    let (nr, nv) = (r.dot(&r).sqrt(), v.dot(&v).sqrt());
    if nv == 0.0 || !(nr / nv).is_finite() {
        return None;
    }
    let mut alpha = (-nr / nv).min(-1.0);
    for _ in 0..30 {
        let p = &p0 - &(2.0 * alpha * &r) + &(alpha * alpha * &v);
        if p.iter().all(|&x| x >= 0.0) {
            return TabularDistribution::from_log_weights(p.mapv(f64::ln)).ok();
        }
        alpha = (alpha - 1.0) / 2.0;
    }
    None
}

/// `KL(Q̂ ‖ P_top)` over the hidden layer, `P_top` being the visible marginal
/// of `top`. Infinite when `Q̂` puts mass where `P_top` has none.
pub fn kl_gap_bound(q_hat: &TabularDistribution, top: &Rbm, limit: usize) -> Result<f64> {
    check_dim("top prior", q_hat.nh(), top.nv())?;
    let log_top = top.log_visible_table(limit)?;
    Ok(kl_divergence(q_hat.log_probs(), &log_top))
}

pub(crate) fn kl_divergence(log_p: &Vector, log_q: &Vector) -> f64 {
    log_p
        .iter()
        .zip(log_q.iter())
        .filter(|(&p, _)| p > f64::NEG_INFINITY)
        .map(|(&p, &q)| {
            if q == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                p.exp() * (p - q)
            }
        })
        .sum()
}

/// Empirical bound of an RBM used as a one-layer encoder/decoder pair:
/// `q_D` built from `data` with the RBM's own conditional, scored on
/// `eval_data` with the RBM's own decoder.
pub fn layerwise_p1_ll(
    r: &Rbm,
    data: &SoftDataset,
    eval_data: &SoftDataset,
    limit: usize,
) -> Result<f64> {
    let q_d = mixture_from(&InferenceModel::from_rbm(r), data)?;
    blm_bound_exact(&GenerativeLayer::from_rbm(r), &q_d, eval_data, limit)
}

/// Per-sample `log Σ_h P(x|h) q(h|x)`: the reconstruction-only part of the
/// mixture bound, where each point is decoded from its own code only.
pub fn reconstruction_term_ll(
    gen: &GenerativeLayer,
    q: &InferenceModel,
    data: &SoftDataset,
    limit: usize,
) -> Result<Vector> {
    let mix = mixture_from(q, data)?;
    check_dim("mixture", gen.nh(), mix.nh())?;
    check_enumerable(gen.nh(), limit)?;
    let mut out = Vector::zeros(data.len());
    for (n, x) in data.samples.rows().into_iter().enumerate() {
        let single = MixturePosterior::new(mix.mu.row(n).insert_axis(Axis(0)).to_owned())?;
        let one = SoftDataset::new("x", x.insert_axis(Axis(0)).to_owned())?;
        out[n] = blm_bound_exact(gen, &single, &one, limit)?;
    }
    Ok(out)
}

/// Point-mass representation of a tabular prior: a mixture whose
/// components are the states themselves, with log-weights.
pub fn point_mass_bound(
    gen: &GenerativeLayer,
    q: &TabularDistribution,
    eval: &SoftDataset,
) -> Result<f64> {
    let (h, w) = q.point_masses();
    mean(&mixture_ll(gen, eval, std::iter::once((h, w)))?)
}
