//! Binary restricted Boltzmann machines.
//!
//! The energy of a joint state is `E(v, h) = -b·v - c·h - hᵀ W v` with `W`
//! stored hidden × visible. Soft visible vectors are evaluated directly in
//! the free energy, which is how the soft datasets are scored throughout.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use rand::Rng;

use crate::datasets::SoftDataset;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    check_enumerable, gaussian_matrix, log_sum_exp_unchecked, push_flat, sample_bernoulli, sigmoid,
    softplus, state_blocks, take_flat, FlatParams, LogSumExp, Matrix, RngState, Vector,
};

/// Weight standard deviation used when initialising RBMs for CD training.
pub const RBM_INIT_SIGMA: f64 = 0.01;

/// Largest minibatch used by contrastive divergence.
pub const CD_MAX_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RbmRepr", into = "RbmRepr")]
pub struct Rbm {
    /// Hidden × visible interaction weights.
    pub w: Matrix,
    pub b_vis: Vector,
    pub b_hid: Vector,
}

/// Gradient (or any other tangent vector) in RBM parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGrad {
    pub w: Matrix,
    pub b_vis: Vector,
    pub b_hid: Vector,
}

impl RbmGrad {
    pub fn zeros(nv: usize, nh: usize) -> Self {
        Self {
            w: Matrix::zeros((nh, nv)),
            b_vis: Vector::zeros(nv),
            b_hid: Vector::zeros(nh),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w.len() + self.b_vis.len() + self.b_hid.len());
        push_flat(&mut v, &self.w);
        push_flat(&mut v, &self.b_vis);
        push_flat(&mut v, &self.b_hid);
        v
    }
}

/// Log-partition function estimate from annealed importance sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisEstimate {
    pub log_z: f64,
    pub std_err: f64,
    pub n_chains: usize,
    pub n_temps: usize,
}

/// Contrastive-divergence settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdConfig {
    pub k: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Defaults to `min(N, 100)` when `None`.
    pub batch_size: Option<usize>,
}

impl Rbm {
    pub fn zeros(nv: usize, nh: usize) -> Self {
        Self {
            w: Matrix::zeros((nh, nv)),
            b_vis: Vector::zeros(nv),
            b_hid: Vector::zeros(nh),
        }
    }

    /// Gaussian weights with standard deviation `sigma`, zero biases.
    pub fn random(nv: usize, nh: usize, sigma: f64, rng: &mut impl Rng) -> Self {
        Self {
            w: gaussian_matrix(nh, nv, sigma, rng),
            b_vis: Vector::zeros(nv),
            b_hid: Vector::zeros(nh),
        }
    }

    pub fn from_parts(w: Matrix, b_vis: Vector, b_hid: Vector) -> Result<Self> {
        check_dim("rbm visible bias", w.ncols(), b_vis.len())?;
        check_dim("rbm hidden bias", w.nrows(), b_hid.len())?;
        Ok(Self { w, b_vis, b_hid })
    }

    pub fn nv(&self) -> usize {
        self.w.ncols()
    }

    pub fn nh(&self) -> usize {
        self.w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b_vis.len() + self.b_hid.len()
    }

    /// `P(h_j = 1 | v) = σ(W v + c)`.
    pub fn cond_hidden(&self, v: ArrayView1<f64>) -> Result<Vector> {
        check_dim("cond_hidden", self.nv(), v.len())?;
        Ok((self.w.dot(&v) + &self.b_hid).mapv_into(sigmoid))
    }

    /// `P(v_i = 1 | h) = σ(Wᵀ h + b)`.
    pub fn cond_visible(&self, h: ArrayView1<f64>) -> Result<Vector> {
        check_dim("cond_visible", self.nh(), h.len())?;
        Ok((self.w.t().dot(&h) + &self.b_vis).mapv_into(sigmoid))
    }

    /// Row-wise [`Rbm::cond_hidden`] for a batch of visible vectors.
    pub fn cond_hidden_batch(&self, v: ArrayView2<f64>) -> Result<Matrix> {
        check_dim("cond_hidden_batch", self.nv(), v.ncols())?;
        Ok((v.dot(&self.w.t()) + &self.b_hid).mapv_into(sigmoid))
    }

    pub fn cond_visible_batch(&self, h: ArrayView2<f64>) -> Result<Matrix> {
        check_dim("cond_visible_batch", self.nh(), h.ncols())?;
        Ok((h.dot(&self.w) + &self.b_vis).mapv_into(sigmoid))
    }

    /// `F(v) = -b·v - Σ_j softplus(c_j + (W v)_j)`.
    pub fn free_energy(&self, v: ArrayView1<f64>) -> f64 {
        let act = self.w.dot(&v) + &self.b_hid;
        -self.b_vis.dot(&v) - act.iter().map(|&a| softplus(a)).sum::<f64>()
    }

    pub fn free_energies(&self, v: ArrayView2<f64>) -> Vector {
        let act = v.dot(&self.w.t()) + &self.b_hid;
        let vis = v.dot(&self.b_vis);
        act.rows()
            .into_iter()
            .zip(vis.iter())
            .map(|(row, &bv)| -bv - row.iter().map(|&a| softplus(a)).sum::<f64>())
            .collect()
    }

    /// Unnormalised log-marginal `log Σ_v e^{-E(v,h)}` of hidden states,
    /// one per row.
    fn hidden_log_marginals(&self, h: ArrayView2<f64>) -> Vector {
        let act = h.dot(&self.w) + &self.b_vis;
        let hid = h.dot(&self.b_hid);
        act.rows()
            .into_iter()
            .zip(hid.iter())
            .map(|(row, &ch)| ch + row.iter().map(|&a| softplus(a)).sum::<f64>())
            .collect()
    }

    /// Exact `log Z`, enumerating whichever layer is smaller.
    pub fn log_partition_exact(&self, limit: usize) -> Result<f64> {
        let (nv, nh) = (self.nv(), self.nh());
        if nh <= nv {
            check_enumerable(nh, limit)?;
            let mut acc = LogSumExp::new();
            for (_, block) in state_blocks(nh) {
                self.hidden_log_marginals(block.view())
                    .iter()
                    .for_each(|&x| acc.add(x));
            }
            Ok(acc.value())
        } else {
            check_enumerable(nv, limit)?;
            let mut acc = LogSumExp::new();
            for (_, block) in state_blocks(nv) {
                self.free_energies(block.view())
                    .iter()
                    .for_each(|&f| acc.add(-f));
            }
            Ok(acc.value())
        }
    }

    /// `log P(v)` for every binary visible state, indexed by bit pattern.
    pub fn log_visible_table(&self, limit: usize) -> Result<Vector> {
        check_enumerable(self.nv(), limit)?;
        let log_z = self.log_partition_exact(limit)?;
        let mut table = Vector::zeros(1 << self.nv());
        for (start, block) in state_blocks(self.nv()) {
            let f = self.free_energies(block.view());
            for (i, &fi) in f.iter().enumerate() {
                table[start + i] = -fi - log_z;
            }
        }
        Ok(table)
    }

    /// Per-sample `-F(v) - log Z`.
    pub fn exact_ll_per_sample(&self, ds: &SoftDataset, limit: usize) -> Result<Vector> {
        check_dim("exact_ll", self.nv(), ds.dim())?;
        let log_z = self.log_partition_exact(limit)?;
        Ok(self.free_energies(ds.samples.view()).mapv(|f| -f - log_z))
    }

    /// Mean log-likelihood per sample, in nats.
    pub fn exact_ll(&self, ds: &SoftDataset, limit: usize) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(self.exact_ll_per_sample(ds, limit)?.mean().unwrap())
    }

    /// Sufficient statistics `(⟨σ(c + W v) vᵀ⟩, ⟨v⟩, ⟨σ(c + W v)⟩)` of
    /// weighted visible vectors.
    fn data_statistics(&self, v: ArrayView2<f64>, weights: ArrayView1<f64>) -> RbmGrad {
        let ph = (v.dot(&self.w.t()) + &self.b_hid).mapv_into(sigmoid);
        let ph_w = &ph * &weights.insert_axis(Axis(1));
        RbmGrad {
            w: ph_w.t().dot(&v),
            b_vis: v.t().dot(&weights),
            b_hid: ph_w.sum_axis(Axis(0)),
        }
    }

    /// Exact expectation of the sufficient statistics under the model.
    pub fn model_statistics(&self, limit: usize) -> Result<RbmGrad> {
        let (nv, nh) = (self.nv(), self.nh());
        let log_z = self.log_partition_exact(limit)?;
        let mut stats = RbmGrad::zeros(nv, nh);
        if nv <= nh {
            for (_, block) in state_blocks(nv) {
                let p = self
                    .free_energies(block.view())
                    .mapv(|f| (-f - log_z).exp());
                let s = self.data_statistics(block.view(), p.view());
                stats.w += &s.w;
                stats.b_vis += &s.b_vis;
                stats.b_hid += &s.b_hid;
            }
        } else {
            check_enumerable(nh, limit)?;
            for (_, block) in state_blocks(nh) {
                let p = self
                    .hidden_log_marginals(block.view())
                    .mapv(|m| (m - log_z).exp());
                let pv = (block.dot(&self.w) + &self.b_vis).mapv_into(sigmoid);
                let hp = &block * &p.view().insert_axis(Axis(1));
                stats.w += &hp.t().dot(&pv);
                stats.b_vis += &pv.t().dot(&p);
                stats.b_hid += &hp.sum_axis(Axis(0));
            }
        }
        Ok(stats)
    }

    /// Gradient of `Σ_s weight_s · log P(v_s)`.
    pub fn weighted_ll_gradient(
        &self,
        v: ArrayView2<f64>,
        weights: ArrayView1<f64>,
        limit: usize,
    ) -> Result<RbmGrad> {
        check_dim("weighted_ll_gradient", self.nv(), v.ncols())?;
        check_dim("weighted_ll_gradient weights", v.nrows(), weights.len())?;
        let total: f64 = weights.sum();
        let mut g = self.data_statistics(v, weights);
        let m = self.model_statistics(limit)?;
        g.w.scaled_add(-total, &m.w);
        g.b_vis.scaled_add(-total, &m.b_vis);
        g.b_hid.scaled_add(-total, &m.b_hid);
        Ok(g)
    }

    /// Exact gradient of [`Rbm::exact_ll`]: data minus model statistics.
    pub fn exact_ll_gradient(&self, ds: &SoftDataset, limit: usize) -> Result<RbmGrad> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let w = Vector::from_elem(ds.len(), 1.0 / ds.len() as f64);
        self.weighted_ll_gradient(ds.samples.view(), w.view(), limit)
    }

    /// Train in place with CD-k: soft data in the positive phase, sampled
    /// binary hiddens and mean-field visibles in the negative phase, plain
    /// minibatch SGD.
    pub fn cd_train(&mut self, train: &Matrix, cfg: &CdConfig, rng: RngState) -> Result<()> {
        check_dim("cd_train", self.nv(), train.ncols())?;
        if cfg.k == 0 {
            return Err(Error::InvalidArgument("CD needs k >= 1".into()));
        }
        if !(cfg.lr >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
        }
        let n = train.nrows();
        if n == 0 || cfg.lr == 0.0 {
            return Ok(());
        }
        let batch = cfg.batch_size.unwrap_or(CD_MAX_BATCH).clamp(1, n);
        let mut r = rng.rng();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut r);
            for chunk in order.chunks(batch) {
                let v0 = train.select(Axis(0), chunk);
                let ph0 = self.cond_hidden_batch(v0.view())?;
                let mut ph = ph0.clone();
                let mut v = v0.clone();
                for _ in 0..cfg.k {
                    let h = sample_bernoulli(&ph, &mut r);
                    v = self.cond_visible_batch(h.view())?;
                    ph = self.cond_hidden_batch(v.view())?;
                }
                let scale = cfg.lr / chunk.len() as f64;
                self.w.scaled_add(scale, &ph0.t().dot(&v0));
                self.w.scaled_add(-scale, &ph.t().dot(&v));
                self.b_vis.scaled_add(scale, &(&v0 - &v).sum_axis(Axis(0)));
                self.b_hid
                    .scaled_add(scale, &(&ph0 - &ph).sum_axis(Axis(0)));
            }
        }
        Ok(())
    }

    /// Block Gibbs sampling from a uniform random start; returns the binary
    /// visible state of each chain after `n_steps` sweeps.
    pub fn gibbs_sample(&self, n_steps: usize, n_samples: usize, rng: RngState) -> Result<Matrix> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument(
                "gibbs_sample needs n_steps >= 1".into(),
            ));
        }
        let mut r = rng.rng();
        let mut v = sample_bernoulli(&Matrix::from_elem((n_samples, self.nv()), 0.5), &mut r);
        for _ in 0..n_steps {
            let h = sample_bernoulli(&self.cond_hidden_batch(v.view())?, &mut r);
            v = sample_bernoulli(&self.cond_visible_batch(h.view())?, &mut r);
        }
        Ok(v)
    }

    /// AIS estimate of `log Z` along the geometric path from a base-rate RBM
    /// (zero weights, visible biases `base_vis_bias`, zero hidden biases)
    /// with inverse temperatures evenly spaced in `[0, 1]`.
    pub fn ais_log_partition(
        &self,
        base_vis_bias: &Vector,
        n_temps: usize,
        n_chains: usize,
        rng: RngState,
    ) -> Result<AisEstimate> {
        check_dim("ais base bias", self.nv(), base_vis_bias.len())?;
        if n_temps < 2 || n_chains == 0 {
            return Err(Error::InvalidArgument(
                "AIS needs at least two temperatures and one chain".into(),
            ));
        }
        let mut r = rng.rng();
        let nh = self.nh();
        let log_unnorm = |v: &Matrix, beta: f64| -> Vector {
            let act = (v.dot(&self.w.t()) + &self.b_hid) * beta;
            let lin = v.dot(&(base_vis_bias * (1.0 - beta) + &self.b_vis * beta));
            act.rows()
                .into_iter()
                .zip(lin.iter())
                .map(|(row, &l)| l + row.iter().map(|&a| softplus(a)).sum::<f64>())
                .collect()
        };
        let base_p = base_vis_bias.mapv(sigmoid);
        let mut v = sample_bernoulli(
            &base_p.broadcast((n_chains, self.nv())).unwrap().to_owned(),
            &mut r,
        );
        let mut log_w = Vector::zeros(n_chains);
        let betas: Vec<f64> = (0..n_temps)
            .map(|k| k as f64 / (n_temps - 1) as f64)
            .collect();
        for k in 1..n_temps {
            let (prev, beta) = (betas[k - 1], betas[k]);
            log_w += &(log_unnorm(&v, beta) - log_unnorm(&v, prev));
            if k + 1 < n_temps {
                let ph = (v.dot(&self.w.t()) + &self.b_hid).mapv_into(|a| sigmoid(beta * a));
                let h = sample_bernoulli(&ph, &mut r);
                let act = (h.dot(&self.w) + &self.b_vis) * beta + &(base_vis_bias * (1.0 - beta));
                v = sample_bernoulli(&act.mapv_into(sigmoid), &mut r);
            }
        }
        let log_z_base = base_vis_bias.iter().map(|&b| softplus(b)).sum::<f64>()
            + nh as f64 * std::f64::consts::LN_2;
        let log_mean = |w: &mut dyn Iterator<Item = f64>| -> f64 {
            let v: Vec<f64> = w.collect();
            log_sum_exp_unchecked(v.iter().copied()) - (v.len() as f64).ln()
        };
        let estimate = log_z_base + log_mean(&mut log_w.iter().copied());

        const BOOTSTRAP: usize = 200;
        let boots: Vec<f64> = (0..BOOTSTRAP)
            .map(|_| log_mean(&mut (0..n_chains).map(|_| log_w[r.random_range(0..n_chains)])))
            .collect();
        let mean = boots.iter().sum::<f64>() / BOOTSTRAP as f64;
        let var = boots.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (BOOTSTRAP - 1) as f64;
        Ok(AisEstimate {
            log_z: estimate,
            std_err: var.sqrt(),
            n_chains,
            n_temps,
        })
    }
}

/// Train a fresh copy of `r` with CD-k; `r` itself is left unchanged.
pub fn cd_k_train(
    r: &Rbm,
    train: &SoftDataset,
    k: usize,
    lr: f64,
    epochs: usize,
    rng: RngState,
) -> Result<Rbm> {
    let mut out = r.clone();
    out.cd_train(
        &train.samples,
        &CdConfig {
            k,
            lr,
            epochs,
            batch_size: None,
        },
        rng,
    )?;
    Ok(out)
}

/// Visible biases of the base-rate model: logits of the smoothed pixel means.
pub fn base_rate_bias(data: &SoftDataset) -> Result<Vector> {
    let p = crate::datasets::fit_independent_bernoulli(data)?;
    Ok(p.mapv(|p| (p / (1.0 - p)).ln()))
}

impl FlatParams for Rbm {
    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        push_flat(&mut v, &self.w);
        push_flat(&mut v, &self.b_vis);
        push_flat(&mut v, &self.b_hid);
        v
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut o = 0;
        take_flat(&mut self.w, values, &mut o);
        take_flat(&mut self.b_vis, values, &mut o);
        take_flat(&mut self.b_hid, values, &mut o);
    }
}

/// On-disk form: dimensions plus row-major nested weights.
#[derive(Serialize, Deserialize)]
struct RbmRepr {
    nv: usize,
    nh: usize,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b_vis: Vec<f64>,
    b_hid: Vec<f64>,
}

impl From<Rbm> for RbmRepr {
    fn from(r: Rbm) -> Self {
        Self {
            nv: r.nv(),
            nh: r.nh(),
            w: r.w.rows().into_iter().map(|row| row.to_vec()).collect(),
            b_vis: r.b_vis.to_vec(),
            b_hid: r.b_hid.to_vec(),
        }
    }
}

impl TryFrom<RbmRepr> for Rbm {
    type Error = Error;

    fn try_from(r: RbmRepr) -> Result<Self> {
        let w = crate::numerics::matrix_from_rows(&r.w, r.nh, r.nv)?;
        check_dim("rbm visible bias", r.nv, r.b_vis.len())?;
        check_dim("rbm hidden bias", r.nh, r.b_hid.len())?;
        Rbm::from_parts(w, r.b_vis.into(), r.b_hid.into())
    }
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            k: 1,
            lr: 0.01,
            epochs: 1,
            batch_size: None,
        }
    }
}
