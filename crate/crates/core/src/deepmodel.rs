//! Two-layer generative models: a decoder `P(x|h)` under a prior `P(h)`
//! given by a top RBM, with exact likelihood, sampling and gradients for
//! small latent layers.

use ndarray::{s, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blm::{GenerativeLayer, InferenceModel, TabularDistribution};
use crate::datasets::SoftDataset;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    accumulate_mixture, check_enumerable, sample_bernoulli, sigmoid, state_blocks, LogSumExp,
    Matrix, RngState, Vector,
};
use crate::rbm::{Rbm, RbmGrad};

/// Prior over the latent layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TopPrior {
    Rbm(Rbm),
    /// Explicit table over all latent states; used to realise an optimal
    /// prior exactly on small instances.
    Tabular { probs: TabularDistribution },
}

impl TopPrior {
    pub fn nh(&self) -> usize {
        match self {
            Self::Rbm(r) => r.nv(),
            Self::Tabular { probs } => probs.nh(),
        }
    }

    /// `log P(h)` over all `2^nh` latent states.
    pub fn log_table(&self, limit: usize) -> Result<Vector> {
        match self {
            Self::Rbm(r) => r.log_visible_table(limit),
            Self::Tabular { probs } => Ok(probs.log_probs().clone()),
        }
    }

    /// Free parameters: RBM weights and both biases, or `2^nh - 1` for a table.
    pub fn param_count(&self) -> usize {
        match self {
            Self::Rbm(r) => r.param_count(),
            Self::Tabular { probs } => (1usize << probs.nh()) - 1,
        }
    }

    fn sample(&self, gibbs_steps: usize, n: usize, rng: RngState) -> Result<Matrix> {
        match self {
            Self::Rbm(r) => r.gibbs_sample(gibbs_steps, n, rng),
            Self::Tabular { probs } => Ok(probs.sample(n, &mut rng.rng())),
        }
    }
}

/// Decoder, the encoder it was trained with (kept for evaluation only), and
/// the prior over the latent layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepGenModel {
    pub bottom: GenerativeLayer,
    pub bottom_inference: InferenceModel,
    pub top: TopPrior,
}

/// How latent targets for the upper layer are read off the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// Soft codes `μ_n = q(·|x_n)`.
    #[default]
    Mean,
    /// `per_point` binary draws from `q(·|x_n)` per data point.
    Sample { per_point: usize },
}

/// Gradient of the mean exact log-likelihood of a [`DeepGenModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeepGrad {
    pub bottom: GenerativeLayer,
    pub top: RbmGrad,
}

impl DeepGenModel {
    pub fn new(bottom: GenerativeLayer, bottom_inference: InferenceModel, top: TopPrior) -> Result<Self> {
        check_dim("top prior", bottom.nh(), top.nh())?;
        check_dim("bottom inference output", bottom.nh(), bottom_inference.n_out())?;
        check_dim("bottom inference input", bottom.nv(), bottom_inference.n_in())?;
        Ok(Self {
            bottom,
            bottom_inference,
            top,
        })
    }

    /// Generative parameters only: decoder weights and visible biases plus
    /// the top prior. The encoder is not part of the model.
    pub fn param_count(&self) -> usize {
        self.bottom.param_count() + self.top.param_count()
    }
}

/// Latent dataset used to train the upper layer.
pub fn extract_target(
    q: &InferenceModel,
    data: &SoftDataset,
    mode: TargetMode,
    rng: RngState,
) -> Result<SoftDataset> {
    check_dim("extract_target", q.n_in(), data.dim())?;
    let mu = q.encode_batch(&data.samples)?;
    let name = format!("{}-target", data.name);
    match mode {
        TargetMode::Mean => SoftDataset::new(name, mu),
        TargetMode::Sample { per_point } => {
            if per_point == 0 {
                return Err(Error::InvalidArgument("need at least one sample per point".into()));
            }
            let mut r = rng.rng();
            let mut out = Matrix::zeros((mu.nrows() * per_point, mu.ncols()));
            for (n, row) in mu.rows().into_iter().enumerate() {
                for k in 0..per_point {
                    let draw = row.mapv(|p| if r.random::<f64>() < p { 1.0 } else { 0.0 });
                    out.row_mut(n * per_point + k).assign(&draw);
                }
            }
            SoftDataset::new(name, out)
        }
    }
}

/// Per-sample `log Σ_h P(x|h) P_top(h)`.
pub fn deep_ll_per_sample(m: &DeepGenModel, ds: &SoftDataset, limit: usize) -> Result<Vector> {
    check_dim("deep model visible", m.bottom.nv(), ds.dim())?;
    let nh = m.bottom.nh();
    check_enumerable(nh, limit)?;
    let log_top = m.top.log_table(limit)?;
    let mut acc = vec![LogSumExp::new(); ds.len()];
    for (start, block) in state_blocks(nh) {
        let logits = m.bottom.logits_batch(block.view());
        let offsets = log_top.slice(s![start..start + block.nrows()]);
        accumulate_mixture(ds.samples.view(), logits.view(), offsets, &mut acc);
    }
    Ok(acc.iter().map(LogSumExp::value).collect())
}

/// Mean exact log-likelihood, nats/sample.
pub fn deep_ll_exact(m: &DeepGenModel, ds: &SoftDataset, limit: usize) -> Result<f64> {
    deep_ll_per_sample(m, ds, limit)?.mean().ok_or(Error::EmptyDataset)
}

/// Ancestral sampling: `h` from the top prior (Gibbs for an RBM), then one
/// draw of `x ~ P(x|h)`.
pub fn deep_sample(m: &DeepGenModel, gibbs_steps: usize, n: usize, rng: RngState) -> Result<Matrix> {
    if gibbs_steps == 0 {
        return Err(Error::InvalidArgument("deep_sample needs gibbs_steps >= 1".into()));
    }
    let h = m.top.sample(gibbs_steps, n, rng.child(0))?;
    let p = m.bottom.logits_batch(h.view()).mapv_into(sigmoid);
    Ok(sample_bernoulli(&p, &mut rng.child(1).rng()))
}

/// Exact posterior `P(h|x_n)`, one row per data point, one column per
/// latent state.
pub fn posterior(m: &DeepGenModel, ds: &SoftDataset, limit: usize) -> Result<Matrix> {
    check_dim("deep model visible", m.bottom.nv(), ds.dim())?;
    let nh = m.bottom.nh();
    check_enumerable(nh, limit)?;
    let log_top = m.top.log_table(limit)?;
    let mut joint = Matrix::zeros((ds.len(), 1 << nh));
    for (start, block) in state_blocks(nh) {
        let logits = m.bottom.logits_batch(block.view());
        let norm: Vector = logits
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&a| crate::numerics::softplus(a)).sum::<f64>())
            .collect();
        let scores = ds.samples.dot(&logits.t()) - &norm + &log_top.slice(s![start..start + block.nrows()]);
        joint.slice_mut(s![.., start..start + block.nrows()]).assign(&scores);
    }
    for mut row in joint.rows_mut() {
        let mut acc = LogSumExp::new();
        row.iter().for_each(|&v| acc.add(v));
        let z = acc.value();
        row.mapv_inplace(|v| (v - z).exp());
    }
    Ok(joint)
}

/// Exact gradient of [`deep_ll_exact`] with respect to the decoder and the
/// top RBM, using the enumerated posterior in place of samples.
pub fn full_gradient_oracle(m: &DeepGenModel, ds: &SoftDataset, limit: usize) -> Result<DeepGrad> {
    let TopPrior::Rbm(top) = &m.top else {
        return Err(Error::InvalidArgument("gradient oracle needs an RBM top layer".into()));
    };
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let nh = m.bottom.nh();
    let post = posterior(m, ds, limit)?;
    let n = ds.len() as f64;
    let states = crate::numerics::state_block(0, 1 << nh, nh);
    // Σ_h P(h|x_n) (x_n - σ(W h + b)) hᵀ, averaged over n.
    let mean_h = post.dot(&states);
    let weight = post.sum_axis(Axis(0));
    let p = m.bottom.logits_batch(states.view()).mapv_into(sigmoid);
    let p_w = &p * &weight.view().insert_axis(Axis(1));
    let g_w = (ds.samples.t().dot(&mean_h) - p_w.t().dot(&states)) / n;
    let g_b = (ds.samples.sum_axis(Axis(0)) - p_w.sum_axis(Axis(0))) / n;
    let top_grad = top.weighted_ll_gradient(states.view(), (weight / n).view(), limit)?;
    Ok(DeepGrad {
        bottom: GenerativeLayer { w: g_w, b: g_b },
        top: top_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blm::{blm_oracle, DEFAULT_EM_MAX_ITER, DEFAULT_EM_TOL};
    use crate::nets::AffineSigmoidLayer;
    use crate::numerics::{gaussian_matrix, log_sum_exp, state_vector, FlatParams, DEFAULT_ENUM_LIMIT};
    use ndarray::array;

    const LIMIT: usize = DEFAULT_ENUM_LIMIT;

    fn tiny_model(nv: usize, nh: usize, nh2: usize, seed: u64) -> DeepGenModel {
        let mut r = RngState::new(seed).rng();
        let bottom = GenerativeLayer {
            w: gaussian_matrix(nv, nh, 1.2, &mut r),
            b: gaussian_matrix(1, nv, 0.5, &mut r).row(0).to_owned(),
        };
        let mut top = Rbm::random(nh, nh2, 1.0, &mut r);
        top.b_vis = gaussian_matrix(1, nh, 0.5, &mut r).row(0).to_owned();
        top.b_hid = gaussian_matrix(1, nh2, 0.5, &mut r).row(0).to_owned();
        let enc = InferenceModel {
            layers: vec![AffineSigmoidLayer::random(nv, nh, 1.0, &mut r)],
        };
        DeepGenModel::new(bottom, enc, TopPrior::Rbm(top)).unwrap()
    }

    fn soft_data(n: usize, nv: usize, seed: u64) -> SoftDataset {
        let mut r = RngState::new(seed).rng();
        SoftDataset::new("soft", Matrix::from_shape_fn((n, nv), |_| r.random::<f64>())).unwrap()
    }

    fn log_px_h(gen: &GenerativeLayer, x: ndarray::ArrayView1<f64>, h: &Vector) -> f64 {
        let a = gen.w.dot(h) + &gen.b;
        crate::numerics::bernoulli_ll_logits(x, a.view())
    }

    #[test]
    fn extract_target_examples() {
        let zero = InferenceModel {
            layers: vec![AffineSigmoidLayer::zeros(4, 3)],
        };
        let data = soft_data(5, 4, 1);
        let t = extract_target(&zero, &data, TargetMode::Mean, RngState::new(0)).unwrap();
        assert_eq!(t.samples.dim(), (5, 3));
        assert!(t.samples.iter().all(|&v| v == 0.5));

        let mut r = RngState::new(2).rng();
        let mut sat = InferenceModel {
            layers: vec![AffineSigmoidLayer::random(4, 3, 1.0, &mut r)],
        };
        sat.layers[0].w.mapv_inplace(|w| w * 1e4);
        let binary = SoftDataset::new("b", array![[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0]]).unwrap();
        let mean = extract_target(&sat, &binary, TargetMode::Mean, RngState::new(0)).unwrap();
        let drawn = extract_target(&sat, &binary, TargetMode::Sample { per_point: 3 }, RngState::new(5)).unwrap();
        for (i, row) in drawn.samples.rows().into_iter().enumerate() {
            assert_eq!(row, mean.samples.row(i / 3));
        }
    }

    #[test]
    fn deep_ll_matches_joint_enumeration() {
        for seed in 0..5 {
            let m = tiny_model(4, 3, 2, seed);
            let TopPrior::Rbm(top) = &m.top else { unreachable!() };
            let data = soft_data(6, 4, 100 + seed);
            // Brute force over (h¹, h²).
            let mut joint = Vec::new();
            for s1 in 0..8 {
                for s2 in 0..4 {
                    let h1 = state_vector(s1, 3);
                    let h2 = state_vector(s2, 2);
                    joint.push(top.b_vis.dot(&h1) + top.b_hid.dot(&h2) + h2.dot(&top.w.dot(&h1)));
                }
            }
            let log_z = log_sum_exp(&joint).unwrap();
            let mut total = 0.0;
            for x in data.samples.rows() {
                let mut terms = Vec::new();
                for s1 in 0..8 {
                    for s2 in 0..4 {
                        let h1 = state_vector(s1, 3);
                        terms.push(log_px_h(&m.bottom, x, &h1) + joint[s1 * 4 + s2] - log_z);
                    }
                }
                total += log_sum_exp(&terms).unwrap();
            }
            let brute = total / data.len() as f64;
            assert!((deep_ll_exact(&m, &data, LIMIT).unwrap() - brute).abs() < 1e-10);
        }
    }

    #[test]
    fn h_independent_bottom_gives_bias_likelihood() {
        let mut m = tiny_model(4, 3, 2, 7);
        m.bottom.w.fill(0.0);
        let data = soft_data(5, 4, 8);
        let expect: f64 = data
            .samples
            .rows()
            .into_iter()
            .map(|x| crate::numerics::bernoulli_ll_logits(x, m.bottom.b.view()))
            .sum::<f64>()
            / 5.0;
        assert!((deep_ll_exact(&m, &data, LIMIT).unwrap() - expect).abs() < 1e-12);
        let g = full_gradient_oracle(&m, &data, LIMIT).unwrap();
        let plain = (data.samples.sum_axis(Axis(0)) - m.bottom.b.mapv(sigmoid) * 5.0) / 5.0;
        assert!(g.bottom.b.iter().zip(plain.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn matched_tabular_top_reaches_the_oracle_bound() {
        let m = tiny_model(5, 3, 2, 9);
        let data = soft_data(8, 5, 10);
        let oracle = blm_oracle(&m.bottom, &data, DEFAULT_EM_TOL, DEFAULT_EM_MAX_ITER, LIMIT).unwrap();
        let matched = DeepGenModel {
            top: TopPrior::Tabular {
                probs: oracle.q_hat.clone(),
            },
            ..m.clone()
        };
        let ll = deep_ll_exact(&matched, &data, LIMIT).unwrap();
        assert!((ll - oracle.u_d).abs() < 1e-12);
        assert!(deep_ll_exact(&m, &data, LIMIT).unwrap() <= oracle.u_d + 1e-8);
    }

    /// Best deep likelihood over a grid of one-hidden-unit top RBMs.
    fn in_model_grid_max(bottom: &GenerativeLayer, enc: &InferenceModel, data: &SoftDataset) -> f64 {
        let nh = bottom.nh();
        let n_params = 2 * nh + 1;
        let values = [-6.0, -3.0, 0.0, 3.0, 6.0];
        let mut best = f64::NEG_INFINITY;
        for code in 0..values.len().pow(n_params as u32) {
            let mut c = code;
            let mut theta = Vec::with_capacity(n_params);
            for _ in 0..n_params {
                theta.push(values[c % values.len()]);
                c /= values.len();
            }
            let mut top = Rbm::zeros(nh, 1);
            top.set_flat(&theta);
            let m = DeepGenModel::new(bottom.clone(), enc.clone(), TopPrior::Rbm(top)).unwrap();
            best = best.max(deep_ll_exact(&m, data, LIMIT).unwrap());
        }
        best
    }

    #[test]
    fn in_model_bound_sits_below_the_oracle() {
        let m = tiny_model(4, 2, 1, 21);
        let data = soft_data(6, 4, 22);
        let oracle = blm_oracle(&m.bottom, &data, 1e-12, 100_000, LIMIT).unwrap();
        let in_model = in_model_grid_max(&m.bottom, &m.bottom_inference, &data);
        assert!(deep_ll_exact(&m, &data, LIMIT).unwrap() <= oracle.u_d + 1e-8);
        assert!(in_model <= oracle.u_d + 1e-8, "{in_model} vs {}", oracle.u_d);
    }

    #[test]
    fn one_unit_top_cannot_reach_a_parity_prior() {
        // Near-deterministic decoder h -> x = h, data uniform on even-parity
        // triples: the optimal prior has a three-way interaction that a
        // mixture of two product distributions cannot express.
        let bottom = GenerativeLayer::from_parts(
            Matrix::from_diag_elem(3, 12.0),
            Vector::from_elem(3, -6.0),
        )
        .unwrap();
        let data = SoftDataset::new(
            "parity",
            array![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]],
        )
        .unwrap();
        let oracle = blm_oracle(&bottom, &data, 1e-12, 100_000, LIMIT).unwrap();
        let enc = InferenceModel::from_rbm(&Rbm::zeros(3, 3));
        let in_model = in_model_grid_max(&bottom, &enc, &data);
        assert!(oracle.u_d > -(4f64.ln()) - 0.05);
        assert!(oracle.u_d - in_model > 0.1, "{in_model} vs {}", oracle.u_d);
    }

    #[test]
    fn posterior_rows_are_normalized() {
        let m = tiny_model(4, 3, 2, 11);
        let post = posterior(&m, &soft_data(7, 4, 12), LIMIT).unwrap();
        for row in post.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_oracle_matches_finite_differences() {
        let m = tiny_model(4, 3, 2, 13);
        let data = soft_data(6, 4, 14);
        let g = full_gradient_oracle(&m, &data, LIMIT).unwrap();
        let eps = 1e-5;
        let check = |analytic: f64, up: f64, down: f64, what: &str| {
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-5 || (fd - analytic).abs() < 1e-10, "{what}: {analytic} vs {fd}");
        };
        let mut bottom_flat: Vec<f64> = m.bottom.w.iter().chain(m.bottom.b.iter()).copied().collect();
        let g_bottom: Vec<f64> = g.bottom.w.iter().chain(g.bottom.b.iter()).copied().collect();
        let rebuild = |v: &[f64]| {
            let mut mm = m.clone();
            let nw = mm.bottom.w.len();
            mm.bottom.w.iter_mut().zip(&v[..nw]).for_each(|(d, s)| *d = *s);
            mm.bottom.b.iter_mut().zip(&v[nw..]).for_each(|(d, s)| *d = *s);
            mm
        };
        for i in 0..bottom_flat.len() {
            bottom_flat[i] += eps;
            let up = deep_ll_exact(&rebuild(&bottom_flat), &data, LIMIT).unwrap();
            bottom_flat[i] -= 2.0 * eps;
            let down = deep_ll_exact(&rebuild(&bottom_flat), &data, LIMIT).unwrap();
            bottom_flat[i] += eps;
            check(g_bottom[i], up, down, &format!("bottom {i}"));
        }
        let TopPrior::Rbm(top) = &m.top else { unreachable!() };
        let base = top.to_flat();
        let g_top = g.top.to_flat();
        for i in 0..base.len() {
            let mut v = base.clone();
            let mut probe = top.clone();
            let with = |probe: &Rbm| {
                let mm = DeepGenModel {
                    top: TopPrior::Rbm(probe.clone()),
                    ..m.clone()
                };
                deep_ll_exact(&mm, &data, LIMIT).unwrap()
            };
            v[i] += eps;
            probe.set_flat(&v);
            let up = with(&probe);
            v[i] -= 2.0 * eps;
            probe.set_flat(&v);
            let down = with(&probe);
            check(g_top[i], up, down, &format!("top {i}"));
        }
    }

    #[test]
    fn sampling_examples() {
        let m = DeepGenModel::new(
            GenerativeLayer::zeros(5, 3),
            InferenceModel {
                layers: vec![AffineSigmoidLayer::zeros(5, 3)],
            },
            TopPrior::Rbm(Rbm::zeros(3, 2)),
        )
        .unwrap();
        let x = deep_sample(&m, 1, 10_000, RngState::new(1)).unwrap();
        let bound = 3.0 * (0.25f64 / 10_000.0).sqrt();
        assert!(x.mean_axis(Axis(0)).unwrap().iter().all(|&p| (p - 0.5).abs() < bound));
        let again = deep_sample(&m, 1, 10_000, RngState::new(1)).unwrap();
        assert_eq!(x, again);
        assert!(deep_sample(&m, 0, 1, RngState::new(1)).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let m = tiny_model(4, 3, 2, 15);
        let json = serde_json::to_string(&m).unwrap();
        let back: DeepGenModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
