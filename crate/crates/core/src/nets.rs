//! Sigmoid feed-forward networks trained by backpropagation on the
//! Bernoulli cross-entropy: the tied-weight auto-associator and the
//! auto-associator with a two-layer encoder (AERI).

use ndarray::{ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blm::{GenerativeLayer, InferenceModel};
use crate::datasets::SoftDataset;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    bernoulli_xent_unchecked, gaussian_matrix, push_flat, sigmoid, take_flat, FlatParams, Matrix,
    RngState, Vector,
};

/// `x ↦ σ(W x + b)` with `W` stored output × input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSigmoidLayer {
    pub w: Matrix,
    pub b: Vector,
}

impl AffineSigmoidLayer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Matrix::zeros((n_out, n_in)),
            b: Vector::zeros(n_out),
        }
    }

    pub fn random(n_in: usize, n_out: usize, sigma: f64, rng: &mut impl Rng) -> Self {
        Self {
            w: gaussian_matrix(n_out, n_in, sigma, rng),
            b: Vector::zeros(n_out),
        }
    }

    pub fn from_parts(w: Matrix, b: Vector) -> Result<Self> {
        check_dim("layer bias", w.nrows(), b.len())?;
        Ok(Self { w, b })
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Vector> {
        check_dim("layer input", self.n_in(), x.len())?;
        Ok((self.w.dot(&x) + &self.b).mapv_into(sigmoid))
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        check_dim("layer input", self.n_in(), x.ncols())?;
        Ok((x.dot(&self.w.t()) + &self.b).mapv_into(sigmoid))
    }

    /// `w += lr · delta ⊗ input`, `b += lr · delta`.
    fn ascend(&mut self, lr: f64, delta: &Vector, input: ArrayView1<f64>) {
        for (mut row, &d) in self.w.rows_mut().into_iter().zip(delta.iter()) {
            row.scaled_add(lr * d, &input);
        }
        self.b.scaled_add(lr, delta);
    }

    fn outer_grad(delta: &Vector, input: ArrayView1<f64>) -> Self {
        let w = delta
            .view()
            .insert_axis(Axis(1))
            .dot(&input.insert_axis(Axis(0)));
        Self {
            w,
            b: delta.clone(),
        }
    }
}

/// Error signal at the pre-activation of a sigmoid layer, propagated down
/// through `w` (output × input) to the layer below with activation `a`.
fn backprop_delta(w: &Matrix, delta: &Vector, a: &Vector) -> Vector {
    w.t().dot(delta) * a.mapv(|a| a * (1.0 - a))
}

/// Tied auto-associator: encoder `σ(W x + c)`, decoder `σ(Wᵀ h + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanillaAe {
    /// Hidden × visible.
    pub w: Matrix,
    pub b_hid: Vector,
    pub b_vis: Vector,
}

/// Auto-associator with a two-layer encoder `x → h′ → h` and a one-layer
/// decoder `h → x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aeri {
    pub encoder: [AffineSigmoidLayer; 2],
    pub decoder: AffineSigmoidLayer,
}

/// Operations shared by both auto-associators.
///
/// Gradients are returned in the shape of the network itself and are
/// gradients of the reconstruction log-likelihood, so SGD adds them.
pub trait AutoAssociator: Clone + FlatParams {
    fn nv(&self) -> usize;
    fn nh(&self) -> usize;

    /// Layer outputs in order; the last entry is the reconstruction.
    fn forward(&self, x: ArrayView1<f64>) -> Result<Vec<Vector>>;

    /// Gradient of `bernoulli_xent(target, forward(x))`.
    fn backprop_xent(&self, x: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<Self>;

    /// One SGD step on the reconstruction of `x`; returns its
    /// log-likelihood before the step.
    fn sgd_step(&mut self, x: ArrayView1<f64>, lr: f64) -> Result<f64>;

    fn encode(&self, x: ArrayView1<f64>) -> Result<Vector>;
    fn decode(&self, h: ArrayView1<f64>) -> Result<Vector>;

    /// Decoder as `P(x|h)`.
    fn as_generative_layer(&self) -> GenerativeLayer;

    /// Encoder as `q(h|x)`.
    fn as_inference_model(&self) -> InferenceModel;

    /// Mean reconstruction log-likelihood, nats/sample.
    fn reconstruction_ll(&self, ds: &SoftDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut total = 0.0;
        for x in ds.samples.rows() {
            let out = self.forward(x)?;
            total += bernoulli_xent_unchecked(x, out.last().unwrap().view());
        }
        Ok(total / ds.len() as f64)
    }
}

impl VanillaAe {
    pub fn random(nv: usize, nh: usize, sigma: f64, rng: &mut impl Rng) -> Self {
        Self {
            w: gaussian_matrix(nh, nv, sigma, rng),
            b_hid: Vector::zeros(nh),
            b_vis: Vector::zeros(nv),
        }
    }

    pub fn zeros(nv: usize, nh: usize) -> Self {
        Self::random(nv, nh, 0.0, &mut RngState::new(0).rng())
    }

    /// Output delta, hidden delta and the activations `[h, x̂]`.
    fn deltas(
        &self,
        x: ArrayView1<f64>,
        target: ArrayView1<f64>,
    ) -> Result<(Vector, Vector, Vec<Vector>)> {
        check_dim("vanilla ae target", self.nv(), target.len())?;
        let acts = self.forward(x)?;
        let d_out = &target - &acts[1];
        let d_hid = self.w.dot(&d_out) * acts[0].mapv(|a| a * (1.0 - a));
        Ok((d_out, d_hid, acts))
    }
}

impl AutoAssociator for VanillaAe {
    fn nv(&self) -> usize {
        self.w.ncols()
    }

    fn nh(&self) -> usize {
        self.w.nrows()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Result<Vec<Vector>> {
        let h = self.encode(x)?;
        let out = self.decode(h.view())?;
        Ok(vec![h, out])
    }

    fn backprop_xent(&self, x: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<Self> {
        let (d_out, d_hid, acts) = self.deltas(x, target)?;
        let enc = AffineSigmoidLayer::outer_grad(&d_hid, x);
        let dec = AffineSigmoidLayer::outer_grad(&d_out, acts[0].view());
        Ok(Self {
            w: enc.w + dec.w.t(),
            b_hid: enc.b,
            b_vis: dec.b,
        })
    }

    fn sgd_step(&mut self, x: ArrayView1<f64>, lr: f64) -> Result<f64> {
        let (d_out, d_hid, acts) = self.deltas(x, x)?;
        let ll = bernoulli_xent_unchecked(x, acts[1].view());
        let h = &acts[0];
        for ((mut row, &dh), &hj) in self
            .w
            .rows_mut()
            .into_iter()
            .zip(d_hid.iter())
            .zip(h.iter())
        {
            row.scaled_add(lr * dh, &x);
            row.scaled_add(lr * hj, &d_out);
        }
        self.b_hid.scaled_add(lr, &d_hid);
        self.b_vis.scaled_add(lr, &d_out);
        Ok(ll)
    }

    fn encode(&self, x: ArrayView1<f64>) -> Result<Vector> {
        check_dim("vanilla ae input", self.nv(), x.len())?;
        Ok((self.w.dot(&x) + &self.b_hid).mapv_into(sigmoid))
    }

    fn decode(&self, h: ArrayView1<f64>) -> Result<Vector> {
        check_dim("vanilla ae code", self.nh(), h.len())?;
        Ok((self.w.t().dot(&h) + &self.b_vis).mapv_into(sigmoid))
    }

    fn as_generative_layer(&self) -> GenerativeLayer {
        GenerativeLayer {
            w: self.w.t().to_owned(),
            b: self.b_vis.clone(),
        }
    }

    fn as_inference_model(&self) -> InferenceModel {
        InferenceModel {
            layers: vec![AffineSigmoidLayer {
                w: self.w.clone(),
                b: self.b_hid.clone(),
            }],
        }
    }
}

impl Aeri {
    pub fn random(
        nv: usize,
        n_inference: usize,
        nh: usize,
        sigma: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let e0 = AffineSigmoidLayer::random(nv, n_inference, sigma, rng);
        let e1 = AffineSigmoidLayer::random(n_inference, nh, sigma, rng);
        let d = AffineSigmoidLayer::random(nh, nv, sigma, rng);
        Self {
            encoder: [e0, e1],
            decoder: d,
        }
    }

    pub fn n_inference(&self) -> usize {
        self.encoder[0].n_out()
    }

    /// Per-layer deltas (encoder 0, encoder 1, decoder) and activations
    /// `[h′, h, x̂]`.
    fn deltas(
        &self,
        x: ArrayView1<f64>,
        target: ArrayView1<f64>,
    ) -> Result<([Vector; 3], Vec<Vector>)> {
        check_dim("aeri target", self.nv(), target.len())?;
        let acts = self.forward(x)?;
        let d2 = &target - &acts[2];
        let d1 = backprop_delta(&self.decoder.w, &d2, &acts[1]);
        let d0 = backprop_delta(&self.encoder[1].w, &d1, &acts[0]);
        Ok(([d0, d1, d2], acts))
    }
}

impl AutoAssociator for Aeri {
    fn nv(&self) -> usize {
        self.encoder[0].n_in()
    }

    fn nh(&self) -> usize {
        self.decoder.n_in()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Result<Vec<Vector>> {
        let a0 = self.encoder[0].forward(x)?;
        let a1 = self.encoder[1].forward(a0.view())?;
        let a2 = self.decoder.forward(a1.view())?;
        Ok(vec![a0, a1, a2])
    }

    fn backprop_xent(&self, x: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<Self> {
        let ([d0, d1, d2], acts) = self.deltas(x, target)?;
        Ok(Self {
            encoder: [
                AffineSigmoidLayer::outer_grad(&d0, x),
                AffineSigmoidLayer::outer_grad(&d1, acts[0].view()),
            ],
            decoder: AffineSigmoidLayer::outer_grad(&d2, acts[1].view()),
        })
    }

    fn sgd_step(&mut self, x: ArrayView1<f64>, lr: f64) -> Result<f64> {
        let ([d0, d1, d2], acts) = self.deltas(x, x)?;
        let ll = bernoulli_xent_unchecked(x, acts[2].view());
        self.encoder[0].ascend(lr, &d0, x);
        self.encoder[1].ascend(lr, &d1, acts[0].view());
        self.decoder.ascend(lr, &d2, acts[1].view());
        Ok(ll)
    }

    fn encode(&self, x: ArrayView1<f64>) -> Result<Vector> {
        let a0 = self.encoder[0].forward(x)?;
        self.encoder[1].forward(a0.view())
    }

    fn decode(&self, h: ArrayView1<f64>) -> Result<Vector> {
        self.decoder.forward(h)
    }

    fn as_generative_layer(&self) -> GenerativeLayer {
        GenerativeLayer {
            w: self.decoder.w.clone(),
            b: self.decoder.b.clone(),
        }
    }

    fn as_inference_model(&self) -> InferenceModel {
        InferenceModel {
            layers: self.encoder.to_vec(),
        }
    }
}

impl FlatParams for VanillaAe {
    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        push_flat(&mut v, &self.w);
        push_flat(&mut v, &self.b_hid);
        push_flat(&mut v, &self.b_vis);
        v
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut o = 0;
        take_flat(&mut self.w, values, &mut o);
        take_flat(&mut self.b_hid, values, &mut o);
        take_flat(&mut self.b_vis, values, &mut o);
    }
}

impl FlatParams for Aeri {
    fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in self.encoder.iter().chain(std::iter::once(&self.decoder)) {
            push_flat(&mut v, &l.w);
            push_flat(&mut v, &l.b);
        }
        v
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut o = 0;
        for l in self
            .encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.decoder))
        {
            take_flat(&mut l.w, values, &mut o);
            take_flat(&mut l.b, values, &mut o);
        }
    }
}

/// Which auto-associator to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeKind {
    Vanilla,
    Aeri,
}

/// Layer sizes; `inference_hidden` is only read for AERI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AeSizes {
    pub nv: usize,
    pub nh: usize,
    pub inference_hidden: usize,
}

/// A trained auto-associator of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AutoEncoder {
    VanillaAe(VanillaAe),
    Aeri(Aeri),
}

impl AutoEncoder {
    pub fn as_generative_layer(&self) -> GenerativeLayer {
        match self {
            Self::VanillaAe(n) => n.as_generative_layer(),
            Self::Aeri(n) => n.as_generative_layer(),
        }
    }

    pub fn as_inference_model(&self) -> InferenceModel {
        match self {
            Self::VanillaAe(n) => n.as_inference_model(),
            Self::Aeri(n) => n.as_inference_model(),
        }
    }

    pub fn reconstruction_ll(&self, ds: &SoftDataset) -> Result<f64> {
        match self {
            Self::VanillaAe(n) => n.reconstruction_ll(ds),
            Self::Aeri(n) => n.reconstruction_ll(ds),
        }
    }
}

/// Per-sample SGD over `epochs` shuffled passes; returns the mean training
/// reconstruction log-likelihood of the last pass, measured before each step.
pub fn sgd_train<N: AutoAssociator>(
    net: &mut N,
    data: &SoftDataset,
    lr: f64,
    epochs: usize,
    rng: RngState,
) -> Result<f64> {
    check_dim("training data", net.nv(), data.dim())?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut r = rng.rng();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut last = f64::NAN;
    for _ in 0..epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for &i in &order {
            total += net.sgd_step(data.sample(i), lr)?;
        }
        last = total / data.len() as f64;
    }
    Ok(last)
}

/// Build, initialise (`N(0, init_sigma²)` weights, zero biases) and train an
/// auto-associator; returns the net and its final training reconstruction
/// log-likelihood.
pub fn train_autoassociator(
    kind: AeKind,
    sizes: AeSizes,
    data: &SoftDataset,
    lr: f64,
    epochs: usize,
    init_sigma: f64,
    rng: RngState,
) -> Result<(AutoEncoder, f64)> {
    if !(lr >= 0.0) {
        return Err(Error::InvalidArgument("learning rate must be >= 0".into()));
    }
    let mut init = rng.child(0).rng();
    let net = match kind {
        AeKind::Vanilla => {
            let mut n = VanillaAe::random(sizes.nv, sizes.nh, init_sigma, &mut init);
            sgd_train(&mut n, data, lr, epochs, rng.child(1))?;
            AutoEncoder::VanillaAe(n)
        }
        AeKind::Aeri => {
            let mut n = Aeri::random(
                sizes.nv,
                sizes.inference_hidden,
                sizes.nh,
                init_sigma,
                &mut init,
            );
            sgd_train(&mut n, data, lr, epochs, rng.child(1))?;
            AutoEncoder::Aeri(n)
        }
    };
    let ll = net.reconstruction_ll(data)?;
    Ok((net, ll))
}
