//! Random hyper-parameter search over the four model families, Pareto
//! fronts of likelihood against parameter count, and the deepness check
//! that compares stacked against single RBMs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blm::{blm_bound_exact, blm_bound_sampled, mixture_from, GenerativeLayer, InferenceModel};
use crate::datasets::{baseline_uniform, SoftDataset};
use crate::deepmodel::{deep_ll_exact, extract_target, DeepGenModel, TargetMode, TopPrior};
use crate::error::{Error, Result};
use crate::nets::{train_autoassociator, AeKind, AeSizes};
use crate::numerics::{RngState, DEFAULT_ENUM_LIMIT};
use crate::rbm::{CdConfig, Rbm, RBM_INIT_SIGMA};

pub const LR_MIN: f64 = 1e-5;
pub const LR_MAX: f64 = 5e-2;
pub const RBM_HIDDEN_MAX: usize = 19;
pub const DEEP_HIDDEN_MAX: usize = 16;
pub const INFERENCE_HIDDEN_MAX: usize = 500;

/// Fraction of grid points the stacked front must win for a "deep" verdict.
pub const DEEPNESS_THRESHOLD: f64 = 0.8;

/// Margin in nats over the uniform model that the best stacked model must
/// clear before any verdict of depth is given.
pub const MATERIAL_MARGIN: f64 = 1.0;

/// Grid points used when comparing two Pareto fronts.
pub const FRONT_GRID_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rbm,
    Srbm,
    VanillaAe,
    Aeri,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Rbm, Self::Srbm, Self::VanillaAe, Self::Aeri];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rbm => "rbm",
            Self::Srbm => "srbm",
            Self::VanillaAe => "vanilla_ae",
            Self::Aeri => "aeri",
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

/// One point of the search space. Every field is drawn for every kind so
/// that result files share a single layout; each kind reads the fields it
/// needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kind: ModelKind,
    pub seed: u64,
    pub rbm_hidden: usize,
    pub deep_h1: usize,
    pub deep_h2: usize,
    pub inference_hidden: usize,
    pub cd_lr: f64,
    pub bp_lr: f64,
    pub cd_epochs: usize,
    pub bp_epochs: usize,
    pub init_sigma: f64,
}

/// `round(20 · 10000 / N)`.
pub fn epochs_for(n: usize) -> usize {
    (20.0 * 10_000.0 / n as f64).round() as usize
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

pub fn sample_hyperparams(kind: ModelKind, n: usize, rng: &mut impl Rng) -> Result<HyperParams> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let epochs = epochs_for(n);
    Ok(HyperParams {
        kind,
        seed: rng.random(),
        rbm_hidden: rng.random_range(1..=RBM_HIDDEN_MAX),
        deep_h1: rng.random_range(1..=DEEP_HIDDEN_MAX),
        deep_h2: rng.random_range(1..=DEEP_HIDDEN_MAX),
        inference_hidden: rng.random_range(1..=INFERENCE_HIDDEN_MAX),
        cd_lr: log_uniform(rng, LR_MIN, LR_MAX),
        bp_lr: log_uniform(rng, LR_MIN, LR_MAX),
        cd_epochs: epochs,
        bp_epochs: epochs,
        init_sigma: rng.random_range(0.0..1.0),
    })
}

/// `n_trials` draws for `kind` from a master seed; each kind has its own
/// stream so families can be extended independently.
pub fn draw_hyperparams(kind: ModelKind, n: usize, n_trials: usize, master_seed: u64) -> Result<Vec<HyperParams>> {
    let mut rng = RngState::new(master_seed).child(kind.stream()).rng();
    (0..n_trials).map(|_| sample_hyperparams(kind, n, &mut rng)).collect()
}

/// Generative parameter count: decoder weights and visible biases plus the
/// top RBM with both biases, or a single RBM with both biases. Encoders and
/// the hidden biases of a stacked bottom RBM are not counted.
pub fn param_count(hp: &HyperParams, nv: usize) -> usize {
    match hp.kind {
        ModelKind::Rbm => nv * hp.rbm_hidden + nv + hp.rbm_hidden,
        _ => nv * hp.deep_h1 + nv + hp.deep_h1 * hp.deep_h2 + hp.deep_h1 + hp.deep_h2,
    }
}

/// Evaluation settings shared by every trial of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub enum_limit: usize,
    /// Codes per data point for the sampled bound, used when the latent
    /// layer is too wide to enumerate.
    pub k_sampled: usize,
    pub compute_blm: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            enum_limit: DEFAULT_ENUM_LIMIT,
            k_sampled: 1,
            compute_blm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlmMode {
    Exact,
    Sampled,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CsvRow", into = "CsvRow")]
pub struct ExperimentRecord {
    pub hp: HyperParams,
    pub param_count: usize,
    pub ll_train: f64,
    pub ll_valid: f64,
    pub blm_train: f64,
    pub blm_valid: f64,
    pub blm_mode: BlmMode,
    /// All requested quantities were computed and are finite.
    pub converged: bool,
    pub wall_ms: u64,
}

/// Flat on-disk layout of a record, one CSV column per field.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    kind: ModelKind,
    seed: u64,
    rbm_hidden: usize,
    deep_h1: usize,
    deep_h2: usize,
    inference_hidden: usize,
    cd_lr: f64,
    bp_lr: f64,
    cd_epochs: usize,
    bp_epochs: usize,
    init_sigma: f64,
    param_count: usize,
    ll_train: f64,
    ll_valid: f64,
    blm_train: f64,
    blm_valid: f64,
    blm_mode: BlmMode,
    converged: bool,
    wall_ms: u64,
}

impl From<ExperimentRecord> for CsvRow {
    fn from(r: ExperimentRecord) -> Self {
        let h = r.hp;
        Self {
            kind: h.kind,
            seed: h.seed,
            rbm_hidden: h.rbm_hidden,
            deep_h1: h.deep_h1,
            deep_h2: h.deep_h2,
            inference_hidden: h.inference_hidden,
            cd_lr: h.cd_lr,
            bp_lr: h.bp_lr,
            cd_epochs: h.cd_epochs,
            bp_epochs: h.bp_epochs,
            init_sigma: h.init_sigma,
            param_count: r.param_count,
            ll_train: r.ll_train,
            ll_valid: r.ll_valid,
            blm_train: r.blm_train,
            blm_valid: r.blm_valid,
            blm_mode: r.blm_mode,
            converged: r.converged,
            wall_ms: r.wall_ms,
        }
    }
}

impl From<CsvRow> for ExperimentRecord {
    fn from(r: CsvRow) -> Self {
        Self {
            hp: HyperParams {
                kind: r.kind,
                seed: r.seed,
                rbm_hidden: r.rbm_hidden,
                deep_h1: r.deep_h1,
                deep_h2: r.deep_h2,
                inference_hidden: r.inference_hidden,
                cd_lr: r.cd_lr,
                bp_lr: r.bp_lr,
                cd_epochs: r.cd_epochs,
                bp_epochs: r.bp_epochs,
                init_sigma: r.init_sigma,
            },
            param_count: r.param_count,
            ll_train: r.ll_train,
            ll_valid: r.ll_valid,
            blm_train: r.blm_train,
            blm_valid: r.blm_valid,
            blm_mode: r.blm_mode,
            converged: r.converged,
            wall_ms: r.wall_ms,
        }
    }
}

impl ExperimentRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.hp == other.hp
            && self.param_count == other.param_count
            && eq(self.ll_train, other.ll_train)
            && eq(self.ll_valid, other.ll_valid)
            && eq(self.blm_train, other.blm_train)
            && eq(self.blm_valid, other.blm_valid)
            && self.blm_mode == other.blm_mode
            && self.converged == other.converged
    }
}

/// A trained model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainedModel {
    Rbm(Rbm),
    Deep(DeepGenModel),
}

impl TrainedModel {
    /// Decoder and encoder whose mixture bound is reported for this model.
    pub fn bound_pair(&self) -> (GenerativeLayer, InferenceModel) {
        match self {
            Self::Rbm(r) => (GenerativeLayer::from_rbm(r), InferenceModel::from_rbm(r)),
            Self::Deep(m) => (m.bottom.clone(), m.bottom_inference.clone()),
        }
    }

    pub fn exact_ll(&self, ds: &SoftDataset, limit: usize) -> Result<f64> {
        match self {
            Self::Rbm(r) => r.exact_ll(ds, limit),
            Self::Deep(m) => deep_ll_exact(m, ds, limit),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Rbm(r) => r.param_count(),
            Self::Deep(m) => m.param_count(),
        }
    }
}

fn cd(epochs: usize, lr: f64) -> CdConfig {
    CdConfig {
        k: 1,
        lr,
        epochs,
        batch_size: None,
    }
}

/// Top RBM trained by CD on the mean codes of `q` over `train`.
fn train_top(q: &InferenceModel, train: &SoftDataset, hp: &HyperParams, rng: RngState) -> Result<Rbm> {
    let target = extract_target(q, train, TargetMode::Mean, rng.child(0))?;
    let mut top = Rbm::random(hp.deep_h1, hp.deep_h2, RBM_INIT_SIGMA, &mut rng.child(1).rng());
    top.cd_train(&target.samples, &cd(hp.cd_epochs, hp.cd_lr), rng.child(2))?;
    Ok(top)
}

/// Train the model described by `hp` on `train`.
pub fn train_model(hp: &HyperParams, train: &SoftDataset) -> Result<TrainedModel> {
    let root = RngState::new(hp.seed);
    let nv = train.dim();
    match hp.kind {
        ModelKind::Rbm => {
            let mut r = Rbm::random(nv, hp.rbm_hidden, RBM_INIT_SIGMA, &mut root.child(0).rng());
            r.cd_train(&train.samples, &cd(hp.cd_epochs, hp.cd_lr), root.child(1))?;
            Ok(TrainedModel::Rbm(r))
        }
        ModelKind::Srbm => {
            let mut bottom = Rbm::random(nv, hp.deep_h1, RBM_INIT_SIGMA, &mut root.child(0).rng());
            bottom.cd_train(&train.samples, &cd(hp.cd_epochs, hp.cd_lr), root.child(1))?;
            let q = InferenceModel::from_rbm(&bottom);
            let top = train_top(&q, train, hp, root.child(2))?;
            Ok(TrainedModel::Deep(DeepGenModel::new(
                GenerativeLayer::from_rbm(&bottom),
                q,
                TopPrior::Rbm(top),
            )?))
        }
        ModelKind::VanillaAe | ModelKind::Aeri => {
            let kind = if hp.kind == ModelKind::Aeri {
                AeKind::Aeri
            } else {
                AeKind::Vanilla
            };
            let sizes = AeSizes {
                nv,
                nh: hp.deep_h1,
                inference_hidden: hp.inference_hidden,
            };
            let (net, _) = train_autoassociator(kind, sizes, train, hp.bp_lr, hp.bp_epochs, hp.init_sigma, root.child(0))?;
            let q = net.as_inference_model();
            let top = train_top(&q, train, hp, root.child(2))?;
            Ok(TrainedModel::Deep(DeepGenModel::new(
                net.as_generative_layer(),
                q,
                TopPrior::Rbm(top),
            )?))
        }
    }
}

fn finite_or_neg_inf(r: Result<f64>) -> (f64, bool) {
    match r {
        Ok(v) if v.is_finite() => (v, true),
        _ => (f64::NEG_INFINITY, false),
    }
}

/// Training and validation bounds of `model`, each set fed to the encoder
/// and scored on itself.
pub fn bounds(
    model: &TrainedModel,
    train: &SoftDataset,
    valid: &SoftDataset,
    cfg: &TrialConfig,
    rng: RngState,
) -> Result<(f64, f64, BlmMode)> {
    let (gen, q) = model.bound_pair();
    if gen.nh() <= cfg.enum_limit {
        let t = blm_bound_exact(&gen, &mixture_from(&q, train)?, train, cfg.enum_limit)?;
        let v = blm_bound_exact(&gen, &mixture_from(&q, valid)?, valid, cfg.enum_limit)?;
        Ok((t, v, BlmMode::Exact))
    } else {
        let t = blm_bound_sampled(&gen, &q, train, train, cfg.k_sampled, rng.child(0))?;
        let v = blm_bound_sampled(&gen, &q, valid, valid, cfg.k_sampled, rng.child(1))?;
        Ok((t, v, BlmMode::Sampled))
    }
}

/// Evaluate a trained model into a record. Failed or non-finite
/// quantities are stored as `-inf` and clear `converged`.
pub fn evaluate(
    hp: &HyperParams,
    model: &TrainedModel,
    train: &SoftDataset,
    valid: &SoftDataset,
    cfg: &TrialConfig,
) -> ExperimentRecord {
    let (ll_train, ok_t) = finite_or_neg_inf(model.exact_ll(train, cfg.enum_limit));
    let (ll_valid, ok_v) = finite_or_neg_inf(model.exact_ll(valid, cfg.enum_limit));
    let (blm_train, blm_valid, blm_mode, ok_b) = if cfg.compute_blm {
        match bounds(model, train, valid, cfg, RngState::new(hp.seed).child(9)) {
            Ok((t, v, mode)) if t.is_finite() && v.is_finite() => (t, v, mode, true),
            Ok((_, _, mode)) => (f64::NEG_INFINITY, f64::NEG_INFINITY, mode, false),
            Err(_) => (f64::NEG_INFINITY, f64::NEG_INFINITY, BlmMode::Skipped, false),
        }
    } else {
        (f64::NAN, f64::NAN, BlmMode::Skipped, true)
    };
    ExperimentRecord {
        hp: *hp,
        param_count: param_count(hp, train.dim()),
        ll_train,
        ll_valid,
        blm_train,
        blm_valid,
        blm_mode,
        converged: ok_t && ok_v && ok_b,
        wall_ms: 0,
    }
}

/// Train and evaluate one trial.
pub fn run_trial(hp: &HyperParams, train: &SoftDataset, valid: &SoftDataset, cfg: &TrialConfig) -> ExperimentRecord {
    let start = Instant::now();
    let mut rec = match train_model(hp, train) {
        Ok(model) => evaluate(hp, &model, train, valid, cfg),
        Err(_) => ExperimentRecord {
            hp: *hp,
            param_count: param_count(hp, train.dim()),
            ll_train: f64::NEG_INFINITY,
            ll_valid: f64::NEG_INFINITY,
            blm_train: f64::NEG_INFINITY,
            blm_valid: f64::NEG_INFINITY,
            blm_mode: BlmMode::Skipped,
            converged: false,
            wall_ms: 0,
        },
    };
    rec.wall_ms = start.elapsed().as_millis() as u64;
    rec
}

/// Run trials on the rayon pool. Results reach `sink` in trial order, one
/// batch at a time, so partial output can be flushed while the run
/// continues.
pub fn run_trials(
    hps: &[HyperParams],
    train: &SoftDataset,
    valid: &SoftDataset,
    cfg: &TrialConfig,
    mut sink: impl FnMut(&ExperimentRecord) -> Result<()>,
) -> Result<Vec<ExperimentRecord>> {
    let batch = 2 * rayon::current_num_threads().max(1);
    let mut out = Vec::with_capacity(hps.len());
    for chunk in hps.chunks(batch) {
        let recs: Vec<ExperimentRecord> = chunk.par_iter().map(|hp| run_trial(hp, train, valid, cfg)).collect();
        for r in recs {
            sink(&r)?;
            out.push(r);
        }
    }
    Ok(out)
}

/// Points not strictly dominated by another point with no more parameters
/// and a strictly better likelihood. Non-finite likelihoods are ignored.
/// Returns indices in ascending parameter order.
pub fn pareto_front_indices(points: &[(usize, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].1.is_finite()).collect();
    idx.sort_by(|&a, &b| points[a].0.cmp(&points[b].0).then(points[b].1.total_cmp(&points[a].1)));
    let mut front = Vec::new();
    let mut best_below = f64::NEG_INFINITY;
    let mut i = 0;
    while i < idx.len() {
        // Points sharing a parameter count are compared against everything
        // with strictly fewer parameters and against each other.
        let p = points[idx[i]].0;
        let mut j = i;
        while j < idx.len() && points[idx[j]].0 == p {
            j += 1;
        }
        let group_best = points[idx[i]].1;
        for &k in &idx[i..j] {
            let ll = points[k].1;
            if ll >= best_below && ll >= group_best {
                front.push(k);
            }
        }
        best_below = best_below.max(group_best);
        i = j;
    }
    front
}

/// Pareto front of records on validation likelihood.
pub fn pareto_front(records: &[ExperimentRecord]) -> Vec<ExperimentRecord> {
    let pts: Vec<(usize, f64)> = records.iter().map(|r| (r.param_count, r.ll_valid)).collect();
    pareto_front_indices(&pts).into_iter().map(|i| records[i].clone()).collect()
}

/// Best likelihood reachable with at most `p` parameters.
fn front_value(front: &[(usize, f64)], p: f64) -> f64 {
    front
        .iter()
        .filter(|(q, _)| *q as f64 <= p)
        .map(|&(_, ll)| ll)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// How two fronts compare on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontComparison {
    /// Shared parameter range `[lo, hi]`; empty when `lo > hi`.
    pub lo: f64,
    pub hi: f64,
    /// Fraction of grid points where `a` is strictly better.
    pub a_beats: f64,
    /// Fraction of grid points where `a` is at least as good.
    pub a_matches: f64,
}

/// Compare front `a` against front `b` as step functions of parameter
/// count on `grid` evenly spaced points over the shared range.
pub fn compare_fronts(a: &[(usize, f64)], b: &[(usize, f64)], grid: usize) -> FrontComparison {
    let fa: Vec<(usize, f64)> = pareto_front_indices(a).into_iter().map(|i| a[i]).collect();
    let fb: Vec<(usize, f64)> = pareto_front_indices(b).into_iter().map(|i| b[i]).collect();
    let range = |f: &[(usize, f64)]| {
        let lo = f.iter().map(|x| x.0).min().map_or(f64::INFINITY, |v| v as f64);
        let hi = f.iter().map(|x| x.0).max().map_or(f64::NEG_INFINITY, |v| v as f64);
        (lo, hi)
    };
    let (alo, ahi) = range(&fa);
    let (blo, bhi) = range(&fb);
    let (lo, hi) = (alo.max(blo), ahi.min(bhi));
    if !(lo <= hi) || grid == 0 {
        return FrontComparison {
            lo,
            hi,
            a_beats: 0.0,
            a_matches: 0.0,
        };
    }
    let (mut beats, mut matches) = (0usize, 0usize);
    for g in 0..grid {
        let p = if grid == 1 {
            lo
        } else {
            lo + (hi - lo) * g as f64 / (grid - 1) as f64
        };
        let (va, vb) = (front_value(&fa, p), front_value(&fb, p));
        beats += (va > vb) as usize;
        matches += (va >= vb) as usize;
    }
    FrontComparison {
        lo,
        hi,
        a_beats: beats as f64 / grid as f64,
        a_matches: matches as f64 / grid as f64,
    }
}

pub fn record_points(records: &[ExperimentRecord]) -> Vec<(usize, f64)> {
    records.iter().map(|r| (r.param_count, r.ll_valid)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Deep,
    NotDeep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepnessReport {
    pub dataset: String,
    pub n_models: usize,
    pub master_seed: u64,
    pub rbm: Vec<ExperimentRecord>,
    pub srbm: Vec<ExperimentRecord>,
    pub rbm_front: Vec<ExperimentRecord>,
    pub srbm_front: Vec<ExperimentRecord>,
    pub comparison: FrontComparison,
    pub best_srbm_valid: f64,
    pub uniform_baseline: f64,
    pub verdict: Verdict,
}

/// Verdict rule: the stacked front must beat the single-RBM front on at
/// least [`DEEPNESS_THRESHOLD`] of the shared range, and the best stacked
/// model must beat the uniform model by [`MATERIAL_MARGIN`].
pub fn deepness_verdict(comparison: &FrontComparison, best_srbm_valid: f64, uniform: f64) -> Verdict {
    if comparison.a_beats >= DEEPNESS_THRESHOLD && best_srbm_valid > uniform + MATERIAL_MARGIN {
        Verdict::Deep
    } else {
        Verdict::NotDeep
    }
}

/// Train `n_models` single RBMs and `n_models` stacked RBMs and compare
/// their validation fronts.
pub fn deepness_check(
    train: &SoftDataset,
    valid: &SoftDataset,
    n_models: usize,
    master_seed: u64,
    cfg: &TrialConfig,
) -> Result<DeepnessReport> {
    if n_models < 2 {
        return Err(Error::InvalidArgument("deepness check needs at least two models per family".into()));
    }
    let rbm_hp = draw_hyperparams(ModelKind::Rbm, train.len(), n_models, master_seed)?;
    let srbm_hp = draw_hyperparams(ModelKind::Srbm, train.len(), n_models, master_seed)?;
    let rbm = run_trials(&rbm_hp, train, valid, cfg, |_| Ok(()))?;
    let srbm = run_trials(&srbm_hp, train, valid, cfg, |_| Ok(()))?;
    Ok(deepness_report(train, n_models, master_seed, rbm, srbm))
}

/// Assemble a report from already-computed records.
pub fn deepness_report(
    train: &SoftDataset,
    n_models: usize,
    master_seed: u64,
    rbm: Vec<ExperimentRecord>,
    srbm: Vec<ExperimentRecord>,
) -> DeepnessReport {
    let comparison = compare_fronts(&record_points(&srbm), &record_points(&rbm), FRONT_GRID_POINTS);
    let best_srbm_valid = srbm
        .iter()
        .map(|r| r.ll_valid)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let uniform = baseline_uniform(train.dim());
    DeepnessReport {
        dataset: train.name.trim_end_matches("-train").to_string(),
        n_models,
        master_seed,
        rbm_front: pareto_front(&rbm),
        srbm_front: pareto_front(&srbm),
        rbm,
        srbm,
        comparison,
        best_srbm_valid,
        uniform_baseline: uniform,
        verdict: deepness_verdict(&comparison, best_srbm_valid, uniform),
    }
}

/// Metadata written next to search results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: String,
    pub split_seed: u64,
    pub trials: usize,
    pub master_seed: u64,
    pub kind: ModelKind,
    pub versions: Versions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub deepgen: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            deepgen: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Write records as CSV with a header row.
pub fn write_records_csv<W: std::io::Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_writer<W: std::io::Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(out)
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
