//! Losses, the reliability gate, MLDG meta-training, fine-tuning, and the
//! DeepAll baseline trainer.
//!
//! Teacher epochs update the feature and teacher groups against the
//! normalized-rate loss; student epochs distill from the frozen,
//! most-recent teacher into the student head. Both follow the same
//! meta-train / meta-generalize pattern: an inner step on the training
//! split, a gradient re-evaluation at the shifted parameters on the
//! held-out split, and a combined meta-update. Batches, splits, and
//! initialization are all driven by one seed, so a full training run is
//! reproducible bit for bit.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::channel::{normalize_input, ChannelRealization, Domain, SystemConfig};
use crate::error::{Error, Result};
use crate::model::{
    feature_forward, lift_cmatrix, lift_features, lift_group, student_forward, teacher_forward,
    teacher_precoder, BackboneParams, FeatureConfig, PrecoderMode, SharedFeatures,
};
use crate::numerics::{CMatrix, Real, Tape};
use crate::precoding::{evaluate_rates, wmmse_default};

/// Learning rates of one parameter group: inner step `alpha`, meta-gradient
/// weight `beta`, outer step `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupRates {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
}

/// Training hyperparameters. Defaults follow the reference settings:
/// teacher/feature rates (1e-1, 1e-2, 1e-2), student rates
/// (1e-2, 1e-3, 1e-3), self-supervision weights (0.01, 0.1).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainHyper {
    pub teacher: GroupRates,
    pub feature: GroupRates,
    pub student: GroupRates,
    /// Warm-up teacher epochs E0 before the alternating phase.
    pub warmup_epochs: usize,
    /// Teacher epochs E1 per cycle.
    pub teacher_epochs: usize,
    /// Student epochs E2 per cycle.
    pub student_epochs: usize,
    pub batch_size: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Plateau length P for the reliability gate.
    pub patience: usize,
    /// Relative improvement threshold tau for the gate.
    pub plateau_tol: f64,
    /// Outer loop stops after this many cycles without validation
    /// improvement.
    pub cycle_patience: usize,
    pub max_cycles: usize,
    /// Per-domain fraction of samples held out for validation.
    pub val_fraction: f64,
    /// Budget for few-shot user-combination augmentation.
    pub finetune_cap: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            teacher: GroupRates {
                alpha: 1e-1,
                beta: 1e-2,
                eps: 1e-2,
            },
            feature: GroupRates {
                alpha: 1e-1,
                beta: 1e-2,
                eps: 1e-2,
            },
            student: GroupRates {
                alpha: 1e-2,
                beta: 1e-3,
                eps: 1e-3,
            },
            warmup_epochs: 20,
            teacher_epochs: 5,
            student_epochs: 5,
            batch_size: 1000,
            lambda0: 0.01,
            lambda1: 0.1,
            patience: 5,
            plateau_tol: 1e-3,
            cycle_patience: 3,
            max_cycles: 12,
            val_fraction: 0.1,
            finetune_cap: 20_000,
        }
    }
}

impl TrainHyper {
    /// Hyperparameters calibrated for desk-scale systems (around
    /// `N_T = 8`, `N_U = 2`, tens of domains, thousands of samples):
    /// smaller batches, a longer student phase per cycle, and student
    /// learning rates rescaled for raw-gradient steps at this size.
    pub fn desk_scale() -> Self {
        Self {
            student: GroupRates {
                alpha: 4.0,
                beta: 0.4,
                eps: 2.0,
            },
            student_epochs: 20,
            batch_size: 48,
            max_cycles: 10,
            finetune_cap: 800,
            ..Self::default()
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("teacher", &self.teacher),
            ("feature", &self.feature),
            ("student", &self.student),
        ] {
            if r.alpha <= 0.0 || r.eps <= 0.0 {
                return Err(Error::InvalidArg(format!(
                    "{name} learning rates must be positive"
                )));
            }
        }
        if self.lambda0 > self.lambda1 {
            return Err(Error::InvalidArg("lambda0 must not exceed lambda1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidArg("val_fraction must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArg("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Reliability-gate state: running best validation imitation loss and the
/// count of epochs without a relative improvement of at least tau.
#[derive(Clone, Debug, PartialEq)]
pub struct GateState {
    pub best_val: f64,
    pub epochs_since_improve: usize,
}

impl Default for GateState {
    fn default() -> Self {
        Self {
            best_val: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }
}

/// Chooses the self-supervision weight: `lambda1` on a plateau (at least P
/// epochs without a relative improvement of tau over the running best),
/// `lambda0` otherwise. Returns the weight and the advanced state.
pub fn reliability_gate(state: &GateState, val_loss: f64, hyper: &TrainHyper) -> (f64, GateState) {
    let mut next = state.clone();
    let improved = if !state.best_val.is_finite() {
        true
    } else {
        state.best_val - val_loss >= hyper.plateau_tol * state.best_val.abs()
    };
    if improved {
        next.epochs_since_improve = 0;
    } else {
        next.epochs_since_improve += 1;
    }
    next.best_val = next.best_val.min(val_loss);
    let lambda = if next.epochs_since_improve >= hyper.patience {
        hyper.lambda1
    } else {
        hyper.lambda0
    };
    (lambda, next)
}

/// Teacher loss: negative sum-rate of the teacher precoder normalized by
/// the iterative-WMMSE rate on the same realization,
/// `L_T = -R(W_T) / R_WMMSE`, with rates evaluated at unit noise power.
pub fn teacher_loss<T: Real>(h: &CMatrix<T>, w_t: &CMatrix<T>, r_wmmse: f64) -> Result<T> {
    if r_wmmse <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "r_wmmse must be positive, got {r_wmmse}"
        )));
    }
    let (_, rate) = evaluate_rates(h, w_t, 1.0)?;
    Ok(rate.scale(-1.0 / r_wmmse))
}

/// Student loss: complex mean-squared imitation of the teacher minus a
/// gated normalized-rate reward,
/// `L_S = MSE(W_T, W) - lambda R(W) / R_WMMSE`. The MSE sums squared real
/// and imaginary differences over all entries, divided by `N_T N_U`.
pub fn student_loss<T: Real>(
    w_t: &CMatrix<T>,
    w_s: &CMatrix<T>,
    h: &CMatrix<T>,
    r_wmmse: f64,
    lambda: f64,
) -> Result<T> {
    if w_t.rows() != w_s.rows() || w_t.cols() != w_s.cols() {
        return Err(Error::DimMismatch(format!(
            "teacher {}x{} vs student {}x{}",
            w_t.rows(),
            w_t.cols(),
            w_s.rows(),
            w_s.cols()
        )));
    }
    if r_wmmse <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "r_wmmse must be positive, got {r_wmmse}"
        )));
    }
    let diff = w_t.sub(w_s)?;
    let mse = diff
        .frobenius_sq()
        .scale(1.0 / (w_t.rows() * w_t.cols()) as f64);
    if lambda == 0.0 {
        return Ok(mse);
    }
    let (_, rate) = evaluate_rates(h, w_s, 1.0)?;
    Ok(mse - rate.scale(lambda / r_wmmse))
}

/// One training sample: the clean normalized channel used by losses, the
/// (possibly estimation-noisy) normalized model input, and the cached
/// iterative-WMMSE reference rate.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub h_clean_norm: CMatrix,
    pub h_input_norm: CMatrix,
    pub r_wmmse: f64,
}

/// All samples of one domain, ready for training.
#[derive(Clone, Debug)]
pub struct DomainDataset {
    pub domain: Domain,
    pub samples: Vec<TrainSample>,
}

/// Builds training samples for one domain from noisy/clean channel pairs:
/// normalizes both with the domain transmit power and caches the WMMSE
/// reference rate of the clean normalized channel (sigma = 1, unit budget).
pub fn prepare_samples(
    cfg: &SystemConfig,
    pairs: &[(ChannelRealization, ChannelRealization)],
) -> Result<Vec<TrainSample>> {
    let sigma = cfg.sigma();
    let mut out = Vec::with_capacity(pairs.len());
    for (clean, noisy) in pairs {
        let h_clean_norm = normalize_input(&clean.h, clean.domain.p_tx, sigma);
        let h_input_norm = normalize_input(&noisy.h, noisy.domain.p_tx, sigma);
        let (_, state) = wmmse_default(&h_clean_norm, 1.0, 1.0)?;
        let r_wmmse = *state.rate_trace.last().expect("trace nonempty");
        out.push(TrainSample {
            h_clean_norm,
            h_input_norm,
            r_wmmse,
        });
    }
    Ok(out)
}

/// Which split a meta-step gradient request is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaSplit {
    Train,
    Gen,
}

/// One MLDG epoch update on arbitrary per-group parameter vectors
/// (Algorithm-style mechanics, independent of the model):
///
/// 1. `delta = grad(params, Train)`
/// 2. inner step per group: `params' = params - alpha delta`
/// 3. `delta' = grad(params', Gen)`
/// 4. meta-update per group: `params -= eps (delta + beta delta')`
///
/// With all `beta = 0` the update equals a plain averaged-gradient step on
/// the training split.
pub fn mldg_step(
    groups: &mut [Vec<f64>],
    rates: &[GroupRates],
    mut grad: impl FnMut(&[Vec<f64>], MetaSplit) -> Result<Vec<Vec<f64>>>,
) -> Result<()> {
    assert_eq!(groups.len(), rates.len());
    let delta = grad(groups, MetaSplit::Train)?;
    let shifted: Vec<Vec<f64>> = groups
        .iter()
        .zip(rates)
        .zip(&delta)
        .map(|((g, r), d)| g.iter().zip(d).map(|(x, dx)| x - r.alpha * dx).collect())
        .collect();
    let delta_gen = grad(&shifted, MetaSplit::Gen)?;
    for (((g, r), d), dg) in groups.iter_mut().zip(rates).zip(&delta).zip(&delta_gen) {
        for ((x, dx), dgx) in g.iter_mut().zip(d).zip(dg) {
            *x -= r.eps * (dx + r.beta * dgx);
        }
    }
    Ok(())
}

/// Gradient (and loss) of `L_T` for one sample with respect to the
/// concatenated (pi, theta) parameters.
fn teacher_sample_grad(
    params: &BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    sample: &TrainSample,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let pi_t = lift_group(&tape, &params.pi);
    let theta_t = lift_group(&tape, &params.theta);
    let n = params.pi.n_scalars() + params.theta.n_scalars();
    let h_in = lift_cmatrix(&tape, &sample.h_input_norm);
    let feats = feature_forward(&pi_t, cfg, fc, &h_in)?;
    let aux = teacher_forward(&theta_t, &feats, 1.0)?;
    let w_t = teacher_precoder(&h_in, &aux)?;
    let h_clean = lift_cmatrix(&tape, &sample.h_clean_norm);
    let loss = teacher_loss(&h_clean, &w_t, sample.r_wmmse)?;
    let grads = loss.backward();
    Ok((loss.value(), grads.leading(n).to_vec()))
}

fn accumulate(acc: &mut [f64], grad: &[f64]) {
    for (a, g) in acc.iter_mut().zip(grad) {
        *a += g;
    }
}

/// Mean-of-domain-means teacher gradient over a list of domain batches.
fn teacher_meta_grad(
    params: &BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    domains: &[&[TrainSample]],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n_pi = params.pi.n_scalars();
    let n = n_pi + params.theta.n_scalars();
    let mut acc = vec![0.0; n];
    let mut loss_acc = 0.0;
    for batch in domains {
        let mut dom = vec![0.0; n];
        let mut dom_loss = 0.0;
        for s in *batch {
            let (l, g) = teacher_sample_grad(params, cfg, fc, s)?;
            accumulate(&mut dom, &g);
            dom_loss += l;
        }
        let inv = 1.0 / batch.len() as f64;
        for (a, d) in acc.iter_mut().zip(&dom) {
            *a += d * inv;
        }
        loss_acc += dom_loss * inv;
    }
    let inv = 1.0 / domains.len() as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    let (g_pi, g_theta) = acc.split_at(n_pi);
    Ok((loss_acc * inv, g_pi.to_vec(), g_theta.to_vec()))
}

/// One MLDG teacher epoch over disjoint train/generalization domain
/// batches; updates the feature and teacher groups in place and returns the
/// mean training loss.
pub fn mldg_teacher_epoch(
    params: &mut BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    d_train: &[&[TrainSample]],
    d_gen: &[&[TrainSample]],
    hyper: &TrainHyper,
) -> Result<f64> {
    if d_train.is_empty() || d_gen.is_empty() {
        return Err(Error::InvalidArg("empty meta split".into()));
    }
    let mut groups = vec![params.pi.flatten(), params.theta.flatten()];
    let rates = [hyper.feature, hyper.teacher];
    let mut scratch = params.clone();
    let mut train_loss = 0.0;
    mldg_step(&mut groups, &rates, |g, split| {
        scratch.pi.set_from_flat(&g[0]);
        scratch.theta.set_from_flat(&g[1]);
        let domains = match split {
            MetaSplit::Train => d_train,
            MetaSplit::Gen => d_gen,
        };
        let (loss, g_pi, g_theta) = teacher_meta_grad(&scratch, cfg, fc, domains)?;
        if split == MetaSplit::Train {
            train_loss = loss;
        }
        Ok(vec![g_pi, g_theta])
    })?;
    params.pi.set_from_flat(&groups[0]);
    params.theta.set_from_flat(&groups[1]);
    Ok(train_loss)
}

/// Frozen per-sample context for a student epoch: shared features and the
/// teacher target are functions of (pi, theta) only, which do not move
/// while the student trains.
struct StudentCtx {
    feats: SharedFeatures<f64>,
    w_t: CMatrix<f64>,
    h_clean_norm: CMatrix<f64>,
    r_wmmse: f64,
}

fn student_ctx(
    params: &BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    sample: &TrainSample,
) -> Result<StudentCtx> {
    let feats = feature_forward(&params.pi, cfg, fc, &sample.h_input_norm)?;
    let aux = teacher_forward(&params.theta, &feats, 1.0)?;
    let w_t = teacher_precoder(&sample.h_input_norm, &aux)?;
    Ok(StudentCtx {
        feats,
        w_t,
        h_clean_norm: sample.h_clean_norm.clone(),
        r_wmmse: sample.r_wmmse,
    })
}

fn student_sample_grad(
    params: &BackboneParams,
    cfg: &SystemConfig,
    ctx: &StudentCtx,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let phi_t = lift_group(&tape, &params.phi);
    let n = params.phi.n_scalars();
    let feats_t = lift_features(&tape, &ctx.feats);
    let out = student_forward(&phi_t, &feats_t, params.mode, cfg)?;
    let w_s = out.composite()?;
    let w_t = lift_cmatrix(&tape, &ctx.w_t);
    let h = lift_cmatrix(&tape, &ctx.h_clean_norm);
    let loss = student_loss(&w_t, &w_s, &h, ctx.r_wmmse, lambda)?;
    let grads = loss.backward();
    Ok((loss.value(), grads.leading(n).to_vec()))
}

fn student_meta_grad(
    params: &BackboneParams,
    cfg: &SystemConfig,
    domains: &[Vec<StudentCtx>],
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = params.phi.n_scalars();
    let mut acc = vec![0.0; n];
    let mut loss_acc = 0.0;
    for batch in domains {
        let mut dom = vec![0.0; n];
        let mut dom_loss = 0.0;
        for ctx in batch {
            let (l, g) = student_sample_grad(params, cfg, ctx, lambda)?;
            accumulate(&mut dom, &g);
            dom_loss += l;
        }
        let inv = 1.0 / batch.len() as f64;
        for (a, d) in acc.iter_mut().zip(&dom) {
            *a += d * inv;
        }
        loss_acc += dom_loss * inv;
    }
    let inv = 1.0 / domains.len() as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    Ok((loss_acc * inv, acc))
}

/// Mean imitation-only loss (the MSE term) of the current student against
/// the current teacher on a sample set.
pub fn mean_imitation_loss(
    params: &BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    samples: &[&TrainSample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArg("empty validation set".into()));
    }
    let mut acc = 0.0;
    for s in samples {
        let ctx = student_ctx(params, cfg, fc, s)?;
        let out = student_forward(&params.phi, &ctx.feats, params.mode, cfg)?;
        let w_s = out.composite()?;
        acc += student_loss(&ctx.w_t, &w_s, &ctx.h_clean_norm, ctx.r_wmmse, 0.0)?;
    }
    Ok(acc / samples.len() as f64)
}

/// One MLDG student epoch: reads the gate with the validation imitation
/// loss, then applies the two-step meta-update on the student group with
/// teacher targets recomputed under the current frozen (pi, theta).
/// Returns (lambda used, validation loss, mean training loss).
pub fn mldg_student_epoch(
    params: &mut BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    d_train: &[&[TrainSample]],
    d_gen: &[&[TrainSample]],
    hyper: &TrainHyper,
    gate: &mut GateState,
    val: &[&TrainSample],
) -> Result<(f64, f64, f64)> {
    if d_train.is_empty() || d_gen.is_empty() {
        return Err(Error::InvalidArg("empty meta split".into()));
    }
    let val_loss = if val.is_empty() {
        f64::INFINITY
    } else {
        mean_imitation_loss(params, cfg, fc, val)?
    };
    let (lambda, next_gate) = reliability_gate(gate, val_loss, hyper);
    *gate = next_gate;

    // Teacher targets and features are frozen for the whole epoch.
    let ctx_of = |domains: &[&[TrainSample]]| -> Result<Vec<Vec<StudentCtx>>> {
        domains
            .iter()
            .map(|batch| {
                batch
                    .iter()
                    .map(|s| student_ctx(params, cfg, fc, s))
                    .collect()
            })
            .collect()
    };
    let train_ctx = ctx_of(d_train)?;
    let gen_ctx = ctx_of(d_gen)?;

    let mut groups = vec![params.phi.flatten()];
    let rates = [hyper.student];
    let mut scratch = params.clone();
    let mut train_loss = 0.0;
    mldg_step(&mut groups, &rates, |g, split| {
        scratch.phi.set_from_flat(&g[0]);
        let domains = match split {
            MetaSplit::Train => &train_ctx,
            MetaSplit::Gen => &gen_ctx,
        };
        let (loss, grad) = student_meta_grad(&scratch, cfg, domains, lambda)?;
        if split == MetaSplit::Train {
            train_loss = loss;
        }
        Ok(vec![grad])
    })?;
    params.phi.set_from_flat(&groups[0]);
    Ok((lambda, val_loss, train_loss))
}

/// One plain pooled teacher step (the DeepAll baseline): mean gradient over
/// the pooled batches, stepped with the outer learning rates.
pub fn deepall_teacher_epoch(
    params: &mut BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    batches: &[&[TrainSample]],
    hyper: &TrainHyper,
) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::InvalidArg("empty batch list".into()));
    }
    let pooled: Vec<&TrainSample> = batches.iter().flat_map(|b| b.iter()).collect();
    let n_pi = params.pi.n_scalars();
    let n = n_pi + params.theta.n_scalars();
    let mut acc = vec![0.0; n];
    let mut loss_acc = 0.0;
    for s in &pooled {
        let (l, g) = teacher_sample_grad(params, cfg, fc, s)?;
        accumulate(&mut acc, &g);
        loss_acc += l;
    }
    let inv = 1.0 / pooled.len() as f64;
    let mut pi_flat = params.pi.flatten();
    let mut theta_flat = params.theta.flatten();
    for (i, x) in pi_flat.iter_mut().enumerate() {
        *x -= hyper.feature.eps * acc[i] * inv;
    }
    for (i, x) in theta_flat.iter_mut().enumerate() {
        *x -= hyper.teacher.eps * acc[n_pi + i] * inv;
    }
    params.pi.set_from_flat(&pi_flat);
    params.theta.set_from_flat(&theta_flat);
    Ok(loss_acc * inv)
}

/// One plain pooled student step for the DeepAll baseline.
pub fn deepall_student_epoch(
    params: &mut BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    batches: &[&[TrainSample]],
    hyper: &TrainHyper,
    gate: &mut GateState,
    val: &[&TrainSample],
) -> Result<(f64, f64, f64)> {
    if batches.is_empty() {
        return Err(Error::InvalidArg("empty batch list".into()));
    }
    let val_loss = if val.is_empty() {
        f64::INFINITY
    } else {
        mean_imitation_loss(params, cfg, fc, val)?
    };
    let (lambda, next_gate) = reliability_gate(gate, val_loss, hyper);
    *gate = next_gate;
    let mut ctxs = Vec::new();
    for batch in batches {
        for s in *batch {
            ctxs.push(student_ctx(params, cfg, fc, s)?);
        }
    }
    let n = params.phi.n_scalars();
    let mut acc = vec![0.0; n];
    let mut loss_acc = 0.0;
    for ctx in &ctxs {
        let (l, g) = student_sample_grad(params, cfg, ctx, lambda)?;
        accumulate(&mut acc, &g);
        loss_acc += l;
    }
    let inv = 1.0 / ctxs.len() as f64;
    let mut phi_flat = params.phi.flatten();
    for (i, x) in phi_flat.iter_mut().enumerate() {
        *x -= hyper.student.eps * acc[i] * inv;
    }
    params.phi.set_from_flat(&phi_flat);
    Ok((lambda, val_loss, loss_acc * inv))
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    pub phase: String,
    pub split: String,
    pub loss: f64,
    pub mean_rate: f64,
}

/// A trained backbone plus its training log.
pub struct TrainOutcome {
    pub params: BackboneParams,
    pub log: Vec<LogRecord>,
}

/// Mean normalized student sum-rate `R(student) / R_WMMSE` over samples,
/// evaluated on the clean channels.
pub fn mean_student_norm_rate(
    params: &BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    samples: &[&TrainSample],
) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        let feats = feature_forward(&params.pi, cfg, fc, &s.h_input_norm)?;
        let w_s = student_forward(&params.phi, &feats, params.mode, cfg)?.composite()?;
        let (_, r) = evaluate_rates(&s.h_clean_norm, &w_s, 1.0)?;
        acc += r / s.r_wmmse;
    }
    Ok(acc / samples.len() as f64)
}

/// Mean teacher loss over samples (no gradients), for progress checks.
pub fn mean_teacher_loss(
    params: &BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    samples: &[&TrainSample],
) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        let feats = feature_forward(&params.pi, cfg, fc, &s.h_input_norm)?;
        let aux = teacher_forward(&params.theta, &feats, 1.0)?;
        let w_t = teacher_precoder(&s.h_input_norm, &aux)?;
        acc += teacher_loss(&s.h_clean_norm, &w_t, s.r_wmmse)?;
    }
    Ok(acc / samples.len() as f64)
}

/// Index bookkeeping for one training run: per-domain train/validation
/// sample splits.
struct DataSplit {
    train_idx: Vec<Vec<usize>>,
    val_idx: Vec<Vec<usize>>,
}

fn split_validation(data: &[DomainDataset], val_fraction: f64, rng: &mut StdRng) -> DataSplit {
    let mut train_idx = Vec::with_capacity(data.len());
    let mut val_idx = Vec::with_capacity(data.len());
    for d in data {
        let mut idx: Vec<usize> = (0..d.samples.len()).collect();
        idx.shuffle(rng);
        let n_val = ((d.samples.len() as f64 * val_fraction).round() as usize)
            .min(d.samples.len().saturating_sub(1));
        val_idx.push(idx[..n_val].to_vec());
        train_idx.push(idx[n_val..].to_vec());
    }
    DataSplit { train_idx, val_idx }
}

fn draw_batch<'a>(
    d: &'a DomainDataset,
    pool: &[usize],
    batch_size: usize,
    rng: &mut StdRng,
) -> Vec<TrainSample>
where
    TrainSample: Clone,
{
    let take = batch_size.min(pool.len());
    let chosen = rand::seq::index::sample(rng, pool.len(), take);
    let mut batch = Vec::with_capacity(take);
    for i in chosen.iter() {
        batch.push(d.samples[pool[i]].clone());
    }
    let _ = &d.domain;
    batch
}

/// Splits domain indices into disjoint meta-train / meta-generalization
/// subsets at the 5:2 ratio used throughout.
fn split_domains(n: usize, rng: &mut StdRng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = ((n as f64 * 5.0 / 7.0).round() as usize).clamp(1, n - 1);
    (idx[..n_train].to_vec(), idx[n_train..].to_vec())
}

/// Ratio-preserving split sizes for a domain count, (train, gen).
pub fn domain_split_sizes(n: usize) -> (usize, usize) {
    let n_train = ((n as f64 * 5.0 / 7.0).round() as usize).clamp(1, n.saturating_sub(1));
    (n_train, n - n_train)
}

struct EpochData {
    train_batches: Vec<Vec<TrainSample>>,
    gen_batches: Vec<Vec<TrainSample>>,
}

fn epoch_batches(
    data: &[DomainDataset],
    split: &DataSplit,
    train_doms: &[usize],
    gen_doms: &[usize],
    batch_size: usize,
    rng: &mut StdRng,
) -> EpochData {
    let mut train_batches = Vec::with_capacity(train_doms.len());
    for &di in train_doms {
        train_batches.push(draw_batch(&data[di], &split.train_idx[di], batch_size, rng));
    }
    let mut gen_batches = Vec::with_capacity(gen_doms.len());
    for &di in gen_doms {
        gen_batches.push(draw_batch(&data[di], &split.train_idx[di], batch_size, rng));
    }
    EpochData {
        train_batches,
        gen_batches,
    }
}

fn as_slices(batches: &[Vec<TrainSample>]) -> Vec<&[TrainSample]> {
    batches.iter().map(|b| b.as_slice()).collect()
}

fn val_refs<'a>(
    data: &'a [DomainDataset],
    split: &DataSplit,
    doms: &[usize],
) -> Vec<&'a TrainSample> {
    let mut out = Vec::new();
    for &di in doms {
        for &si in &split.val_idx[di] {
            out.push(&data[di].samples[si]);
        }
    }
    out
}

/// Trains the full backbone with MLDG: a teacher-only warm-up, then
/// alternating teacher/student cycles with a fresh meta split each cycle,
/// until the validation metric stops improving or `max_cycles` is reached.
pub fn train_backbone(
    data: &[DomainDataset],
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    hyper: &TrainHyper,
    mode: PrecoderMode,
    seed: u64,
) -> Result<TrainOutcome> {
    train_impl(data, cfg, fc, hyper, mode, seed, Trainer::Mldg)
}

/// Trains the identical architecture with the DeepAll baseline: all domains
/// merged, plain pooled gradient descent on the teacher then student
/// losses, same warm-up and alternation schedule, no meta splits.
pub fn train_deepall(
    data: &[DomainDataset],
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    hyper: &TrainHyper,
    mode: PrecoderMode,
    seed: u64,
) -> Result<TrainOutcome> {
    train_impl(data, cfg, fc, hyper, mode, seed, Trainer::DeepAll)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Trainer {
    Mldg,
    DeepAll,
}

fn train_impl(
    data: &[DomainDataset],
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    hyper: &TrainHyper,
    mode: PrecoderMode,
    seed: u64,
    trainer: Trainer,
) -> Result<TrainOutcome> {
    if data.len() < 2 {
        return Err(Error::InvalidArg(
            "training needs at least two domains".into(),
        ));
    }
    hyper.validate()?;
    for d in data {
        if d.samples.is_empty() {
            return Err(Error::InvalidArg(format!(
                "domain {} has no samples",
                d.domain.site_id
            )));
        }
    }
    let mut params = BackboneParams::init(cfg, fc, mode, seed)?;
    let mut rng = StdRng::seed_from_u64(seed ^ 0x7261_696E_5F72_6E67);
    let split = split_validation(data, hyper.val_fraction, &mut rng);
    let all_doms: Vec<usize> = (0..data.len()).collect();
    let mut log: Vec<LogRecord> = Vec::new();
    let mut gate = GateState::default();
    let mut epoch = 0usize;

    let run_teacher_epochs = |params: &mut BackboneParams,
                              rng: &mut StdRng,
                              epoch: &mut usize,
                              log: &mut Vec<LogRecord>,
                              count: usize,
                              phase: &str,
                              train_doms: &[usize],
                              gen_doms: &[usize]|
     -> Result<()> {
        for _ in 0..count {
            let batches = epoch_batches(data, &split, train_doms, gen_doms, hyper.batch_size, rng);
            let loss = match trainer {
                Trainer::Mldg => mldg_teacher_epoch(
                    params,
                    cfg,
                    fc,
                    &as_slices(&batches.train_batches),
                    &as_slices(&batches.gen_batches),
                    hyper,
                )?,
                Trainer::DeepAll => {
                    let mut all = batches.train_batches.clone();
                    all.extend(batches.gen_batches.clone());
                    deepall_teacher_epoch(params, cfg, fc, &as_slices(&all), hyper)?
                }
            };
            *epoch += 1;
            log.push(LogRecord {
                epoch: *epoch,
                phase: phase.into(),
                split: "train".into(),
                loss,
                mean_rate: -loss,
            });
        }
        Ok(())
    };

    // Warm-up: teacher alone on the initial split.
    let (warm_train, warm_gen) = match trainer {
        Trainer::Mldg => split_domains(data.len(), &mut rng),
        Trainer::DeepAll => {
            // Pooled: splits are merged anyway, but keep the rng stream
            // aligned so the two trainers consume identical randomness.
            split_domains(data.len(), &mut rng)
        }
    };
    run_teacher_epochs(
        &mut params,
        &mut rng,
        &mut epoch,
        &mut log,
        hyper.warmup_epochs,
        "warmup-teacher",
        &warm_train,
        &warm_gen,
    )?;

    let mut best_val = f64::INFINITY;
    let mut stale_cycles = 0usize;
    let mut best_params = params.clone();
    for _cycle in 0..hyper.max_cycles {
        let (train_doms, gen_doms) = split_domains(data.len(), &mut rng);
        run_teacher_epochs(
            &mut params,
            &mut rng,
            &mut epoch,
            &mut log,
            hyper.teacher_epochs,
            "teacher",
            &train_doms,
            &gen_doms,
        )?;
        let val_set = val_refs(data, &split, &train_doms);
        for _ in 0..hyper.student_epochs {
            let batches = epoch_batches(
                data,
                &split,
                &train_doms,
                &gen_doms,
                hyper.batch_size,
                &mut rng,
            );
            let (_lambda, val_loss, train_loss) = match trainer {
                Trainer::Mldg => mldg_student_epoch(
                    &mut params,
                    cfg,
                    fc,
                    &as_slices(&batches.train_batches),
                    &as_slices(&batches.gen_batches),
                    hyper,
                    &mut gate,
                    &val_set,
                )?,
                Trainer::DeepAll => {
                    let mut all = batches.train_batches.clone();
                    all.extend(batches.gen_batches.clone());
                    deepall_student_epoch(
                        &mut params,
                        cfg,
                        fc,
                        &as_slices(&all),
                        hyper,
                        &mut gate,
                        &val_set,
                    )?
                }
            };
            epoch += 1;
            log.push(LogRecord {
                epoch,
                phase: "student".into(),
                split: "train".into(),
                loss: train_loss,
                mean_rate: f64::NAN,
            });
            log.push(LogRecord {
                epoch,
                phase: "student".into(),
                split: "val".into(),
                loss: val_loss,
                mean_rate: f64::NAN,
            });
        }
        // Outer convergence: mean negative normalized student rate over the
        // full validation holdout.
        let val_all = val_refs(data, &split, &all_doms);
        let metric = if val_all.is_empty() {
            f64::INFINITY
        } else {
            -mean_student_norm_rate(&params, cfg, fc, &val_all)?
        };
        epoch += 1;
        log.push(LogRecord {
            epoch,
            phase: "cycle".into(),
            split: "val".into(),
            loss: metric,
            mean_rate: -metric,
        });
        if metric < best_val - 1e-6 {
            best_val = metric;
            stale_cycles = 0;
            best_params = params.clone();
        } else {
            stale_cycles += 1;
            if stale_cycles >= hyper.cycle_patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best_params,
        log,
    })
}

/// Expands a few-shot local dataset by user-row combinations, capped at
/// `cap` by uniform subsampling. Samples are grouped by transmit power so a
/// combined channel never mixes rows taken at different powers; the cap is
/// shared evenly across groups.
pub fn augmented_finetune_set(
    local: &[ChannelRealization],
    cap: usize,
    seed: u64,
) -> Result<Vec<ChannelRealization>> {
    use crate::channel::augment_user_combinations_capped;
    if local.is_empty() {
        return Err(Error::InvalidArg("empty fine-tuning dataset".into()));
    }
    let mut groups: Vec<(u64, Vec<ChannelRealization>)> = Vec::new();
    for c in local {
        let key = c.domain.p_tx.to_bits();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(c.clone()),
            None => groups.push((key, vec![c.clone()])),
        }
    }
    let per_group = (cap / groups.len()).max(1);
    let mut out = Vec::new();
    for (gi, (_, g)) in groups.iter().enumerate() {
        out.extend(augment_user_combinations_capped(
            g,
            per_group,
            seed.wrapping_add(gi as u64),
        )?);
    }
    Ok(out)
}

/// Self-supervised site fine-tuning on unlabeled local (noisy) channels:
/// minimizes `L_site = -R(W_bar)` on the noisy normalized inputs with plain
/// gradient steps. Updates the student head and, unless `freeze_pi`, the
/// feature extractor. `epochs = 0` or `lr = 0` leaves the parameters
/// bit-identical.
pub fn finetune_site(
    params: &mut BackboneParams,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    local: &[ChannelRealization],
    epochs: usize,
    lr: f64,
    freeze_pi: bool,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if local.is_empty() {
        return Err(Error::InvalidArg("empty fine-tuning dataset".into()));
    }
    if lr < 0.0 {
        return Err(Error::InvalidArg(
            "learning rate must be nonnegative".into(),
        ));
    }
    if epochs == 0 || lr == 0.0 {
        return Ok(Vec::new());
    }
    let sigma = cfg.sigma();
    let inputs: Vec<CMatrix> = local
        .iter()
        .map(|c| normalize_input(&c.h, c.domain.p_tx, sigma))
        .collect();
    let n_pi = params.pi.n_scalars();
    let n_phi = params.phi.n_scalars();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(epochs);
    let batch_size = batch_size.max(1);
    for _ in 0..epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let mut acc = vec![0.0; n_pi + n_phi];
            let mut batch_loss = 0.0;
            for &i in chunk {
                let tape = Tape::new();
                let pi_t = lift_group(&tape, &params.pi);
                let phi_t = lift_group(&tape, &params.phi);
                let h_t = lift_cmatrix(&tape, &inputs[i]);
                let feats = feature_forward(&pi_t, cfg, fc, &h_t)?;
                let w_s = student_forward(&phi_t, &feats, params.mode, cfg)?.composite()?;
                let (_, rate) = evaluate_rates(&h_t, &w_s, 1.0)?;
                let loss = -rate;
                batch_loss += loss.value();
                let grads = loss.backward();
                accumulate(&mut acc, grads.leading(n_pi + n_phi));
            }
            let inv = 1.0 / chunk.len() as f64;
            if !freeze_pi {
                let mut pi_flat = params.pi.flatten();
                for (x, g) in pi_flat.iter_mut().zip(&acc[..n_pi]) {
                    *x -= lr * g * inv;
                }
                params.pi.set_from_flat(&pi_flat);
            }
            let mut phi_flat = params.phi.flatten();
            for (x, g) in phi_flat.iter_mut().zip(&acc[n_pi..]) {
                *x -= lr * g * inv;
            }
            params.phi.set_from_flat(&phi_flat);
            epoch_loss += batch_loss;
        }
        losses.push(epoch_loss / inputs.len() as f64);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, SiteSpec};
    use crate::numerics::Complex;
    use rand::Rng;

    fn tiny_system() -> (SystemConfig, FeatureConfig) {
        let cfg = SystemConfig {
            n_tx: 4,
            n_users: 2,
            n_rf: 2,
            noise_power: 1.0,
            array_rows: 2,
            array_cols: 2,
            carrier_spacing: 0.5,
        };
        let fc = FeatureConfig::for_system(&cfg);
        (cfg, fc)
    }

    fn tiny_dataset(cfg: &SystemConfig, n_domains: usize, per_domain: usize) -> Vec<DomainDataset> {
        let mut out = Vec::new();
        for d in 0..n_domains {
            let site = SiteSpec::new(&format!("site{d}"), 100 + d as u64);
            let domain = Domain {
                site_id: site.site_id.clone(),
                p_tx: 2.0,
                los: d % 2 == 0,
                beta: 0.0,
            };
            let channels =
                sample_channels(cfg, &site, &domain, per_domain, 7_000 + d as u64).unwrap();
            let pairs: Vec<_> = channels.iter().map(|c| (c.clone(), c.clone())).collect();
            let samples = prepare_samples(cfg, &pairs).unwrap();
            out.push(DomainDataset { domain, samples });
        }
        out
    }

    #[test]
    fn teacher_loss_reference_values() {
        let (cfg, _) = tiny_system();
        let h = CMatrix::identity(2);
        let w = CMatrix::identity(2).scale(1.0 / 2f64.sqrt());
        let (_, r) = evaluate_rates(&h, &w, 1.0).unwrap();
        // Normalizing by the precoder's own rate gives exactly -1.
        assert!((teacher_loss(&h, &w, r).unwrap() + 1.0).abs() < 1e-15);
        // Zero precoder: rate 0, loss 0.
        let z = CMatrix::zeros(2, 2);
        assert_eq!(teacher_loss(&h, &z, 3.0).unwrap(), 0.0);
        assert!(teacher_loss(&h, &w, 0.0).is_err());
        let _ = cfg;
    }

    #[test]
    fn student_loss_composition() {
        let mut rng = StdRng::seed_from_u64(5);
        let w_t = CMatrix::from_fn(3, 2, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let w_s = CMatrix::from_fn(3, 2, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = CMatrix::from_fn(2, 3, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        // lambda = 0: exactly the MSE, nonnegative, zero at w_s = w_t.
        let mse = student_loss(&w_t, &w_s, &h, 1.0, 0.0).unwrap();
        assert!(mse >= 0.0);
        assert_eq!(student_loss(&w_t, &w_t, &h, 1.0, 0.0).unwrap(), 0.0);
        // Hand-composed combination at lambda = 0.1.
        let r_wmmse = 2.5;
        let (_, r) = evaluate_rates(&h, &w_s, 1.0).unwrap();
        let expect = mse - 0.1 * r / r_wmmse;
        let got = student_loss(&w_t, &w_s, &h, r_wmmse, 0.1).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn imitation_gradient_vanishes_at_the_teacher_target() {
        // With lambda = 0 the loss is the pure imitation MSE, whose
        // gradient through the student output is zero exactly at
        // W = W_T.
        use crate::model::lift_cmatrix;
        use crate::numerics::Tape;
        let mut rng = StdRng::seed_from_u64(6);
        let w_t = CMatrix::from_fn(4, 2, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = CMatrix::from_fn(2, 4, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let tape = Tape::new();
        let w_s = lift_cmatrix(&tape, &w_t);
        let n_vars = tape.len();
        let loss = student_loss(
            &lift_cmatrix(&tape, &w_t),
            &w_s,
            &lift_cmatrix(&tape, &h),
            1.0,
            0.0,
        )
        .unwrap();
        assert_eq!(loss.val(), 0.0);
        let grads = loss.backward();
        for g in grads.leading(n_vars) {
            assert_eq!(*g, 0.0);
        }
    }

    #[test]
    fn teacher_loss_is_minus_one_at_wmmse_fixed_point() {
        // Replaying a single step from converged WMMSE auxiliaries
        // reproduces the converged precoder, so the normalized teacher
        // loss is exactly -1 (up to solver tolerance).
        use crate::model::teacher_precoder;
        use crate::model::TeacherAux;
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..10 {
            let h = CMatrix::from_fn(2, 4, |_, _| {
                Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let w0 = crate::precoding::zf_precoder(&h, 1.0).unwrap();
            let (_, state) = crate::precoding::wmmse(&h, 1.0, 1.0, &w0, 500, 1e-10).unwrap();
            let r_wmmse = *state.rate_trace.last().unwrap();
            let w_replay = teacher_precoder(
                &h,
                &TeacherAux {
                    v: state.v.clone(),
                    u: state.u.clone(),
                    mu: state.mu,
                },
            )
            .unwrap();
            let loss = teacher_loss(&h, &w_replay, r_wmmse).unwrap();
            assert!(
                (loss + 1.0).abs() < 1e-6,
                "fixed-point teacher loss {loss} should be -1"
            );
        }
    }

    #[test]
    fn gate_state_machine() {
        let hyper = TrainHyper {
            patience: 3,
            plateau_tol: 1e-3,
            ..TrainHyper::default()
        };
        let mut state = GateState::default();
        // First epoch: always lambda0.
        let (l, s) = reliability_gate(&state, 1.0, &hyper);
        assert_eq!(l, hyper.lambda0);
        state = s;
        // Three consecutive sub-tau epochs reach the plateau.
        for i in 0..3 {
            let (l, s) = reliability_gate(&state, 1.0 - 1e-6 * (i as f64), &hyper);
            state = s;
            if i < 2 {
                assert_eq!(l, hyper.lambda0, "epoch {i}");
            } else {
                assert_eq!(l, hyper.lambda1, "epoch {i}");
            }
        }
        assert_eq!(state.epochs_since_improve, 3);
        // A genuine improvement resets the counter and the gate.
        let (l, s) = reliability_gate(&state, 0.5, &hyper);
        assert_eq!(l, hyper.lambda0);
        assert_eq!(s.epochs_since_improve, 0);
        assert_eq!(s.best_val, 0.5);
    }

    #[test]
    fn lambda_stays_in_the_two_level_set() {
        let hyper = TrainHyper::default();
        let mut state = GateState::default();
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..200 {
            let (l, s) = reliability_gate(&state, rng.gen_range(-1.0..1.0), &hyper);
            assert!(l == hyper.lambda0 || l == hyper.lambda1);
            state = s;
        }
    }

    #[test]
    fn mldg_step_degenerates_to_plain_gradient_with_zero_beta() {
        // Quadratic toy: L(x) = 0.5 ||x - c||^2 per split.
        let c_train = [1.0, -2.0];
        let c_gen = [3.0, 0.5];
        let rates = [GroupRates {
            alpha: 0.2,
            beta: 0.0,
            eps: 0.1,
        }];
        let mut groups = vec![vec![0.0, 0.0]];
        mldg_step(&mut groups, &rates, |g, split| {
            let c = match split {
                MetaSplit::Train => &c_train,
                MetaSplit::Gen => &c_gen,
            };
            Ok(vec![g[0].iter().zip(c).map(|(x, ci)| x - ci).collect()])
        })
        .unwrap();
        // Plain step: x - eps * (x - c_train).
        let expect = [0.1 * 1.0, 0.1 * -2.0];
        for (x, e) in groups[0].iter().zip(&expect) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn mldg_step_matches_hand_trace() {
        // Hand trace of the two-step arithmetic on a quadratic.
        // L_train = 0.5 (x - 1)^2, L_gen = 0.5 (x - 3)^2,
        // alpha = 0.5, beta = 2.0, eps = 0.1, x0 = 0:
        //   delta       = x0 - 1 = -1
        //   x'          = x0 - 0.5 * (-1) = 0.5
        //   delta'      = x' - 3 = -2.5
        //   x1          = x0 - 0.1 * (-1 + 2 * -2.5) = 0.6
        let rates = [GroupRates {
            alpha: 0.5,
            beta: 2.0,
            eps: 0.1,
        }];
        let mut groups = vec![vec![0.0]];
        mldg_step(&mut groups, &rates, |g, split| {
            let c = match split {
                MetaSplit::Train => 1.0,
                MetaSplit::Gen => 3.0,
            };
            Ok(vec![vec![g[0][0] - c]])
        })
        .unwrap();
        assert!((groups[0][0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn teacher_epoch_beta_zero_matches_plain_step() {
        let (cfg, fc) = tiny_system();
        let data = tiny_dataset(&cfg, 2, 4);
        let hyper = TrainHyper {
            teacher: GroupRates {
                alpha: 0.05,
                beta: 0.0,
                eps: 0.01,
            },
            feature: GroupRates {
                alpha: 0.05,
                beta: 0.0,
                eps: 0.01,
            },
            ..TrainHyper::default()
        };
        let base = BackboneParams::init(&cfg, &fc, PrecoderMode::Fdp, 3).unwrap();
        let batch: Vec<&TrainSample> = data[0].samples.iter().collect();
        let batch: Vec<TrainSample> = batch.into_iter().cloned().collect();

        let mut via_mldg = base.clone();
        mldg_teacher_epoch(&mut via_mldg, &cfg, &fc, &[&batch], &[&batch], &hyper).unwrap();

        let mut via_plain = base.clone();
        deepall_teacher_epoch(&mut via_plain, &cfg, &fc, &[&batch], &hyper).unwrap();

        let a: Vec<f64> = via_mldg
            .pi
            .flatten()
            .into_iter()
            .chain(via_mldg.theta.flatten())
            .collect();
        let b: Vec<f64> = via_plain
            .pi
            .flatten()
            .into_iter()
            .chain(via_plain.theta.flatten())
            .collect();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn finetune_zero_epochs_or_zero_lr_is_identity() {
        let (cfg, fc) = tiny_system();
        let site = SiteSpec::new("ft", 55);
        let domain = Domain {
            site_id: "ft".into(),
            p_tx: 2.0,
            los: true,
            beta: 0.0,
        };
        let local = sample_channels(&cfg, &site, &domain, 4, 9).unwrap();
        let base = BackboneParams::init(&cfg, &fc, PrecoderMode::Fdp, 4).unwrap();
        let mut p1 = base.clone();
        finetune_site(&mut p1, &cfg, &fc, &local, 0, 0.01, false, 8, 1).unwrap();
        assert_eq!(p1, base);
        let mut p2 = base.clone();
        finetune_site(&mut p2, &cfg, &fc, &local, 3, 0.0, false, 8, 1).unwrap();
        assert_eq!(p2, base);
        assert!(finetune_site(&mut p2, &cfg, &fc, &[], 1, 0.1, false, 8, 1).is_err());
    }

    #[test]
    fn finetune_reduces_site_loss() {
        let (cfg, fc) = tiny_system();
        let site = SiteSpec::new("ft", 56);
        let domain = Domain {
            site_id: "ft".into(),
            p_tx: 2.0,
            los: false,
            beta: 0.0,
        };
        let local = sample_channels(&cfg, &site, &domain, 12, 10).unwrap();
        let mut params = BackboneParams::init(&cfg, &fc, PrecoderMode::Fdp, 5).unwrap();
        let losses = finetune_site(&mut params, &cfg, &fc, &local, 10, 1e-4, false, 12, 2).unwrap();
        assert!(losses.last().unwrap() < losses.first().unwrap());
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let (cfg, fc) = tiny_system();
        let data = tiny_dataset(&cfg, 3, 6);
        let hyper = TrainHyper {
            warmup_epochs: 1,
            teacher_epochs: 1,
            student_epochs: 1,
            max_cycles: 1,
            batch_size: 4,
            ..TrainHyper::default()
        };
        let a = train_backbone(&data, &cfg, &fc, &hyper, PrecoderMode::Fdp, 11).unwrap();
        let b = train_backbone(&data, &cfg, &fc, &hyper, PrecoderMode::Fdp, 11).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn domain_split_matches_reference_ratio() {
        assert_eq!(domain_split_sizes(56), (40, 16));
        assert_eq!(domain_split_sizes(16), (11, 5));
        let (t, g) = domain_split_sizes(2);
        assert_eq!((t, g), (1, 1));
    }
}
