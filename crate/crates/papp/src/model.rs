//! The precoding backbone: shared feature extractor, teacher heads that
//! seed one differentiable WMMSE step, and the student precoder heads.
//!
//! Every forward pass is generic over the scalar type: with `f64` it is the
//! deployed inference path, with [`Var`] the identical code records onto a
//! tape for training. Parameters live in three named groups - features
//! (pi), teacher (theta), student (phi) - matching how the training loops
//! update them.
//!
//! Feature extraction uses two parallel branches. A three-layer CNN with
//! output channels (8, 8, 2) reads the (real, imaginary) planes of the
//! normalized channel and is flattened and projected to one summary vector.
//! In parallel, each user's channel row passes through a five-layer MLP
//! encoder; the per-user embeddings are pooled across users into a mean and
//! three fixed quantiles, and this context is merged back into the
//! (quadruplicated) embeddings through two learnable scalar gates, a
//! residual-style combination.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::channel::SystemConfig;
use crate::energy::{counts_papp, FootprintCounts};
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, Complex, Real, Tape, Var};
use crate::precoding::wmmse_step;

/// Which student head the backbone carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecoderMode {
    Fdp,
    Hbf,
}

impl PrecoderMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrecoderMode::Fdp => "fdp",
            PrecoderMode::Hbf => "hbf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fdp" => Ok(PrecoderMode::Fdp),
            "hbf" => Ok(PrecoderMode::Hbf),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

/// Feature-extractor architecture constants.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    /// Per-user embedding length, `E = 2 N_T`.
    pub embed_len: usize,
    pub cnn_channels: (usize, usize, usize),
    pub encoder_depth: usize,
    pub quantiles: [f64; 3],
    pub kernel: usize,
}

impl FeatureConfig {
    pub fn for_system(cfg: &SystemConfig) -> Self {
        Self {
            embed_len: cfg.embed_len(),
            cnn_channels: (8, 8, 2),
            encoder_depth: 5,
            quantiles: [0.25, 0.5, 0.75],
            kernel: 3,
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.embed_len != cfg.embed_len() {
            return Err(Error::InvalidArg(format!(
                "embed_len {} must equal 2 n_tx = {}",
                self.embed_len,
                cfg.embed_len()
            )));
        }
        let q = &self.quantiles;
        if !(q[0] < q[1] && q[1] < q[2] && q[0] > 0.0 && q[2] < 1.0) {
            return Err(Error::InvalidArg(
                "quantiles must be strictly increasing within (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Width of the per-user head input: gated context (4E), the CNN
    /// summary (E), the user's raw normalized channel (E), and the user's
    /// Gram row (2 N_U). The raw and Gram blocks are redundant
    /// representations that make the heads' job easier: the raw block lets
    /// a head express matched-filter structure directly, the Gram block
    /// carries the interference geometry.
    pub fn head_input_len(&self, n_users: usize) -> usize {
        6 * self.embed_len + 6 * n_users
    }
}

/// A named dense tensor with row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Clone> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::DimMismatch(format!(
                "tensor shape {shape:?} needs {expect} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// An ordered, named collection of tensors; the flat order is the
/// concatenation of tensor data in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGroup<T = f64> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Clone> ParamGroup<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, tensor: Tensor<T>) {
        debug_assert!(self.entries.iter().all(|(n, _)| n != name));
        self.entries.push((name.to_string(), tensor));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::InvalidArg(format!("missing parameter tensor '{name}'")))
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(&T) -> U) -> ParamGroup<U> {
        ParamGroup {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| {
                    (
                        n.clone(),
                        Tensor {
                            shape: t.shape.clone(),
                            data: t.data.iter().map(&mut f).collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}

impl ParamGroup<f64> {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for (_, t) in &self.entries {
            out.extend_from_slice(&t.data);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_scalars());
        let mut at = 0;
        for (_, t) in &mut self.entries {
            let len = t.data.len();
            t.data.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, t)| t.data.iter().all(|x| x.is_finite()))
    }
}

/// The three parameter groups of the backbone plus the configured student
/// head. Exactly one student head exists per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams<T = f64> {
    pub pi: ParamGroup<T>,
    pub theta: ParamGroup<T>,
    pub phi: ParamGroup<T>,
    pub mode: PrecoderMode,
}

const GATE_INIT: f64 = 0.1;

impl BackboneParams<f64> {
    /// Fresh parameters: weights uniform in +/- sqrt(1/fan_in), biases zero,
    /// gates at 0.1. Deterministic in the seed.
    pub fn init(
        cfg: &SystemConfig,
        fc: &FeatureConfig,
        mode: PrecoderMode,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        fc.validate(cfg)?;
        let mut rng = StdRng::seed_from_u64(seed);
        let e = fc.embed_len;
        let d = fc.head_input_len(cfg.n_users);
        let (c1, c2, c3) = fc.cnn_channels;
        let k = fc.kernel;

        let mut pi = ParamGroup::new();
        push_conv(&mut pi, &mut rng, "cnn.conv1", c1, 2, k);
        push_conv(&mut pi, &mut rng, "cnn.conv2", c2, c1, k);
        push_conv(&mut pi, &mut rng, "cnn.conv3", c3, c2, k);
        push_linear(
            &mut pi,
            &mut rng,
            "cnn.proj",
            e,
            c3 * cfg.n_users * cfg.n_tx,
        );
        for layer in 1..=fc.encoder_depth {
            push_linear(&mut pi, &mut rng, &format!("enc.l{layer}"), e, e);
        }
        pi.push("gate.alpha_mean", Tensor::new(vec![1], vec![GATE_INIT])?);
        pi.push("gate.alpha_quant", Tensor::new(vec![1], vec![GATE_INIT])?);

        let mut theta = ParamGroup::new();
        push_linear(&mut theta, &mut rng, "teacher.v_num", 1, d);
        push_linear(&mut theta, &mut rng, "teacher.v_den", 1, d);
        push_linear(&mut theta, &mut rng, "teacher.u_num", 2, d);
        push_linear(&mut theta, &mut rng, "teacher.u_den", 1, d);
        push_linear(&mut theta, &mut rng, "teacher.mu", 1, d);

        // Student heads: one hidden rectified layer, linear output. The
        // fully digital head emits per-user auxiliaries in the teacher's
        // format (numerator/denominator pairs plus a multiplier readout);
        // the beamformers are then synthesized from the input channel rows
        // through a fixed multiply-only mixing block, so the deployed
        // student performs no matrix inversion.
        let hidden = 2 * e;
        let mut phi = ParamGroup::new();
        match mode {
            PrecoderMode::Fdp => {
                push_linear(&mut phi, &mut rng, "student.fdp.l1", hidden, d);
                push_linear(&mut phi, &mut rng, "student.fdp.l2", 6, hidden);
            }
            PrecoderMode::Hbf => {
                push_linear(&mut phi, &mut rng, "student.hbf_digital.l1", hidden, d);
                push_linear(
                    &mut phi,
                    &mut rng,
                    "student.hbf_digital.l2",
                    2 * cfg.n_rf,
                    hidden,
                );
                push_linear(&mut phi, &mut rng, "student.hbf_phase.l1", hidden, d);
                push_linear(
                    &mut phi,
                    &mut rng,
                    "student.hbf_phase.l2",
                    cfg.n_tx * cfg.n_rf,
                    hidden,
                );
            }
        }
        Ok(Self {
            pi,
            theta,
            phi,
            mode,
        })
    }

    pub fn n_scalars(&self) -> usize {
        self.pi.n_scalars() + self.theta.n_scalars() + self.phi.n_scalars()
    }
}

// Rectifier-gain uniform init (variance 2 / fan_in): keeps activation and
// gradient scales roughly constant through the relu stacks.
fn push_linear(
    group: &mut ParamGroup<f64>,
    rng: &mut StdRng,
    name: &str,
    out_dim: usize,
    in_dim: usize,
) {
    let bound = (6.0 / in_dim as f64).sqrt();
    let data: Vec<f64> = (0..out_dim * in_dim)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    group.push(
        &format!("{name}.weight"),
        Tensor::new(vec![out_dim, in_dim], data).expect("shape matches"),
    );
    group.push(
        &format!("{name}.bias"),
        Tensor::new(vec![out_dim], vec![0.0; out_dim]).expect("shape matches"),
    );
}

fn push_conv(
    group: &mut ParamGroup<f64>,
    rng: &mut StdRng,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
) {
    let bound = (6.0 / (c_in * k * k) as f64).sqrt();
    let data: Vec<f64> = (0..c_out * c_in * k * k)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    group.push(
        &format!("{name}.weight"),
        Tensor::new(vec![c_out, c_in, k, k], data).expect("shape matches"),
    );
    group.push(
        &format!("{name}.bias"),
        Tensor::new(vec![c_out], vec![0.0; c_out]).expect("shape matches"),
    );
}

/// Shared features: one gated context vector per user (length 4E), the
/// projected CNN summary (length E) that is replicated across users at the
/// head inputs, and three redundant per-user blocks that ease the heads'
/// job:
///
/// - the raw normalized channel rows (length E), a residual path that lets
///   a head express matched-filter structure directly;
/// - the user's row of the channel Gram matrix (2 N_U values, interleaved
///   real/imaginary parts of `h_k^H h_j`), carrying the inter-user
///   interference geometry and the input scale;
/// - approximate inverse-Gram mixing rows at two diagonal loadings
///   (4 N_U values), computed by a short Newton-Schulz recursion -
///   multiplications only, no matrix inversion - which put zero-forcing
///   and regularized mixing within linear reach of the heads.
#[derive(Clone, Debug)]
pub struct SharedFeatures<T = f64> {
    pub per_user: Vec<Vec<T>>,
    pub cnn_summary: Vec<T>,
    pub raw_user: Vec<Vec<T>>,
    pub gram_user: Vec<Vec<T>>,
    pub mix_user: Vec<Vec<T>>,
}

/// Teacher-predicted WMMSE auxiliaries.
#[derive(Clone, Debug)]
pub struct TeacherAux<T = f64> {
    pub v: Vec<T>,
    pub u: Vec<Complex<T>>,
    pub mu: T,
}

/// Normalized student output; the hybrid head keeps analog phases and the
/// digital stage separate.
#[derive(Clone, Debug)]
pub enum StudentPrecoder<T = f64> {
    Fdp { w_bar: CMatrix<T> },
    Hbf { a: CMatrix<T>, w_dp_bar: CMatrix<T> },
}

impl<T: Real> StudentPrecoder<T> {
    /// The composite normalized precoder `W_bar` (N_T x N_U).
    pub fn composite(&self) -> Result<CMatrix<T>> {
        match self {
            StudentPrecoder::Fdp { w_bar } => Ok(w_bar.clone()),
            StudentPrecoder::Hbf { a, w_dp_bar } => a.mul(w_dp_bar),
        }
    }
}

fn linear<T: Real>(w: &Tensor<T>, b: &Tensor<T>, x: &[T]) -> Vec<T> {
    let out_dim = w.shape[0];
    let in_dim = w.shape[1];
    debug_assert_eq!(in_dim, x.len());
    let mut out = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let mut acc = b.data[o].clone();
        for (i, xi) in x.iter().enumerate() {
            acc = acc + w.data[o * in_dim + i].clone() * xi.clone();
        }
        out.push(acc);
    }
    out
}

/// 2-D convolution over channel planes with stride 1 and zero padding that
/// preserves the grid shape. Padding terms contribute nothing and are
/// skipped rather than materialized.
fn conv2d<T: Real>(
    w: &Tensor<T>,
    b: &Tensor<T>,
    input: &[Vec<T>],
    height: usize,
    width: usize,
    relu: bool,
) -> Vec<Vec<T>> {
    let c_out = w.shape[0];
    let c_in = w.shape[1];
    let k = w.shape[2];
    let pad = k / 2;
    debug_assert_eq!(c_in, input.len());
    let mut out = Vec::with_capacity(c_out);
    for co in 0..c_out {
        let mut plane = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let mut acc = b.data[co].clone();
                for (ci, in_plane) in input.iter().enumerate() {
                    for di in 0..k {
                        let ii = i + di;
                        if ii < pad || ii - pad >= height {
                            continue;
                        }
                        for dj in 0..k {
                            let jj = j + dj;
                            if jj < pad || jj - pad >= width {
                                continue;
                            }
                            let wv = &w.data[((co * c_in + ci) * k + di) * k + dj];
                            let xv = &in_plane[(ii - pad) * width + (jj - pad)];
                            acc = acc + wv.clone() * xv.clone();
                        }
                    }
                }
                plane.push(if relu { acc.relu() } else { acc });
            }
        }
        out.push(plane);
    }
    out
}

/// Linear interpolation quantile over the user axis. The selection order is
/// fixed by forward values, so on a tape the result is a linear combination
/// of the two bracketing entries.
fn quantile<T: Real>(values: &[T], q: f64) -> T {
    debug_assert!(!values.is_empty());
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].value().total_cmp(&values[b].value()));
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        values[order[lo]].clone()
    } else {
        values[order[lo]].scale(1.0 - frac) + values[order[lo + 1]].scale(frac)
    }
}

/// Runs the shared feature extractor on a normalized channel input.
///
/// With the gates at zero the per-user outputs reduce to the quadruplicated
/// raw embeddings; pooling statistics are invariant under user permutation
/// and the per-user outputs are equivariant.
pub fn feature_forward<T: Real>(
    pi: &ParamGroup<T>,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    h_bar: &CMatrix<T>,
) -> Result<SharedFeatures<T>> {
    if h_bar.rows() != cfg.n_users || h_bar.cols() != cfg.n_tx {
        return Err(Error::DimMismatch(format!(
            "input is {}x{}, expected {}x{}",
            h_bar.rows(),
            h_bar.cols(),
            cfg.n_users,
            cfg.n_tx
        )));
    }
    let e = fc.embed_len;
    let (h, w) = (cfg.n_users, cfg.n_tx);

    // CNN branch over the (real, imaginary) planes.
    let mut planes: Vec<Vec<T>> = vec![Vec::with_capacity(h * w), Vec::with_capacity(h * w)];
    for k in 0..h {
        for t in 0..w {
            let z = h_bar.get(k, t);
            planes[0].push(z.re.clone());
            planes[1].push(z.im.clone());
        }
    }
    let c1 = conv2d(
        pi.get("cnn.conv1.weight")?,
        pi.get("cnn.conv1.bias")?,
        &planes,
        h,
        w,
        true,
    );
    let c2 = conv2d(
        pi.get("cnn.conv2.weight")?,
        pi.get("cnn.conv2.bias")?,
        &c1,
        h,
        w,
        true,
    );
    let c3 = conv2d(
        pi.get("cnn.conv3.weight")?,
        pi.get("cnn.conv3.bias")?,
        &c2,
        h,
        w,
        false,
    );
    let flat: Vec<T> = c3.into_iter().flatten().collect();
    let cnn_summary = linear(pi.get("cnn.proj.weight")?, pi.get("cnn.proj.bias")?, &flat);

    // Per-user encoder branch.
    let mut embeddings: Vec<Vec<T>> = Vec::with_capacity(h);
    let mut raw_user: Vec<Vec<T>> = Vec::with_capacity(h);
    for k in 0..h {
        let mut x: Vec<T> = Vec::with_capacity(e);
        for t in 0..w {
            x.push(h_bar.get(k, t).re.clone());
        }
        for t in 0..w {
            x.push(h_bar.get(k, t).im.clone());
        }
        raw_user.push(x.clone());
        for layer in 1..=fc.encoder_depth {
            let wn = pi.get(&format!("enc.l{layer}.weight"))?;
            let bn = pi.get(&format!("enc.l{layer}.bias"))?;
            x = linear(wn, bn, &x);
            if layer < fc.encoder_depth {
                x = x.into_iter().map(|v| v.relu()).collect();
            }
        }
        embeddings.push(x);
    }

    // Permutation-invariant pooling: feature-wise mean and three quantiles.
    let inv_users = 1.0 / h as f64;
    let mut mean = Vec::with_capacity(e);
    let mut quants: [Vec<T>; 3] = [
        Vec::with_capacity(e),
        Vec::with_capacity(e),
        Vec::with_capacity(e),
    ];
    for f in 0..e {
        let column: Vec<T> = embeddings.iter().map(|emb| emb[f].clone()).collect();
        let mut acc = column[0].clone();
        for v in &column[1..] {
            acc = acc + v.clone();
        }
        mean.push(acc.scale(inv_users));
        for (qi, &q) in fc.quantiles.iter().enumerate() {
            quants[qi].push(quantile(&column, q));
        }
    }

    // Gated residual merge: duplicate each embedding four times and add the
    // gated context blocks.
    let alpha_m = &pi.get("gate.alpha_mean")?.data[0];
    let alpha_q = &pi.get("gate.alpha_quant")?.data[0];
    let per_user = embeddings
        .iter()
        .map(|emb| {
            let mut g = Vec::with_capacity(4 * e);
            for f in 0..e {
                g.push(emb[f].clone() + alpha_m.clone() * mean[f].clone());
            }
            for quant in &quants {
                for f in 0..e {
                    g.push(emb[f].clone() + alpha_q.clone() * quant[f].clone());
                }
            }
            g
        })
        .collect();

    // Redundant Gram block: user k's inner products with every user row.
    let gram = CMatrix::from_fn(h, h, |k, j| {
        let mut acc = h_bar.get(k, 0).conj().mul(h_bar.get(j, 0));
        for t in 1..w {
            acc = acc.add(&h_bar.get(k, t).conj().mul(h_bar.get(j, t)));
        }
        acc
    });
    let gram_user = (0..h)
        .map(|k| {
            let mut row = Vec::with_capacity(2 * h);
            for j in 0..h {
                row.push(gram.get(k, j).re.clone());
                row.push(gram.get(k, j).im.clone());
            }
            row
        })
        .collect();

    // Approximate inverse mixing rows, unloaded and noise-loaded.
    let zf_rows = ns_inverse_rows(&gram, 0.0);
    let rzf_rows = ns_inverse_rows(&gram, h as f64);
    let mix_user = (0..h)
        .map(|k| {
            let mut row = zf_rows[k].clone();
            row.extend(rzf_rows[k].iter().cloned());
            row
        })
        .collect();
    Ok(SharedFeatures {
        per_user,
        cnn_summary,
        raw_user,
        gram_user,
        mix_user,
    })
}

/// Approximate inverse of a small positive-spectrum matrix by a
/// Newton-Schulz recursion on the trace-normalized input: pure multiply-add
/// arithmetic plus one scalar reciprocal, so the deployed student stays
/// free of matrix inversions.
fn ns_inverse<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let n = m.rows();
    let mut trace = m.get(0, 0).re.clone();
    for i in 1..n {
        trace = trace + m.get(i, i).re.clone();
    }
    let inv_trace = trace.recip();
    let m_hat = m.scale_real(&inv_trace);
    let zero = trace.zero_like();
    let one = zero.shift(1.0);
    let eye = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex::new(one.clone(), zero.clone())
        } else {
            Complex::new(zero.clone(), zero.clone())
        }
    });
    let mut x = eye.clone();
    for _ in 0..16 {
        // x <- x (2 I - m_hat x); quadratic convergence on the normalized
        // spectrum, and bounded iterates even when m is near-singular.
        let gx = m_hat.mul(&x).expect("square");
        let corr = eye.scale(2.0).sub(&gx).expect("same shape");
        x = x.mul(&corr).expect("square");
    }
    // Undo the trace normalization: (m_hat)^{-1} / trace = m^{-1}.
    x.scale_real(&inv_trace)
}

/// Rows of [`ns_inverse`] applied to `g + load I`, flattened as interleaved
/// real/imaginary parts. A small trace-relative diagonal floor caps the
/// condition number so the recursion always converges and the feature
/// magnitudes stay bounded.
fn ns_inverse_rows<T: Real>(g: &CMatrix<T>, load: f64) -> Vec<Vec<T>> {
    let n = g.rows();
    let mut trace = g.get(0, 0).re.clone();
    for i in 1..n {
        trace = trace + g.get(i, i).re.clone();
    }
    let floor = trace.scale(0.01 / n as f64).shift(load);
    let m = CMatrix::from_fn(n, n, |i, j| {
        let z = g.get(i, j).clone();
        if i == j {
            Complex::new(z.re.clone() + floor.clone(), z.im.clone())
        } else {
            z
        }
    });
    let y = ns_inverse(&m);
    (0..n)
        .map(|k| {
            let mut row = Vec::with_capacity(2 * n);
            for j in 0..n {
                row.push(y.get(k, j).re.clone());
                row.push(y.get(k, j).im.clone());
            }
            row
        })
        .collect()
}

fn head_input<T: Real>(feats: &SharedFeatures<T>, k: usize) -> Vec<T> {
    let mut x = feats.per_user[k].clone();
    x.extend(feats.cnn_summary.iter().cloned());
    x.extend(feats.raw_user[k].iter().cloned());
    x.extend(feats.gram_user[k].iter().cloned());
    x.extend(feats.mix_user[k].iter().cloned());
    x
}

/// Student head body: hidden rectified layer, linear output.
fn student_head<T: Real>(phi: &ParamGroup<T>, stem: &str, x: &[T]) -> Result<Vec<T>> {
    let hidden = linear(
        phi.get(&format!("{stem}.l1.weight"))?,
        phi.get(&format!("{stem}.l1.bias"))?,
        x,
    );
    let hidden: Vec<T> = hidden.into_iter().map(|v| v.relu()).collect();
    Ok(linear(
        phi.get(&format!("{stem}.l2.weight"))?,
        phi.get(&format!("{stem}.l2.bias"))?,
        &hidden,
    ))
}

/// Teacher heads: per-user linear readouts for the numerators and
/// denominators of the WMMSE auxiliaries, assembled as
/// `v_k = (v_n + sigma^2) / (v_d + sigma^2)` and
/// `u_k = u_n / (u_d + sigma^2)`, which decouples the heads from the noise
/// power. The multiplier mu pools a per-user readout and is kept positive
/// by a softplus, as are the nonnegative numerators/denominators.
pub fn teacher_forward<T: Real>(
    theta: &ParamGroup<T>,
    feats: &SharedFeatures<T>,
    sigma: f64,
) -> Result<TeacherAux<T>> {
    let n_users = feats.per_user.len();
    let noise = sigma * sigma;
    let mut v = Vec::with_capacity(n_users);
    let mut u = Vec::with_capacity(n_users);
    let mut mu_acc: Option<T> = None;
    for k in 0..n_users {
        let x = head_input(feats, k);
        let v_num = linear(
            theta.get("teacher.v_num.weight")?,
            theta.get("teacher.v_num.bias")?,
            &x,
        )[0]
        .softplus();
        let v_den = linear(
            theta.get("teacher.v_den.weight")?,
            theta.get("teacher.v_den.bias")?,
            &x,
        )[0]
        .softplus();
        let u_num = linear(
            theta.get("teacher.u_num.weight")?,
            theta.get("teacher.u_num.bias")?,
            &x,
        );
        let u_den = linear(
            theta.get("teacher.u_den.weight")?,
            theta.get("teacher.u_den.bias")?,
            &x,
        )[0]
        .softplus();
        v.push(v_num.shift(noise) / v_den.shift(noise));
        let denom = u_den.shift(noise);
        u.push(Complex::new(
            u_num[0].clone() / denom.clone(),
            u_num[1].clone() / denom,
        ));
        let mu_k = linear(
            theta.get("teacher.mu.weight")?,
            theta.get("teacher.mu.bias")?,
            &x,
        )
        .pop()
        .expect("mu head has one output");
        mu_acc = Some(match mu_acc {
            Some(acc) => acc + mu_k,
            None => mu_k,
        });
    }
    // Softplus keeps mu positive; the small floor keeps the seeded WMMSE
    // step solvable even when the head drives its readout far negative.
    let mu = mu_acc
        .ok_or_else(|| Error::InvalidArg("no users in shared features".into()))?
        .scale(1.0 / n_users as f64)
        .softplus()
        .shift(1e-6);
    Ok(TeacherAux { v, u, mu })
}

/// Teacher precoder: a single WMMSE precoder update seeded with the
/// predicted auxiliaries, normalized to unit transmit power. Differentiable
/// end to end when recorded on a tape.
pub fn teacher_precoder<T: Real>(h_bar: &CMatrix<T>, aux: &TeacherAux<T>) -> Result<CMatrix<T>> {
    let w = wmmse_step(h_bar, &aux.v, &aux.u, &aux.mu)?;
    normalize_unit_power(&w)
}

/// Student heads. The fully digital head emits the real and imaginary parts
/// of each user's beamformer; the hybrid head emits a digital stage plus
/// analog phases materialized as `exp(j phi)`, so analog entries are unit
/// modulus by construction. Either way the composite precoder is normalized
/// to unit transmit power.
pub fn student_forward<T: Real>(
    phi: &ParamGroup<T>,
    feats: &SharedFeatures<T>,
    mode: PrecoderMode,
    cfg: &SystemConfig,
) -> Result<StudentPrecoder<T>> {
    let n_users = feats.per_user.len();
    if n_users != cfg.n_users {
        return Err(Error::DimMismatch(format!(
            "features carry {n_users} users, config says {}",
            cfg.n_users
        )));
    }
    match mode {
        PrecoderMode::Fdp => {
            // The head predicts per-user auxiliaries in the teacher's
            // noise-decoupled format (unit noise power after input
            // normalization); the precoder is then synthesized by the
            // multiply-only mixing block below.
            let mut v = Vec::with_capacity(n_users);
            let mut u = Vec::with_capacity(n_users);
            let mut mu_acc: Option<T> = None;
            for k in 0..n_users {
                let out = student_head(phi, "student.fdp", &head_input(feats, k))?;
                v.push(out[0].softplus().shift(1.0) / out[1].softplus().shift(1.0));
                let denom = out[4].softplus().shift(1.0);
                u.push(Complex::new(
                    out[2].clone() / denom.clone(),
                    out[3].clone() / denom,
                ));
                mu_acc = Some(match mu_acc {
                    Some(acc) => acc + out[5].clone(),
                    None => out[5].clone(),
                });
            }
            let mu = mu_acc
                .expect("n_users >= 1")
                .scale(1.0 / n_users as f64)
                .softplus()
                .shift(1e-6);
            // In user coordinates the seeded precoder update reads
            // w_k = u_k v_k H^T (mu I + diag(v |u|^2) Gram)^{-1} e_k, so an
            // approximate inverse of the small mixing matrix is enough.
            let gram = CMatrix::from_fn(n_users, n_users, |i, j| {
                Complex::new(
                    feats.gram_user[i][2 * j].clone(),
                    feats.gram_user[i][2 * j + 1].clone(),
                )
            });
            let m = CMatrix::from_fn(n_users, n_users, |i, j| {
                let c_i = v[i].clone() * u[i].abs_sq();
                let scaled = gram.get(i, j).mul_real(&c_i);
                if i == j {
                    Complex::new(scaled.re + mu.clone(), scaled.im)
                } else {
                    scaled
                }
            });
            let x = ns_inverse(&m);
            // B = X diag(u v); w_k = sum_j B[j][k] h_j from the raw block.
            let raw = CMatrix::from_fn(cfg.n_tx, n_users, |t, k| {
                let gain = u[k].mul_real(&v[k]);
                let mut acc: Option<Complex<T>> = None;
                for j in 0..n_users {
                    let h_jt = Complex::new(
                        feats.raw_user[j][t].clone(),
                        feats.raw_user[j][cfg.n_tx + t].clone(),
                    );
                    let term = h_jt.mul(&x.get(j, k).mul(&gain));
                    acc = Some(match acc {
                        Some(a) => a.add(&term),
                        None => term,
                    });
                }
                acc.expect("n_users >= 1")
            });
            Ok(StudentPrecoder::Fdp {
                w_bar: normalize_unit_power(&raw)?,
            })
        }
        PrecoderMode::Hbf => {
            let mut cols: Vec<Vec<Complex<T>>> = Vec::with_capacity(n_users);
            for k in 0..n_users {
                let out = student_head(phi, "student.hbf_digital", &head_input(feats, k))?;
                let col: Vec<Complex<T>> = (0..cfg.n_rf)
                    .map(|r| Complex::new(out[2 * r].clone(), out[2 * r + 1].clone()))
                    .collect();
                cols.push(col);
            }
            let w_dp_raw = CMatrix::from_fn(cfg.n_rf, n_users, |r, k| cols[k][r].clone());
            // Phase head reads the user-averaged head input: the analog
            // network is common to all users, so its input pools the
            // per-user blocks.
            let mut pooled = head_input(feats, 0);
            for k in 1..n_users {
                for (acc, v) in pooled.iter_mut().zip(head_input(feats, k)) {
                    *acc = acc.clone() + v;
                }
            }
            let x: Vec<T> = pooled
                .into_iter()
                .map(|v| v.scale(1.0 / n_users as f64))
                .collect();
            let phases = student_head(phi, "student.hbf_phase", &x)?;
            let a = CMatrix::from_fn(cfg.n_tx, cfg.n_rf, |t, r| {
                let ph = &phases[t * cfg.n_rf + r];
                Complex::new(ph.cos(), ph.sin())
            });
            let composite = a.mul(&w_dp_raw)?;
            let power = composite.frobenius_sq();
            if power.value() == 0.0 {
                return Err(Error::ZeroMatrix);
            }
            let inv_norm = power.sqrt().recip();
            Ok(StudentPrecoder::Hbf {
                a,
                w_dp_bar: w_dp_raw.scale_real(&inv_norm),
            })
        }
    }
}

/// Scales a matrix onto the unit transmit-power shell: `w / sqrt(Tr(w w^H))`.
pub fn normalize_unit_power<T: Real>(w: &CMatrix<T>) -> Result<CMatrix<T>> {
    let power = w.frobenius_sq();
    if power.value() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let inv_norm = power.sqrt().recip();
    Ok(w.scale_real(&inv_norm))
}

/// Deployment inference: feature extractor plus student head only; the
/// teacher branch is not consulted. Returns the composite normalized
/// precoder.
pub fn infer_student(
    params: &BackboneParams<f64>,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    h_bar: &CMatrix<f64>,
) -> Result<CMatrix<f64>> {
    let feats = feature_forward(&params.pi, cfg, fc, h_bar)?;
    student_forward(&params.phi, &feats, params.mode, cfg)?.composite()
}

/// Full teacher path: features, auxiliary heads, one WMMSE step.
pub fn run_teacher<T: Real>(
    pi: &ParamGroup<T>,
    theta: &ParamGroup<T>,
    cfg: &SystemConfig,
    fc: &FeatureConfig,
    h_bar: &CMatrix<T>,
    sigma: f64,
) -> Result<CMatrix<T>> {
    let feats = feature_forward(pi, cfg, fc, h_bar)?;
    let aux = teacher_forward(theta, &feats, sigma)?;
    teacher_precoder(h_bar, &aux)
}

/// MAC/weight/activation footprint of the deployed student at this
/// configuration.
pub fn count_footprint(cfg: &SystemConfig, mode: PrecoderMode) -> FootprintCounts {
    counts_papp(cfg.n_tx, cfg.n_users, cfg.n_rf, mode)
}

/// Lifts a parameter group onto a tape as input variables, in flat order.
pub fn lift_group(tape: &Tape, group: &ParamGroup<f64>) -> ParamGroup<Var> {
    group.map(|&x| tape.var(x))
}

/// Lifts a plain complex matrix onto a tape (as constants from the
/// gradient's point of view: they are leaves whose adjoints are ignored).
pub fn lift_cmatrix(tape: &Tape, m: &CMatrix<f64>) -> CMatrix<Var> {
    CMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        let z = m.get(i, j);
        Complex::new(tape.var(z.re), tape.var(z.im))
    })
}

/// Lifts plain features onto a tape, used when only the student head is
/// being differentiated.
pub fn lift_features(tape: &Tape, feats: &SharedFeatures<f64>) -> SharedFeatures<Var> {
    SharedFeatures {
        per_user: feats
            .per_user
            .iter()
            .map(|u| u.iter().map(|&x| tape.var(x)).collect())
            .collect(),
        cnn_summary: feats.cnn_summary.iter().map(|&x| tape.var(x)).collect(),
        raw_user: feats
            .raw_user
            .iter()
            .map(|u| u.iter().map(|&x| tape.var(x)).collect())
            .collect(),
        gram_user: feats
            .gram_user
            .iter()
            .map(|u| u.iter().map(|&x| tape.var(x)).collect())
            .collect(),
        mix_user: feats
            .mix_user
            .iter()
            .map(|u| u.iter().map(|&x| tape.var(x)).collect())
            .collect(),
    }
}
