//! Classical precoders and rate metrics.
//!
//! Conventions: the channel matrix `h` is `N_U x N_T` with row `k` holding
//! user k's channel coefficients, so the effective gain user k sees from
//! beamformer j is `h_k^H w_j = sum_t conj(h[k][t]) w[t][j]`. Precoder
//! matrices are `N_T x N_U` with one column per user.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::numerics::{solve_hermitian, CMatrix, Complex, Real};

/// Relative slack allowed on the transmit power budget.
pub const POWER_SLACK: f64 = 1e-8;

/// A fully digital precoder together with its power budget.
#[derive(Clone, Debug)]
pub struct FdpPrecoder {
    pub w: CMatrix,
    pub p_tx: f64,
}

impl FdpPrecoder {
    pub fn new(w: CMatrix, p_tx: f64) -> Result<Self> {
        let power = w.frobenius_sq();
        if power > p_tx * (1.0 + POWER_SLACK) {
            return Err(Error::InvalidArg(format!(
                "precoder power {power} exceeds budget {p_tx}"
            )));
        }
        Ok(Self { w, p_tx })
    }

    pub fn power(&self) -> f64 {
        self.w.frobenius_sq()
    }
}

/// A hybrid precoder: constant-modulus analog network times a digital stage.
#[derive(Clone, Debug)]
pub struct HbfPrecoder {
    pub a: CMatrix,
    pub w_dp: CMatrix,
    pub p_tx: f64,
}

impl HbfPrecoder {
    pub fn new(a: CMatrix, w_dp: CMatrix, p_tx: f64) -> Result<Self> {
        for z in a.entries() {
            if (z.abs() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArg(format!(
                    "analog entry modulus {} deviates from 1",
                    z.abs()
                )));
            }
        }
        let composite = a.mul(&w_dp)?;
        let power = composite.frobenius_sq();
        if power > p_tx * (1.0 + POWER_SLACK) {
            return Err(Error::InvalidArg(format!(
                "composite power {power} exceeds budget {p_tx}"
            )));
        }
        Ok(Self { a, w_dp, p_tx })
    }

    /// The composite precoder `A W_dp`; rates of the hybrid architecture are
    /// the rates of this fully digital equivalent.
    pub fn compose(&self) -> CMatrix {
        self.a
            .mul(&self.w_dp)
            .expect("dimensions checked at construction")
    }
}

/// Forms the composite precoder `A W_dp` from analog and digital stages.
pub fn compose_hbf<T: Real>(a: &CMatrix<T>, w_dp: &CMatrix<T>) -> Result<CMatrix<T>> {
    a.mul(w_dp)
}

/// Per-user SINR and sum-rate of precoder `w` on channel `h` with noise
/// standard deviation `sigma`.
pub fn evaluate_rates<T: Real>(h: &CMatrix<T>, w: &CMatrix<T>, sigma: f64) -> Result<(Vec<T>, T)> {
    let n_users = h.rows();
    let n_tx = h.cols();
    if w.rows() != n_tx || w.cols() != n_users {
        return Err(Error::DimMismatch(format!(
            "channel {}x{} expects precoder {}x{}, got {}x{}",
            n_users,
            n_tx,
            n_tx,
            n_users,
            w.rows(),
            w.cols()
        )));
    }
    let noise = sigma * sigma;
    let mut sinrs = Vec::with_capacity(n_users);
    let mut sum_rate: Option<T> = None;
    for k in 0..n_users {
        let mut signal: Option<T> = None;
        let mut total: Option<T> = None;
        for j in 0..n_users {
            // g = h_k^H w_j
            let mut g = w.get(0, j).mul_conj(h.get(k, 0));
            for t in 1..n_tx {
                g = g.add(&w.get(t, j).mul_conj(h.get(k, t)));
            }
            let p = g.abs_sq();
            if j == k {
                signal = Some(p.clone());
            }
            total = Some(match total {
                Some(t0) => t0 + p,
                None => p,
            });
        }
        let signal = signal.expect("n_users >= 1");
        let total = total.expect("n_users >= 1");
        // interference + noise = (total - signal) + sigma^2; the subtraction
        // is exact for j == k, so single-user instances lose nothing.
        let denom = (total - signal.clone()).shift(noise);
        let sinr = signal / denom;
        let rate = sinr.shift(1.0).log2();
        sum_rate = Some(match sum_rate {
            Some(r) => r + rate,
            None => rate,
        });
        sinrs.push(sinr);
    }
    Ok((sinrs, sum_rate.expect("n_users >= 1")))
}

/// Zero-forcing precoder `W = c H^H (H H^H)^{-1}` scaled to spend the full
/// power budget.
pub fn zf_precoder(h: &CMatrix, p_tx: f64) -> Result<FdpPrecoder> {
    let n_users = h.rows();
    let n_tx = h.cols();
    if n_users > n_tx {
        return Err(Error::InvalidArg(format!(
            "zero forcing needs n_users <= n_tx, got {n_users} > {n_tx}"
        )));
    }
    // gram[i][j] = h_i^H h_j, exactly Hermitian by construction.
    let gram = CMatrix::from_fn(n_users, n_users, |i, j| {
        let mut acc = h.get(i, 0).conj().mul(h.get(j, 0));
        for t in 1..n_tx {
            acc = acc.add(&h.get(i, t).conj().mul(h.get(j, t)));
        }
        acc
    });
    let inv = solve_hermitian(&gram, &0.0, &CMatrix::identity(n_users))?;
    // Effective channel seen by user k is conj(h_k) . w, so the
    // pseudo-inverse right factor uses the unconjugated rows:
    // W = H^T (conj(H) H^T)^{-1}.
    let mut w = CMatrix::zeros(n_tx, n_users);
    for t in 0..n_tx {
        for j in 0..n_users {
            let mut acc = Complex::ZERO;
            for i in 0..n_users {
                acc = acc.add(&h.get(i, t).mul(inv.get(i, j)));
            }
            w.set(t, j, acc);
        }
    }
    let power = w.frobenius_sq();
    if power <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let w = w.scale((p_tx / power).sqrt());
    Ok(FdpPrecoder { w, p_tx })
}

/// Matched-filter precoder `W = c H^T` (beam k aligned with user k's
/// channel), the fallback initializer when zero forcing is singular.
pub fn matched_filter(h: &CMatrix, p_tx: f64) -> Result<FdpPrecoder> {
    let w = CMatrix::from_fn(h.cols(), h.rows(), |t, k| h.get(k, t).clone());
    let power = w.frobenius_sq();
    if power <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(FdpPrecoder {
        w: w.scale((p_tx / power).sqrt()),
        p_tx,
    })
}

/// One weighted-MMSE precoder update: for each user,
/// `w_k = u_k v_k (sum_j v_j |u_j|^2 h_j h_j^H + mu I)^{-1} h_k`.
///
/// Generic over the scalar type, so the same update is the differentiable
/// core of the teacher head.
pub fn wmmse_step<T: Real>(
    h: &CMatrix<T>,
    v: &[T],
    u: &[Complex<T>],
    mu: &T,
) -> Result<CMatrix<T>> {
    let n_users = h.rows();
    let n_tx = h.cols();
    if v.len() != n_users || u.len() != n_users {
        return Err(Error::DimMismatch(format!(
            "expected {n_users} weights/gains, got {}/{}",
            v.len(),
            u.len()
        )));
    }
    for (k, vk) in v.iter().enumerate() {
        if vk.value() <= 0.0 {
            return Err(Error::InvalidArg(format!(
                "weight v[{k}] must be positive, got {}",
                vk.value()
            )));
        }
    }
    // c_j = v_j |u_j|^2; gram = sum_j c_j h_j h_j^H with h_j = row j of h
    // transposed. Entries are filled for s <= t and mirrored by conjugation
    // so the matrix is exactly Hermitian.
    let coeff: Vec<T> = v
        .iter()
        .zip(u.iter())
        .map(|(vj, uj)| vj.clone() * uj.abs_sq())
        .collect();
    let mut gram_lower: Vec<Option<Complex<T>>> = vec![None; n_tx * n_tx];
    for s in 0..n_tx {
        for t in 0..=s {
            let mut acc: Option<Complex<T>> = None;
            for j in 0..n_users {
                // c_j * h[j][s] * conj(h[j][t])
                let term = h.get(j, s).mul_conj(h.get(j, t)).mul_real(&coeff[j]);
                acc = Some(match acc {
                    Some(a) => a.add(&term),
                    None => term,
                });
            }
            gram_lower[s * n_tx + t] = acc;
        }
    }
    let gram = CMatrix::from_fn(n_tx, n_tx, |s, t| {
        if t <= s {
            gram_lower[s * n_tx + t].clone().expect("filled above")
        } else {
            gram_lower[t * n_tx + s]
                .clone()
                .expect("filled above")
                .conj()
        }
    });
    // One solve with all user channels as right-hand sides.
    let rhs = CMatrix::from_fn(n_tx, n_users, |t, k| h.get(k, t).clone());
    let x = solve_hermitian(&gram, mu, &rhs)?;
    let w = CMatrix::from_fn(n_tx, n_users, |t, k| {
        let g = u[k].mul_real(&v[k]);
        x.get(t, k).mul(&g)
    });
    Ok(w)
}

fn step_power(h: &CMatrix, v: &[f64], u: &[Complex], mu: f64) -> Option<f64> {
    match wmmse_step(h, v, u, &mu) {
        Ok(w) => Some(w.frobenius_sq()),
        Err(_) => None,
    }
}

/// Finds the Lagrange multiplier `mu >= 0` at which the [`wmmse_step`]
/// precoder spends the power budget.
///
/// Transmit power is monotone decreasing in `mu`, so a bracket-doubling
/// bisection always terminates. Returns 0 when the unconstrained update
/// already fits the budget; a singular unconstrained system is treated as
/// infinite power.
pub fn solve_mu(h: &CMatrix, v: &[f64], u: &[Complex], p_tx: f64) -> Result<f64> {
    if p_tx <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "p_tx must be positive, got {p_tx}"
        )));
    }
    if let Some(p0) = step_power(h, v, u, 0.0) {
        if p0 <= p_tx {
            return Ok(0.0);
        }
    }
    let mut hi = 1.0;
    while step_power(h, v, u, hi).map_or(true, |p| p > p_tx) {
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::InvalidArg(
                "mu bracket exceeded 1e30; inputs are badly scaled".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match step_power(h, v, u, mid) {
            Some(p) if p <= p_tx => hi = mid,
            _ => lo = mid,
        }
    }
    // hi side of the bracket keeps the power at or just under the budget.
    Ok(hi)
}

/// Per-iteration state of the WMMSE solver. `v`, `u`, and `mu` are the
/// auxiliaries that produced the final precoder, so replaying a single
/// [`wmmse_step`] with them reproduces it.
#[derive(Clone, Debug)]
pub struct WmmseState {
    pub v: Vec<f64>,
    pub u: Vec<Complex>,
    pub mu: f64,
    pub rate_trace: Vec<f64>,
}

/// Iterative WMMSE sum-rate maximization from initial precoder `w0`.
///
/// Alternates the closed-form v/u updates with the power-constrained
/// precoder step until the sum-rate changes by less than `tol` or `max_iter`
/// is reached. The recorded rate trace (starting at `R(w0)`) is
/// nondecreasing up to numerical tolerance.
pub fn wmmse(
    h: &CMatrix,
    sigma: f64,
    p_tx: f64,
    w0: &FdpPrecoder,
    max_iter: usize,
    tol: f64,
) -> Result<(FdpPrecoder, WmmseState)> {
    let n_users = h.rows();
    let n_tx = h.cols();
    if w0.w.rows() != n_tx || w0.w.cols() != n_users {
        return Err(Error::DimMismatch(format!(
            "initial precoder is {}x{}, expected {}x{}",
            w0.w.rows(),
            w0.w.cols(),
            n_tx,
            n_users
        )));
    }
    if w0.power() > p_tx * (1.0 + POWER_SLACK) {
        return Err(Error::InvalidArg(
            "initial precoder violates the power budget".into(),
        ));
    }
    let noise = sigma * sigma;
    let mut w = w0.w.clone();
    let (_, r0) = evaluate_rates(h, &w, sigma)?;
    let mut trace = vec![r0];
    let mut state = WmmseState {
        v: vec![1.0; n_users],
        u: vec![Complex::ZERO; n_users],
        mu: 0.0,
        rate_trace: Vec::new(),
    };
    for _ in 0..max_iter {
        // Effective gains g[k][j] = h_k^H w_j.
        let mut v = Vec::with_capacity(n_users);
        let mut u = Vec::with_capacity(n_users);
        for k in 0..n_users {
            let mut total = noise;
            let mut own = Complex::ZERO;
            for j in 0..n_users {
                let mut g = Complex::ZERO;
                for t in 0..n_tx {
                    g = g.add(&w.get(t, j).mul_conj(h.get(k, t)));
                }
                total += g.abs_sq();
                if j == k {
                    own = g;
                }
            }
            let interference_noise = total - own.abs_sq();
            v.push(total / interference_noise);
            u.push(own.scale(1.0 / total));
        }
        let mu = solve_mu(h, &v, &u, p_tx)?;
        w = wmmse_step(h, &v, &u, &mu)?;
        state.v = v;
        state.u = u;
        state.mu = mu;
        let (_, r) = evaluate_rates(h, &w, sigma)?;
        let prev = *trace.last().expect("trace nonempty");
        trace.push(r);
        if (r - prev).abs() < tol {
            break;
        }
    }
    state.rate_trace = trace;
    Ok((FdpPrecoder { w, p_tx }, state))
}

/// WMMSE with the default initializer (zero forcing, falling back to a
/// matched filter on singular channels) and the standard stopping rule:
/// sum-rate change below 1e-3 or 100 iterations.
pub fn wmmse_default(h: &CMatrix, sigma: f64, p_tx: f64) -> Result<(FdpPrecoder, WmmseState)> {
    let w0 = match zf_precoder(h, p_tx) {
        Ok(w) => w,
        Err(_) => matched_filter(h, p_tx)?,
    };
    wmmse(h, sigma, p_tx, &w0, 100, 1e-3)
}

/// Result of the PE-AltMin hybrid factorization.
#[derive(Clone, Debug)]
pub struct PeAltminResult {
    pub precoder: HbfPrecoder,
    /// Frobenius gap `||A W_dp - W_target||_F` after each iteration's
    /// least-squares stage.
    pub gap_trace: Vec<f64>,
}

/// Factors a fully digital target into constant-modulus analog and
/// unconstrained digital stages by phase-extraction alternating
/// minimization.
///
/// Each iteration extracts phases `A = exp(j arg(W_target W_dp^H))`, then
/// re-fits `W_dp` by least squares. The analog stage starts from seeded
/// random phases; the final composite is rescaled to spend `p_tx` exactly.
///
/// Because the digital stage is unconstrained, a phase-extraction step is
/// not guaranteed to descend; an analog update whose refit would increase
/// the Frobenius gap is rejected and the iterate held, which keeps the gap
/// trace nonincreasing.
pub fn pe_altmin(
    w_target: &CMatrix,
    n_rf: usize,
    iters: usize,
    p_tx: f64,
    seed: u64,
) -> Result<PeAltminResult> {
    let n_tx = w_target.rows();
    let n_users = w_target.cols();
    if n_rf < n_users {
        return Err(Error::InvalidArg(format!(
            "pe_altmin needs n_rf >= n_users, got {n_rf} < {n_users}"
        )));
    }
    if n_rf > n_tx {
        return Err(Error::InvalidArg(format!(
            "pe_altmin needs n_rf <= n_tx, got {n_rf} > {n_tx}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut a = CMatrix::from_fn(n_tx, n_rf, |_, _| {
        Complex::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
    });
    // Digital stage: least squares A W_dp ~ W_target via the normal
    // equations (A^H A is exactly Hermitian by construction). The analog
    // matrix can lose column rank after phase extraction; retry with a tiny
    // relative ridge in that case.
    let digital_fit = |a: &CMatrix| -> Result<CMatrix> {
        let gram = CMatrix::from_fn(n_rf, n_rf, |i, j| {
            let mut acc = a.get(0, i).conj().mul(a.get(0, j));
            for n in 1..n_tx {
                acc = acc.add(&a.get(n, i).conj().mul(a.get(n, j)));
            }
            acc
        });
        let rhs = a.hermitian().mul(w_target)?;
        match solve_hermitian(&gram, &0.0, &rhs) {
            Ok(x) => Ok(x),
            Err(Error::Singular { .. }) => solve_hermitian(&gram, &(1e-10 * n_tx as f64), &rhs),
            Err(e) => Err(e),
        }
    };
    let mut w_dp = digital_fit(&a)?;
    let mut gap = a.mul(&w_dp)?.sub(w_target)?.frobenius_sq().sqrt();
    let mut gap_trace = Vec::with_capacity(iters);
    if iters > 0 {
        gap_trace.push(gap);
    }
    for _ in 1..iters {
        // Analog stage: per-entry phase of W_target W_dp^H.
        let outer = w_target.mul(&w_dp.hermitian())?;
        let a_next = outer.map(|z| {
            let m = z.abs();
            if m > 0.0 {
                z.scale(1.0 / m)
            } else {
                Complex::ONE
            }
        });
        let w_next = digital_fit(&a_next)?;
        let gap_next = a_next.mul(&w_next)?.sub(w_target)?.frobenius_sq().sqrt();
        if gap_next <= gap {
            a = a_next;
            w_dp = w_next;
            gap = gap_next;
        }
        gap_trace.push(gap);
    }
    let power = a.mul(&w_dp)?.frobenius_sq();
    if power <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let w_dp = w_dp.scale((p_tx / power).sqrt());
    Ok(PeAltminResult {
        precoder: HbfPrecoder { a, w_dp, p_tx },
        gap_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn single_user_rate_hand_case() {
        // h = [1, 0], w = [1, 0]^T, sigma^2 = 1 -> SINR = 1, R = 1.
        let h = CMatrix::from_data(1, 2, vec![cx(1.0, 0.0), cx(0.0, 0.0)]).unwrap();
        let w = CMatrix::from_data(2, 1, vec![cx(1.0, 0.0), cx(0.0, 0.0)]).unwrap();
        let (sinr, r) = evaluate_rates(&h, &w, 1.0).unwrap();
        assert!((sinr[0] - 1.0).abs() < 1e-15);
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_precoder_zero_rate() {
        let h = CMatrix::from_data(1, 2, vec![cx(1.0, 0.5), cx(0.0, -1.0)]).unwrap();
        let w = CMatrix::zeros(2, 1);
        let (_, r) = evaluate_rates(&h, &w, 1.0).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn orthogonal_channels_rate_two() {
        // h_1 = e_1, h_2 = e_2, w_k = e_k, sigma^2 = 1 -> R = 2.
        let h = CMatrix::identity(2);
        let w = CMatrix::identity(2);
        let (_, r) = evaluate_rates(&h, &w, 1.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn compose_hbf_reference_cases() {
        let mut rng = StdRng::seed_from_u64(9);
        // A = I recovers the fully digital precoder.
        let w_dp = CMatrix::from_fn(3, 2, |_, _| {
            cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let composite = compose_hbf(&CMatrix::identity(3), &w_dp).unwrap();
        assert_eq!(composite, w_dp);
        // A zero digital stage composes to zero.
        let a = CMatrix::from_fn(4, 3, |_, _| {
            Complex::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
        });
        let zero = compose_hbf(&a, &CMatrix::zeros(3, 2)).unwrap();
        assert_eq!(zero, CMatrix::zeros(4, 2));
        // Random pair: matches an independent triple-loop product.
        let w_dp = CMatrix::from_fn(3, 2, |_, _| {
            cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let composite = compose_hbf(&a, &w_dp).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let mut expect = Complex::ZERO;
                for k in 0..3 {
                    expect = expect.add(&a.get(i, k).mul(w_dp.get(k, j)));
                }
                assert!(composite.get(i, j).sub(&expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zf_identity_channel() {
        let h = CMatrix::identity(3);
        let p = 6.0;
        let zf = zf_precoder(&h, p).unwrap();
        // W = sqrt(P / N_U) I.
        let expect = CMatrix::identity(3).scale((p / 3.0).sqrt());
        assert!(zf.w.distance_sq(&expect) < 1e-20);
    }

    #[test]
    fn zf_nulls_interference_on_complex_channels() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..20 {
            let h = CMatrix::from_fn(2, 4, |_, _| {
                cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let p_tx = 3.0;
            let zf = zf_precoder(&h, p_tx).unwrap();
            assert!((zf.power() - p_tx).abs() < 1e-10 * p_tx);
            for k in 0..2 {
                let hk_norm = (0..4).map(|t| h.get(k, t).abs_sq()).sum::<f64>().sqrt();
                for j in 0..2 {
                    if j == k {
                        continue;
                    }
                    let mut g = Complex::ZERO;
                    let mut wj_norm = 0.0;
                    for t in 0..4 {
                        g = g.add(&zf.w.get(t, j).mul_conj(h.get(k, t)));
                        wj_norm += zf.w.get(t, j).abs_sq();
                    }
                    assert!(
                        g.abs() < 1e-9 * hk_norm * wj_norm.sqrt(),
                        "leakage {} not nulled",
                        g.abs()
                    );
                }
            }
        }
    }

    #[test]
    fn wmmse_step_hand_case() {
        // N_U = 1, h = [1, 0], v = 1, u = 1, mu = 1:
        // (h h^H + I)^{-1} h = [1/2, 0]^T.
        let h = CMatrix::from_data(1, 2, vec![cx(1.0, 0.0), cx(0.0, 0.0)]).unwrap();
        let w = wmmse_step(&h, &[1.0], &[cx(1.0, 0.0)], &1.0).unwrap();
        assert!((w.get(0, 0).re - 0.5).abs() < 1e-14);
        assert!(w.get(0, 0).im.abs() < 1e-14);
        assert!(w.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn wmmse_step_norm_shrinks_with_ridge() {
        let mut rng = StdRng::seed_from_u64(7);
        let h = CMatrix::from_fn(2, 4, |_, _| {
            cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let v = vec![1.3, 0.8];
        let u = vec![cx(0.4, -0.2), cx(-0.1, 0.6)];
        let mut prev = f64::INFINITY;
        for mu in [0.1, 1.0, 10.0, 100.0] {
            let p = wmmse_step(&h, &v, &u, &mu).unwrap().frobenius_sq();
            assert!(p < prev, "power must shrink as mu grows");
            prev = p;
        }
    }

    #[test]
    fn solve_mu_unconstrained_when_budget_loose() {
        // Full-rank square channel so the mu = 0 system is nonsingular;
        // with u = v = 1 the unconstrained precoder is the identity, power
        // 2, comfortably below the budget.
        let h = CMatrix::identity(2);
        let v = vec![1.0, 1.0];
        let u = vec![cx(1.0, 0.0), cx(1.0, 0.0)];
        let mu = solve_mu(&h, &v, &u, 10.0).unwrap();
        assert_eq!(mu, 0.0);
    }

    #[test]
    fn solve_mu_halved_budget_raises_mu() {
        let mut rng = StdRng::seed_from_u64(11);
        let h = CMatrix::from_fn(2, 4, |_, _| {
            cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let v = vec![2.0, 1.5];
        let u = vec![cx(0.5, 0.1), cx(-0.3, 0.4)];
        let mu_full = solve_mu(&h, &v, &u, 1.0).unwrap();
        let mu_half = solve_mu(&h, &v, &u, 0.5).unwrap();
        assert!(mu_half > mu_full);
        let p = wmmse_step(&h, &v, &u, &mu_half).unwrap().frobenius_sq();
        assert!((p - 0.5).abs() / 0.5 < 1e-6);
    }

    #[test]
    fn wmmse_step_matches_user_space_synthesis() {
        // Woodbury identity: the N_T-dimensional ridge solve equals the
        // span synthesis w_k = u_k v_k H^T (mu I + D Gram)^{-1} e_k with
        // D = diag(v |u|^2) and Gram[i][j] = h_i^H h_j. Two algebraically
        // independent routes to the same precoder.
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..20 {
            let n_users = 3;
            let n_tx = 6;
            let h = CMatrix::from_fn(n_users, n_tx, |_, _| {
                cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let v: Vec<f64> = (0..n_users).map(|_| rng.gen_range(0.5..2.0)).collect();
            let u: Vec<Complex> = (0..n_users)
                .map(|_| cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mu = rng.gen_range(0.05..1.0);
            let big = wmmse_step(&h, &v, &u, &mu).unwrap();

            let gram = CMatrix::from_fn(n_users, n_users, |i, j| {
                let mut acc = h.get(i, 0).conj().mul(h.get(j, 0));
                for t in 1..n_tx {
                    acc = acc.add(&h.get(i, t).conj().mul(h.get(j, t)));
                }
                acc
            });
            // m = mu I + D gram is not Hermitian; solve columns via the
            // Hermitian system m^H m x = m^H e_k to stay within the LU
            // solver.
            let m = CMatrix::from_fn(n_users, n_users, |i, j| {
                let scaled = gram.get(i, j).scale(v[i] * u[i].abs_sq());
                if i == j {
                    scaled.add(&cx(mu, 0.0))
                } else {
                    scaled
                }
            });
            let mh = m.hermitian();
            let normal = mh.mul(&m).unwrap();
            let rhs = mh.mul(&CMatrix::identity(n_users)).unwrap();
            let x = solve_hermitian(&normal, &0.0, &rhs).unwrap();
            let small = CMatrix::from_fn(n_tx, n_users, |t, k| {
                let gain = u[k].scale(v[k]);
                let mut acc = Complex::ZERO;
                for j in 0..n_users {
                    acc = acc.add(&h.get(j, t).mul(&x.get(j, k).mul(&gain)));
                }
                acc
            });
            let rel = big.distance_sq(&small) / big.frobenius_sq();
            assert!(rel < 1e-18, "routes diverge: rel dist^2 {rel}");
        }
    }

    #[test]
    fn wmmse_single_user_reaches_mrt_rate() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let h = CMatrix::from_fn(1, 4, |_, _| {
                cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let p_tx = 2.0;
            let sigma = 1.0;
            let (sol, state) = wmmse_default(&h, sigma, p_tx).unwrap();
            let expect = (1.0 + p_tx * h.frobenius_sq() / (sigma * sigma)).log2();
            let got = *state.rate_trace.last().unwrap();
            assert!(
                (got - expect).abs() / expect < 1e-6,
                "rate {got} vs closed form {expect}"
            );
            assert!(sol.power() <= p_tx * (1.0 + POWER_SLACK));
        }
    }

    #[test]
    fn wmmse_never_degrades_initializer() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..10 {
            let h = CMatrix::from_fn(3, 6, |_, _| {
                cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let (_, state) = wmmse_default(&h, 1.0, 4.0).unwrap();
            let first = state.rate_trace[0];
            let last = *state.rate_trace.last().unwrap();
            assert!(last >= first - 1e-8);
            for pair in state.rate_trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-8, "trace must be nondecreasing");
            }
        }
    }

    #[test]
    fn pe_altmin_exact_when_target_factorizable() {
        // With n_rf = n_tx a target that is itself A W_dp (A unit modulus)
        // admits an exact factorization; the gap must collapse.
        let mut rng = StdRng::seed_from_u64(5);
        let n_tx = 4;
        let a_true = CMatrix::from_fn(n_tx, n_tx, |_, _| {
            Complex::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
        });
        let w_dp_true = CMatrix::from_fn(n_tx, 2, |_, _| {
            cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let target = a_true.mul(&w_dp_true).unwrap();
        let res = pe_altmin(&target, n_tx, 50, target.frobenius_sq(), 42).unwrap();
        assert!(
            *res.gap_trace.last().unwrap() < 1e-8,
            "gap {} should collapse",
            res.gap_trace.last().unwrap()
        );
    }

    #[test]
    fn pe_altmin_unit_modulus_and_monotone_gap() {
        let mut rng = StdRng::seed_from_u64(17);
        let target = CMatrix::from_fn(8, 2, |_, _| {
            cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let res = pe_altmin(&target, 4, 100, 1.0, 7).unwrap();
        for z in res.precoder.a.entries() {
            assert!((z.abs() - 1.0).abs() < 1e-12);
        }
        assert!(res.gap_trace.last().unwrap() <= &(res.gap_trace[0] + 1e-8));
        let power = res.precoder.compose().frobenius_sq();
        assert!((power - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pe_altmin_rejects_too_few_chains() {
        let target = CMatrix::zeros(4, 3);
        assert!(pe_altmin(&target, 2, 10, 1.0, 0).is_err());
    }
}
