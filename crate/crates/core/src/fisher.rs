//! Fisher information, Cramér-Rao bounds, and the strategy-comparison
//! ratio of the classical and entangled acquisition schemes.
//!
//! The estimated parameters are (c, alpha, delta). Because the delta
//! column of the model Jacobian is i times a real multiple of the signal,
//! the (delta, c) and (delta, alpha) Fisher entries vanish identically;
//! the delta bound therefore has an exact closed form, which the numeric
//! matrix inversion here cross-checks.

use nalgebra::{Cholesky, Matrix3};
use num_complex::Complex64;

use crate::domain::{beta_rate, AcquisitionGrid, SignalParams, SpinSystem, Strategy};
use crate::error::{Error, Result};
use crate::signal::{ideal_classical, ideal_quantum};

/// Fisher matrix over (c, alpha, delta), its inverse, and the
/// per-parameter Cramér-Rao bounds. Index order is c = 0, alpha = 1,
/// delta = 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherReport {
    pub matrix: [[f64; 3]; 3],
    pub inverse: [[f64; 3]; 3],
    pub crb_c: f64,
    pub crb_alpha: f64,
    pub crb_delta: f64,
}

/// Fisher matrix `F = (1/sigma^2) Re(D^dag D)` of the ideal signal model,
/// with analytic Jacobian columns `d/dc = x/c`, `d/dalpha = m*t_s*x`, and
/// `d/ddelta = i*(K*T_w + m*t_s)*x` (the `K*T_w` term is absent for the
/// classical strategy).
///
/// The entangled-state attenuation `exp(beta*T_w)` is a known constant of
/// the model, not a parameter, so the alpha column does not differentiate
/// through it.
pub fn fisher_matrix(
    kind: Strategy,
    params: &SignalParams,
    sys: &SpinSystem,
    grid: &AcquisitionGrid,
) -> Result<FisherReport> {
    let sigma = params.noise_sigma();
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(
            "Fisher information needs noise_sigma > 0 (noiseless data has no CRB)".into(),
        ));
    }
    let trace = match kind {
        Strategy::Classical => ideal_classical(params, sys, grid),
        Strategy::Quantum => ideal_quantum(params, sys, grid),
    };
    let k_t_wait = match kind {
        Strategy::Classical => 0.0,
        Strategy::Quantum => sys.k_spins() as f64 * grid.t_wait(),
    };
    let c = params.amplitude();

    let mut f = Matrix3::<f64>::zeros();
    for (t, x) in trace.times().iter().zip(trace.values()) {
        let d = [
            x / c,
            x * *t,
            Complex64::i() * x * (k_t_wait + t),
        ];
        for j in 0..3 {
            for l in j..3 {
                f[(j, l)] += (d[j].conj() * d[l]).re;
            }
        }
    }
    for j in 0..3 {
        for l in 0..j {
            f[(j, l)] = f[(l, j)];
        }
    }
    f /= sigma * sigma;

    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFisher(
            "matrix entries are not finite (signal attenuated beyond float range?)".into(),
        ));
    }

    // Jacobi equilibration keeps the 3x3 inversion well scaled even when
    // the parameters live on wildly different magnitudes. F = S C S with
    // S = diag(sqrt(F_jj)), so F^-1 = S^-1 C^-1 S^-1.
    let mut s = [0.0; 3];
    for (j, sj) in s.iter_mut().enumerate() {
        let diag = f[(j, j)];
        if !(diag.is_finite() && diag > 0.0) {
            return Err(Error::SingularFisher(format!(
                "zero information for parameter index {j} (diagonal = {diag})"
            )));
        }
        *sj = diag.sqrt();
    }
    let corr = Matrix3::from_fn(|j, l| f[(j, l)] / (s[j] * s[l]));
    let chol = Cholesky::new(corr).ok_or_else(|| {
        Error::SingularFisher("equilibrated matrix is not positive definite".into())
    })?;
    let inv_corr = chol.inverse();
    let inverse = Matrix3::from_fn(|j, l| inv_corr[(j, l)] / (s[j] * s[l]));

    let to_rows = |m: &Matrix3<f64>| {
        let mut rows = [[0.0; 3]; 3];
        for (j, row) in rows.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v = m[(j, l)];
            }
        }
        rows
    };
    let crb = |j: usize| -> Result<f64> {
        let v = inverse[(j, j)];
        if v > 0.0 && v.is_finite() {
            Ok(v.sqrt())
        } else {
            Err(Error::SingularFisher(format!(
                "inverse diagonal {j} is not positive ({v})"
            )))
        }
    };
    Ok(FisherReport {
        matrix: to_rows(&f),
        inverse: to_rows(&inverse),
        crb_c: crb(0)?,
        crb_alpha: crb(1)?,
        crb_delta: crb(2)?,
    })
}

/// Closed-form delta bound for the entangled strategy:
/// `exp(-beta*T_w) / sqrt(sum_m (K*T_w + m*t_s)^2 exp(2*alpha*m*t_s)) / snr`.
///
/// Exact (not approximate) thanks to the phase/amplitude decoupling of
/// the Fisher matrix.
pub fn crb_delta_ghz_closed(sys: &SpinSystem, grid: &AcquisitionGrid, snr: f64) -> Result<f64> {
    validate_snr(snr)?;
    let k_t_wait = sys.k_spins() as f64 * grid.t_wait();
    let sum = weighted_time_square_sum(sys.alpha(), grid, k_t_wait);
    finite_crb((-beta_rate(sys) * grid.t_wait()).exp() / (sum.sqrt() * snr))
}

/// Closed-form delta bound for the classical strategy:
/// `1 / sqrt(sum_m (m*t_s)^2 exp(2*alpha*m*t_s)) / snr`.
///
/// This is the unentangled-ensemble reference bound the quantum scheme is
/// measured against; the grid's wait time is ignored.
pub fn crb_delta_std_closed(sys: &SpinSystem, grid: &AcquisitionGrid, snr: f64) -> Result<f64> {
    validate_snr(snr)?;
    let sum = weighted_time_square_sum(sys.alpha(), grid, 0.0);
    finite_crb(1.0 / (sum.sqrt() * snr))
}

fn validate_snr(snr: f64) -> Result<()> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(Error::InvalidInput(format!(
            "snr must be positive and finite, got {snr}"
        )));
    }
    Ok(())
}

fn weighted_time_square_sum(alpha: f64, grid: &AcquisitionGrid, offset: f64) -> f64 {
    let ts = grid.t_sample();
    (0..grid.n_samples())
        .map(|m| {
            let mt = m as f64 * ts;
            let tau = offset + mt;
            tau * tau * (2.0 * alpha * mt).exp()
        })
        .sum()
}

fn finite_crb(crb: f64) -> Result<f64> {
    if crb.is_finite() && crb > 0.0 {
        Ok(crb)
    } else {
        Err(Error::SingularFisher(format!(
            "closed-form bound is not representable ({crb})"
        )))
    }
}

/// Long-readout limit of the bound ratio classical/quantum,
/// `exp(beta*T_w) * sqrt(1 - 2*K*alpha*T_w*(1 - K*alpha*T_w))`.
///
/// Values above 1 mean the entangled strategy estimates delta more
/// precisely than the classical one at equal SNR.
pub fn ratio_r_infinity(sys: &SpinSystem, t_wait: f64) -> Result<f64> {
    if !(t_wait.is_finite() && t_wait >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "t_wait must be non-negative and finite, got {t_wait}"
        )));
    }
    let u = sys.k_spins() as f64 * sys.alpha() * t_wait;
    Ok((beta_rate(sys) * t_wait).exp() * (1.0 - 2.0 * u * (1.0 - u)).sqrt())
}

/// Wait-time optimum of [`ratio_r_infinity`]: the best achievable ratio
/// and the wait time attaining it, expressed in units of the single-spin
/// dephasing time (multiply by `t2_star` for seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioOptimum {
    pub r_max: f64,
    pub t_wait_opt: f64,
}

/// Analytic maximum of the bound ratio over the wait time, valid for
/// `0 <= p < 1` and `k >= 2`:
///
/// `r_max = K^(1/2-p) * sqrt(K + sqrt(K^2 - K^(2p))) / exp((1 - K^(p-1) + sqrt(1 - K^(2p-2))) / 2)`
/// `t_wait_opt = ((1 - K^(p-1)) + sqrt(1 - K^(2p-2))) / (2 K^p)`, in units of T2*.
pub fn max_r_infinity_closed(k: usize, p: f64) -> Result<RatioOptimum> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "the ratio optimum needs k >= 2, got {k}"
        )));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "closed form is valid for 0 <= p < 1, got {p}; for p >= 1 the supremum is 1 at zero wait"
        )));
    }
    let kf = k as f64;
    let a = kf.powf(p - 1.0);
    let b = (1.0 - kf.powf(2.0 * p - 2.0)).sqrt();
    let half_exponent = 0.5 * (1.0 - a + b);
    let r_max =
        kf.powf(0.5 - p) * (kf + (kf * kf - kf.powf(2.0 * p)).sqrt()).sqrt() / half_exponent.exp();
    Ok(RatioOptimum {
        r_max,
        t_wait_opt: half_exponent / kf.powf(p),
    })
}

/// Total-range ratio optimum: the closed form where it applies, and the
/// boundary value (ratio 1 at zero wait) for `k = 1` or `p >= 1`, where
/// waiting in the entangled state never pays.
pub fn max_r_infinity(k: usize, p: f64) -> Result<RatioOptimum> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if !(0.0..=2.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "exponent p must lie in [0, 2], got {p}"
        )));
    }
    if p < 1.0 && k >= 2 {
        max_r_infinity_closed(k, p)
    } else {
        Ok(RatioOptimum {
            r_max: 1.0,
            t_wait_opt: 0.0,
        })
    }
}

/// Header for the ratio-optimum table (wait times in units of T2*).
pub const RATIO_TABLE_HEADER: &str = "K,p,Tw_opt,R_max";

/// One CSV row of the ratio-optimum table, 17 significant digits.
pub fn ratio_table_row(k: usize, p: f64, opt: &RatioOptimum) -> String {
    format!("{k},{p:.16e},{:.16e},{:.16e}", opt.t_wait_opt, opt.r_max)
}
