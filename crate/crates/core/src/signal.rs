//! Ideal and noisy free-induction-decay traces for both strategies.
//!
//! The classical trace is a single damped complex exponential,
//! `c' * exp(i*delta*m*t_s + alpha*m*t_s)`. The quantum trace carries an
//! additional constant factor `exp(i*K*delta*T_w + beta*T_w)` accrued
//! while the K-spin entangled state senses the field: a phase K times
//! faster than a single spin, paid for with the faster decay `beta`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{beta_rate, AcquisitionGrid, SignalParams, SpinSystem, Strategy};
use crate::error::{Error, Result};

/// A time-stamped complex FID record.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    times: Vec<f64>,
    values: Vec<Complex64>,
    kind: Strategy,
    is_noisy: bool,
}

impl SignalTrace {
    /// Assemble a trace, enforcing the sampling-grid invariants: equal
    /// lengths, strictly increasing times, uniform spacing to 1e-12
    /// relative, and (for ideal traces) a non-increasing envelope.
    pub fn new(
        times: Vec<f64>,
        values: Vec<Complex64>,
        kind: Strategy,
        is_noisy: bool,
    ) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(
                "times and values must have the same length".into(),
            ));
        }
        if times.len() < 2 {
            return Err(Error::InvalidInput("a trace needs at least 2 samples".into()));
        }
        let dt0 = times[1] - times[0];
        if !(dt0.is_finite() && dt0 > 0.0) {
            return Err(Error::InvalidInput("times must be strictly increasing".into()));
        }
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            if !(dt.is_finite() && dt > 0.0) || (dt - dt0).abs() > 1e-12 * dt0.abs() {
                return Err(Error::InvalidInput(
                    "times must be uniformly spaced (1e-12 relative)".into(),
                ));
            }
        }
        if !is_noisy {
            for w in values.windows(2) {
                // Tiny tolerance: equality of |values| is legitimate at delta = alpha = 0.
                if w[1].norm() > w[0].norm() * (1.0 + 1e-12) {
                    return Err(Error::InvalidInput(
                        "ideal trace envelope must be non-increasing".into(),
                    ));
                }
            }
        }
        Ok(SignalTrace {
            times,
            values,
            kind,
            is_noisy,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> Strategy {
        self.kind
    }

    pub fn is_noisy(&self) -> bool {
        self.is_noisy
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sampling interval, taken from the first two time stamps.
    pub fn t_sample(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Serialize as CSV with header `m,t,re,im`, one row per sample,
    /// 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "m,t,re,im")?;
        for (m, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            writeln!(w, "{m},{t:.16e},{:.16e},{:.16e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Ideal classical trace: `values[m] = c' * exp((i*delta + alpha) * m * t_s)`.
///
/// The grid's wait time is ignored; the classical strategy has no silent
/// sensing interval.
pub fn ideal_classical(
    params: &SignalParams,
    sys: &SpinSystem,
    grid: &AcquisitionGrid,
) -> SignalTrace {
    damped_exponential(params, sys, grid, Strategy::Classical)
}

/// Ideal quantum trace:
/// `values[m] = c * exp(i*K*delta*T_w + beta*T_w) * exp((i*delta + alpha) * m * t_s)`.
pub fn ideal_quantum(
    params: &SignalParams,
    sys: &SpinSystem,
    grid: &AcquisitionGrid,
) -> SignalTrace {
    damped_exponential(params, sys, grid, Strategy::Quantum)
}

fn damped_exponential(
    params: &SignalParams,
    sys: &SpinSystem,
    grid: &AcquisitionGrid,
    kind: Strategy,
) -> SignalTrace {
    let alpha = sys.alpha();
    let delta = params.delta();
    let front = match kind {
        Strategy::Classical => Complex64::new(params.amplitude(), 0.0),
        Strategy::Quantum => {
            let k = sys.k_spins() as f64;
            let t_wait = grid.t_wait();
            params.amplitude()
                * (beta_rate(sys) * t_wait).exp()
                * Complex64::new(0.0, k * delta * t_wait).exp()
        }
    };
    let times: Vec<f64> = grid.times().collect();
    let values: Vec<Complex64> = times
        .iter()
        .map(|&t| front * Complex64::new(alpha * t, delta * t).exp())
        .collect();
    SignalTrace::new(times, values, kind, false).expect("generated grid satisfies invariants")
}

/// Add independent zero-mean Gaussian noise of standard deviation
/// `noise_sigma` to the real and imaginary part of every sample.
///
/// Deterministic for a fixed `seed` (ChaCha8 stream, real quadrature drawn
/// before imaginary at each sample). Rejects traces that already carry
/// noise.
pub fn add_noise(trace: &SignalTrace, noise_sigma: f64, seed: u64) -> Result<SignalTrace> {
    if trace.is_noisy() {
        return Err(Error::InvalidInput(
            "trace already carries noise; refusing to noise it twice".into(),
        ));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise_sigma must be non-negative and finite, got {noise_sigma}"
        )));
    }
    let mut values = trace.values().to_vec();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::InvalidInput(format!("bad noise law: {e}")))?;
        for v in &mut values {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *v += Complex64::new(re, im);
        }
    }
    Ok(SignalTrace {
        times: trace.times().to_vec(),
        values,
        kind: trace.kind(),
        is_noisy: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DecoherenceModel;
    use approx::assert_relative_eq;

    fn fixture(k: usize, p: f64, t_wait: f64, delta: f64) -> (SignalParams, SpinSystem, AcquisitionGrid) {
        let params = SignalParams::new(1.0, 0.05, delta).unwrap();
        let sys = SpinSystem::simple(k, 1.0, DecoherenceModel::PowerLaw(p)).unwrap();
        let grid = AcquisitionGrid::new(0.01, 256, t_wait).unwrap();
        (params, sys, grid)
    }

    #[test]
    fn classical_first_sample_is_amplitude() {
        let (params, sys, grid) = fixture(1, 1.0, 0.0, 2.0 * std::f64::consts::PI);
        let tr = ideal_classical(&params, &sys, &grid);
        assert_eq!(tr.values()[0], Complex64::new(1.0, 0.0));
        assert_eq!(tr.kind(), Strategy::Classical);
        assert!(!tr.is_noisy());
    }

    #[test]
    fn classical_zero_delta_is_real_decay() {
        let (_, sys, grid) = fixture(1, 1.0, 0.0, 0.0);
        let params = SignalParams::new(2.0, 0.0, 0.0).unwrap();
        let tr = ideal_classical(&params, &sys, &grid);
        for (t, v) in tr.times().iter().zip(tr.values()) {
            assert_eq!(v.im, 0.0);
            assert_relative_eq!(v.re, 2.0 * (sys.alpha() * t).exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn quantum_reduces_to_classical_at_k1_tw0() {
        let (params, sys, grid) = fixture(1, 1.0, 0.0, 5.0);
        let c = ideal_classical(&params, &sys, &grid);
        let q = ideal_quantum(&params, &sys, &grid);
        for (a, b) in c.values().iter().zip(q.values()) {
            assert!((a - b).norm() <= 1e-14 * a.norm().max(1.0));
        }
    }

    #[test]
    fn quantum_zero_delta_has_attenuated_envelope_and_no_phase() {
        let (_, sys, grid) = fixture(5, 0.5, 0.8, 0.0);
        let params = SignalParams::new(1.0, 0.0, 0.0).unwrap();
        let tr = ideal_quantum(&params, &sys, &grid);
        let beta = beta_rate(&sys);
        for (t, v) in tr.times().iter().zip(tr.values()) {
            assert_eq!(v.im, 0.0);
            assert_relative_eq!(
                v.re,
                (beta * grid.t_wait()).exp() * (sys.alpha() * t).exp(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn quantum_initial_phase_and_amplitude() {
        // K = 5, p = 0.5, T_w = T2*: first sample carries phase K*delta*T_w
        // (mod 2 pi) and magnitude c * exp(beta * T_w).
        let delta = 2.0 * std::f64::consts::PI;
        let (params, sys, grid) = fixture(5, 0.5, 1.0, delta);
        let tr = ideal_quantum(&params, &sys, &grid);
        let expected_phase = 5.0 * delta * grid.t_wait();
        let wrapped = |x: f64| {
            let two_pi = 2.0 * std::f64::consts::PI;
            ((x % two_pi) + two_pi) % two_pi
        };
        let got = wrapped(tr.values()[0].arg());
        let want = wrapped(expected_phase);
        let diff = (got - want).abs().min(2.0 * std::f64::consts::PI - (got - want).abs());
        assert!(diff < 1e-12, "phase diff = {diff}");
        assert_relative_eq!(
            tr.values()[0].norm(),
            (beta_rate(&sys) * grid.t_wait()).exp(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn envelope_ratio_follows_alpha_decay() {
        let (params, sys, grid) = fixture(4, 1.0, 0.6, 3.0);
        for tr in [
            ideal_classical(&params, &sys, &grid),
            ideal_quantum(&params, &sys, &grid),
        ] {
            let v0 = tr.values()[0].norm();
            for (t, v) in tr.times().iter().zip(tr.values()) {
                assert_relative_eq!(v.norm() / v0, (sys.alpha() * t).exp(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn noise_zero_sigma_is_identity() {
        let (params, sys, grid) = fixture(1, 1.0, 0.0, 4.0);
        let tr = ideal_classical(&params, &sys, &grid);
        let noisy = add_noise(&tr, 0.0, 7).unwrap();
        assert_eq!(tr.values(), noisy.values());
        assert!(noisy.is_noisy());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let (params, sys, grid) = fixture(1, 1.0, 0.0, 4.0);
        let tr = ideal_classical(&params, &sys, &grid);
        let a = add_noise(&tr, 0.05, 42).unwrap();
        let b = add_noise(&tr, 0.05, 42).unwrap();
        assert_eq!(a.values(), b.values());
        let c = add_noise(&tr, 0.05, 43).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn noise_rejects_double_noising() {
        let (params, sys, grid) = fixture(1, 1.0, 0.0, 4.0);
        let tr = ideal_classical(&params, &sys, &grid);
        let noisy = add_noise(&tr, 0.05, 1).unwrap();
        assert!(add_noise(&noisy, 0.05, 2).is_err());
    }

    #[test]
    fn noise_variance_matches_declared_law() {
        // 10^5 samples per quadrature; sample variance within 2% of sigma^2.
        let params = SignalParams::new(1.0, 0.0, 0.0).unwrap();
        let sys = SpinSystem::simple(1, 1e12, DecoherenceModel::Uncorrelated).unwrap();
        let grid = AcquisitionGrid::new(1.0, 100_000, 0.0).unwrap();
        let tr = ideal_classical(&params, &sys, &grid);
        let sigma = 0.05;
        let noisy = add_noise(&tr, sigma, 2024).unwrap();
        let n = noisy.len() as f64;
        let (mut sr, mut si) = (0.0, 0.0);
        for (v, v0) in noisy.values().iter().zip(tr.values()) {
            sr += (v.re - v0.re).powi(2);
            si += (v.im - v0.im).powi(2);
        }
        let var_r = sr / n;
        let var_i = si / n;
        assert!((var_r / (sigma * sigma) - 1.0).abs() < 0.02, "var_r = {var_r}");
        assert!((var_i / (sigma * sigma) - 1.0).abs() < 0.02, "var_i = {var_i}");
    }

    #[test]
    fn csv_format_round_trips_values() {
        let (params, sys, grid) = fixture(2, 1.0, 0.1, 1.5);
        let tr = ideal_quantum(&params, &sys, &grid);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "m,t,re,im");
        for (m, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 4);
            assert_eq!(cols[0].parse::<usize>().unwrap(), m);
            let t: f64 = cols[1].parse().unwrap();
            let re: f64 = cols[2].parse().unwrap();
            let im: f64 = cols[3].parse().unwrap();
            assert_eq!(t, tr.times()[m]);
            assert_eq!(re, tr.values()[m].re);
            assert_eq!(im, tr.values()[m].im);
        }
    }

    #[test]
    fn trace_constructor_rejects_bad_grids() {
        let v = vec![Complex64::new(1.0, 0.0); 3];
        assert!(SignalTrace::new(vec![0.0, 1.0, 1.999], v.clone(), Strategy::Classical, true).is_err());
        assert!(SignalTrace::new(vec![0.0, 1.0], v.clone(), Strategy::Classical, true).is_err());
        assert!(SignalTrace::new(vec![0.0, -1.0, -2.0], v, Strategy::Classical, true).is_err());
        // Growing envelope is rejected for ideal traces only.
        let grow = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ];
        assert!(SignalTrace::new(
            vec![0.0, 1.0, 2.0],
            grow.clone(),
            Strategy::Classical,
            false
        )
        .is_err());
        assert!(SignalTrace::new(vec![0.0, 1.0, 2.0], grow, Strategy::Classical, true).is_ok());
    }
}
