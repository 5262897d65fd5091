//! Physical quantities, unit conventions, and the dephasing-model family
//! shared by every other module.
//!
//! Conventions used throughout the crate:
//!
//! * Coherence times are stored as positive `T2*` values in seconds; the
//!   single-spin rate `alpha = -1/T2*` and the entangled-state rate
//!   `beta = K^p * alpha` are derived, strictly non-positive quantities.
//! * Angular frequencies (`delta`, `ising_j`, rates) are in rad/s.
//! * The gyromagnetic ratio `gamma` is carried for the density-matrix
//!   simulator but fixed to 1 in every closed-form signal and bound.

use crate::error::{Error, Result};

/// Which of the two acquisition strategies a quantity refers to.
///
/// `Classical` observes the free induction decay of uncoupled spins;
/// `Quantum` first lets an entangled state accrue phase for a wait time
/// before mapping it onto the readout spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Classical,
    Quantum,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Classical => write!(f, "classical"),
            Strategy::Quantum => write!(f, "quantum"),
        }
    }
}

/// How the dephasing rate of a K-spin entangled state scales with K.
///
/// All three variants are summarized by `beta = K^p * alpha`:
/// `Uncorrelated` is the `p = 1` endpoint (one independent generator per
/// spin), `Collective` the `p = 2` endpoint (a single generator acting on
/// the total spin), and `PowerLaw(p)` interpolates with `0 <= p <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecoherenceModel {
    Uncorrelated,
    Collective,
    PowerLaw(f64),
}

impl DecoherenceModel {
    /// Validated power-law constructor; `p` must lie in `[0, 2]`.
    pub fn power_law(p: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "power-law exponent p = {p} outside [0, 2]"
            )));
        }
        Ok(DecoherenceModel::PowerLaw(p))
    }

    /// The scaling exponent `p` in `beta = K^p * alpha`.
    pub fn exponent(&self) -> f64 {
        match self {
            DecoherenceModel::Uncorrelated => 1.0,
            DecoherenceModel::Collective => 2.0,
            DecoherenceModel::PowerLaw(p) => *p,
        }
    }
}

/// One star-topology sensor molecule: a central readout spin Ising-coupled
/// to `k_spins - 1` satellite spins, plus its dephasing environment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    k_spins: usize,
    gamma_ratio: f64,
    ising_j: f64,
    t2_star: f64,
    decoherence: DecoherenceModel,
}

impl SpinSystem {
    /// Build a validated system. `k_spins >= 1`, `t2_star > 0`; the
    /// gyromagnetic ratio and Ising coupling are unconstrained.
    pub fn new(
        k_spins: usize,
        gamma_ratio: f64,
        ising_j: f64,
        t2_star: f64,
        decoherence: DecoherenceModel,
    ) -> Result<Self> {
        if k_spins < 1 {
            return Err(Error::InvalidInput("k_spins must be at least 1".into()));
        }
        if !(t2_star.is_finite() && t2_star > 0.0) {
            return Err(Error::InvalidInput(format!(
                "t2_star must be positive and finite, got {t2_star}"
            )));
        }
        if !gamma_ratio.is_finite() || !ising_j.is_finite() {
            return Err(Error::InvalidInput(
                "gamma_ratio and ising_j must be finite".into(),
            ));
        }
        if let DecoherenceModel::PowerLaw(p) = decoherence {
            DecoherenceModel::power_law(p)?;
        }
        Ok(SpinSystem {
            k_spins,
            gamma_ratio,
            ising_j,
            t2_star,
            decoherence,
        })
    }

    /// Convenience constructor for the common `gamma = 1`, `J = 0` case.
    pub fn simple(k_spins: usize, t2_star: f64, decoherence: DecoherenceModel) -> Result<Self> {
        SpinSystem::new(k_spins, 1.0, 0.0, t2_star, decoherence)
    }

    pub fn k_spins(&self) -> usize {
        self.k_spins
    }

    pub fn gamma_ratio(&self) -> f64 {
        self.gamma_ratio
    }

    pub fn ising_j(&self) -> f64 {
        self.ising_j
    }

    pub fn t2_star(&self) -> f64 {
        self.t2_star
    }

    pub fn decoherence(&self) -> DecoherenceModel {
        self.decoherence
    }

    /// Single-spin dephasing rate `alpha = -1/T2*` (rad/s, strictly negative).
    pub fn alpha(&self) -> f64 {
        -1.0 / self.t2_star
    }

    /// Copy of this system with a different spin count.
    pub fn with_k_spins(&self, k_spins: usize) -> Result<Self> {
        SpinSystem::new(
            k_spins,
            self.gamma_ratio,
            self.ising_j,
            self.t2_star,
            self.decoherence,
        )
    }

    /// Copy of this system with a different decoherence model.
    pub fn with_decoherence(&self, decoherence: DecoherenceModel) -> Result<Self> {
        SpinSystem::new(
            self.k_spins,
            self.gamma_ratio,
            self.ising_j,
            self.t2_star,
            decoherence,
        )
    }
}

/// Sampling schedule of one acquisition: `n_samples` points separated by
/// `t_sample`, preceded (quantum strategy only) by a silent wait `t_wait`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionGrid {
    t_sample: f64,
    n_samples: usize,
    t_wait: f64,
}

impl AcquisitionGrid {
    /// `t_sample > 0`, `n_samples >= 2` (a single sample cannot identify
    /// both the frequency and the decay), `t_wait >= 0`.
    pub fn new(t_sample: f64, n_samples: usize, t_wait: f64) -> Result<Self> {
        if !(t_sample.is_finite() && t_sample > 0.0) {
            return Err(Error::InvalidInput(format!(
                "t_sample must be positive and finite, got {t_sample}"
            )));
        }
        if n_samples < 2 {
            return Err(Error::InvalidInput(
                "n_samples must be at least 2".into(),
            ));
        }
        if !(t_wait.is_finite() && t_wait >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "t_wait must be non-negative and finite, got {t_wait}"
            )));
        }
        Ok(AcquisitionGrid {
            t_sample,
            n_samples,
            t_wait,
        })
    }

    pub fn t_sample(&self) -> f64 {
        self.t_sample
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn t_wait(&self) -> f64 {
        self.t_wait
    }

    /// Copy with a different wait time.
    pub fn with_t_wait(&self, t_wait: f64) -> Result<Self> {
        AcquisitionGrid::new(self.t_sample, self.n_samples, t_wait)
    }

    /// Sample instants `m * t_sample` for `m = 0..n_samples`.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |m| m as f64 * self.t_sample)
    }

    /// Duration of the sampled readout window, `(n_samples - 1) * t_sample`.
    pub fn readout_span(&self) -> f64 {
        (self.n_samples - 1) as f64 * self.t_sample
    }
}

/// Amplitude, noise level, and the frequency under estimation.
///
/// `snr() = amplitude / noise_sigma` is the single resource-equalizing
/// quantity when comparing strategies: both are granted the same ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalParams {
    amplitude: f64,
    noise_sigma: f64,
    delta: f64,
}

impl SignalParams {
    /// `amplitude > 0`, `noise_sigma >= 0`; `delta` (rad/s) is unconstrained.
    pub fn new(amplitude: f64, noise_sigma: f64, delta: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::InvalidInput(format!(
                "amplitude must be positive and finite, got {amplitude}"
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise_sigma must be non-negative and finite, got {noise_sigma}"
            )));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidInput("delta must be finite".into()));
        }
        Ok(SignalParams {
            amplitude,
            noise_sigma,
            delta,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Amplitude-to-noise ratio; infinite for a noiseless configuration.
    pub fn snr(&self) -> f64 {
        self.amplitude / self.noise_sigma
    }
}

/// Effective dephasing rate of the K-spin entangled state (rad/s, <= 0).
///
/// Evaluates `K^p * alpha` with `p` taken from the decoherence model:
/// `K * alpha` for uncorrelated noise, `K^2 * alpha` for collective noise.
pub fn beta_rate(sys: &SpinSystem) -> f64 {
    let k = sys.k_spins() as f64;
    k.powf(sys.decoherence().exponent()) * sys.alpha()
}

/// Infer the scaling exponent `p` from measured single-spin and K-spin
/// coherence times: `p = ln(t2_single / t2_ghz) / ln(k)`.
///
/// This is the inverse of [`beta_rate`]'s power law. `t2_ghz > t2_single`
/// is rejected: it would imply `p < 0`, outside the model family.
pub fn infer_power_exponent(t2_single: f64, t2_ghz: f64, k: usize) -> Result<f64> {
    if !(t2_single.is_finite() && t2_single > 0.0) || !(t2_ghz.is_finite() && t2_ghz > 0.0) {
        return Err(Error::InvalidInput(
            "coherence times must be positive".into(),
        ));
    }
    if k < 2 {
        return Err(Error::InvalidInput(
            "exponent inference needs k >= 2".into(),
        ));
    }
    if t2_ghz > t2_single {
        return Err(Error::InvalidInput(format!(
            "t2_ghz = {t2_ghz} exceeds t2_single = {t2_single}; implied p < 0 is outside the model"
        )));
    }
    Ok((t2_single / t2_ghz).ln() / (k as f64).ln())
}
