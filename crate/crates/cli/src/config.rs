//! Run configuration: a sectioned TOML file, fully validated before any
//! computation, with command-line flags taking precedence over file
//! values and file values over defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starfid_core::{
    AcquisitionGrid, DecoherenceModel, Error, Result, SignalParams, SpinSystem, Strategy,
};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub grid: GridSection,
    pub signal: SignalSection,
    pub montecarlo: MonteCarloSection,
    pub oracle: OracleSection,
    pub sweep: SweepSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub k_spins: usize,
    pub gamma_ratio: f64,
    pub ising_j: f64,
    pub t2_star: f64,
    /// Decay-scaling exponent: 0 = central-spin only, 1 = uncorrelated,
    /// 2 = collective; fractional values are allowed everywhere except
    /// the density-matrix oracle.
    pub p: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            k_spins: 2,
            gamma_ratio: 1.0,
            ising_j: 0.0,
            t2_star: 1.0,
            p: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub t_sample: f64,
    pub n_samples: usize,
    pub t_wait: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_sample: 0.01,
            n_samples: 256,
            t_wait: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub delta: f64,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            noise_sigma: 0.05,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub n_trials: usize,
    /// "classical" or "quantum".
    pub strategy: String,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            strategy: "classical".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Largest register checked by the equivalence suite.
    pub k_max: usize,
    pub tolerance: f64,
    /// Exponent used for the analytic side of the comparison; defaults
    /// to the system exponent. Setting it to something else is the
    /// intended way to watch the suite fail.
    pub model_p: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            k_max: 6,
            tolerance: 1e-8,
            model_p: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub k_values: Vec<usize>,
    pub p_values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_values: vec![2, 4, 8, 16, 32, 64],
            p_values: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads for sweep and Monte-Carlo; 0 keeps the pool default.
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl RunConfig {
    /// Load from a TOML file, or fall back to pure defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Io(std::io::Error::new(
                        e.kind(),
                        format!("{}: {e}", p.display()),
                    ))
                })?;
                toml::from_str(&text).map_err(|e| {
                    Error::InvalidInput(format!("config {}: {e}", p.display()))
                })
            }
        }
    }

    /// Command-line flags override file values.
    pub fn apply_flags(
        &mut self,
        out: Option<PathBuf>,
        seed: Option<u64>,
        jobs: Option<usize>,
    ) {
        if let Some(out) = out {
            self.run.out_dir = out;
        }
        if let Some(seed) = seed {
            self.run.seed = seed;
        }
        if let Some(jobs) = jobs {
            self.run.jobs = jobs;
        }
    }

    pub fn decoherence(&self) -> Result<DecoherenceModel> {
        DecoherenceModel::power_law(self.system.p)
    }

    pub fn spin_system(&self) -> Result<SpinSystem> {
        SpinSystem::new(
            self.system.k_spins,
            self.system.gamma_ratio,
            self.system.ising_j,
            self.system.t2_star,
            self.decoherence()?,
        )
    }

    pub fn acquisition_grid(&self) -> Result<AcquisitionGrid> {
        AcquisitionGrid::new(self.grid.t_sample, self.grid.n_samples, self.grid.t_wait)
    }

    pub fn signal_params(&self) -> Result<SignalParams> {
        SignalParams::new(
            self.signal.amplitude,
            self.signal.noise_sigma,
            self.signal.delta,
        )
    }

    pub fn montecarlo_strategy(&self) -> Result<Strategy> {
        match self.montecarlo.strategy.as_str() {
            "classical" => Ok(Strategy::Classical),
            "quantum" => Ok(Strategy::Quantum),
            other => Err(Error::InvalidInput(format!(
                "montecarlo.strategy must be \"classical\" or \"quantum\", got \"{other}\""
            ))),
        }
    }

    /// The effective configuration as `# `-prefixed TOML lines, placed at
    /// the top of every output file so results trace back to their inputs.
    pub fn echo_header(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        let mut out = String::new();
        for line in body.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_valid_domain_objects() {
        let cfg = RunConfig::default();
        assert!(cfg.spin_system().is_ok());
        assert!(cfg.acquisition_grid().is_ok());
        assert!(cfg.signal_params().is_ok());
        assert_eq!(cfg.montecarlo_strategy().unwrap(), Strategy::Classical);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[system]\nk_spins = 3\nbogus = 1\n");
        assert!(err.is_err());
        let err = toml::from_str::<RunConfig>("[nonsense]\nx = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn partial_files_keep_defaults_elsewhere() {
        let cfg: RunConfig = toml::from_str("[system]\nk_spins = 7\n").unwrap();
        assert_eq!(cfg.system.k_spins, 7);
        assert_eq!(cfg.system.t2_star, 1.0);
        assert_eq!(cfg.grid.n_samples, 256);
    }

    #[test]
    fn echo_header_prefixes_every_line() {
        let cfg = RunConfig::default();
        let echo = cfg.echo_header();
        assert!(!echo.is_empty());
        assert!(echo.lines().all(|l| l.starts_with("# ")));
        assert!(echo.contains("k_spins"));
    }

    #[test]
    fn flags_take_precedence() {
        let mut cfg = RunConfig::default();
        cfg.apply_flags(Some(PathBuf::from("elsewhere")), Some(7), Some(2));
        assert_eq!(cfg.run.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.run.jobs, 2);
    }
}
