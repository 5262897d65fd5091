//! Cross-validation workbench for two magnetometry strategies on
//! star-topology spin ensembles: classical free-induction decay of
//! uncoupled spins versus GHZ-entangled sensing.
//!
//! The crate stacks four layers that check each other:
//!
//! * [`signal`] generates ideal and noisy readout traces from the damped
//!   exponential model.
//! * [`fisher`] computes the Fisher information of a trace and the
//!   Cramér-Rao bound on the field estimate, in both discrete-sum and
//!   closed form, together with the entangled-vs-classical precision
//!   ratio and its wait-time optimum.
//! * [`oracle`] re-derives the same traces from first principles: exact
//!   density-matrix evolution of the star system under its dephasing
//!   generator, with the preparation circuit as ideal unitaries.
//! * [`estimate`] fits traces by maximum likelihood and verifies by
//!   Monte Carlo that the fit spread attains the bound.
//!
//! [`sensitivity`] builds the per-root-hertz figure of merit on top and
//! optimizes slice schedules over (K, p) grids.

pub mod domain;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod minimize;
pub mod oracle;
pub mod sensitivity;
pub mod signal;

pub use domain::{
    beta_rate, infer_power_exponent, AcquisitionGrid, DecoherenceModel, SignalParams, SpinSystem,
    Strategy,
};
pub use error::{Error, Result};
pub use estimate::{fit_fid, monte_carlo, EstimateResult, MonteCarloReport};
pub use fisher::{
    crb_delta_ghz_closed, crb_delta_std_closed, fisher_matrix, max_r_infinity,
    max_r_infinity_closed, ratio_r_infinity, ratio_table_row, FisherReport, RatioOptimum,
    RATIO_TABLE_HEADER,
};
pub use oracle::{
    prepare_ghz, run_classical_protocol, run_protocol, DensityState, ProtocolResult,
    DEFAULT_K_MAX,
};
pub use sensitivity::{
    optimize_classical, optimize_quantum, s_classical, s_quantum, sweep, sweep_table_row,
    OptimumReport, SensitivitySpec, SweepFailure, SweepOutcome, SweepRow, SWEEP_TABLE_HEADER,
};
pub use signal::{add_noise, ideal_classical, ideal_quantum, SignalTrace};
