//! Per-root-hertz sensitivity of repeated slices and its optimization
//! over slice and wait times, plus the (K, p) grid sweep.
//!
//! A slice of duration T repeated for a total time T_tot yields a
//! frequency spread CRB(T)/sqrt(T_tot/T), so the figure of merit is
//! S = sqrt(T) * CRB(T). The bound inside the optimizers uses the
//! continuous integral approximation of the discrete sample sum; with a
//! slice budget of many samples the two agree to well under a percent.

use rayon::prelude::*;

use crate::domain::{beta_rate, DecoherenceModel, SpinSystem, Strategy};
use crate::error::{Error, Result};
use crate::fisher::max_r_infinity;
use crate::minimize::{coarse_bracket, golden_section, nelder_mead};

/// One sensitivity evaluation at explicit slice and wait times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivitySpec {
    pub strategy: Strategy,
    pub slice_time: f64,
    pub wait_time: f64,
    pub s_value: f64,
}

impl SensitivitySpec {
    pub fn new(strategy: Strategy, slice_time: f64, wait_time: f64, s_value: f64) -> Result<Self> {
        if !(s_value.is_finite() && s_value > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sensitivity must be positive, got {s_value}"
            )));
        }
        if !(0.0 <= wait_time && wait_time < slice_time) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= wait {wait_time} < slice {slice_time}"
            )));
        }
        if strategy == Strategy::Classical && wait_time != 0.0 {
            return Err(Error::InvalidInput(
                "classical slices have no wait stage".into(),
            ));
        }
        Ok(Self {
            strategy,
            slice_time,
            wait_time,
            s_value,
        })
    }
}

/// Optimized slice schedule for one system.
///
/// `t_wait_star` is 0 for the classical strategy. `starts_agree` records
/// whether every converged optimizer start reached the same minimum value
/// (always true for the 1-D classical search).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimumReport {
    pub t_star: f64,
    pub t_wait_star: f64,
    pub s_star: f64,
    pub k_spins: usize,
    pub p: f64,
    pub starts_agree: bool,
}

impl OptimumReport {
    /// Plain `key = value` record, one line per field.
    pub fn write_record<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_star = {:.16e}", self.t_star)?;
        writeln!(w, "t_wait_star = {:.16e}", self.t_wait_star)?;
        writeln!(w, "s_star = {:.16e}", self.s_star)?;
        writeln!(w, "k_spins = {}", self.k_spins)?;
        writeln!(w, "p = {:.16e}", self.p)?;
        writeln!(w, "starts_agree = {}", self.starts_agree)?;
        Ok(())
    }
}

/// Exponential moments int_0^tau t^k e^{2at} dt for k = 0, 1, 2.
///
/// The closed forms lose all significant digits when |2 a tau| is small,
/// so a truncated power series takes over below 0.5.
fn moment(k: u32, a: f64, tau: f64) -> f64 {
    debug_assert!(k <= 2);
    let z = 2.0 * a * tau;
    if z.abs() < 0.5 {
        // tau^{k+1} * sum_n z^n / (n! (n + k + 1))
        let mut coeff = 1.0; // z^n / n!
        let mut sum = 0.0;
        for n in 0..32u32 {
            let term = coeff / (n + k + 1) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            coeff *= z / (n + 1) as f64;
        }
        return tau.powi(k as i32 + 1) * sum;
    }
    match k {
        0 => z.exp_m1() / (2.0 * a),
        1 => (z.exp() * (z - 1.0) + 1.0) / (4.0 * a * a),
        _ => (z.exp() * (0.5 * z * z - z + 1.0) - 1.0) / (4.0 * a * a * a),
    }
}

fn validate_budget(t_sample: f64, snr: f64) -> Result<()> {
    if !(t_sample.is_finite() && t_sample > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample interval must be positive and finite, got {t_sample}"
        )));
    }
    if !(snr.is_finite() && snr > 0.0) {
        return Err(Error::InvalidInput(format!(
            "snr must be positive and finite, got {snr}"
        )));
    }
    Ok(())
}

/// Sensitivity of the classical strategy for slice duration `t_total`.
pub fn s_classical(t_total: f64, sys: &SpinSystem, t_sample: f64, snr: f64) -> Result<f64> {
    validate_budget(t_sample, snr)?;
    if !(t_total.is_finite() && t_total >= t_sample) {
        return Err(Error::InvalidInput(format!(
            "slice time {t_total} must be finite and at least one sample interval {t_sample}"
        )));
    }
    let e2 = moment(2, sys.alpha(), t_total);
    Ok((t_total * t_sample).sqrt() / (snr * e2.sqrt()))
}

/// Sensitivity of the entangled strategy: a silent wait of `t_wait`
/// followed by readout over the remaining `t_total - t_wait`.
///
/// Deep in the decoherence-dominated regime the wait attenuation can
/// overflow; the result is then +inf, which optimizers treat as a
/// uniformly bad point.
pub fn s_quantum(
    t_total: f64,
    t_wait: f64,
    sys: &SpinSystem,
    t_sample: f64,
    snr: f64,
) -> Result<f64> {
    validate_budget(t_sample, snr)?;
    if !t_total.is_finite() || !t_wait.is_finite() || !(0.0 <= t_wait && t_wait < t_total) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= wait {t_wait} < slice {t_total}, both finite"
        )));
    }
    let alpha = sys.alpha();
    let t_read = t_total - t_wait;
    let lever = sys.k_spins() as f64 * t_wait;
    let q2 = lever * lever * moment(0, alpha, t_read)
        + 2.0 * lever * moment(1, alpha, t_read)
        + moment(2, alpha, t_read);
    let gain = (-beta_rate(sys) * t_wait).exp();
    Ok((t_total * t_sample).sqrt() * gain / (snr * q2.sqrt()))
}

const SLICE_SPAN_T2: f64 = 10.0;
const WAIT_SPAN_T2: f64 = 5.0;

/// Minimize `s_classical` over the slice time.
///
/// Golden-section search on `[t_sample, 10 T2*]` to 1e-6 T2*, bracketed
/// by a 64-point pre-scan; a minimum on the scan boundary is reported as
/// a bracketing failure.
pub fn optimize_classical(sys: &SpinSystem, t_sample: f64, snr: f64) -> Result<OptimumReport> {
    validate_budget(t_sample, snr)?;
    let t2 = sys.t2_star();
    let hi = SLICE_SPAN_T2 * t2;
    if t_sample >= hi {
        return Err(Error::InvalidInput(format!(
            "sample interval {t_sample} leaves no slice range below {hi}"
        )));
    }
    let objective = |t: f64| s_classical(t, sys, t_sample, snr).unwrap_or(f64::INFINITY);
    let (lo_b, hi_b) = coarse_bracket(objective, t_sample, hi, 64).ok_or_else(|| {
        Error::NonConvergence(format!(
            "no interior sensitivity minimum bracketed on [{t_sample}, {hi}]"
        ))
    })?;
    let res = golden_section(objective, lo_b, hi_b, 1e-6 * t2, 10_000);
    if !res.converged {
        return Err(Error::NonConvergence(
            "slice-time search did not reach tolerance".into(),
        ));
    }
    Ok(OptimumReport {
        t_star: res.x[0],
        t_wait_star: 0.0,
        s_star: res.fx,
        k_spins: sys.k_spins(),
        p: sys.decoherence().exponent(),
        starts_agree: true,
    })
}

/// Minimize `s_quantum` over slice and wait times.
///
/// Bounded Nelder-Mead descent on `[t_sample, 10 T2*] x [0, 5 T2*]`,
/// multi-started from the four corners of the box (pulled inside the
/// `t_wait < t_total` wedge), to 1e-6 T2*. The best converged start wins;
/// `starts_agree` is false when another converged start ended more than
/// 1e-6 (relative) above it. A single-spin system has no entangled gain
/// and delegates to the classical search.
pub fn optimize_quantum(sys: &SpinSystem, t_sample: f64, snr: f64) -> Result<OptimumReport> {
    if sys.k_spins() == 1 {
        return optimize_classical(sys, t_sample, snr);
    }
    validate_budget(t_sample, snr)?;
    let t2 = sys.t2_star();
    let lower = [t_sample, 0.0];
    let upper = [SLICE_SPAN_T2 * t2, WAIT_SPAN_T2 * t2];
    if lower[0] >= upper[0] {
        return Err(Error::InvalidInput(format!(
            "sample interval {t_sample} leaves no slice range below {}",
            upper[0]
        )));
    }
    let objective = |x: &[f64]| s_quantum(x[0], x[1], sys, t_sample, snr).unwrap_or(f64::INFINITY);

    let span_t = upper[0] - lower[0];
    let t_a = lower[0] + 0.1 * span_t;
    let t_b = upper[0] - 0.1 * span_t;
    let w_lo = 0.05 * upper[1];
    let w_hi = 0.9 * upper[1];
    let starts = [
        [t_a, w_lo.min(0.5 * t_a)],
        [t_b, w_lo],
        [t_a, w_hi.min(0.5 * t_a)],
        [t_b, w_hi.min(0.8 * t_b)],
    ];
    let step = [0.1 * span_t, 0.1 * upper[1]];
    let tol = 1e-6 * t2;

    let runs: Vec<_> = starts
        .iter()
        .map(|s| nelder_mead(objective, s, &step, &lower, &upper, tol, 5_000))
        .collect();
    let best = runs
        .iter()
        .filter(|r| r.converged && r.fx.is_finite())
        .min_by(|a, b| a.fx.total_cmp(&b.fx))
        .ok_or_else(|| Error::NonConvergence("no optimizer start converged".into()))?;
    let starts_agree = runs
        .iter()
        .filter(|r| r.converged && r.fx.is_finite())
        .all(|r| r.fx - best.fx <= 1e-6 * best.fx.abs() + 1e-12);

    let (t_star, t_wait_star) = (best.x[0], best.x[1]);
    if !(t_star > t_wait_star && t_wait_star >= 0.0) || !best.fx.is_finite() {
        return Err(Error::NonConvergence(format!(
            "optimizer returned an inconsistent schedule (T = {t_star}, T_w = {t_wait_star})"
        )));
    }
    Ok(OptimumReport {
        t_star,
        t_wait_star,
        s_star: best.fx,
        k_spins: sys.k_spins(),
        p: sys.decoherence().exponent(),
        starts_agree,
    })
}

/// One cell of the (K, p) sweep. Times are in units of T2*; the
/// sensitivities are normalized by sqrt(t_sample) * |alpha| * sigma/c,
/// which removes every scale except (K, p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k_spins: usize,
    pub p: f64,
    pub r_max: f64,
    pub t_wait_ratio_opt: f64,
    pub s_star_ghz: f64,
    pub t_star: f64,
    pub t_wait_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub k_spins: usize,
    pub p: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

pub const SWEEP_TABLE_HEADER: &str = "K,p,R_max,Tw_opt_ratio,S_star_ghz,T_star,Tw_star";

pub fn sweep_table_row(row: &SweepRow) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        row.k_spins,
        row.p,
        row.r_max,
        row.t_wait_ratio_opt,
        row.s_star_ghz,
        row.t_star,
        row.t_wait_star
    )
}

fn sweep_cell(k: usize, p: f64, template: &SpinSystem, t_sample: f64, snr: f64) -> Result<SweepRow> {
    let model = DecoherenceModel::power_law(p)?;
    // T2* = 1 makes every output time a multiple of T2* directly.
    let unit = SpinSystem::simple(k, 1.0, model)?;
    let ts_n = t_sample / template.t2_star();
    let ratio_opt = max_r_infinity(k, p)?;
    let ghz = optimize_quantum(&unit, ts_n, snr)?;
    Ok(SweepRow {
        k_spins: k,
        p,
        r_max: ratio_opt.r_max,
        t_wait_ratio_opt: ratio_opt.t_wait_opt,
        s_star_ghz: ghz.s_star * snr / ts_n.sqrt(),
        t_star: ghz.t_star,
        t_wait_star: ghz.t_wait_star,
    })
}

/// Evaluate the ratio optimum and the sensitivity optimum on the whole
/// (K, p) grid, K-major. Cells run on the current worker pool; results
/// are merged back in grid order, and a failing cell is recorded without
/// stopping its neighbours.
pub fn sweep(
    k_values: &[usize],
    p_values: &[f64],
    template: &SpinSystem,
    t_sample: f64,
    snr: f64,
) -> Result<SweepOutcome> {
    if k_values.is_empty() || p_values.is_empty() {
        return Err(Error::InvalidInput("sweep grids must be non-empty".into()));
    }
    validate_budget(t_sample, snr)?;
    let cells: Vec<(usize, f64)> = k_values
        .iter()
        .flat_map(|&k| p_values.iter().map(move |&p| (k, p)))
        .collect();
    let results: Vec<Result<SweepRow>> = cells
        .par_iter()
        .map(|&(k, p)| sweep_cell(k, p, template, t_sample, snr))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(k, p), res) in cells.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(SweepFailure {
                k_spins: k,
                p,
                reason: e.to_string(),
            }),
        }
    }
    Ok(SweepOutcome { rows, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_sys(k: usize, p: f64) -> SpinSystem {
        SpinSystem::simple(k, 1.0, DecoherenceModel::PowerLaw(p)).unwrap()
    }

    // Root of 1 = e^{-2T}(1 + 2T + 2T^2 + 4T^3) and the sensitivity
    // e^T / T there, the optimum of the normalized classical figure.
    const T_STAR: f64 = 1.691_817_141_426_590_7;
    const S_STAR: f64 = 3.209_175_204_623_908_8;

    #[test]
    fn moments_match_quadrature() {
        // Simpson quadrature as reference, fine enough for 1e-10.
        for &(a, tau) in &[(-1.0, 2.0), (-0.003, 0.07), (-2.5, 0.01), (-1e-9, 1.0)] {
            for k in 0..3u32 {
                let n = 20_000;
                let h = tau / n as f64;
                let g = |t: f64| t.powi(k as i32) * (2.0 * a * t).exp();
                let mut acc = g(0.0) + g(tau);
                for i in 1..n {
                    acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                let reference = acc * h / 3.0;
                assert_relative_eq!(moment(k, a, tau), reference, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn classical_sensitivity_is_unimodal_around_optimum() {
        let sys = unit_sys(1, 1.0);
        let s = |t: f64| s_classical(t, &sys, 1e-3, 1.0).unwrap();
        assert!(s(1.0) > s(1.69));
        assert!(s(2.5) > s(1.69));
    }

    #[test]
    fn classical_sensitivity_normalized_value() {
        let sys = unit_sys(1, 1.0);
        let t_s = 1e-3;
        let v = s_classical(T_STAR, &sys, t_s, 1.0).unwrap() / t_s.sqrt();
        assert_relative_eq!(v, S_STAR, max_relative = 1e-6);
    }

    #[test]
    fn classical_sensitivity_diverges_as_sqrt_t() {
        let sys = unit_sys(1, 1.0);
        let s = |t: f64| s_classical(t, &sys, 1e-3, 1.0).unwrap();
        assert_relative_eq!(s(400.0) / s(100.0), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn optimize_classical_finds_known_constants() {
        for &t2 in &[1.0, 0.7] {
            let sys = SpinSystem::simple(1, t2, DecoherenceModel::Uncorrelated).unwrap();
            let t_s = 1e-3 * t2;
            let rep = optimize_classical(&sys, t_s, 25.0).unwrap();
            assert_relative_eq!(rep.t_star / t2, T_STAR, max_relative = 1e-4);
            let normalized = rep.s_star * 25.0 * t2 / t_s.sqrt();
            assert_relative_eq!(normalized, S_STAR, max_relative = 1e-4);
            assert_eq!(rep.t_wait_star, 0.0);
            assert!(rep.starts_agree);
        }
    }

    #[test]
    fn optimal_sensitivity_scales_linearly_with_decay_rate() {
        let t_s = 1e-4;
        let fast = SpinSystem::simple(1, 0.5, DecoherenceModel::Uncorrelated).unwrap();
        let slow = SpinSystem::simple(1, 1.0, DecoherenceModel::Uncorrelated).unwrap();
        let s_fast = optimize_classical(&fast, t_s, 1.0).unwrap().s_star;
        let s_slow = optimize_classical(&slow, t_s, 1.0).unwrap().s_star;
        assert_relative_eq!(s_fast / s_slow, 2.0, max_relative = 1e-5);
    }

    #[test]
    fn quantum_with_no_wait_single_spin_equals_classical() {
        let sys = unit_sys(1, 1.0);
        for &t in &[0.5, 1.69, 4.0] {
            let q = s_quantum(t, 0.0, &sys, 1e-3, 2.0).unwrap();
            let c = s_classical(t, &sys, 1e-3, 2.0).unwrap();
            assert_eq!(q, c);
        }
    }

    #[test]
    fn quadratic_noise_penalizes_any_wait() {
        let sys = unit_sys(5, 2.0);
        let s = |w: f64| s_quantum(1.69, w, &sys, 1e-3, 1.0).unwrap();
        assert!(s(0.0) < s(0.1));
        assert!(s(0.1) < s(0.3));
    }

    #[test]
    fn optimize_quantum_single_spin_delegates_to_classical() {
        let sys = unit_sys(1, 0.11);
        let q = optimize_quantum(&sys, 1e-3, 1.0).unwrap();
        let c = optimize_classical(&sys, 1e-3, 1.0).unwrap();
        assert_eq!(q, c);
    }

    #[test]
    fn optimize_quantum_near_quadratic_noise_recovers_classical_schedule() {
        let sys = unit_sys(13, 1.99);
        let rep = optimize_quantum(&sys, 1e-3, 1.0).unwrap();
        assert!(rep.t_wait_star < 0.02, "t_wait_star = {}", rep.t_wait_star);
        assert!(
            (rep.t_star - T_STAR).abs() < 0.02,
            "t_star = {}",
            rep.t_star
        );
    }

    #[test]
    fn optimize_quantum_small_p_beats_classical_schedule() {
        let sys = unit_sys(13, 0.11);
        let ghz = optimize_quantum(&sys, 1e-3, 1.0).unwrap();
        let std = optimize_classical(&sys, 1e-3, 1.0).unwrap();
        assert!(
            ghz.s_star < 0.5 * std.s_star,
            "ghz {} vs std {}",
            ghz.s_star,
            std.s_star
        );
        assert!(ghz.t_star > ghz.t_wait_star && ghz.t_wait_star > 0.0);
    }

    #[test]
    fn optimize_quantum_slightly_supralinear_noise_still_wins() {
        let sys = unit_sys(64, 1.05);
        let ghz = optimize_quantum(&sys, 1e-3, 1.0).unwrap();
        let std = optimize_classical(&sys, 1e-3, 1.0).unwrap();
        assert!(ghz.s_star < std.s_star);
    }

    #[test]
    fn optimize_quantum_is_deterministic() {
        let sys = unit_sys(10, 0.11);
        let a = optimize_quantum(&sys, 1e-3, 1.0).unwrap();
        let b = optimize_quantum(&sys, 1e-3, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_covers_grid_in_k_major_order() {
        let template = SpinSystem::simple(1, 1.0, DecoherenceModel::Uncorrelated).unwrap();
        let out = sweep(&[1, 2, 4], &[0.0, 1.0, 2.0], &template, 1e-3, 1.0).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.rows.len(), 9);
        let order: Vec<(usize, f64)> = out.rows.iter().map(|r| (r.k_spins, r.p)).collect();
        assert_eq!(
            order,
            vec![
                (1, 0.0),
                (1, 1.0),
                (1, 2.0),
                (2, 0.0),
                (2, 1.0),
                (2, 2.0),
                (4, 0.0),
                (4, 1.0),
                (4, 2.0)
            ]
        );
        for row in &out.rows {
            if row.p == 1.0 {
                assert_relative_eq!(row.r_max, 1.0, max_relative = 1e-12);
            }
            if row.k_spins == 1 {
                assert_relative_eq!(row.s_star_ghz, S_STAR, max_relative = 1e-4);
                assert_eq!(row.t_wait_star, 0.0);
            }
        }
        // Entangled advantage grows with K at p = 0 and shrinks with p.
        let cell = |k: usize, p: f64| {
            out.rows
                .iter()
                .find(|r| r.k_spins == k && r.p == p)
                .unwrap()
        };
        assert!(cell(4, 0.0).r_max > cell(2, 0.0).r_max);
        assert!(cell(4, 0.0).s_star_ghz < cell(2, 0.0).s_star_ghz);
        assert!(cell(2, 2.0).s_star_ghz >= cell(2, 0.0).s_star_ghz);
    }

    #[test]
    fn sweep_row_serialization() {
        let row = SweepRow {
            k_spins: 2,
            p: 0.0,
            r_max: 1.5,
            t_wait_ratio_opt: 0.5,
            s_star_ghz: 2.25,
            t_star: 1.5,
            t_wait_star: 0.25,
        };
        assert_eq!(SWEEP_TABLE_HEADER, "K,p,R_max,Tw_opt_ratio,S_star_ghz,T_star,Tw_star");
        assert_eq!(
            sweep_table_row(&row),
            "2,0.0000000000000000e0,1.5000000000000000e0,5.0000000000000000e-1,\
             2.2500000000000000e0,1.5000000000000000e0,2.5000000000000000e-1"
        );
    }

    #[test]
    fn sensitivity_spec_validates_schedule() {
        assert!(SensitivitySpec::new(Strategy::Quantum, 1.0, 0.3, 2.0).is_ok());
        assert!(SensitivitySpec::new(Strategy::Quantum, 1.0, 1.0, 2.0).is_err());
        assert!(SensitivitySpec::new(Strategy::Classical, 1.0, 0.1, 2.0).is_err());
        assert!(SensitivitySpec::new(Strategy::Classical, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn rejects_degenerate_budgets() {
        let sys = unit_sys(2, 0.5);
        assert!(s_classical(1.0, &sys, 0.0, 1.0).is_err());
        assert!(s_classical(1e-4, &sys, 1e-3, 1.0).is_err());
        assert!(s_quantum(1.0, 1.0, &sys, 1e-3, 1.0).is_err());
        assert!(s_quantum(1.0, -0.1, &sys, 1e-3, 1.0).is_err());
        assert!(optimize_classical(&sys, 11.0, 1.0).is_err());
    }
}
