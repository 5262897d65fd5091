//! Subcommand implementations. Every command resolves its inputs from
//! the validated configuration, computes through the core crate, writes
//! files under the output directory with the effective configuration
//! echoed as a `# ` header, and prints a short deterministic summary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use starfid_core::{
    add_noise, crb_delta_ghz_closed, crb_delta_std_closed, fisher_matrix, ideal_classical,
    ideal_quantum, max_r_infinity, monte_carlo, optimize_classical, optimize_quantum,
    ratio_r_infinity, ratio_table_row, run_classical_protocol, run_protocol, sweep,
    sweep_table_row, DecoherenceModel, Error, OptimumReport, Result, SignalParams, SpinSystem,
    Strategy, RATIO_TABLE_HEADER, SWEEP_TABLE_HEADER,
};

use crate::config::RunConfig;

fn io_with_path(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.run.out_dir.clone();
    fs::create_dir_all(&dir).map_err(io_with_path(&dir))?;
    Ok(dir)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(io_with_path(path))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Ideal and noisy traces for both strategies, four CSV files.
pub fn cmd_signal(cfg: &RunConfig) -> Result<()> {
    let sys = cfg.spin_system()?;
    let grid = cfg.acquisition_grid()?;
    let params = cfg.signal_params()?;
    let dir = ensure_out_dir(cfg)?;
    let header = cfg.echo_header();
    let seed = cfg.run.seed;

    let jobs: [(&str, _, u64); 2] = [
        ("classical", Strategy::Classical, seed),
        // Distinct stream for the second strategy's noise.
        ("quantum", Strategy::Quantum, seed.wrapping_add(1)),
    ];
    for (name, strategy, noise_seed) in jobs {
        let ideal = match strategy {
            Strategy::Classical => ideal_classical(&params, &sys, &grid),
            Strategy::Quantum => ideal_quantum(&params, &sys, &grid),
        };
        let noisy = add_noise(&ideal, params.noise_sigma(), noise_seed)?;
        for (kind, trace) in [("ideal", &ideal), ("noisy", &noisy)] {
            let path = dir.join(format!("{name}_{kind}.csv"));
            let mut body = Vec::new();
            body.extend_from_slice(header.as_bytes());
            trace.write_csv(&mut body)?;
            write_file(&path, std::str::from_utf8(&body).expect("csv is utf-8"))?;
        }
    }
    println!(
        "signal: K = {}, p = {}, sigma = {:.16e}, seed = {seed}",
        sys.k_spins(),
        sys.decoherence().exponent(),
        params.noise_sigma()
    );
    Ok(())
}

/// Closed-form and Fisher-matrix bounds plus the asymptotic precision
/// ratio for the configured system.
pub fn cmd_crb(cfg: &RunConfig) -> Result<()> {
    let sys = cfg.spin_system()?;
    let grid = cfg.acquisition_grid()?;
    let params = cfg.signal_params()?;
    let snr = params.snr();
    let dir = ensure_out_dir(cfg)?;

    let std_matrix = fisher_matrix(Strategy::Classical, &params, &sys, &grid)?;
    let ghz_matrix = fisher_matrix(Strategy::Quantum, &params, &sys, &grid)?;
    let std_closed = crb_delta_std_closed(&sys, &grid, snr)?;
    let ghz_closed = crb_delta_ghz_closed(&sys, &grid, snr)?;
    let r_inf = ratio_r_infinity(&sys, grid.t_wait())?;

    let mut report = String::new();
    let _ = writeln!(report, "crb_delta_classical_closed = {std_closed:.16e}");
    let _ = writeln!(
        report,
        "crb_delta_classical_matrix = {:.16e}",
        std_matrix.crb_delta
    );
    let _ = writeln!(report, "crb_delta_quantum_closed = {ghz_closed:.16e}");
    let _ = writeln!(
        report,
        "crb_delta_quantum_matrix = {:.16e}",
        ghz_matrix.crb_delta
    );
    let _ = writeln!(report, "crb_c_classical = {:.16e}", std_matrix.crb_c);
    let _ = writeln!(report, "crb_alpha_classical = {:.16e}", std_matrix.crb_alpha);
    let _ = writeln!(report, "crb_c_quantum = {:.16e}", ghz_matrix.crb_c);
    let _ = writeln!(report, "crb_alpha_quantum = {:.16e}", ghz_matrix.crb_alpha);
    let _ = writeln!(report, "r_infinity = {r_inf:.16e}");
    if r_inf < 1.0 && grid.t_wait() > 0.0 {
        let _ = writeln!(
            report,
            "note = quantum strategy not advantageous for this configuration"
        );
    }

    write_file(&dir.join("crb_report.txt"), &format!("{}{report}", cfg.echo_header()))?;
    print!("{report}");
    Ok(())
}

/// Density-matrix oracle vs closed-form model over a register-size scan;
/// any deviation beyond tolerance fails the command.
pub fn cmd_oracle_check(cfg: &RunConfig) -> Result<()> {
    let base = cfg.spin_system()?;
    if base.gamma_ratio() != 1.0 {
        return Err(Error::InvalidInput(
            "the equivalence suite assumes gamma_ratio = 1; the analytic model \
             has no separate central-spin response"
                .into(),
        ));
    }
    let grid = cfg.acquisition_grid()?;
    let model_p = cfg.oracle.model_p.unwrap_or(cfg.system.p);
    let model = DecoherenceModel::power_law(model_p)?;
    let tol = cfg.oracle.tolerance;
    let dir = ensure_out_dir(cfg)?;
    let delta = cfg.signal.delta;
    let amp = SignalParams::new(1.0, 0.0, delta)?;

    let mut report = String::new();
    let mut worst: f64 = 0.0;
    for k in 2..=cfg.oracle.k_max {
        let sys = base.with_k_spins(k)?;
        let model_sys = sys.with_decoherence(model)?;
        for (name, run, ideal) in [
            (
                "quantum",
                run_protocol(&sys, delta, &grid)?,
                ideal_quantum(&amp, &model_sys, &grid),
            ),
            (
                "classical",
                run_classical_protocol(&sys, delta, &grid)?,
                ideal_classical(&amp, &model_sys, &grid),
            ),
        ] {
            let max_dev = run
                .trace
                .values()
                .iter()
                .zip(ideal.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            worst = worst.max(max_dev);
            let verdict = if max_dev <= tol { "pass" } else { "FAIL" };
            let _ = writeln!(
                report,
                "k = {k} strategy = {name} max_deviation = {max_dev:.16e} {verdict}"
            );
        }
    }
    let passed = worst <= tol;
    let _ = writeln!(report, "tolerance = {tol:.16e}");
    let _ = writeln!(report, "overall = {}", if passed { "pass" } else { "FAIL" });

    write_file(
        &dir.join("oracle_check.txt"),
        &format!("{}{report}", cfg.echo_header()),
    )?;
    print!("{report}");
    if !passed {
        return Err(Error::NonConvergence(format!(
            "oracle equivalence failed: max deviation {worst:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(())
}

/// Monte-Carlo bound-attainment report for the configured strategy.
pub fn cmd_montecarlo(cfg: &RunConfig) -> Result<()> {
    let sys = cfg.spin_system()?;
    let grid = cfg.acquisition_grid()?;
    let params = cfg.signal_params()?;
    let strategy = cfg.montecarlo_strategy()?;
    let dir = ensure_out_dir(cfg)?;

    let report = monte_carlo(
        strategy,
        &sys,
        &grid,
        &params,
        cfg.montecarlo.n_trials,
        cfg.run.seed,
    )?;
    let mut body = Vec::new();
    report.write_record(&mut body)?;
    let record = String::from_utf8(body).expect("record is utf-8");

    let path = dir.join(format!("montecarlo_{}.txt", cfg.montecarlo.strategy));
    write_file(&path, &format!("{}{record}", cfg.echo_header()))?;
    print!("{record}");
    Ok(())
}

fn optimum_record(cfg: &RunConfig, rep: &OptimumReport, sys: &SpinSystem, snr: f64) -> String {
    let mut body = Vec::new();
    rep.write_record(&mut body).expect("in-memory write");
    let mut record = String::from_utf8(body).expect("record is utf-8");
    // Normalized convenience values: times in units of T2*, sensitivity
    // in units of sqrt(t_sample) * |alpha| * sigma/c.
    let t2 = sys.t2_star();
    let _ = writeln!(record, "t_star_over_t2 = {:.16e}", rep.t_star / t2);
    let _ = writeln!(record, "t_wait_star_over_t2 = {:.16e}", rep.t_wait_star / t2);
    let _ = writeln!(
        record,
        "s_star_normalized = {:.16e}",
        rep.s_star * snr * t2 / cfg.grid.t_sample.sqrt()
    );
    record
}

/// Optimal classical slice schedule.
pub fn cmd_optimize_std(cfg: &RunConfig) -> Result<()> {
    let sys = cfg.spin_system()?;
    let params = cfg.signal_params()?;
    let dir = ensure_out_dir(cfg)?;
    let rep = optimize_classical(&sys, cfg.grid.t_sample, params.snr())?;
    let record = optimum_record(cfg, &rep, &sys, params.snr());
    write_file(
        &dir.join("optimum_std.txt"),
        &format!("{}{record}", cfg.echo_header()),
    )?;
    print!("{record}");
    Ok(())
}

/// Optimal entangled slice schedule (slice plus wait).
pub fn cmd_optimize_ghz(cfg: &RunConfig) -> Result<()> {
    let sys = cfg.spin_system()?;
    let params = cfg.signal_params()?;
    let dir = ensure_out_dir(cfg)?;
    let rep = optimize_quantum(&sys, cfg.grid.t_sample, params.snr())?;
    let record = optimum_record(cfg, &rep, &sys, params.snr());
    write_file(
        &dir.join("optimum_ghz.txt"),
        &format!("{}{record}", cfg.echo_header()),
    )?;
    print!("{record}");
    Ok(())
}

/// Rows already present in an interrupted sweep file, keyed by
/// (K, p bit pattern); the original text is reused verbatim so resumed
/// runs stay byte-identical.
fn parse_existing_rows(path: &Path) -> HashMap<(usize, u64), String> {
    let mut rows = HashMap::new();
    let Ok(text) = fs::read_to_string(path) else {
        return rows;
    };
    for line in text.lines() {
        if line.starts_with('#') || line == SWEEP_TABLE_HEADER || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(k), Some(p)) = (fields.next(), fields.next()) else {
            continue;
        };
        let (Ok(k), Ok(p)) = (k.parse::<usize>(), p.parse::<f64>()) else {
            continue;
        };
        rows.insert((k, p.to_bits()), line.to_string());
    }
    rows
}

/// Ratio and sensitivity optima over the (K, p) grid: a closed-form
/// ratio table and an optimizer table, the latter resumable.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let template = cfg.spin_system()?;
    let t_sample = cfg.grid.t_sample;
    let dir = ensure_out_dir(cfg)?;
    let header = cfg.echo_header();
    let k_values = &cfg.sweep.k_values;
    let p_values = &cfg.sweep.p_values;
    if k_values.is_empty() || p_values.is_empty() {
        return Err(Error::InvalidInput("sweep grids must be non-empty".into()));
    }

    // Closed-form ratio table; cheap, always rewritten whole.
    let mut ratio = format!("{header}{RATIO_TABLE_HEADER}\n");
    for &k in k_values {
        for &p in p_values {
            let opt = max_r_infinity(k, p)?;
            ratio.push_str(&ratio_table_row(k, p, &opt));
            ratio.push('\n');
        }
    }
    write_file(&dir.join("ratio.csv"), &ratio)?;

    // Optimizer table, written one K batch at a time so an interrupted
    // run leaves a resumable prefix.
    let sweep_path = dir.join("sweep.csv");
    let existing = parse_existing_rows(&sweep_path);
    let mut out = String::new();
    out.push_str(&header);
    out.push_str(SWEEP_TABLE_HEADER);
    out.push('\n');
    fs::write(&sweep_path, &out).map_err(io_with_path(&sweep_path))?;

    let mut reused = 0usize;
    let mut computed = 0usize;
    let mut failed = 0usize;
    for &k in k_values {
        let missing: Vec<f64> = p_values
            .iter()
            .copied()
            .filter(|p| !existing.contains_key(&(k, p.to_bits())))
            .collect();
        let outcome = if missing.is_empty() {
            None
        } else {
            Some(sweep(&[k], &missing, &template, t_sample, 1.0)?)
        };
        let mut batch = String::new();
        for &p in p_values {
            if let Some(line) = existing.get(&(k, p.to_bits())) {
                batch.push_str(line);
                batch.push('\n');
                reused += 1;
                continue;
            }
            let outcome = outcome.as_ref().expect("missing cells were computed");
            if let Some(row) = outcome
                .rows
                .iter()
                .find(|r| r.k_spins == k && r.p.to_bits() == p.to_bits())
            {
                batch.push_str(&sweep_table_row(row));
                batch.push('\n');
                computed += 1;
            } else if let Some(fail) = outcome
                .failures
                .iter()
                .find(|f| f.k_spins == k && f.p.to_bits() == p.to_bits())
            {
                let _ = writeln!(batch, "# failed: K={k} p={p:.16e} {}", fail.reason);
                failed += 1;
            }
        }
        out.push_str(&batch);
        fs::write(&sweep_path, &out).map_err(io_with_path(&sweep_path))?;
    }
    println!("wrote {}", sweep_path.display());
    println!("sweep: {computed} computed, {reused} reused, {failed} failed");
    Ok(())
}
