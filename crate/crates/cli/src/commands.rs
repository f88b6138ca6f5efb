use std::fmt::Write as _;
use std::path::Path;

use qnd_core::{fit_flip_rates, run_qnd, run_rt_protocol, sweep_hybridization, FlipRateFit, ProtocolSpec, StateVector, TrajectoryRecord, PRESET_NAMES};

use crate::config::{ProtocolKind, RunConfig, SweepConfig};
use crate::error::CliError;
use crate::output::{fit_report, sci, write_cycles, write_grid, write_trajectory};

/// Initial states used for the paired runs of a fit: data ↑ and data ↓ with the ancilla loaded.
pub const FIT_INITIAL_STATES: [usize; 2] = [2, 3];

fn run(cfg: &RunConfig, protocol: &ProtocolSpec) -> Result<TrajectoryRecord, CliError> {
    let rec = match cfg.kind {
        ProtocolKind::Qnd => run_qnd(&cfg.system.model, &cfg.rates, protocol),
        ProtocolKind::ResonantTunneling => run_rt_protocol(&cfg.system.model, &cfg.rates, protocol),
    }?;
    Ok(rec)
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

/// Run the configured protocol from data ↑ and from data ↓.
pub fn run_pair(cfg: &RunConfig) -> Result<[TrajectoryRecord; 2], CliError> {
    let one = |idx: usize| {
        let mut p = cfg.protocol.clone();
        p.initial = StateVector::basis_state(idx);
        p.trajectory_cycles = 0;
        run(cfg, &p)
    };
    Ok([one(FIT_INITIAL_STATES[0])?, one(FIT_INITIAL_STATES[1])?])
}

pub fn fit_pair(pair: &[TrajectoryRecord; 2]) -> Result<FlipRateFit, CliError> {
    Ok(fit_flip_rates(&pair[0].p_up_points(), &pair[1].p_up_points())?)
}

/// Returns the `key=value` summary printed on stdout.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    prepare(out)?;
    let prefix = &cfg.output.prefix;
    let rec = run(cfg, &cfg.protocol)?;
    let mut summary = String::new();
    if cfg.output.trajectory {
        let path = out.join(format!("{prefix}_trajectory.csv"));
        write_trajectory(&path, &rec)?;
        writeln!(summary, "trajectory={}", path.display()).unwrap();
    }
    let path = out.join(format!("{prefix}_cycles.csv"));
    write_cycles(&path, &rec)?;
    writeln!(summary, "cycles={}", path.display()).unwrap();
    writeln!(summary, "cycle_count={}", cfg.protocol.cycles).unwrap();
    writeln!(summary, "final_p_up={}", sci(*rec.p_up_series.last().unwrap())).unwrap();

    if cfg.output.fit {
        let pair = run_pair(cfg)?;
        for (rec, tag) in pair.iter().zip(["up", "down"]) {
            let path = out.join(format!("{prefix}_cycles_{tag}.csv"));
            write_cycles(&path, rec)?;
            writeln!(summary, "cycles_{tag}={}", path.display()).unwrap();
        }
        summary.push_str(&fit_report(&fit_pair(&pair)?));
    }
    Ok(summary)
}

pub fn fit_from_config(cfg: &RunConfig) -> Result<String, CliError> {
    Ok(fit_report(&fit_pair(&run_pair(cfg)?)?))
}

pub fn fit_from_series(up: &[(f64, f64)], down: &[(f64, f64)]) -> Result<String, CliError> {
    Ok(fit_report(&fit_flip_rates(up, down)?))
}

pub fn sweep(cfg: &SweepConfig, out: &Path, jobs: usize) -> Result<String, CliError> {
    prepare(out)?;
    let grid = sweep_hybridization(&cfg.base, cfg.gamma_e, cfg.gamma_n, &cfg.b0, &cfg.dxz, cfg.target, jobs)?;
    let path = out.join(format!("{}.csv", cfg.prefix));
    write_grid(&path, &grid)?;
    let (b, d, m) = grid
        .long_format()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    Ok(format!(
        "grid={}\npoints={}\nmax_m={}\nmax_b0_t={}\nmax_dxz_hz={}\n",
        path.display(),
        grid.b0.len() * grid.dxz.len(),
        sci(m),
        sci(b),
        sci(d)
    ))
}

pub fn presets() -> String {
    let width = PRESET_NAMES.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    PRESET_NAMES
        .iter()
        .map(|(name, desc)| format!("{name:width$}  {desc}\n"))
        .collect()
}
