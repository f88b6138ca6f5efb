use std::fs::File;
use std::path::Path;

use qnd_core::{FlipRateFit, HybridizationGrid, TrajectoryRecord};

use crate::error::CliError;

/// Scientific notation with 12 significant digits and a signed two-digit exponent.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}").to_lowercase();
    }
    let s = format!("{x:.11e}");
    let (mantissa, exp) = s.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Csv(format!("{}: {e}", path.display()))
}

/// Within-window samples: `time_s` followed by one column per basis state.
pub fn write_trajectory(path: &Path, rec: &TrajectoryRecord) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["time_s".to_string()];
    header.extend(rec.basis.ascii_labels().iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(&err)?;
    for (t, s) in rec.times.iter().zip(&rec.states) {
        let mut row = vec![sci(*t)];
        row.extend(s.as_slice().iter().map(|&x| sci(x)));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Cycle-end table: `cycle, time_s, p_up` and the full distribution.
pub fn write_cycles(path: &Path, rec: &TrajectoryRecord) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["cycle".to_string(), "time_s".into(), "p_up".into()];
    header.extend(rec.basis.ascii_labels().iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(&err)?;
    for i in 0..rec.cycles.len() {
        let mut row = vec![rec.cycles[i].to_string(), sci(rec.cycle_times[i]), sci(rec.p_up_series[i])];
        row.extend(rec.cycle_end_states[i].as_slice().iter().map(|&x| sci(x)));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_grid(path: &Path, grid: &HybridizationGrid) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(["b0_t", "dxz_hz", "m"]).map_err(&err)?;
    for (b, d, m) in grid.long_format() {
        w.write_record([sci(b), sci(d), sci(m)]).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Read `(time_s, p_up)` pairs from a cycle table.
pub fn read_cycles(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let err = csv_err(path);
    let headers = r.headers().map_err(&err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Csv(format!("{}: no `{name}` column", path.display())))
    };
    let (ti, pi) = (col("time_s")?, col("p_up")?);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(&err)?;
        let num = |i: usize| {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Csv(format!("{}: row {}: unreadable number", path.display(), line + 2)))
        };
        out.push((num(ti)?, num(pi)?));
    }
    Ok(out)
}

/// Machine-readable `key=value` report of a flip-rate fit.
pub fn fit_report(fit: &FlipRateFit) -> String {
    let warnings: Vec<String> = fit.warnings.iter().map(|w| format!("{w:?}")).collect();
    format!(
        "gamma_up={}\ngamma_down={}\nequilibrium_p_up={}\nresidual_rms={}\niterations={}\nwarnings={}\n",
        sci(fit.gamma_up),
        sci(fit.gamma_down),
        sci(fit.equilibrium_p_up),
        sci(fit.residual_rms),
        fit.iterations,
        if warnings.is_empty() { "none".into() } else { warnings.join(",") }
    )
}
