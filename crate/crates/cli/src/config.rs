//! Scenario files.
//!
//! A run is described by a TOML document with the sections `[system]`,
//! `[rates.<label>]`, `[protocol]` and the optional `[output]`; sweeps use
//! `[system]` and `[sweep]`. Frequencies and rates are in Hz (1/s), times in
//! seconds, fields in tesla. Any key can be overridden from the command line
//! with `--set section.key=value`; array entries are addressed by index, as in
//! `protocol.segment.1.duration=2e-3`.

use std::collections::BTreeMap;

use qnd_core::{
    preset, Axis, BasisKind, CrMode, CrSchedule, PresetParams, ProtocolSpec, RateSet, Segment,
    SpinSystemSpec, StateVector, SweepTarget, SystemKind, SystemModel,
};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    rates: Option<BTreeMap<String, RawRates>>,
    protocol: Option<RawProtocol>,
    output: Option<RawOutput>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kind: String,
    eps_a: Option<f64>,
    eps_d: Option<f64>,
    coupling: Option<f64>,
    b0: Option<f64>,
    gamma_e: Option<f64>,
    gamma_n: Option<f64>,
    s2: Option<f64>,
    dipolar_xz: Option<f64>,
    #[serde(default)]
    degenerate: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    preset: Option<String>,
    gamma0: Option<f64>,
    f: Option<f64>,
    gin_up: Option<f64>,
    gout_up: Option<f64>,
    gin_down: Option<f64>,
    gout_down: Option<f64>,
    gamma_t1: Option<f64>,
    gamma_ff: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    kind: Option<String>,
    cycles: usize,
    schedule: Option<String>,
    initial: Option<String>,
    fidelity: Option<f64>,
    window: Option<f64>,
    rates: Option<String>,
    read_rates: Option<String>,
    rt_rates: Option<String>,
    sample_points: Option<usize>,
    trajectory_cycles: Option<usize>,
    record_every: Option<usize>,
    segment: Option<Vec<RawSegment>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    #[serde(rename = "type")]
    kind: String,
    duration: Option<f64>,
    rates: Option<String>,
    fidelity: Option<f64>,
    mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    prefix: Option<String>,
    trajectory: Option<bool>,
    fit: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    b0_min: f64,
    b0_max: f64,
    b0_points: usize,
    #[serde(default)]
    b0_log: bool,
    dxz_min: f64,
    dxz_max: f64,
    dxz_points: usize,
    #[serde(default)]
    dxz_log: bool,
    target: Option<String>,
}

/// The physical system a run acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Full Hamiltonian parameters, absent when only `s2` was given.
    pub spec: Option<SpinSystemSpec>,
    pub model: SystemModel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolKind {
    Qnd,
    ResonantTunneling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub prefix: String,
    pub trajectory: bool,
    pub fit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub rates: BTreeMap<String, RateSet>,
    pub protocol: ProtocolSpec,
    pub kind: ProtocolKind,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: SpinSystemSpec,
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub b0: Axis,
    pub dxz: Axis,
    pub target: SweepTarget,
    pub prefix: String,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

/// Apply `key.path=value` overrides to a parsed document.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
        let value = parse_value(raw.trim());
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Config(format!("override `{item}` has an empty key")));
        }
        set_path(doc, &keys, value).map_err(|msg| config_err(path.trim(), msg))?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, keys: &[&str], value: toml::Value) -> Result<(), String> {
    let (head, rest) = keys.split_first().unwrap();
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    let entry = table
        .entry(head.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_in_value(entry, rest, value)
}

fn set_in_value(target: &mut toml::Value, keys: &[&str], value: toml::Value) -> Result<(), String> {
    match target {
        toml::Value::Table(t) => set_path(t, keys, value),
        toml::Value::Array(items) => {
            let idx: usize = keys[0]
                .parse()
                .map_err(|_| format!("`{}` is not an array index", keys[0]))?;
            let len = items.len();
            let slot = items
                .get_mut(idx)
                .ok_or_else(|| format!("index {idx} out of range for an array of length {len}"))?;
            if keys.len() == 1 {
                *slot = value;
                Ok(())
            } else {
                set_in_value(slot, &keys[1..], value)
            }
        }
        _ => Err(format!("`{}` is not a table", keys[0])),
    }
}

fn parse_raw(text: &str, overrides: &[String]) -> Result<RawConfig, CliError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    apply_overrides(&mut doc, overrides)?;
    let value = toml::Value::Table(doc);
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })
}

fn require_sections(needed: &[(&str, bool)]) -> Result<(), CliError> {
    let missing: Vec<&str> = needed.iter().filter(|(_, present)| !present).map(|(n, _)| *n).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!("missing required sections: {}", missing.join(", "))))
    }
}

/// Parse a simulation scenario.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let raw = parse_raw(text, overrides)?;
    require_sections(
        &[
            ("[system]", raw.system.is_some()),
            ("[rates.<label>]", raw.rates.as_ref().is_some_and(|r| !r.is_empty())),
            ("[protocol]", raw.protocol.is_some()),
        ],
    )?;
    if raw.sweep.is_some() {
        return Err(config_err("sweep", "sweep settings belong in a sweep configuration"));
    }
    let system = resolve_system(raw.system.as_ref().unwrap())?;

    let mut rates = BTreeMap::new();
    let mut windows = BTreeMap::new();
    for (label, r) in raw.rates.as_ref().unwrap() {
        let (set, window) = resolve_rates(label, r)?;
        rates.insert(label.clone(), set);
        windows.insert(label.clone(), window);
    }

    let (protocol, kind) = resolve_protocol(raw.protocol.as_ref().unwrap(), system.model.basis(), &rates, &windows)?;

    let out = raw.output.unwrap_or_default();
    let prefix = out.prefix.unwrap_or_else(|| "run".into());
    if prefix.is_empty() || prefix.contains(['/', '\\']) {
        return Err(config_err("output.prefix", "must be a non-empty file name"));
    }
    Ok(RunConfig {
        system,
        rates,
        protocol,
        kind,
        output: OutputConfig {
            prefix,
            trajectory: out.trajectory.unwrap_or(true),
            fit: out.fit.unwrap_or(false),
        },
    })
}

fn parse_kind(kind: &str) -> Result<SystemKind, CliError> {
    Ok(match kind {
        "ising_ee" => SystemKind::IsingEe,
        "heisenberg_ee" => SystemKind::HeisenbergEe,
        "hyperfine_en" => SystemKind::HyperfineEn,
        "anisotropic_en" => SystemKind::AnisotropicEn,
        other => {
            return Err(config_err(
                "system.kind",
                format!("unknown kind `{other}` (expected ising_ee, heisenberg_ee, hyperfine_en or anisotropic_en)"),
            ))
        }
    })
}

fn resolve_system(s: &RawSystem) -> Result<SystemConfig, CliError> {
    let kind = parse_kind(&s.kind)?;
    let explicit = s.eps_a.is_some() || s.eps_d.is_some();
    let derived = s.b0.is_some() || s.gamma_e.is_some() || s.gamma_n.is_some();
    let spec_err = |e: qnd_core::QndError| config_err("system", e);

    if let Some(s2) = s.s2 {
        if explicit || derived || s.coupling.is_some() || s.dipolar_xz.is_some() || s.degenerate {
            return Err(config_err("system.s2", "a hybridization `s2` excludes all Hamiltonian parameters"));
        }
        let model = match kind {
            SystemKind::HeisenbergEe => SystemModel::exchange_s2(s2),
            SystemKind::HyperfineEn => SystemModel::nuclear_s2(s2),
            _ => return Err(config_err("system.s2", "only heisenberg_ee and hyperfine_en accept `s2`")),
        }
        .map_err(|e| config_err("system.s2", e))?;
        return Ok(SystemConfig { spec: None, model });
    }

    if explicit && derived {
        return Err(config_err(
            "system",
            "explicit splittings (eps_a, eps_d) and field-derived splittings (b0, gamma_e, gamma_n) are mutually exclusive",
        ));
    }
    let coupling = s.coupling.ok_or_else(|| config_err("system.coupling", "missing field"))?;
    let mut spec = if derived {
        let get = |v: Option<f64>, name: &str| v.ok_or_else(|| config_err(&format!("system.{name}"), "missing field"));
        SpinSystemSpec::from_field(kind, get(s.b0, "b0")?, get(s.gamma_e, "gamma_e")?, get(s.gamma_n, "gamma_n")?, coupling)
            .map_err(spec_err)?
    } else {
        let eps_a = s.eps_a.ok_or_else(|| config_err("system.eps_a", "missing field"))?;
        let eps_d = s.eps_d.ok_or_else(|| config_err("system.eps_d", "missing field"))?;
        SpinSystemSpec::new(kind, eps_a, eps_d, coupling).map_err(spec_err)?
    };
    if let Some(d) = s.dipolar_xz {
        spec = spec.with_dipolar(qnd_core::dipolar_xz(d)).map_err(spec_err)?;
    }
    if s.degenerate {
        spec = spec.degenerate().map_err(spec_err)?;
    }
    let model = SystemModel::from_spec(&spec).map_err(spec_err)?;
    Ok(SystemConfig { spec: Some(spec), model })
}

fn resolve_rates(label: &str, r: &RawRates) -> Result<(RateSet, Option<f64>), CliError> {
    let path = format!("rates.{label}");
    let explicit = [r.gin_up, r.gout_up, r.gin_down, r.gout_down];
    let given = explicit.iter().filter(|v| v.is_some()).count();
    if given != 0 && given != 4 {
        return Err(config_err(&path, "give all of gin_up, gout_up, gin_down, gout_down or none"));
    }
    let values = (given == 4).then(|| RateSet::new(explicit[0].unwrap(), explicit[1].unwrap(), explicit[2].unwrap(), explicit[3].unwrap()));

    let (mut set, window) = match &r.preset {
        Some(name) => {
            let params = PresetParams {
                gamma0: r.gamma0.unwrap_or(1.0),
                f: r.f,
                values,
            };
            let p = preset(name, &params).map_err(|e| config_err(&format!("{path}.preset"), e))?;
            (p.rates, p.window)
        }
        None => {
            if r.gamma0.is_some() || r.f.is_some() {
                return Err(config_err(&path, "gamma0 and f only apply together with a preset"));
            }
            let v = values.ok_or_else(|| config_err(&path, "either a preset or the four tunnel rates are required"))?;
            (v, None)
        }
    };
    if let Some(t1) = r.gamma_t1 {
        set = set.with_t1(t1);
    }
    if let Some(ff) = r.gamma_ff {
        set = set.with_ff(ff);
    }
    set.validate().map_err(|e| config_err(&path, e))?;
    Ok((set, window))
}

fn parse_schedule(s: Option<&str>) -> Result<CrSchedule, CliError> {
    Ok(match s.unwrap_or("down") {
        "up" => CrSchedule::FixedUp,
        "down" => CrSchedule::FixedDown,
        "alternating" | "alternating_down" => CrSchedule::ALTERNATING,
        "alternating_up" => CrSchedule::Alternating { first: CrMode::Up },
        other => {
            return Err(config_err(
                "protocol.schedule",
                format!("unknown schedule `{other}` (expected up, down, alternating or alternating_up)"),
            ))
        }
    })
}

fn parse_initial(s: Option<&str>, basis: BasisKind) -> Result<StateVector, CliError> {
    let labels = basis.ascii_labels();
    match s {
        None => Ok(StateVector::basis_state(3)),
        Some(name) => labels
            .iter()
            .position(|l| *l == name)
            .map(StateVector::basis_state)
            .ok_or_else(|| config_err("protocol.initial", format!("unknown state `{name}` (expected one of {})", labels.join(", ")))),
    }
}

fn resolve_protocol(
    p: &RawProtocol,
    basis: BasisKind,
    rates: &BTreeMap<String, RateSet>,
    windows: &BTreeMap<String, Option<f64>>,
) -> Result<(ProtocolSpec, ProtocolKind), CliError> {
    let schedule = parse_schedule(p.schedule.as_deref())?;
    let initial = parse_initial(p.initial.as_deref(), basis)?;
    let known = |label: &str, path: &str| {
        if rates.contains_key(label) {
            Ok(())
        } else {
            Err(config_err(path, format!("rate label `{label}` is not defined under [rates]")))
        }
    };
    let kind = match p.kind.as_deref().unwrap_or("qnd") {
        "qnd" => ProtocolKind::Qnd,
        "resonant_tunneling" => ProtocolKind::ResonantTunneling,
        other => return Err(config_err("protocol.kind", format!("unknown kind `{other}` (expected qnd or resonant_tunneling)"))),
    };

    let mut spec = match (&kind, &p.segment) {
        (ProtocolKind::ResonantTunneling, segs) => {
            if segs.is_some() || p.window.is_some() || p.rates.is_some() {
                return Err(config_err("protocol", "resonant_tunneling uses read_rates and rt_rates only"));
            }
            let read = p.read_rates.as_deref().ok_or_else(|| config_err("protocol.read_rates", "missing field"))?;
            let rt = p.rt_rates.as_deref().ok_or_else(|| config_err("protocol.rt_rates", "missing field"))?;
            known(read, "protocol.read_rates")?;
            known(rt, "protocol.rt_rates")?;
            ProtocolSpec::resonant_tunneling(read, rt, p.cycles, schedule, initial)
        }
        (ProtocolKind::Qnd, Some(segs)) => {
            if p.window.is_some() || p.rates.is_some() {
                return Err(config_err("protocol", "`window`/`rates` and [[protocol.segment]] are mutually exclusive"));
            }
            let mut segments = Vec::with_capacity(segs.len());
            for (i, s) in segs.iter().enumerate() {
                let path = format!("protocol.segment[{i}]");
                segments.push(match s.kind.as_str() {
                    "pulse" => {
                        if s.duration.is_some() || s.rates.is_some() {
                            return Err(config_err(&path, "a pulse takes only `mode` and `fidelity`"));
                        }
                        let mode = match s.mode.as_deref() {
                            None => None,
                            Some("up") => Some(CrMode::Up),
                            Some("down") => Some(CrMode::Down),
                            Some(other) => return Err(config_err(&format!("{path}.mode"), format!("unknown mode `{other}`"))),
                        };
                        Segment::Pulse { mode, fidelity: s.fidelity.or(p.fidelity).unwrap_or(1.0) }
                    }
                    "window" => {
                        if s.mode.is_some() || s.fidelity.is_some() {
                            return Err(config_err(&path, "a window takes only `duration` and `rates`"));
                        }
                        let label = s.rates.as_deref().ok_or_else(|| config_err(&format!("{path}.rates"), "missing field"))?;
                        known(label, &format!("{path}.rates"))?;
                        let duration = s
                            .duration
                            .or_else(|| windows.get(label).copied().flatten())
                            .ok_or_else(|| config_err(&format!("{path}.duration"), "missing field"))?;
                        Segment::window(duration, label)
                    }
                    other => return Err(config_err(&format!("{path}.type"), format!("unknown segment type `{other}`"))),
                });
            }
            ProtocolSpec { segments, ..ProtocolSpec::qnd(1.0, "", p.cycles, schedule, initial) }
        }
        (ProtocolKind::Qnd, None) => {
            let label = p.rates.as_deref().ok_or_else(|| config_err("protocol.rates", "missing field"))?;
            known(label, "protocol.rates")?;
            let window = p
                .window
                .or_else(|| windows.get(label).copied().flatten())
                .ok_or_else(|| config_err("protocol.window", "missing field (the rate set has no default window)"))?;
            ProtocolSpec::qnd(window, label, p.cycles, schedule, initial)
        }
    };
    if p.segment.is_none() {
        if let Some(f) = p.fidelity {
            spec.segments[0] = Segment::Pulse { mode: None, fidelity: f };
        }
    }
    if let Some(v) = p.sample_points {
        spec.sample_points = v;
    }
    if let Some(v) = p.trajectory_cycles {
        spec.trajectory_cycles = v;
    }
    if let Some(v) = p.record_every {
        spec.record_every = v;
    }
    spec.validate().map_err(|e| config_err("protocol", e))?;
    Ok((spec, kind))
}

/// Parse a hybridization sweep.
pub fn parse_sweep_config(text: &str, overrides: &[String]) -> Result<SweepConfig, CliError> {
    let raw = parse_raw(text, overrides)?;
    require_sections(&[("[system]", raw.system.is_some()), ("[sweep]", raw.sweep.is_some())])?;
    if raw.rates.is_some() || raw.protocol.is_some() {
        return Err(CliError::Config("a sweep configuration takes no [rates] or [protocol]".into()));
    }
    let s = raw.system.as_ref().unwrap();
    let kind = parse_kind(&s.kind)?;
    if kind != SystemKind::AnisotropicEn {
        return Err(config_err("system.kind", "sweeps require anisotropic_en"));
    }
    if s.eps_a.is_some() || s.eps_d.is_some() || s.b0.is_some() || s.dipolar_xz.is_some() || s.s2.is_some() || s.degenerate {
        return Err(config_err("system", "a sweep takes only kind, coupling, gamma_e and gamma_n"));
    }
    let get = |v: Option<f64>, name: &str| v.ok_or_else(|| config_err(&format!("system.{name}"), "missing field"));
    let gamma_e = get(s.gamma_e, "gamma_e")?;
    let gamma_n = get(s.gamma_n, "gamma_n")?;
    let base = SpinSystemSpec::from_field(kind, 1.0, gamma_e, gamma_n, get(s.coupling, "coupling")?)
        .map_err(|e| config_err("system", e))?;

    let w = raw.sweep.as_ref().unwrap();
    let axis = |min, max, points, log: bool, path: &str| {
        let a = if log { Axis::log(min, max, points) } else { Axis::linear(min, max, points) };
        a.values().map_err(|e| config_err(path, e))?;
        Ok::<_, CliError>(a)
    };
    let target = match w.target.as_deref().unwrap_or("down") {
        "down" => SweepTarget::Down,
        "up" => SweepTarget::Up,
        other => return Err(config_err("sweep.target", format!("unknown target `{other}` (expected down or up)"))),
    };
    let prefix = raw.output.and_then(|o| o.prefix).unwrap_or_else(|| "sweep".into());
    Ok(SweepConfig {
        base,
        gamma_e,
        gamma_n,
        b0: axis(w.b0_min, w.b0_max, w.b0_points, w.b0_log, "sweep.b0")?,
        dxz: axis(w.dxz_min, w.dxz_max, w.dxz_points, w.dxz_log, "sweep.dxz")?,
        target,
        prefix,
    })
}
