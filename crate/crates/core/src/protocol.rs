//! Scripted measurement sequences: conditional π-pulses on the ancilla
//! interleaved with read/load and resonant-tunneling windows.

use std::collections::BTreeMap;

use crate::error::{QndError, Result};
use crate::liouvillian::{
    assemble_aniso, assemble_ee_in, assemble_en, BasisKind, Liouvillian, Matrix6, StateVector,
    DATA_UP,
};
use crate::reservoir::RateSet;
use crate::spin_system::{eigen_basis, Channel, SpinSystemSpec, SystemKind, TunnelingMatrix};

/// Data-spin condition of an ancilla π-pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrMode {
    Up,
    Down,
}

impl CrMode {
    pub fn flipped(self) -> Self {
        match self {
            CrMode::Up => CrMode::Down,
            CrMode::Down => CrMode::Up,
        }
    }

    /// Populations exchanged by the pulse.
    fn pair(self) -> (usize, usize) {
        match self {
            CrMode::Up => (2, 0),
            CrMode::Down => (3, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CrSchedule {
    FixedUp,
    #[default]
    FixedDown,
    /// Alternates every cycle, starting with `first`.
    Alternating { first: CrMode },
}

impl CrSchedule {
    /// Alternating schedule that starts with a CR(↓) pulse.
    pub const ALTERNATING: CrSchedule = CrSchedule::Alternating { first: CrMode::Down };

    pub fn mode_for(self, cycle: usize) -> CrMode {
        match self {
            CrSchedule::FixedUp => CrMode::Up,
            CrSchedule::FixedDown => CrMode::Down,
            CrSchedule::Alternating { first } if cycle % 2 == 0 => first,
            CrSchedule::Alternating { first } => first.flipped(),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            CrSchedule::FixedUp => CrSchedule::FixedDown,
            CrSchedule::FixedDown => CrSchedule::FixedUp,
            CrSchedule::Alternating { first } => CrSchedule::Alternating {
                first: first.flipped(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    /// Instantaneous conditional rotation; `mode: None` follows the schedule.
    Pulse { mode: Option<CrMode>, fidelity: f64 },
    /// Free evolution under the generator built from the labelled rate set.
    Window { duration: f64, rate_label: String },
}

impl Segment {
    pub fn pulse() -> Self {
        Segment::Pulse {
            mode: None,
            fidelity: 1.0,
        }
    }

    pub fn window(duration: f64, rate_label: impl Into<String>) -> Self {
        Segment::Window {
            duration,
            rate_label: rate_label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub segments: Vec<Segment>,
    pub cycles: usize,
    pub schedule: CrSchedule,
    pub initial: StateVector,
    /// Samples per window in the recorded trajectory, endpoints included.
    pub sample_points: usize,
    /// Number of leading cycles whose within-window samples are kept.
    pub trajectory_cycles: usize,
    /// Stride between recorded cycle-end states; the last cycle is always kept.
    pub record_every: usize,
}

impl ProtocolSpec {
    /// Pulse followed by a single read/load window per cycle.
    pub fn qnd(
        window: f64,
        rate_label: impl Into<String>,
        cycles: usize,
        schedule: CrSchedule,
        initial: StateVector,
    ) -> Self {
        ProtocolSpec {
            segments: vec![Segment::pulse(), Segment::window(window, rate_label)],
            cycles,
            schedule,
            initial,
            sample_points: 50,
            trajectory_cycles: 2,
            record_every: 1,
        }
    }

    /// Pulse, 1 ms read/load, 0.7 ms resonant tunneling, 0.3 ms load.
    pub fn resonant_tunneling(
        read_label: impl Into<String>,
        rt_label: impl Into<String>,
        cycles: usize,
        schedule: CrSchedule,
        initial: StateVector,
    ) -> Self {
        let read = read_label.into();
        ProtocolSpec {
            segments: vec![
                Segment::pulse(),
                Segment::window(1e-3, read.clone()),
                Segment::window(0.7e-3, rt_label),
                Segment::window(0.3e-3, read),
            ],
            cycles,
            schedule,
            initial,
            sample_points: 50,
            trajectory_cycles: 2,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(QndError::InvalidProtocol(msg));
        if self.cycles == 0 {
            return bad("cycles must be at least 1".into());
        }
        if self.sample_points < 2 {
            return bad("sample_points must be at least 2".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if self.segments.is_empty() {
            return bad("protocol has no segments".into());
        }
        for (i, seg) in self.segments.iter().enumerate() {
            match seg {
                Segment::Pulse { fidelity, .. } => {
                    if !(0.0..=1.0).contains(fidelity) {
                        return bad(format!("segment {i}: fidelity {fidelity} outside [0, 1]"));
                    }
                }
                Segment::Window { duration, .. } => {
                    if !(duration.is_finite() && *duration > 0.0) {
                        return bad(format!("segment {i}: duration must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Duration of one cycle in seconds.
    pub fn cycle_duration(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Window { duration, .. } => *duration,
                Segment::Pulse { .. } => 0.0,
            })
            .sum()
    }

    /// The same protocol under a global ↑ ↔ ↓ relabeling.
    pub fn mirrored(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| match s {
                Segment::Pulse { mode, fidelity } => Segment::Pulse {
                    mode: mode.map(CrMode::flipped),
                    fidelity: *fidelity,
                },
                w => w.clone(),
            })
            .collect();
        ProtocolSpec {
            segments,
            schedule: self.schedule.flipped(),
            initial: self.initial.mirrored(),
            ..self.clone()
        }
    }
}

/// Sampled evolution of a protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub basis: BasisKind,
    /// Within-window sample times of the leading cycles, seconds.
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Cycle number of each recorded cycle end; entry 0 is the initial state.
    pub cycles: Vec<usize>,
    pub cycle_times: Vec<f64>,
    pub cycle_end_states: Vec<StateVector>,
    pub p_up_series: Vec<f64>,
}

impl TrajectoryRecord {
    /// `(t, P↑)` pairs of the cycle-end series.
    pub fn p_up_points(&self) -> Vec<(f64, f64)> {
        self.cycle_times
            .iter()
            .copied()
            .zip(self.p_up_series.iter().copied())
            .collect()
    }
}

/// Probability that the data spin is ↑, summed over ancilla configurations.
pub fn p_up(rho: &StateVector) -> f64 {
    DATA_UP.iter().map(|&i| rho.get(i)).sum()
}

fn pulse_matrix(mode: CrMode, fidelity: f64) -> Matrix6 {
    let (a, b) = mode.pair();
    let mut m = Matrix6::identity();
    m[(a, a)] = 1.0 - fidelity;
    m[(b, b)] = 1.0 - fidelity;
    m[(a, b)] = fidelity;
    m[(b, a)] = fidelity;
    m
}

/// Mix the populations addressed by a conditional π-pulse with probability `fidelity`.
pub fn apply_pulse(rho: &StateVector, mode: CrMode, fidelity: f64) -> Result<StateVector> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(QndError::InvalidProtocol(format!(
            "fidelity {fidelity} outside [0, 1]"
        )));
    }
    let (a, b) = mode.pair();
    let mut v = *rho.vector();
    let (ra, rb) = (v[a], v[b]);
    v[a] = (1.0 - fidelity) * ra + fidelity * rb;
    v[b] = fidelity * ra + (1.0 - fidelity) * rb;
    StateVector::from_propagated(v)
}

fn propagator(l: &Liouvillian, t: f64) -> Result<Matrix6> {
    let p = (l.l * t).exp();
    if p.iter().any(|v| !v.is_finite()) {
        return Err(QndError::NumericalFailure(format!(
            "matrix exponential diverged for t = {t:e}"
        )));
    }
    Ok(p)
}

/// `exp(L τ_k) ρ` at `samples` uniformly spaced times `τ_k ∈ [0, t]`.
/// A single sample returns the state at `t`.
pub fn propagate(rho: &StateVector, l: &Liouvillian, t: f64, samples: usize) -> Result<Vec<StateVector>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(QndError::InvalidProtocol(format!("propagation time {t} must be non-negative")));
    }
    if samples == 0 {
        return Ok(Vec::new());
    }
    l.validate()?;
    if samples == 1 {
        return Ok(vec![StateVector::from_propagated(propagator(l, t)? * rho.vector())?]);
    }
    (0..samples)
        .map(|k| {
            let tau = t * k as f64 / (samples - 1) as f64;
            StateVector::from_propagated(propagator(l, tau)? * rho.vector())
        })
        .collect()
}

/// Which generator family a run uses, with its hybridization inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    /// Electron pair; `s = 0` is the Ising limit.
    Exchange { s: f64, c: f64, degenerate: bool },
    /// Nuclear spin with isotropic hyperfine coupling.
    Nuclear { s: f64, c: f64 },
    /// Nuclear spin with general selection-rule weights.
    Anisotropic { tunneling: TunnelingMatrix },
}

impl SystemModel {
    pub fn from_spec(spec: &SpinSystemSpec) -> Result<Self> {
        let basis = eigen_basis(spec)?;
        let sc = basis.hybridization();
        Ok(match (spec.kind, sc) {
            (SystemKind::IsingEe | SystemKind::HeisenbergEe, Some((s, c))) => SystemModel::Exchange {
                s,
                c,
                degenerate: spec.degenerate_pair,
            },
            (SystemKind::HyperfineEn, Some((s, c))) => SystemModel::Nuclear { s, c },
            _ => SystemModel::Anisotropic {
                tunneling: crate::spin_system::transition_amplitudes(&basis),
            },
        })
    }

    /// Exchange pair specified directly by `s²`.
    pub fn exchange_s2(s2: f64) -> Result<Self> {
        let (s, c) = split_s2(s2)?;
        Ok(SystemModel::Exchange {
            s,
            c,
            degenerate: false,
        })
    }

    /// Isotropic nuclear system specified directly by `s²`.
    pub fn nuclear_s2(s2: f64) -> Result<Self> {
        let (s, c) = split_s2(s2)?;
        Ok(SystemModel::Nuclear { s, c })
    }

    pub fn basis(&self) -> BasisKind {
        match self {
            SystemModel::Exchange { degenerate: true, .. } => BasisKind::ExchangeDegenerate,
            SystemModel::Exchange { .. } => BasisKind::Exchange,
            _ => BasisKind::Nuclear,
        }
    }

    pub fn generator(&self, rates: &RateSet) -> Result<Liouvillian> {
        match self {
            SystemModel::Exchange { s, c, .. } => assemble_ee_in(self.basis(), *s, *c, rates),
            SystemModel::Nuclear { s, c } => assemble_en(*s, *c, rates),
            SystemModel::Anisotropic { tunneling } => assemble_aniso(tunneling, rates),
        }
    }

    /// The model under a global ↑ ↔ ↓ relabeling.
    pub fn mirrored(&self) -> Self {
        match self {
            SystemModel::Anisotropic { tunneling } => {
                let mut m = [[0.0; 4]; 2];
                let mut channel = [[Channel::Forbidden; 4]; 2];
                for n in 0..2 {
                    for j in 0..4 {
                        m[1 - n][3 - j] = tunneling.m[n][j];
                        channel[1 - n][3 - j] = match tunneling.channel[n][j] {
                            Channel::Up => Channel::Down,
                            Channel::Down => Channel::Up,
                            Channel::Forbidden => Channel::Forbidden,
                        };
                    }
                }
                SystemModel::Anisotropic {
                    tunneling: TunnelingMatrix { m, channel },
                }
            }
            other => other.clone(),
        }
    }
}

fn split_s2(s2: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&s2) {
        return Err(QndError::InvalidSpec(format!("s2 = {s2} outside [0, 1]")));
    }
    Ok((s2.sqrt(), (1.0 - s2).sqrt()))
}

struct WindowPropagators {
    full: Matrix6,
    step: Matrix6,
}

fn generators(
    model: &SystemModel,
    rates: &BTreeMap<String, RateSet>,
    protocol: &ProtocolSpec,
) -> Result<BTreeMap<String, Liouvillian>> {
    let mut out = BTreeMap::new();
    for seg in &protocol.segments {
        if let Segment::Window { rate_label, .. } = seg {
            if out.contains_key(rate_label) {
                continue;
            }
            let r = rates
                .get(rate_label)
                .ok_or_else(|| QndError::UnknownRateLabel(rate_label.clone()))?;
            let l = model.generator(r)?;
            l.validate()?;
            out.insert(rate_label.clone(), l);
        }
    }
    Ok(out)
}

/// Transfer matrix of one full cycle with every scheduled pulse in `mode`.
pub fn cycle_map(
    model: &SystemModel,
    rates: &BTreeMap<String, RateSet>,
    protocol: &ProtocolSpec,
    mode: CrMode,
) -> Result<Matrix6> {
    protocol.validate()?;
    let gens = generators(model, rates, protocol)?;
    let mut map = Matrix6::identity();
    for seg in &protocol.segments {
        let step = match seg {
            Segment::Pulse { mode: m, fidelity } => pulse_matrix(m.unwrap_or(mode), *fidelity),
            Segment::Window { duration, rate_label } => propagator(&gens[rate_label], *duration)?,
        };
        map = step * map;
    }
    Ok(map)
}

/// Execute `protocol.cycles` repetitions of the segment list.
pub fn run_qnd(
    model: &SystemModel,
    rates: &BTreeMap<String, RateSet>,
    protocol: &ProtocolSpec,
) -> Result<TrajectoryRecord> {
    protocol.validate()?;
    let gens = generators(model, rates, protocol)?;

    let n = protocol.sample_points;
    let mut props: Vec<Option<WindowPropagators>> = Vec::with_capacity(protocol.segments.len());
    for seg in &protocol.segments {
        props.push(match seg {
            Segment::Window { duration, rate_label } => {
                let l = &gens[rate_label];
                Some(WindowPropagators {
                    full: propagator(l, *duration)?,
                    step: propagator(l, duration / (n - 1) as f64)?,
                })
            }
            Segment::Pulse { .. } => None,
        })
    }

    let mut rec = TrajectoryRecord {
        basis: model.basis(),
        times: Vec::new(),
        states: Vec::new(),
        cycles: vec![0],
        cycle_times: vec![0.0],
        cycle_end_states: vec![protocol.initial],
        p_up_series: vec![p_up(&protocol.initial)],
    };

    let cycle_duration = protocol.cycle_duration();
    let mut rho = protocol.initial;
    for cycle in 1..=protocol.cycles {
        let mode = protocol.schedule.mode_for(cycle - 1);
        let record_samples = cycle <= protocol.trajectory_cycles;
        let mut t = (cycle - 1) as f64 * cycle_duration;
        for (seg, prop) in protocol.segments.iter().zip(&props) {
            match (seg, prop) {
                (Segment::Pulse { mode: m, fidelity }, _) => {
                    rho = apply_pulse(&rho, m.unwrap_or(mode), *fidelity)?;
                }
                (Segment::Window { duration, .. }, Some(p)) => {
                    if record_samples {
                        let mut v = *rho.vector();
                        for k in 0..n - 1 {
                            rec.times.push(t + duration * k as f64 / (n - 1) as f64);
                            rec.states.push(StateVector::from_propagated(v)?);
                            v = p.step * v;
                        }
                    }
                    rho = StateVector::from_propagated(p.full * rho.vector())?;
                    t += duration;
                    if record_samples {
                        rec.times.push(t);
                        rec.states.push(rho);
                    }
                }
                (Segment::Window { .. }, None) => unreachable!(),
            }
        }
        if cycle % protocol.record_every == 0 || cycle == protocol.cycles {
            rec.cycles.push(cycle);
            rec.cycle_times.push(cycle as f64 * cycle_duration);
            rec.cycle_end_states.push(rho);
            rec.p_up_series.push(p_up(&rho));
        }
    }
    Ok(rec)
}

/// Run a protocol that contains at least one resonant-tunneling window, i.e. a
/// window whose low-energy loading and unloading rates coincide.
pub fn run_rt_protocol(
    model: &SystemModel,
    rates: &BTreeMap<String, RateSet>,
    protocol: &ProtocolSpec,
) -> Result<TrajectoryRecord> {
    let resonant = protocol.segments.iter().any(|s| match s {
        Segment::Window { rate_label, .. } => rates.get(rate_label).is_some_and(|r| {
            r.gin_down > 0.0 && (r.gin_down - r.gout_down).abs() <= 1e-9 * r.gin_down
        }),
        Segment::Pulse { .. } => false,
    });
    if !resonant {
        return Err(QndError::InvalidProtocol(
            "no window is tuned to resonant tunneling (gin_down == gout_down > 0)".into(),
        ));
    }
    run_qnd(model, rates, protocol)
}
