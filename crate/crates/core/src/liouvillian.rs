//! Generators of the six-state classical master equation `dρ/dt = Lρ`.
//!
//! Index layout (both families): `0..4` are the loaded two-particle states in
//! the order `{↑↑, ~↑↓, ~↓↑, ↓↓}` (ancilla first), `4` and `5` are the ionized
//! one-particle states with data spin `↑` and `↓`. Entry `l[(to, from)]` is the
//! rate from state `from` into state `to`.

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector};

use crate::error::{QndError, Result};
use crate::reservoir::{RateSet, TransitionRate};
use crate::spin_system::{Channel, TunnelingMatrix};

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Vector6 = SVector<f64, 6>;

/// Labeling family of the six basis states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// Electron data spin read by an electron ancilla.
    Exchange,
    /// Exchange pair with equal splittings, singlet/triplet antiparallel states.
    ExchangeDegenerate,
    /// Nuclear data spin read by its electron.
    Nuclear,
}

impl BasisKind {
    pub fn labels(self) -> [&'static str; 6] {
        match self {
            BasisKind::Exchange => ["↑A↑D", "~↑A↓D", "~↓A↑D", "↓A↓D", "↑D", "↓D"],
            BasisKind::ExchangeDegenerate => ["↑A↑D", "S", "T", "↓A↓D", "↑D", "↓D"],
            BasisKind::Nuclear => ["~↑⇑", "~↑⇓", "~↓⇑", "~↓⇓", "⇑", "⇓"],
        }
    }

    /// Column-name friendly labels.
    pub fn ascii_labels(self) -> [&'static str; 6] {
        match self {
            BasisKind::Exchange => [
                "upA_upD",
                "upA_downD",
                "downA_upD",
                "downA_downD",
                "upD",
                "downD",
            ],
            BasisKind::ExchangeDegenerate => ["upA_upD", "S", "T", "downA_downD", "upD", "downD"],
            BasisKind::Nuclear => ["up_nUp", "up_nDown", "down_nUp", "down_nDown", "nUp", "nDown"],
        }
    }
}

/// States whose data-spin component is ↑.
pub const DATA_UP: [usize; 3] = [0, 2, 4];

/// Index permutation under a global ↑ ↔ ↓ relabeling.
pub const MIRROR: [usize; 6] = [3, 2, 1, 0, 5, 4];

/// Classical master-equation generator over the six-state basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    pub basis: BasisKind,
    pub l: Matrix6,
}

impl Liouvillian {
    pub fn zeros(basis: BasisKind) -> Self {
        Liouvillian {
            basis,
            l: Matrix6::zeros(),
        }
    }

    /// Add a transfer `from → to` with the given rate.
    pub fn transfer(&mut self, from: usize, to: usize, rate: f64) {
        if rate != 0.0 {
            self.l[(to, from)] += rate;
            self.l[(from, from)] -= rate;
        }
    }

    /// Largest column sum relative to the largest entry of that column.
    pub fn max_column_sum_error(&self) -> f64 {
        (0..6)
            .map(|j| {
                let col = self.l.column(j);
                let scale = col.amax();
                if scale == 0.0 {
                    0.0
                } else {
                    col.sum().abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l.iter().any(|v| !v.is_finite()) {
            return Err(QndError::NumericalFailure("generator has non-finite entries".into()));
        }
        for j in 0..6 {
            for i in 0..6 {
                if i != j && self.l[(i, j)] < 0.0 {
                    return Err(QndError::NumericalFailure(format!(
                        "negative off-diagonal rate at ({i}, {j})"
                    )));
                }
            }
        }
        let err = self.max_column_sum_error();
        if err > 1e-12 {
            return Err(QndError::NumericalFailure(format!(
                "generator columns do not sum to zero (relative error {err:.3e})"
            )));
        }
        Ok(())
    }

    /// Generator expressed in the ↑ ↔ ↓ mirrored basis.
    pub fn mirrored(&self) -> Self {
        let mut l = Matrix6::zeros();
        for i in 0..6 {
            for j in 0..6 {
                l[(MIRROR[i], MIRROR[j])] = self.l[(i, j)];
            }
        }
        Liouvillian { basis: self.basis, l }
    }
}

/// Normalized population vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    rho: Vector6,
}

impl StateVector {
    pub fn new(rho: [f64; 6]) -> Result<Self> {
        Self::from_vector(Vector6::from(rho))
    }

    pub fn from_vector(rho: Vector6) -> Result<Self> {
        if rho.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(QndError::InvalidState(format!(
                "populations must be finite and non-negative: {:?}",
                rho.as_slice()
            )));
        }
        let total = rho.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(QndError::InvalidState(format!(
                "populations sum to {total}, expected 1"
            )));
        }
        Ok(StateVector { rho })
    }

    /// Accept round-off negatives down to `-1e-12`, clamping them to zero.
    pub(crate) fn from_propagated(mut rho: Vector6) -> Result<Self> {
        for v in rho.iter_mut() {
            if !v.is_finite() || *v < -1e-12 {
                return Err(QndError::NumericalFailure(format!(
                    "propagation produced an invalid population {v}"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total = rho.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(QndError::NumericalFailure(format!(
                "probability not conserved: total {total}"
            )));
        }
        Ok(StateVector { rho })
    }

    pub fn basis_state(index: usize) -> Self {
        let mut rho = Vector6::zeros();
        rho[index] = 1.0;
        StateVector { rho }
    }

    pub fn vector(&self) -> &Vector6 {
        &self.rho
    }

    pub fn as_slice(&self) -> &[f64] {
        self.rho.as_slice()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.rho[index]
    }

    pub fn mirrored(&self) -> Self {
        let mut rho = Vector6::zeros();
        for i in 0..6 {
            rho[MIRROR[i]] = self.rho[i];
        }
        StateVector { rho }
    }
}

fn check_sc(s: f64, c: f64) -> Result<()> {
    if !(s.is_finite() && c.is_finite()) || (s * s + c * c - 1.0).abs() > 1e-9 {
        return Err(QndError::InvalidSpec(format!(
            "hybridization amplitudes must satisfy s^2 + c^2 = 1 (s = {s}, c = {c})"
        )));
    }
    Ok(())
}

/// Exchange-coupled electron pair read through the ancilla.
pub fn assemble_ee(s: f64, c: f64, rates: &RateSet) -> Result<Liouvillian> {
    assemble_ee_in(BasisKind::Exchange, s, c, rates)
}

pub(crate) fn assemble_ee_in(basis: BasisKind, s: f64, c: f64, r: &RateSet) -> Result<Liouvillian> {
    check_sc(s, c)?;
    r.validate()?;
    if r.gamma_ff != 0.0 {
        return Err(QndError::InvalidRates(
            "flip-flop relaxation is defined for electron-nuclear systems only".into(),
        ));
    }
    let (s2, c2) = (s * s, c * c);
    let mut g = Liouvillian::zeros(basis);

    g.transfer(0, 4, r.gout_up);
    g.transfer(1, 5, r.gout_up * c2);
    g.transfer(2, 5, r.gout_up * s2);
    g.transfer(4, 1, r.gin_down * s2);
    g.transfer(4, 2, r.gin_down * c2);
    g.transfer(5, 3, r.gin_down);

    g.transfer(1, 4, r.gout_down * s2);
    g.transfer(2, 4, r.gout_down * c2);
    g.transfer(3, 5, r.gout_down);
    g.transfer(4, 0, r.gin_up);
    g.transfer(5, 1, r.gin_up * c2);
    g.transfer(5, 2, r.gin_up * s2);

    let t1 = r.gamma_t1;
    g.transfer(0, 1, t1);
    g.transfer(0, 2, t1);
    g.transfer(1, 3, t1);
    g.transfer(2, 3, t1);
    g.transfer(4, 5, t1);
    Ok(g)
}

/// Nuclear data spin hyperfine-coupled to the electron that tunnels.
pub fn assemble_en(s: f64, c: f64, r: &RateSet) -> Result<Liouvillian> {
    check_sc(s, c)?;
    r.validate()?;
    let (s2, c2) = (s * s, c * c);
    let mut g = Liouvillian::zeros(BasisKind::Nuclear);

    g.transfer(0, 4, r.gout_up);
    g.transfer(1, 4, r.gout_up * s2);
    g.transfer(1, 5, r.gout_up * c2);
    g.transfer(4, 2, r.gin_down * c2);
    g.transfer(5, 2, r.gin_down * s2);
    g.transfer(5, 3, r.gin_down);

    g.transfer(2, 4, r.gout_down * c2);
    g.transfer(2, 5, r.gout_down * s2);
    g.transfer(3, 5, r.gout_down);
    g.transfer(4, 0, r.gin_up);
    g.transfer(4, 1, r.gin_up * s2);
    g.transfer(5, 1, r.gin_up * c2);

    let t1 = r.gamma_t1;
    g.transfer(0, 1, t1 * s2);
    g.transfer(0, 2, t1 * c2);
    g.transfer(1, 2, r.gamma_ff);
    g.transfer(1, 3, t1 * c2);
    g.transfer(2, 3, t1 * s2);
    Ok(g)
}

/// Generic assembly from per-transition loading/unloading rates.
pub fn assemble_transitions(basis: BasisKind, transitions: &[TransitionRate]) -> Result<Liouvillian> {
    let mut g = Liouvillian::zeros(basis);
    for t in transitions {
        if t.one_p > 1 || t.two_p > 3 {
            return Err(QndError::InvalidRates(format!(
                "transition ({}, {}) outside the 1P/2P index range",
                t.one_p, t.two_p
            )));
        }
        if !(t.gin >= 0.0 && t.gout >= 0.0 && t.gin.is_finite() && t.gout.is_finite()) {
            return Err(QndError::InvalidRates(format!(
                "transition ({}, {}) has an invalid rate",
                t.one_p, t.two_p
            )));
        }
        g.transfer(4 + t.one_p, t.two_p, t.gin);
        g.transfer(t.two_p, 4 + t.one_p, t.gout);
    }
    Ok(g)
}

/// Electron–nuclear system with general selection-rule weights: every allowed
/// pair loads at `Γ^in_σ M` and unloads at `Γ^out_σ M`, `σ` its channel.
pub fn assemble_aniso(m: &TunnelingMatrix, rates: &RateSet) -> Result<Liouvillian> {
    rates.validate()?;
    if rates.gamma_t1 != 0.0 || rates.gamma_ff != 0.0 {
        return Err(QndError::InvalidRates(
            "relaxation channels are not defined for general selection-rule weights".into(),
        ));
    }
    let mut transitions = Vec::with_capacity(8);
    for n in 0..2 {
        for j in 0..4 {
            let ch = m.channel[n][j];
            if ch == Channel::Forbidden {
                continue;
            }
            let w = m.m[n][j];
            transitions.push(TransitionRate {
                one_p: n,
                two_p: j,
                channel: ch,
                gin: rates.gin(ch) * w,
                gout: rates.gout(ch) * w,
            });
        }
    }
    assemble_transitions(BasisKind::Nuclear, &transitions)
}

/// Resonant-tunneling generators: the four-state block over
/// `{~↓⇑, ↓⇓, ⇑, ⇓}` with `Γ^in_↓ = Γ^out_↓ = gamma_rt`, and the effective
/// two-state nuclear generator over `{⇑, ⇓}`.
pub fn assemble_rt(s: f64, gamma_rt: f64) -> Result<(Matrix4<f64>, Matrix2<f64>)> {
    if !(gamma_rt.is_finite() && gamma_rt >= 0.0) || !s.is_finite() || s.abs() > 1.0 {
        return Err(QndError::InvalidRates(format!(
            "invalid resonant-tunneling parameters (s = {s}, gamma_rt = {gamma_rt})"
        )));
    }
    let s2 = s * s;
    let c2 = 1.0 - s2;
    let g = gamma_rt;
    #[rustfmt::skip]
    let full = Matrix4::new(
        -g,      0.0, g * c2,  g * s2,
        0.0,     -g,  0.0,     g,
        g * c2,  0.0, -g * c2, 0.0,
        g * s2,  g,   0.0,     -g * (1.0 + s2),
    );
    let r = g * s2;
    let effective = Matrix2::new(-r, r, r, -r);
    Ok((full, effective))
}
