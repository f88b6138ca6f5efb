//! Two-particle spin Hamiltonians of a data spin coupled to an ancilla spin.
//!
//! All matrices use the product basis `{↑↑, ↑↓, ↓↑, ↓↓}` with the ancilla
//! (electron) spin first and the data (nuclear) spin second. Index of a product
//! state is `2 * ancilla + data` with `0 = ↑` and `1 = ↓`. Energies are in Hz.

use nalgebra::Matrix4;

use crate::error::{QndError, Result};

/// Which coupling is present between ancilla and data spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    /// Two electrons, `J S_Az S_Dz`.
    IsingEe,
    /// Two electrons, `J S_A·S_D`.
    HeisenbergEe,
    /// Electron ancilla and nuclear data spin, `A S·I`.
    HyperfineEn,
    /// Electron ancilla and nuclear data spin, `A S·I + Σ D_ij S_i I_j`.
    AnisotropicEn,
}

impl SystemKind {
    pub fn is_nuclear(self) -> bool {
        matches!(self, SystemKind::HyperfineEn | SystemKind::AnisotropicEn)
    }

    /// Couplings of the form `c S·I` (or Ising) that leave the parallel
    /// states as exact eigenstates.
    pub fn is_isotropic(self) -> bool {
        !matches!(self, SystemKind::AnisotropicEn)
    }
}

/// Cartesian axis index for the dipolar tensor.
pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;

/// Physical parameters of the data–ancilla pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystemSpec {
    pub kind: SystemKind,
    /// Ancilla splitting (electron splitting for nuclear kinds), Hz.
    pub eps_a: f64,
    /// Data splitting (nuclear splitting for nuclear kinds, may be negative), Hz.
    pub eps_d: f64,
    /// `J_I`, `J_H` or `A_I` depending on `kind`, Hz.
    pub coupling: f64,
    /// `D_ij`, first index acts on the electron, second on the nucleus. Hz.
    pub dipolar: [[f64; 3]; 3],
    /// Equal-splitting exchange pair labelled by singlet/triplet states.
    pub degenerate_pair: bool,
}

impl SpinSystemSpec {
    pub fn new(kind: SystemKind, eps_a: f64, eps_d: f64, coupling: f64) -> Result<Self> {
        let spec = SpinSystemSpec {
            kind,
            eps_a,
            eps_d,
            coupling,
            dipolar: [[0.0; 3]; 3],
            degenerate_pair: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Nuclear kinds with splittings derived from a static field:
    /// `ε_e = γ_e B₀`, `ε_n = γ_n B₀`.
    pub fn from_field(
        kind: SystemKind,
        b0: f64,
        gamma_e: f64,
        gamma_n: f64,
        coupling: f64,
    ) -> Result<Self> {
        if !kind.is_nuclear() {
            return Err(QndError::InvalidSpec(
                "field-derived splittings apply to electron-nuclear systems only".into(),
            ));
        }
        Self::new(kind, gamma_e * b0, gamma_n * b0, coupling)
    }

    pub fn with_dipolar(mut self, dipolar: [[f64; 3]; 3]) -> Result<Self> {
        self.dipolar = dipolar;
        self.validate()?;
        Ok(self)
    }

    /// Exchange pair with `ε_A = ε_D`, whose antiparallel eigenstates are the
    /// singlet and the `m = 0` triplet.
    pub fn degenerate(mut self) -> Result<Self> {
        self.degenerate_pair = true;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.eps_a, self.eps_d, self.coupling]
            .iter()
            .chain(self.dipolar.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(QndError::InvalidSpec("parameters must be finite".into()));
        }
        let has_dipolar = self.dipolar.iter().flatten().any(|&v| v != 0.0);
        if has_dipolar && self.kind != SystemKind::AnisotropicEn {
            return Err(QndError::InvalidSpec(format!(
                "dipolar tensor must be zero for {:?}",
                self.kind
            )));
        }
        // S_y I_x, S_x I_y, S_y I_z and S_z I_y have imaginary matrix elements.
        for (i, j) in [(X, Y), (Y, X), (Y, Z), (Z, Y)] {
            if self.dipolar[i][j] != 0.0 {
                return Err(QndError::InvalidSpec(format!(
                    "dipolar component D[{i}][{j}] makes the Hamiltonian complex; only xx, yy, zz, xz, zx are supported"
                )));
            }
        }
        if self.degenerate_pair {
            if self.kind != SystemKind::HeisenbergEe {
                return Err(QndError::InvalidSpec(
                    "degenerate-pair mode applies to Heisenberg exchange only".into(),
                ));
            }
            if self.eps_a != self.eps_d {
                return Err(QndError::InvalidSpec(
                    "degenerate-pair mode requires eps_a == eps_d".into(),
                ));
            }
        } else if self.kind == SystemKind::HeisenbergEe && self.eps_a == self.eps_d {
            return Err(QndError::InvalidSpec(
                "Heisenberg exchange with eps_a == eps_d needs degenerate-pair mode".into(),
            ));
        }
        Ok(())
    }

    /// `ε_A − ε_D`.
    pub fn delta_eps(&self) -> f64 {
        self.eps_a - self.eps_d
    }
}

/// Symmetric dipolar tensor with only the `xz`/`zx` pair set.
pub fn dipolar_xz(d: f64) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    t[X][Z] = d;
    t[Z][X] = d;
    t
}

fn spin_products() -> [[Matrix4<f64>; 3]; 3] {
    // (σ_i ⊗ σ_j) / 4 for i, j in {x, z}; y⊗y is real as well.
    let mut p = [[Matrix4::zeros(); 3]; 3];
    p[X][X] = Matrix4::new(
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0,
    ) / 4.0;
    p[Y][Y] = Matrix4::new(
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0,
    ) / 4.0;
    p[Z][Z] = Matrix4::from_diagonal(&[1.0, -1.0, -1.0, 1.0].into()) / 4.0;
    p[X][Z] = Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, 0.0,
    ) / 4.0;
    p[Z][X] = Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, -1.0, 0.0,
    ) / 4.0;
    p
}

/// Two-particle spin Hamiltonian in the product basis, Hz.
pub fn build_hamiltonian(spec: &SpinSystemSpec) -> Result<Matrix4<f64>> {
    spec.validate()?;
    let sz_a = Matrix4::from_diagonal(&[0.5, 0.5, -0.5, -0.5].into());
    let sz_d = Matrix4::from_diagonal(&[0.5, -0.5, 0.5, -0.5].into());
    let p = spin_products();

    let mut h = sz_a * spec.eps_a + sz_d * spec.eps_d;
    match spec.kind {
        SystemKind::IsingEe => h += p[Z][Z] * spec.coupling,
        SystemKind::HeisenbergEe | SystemKind::HyperfineEn | SystemKind::AnisotropicEn => {
            h += (p[X][X] + p[Y][Y] + p[Z][Z]) * spec.coupling;
        }
    }
    if spec.kind == SystemKind::AnisotropicEn {
        for (i, row) in spec.dipolar.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if d != 0.0 {
                    h += p[i][j] * d;
                }
            }
        }
    }
    Ok(h)
}

/// Cyclic Jacobi diagonalization. Exact zeros in the off-diagonal are never
/// rotated, so block structure survives bit-for-bit. Returns eigenvalues and
/// eigenvectors as columns.
pub(crate) fn jacobi_eigen(h: &Matrix4<f64>) -> (Vec<f64>, Matrix4<f64>) {
    let mut a = *h;
    let mut v = Matrix4::<f64>::identity();
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..4 {
            for q in (p + 1)..4 {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let g = 100.0 * apq.abs();
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau.abs() > 1e150 {
                    0.5 / tau
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..4 {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..4).map(|i| a[(i, i)]).collect(), v)
}

/// Eigenstates of the loaded (two-particle) and ionized (one-particle) system.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub kind: SystemKind,
    pub degenerate_pair: bool,
    /// Relative two-particle energies in slot order `{↑↑, ~↑↓, ~↓↑, ↓↓}`, Hz.
    pub energies_2p: [f64; 4],
    /// Row `i` holds the product-basis coefficients of eigenstate slot `i`.
    pub amplitudes: Matrix4<f64>,
    /// One-particle energies `{↑, ↓}` of the data spin, Hz.
    pub energies_1p: [f64; 2],
    /// Hybridization angle of the antiparallel doublet (isotropic kinds).
    pub theta: Option<f64>,
}

const EE_LABELS_2P: [&str; 4] = ["↑A↑D", "~↑A↓D", "~↓A↑D", "↓A↓D"];
const EE_DEGENERATE_LABELS_2P: [&str; 4] = ["↑A↑D", "S", "T", "↓A↓D"];
const EN_LABELS_2P: [&str; 4] = ["~↑⇑", "~↑⇓", "~↓⇑", "~↓⇓"];
const EE_LABELS_1P: [&str; 2] = ["↑D", "↓D"];
const EN_LABELS_1P: [&str; 2] = ["⇑", "⇓"];

impl EigenBasis {
    pub fn labels_2p(&self) -> [&'static str; 4] {
        if self.kind.is_nuclear() {
            EN_LABELS_2P
        } else if self.degenerate_pair {
            EE_DEGENERATE_LABELS_2P
        } else {
            EE_LABELS_2P
        }
    }

    pub fn labels_1p(&self) -> [&'static str; 2] {
        if self.kind.is_nuclear() {
            EN_LABELS_1P
        } else {
            EE_LABELS_1P
        }
    }

    /// `(s, c) = (sin θ, cos θ)`, available for isotropic kinds.
    pub fn hybridization(&self) -> Option<(f64, f64)> {
        self.theta.map(|t| (t.sin(), t.cos()))
    }
}

/// Ratio of the two largest amplitude magnitudes above which a label is ambiguous.
const AMBIGUITY: f64 = 1.0 - 1e-9;

/// Diagonalize `h` and label each eigenvector by its dominant product component.
pub fn diagonalize(h: &Matrix4<f64>, spec: &SpinSystemSpec) -> Result<EigenBasis> {
    if (h - h.transpose()).abs().max() > 1e-12 * h.abs().max().max(f64::MIN_POSITIVE) {
        return Err(QndError::InvalidSpec("Hamiltonian is not symmetric".into()));
    }
    let (values, vectors) = jacobi_eigen(h);

    let mut slot_of = [usize::MAX; 4];
    let mut amplitudes = Matrix4::zeros();
    let mut energies_2p = [0.0; 4];
    for k in 0..4 {
        let col = vectors.column(k);
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()));
        let (first, second) = (col[order[0]].abs(), col[order[1]].abs());
        let ratio = second / first;

        let (slot, sign_ref) = if ratio > AMBIGUITY {
            let pair = {
                let mut p = [order[0], order[1]];
                p.sort();
                p
            };
            if !(spec.degenerate_pair && pair == [1, 2]) {
                return Err(QndError::DegenerateLabeling { index: k, ratio });
            }
            // Singlet has opposite signs on |↑↓⟩ and |↓↑⟩.
            if col[1] * col[2] < 0.0 {
                (1, 1)
            } else {
                (2, 2)
            }
        } else {
            (order[0], order[0])
        };
        if slot_of[slot] != usize::MAX {
            return Err(QndError::DegenerateLabeling { index: k, ratio });
        }
        slot_of[slot] = k;
        let sign = if col[sign_ref] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..4 {
            amplitudes[(slot, j)] = sign * col[j];
        }
        energies_2p[slot] = values[k];
    }

    let theta = match spec.kind {
        SystemKind::IsingEe => Some(0.0),
        SystemKind::HeisenbergEe if spec.degenerate_pair => Some(std::f64::consts::FRAC_PI_4),
        SystemKind::HeisenbergEe | SystemKind::HyperfineEn => {
            Some(0.5 * (spec.coupling / spec.delta_eps()).atan())
        }
        SystemKind::AnisotropicEn => None,
    };

    Ok(EigenBasis {
        kind: spec.kind,
        degenerate_pair: spec.degenerate_pair,
        energies_2p,
        amplitudes,
        energies_1p: [0.5 * spec.eps_d, -0.5 * spec.eps_d],
        theta,
    })
}

/// Build and diagonalize in one step.
pub fn eigen_basis(spec: &SpinSystemSpec) -> Result<EigenBasis> {
    diagonalize(&build_hamiltonian(spec)?, spec)
}

/// Energetic group of a tunneling transition: whether it carries the high
/// (`μ_↑`) or low (`μ_↓`) chemical potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Up,
    Down,
    Forbidden,
}

/// Selection-rule weights `M[1P][2P] = |⟨1P| a_↑ + a_↓ |2P⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TunnelingMatrix {
    pub m: [[f64; 4]; 2],
    pub channel: [[Channel; 4]; 2],
}

impl TunnelingMatrix {
    /// Ising pattern: weight one on data-spin preserving pairs.
    pub fn ising() -> Self {
        let mut m = [[0.0; 4]; 2];
        let mut channel = [[Channel::Forbidden; 4]; 2];
        // 1P ↑: ↑↑ via ↑, ↓↑ via ↓; 1P ↓: ↑↓ via ↑, ↓↓ via ↓.
        for (n, j, ch) in [
            (0, 0, Channel::Up),
            (0, 2, Channel::Down),
            (1, 1, Channel::Up),
            (1, 3, Channel::Down),
        ] {
            m[n][j] = 1.0;
            channel[n][j] = ch;
        }
        TunnelingMatrix { m, channel }
    }
}

/// Amplitude `⟨n| a_σ |2P⟩`, i.e. the coefficient of `|σ n⟩` in the eigenstate.
pub fn partial_amplitude(basis: &EigenBasis, sigma: usize, one_p: usize, two_p: usize) -> f64 {
    basis.amplitudes[(two_p, 2 * sigma + one_p)]
}

pub fn transition_amplitudes(basis: &EigenBasis) -> TunnelingMatrix {
    let mut m = [[0.0; 4]; 2];
    let mut channel = [[Channel::Forbidden; 4]; 2];
    for n in 0..2 {
        for j in 0..4 {
            // Coherent sum over the tunneling spin.
            let amp = partial_amplitude(basis, 0, n, j) + partial_amplitude(basis, 1, n, j);
            let w = amp * amp;
            m[n][j] = w;
            channel[n][j] = if w == 0.0 {
                Channel::Forbidden
            } else if basis.energies_2p[j] - basis.energies_1p[n] >= 0.0 {
                Channel::Up
            } else {
                Channel::Down
            };
        }
    }
    TunnelingMatrix { m, channel }
}

/// One allowed 1P ↔ 2P transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub one_p: usize,
    pub two_p: usize,
    pub mu: f64,
    pub weight: f64,
    pub channel: Channel,
}

/// Chemical potentials of all allowed transitions, grouped by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemicalPotentials {
    pub transitions: Vec<Transition>,
}

impl ChemicalPotentials {
    pub fn group(&self, channel: Channel) -> impl Iterator<Item = &Transition> + '_ {
        self.transitions.iter().filter(move |t| t.channel == channel)
    }

    /// Mean chemical potential of a group, `None` if the group is empty.
    pub fn group_mean(&self, channel: Channel) -> Option<f64> {
        let (sum, n) = self
            .group(channel)
            .fold((0.0, 0usize), |(s, n), t| (s + t.mu, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// `max − min` of the chemical potentials in a group.
    pub fn group_width(&self, channel: Channel) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in self.group(channel) {
            lo = lo.min(t.mu);
            hi = hi.max(t.mu);
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn mu(&self, one_p: usize, two_p: usize) -> Option<f64> {
        self.transitions
            .iter()
            .find(|t| t.one_p == one_p && t.two_p == two_p)
            .map(|t| t.mu)
    }
}

/// `μ = offset + E(2P) − E(1P)` for every allowed transition, where
/// `offset = E_C + E_A` is the distance between the manifold centres.
pub fn chemical_potentials(basis: &EigenBasis, offset: f64) -> ChemicalPotentials {
    let tm = transition_amplitudes(basis);
    let mut transitions = Vec::new();
    for n in 0..2 {
        for j in 0..4 {
            if tm.channel[n][j] == Channel::Forbidden {
                continue;
            }
            transitions.push(Transition {
                one_p: n,
                two_p: j,
                mu: offset + basis.energies_2p[j] - basis.energies_1p[n],
                weight: tm.m[n][j],
                channel: tm.channel[n][j],
            });
        }
    }
    ChemicalPotentials { transitions }
}
