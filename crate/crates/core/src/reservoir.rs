//! Lead occupation, golden-rule tunnel rates and named rate presets.

use crate::error::{QndError, Result};
use crate::spin_system::{Channel, ChemicalPotentials, TunnelingMatrix};

/// Boltzmann constant in Hz/K.
pub const K_B_HZ_PER_K: f64 = 2.083661912e10;

/// Spin-resolved tunnel rates plus optional relaxation channels, all in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateSet {
    pub gin_up: f64,
    pub gout_up: f64,
    pub gin_down: f64,
    pub gout_down: f64,
    pub gamma_t1: f64,
    pub gamma_ff: f64,
}

impl RateSet {
    pub fn new(gin_up: f64, gout_up: f64, gin_down: f64, gout_down: f64) -> Self {
        RateSet {
            gin_up,
            gout_up,
            gin_down,
            gout_down,
            gamma_t1: 0.0,
            gamma_ff: 0.0,
        }
    }

    pub fn with_t1(mut self, gamma_t1: f64) -> Self {
        self.gamma_t1 = gamma_t1;
        self
    }

    pub fn with_ff(mut self, gamma_ff: f64) -> Self {
        self.gamma_ff = gamma_ff;
        self
    }

    fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("gin_up", self.gin_up),
            ("gout_up", self.gout_up),
            ("gin_down", self.gin_down),
            ("gout_down", self.gout_down),
            ("gamma_t1", self.gamma_t1),
            ("gamma_ff", self.gamma_ff),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !v.is_finite() || v < 0.0 {
                return Err(QndError::InvalidRates(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Every rate multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        RateSet {
            gin_up: self.gin_up * alpha,
            gout_up: self.gout_up * alpha,
            gin_down: self.gin_down * alpha,
            gout_down: self.gout_down * alpha,
            gamma_t1: self.gamma_t1 * alpha,
            gamma_ff: self.gamma_ff * alpha,
        }
    }

    /// Exchange the roles of the ↑ and ↓ chemical-potential groups.
    pub fn mirrored(&self) -> Self {
        RateSet {
            gin_up: self.gin_down,
            gout_up: self.gout_down,
            gin_down: self.gin_up,
            gout_down: self.gout_up,
            ..*self
        }
    }

    pub fn gin(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Up => self.gin_up,
            Channel::Down => self.gin_down,
            Channel::Forbidden => 0.0,
        }
    }

    pub fn gout(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Up => self.gout_up,
            Channel::Down => self.gout_down,
            Channel::Forbidden => 0.0,
        }
    }
}

/// Electron reservoir coupled to the ancilla site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadSpec {
    /// Bare tunnel rate, 1/s.
    pub gamma0: f64,
    /// Lead chemical potential, Hz.
    pub mu_lead: f64,
    /// Kelvin.
    pub temperature: f64,
}

impl LeadSpec {
    pub fn new(gamma0: f64, mu_lead: f64, temperature: f64) -> Result<Self> {
        let lead = LeadSpec {
            gamma0,
            mu_lead,
            temperature,
        };
        lead.validate()?;
        Ok(lead)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0.is_finite() && self.gamma0 >= 0.0) {
            return Err(QndError::InvalidRates(format!(
                "gamma0 must be finite and non-negative, got {}",
                self.gamma0
            )));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(QndError::InvalidRates(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        if !self.mu_lead.is_finite() {
            return Err(QndError::InvalidRates("mu_lead must be finite".into()));
        }
        Ok(())
    }
}

/// Fermi–Dirac occupation of the lead at `energy` (Hz).
pub fn fermi_occupation(energy: f64, lead: &LeadSpec) -> f64 {
    let de = energy - lead.mu_lead;
    if lead.temperature == 0.0 {
        return if de < 0.0 {
            1.0
        } else if de > 0.0 {
            0.0
        } else {
            0.5
        };
    }
    let x = de / (K_B_HZ_PER_K * lead.temperature);
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Where the Fermi factor of a transition is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FermiEvaluation {
    /// Once per chemical-potential group, at the group's mean μ.
    #[default]
    PerChannel,
    /// At each transition's own μ.
    PerTransition,
}

/// Loading and unloading rate of one 1P ↔ 2P transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRate {
    pub one_p: usize,
    pub two_p: usize,
    pub channel: Channel,
    /// 1P → 2P.
    pub gin: f64,
    /// 2P → 1P.
    pub gout: f64,
}

/// `Γ^in = Γ₀ M f(μ)`, `Γ^out = Γ₀ M (1 − f(μ))` for every allowed transition.
pub fn golden_rule_rates(
    m: &TunnelingMatrix,
    mus: &ChemicalPotentials,
    lead: &LeadSpec,
    mode: FermiEvaluation,
) -> Result<Vec<TransitionRate>> {
    lead.validate()?;
    let group_f = |ch: Channel| mus.group_mean(ch).map(|mu| fermi_occupation(mu, lead));
    let f_up = group_f(Channel::Up);
    let f_down = group_f(Channel::Down);

    let mut out = Vec::with_capacity(mus.transitions.len());
    for t in &mus.transitions {
        let w = m.m[t.one_p][t.two_p];
        let f = match mode {
            FermiEvaluation::PerTransition => fermi_occupation(t.mu, lead),
            FermiEvaluation::PerChannel => match t.channel {
                Channel::Up => f_up.unwrap_or(0.0),
                Channel::Down => f_down.unwrap_or(0.0),
                Channel::Forbidden => 0.0,
            },
        };
        out.push(TransitionRate {
            one_p: t.one_p,
            two_p: t.two_p,
            channel: t.channel,
            gin: lead.gamma0 * w * f,
            gout: lead.gamma0 * w * (1.0 - f),
        });
    }
    Ok(out)
}

/// Channel-level rates `Γ₀ f(μ_σ)` and `Γ₀ (1 − f(μ_σ))` evaluated at the
/// group means.
pub fn channel_rates(mus: &ChemicalPotentials, lead: &LeadSpec) -> Result<RateSet> {
    lead.validate()?;
    let f = |ch: Channel| {
        mus.group_mean(ch)
            .map(|mu| fermi_occupation(mu, lead))
            .ok_or_else(|| QndError::InvalidRates(format!("no allowed transitions in the {ch:?} group")))
    };
    let (fu, fd) = (f(Channel::Up)?, f(Channel::Down)?);
    Ok(RateSet::new(
        lead.gamma0 * fu,
        lead.gamma0 * (1.0 - fu),
        lead.gamma0 * fd,
        lead.gamma0 * (1.0 - fd),
    ))
}

/// Names accepted by [`preset`], each with a one-line description.
pub const PRESET_NAMES: [(&str, &str); 6] = [
    (
        "fig2_T0",
        "zero-temperature read/load window: gin_down = gout_up = gamma0, window 5/gamma0",
    ),
    (
        "fig2_f003",
        "finite-temperature read/load window, f = 0.03: gin_down = gout_up = (1-f) gamma0, gin_up = gout_down = f gamma0, window 5/gamma0",
    ),
    (
        "fig3a",
        "experimentally calibrated read/load rates (values must be supplied), window 1 ms",
    ),
    (
        "fig4_ff",
        "calibrated read/load rates (values must be supplied) plus flip-flop relaxation 53.3e-3 /s, window 1 ms",
    ),
    (
        "rt_window",
        "resonant-tunneling tuning: gin_down = gout_down = 2.8e4 /s, gin_up = 140 /s, gout_up = 5.6e4 /s, window 0.7 ms",
    ),
    ("custom", "user-supplied rates, no default window"),
];

pub const FLIP_FLOP_RATE: f64 = 53.3e-3;

/// Inputs that parameterize a preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    pub gamma0: f64,
    /// Lead occupation at the high-energy group; `None` uses the preset default.
    pub f: Option<f64>,
    /// Explicit rates for presets without built-in values.
    pub values: Option<RateSet>,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            gamma0: 1.0,
            f: None,
            values: None,
        }
    }
}

/// Rates and characteristic window duration of a named scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub rates: RateSet,
    /// Read/load (or RT) window duration in seconds when fixed by the scenario.
    pub window: Option<f64>,
}

fn symmetric_readout(gamma0: f64, f: f64) -> RateSet {
    RateSet::new(gamma0 * f, gamma0 * (1.0 - f), gamma0 * (1.0 - f), gamma0 * f)
}

pub fn preset(name: &str, params: &PresetParams) -> Result<Preset> {
    let key = PRESET_NAMES
        .iter()
        .map(|(n, _)| *n)
        .find(|n| *n == name)
        .ok_or_else(|| QndError::UnknownPreset(name.to_string()))?;
    let g0 = params.gamma0;
    if !(g0.is_finite() && g0 > 0.0) {
        return Err(QndError::InvalidRates(format!("gamma0 must be positive, got {g0}")));
    }
    let occupation = |default: f64| {
        let f = params.f.unwrap_or(default);
        if (0.0..=1.0).contains(&f) {
            Ok(f)
        } else {
            Err(QndError::InvalidRates(format!("f must lie in [0, 1], got {f}")))
        }
    };
    let need_values = || params.values.ok_or_else(|| QndError::PresetNeedsValues(key.to_string()));

    let (rates, window) = match key {
        "fig2_T0" => (symmetric_readout(g0, occupation(0.0)?), Some(5.0 / g0)),
        "fig2_f003" => (symmetric_readout(g0, occupation(0.03)?), Some(5.0 / g0)),
        "fig3a" => (need_values()?, Some(1e-3)),
        "fig4_ff" => (need_values()?.with_ff(FLIP_FLOP_RATE), Some(1e-3)),
        "rt_window" => (RateSet::new(140.0, 5.6e4, 2.8e4, 2.8e4), Some(0.7e-3)),
        _ => (need_values()?, None),
    };
    rates.validate()?;
    Ok(Preset {
        name: key,
        rates,
        window,
    })
}
