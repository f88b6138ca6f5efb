//! Flip-rate extraction, stationary states and hybridization sweeps.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{QndError, Result};
use crate::liouvillian::{Liouvillian, Matrix6, StateVector, Vector6};
use crate::spin_system::{dipolar_xz, eigen_basis, transition_amplitudes, SpinSystemSpec, SystemKind};

/// Conditions worth reporting alongside a successful fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitWarning {
    /// Neither series moves; both rates are only bounded from above.
    FlatSeries,
    /// `Γ_↑` sits at its lower bound of zero.
    GammaUpAtBound,
    /// `Γ_↓` sits at its lower bound of zero.
    GammaDownAtBound,
}

/// Two-state flip rates of the data spin.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRateFit {
    /// Rate of ↑ → ↓ flips, 1/s.
    pub gamma_up: f64,
    /// Rate of ↓ → ↑ flips, 1/s.
    pub gamma_down: f64,
    pub residual_rms: f64,
    pub equilibrium_p_up: f64,
    pub iterations: usize,
    pub warnings: Vec<FitWarning>,
}

const MAX_ITERATIONS: usize = 500;

fn check_series(name: &str, s: &[(f64, f64)]) -> Result<()> {
    let fail = |reason: String| {
        Err(QndError::FitFailure {
            iterations: 0,
            reason,
        })
    };
    if s.len() < 3 {
        return fail(format!("{name} series needs at least 3 points, got {}", s.len()));
    }
    if s.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
        return fail(format!("{name} series contains non-finite values"));
    }
    if s.windows(2).any(|w| w[1].0 <= w[0].0) {
        return fail(format!("{name} series times are not strictly increasing"));
    }
    Ok(())
}

struct Series<'a> {
    up: &'a [(f64, f64)],
    down: &'a [(f64, f64)],
}

impl Series<'_> {
    /// Optimal equilibrium for a given total rate, clamped to `[0, 1]`.
    fn project(&self, k: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &(t, y) in self.up {
            let e = (-k * t).exp();
            let b = 1.0 - e;
            num += b * (y - e);
            den += b * b;
        }
        for &(t, y) in self.down {
            let b = 1.0 - (-k * t).exp();
            num += b * y;
            den += b * b;
        }
        if den == 0.0 {
            0.5
        } else {
            (num / den).clamp(0.0, 1.0)
        }
    }

    fn sse(&self, k: f64, p: f64) -> f64 {
        let up = self.up.iter().map(|&(t, y)| {
            let r = y - (p + (1.0 - p) * (-k * t).exp());
            r * r
        });
        let down = self.down.iter().map(|&(t, y)| {
            let r = y - p * (1.0 - (-k * t).exp());
            r * r
        });
        up.chain(down).sum()
    }

    fn projected_sse(&self, k: f64) -> f64 {
        self.sse(k, self.project(k))
    }

    /// Gradient and Gauss–Newton curvature of the SSE with respect to `ln k`
    /// at fixed `p`.
    fn derivatives(&self, k: f64, p: f64) -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        for &(t, y) in self.up {
            let e = (-k * t).exp();
            let r = y - (p + (1.0 - p) * e);
            let j = (1.0 - p) * k * t * e;
            g += r * j;
            h += j * j;
        }
        for &(t, y) in self.down {
            let e = (-k * t).exp();
            let r = y - p * (1.0 - e);
            let j = -p * k * t * e;
            g += r * j;
            h += j * j;
        }
        (2.0 * g, 2.0 * h)
    }

    fn n(&self) -> usize {
        self.up.len() + self.down.len()
    }
}

/// Joint least-squares fit of the two-state relaxation form to cycle-end
/// `P↑` series from an initial ↑ (`series_up`) and an initial ↓ (`series_down`):
///
/// `P↑(t) = p + (1 − p) e^{−kt}` and `P↑(t) = p (1 − e^{−kt})`,
/// with `k = Γ_↑ + Γ_↓` and `p = Γ_↓ / k`.
pub fn fit_flip_rates(series_up: &[(f64, f64)], series_down: &[(f64, f64)]) -> Result<FlipRateFit> {
    check_series("up", series_up)?;
    check_series("down", series_down)?;
    let data = Series {
        up: series_up,
        down: series_down,
    };

    let span = |s: &[(f64, f64)]| {
        let (lo, hi) = s
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, p)| (lo.min(p), hi.max(p)));
        hi - lo
    };
    if span(series_up) <= 1e-12 && span(series_down) <= 1e-12 {
        let p_last = |s: &[(f64, f64)]| s.last().map(|x| x.1).unwrap_or(0.0);
        let equilibrium = 0.5 * (p_last(series_up) + p_last(series_down));
        let rms = (data.sse(0.0, equilibrium) / data.n() as f64).sqrt();
        return Ok(FlipRateFit {
            gamma_up: 0.0,
            gamma_down: 0.0,
            residual_rms: rms,
            equilibrium_p_up: equilibrium,
            iterations: 0,
            warnings: vec![FitWarning::FlatSeries],
        });
    }

    let t_max = series_up
        .last()
        .unwrap()
        .0
        .max(series_down.last().unwrap().0);
    let t_min = series_up
        .iter()
        .chain(series_down)
        .map(|x| x.0)
        .filter(|t| *t > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(t_max > 0.0 && t_min.is_finite()) {
        return Err(QndError::FitFailure {
            iterations: 0,
            reason: "series need positive sample times".into(),
        });
    }
    let u_lo = (1e-3 / t_max).ln();
    let u_hi = (1e3 / t_min).ln();

    let mut best_u = u_lo;
    let mut best = f64::INFINITY;
    let consider = |u: f64, best_u: &mut f64, best: &mut f64| {
        let v = data.projected_sse(u.exp());
        if v < *best {
            *best = v;
            *best_u = u;
        }
    };
    const SCAN: usize = 240;
    for i in 0..=SCAN {
        let u = u_lo + (u_hi - u_lo) * i as f64 / SCAN as f64;
        consider(u, &mut best_u, &mut best);
    }
    if let Some(u) = log_linear_guess(&data) {
        if u > u_lo && u < u_hi {
            consider(u, &mut best_u, &mut best);
        }
    }

    let mut u = best_u;
    let mut sse = best;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let k = u.exp();
        let p = data.project(k);
        let (g, h) = data.derivatives(k, p);
        if g == 0.0 || h == 0.0 {
            converged = true;
            break;
        }
        let step = -g / (h * (1.0 + lambda));
        let trial = (u + step).clamp(u_lo, u_hi);
        let trial_sse = data.projected_sse(trial.exp());
        if trial_sse <= sse {
            let moved = (trial - u).abs();
            u = trial;
            sse = trial_sse;
            lambda = (lambda * 0.3).max(1e-12);
            if moved < 1e-12 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(QndError::FitFailure {
            iterations,
            reason: format!("no convergence, last total rate {:e} /s", u.exp()),
        });
    }

    let k = u.exp();
    let mut p = data.project(k);
    if p < 1e-12 {
        p = 0.0;
    } else if p > 1.0 - 1e-12 {
        p = 1.0;
    }
    let fit = FlipRateFit {
        gamma_up: k * (1.0 - p),
        gamma_down: k * p,
        residual_rms: (sse / data.n() as f64).sqrt(),
        equilibrium_p_up: p,
        iterations,
        warnings: [
            (p == 1.0, FitWarning::GammaUpAtBound),
            (p == 0.0, FitWarning::GammaDownAtBound),
        ]
        .into_iter()
        .filter_map(|(cond, w)| cond.then_some(w))
        .collect(),
    };
    Ok(fit)
}

/// `ln k` from a straight-line fit of `ln |P↑ − P∞|` over the ↑ series, with
/// `P∞` taken as the mean of the final samples.
fn log_linear_guess(data: &Series) -> Option<f64> {
    let p_inf = 0.5 * (data.up.last()?.1 + data.down.last()?.1);
    let first = (data.up.first()?.1 - p_inf).abs();
    let pts: Vec<(f64, f64)> = data
        .up
        .iter()
        .filter(|(_, y)| (y - p_inf).abs() > 1e-3 * first && (y - p_inf).abs() > 0.0)
        .map(|&(t, y)| (t, (y - p_inf).abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    let slope = sxy / sxx;
    (slope < 0.0 && slope.is_finite()).then(|| (-slope).ln())
}

/// Closed communicating classes of the transition graph whose edge `j → i`
/// exists when `q[(i, j)] > 0`.
fn closed_classes(q: &Matrix6) -> Vec<Vec<usize>> {
    let mut reach = [[false; 6]; 6];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for (j, r) in row.iter_mut().enumerate() {
            if i != j && q[(j, i)] > 0.0 {
                *r = true;
            }
        }
    }
    for k in 0..6 {
        for i in 0..6 {
            for j in 0..6 {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut classes = Vec::new();
    let mut seen = [false; 6];
    for i in 0..6 {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..6).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        let closed = class.iter().all(|&a| (0..6).all(|b| !reach[a][b] || class.contains(&b)));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Grassmann–Taksar–Heyman elimination on an irreducible generator block.
fn gth(rates: &DMatrix<f64>) -> Vec<f64> {
    // rates[(i, j)] is the rate i → j.
    let m = rates.nrows();
    let mut a = rates.clone();
    for k in (1..m).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        for i in 0..k {
            let f = a[(i, k)] / s;
            for j in 0..k {
                a[(i, j)] += f * a[(k, j)];
            }
        }
    }
    let mut pi = vec![0.0; m];
    pi[0] = 1.0;
    for k in 1..m {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        pi[k] = (0..k).map(|i| pi[i] * a[(i, k)]).sum::<f64>() / s;
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|v| v / total).collect()
}

fn stationary_of_generator(l: &Matrix6) -> Result<StateVector> {
    if l.iter().any(|v| !v.is_finite()) {
        return Err(QndError::NumericalFailure("generator has non-finite entries".into()));
    }
    let mut q = *l;
    for i in 0..6 {
        for j in 0..6 {
            if i != j && q[(i, j)] < 0.0 {
                q[(i, j)] = 0.0;
            }
        }
    }
    let classes = closed_classes(&q);
    if classes.len() != 1 {
        return Err(QndError::DegenerateNullSpace { blocks: classes });
    }
    let class = &classes[0];
    let m = class.len();
    let mut rates = DMatrix::zeros(m, m);
    for (a, &i) in class.iter().enumerate() {
        for (b, &j) in class.iter().enumerate() {
            if a != b {
                rates[(a, b)] = q[(j, i)];
            }
        }
    }
    let pi = if m == 1 { vec![1.0] } else { gth(&rates) };
    let mut rho = Vector6::zeros();
    for (a, &i) in class.iter().enumerate() {
        rho[i] = pi[a];
    }
    let scale = l.amax();
    let resid = (l * rho).amax();
    if resid > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(QndError::NumericalFailure(format!(
            "stationary residual {resid:e} exceeds tolerance"
        )));
    }
    StateVector::from_vector(rho)
}

/// Unique stationary distribution of a generator.
pub fn stationary_state(l: &Liouvillian) -> Result<StateVector> {
    stationary_of_generator(&l.l)
}

/// Fixed point of a column-stochastic cycle map.
pub fn stationary_of_map(map: &Matrix6) -> Result<StateVector> {
    stationary_of_generator(&(map - Matrix6::identity()))
}

/// Grid axis; logarithmic axes need a positive range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub log: bool,
}

impl Axis {
    pub fn linear(min: f64, max: f64, points: usize) -> Self {
        Axis {
            min,
            max,
            points,
            log: false,
        }
    }

    pub fn log(min: f64, max: f64, points: usize) -> Self {
        Axis {
            min,
            max,
            points,
            log: true,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let ok = self.points >= 1
            && self.min.is_finite()
            && self.max.is_finite()
            && self.max >= self.min
            && (!self.log || self.min > 0.0);
        if !ok {
            return Err(QndError::InvalidSpec(format!("invalid sweep axis {self:?}")));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let x = i as f64 / n;
                if self.log {
                    (self.min.ln() + x * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + x * (self.max - self.min)
                }
            })
            .collect())
    }
}

/// Which nuclear-flip weight to map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepTarget {
    /// `M_{⇑,~↓⇓}`.
    #[default]
    Down,
    /// `M_{⇑,~↑⇓}`.
    Up,
}

/// `m[i][j]` is the weight at `b0[i]`, `dxz[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridizationGrid {
    pub b0: Vec<f64>,
    pub dxz: Vec<f64>,
    pub m: Vec<Vec<f64>>,
}

impl HybridizationGrid {
    /// Rows `(b0, dxz, m)` in B₀-major order.
    pub fn long_format(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.b0.iter().enumerate().flat_map(move |(i, &b)| {
            self.dxz.iter().enumerate().map(move |(j, &d)| (b, d, self.m[i][j]))
        })
    }
}

/// Map a nuclear-flip selection-rule weight over static field and symmetric
/// `D_xz`, with `ε_e = γ_e B₀` and `ε_n = γ_n B₀`. `base` supplies the
/// isotropic coupling; `jobs = 0` uses all available threads.
pub fn sweep_hybridization(
    base: &SpinSystemSpec,
    gamma_e: f64,
    gamma_n: f64,
    b0: &Axis,
    dxz: &Axis,
    target: SweepTarget,
    jobs: usize,
) -> Result<HybridizationGrid> {
    if !base.kind.is_nuclear() {
        return Err(QndError::InvalidSpec("sweeps need an electron-nuclear system".into()));
    }
    let b_values = b0.values()?;
    let d_values = dxz.values()?;
    let column = match target {
        SweepTarget::Down => 3,
        SweepTarget::Up => 1,
    };
    let cell = |b: f64, d: f64| -> Result<f64> {
        let spec = SpinSystemSpec::from_field(SystemKind::AnisotropicEn, b, gamma_e, gamma_n, base.coupling)?
            .with_dipolar(dipolar_xz(d))?;
        Ok(transition_amplitudes(&eigen_basis(&spec)?).m[0][column])
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| QndError::NumericalFailure(format!("thread pool: {e}")))?;
    let m = pool.install(|| {
        b_values
            .par_iter()
            .map(|&b| d_values.iter().map(|&d| cell(b, d)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<Vec<f64>>>>()
    })?;
    Ok(HybridizationGrid {
        b0: b_values,
        dxz: d_values,
        m,
    })
}
