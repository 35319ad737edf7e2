//! Pulse shapes and modulator synthesis: from a target wavepacket `xi` to
//! the coupling `lambda(t)` that makes an oscillator emit it, the
//! multimode transition matrix `Phi(t)`, and coherent-state matching.

use std::fmt;

use crate::grid::{cumulative_trapezoid, Samples, TimeGrid};
use crate::integrate::rk4;
use crate::{CMatrix, Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A square-integrable pulse on `t >= 0`; zero for negative times.
#[derive(Clone, Debug, PartialEq)]
pub enum Pulse {
    /// `sqrt(gamma) exp(-gamma t / 2)`.
    ExpDecay {
        gamma: f64,
    },
    /// Gaussian intensity profile centred at `t0` with intensity width
    /// `sigma`, normalized on the half line.
    Gaussian {
        t0: f64,
        sigma: f64,
    },
    /// `1 / sqrt(width)` on the closed interval `[0, width]`.
    Square {
        width: f64,
    },
    /// Linear interpolation of samples; zero outside `[times[0], times[last]]`.
    Sampled {
        times: Vec<f64>,
        values: Vec<C64>,
    },
    Scaled {
        factor: C64,
        pulse: Box<Pulse>,
    },
    Combination(Vec<(C64, Pulse)>),
}

impl Pulse {
    pub fn exp_decay(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("exp_decay gamma must be positive, got {gamma}")));
        }
        Ok(Pulse::ExpDecay { gamma })
    }

    pub fn gaussian(t0: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && t0.is_finite()) {
            return Err(Error::invalid(format!("gaussian needs finite t0 and sigma > 0, got t0={t0}, sigma={sigma}")));
        }
        Ok(Pulse::Gaussian { t0, sigma })
    }

    pub fn square(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!("square width must be positive, got {width}")));
        }
        Ok(Pulse::Square { width })
    }

    pub fn sampled(times: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::invalid("sampled pulse needs at least two (t, value) pairs"));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sampled pulse times must be nonnegative and strictly increasing"));
        }
        Ok(Pulse::Sampled { times, values })
    }

    pub fn scaled(self, factor: C64) -> Self {
        match self {
            Pulse::Scaled { factor: f, pulse } => Pulse::Scaled { factor: f * factor, pulse },
            p => Pulse::Scaled { factor, pulse: Box::new(p) },
        }
    }

    pub fn eval(&self, t: f64) -> C64 {
        if t < 0.0 {
            return ZERO;
        }
        match self {
            Pulse::ExpDecay { gamma } => C64::from(gamma.sqrt() * (-0.5 * gamma * t).exp()),
            Pulse::Gaussian { t0, sigma } => {
                let norm_sq =
                    sigma * (std::f64::consts::PI / 2.0).sqrt() * libm::erfc(-t0 / (sigma * std::f64::consts::SQRT_2));
                C64::from((-(t - t0).powi(2) / (4.0 * sigma * sigma)).exp() / norm_sq.sqrt())
            }
            Pulse::Square { width } => {
                if t <= *width {
                    C64::from(1.0 / width.sqrt())
                } else {
                    ZERO
                }
            }
            Pulse::Sampled { times, values } => {
                let last = times.len() - 1;
                if t < times[0] || t > times[last] {
                    return ZERO;
                }
                let i = times.partition_point(|&x| x <= t).clamp(1, last);
                let f = (t - times[i - 1]) / (times[i] - times[i - 1]);
                values[i - 1] * (1.0 - f) + values[i] * f
            }
            Pulse::Scaled { factor, pulse } => factor * pulse.eval(t),
            Pulse::Combination(parts) => parts.iter().map(|(c, p)| c * p.eval(t)).sum(),
        }
    }

    /// Time beyond which the pulse is negligible (below ~1e-18 in intensity).
    pub fn support_end(&self) -> f64 {
        match self {
            Pulse::ExpDecay { gamma } => 41.5 / gamma,
            Pulse::Gaussian { t0, sigma } => (t0 + 9.5 * sigma).max(0.0),
            Pulse::Square { width } => *width,
            Pulse::Sampled { times, .. } => *times.last().unwrap_or(&0.0),
            Pulse::Scaled { pulse, .. } => pulse.support_end(),
            Pulse::Combination(parts) => parts.iter().map(|(_, p)| p.support_end()).fold(0.0, f64::max),
        }
    }

    /// Points where the pulse may have a kink or jump.
    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Pulse::Square { width } => out.push(*width),
            Pulse::Sampled { times, .. } => out.extend(times.iter().copied()),
            Pulse::Gaussian { t0, .. } if *t0 > 0.0 => out.push(*t0),
            Pulse::Scaled { pulse, .. } => pulse.breakpoints(out),
            Pulse::Combination(parts) => parts.iter().for_each(|(_, p)| p.breakpoints(out)),
            _ => {}
        }
    }

    /// `xi = c * sqrt(gamma) exp(-gamma t / 2)`, when the pulse has that form.
    pub fn exp_closed_form(&self) -> Option<(C64, f64)> {
        match self {
            Pulse::ExpDecay { gamma } => Some((ONE, *gamma)),
            Pulse::Scaled { factor, pulse } => pulse.exp_closed_form().map(|(c, g)| (c * factor, g)),
            _ => None,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        inner(self, self).re
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Result<Pulse> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::ZeroNorm("cannot normalize a zero pulse".into()));
        }
        Ok(self.clone().scaled(C64::from(1.0 / n)))
    }

    /// Gram–Schmidt: `self` minus its projections on `against`, normalized.
    pub fn orthogonalized(&self, against: &[Pulse]) -> Result<Pulse> {
        let mut parts = vec![(ONE, self.clone())];
        for q in against {
            let qq = q.norm_sq();
            if !(qq > 0.0) {
                return Err(Error::ZeroNorm("cannot orthogonalize against a zero pulse".into()));
            }
            parts.push((-inner(q, self) / qq, q.clone()));
        }
        Pulse::Combination(parts).normalized()
    }

    pub fn sample(&self, grid: &TimeGrid) -> Samples {
        grid.sample(|t| self.eval(t))
    }
}

impl fmt::Display for Pulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pulse::ExpDecay { gamma } => write!(f, "exp_decay(gamma={gamma})"),
            Pulse::Gaussian { t0, sigma } => write!(f, "gaussian(t0={t0}, sigma={sigma})"),
            Pulse::Square { width } => write!(f, "square(T={width})"),
            Pulse::Sampled { times, .. } => write!(f, "sampled({} points)", times.len()),
            Pulse::Scaled { factor, pulse } => write!(f, "{factor}*{pulse}"),
            Pulse::Combination(parts) => write!(f, "combination({} terms)", parts.len()),
        }
    }
}

const GL_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// `<a, b> = int_0^inf conj(a) b dt` by composite 5-point Gauss–Legendre
/// split at every breakpoint.
pub fn inner(a: &Pulse, b: &Pulse) -> C64 {
    let end = a.support_end().min(b.support_end());
    if end <= 0.0 {
        return ZERO;
    }
    let mut cuts = vec![0.0, end];
    a.breakpoints(&mut cuts);
    b.breakpoints(&mut cuts);
    cuts.retain(|&x| (0.0..=end).contains(&x));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let target = end / 4000.0;
    let mut acc = ZERO;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let n = ((hi - lo) / target).ceil().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        for k in 0..n {
            let mid = lo + (k as f64 + 0.5) * h;
            for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let t = mid + 0.5 * h * x;
                acc += a.eval(t).conj() * b.eval(t) * (0.5 * h * wt);
            }
        }
    }
    acc
}

/// A pulse sampled on the half-step grid together with its exact norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPulse {
    pub pulse: Pulse,
    pub samples: Samples,
    pub norm_sq: f64,
}

impl SampledPulse {
    pub fn new(pulse: Pulse, grid: &TimeGrid) -> Self {
        let samples = pulse.sample(grid);
        let norm_sq = pulse.norm_sq();
        Self { pulse, samples, norm_sq }
    }

    fn check_normalized(&self, what: &str, tol: f64) -> Result<()> {
        if (self.norm_sq - 1.0).abs() > tol {
            return Err(Error::NotNormalized {
                what: what.to_string(),
                norm: self.norm_sq.sqrt(),
                norm_sq: self.norm_sq,
            });
        }
        Ok(())
    }
}

/// `N` pulses sampled on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSet {
    grid: TimeGrid,
    pulses: Vec<SampledPulse>,
}

impl PulseSet {
    pub fn new(grid: TimeGrid, pulses: Vec<Pulse>) -> Self {
        let pulses = pulses.into_iter().map(|p| SampledPulse::new(p, &grid)).collect();
        Self { grid, pulses }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn pulses(&self) -> &[SampledPulse] {
        &self.pulses
    }

    pub fn norms(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.norm_sq.sqrt()).collect()
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        for (k, p) in self.pulses.iter().enumerate() {
            p.check_normalized(&format!("pulse {k}"), tol)?;
        }
        Ok(())
    }

    pub fn check_orthogonal(&self, tol: f64) -> Result<()> {
        for i in 0..self.pulses.len() {
            for j in i + 1..self.pulses.len() {
                let overlap = inner(&self.pulses[i].pulse, &self.pulses[j].pulse).norm();
                if overlap > tol {
                    return Err(Error::NotOrthogonal { i, j, overlap });
                }
            }
        }
        Ok(())
    }
}

/// How a coupling was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMethod {
    /// Exact constant coupling of an exponentially decaying pulse.
    ClosedForm,
    /// `lambda = xi / sqrt(w)` with trapezoid `w`.
    Numerical,
    /// Coupled multimode inverse through the Gram identity.
    MultimodeGram,
}

/// Single-mode coupling synthesized from a normalized pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleModeSynthesis {
    pub lambda: Samples,
    /// Remaining pulse weight on the half-step grid.
    pub w: Vec<f64>,
    /// First time with `w < epsilon_floor`; `lambda = 0` from there on.
    pub cutoff: Option<f64>,
    pub emitted_fraction: f64,
    pub method: SynthesisMethod,
}

/// `w(t) = int_t^inf |xi|^2 = 1 - int_0^t |xi|^2` on the half-step grid.
pub fn w_of(xi: &SampledPulse, tol: f64) -> Result<Vec<f64>> {
    xi.check_normalized("xi", tol)?;
    let h = xi.samples.spacing();
    let intensity: Vec<f64> = xi.samples.values().iter().map(|v| v.norm_sqr()).collect();
    Ok(cumulative_trapezoid(&intensity, h).into_iter().map(|f| (1.0 - f).max(0.0)).collect())
}

fn check_floor(epsilon_floor: f64) -> Result<()> {
    if !(epsilon_floor > 0.0 && epsilon_floor < 1.0) {
        return Err(Error::invalid(format!("epsilon_floor must lie in (0, 1), got {epsilon_floor}")));
    }
    Ok(())
}

fn finish(
    xi: &Samples,
    w: Vec<f64>,
    epsilon_floor: f64,
    method: SynthesisMethod,
    closed: Option<C64>,
) -> SingleModeSynthesis {
    let cut = w.iter().position(|&x| x < epsilon_floor);
    let end = cut.unwrap_or(w.len() - 1);
    let values = (0..w.len())
        .map(|i| {
            if cut.is_some_and(|c| i >= c) {
                ZERO
            } else if let Some(l) = closed {
                l
            } else {
                xi.get(i) / w[i].sqrt()
            }
        })
        .collect();
    SingleModeSynthesis {
        lambda: Samples::new(xi.spacing(), values),
        emitted_fraction: 1.0 - w[end],
        cutoff: cut.map(|c| xi.time(c)),
        w,
        method,
    }
}

/// `lambda(t) = xi(t) / sqrt(w(t))` while `w >= epsilon_floor`, zero after.
pub fn lambda_from_xi(xi: &SampledPulse, epsilon_floor: f64, tol: f64) -> Result<SingleModeSynthesis> {
    check_floor(epsilon_floor)?;
    let w = w_of(xi, tol)?;
    Ok(finish(&xi.samples, w, epsilon_floor, SynthesisMethod::Numerical, None))
}

/// Like [`lambda_from_xi`] but uses the exact constant coupling
/// `c sqrt(gamma)` when the pulse is `c sqrt(gamma) exp(-gamma t / 2)`.
pub fn synthesize(xi: &SampledPulse, epsilon_floor: f64, tol: f64) -> Result<SingleModeSynthesis> {
    check_floor(epsilon_floor)?;
    xi.check_normalized("xi", tol)?;
    match xi.pulse.exp_closed_form() {
        Some((c, gamma)) => {
            let w = (0..xi.samples.len()).map(|j| (-gamma * xi.samples.time(j)).exp()).collect();
            let phase = c / c.norm();
            Ok(finish(&xi.samples, w, epsilon_floor, SynthesisMethod::ClosedForm, Some(phase * gamma.sqrt())))
        }
        None => lambda_from_xi(xi, epsilon_floor, tol),
    }
}

/// Forward map `xi = lambda exp(-int_0^t (|lambda|^2 / 2 + i omega) ds)`.
///
/// The amplitude uses the Crank–Nicolson step
/// `w_{i+1} = w_i (1 - h|lambda_i|^2/2) / (1 + h|lambda_{i+1}|^2/2)`, the
/// exact discrete inverse of the trapezoid `w` used by [`lambda_from_xi`].
pub fn xi_from_lambda(lambda: &Samples, omega: Option<&Samples>) -> Samples {
    let h = lambda.spacing();
    let n = lambda.len();
    let theta = match omega {
        Some(om) => {
            let re: Vec<f64> = (0..n).map(|i| om.get(i).re).collect();
            cumulative_trapezoid(&re, h)
        }
        None => vec![0.0; n],
    };
    let mut w = 1.0f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let a = 1.0 - 0.5 * h * lambda.get(i - 1).norm_sqr();
            let b = 1.0 + 0.5 * h * lambda.get(i).norm_sqr();
            w = (w * a / b).max(0.0);
        }
        out.push(lambda.get(i) * w.sqrt() * C64::from_polar(1.0, -theta[i]));
    }
    Samples::new(h, out)
}

fn row(values: &[&Samples], j: usize) -> CMatrix {
    CMatrix::from_fn(1, values.len(), |_, k| values[k].get(j))
}

/// `Phi' = A Phi`, `Phi(0) = I`, `A_jk = -lambda_j^* lambda_k / 2 - i omega_k delta_jk`,
/// at every full step of `grid`.
pub fn transition_matrix(grid: &TimeGrid, lambda: &[Samples], omega: &[Samples]) -> Result<Vec<CMatrix>> {
    let n = lambda.len();
    if omega.len() != n {
        return Err(Error::DimensionMismatch {
            context: "omega vs lambda count".into(),
            expected: n,
            found: omega.len(),
        });
    }
    let lam: Vec<&Samples> = lambda.iter().collect();
    let mut out = Vec::with_capacity(grid.steps() + 1);
    rk4(
        grid,
        CMatrix::identity(n, n),
        |j, phi| {
            let l = row(&lam, j);
            let mut a = l.adjoint() * &l * C64::from(-0.5);
            for k in 0..n {
                a[(k, k)] -= C64::new(0.0, omega[k].get(j).re);
            }
            Ok(a * phi)
        },
        |_, phi| {
            out.push(phi.clone());
            Ok(())
        },
    )?;
    Ok(out)
}

/// Largest `|| xi_target(t) - lambda(t) Phi(t) ||` over full grid steps with
/// `t <= t_max` (all steps when `t_max` is `None`).
pub fn multimode_residual(
    grid: &TimeGrid,
    xi_target: &[Samples],
    lambda: &[Samples],
    omega: &[Samples],
    t_max: Option<f64>,
) -> Result<f64> {
    if xi_target.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            context: "target pulses vs couplings".into(),
            expected: xi_target.len(),
            found: lambda.len(),
        });
    }
    let phi = transition_matrix(grid, lambda, omega)?;
    let lam: Vec<&Samples> = lambda.iter().collect();
    let xi: Vec<&Samples> = xi_target.iter().collect();
    let mut worst = 0.0f64;
    for (i, p) in phi.iter().enumerate() {
        if t_max.is_some_and(|tm| grid.time(i) > tm + 1e-12) {
            break;
        }
        let r = row(&xi, 2 * i) - row(&lam, 2 * i) * p;
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// Couplings for an `N`-mode modulator emitting a set of orthonormal pulses.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodeSynthesis {
    pub lambda: Vec<Samples>,
    pub omega: Vec<Samples>,
    pub cutoff: Option<f64>,
    /// Per-mode emitted fraction.
    pub emitted_fraction: Vec<f64>,
    pub method: SynthesisMethod,
}

impl MultimodeSynthesis {
    pub fn min_emitted_fraction(&self) -> f64 {
        self.emitted_fraction.iter().copied().fold(1.0, f64::min)
    }
}

/// Synthesize couplings for orthonormal pulses.
///
/// Pulses that never overlap in time are handled mode by mode. Otherwise
/// the inverse `Psi = Phi^{-1}` is integrated from
/// `Psi' = Psi Psi^dag xi^dag xi Psi / 2`, which follows from the Gram
/// identity `Phi^dag Phi = I - int_0^t xi^dag xi`, and `lambda = xi Psi`.
pub fn synthesize_multimode(set: &PulseSet, epsilon_floor: f64, tol: f64) -> Result<MultimodeSynthesis> {
    check_floor(epsilon_floor)?;
    set.check_normalized(tol)?;
    set.check_orthogonal(tol)?;
    let grid = *set.grid();
    let n = set.len();
    let zeros = || Samples::zeros(grid.half_dt(), grid.half_len());
    let samples: Vec<&Samples> = set.pulses().iter().map(|p| &p.samples).collect();
    let decoupled = (0..grid.half_len()).all(|j| {
        let active = samples.iter().filter(|s| s.get(j) != ZERO).count();
        active <= 1
    });
    if decoupled {
        let mut lambda = Vec::with_capacity(n);
        let mut emitted = Vec::with_capacity(n);
        let mut cutoff: Option<f64> = None;
        let mut method = SynthesisMethod::ClosedForm;
        for p in set.pulses() {
            let s = synthesize(p, epsilon_floor, tol)?;
            if s.method == SynthesisMethod::Numerical {
                method = SynthesisMethod::Numerical;
            }
            cutoff = match (cutoff, s.cutoff) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
            emitted.push(s.emitted_fraction);
            lambda.push(s.lambda);
        }
        return Ok(MultimodeSynthesis { lambda, omega: vec![zeros(); n], cutoff, emitted_fraction: emitted, method });
    }

    let h = grid.dt();
    let deriv = |j: usize, psi: &CMatrix| -> CMatrix {
        let x = row(&samples, j);
        psi * psi.adjoint() * x.adjoint() * (&x * psi) * C64::from(0.5)
    };
    let mut psi_full = Vec::with_capacity(grid.steps() + 1);
    let mut cut_step: Option<usize> = None;
    rk4(
        &grid,
        CMatrix::identity(n, n),
        |j, psi| Ok(deriv(j, psi)),
        |i, psi| {
            if cut_step.is_none() {
                let smax = psi.singular_values().max();
                if smax * smax > 1.0 / epsilon_floor || !smax.is_finite() {
                    cut_step = Some(i);
                }
                psi_full.push(psi.clone());
            }
            Ok(())
        },
    )?;
    let mut lambda: Vec<Vec<C64>> = vec![vec![ZERO; grid.half_len()]; n];
    let limit = cut_step.map(|c| 2 * c).unwrap_or(grid.half_len());
    for j in 0..limit {
        let i = j / 2;
        let psi = if j % 2 == 0 {
            psi_full[i].clone()
        } else {
            // Cubic Hermite midpoint.
            let (p0, p1) = (&psi_full[i], &psi_full[i + 1]);
            let (d0, d1) = (deriv(2 * i, p0), deriv(2 * i + 2, p1));
            (p0 + p1) * C64::from(0.5) + (d0 - d1) * C64::from(h / 8.0)
        };
        let l = row(&samples, j) * psi;
        for k in 0..n {
            lambda[k][j] = l[(0, k)];
        }
    }
    let end = limit.min(grid.half_len() - 1);
    let emitted = samples
        .iter()
        .map(|s| {
            let intensity: Vec<f64> = s.values().iter().map(|v| v.norm_sqr()).collect();
            cumulative_trapezoid(&intensity, grid.half_dt())[end]
        })
        .collect();
    Ok(MultimodeSynthesis {
        lambda: lambda.into_iter().map(|v| Samples::new(grid.half_dt(), v)).collect(),
        omega: vec![zeros(); n],
        cutoff: cut_step.map(|c| grid.time(c)),
        emitted_fraction: emitted,
        method: SynthesisMethod::MultimodeGram,
    })
}

/// Modulator parameters replicating a coherent input `beta(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentMatch {
    /// `||beta||`, real and nonnegative; the phase of `beta` stays in `xi`.
    pub alpha: C64,
    /// `beta / ||beta||`.
    pub xi: SampledPulse,
    pub synthesis: SingleModeSynthesis,
}

pub fn coherent_match(beta: &Pulse, grid: &TimeGrid, epsilon_floor: f64, tol: f64) -> Result<CoherentMatch> {
    let norm = beta.norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm("coherent amplitude pulse beta is zero".into()));
    }
    let xi = SampledPulse::new(beta.clone().scaled(C64::from(1.0 / norm)), grid);
    let synthesis = synthesize(&xi, epsilon_floor, tol)?;
    Ok(CoherentMatch { alpha: C64::from(norm), xi, synthesis })
}
