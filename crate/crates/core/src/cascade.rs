//! The modulator side of replication: build `G ◁ M` for an oscillator
//! modulator `M ~ (I, sum_k lambda_k(t) a_k, sum_k omega_k(t) a_k^dag a_k)`,
//! evolve the joint vacuum master equation, trace out the modulator and
//! compare against the hierarchy side.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::grid::Samples;
use crate::hierarchy::{min_eigenvalue, solve_input, HierarchyAudit, InputFieldState, SystemTrajectory};
use crate::integrate::rk4;
use crate::operators::{
    cat_state, coherent_state, mode_annihilator, number_operator, required_dim, HilbertSpace, Operator, StateVector,
};
use crate::pulses::{coherent_match, synthesize, synthesize_multimode, PulseSet, SampledPulse, SynthesisMethod};
use crate::slh::{series_product, Coefficient, SlhModel, Term};
use crate::{CMatrix, CVector, Error, Result, C64};

const ONE: C64 = C64::new(1.0, 0.0);

/// Label of modulator mode `k`.
pub fn mode_label(k: usize) -> String {
    format!("modulator{k}")
}

/// A passive oscillator modulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulatorSpec {
    pub dims: Vec<usize>,
    pub lambda: Vec<Samples>,
    pub omega: Vec<Samples>,
    /// Initial state on the modulator space.
    pub initial: StateVector,
}

impl ModulatorSpec {
    pub fn space(dims: &[usize]) -> Result<HilbertSpace> {
        HilbertSpace::new(dims.iter().enumerate().map(|(k, &d)| (mode_label(k), d)))
    }

    /// Fock state `|n_1, ..., n_N>` on modes with the given truncations.
    pub fn fock_state(dims: &[usize], n: &[usize]) -> Result<StateVector> {
        let space = Self::space(dims)?;
        let mut idx = 0;
        for (&d, &k) in dims.iter().zip(n) {
            if k >= d {
                return Err(Error::invalid(format!("occupation {k} needs a truncation above {d}")));
            }
            idx = idx * d + k;
        }
        StateVector::basis(&space, idx)
    }

    /// The modulator as an SLH model.
    pub fn model(&self) -> Result<SlhModel> {
        let n = self.dims.len();
        if self.lambda.len() != n || self.omega.len() != n {
            return Err(Error::DimensionMismatch {
                context: "modulator couplings vs modes".into(),
                expected: n,
                found: self.lambda.len(),
            });
        }
        let space = Self::space(&self.dims)?;
        if self.initial.space() != &space {
            return Err(Error::SpaceMismatch(format!(
                "modulator initial state on {} for modulator {space}",
                self.initial.space()
            )));
        }
        let mut coupling = Vec::new();
        let mut hamiltonian = Vec::new();
        for k in 0..n {
            let label = mode_label(k);
            let a = mode_annihilator(&label, self.dims[k])?.embed(&space)?;
            let num = number_operator(&label, self.dims[k])?.embed(&space)?;
            if self.lambda[k].values().iter().any(|v| *v != C64::default()) {
                coupling.push(Term::new(Coefficient::sampled(self.lambda[k].clone()), a));
            }
            if self.omega[k].values().iter().any(|v| *v != C64::default()) {
                hamiltonian
                    .push(Term::new(Coefficient::Re(Box::new(Coefficient::sampled(self.omega[k].clone()))), num));
            }
        }
        SlhModel::new(space.clone(), Operator::identity(&space), coupling, hamiltonian, 1e-12)
    }
}

/// `G ◁ M` on `space(M) ⊗ space(G)`.
pub fn build_cascade(g: &SlhModel, m: &ModulatorSpec, dim_ceiling: usize) -> Result<SlhModel> {
    let dim = m.dims.iter().product::<usize>() * g.dim();
    if dim > dim_ceiling {
        return Err(Error::DimensionCeiling { dim, ceiling: dim_ceiling });
    }
    series_product(g, &m.model()?)
}

/// `<L~(t)^dag L~(t)>` in the joint state.
pub fn output_flux(gtilde: &SlhModel, rho: &CMatrix, t: f64) -> f64 {
    let l = gtilde.coupling_at(t);
    (&l * rho).iter().zip(l.iter()).map(|(a, b)| a * b.conj()).sum::<C64>().re
}

/// Invariant audit of a cascade run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeAudit {
    /// Largest `|tr rho(t) - tr rho(0)|` divided by the run length.
    pub trace_drift_per_time: f64,
    /// Smallest eigenvalue of the joint state at stored times.
    pub min_eigenvalue: f64,
    /// Largest increase of total modulator excitation between steps.
    pub excitation_increase: f64,
    /// Largest population of any mode's top truncation level.
    pub top_level_population: f64,
}

/// Result of a joint integration.
#[derive(Clone, Debug)]
pub struct CascadeRun {
    /// Reduced system states and cascade output flux.
    pub reduced: SystemTrajectory,
    /// `<sum_k a_k^dag a_k>` at stored times.
    pub modulator_excitation: Vec<C64>,
    pub audit: CascadeAudit,
}

fn reduce(rho: &CMatrix, dm: usize, dg: usize) -> CMatrix {
    let mut out = CMatrix::zeros(dg, dg);
    for a in 0..dm {
        out += rho.view((a * dg, a * dg), (dg, dg));
    }
    out
}

/// Diagonals of `sum_k N_k` and of the top-level projectors.
fn modulator_diagonals(dims: &[usize], dg: usize) -> (Vec<f64>, Vec<f64>) {
    let dm: usize = dims.iter().product();
    let mut number = Vec::with_capacity(dm * dg);
    let mut top = Vec::with_capacity(dm * dg);
    for i in 0..dm {
        let mut rest = i;
        let mut occ = vec![0; dims.len()];
        for (slot, d) in occ.iter_mut().zip(dims).rev() {
            *slot = rest % d;
            rest /= d;
        }
        let n: usize = occ.iter().sum();
        let at_top = occ.iter().zip(dims).any(|(o, d)| *d > 1 && o + 1 == *d);
        for _ in 0..dg {
            number.push(n as f64);
            top.push(if at_top { 1.0 } else { 0.0 });
        }
    }
    (number, top)
}

fn diag_dot(rho: &CMatrix, diag: &[f64]) -> C64 {
    diag.iter().enumerate().map(|(i, w)| rho[(i, i)] * *w).sum()
}

/// Evolve a joint initial density (possibly a non-Hermitian cross term)
/// under the vacuum master equation of `gtilde`, whose first factors are
/// the modulator modes with truncations `dims`.
pub fn integrate_cascade_density(
    gtilde: &SlhModel,
    dims: &[usize],
    rho0: &CMatrix,
    cfg: &RunConfig,
) -> Result<CascadeRun> {
    let dm: usize = dims.iter().product();
    let d = gtilde.dim();
    if rho0.nrows() != d || !d.is_multiple_of(dm) {
        return Err(Error::DimensionMismatch {
            context: "joint initial state".into(),
            expected: d,
            found: rho0.nrows(),
        });
    }
    let dg = d / dm;
    let (number, top) = modulator_diagonals(dims, dg);
    let compiled = gtilde.compile();
    let grid = cfg.grid;
    let tr0 = rho0.trace();
    let mut reduced = SystemTrajectory { times: Vec::new(), states: Vec::new(), flux: Vec::new() };
    let mut excitation = Vec::new();
    let mut audit = CascadeAudit { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let mut prev_n: Option<f64> = None;
    let mut max_drift = 0.0f64;
    let hermitian = rho0.iter().zip(rho0.adjoint().iter()).all(|(a, b)| (a - b).norm() < 1e-14);
    rk4(
        &grid,
        vec![rho0.clone()],
        |j, y| {
            let gen = compiled.at(grid.half_time(j));
            let mut acc = CMatrix::zeros(d, d);
            gen.l00_adj_acc(&y[0], ONE, &mut acc);
            Ok(vec![acc])
        },
        |i, y| {
            let t = grid.time(i);
            let rho = &y[0];
            let drift = (rho.trace() - tr0).norm();
            if !(drift <= cfg.tolerances.instability_drift) {
                return Err(Error::IntegratorInstability {
                    time: t,
                    drift,
                    limit: cfg.tolerances.instability_drift,
                    suggested_dt: 0.5 * grid.dt(),
                });
            }
            max_drift = max_drift.max(drift);
            let n = diag_dot(rho, &number);
            if let Some(p) = prev_n {
                audit.excitation_increase = audit.excitation_increase.max(n.re - p);
            }
            prev_n = Some(n.re);
            audit.top_level_population = audit.top_level_population.max(diag_dot(rho, &top).norm());
            if cfg.is_sample(i) {
                reduced.times.push(t);
                reduced.states.push(reduce(rho, dm, dg));
                reduced.flux.push(output_flux(gtilde, rho, t));
                excitation.push(n);
                if hermitian {
                    audit.min_eigenvalue = audit.min_eigenvalue.min(min_eigenvalue(rho));
                }
            }
            Ok(())
        },
    )?;
    audit.trace_drift_per_time = max_drift / grid.t_end();
    if !hermitian {
        audit.min_eigenvalue = 0.0;
    }
    Ok(CascadeRun { reduced, modulator_excitation: excitation, audit })
}

/// Evolve `|phi0><phi0| ⊗ |psi0><psi0|` and reduce to the system.
pub fn integrate_cascade(
    gtilde: &SlhModel,
    dims: &[usize],
    phi0: &StateVector,
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<CascadeRun> {
    let joint = phi0.tensor(psi0)?;
    if joint.space() != gtilde.space() {
        return Err(Error::SpaceMismatch(format!(
            "initial state on {} for cascade on {}",
            joint.space(),
            gtilde.space()
        )));
    }
    integrate_cascade_density(gtilde, dims, &joint.to_density().into_matrix(), cfg)
}

/// Optional overrides of the synthesized modulator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModulatorOverrides {
    /// Per-mode truncations; must not be smaller than the required ones.
    pub dims: Option<Vec<usize>>,
    pub epsilon_floor: Option<f64>,
}

/// A modulator replicating an input, with synthesis diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedModulator {
    pub spec: ModulatorSpec,
    pub method: SynthesisMethod,
    pub cutoff: Option<f64>,
    pub emitted_fraction: f64,
    /// Mean photon number carried by the input field.
    pub mean_photons: f64,
}

fn apply_dims(required: Vec<usize>, overrides: &ModulatorOverrides) -> Result<Vec<usize>> {
    match &overrides.dims {
        None => Ok(required),
        Some(d) => {
            if d.len() != required.len() {
                return Err(Error::DimensionMismatch {
                    context: "modulator dims".into(),
                    expected: required.len(),
                    found: d.len(),
                });
            }
            for (k, (&got, &need)) in d.iter().zip(&required).enumerate() {
                if got < need {
                    return Err(Error::invalid(format!("modulator mode {k} needs dim >= {need}, got {got}")));
                }
            }
            Ok(d.clone())
        }
    }
}

/// Modulator couplings and initial state replicating `input`.
pub fn synthesize_modulator(
    input: &InputFieldState,
    cfg: &RunConfig,
    overrides: &ModulatorOverrides,
) -> Result<SynthesizedModulator> {
    let tol = &cfg.tolerances;
    let eps = overrides.epsilon_floor.unwrap_or(tol.epsilon_floor);
    let grid = cfg.grid;
    let zeros = || Samples::zeros(grid.half_dt(), grid.half_len());
    let single =
        |lambda: Samples, dims: Vec<usize>, initial: StateVector, method, cutoff, emitted, mean| SynthesizedModulator {
            spec: ModulatorSpec { dims, lambda: vec![lambda], omega: vec![zeros()], initial },
            method,
            cutoff,
            emitted_fraction: emitted,
            mean_photons: mean,
        };
    let out = match input {
        InputFieldState::Vacuum => {
            let dims = apply_dims(vec![1], overrides)?;
            let initial = ModulatorSpec::fock_state(&dims, &[0])?;
            single(zeros(), dims, initial, SynthesisMethod::ClosedForm, None, 1.0, 0.0)
        }
        InputFieldState::Fock { n, xi } => {
            let s = synthesize(&SampledPulse::new(xi.clone(), &grid), eps, tol.normalization)?;
            let dims = apply_dims(vec![n + 1], overrides)?;
            let initial = ModulatorSpec::fock_state(&dims, &[*n])?;
            single(s.lambda, dims, initial, s.method, s.cutoff, s.emitted_fraction, *n as f64)
        }
        InputFieldState::MultiFock { n, xi } => {
            let set = PulseSet::new(grid, xi.clone());
            let s = synthesize_multimode(&set, eps, tol.normalization.max(tol.orthogonality))?;
            // Coupled modes exchange excitations, so each needs room for all of them.
            let total: usize = n.iter().sum();
            let required = match s.method {
                SynthesisMethod::MultimodeGram => vec![total + 1; n.len()],
                _ => n.iter().map(|k| k + 1).collect(),
            };
            let dims = apply_dims(required, overrides)?;
            let initial = ModulatorSpec::fock_state(&dims, n)?;
            let emitted = s.min_emitted_fraction();
            SynthesizedModulator {
                spec: ModulatorSpec { dims, lambda: s.lambda, omega: s.omega, initial },
                method: s.method,
                cutoff: s.cutoff,
                emitted_fraction: emitted,
                mean_photons: n.iter().sum::<usize>() as f64,
            }
        }
        InputFieldState::Coherent { beta } => {
            let m = coherent_match(beta, &grid, eps, tol.normalization)?;
            let dims = apply_dims(vec![required_dim(m.alpha.norm(), tol.tail_tol)], overrides)?;
            let initial = coherent_state(&mode_label(0), m.alpha, dims[0], tol.tail_tol)?;
            let s = m.synthesis;
            single(s.lambda, dims, initial, s.method, s.cutoff, s.emitted_fraction, m.alpha.norm_sqr())
        }
        InputFieldState::Cat { weights, xi, alphas } => {
            let s = synthesize(&SampledPulse::new(xi.clone(), &grid), eps, tol.normalization)?;
            let need = alphas.iter().map(|a| required_dim(a.norm(), tol.tail_tol)).max().unwrap_or(1);
            let dims = apply_dims(vec![need], overrides)?;
            let initial = cat_state(&mode_label(0), weights, alphas, dims[0], tol.tail_tol)?;
            let mean = alphas.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
            single(s.lambda, dims, initial, s.method, s.cutoff, s.emitted_fraction, mean)
        }
    };
    if out.emitted_fraction < tol.min_emitted_fraction && !matches!(input, InputFieldState::Vacuum) {
        return Err(Error::EmittedFraction {
            cutoff: out.cutoff.unwrap_or(grid.t_end()),
            emitted: out.emitted_fraction,
            minimum: tol.min_emitted_fraction,
        });
    }
    Ok(out)
}

fn operator_norm(x: &CMatrix) -> f64 {
    x.singular_values().max()
}

/// Upper bound on `||L(t)||` over the grid.
fn coupling_bound(g: &SlhModel, cfg: &RunConfig) -> f64 {
    g.coupling_terms()
        .iter()
        .map(|t| {
            let c = (0..=cfg.grid.steps()).map(|i| t.coeff.eval(cfg.grid.time(i)).norm()).fold(0.0, f64::max);
            c * operator_norm(t.op.matrix())
        })
        .sum()
}

/// Trace-distance bound `2 sqrt(n (1 - eta))` between the intended input
/// and the field the modulator actually releases, when the synthesis
/// cutoff falls inside the run.
pub fn cutoff_allowance(m: &SynthesizedModulator, t_end: f64) -> f64 {
    match m.cutoff {
        Some(tc) if tc <= t_end => 2.0 * (m.mean_photons.max(1.0) * (1.0 - m.emitted_fraction).max(0.0)).sqrt(),
        _ => 0.0,
    }
}

/// Pass/fail outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableDeviation {
    pub name: String,
    pub max_abs_deviation: f64,
}

/// Hierarchy vs cascade comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationReport {
    pub input: String,
    /// Named observables plus `rho` (largest entrywise deviation of the
    /// system state, i.e. over a complete operator basis).
    pub observables: Vec<ObservableDeviation>,
    pub output_flux_deviation: f64,
    pub emitted_fraction: f64,
    pub synthesis_method: SynthesisMethod,
    pub cutoff: Option<f64>,
    pub modulator_dims: Vec<usize>,
    /// Integrator tolerance plus the allowance for un-emitted pulse weight.
    pub tolerance: f64,
    pub max_deviation: f64,
    pub verdict: Verdict,
}

/// Both sides of a replication check.
#[derive(Clone, Debug)]
pub struct Replication {
    pub report: ReplicationReport,
    pub hierarchy: SystemTrajectory,
    pub hierarchy_audit: HierarchyAudit,
    pub cascade: CascadeRun,
    pub modulator: SynthesizedModulator,
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Run the hierarchy and the cascade for `input` and compare them on the
/// named observables, the full system state and the output flux.
pub fn replication_check(
    g: &SlhModel,
    input: &InputFieldState,
    psi0: &StateVector,
    cfg: &RunConfig,
    observables: &[(String, CMatrix)],
    overrides: &ModulatorOverrides,
) -> Result<Replication> {
    let modulator = synthesize_modulator(input, cfg, overrides)?;
    let gtilde = build_cascade(g, &modulator.spec, cfg.tolerances.joint_dim_ceiling)?;
    let (hier, casc) = std::thread::scope(|s| {
        let h = s.spawn(|| solve_input(g, input, psi0, cfg));
        let c = integrate_cascade(&gtilde, &modulator.spec.dims, &modulator.spec.initial, psi0, cfg);
        (h.join().expect("hierarchy thread panicked"), c)
    });
    let ((hier, hierarchy_audit), casc) = (hier?, casc?);

    let mut devs = Vec::with_capacity(observables.len() + 1);
    for (name, x) in observables {
        devs.push(ObservableDeviation {
            name: name.clone(),
            max_abs_deviation: max_dev(&hier.expectation(x), &casc.reduced.expectation(x)),
        });
    }
    let rho_dev = hier
        .states
        .iter()
        .zip(&casc.reduced.states)
        .map(|(a, b)| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    devs.push(ObservableDeviation { name: "rho".into(), max_abs_deviation: rho_dev });
    let flux_dev = hier.flux.iter().zip(&casc.reduced.flux).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_deviation = devs.iter().map(|d| d.max_abs_deviation).fold(flux_dev, f64::max);
    let scale = observables
        .iter()
        .map(|(_, x)| operator_norm(x))
        .chain(std::iter::once(coupling_bound(g, cfg).powi(2)))
        .fold(1.0, f64::max);
    let allowance = cutoff_allowance(&modulator, cfg.grid.t_end()) * scale;
    let tolerance = cfg.tolerances.replication + allowance;
    let report = ReplicationReport {
        input: input.kind().into(),
        observables: devs,
        output_flux_deviation: flux_dev,
        emitted_fraction: modulator.emitted_fraction,
        synthesis_method: modulator.method,
        cutoff: modulator.cutoff,
        modulator_dims: modulator.spec.dims.clone(),
        tolerance,
        max_deviation,
        verdict: if max_deviation <= tolerance { Verdict::Pass } else { Verdict::Fail },
    };
    Ok(Replication { report, hierarchy: hier, hierarchy_audit, cascade: casc, modulator })
}

/// `|phi><chi| ⊗ |psi0><psi0|` as a joint density.
pub fn cross_density(phi: &StateVector, chi: &StateVector, psi0: &StateVector) -> Result<CMatrix> {
    let left: CVector = phi.tensor(psi0)?.amplitudes().clone();
    let right: CVector = chi.tensor(psi0)?.amplitudes().clone();
    Ok(&left * right.adjoint())
}
