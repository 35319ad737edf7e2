//! Declarative scenario files: parsing, validation, dispatch and output.
//!
//! A scenario is a JSON document; see `README.md` for the schema. Every
//! field is checked, unknown keys are rejected and errors carry the dotted
//! path of the offending field.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{
    build_cascade, integrate_cascade, replication_check, synthesize_modulator, CascadeAudit, ModulatorOverrides,
    ReplicationReport, SynthesizedModulator, Verdict,
};
use crate::config::{RunConfig, Tolerances};
use crate::grid::TimeGrid;
use crate::hierarchy::{solve_input, HierarchyAudit, InputFieldState, SystemTrajectory};
use crate::operators::{
    mode_annihilator, number_operator, sigma_minus, sigma_plus, sigma_x, sigma_y, sigma_z, HilbertSpace, Operator,
    StateVector,
};
use crate::pulses::{inner, Pulse, PulseSet, SynthesisMethod};
use crate::slh::{Coefficient, SlhModel, Term};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Version of the JSON run report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// A complex number written as `x` or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    pub fn value(self) -> C64 {
        match self {
            Complex::Real(x) => C64::from(x),
            Complex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

impl Default for Complex {
    fn default() -> Self {
        Complex::Real(1.0)
    }
}

/// An operator: a shorthand name (`"sigma_minus"`, `"a:cav"`, ...) or a
/// composite expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OpSpec {
    Named(String),
    Expr(OpExpr),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OpExpr {
    /// Full matrix on the system space, rows of complex entries.
    Matrix(Vec<Vec<Complex>>),
    Product(Vec<OpSpec>),
    Sum(Vec<OpSpec>),
    Adjoint(Box<OpSpec>),
    Scaled {
        factor: Complex,
        op: Box<OpSpec>,
    },
}

/// Pulse presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseSpec {
    ExpDecay {
        gamma: f64,
    },
    Gaussian {
        t0: f64,
        sigma: f64,
    },
    Square {
        #[serde(rename = "T")]
        width: f64,
    },
    /// Two- or three-column CSV `t, re[, im]`, relative to the scenario file.
    Sampled {
        path: String,
    },
    Scaled {
        factor: Complex,
        pulse: Box<PulseSpec>,
    },
    Normalized {
        pulse: Box<PulseSpec>,
    },
    /// Gram–Schmidt against the listed pulses, then normalized.
    Orthogonalized {
        pulse: Box<PulseSpec>,
        against: Vec<PulseSpec>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    #[default]
    Vacuum,
    Coherent {
        beta: PulseSpec,
    },
    Fock {
        n: usize,
        xi: PulseSpec,
    },
    MultiFock {
        n: Vec<usize>,
        xi: Vec<PulseSpec>,
    },
    Cat {
        weights: Vec<Complex>,
        alphas: Vec<Complex>,
        xi: PulseSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub op: OpSpec,
    #[serde(default)]
    pub coeff: Complex,
    /// Makes the coefficient `coeff * pulse(t)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub op: OpSpec,
    #[serde(default = "one")]
    pub coeff: f64,
    /// Makes the coefficient `coeff * Re pulse(t)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub space: Vec<FactorSpec>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub scattering: Option<OpSpec>,
    #[serde(rename = "L", default)]
    pub coupling: Vec<CouplingSpec>,
    #[serde(rename = "H", default)]
    pub hamiltonian: Vec<HamiltonianSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// Basis vector of the full system space.
    Basis(usize),
    Amplitudes(Vec<Complex>),
}

impl Default for InitialStateSpec {
    fn default() -> Self {
        InitialStateSpec::Basis(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub name: String,
    pub op: OpSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Hierarchy,
    Cascade,
    Replicate,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridesSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_floor: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

/// The scenario document as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemSpec,
    #[serde(default)]
    pub initial_state: InitialStateSpec,
    #[serde(default)]
    pub input: InputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulator_overrides: Option<OverridesSpec>,
    pub grid: GridSpec,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub run_mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A validated scenario with its built model, states and operators.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub base_dir: PathBuf,
    pub model: SlhModel,
    pub psi0: StateVector,
    pub input: InputFieldState,
    pub observables: Vec<(String, CMatrix)>,
    pub config: RunConfig,
}

/// Command-line overrides of scenario fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Replication tolerance.
    pub tolerance: Option<f64>,
}

/// Parse and validate a scenario; relative paths resolve against the
/// current directory.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_in(text, Path::new("."))
}

/// Parse and validate a scenario whose relative paths resolve against `base_dir`.
pub fn parse_scenario_in(text: &str, base_dir: &Path) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::scenario(if path == "." { String::from("<document>") } else { path }, e.into_inner().to_string())
    })?;
    Scenario::from_spec(spec, base_dir)
}

/// Read, parse and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario_in(&text, &base)
}

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Error {
    let path = path.into();
    move |e| match e {
        Error::Scenario { .. } => e,
        other => Error::scenario(path, other.to_string()),
    }
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec, base_dir: &Path) -> Result<Self> {
        let grid = TimeGrid::new(spec.grid.t_end, spec.grid.dt).map_err(at("grid"))?;
        if spec.grid.sample_every == 0 {
            return Err(Error::scenario("grid.sample_every", "must be at least 1"));
        }
        let config =
            RunConfig::new(grid).with_sample_every(spec.grid.sample_every).with_tolerances(spec.tolerances.clone());
        let builder = Builder { base_dir, grid };

        let space = HilbertSpace::new(spec.system.space.iter().map(|f| (f.label.clone(), f.dim)))
            .map_err(at("system.space"))?;
        let s = match &spec.system.scattering {
            Some(op) => builder.operator(op, &space, "system.S")?,
            None => Operator::identity(&space),
        };
        let mut coupling = Vec::new();
        for (i, c) in spec.system.coupling.iter().enumerate() {
            let path = format!("system.L[{i}]");
            let op = builder.operator(&c.op, &space, &format!("{path}.op"))?;
            let coeff = match &c.pulse {
                None => Coefficient::from(c.coeff.value()),
                Some(p) => {
                    let pulse = builder.pulse(p, &format!("{path}.pulse"))?.scaled(c.coeff.value());
                    Coefficient::sampled(pulse.sample(&grid))
                }
            };
            coupling.push(Term::new(coeff, op));
        }
        let mut hamiltonian = Vec::new();
        for (i, h) in spec.system.hamiltonian.iter().enumerate() {
            let path = format!("system.H[{i}]");
            let op = builder.operator(&h.op, &space, &format!("{path}.op"))?;
            let coeff = match &h.pulse {
                None => Coefficient::from(h.coeff),
                Some(p) => {
                    let pulse = builder.pulse(p, &format!("{path}.pulse"))?.scaled(C64::from(h.coeff));
                    Coefficient::Re(Box::new(Coefficient::sampled(pulse.sample(&grid))))
                }
            };
            hamiltonian.push(Term::new(coeff, op));
        }
        let model = SlhModel::new(space.clone(), s, coupling, hamiltonian, 1e-10).map_err(at("system"))?;

        let psi0 = match &spec.initial_state {
            InitialStateSpec::Basis(k) => StateVector::basis(&space, *k),
            InitialStateSpec::Amplitudes(a) => {
                StateVector::new(space.clone(), CVector::from_iterator(a.len(), a.iter().map(|c| c.value())))
            }
        }
        .map_err(at("initial_state"))?;
        if !psi0.is_normalized(spec.tolerances.normalization) {
            return Err(Error::scenario("initial_state", format!("state norm {} is not 1", psi0.norm())));
        }

        let input = builder.input(&spec.input, &spec.tolerances)?;

        let mut observables = Vec::with_capacity(spec.observables.len());
        for (i, o) in spec.observables.iter().enumerate() {
            if observables.iter().any(|(n, _): &(String, CMatrix)| n == &o.name) {
                return Err(Error::scenario(format!("observables[{i}].name"), format!("duplicate name `{}`", o.name)));
            }
            let op = builder.operator(&o.op, &space, &format!("observables[{i}].op"))?;
            observables.push((o.name.clone(), op.into_matrix()));
        }

        if let Some(ov) = &spec.modulator_overrides {
            if let Some(eps) = ov.epsilon_floor {
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::scenario(
                        "modulator_overrides.epsilon_floor",
                        format!("{eps} is not in (0, 1)"),
                    ));
                }
            }
            if ov.dims.as_ref().is_some_and(|d| d.contains(&0)) {
                return Err(Error::scenario("modulator_overrides.dims", "dimensions must be positive"));
            }
        }

        Ok(Scenario { spec, base_dir: base_dir.to_path_buf(), model, psi0, input, observables, config })
    }

    /// Re-validate with command-line overrides applied.
    pub fn with_overrides(&self, o: &ScenarioOverrides) -> Result<Scenario> {
        let mut spec = self.spec.clone();
        if let Some(dt) = o.dt {
            spec.grid.dt = dt;
        }
        if let Some(t) = o.t_end {
            spec.grid.t_end = t;
        }
        if let Some(tol) = o.tolerance {
            spec.tolerances.replication = tol;
        }
        Scenario::from_spec(spec, &self.base_dir)
    }

    /// The document form; parsing it again gives an equal scenario.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("scenario spec serializes")
    }

    pub fn modulator_overrides(&self) -> ModulatorOverrides {
        let o = self.spec.modulator_overrides.clone().unwrap_or_default();
        ModulatorOverrides { dims: o.dims, epsilon_floor: o.epsilon_floor }
    }
}

struct Builder<'a> {
    base_dir: &'a Path,
    grid: TimeGrid,
}

fn named_operator(name: &str, space: &HilbertSpace, path: &str) -> Result<Operator> {
    let (base, label) = match name.split_once(':') {
        Some((b, l)) => (b, l.to_string()),
        None => {
            if name == "identity" {
                return Ok(Operator::identity(space));
            }
            if space.factors().len() != 1 {
                return Err(Error::scenario(
                    path,
                    format!("`{name}` needs a factor label (`{name}:<label>`) on a multi-factor space"),
                ));
            }
            (name, space.factors()[0].label.clone())
        }
    };
    let dim = space.factor_dim(&label).map_err(at(path))?;
    let two = |op: fn(&str) -> Result<Operator>| {
        if dim != 2 {
            return Err(Error::scenario(
                path,
                format!("`{base}` needs a two-level factor, `{label}` has dimension {dim}"),
            ));
        }
        op(&label)
    };
    let local = match base {
        "sigma_minus" | "sm" => two(sigma_minus)?,
        "sigma_plus" | "sp" => two(sigma_plus)?,
        "sigma_x" | "sx" => two(sigma_x)?,
        "sigma_y" | "sy" => two(sigma_y)?,
        "sigma_z" | "sz" => two(sigma_z)?,
        "a" => mode_annihilator(&label, dim)?,
        "a_dag" => mode_annihilator(&label, dim)?.adjoint(),
        "n" | "number" => number_operator(&label, dim)?,
        "identity" => Operator::identity(&HilbertSpace::single(&label, dim)?),
        other => return Err(Error::scenario(path, format!("unknown operator name `{other}`"))),
    };
    local.embed(space).map_err(at(path))
}

impl Builder<'_> {
    fn operator(&self, spec: &OpSpec, space: &HilbertSpace, path: &str) -> Result<Operator> {
        match spec {
            OpSpec::Named(name) => named_operator(name, space, path),
            OpSpec::Expr(OpExpr::Matrix(rows)) => {
                let d = space.dim();
                if rows.len() != d {
                    return Err(Error::scenario(
                        path,
                        format!("matrix has {} rows, system dimension is {d}", rows.len()),
                    ));
                }
                if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
                    return Err(Error::scenario(
                        format!("{path}.matrix[{i}]"),
                        format!("row has {} entries, expected {d}", r.len()),
                    ));
                }
                Operator::new(space.clone(), CMatrix::from_fn(d, d, |i, j| rows[i][j].value())).map_err(at(path))
            }
            OpSpec::Expr(OpExpr::Product(items)) => self.fold(items, space, path, "product", |a, b| a.mul(b)),
            OpSpec::Expr(OpExpr::Sum(items)) => self.fold(items, space, path, "sum", |a, b| a.add(b)),
            OpSpec::Expr(OpExpr::Adjoint(op)) => Ok(self.operator(op, space, &format!("{path}.adjoint"))?.adjoint()),
            OpSpec::Expr(OpExpr::Scaled { factor, op }) => {
                Ok(self.operator(op, space, &format!("{path}.scaled.op"))?.scale(factor.value()))
            }
        }
    }

    fn fold(
        &self,
        items: &[OpSpec],
        space: &HilbertSpace,
        path: &str,
        key: &str,
        f: impl Fn(&Operator, &Operator) -> Result<Operator>,
    ) -> Result<Operator> {
        if items.is_empty() {
            return Err(Error::scenario(path, format!("empty {key}")));
        }
        let mut acc = self.operator(&items[0], space, &format!("{path}.{key}[0]"))?;
        for (i, item) in items.iter().enumerate().skip(1) {
            acc = f(&acc, &self.operator(item, space, &format!("{path}.{key}[{i}]"))?)?;
        }
        Ok(acc)
    }

    fn pulse(&self, spec: &PulseSpec, path: &str) -> Result<Pulse> {
        match spec {
            PulseSpec::ExpDecay { gamma } => Pulse::exp_decay(*gamma),
            PulseSpec::Gaussian { t0, sigma } => Pulse::gaussian(*t0, *sigma),
            PulseSpec::Square { width } => Pulse::square(*width),
            PulseSpec::Sampled { path: file } => self.sampled(file, path),
            PulseSpec::Scaled { factor, pulse } => {
                Ok(self.pulse(pulse, &format!("{path}.pulse"))?.scaled(factor.value()))
            }
            PulseSpec::Normalized { pulse } => self.pulse(pulse, &format!("{path}.pulse"))?.normalized(),
            PulseSpec::Orthogonalized { pulse, against } => {
                let base = self.pulse(pulse, &format!("{path}.pulse"))?;
                let others = against
                    .iter()
                    .enumerate()
                    .map(|(i, p)| self.pulse(p, &format!("{path}.against[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                base.orthogonalized(&others)
            }
        }
        .map_err(at(path))
    }

    fn sampled(&self, file: &str, path: &str) -> Result<Pulse> {
        let full = self.base_dir.join(file);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(&full)
            .map_err(|e| Error::scenario(path, format!("{}: {e}", full.display())))?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::scenario(path, format!("{}: {e}", full.display())))?;
            let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let nums = match nums {
                Ok(n) => n,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::scenario(path, format!("{} row {}: {e}", full.display(), row + 1))),
            };
            match nums.as_slice() {
                [t, re] => {
                    times.push(*t);
                    values.push(C64::new(*re, 0.0));
                }
                [t, re, im] => {
                    times.push(*t);
                    values.push(C64::new(*re, *im));
                }
                _ => {
                    return Err(Error::scenario(
                        path,
                        format!("{} row {}: expected 2 or 3 columns", full.display(), row + 1),
                    ))
                }
            }
        }
        Pulse::sampled(times, values)
    }

    fn normalized_pulse(&self, spec: &PulseSpec, path: &str, tol: &Tolerances) -> Result<Pulse> {
        let p = self.pulse(spec, path)?;
        let norm_sq = p.norm_sq();
        if (norm_sq - 1.0).abs() > tol.normalization {
            return Err(Error::scenario(
                path,
                format!("pulse is not normalized: norm {:.6} (squared norm {norm_sq:.6})", norm_sq.sqrt()),
            ));
        }
        Ok(p)
    }

    fn input(&self, spec: &InputSpec, tol: &Tolerances) -> Result<InputFieldState> {
        Ok(match spec {
            InputSpec::Vacuum => InputFieldState::Vacuum,
            InputSpec::Coherent { beta } => {
                let beta = self.pulse(beta, "input.beta")?;
                if !(beta.norm() > 0.0) {
                    return Err(Error::scenario("input.beta", "coherent amplitude pulse is zero"));
                }
                InputFieldState::Coherent { beta }
            }
            InputSpec::Fock { n, xi } => {
                InputFieldState::Fock { n: *n, xi: self.normalized_pulse(xi, "input.xi", tol)? }
            }
            InputSpec::MultiFock { n, xi } => {
                if n.len() != xi.len() || n.is_empty() {
                    return Err(Error::scenario("input", format!("{} occupations for {} pulses", n.len(), xi.len())));
                }
                let pulses = xi
                    .iter()
                    .enumerate()
                    .map(|(k, p)| self.normalized_pulse(p, &format!("input.xi[{k}]"), tol))
                    .collect::<Result<Vec<_>>>()?;
                for j in 0..pulses.len() {
                    for k in j + 1..pulses.len() {
                        let ov = inner(&pulses[j], &pulses[k]).norm();
                        if ov > tol.orthogonality {
                            return Err(Error::scenario("input.xi", format!("pulses {j} and {k} overlap by {ov:e}")));
                        }
                    }
                }
                PulseSet::new(self.grid, pulses.clone()).check_orthogonal(tol.orthogonality).map_err(at("input.xi"))?;
                InputFieldState::MultiFock { n: n.clone(), xi: pulses }
            }
            InputSpec::Cat { weights, alphas, xi } => {
                let xi = self.normalized_pulse(xi, "input.xi", tol)?;
                InputFieldState::cat_from_amplitudes(
                    weights.iter().map(|c| c.value()).collect(),
                    xi,
                    alphas.iter().map(|c| c.value()).collect(),
                )
                .map_err(at("input"))?
            }
        })
    }
}

/// Time series of complex expectations, one column per observable.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// `values[k][i]`: observable `k` at time `i`.
    pub values: Vec<Vec<C64>>,
}

impl Table {
    fn from_trajectory(traj: &SystemTrajectory, observables: &[(String, CMatrix)]) -> Self {
        Table {
            names: observables.iter().map(|(n, _)| n.clone()).collect(),
            times: traj.times.clone(),
            values: observables.iter().map(|(_, x)| traj.expectation(x)).collect(),
        }
    }

    /// CSV text: `t`, then `re(<name>)`, `im(<name>)` per observable, with
    /// 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for n in &self.names {
            let _ = write!(out, ",re({n}),im({n})");
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:.16e}");
            for col in &self.values {
                let _ = write!(out, ",{:.16e},{:.16e}", col[i].re, col[i].im);
            }
            out.push('\n');
        }
        out
    }
}

/// Summary of the synthesized modulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisReport {
    pub method: SynthesisMethod,
    pub cutoff: Option<f64>,
    pub emitted_fraction: f64,
    pub modulator_dims: Vec<usize>,
}

impl From<&SynthesizedModulator> for SynthesisReport {
    fn from(m: &SynthesizedModulator) -> Self {
        SynthesisReport {
            method: m.method,
            cutoff: m.cutoff,
            emitted_fraction: m.emitted_fraction,
            modulator_dims: m.spec.dims.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditReport {
    pub hierarchy: Option<HierarchyAudit>,
    pub cascade: Option<CascadeAudit>,
    /// Human-readable list of violated invariants; empty when all hold.
    pub violations: Vec<String>,
}

impl AuditReport {
    fn check(&mut self, tol: &Tolerances) {
        if let Some(h) = &self.hierarchy {
            if h.trace_law > tol.trace_law {
                self.violations.push(format!("hierarchy trace law {:e} > {:e}", h.trace_law, tol.trace_law));
            }
            if h.hermitian_pairing > tol.hermitian_pairing {
                self.violations
                    .push(format!("hermitian pairing {:e} > {:e}", h.hermitian_pairing, tol.hermitian_pairing));
            }
            if h.min_eigenvalue < -tol.positivity {
                self.violations
                    .push(format!("physical state eigenvalue {:e} < {:e}", h.min_eigenvalue, -tol.positivity));
            }
        }
        if let Some(c) = &self.cascade {
            if c.trace_drift_per_time > tol.joint_trace_drift_per_time {
                self.violations.push(format!(
                    "joint trace drift {:e} per unit time > {:e}",
                    c.trace_drift_per_time, tol.joint_trace_drift_per_time
                ));
            }
            if c.min_eigenvalue < -tol.positivity {
                self.violations.push(format!("joint state eigenvalue {:e} < {:e}", c.min_eigenvalue, -tol.positivity));
            }
            if c.excitation_increase > tol.excitation_increase {
                self.violations.push(format!(
                    "modulator excitation increased by {:e} > {:e}",
                    c.excitation_increase, tol.excitation_increase
                ));
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Overall outcome of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    InvariantViolation,
    ReplicationFailure,
}

impl RunStatus {
    /// Process exit code: 0 pass, 3 invariant violation, 4 replication failure.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Pass => 0,
            RunStatus::InvariantViolation => 3,
            RunStatus::ReplicationFailure => 4,
        }
    }
}

/// The JSON run report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: Option<String>,
    pub run_mode: RunMode,
    pub input: String,
    pub grid: GridSpec,
    pub samples: usize,
    pub observables: Vec<String>,
    /// Output photon flux at the stored times (hierarchy side in replicate mode).
    pub output_flux: Vec<f64>,
    pub audit: AuditReport,
    pub synthesis: Option<SynthesisReport>,
    pub replication: Option<ReplicationReport>,
    pub status: RunStatus,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Parse a report and check its schema version.
pub fn validate_report(text: &str) -> Result<RunReport> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let r: RunReport = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::scenario(e.path().to_string(), e.into_inner().to_string()))?;
    if r.schema_version != SCHEMA_VERSION {
        return Err(Error::scenario("schema_version", format!("unsupported version {}", r.schema_version)));
    }
    if r.output_flux.len() != r.samples {
        return Err(Error::scenario(
            "output_flux",
            format!("{} values for {} samples", r.output_flux.len(), r.samples),
        ));
    }
    Ok(r)
}

/// Tables and report of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    /// Hierarchy side, or the cascade marginal in cascade mode.
    pub table: Table,
    /// Cascade marginal in replicate mode.
    pub cascade_table: Option<Table>,
    pub report: RunReport,
}

impl RunResult {
    pub fn status(&self) -> RunStatus {
        self.report.status
    }
}

/// Run a validated scenario.
pub fn run(scenario: &Scenario) -> Result<RunResult> {
    let g = &scenario.model;
    let cfg = &scenario.config;
    let obs = &scenario.observables;
    let tol = &cfg.tolerances;
    let mut audit = AuditReport::default();
    let mut synthesis = None;
    let mut replication = None;
    let mut cascade_table = None;
    let (table, flux) = match scenario.spec.run_mode {
        RunMode::Hierarchy => {
            let (traj, a) = solve_input(g, &scenario.input, &scenario.psi0, cfg)?;
            audit.hierarchy = Some(a);
            (Table::from_trajectory(&traj, obs), traj.flux)
        }
        RunMode::Cascade => {
            let m = synthesize_modulator(&scenario.input, cfg, &scenario.modulator_overrides())?;
            let gt = build_cascade(g, &m.spec, tol.joint_dim_ceiling)?;
            let run = integrate_cascade(&gt, &m.spec.dims, &m.spec.initial, &scenario.psi0, cfg)?;
            audit.cascade = Some(run.audit.clone());
            synthesis = Some(SynthesisReport::from(&m));
            (Table::from_trajectory(&run.reduced, obs), run.reduced.flux)
        }
        RunMode::Replicate => {
            let r = replication_check(g, &scenario.input, &scenario.psi0, cfg, obs, &scenario.modulator_overrides())?;
            audit.hierarchy = Some(r.hierarchy_audit.clone());
            audit.cascade = Some(r.cascade.audit.clone());
            synthesis = Some(SynthesisReport::from(&r.modulator));
            cascade_table = Some(Table::from_trajectory(&r.cascade.reduced, obs));
            replication = Some(r.report);
            (Table::from_trajectory(&r.hierarchy, obs), r.hierarchy.flux)
        }
    };
    audit.check(tol);
    let status = if !audit.passed() {
        RunStatus::InvariantViolation
    } else if replication.as_ref().is_some_and(|r| r.verdict == Verdict::Fail) {
        RunStatus::ReplicationFailure
    } else {
        RunStatus::Pass
    };
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        name: scenario.spec.name.clone(),
        run_mode: scenario.spec.run_mode,
        input: scenario.input.kind().into(),
        grid: scenario.spec.grid.clone(),
        samples: table.times.len(),
        observables: table.names.clone(),
        output_flux: flux,
        audit,
        synthesis,
        replication,
        status,
    };
    Ok(RunResult { table, cascade_table, report })
}

/// Where [`emit`] writes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub report: PathBuf,
}

impl OutputPaths {
    /// Paths from the scenario's `output` block, or `<stem>.csv` and
    /// `<stem>.json`; `out_dir` (when given) replaces the directory part.
    pub fn resolve(scenario: &Scenario, stem: &str, out_dir: Option<&Path>) -> Self {
        let out = scenario.spec.output.clone().unwrap_or_default();
        let pick = |given: Option<String>, ext: &str| -> PathBuf {
            let name = given.map(PathBuf::from).unwrap_or_else(|| PathBuf::from(format!("{stem}.{ext}")));
            match out_dir {
                Some(d) => d.join(name.file_name().unwrap_or(name.as_os_str())),
                None if name.is_relative() => scenario.base_dir.join(name),
                None => name,
            }
        };
        OutputPaths { csv: pick(out.csv, "csv"), report: pick(out.report, "report.json") }
    }

    /// Path of the cascade-side table in replicate mode.
    pub fn cascade_csv(&self) -> PathBuf {
        self.csv.with_extension("cascade.csv")
    }
}

/// Write the CSV table(s) and the JSON report.
pub fn emit(result: &RunResult, paths: &OutputPaths) -> Result<()> {
    for p in [&paths.csv, &paths.report] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&paths.csv, result.table.to_csv())?;
    if let Some(c) = &result.cascade_table {
        std::fs::write(paths.cascade_csv(), c.to_csv())?;
    }
    std::fs::write(&paths.report, result.report.to_json())?;
    Ok(())
}
