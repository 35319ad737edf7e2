//! Numerical tolerances and resource ceilings, kept in one place.

use serde::{Deserialize, Serialize};

/// Every tolerance and ceiling used by the library and the scenario runner.
///
/// Scenario files may override any subset of these under `tolerances`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Poisson weight allowed beyond the top level of a truncated coherent
    /// or cat state.
    pub tail_tol: f64,
    /// Coupling synthesis stops where the remaining pulse weight `w(t)`
    /// drops below this floor.
    pub epsilon_floor: f64,
    /// Maximum allowed deviation between hierarchy and cascade.
    pub replication: f64,
    /// Allowed `| ||xi||^2 - 1 |` for pulses that must be normalized.
    pub normalization: f64,
    /// Allowed `|<xi_j, xi_k>|` for pulse sets that must be orthogonal.
    pub orthogonality: f64,
    /// Allowed `|tr rho^(m,n) - delta_mn|`.
    pub trace_law: f64,
    /// Allowed `|| rho^(m,n) - rho^(n,m)^dag ||_max`.
    pub hermitian_pairing: f64,
    /// Most negative eigenvalue tolerated in a physical density matrix.
    pub positivity: f64,
    /// Allowed joint-state trace drift per unit time.
    pub joint_trace_drift_per_time: f64,
    /// Allowed increase of total modulator excitation between samples.
    pub excitation_increase: f64,
    /// Trace drift at which an integration is aborted as unstable.
    pub instability_drift: f64,
    /// Minimum pulse weight the synthesized coupling must release.
    pub min_emitted_fraction: f64,
    /// Maximum number of hierarchy blocks.
    pub block_ceiling: usize,
    /// Maximum joint (modulator x system) dimension.
    pub joint_dim_ceiling: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tail_tol: 1e-10,
            epsilon_floor: 1e-6,
            replication: 1e-5,
            normalization: 1e-6,
            orthogonality: 1e-6,
            trace_law: 1e-8,
            hermitian_pairing: 1e-10,
            positivity: 1e-8,
            joint_trace_drift_per_time: 1e-10,
            excitation_increase: 1e-8,
            instability_drift: 1e-3,
            min_emitted_fraction: 0.99,
            block_ceiling: 4096,
            joint_dim_ceiling: 4096,
        }
    }
}

/// Grid, output sampling and tolerances for one integration run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: crate::grid::TimeGrid,
    /// Store every `sample_every`-th full step.
    pub sample_every: usize,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn new(grid: crate::grid::TimeGrid) -> Self {
        Self { grid, sample_every: 1, tolerances: Tolerances::default() }
    }

    pub fn with_sample_every(mut self, every: usize) -> Self {
        self.sample_every = every.max(1);
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub(crate) fn is_sample(&self, step: usize) -> bool {
        step.is_multiple_of(self.sample_every)
    }
}
