//! Direct integration of the matrix-element hierarchies for Fock,
//! multimode Fock, coherent and cat-state inputs, in the Schrödinger
//! picture on the system space alone.
//!
//! A block `rho^(m,n)` satisfies `tr[rho^(m,n) X] = <m| X(t) |n>` for the
//! field occupations `m`, `n`. Each block obeys
//!
//! ```text
//! d rho^(m,n) = L00† rho^(m,n)
//!     + sum_k sqrt(m_k) xi_k^* L10† rho^(m-e_k, n)
//!     + sum_j sqrt(n_j) xi_j   L01† rho^(m, n-e_j)
//!     + sum_kj sqrt(m_k n_j) xi_k^* xi_j L11† rho^(m-e_k, n-e_j)
//! ```
//!
//! with `rho^(m,n)(0) = delta_mn |psi0><psi0|`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::grid::Samples;
use crate::integrate::rk4;
use crate::operators::{HilbertSpace, Operator, StateVector};
use crate::pulses::{inner, Pulse, PulseSet, SampledPulse};
use crate::slh::{series_product, Coefficient, EvansHudsonIndex, FrozenGenerator, SlhModel, Term};
use crate::{CMatrix, Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Pair of occupation vectors labelling a hierarchy block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct OccupationPair {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

impl OccupationPair {
    pub fn new(left: Vec<usize>, right: Vec<usize>) -> Self {
        Self { left, right }
    }

    pub fn diagonal(n: Vec<usize>) -> Self {
        Self { left: n.clone(), right: n }
    }
}

/// Mixed-radix enumeration of occupation vectors `0 <= m_k <= n_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockIndexer {
    top: Vec<usize>,
    count: usize,
}

impl BlockIndexer {
    pub fn new(top: Vec<usize>) -> Self {
        let count = top.iter().map(|n| n + 1).product();
        Self { top, count }
    }

    pub fn top(&self) -> &[usize] {
        &self.top
    }

    pub fn modes(&self) -> usize {
        self.top.len()
    }

    /// Number of occupation vectors.
    pub fn occupations(&self) -> usize {
        self.count
    }

    /// Number of blocks, `prod (n_k + 1)^2`.
    pub fn num_blocks(&self) -> usize {
        self.count * self.count
    }

    pub fn occ_index(&self, occ: &[usize]) -> Option<usize> {
        if occ.len() != self.top.len() || occ.iter().zip(&self.top).any(|(m, n)| m > n) {
            return None;
        }
        Some(occ.iter().zip(&self.top).fold(0, |acc, (m, n)| acc * (n + 1) + m))
    }

    pub fn occupation(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.top.len()];
        for (slot, n) in out.iter_mut().zip(&self.top).rev() {
            *slot = idx % (n + 1);
            idx /= n + 1;
        }
        out
    }

    pub fn block_index(&self, pair: &OccupationPair) -> Option<usize> {
        Some(self.occ_index(&pair.left)? * self.count + self.occ_index(&pair.right)?)
    }

    pub fn pair(&self, block: usize) -> OccupationPair {
        OccupationPair::new(self.occupation(block / self.count), self.occupation(block % self.count))
    }

    /// Index of `occ - e_k`, if that component is positive.
    fn lowered(&self, occ_idx: usize, occ: &[usize], k: usize) -> Option<usize> {
        if occ[k] == 0 {
            return None;
        }
        let stride: usize = self.top[k + 1..].iter().map(|n| n + 1).product();
        Some(occ_idx - stride)
    }

    fn physical_block(&self) -> usize {
        self.count * self.count - 1
    }
}

/// All hierarchy blocks at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchySnapshot {
    pub time: f64,
    indexer: Arc<BlockIndexer>,
    blocks: Vec<CMatrix>,
}

impl HierarchySnapshot {
    /// `rho^(m,n) = delta_mn |psi0><psi0|`.
    pub fn initial(indexer: Arc<BlockIndexer>, psi0: &StateVector) -> Self {
        let rho = psi0.to_density().into_matrix();
        let d = rho.nrows();
        let blocks = (0..indexer.num_blocks())
            .map(|b| {
                if b / indexer.occupations() == b % indexer.occupations() {
                    rho.clone()
                } else {
                    CMatrix::zeros(d, d)
                }
            })
            .collect();
        Self { time: 0.0, indexer, blocks }
    }

    pub fn from_blocks(time: f64, indexer: Arc<BlockIndexer>, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != indexer.num_blocks() {
            return Err(Error::DimensionMismatch {
                context: "hierarchy block count".into(),
                expected: indexer.num_blocks(),
                found: blocks.len(),
            });
        }
        Ok(Self { time, indexer, blocks })
    }

    pub fn indexer(&self) -> &BlockIndexer {
        &self.indexer
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn get(&self, pair: &OccupationPair) -> Result<&CMatrix> {
        self.indexer
            .block_index(pair)
            .map(|b| &self.blocks[b])
            .ok_or_else(|| Error::MissingBlock(format!("{:?}|{:?}", pair.left, pair.right)))
    }

    /// The block `(n, n)` for the top occupation `n`.
    pub fn physical(&self) -> &CMatrix {
        &self.blocks[self.indexer.physical_block()]
    }
}

/// Right-hand side of the hierarchy for one set of pulse values.
fn hierarchy_rhs(gen: &FrozenGenerator, indexer: &BlockIndexer, xi: &[C64], blocks: &[CMatrix]) -> Vec<CMatrix> {
    let count = indexer.occupations();
    let d = blocks[0].nrows();
    let occs: Vec<Vec<usize>> = (0..count).map(|i| indexer.occupation(i)).collect();
    let mut out = Vec::with_capacity(blocks.len());
    for b in 0..blocks.len() {
        let (li, ri) = (b / count, b % count);
        let (m, n) = (&occs[li], &occs[ri]);
        let mut acc = CMatrix::zeros(d, d);
        gen.l00_adj_acc(&blocks[b], ONE, &mut acc);
        for k in 0..indexer.modes() {
            let Some(lk) = indexer.lowered(li, m, k) else { continue };
            let c = xi[k].conj() * (m[k] as f64).sqrt();
            if c != ZERO {
                gen.l10_adj_acc(&blocks[lk * count + ri], c, &mut acc);
            }
        }
        for j in 0..indexer.modes() {
            let Some(rj) = indexer.lowered(ri, n, j) else { continue };
            let c = xi[j] * (n[j] as f64).sqrt();
            if c != ZERO {
                gen.l01_adj_acc(&blocks[li * count + rj], c, &mut acc);
            }
        }
        for k in 0..indexer.modes() {
            let Some(lk) = indexer.lowered(li, m, k) else { continue };
            for j in 0..indexer.modes() {
                let Some(rj) = indexer.lowered(ri, n, j) else { continue };
                let c = xi[k].conj() * xi[j] * ((m[k] * n[j]) as f64).sqrt();
                if c != ZERO {
                    gen.l11_adj_acc(&blocks[lk * count + rj], c, &mut acc);
                }
            }
        }
        out.push(acc);
    }
    out
}

/// Time derivative of every block of a single-mode Fock hierarchy at
/// `snapshot.time`, for the pulse value `xi_value`.
pub fn fock_hierarchy_step(g: &SlhModel, xi_value: C64, snapshot: &HierarchySnapshot) -> Result<Vec<CMatrix>> {
    multifock_hierarchy_step(g, &[xi_value], snapshot)
}

/// Multimode version of [`fock_hierarchy_step`].
pub fn multifock_hierarchy_step(g: &SlhModel, xi_values: &[C64], snapshot: &HierarchySnapshot) -> Result<Vec<CMatrix>> {
    if xi_values.len() != snapshot.indexer.modes() {
        return Err(Error::DimensionMismatch {
            context: "pulse values vs hierarchy modes".into(),
            expected: snapshot.indexer.modes(),
            found: xi_values.len(),
        });
    }
    check_block_dims(g, &snapshot.blocks)?;
    let gen = g.compile().at(snapshot.time);
    Ok(hierarchy_rhs(&gen, &snapshot.indexer, xi_values, &snapshot.blocks))
}

fn check_block_dims(g: &SlhModel, blocks: &[CMatrix]) -> Result<()> {
    for b in blocks {
        if b.nrows() != g.dim() || b.ncols() != g.dim() {
            return Err(Error::DimensionMismatch {
                context: "hierarchy block".into(),
                expected: g.dim(),
                found: b.nrows(),
            });
        }
    }
    Ok(())
}

fn check_state(g: &SlhModel, psi0: &StateVector, tol: f64) -> Result<()> {
    if psi0.space() != g.space() {
        return Err(Error::SpaceMismatch(format!("initial state on {} for system on {}", psi0.space(), g.space())));
    }
    if !psi0.is_normalized(tol) {
        return Err(Error::NotNormalized { what: "psi0".into(), norm: psi0.norm(), norm_sq: psi0.norm().powi(2) });
    }
    Ok(())
}

fn instability(time: f64, drift: f64, cfg: &RunConfig) -> Error {
    let limit = cfg.tolerances.instability_drift;
    Error::IntegratorInstability {
        time,
        drift,
        limit,
        suggested_dt: 0.5 * cfg.grid.dt() * (limit / drift).powf(0.25).min(1.0),
    }
}

/// Stored samples of a hierarchy integration.
#[derive(Clone, Debug)]
pub struct HierarchyRun {
    pub indexer: Arc<BlockIndexer>,
    pub snapshots: Vec<HierarchySnapshot>,
    /// Pulse values at the stored times, one row per snapshot.
    pub xi_values: Vec<Vec<C64>>,
}

/// Invariant audit of a hierarchy run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HierarchyAudit {
    /// Largest `|tr rho^(m,n) - delta_mn|`.
    pub trace_law: f64,
    /// Largest `|| rho^(m,n) - rho^(n,m)^dag ||_max`.
    pub hermitian_pairing: f64,
    /// Smallest eigenvalue of the physical block.
    pub min_eigenvalue: f64,
}

impl HierarchyRun {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// `tr[rho^(m,n)(t) X]` at every stored time; defaults to the physical block.
    pub fn expectation(&self, x: &CMatrix, pair: Option<&OccupationPair>) -> Result<Vec<C64>> {
        let b = match pair {
            Some(p) => {
                self.indexer.block_index(p).ok_or_else(|| Error::MissingBlock(format!("{:?}|{:?}", p.left, p.right)))?
            }
            None => self.indexer.physical_block(),
        };
        Ok(self.snapshots.iter().map(|s| (&s.blocks[b] * x).trace()).collect())
    }

    pub fn audit(&self) -> HierarchyAudit {
        let count = self.indexer.occupations();
        let mut audit = HierarchyAudit { min_eigenvalue: f64::INFINITY, ..Default::default() };
        for s in &self.snapshots {
            for (b, blk) in s.blocks.iter().enumerate() {
                let (l, r) = (b / count, b % count);
                let target = if l == r { ONE } else { ZERO };
                audit.trace_law = audit.trace_law.max((blk.trace() - target).norm());
                let partner = &s.blocks[r * count + l];
                let dev = blk.iter().zip(partner.adjoint().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                audit.hermitian_pairing = audit.hermitian_pairing.max(dev);
            }
            audit.min_eigenvalue = audit.min_eigenvalue.min(min_eigenvalue(s.physical()));
        }
        audit
    }

    /// Physical system states with the output photon flux.
    pub fn physical_trajectory(&self, g: &SlhModel) -> SystemTrajectory {
        let compiled_s = g.scattering().matrix().clone();
        let top = self.indexer.top().to_vec();
        let count = self.indexer.occupations();
        let top_idx = count - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut flux = Vec::new();
        for (s, xi) in self.snapshots.iter().zip(&self.xi_values) {
            let l = g.coupling_at(s.time);
            let ldl = l.adjoint() * &l;
            let sdl = compiled_s.adjoint() * &l;
            let lds = sdl.adjoint();
            let blk = |li: usize, ri: usize| &s.blocks[li * count + ri];
            let mut f = (blk(top_idx, top_idx) * &ldl).trace();
            for k in 0..top.len() {
                let Some(lk) = self.indexer.lowered(top_idx, &top, k) else { continue };
                let nk = (top[k] as f64).sqrt();
                f += xi[k].conj() * nk * (blk(lk, top_idx) * &sdl).trace();
                f += xi[k] * nk * (blk(top_idx, lk) * &lds).trace();
                for j in 0..top.len() {
                    let Some(lj) = self.indexer.lowered(top_idx, &top, j) else { continue };
                    let nj = (top[j] as f64).sqrt();
                    f += xi[k].conj() * xi[j] * nk * nj * blk(lk, lj).trace();
                }
            }
            times.push(s.time);
            states.push(s.physical().clone());
            flux.push(f.re);
        }
        SystemTrajectory { times, states, flux }
    }
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()) * C64::from(0.5);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// System density matrices and output flux at the stored times.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub flux: Vec<f64>,
}

impl SystemTrajectory {
    pub fn expectation(&self, x: &CMatrix) -> Vec<C64> {
        self.states.iter().map(|r| (r * x).trace()).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.states.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn max_trace_error(&self) -> f64 {
        self.states.iter().map(|r| (r.trace() - ONE).norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise `|rho - rho^dag|`.
    pub fn max_hermiticity_error(&self) -> f64 {
        self.states
            .iter()
            .map(|r| r.iter().zip(r.adjoint().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Audit of the physical state only.
    pub fn audit(&self) -> HierarchyAudit {
        HierarchyAudit {
            trace_law: self.max_trace_error(),
            hermitian_pairing: self.max_hermiticity_error(),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }
}

/// Integrate a hierarchy with explicit per-mode pulse samples.
fn integrate_blocks(
    g: &SlhModel,
    top: Vec<usize>,
    xi: &[Samples],
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<HierarchyRun> {
    check_state(g, psi0, cfg.tolerances.normalization)?;
    let indexer = Arc::new(BlockIndexer::new(top));
    if indexer.num_blocks() > cfg.tolerances.block_ceiling {
        return Err(Error::BlockCeiling { blocks: indexer.num_blocks(), ceiling: cfg.tolerances.block_ceiling });
    }
    let compiled = g.compile();
    let grid = cfg.grid;
    let init = HierarchySnapshot::initial(indexer.clone(), psi0);
    let phys = indexer.physical_block();
    let mut snapshots = Vec::new();
    let mut xi_values = Vec::new();
    let values = |j: usize| -> Vec<C64> { xi.iter().map(|s| s.get(j)).collect() };
    rk4(
        &grid,
        init.blocks,
        |j, y| {
            let gen = compiled.at(grid.half_time(j));
            Ok(hierarchy_rhs(&gen, &indexer, &values(j), y))
        },
        |i, y| {
            let t = grid.time(i);
            let drift = (y[phys].trace() - ONE).norm();
            if !(drift <= cfg.tolerances.instability_drift) {
                return Err(instability(t, drift, cfg));
            }
            if cfg.is_sample(i) {
                snapshots.push(HierarchySnapshot { time: t, indexer: indexer.clone(), blocks: y.clone() });
                xi_values.push(values(2 * i));
            }
            Ok(())
        },
    )?;
    Ok(HierarchyRun { indexer, snapshots, xi_values })
}

/// Plain Lindblad evolution of `rho0` under `g` (vacuum input).
pub fn integrate_lindblad(g: &SlhModel, rho0: &CMatrix, cfg: &RunConfig) -> Result<SystemTrajectory> {
    let compiled = g.compile();
    let grid = cfg.grid;
    let mut out = SystemTrajectory { times: Vec::new(), states: Vec::new(), flux: Vec::new() };
    rk4(
        &grid,
        vec![rho0.clone()],
        |j, y| {
            let gen = compiled.at(grid.half_time(j));
            let mut acc = CMatrix::zeros(y[0].nrows(), y[0].ncols());
            gen.l00_adj_acc(&y[0], ONE, &mut acc);
            Ok(vec![acc])
        },
        |i, y| {
            let t = grid.time(i);
            let drift = (y[0].trace() - rho0.trace()).norm();
            if !(drift <= cfg.tolerances.instability_drift) {
                return Err(instability(t, drift, cfg));
            }
            if cfg.is_sample(i) {
                let l = g.coupling_at(t);
                out.times.push(t);
                out.flux.push((&y[0] * l.adjoint() * &l).trace().re);
                out.states.push(y[0].clone());
            }
            Ok(())
        },
    )?;
    Ok(out)
}

/// Single-mode Fock input `n` photons in the normalized pulse `xi`.
pub fn integrate_fock(g: &SlhModel, n: usize, xi: &Pulse, psi0: &StateVector, cfg: &RunConfig) -> Result<HierarchyRun> {
    let sp = SampledPulse::new(xi.clone(), &cfg.grid);
    check_pulse_norm(&sp, "xi", cfg)?;
    integrate_blocks(g, vec![n], &[sp.samples], psi0, cfg)
}

fn check_pulse_norm(p: &SampledPulse, what: &str, cfg: &RunConfig) -> Result<()> {
    if (p.norm_sq - 1.0).abs() > cfg.tolerances.normalization {
        return Err(Error::NotNormalized { what: what.into(), norm: p.norm_sq.sqrt(), norm_sq: p.norm_sq });
    }
    Ok(())
}

/// Multimode Fock input `|n_1, ..., n_N>` over orthonormal pulses.
pub fn integrate_multifock(
    g: &SlhModel,
    n: &[usize],
    xi: &[Pulse],
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<HierarchyRun> {
    if n.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            context: "occupations vs pulses".into(),
            expected: n.len(),
            found: xi.len(),
        });
    }
    if n.iter().sum::<usize>() == 0 {
        return Err(Error::invalid("multimode Fock input needs at least one photon"));
    }
    let set = PulseSet::new(cfg.grid, xi.to_vec());
    set.check_normalized(cfg.tolerances.normalization)?;
    set.check_orthogonal(cfg.tolerances.orthogonality)?;
    let samples: Vec<Samples> = set.pulses().iter().map(|p| p.samples.clone()).collect();
    integrate_blocks(g, n.to_vec(), &samples, psi0, cfg)
}

/// `G ◁ (I, beta(t), 0)` with a one-dimensional field factor: the model
/// `(S, L + beta S, H + Im{beta L^dag S})`.
pub fn coherent_driven_model(g: &SlhModel, beta: &Samples) -> Result<SlhModel> {
    let field = HilbertSpace::single("coherent_field", 1)?;
    let drive = SlhModel::new(
        field.clone(),
        Operator::identity(&field),
        vec![Term::new(Coefficient::sampled(beta.clone()), Operator::identity(&field))],
        vec![],
        1e-12,
    )?;
    series_product(g, &drive)
}

/// Vacuum Lindblad evolution of the coherently driven model.
pub fn coherent_reference(g: &SlhModel, beta: &Pulse, psi0: &StateVector, cfg: &RunConfig) -> Result<SystemTrajectory> {
    check_state(g, psi0, cfg.tolerances.normalization)?;
    let model = coherent_driven_model(g, &beta.sample(&cfg.grid))?;
    let rho0 = psi0.to_density().into_matrix();
    integrate_lindblad(&model, &rho0, cfg)
}

/// Cross element `rho^(k,l)` for coherent amplitudes `beta_left`, `beta_right`:
/// `d rho = L00† rho + beta_l^* L10† rho + beta_r L01† rho + beta_l^* beta_r L11† rho`.
pub fn coherent_cross_term(
    g: &SlhModel,
    beta_left: &Samples,
    beta_right: &Samples,
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<SystemTrajectory> {
    check_state(g, psi0, cfg.tolerances.normalization)?;
    let compiled = g.compile();
    let grid = cfg.grid;
    let rho0 = psi0.to_density().into_matrix();
    let mut out = SystemTrajectory { times: Vec::new(), states: Vec::new(), flux: Vec::new() };
    let s = g.scattering().matrix().clone();
    rk4(
        &grid,
        rho0,
        |j, y| {
            let gen = compiled.at(grid.half_time(j));
            let (bl, br) = (beta_left.get(j).conj(), beta_right.get(j));
            let mut acc = CMatrix::zeros(y.nrows(), y.ncols());
            gen.apply(EvansHudsonIndex::L00, y, ONE, &mut acc);
            gen.apply(EvansHudsonIndex::L10, y, bl, &mut acc);
            gen.apply(EvansHudsonIndex::L01, y, br, &mut acc);
            gen.apply(EvansHudsonIndex::L11, y, bl * br, &mut acc);
            Ok(acc)
        },
        |i, y| {
            if cfg.is_sample(i) {
                let t = grid.time(i);
                let l = g.coupling_at(t);
                let left = &l + &s * beta_left.get(2 * i);
                let right = &l + &s * beta_right.get(2 * i);
                out.times.push(t);
                out.flux.push((y * left.adjoint() * right).trace().re);
                out.states.push(y.clone());
            }
            Ok(())
        },
    )?;
    Ok(out)
}

/// Normalized coherent-state overlap `<alpha|beta>`.
pub fn coherent_overlap(alpha: C64, beta: C64) -> C64 {
    (-0.5 * alpha.norm_sqr() - 0.5 * beta.norm_sqr() + alpha.conj() * beta).exp()
}

/// Input field states.
#[derive(Clone, Debug, PartialEq)]
pub enum InputFieldState {
    Vacuum,
    /// Coherent state with amplitude pulse `beta(t)`.
    Coherent {
        beta: Pulse,
    },
    /// `n` photons in the normalized pulse `xi`.
    Fock {
        n: usize,
        xi: Pulse,
    },
    /// `n_k` photons in each of the orthonormal pulses `xi_k`.
    MultiFock {
        n: Vec<usize>,
        xi: Vec<Pulse>,
    },
    /// `sum_k w_k |alpha_k xi>` with normalized coherent branches; weights
    /// are normalized so that the state has unit norm.
    Cat {
        weights: Vec<C64>,
        xi: Pulse,
        alphas: Vec<C64>,
    },
}

impl InputFieldState {
    /// Builds a cat input from branch pulses `beta_k`, which must all be
    /// multiples of one common pulse.
    pub fn cat(weights: Vec<C64>, betas: Vec<Pulse>) -> Result<Self> {
        if weights.len() != betas.len() || weights.is_empty() {
            return Err(Error::invalid("cat input needs one weight per branch and at least one branch"));
        }
        let norms: Vec<f64> = betas.iter().map(|b| b.norm()).collect();
        let (ref_idx, ref_norm) =
            norms.iter().copied().enumerate().fold((0, 0.0), |best, (i, n)| if n > best.1 { (i, n) } else { best });
        if !(ref_norm > 0.0) {
            return Err(Error::ZeroNorm("all cat branches are zero".into()));
        }
        let xi = betas[ref_idx].clone().scaled(C64::from(1.0 / ref_norm));
        let mut alphas = Vec::with_capacity(betas.len());
        for (index, b) in betas.iter().enumerate() {
            let a = inner(&xi, b);
            let residual = (norms[index].powi(2) - a.norm_sqr()).max(0.0).sqrt() / ref_norm;
            if residual > 1e-6 {
                return Err(Error::NotProportional { index, residual });
            }
            alphas.push(a);
        }
        Self::cat_from_amplitudes(weights, xi, alphas)
    }

    /// Cat input from a normalized common pulse and branch amplitudes.
    pub fn cat_from_amplitudes(weights: Vec<C64>, xi: Pulse, alphas: Vec<C64>) -> Result<Self> {
        if weights.len() != alphas.len() || weights.is_empty() {
            return Err(Error::invalid("cat input needs one weight per branch and at least one branch"));
        }
        let mut norm_sq = ZERO;
        for (wk, ak) in weights.iter().zip(&alphas) {
            for (wl, al) in weights.iter().zip(&alphas) {
                norm_sq += wk.conj() * wl * coherent_overlap(*ak, *al);
            }
        }
        if !(norm_sq.re > 1e-24) {
            return Err(Error::ZeroNorm(format!("cat superposition cancels (squared norm {:e})", norm_sq.re)));
        }
        let scale = 1.0 / norm_sq.re.sqrt();
        Ok(InputFieldState::Cat { weights: weights.iter().map(|w| w * scale).collect(), xi, alphas })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InputFieldState::Vacuum => "vacuum",
            InputFieldState::Coherent { .. } => "coherent",
            InputFieldState::Fock { .. } => "fock",
            InputFieldState::MultiFock { .. } => "multi_fock",
            InputFieldState::Cat { .. } => "cat",
        }
    }
}

/// Physical state of a system driven by a cat input, assembled from the
/// cross terms `rho^(k,l)` weighted by `w_k^* w_l <alpha_k|alpha_l>`.
pub fn cat_hierarchy(
    g: &SlhModel,
    weights: &[C64],
    xi: &Pulse,
    alphas: &[C64],
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<SystemTrajectory> {
    let xs = SampledPulse::new(xi.clone(), &cfg.grid);
    check_pulse_norm(&xs, "xi", cfg)?;
    let branches: Vec<Samples> = alphas.iter().map(|a| xs.samples.map(|v| v * a)).collect();
    let mut total = SystemTrajectory { times: Vec::new(), states: Vec::new(), flux: Vec::new() };
    for (k, (wk, ak)) in weights.iter().zip(alphas).enumerate() {
        for (l, (wl, al)) in weights.iter().zip(alphas).enumerate() {
            let c = wk.conj() * wl * coherent_overlap(*ak, *al);
            if c == ZERO {
                continue;
            }
            let cross = coherent_cross_term(g, &branches[k], &branches[l], psi0, cfg)?;
            let cf = cross_flux(g, &cross, &branches[k], &branches[l], cfg);
            if total.states.is_empty() {
                let d = g.dim();
                total.times = cross.times.clone();
                total.states = vec![CMatrix::zeros(d, d); cross.times.len()];
                total.flux = vec![0.0; cross.times.len()];
            }
            for (acc, s) in total.states.iter_mut().zip(&cross.states) {
                crate::kernels::axpy(acc, c, s);
            }
            for (f, s) in total.flux.iter_mut().zip(cf) {
                *f += (c * s).re;
            }
        }
    }
    if total.states.is_empty() {
        return Err(Error::ZeroNorm("cat input has no nonzero branch".into()));
    }
    Ok(total)
}

/// Complex `tr[rho^(k,l) (L + beta_k S)^dag (L + beta_l S)]` for a cross term.
fn cross_flux(g: &SlhModel, cross: &SystemTrajectory, bl: &Samples, br: &Samples, cfg: &RunConfig) -> Vec<C64> {
    let s = g.scattering().matrix();
    cross
        .times
        .iter()
        .zip(&cross.states)
        .map(|(&t, rho)| {
            let j = (t / cfg.grid.half_dt()).round() as usize;
            let l = g.coupling_at(t);
            let left = &l + s * bl.get(j);
            let right = &l + s * br.get(j);
            (rho * left.adjoint() * right).trace()
        })
        .collect()
}

/// Physical trajectory for any input, computed on the hierarchy side.
pub fn integrate_input(
    g: &SlhModel,
    input: &InputFieldState,
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<SystemTrajectory> {
    Ok(solve_input(g, input, psi0, cfg)?.0)
}

/// [`integrate_input`] together with its invariant audit: over all blocks
/// for Fock hierarchies, over the physical state otherwise.
pub fn solve_input(
    g: &SlhModel,
    input: &InputFieldState,
    psi0: &StateVector,
    cfg: &RunConfig,
) -> Result<(SystemTrajectory, HierarchyAudit)> {
    let physical = |t: SystemTrajectory| {
        let a = t.audit();
        (t, a)
    };
    let blocks = |run: HierarchyRun| (run.physical_trajectory(g), run.audit());
    Ok(match input {
        InputFieldState::Vacuum => {
            check_state(g, psi0, cfg.tolerances.normalization)?;
            physical(integrate_lindblad(g, &psi0.to_density().into_matrix(), cfg)?)
        }
        InputFieldState::Coherent { beta } => physical(coherent_reference(g, beta, psi0, cfg)?),
        InputFieldState::Fock { n, xi } => blocks(integrate_fock(g, *n, xi, psi0, cfg)?),
        InputFieldState::MultiFock { n, xi } => blocks(integrate_multifock(g, n, xi, psi0, cfg)?),
        InputFieldState::Cat { weights, xi, alphas } => physical(cat_hierarchy(g, weights, xi, alphas, psi0, cfg)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::operators::{mode_annihilator, sigma_minus};
    use crate::slh::{evans_hudson_matrix, re_part};
    use crate::CVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn atom(gamma: f64) -> SlhModel {
        let l = sigma_minus("atom").unwrap().scale(C64::from(gamma.sqrt()));
        let space = l.space().clone();
        SlhModel::new(space.clone(), Operator::identity(&space), vec![Term::new(1.0, l)], vec![], 1e-12).unwrap()
    }

    fn cavity(kappa: f64, dim: usize) -> SlhModel {
        let a = mode_annihilator("cav", dim).unwrap();
        let space = a.space().clone();
        SlhModel::new(space.clone(), Operator::identity(&space), vec![Term::new(kappa.sqrt(), a)], vec![], 1e-12)
            .unwrap()
    }

    fn ground(space: &HilbertSpace, idx: usize) -> StateVector {
        StateVector::basis(space, idx).unwrap()
    }

    fn cfg(t_end: f64, dt: f64) -> RunConfig {
        RunConfig::new(TimeGrid::new(t_end, dt).unwrap())
    }

    fn rmat(rng: &mut impl Rng, d: usize) -> CMatrix {
        CMatrix::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn indexer_layout() {
        let ix = BlockIndexer::new(vec![2, 1]);
        assert_eq!(ix.occupations(), 6);
        assert_eq!(ix.num_blocks(), 36);
        assert_eq!(ix.pair(ix.num_blocks() - 1), OccupationPair::diagonal(vec![2, 1]));
        for b in 0..ix.num_blocks() {
            assert_eq!(ix.block_index(&ix.pair(b)), Some(b));
        }
        assert_eq!(ix.occ_index(&[3, 0]), None);
    }

    #[test]
    fn zero_photons_is_lindblad() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 0);
        let c = cfg(2.0, 0.01);
        let run = integrate_fock(&g, 0, &Pulse::exp_decay(1.0).unwrap(), &psi0, &c).unwrap();
        let lind = integrate_lindblad(&g, &psi0.to_density().into_matrix(), &c).unwrap();
        let phys = run.physical_trajectory(&g);
        assert_eq!(phys.states, lind.states);
        assert_eq!(phys.flux, lind.flux);
    }

    #[test]
    fn single_photon_excitation_matches_closed_form() {
        let (kappa, gamma) = (1.0, 2.0);
        let g = atom(kappa);
        let psi0 = ground(g.space(), 1);
        let c = cfg(8.0, 0.005);
        let run = integrate_fock(&g, 1, &Pulse::exp_decay(gamma).unwrap(), &psi0, &c).unwrap();
        let phys = run.physical_trajectory(&g);
        let pe = CMatrix::from_fn(2, 2, |i, j| if i == 0 && j == 0 { ONE } else { ZERO });
        for (t, v) in phys.times.iter().zip(phys.expectation(&pe)) {
            let amp = 2.0 * (kappa * gamma as f64).sqrt() / (kappa - gamma)
                * ((-gamma * t / 2.0).exp() - (-kappa * t / 2.0).exp());
            assert!((v.re - amp * amp).abs() < 1e-9, "t={t}: {} vs {}", v.re, amp * amp);
        }
        let audit = run.audit();
        assert!(audit.trace_law < 1e-8 && audit.hermitian_pairing < 1e-12 && audit.min_eigenvalue > -1e-8, "{audit:?}");
    }

    #[test]
    fn decoupled_system_keeps_its_state() {
        let space = HilbertSpace::single("q", 2).unwrap();
        let g = SlhModel::trivial(&space);
        let psi0 =
            StateVector::new(space.clone(), CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)])).unwrap();
        let run = integrate_fock(&g, 2, &Pulse::gaussian(2.0, 0.5).unwrap(), &psi0, &cfg(4.0, 0.02)).unwrap();
        let rho0 = psi0.to_density().into_matrix();
        for s in &run.snapshots {
            assert!((s.physical() - &rho0).norm() < 1e-12);
        }
    }

    #[test]
    fn step_is_dual_to_heisenberg_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 3;
        let space = HilbertSpace::single("s", d).unwrap();
        let s = rmat(&mut rng, d).qr().q();
        let l = rmat(&mut rng, d);
        let h = re_part(&rmat(&mut rng, d));
        let g = SlhModel::new(
            space.clone(),
            Operator::new(space.clone(), s.clone()).unwrap(),
            vec![Term::new(1.0, Operator::new(space.clone(), l.clone()).unwrap())],
            vec![Term::new(1.0, Operator::new(space.clone(), h.clone()).unwrap())],
            1e-10,
        )
        .unwrap();
        let ix = Arc::new(BlockIndexer::new(vec![2]));
        let blocks: Vec<CMatrix> = (0..ix.num_blocks()).map(|_| rmat(&mut rng, d)).collect();
        let snap = HierarchySnapshot::from_blocks(0.0, ix.clone(), blocks.clone()).unwrap();
        let xi = C64::new(0.7, -0.3);
        let step = fock_hierarchy_step(&g, xi, &snap).unwrap();
        let x = rmat(&mut rng, d);
        let eh = |idx| evans_hudson_matrix(idx, &s, &l, &h, &x);
        let pair = |a: &CMatrix, b: &CMatrix| (a * b).trace();
        for m in 0..3usize {
            for n in 0..3usize {
                let blk = |i: usize, j: usize| &blocks[i * 3 + j];
                let mut want = pair(&eh(EvansHudsonIndex::L00), blk(m, n));
                if m > 0 {
                    want += xi.conj() * (m as f64).sqrt() * pair(&eh(EvansHudsonIndex::L10), blk(m - 1, n));
                }
                if n > 0 {
                    want += xi * (n as f64).sqrt() * pair(&eh(EvansHudsonIndex::L01), blk(m, n - 1));
                }
                if m > 0 && n > 0 {
                    want +=
                        xi.norm_sqr() * ((m * n) as f64).sqrt() * pair(&eh(EvansHudsonIndex::L11), blk(m - 1, n - 1));
                }
                let got = pair(&x, &step[m * 3 + n]);
                assert!((got - want).norm() < 1e-10, "({m},{n}) {got} vs {want}");
            }
        }
    }

    #[test]
    fn inert_mode_reduces_to_single_mode() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 1);
        let c = cfg(6.0, 0.01);
        let xi0 = Pulse::exp_decay(1.0).unwrap();
        let xi1 = Pulse::gaussian(3.0, 0.7).unwrap().orthogonalized(&[xi0.clone()]).unwrap();
        let single = integrate_fock(&g, 1, &xi0, &psi0, &c).unwrap().physical_trajectory(&g);
        let multi = integrate_multifock(&g, &[1, 0], &[xi0, xi1], &psi0, &c).unwrap().physical_trajectory(&g);
        for (a, b) in single.states.iter().zip(&multi.states) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn multifock_rejects_non_orthogonal_pulses() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 1);
        let xi = Pulse::exp_decay(1.0).unwrap();
        let err = integrate_multifock(&g, &[1, 1], &[xi.clone(), xi], &psi0, &cfg(1.0, 0.1)).unwrap_err();
        assert!(matches!(err, Error::NotOrthogonal { .. }), "{err}");
    }

    #[test]
    fn fock_rejects_unnormalized_pulse() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 1);
        let xi = Pulse::exp_decay(1.0).unwrap().scaled(C64::from(2.0));
        let err = integrate_fock(&g, 1, &xi, &psi0, &cfg(1.0, 0.1)).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }), "{err}");
    }

    /// Cavity amplitude `u(t)` driven by a unit-amplitude pulse, by RK4 on a fine grid.
    fn cavity_response(kappa: f64, xi: &Pulse, t_end: f64, dt: f64) -> Vec<C64> {
        let n = (t_end / dt).round() as usize;
        let f = |t: f64, u: C64| -0.5 * kappa * u - kappa.sqrt() * xi.eval(t);
        let mut u = ZERO;
        let mut out = vec![u];
        for i in 0..n {
            let t = i as f64 * dt;
            let k1 = f(t, u);
            let k2 = f(t + dt / 2.0, u + k1 * (dt / 2.0));
            let k3 = f(t + dt / 2.0, u + k2 * (dt / 2.0));
            let k4 = f(t + dt, u + k3 * dt);
            u += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
            out.push(u);
        }
        out
    }

    #[test]
    fn coherent_drive_of_cavity_is_linear_response() {
        let (kappa, dim) = (1.0, 14);
        let g = cavity(kappa, dim);
        let psi0 = ground(g.space(), 0);
        let beta = Pulse::gaussian(2.0, 0.6).unwrap().scaled(C64::new(0.8, 0.6));
        let c = cfg(5.0, 0.01);
        let traj = coherent_reference(&g, &beta, &psi0, &c).unwrap();
        let u = cavity_response(kappa, &Pulse::gaussian(2.0, 0.6).unwrap(), 5.0, 0.01);
        let a = mode_annihilator("cav", dim).unwrap().into_matrix();
        for (i, v) in traj.expectation(&a).iter().enumerate() {
            assert!((v - C64::new(0.8, 0.6) * u[i]).norm() < 1e-8, "{v} vs {}", u[i]);
        }
        let empty = coherent_reference(&g, &Pulse::exp_decay(1.0).unwrap().scaled(ZERO), &psi0, &c).unwrap();
        assert!(empty.states.iter().all(|s| (s - psi0.to_density().matrix()).norm() == 0.0));
    }

    #[test]
    fn cat_of_cavity_matches_branch_sum() {
        let (kappa, dim) = (1.0, 16);
        let g = cavity(kappa, dim);
        let psi0 = ground(g.space(), 0);
        let xi = Pulse::exp_decay(2.0).unwrap();
        let alphas = vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)];
        let input = InputFieldState::cat_from_amplitudes(vec![ONE, ONE], xi.clone(), alphas.clone()).unwrap();
        let c = cfg(5.0, 0.01);
        let traj = integrate_input(&g, &input, &psi0, &c).unwrap();
        let InputFieldState::Cat { weights, .. } = &input else { unreachable!() };
        let u = cavity_response(kappa, &xi, 5.0, 0.01);
        let a = mode_annihilator("cav", dim).unwrap().into_matrix();
        for (i, v) in traj.expectation(&a).iter().enumerate() {
            let mut want = ZERO;
            for (wk, ak) in weights.iter().zip(&alphas) {
                for (wl, al) in weights.iter().zip(&alphas) {
                    want += wk.conj() * wl * coherent_overlap(*ak, *al) * al * u[i];
                }
            }
            assert!((v - want).norm() < 1e-8, "{v} vs {want}");
        }
        assert!(traj.max_trace_error() < 1e-8);
        assert!(traj.min_eigenvalue() > -1e-8);
    }

    #[test]
    fn single_branch_cat_is_coherent() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 1);
        let xi = Pulse::exp_decay(1.0).unwrap();
        let alpha = C64::new(0.5, 0.9);
        let c = cfg(3.0, 0.01);
        let cat = integrate_input(
            &g,
            &InputFieldState::cat_from_amplitudes(vec![C64::new(0.0, 2.0)], xi.clone(), vec![alpha]).unwrap(),
            &psi0,
            &c,
        )
        .unwrap();
        let coh = coherent_reference(&g, &xi.scaled(alpha), &psi0, &c).unwrap();
        for (a, b) in cat.states.iter().zip(&coh.states) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in cat.flux.iter().zip(&coh.flux) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cat_factoring() {
        let xi = Pulse::exp_decay(1.0).unwrap();
        let input = InputFieldState::cat(
            vec![ONE, ONE],
            vec![xi.clone().scaled(C64::from(2.0)), xi.clone().scaled(C64::from(-2.0))],
        )
        .unwrap();
        let InputFieldState::Cat { alphas, .. } = &input else { unreachable!() };
        assert!((alphas[0] - C64::from(2.0)).norm() < 1e-8 && (alphas[1] + C64::from(2.0)).norm() < 1e-8);
        let bad = InputFieldState::cat(vec![ONE, ONE], vec![xi, Pulse::square(1.0).unwrap()]);
        assert!(matches!(bad, Err(Error::NotProportional { index: 1, .. })));
    }

    #[test]
    fn physical_flux_of_fock_is_photon_count() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 1);
        let c = cfg(30.0, 0.01);
        let phys = integrate_fock(&g, 1, &Pulse::exp_decay(1.5).unwrap(), &psi0, &c).unwrap().physical_trajectory(&g);
        let h = 0.01;
        let total: f64 = crate::grid::trapezoid(&phys.flux, h);
        // Trapezoid quadrature error is ~ h^2 |flux'(0)| / 12.
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn block_ceiling_is_enforced() {
        let g = atom(1.0);
        let psi0 = ground(g.space(), 1);
        let mut c = cfg(1.0, 0.1);
        c.tolerances.block_ceiling = 8;
        let err = integrate_fock(&g, 3, &Pulse::exp_decay(1.0).unwrap(), &psi0, &c).unwrap_err();
        assert!(matches!(err, Error::BlockCeiling { blocks: 16, ceiling: 8 }));
    }
}
