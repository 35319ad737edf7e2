//! SLH models, the series product, Evans–Hudson superoperators and Lindblad
//! generators with time-dependent scalar coefficients.

use std::fmt;
use std::sync::Arc;

use crate::grid::Samples;
use crate::kernels::{axpy, Csr};
use crate::operators::{HilbertSpace, Operator};
use crate::{CMatrix, Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Scalar function of time multiplying a fixed operator.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Const(C64),
    Sampled(Arc<Samples>),
    Conj(Box<Coefficient>),
    Product(Box<Coefficient>, Box<Coefficient>),
    /// Real part, as a complex number with zero imaginary part.
    Re(Box<Coefficient>),
    /// Imaginary part, as a complex number with zero imaginary part.
    Im(Box<Coefficient>),
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> C64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Sampled(s) => s.eval(t),
            Coefficient::Conj(c) => c.eval(t).conj(),
            Coefficient::Product(a, b) => a.eval(t) * b.eval(t),
            Coefficient::Re(c) => C64::from(c.eval(t).re),
            Coefficient::Im(c) => C64::from(c.eval(t).im),
        }
    }

    pub fn sampled(s: Samples) -> Self {
        Coefficient::Sampled(Arc::new(s))
    }

    fn is_const_zero(&self) -> bool {
        matches!(self, Coefficient::Const(c) if *c == ZERO)
    }

    fn conj(&self) -> Self {
        match self {
            Coefficient::Const(c) => Coefficient::Const(c.conj()),
            other => Coefficient::Conj(Box::new(other.clone())),
        }
    }

    fn times(&self, other: &Coefficient) -> Self {
        match (self, other) {
            (Coefficient::Const(a), Coefficient::Const(b)) => Coefficient::Const(a * b),
            (Coefficient::Const(a), b) | (b, Coefficient::Const(a)) if *a == ONE => b.clone(),
            (a, b) => Coefficient::Product(Box::new(a.clone()), Box::new(b.clone())),
        }
    }

    fn re(&self) -> Self {
        match self {
            Coefficient::Const(c) => Coefficient::Const(C64::from(c.re)),
            other => Coefficient::Re(Box::new(other.clone())),
        }
    }

    fn im(&self) -> Self {
        match self {
            Coefficient::Const(c) => Coefficient::Const(C64::from(c.im)),
            other => Coefficient::Im(Box::new(other.clone())),
        }
    }
}

impl From<C64> for Coefficient {
    fn from(c: C64) -> Self {
        Coefficient::Const(c)
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Const(C64::from(c))
    }
}

/// `coeff(t) * op`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: Coefficient,
    pub op: Operator,
}

impl Term {
    pub fn new(coeff: impl Into<Coefficient>, op: Operator) -> Self {
        Self { coeff: coeff.into(), op }
    }
}

/// A single-input-channel open system `(S, L(t), H(t))`.
///
/// `L(t) = sum_i c_i(t) L_i` and `H(t) = sum_k h_k(t) H_k` with real `h_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlhModel {
    space: HilbertSpace,
    scattering: Operator,
    coupling: Vec<Term>,
    hamiltonian: Vec<Term>,
}

impl SlhModel {
    /// Validates spaces, unitarity of `S` and hermiticity of each `H_k`.
    pub fn new(
        space: HilbertSpace,
        scattering: Operator,
        coupling: Vec<Term>,
        hamiltonian: Vec<Term>,
        tol: f64,
    ) -> Result<Self> {
        let check_space = |op: &Operator, what: &str| {
            if op.space() != &space {
                Err(Error::SpaceMismatch(format!("{what} acts on {}, model on {space}", op.space())))
            } else {
                Ok(())
            }
        };
        check_space(&scattering, "S")?;
        let dev = scattering.unitarity_error();
        if dev > tol {
            return Err(Error::Property { what: "S".into(), property: "unitary", tol, deviation: dev });
        }
        for (k, t) in coupling.iter().enumerate() {
            check_space(&t.op, &format!("L term {k}"))?;
        }
        for (k, t) in hamiltonian.iter().enumerate() {
            check_space(&t.op, &format!("H term {k}"))?;
            let dev = t.op.hermiticity_error();
            if dev > tol {
                return Err(Error::Property {
                    what: format!("H term {k}"),
                    property: "hermitian",
                    tol,
                    deviation: dev,
                });
            }
            if let Coefficient::Const(c) = t.coeff {
                if c.im.abs() > tol {
                    return Err(Error::invalid(format!("H term {k} has a non-real coefficient {c}")));
                }
            }
        }
        let keep = |t: &Term| !t.coeff.is_const_zero();
        Ok(Self {
            space,
            scattering,
            coupling: coupling.into_iter().filter(keep).collect(),
            hamiltonian: hamiltonian.into_iter().filter(keep).collect(),
        })
    }

    /// `(I, 0, 0)`.
    pub fn trivial(space: &HilbertSpace) -> Self {
        Self {
            space: space.clone(),
            scattering: Operator::identity(space),
            coupling: Vec::new(),
            hamiltonian: Vec::new(),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn scattering(&self) -> &Operator {
        &self.scattering
    }

    pub fn coupling_terms(&self) -> &[Term] {
        &self.coupling
    }

    pub fn hamiltonian_terms(&self) -> &[Term] {
        &self.hamiltonian
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn coupling_at(&self, t: f64) -> CMatrix {
        let d = self.dim();
        self.coupling.iter().fold(CMatrix::zeros(d, d), |acc, term| acc + term.op.matrix() * term.coeff.eval(t))
    }

    pub fn hamiltonian_at(&self, t: f64) -> CMatrix {
        let d = self.dim();
        self.hamiltonian
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, term| acc + term.op.matrix() * C64::from(term.coeff.eval(t).re))
    }

    fn scattering_is_identity(&self) -> bool {
        let d = self.dim();
        self.scattering.matrix() == &CMatrix::identity(d, d)
    }

    /// Same model with every operator embedded into `target` (identity on
    /// the added factors).
    pub fn embed(&self, target: &HilbertSpace) -> Result<Self> {
        let emb = |terms: &[Term]| -> Result<Vec<Term>> {
            terms.iter().map(|t| Ok(Term { coeff: t.coeff.clone(), op: t.op.embed(target)? })).collect()
        };
        Ok(Self {
            space: target.clone(),
            scattering: self.scattering.embed(target)?,
            coupling: emb(&self.coupling)?,
            hamiltonian: emb(&self.hamiltonian)?,
        })
    }

    pub(crate) fn compile(&self) -> CompiledModel {
        CompiledModel::new(self)
    }
}

impl fmt::Display for SlhModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SLH on {} ({} L terms, {} H terms)", self.space, self.coupling.len(), self.hamiltonian.len())
    }
}

/// `Im{X} = (X - X^dag) / 2i`.
pub fn im_part(x: &CMatrix) -> CMatrix {
    (x - x.adjoint()) * (-0.5 * I)
}

/// `Re{X} = (X + X^dag) / 2`.
pub fn re_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()) * C64::from(0.5)
}

/// Hamiltonian terms for `Im{c(t) X}` with real coefficients:
/// `Re(c) Im{X} + Im(c) Re{X}`.
fn im_terms(c: &Coefficient, x: &Operator) -> Vec<Term> {
    let space = x.space().clone();
    let mut out = Vec::new();
    let a = Operator::new(space.clone(), im_part(x.matrix())).expect("same space");
    let b = Operator::new(space, re_part(x.matrix())).expect("same space");
    let (cr, ci) = (c.re(), c.im());
    if !cr.is_const_zero() && a.matrix().iter().any(|z| *z != ZERO) {
        out.push(Term { coeff: cr, op: a });
    }
    if !ci.is_const_zero() && b.matrix().iter().any(|z| *z != ZERO) {
        out.push(Term { coeff: ci, op: b });
    }
    out
}

/// `G ◁ M` on `space(M) ⊗ space(G)`:
/// `(I ⊗ S, I ⊗ L + L_M ⊗ S, I ⊗ H + H_M ⊗ I + Im{L_M ⊗ L^dag S})`.
///
/// The upstream model `M` must have identity scattering.
pub fn series_product(g: &SlhModel, m: &SlhModel) -> Result<SlhModel> {
    let joint = m.space.concat(&g.space)?;
    if !m.scattering_is_identity() {
        return Err(Error::Unsupported("series product with non-identity upstream scattering".into()));
    }
    let id_m = Operator::identity(&m.space);
    let id_g = Operator::identity(&g.space);
    let s = &g.scattering;

    let mut coupling = Vec::new();
    for t in &g.coupling {
        coupling.push(Term { coeff: t.coeff.clone(), op: id_m.tensor(&t.op)? });
    }
    for t in &m.coupling {
        coupling.push(Term { coeff: t.coeff.clone(), op: t.op.tensor(s)? });
    }

    let mut hamiltonian = Vec::new();
    for t in &g.hamiltonian {
        hamiltonian.push(Term { coeff: t.coeff.clone(), op: id_m.tensor(&t.op)? });
    }
    for t in &m.hamiltonian {
        hamiltonian.push(Term { coeff: t.coeff.clone(), op: t.op.tensor(&id_g)? });
    }
    for tm in &m.coupling {
        for tg in &g.coupling {
            let ldag_s = tg.op.adjoint().mul(s)?;
            let x = tm.op.tensor(&ldag_s)?;
            hamiltonian.extend(im_terms(&tm.coeff.times(&tg.coeff.conj()), &x));
        }
    }
    Ok(SlhModel { space: joint, scattering: id_m.tensor(s)?, coupling, hamiltonian })
}

/// Index `(mu, nu)` of an Evans–Hudson generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvansHudsonIndex {
    /// `dt` term.
    L00,
    /// `dB^dag` term.
    L10,
    /// `dB` term.
    L01,
    /// `dΛ` term.
    L11,
}

impl EvansHudsonIndex {
    pub const ALL: [EvansHudsonIndex; 4] = [Self::L00, Self::L10, Self::L01, Self::L11];

    pub fn from_pair(mu: u8, nu: u8) -> Result<Self> {
        match (mu, nu) {
            (0, 0) => Ok(Self::L00),
            (1, 0) => Ok(Self::L10),
            (0, 1) => Ok(Self::L01),
            (1, 1) => Ok(Self::L11),
            _ => Err(Error::invalid(format!("Evans–Hudson index ({mu},{nu}) not in {{0,1}}²"))),
        }
    }

    pub fn pair(self) -> (u8, u8) {
        match self {
            Self::L00 => (0, 0),
            Self::L10 => (1, 0),
            Self::L01 => (0, 1),
            Self::L11 => (1, 1),
        }
    }
}

/// Heisenberg-picture Evans–Hudson generator applied to `x`.
pub fn evans_hudson_matrix(idx: EvansHudsonIndex, s: &CMatrix, l: &CMatrix, h: &CMatrix, x: &CMatrix) -> CMatrix {
    let ld = l.adjoint();
    match idx {
        EvansHudsonIndex::L00 => {
            let xl = x * l - l * x;
            let ldx = &ld * x - x * &ld;
            (&ld * xl) * C64::from(0.5) + (ldx * l) * C64::from(0.5) - (x * h - h * x) * I
        }
        EvansHudsonIndex::L10 => s.adjoint() * (x * l - l * x),
        EvansHudsonIndex::L01 => (&ld * x - x * &ld) * s,
        EvansHudsonIndex::L11 => s.adjoint() * x * s - x,
    }
}

/// Trace-adjoint (Schrödinger picture) of [`evans_hudson_matrix`], so that
/// `tr[adj(rho) X] = tr[rho eh(X)]`.
pub fn evans_hudson_adjoint_matrix(
    idx: EvansHudsonIndex,
    s: &CMatrix,
    l: &CMatrix,
    h: &CMatrix,
    rho: &CMatrix,
) -> CMatrix {
    let ld = l.adjoint();
    let sd = s.adjoint();
    match idx {
        EvansHudsonIndex::L00 => {
            let ldl = &ld * l;
            -(h * rho - rho * h) * I + l * rho * &ld - (&ldl * rho + rho * &ldl) * C64::from(0.5)
        }
        EvansHudsonIndex::L10 => l * rho * &sd - rho * &sd * l,
        EvansHudsonIndex::L01 => s * rho * &ld - &ld * s * rho,
        EvansHudsonIndex::L11 => s * rho * &sd - rho,
    }
}

type Action = dyn Fn(&CMatrix) -> CMatrix + Send + Sync;

/// A linear map on operators of a fixed space, applied lazily.
#[derive(Clone)]
pub struct Superoperator {
    space: HilbertSpace,
    action: Arc<Action>,
}

impl fmt::Debug for Superoperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Superoperator on {}", self.space)
    }
}

impl Superoperator {
    pub fn new(space: HilbertSpace, action: impl Fn(&CMatrix) -> CMatrix + Send + Sync + 'static) -> Self {
        Self { space, action: Arc::new(action) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn apply(&self, x: &Operator) -> Result<Operator> {
        if x.space() != &self.space {
            return Err(Error::SpaceMismatch(format!(
                "superoperator on {} applied to operator on {}",
                self.space,
                x.space()
            )));
        }
        Operator::new(self.space.clone(), (self.action)(x.matrix()))
    }

    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        (self.action)(x)
    }

    /// Dense `d² × d²` matrix acting on column-stacked operators.
    pub fn materialize(&self) -> CMatrix {
        let d = self.space.dim();
        let mut out = CMatrix::zeros(d * d, d * d);
        for c in 0..d {
            for r in 0..d {
                let mut e = CMatrix::zeros(d, d);
                e[(r, c)] = ONE;
                let y = (self.action)(&e);
                out.column_mut(c * d + r).copy_from_slice(y.as_slice());
            }
        }
        out
    }
}

/// Evans–Hudson generator of `g` at time `t`.
pub fn evans_hudson(g: &SlhModel, idx: EvansHudsonIndex, t: f64) -> Superoperator {
    let (s, l, h) = (g.scattering.matrix().clone(), g.coupling_at(t), g.hamiltonian_at(t));
    Superoperator::new(g.space.clone(), move |x| evans_hudson_matrix(idx, &s, &l, &h, x))
}

/// Schrödinger-picture Lindblad generator of `g` at time `t`.
pub fn lindblad_generator(g: &SlhModel, t: f64) -> Superoperator {
    let (s, l, h) = (g.scattering.matrix().clone(), g.coupling_at(t), g.hamiltonian_at(t));
    Superoperator::new(g.space.clone(), move |rho| evans_hudson_adjoint_matrix(EvansHudsonIndex::L00, &s, &l, &h, rho))
}

/// Heisenberg generator of the cascade `G ◁ M` in factorized form:
/// `A ⊗ X ↦ L_M(A) ⊗ X + sum_{mu,nu} (L_M^dag)^mu A (L_M)^nu ⊗ L_{mu nu} X`.
///
/// `M` must be of oscillator form: identity scattering and coupling terms
/// that only lower (strictly upper-triangular matrices).
pub fn cascaded_lindbladian(m: &SlhModel, g: &SlhModel, t: f64) -> Result<Superoperator> {
    if !m.scattering_is_identity() {
        return Err(Error::NotOscillatorModulator("scattering is not the identity".into()));
    }
    for (k, term) in m.coupling.iter().enumerate() {
        let op = term.op.matrix();
        let lowering = (0..op.nrows()).all(|r| (0..=r).all(|c| op[(r, c)] == ZERO));
        if !lowering {
            return Err(Error::NotOscillatorModulator(format!("coupling term {k} is not a lowering operator")));
        }
    }
    let space = m.space.concat(&g.space)?;
    let (dm, dg) = (m.dim(), g.dim());
    let id_m = CMatrix::identity(dm, dm);
    let (lm, hm) = (m.coupling_at(t), m.hamiltonian_at(t));
    let lmd = lm.adjoint();
    let (s, l, h) = (g.scattering.matrix().clone(), g.coupling_at(t), g.hamiltonian_at(t));
    Ok(Superoperator::new(space, move |y| {
        let mut out = CMatrix::zeros(dm * dg, dm * dg);
        for a in 0..dm {
            for b in 0..dm {
                let x = y.view((a * dg, b * dg), (dg, dg)).into_owned();
                if x.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let mut e = CMatrix::zeros(dm, dm);
                e[(a, b)] = ONE;
                let mod_part = evans_hudson_matrix(EvansHudsonIndex::L00, &id_m, &lm, &hm, &e);
                out += mod_part.kronecker(&x);
                for idx in EvansHudsonIndex::ALL {
                    let (mu, nu) = idx.pair();
                    let mut am = e.clone();
                    if mu == 1 {
                        am = &lmd * am;
                    }
                    if nu == 1 {
                        am *= &lm;
                    }
                    out += am.kronecker(&evans_hudson_matrix(idx, &s, &l, &h, &x));
                }
            }
        }
        out
    }))
}

/// A model with its operator products precomputed for fast evaluation of
/// the Schrödinger-side generators.
pub(crate) struct CompiledModel {
    dim: usize,
    l_terms: Vec<(Coefficient, CMatrix)>,
    h_terms: Vec<(Coefficient, CMatrix)>,
    /// `(i, j, L_i^dag L_j)`.
    ldl: Vec<(usize, usize, CMatrix)>,
    /// `S^dag L_i`.
    sdl: Vec<CMatrix>,
    s: Option<Csr>,
}

impl CompiledModel {
    fn new(g: &SlhModel) -> Self {
        let l_terms: Vec<_> = g.coupling.iter().map(|t| (t.coeff.clone(), t.op.matrix().clone())).collect();
        let h_terms = g.hamiltonian.iter().map(|t| (t.coeff.clone(), t.op.matrix().clone())).collect();
        let mut ldl = Vec::new();
        for (i, (_, li)) in l_terms.iter().enumerate() {
            for (j, (_, lj)) in l_terms.iter().enumerate() {
                ldl.push((i, j, li.adjoint() * lj));
            }
        }
        let identity = g.scattering_is_identity();
        let sd = g.scattering.matrix().adjoint();
        let sdl = l_terms.iter().map(|(_, l)| &sd * l).collect();
        let s = (!identity).then(|| Csr::from_dense(g.scattering.matrix()));
        Self { dim: g.dim(), l_terms, h_terms, ldl, sdl, s }
    }

    pub(crate) fn at(&self, t: f64) -> FrozenGenerator {
        let d = self.dim;
        let cs: Vec<C64> = self.l_terms.iter().map(|(c, _)| c.eval(t)).collect();
        let mut l = CMatrix::zeros(d, d);
        let mut sdl = CMatrix::zeros(d, d);
        for (k, (_, op)) in self.l_terms.iter().enumerate() {
            axpy(&mut l, cs[k], op);
            axpy(&mut sdl, cs[k], &self.sdl[k]);
        }
        let mut kmat = CMatrix::zeros(d, d);
        for (c, op) in &self.h_terms {
            axpy(&mut kmat, -I * c.eval(t).re, op);
        }
        for (i, j, p) in &self.ldl {
            axpy(&mut kmat, C64::from(-0.5) * cs[*i].conj() * cs[*j], p);
        }
        FrozenGenerator {
            l: Csr::from_dense(&l),
            k: Csr::from_dense(&kmat),
            sdl: Csr::from_dense(&sdl),
            s: self.s.clone(),
        }
    }
}

/// The Schrödinger-side generators at a fixed time, in sparse form.
pub(crate) struct FrozenGenerator {
    l: Csr,
    /// `-iH - L^dag L / 2`.
    k: Csr,
    sdl: Csr,
    s: Option<Csr>,
}

impl FrozenGenerator {
    /// `out += c (K rho + rho K^dag + L rho L^dag)`.
    pub(crate) fn l00_adj_acc(&self, rho: &CMatrix, c: C64, out: &mut CMatrix) {
        self.k.left_acc(rho, c, out);
        self.k.right_adj_acc(rho, c, out);
        let lr = self.l.left(rho);
        self.l.right_adj_acc(&lr, c, out);
    }

    /// `out += c (L rho S^dag - rho S^dag L)`.
    pub(crate) fn l10_adj_acc(&self, rho: &CMatrix, c: C64, out: &mut CMatrix) {
        let lr = self.l.left(rho);
        match &self.s {
            None => axpy(out, c, &lr),
            Some(s) => s.right_adj_acc(&lr, c, out),
        }
        self.sdl.right_acc(rho, -c, out);
    }

    /// `out += c (S rho L^dag - L^dag S rho)`.
    pub(crate) fn l01_adj_acc(&self, rho: &CMatrix, c: C64, out: &mut CMatrix) {
        match &self.s {
            None => self.l.right_adj_acc(rho, c, out),
            Some(s) => self.l.right_adj_acc(&s.left(rho), c, out),
        }
        self.sdl.adj_left_acc(rho, -c, out);
    }

    /// `out += c (S rho S^dag - rho)`; nothing when `S = I`.
    pub(crate) fn l11_adj_acc(&self, rho: &CMatrix, c: C64, out: &mut CMatrix) {
        if let Some(s) = &self.s {
            s.right_adj_acc(&s.left(rho), c, out);
            axpy(out, -c, rho);
        }
    }

    pub(crate) fn apply(&self, idx: EvansHudsonIndex, rho: &CMatrix, c: C64, out: &mut CMatrix) {
        match idx {
            EvansHudsonIndex::L00 => self.l00_adj_acc(rho, c, out),
            EvansHudsonIndex::L10 => self.l10_adj_acc(rho, c, out),
            EvansHudsonIndex::L01 => self.l01_adj_acc(rho, c, out),
            EvansHudsonIndex::L11 => self.l11_adj_acc(rho, c, out),
        }
    }
}

/// Checks that two matrices agree entrywise within `tol`.
#[cfg(test)]
pub(crate) fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    crate::operators::max_abs_diff(a, b) <= tol
}
