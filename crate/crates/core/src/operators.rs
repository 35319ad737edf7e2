//! Finite-dimensional operator algebra on labeled tensor-product spaces.
//!
//! Basis ordering follows the declared factor order: for factors
//! `[(A, dA), (B, dB)]` the basis index of `|i>_A |j>_B` is `i * dB + j`,
//! which is the ordering of [`nalgebra::Matrix::kronecker`].
//!
//! Two-level conventions: index 0 is the excited state `|e>`, index 1 the
//! ground state `|g>`, so `sigma_minus = |g><e|` is `[[0, 0], [1, 0]]`.

use std::fmt;

use crate::{CMatrix, CVector, Error, Result, C64};

/// One tensor factor of a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// An ordered list of labeled tensor factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    factors: Vec<Factor>,
}

impl HilbertSpace {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut out: Vec<Factor> = Vec::new();
        for (label, dim) in factors {
            let label = label.into();
            if dim == 0 {
                return Err(Error::ZeroDimension(label));
            }
            if out.iter().any(|f| f.label == label) {
                return Err(Error::LabelCollision(label));
            }
            out.push(Factor { label, dim });
        }
        if out.is_empty() {
            return Err(Error::invalid("a Hilbert space needs at least one factor"));
        }
        Ok(Self { factors: out })
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new([(label.into(), dim)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.label.as_str())
    }

    /// Total dimension: product of the factor dimensions.
    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.label == label)
    }

    pub fn factor_dim(&self, label: &str) -> Result<usize> {
        self.position(label).map(|p| self.factors[p].dim).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// `self ⊗ other`; fails on shared labels.
    pub fn concat(&self, other: &HilbertSpace) -> Result<HilbertSpace> {
        for f in &other.factors {
            if self.position(&f.label).is_some() {
                return Err(Error::LabelCollision(f.label.clone()));
            }
        }
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Ok(HilbertSpace { factors })
    }

    /// The subspace made of the listed factors, kept in this space's order.
    pub fn restrict(&self, keep: &[&str]) -> Result<HilbertSpace> {
        for k in keep {
            if self.position(k).is_none() {
                return Err(Error::UnknownLabel(k.to_string()));
            }
        }
        let factors: Vec<Factor> = self.factors.iter().filter(|f| keep.contains(&f.label.as_str())).cloned().collect();
        if factors.is_empty() {
            return Err(Error::invalid("cannot restrict to an empty set of factors"));
        }
        Ok(HilbertSpace { factors })
    }

    /// Per-factor digits of a flat basis index.
    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (slot, f) in out.iter_mut().zip(&self.factors).rev() {
            *slot = index % f.dim;
            index /= f.dim;
        }
        out
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|x| format!("{}[{}]", x.label, x.dim)).collect();
        write!(f, "{}", parts.join(" ⊗ "))
    }
}

/// A dense operator on a labeled space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: format!("operator on {space}"),
                expected: d,
                found: if matrix.nrows() != d { matrix.nrows() } else { matrix.ncols() },
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::identity(d, d) }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::zeros(d, d) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { space: self.space.clone(), matrix: &self.matrix * c }
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.check_same(other, "operator sum")?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.check_same(other, "operator difference")?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix - &other.matrix })
    }

    /// Operator product `self · other`.
    pub fn mul(&self, other: &Operator) -> Result<Self> {
        self.check_same(other, "operator product")?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.check_same(other, "commutator")?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix })
    }

    /// Largest entry modulus of `A - A^dag`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs_diff(&self.matrix, &self.matrix.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Largest entry modulus of `A^dag A - I`.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        max_abs_diff(&(self.matrix.adjoint() * &self.matrix), &CMatrix::identity(d, d))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// `self ⊗ other`.
    pub fn tensor(&self, other: &Operator) -> Result<Self> {
        tensor(self, other)
    }

    /// `I_left ⊗ self`.
    pub fn ampliate_left(&self, left: &HilbertSpace) -> Result<Self> {
        tensor(&Operator::identity(left), self)
    }

    /// `self ⊗ I_right`.
    pub fn ampliate_right(&self, right: &HilbertSpace) -> Result<Self> {
        tensor(self, &Operator::identity(right))
    }

    /// Embed an operator on a subset of factors into `target`, acting as
    /// identity on the remaining factors. Factor order follows `target`.
    pub fn embed(&self, target: &HilbertSpace) -> Result<Self> {
        let mut labels: Vec<&str> = self.space.labels().collect();
        let mut op = self.clone();
        for f in target.factors() {
            if self.space.position(&f.label).is_none() {
                let id = Operator::identity(&HilbertSpace::single(f.label.clone(), f.dim)?);
                op = tensor(&op, &id)?;
                labels.push(&f.label);
            } else if self.space.factor_dim(&f.label)? != f.dim {
                return Err(Error::DimensionMismatch {
                    context: format!("embedding factor `{}`", f.label),
                    expected: f.dim,
                    found: self.space.factor_dim(&f.label)?,
                });
            }
        }
        if labels.len() != target.factors().len() {
            let extra = self.space.labels().find(|l| target.position(l).is_none());
            return Err(Error::UnknownLabel(extra.unwrap_or_default().to_string()));
        }
        let order: Vec<&str> = target.labels().collect();
        op.permute(&order)
    }

    /// Partial trace keeping the listed factors.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        partial_trace(self, keep)
    }

    /// Reorder tensor factors to `order` (a permutation of this space's labels).
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        let perm = permutation(&self.space, order)?;
        let target = HilbertSpace { factors: perm.iter().map(|&p| self.space.factors[p].clone()).collect() };
        let map = index_map(&self.space, &target, &perm);
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for c in 0..d {
            for r in 0..d {
                m[(map[r], map[c])] = self.matrix[(r, c)];
            }
        }
        Ok(Self { space: target, matrix: m })
    }

    /// `<psi| A |psi>`.
    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        if psi.space() != &self.space {
            return Err(Error::SpaceMismatch("expectation value".into()));
        }
        Ok(psi.amplitudes.dotc(&(&self.matrix * &psi.amplitudes)))
    }

    fn check_same(&self, other: &Operator, context: &str) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch(format!("{context}: {} vs {}", self.space, other.space)));
        }
        Ok(())
    }
}

/// Kronecker product on the concatenated space.
pub fn tensor(a: &Operator, b: &Operator) -> Result<Operator> {
    let space = a.space.concat(&b.space)?;
    Ok(Operator { space, matrix: a.matrix.kronecker(&b.matrix) })
}

/// Trace out every factor not listed in `keep`.
pub fn partial_trace(rho: &Operator, keep: &[&str]) -> Result<Operator> {
    let kept = rho.space.restrict(keep)?;
    let keep_mask: Vec<bool> = rho.space.factors.iter().map(|f| keep.contains(&f.label.as_str())).collect();
    let d = rho.dim();
    // Split each basis index into (kept index, traced index).
    let mut kept_idx = vec![0usize; d];
    let mut traced_idx = vec![0usize; d];
    for (i, (ki, ti)) in kept_idx.iter_mut().zip(traced_idx.iter_mut()).enumerate() {
        let digits = rho.space.digits(i);
        let (mut k, mut t) = (0usize, 0usize);
        for ((digit, f), &is_kept) in digits.iter().zip(&rho.space.factors).zip(&keep_mask) {
            if is_kept {
                k = k * f.dim + digit;
            } else {
                t = t * f.dim + digit;
            }
        }
        *ki = k;
        *ti = t;
    }
    let dk = kept.dim();
    let mut out = CMatrix::zeros(dk, dk);
    for c in 0..d {
        for r in 0..d {
            if traced_idx[r] == traced_idx[c] {
                out[(kept_idx[r], kept_idx[c])] += rho.matrix[(r, c)];
            }
        }
    }
    Ok(Operator { space: kept, matrix: out })
}

fn permutation(space: &HilbertSpace, order: &[&str]) -> Result<Vec<usize>> {
    if order.len() != space.factors.len() {
        return Err(Error::invalid(format!(
            "permutation lists {} labels, space has {}",
            order.len(),
            space.factors.len()
        )));
    }
    let mut perm = Vec::with_capacity(order.len());
    for l in order {
        let p = space.position(l).ok_or_else(|| Error::UnknownLabel(l.to_string()))?;
        if perm.contains(&p) {
            return Err(Error::LabelCollision(l.to_string()));
        }
        perm.push(p);
    }
    Ok(perm)
}

/// For each basis index of `source`, its index in `target` (factors permuted by `perm`).
fn index_map(source: &HilbertSpace, target: &HilbertSpace, perm: &[usize]) -> Vec<usize> {
    (0..source.dim())
        .map(|i| {
            let digits = source.digits(i);
            perm.iter().zip(&target.factors).fold(0usize, |acc, (&p, f)| acc * f.dim + digits[p])
        })
        .collect()
}

/// A pure state on a labeled space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                context: format!("state on {space}"),
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(Self { space, amplitudes })
    }

    pub fn basis(space: &HilbertSpace, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::invalid(format!("basis index {index} out of range for dim {d}")));
        }
        let mut v = CVector::zeros(d);
        v[index] = C64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), amplitudes: v })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm("cannot normalize the zero vector".into()));
        }
        Ok(Self { space: self.space.clone(), amplitudes: &self.amplitudes / C64::from(n) })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch("inner product".into()));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        let space = self.space.concat(&other.space)?;
        Ok(Self { space, amplitudes: self.amplitudes.kronecker(&other.amplitudes) })
    }

    /// `|self><self|`.
    pub fn to_density(&self) -> Operator {
        self.outer(self)
    }

    /// `|self><other|`; both states must live on the same space.
    pub fn outer(&self, other: &StateVector) -> Operator {
        Operator { space: self.space.clone(), matrix: &self.amplitudes * other.amplitudes.adjoint() }
    }
}

/// Lowering operator `a|n> = sqrt(n)|n-1>` on `{|0>, ..., |dim-1>}`.
pub fn mode_annihilator(label: &str, dim: usize) -> Result<Operator> {
    let space = HilbertSpace::single(label, dim)?;
    let mut m = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    Ok(Operator { space, matrix: m })
}

/// `a^dag a = diag(0, 1, ..., dim-1)`.
pub fn number_operator(label: &str, dim: usize) -> Result<Operator> {
    let space = HilbertSpace::single(label, dim)?;
    let m = CMatrix::from_diagonal(&CVector::from_iterator(dim, (0..dim).map(|n| C64::from(n as f64))));
    Ok(Operator { space, matrix: m })
}

fn two_level(label: &str, entries: [[C64; 2]; 2]) -> Result<Operator> {
    let space = HilbertSpace::single(label, 2)?;
    let m = CMatrix::from_fn(2, 2, |r, c| entries[r][c]);
    Ok(Operator { space, matrix: m })
}

const O: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// `|g><e|`.
pub fn sigma_minus(label: &str) -> Result<Operator> {
    two_level(label, [[O, O], [ONE, O]])
}

/// `|e><g|`.
pub fn sigma_plus(label: &str) -> Result<Operator> {
    two_level(label, [[O, ONE], [O, O]])
}

pub fn sigma_x(label: &str) -> Result<Operator> {
    two_level(label, [[O, ONE], [ONE, O]])
}

pub fn sigma_y(label: &str) -> Result<Operator> {
    two_level(label, [[O, -I], [I, O]])
}

pub fn sigma_z(label: &str) -> Result<Operator> {
    two_level(label, [[ONE, O], [O, -ONE]])
}

/// Poisson weight `sum_{n >= dim} e^{-|a|^2} |a|^{2n} / n!` lost by truncation.
pub fn coherent_tail_mass(abs_alpha: f64, dim: usize) -> f64 {
    let x = abs_alpha * abs_alpha;
    if x == 0.0 {
        return 0.0;
    }
    // Sum the tail directly in log space; terms decay once n > x.
    let mut log_term = -x + dim as f64 * x.ln() - libm::lgamma(dim as f64 + 1.0);
    let mut sum = 0.0;
    let mut n = dim as f64;
    loop {
        let term = log_term.exp();
        sum += term;
        n += 1.0;
        log_term += x.ln() - n.ln();
        if (n > x && term < 1e-300) || term < sum * 1e-17 && n > x {
            break;
        }
        if n > dim as f64 + 10_000.0 {
            break;
        }
    }
    sum
}

/// Smallest truncation accepted for a coherent amplitude: the policy floor
/// `ceil(|a|^2 + 6|a| + 10)`, raised further if needed so the tail mass is
/// at most `tail_tol`.
pub fn required_dim(abs_alpha: f64, tail_tol: f64) -> usize {
    let mut dim = (abs_alpha * abs_alpha + 6.0 * abs_alpha + 10.0).ceil() as usize;
    while coherent_tail_mass(abs_alpha, dim) > tail_tol {
        dim += 1;
    }
    dim
}

fn coherent_coefficients(alpha: C64, dim: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    let mut c = C64::from((-0.5 * alpha.norm_sqr()).exp());
    for n in 0..dim {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        v[n] = c;
    }
    v
}

fn check_truncation(alpha: C64, dim: usize, tail_tol: f64) -> Result<()> {
    let required = required_dim(alpha.norm(), tail_tol);
    if dim < required {
        return Err(Error::TailMass {
            abs_alpha: alpha.norm(),
            dim,
            tail: coherent_tail_mass(alpha.norm(), dim),
            required_dim: required,
        });
    }
    Ok(())
}

/// Normalized truncation of `|alpha>` on a single mode labeled `label`.
pub fn coherent_state(label: &str, alpha: C64, dim: usize, tail_tol: f64) -> Result<StateVector> {
    check_truncation(alpha, dim, tail_tol)?;
    let space = HilbertSpace::single(label, dim)?;
    StateVector { space, amplitudes: coherent_coefficients(alpha, dim) }.normalized()
}

/// `sum_k w_k |alpha_k>` before normalization, together with its squared norm.
pub fn cat_superposition(
    label: &str,
    weights: &[C64],
    alphas: &[C64],
    dim: usize,
    tail_tol: f64,
) -> Result<(StateVector, f64)> {
    if weights.len() != alphas.len() {
        return Err(Error::DimensionMismatch {
            context: "cat weights vs amplitudes".into(),
            expected: weights.len(),
            found: alphas.len(),
        });
    }
    if weights.is_empty() {
        return Err(Error::invalid("cat state needs at least one branch"));
    }
    let space = HilbertSpace::single(label, dim)?;
    let mut v = CVector::zeros(dim);
    for (&w, &a) in weights.iter().zip(alphas) {
        check_truncation(a, dim, tail_tol)?;
        v += coherent_coefficients(a, dim) * w;
    }
    let norm_sq = v.norm_squared();
    Ok((StateVector { space, amplitudes: v }, norm_sq))
}

/// Normalized `sum_k w_k |alpha_k>` on a truncated mode.
pub fn cat_state(label: &str, weights: &[C64], alphas: &[C64], dim: usize, tail_tol: f64) -> Result<StateVector> {
    let (v, norm_sq) = cat_superposition(label, weights, alphas, dim, tail_tol)?;
    if norm_sq <= 1e-24 {
        return Err(Error::ZeroNorm(format!("cat superposition cancels (squared norm {norm_sq:e})")));
    }
    v.normalized()
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_density(rng: &mut impl Rng, space: &HilbertSpace) -> Operator {
        let d = space.dim();
        let a = CMatrix::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        Operator::new(space.clone(), rho / tr).unwrap()
    }

    #[test]
    fn identity_tensor_identity() {
        let a = Operator::identity(&HilbertSpace::single("a", 2).unwrap());
        let b = Operator::identity(&HilbertSpace::single("b", 3).unwrap());
        let ab = tensor(&a, &b).unwrap();
        assert_eq!(ab.matrix(), &CMatrix::identity(6, 6));
        assert_eq!(ab.space().labels().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn tensor_rejects_label_collision() {
        let a = sigma_z("q").unwrap();
        assert!(matches!(tensor(&a, &a), Err(Error::LabelCollision(l)) if l == "q"));
    }

    #[test]
    fn sigma_z_eigenvalue_survives_ampliation() {
        let op = tensor(&sigma_z("a").unwrap(), &Operator::identity(&HilbertSpace::single("b", 2).unwrap())).unwrap();
        let psi = StateVector::basis(&HilbertSpace::single("a", 2).unwrap(), 0)
            .unwrap()
            .tensor(&StateVector::basis(&HilbertSpace::single("b", 2).unwrap(), 1).unwrap())
            .unwrap();
        let out = op.matrix() * psi.amplitudes();
        assert!(
            max_abs_diff(
                &CMatrix::from_column_slice(4, 1, out.as_slice()),
                &CMatrix::from_column_slice(4, 1, psi.amplitudes().as_slice())
            ) < 1e-15
        );
    }

    #[test]
    fn annihilator_tensor_sigma_minus_matches_basis_enumeration() {
        let op = tensor(&mode_annihilator("m", 3).unwrap(), &sigma_minus("q").unwrap()).unwrap();
        // |n, s> has index 2n + s; a ⊗ σ- maps |n, e> to sqrt(n) |n-1, g>.
        for n in 0..3 {
            for s in 0..2 {
                for n2 in 0..3 {
                    for s2 in 0..2 {
                        let expected = if n >= 1 && n2 == n - 1 && s == 0 && s2 == 1 { (n as f64).sqrt() } else { 0.0 };
                        let got = op.matrix()[(2 * n2 + s2, 2 * n + s)];
                        assert!((got - c(expected, 0.0)).norm() < 1e-15, "({n},{s})->({n2},{s2})");
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sa = HilbertSpace::single("A", 2).unwrap();
        let sb = HilbertSpace::single("B", 3).unwrap();
        let ra = random_density(&mut rng, &sa);
        let rb = random_density(&mut rng, &sb).scale(c(2.5, 0.0));
        let red = partial_trace(&tensor(&ra, &rb).unwrap(), &["A"]).unwrap();
        let expected = ra.scale(rb.trace());
        assert!(max_abs_diff(red.matrix(), expected.matrix()) < 1e-14);
        let red_b = partial_trace(&tensor(&ra, &rb).unwrap(), &["B"]).unwrap();
        assert!(max_abs_diff(red_b.matrix(), rb.scale(ra.trace()).matrix()) < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let s = HilbertSpace::new([("A", 2), ("B", 2)]).unwrap();
        let r = 0.5f64.sqrt();
        let psi = StateVector::new(s, CVector::from_vec(vec![c(r, 0.0), O, O, c(r, 0.0)])).unwrap();
        let red = partial_trace(&psi.to_density(), &["A"]).unwrap();
        assert!(max_abs_diff(red.matrix(), &(CMatrix::identity(2, 2) * c(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = HilbertSpace::new([("A", 2), ("B", 3)]).unwrap();
        let rho = random_density(&mut rng, &s);
        let m = rho.matrix();
        let red_a = partial_trace(&rho, &["A"]).unwrap();
        let red_b = partial_trace(&rho, &["B"]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = O;
                for k in 0..3 {
                    acc += m[(3 * i + k, 3 * j + k)];
                }
                assert!((red_a.matrix()[(i, j)] - acc).norm() < 1e-15);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = O;
                for k in 0..2 {
                    acc += m[(3 * k + i, 3 * k + j)];
                }
                assert!((red_b.matrix()[(i, j)] - acc).norm() < 1e-15);
            }
        }
        assert!((red_a.trace() - rho.trace()).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_middle_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, cc) = (
            HilbertSpace::single("a", 2).unwrap(),
            HilbertSpace::single("b", 3).unwrap(),
            HilbertSpace::single("c", 2).unwrap(),
        );
        let (ra, rb, rc) = (random_density(&mut rng, &a), random_density(&mut rng, &b), random_density(&mut rng, &cc));
        let full = tensor(&tensor(&ra, &rb).unwrap(), &rc).unwrap();
        let red = partial_trace(&full, &["a", "c"]).unwrap();
        let expected = tensor(&ra, &rc).unwrap();
        assert!(max_abs_diff(red.matrix(), expected.matrix()) < 1e-14);
        assert!(matches!(partial_trace(&full, &["z"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn permute_swaps_kronecker_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ra = random_density(&mut rng, &HilbertSpace::single("a", 2).unwrap());
        let rb = random_density(&mut rng, &HilbertSpace::single("b", 3).unwrap());
        let ab = tensor(&ra, &rb).unwrap();
        let ba = tensor(&rb, &ra).unwrap();
        let swapped = ab.permute(&["b", "a"]).unwrap();
        assert_eq!(swapped.space(), ba.space());
        assert!(max_abs_diff(swapped.matrix(), ba.matrix()) < 1e-15);
    }

    #[test]
    fn embed_places_identity_on_missing_factors() {
        let target = HilbertSpace::new([("m", 3), ("q", 2)]).unwrap();
        let sm = sigma_minus("q").unwrap().embed(&target).unwrap();
        let expected = sigma_minus("q").unwrap().ampliate_left(&HilbertSpace::single("m", 3).unwrap()).unwrap();
        assert_eq!(sm, expected);
    }

    #[test]
    fn annihilator_edge_cases() {
        let a1 = mode_annihilator("m", 1).unwrap();
        assert_eq!(a1.matrix(), &CMatrix::zeros(1, 1));
        let a3 = mode_annihilator("m", 3).unwrap();
        let two = StateVector::basis(a3.space(), 2).unwrap();
        let out = a3.matrix() * two.amplitudes();
        assert!((out[1] - c(2f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!(out[0].norm() < 1e-15 && out[2].norm() < 1e-15);
    }

    #[test]
    fn truncated_commutator_has_top_level_defect() {
        for dim in 1..7 {
            let a = mode_annihilator("m", dim).unwrap();
            let comm = a.commutator(&a.adjoint()).unwrap();
            let mut expected = CMatrix::identity(dim, dim);
            expected[(dim - 1, dim - 1)] -= C64::from(dim as f64);
            assert!(max_abs_diff(comm.matrix(), &expected) < 1e-13, "dim {dim}");
        }
    }

    #[test]
    fn coherent_vacuum_and_eigenrelation() {
        let vac = coherent_state("m", O, 12, 1e-10).unwrap();
        assert!((vac.amplitudes()[0] - ONE).norm() < 1e-15);

        let psi = coherent_state("m", ONE, 20, 1e-10).unwrap();
        let a = mode_annihilator("m", 20).unwrap();
        assert!((a.expectation(&psi).unwrap() - ONE).norm() < 1e-8);
        // Residual ||(a - alpha)|alpha>|| bounded by the tail.
        let res = (a.matrix() * psi.amplitudes() - psi.amplitudes()).norm();
        assert!(res * res <= 20.0 * coherent_tail_mass(1.0, 20) + 1e-20);
    }

    #[test]
    fn coherent_overlap_matches_series_formula() {
        let alphas = [c(0.3, -0.4), c(-1.2, 0.9), c(1.5, 1.3), c(0.0, -2.0)];
        for &a in &alphas {
            for &b in &alphas {
                let pa = coherent_state("m", a, 30, 1e-10).unwrap();
                let pb = coherent_state("m", b, 30, 1e-10).unwrap();
                let got = pa.inner(&pb).unwrap();
                let expected = (-0.5 * a.norm_sqr() - 0.5 * b.norm_sqr() + a.conj() * b).exp();
                assert!((got - expected).norm() < 1e-8, "{a} {b}");
            }
        }
    }

    #[test]
    fn coherent_truncation_is_checked() {
        let err = coherent_state("m", c(2.0, 0.0), 10, 1e-10).unwrap_err();
        match err {
            Error::TailMass { required_dim, .. } => assert_eq!(required_dim, 26),
            e => panic!("unexpected {e}"),
        }
        assert_eq!(required_dim(1.2, 1e-10), 19);
    }

    #[test]
    fn single_branch_cat_is_coherent() {
        let a = c(0.7, 0.2);
        let cat = cat_state("m", &[c(0.0, 2.0)], &[a], 17, 1e-10).unwrap();
        let coh = coherent_state("m", a, 17, 1e-10).unwrap();
        // Equal up to the global phase of the weight.
        assert!((cat.inner(&coh).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn even_cat_has_even_parity_and_known_norm() {
        let a = c(1.2, 0.0);
        let (raw, norm_sq) = cat_superposition("m", &[ONE, ONE], &[a, -a], 19, 1e-10).unwrap();
        let expected = 2.0 + 2.0 * (-2.0 * a.norm_sqr()).exp();
        assert!((norm_sq - expected).abs() < 1e-9);
        for n in (1..19).step_by(2) {
            assert!(raw.amplitudes()[n].norm() < 1e-15);
        }
        let err = cat_state("m", &[ONE, -ONE], &[a, a], 19, 1e-10).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm(_)));
    }

    proptest! {
        #[test]
        fn number_operator_is_diagonal(dim in 1usize..12) {
            let a = mode_annihilator("m", dim).unwrap();
            let n = a.adjoint().mul(&a).unwrap();
            prop_assert!(max_abs_diff(n.matrix(), number_operator("m", dim).unwrap().matrix()) < 1e-13);
        }

        #[test]
        fn partial_trace_inverts_tensor(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ra = random_density(&mut rng, &HilbertSpace::single("A", da).unwrap());
            let rb = random_density(&mut rng, &HilbertSpace::single("B", db).unwrap()).scale(c(0.7, 0.0));
            let red = partial_trace(&tensor(&ra, &rb).unwrap(), &["A"]).unwrap();
            prop_assert!(max_abs_diff(red.matrix(), ra.scale(rb.trace()).matrix()) < 1e-13);
        }

        #[test]
        fn tensor_is_associative_and_identity_preserves_spectrum(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, cc) = (
                random_density(&mut rng, &HilbertSpace::single("a", 2).unwrap()),
                random_density(&mut rng, &HilbertSpace::single("b", 2).unwrap()),
                random_density(&mut rng, &HilbertSpace::single("c", 3).unwrap()),
            );
            let left = tensor(&tensor(&a, &b).unwrap(), &cc).unwrap();
            let right = tensor(&a, &tensor(&b, &cc).unwrap()).unwrap();
            prop_assert!(max_abs_diff(left.matrix(), right.matrix()) < 1e-15);
            let reordered = tensor(&tensor(&cc, &a).unwrap(), &b).unwrap().permute(&["a", "b", "c"]).unwrap();
            prop_assert!(max_abs_diff(left.matrix(), reordered.matrix()) < 1e-15);

            let amp = a.ampliate_right(&HilbertSpace::single("z", 3).unwrap()).unwrap();
            let mut ev_a: Vec<f64> = a.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
            let mut ev_amp: Vec<f64> = amp.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
            ev_a.sort_by(f64::total_cmp);
            ev_amp.sort_by(f64::total_cmp);
            for (k, ev) in ev_amp.iter().enumerate() {
                prop_assert!((ev - ev_a[k / 3]).abs() < 1e-12);
            }
        }
    }
}
