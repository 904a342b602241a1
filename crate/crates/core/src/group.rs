//! Finite symmetry groups presented by generator matrices, their matrix
//! representations, and sampled invariance/equivariance residual checks.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::GroupError;

/// Tolerance (∞-norm) under which two matrices are treated as the same
/// group element during closure enumeration.
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

/// Index of an element inside an enumerated [`FiniteGroup`]. Index 0 is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupElement(pub usize);

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement(0);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn is_identity(self) -> bool {
        self.0 == 0
    }
}

/// An enumerated finite group: composition table, inverses, and for each
/// element a word in the generators that produces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGroup {
    table: Vec<Vec<usize>>,
    inverses: Vec<usize>,
    words: Vec<Vec<usize>>,
    num_generators: usize,
}

impl FiniteGroup {
    /// The group with a single element.
    pub fn trivial() -> Self {
        Self {
            table: vec![vec![0]],
            inverses: vec![0],
            words: vec![vec![]],
            num_generators: 0,
        }
    }

    /// The reflection group `{e, g_s}` with a single involutive generator.
    pub fn c2() -> Self {
        Self {
            table: vec![vec![0, 1], vec![1, 0]],
            inverses: vec![0, 1],
            words: vec![vec![], vec![0]],
            num_generators: 1,
        }
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn num_generators(&self) -> usize {
        self.num_generators
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.order()).map(GroupElement)
    }

    /// All elements except the identity.
    pub fn non_identity(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (1..self.order()).map(GroupElement)
    }

    /// `a ∘ b`.
    pub fn compose(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        GroupElement(self.table[a.0][b.0])
    }

    pub fn inverse(&self, g: GroupElement) -> GroupElement {
        GroupElement(self.inverses[g.0])
    }

    /// Generator indices `[k1, .., kn]` with `g = gen[k1] ∘ .. ∘ gen[kn]`.
    pub fn word(&self, g: GroupElement) -> &[usize] {
        &self.words[g.0]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }
}

/// One square matrix per group element, acting on a `dim`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    dim: usize,
    matrices: Vec<DMatrix<f64>>,
}

/// Plain-text exchange document for a representation: row-major matrices,
/// one per element in group order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationDoc {
    pub dim: usize,
    pub elements: Vec<Vec<f64>>,
}

impl Representation {
    /// Builds a representation from explicit per-element matrices.
    /// `matrices[0]` must be the identity.
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self, GroupError> {
        let first = matrices.first().ok_or(GroupError::Empty)?;
        let dim = first.nrows();
        for m in &matrices {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(GroupError::DimensionMismatch {
                    expected: dim,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        if (first - DMatrix::identity(dim, dim)).amax() > CLOSURE_TOLERANCE {
            return Err(GroupError::IdentityNotFirst);
        }
        Ok(Self { dim, matrices })
    }

    /// The one-dimensional trivial representation of `group`.
    pub fn trivial(group: &FiniteGroup) -> Self {
        Self::identity_action(group, 1)
    }

    /// Every element acts as the identity on a `dim`-dimensional space.
    pub fn identity_action(group: &FiniteGroup, dim: usize) -> Self {
        Self {
            dim,
            matrices: vec![DMatrix::identity(dim, dim); group.order()],
        }
    }

    /// Identity action on `dim` coordinates for a group of the given order.
    pub fn identity_action_of_order(order: usize, dim: usize) -> Self {
        Self {
            dim,
            matrices: vec![DMatrix::identity(dim, dim); order.max(1)],
        }
    }

    /// The regular representation: element `g` permutes the basis vectors
    /// indexed by group elements, `e_h ↦ e_{g∘h}`.
    pub fn regular(group: &FiniteGroup) -> Self {
        let n = group.order();
        let matrices = group
            .elements()
            .map(|g| {
                let mut m = DMatrix::zeros(n, n);
                for h in group.elements() {
                    m[(group.compose(g, h).0, h.0)] = 1.0;
                }
                m
            })
            .collect();
        Self { dim: n, matrices }
    }

    /// Extends generator images to a representation of an already
    /// enumerated group by multiplying along each element's word.
    pub fn from_generator_images(
        group: &FiniteGroup,
        images: &[DMatrix<f64>],
    ) -> Result<Self, GroupError> {
        if images.len() != group.num_generators() {
            return Err(GroupError::GeneratorCount {
                expected: group.num_generators(),
                got: images.len(),
            });
        }
        let dim = images.first().map_or(0, |m| m.nrows());
        for m in images {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(GroupError::NotSquare);
            }
        }
        let matrices = group
            .elements()
            .map(|g| {
                group
                    .word(g)
                    .iter()
                    .fold(DMatrix::identity(dim, dim), |acc, &k| acc * &images[k])
            })
            .collect();
        let rep = Self { dim, matrices };
        rep.verify_homomorphism(group, CLOSURE_TOLERANCE)?;
        Ok(rep)
    }

    /// Block-diagonal direct sum of representations of the same group.
    pub fn direct_sum(parts: &[&Representation]) -> Result<Self, GroupError> {
        let first = parts.first().ok_or(GroupError::Empty)?;
        let order = first.order();
        if parts.iter().any(|p| p.order() != order) {
            return Err(GroupError::GroupOrderMismatch);
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let matrices = (0..order)
            .map(|g| {
                let mut m = DMatrix::zeros(dim, dim);
                let mut offset = 0;
                for p in parts {
                    m.view_mut((offset, offset), (p.dim, p.dim))
                        .copy_from(&p.matrices[g]);
                    offset += p.dim;
                }
                m
            })
            .collect();
        Ok(Self { dim, matrices })
    }

    /// `copies` copies of `self` stacked block-diagonally.
    pub fn copies(&self, copies: usize) -> Self {
        let parts = vec![self; copies];
        Self::direct_sum(&parts).unwrap_or_else(|_| Self {
            dim: 0,
            matrices: vec![DMatrix::zeros(0, 0); self.order()],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of group elements this representation covers.
    pub fn order(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, g: GroupElement) -> &DMatrix<f64> {
        &self.matrices[g.0]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `ρ(g)·x`.
    pub fn act(&self, g: GroupElement, x: &[f64]) -> Result<Vec<f64>, GroupError> {
        if x.len() != self.dim {
            return Err(GroupError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let m = &self.matrices[g.0];
        Ok((0..self.dim)
            .map(|i| (0..self.dim).map(|j| m[(i, j)] * x[j]).sum())
            .collect())
    }

    /// Checks `ρ(a∘b) = ρ(a)ρ(b)` for every pair.
    pub fn verify_homomorphism(&self, group: &FiniteGroup, tol: f64) -> Result<(), GroupError> {
        if self.order() != group.order() {
            return Err(GroupError::GroupOrderMismatch);
        }
        for a in group.elements() {
            for b in group.elements() {
                let lhs = self.matrix(group.compose(a, b));
                let rhs = self.matrix(a) * self.matrix(b);
                if (lhs - rhs).amax() > tol {
                    return Err(GroupError::NotHomomorphism { a: a.0, b: b.0 });
                }
            }
        }
        Ok(())
    }

    /// True when every matrix has exactly one nonzero entry per row and
    /// column, and that entry is `1`.
    pub fn is_permutation(&self) -> bool {
        self.matrices.iter().all(|m| signed_permutation_of(m) == Some(false))
    }

    /// True when every matrix is a permutation up to signs.
    pub fn is_signed_permutation(&self) -> bool {
        self.matrices.iter().all(|m| signed_permutation_of(m).is_some())
    }

    /// Partition of coordinates into orbits: `i` and `j` share an orbit if
    /// some `ρ(g)` has a nonzero `(i, j)` entry (transitively closed).
    pub fn coordinate_orbits(&self) -> Vec<usize> {
        let mut label: Vec<usize> = (0..self.dim).collect();
        fn find(label: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while label[r] != r {
                r = label[r];
            }
            label[i] = r;
            r
        }
        for m in &self.matrices {
            for i in 0..self.dim {
                for j in 0..self.dim {
                    if m[(i, j)].abs() > CLOSURE_TOLERANCE {
                        let (a, b) = (find(&mut label, i), find(&mut label, j));
                        if a != b {
                            label[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
        // Relabel roots densely in order of first appearance.
        let mut dense = vec![usize::MAX; self.dim];
        let mut next = 0;
        (0..self.dim)
            .map(|i| {
                let r = find(&mut label, i);
                if dense[r] == usize::MAX {
                    dense[r] = next;
                    next += 1;
                }
                dense[r]
            })
            .collect()
    }

    pub fn to_doc(&self) -> RepresentationDoc {
        RepresentationDoc {
            dim: self.dim,
            elements: self
                .matrices
                .iter()
                .map(|m| m.transpose().iter().copied().collect())
                .collect(),
        }
    }

    pub fn from_doc(doc: &RepresentationDoc) -> Result<Self, GroupError> {
        let n = doc.dim;
        let matrices = doc
            .elements
            .iter()
            .map(|e| {
                if e.len() != n * n {
                    Err(GroupError::DimensionMismatch {
                        expected: n * n,
                        got: e.len(),
                    })
                } else {
                    Ok(DMatrix::from_row_slice(n, n, e))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(matrices)
    }
}

/// `Some(has_negative_entry)` if `m` is a signed permutation matrix.
fn signed_permutation_of(m: &DMatrix<f64>) -> Option<bool> {
    if m.nrows() != m.ncols() {
        return None;
    }
    let n = m.nrows();
    let mut negative = false;
    let mut col_used = vec![false; n];
    for i in 0..n {
        let mut found = false;
        for j in 0..n {
            let v = m[(i, j)];
            if v == 0.0 {
                continue;
            }
            if found || col_used[j] || v.abs() != 1.0 {
                return None;
            }
            found = true;
            col_used[j] = true;
            negative |= v < 0.0;
        }
        if !found {
            return None;
        }
    }
    Some(negative)
}

/// A finite symmetry group together with its actions on the state and action spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySpec {
    pub group: FiniteGroup,
    pub rep_state: Representation,
    pub rep_action: Representation,
}

impl SymmetrySpec {
    pub fn new(
        group: FiniteGroup,
        rep_state: Representation,
        rep_action: Representation,
    ) -> Result<Self, GroupError> {
        rep_state.verify_homomorphism(&group, 1e-10)?;
        rep_action.verify_homomorphism(&group, 1e-10)?;
        Ok(Self {
            group,
            rep_state,
            rep_action,
        })
    }

    /// C2 acting through the given involutions on states and actions.
    pub fn reflection(state: DMatrix<f64>, action: DMatrix<f64>) -> Result<Self, GroupError> {
        let group = FiniteGroup::c2();
        let rep_state = Representation::from_generator_images(&group, &[state])?;
        let rep_action = Representation::from_generator_images(&group, &[action])?;
        Self::new(group, rep_state, rep_action)
    }

    /// The trivial group acting trivially (no symmetry).
    pub fn none(state_dim: usize, action_dim: usize) -> Self {
        let group = FiniteGroup::trivial();
        Self {
            rep_state: Representation::identity_action(&group, state_dim),
            rep_action: Representation::identity_action(&group, action_dim),
            group,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.rep_state.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.rep_action.dim()
    }
}

/// Enumerates the closure of `generators` under matrix product.
///
/// Element 0 of the result is the identity. Products are compared with
/// [`CLOSURE_TOLERANCE`] on the ∞-norm.
pub fn enumerate_group(
    generators: &[DMatrix<f64>],
    order_cap: usize,
) -> Result<(FiniteGroup, Representation), GroupError> {
    let dim = generators.first().map_or(0, |g| g.nrows());
    if generators.is_empty() {
        return Err(GroupError::Empty);
    }
    for (k, g) in generators.iter().enumerate() {
        if g.nrows() != dim || g.ncols() != dim {
            return Err(GroupError::NotSquare);
        }
        if g.clone().try_inverse().is_none() || g.determinant().abs() < 1e-12 {
            return Err(GroupError::NotInvertible { index: k });
        }
    }
    if order_cap == 0 {
        return Err(GroupError::ClosureExceeded { cap: order_cap });
    }

    let find = |elements: &[DMatrix<f64>], m: &DMatrix<f64>| {
        elements
            .iter()
            .position(|e| (e - m).amax() <= CLOSURE_TOLERANCE)
    };

    let mut elements = vec![DMatrix::identity(dim, dim)];
    let mut words: Vec<Vec<usize>> = vec![vec![]];
    let mut queue = VecDeque::from([0usize]);
    while let Some(e) = queue.pop_front() {
        for (k, gen) in generators.iter().enumerate() {
            let candidate = gen * &elements[e];
            if find(&elements, &candidate).is_none() {
                if elements.len() == order_cap {
                    return Err(GroupError::ClosureExceeded { cap: order_cap });
                }
                let mut word = vec![k];
                word.extend_from_slice(&words[e]);
                elements.push(candidate);
                words.push(word);
                queue.push_back(elements.len() - 1);
            }
        }
    }

    let n = elements.len();
    let mut table = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let prod = &elements[a] * &elements[b];
            table[a][b] = find(&elements, &prod).ok_or(GroupError::ClosureExceeded { cap: order_cap })?;
        }
    }
    let inverses = (0..n)
        .map(|a| {
            table[a]
                .iter()
                .position(|&c| c == 0)
                .ok_or(GroupError::NotInvertible { index: a })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let group = FiniteGroup {
        table,
        inverses,
        words,
        num_generators: generators.len(),
    };
    let rep = Representation {
        dim,
        matrices: elements,
    };
    Ok((group, rep))
}

fn sample_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Max over sampled `x ~ N(0, I)` and all `g` of
/// `‖ρ_out(g)·f(x) − f(ρ_in(g)·x)‖∞`.
pub fn check_equivariant<F, R>(
    f: F,
    rep_in: &Representation,
    rep_out: &Representation,
    samples: usize,
    rng: &mut R,
) -> Result<f64, GroupError>
where
    F: Fn(&[f64]) -> Vec<f64>,
    R: Rng + ?Sized,
{
    if rep_in.order() != rep_out.order() {
        return Err(GroupError::GroupOrderMismatch);
    }
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = sample_normal(rng, rep_in.dim());
        let fx = f(&x);
        if fx.len() != rep_out.dim() {
            return Err(GroupError::DimensionMismatch {
                expected: rep_out.dim(),
                got: fx.len(),
            });
        }
        for g in (0..rep_in.order()).map(GroupElement) {
            let lhs = rep_out.act(g, &fx)?;
            let rhs = f(&rep_in.act(g, &x)?);
            let r = max_abs_diff(&lhs, &rhs);
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Max over sampled `x ~ N(0, I)` and all `g` of `|f(x) − f(ρ_in(g)·x)|`.
pub fn check_invariant<F, R>(
    f: F,
    rep_in: &Representation,
    samples: usize,
    rng: &mut R,
) -> Result<f64, GroupError>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = sample_normal(rng, rep_in.dim());
        let fx = f(&x);
        for g in (0..rep_in.order()).map(GroupElement) {
            let r = (fx - f(&rep_in.act(g, &x)?)).abs();
            worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
        }
    }
    Ok(worst)
}

/// ∞-norm distance; NaN anywhere counts as infinite.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() {
            f64::INFINITY
        } else {
            m.max(d)
        }
    })
}

/// Convenience: a diagonal ±1 matrix.
pub fn sign_flip(signs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(signs))
}

/// Convenience: the permutation matrix sending `e_j` to `e_{perm[j]}`.
pub fn permutation_matrix(perm: &[usize]) -> DMatrix<f64> {
    let n = perm.len();
    let mut m = DMatrix::zeros(n, n);
    for (j, &i) in perm.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}
