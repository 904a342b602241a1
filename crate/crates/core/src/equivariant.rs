//! Intertwiner bases for equivariant linear layers.
//!
//! The space `{W : ρ_out(g)·W = W·ρ_in(g) ∀g}` is the nullspace of the
//! stacked vectorized constraint `(ρ_out(g) ⊗ I − I ⊗ ρ_in(g)ᵀ)·vec(W)`
//! (row-major `vec`). Block-diagonal representations decouple the
//! constraint into independent blocks, so the solver works per pair of
//! coordinate components and caches repeated blocks.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::group::{GroupElement, Representation};

/// Relative singular-value cutoff for nullspace rank decisions.
pub const NULLSPACE_CUTOFF: f64 = 1e-10;

/// A sparse `rows × cols` matrix stored as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl BasisMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &BasisMatrix) -> f64 {
        self.to_dense().dot(&other.to_dense())
    }
}

/// Basis of equivariant weights and invariant biases for one layer.
#[derive(Debug, Clone)]
pub struct EquivariantLayerSpec {
    pub rep_in: Representation,
    pub rep_out: Representation,
    /// Each `dim_out × dim_in`, orthonormal under the Frobenius inner product.
    pub weight_basis: Vec<BasisMatrix>,
    /// Each of length `dim_out`, orthonormal, spanning the fixed subspace of `rep_out`.
    pub bias_basis: Vec<Vec<f64>>,
}

impl EquivariantLayerSpec {
    pub fn dim_in(&self) -> usize {
        self.rep_in.dim()
    }

    pub fn dim_out(&self) -> usize {
        self.rep_out.dim()
    }

    /// `Σ_k c_k B_k`.
    pub fn realize_weight(&self, coefficients: &[f64]) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.dim_out(), self.dim_in());
        for (c, b) in coefficients.iter().zip(&self.weight_basis) {
            for &(i, j, v) in &b.entries {
                w[(i, j)] += c * v;
            }
        }
        w
    }

    pub fn realize_bias(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim_out()];
        for (c, b) in coefficients.iter().zip(&self.bias_basis) {
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi += c * bi;
            }
        }
        v
    }

    /// Largest `‖ρ_out(g)·B − B·ρ_in(g)‖∞` over basis elements and group elements.
    pub fn max_constraint_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for g in (0..self.rep_in.order()).map(GroupElement) {
            let (ro, ri) = (self.rep_out.matrix(g), self.rep_in.matrix(g));
            for b in &self.weight_basis {
                let b = b.to_dense();
                worst = worst.max((ro * &b - &b * ri).amax());
            }
            for v in &self.bias_basis {
                let col = DMatrix::from_column_slice(v.len(), 1, v);
                worst = worst.max((ro * &col - &col).amax());
            }
        }
        worst
    }
}

/// Dense nullspace of `a` via SVD: right singular vectors whose singular
/// value is at most `cutoff × σ_max`. Returned as orthonormal rows.
pub fn svd_nullspace(a: &DMatrix<f64>, cutoff: f64) -> Vec<Vec<f64>> {
    let n = a.ncols();
    if n == 0 {
        return Vec::new();
    }
    // Pad to at least `n` rows so the decomposition yields a full `V`.
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    let threshold = cutoff * sigma_max;
    (0..v_t.nrows())
        .filter(|&i| sigma_max == 0.0 || svd.singular_values[i] <= threshold)
        .map(|i| v_t.row(i).iter().copied().collect())
        .collect()
}

/// Stacked constraint operator on row-major `vec(W)` for the given
/// per-element matrix pairs.
fn constraint_operator(outs: &[&DMatrix<f64>], ins: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let (m, n) = (outs[0].nrows(), ins[0].nrows());
    let blocks = outs.len();
    let mut a = DMatrix::zeros(blocks * m * n, m * n);
    for (k, (ro, ri)) in outs.iter().zip(ins).enumerate() {
        let base = k * m * n;
        for i in 0..m {
            for j in 0..n {
                let row = base + i * n + j;
                // (ρ_out W)_ij = Σ_p ρ_out[i,p] W[p,j]
                for p in 0..m {
                    a[(row, p * n + j)] += ro[(i, p)];
                }
                // (W ρ_in)_ij = Σ_q W[i,q] ρ_in[q,j]
                for q in 0..n {
                    a[(row, i * n + q)] -= ri[(q, j)];
                }
            }
        }
    }
    a
}

/// Coordinate components of a representation: groups of coordinates
/// closed under every `ρ(g)`, in order of first coordinate.
fn components(rep: &Representation) -> Vec<Vec<usize>> {
    let labels = rep.coordinate_orbits();
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut comps = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        comps[l].push(i);
    }
    comps
}

fn sub_matrices(rep: &Representation, idx: &[usize]) -> Vec<DMatrix<f64>> {
    rep.matrices()
        .iter()
        .map(|m| DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]))
        .collect()
}

fn block_key(outs: &[DMatrix<f64>], ins: &[DMatrix<f64>]) -> Vec<u64> {
    let mut key = vec![outs[0].nrows() as u64, ins[0].nrows() as u64];
    for m in outs.iter().chain(ins) {
        key.extend(m.iter().map(|x| x.to_bits()));
    }
    key
}

/// Nullspace of the stacked intertwiner constraint over non-identity elements.
/// Returns row-major `vec(W)` vectors.
fn intertwiner_nullspace(outs: &[DMatrix<f64>], ins: &[DMatrix<f64>]) -> Vec<Vec<f64>> {
    let (m, n) = (outs[0].nrows(), ins[0].nrows());
    if outs.len() <= 1 {
        return (0..m * n)
            .map(|k| {
                let mut v = vec![0.0; m * n];
                v[k] = 1.0;
                v
            })
            .collect();
    }
    let o: Vec<&DMatrix<f64>> = outs[1..].iter().collect();
    let i: Vec<&DMatrix<f64>> = ins[1..].iter().collect();
    svd_nullspace(&constraint_operator(&o, &i), NULLSPACE_CUTOFF)
}

/// Orthonormal basis of `{W : ρ_out(g)·W = W·ρ_in(g) ∀g}` together with the
/// fixed-subspace basis of `rep_out` for biases.
pub fn equivariant_basis(rep_in: &Representation, rep_out: &Representation) -> EquivariantLayerSpec {
    assert_eq!(
        rep_in.order(),
        rep_out.order(),
        "representations must cover the same group"
    );
    let weight_basis = intertwiner_basis(rep_in, rep_out);
    let trivial = Representation::identity_action_of_order(rep_out.order(), 1);
    let bias_basis = intertwiner_basis(&trivial, rep_out)
        .into_iter()
        .map(|b| b.to_dense().column(0).iter().copied().collect())
        .collect();
    EquivariantLayerSpec {
        rep_in: rep_in.clone(),
        rep_out: rep_out.clone(),
        weight_basis,
        bias_basis,
    }
}

fn intertwiner_basis(rep_in: &Representation, rep_out: &Representation) -> Vec<BasisMatrix> {
    let (din, dout) = (rep_in.dim(), rep_out.dim());
    let comps_in = components(rep_in);
    let comps_out = components(rep_out);
    let subs_in: Vec<_> = comps_in.iter().map(|c| sub_matrices(rep_in, c)).collect();
    let subs_out: Vec<_> = comps_out.iter().map(|c| sub_matrices(rep_out, c)).collect();
    let mut cache: HashMap<Vec<u64>, Vec<Vec<f64>>> = HashMap::new();
    let mut basis = Vec::new();
    for (po, out_idx) in comps_out.iter().enumerate() {
        for (pi, in_idx) in comps_in.iter().enumerate() {
            let key = block_key(&subs_out[po], &subs_in[pi]);
            let block = cache
                .entry(key)
                .or_insert_with(|| intertwiner_nullspace(&subs_out[po], &subs_in[pi]));
            let n = in_idx.len();
            for vec_w in block.iter() {
                let mut entries = Vec::new();
                for (a, &i) in out_idx.iter().enumerate() {
                    for (b, &j) in in_idx.iter().enumerate() {
                        let v = vec_w[a * n + b];
                        if v != 0.0 {
                            entries.push((i, j, v));
                        }
                    }
                }
                basis.push(BasisMatrix {
                    rows: dout,
                    cols: din,
                    entries,
                });
            }
        }
    }
    basis
}

/// `P = (1/|G|) Σ_g ρ(g)`, the projector onto the fixed subspace.
pub fn invariant_projection(rep: &Representation) -> DMatrix<f64> {
    let d = rep.dim();
    let sum = rep
        .matrices()
        .iter()
        .fold(DMatrix::zeros(d, d), |acc, m| acc + m);
    sum / rep.order() as f64
}
