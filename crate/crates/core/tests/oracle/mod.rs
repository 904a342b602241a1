//! Brute-force intertwiner oracle shared by the basis tests and the
//! acceptance suite. Uses only dense Gaussian elimination and Gram-Schmidt,
//! nothing from the solver under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use symmrl_core::equivariant::equivariant_basis;
use symmrl_core::group::{enumerate_group, permutation_matrix, sign_flip, FiniteGroup, Representation};

/// Nullspace of `A` from its reduced row echelon form.
pub fn rref_nullspace(a: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let (rows, cols) = a.shape();
    let mut m = a.clone();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, val) = (r..rows)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((r, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        m.swap_rows(r, best);
        let p = m[(r, c)];
        for j in 0..cols {
            m[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        m[(i, j)] -= f * m[(r, j)];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = DVector::zeros(cols);
            v[free] = 1.0;
            for (k, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[(k, free)];
            }
            v
        })
        .collect()
}

/// Row-major `vec(W)` constraint `ρ_out(g)·W − W·ρ_in(g) = 0` for all `g`.
pub fn brute_force_constraint(rep_in: &Representation, rep_out: &Representation) -> DMatrix<f64> {
    let (din, dout) = (rep_in.dim(), rep_out.dim());
    let order = rep_in.order();
    let mut a = DMatrix::zeros(order * dout * din, dout * din);
    for g in 0..order {
        let ro = &rep_out.matrices()[g];
        let ri = &rep_in.matrices()[g];
        for i in 0..dout {
            for j in 0..din {
                let row = (g * dout + i) * din + j;
                for k in 0..dout {
                    a[(row, k * din + j)] += ro[(i, k)];
                }
                for k in 0..din {
                    a[(row, i * din + k)] -= ri[(k, j)];
                }
            }
        }
    }
    a
}

/// Orthonormal columns spanning `vs` (modified Gram-Schmidt, two passes).
pub fn orthonormalize(vs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&w);
                w -= q * d;
            }
        }
        let n = w.norm();
        if n > 1e-12 {
            out.push(w / n);
        }
    }
    out
}

/// Upper bound on the sine of the largest principal angle between two
/// subspaces of equal dimension, `max(‖(I − P_b)Q_a‖_F, ‖(I − P_a)Q_b‖_F)`.
/// Returns `f64::INFINITY` when the dimensions differ.
pub fn principal_angle_bound(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let leak = |x: &[DVector<f64>], y: &[DVector<f64>]| {
        x.iter()
            .map(|v| {
                let mut r = v.clone();
                for q in y {
                    r -= q * q.dot(v);
                }
                r.norm_squared()
            })
            .sum::<f64>()
            .sqrt()
    };
    leak(a, b).max(leak(b, a)).min(1.0).asin()
}

/// Largest principal angle between the solver's weight basis and the oracle nullspace.
pub fn basis_angle(rep_in: &Representation, rep_out: &Representation) -> f64 {
    let spec = equivariant_basis(rep_in, rep_out);
    let din = rep_in.dim();
    let solver: Vec<DVector<f64>> = spec
        .weight_basis
        .iter()
        .map(|b| {
            let d = b.to_dense();
            DVector::from_fn(d.len(), |k, _| d[(k / din, k % din)])
        })
        .collect();
    let oracle = rref_nullspace(&brute_force_constraint(rep_in, rep_out), 1e-9);
    principal_angle_bound(&orthonormalize(&solver), &orthonormalize(&oracle))
}

/// Named representations of several finite groups.
pub struct RepFamily {
    pub group: &'static str,
    pub reps: Vec<(&'static str, Representation)>,
}

fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// The test matrix: C2 with the bundled env actions, the Klein four-group
/// and the cyclic group of order 3 with a non-permutation rotation.
pub fn test_matrix() -> Vec<RepFamily> {
    let c2 = FiniteGroup::c2();
    let gen = |m: DMatrix<f64>| Representation::from_generator_images(&c2, &[m]).unwrap();
    let c2_family = RepFamily {
        group: "C2",
        reps: vec![
            ("trivial", Representation::trivial(&c2)),
            ("sign", gen(sign_flip(&[-1.0]))),
            ("swap", gen(permutation_matrix(&[1, 0]))),
            ("regular", Representation::regular(&c2)),
            ("lateral", gen(sign_flip(&[-1.0, 1.0]))),
            ("regular x3", Representation::regular(&c2).copies(3)),
            ("goal state", gen(sign_flip(&[-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]))),
            (
                "hopper state",
                gen(sign_flip(&[1.0, 1.0, 1.0, 1.0, -1.0, -1.0]) * permutation_matrix(&[0, 1, 3, 2, 4, 5])),
            ),
        ],
    };

    let (klein, natural) = enumerate_group(&[sign_flip(&[-1.0, 1.0]), sign_flip(&[1.0, -1.0])], 16).unwrap();
    let kgen = |a: DMatrix<f64>, b: DMatrix<f64>| Representation::from_generator_images(&klein, &[a, b]).unwrap();
    let klein_family = RepFamily {
        group: "C2xC2",
        reps: vec![
            ("trivial", Representation::trivial(&klein)),
            ("first sign", kgen(sign_flip(&[-1.0]), sign_flip(&[1.0]))),
            ("natural", natural),
            ("regular", Representation::regular(&klein)),
            ("swap + sign", kgen(permutation_matrix(&[1, 0, 2]), sign_flip(&[1.0, 1.0, -1.0]))),
        ],
    };

    let (c3, rot) = enumerate_group(&[rotation(2.0 * std::f64::consts::PI / 3.0)], 8).unwrap();
    let cgen = |m: DMatrix<f64>| Representation::from_generator_images(&c3, &[m]).unwrap();
    let c3_family = RepFamily {
        group: "C3",
        reps: vec![
            ("trivial", Representation::trivial(&c3)),
            ("rotation", rot),
            ("cycle", cgen(permutation_matrix(&[1, 2, 0]))),
            ("regular", Representation::regular(&c3)),
        ],
    };
    vec![c2_family, klein_family, c3_family]
}

/// `(group, in, out, angle)` for every pair with `dim_in·dim_out ≤ max_product`.
pub fn all_basis_angles(max_product: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for fam in test_matrix() {
        for (ni, ri) in &fam.reps {
            for (no, ro) in &fam.reps {
                if ri.dim() * ro.dim() <= max_product {
                    out.push((format!("{}: {ni} -> {no}", fam.group), basis_angle(ri, ro)));
                }
            }
        }
    }
    out
}
