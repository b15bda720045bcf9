//! Dense symmetric linear algebra used throughout the crate: sorted
//! eigen-decompositions, inertia counting and orthonormal complements.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::fmt;

/// Relative factor applied to the largest absolute eigenvalue when no
/// explicit inertia tolerance is supplied.
pub const DEFAULT_INERTIA_RTOL: f64 = 1e-9;

/// Counts of negative, null and positive eigenvalues of a symmetric form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct InertiaTriple {
    pub minus: usize,
    pub zero: usize,
    pub plus: usize,
}

impl InertiaTriple {
    pub fn new(minus: usize, zero: usize, plus: usize) -> Self {
        Self { minus, zero, plus }
    }

    pub fn dim(&self) -> usize {
        self.minus + self.zero + self.plus
    }

    pub fn is_degenerate(&self) -> bool {
        self.zero > 0
    }
}

impl std::ops::Add for InertiaTriple {
    type Output = InertiaTriple;

    fn add(self, rhs: Self) -> Self {
        InertiaTriple::new(self.minus + rhs.minus, self.zero + rhs.zero, self.plus + rhs.plus)
    }
}

impl fmt::Display for InertiaTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.minus, self.zero, self.plus)
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigen-decomposition, sorted ascending. The input is
/// symmetrised first so tiny assembly asymmetries cannot leak in.
pub fn sym_eigen(a: &DMatrix<f64>) -> SortedEigen {
    let n = a.nrows();
    if n == 0 {
        return SortedEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    SortedEigen { values, vectors }
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    sym_eigen(a).values
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn default_tolerance(eigenvalues: &[f64]) -> f64 {
    let scale = eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    DEFAULT_INERTIA_RTOL * scale
}

/// Counts eigenvalues `< -tol`, in `[-tol, tol]` and `> tol`.
pub fn inertia_of_values(eigenvalues: &[f64], tol: f64) -> InertiaTriple {
    let mut out = InertiaTriple::default();
    for &v in eigenvalues {
        if v < -tol {
            out.minus += 1;
        } else if v > tol {
            out.plus += 1;
        } else {
            out.zero += 1;
        }
    }
    out
}

/// Inertia of a symmetric matrix with an absolute tolerance.
pub fn inertia_indices(a: &DMatrix<f64>, tol: f64) -> InertiaTriple {
    inertia_of_values(&sym_eigenvalues(a), tol)
}

/// Inertia using the default relative tolerance `1e-9 * max|eig|`.
pub fn inertia_default(a: &DMatrix<f64>) -> InertiaTriple {
    let values = sym_eigenvalues(a);
    let tol = default_tolerance(&values);
    inertia_of_values(&values, tol)
}

/// Orthonormalises `vectors` (modified Gram-Schmidt, two passes), dropping
/// any vector whose remainder falls below `drop_tol` times its own norm.
pub fn orthonormalize(vectors: &[DVector<f64>], drop_tol: f64) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let norm = w.norm();
        if norm > drop_tol * scale {
            basis.push(w / norm);
        }
    }
    basis
}

/// Orthonormal basis (as matrix columns) of the Euclidean orthogonal
/// complement of `span(constraints)` in `R^dim`.
pub fn orthonormal_complement(constraints: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut all = orthonormalize(constraints, 1e-10);
    let fixed = all.len();
    // Pivoted completion: always extend with the coordinate axis that has
    // the largest component outside the current span.
    while all.len() < dim {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for k in 0..dim {
            let mut w = DVector::zeros(dim);
            w[k] = 1.0;
            for _ in 0..2 {
                for b in &all {
                    let c = b.dot(&w);
                    w.axpy(-c, b, 1.0);
                }
            }
            let norm = w.norm();
            if best.as_ref().is_none_or(|(n, _)| norm > *n) {
                best = Some((norm, w));
            }
        }
        match best {
            Some((norm, w)) if norm > 1e-8 => all.push(w / norm),
            _ => break,
        }
    }
    let cols = all.len() - fixed;
    let mut out = DMatrix::zeros(dim, cols);
    for (c, v) in all[fixed..].iter().enumerate() {
        out.set_column(c, v);
    }
    out
}

/// Right singular vectors of `a` belonging to singular values below
/// `rel_tol * sigma_max`, together with all singular values (ascending).
/// The matrix is zero-padded to square so that the full right null space
/// is available even for wide matrices.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> (Vec<DVector<f64>>, Vec<f64>) {
    let cols = a.ncols();
    let rows = a.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut pairs: Vec<(f64, DVector<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &sv)| (sv, v_t.row(i).transpose()))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let sigma_max = pairs.last().map(|p| p.0).unwrap_or(0.0);
    let singular: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let null = pairs
        .into_iter()
        .filter(|(sv, _)| *sv <= rel_tol * sigma_max)
        .map(|(_, v)| v)
        .collect();
    (null, singular)
}

/// Block-diagonal assembly of two square matrices.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inertia_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0, 2.0]));
        assert_eq!(inertia_indices(&a, 1e-9), InertiaTriple::new(1, 1, 1));
    }

    #[test]
    fn inertia_of_identity() {
        let a = DMatrix::<f64>::identity(4, 4);
        assert_eq!(inertia_default(&a), InertiaTriple::new(0, 0, 4));
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let c = vec![
            DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]),
        ];
        let w = orthonormal_complement(&c, 4);
        assert_eq!(w.ncols(), 2);
        let gram = w.transpose() * &w;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-14);
        for v in &c {
            assert!((w.transpose() * v).norm() < 1e-14);
        }
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (null, _) = null_space(&a, 1e-10);
        assert_eq!(null.len(), 1);
        assert!((a * &null[0]).norm() < 1e-14);
    }
}
