//! Small dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending;
/// column `j` of the returned matrix belongs to eigenvalue `j`.
pub fn hermitian_eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vecs = CMat::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vecs)
}

/// Inverse of a Hermitian positive definite matrix, `None` if the Cholesky
/// factorization fails.
pub fn hermitian_pd_inverse(m: &CMat) -> Option<CMat> {
    Cholesky::new(m.clone()).map(|c| c.inverse())
}

/// Solves `G c = b` for Hermitian positive semidefinite `G`. Falls back to a
/// ridge of `1e-10 · tr(G)/n` when the factorization fails; the flag reports
/// whether the ridge was needed.
pub fn solve_hermitian(g: &CMat, b: &CVec) -> (CVec, bool) {
    if let Some(ch) = Cholesky::new(g.clone()) {
        return (ch.solve(b), false);
    }
    let n = g.nrows();
    let tr: f64 = (0..n).map(|i| g[(i, i)].re).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut reg = g.clone();
    for i in 0..n {
        reg[(i, i)] += C64::new(1e-10 * tr / n as f64, 0.0);
    }
    match Cholesky::new(reg) {
        Some(ch) => (ch.solve(b), true),
        None => (CVec::zeros(n), true),
    }
}

/// `Σ_{i,j} conj(u_i) M_{ij} v_j`.
pub fn quad_form(u: &[C64], m: &CMat, v: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (i, ui) in u.iter().enumerate() {
        let mut row = C64::new(0.0, 0.0);
        for (j, vj) in v.iter().enumerate() {
            row += m[(i, j)] * vj;
        }
        acc += ui.conj() * row;
    }
    acc
}

/// `u^H v`.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// `u v^H` as a matrix.
pub fn outer(u: &[C64], v: &[C64]) -> CMat {
    CMat::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
}
