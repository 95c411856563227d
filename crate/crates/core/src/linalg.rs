//! Complex linear algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use num_complex::Complex64 as C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Largest entry of `|M - M^H|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `x^H M y`.
pub fn quad_form(x: &CVector, m: &CMatrix, y: &CVector) -> C64 {
    x.dotc(&(m * y))
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Real `n x n` matrix to complex.
pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = seeded(seed);
        let g = CMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut rng, 1.0));
        hermitian_part(&g)
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let h = random_hermitian(7, 3);
        let (vals, vecs) = hermitian_eig(&h);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let d = CMatrix::from_diagonal(&CVector::from_iterator(7, vals.iter().map(|&v| C64::new(v, 0.0))));
        let rec = &vecs * d * vecs.adjoint();
        assert!((rec - &h).norm() < 1e-10);
        let gram = vecs.adjoint() * &vecs;
        assert!((gram - CMatrix::identity(7, 7)).norm() < 1e-10);
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = CMatrix::from_element(2, 2, ONE);
        let b = CMatrix::from_element(1, 1, C64::new(0.0, 2.0));
        let d = block_diag(&[a, b]);
        assert_eq!(d.nrows(), 3);
        assert_eq!(d[(2, 2)], C64::new(0.0, 2.0));
        assert_eq!(d[(0, 2)], ZERO);
        assert_eq!(d[(1, 0)], ONE);
    }
}
