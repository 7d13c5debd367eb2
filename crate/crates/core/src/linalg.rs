//! Small dense linear-algebra helpers on fixed-size matrices.

use nalgebra::{Matrix2, Matrix4, Matrix5, SMatrix};

/// Matrix norm used by the forgetting-factor mechanism.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MatrixNorm {
    /// Largest singular value.
    #[default]
    Spectral,
    Frobenius,
}

impl MatrixNorm {
    pub fn of<M: SquareMatrix>(self, m: &M) -> f64 {
        match self {
            MatrixNorm::Frobenius => m.frobenius_norm(),
            MatrixNorm::Spectral => m.spectral_norm(),
        }
    }
}

/// Eigenvalue-based quantities on the small square sizes used in this crate.
pub trait SquareMatrix {
    /// Largest singular value.
    fn spectral_norm(&self) -> f64;
    fn frobenius_norm(&self) -> f64;
    /// Smallest eigenvalue of the symmetric part.
    fn min_sym_eigenvalue(&self) -> f64;
}

impl SquareMatrix for Matrix2<f64> {
    fn spectral_norm(&self) -> f64 {
        spectral_norm2(self)
    }

    fn frobenius_norm(&self) -> f64 {
        self.norm()
    }

    fn min_sym_eigenvalue(&self) -> f64 {
        sym2_eigenvalues(self).0
    }
}

macro_rules! impl_square_matrix {
    ($($n:literal),+) => {$(
        impl SquareMatrix for SMatrix<f64, $n, $n> {
            fn spectral_norm(&self) -> f64 {
                let gram = self.transpose() * self;
                let lmax = gram.symmetric_eigenvalues().iter().copied().fold(0.0_f64, f64::max);
                libm::sqrt(lmax)
            }

            fn frobenius_norm(&self) -> f64 {
                self.norm()
            }

            fn min_sym_eigenvalue(&self) -> f64 {
                let sym = (self + self.transpose()) * 0.5;
                sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    )+};
}

impl_square_matrix!(3, 4, 5);

/// Largest singular value of a square matrix.
pub fn spectral_norm<M: SquareMatrix>(m: &M) -> f64 {
    m.spectral_norm()
}

/// Closed-form spectral norm of a (possibly non-symmetric) 2×2 matrix.
pub fn spectral_norm2(m: &Matrix2<f64>) -> f64 {
    let g = m.transpose() * m;
    let (_, lmax) = sym2_eigenvalues(&g);
    libm::sqrt(lmax.max(0.0))
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let r = libm::hypot(0.5 * (a - d), b);
    (mean - r, mean + r)
}

/// Smallest eigenvalue of the symmetric part of a matrix.
pub fn min_sym_eigenvalue<M: SquareMatrix>(m: &M) -> f64 {
    m.min_sym_eigenvalue()
}

/// 4×4 determinant by Laplace expansion over the 2×2 minors of the top
/// and bottom row pairs.
pub fn det4(a: &Matrix4<f64>) -> f64 {
    let s0 = a[(0, 0)] * a[(1, 1)] - a[(1, 0)] * a[(0, 1)];
    let s1 = a[(0, 0)] * a[(1, 2)] - a[(1, 0)] * a[(0, 2)];
    let s2 = a[(0, 0)] * a[(1, 3)] - a[(1, 0)] * a[(0, 3)];
    let s3 = a[(0, 1)] * a[(1, 2)] - a[(1, 1)] * a[(0, 2)];
    let s4 = a[(0, 1)] * a[(1, 3)] - a[(1, 1)] * a[(0, 3)];
    let s5 = a[(0, 2)] * a[(1, 3)] - a[(1, 2)] * a[(0, 3)];

    let c5 = a[(2, 2)] * a[(3, 3)] - a[(3, 2)] * a[(2, 3)];
    let c4 = a[(2, 1)] * a[(3, 3)] - a[(3, 1)] * a[(2, 3)];
    let c3 = a[(2, 1)] * a[(3, 2)] - a[(3, 1)] * a[(2, 2)];
    let c2 = a[(2, 0)] * a[(3, 3)] - a[(3, 0)] * a[(2, 3)];
    let c1 = a[(2, 0)] * a[(3, 2)] - a[(3, 0)] * a[(2, 2)];
    let c0 = a[(2, 0)] * a[(3, 1)] - a[(3, 0)] * a[(2, 1)];

    s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
}

fn minor5(m: &Matrix5<f64>, row: usize, col: usize) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| {
        let r = if i < row { i } else { i + 1 };
        let c = if j < col { j } else { j + 1 };
        m[(r, c)]
    })
}

/// Adjugate and determinant of a 5×5 matrix from its cofactors.
///
/// The determinant is the first-row cofactor expansion, so it reuses the
/// cofactors already computed for the adjugate. Both stay well defined when
/// the matrix is singular.
pub fn adjugate_det5(m: &Matrix5<f64>) -> (Matrix5<f64>, f64) {
    let mut adj = Matrix5::zeros();
    for i in 0..5 {
        for j in 0..5 {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // adj = transpose of the cofactor matrix
            adj[(j, i)] = sign * det4(&minor5(m, i, j));
        }
    }
    let det = (0..5).map(|j| m[(0, j)] * adj[(j, 0)]).sum();
    (adj, det)
}

/// Adjugate of a 2×2 matrix.
pub fn adjugate2(m: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}
