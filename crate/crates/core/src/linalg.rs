//! Thin helpers over `nalgebra` for the small square matrices used here
//! (k is the number of moment conditions, rarely above a handful).

use alloc::vec::Vec;

pub type Matrix = nalgebra::DMatrix<f64>;

pub fn zeros(n: usize) -> Matrix {
    Matrix::zeros(n, n)
}

/// `(M + Mᵀ) / 2`
pub fn symmetrized(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Maximum absolute column sum.
pub fn norm_1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| libm::fabs(*v)).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖M‖₁ ‖M⁻¹‖₁`, infinite when `M` is not invertible.
pub fn condition_1(m: &Matrix) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => norm_1(m) * norm_1(&inv),
        None => f64::INFINITY,
    }
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrized(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_condition_is_infinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_1(&m).is_infinite() || condition_1(&m) > 1e15);
        let id = Matrix::identity(3, 3);
        assert_eq!(condition_1(&id), 1.0);
    }

    #[test]
    fn eigenvalues_ascending() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let ev = symmetric_eigenvalues(&m);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
