//! Small symmetric-matrix helpers shared by the fitter and the inference code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Refuse to invert symmetric matrices whose condition number exceeds this.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetrized matrix, ascending.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut eigs: Vec<f64> = symmetrize(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    eigs
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sorted_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eigs = sorted_eigenvalues(m);
    let (lo, hi) = eigs
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), e| (lo.min(e.abs()), hi.max(e.abs())));
    if eigs.is_empty() {
        1.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric positive definite matrix through its eigendecomposition.
///
/// Fails when any eigenvalue is non-positive or the condition number exceeds
/// [`MAX_CONDITION`]. A 0x0 matrix inverts to itself.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::dims(format!("{what} is {}x{}, expected square", n, m.ncols())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular {
            what: what.to_string(),
            condition,
        });
    }
    let inv_vals = DVector::from_iterator(n, eig.eigenvalues.iter().map(|e| 1.0 / e));
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&inv_vals) * v.transpose())))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Largest asymmetry |m_ij - m_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs_diff(m, &m.transpose())
}

/// Serializes a matrix as `{"rows", "cols", "data"}` with `data` nested row-major.
pub fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let data: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    let mut st = s.serialize_struct("Matrix", 3)?;
    st.serialize_field("rows", &m.nrows())?;
    st.serialize_field("cols", &m.ncols())?;
    st.serialize_field("data", &data)?;
    st.end()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let inv = spd_inverse(&m, "m").unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((inv[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(inv[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn refuses_ill_conditioned() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        match spd_inverse(&m, "omega") {
            Err(Error::Singular { condition, .. }) => assert!(condition > 1e12),
            other => panic!("expected singular, got {other:?}"),
        }
        let z = DMatrix::<f64>::zeros(2, 2);
        assert!(spd_inverse(&z, "zero").is_err());
    }

    #[test]
    fn empty_matrix_inverts_to_empty() {
        let m = DMatrix::<f64>::zeros(0, 0);
        assert_eq!(spd_inverse(&m, "lambda").unwrap().shape(), (0, 0));
        assert_eq!(min_eigenvalue(&m), 0.0);
    }

    #[test]
    fn eigenvalues_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sorted_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
        assert!((condition_number(&m) - 3.0).abs() < 1e-12);
    }
}
