//! Ridge covariance matrices `Λ = λI + Σ φφᵀ` with a maintained inverse,
//! running log-determinant, and the Loewner-order doubling test.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Slack on the unit-ball feature bound.
pub const FEATURE_BOUND_TOL: f64 = 1e-9;
/// Smallest pivot accepted by the strict positive-definiteness test.
pub const PD_TOL: f64 = 1e-10;
/// Sherman–Morrison updates between full re-inversions.
pub const REFRESH_INTERVAL: usize = 256;

/// Ridge covariance `Λ` together with `Λ⁻¹` and `log det Λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceState {
    dim: usize,
    lambda: f64,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    logdet: f64,
    updates_applied: usize,
}

impl CovarianceState {
    /// `λ I_d`.
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("covariance dimension must be positive"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("ridge lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            dim,
            lambda,
            matrix: DMatrix::identity(dim, dim) * lambda,
            inverse: DMatrix::identity(dim, dim) / lambda,
            logdet: dim as f64 * lambda.ln(),
            updates_applied: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn updates_applied(&self) -> usize {
        self.updates_applied
    }

    /// Adds `φφᵀ`, keeping the inverse in sync via Sherman–Morrison and
    /// re-inverting from scratch every [`REFRESH_INTERVAL`] updates.
    pub fn rank1_update(&mut self, phi: &[f64]) -> Result<()> {
        self.check_dim(phi)?;
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature entry".into()));
        }
        let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 + FEATURE_BOUND_TOL {
            return Err(Error::FeatureBound { norm });
        }

        let u = DVector::from_column_slice(phi);
        let inv_u = &self.inverse * &u;
        let q = u.dot(&inv_u).max(0.0);
        self.matrix.ger(1.0, &u, &u, 1.0);
        self.inverse.ger(-1.0 / (1.0 + q), &inv_u, &inv_u, 1.0);
        self.logdet += q.ln_1p();
        self.updates_applied += 1;

        if self.updates_applied.is_multiple_of(REFRESH_INTERVAL) {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant directly from `matrix`.
    pub fn refresh(&mut self) -> Result<()> {
        let chol = self
            .matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("covariance lost positive definiteness".into()))?;
        self.logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut inv = chol.inverse();
        symmetrize(&mut inv);
        self.inverse = inv;
        Ok(())
    }

    /// `φᵀ Λ⁻¹ φ`, clamped at zero.
    pub fn quadratic_form(&self, phi: &[f64]) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(self.quadratic_form_unchecked(phi))
    }

    pub(crate) fn quadratic_form_unchecked(&self, phi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &pi) in phi.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for (j, &pj) in phi.iter().enumerate() {
                row += self.inverse[(i, j)] * pj;
            }
            acc += pi * row;
        }
        acc.max(0.0)
    }

    /// `Λ⁻¹ b`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(rhs)?;
        let b = DVector::from_column_slice(rhs);
        Ok((&self.inverse * b).iter().copied().collect())
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::param(format!(
                "vector of length {} against covariance of dimension {}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// True iff `A` is positive definite, decided by a Cholesky sweep whose
/// pivots must all exceed [`PD_TOL`].
pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n != a.ncols() {
        return false;
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > PD_TOL) {
            return false;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    true
}

/// Doubling round: `next ≻ 2·prev` in the Loewner order.
pub fn detect_doubling(prev: &CovarianceState, next: &CovarianceState) -> Result<bool> {
    if prev.dim != next.dim {
        return Err(Error::param(format!(
            "doubling test across dimensions {} and {}",
            prev.dim, next.dim
        )));
    }
    if prev.lambda != next.lambda {
        return Err(Error::param("doubling test across different ridge parameters"));
    }
    let diff = &next.matrix - &prev.matrix * 2.0;
    Ok(is_positive_definite(&diff))
}

/// Deterministic ceiling on the number of doubling rounds over `horizon`
/// steps, `d·H·log(1 + n/(dλ)) / log 2` for `n = K·P` samples per step.
pub fn doubling_count_bound(dim: usize, horizon: usize, samples_per_step: usize, lambda: f64) -> f64 {
    let d = dim as f64;
    d * horizon as f64 * (1.0 + samples_per_step as f64 / (d * lambda)).ln() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn new_identity_and_diagonal() {
        let s = CovarianceState::new(2, 1.0).unwrap();
        assert_eq!(s.matrix(), &DMatrix::identity(2, 2));
        assert_eq!(s.inverse(), &DMatrix::identity(2, 2));
        assert_eq!(s.logdet(), 0.0);
        assert_eq!(s.updates_applied(), 0);

        let s = CovarianceState::new(3, 2.0).unwrap();
        assert_eq!(s.matrix(), &(DMatrix::identity(3, 3) * 2.0));
        assert!((s.logdet() - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((s.logdet() - 2.0794).abs() < 1e-4);

        let s = CovarianceState::new(1, 0.5).unwrap();
        assert_eq!(s.matrix()[(0, 0)], 0.5);
        assert_eq!(s.inverse()[(0, 0)], 2.0);
    }

    #[test]
    fn new_rejects_bad_parameters() {
        assert!(matches!(CovarianceState::new(0, 1.0), Err(Error::Param(_))));
        assert!(matches!(CovarianceState::new(2, 0.0), Err(Error::Param(_))));
        assert!(matches!(CovarianceState::new(2, -1.0), Err(Error::Param(_))));
    }

    #[test]
    fn rank1_basis_vector() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        s.rank1_update(&[1.0, 0.0]).unwrap();
        assert_eq!(s.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let inv = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        assert!(max_abs(&(s.inverse() - inv)) < 1e-15);
        assert!((s.logdet() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rank1_zero_vector_is_noop() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        s.rank1_update(&[0.0, 0.0]).unwrap();
        assert_eq!(s.matrix(), &DMatrix::identity(2, 2));
        assert_eq!(s.inverse(), &DMatrix::identity(2, 2));
        assert_eq!(s.logdet(), 0.0);
    }

    #[test]
    fn rank1_diagonal_direction_matches_direct_inverse() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        s.rank1_update(&[h, h]).unwrap();
        // [[1.5, 0.5], [0.5, 1.5]]⁻¹ = (1/2)·[[1.5, -0.5], [-0.5, 1.5]]
        let expected = DMatrix::from_row_slice(2, 2, &[0.75, -0.25, -0.25, 0.75]);
        assert!(max_abs(&(s.inverse() - expected)) < 1e-12);
        assert!((s.logdet() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rank1_rejects_large_or_nonfinite() {
        let mut s = CovarianceState::new(2, 1.0).unwrap();
        assert!(matches!(s.rank1_update(&[1.5, 0.0]), Err(Error::FeatureBound { .. })));
        assert!(matches!(s.rank1_update(&[f64::NAN, 0.0]), Err(Error::Numeric(_))));
        assert!(matches!(s.rank1_update(&[0.1]), Err(Error::Param(_))));
        // within the float-normalization slack
        s.rank1_update(&[1.0 + 1e-10, 0.0]).unwrap();
    }

    #[test]
    fn quadratic_form_examples() {
        let s = CovarianceState::new(2, 1.0).unwrap();
        assert_eq!(s.quadratic_form(&[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(s.quadratic_form(&[0.0, 0.0]).unwrap(), 0.0);

        let mut s = s;
        s.rank1_update(&[1.0, 0.0]).unwrap();
        assert!((s.quadratic_form(&[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(s.quadratic_form(&[1.0]), Err(Error::Param(_))));
    }

    fn state_with(diag: &[f64]) -> CovarianceState {
        let mut s = CovarianceState::new(diag.len(), 1.0).unwrap();
        s.matrix = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        s.refresh().unwrap();
        s
    }

    #[test]
    fn doubling_examples() {
        let prev = CovarianceState::new(2, 1.0).unwrap();
        assert!(!detect_doubling(&prev, &state_with(&[4.0, 1.0])).unwrap());
        assert!(detect_doubling(&prev, &state_with(&[5.0, 5.0])).unwrap());
        assert!(!detect_doubling(&prev, &prev).unwrap());
        // boundary: next = 2·prev exactly is not strictly larger
        assert!(!detect_doubling(&prev, &state_with(&[2.0, 2.0])).unwrap());
    }

    #[test]
    fn doubling_dimension_mismatch() {
        let a = CovarianceState::new(2, 1.0).unwrap();
        let b = CovarianceState::new(3, 1.0).unwrap();
        assert!(matches!(detect_doubling(&a, &b), Err(Error::Param(_))));
    }

    #[test]
    fn refresh_happens_on_schedule() {
        let mut s = CovarianceState::new(3, 1.0).unwrap();
        for i in 0..REFRESH_INTERVAL {
            let t = i as f64 * 0.37;
            s.rank1_update(&[0.5 * t.cos(), 0.5 * t.sin(), 0.5]).unwrap();
        }
        assert_eq!(s.updates_applied(), REFRESH_INTERVAL);
        let prod = s.matrix() * s.inverse() - DMatrix::identity(3, 3);
        assert!(max_abs(&prod) < 1e-12);
    }

    #[test]
    fn bound_formula() {
        // d = 2, H = 1, n = 2: 2·log(2)/log(2) = 2
        assert!((doubling_count_bound(2, 1, 2, 1.0) - 2.0).abs() < 1e-12);
    }
}
