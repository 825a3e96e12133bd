use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{check_dim, ErgError, Result};
use crate::model::{ConstraintSet, Equilibrium, PrimaryGain};
use crate::Scalar;

/// Precomputed `h_clᵀ P⁻¹ h_cl` per constraint row, with `h_cl = h_x + Kᵀh_u`.
///
/// The largest level `Γ_i` of `eᵀPe` whose sublevel set keeps row `i`
/// satisfied around `(x̄_v, ū_v)` is `residual_i(v)² / (h_clᵀ P⁻¹ h_cl)`.
#[derive(Debug, Clone)]
pub struct ThresholdMap<T: Scalar> {
    /// `None` marks a degenerate row (`h_cl = 0`) that bounds nothing.
    weights: Vec<Option<T>>,
}

impl<T: Scalar> ThresholdMap<T> {
    pub fn new(cs: &ConstraintSet<T>, p: &DMatrix<T>, gain: &PrimaryGain<T>) -> Result<Self> {
        let n = p.nrows();
        check_dim("P columns", n, p.ncols())?;
        let chol = Cholesky::new(p.clone())
            .ok_or_else(|| ErgError::InvalidConfig("certificate P is not positive definite".into()))?;
        let mut weights = Vec::with_capacity(cs.len());
        for (i, row) in cs.rows().iter().enumerate() {
            let h = row.closed_loop_normal(gain);
            check_dim("constraint normal", n, h.len())?;
            let scale = row.h_x.amax().max(row.h_u.amax());
            if h.amax() <= T::tol(1e-14) * scale.max(T::one()) {
                log::warn!("constraint {} has a zero closed-loop normal and is excluded from the level-set threshold", i);
                weights.push(None);
                continue;
            }
            let w = chol.solve(&h).dot(&h);
            weights.push(Some(w));
        }
        if weights.iter().all(Option::is_none) {
            return Err(ErgError::DegenerateConstraint);
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[Option<T>] {
        &self.weights
    }

    /// Per-row thresholds for the given steady-state residuals.
    pub fn per_row(&self, residuals: &DVector<T>) -> Result<Vec<Option<T>>> {
        check_dim("residuals", self.weights.len(), residuals.len())?;
        let mut out = Vec::with_capacity(self.weights.len());
        for (i, (w, &r)) in self.weights.iter().zip(residuals.iter()).enumerate() {
            if !(r > T::zero()) {
                return Err(ErgError::ReferenceNotStrictlyAdmissible {
                    row: i,
                    residual: r.as_f64(),
                });
            }
            out.push(w.map(|w| r * r / w));
        }
        Ok(out)
    }

    /// `Γ = min_i Γ_i` over the non-degenerate rows.
    pub fn gamma(&self, residuals: &DVector<T>) -> Result<T> {
        let rows = self.per_row(residuals)?;
        Ok(rows
            .into_iter()
            .flatten()
            .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b)))
    }
}

/// Level-set threshold `Γ(v)` for the equilibrium `eq` and the certificate
/// matrix `p`.
pub fn gamma_threshold<T: Scalar>(
    cs: &ConstraintSet<T>,
    p: &DMatrix<T>,
    gain: &PrimaryGain<T>,
    eq: &Equilibrium<T>,
) -> Result<T> {
    let residuals = cs.residuals(&eq.x_bar, &eq.u_bar)?;
    ThresholdMap::new(cs, p, gain)?.gamma(&residuals)
}
