//! The delay plant `ẋ = A x + B u(t − τ)`, `y = C x + D u(t − τ)`, its linear
//! constraints `h_xᵀx + h_uᵀu + g ≥ 0`, the steady-state map `v ↦ (x̄_v, ū_v)`
//! and the primary law `u = ū_v + K (x − x̄_v)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, ErgError, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem<T: Scalar> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c: DMatrix<T>,
    d: DMatrix<T>,
    tau: T,
}

impl<T: Scalar> DelaySystem<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>, tau: T) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(ErgError::InvalidSystem(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        check_dim("B rows", n, b.nrows())?;
        let m = b.ncols();
        if m == 0 {
            return Err(ErgError::InvalidSystem("B has no columns".into()));
        }
        check_dim("C columns", n, c.ncols())?;
        let p = c.nrows();
        if p == 0 {
            return Err(ErgError::InvalidSystem("C has no rows".into()));
        }
        check_dim("D rows", p, d.nrows())?;
        check_dim("D columns", m, d.ncols())?;
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(ErgError::InvalidSystem(format!("delay must be positive, got {}", tau)));
        }
        let finite = |mat: &DMatrix<T>| mat.iter().all(|x| x.is_finite());
        if !(finite(&a) && finite(&b) && finite(&c) && finite(&d)) {
            return Err(ErgError::InvalidSystem("non-finite matrix entry".into()));
        }
        Ok(Self { a, b, c, d, tau })
    }

    /// Scalar plant `ẋ = a x + b u(t − τ)`, `y = x`.
    pub fn scalar(a: T, b: T, tau: T) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            tau,
        )
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }
    pub fn tau(&self) -> T {
        self.tau
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output / reference dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Same plant with a different delay.
    pub fn with_tau(&self, tau: T) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone(), tau)
    }
}

/// One linear constraint `h_xᵀx + h_uᵀu + g ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow<T: Scalar> {
    pub h_x: DVector<T>,
    pub h_u: DVector<T>,
    pub g: T,
}

impl<T: Scalar> ConstraintRow<T> {
    pub fn new(h_x: DVector<T>, h_u: DVector<T>, g: T) -> Result<Self> {
        if h_x.iter().all(|v| v.is_zero()) && h_u.iter().all(|v| v.is_zero()) {
            return Err(ErgError::InvalidConstraint("h_x and h_u are both zero".into()));
        }
        if !g.is_finite() || h_x.iter().chain(h_u.iter()).any(|v| !v.is_finite()) {
            return Err(ErgError::InvalidConstraint("non-finite coefficient".into()));
        }
        Ok(Self { h_x, h_u, g })
    }

    #[inline]
    pub fn residual(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        self.h_x.dot(x) + self.h_u.dot(u) + self.g
    }

    /// Normal of the row seen through the primary loop, `h_x + Kᵀ h_u`.
    pub fn closed_loop_normal(&self, gain: &PrimaryGain<T>) -> DVector<T> {
        &self.h_x + gain.k().tr_mul(&self.h_u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet<T: Scalar> {
    rows: Vec<ConstraintRow<T>>,
}

impl<T: Scalar> ConstraintSet<T> {
    /// Validates that the set is non-empty and every row matches `(n, m)`.
    pub fn new(rows: Vec<ConstraintRow<T>>, n: usize, m: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(ErgError::InvalidConstraint("at least one constraint row is required".into()));
        }
        for row in &rows {
            check_dim("constraint h_x", n, row.h_x.len())?;
            check_dim("constraint h_u", m, row.h_u.len())?;
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ConstraintRow<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Componentwise `h_xᵀx + h_uᵀu + g`; non-negative entries are satisfied.
    pub fn residuals(&self, x: &DVector<T>, u: &DVector<T>) -> Result<DVector<T>> {
        let (n, m) = (self.rows[0].h_x.len(), self.rows[0].h_u.len());
        check_dim("state", n, x.len())?;
        check_dim("input", m, u.len())?;
        Ok(DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| r.residual(x, u)),
        ))
    }

    /// Smallest residual, without allocating.
    pub fn min_residual(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        self.rows
            .iter()
            .map(|r| r.residual(x, u))
            .fold(T::max_value().unwrap_or_else(T::one), |acc, r| acc.min(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium<T: Scalar> {
    pub x_bar: DVector<T>,
    pub u_bar: DVector<T>,
    pub v: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryGain<T: Scalar> {
    k: DMatrix<T>,
}

impl<T: Scalar> PrimaryGain<T> {
    pub fn new(k: DMatrix<T>, sys: &DelaySystem<T>) -> Result<Self> {
        check_dim("gain rows", sys.m(), k.nrows())?;
        check_dim("gain columns", sys.n(), k.ncols())?;
        Ok(Self { k })
    }

    pub fn scalar(k: T) -> Self {
        Self {
            k: DMatrix::from_element(1, 1, k),
        }
    }

    pub fn k(&self) -> &DMatrix<T> {
        &self.k
    }

    /// `ū + K (x − x̄)`.
    pub fn primary_input(&self, eq: &Equilibrium<T>, x: &DVector<T>) -> Result<DVector<T>> {
        check_dim("state", self.k.ncols(), x.len())?;
        check_dim("equilibrium state", self.k.ncols(), eq.x_bar.len())?;
        check_dim("equilibrium input", self.k.nrows(), eq.u_bar.len())?;
        Ok(&eq.u_bar + &self.k * (x - &eq.x_bar))
    }
}

/// Linear map from a reference to its (minimum-norm) equilibrium.
///
/// The equilibrium equations `A x̄ + B ū = 0`, `C x̄ + D ū = v` are linear in `v`,
/// so the pseudo-inverse of `[A B; C D]` is computed once and reused.
#[derive(Debug, Clone)]
pub struct SteadyStateMap<T: Scalar> {
    n: usize,
    m: usize,
    p: usize,
    augmented: DMatrix<T>,
    pinv: DMatrix<T>,
    /// `x̄_v = mx · v`
    mx: DMatrix<T>,
    /// `ū_v = mu · v`
    mu: DMatrix<T>,
}

impl<T: Scalar> SteadyStateMap<T> {
    pub fn new(sys: &DelaySystem<T>) -> Self {
        let (n, m, p) = (sys.n(), sys.m(), sys.p());
        let mut augmented = DMatrix::zeros(n + p, n + m);
        augmented.view_mut((0, 0), (n, n)).copy_from(sys.a());
        augmented.view_mut((0, n), (n, m)).copy_from(sys.b());
        augmented.view_mut((n, 0), (p, n)).copy_from(sys.c());
        augmented.view_mut((n, n), (p, m)).copy_from(sys.d());

        let svd = augmented.clone().svd(true, true);
        let smax = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
        let cutoff = smax * T::default_epsilon() * T::from_count((n + p).max(n + m) as i64) * T::lit(10.0);
        let pinv = svd
            .pseudo_inverse(cutoff)
            .expect("SVD was computed with both U and Vᵀ");

        // Columns of the pseudo-inverse that act on the `v` block.
        let tail = pinv.columns(n, p);
        let mx = tail.rows(0, n).into_owned();
        let mu = tail.rows(n, m).into_owned();
        Self {
            n,
            m,
            p,
            augmented,
            pinv,
            mx,
            mu,
        }
    }

    pub fn mx(&self) -> &DMatrix<T> {
        &self.mx
    }

    pub fn mu(&self) -> &DMatrix<T> {
        &self.mu
    }

    /// Minimum-norm equilibrium for `v`, or `NoEquilibrium` when the equations
    /// are inconsistent.
    pub fn equilibrium(&self, v: &DVector<T>) -> Result<Equilibrium<T>> {
        check_dim("reference", self.p, v.len())?;
        let mut rhs = DVector::zeros(self.n + self.p);
        rhs.rows_mut(self.n, self.p).copy_from(v);
        let z = &self.pinv * &rhs;
        let residual = (&self.augmented * &z - &rhs).norm() / (T::one() + rhs.norm());
        if !(residual <= T::tol(1e-8)) {
            return Err(ErgError::NoEquilibrium {
                residual: residual.as_f64(),
            });
        }
        Ok(Equilibrium {
            x_bar: z.rows(0, self.n).into_owned(),
            u_bar: z.rows(self.n, self.m).into_owned(),
            v: v.clone(),
        })
    }

    /// Equilibrium without the consistency check; for repeated evaluation along
    /// a path that was already validated.
    pub fn equilibrium_unchecked(&self, v: &DVector<T>) -> Equilibrium<T> {
        Equilibrium {
            x_bar: &self.mx * v,
            u_bar: &self.mu * v,
            v: v.clone(),
        }
    }

    /// Steady-state residuals of every constraint row at `v`.
    pub fn steady_residuals(&self, cs: &ConstraintSet<T>, v: &DVector<T>) -> Result<DVector<T>> {
        let eq = self.equilibrium(v)?;
        cs.residuals(&eq.x_bar, &eq.u_bar)
    }

    /// Gradient of the steady-state residual of `row` with respect to `v`.
    pub fn residual_gradient(&self, row: &ConstraintRow<T>) -> DVector<T> {
        self.mx.tr_mul(&row.h_x) + self.mu.tr_mul(&row.h_u)
    }
}

/// Equilibrium of `sys` for the constant reference `v`.
pub fn steady_state<T: Scalar>(sys: &DelaySystem<T>, v: &DVector<T>) -> Result<Equilibrium<T>> {
    SteadyStateMap::new(sys).equilibrium(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flow() -> DelaySystem<f64> {
        DelaySystem::scalar(-0.82, 0.7279, 0.8).unwrap()
    }

    fn flow_constraint() -> ConstraintSet<f64> {
        let row = ConstraintRow::new(DVector::from_element(1, -1.0), DVector::zeros(1), 26.6).unwrap();
        ConstraintSet::new(vec![row], 1, 1).unwrap()
    }

    #[test]
    fn flow_steady_state() {
        let eq = steady_state(&flow(), &DVector::from_element(1, 26.0)).unwrap();
        // a x + b u = 0 with x = 26
        let u_exact = 0.82 * 26.0 / 0.7279;
        assert_relative_eq!(eq.x_bar[0], 26.0, epsilon = 1e-12);
        assert_relative_eq!(eq.u_bar[0], u_exact, epsilon = 1e-10);
        assert!((eq.u_bar[0] - 29.29).abs() < 0.01);
    }

    #[test]
    fn zero_reference_gives_zero_equilibrium() {
        let sys = DelaySystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            0.3,
        )
        .unwrap();
        let eq = steady_state(&sys, &DVector::zeros(1)).unwrap();
        assert!(eq.x_bar.norm() < 1e-15 && eq.u_bar.norm() < 1e-15);
    }

    #[test]
    fn inconsistent_equilibrium_is_rejected() {
        // B = 0 and A nonsingular: x̄ = 0, so y = v ≠ 0 is unreachable.
        let sys = DelaySystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            0.5,
        )
        .unwrap();
        let err = steady_state(&sys, &DVector::from_element(1, 1.0)).unwrap_err();
        assert!(matches!(err, ErgError::NoEquilibrium { .. }));
    }

    #[test]
    fn non_square_uses_minimum_norm() {
        // Two inputs drive one integrator-free state; infinitely many ū.
        let sys = DelaySystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 2),
            0.1,
        )
        .unwrap();
        let eq = steady_state(&sys, &DVector::from_element(1, 2.0)).unwrap();
        assert_relative_eq!(eq.x_bar[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(eq.u_bar[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(eq.u_bar[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_examples() {
        let cs = flow_constraint();
        let u = DVector::from_element(1, 123.0);
        let r = cs.residuals(&DVector::from_element(1, 26.0), &u).unwrap();
        assert_relative_eq!(r[0], 0.6, epsilon = 1e-12);
        let r = cs.residuals(&DVector::from_element(1, 26.6), &u).unwrap();
        assert_eq!(r[0], 0.0);
        let r = cs.residuals(&DVector::from_element(1, 27.0), &u).unwrap();
        assert_relative_eq!(r[0], -0.4, epsilon = 1e-12);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let cs = flow_constraint();
        let err = cs.residuals(&DVector::zeros(2), &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, ErgError::DimensionMismatch { .. }));
    }

    #[test]
    fn zero_constraint_row_rejected() {
        assert!(ConstraintRow::new(DVector::<f64>::zeros(1), DVector::zeros(1), 1.0).is_err());
        assert!(ConstraintSet::<f64>::new(vec![], 1, 1).is_err());
    }

    #[test]
    fn primary_input_examples() {
        let sys = flow();
        let eq = steady_state(&sys, &DVector::from_element(1, 26.0)).unwrap();
        let gain = PrimaryGain::scalar(-1.0);
        let at_eq = gain.primary_input(&eq, &eq.x_bar).unwrap();
        assert_eq!(at_eq, eq.u_bar);
        let u = gain.primary_input(&eq, &DVector::from_element(1, 20.0)).unwrap();
        assert_relative_eq!(u[0], eq.u_bar[0] + 6.0, epsilon = 1e-12);
        assert!((u[0] - 35.29).abs() < 0.01);
        let zero = PrimaryGain::scalar(0.0);
        let u = zero.primary_input(&eq, &DVector::from_element(1, -7.0)).unwrap();
        assert_eq!(u, eq.u_bar);
    }

    #[test]
    fn steady_state_admissibility_of_flow_setpoint() {
        let sys = flow();
        let map = SteadyStateMap::new(&sys);
        let r = map.steady_residuals(&flow_constraint(), &DVector::from_element(1, 26.0)).unwrap();
        assert!(r[0] > 0.0);
        assert_relative_eq!(r[0], 0.6, epsilon = 1e-10);
    }

    #[test]
    fn invalid_systems() {
        assert!(DelaySystem::scalar(-1.0, 1.0, 0.0).is_err());
        assert!(DelaySystem::scalar(-1.0, 1.0, -0.1).is_err());
        let bad = DelaySystem::new(
            DMatrix::<f64>::zeros(2, 2),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
            1.0,
        );
        assert!(matches!(bad, Err(ErgError::DimensionMismatch { .. })));
    }

    #[test]
    fn f32_steady_state() {
        let sys = DelaySystem::<f32>::scalar(-0.82, 0.7279, 0.8).unwrap();
        let eq = steady_state(&sys, &DVector::from_element(1, 26.0f32)).unwrap();
        assert!((eq.x_bar[0] - 26.0).abs() < 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_system(vals: &[f64]) -> DelaySystem<f64> {
            // 2 states, 1 input, 1 output, A Hurwitz-ish by diagonal shift.
            DelaySystem::new(
                DMatrix::from_row_slice(2, 2, &[vals[0] - 3.0, vals[1], vals[2], vals[3] - 3.0]),
                DMatrix::from_row_slice(2, 1, &[vals[4], 1.0 + vals[5].abs()]),
                DMatrix::from_row_slice(1, 2, &[1.0, vals[6]]),
                DMatrix::zeros(1, 1),
                0.2,
            )
            .unwrap()
        }

        proptest! {
            #[test]
            fn primary_input_is_affine(
                vals in prop::collection::vec(-1.0f64..1.0, 7),
                k in prop::collection::vec(-2.0f64..2.0, 2),
                x1 in prop::collection::vec(-10.0f64..10.0, 2),
                x2 in prop::collection::vec(-10.0f64..10.0, 2),
                v in -5.0f64..5.0,
            ) {
                let sys = random_system(&vals);
                let gain = PrimaryGain::new(DMatrix::from_row_slice(1, 2, &k), &sys).unwrap();
                let Ok(eq) = steady_state(&sys, &DVector::from_element(1, v)) else { return Ok(()); };
                let (x1, x2) = (DVector::from_vec(x1), DVector::from_vec(x2));
                let du = gain.primary_input(&eq, &x1).unwrap() - gain.primary_input(&eq, &x2).unwrap();
                let expected = gain.k() * (&x1 - &x2);
                prop_assert!((du - expected).norm() <= 1e-9 * (1.0 + x1.norm() + x2.norm()));
            }

            #[test]
            fn equilibrium_has_zero_drift(
                vals in prop::collection::vec(-1.0f64..1.0, 7),
                k in prop::collection::vec(-2.0f64..2.0, 2),
                v in -50.0f64..50.0,
            ) {
                let sys = random_system(&vals);
                let gain = PrimaryGain::new(DMatrix::from_row_slice(1, 2, &k), &sys).unwrap();
                let Ok(eq) = steady_state(&sys, &DVector::from_element(1, v)) else { return Ok(()); };
                let u = gain.primary_input(&eq, &eq.x_bar).unwrap();
                let drift = sys.a() * &eq.x_bar + sys.b() * u;
                prop_assert!(drift.norm() <= 1e-9 * (1.0 + eq.x_bar.norm()));
                let out = sys.c() * &eq.x_bar + sys.d() * &eq.u_bar - &eq.v;
                prop_assert!(out.norm() <= 1e-9 * (1.0 + v.abs()));
            }
        }
    }
}
