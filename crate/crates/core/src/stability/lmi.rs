use nalgebra::{DMatrix, SymmetricEigen};

use super::Certificate;
use crate::error::{check_dim, Result};
use crate::model::{DelaySystem, PrimaryGain};
use crate::Scalar;

/// Why a certificate failed the positivity preconditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositivityIssue {
    NotSymmetric(&'static str),
    NotPositiveDefinite(&'static str),
    NonPositiveRate,
}

impl std::fmt::Display for PositivityIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PositivityIssue::NotSymmetric(m) => write!(f, "{} is not symmetric", m),
            PositivityIssue::NotPositiveDefinite(m) => write!(f, "{} is not positive definite", m),
            PositivityIssue::NonPositiveRate => f.write_str("q must be positive"),
        }
    }
}

/// Outcome of an LMI feasibility test.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiCheck<T> {
    pub feasible: bool,
    /// Largest eigenvalue of the assembled LMI; absent when a positivity
    /// precondition already failed.
    pub max_eigenvalue: Option<T>,
    pub issue: Option<PositivityIssue>,
}

impl<T: Scalar> LmiCheck<T> {
    /// `−λ_max`, or −∞ when the preconditions failed.
    pub fn margin(&self) -> T {
        match self.max_eigenvalue {
            Some(l) if self.issue.is_none() => -l,
            _ => T::min_value().unwrap_or_else(|| -T::lit(f64::MAX)),
        }
    }
}

pub fn max_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    match m.nrows() {
        0 => T::zero(),
        1 => m[(0, 0)],
        2 => {
            // closed form avoids the iterative solver in the synthesis hot loop
            let (a, b, d) = (m[(0, 0)], (m[(0, 1)] + m[(1, 0)]) * T::lit(0.5), m[(1, 1)]);
            let mean = (a + d) * T::lit(0.5);
            let half_diff = (a - d) * T::lit(0.5);
            mean + (half_diff * half_diff + b * b).sqrt()
        }
        _ => SymmetricEigen::new(symmetrize(m)).eigenvalues.max(),
    }
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    -max_eigenvalue(&(-m))
}

fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn is_symmetric<T: Scalar>(m: &DMatrix<T>) -> bool {
    let scale = m.amax().max(T::one());
    (m - m.transpose()).amax() <= T::tol(1e-10) * scale
}

fn check_pd<T: Scalar>(name: &'static str, m: &DMatrix<T>) -> Option<PositivityIssue> {
    if !is_symmetric(m) {
        return Some(PositivityIssue::NotSymmetric(name));
    }
    if !(min_eigenvalue(m) > T::zero()) {
        return Some(PositivityIssue::NotPositiveDefinite(name));
    }
    None
}

/// Positivity preconditions: `P ≻ 0` and `q > 0`, `Q ≻ 0` or `R ≻ 0`.
pub fn positivity_issue<T: Scalar>(cert: &Certificate<T>) -> Option<PositivityIssue> {
    match cert {
        Certificate::Razumikhin { p, q } => check_pd("P", p).or(if *q > T::zero() {
            None
        } else {
            Some(PositivityIssue::NonPositiveRate)
        }),
        Certificate::KrasovskiiQ { p, q } => check_pd("P", p).or_else(|| check_pd("Q", q)),
        Certificate::KrasovskiiR { p, r, .. } => check_pd("P", p).or_else(|| check_pd("R", r)),
    }
}

/// Assembles the symmetric LMI matrix of the certificate's variant:
///
/// - Razumikhin: `[AᵀP + PA + qP, PBK; *, −qP]`
/// - KrasovskiiQ: `[AᵀP + PA + Q, PBK; *, −Q]`
/// - KrasovskiiR, with `F = A + BK` and `Φ = FᵀΨ₂ + Ψ₂ᵀF`:
///   `[Φ, P − Ψ₂ᵀ + FᵀΨ₃, −τΨ₂ᵀBK; *, −Ψ₃ − Ψ₃ᵀ + τR, −τΨ₃ᵀBK; *, *, −τR]`
pub fn lmi_matrix<T: Scalar>(cert: &Certificate<T>, sys: &DelaySystem<T>, gain: &PrimaryGain<T>) -> Result<DMatrix<T>> {
    let n = sys.n();
    check_dim("certificate dimension", n, cert.dim())?;
    check_dim("gain columns", n, gain.k().ncols())?;
    check_dim("gain rows", sys.m(), gain.k().nrows())?;
    let a = sys.a();
    let bk = sys.b() * gain.k();

    let out = match cert {
        Certificate::Razumikhin { p, q } => {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            let pbk = p * &bk;
            m.view_mut((0, 0), (n, n)).copy_from(&(a.tr_mul(p) + p * a + p * *q));
            m.view_mut((0, n), (n, n)).copy_from(&pbk);
            m.view_mut((n, 0), (n, n)).copy_from(&pbk.transpose());
            m.view_mut((n, n), (n, n)).copy_from(&(p * -*q));
            m
        }
        Certificate::KrasovskiiQ { p, q } => {
            check_dim("Q dimension", n, q.nrows())?;
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            let pbk = p * &bk;
            m.view_mut((0, 0), (n, n)).copy_from(&(a.tr_mul(p) + p * a + q));
            m.view_mut((0, n), (n, n)).copy_from(&pbk);
            m.view_mut((n, 0), (n, n)).copy_from(&pbk.transpose());
            m.view_mut((n, n), (n, n)).copy_from(&(-q));
            m
        }
        Certificate::KrasovskiiR { p, r, psi2, psi3 } => {
            check_dim("R dimension", n, r.nrows())?;
            check_dim("Psi2 dimension", n, psi2.nrows())?;
            check_dim("Psi3 dimension", n, psi3.nrows())?;
            let tau = sys.tau();
            let f = a + &bk;
            let phi = f.tr_mul(psi2) + psi2.tr_mul(&f);
            let m12 = p - psi2.transpose() + f.tr_mul(psi3);
            let m13 = psi2.tr_mul(&bk) * -tau;
            let m22 = -psi3 - psi3.transpose() + r * tau;
            let m23 = psi3.tr_mul(&bk) * -tau;
            let m33 = r * -tau;
            let mut m = DMatrix::zeros(3 * n, 3 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&phi);
            m.view_mut((0, n), (n, n)).copy_from(&m12);
            m.view_mut((0, 2 * n), (n, n)).copy_from(&m13);
            m.view_mut((n, 0), (n, n)).copy_from(&m12.transpose());
            m.view_mut((n, n), (n, n)).copy_from(&m22);
            m.view_mut((n, 2 * n), (n, n)).copy_from(&m23);
            m.view_mut((2 * n, 0), (n, n)).copy_from(&m13.transpose());
            m.view_mut((2 * n, n), (n, n)).copy_from(&m23.transpose());
            m.view_mut((2 * n, 2 * n), (n, n)).copy_from(&m33);
            m
        }
    };
    Ok(symmetrize(&out))
}

/// Feasible iff the positivity preconditions hold and `λ_max(LMI) < −margin`.
pub fn lmi_feasible<T: Scalar>(
    cert: &Certificate<T>,
    sys: &DelaySystem<T>,
    gain: &PrimaryGain<T>,
    margin: T,
) -> Result<LmiCheck<T>> {
    if let Some(issue) = positivity_issue(cert) {
        return Ok(LmiCheck {
            feasible: false,
            max_eigenvalue: None,
            issue: Some(issue),
        });
    }
    let lmax = max_eigenvalue(&lmi_matrix(cert, sys, gain)?);
    Ok(LmiCheck {
        feasible: lmax < -margin,
        max_eigenvalue: Some(lmax),
        issue: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flow() -> DelaySystem<f64> {
        DelaySystem::scalar(-0.82, 0.7279, 0.8).unwrap()
    }

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn razumikhin_flow_matrix() {
        let cert = Certificate::Razumikhin { p: s(1.0), q: 0.82 };
        let m = lmi_matrix(&cert, &flow(), &PrimaryGain::scalar(-1.0)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-0.82, -0.7279, -0.7279, -0.82]);
        assert_relative_eq!(m, expected, epsilon = 1e-12);
        let check = lmi_feasible(&cert, &flow(), &PrimaryGain::scalar(-1.0), 0.0).unwrap();
        assert!(check.feasible);
        // eigenvalues −0.82 ± 0.7279
        assert_relative_eq!(check.max_eigenvalue.unwrap(), -0.82 + 0.7279, epsilon = 1e-12);
    }

    #[test]
    fn q_equal_qp_embeds_razumikhin() {
        let sys = DelaySystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.1, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            0.4,
        )
        .unwrap();
        let gain = PrimaryGain::new(DMatrix::from_row_slice(1, 2, &[-0.4, 0.2]), &sys).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.7]);
        let q = 0.9;
        let raz = lmi_matrix(&Certificate::Razumikhin { p: p.clone(), q }, &sys, &gain).unwrap();
        let kq = lmi_matrix(&Certificate::KrasovskiiQ { p: p.clone(), q: &p * q }, &sys, &gain).unwrap();
        assert_eq!(raz, kq);
    }

    #[test]
    fn zero_gain_removes_coupling() {
        let cert = Certificate::KrasovskiiQ { p: s(2.0), q: s(0.5) };
        let m = lmi_matrix(&cert, &flow(), &PrimaryGain::scalar(0.0)).unwrap();
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn published_q_certificate_is_feasible() {
        let cert = Certificate::KrasovskiiQ { p: s(1.0), q: s(0.86) };
        assert!(lmi_feasible(&cert, &flow(), &PrimaryGain::scalar(-1.0), 1e-6).unwrap().feasible);
    }

    #[test]
    fn razumikhin_infeasible_outside_gain_range() {
        let sys = flow();
        let gain = PrimaryGain::scalar(-1.2);
        for i in 1..400 {
            let q = i as f64 * 0.005;
            let check = lmi_feasible(&Certificate::Razumikhin { p: s(1.0), q }, &sys, &gain, 0.0).unwrap();
            assert!(!check.feasible, "q = {}", q);
        }
    }

    #[test]
    fn positivity_preconditions() {
        let sys = flow();
        let gain = PrimaryGain::scalar(-1.0);
        let check = lmi_feasible(&Certificate::Razumikhin { p: s(1.0), q: 0.0 }, &sys, &gain, 0.0).unwrap();
        assert!(!check.feasible);
        assert_eq!(check.issue, Some(PositivityIssue::NonPositiveRate));
        let check = lmi_feasible(&Certificate::KrasovskiiQ { p: s(-1.0), q: s(1.0) }, &sys, &gain, 0.0).unwrap();
        assert_eq!(check.issue, Some(PositivityIssue::NotPositiveDefinite("P")));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert_eq!(check_pd("P", &asym), Some(PositivityIssue::NotSymmetric("P")));
    }

    #[test]
    fn delay_dependent_block_layout() {
        // Scalar closed form of every block.
        let (a, b, k, tau) = (-0.82, 0.7279, -1.68, 0.8);
        let sys = flow();
        let cert = Certificate::KrasovskiiR {
            p: s(1.0),
            r: s(0.64),
            psi2: s(0.25),
            psi3: s(0.5),
        };
        let m = lmi_matrix(&cert, &sys, &PrimaryGain::scalar(k)).unwrap();
        let f = a + b * k;
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                2.0 * f * 0.25,
                1.0 - 0.25 + f * 0.5,
                -tau * 0.25 * b * k,
                1.0 - 0.25 + f * 0.5,
                -1.0 + tau * 0.64,
                -tau * 0.5 * b * k,
                -tau * 0.25 * b * k,
                -tau * 0.5 * b * k,
                -tau * 0.64,
            ],
        );
        assert_relative_eq!(m, expected, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_eigenvalue_matches_solver() {
        let m = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, -1.2, -2.0]);
        let reference = SymmetricEigen::new(m.clone()).eigenvalues.max();
        assert_relative_eq!(max_eigenvalue(&m), reference, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn feasibility_is_monotone_in_margin(
                p in 0.1f64..3.0, q in 0.01f64..3.0, k in -2.0f64..2.0,
                m1 in 0.0f64..0.5, m2 in 0.0f64..0.5,
            ) {
                let (lo, hi) = if m1 < m2 { (m1, m2) } else { (m2, m1) };
                let cert = Certificate::Razumikhin { p: s(p), q };
                let gain = PrimaryGain::scalar(k);
                let at_hi = lmi_feasible(&cert, &flow(), &gain, hi).unwrap().feasible;
                let at_lo = lmi_feasible(&cert, &flow(), &gain, lo).unwrap().feasible;
                prop_assert!(!at_hi || at_lo);
            }
        }
    }
}
