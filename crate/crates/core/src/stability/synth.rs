//! Desk-scale certificate search.
//!
//! There is no SDP solver here: free matrices are parameterized through
//! Cholesky factors with exponentiated diagonals (so `P`, `Q`, `R` are positive
//! definite by construction), and a multi-start Nelder–Mead search maximizes
//! the LMI margin `−λ_max`. The LMIs are homogeneous in their matrix unknowns,
//! so margins are always measured after rescaling to `λ_max(P) = 1`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lmi::{lmi_feasible, lmi_matrix, max_eigenvalue, min_eigenvalue};
use super::{Certificate, Variant};
use crate::error::{check_dim, ErgError, Result};
use crate::model::{ConstraintSet, DelaySystem, PrimaryGain};
use crate::optim::NelderMead;
use crate::Scalar;

/// Default quantitative surrogate for the strict inequalities `< 0`.
pub const DEFAULT_LMI_MARGIN: f64 = 1e-6;

/// Largest state dimension the search is meant for.
pub const MAX_SEARCH_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub lmi_margin: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            restarts: 200,
            iterations: 500,
            lmi_margin: DEFAULT_LMI_MARGIN,
        }
    }
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `L Lᵀ` with `L` lower triangular, diagonal `exp(θ)`.
fn spd_from(params: &[T0], n: usize) -> DMatrix<T0> {
    let mut l = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] = if i == j { params[idx].exp() } else { params[idx] };
            idx += 1;
        }
    }
    &l * l.transpose()
}

// The search runs in f64 regardless of `T`; results are converted back.
type T0 = f64;

fn full_from(params: &[T0], n: usize) -> DMatrix<T0> {
    DMatrix::from_row_slice(n, n, &params[..n * n])
}

/// How a parameter vector maps to a certificate.
#[derive(Debug, Clone)]
enum Layout {
    Free(Variant),
    /// `KrasovskiiR` with `P` and `R` held fixed; only `Ψ₂`, `Ψ₃` move.
    Slack { p: DMatrix<T0>, r: DMatrix<T0> },
}

impl Layout {
    fn len(&self, n: usize) -> usize {
        match self {
            Layout::Free(Variant::Razumikhin) => tri_len(n) + 1,
            Layout::Free(Variant::KrasovskiiQ) => 2 * tri_len(n),
            Layout::Free(Variant::KrasovskiiR) => 2 * tri_len(n) + 2 * n * n,
            Layout::Slack { .. } => 2 * n * n,
        }
    }

    fn decode(&self, x: &[T0], n: usize) -> Certificate<T0> {
        let t = tri_len(n);
        match self {
            Layout::Free(Variant::Razumikhin) => Certificate::Razumikhin {
                p: spd_from(x, n),
                q: x[t].exp(),
            },
            Layout::Free(Variant::KrasovskiiQ) => Certificate::KrasovskiiQ {
                p: spd_from(x, n),
                q: spd_from(&x[t..], n),
            },
            Layout::Free(Variant::KrasovskiiR) => Certificate::KrasovskiiR {
                p: spd_from(x, n),
                r: spd_from(&x[t..], n),
                psi2: full_from(&x[2 * t..], n),
                psi3: full_from(&x[2 * t + n * n..], n),
            },
            Layout::Slack { p, r } => Certificate::KrasovskiiR {
                p: p.clone(),
                r: r.clone(),
                psi2: full_from(x, n),
                psi3: full_from(&x[n * n..], n),
            },
        }
    }

    /// Normalization is only meaningful when `P` is a free unknown.
    fn margin(&self, cert: &Certificate<T0>, sys: &DelaySystem<T0>, gain: &PrimaryGain<T0>) -> T0 {
        let scaled;
        let c = match self {
            Layout::Free(_) => {
                scaled = cert.normalized();
                &scaled
            }
            Layout::Slack { .. } => cert,
        };
        match lmi_matrix(c, sys, gain) {
            Ok(m) => -max_eigenvalue(&m),
            Err(_) => T0::NEG_INFINITY,
        }
    }

    fn initial_point(&self, n: usize, restart: usize, rng: &mut ChaCha8Rng) -> Vec<T0> {
        let len = self.len(n);
        let mut x = vec![0.0; len];
        let t = tri_len(n);
        let identity_into = |x: &mut [T0], offset: usize| {
            for i in 0..n {
                x[offset + i * n + i] = 1.0;
            }
        };
        if restart == 0 {
            // P = Q = R = I, q = 1, Ψ₂ = Ψ₃ = I
            match self {
                Layout::Free(Variant::KrasovskiiR) => {
                    identity_into(&mut x, 2 * t);
                    identity_into(&mut x, 2 * t + n * n);
                }
                Layout::Slack { .. } => {
                    identity_into(&mut x, 0);
                    identity_into(&mut x, n * n);
                }
                _ => {}
            }
            return x;
        }
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        match self {
            Layout::Free(Variant::Razumikhin) => x[t] = rng.gen_range(-3.0..1.5),
            Layout::Free(Variant::KrasovskiiR) => {
                for v in x[2 * t..].iter_mut() {
                    *v *= 2.0;
                }
            }
            Layout::Slack { .. } => {
                for v in x.iter_mut() {
                    *v *= 2.0;
                }
            }
            _ => {}
        }
        x
    }
}

fn to_f64_system<T: Scalar>(sys: &DelaySystem<T>, gain: &PrimaryGain<T>) -> Result<(DelaySystem<T0>, PrimaryGain<T0>)> {
    let cv = |m: &DMatrix<T>| m.map(|x| x.as_f64());
    let s = DelaySystem::new(cv(sys.a()), cv(sys.b()), cv(sys.c()), cv(sys.d()), sys.tau().as_f64())?;
    let g = PrimaryGain::new(cv(gain.k()), &s)?;
    Ok((s, g))
}

fn cert_from_f64<T: Scalar>(c: &Certificate<T0>) -> Certificate<T> {
    let cv = |m: &DMatrix<T0>| m.map(T::lit);
    match c {
        Certificate::Razumikhin { p, q } => Certificate::Razumikhin { p: cv(p), q: T::lit(*q) },
        Certificate::KrasovskiiQ { p, q } => Certificate::KrasovskiiQ { p: cv(p), q: cv(q) },
        Certificate::KrasovskiiR { p, r, psi2, psi3 } => Certificate::KrasovskiiR {
            p: cv(p),
            r: cv(r),
            psi2: cv(psi2),
            psi3: cv(psi3),
        },
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_SEARCH_DIM {
        Err(ErgError::TooLarge { n, limit: MAX_SEARCH_DIM })
    } else {
        Ok(())
    }
}

/// Maximizes the margin from one start; two chained simplex runs share the
/// iteration budget so a collapsed simplex gets rebuilt once.
fn climb(layout: &Layout, sys: &DelaySystem<T0>, gain: &PrimaryGain<T0>, x0: Vec<T0>, iterations: usize) -> (Vec<T0>, T0) {
    let n = sys.n();
    let objective = |x: &[T0]| -layout.margin(&layout.decode(x, n), sys, gain);
    let half = NelderMead {
        max_iterations: iterations.div_ceil(2),
        f_tolerance: 1e-13,
        initial_step: 0.5,
    };
    let first = half.minimize(objective, &x0);
    let second = NelderMead { initial_step: 0.1, ..half }.minimize(objective, &first.x);
    let best = if second.f <= first.f { second } else { first };
    (best.x, -best.f)
}

fn search(
    layout: Layout,
    sys: &DelaySystem<T0>,
    gain: &PrimaryGain<T0>,
    seed: u64,
    budget: SearchBudget,
) -> Result<(Certificate<T0>, Vec<T0>)> {
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_margin = T0::NEG_INFINITY;
    for restart in 0..budget.restarts {
        let x0 = layout.initial_point(n, restart, &mut rng);
        let (x, margin) = climb(&layout, sys, gain, x0, budget.iterations);
        if margin >= budget.lmi_margin {
            let cert = layout.decode(&x, n);
            let cert = match layout {
                Layout::Free(_) => cert.normalized(),
                Layout::Slack { .. } => cert,
            };
            if lmi_feasible(&cert, sys, gain, budget.lmi_margin)?.feasible {
                log::debug!("certificate found at restart {} with margin {:e}", restart, margin);
                return Ok((cert, x));
            }
        }
        best_margin = best_margin.max(margin);
    }
    Err(ErgError::Infeasible { best_margin })
}

/// Searches for a certificate of `variant` for the loop `(sys, gain)` with the
/// default budget (200 restarts × 500 iterations) and margin.
///
/// The result is normalized to `λ_max(P) = 1`. `Infeasible` means the search
/// came up empty, not that the loop is unstable.
pub fn synthesize<T: Scalar>(variant: Variant, sys: &DelaySystem<T>, gain: &PrimaryGain<T>, seed: u64) -> Result<Certificate<T>> {
    synthesize_with_budget(variant, sys, gain, seed, SearchBudget::default())
}

pub fn synthesize_with_budget<T: Scalar>(
    variant: Variant,
    sys: &DelaySystem<T>,
    gain: &PrimaryGain<T>,
    seed: u64,
    budget: SearchBudget,
) -> Result<Certificate<T>> {
    check_size(sys.n())?;
    let (s, g) = to_f64_system(sys, gain)?;
    let (cert, _) = search(Layout::Free(variant), &s, &g, seed, budget)?;
    Ok(cert_from_f64(&cert))
}

/// Completes a `KrasovskiiR` certificate whose `P` and `R` are given by
/// searching only the slack matrices `Ψ₂`, `Ψ₃`.
pub fn synthesize_slack<T: Scalar>(
    sys: &DelaySystem<T>,
    gain: &PrimaryGain<T>,
    p: &DMatrix<T>,
    r: &DMatrix<T>,
    seed: u64,
) -> Result<Certificate<T>> {
    let n = sys.n();
    check_size(n)?;
    check_dim("P dimension", n, p.nrows())?;
    check_dim("R dimension", n, r.nrows())?;
    let (s, g) = to_f64_system(sys, gain)?;
    let layout = Layout::Slack {
        p: p.map(|x| x.as_f64()),
        r: r.map(|x| x.as_f64()),
    };
    let (cert, _) = search(layout, &s, &g, seed, SearchBudget::default())?;
    Ok(cert_from_f64(&cert))
}

/// Volume-optimal certificate: minimizes `log det P` subject to
/// `P ⪰ h_cl h_clᵀ` for every constraint row and the variant's LMI.
///
/// Because every LMI here is homogeneous in its matrix unknowns, the row
/// constraints are handled exactly: the search minimizes the scale-free
/// `log det P + n·log max_i h_clᵀP⁻¹h_cl`, and the winner is rescaled so the
/// tightest row holds with equality. Local search only; not guaranteed
/// globally optimal.
pub fn optimize_p_volume<T: Scalar>(
    cs: &ConstraintSet<T>,
    sys: &DelaySystem<T>,
    gain: &PrimaryGain<T>,
    variant: Variant,
    seed: u64,
) -> Result<Certificate<T>> {
    optimize_p_volume_with_budget(cs, sys, gain, variant, seed, SearchBudget::default())
}

/// Number of feasible starts polished by the volume objective.
const VOLUME_STARTS: usize = 6;

pub fn optimize_p_volume_with_budget<T: Scalar>(
    cs: &ConstraintSet<T>,
    sys: &DelaySystem<T>,
    gain: &PrimaryGain<T>,
    variant: Variant,
    seed: u64,
    budget: SearchBudget,
) -> Result<Certificate<T>> {
    let n = sys.n();
    check_size(n)?;
    let (s, g) = to_f64_system(sys, gain)?;
    let normals: Vec<DVector<T0>> = cs
        .rows()
        .iter()
        .map(|row| row.closed_loop_normal(gain).map(|x| x.as_f64()))
        .filter(|h| h.amax() > 1e-14)
        .collect();
    if normals.is_empty() {
        return Err(ErgError::Unbounded);
    }
    for h in &normals {
        check_dim("constraint normal", n, h.len())?;
    }

    let layout = Layout::Free(variant);
    let worst_weight = |p: &DMatrix<T0>| -> Option<T0> {
        let chol = Cholesky::new(p.clone())?;
        Some(normals.iter().map(|h| chol.solve(h).dot(h)).fold(0.0, T0::max))
    };
    let volume = |x: &[T0]| -> T0 {
        let cert = layout.decode(x, n);
        let margin = layout.margin(&cert, &s, &g);
        if !(margin >= budget.lmi_margin) {
            return 1e6 * (1.0 + (budget.lmi_margin - margin).min(1e6));
        }
        let p = cert.p();
        let log_det: T0 = (0..n).map(|i| 2.0 * x[tri_len(i) + i]).sum();
        let Some(w) = worst_weight(p) else {
            return 1e12;
        };
        // keep P away from singular directions the rows do not see
        let cond = min_eigenvalue(p) / max_eigenvalue(p);
        let conditioning = if cond < 1e-8 { 1e3 * (1e-8 - cond) / 1e-8 } else { 0.0 };
        log_det + n as T0 * w.ln() + conditioning
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(T0, Vec<T0>)> = None;
    let mut feasible_starts = 0;
    let mut best_margin = T0::NEG_INFINITY;
    for restart in 0..budget.restarts {
        let x0 = layout.initial_point(n, restart, &mut rng);
        let (x, margin) = climb(&layout, &s, &g, x0, budget.iterations);
        best_margin = best_margin.max(margin);
        if margin < budget.lmi_margin {
            continue;
        }
        let nm = NelderMead {
            max_iterations: budget.iterations,
            f_tolerance: 1e-12,
            initial_step: 0.25,
        };
        let polished = nm.minimize(volume, &x);
        let polished = nm.minimize(volume, &polished.x);
        if best.as_ref().is_none_or(|(f, _)| polished.f < *f) {
            best = Some((polished.f, polished.x));
        }
        feasible_starts += 1;
        if feasible_starts >= VOLUME_STARTS {
            break;
        }
    }
    let Some((_, x)) = best else {
        return Err(ErgError::Infeasible { best_margin });
    };
    let cert = layout.decode(&x, n);
    let alpha = worst_weight(cert.p()).ok_or(ErgError::Infeasible { best_margin })?;
    let cert = cert.scaled(alpha);
    if !lmi_feasible(&cert, &s, &g, 0.0)?.feasible {
        return Err(ErgError::Infeasible { best_margin });
    }
    Ok(cert_from_f64(&cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstraintRow;

    fn flow() -> DelaySystem<f64> {
        DelaySystem::scalar(-0.82, 0.7279, 0.8).unwrap()
    }

    #[test]
    fn razumikhin_found_for_mild_gain() {
        let cert = synthesize(Variant::Razumikhin, &flow(), &PrimaryGain::scalar(-1.0), 7).unwrap();
        assert!((max_eigenvalue(cert.p()) - 1.0).abs() < 1e-12);
        assert!(lmi_feasible(&cert, &flow(), &PrimaryGain::scalar(-1.0), DEFAULT_LMI_MARGIN).unwrap().feasible);
    }

    #[test]
    fn razumikhin_not_found_for_aggressive_gain() {
        let err = synthesize(Variant::Razumikhin, &flow(), &PrimaryGain::scalar(-1.68), 7).unwrap_err();
        assert!(matches!(err, ErgError::Infeasible { .. }));
    }

    #[test]
    fn delay_dependent_found_for_aggressive_gain() {
        let gain = PrimaryGain::scalar(-1.68);
        let cert = synthesize(Variant::KrasovskiiR, &flow(), &gain, 3).unwrap();
        assert!(lmi_feasible(&cert, &flow(), &gain, DEFAULT_LMI_MARGIN).unwrap().feasible);
    }

    #[test]
    fn slack_completion_of_published_r_certificates() {
        let one = DMatrix::identity(1, 1);
        for (k, r) in [(-1.0, 0.95), (-1.68, 0.64)] {
            let gain = PrimaryGain::scalar(k);
            let cert = synthesize_slack(&flow(), &gain, &one, &DMatrix::from_element(1, 1, r), 1).unwrap();
            assert_eq!(cert.p(), &one);
            assert!(lmi_feasible(&cert, &flow(), &gain, DEFAULT_LMI_MARGIN).unwrap().feasible);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let gain = PrimaryGain::scalar(-1.0);
        let a = synthesize(Variant::KrasovskiiR, &flow(), &gain, 11).unwrap();
        let b = synthesize(Variant::KrasovskiiR, &flow(), &gain, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scalar_volume_optimum_binds_the_row() {
        let row = ConstraintRow::new(DVector::from_element(1, -1.0), DVector::zeros(1), 26.6).unwrap();
        let cs = ConstraintSet::new(vec![row], 1, 1).unwrap();
        for variant in Variant::ALL {
            let gain = PrimaryGain::scalar(-1.0);
            let cert = optimize_p_volume(&cs, &flow(), &gain, variant, 5).unwrap();
            assert!((cert.p()[(0, 0)] - 1.0).abs() < 1e-9, "{:?}", cert);
            assert!(lmi_feasible(&cert, &flow(), &gain, 0.0).unwrap().feasible);
        }
    }

    #[test]
    fn volume_without_usable_rows_is_unbounded() {
        let row = ConstraintRow::new(DVector::zeros(1), DVector::from_element(1, 1.0), 1.0).unwrap();
        let cs = ConstraintSet::new(vec![row], 1, 1).unwrap();
        let err = optimize_p_volume(&cs, &flow(), &PrimaryGain::scalar(0.0), Variant::Razumikhin, 0).unwrap_err();
        assert_eq!(err, ErgError::Unbounded);
    }

    #[test]
    fn two_state_volume_respects_rows() {
        let sys = DelaySystem::new(
            DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.0, -1.5]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.4]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            0.3,
        )
        .unwrap();
        let gain = PrimaryGain::new(DMatrix::from_row_slice(1, 2, &[-0.2, -0.3]), &sys).unwrap();
        let rows = vec![
            ConstraintRow::new(DVector::from_vec(vec![-1.0, 0.0]), DVector::zeros(1), 2.0).unwrap(),
            ConstraintRow::new(DVector::from_vec(vec![0.0, -1.0]), DVector::zeros(1), 2.0).unwrap(),
        ];
        let cs = ConstraintSet::new(rows, 2, 1).unwrap();
        let cert = optimize_p_volume(&cs, &sys, &gain, Variant::KrasovskiiQ, 2).unwrap();
        let chol = Cholesky::new(cert.p().clone()).unwrap();
        let mut worst: f64 = 0.0;
        for row in cs.rows() {
            let h = row.closed_loop_normal(&gain);
            worst = worst.max(chol.solve(&h).dot(&h));
        }
        assert!((worst - 1.0).abs() < 1e-9);
        assert!(lmi_feasible(&cert, &sys, &gain, 0.0).unwrap().feasible);
    }

    #[test]
    fn size_limit() {
        let n = 5;
        let sys = DelaySystem::new(
            DMatrix::<f64>::identity(n, n) * -1.0,
            DMatrix::zeros(n, 1),
            DMatrix::zeros(1, n),
            DMatrix::identity(1, 1),
            0.1,
        )
        .unwrap();
        let gain = PrimaryGain::new(DMatrix::zeros(1, n), &sys).unwrap();
        assert!(matches!(
            synthesize(Variant::Razumikhin, &sys, &gain, 0),
            Err(ErgError::TooLarge { .. })
        ));
    }
}
