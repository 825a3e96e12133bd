mod common;

use common::*;
use erg_core::model::{ConstraintRow, ConstraintSet, DelaySystem, PrimaryGain};
use erg_core::sim::{step_closed_loop, SimState};
use erg_core::stability::{
    eval_functional, gamma_threshold, lmi_feasible, synthesize, synthesize_slack, Certificate, ThresholdMap, Variant,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flow_certificates() -> Vec<Certificate<f64>> {
    let sys = DelaySystem::scalar(A, B, TAU).unwrap();
    let gain = PrimaryGain::scalar(-1.0);
    vec![
        Certificate::Razumikhin { p: m1(1.0), q: -A },
        Certificate::KrasovskiiQ { p: m1(1.0), q: m1(0.86) },
        synthesize_slack(&sys, &gain, &m1(1.0), &m1(0.95), 0).unwrap(),
    ]
}

#[test]
fn functionals_do_not_increase_along_frozen_trajectories() {
    let cl = flow_loop(-1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for cert in flow_certificates() {
        assert!(lmi_feasible(&cert, cl.system(), cl.gain(), 0.0).unwrap().feasible);
        for _ in 0..4 {
            let v = v1(rng.gen_range(0.0..26.0));
            let x_bar = cl.steady_state().equilibrium(&v).unwrap().x_bar;
            let x0 = v1(rng.gen_range(-20.0..40.0));
            let mut st = SimState::constant_history(cl.system(), 1e-3, x0, v.clone(), 2.0 * TAU).unwrap();
            let value = |st: &SimState<f64>| {
                let seg = st.error_segment(&cl, &x_bar, TAU).unwrap();
                eval_functional(&cert, cl.system(), cl.gain(), &seg).unwrap()
            };
            let v0 = value(&st);
            let mut prev = v0;
            for i in 0..8000 {
                step_closed_loop(&cl, &mut st, &v).unwrap();
                let now = value(&st);
                assert!(
                    now <= prev + 1e-6 * v0,
                    "{:?} step {i}: {prev} → {now} (V(0) = {v0})",
                    cert.variant()
                );
                prev = now;
            }
            assert!(prev < 1e-3 * v0, "{:?} did not decay: {prev} of {v0}", cert.variant());
        }
    }
}

#[test]
fn scalar_razumikhin_matches_closed_form() {
    // feasible exactly when a < 0 and (bk)² < a²
    for i in -20..=20 {
        let k = i as f64 / 10.0;
        let sys = DelaySystem::scalar(A, B, TAU).unwrap();
        let found = synthesize(Variant::Razumikhin, &sys, &PrimaryGain::scalar(k), 0).is_ok();
        let expected = (B * k).powi(2) < A * A;
        assert_eq!(found, expected, "k = {k}");
    }
}

#[test]
fn feasibility_is_monotone_in_margin() {
    let sys = DelaySystem::scalar(A, B, TAU).unwrap();
    for k in [-1.6, -1.0, 0.5, 1.1] {
        let gain = PrimaryGain::scalar(k);
        for cert in flow_certificates() {
            let check = |m: f64| lmi_feasible(&cert, &sys, &gain, m).unwrap().feasible;
            let margins = [0.5, 0.1, 1e-2, 1e-4, 1e-6, 0.0, -1e-3];
            for w in margins.windows(2) {
                assert!(!check(w[0]) || check(w[1]), "k = {k}, {:?}: margin {} → {}", cert.variant(), w[0], w[1]);
            }
        }
    }
}

/// Random rows `h_xᵀx + h_uᵀu + g ≥ 0`, all strictly satisfied at the origin.
fn random_constraints(rng: &mut ChaCha8Rng, n: usize, m: usize, rows: usize) -> ConstraintSet<f64> {
    let rows = (0..rows)
        .map(|_| ConstraintRow::new(random_vector(rng, n, 1.0), random_vector(rng, m, 1.0), rng.gen_range(0.5..3.0)).unwrap())
        .collect();
    ConstraintSet::new(rows, n, m).unwrap()
}

#[test]
fn level_set_scaling_keeps_the_razumikhin_margin_sign() {
    let cl = flow_loop(-1.0);
    let cs = flow_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cert = Certificate::Razumikhin { p: m1(1.0), q: -A };
    for _ in 0..200 {
        let v = v1(rng.gen_range(0.0..26.5));
        let eq = cl.steady_state().equilibrium(&v).unwrap();
        let amp = rng.gen_range(0.0..3.0);
        let xs = wavy_history(&mut rng, &eq.x_bar, amp, 1e-2, TAU);
        let seg = erg_core::stability::HistorySegment::uniform(
            -TAU,
            1e-2,
            xs.iter().map(|x| x - &eq.x_bar).collect(),
        )
        .unwrap();
        let alpha = rng.gen_range(1e-3..1e3);
        let margin = |c: &Certificate<f64>| {
            gamma_threshold(&cs, c.p(), cl.gain(), &eq).unwrap() - eval_functional(c, cl.system(), cl.gain(), &seg).unwrap()
        };
        let (d1, d2) = (margin(&cert), margin(&cert.scaled(alpha)));
        assert_eq!(d1 > 0.0, d2 > 0.0, "α = {alpha}: {d1} vs {d2}");
        assert!((d2 - alpha * d1).abs() <= 1e-9 * alpha * (1.0 + d1.abs()));
    }
}

fn spd(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |i, j| if j <= i { entries[i * n + j] } else { 0.0 });
    &l * l.transpose() + DMatrix::identity(n, n) * 0.05
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The threshold `Γ_i` is the level at which the ellipsoid `eᵀPe ≤ Γ_i`
    /// just touches row i: its support function in the direction `−h_cl`
    /// equals the steady-state residual.
    #[test]
    fn thresholds_touch_their_constraints(
        n in 1usize..=4,
        m in 1usize..=2,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = spd(n, &entries);
        let sys = DelaySystem::new(
            DMatrix::identity(n, n) * -1.0,
            random_matrix(&mut rng, n, m, 1.0),
            random_matrix(&mut rng, m, n, 1.0),
            DMatrix::zeros(m, m),
            0.5,
        ).unwrap();
        let gain = PrimaryGain::new(random_matrix(&mut rng, m, n, 1.0), &sys).unwrap();
        let cs = random_constraints(&mut rng, n, m, 3);
        let map = erg_core::model::SteadyStateMap::new(&sys);
        let v = random_vector(&mut rng, m, 0.2);
        let eq = map.equilibrium_unchecked(&v);
        let residuals = cs.residuals(&eq.x_bar, &eq.u_bar).unwrap();
        prop_assume!(residuals.iter().all(|&r| r > 1e-3));

        let thresholds = ThresholdMap::new(&cs, &p, &gain).unwrap().per_row(&residuals).unwrap();
        let p_inv = p.clone().lu().try_inverse().unwrap();
        for (i, row) in cs.rows().iter().enumerate() {
            let h = &row.h_x + gain.k().transpose() * &row.h_u;
            let Some(gamma) = thresholds[i] else { continue };
            let w = h.dot(&(&p_inv * &h));
            let support = (gamma * w).sqrt();
            prop_assert!((support - residuals[i]).abs() <= 1e-9 * (1.0 + residuals[i]));

            // the maximizer sits on the level set and attains the support value
            let e_star: DVector<f64> = -(&p_inv * &h) * (gamma / w).sqrt();
            prop_assert!((e_star.dot(&(&p * &e_star)) - gamma).abs() <= 1e-9 * (1.0 + gamma));
            prop_assert!((-h.dot(&e_star) - support).abs() <= 1e-9 * (1.0 + support));

            // and no other point of the level set does better
            for _ in 0..20 {
                let d = random_vector(&mut rng, n, 1.0);
                let q = d.dot(&(&p * &d));
                if q <= 0.0 { continue; }
                let e = d * (gamma / q).sqrt();
                prop_assert!(-h.dot(&e) <= support * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
