//! Built-in scenarios for the flow-control experiment: the scalar plant
//! `ẋ = −0.82 x + 0.7279 u(t − 0.8)`, set-point 26 l/h, bound `x ≤ 26.6`,
//! starting from rest.

use crate::scenario::{
    CertificateSpec, ConstraintSpec, ControllerSpec, ErgField, ErgSpec, OutputSpec, ReferencePoint, RunSpec, Scenario,
    SystemSpec,
};

pub const NAMES: [&str; 8] = [
    "norg",
    "erg1",
    "erg2",
    "erg3",
    "erg4",
    "aggressive-norg",
    "aggressive-erg1",
    "aggressive-erg4",
];

pub const A: f64 = -0.82;
pub const B: f64 = 0.7279;
pub const TAU: f64 = 0.8;
pub const SET_POINT: f64 = 26.0;
pub const BOUND: f64 = 26.6;
pub const MILD_GAIN: f64 = -1.0;
pub const AGGRESSIVE_GAIN: f64 = -1.68;

/// Horizon for the terminal-margin presets: the shortest one the terminal
/// condition admits (`T ≥ τ`).
pub const TERMINAL_HORIZON: f64 = TAU;
pub const INFINITE_HORIZON: f64 = 7.0;
pub const KAPPA1: f64 = 50.0;
pub const KAPPA2: f64 = 20.0;
pub const ETA: f64 = 0.5;
pub const ZETA: f64 = 0.3;
pub const DELTA: f64 = 0.1;
pub const DURATION: f64 = 60.0;

fn s(x: f64) -> Vec<Vec<f64>> {
    vec![vec![x]]
}

fn base(gain: f64) -> Scenario {
    Scenario {
        system: SystemSpec {
            a: s(A),
            b: s(B),
            c: s(1.0),
            d: s(0.0),
            tau: TAU,
        },
        constraints: vec![ConstraintSpec {
            h_x: vec![-1.0],
            h_u: vec![0.0],
            g: BOUND,
        }],
        controller: ControllerSpec { k: s(gain) },
        certificate: None,
        erg: None,
        run: RunSpec {
            dt: 1e-3,
            duration: DURATION,
            x0: vec![0.0],
            v0: vec![0.0],
            reference: vec![ReferencePoint {
                t: 0.0,
                value: vec![SET_POINT],
            }],
            history: None,
        },
        output: OutputSpec::default(),
    }
}

fn governed(gain: f64, horizon: f64, terminal: bool, cert: Option<CertificateSpec>) -> Scenario {
    let mut sc = base(gain);
    sc.certificate = cert;
    sc.erg = Some(ErgField::Block(ErgSpec {
        horizon,
        kappa1: KAPPA1,
        kappa2: KAPPA2,
        eta: ETA,
        zeta: ZETA,
        delta: DELTA,
        variant: if terminal { "terminal" } else { "infinite_horizon" }.into(),
        update_period: Some(0.01),
    }));
    sc
}

fn r_cert(r: f64) -> CertificateSpec {
    CertificateSpec::KrasovskiiR {
        p: s(1.0),
        r: s(r),
        psi2: None,
        psi3: None,
        seed: Some(0),
    }
}

/// The named preset, or `None` for an unknown name.
pub fn scenario(name: &str) -> Option<Scenario> {
    let sc = match name {
        "norg" => base(MILD_GAIN),
        "erg1" => governed(MILD_GAIN, INFINITE_HORIZON, false, None),
        "erg2" => governed(
            MILD_GAIN,
            TERMINAL_HORIZON,
            true,
            Some(CertificateSpec::Razumikhin { p: s(1.0), q: -A }),
        ),
        "erg3" => governed(
            MILD_GAIN,
            TERMINAL_HORIZON,
            true,
            Some(CertificateSpec::KrasovskiiQ { p: s(1.0), q: s(0.86) }),
        ),
        "erg4" => governed(MILD_GAIN, TERMINAL_HORIZON, true, Some(r_cert(0.95))),
        "aggressive-norg" => base(AGGRESSIVE_GAIN),
        "aggressive-erg1" => governed(AGGRESSIVE_GAIN, INFINITE_HORIZON, false, None),
        "aggressive-erg4" => governed(AGGRESSIVE_GAIN, TERMINAL_HORIZON, true, Some(r_cert(0.64))),
        _ => return None,
    };
    Some(sc)
}
