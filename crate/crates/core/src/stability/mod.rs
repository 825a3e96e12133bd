//! Lyapunov constructs for the pre-stabilized delay loop `ė = A e + BK e(t − τ)`.
//!
//! Three certificate families are supported:
//!
//! | variant        | functional                                         | LMI size | delay-dependent |
//! |----------------|----------------------------------------------------|----------|-----------------|
//! | `Razumikhin`   | `max_{θ∈[−τ,0]} e(t+θ)ᵀ P e(t+θ)`                   | 2n       | no              |
//! | `KrasovskiiQ`  | `eᵀPe + ∫_{t−τ}^{t} eᵀ Q e`                        | 2n       | no              |
//! | `KrasovskiiR`  | `eᵀPe + ∫_{t−τ}^{t} (s − t + τ) ėᵀ R ė`            | 3n       | yes             |
//!
//! Every functional is bounded below by `e(t)ᵀ P e(t)`, which is what the
//! level-set threshold in [`threshold`] relies on.

mod functional;
mod lmi;
mod segment;
mod synth;
mod threshold;

pub use functional::{eval_functional, required_span};
pub use lmi::{lmi_feasible, lmi_matrix, max_eigenvalue, min_eigenvalue, positivity_issue, LmiCheck, PositivityIssue};
pub use segment::HistorySegment;
pub use synth::{
    optimize_p_volume, optimize_p_volume_with_budget, synthesize, synthesize_slack, synthesize_with_budget, SearchBudget,
    DEFAULT_LMI_MARGIN, MAX_SEARCH_DIM,
};
pub use threshold::{gamma_threshold, ThresholdMap};

use nalgebra::DMatrix;

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Razumikhin,
    KrasovskiiQ,
    KrasovskiiR,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Razumikhin, Variant::KrasovskiiQ, Variant::KrasovskiiR];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Razumikhin => "razumikhin",
            Variant::KrasovskiiQ => "krasovskii_q",
            Variant::KrasovskiiR => "krasovskii_r",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "razumikhin" => Some(Variant::Razumikhin),
            "krasovskii_q" | "krasovskiiq" => Some(Variant::KrasovskiiQ),
            "krasovskii_r" | "krasovskiir" => Some(Variant::KrasovskiiR),
            _ => None,
        }
    }

    /// Whether feasibility of the LMI depends on the delay value.
    pub fn delay_dependent(self) -> bool {
        matches!(self, Variant::KrasovskiiR)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of one Lyapunov construct. Positivity and LMI feasibility are
/// not enforced by construction; see [`lmi_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate<T: Scalar> {
    Razumikhin {
        p: DMatrix<T>,
        q: T,
    },
    KrasovskiiQ {
        p: DMatrix<T>,
        q: DMatrix<T>,
    },
    KrasovskiiR {
        p: DMatrix<T>,
        r: DMatrix<T>,
        psi2: DMatrix<T>,
        psi3: DMatrix<T>,
    },
}

impl<T: Scalar> Certificate<T> {
    pub fn variant(&self) -> Variant {
        match self {
            Certificate::Razumikhin { .. } => Variant::Razumikhin,
            Certificate::KrasovskiiQ { .. } => Variant::KrasovskiiQ,
            Certificate::KrasovskiiR { .. } => Variant::KrasovskiiR,
        }
    }

    pub fn p(&self) -> &DMatrix<T> {
        match self {
            Certificate::Razumikhin { p, .. } | Certificate::KrasovskiiQ { p, .. } | Certificate::KrasovskiiR { p, .. } => p,
        }
    }

    pub fn dim(&self) -> usize {
        self.p().nrows()
    }

    /// Multiplies every matrix that enters its LMI linearly by `alpha`; the
    /// Razumikhin rate `q` is scale-free and stays put.
    pub fn scaled(&self, alpha: T) -> Self {
        match self {
            Certificate::Razumikhin { p, q } => Certificate::Razumikhin { p: p * alpha, q: *q },
            Certificate::KrasovskiiQ { p, q } => Certificate::KrasovskiiQ {
                p: p * alpha,
                q: q * alpha,
            },
            Certificate::KrasovskiiR { p, r, psi2, psi3 } => Certificate::KrasovskiiR {
                p: p * alpha,
                r: r * alpha,
                psi2: psi2 * alpha,
                psi3: psi3 * alpha,
            },
        }
    }

    /// Rescaled so that the largest eigenvalue of `P` is one.
    pub fn normalized(&self) -> Self {
        let lmax = max_eigenvalue(self.p());
        if lmax > T::zero() {
            self.scaled(T::one() / lmax)
        } else {
            self.clone()
        }
    }
}
