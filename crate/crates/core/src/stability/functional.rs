use nalgebra::{DMatrix, DVector};

use super::{Certificate, HistorySegment, Variant};
use crate::error::{check_dim, ErgError, Result};
use crate::model::{DelaySystem, PrimaryGain};
use crate::Scalar;

/// Window a segment must span for `variant`. Reconstructing `ė(θ)` from the
/// loop model needs `e(θ − τ)` as well, hence `2τ` when no derivative samples
/// are attached.
pub fn required_span<T: Scalar>(variant: Variant, tau: T, has_derivatives: bool) -> T {
    match variant {
        Variant::KrasovskiiR if !has_derivatives => tau + tau,
        _ => tau,
    }
}

#[inline]
pub(crate) fn quad<T: Scalar>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(m * x))
}

/// Value of the certificate's functional on the error segment `seg`, taken at
/// the segment's last instant. Integrals use the trapezoid rule on the sample
/// grid; the left end of the window `t − τ` is linearly interpolated when it
/// falls between samples.
pub fn eval_functional<T: Scalar>(
    cert: &Certificate<T>,
    sys: &DelaySystem<T>,
    gain: &PrimaryGain<T>,
    seg: &HistorySegment<T>,
) -> Result<T> {
    let n = sys.n();
    check_dim("segment dimension", n, seg.dim())?;
    check_dim("certificate dimension", n, cert.dim())?;

    let tau = sys.tau();
    let dt = seg.dt();
    let need = required_span(cert.variant(), tau, seg.derivatives().is_some());
    if seg.span() < need - dt * T::lit(1e-6) {
        return Err(ErgError::InsufficientSpan {
            required: need.as_f64(),
            available: seg.span().as_f64(),
        });
    }

    let t_end = seg.end();
    let window_start = t_end - tau;
    let values = seg.values();
    let last = values.len() - 1;

    // Grid index of the first sample strictly inside the window and the
    // (possibly interpolated) left boundary sample.
    let s = (window_start - seg.start()) / dt;
    let s_round = s.round();
    let on_grid = (s - s_round).abs() <= T::lit(1e-9);
    let first_inside = if on_grid {
        s_round.to_usize().unwrap_or(0) + 1
    } else {
        s.floor().to_usize().unwrap_or(0) + 1
    };
    let boundary = if on_grid {
        values[s_round.to_usize().unwrap_or(0).min(last)].clone()
    } else {
        seg.value_at(window_start)?
    };

    let e_now = &values[last];
    let p = cert.p();
    let head = quad(p, e_now);

    match cert {
        Certificate::Razumikhin { p, .. } => {
            let mut v = quad(p, &boundary);
            for e in &values[first_inside.min(last + 1)..] {
                v = v.max(quad(p, e));
            }
            Ok(v)
        }
        Certificate::KrasovskiiQ { q, .. } => {
            let integral = trapezoid(
                window_start,
                quad(q, &boundary),
                (first_inside..=last).map(|i| (seg.time(i), quad(q, &values[i]))),
            );
            Ok(head + integral)
        }
        Certificate::KrasovskiiR { r, .. } => {
            let bk = sys.b() * gain.k();
            let derivative = |i: usize| -> Result<DVector<T>> {
                match seg.derivatives() {
                    Some(d) => Ok(d[i].clone()),
                    None => {
                        let delayed = seg.value_at(seg.time(i) - tau)?;
                        Ok(sys.a() * &values[i] + &bk * delayed)
                    }
                }
            };
            // The weight (θ − t + τ) vanishes at the left boundary.
            let mut samples = Vec::with_capacity(last + 1 - first_inside.min(last + 1));
            for i in first_inside..=last {
                let theta = seg.time(i);
                let de = derivative(i)?;
                samples.push((theta, (theta - window_start) * quad(r, &de)));
            }
            Ok(head + trapezoid(window_start, T::zero(), samples.into_iter()))
        }
    }
}

fn trapezoid<T: Scalar>(t0: T, f0: T, rest: impl Iterator<Item = (T, T)>) -> T {
    let half = T::lit(0.5);
    let (mut t_prev, mut f_prev) = (t0, f0);
    let mut acc = T::zero();
    for (t, f) in rest {
        acc += (t - t_prev) * (f + f_prev) * half;
        t_prev = t;
        f_prev = f;
    }
    acc
}
