use nalgebra::DVector;

use crate::error::{ErgError, Result};
use crate::Scalar;

/// Uniformly sampled window of a trajectory ending at the evaluation instant.
///
/// Samples may optionally carry the trajectory's time derivative, which the
/// `KrasovskiiR` functional uses directly instead of reconstructing it from the
/// closed-loop model.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment<T: Scalar> {
    start: T,
    dt: T,
    values: Vec<DVector<T>>,
    derivatives: Option<Vec<DVector<T>>>,
}

impl<T: Scalar> HistorySegment<T> {
    /// Samples at `start + i·dt`.
    pub fn uniform(start: T, dt: T, values: Vec<DVector<T>>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(ErgError::InvalidConfig(format!("segment step must be positive, got {}", dt)));
        }
        if values.is_empty() {
            return Err(ErgError::InsufficientSpan {
                required: 0.0,
                available: -1.0,
            });
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(ErgError::DimensionMismatch {
                what: "segment sample",
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self {
            start,
            dt,
            values,
            derivatives: None,
        })
    }

    /// Builds a segment from explicit `(time, value)` pairs, which must be
    /// strictly increasing and uniformly spaced to within 1e-12 s.
    pub fn from_samples(samples: Vec<(T, DVector<T>)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(ErgError::InvalidConfig("a segment needs at least two samples".into()));
        }
        let start = samples[0].0;
        let dt = samples[1].0 - start;
        if !(dt > T::zero()) {
            return Err(ErgError::InvalidConfig("segment times must be strictly increasing".into()));
        }
        let tol = T::tol(1e-12);
        for (i, (t, _)) in samples.iter().enumerate() {
            let expected = start + dt * T::from_count(i as i64);
            if (*t - expected).abs() > tol {
                return Err(ErgError::InvalidConfig(format!(
                    "segment sample {} at t = {} breaks uniform spacing {}",
                    i, t, dt
                )));
            }
        }
        Self::uniform(start, dt, samples.into_iter().map(|(_, v)| v).collect())
    }

    /// Attaches derivative samples aligned with the values.
    pub fn with_derivatives(mut self, derivatives: Vec<DVector<T>>) -> Result<Self> {
        if derivatives.len() != self.values.len() {
            return Err(ErgError::DimensionMismatch {
                what: "segment derivatives",
                expected: self.values.len(),
                found: derivatives.len(),
            });
        }
        self.derivatives = Some(derivatives);
        Ok(self)
    }

    /// Constant segment `e(θ) = value` over `[end − span, end]`.
    pub fn constant(value: DVector<T>, end: T, span: T, dt: T) -> Result<Self> {
        let steps = (span / dt).ceil().to_i64().unwrap_or(0).max(1);
        let start = end - dt * T::from_count(steps);
        Self::uniform(start, dt, vec![value; steps as usize + 1])
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn end(&self) -> T {
        self.start + self.dt * T::from_count(self.values.len() as i64 - 1)
    }

    pub fn span(&self) -> T {
        self.end() - self.start
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[DVector<T>] {
        &self.values
    }

    pub fn derivatives(&self) -> Option<&[DVector<T>]> {
        self.derivatives.as_deref()
    }

    pub fn time(&self, i: usize) -> T {
        self.start + self.dt * T::from_count(i as i64)
    }

    /// Linear interpolation of `samples` at `t`; `t` must lie in the span.
    pub(crate) fn interpolate(&self, samples: &[DVector<T>], t: T) -> Result<DVector<T>> {
        let tol = self.dt * T::lit(1e-9);
        if t < self.start - tol || t > self.end() + tol {
            return Err(ErgError::HistoryUnderrun {
                t: t.as_f64(),
                start: self.start.as_f64(),
                end: self.end().as_f64(),
            });
        }
        let s = ((t - self.start) / self.dt).max(T::zero());
        let last = samples.len() - 1;
        let i = s.floor().to_usize().unwrap_or(0).min(last);
        let frac = s - T::from_count(i as i64);
        if i == last || frac <= T::zero() {
            return Ok(samples[i].clone());
        }
        Ok(&samples[i] * (T::one() - frac) + &samples[i + 1] * frac)
    }

    /// Linearly interpolated value at `t`.
    pub fn value_at(&self, t: T) -> Result<DVector<T>> {
        self.interpolate(&self.values, t)
    }
}
