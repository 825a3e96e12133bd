//! Fixed-step integration of the delayed closed loop
//! `ẋ(t) = A x(t) + B u(t − τ)`, `u(s) = ū_{v(s)} + K (x(s) − x̄_{v(s)})`,
//! and forward prediction with the reference frozen at its current value.
//!
//! The integrator is classical RK4. Delayed terms are looked up in a uniformly
//! sampled history: the state through cubic Hermite interpolation (node values
//! plus node derivatives, so off-grid stage lookups keep fourth-order accuracy)
//! and the reference through linear interpolation.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, ErgError, Result};
use crate::model::{ConstraintSet, DelaySystem, PrimaryGain, SteadyStateMap};
use crate::stability::HistorySegment;
use crate::Scalar;

/// Uniformly sampled trajectory on the grid `t = k·dt`, oldest samples
/// discarded once more than `capacity` are held.
#[derive(Debug, Clone)]
pub struct HistoryBuffer<T: Scalar> {
    dim: usize,
    dt: T,
    first_step: i64,
    values: Vec<T>,
    slopes: Option<Vec<T>>,
    /// Right-hand derivative at a node where the trajectory has a kink
    /// (the end of a supplied history), used for the interval to its right.
    junction: Option<(i64, Vec<T>)>,
    capacity: usize,
}

impl<T: Scalar> HistoryBuffer<T> {
    /// `with_slopes` keeps a derivative per node for Hermite lookups.
    pub fn new(dim: usize, dt: T, capacity: usize, with_slopes: bool) -> Self {
        Self {
            dim,
            dt,
            first_step: 0,
            values: Vec::with_capacity(2 * capacity * dim),
            slopes: with_slopes.then(|| Vec::with_capacity(2 * capacity * dim)),
            junction: None,
            capacity: capacity.max(2),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_step(&self) -> i64 {
        self.first_step
    }

    pub fn last_step(&self) -> i64 {
        self.first_step + self.len() as i64 - 1
    }

    pub fn time_of(&self, step: i64) -> T {
        T::from_count(step) * self.dt
    }

    pub fn oldest_time(&self) -> T {
        self.time_of(self.first_step)
    }

    pub fn newest_time(&self) -> T {
        self.time_of(self.last_step())
    }

    /// Time span covered by the samples.
    pub fn span(&self) -> T {
        self.newest_time() - self.oldest_time()
    }

    fn offset(&self, step: i64) -> usize {
        (step - self.first_step) as usize * self.dim
    }

    pub fn value(&self, step: i64) -> &[T] {
        let o = self.offset(step);
        &self.values[o..o + self.dim]
    }

    pub fn slope(&self, step: i64) -> Option<&[T]> {
        let o = self.offset(step);
        self.slopes.as_ref().map(|s| &s[o..o + self.dim])
    }

    pub fn newest(&self) -> &[T] {
        self.value(self.last_step())
    }

    /// Appends the sample for step `last_step() + 1` (or `step` when empty).
    pub fn push(&mut self, step_if_empty: i64, value: &[T], slope: Option<&[T]>) {
        debug_assert_eq!(value.len(), self.dim);
        if self.values.is_empty() {
            self.first_step = step_if_empty;
        }
        self.values.extend_from_slice(value);
        if let Some(s) = self.slopes.as_mut() {
            match slope {
                Some(d) => s.extend_from_slice(d),
                None => s.extend(std::iter::repeat_n(T::zero(), self.dim)),
            }
        }
        if self.len() > 2 * self.capacity {
            let drop = self.len() - self.capacity;
            self.values.drain(..drop * self.dim);
            if let Some(s) = self.slopes.as_mut() {
                s.drain(..drop * self.dim);
            }
            self.first_step += drop as i64;
            if self.junction.as_ref().is_some_and(|(s, _)| *s < self.first_step) {
                self.junction = None;
            }
        }
    }

    pub fn set_value(&mut self, step: i64, value: &[T]) {
        let o = self.offset(step);
        self.values[o..o + self.dim].copy_from_slice(value);
    }

    pub fn set_slope(&mut self, step: i64, slope: &[T]) {
        let o = self.offset(step);
        if let Some(s) = self.slopes.as_mut() {
            s[o..o + self.dim].copy_from_slice(slope);
        }
    }

    /// Marks `step` as a kink with right-hand derivative `slope`.
    pub fn set_junction(&mut self, step: i64, slope: &[T]) {
        self.junction = Some((step, slope.to_vec()));
    }

    /// Grid index and fractional position of `t`, or an underrun error.
    fn locate(&self, t: T) -> Result<(i64, T)> {
        let s = t / self.dt;
        let r = s.round();
        let (i, frac) = if (s - r).abs() <= T::lit(1e-9) {
            (r.to_i64().unwrap_or(i64::MIN), T::zero())
        } else {
            let f = s.floor();
            (f.to_i64().unwrap_or(i64::MIN), s - f)
        };
        if i < self.first_step || i > self.last_step() || (i == self.last_step() && frac > T::zero()) {
            return Err(ErgError::HistoryUnderrun {
                t: t.as_f64(),
                start: self.oldest_time().as_f64(),
                end: self.newest_time().as_f64(),
            });
        }
        Ok((i, frac))
    }

    /// Linear interpolation at `t` into `out`.
    pub fn lookup_into(&self, t: T, out: &mut [T]) -> Result<()> {
        let (i, frac) = self.locate(t)?;
        let a = self.value(i);
        if frac.is_zero() {
            out.copy_from_slice(a);
            return Ok(());
        }
        let b = self.value(i + 1);
        for j in 0..self.dim {
            out[j] = a[j] + (b[j] - a[j]) * frac;
        }
        Ok(())
    }

    pub fn lookup(&self, t: T) -> Result<DVector<T>> {
        let mut out = DVector::zeros(self.dim);
        self.lookup_into(t, out.as_mut_slice())?;
        Ok(out)
    }

    /// Cubic Hermite interpolation at `t` using node slopes; falls back to
    /// linear interpolation for buffers without slopes.
    pub fn lookup_smooth_into(&self, t: T, out: &mut [T]) -> Result<()> {
        let Some(slopes) = self.slopes.as_ref() else {
            return self.lookup_into(t, out);
        };
        let (i, s) = self.locate(t)?;
        let oa = self.offset(i);
        if s.is_zero() {
            out.copy_from_slice(&self.values[oa..oa + self.dim]);
            return Ok(());
        }
        let ob = oa + self.dim;
        let (s2, s3) = (s * s, s * s * s);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = (s3 - two * s2 + s) * self.dt;
        let h01 = three * s2 - two * s3;
        let h11 = (s3 - s2) * self.dt;
        let left = match &self.junction {
            Some((step, d)) if *step == i => d.as_slice(),
            _ => &slopes[oa..oa + self.dim],
        };
        for j in 0..self.dim {
            out[j] = h00 * self.values[oa + j] + h10 * left[j] + h01 * self.values[ob + j] + h11 * slopes[ob + j];
        }
        Ok(())
    }

    pub fn lookup_smooth(&self, t: T) -> Result<DVector<T>> {
        let mut out = DVector::zeros(self.dim);
        self.lookup_smooth_into(t, out.as_mut_slice())?;
        Ok(out)
    }

    /// Copy holding only samples from step `from` on.
    fn tail(&self, from: i64, capacity: usize) -> Self {
        let from = from.max(self.first_step);
        let o = self.offset(from);
        let mut values = Vec::with_capacity(2 * capacity * self.dim);
        values.extend_from_slice(&self.values[o..]);
        let slopes = self.slopes.as_ref().map(|s| {
            let mut v = Vec::with_capacity(2 * capacity * self.dim);
            v.extend_from_slice(&s[o..]);
            v
        });
        Self {
            dim: self.dim,
            dt: self.dt,
            first_step: from,
            values,
            slopes,
            junction: self.junction.clone().filter(|(s, _)| *s >= from),
            capacity: capacity.max(2),
        }
    }
}

/// The pre-stabilized loop with everything the right-hand side needs
/// precomputed. Immutable; share it between runs.
#[derive(Debug, Clone)]
pub struct ClosedLoop<T: Scalar> {
    sys: DelaySystem<T>,
    gain: PrimaryGain<T>,
    map: SteadyStateMap<T>,
    /// `ū_v − K x̄_v = (M_u − K M_x) v`
    feedforward: DMatrix<T>,
}

impl<T: Scalar> ClosedLoop<T> {
    pub fn new(sys: DelaySystem<T>, gain: PrimaryGain<T>) -> Result<Self> {
        check_dim("gain rows", sys.m(), gain.k().nrows())?;
        check_dim("gain columns", sys.n(), gain.k().ncols())?;
        let map = SteadyStateMap::new(&sys);
        let feedforward = map.mu() - gain.k() * map.mx();
        Ok(Self {
            sys,
            gain,
            map,
            feedforward,
        })
    }

    pub fn system(&self) -> &DelaySystem<T> {
        &self.sys
    }

    pub fn gain(&self) -> &PrimaryGain<T> {
        &self.gain
    }

    pub fn steady_state(&self) -> &SteadyStateMap<T> {
        &self.map
    }

    pub fn tau(&self) -> T {
        self.sys.tau()
    }

    /// Controller output `u = (M_u − K M_x) v + K x`.
    pub fn input(&self, x: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        &self.feedforward * v + self.gain.k() * x
    }

    /// `ẋ = A x + B u(t − τ)` with the delayed input rebuilt from the history.
    fn rhs(
        &self,
        hist: (&HistoryBuffer<T>, &HistoryBuffer<T>),
        t: T,
        x: &DVector<T>,
        work: &mut Scratch<T>,
        out: &mut DVector<T>,
    ) -> Result<()> {
        let s = t - self.sys.tau();
        hist.0.lookup_smooth_into(s, work.x_delayed.as_mut_slice())?;
        hist.1.lookup_into(s, work.v_delayed.as_mut_slice())?;
        work.u.gemv(T::one(), &self.feedforward, &work.v_delayed, T::zero());
        work.u.gemv(T::one(), self.gain.k(), &work.x_delayed, T::one());
        out.gemv(T::one(), self.sys.a(), x, T::zero());
        out.gemv(T::one(), self.sys.b(), &work.u, T::one());
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Scratch<T: Scalar> {
    x_delayed: DVector<T>,
    v_delayed: DVector<T>,
    u: DVector<T>,
}

#[derive(Debug, Clone)]
struct Work<T: Scalar> {
    scratch: Scratch<T>,
    x: DVector<T>,
    stage: DVector<T>,
    k: [DVector<T>; 4],
}

impl<T: Scalar> Work<T> {
    fn new(n: usize, m: usize, p: usize) -> Self {
        let z = DVector::zeros(n);
        Self {
            scratch: Scratch {
                x_delayed: z.clone(),
                v_delayed: DVector::zeros(p),
                u: DVector::zeros(m),
            },
            x: z.clone(),
            stage: z.clone(),
            k: [z.clone(), z.clone(), z.clone(), z],
        }
    }
}

/// Mutable simulation state: time plus aligned state and reference histories.
#[derive(Debug, Clone)]
pub struct SimState<T: Scalar> {
    step: i64,
    x_hist: HistoryBuffer<T>,
    v_hist: HistoryBuffer<T>,
    /// The newest state node still lacks its derivative.
    slope_pending: bool,
    work: Work<T>,
    m: usize,
}

impl<T: Scalar> SimState<T> {
    /// State at `t = 0` with a constant past `x(θ) = x0`, `v(θ) = v0` over
    /// `θ ∈ [−history, 0]`. The buffers retain at least `history` seconds.
    pub fn constant_history(sys: &DelaySystem<T>, dt: T, x0: DVector<T>, v0: DVector<T>, history: T) -> Result<Self> {
        check_dim("initial state", sys.n(), x0.len())?;
        check_dim("initial reference", sys.p(), v0.len())?;
        let steps = Self::check_grid(sys, dt, history)?;
        let xs = vec![x0; steps as usize + 1];
        let vs = vec![v0; steps as usize + 1];
        let slopes = vec![DVector::zeros(sys.n()); steps as usize + 1];
        Self::from_samples(sys, dt, xs, Some(slopes), vs)
    }

    /// State at `t = 0` from tabulated histories sampled at `dt`, newest last.
    /// Node derivatives are estimated by finite differences.
    pub fn tabulated_history(sys: &DelaySystem<T>, dt: T, xs: Vec<DVector<T>>, vs: Vec<DVector<T>>) -> Result<Self> {
        Self::check_grid(sys, dt, sys.tau())?;
        if xs.len() != vs.len() || xs.len() < 2 {
            return Err(ErgError::InvalidConfig(
                "state and reference histories need the same length (at least two samples)".into(),
            ));
        }
        let span = dt * T::from_count(xs.len() as i64 - 1);
        if span < sys.tau() - dt * T::lit(1e-9) {
            return Err(ErgError::InsufficientSpan {
                required: sys.tau().as_f64(),
                available: span.as_f64(),
            });
        }
        for x in &xs {
            check_dim("history state", sys.n(), x.len())?;
        }
        for v in &vs {
            check_dim("history reference", sys.p(), v.len())?;
        }
        let last = xs.len() - 1;
        let slopes = (0..=last)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(last));
                (&xs[b] - &xs[a]) / (dt * T::from_count((b - a) as i64))
            })
            .collect();
        Self::from_samples(sys, dt, xs, Some(slopes), vs)
    }

    fn check_grid(sys: &DelaySystem<T>, dt: T, history: T) -> Result<i64> {
        if !(dt > T::zero()) {
            return Err(ErgError::InvalidConfig(format!("time step must be positive, got {}", dt)));
        }
        if dt > sys.tau() {
            return Err(ErgError::InvalidConfig(format!(
                "time step {} exceeds the delay {}",
                dt,
                sys.tau()
            )));
        }
        let need = history.max(sys.tau());
        Ok((need / dt - T::lit(1e-9)).ceil().to_i64().unwrap_or(1) + 1)
    }

    fn from_samples(
        sys: &DelaySystem<T>,
        dt: T,
        xs: Vec<DVector<T>>,
        slopes: Option<Vec<DVector<T>>>,
        vs: Vec<DVector<T>>,
    ) -> Result<Self> {
        let count = xs.len();
        let capacity = count + 4;
        let first = -(count as i64 - 1);
        let mut x_hist = HistoryBuffer::new(sys.n(), dt, capacity, true);
        let mut v_hist = HistoryBuffer::new(sys.p(), dt, capacity, false);
        for (i, (x, v)) in xs.iter().zip(&vs).enumerate() {
            let d = slopes.as_ref().map(|s| s[i].as_slice());
            x_hist.push(first, x.as_slice(), d);
            v_hist.push(first, v.as_slice(), None);
        }
        Ok(Self {
            step: 0,
            x_hist,
            v_hist,
            slope_pending: false,
            work: Work::new(sys.n(), sys.m(), sys.p()),
            m: sys.m(),
        })
    }

    pub fn time(&self) -> T {
        self.x_hist.time_of(self.step)
    }

    pub fn step_index(&self) -> i64 {
        self.step
    }

    pub fn dt(&self) -> T {
        self.x_hist.dt()
    }

    pub fn x(&self) -> DVector<T> {
        DVector::from_column_slice(self.x_hist.newest())
    }

    pub fn v(&self) -> DVector<T> {
        DVector::from_column_slice(self.v_hist.newest())
    }

    pub fn x_history(&self) -> &HistoryBuffer<T> {
        &self.x_hist
    }

    pub fn v_history(&self) -> &HistoryBuffer<T> {
        &self.v_hist
    }

    /// Replaces the reference at the current instant. Past samples are never
    /// touched, so delayed lookups already made stay valid.
    pub fn set_reference(&mut self, v: &DVector<T>) -> Result<()> {
        check_dim("reference", self.v_hist.dim(), v.len())?;
        self.v_hist.set_value(self.step, v.as_slice());
        Ok(())
    }

    /// Keeps at least `span` seconds of history from now on.
    pub fn reserve_span(&mut self, span: T) {
        let need = (span / self.dt()).ceil().to_usize().unwrap_or(0) + 4;
        self.x_hist.capacity = self.x_hist.capacity.max(need);
        self.v_hist.capacity = self.v_hist.capacity.max(need);
    }

    /// One RK4 step; returns the derivative at the start of the step.
    fn advance(&mut self, cl: &ClosedLoop<T>, v_next: &[T]) -> Result<()> {
        let dt = self.dt();
        let t = self.time();
        rk4(cl, (&self.x_hist, &self.v_hist), t, dt, &mut self.work)?;
        if self.slope_pending {
            self.x_hist.set_slope(self.step, self.work.k[0].as_slice());
        } else {
            // first step off a supplied history: keep its left slope, record the right one
            self.x_hist.set_junction(self.step, self.work.k[0].as_slice());
        }
        let next = self.step + 1;
        self.x_hist.push(next, self.work.stage.as_slice(), None);
        self.v_hist.push(next, v_next, None);
        self.step = next;
        self.slope_pending = true;
        Ok(())
    }

    /// Derivative of the newest node (computed on demand if still pending).
    pub fn newest_slope(&self, cl: &ClosedLoop<T>) -> Result<DVector<T>> {
        if !self.slope_pending {
            return Ok(DVector::from_column_slice(
                self.x_hist.slope(self.step).expect("state history keeps slopes"),
            ));
        }
        let mut scratch = self.work.scratch.clone();
        let mut out = DVector::zeros(self.x_hist.dim());
        cl.rhs((&self.x_hist, &self.v_hist), self.time(), &self.x(), &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Error segment `x(θ) − x̄` over the last `span` seconds, with node
    /// derivatives attached.
    pub fn error_segment(&self, cl: &ClosedLoop<T>, x_bar: &DVector<T>, span: T) -> Result<HistorySegment<T>> {
        let dt = self.dt();
        let back = (span / dt - T::lit(1e-9)).ceil().to_i64().unwrap_or(0);
        let from = self.step - back;
        if from < self.x_hist.first_step() {
            return Err(ErgError::InsufficientSpan {
                required: span.as_f64(),
                available: self.x_hist.span().as_f64(),
            });
        }
        let mut values = Vec::with_capacity(back as usize + 1);
        let mut derivs = Vec::with_capacity(back as usize + 1);
        for s in from..=self.step {
            values.push(DVector::from_column_slice(self.x_hist.value(s)) - x_bar);
            if s == self.step {
                derivs.push(self.newest_slope(cl)?);
            } else {
                derivs.push(DVector::from_column_slice(self.x_hist.slope(s).expect("slopes")));
            }
        }
        HistorySegment::uniform(self.x_hist.time_of(from), dt, values)?.with_derivatives(derivs)
    }

    /// Copy restricted to the history the integrator needs from now on.
    fn forecast_copy(&self, tau: T, extra_steps: usize) -> Self {
        let dt = self.dt();
        let back = (tau / dt).ceil().to_i64().unwrap_or(0) + 2;
        let cap = back as usize + extra_steps + 4;
        Self {
            step: self.step,
            x_hist: self.x_hist.tail(self.step - back, cap),
            v_hist: self.v_hist.tail(self.step - back, cap),
            slope_pending: self.slope_pending,
            work: self.work.clone(),
            m: self.m,
        }
    }
}

/// One RK4 step from the newest node; leaves the stage derivatives in
/// `w.k` and the new state in `w.stage`.
fn rk4<T: Scalar>(
    cl: &ClosedLoop<T>,
    hist: (&HistoryBuffer<T>, &HistoryBuffer<T>),
    t: T,
    dt: T,
    w: &mut Work<T>,
) -> Result<()> {
    let half = dt * T::lit(0.5);
    let Work { scratch, x, stage, k } = w;
    x.copy_from_slice(hist.0.newest());
    let [k0, k1, k2, k3] = k;
    cl.rhs(hist, t, x, scratch, k0)?;
    stage.copy_from(x);
    stage.axpy(half, k0, T::one());
    cl.rhs(hist, t + half, stage, scratch, k1)?;
    stage.copy_from(x);
    stage.axpy(half, k1, T::one());
    cl.rhs(hist, t + half, stage, scratch, k2)?;
    stage.copy_from(x);
    stage.axpy(dt, k2, T::one());
    cl.rhs(hist, t + dt, stage, scratch, k3)?;

    let sixth = dt / T::lit(6.0);
    let third = sixth * T::lit(2.0);
    stage.copy_from(x);
    stage.axpy(sixth, k0, T::one());
    stage.axpy(third, k1, T::one());
    stage.axpy(third, k2, T::one());
    stage.axpy(sixth, k3, T::one());
    Ok(())
}

/// Advances `state` by one step of the closed loop, appending `v_current` as
/// the reference at the new instant.
pub fn step_closed_loop<T: Scalar>(cl: &ClosedLoop<T>, state: &mut SimState<T>, v_current: &DVector<T>) -> Result<()> {
    check_dim("reference", state.v_hist.dim(), v_current.len())?;
    state.advance(cl, v_current.as_slice())
}

/// Frozen-reference forecast sampled on the simulator grid.
#[derive(Debug, Clone)]
pub struct PredictionResult<T: Scalar> {
    pub theta: Vec<T>,
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    /// `x̂(θ) − x̄_v` over `[T − τ, T]`, with derivatives attached.
    pub terminal_segment: HistorySegment<T>,
}

/// Runs the frozen-reference forecast from `state`, calling `visit(j, x̂_j)` at
/// every grid node `θ_j = j·dt`, `j = 0..=N`, and returning the node
/// derivatives over the last `τ` seconds (or the whole horizon, if shorter),
/// oldest first, together with the node states there.
pub(crate) fn forecast<T: Scalar>(
    cl: &ClosedLoop<T>,
    state: &SimState<T>,
    horizon: T,
    mut visit: impl FnMut(usize, &[T]),
) -> Result<(usize, Vec<DVector<T>>, Vec<DVector<T>>)> {
    let tau = cl.tau();
    let dt = state.dt();
    let steps = (horizon / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let window = (tau / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0).min(steps);
    let keep_from = steps - window;

    let v = state.v();
    let mut sim = state.forecast_copy(tau, steps);
    let mut xs = Vec::with_capacity(window + 1);
    let mut ds = Vec::with_capacity(window + 1);
    for j in 0..steps {
        visit(j, sim.x_hist.newest());
        sim.advance(cl, v.as_slice())?;
        if j >= keep_from {
            xs.push(DVector::from_column_slice(sim.x_hist.value(sim.step - 1)));
            ds.push(sim.work.k[0].clone());
        }
    }
    visit(steps, sim.x_hist.newest());
    xs.push(sim.x());
    ds.push(sim.newest_slope(cl)?);
    Ok((steps, xs, ds))
}

/// Forecast over `[0, horizon]` with `v̂(θ) = v(t)` for `θ ≥ 0` and the
/// buffered past reference before. `horizon` must be at least `τ`.
pub fn predict<T: Scalar>(cl: &ClosedLoop<T>, state: &SimState<T>, horizon: T) -> Result<PredictionResult<T>> {
    let dt = state.dt();
    if horizon < cl.tau() - dt * T::lit(1e-9) {
        return Err(ErgError::HorizonTooShort {
            horizon: horizon.as_f64(),
            tau: cl.tau().as_f64(),
        });
    }
    let v = state.v();
    let eq = cl.steady_state().equilibrium(&v)?;
    let mut xs = Vec::new();
    let (steps, tail_x, tail_d) = forecast(cl, state, horizon, |_, x| xs.push(DVector::from_column_slice(x)))?;
    let theta = (0..=steps).map(|j| T::from_count(j as i64) * dt).collect();
    let u = xs.iter().map(|x| cl.input(x, &v)).collect();
    let window = tail_x.len() - 1;
    let start = T::from_count((steps - window) as i64) * dt;
    let errors = tail_x.into_iter().map(|x| x - &eq.x_bar).collect();
    let terminal_segment = HistorySegment::uniform(start, dt, errors)?.with_derivatives(tail_d)?;
    Ok(PredictionResult {
        theta,
        x: xs,
        u,
        terminal_segment,
    })
}

/// Per-row affine form of the residual along a frozen-reference forecast:
/// `residual_i(x̂, û) = h_cl,iᵀ x̂ + offset_i(v)`.
#[derive(Debug, Clone)]
pub(crate) struct FrozenResiduals<T: Scalar> {
    normals: Vec<DVector<T>>,
    offsets: Vec<T>,
}

impl<T: Scalar> FrozenResiduals<T> {
    pub(crate) fn new(cl: &ClosedLoop<T>, cs: &ConstraintSet<T>, v: &DVector<T>) -> Self {
        let ff = &cl.feedforward * v;
        Self {
            normals: cs.rows().iter().map(|r| r.closed_loop_normal(&cl.gain)).collect(),
            offsets: cs.rows().iter().map(|r| r.h_u.dot(&ff) + r.g).collect(),
        }
    }

    pub(crate) fn min(&self, x: &[T]) -> T {
        let mut best = T::max_value().unwrap_or_else(T::one);
        for (h, &c) in self.normals.iter().zip(&self.offsets) {
            let mut r = c;
            for (a, b) in h.iter().zip(x) {
                r += *a * *b;
            }
            best = best.min(r);
        }
        best
    }
}
