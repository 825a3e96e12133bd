//! The explicit reference governor: `v̇ = Δ(x_τ, v_τ) · ρ(v, r)`.
//!
//! The dynamic safety margin `Δ` combines a finite-horizon constraint margin
//! `Δ_T` with an optional terminal margin `Δ_∞ = Γ(v) − V(ê_τ(T))`; the field
//! `ρ` attracts `v` toward `r` and repels it from the steady-state constraint
//! boundaries. Updates happen every `update_period`, with the margin held
//! constant over each period.

use nalgebra::DVector;

use crate::error::{check_dim, ErgError, Result};
use crate::model::{ConstraintSet, DelaySystem};
use crate::sim::{forecast, step_closed_loop, ClosedLoop, FrozenResiduals, SimState};
use crate::stability::{eval_functional, Certificate, HistorySegment, ThresholdMap};
use crate::Scalar;

/// How the margin looks past the prediction horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum ErgVariant<T: Scalar> {
    /// `Δ_∞` omitted; `Δ = κ₁ Δ_T`.
    InfiniteHorizon,
    /// `Δ_∞` from the certificate's functional and level-set threshold.
    Terminal(Certificate<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgConfig<T: Scalar> {
    /// Prediction horizon `T` in seconds.
    pub horizon: T,
    pub kappa1: T,
    pub kappa2: T,
    /// Attraction smoothing radius.
    pub eta: T,
    /// Repulsion influence distance.
    pub zeta: T,
    /// Static safety margin.
    pub delta: T,
    pub variant: ErgVariant<T>,
    /// Seconds between governor updates; a multiple of the simulation step.
    pub update_period: T,
}

impl<T: Scalar> ErgConfig<T> {
    /// Checks the configuration against the plant delay and simulation step.
    pub fn validate(&self, tau: T, dt: T) -> Result<()> {
        let bad = |msg: String| Err(ErgError::InvalidConfig(msg));
        let finite = [self.horizon, self.kappa1, self.kappa2, self.eta, self.zeta, self.delta, self.update_period];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("governor parameters must be finite".into());
        }
        if !(self.kappa1 > T::zero()) || !(self.kappa2 > T::zero()) {
            return bad(format!("kappa1 and kappa2 must be positive, got {} and {}", self.kappa1, self.kappa2));
        }
        if !(self.eta > T::zero()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.delta > T::zero()) || !(self.zeta > self.delta) {
            return bad(format!("need zeta > delta > 0, got zeta = {}, delta = {}", self.zeta, self.delta));
        }
        if !(self.horizon > T::zero()) {
            return bad(format!("prediction horizon must be positive, got {}", self.horizon));
        }
        if matches!(self.variant, ErgVariant::Terminal(_)) && self.horizon < tau * (T::one() - T::lit(1e-9)) {
            return Err(ErgError::HorizonTooShort {
                horizon: self.horizon.as_f64(),
                tau: tau.as_f64(),
            });
        }
        let ratio = self.update_period / dt;
        if !(ratio >= T::one() - T::lit(1e-9)) || (ratio - ratio.round()).abs() > T::lit(1e-6) * ratio.max(T::one()) {
            return bad(format!(
                "update period {} must be a positive multiple of the time step {}",
                self.update_period, dt
            ));
        }
        Ok(())
    }

    pub fn certificate(&self) -> Option<&Certificate<T>> {
        match &self.variant {
            ErgVariant::InfiniteHorizon => None,
            ErgVariant::Terminal(c) => Some(c),
        }
    }
}

/// The pieces of one margin evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmBreakdown<T> {
    /// Smallest predicted residual over `[0, T]`.
    pub delta_t: T,
    /// `Γ(v) − V(ê_τ(T))`; absent for the infinite-horizon variant.
    pub delta_inf: Option<T>,
    /// `min(κ₁ Δ_T, κ₂ Δ_∞)`.
    pub delta: T,
    pub gamma: Option<T>,
    /// `V(ê_τ(T))`.
    pub v_functional_at_t: Option<T>,
}

/// A governor bound to one closed loop and constraint set.
#[derive(Debug, Clone)]
pub struct Governor<T: Scalar> {
    cl: ClosedLoop<T>,
    cs: ConstraintSet<T>,
    cfg: ErgConfig<T>,
    threshold: Option<ThresholdMap<T>>,
    /// Steady-state residual of row i at v: `grads[i]·v + g_i`.
    grads: Vec<DVector<T>>,
    /// Unit repulsion directions in reference space (`None` for rows that
    /// do not depend on `v`).
    dirs: Vec<Option<DVector<T>>>,
}

impl<T: Scalar> Governor<T> {
    pub fn new(cl: ClosedLoop<T>, cs: ConstraintSet<T>, cfg: ErgConfig<T>, dt: T) -> Result<Self> {
        cfg.validate(cl.tau(), dt)?;
        let n = cl.system().n();
        check_dim("constraint state dimension", n, cs.rows()[0].h_x.len())?;
        let threshold = match &cfg.variant {
            ErgVariant::InfiniteHorizon => None,
            ErgVariant::Terminal(cert) => {
                check_dim("certificate dimension", n, cert.dim())?;
                Some(ThresholdMap::new(&cs, cert.p(), cl.gain())?)
            }
        };
        let map = cl.steady_state();
        let grads: Vec<_> = cs.rows().iter().map(|r| map.residual_gradient(r)).collect();
        let dirs = grads
            .iter()
            .map(|g| {
                let norm = g.norm();
                (norm > T::tol(1e-12) * (T::one() + g.amax())).then(|| g / norm)
            })
            .collect();
        Ok(Self {
            cl,
            cs,
            cfg,
            threshold,
            grads,
            dirs,
        })
    }

    pub fn closed_loop(&self) -> &ClosedLoop<T> {
        &self.cl
    }

    pub fn constraints(&self) -> &ConstraintSet<T> {
        &self.cs
    }

    pub fn config(&self) -> &ErgConfig<T> {
        &self.cfg
    }

    /// Steady-state residuals at `v`.
    pub fn steady_residuals(&self, v: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(
            self.grads.len(),
            self.grads.iter().zip(self.cs.rows()).map(|(g, r)| g.dot(v) + r.g),
        )
    }

    /// Dynamic safety margin at `state`, with the reference frozen at the
    /// state's current value.
    pub fn dsm(&self, state: &SimState<T>) -> Result<DsmBreakdown<T>> {
        let v = state.v();
        check_dim("reference", self.cl.system().p(), v.len())?;
        let frozen = FrozenResiduals::new(&self.cl, &self.cs, &v);
        let mut delta_t = T::max_value().unwrap_or_else(T::one);
        let (steps, xs, ds) = forecast(&self.cl, state, self.cfg.horizon, |_, x| {
            delta_t = delta_t.min(frozen.min(x));
        })?;
        let scaled_t = self.cfg.kappa1 * delta_t;

        let (Some(threshold), Some(cert)) = (&self.threshold, self.cfg.certificate()) else {
            return Ok(DsmBreakdown {
                delta_t,
                delta_inf: None,
                delta: scaled_t,
                gamma: None,
                v_functional_at_t: None,
            });
        };
        let gamma = threshold.gamma(&self.steady_residuals(&v))?;
        let eq = self.cl.steady_state().equilibrium(&v)?;
        let dt = state.dt();
        let start = T::from_count((steps + 1 - xs.len()) as i64) * dt;
        let errors = xs.into_iter().map(|x| x - &eq.x_bar).collect();
        let seg = HistorySegment::uniform(start, dt, errors)?.with_derivatives(ds)?;
        let v_t = eval_functional(cert, self.cl.system(), self.cl.gain(), &seg)?;
        let delta_inf = gamma - v_t;
        Ok(DsmBreakdown {
            delta_t,
            delta_inf: Some(delta_inf),
            delta: scaled_t.min(self.cfg.kappa2 * delta_inf),
            gamma: Some(gamma),
            v_functional_at_t: Some(v_t),
        })
    }

    /// Attraction field `ρ(v, r) = ρ₀ + Σ ρ_i`.
    pub fn attraction_field(&self, v: &DVector<T>, r: &DVector<T>) -> Result<DVector<T>> {
        check_dim("reference", self.cl.system().p(), v.len())?;
        check_dim("target", self.cl.system().p(), r.len())?;
        Ok(self.field_at(v, r, &self.steady_residuals(v)))
    }

    fn field_at(&self, v: &DVector<T>, r: &DVector<T>, residuals: &DVector<T>) -> DVector<T> {
        let diff = r - v;
        let mut rho = &diff / diff.norm().max(self.cfg.eta);
        let width = self.cfg.zeta - self.cfg.delta;
        for (dir, &res) in self.dirs.iter().zip(residuals.iter()) {
            let Some(dir) = dir else { continue };
            let w = ((self.cfg.zeta - res) / width).max(T::zero()).min(T::one());
            if w > T::zero() {
                rho.axpy(w, dir, T::one());
            }
        }
        rho
    }

    /// Moves `v` along the field for pseudo-time `span` (the margin times
    /// the update period), in sub-steps short enough that neither the
    /// attraction nor the repulsion overshoots.
    fn flow(&self, v: &DVector<T>, r: &DVector<T>, span: T) -> DVector<T> {
        let h_max = self.cfg.eta.min(self.cfg.zeta - self.cfg.delta) * T::lit(0.25);
        let count = (span / h_max).ceil().to_usize().unwrap_or(1).clamp(1, 100_000);
        let h = span / T::from_count(count as i64);
        let mut v = v.clone();
        for _ in 0..count {
            let rho = self.field_at(&v, r, &self.steady_residuals(&v));
            if rho.amax() <= T::default_epsilon() {
                break;
            }
            v.axpy(h, &rho, T::one());
        }
        v
    }

    /// Largest step fraction `λ ∈ [0, 1]` keeping every steady-state residual
    /// of `v + λ d` at or above `floor_i`.
    fn admissible_fraction(&self, v: &DVector<T>, d: &DVector<T>, floors: &[T]) -> T {
        let res = self.steady_residuals(v);
        let mut lambda = T::one();
        for ((g, &r0), &floor) in self.grads.iter().zip(res.iter()).zip(floors) {
            let slope = g.dot(d);
            if slope < T::zero() && r0 + slope < floor {
                lambda = lambda.min(((floor - r0) / slope).max(T::zero()));
            }
        }
        lambda
    }

    /// One governor update from `state` (whose current reference is `v`).
    /// Returns the new reference and the margin evaluated before the move.
    pub fn step(&self, state: &SimState<T>, r: &DVector<T>) -> Result<(DVector<T>, DsmBreakdown<T>)> {
        let v = state.v();
        let breakdown = self.dsm(state)?;
        let margin = breakdown.delta.max(T::zero());
        if margin.is_zero() {
            return Ok((v, breakdown));
        }
        let mut target = self.flow(&v, r, self.cfg.update_period * margin);

        // keep the δ-admissible set (or, if v started below δ, don't sink deeper)
        let start_res = self.steady_residuals(&v);
        let floors: Vec<T> = start_res.iter().map(|&r0| r0.min(self.cfg.delta)).collect();
        let d = &target - &v;
        let lambda = self.admissible_fraction(&v, &d, &floors);
        if lambda < T::one() {
            target = &v + d * lambda;
        }

        // the margin only certifies the current v; re-check at the new one and
        // back off along the segment if it would be negative
        let d = &target - &v;
        if d.amax().is_zero() {
            return Ok((v, breakdown));
        }
        let mut probe = state.clone();
        let check = |lambda: T, probe: &mut SimState<T>| -> Result<bool> {
            probe.set_reference(&(&v + &d * lambda))?;
            Ok(self.dsm(probe)?.delta >= T::zero())
        };
        if check(T::one(), &mut probe)? {
            return Ok((target, breakdown));
        }
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..BACKOFF_BISECTIONS {
            let mid = (lo + hi) * T::lit(0.5);
            if check(mid, &mut probe)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((&v + d * lo, breakdown))
    }
}

const BACKOFF_BISECTIONS: usize = 16;

/// Piecewise-constant reference schedule: value `values[i]` from `times[i]`
/// until the next switch; the first value also covers earlier times.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T: Scalar> {
    points: Vec<(T, DVector<T>)>,
}

impl<T: Scalar> Schedule<T> {
    pub fn new(mut points: Vec<(T, DVector<T>)>) -> Result<Self> {
        if points.is_empty() {
            return Err(ErgError::InvalidConfig("reference schedule is empty".into()));
        }
        let p = points[0].1.len();
        for (t, v) in &points {
            check_dim("reference schedule value", p, v.len())?;
            if !t.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(ErgError::InvalidConfig("reference schedule holds a non-finite entry".into()));
            }
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        Ok(Self { points })
    }

    pub fn constant(v: DVector<T>) -> Self {
        Self {
            points: vec![(T::zero(), v)],
        }
    }

    pub fn points(&self) -> &[(T, DVector<T>)] {
        &self.points
    }

    pub fn at(&self, t: T) -> &DVector<T> {
        let idx = self.points.partition_point(|(s, _)| *s <= t);
        &self.points[idx.saturating_sub(1)].1
    }
}

/// Time grid, initial history and the requested reference for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T: Scalar> {
    pub dt: T,
    pub duration: T,
    pub x0: DVector<T>,
    pub v0: DVector<T>,
    pub reference: Schedule<T>,
    /// Record every `decimation`-th step.
    pub decimation: usize,
    /// Tabulated past `(x, v)` sampled at `dt`, newest last (at `t = 0`);
    /// replaces the constant history built from `x0`, `v0`.
    pub history: Option<(Vec<DVector<T>>, Vec<DVector<T>>)>,
}

/// A complete closed-loop experiment; `governor: None` applies `v ≡ r`.
#[derive(Debug, Clone)]
pub struct Experiment<T: Scalar> {
    pub closed_loop: ClosedLoop<T>,
    pub constraints: ConstraintSet<T>,
    pub governor: Option<ErgConfig<T>>,
    pub run: RunConfig<T>,
}

/// Recorded time series: `t, x_*, u_*, v_*, r_*, Delta_T, Delta_inf, V,
/// residual_*`, one row per recorded step. Margin columns hold the value from
/// the latest governor update and are NaN when not computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<T>>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub n_c: usize,
}

impl<T: Scalar> Trace<T> {
    pub fn header(n: usize, m: usize, p: usize, n_c: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        let mut push = |prefix: &str, count: usize| {
            for i in 1..=count {
                cols.push(format!("{prefix}_{i}"));
            }
        };
        push("x", n);
        push("u", m);
        push("v", p);
        push("r", p);
        cols.extend(["Delta_T", "Delta_inf", "V"].map(String::from));
        for i in 1..=n_c {
            cols.push(format!("residual_{i}"));
        }
        cols
    }

    pub fn new(n: usize, m: usize, p: usize, n_c: usize) -> Self {
        Self {
            columns: Self::header(n, m, p, n_c),
            rows: Vec::new(),
            n,
            m,
            p,
            n_c,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<T>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn times(&self) -> Vec<T> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    fn block(&self, row: usize, offset: usize, len: usize) -> DVector<T> {
        DVector::from_column_slice(&self.rows[row][offset..offset + len])
    }

    pub fn x(&self, row: usize) -> DVector<T> {
        self.block(row, 1, self.n)
    }

    pub fn u(&self, row: usize) -> DVector<T> {
        self.block(row, 1 + self.n, self.m)
    }

    pub fn v(&self, row: usize) -> DVector<T> {
        self.block(row, 1 + self.n + self.m, self.p)
    }

    pub fn r(&self, row: usize) -> DVector<T> {
        self.block(row, 1 + self.n + self.m + self.p, self.p)
    }

    pub fn residuals(&self, row: usize) -> DVector<T> {
        self.block(row, 4 + self.n + self.m + 2 * self.p, self.n_c)
    }

    /// Smallest constraint residual over the whole trace.
    pub fn min_residual(&self) -> T {
        (0..self.len())
            .flat_map(|i| self.residuals(i).iter().copied().collect::<Vec<_>>())
            .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
    }

    /// Summary statistics on the output `y = C x + D u`.
    pub fn summary(&self, sys: &DelaySystem<T>) -> TraceSummary<T> {
        let ys: Vec<DVector<T>> = (0..self.len()).map(|i| sys.c() * self.x(i) + sys.d() * self.u(i)).collect();
        let nan = T::lit(f64::NAN);
        let max_output = ys.iter().map(|y| y[0]).fold(nan, |a, b| if a.is_finite() { a.max(b) } else { b });
        let final_output = ys.last().map(|y| y[0]).unwrap_or(nan);
        let final_r = if self.is_empty() { nan } else { self.r(self.len() - 1)[0] };
        let band = |i: usize| {
            let r = self.r(i);
            (&ys[i] - &r).amax() <= T::lit(0.02) * r.amax()
        };
        let settling_time = match (0..self.len()).rev().find(|&i| !band(i)) {
            None if !self.is_empty() => Some(self.rows[0][0]),
            None => None,
            Some(i) if i + 1 < self.len() => Some(self.rows[i + 1][0]),
            Some(_) => None,
        };
        let i_t = self.column_index("Delta_T").expect("margin column");
        let min_delta = self
            .rows
            .iter()
            .map(|r| r[i_t])
            .filter(|v| v.is_finite())
            .fold(nan, |a, b| if a.is_finite() { a.min(b) } else { b });
        TraceSummary {
            max_output,
            final_output,
            overshoot: max_output - final_r,
            settling_time,
            min_residual: self.min_residual(),
            min_delta_t: min_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary<T> {
    /// Largest first output component.
    pub max_output: T,
    pub final_output: T,
    /// `max y − r(t_end)`.
    pub overshoot: T,
    /// First time after which `|y − r| ≤ 2 %·|r|` for the rest of the trace.
    pub settling_time: Option<T>,
    pub min_residual: T,
    /// Smallest recorded `Δ_T` (NaN without a governor).
    pub min_delta_t: T,
}

/// Runs an experiment, interleaving integration steps with governor updates.
pub fn run_scenario<T: Scalar>(exp: &Experiment<T>) -> Result<Trace<T>> {
    let cl = &exp.closed_loop;
    let sys = cl.system();
    let run = &exp.run;
    check_dim("initial state", sys.n(), run.x0.len())?;
    check_dim("initial reference", sys.p(), run.v0.len())?;
    check_dim("reference schedule", sys.p(), run.reference.at(T::zero()).len())?;
    if !(run.duration >= T::zero()) || !run.duration.is_finite() {
        return Err(ErgError::InvalidConfig(format!("duration must be non-negative, got {}", run.duration)));
    }
    let governor = exp
        .governor
        .as_ref()
        .map(|cfg| Governor::new(cl.clone(), exp.constraints.clone(), cfg.clone(), run.dt))
        .transpose()?;

    let history = sys.tau() * T::lit(2.0);
    let mut state = match &run.history {
        Some((xs, vs)) => SimState::tabulated_history(sys, run.dt, xs.clone(), vs.clone())?,
        None => SimState::constant_history(sys, run.dt, run.x0.clone(), run.v0.clone(), history)?,
    };
    state.reserve_span(history);
    let steps = (run.duration / run.dt).round().to_i64().unwrap_or(0);
    let every = governor
        .as_ref()
        .map(|g| (g.config().update_period / run.dt).round().to_i64().unwrap_or(1).max(1))
        .unwrap_or(1);
    let decimation = run.decimation.max(1) as i64;

    let cs = &exp.constraints;
    let mut trace = Trace::new(sys.n(), sys.m(), sys.p(), cs.len());
    let nan = T::lit(f64::NAN);
    let mut last: Option<DsmBreakdown<T>> = None;
    for i in 0..=steps {
        let t = T::from_count(i) * run.dt;
        let r = run.reference.at(t).clone();
        match &governor {
            Some(g) if i % every == 0 => {
                let (v, breakdown) = g.step(&state, &r)?;
                if i == 0 && breakdown.delta < T::zero() {
                    return Err(ErgError::InitialMarginViolated {
                        delta: breakdown.delta.as_f64(),
                    });
                }
                state.set_reference(&v)?;
                last = Some(breakdown);
            }
            Some(_) => {}
            None => state.set_reference(&r)?,
        }
        let v = state.v();
        if i % decimation == 0 || i == steps {
            let x = state.x();
            let u = cl.input(&x, &v);
            let res = cs.residuals(&x, &u)?;
            let mut row = Vec::with_capacity(trace.columns.len());
            row.push(t);
            row.extend(x.iter().chain(u.iter()).chain(v.iter()).chain(r.iter()).copied());
            match &last {
                Some(b) => {
                    row.push(b.delta_t);
                    row.push(b.delta_inf.unwrap_or(nan));
                    row.push(b.v_functional_at_t.unwrap_or(nan));
                }
                None => row.extend([nan, nan, nan]),
            }
            row.extend(res.iter().copied());
            trace.rows.push(row);
        }
        if i < steps {
            step_closed_loop(cl, &mut state, &v)?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintRow, PrimaryGain};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn flow(k: f64) -> (ClosedLoop<f64>, ConstraintSet<f64>) {
        let sys = DelaySystem::scalar(-0.82, 0.7279, 0.8).unwrap();
        let cl = ClosedLoop::new(sys, PrimaryGain::scalar(k)).unwrap();
        let row = ConstraintRow::new(v1(-1.0), v1(0.0), 26.6).unwrap();
        (cl, ConstraintSet::new(vec![row], 1, 1).unwrap())
    }

    fn config(variant: ErgVariant<f64>) -> ErgConfig<f64> {
        ErgConfig {
            horizon: 0.8,
            kappa1: 50.0,
            kappa2: 20.0,
            eta: 1.0,
            zeta: 0.2,
            delta: 0.1,
            variant,
            update_period: 0.01,
        }
    }

    fn razumikhin() -> ErgVariant<f64> {
        ErgVariant::Terminal(Certificate::Razumikhin {
            p: DMatrix::identity(1, 1),
            q: 0.82,
        })
    }

    fn at_equilibrium(cl: &ClosedLoop<f64>, v: f64) -> SimState<f64> {
        let x_bar = cl.steady_state().equilibrium(&v1(v)).unwrap().x_bar;
        SimState::constant_history(cl.system(), 1e-3, x_bar, v1(v), 1.6).unwrap()
    }

    #[test]
    fn margin_at_equilibrium() {
        let (cl, cs) = flow(-1.0);
        let gov = Governor::new(cl.clone(), cs, config(razumikhin()), 1e-3).unwrap();
        let b = gov.dsm(&at_equilibrium(&cl, 26.0)).unwrap();
        assert_relative_eq!(b.delta_t, 0.6, epsilon = 1e-9);
        assert_relative_eq!(b.gamma.unwrap(), 0.36, epsilon = 1e-9);
        assert!(b.v_functional_at_t.unwrap().abs() < 1e-12);
        assert_relative_eq!(b.delta, 7.2, epsilon = 1e-8);
    }

    #[test]
    fn infinite_horizon_omits_terminal_part() {
        let (cl, cs) = flow(-1.0);
        let mut cfg = config(ErgVariant::InfiniteHorizon);
        cfg.horizon = 7.0;
        let gov = Governor::new(cl.clone(), cs, cfg, 1e-3).unwrap();
        let b = gov.dsm(&at_equilibrium(&cl, 26.0)).unwrap();
        assert!(b.delta_inf.is_none() && b.gamma.is_none());
        assert_relative_eq!(b.delta, 50.0 * 0.6, epsilon = 1e-8);
    }

    #[test]
    fn boundary_trajectory_has_no_margin() {
        let (cl, cs) = flow(-1.0);
        let gov = Governor::new(cl.clone(), cs, config(ErgVariant::InfiniteHorizon), 1e-3).unwrap();
        let b = gov.dsm(&at_equilibrium(&cl, 26.6)).unwrap();
        assert!(b.delta_t.abs() < 1e-9);
        assert!(b.delta <= 1e-7);
    }

    #[test]
    fn config_validation() {
        let (cl, cs) = flow(-1.0);
        let mut cfg = config(razumikhin());
        cfg.horizon = 0.7;
        assert!(matches!(
            Governor::new(cl.clone(), cs.clone(), cfg, 1e-3),
            Err(ErgError::HorizonTooShort { .. })
        ));
        let mut cfg = config(razumikhin());
        cfg.zeta = cfg.delta;
        assert!(Governor::new(cl.clone(), cs.clone(), cfg, 1e-3).is_err());
        let mut cfg = config(razumikhin());
        cfg.kappa2 = 0.0;
        assert!(Governor::new(cl.clone(), cs.clone(), cfg, 1e-3).is_err());
        let mut cfg = config(razumikhin());
        cfg.update_period = 0.0105;
        assert!(Governor::new(cl.clone(), cs.clone(), cfg, 1e-3).is_err());
        // T < τ is fine without a terminal certificate
        let mut cfg = config(ErgVariant::InfiniteHorizon);
        cfg.horizon = 0.5;
        assert!(Governor::new(cl, cs, cfg, 1e-3).is_ok());
    }

    #[test]
    fn field_examples() {
        let (cl, cs) = flow(-1.0);
        let gov = Governor::new(cl, cs, config(razumikhin()), 1e-3).unwrap();
        // at r, far from the bound
        assert!(gov.attraction_field(&v1(5.0), &v1(5.0)).unwrap().amax() == 0.0);
        // ‖r − v‖ = 2 > η = 1: unit attraction
        assert_relative_eq!(gov.attraction_field(&v1(5.0), &v1(7.0)).unwrap()[0], 1.0, epsilon = 1e-15);
        // inside the smoothing radius the attraction shrinks linearly
        assert_relative_eq!(gov.attraction_field(&v1(5.0), &v1(5.25)).unwrap()[0], 0.25, epsilon = 1e-15);
        // residual exactly δ with ζ = 2δ: full repulsion along −x
        let rho = gov.attraction_field(&v1(26.5), &v1(26.5)).unwrap();
        assert_relative_eq!(rho[0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_margin_or_field_keeps_reference() {
        let (cl, cs) = flow(-1.0);
        let gov = Governor::new(cl.clone(), cs, config(ErgVariant::InfiniteHorizon), 1e-3).unwrap();
        let st = at_equilibrium(&cl, 26.6);
        let (v, _) = gov.step(&st, &v1(40.0)).unwrap();
        assert!((v[0] - 26.6).abs() < 1e-9);
        let st = at_equilibrium(&cl, 10.0);
        let (v, b) = gov.step(&st, &v1(10.0)).unwrap();
        assert!(b.delta > 0.0);
        assert_eq!(v[0], 10.0);
    }

    #[test]
    fn first_update_moves_toward_target() {
        let (cl, cs) = flow(-1.0);
        let gov = Governor::new(cl.clone(), cs, config(razumikhin()), 1e-3).unwrap();
        let st = at_equilibrium(&cl, 0.0);
        let (v, b) = gov.step(&st, &v1(26.0)).unwrap();
        assert!(b.delta > 0.0);
        assert!(v[0] > 0.0 && v[0] <= 26.0);
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule::new(vec![(5.0, v1(2.0)), (0.0, v1(1.0))]).unwrap();
        assert_eq!(s.at(-1.0)[0], 1.0);
        assert_eq!(s.at(4.999)[0], 1.0);
        assert_eq!(s.at(5.0)[0], 2.0);
        assert_eq!(s.at(100.0)[0], 2.0);
        assert!(Schedule::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn trace_layout() {
        let cols = Trace::<f64>::header(2, 1, 1, 3);
        assert_eq!(cols.len(), 1 + 2 + 1 + 2 + 3 + 3);
        assert_eq!(cols[0], "t");
        assert_eq!(cols.last().unwrap(), "residual_3");
    }

    fn experiment(k: f64, governor: Option<ErgConfig<f64>>, r: f64, duration: f64) -> Experiment<f64> {
        let (cl, cs) = flow(k);
        Experiment {
            closed_loop: cl,
            constraints: cs,
            governor,
            run: RunConfig {
                dt: 1e-3,
                duration,
                x0: v1(0.0),
                v0: v1(0.0),
                reference: Schedule::constant(v1(r)),
                decimation: 10,
                history: None,
            },
        }
    }

    #[test]
    fn ungoverned_loop_overshoots() {
        let trace = run_scenario(&experiment(-1.0, None, 26.0, 20.0)).unwrap();
        assert!(trace.min_residual() < 0.0);
        assert!(trace.column("Delta_T").unwrap().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn governed_loop_respects_bound_and_converges() {
        let trace = run_scenario(&experiment(-1.0, Some(config(razumikhin())), 26.0, 40.0)).unwrap();
        assert!(trace.min_residual() >= -1e-6, "min residual {}", trace.min_residual());
        let last = trace.len() - 1;
        assert!((trace.x(last)[0] - 26.0).abs() < 0.5);
    }

    #[test]
    fn unreachable_target_is_approached_safely() {
        let trace = run_scenario(&experiment(-1.0, Some(config(razumikhin())), 40.0, 30.0)).unwrap();
        assert!(trace.min_residual() >= -1e-6);
        let last = trace.len() - 1;
        let v = trace.v(last)[0];
        assert!(26.6 - v >= 0.1 - 1e-9, "v = {v}");
        assert!(v > 25.0);
    }

    #[test]
    fn initial_margin_violation_is_reported() {
        let mut exp = experiment(-1.0, Some(config(razumikhin())), 26.0, 1.0);
        exp.run.x0 = v1(30.0);
        exp.run.v0 = v1(26.0);
        assert!(matches!(run_scenario(&exp), Err(ErgError::InitialMarginViolated { .. })));
    }
}
