//! Scenario files: JSON documents describing plant, constraints, controller,
//! certificate, governor and run settings.
//!
//! ```json
//! {
//!   "system": { "A": [[-0.82]], "B": [[0.7279]], "C": [[1]], "D": [[0]], "tau": 0.8 },
//!   "constraints": [ { "h_x": [-1], "h_u": [0], "g": 26.6 } ],
//!   "controller": { "K": [[-1]] },
//!   "certificate": { "variant": "krasovskii_r", "P": [[1]], "R": [[0.95]] },
//!   "erg": { "T": 0.8, "kappa1": 50, "kappa2": 20, "eta": 1, "zeta": 0.3,
//!            "delta": 0.1, "variant": "terminal" },
//!   "run": { "dt": 0.001, "duration": 60, "x0": [0], "v0": [0],
//!            "reference": [ { "t": 0, "value": [26] } ] },
//!   "output": { "path": "trace.csv", "decimation": 10 }
//! }
//! ```
//!
//! `"erg": "none"` (or omitting the block) runs the loop ungoverned with
//! `v ≡ r`. A `krasovskii_r` certificate may leave out `Psi2`/`Psi3`; they
//! are then completed by a seeded search. `{ "variant": "synthesize",
//! "of": "krasovskii_q", "seed": 3 }` searches the whole certificate.

use std::path::Path;

use erg_core::erg::{ErgConfig, ErgVariant, Experiment, RunConfig, Schedule};
use erg_core::model::{ConstraintRow, ConstraintSet, DelaySystem, PrimaryGain};
use erg_core::sim::ClosedLoop;
use erg_core::stability::{
    lmi_feasible, optimize_p_volume, synthesize, synthesize_slack, Certificate, Variant, DEFAULT_LMI_MARGIN,
};
use erg_core::ErgError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSpec,
    pub constraints: Vec<ConstraintSpec>,
    pub controller: ControllerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erg: Option<ErgField>,
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "C")]
    pub c: Matrix,
    #[serde(rename = "D")]
    pub d: Matrix,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub h_x: Vec<f64>,
    pub h_u: Vec<f64>,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    #[serde(rename = "K")]
    pub k: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateSpec {
    Razumikhin {
        #[serde(rename = "P")]
        p: Matrix,
        q: f64,
    },
    KrasovskiiQ {
        #[serde(rename = "P")]
        p: Matrix,
        #[serde(rename = "Q")]
        q: Matrix,
    },
    KrasovskiiR {
        #[serde(rename = "P")]
        p: Matrix,
        #[serde(rename = "R")]
        r: Matrix,
        #[serde(rename = "Psi2", default, skip_serializing_if = "Option::is_none")]
        psi2: Option<Matrix>,
        #[serde(rename = "Psi3", default, skip_serializing_if = "Option::is_none")]
        psi3: Option<Matrix>,
        /// Seed for completing missing slack matrices.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Synthesize {
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        /// Maximize the constraint-admissible level set instead of taking
        /// the first feasible certificate.
        #[serde(default)]
        volume: bool,
    },
}

impl CertificateSpec {
    pub fn from_certificate(cert: &Certificate<f64>) -> Self {
        let m = |x: &DMatrix<f64>| -> Matrix { x.row_iter().map(|r| r.iter().copied().collect()).collect() };
        match cert {
            Certificate::Razumikhin { p, q } => CertificateSpec::Razumikhin { p: m(p), q: *q },
            Certificate::KrasovskiiQ { p, q } => CertificateSpec::KrasovskiiQ { p: m(p), q: m(q) },
            Certificate::KrasovskiiR { p, r, psi2, psi3 } => CertificateSpec::KrasovskiiR {
                p: m(p),
                r: m(r),
                psi2: Some(m(psi2)),
                psi3: Some(m(psi3)),
                seed: None,
            },
        }
    }
}

/// Either the string `"none"` or a governor block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ErgField {
    Mode(String),
    Block(ErgSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub eta: f64,
    pub zeta: f64,
    pub delta: f64,
    /// `terminal` or `infinite_horizon`.
    pub variant: String,
    /// Defaults to ten simulation steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub reference: Vec<ReferencePoint>,
    /// Tabulated past sampled at `dt`, newest last; overrides `x0`/`v0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistorySpec>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_duration() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePoint {
    pub t: f64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySpec {
    pub x: Matrix,
    pub v: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
}

fn default_decimation() -> usize {
    10
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            path: None,
            decimation: default_decimation(),
        }
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
}

/// A scenario turned into core objects.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub experiment: Experiment<f64>,
    pub system: DelaySystem<f64>,
    pub gain: PrimaryGain<f64>,
    pub certificate: Option<Certificate<f64>>,
}

impl Scenario {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(dt) = ov.dt {
            self.run.dt = dt;
        }
        if let Some(d) = ov.duration {
            self.run.duration = d;
        }
        if let Some(seed) = ov.seed {
            match &mut self.certificate {
                Some(CertificateSpec::KrasovskiiR { seed: s, .. }) | Some(CertificateSpec::Synthesize { seed: s, .. }) => {
                    *s = Some(seed)
                }
                _ => {}
            }
        }
    }

    pub fn system(&self, origin: &str) -> Result<DelaySystem<f64>, CliError> {
        let ctx = Ctx(origin);
        let s = &self.system;
        let a = ctx.matrix("system.A", &s.a)?;
        let b = ctx.matrix("system.B", &s.b)?;
        let c = ctx.matrix("system.C", &s.c)?;
        let d = ctx.matrix("system.D", &s.d)?;
        DelaySystem::new(a, b, c, d, s.tau).map_err(|e| ctx.err("system", e))
    }

    pub fn gain(&self, sys: &DelaySystem<f64>, origin: &str) -> Result<PrimaryGain<f64>, CliError> {
        let ctx = Ctx(origin);
        let k = ctx.matrix("controller.K", &self.controller.k)?;
        PrimaryGain::new(k, sys).map_err(|e| ctx.err("controller.K", e))
    }

    pub fn constraint_set(&self, sys: &DelaySystem<f64>, origin: &str) -> Result<ConstraintSet<f64>, CliError> {
        let ctx = Ctx(origin);
        if self.constraints.is_empty() {
            return Err(ctx.invalid("constraints", "at least one constraint row is required"));
        }
        let rows = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let at = format!("constraints[{i}]");
                if c.h_x.len() != sys.n() || c.h_u.len() != sys.m() {
                    return Err(ctx.invalid(
                        &at,
                        &format!(
                            "h_x/h_u have lengths {}/{}, expected {}/{}",
                            c.h_x.len(),
                            c.h_u.len(),
                            sys.n(),
                            sys.m()
                        ),
                    ));
                }
                ConstraintRow::new(DVector::from_vec(c.h_x.clone()), DVector::from_vec(c.h_u.clone()), c.g)
                    .map_err(|e| ctx.err(&at, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ConstraintSet::new(rows, sys.n(), sys.m()).map_err(|e| ctx.err("constraints", e))
    }

    /// Builds the certificate, completing or searching it where asked.
    pub fn certificate(
        &self,
        sys: &DelaySystem<f64>,
        gain: &PrimaryGain<f64>,
        cs: &ConstraintSet<f64>,
        origin: &str,
    ) -> Result<Option<Certificate<f64>>, CliError> {
        let ctx = Ctx(origin);
        let Some(spec) = &self.certificate else { return Ok(None) };
        let at = "certificate";
        let cert = match spec {
            CertificateSpec::Razumikhin { p, q } => Certificate::Razumikhin {
                p: ctx.matrix("certificate.P", p)?,
                q: *q,
            },
            CertificateSpec::KrasovskiiQ { p, q } => Certificate::KrasovskiiQ {
                p: ctx.matrix("certificate.P", p)?,
                q: ctx.matrix("certificate.Q", q)?,
            },
            CertificateSpec::KrasovskiiR { p, r, psi2, psi3, seed } => {
                let p = ctx.matrix("certificate.P", p)?;
                let r = ctx.matrix("certificate.R", r)?;
                match (psi2, psi3) {
                    (Some(a), Some(b)) => Certificate::KrasovskiiR {
                        p,
                        r,
                        psi2: ctx.matrix("certificate.Psi2", a)?,
                        psi3: ctx.matrix("certificate.Psi3", b)?,
                    },
                    (None, None) => synthesize_slack(sys, gain, &p, &r, seed.unwrap_or(0)).map_err(|e| ctx.err(at, e))?,
                    _ => return Err(ctx.invalid(at, "give both Psi2 and Psi3 or neither")),
                }
            }
            CertificateSpec::Synthesize { of, seed, volume } => {
                let variant = Variant::from_name(of)
                    .ok_or_else(|| ctx.invalid("certificate.of", &format!("unknown certificate variant `{of}`")))?;
                let seed = seed.unwrap_or(0);
                let found = if *volume {
                    optimize_p_volume(cs, sys, gain, variant, seed)
                } else {
                    synthesize(variant, sys, gain, seed)
                };
                found.map_err(|e| ctx.err(at, e))?
            }
        };
        if cert.dim() != sys.n() {
            return Err(ctx.invalid(at, &format!("certificate is {}×{}, expected {}×{}", cert.dim(), cert.dim(), sys.n(), sys.n())));
        }
        let check = lmi_feasible(&cert, sys, gain, 0.0).map_err(|e| ctx.err(at, e))?;
        if let Some(issue) = check.issue {
            return Err(ctx.invalid(at, &issue.to_string()));
        }
        if !check.feasible {
            return Err(ctx.invalid(
                at,
                &format!(
                    "the {} LMI does not hold for this gain (largest eigenvalue {:.3e})",
                    cert.variant(),
                    check.max_eigenvalue.unwrap_or(f64::NAN)
                ),
            ));
        }
        if check.margin() < DEFAULT_LMI_MARGIN {
            log::warn!("certificate LMI margin {:.3e} is below {:.0e}", check.margin(), DEFAULT_LMI_MARGIN);
        }
        Ok(Some(cert))
    }

    /// Validates everything and assembles the experiment.
    pub fn load(&self, origin: &str) -> Result<Loaded, CliError> {
        let ctx = Ctx(origin);
        let sys = self.system(origin)?;
        let gain = self.gain(&sys, origin)?;
        let cs = self.constraint_set(&sys, origin)?;
        let run = &self.run;

        if !(run.dt > 0.0) || !run.dt.is_finite() {
            return Err(ctx.invalid("run.dt", "must be positive"));
        }
        if run.dt > sys.tau() / 100.0 * (1.0 + 1e-9) {
            return Err(ctx.invalid(
                "run.dt",
                &format!("must be at most tau/100 = {} (got {})", sys.tau() / 100.0, run.dt),
            ));
        }
        if !(run.duration >= 0.0) || !run.duration.is_finite() {
            return Err(ctx.invalid("run.duration", "must be non-negative"));
        }
        if run.x0.len() != sys.n() {
            return Err(ctx.invalid("run.x0", &format!("has length {}, expected {}", run.x0.len(), sys.n())));
        }
        if run.v0.len() != sys.p() {
            return Err(ctx.invalid("run.v0", &format!("has length {}, expected {}", run.v0.len(), sys.p())));
        }
        if run.reference.is_empty() {
            return Err(ctx.invalid("run.reference", "needs at least one (t, value) entry"));
        }
        for (i, pt) in run.reference.iter().enumerate() {
            if pt.value.len() != sys.p() {
                return Err(ctx.invalid(
                    &format!("run.reference[{i}].value"),
                    &format!("has length {}, expected {}", pt.value.len(), sys.p()),
                ));
            }
        }
        let schedule = Schedule::new(
            run.reference
                .iter()
                .map(|pt| (pt.t, DVector::from_vec(pt.value.clone())))
                .collect(),
        )
        .map_err(|e| ctx.err("run.reference", e))?;
        let history = match &run.history {
            None => None,
            Some(h) => {
                let rows = |name: &str, m: &Matrix, dim: usize| -> Result<Vec<DVector<f64>>, CliError> {
                    m.iter()
                        .enumerate()
                        .map(|(i, r)| {
                            if r.len() == dim {
                                Ok(DVector::from_vec(r.clone()))
                            } else {
                                Err(ctx.invalid(&format!("run.history.{name}[{i}]"), &format!("has length {}, expected {dim}", r.len())))
                            }
                        })
                        .collect()
                };
                Some((rows("x", &h.x, sys.n())?, rows("v", &h.v, sys.p())?))
            }
        };

        // at least one probe reference must be strictly steady-state admissible
        let cl = ClosedLoop::new(sys.clone(), gain.clone()).map_err(|e| ctx.err("controller", e))?;
        let map = cl.steady_state();
        let probes: Vec<(String, DVector<f64>)> = std::iter::once(("run.v0".to_string(), DVector::from_vec(run.v0.clone())))
            .chain(
                run.reference
                    .iter()
                    .enumerate()
                    .map(|(i, pt)| (format!("run.reference[{i}]"), DVector::from_vec(pt.value.clone()))),
            )
            .collect();
        let admissible = probes.iter().any(|(_, v)| {
            map.steady_residuals(&cs, v)
                .map(|r| r.iter().all(|&x| x > 0.0))
                .unwrap_or(false)
        });
        if !admissible {
            return Err(ctx.invalid(
                "run",
                "no supplied reference (v0 or schedule) is strictly admissible at steady state",
            ));
        }

        let certificate = self.certificate(&sys, &gain, &cs, origin)?;
        let governor = match &self.erg {
            None => None,
            Some(ErgField::Mode(s)) if s == "none" => None,
            Some(ErgField::Mode(s)) => {
                return Err(ctx.invalid("erg", &format!("expected \"none\" or a governor block, got \"{s}\"")))
            }
            Some(ErgField::Block(e)) => {
                let variant = match e.variant.as_str() {
                    "infinite_horizon" => ErgVariant::InfiniteHorizon,
                    "terminal" => ErgVariant::Terminal(
                        certificate
                            .clone()
                            .ok_or_else(|| ctx.invalid("erg.variant", "terminal margin needs a certificate block"))?,
                    ),
                    other => {
                        return Err(ctx.invalid(
                            "erg.variant",
                            &format!("expected \"terminal\" or \"infinite_horizon\", got \"{other}\""),
                        ))
                    }
                };
                let cfg = ErgConfig {
                    horizon: e.horizon,
                    kappa1: e.kappa1,
                    kappa2: e.kappa2,
                    eta: e.eta,
                    zeta: e.zeta,
                    delta: e.delta,
                    variant,
                    update_period: e.update_period.unwrap_or(10.0 * run.dt),
                };
                cfg.validate(sys.tau(), run.dt).map_err(|err| ctx.err("erg", err))?;
                let v0 = DVector::from_vec(run.v0.clone());
                let r0 = map.steady_residuals(&cs, &v0).map_err(|err| ctx.err("run.v0", err))?;
                if let Some(i) = r0.iter().position(|&x| !(x > 0.0)) {
                    return Err(ctx.invalid(
                        "run.v0",
                        &format!("initial reference violates constraint {} at steady state (residual {})", i + 1, r0[i]),
                    ));
                }
                Some(cfg)
            }
        };

        let experiment = Experiment {
            closed_loop: cl,
            constraints: cs,
            governor,
            run: RunConfig {
                dt: run.dt,
                duration: run.duration,
                x0: DVector::from_vec(run.x0.clone()),
                v0: DVector::from_vec(run.v0.clone()),
                reference: schedule,
                decimation: self.output.decimation.max(1),
                history,
            },
        };
        Ok(Loaded {
            experiment,
            system: sys,
            gain,
            certificate,
        })
    }
}

/// Diagnostic context: the file name plus a field path.
struct Ctx<'a>(&'a str);

impl Ctx<'_> {
    fn invalid(&self, field: &str, message: &str) -> CliError {
        CliError::Invalid {
            origin: self.0.to_string(),
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    fn err(&self, field: &str, e: ErgError) -> CliError {
        self.invalid(field, &e.to_string())
    }

    fn matrix(&self, field: &str, rows: &Matrix) -> Result<DMatrix<f64>, CliError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
            return Err(self.invalid(field, &format!("row {} has {} entries, expected {}", i, rows[i].len(), ncols)));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(self.invalid(field, "entries must be finite"));
        }
        Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
    }
}
