use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use erg_core::erg::run_scenario;
use erg_core::model::{DelaySystem, PrimaryGain};
use erg_core::stability::{lmi_feasible, optimize_p_volume, synthesize, synthesize_with_budget, SearchBudget, Variant};
use erg_core::{ErgError, Trace};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::Value;

use crate::scenario::{CertificateSpec, Loaded, Overrides, Scenario};
use crate::{exit, presets, table, CliError, VIOLATION_TOLERANCE};

/// Loads `preset:<name>` or a scenario file.
pub fn load_scenario(source: &str) -> Result<Scenario, CliError> {
    match source.strip_prefix("preset:") {
        Some(name) => presets::scenario(name).ok_or_else(|| unknown_preset(name)),
        None => Scenario::from_file(Path::new(source)),
    }
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Usage(format!("unknown preset `{name}`; expected one of {}", presets::NAMES.join(", ")))
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub max_output: f64,
    pub final_output: f64,
    pub overshoot: f64,
    pub settling_time: Option<f64>,
    pub min_residual: f64,
    /// Smallest combined margin `Δ` seen at governor updates.
    pub min_delta: Option<f64>,
}

impl RunSummary {
    pub fn of(trace: &Trace, loaded: &Loaded) -> Self {
        let s = trace.summary(&loaded.system);
        let min_delta = loaded.experiment.governor.as_ref().and_then(|cfg| {
            let dt = trace.column("Delta_T")?;
            let di = trace.column("Delta_inf")?;
            dt.iter()
                .zip(&di)
                .filter(|(a, _)| a.is_finite())
                .map(|(a, b)| {
                    let d = cfg.kappa1 * a;
                    if b.is_finite() {
                        d.min(cfg.kappa2 * b)
                    } else {
                        d
                    }
                })
                .reduce(f64::min)
        });
        Self {
            max_output: s.max_output,
            final_output: s.final_output,
            overshoot: s.overshoot,
            settling_time: s.settling_time,
            min_residual: s.min_residual,
            min_delta,
        }
    }

    pub fn violated(&self) -> bool {
        self.min_residual < VIOLATION_TOLERANCE
    }

    pub fn exit_code(&self) -> i32 {
        if self.violated() {
            exit::VIOLATION
        } else {
            exit::OK
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "max x          {:.4}", self.max_output)?;
        writeln!(f, "final x        {:.4}", self.final_output)?;
        writeln!(f, "overshoot      {:.4}", self.overshoot)?;
        writeln!(f, "settling time  {}", opt(self.settling_time))?;
        writeln!(f, "min residual   {:.6}", self.min_residual)?;
        writeln!(f, "min Delta      {}", opt(self.min_delta))?;
        write!(
            f,
            "constraints    {}",
            if self.violated() { "VIOLATED" } else { "satisfied" }
        )
    }
}

pub struct RunOutcome {
    pub trace: Trace,
    pub summary: RunSummary,
}

/// Loads, validates and runs a scenario.
pub fn run(scenario: &Scenario, origin: &str, ov: &Overrides) -> Result<RunOutcome, CliError> {
    let mut sc = scenario.clone();
    sc.apply(ov);
    let loaded = sc.load(origin)?;
    let trace = run_scenario(&loaded.experiment)?;
    let summary = RunSummary::of(&trace, &loaded);
    Ok(RunOutcome { trace, summary })
}

/// Where a trace goes: a file, or stdout for `-`.
pub fn write_trace_to(trace: &Trace, dest: &Path) -> Result<(), CliError> {
    if dest.as_os_str() == "-" {
        let out = std::io::stdout().lock();
        return table::write_trace(out, trace);
    }
    let file = File::create(dest).map_err(|e| CliError::Io {
        path: dest.display().to_string(),
        source: e,
    })?;
    table::write_trace(BufWriter::new(file), trace)
}

/// `simulate`: runs a scenario, writes the trace and returns the exit code.
pub fn simulate(source: &str, out: Option<&Path>, ov: &Overrides, quiet: bool) -> Result<i32, CliError> {
    let sc = load_scenario(source)?;
    let dest = out
        .map(Path::to_path_buf)
        .or_else(|| sc.output.path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("-"));
    finish(run(&sc, source, ov)?, &dest, quiet)
}

/// `reproduce`: runs a named preset; the trace defaults to `<name>.csv`.
pub fn reproduce(name: &str, out: Option<&Path>, ov: &Overrides, quiet: bool) -> Result<i32, CliError> {
    let sc = presets::scenario(name).ok_or_else(|| unknown_preset(name))?;
    let dest = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    if !quiet {
        println!("preset         {name}");
    }
    finish(run(&sc, name, ov)?, &dest, quiet)
}

fn finish(outcome: RunOutcome, dest: &Path, quiet: bool) -> Result<i32, CliError> {
    write_trace_to(&outcome.trace, dest)?;
    if !quiet {
        if dest.as_os_str() == "-" {
            eprintln!("{}", outcome.summary);
        } else {
            println!("{}", outcome.summary);
            println!("trace          {}", dest.display());
        }
    }
    Ok(outcome.summary.exit_code())
}

/// Feasibility of each variant across a gain grid, with refined boundaries.
#[derive(Debug, Clone)]
pub struct LmiReport {
    pub variants: Vec<Variant>,
    /// `(k, best margin per variant or None if no certificate was found)`.
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
    /// Gains where feasibility flips, per variant, to within `resolution`.
    pub boundaries: Vec<Vec<f64>>,
    pub resolution: f64,
}

/// Search budget used by the gain sweep; smaller than the synthesis default
/// since every grid point and bisection step runs a search.
pub const LMI_SWEEP_BUDGET: SearchBudget = SearchBudget {
    restarts: 24,
    iterations: 400,
    lmi_margin: erg_core::stability::DEFAULT_LMI_MARGIN,
};

/// Gain for sweep value `k`: the gain itself for a scalar loop, otherwise
/// `k` times the scenario's gain.
pub fn scaled_gain(base: &DMatrix<f64>, sys: &DelaySystem<f64>, k: f64) -> Result<PrimaryGain<f64>, ErgError> {
    let km = if sys.n() == 1 && sys.m() == 1 {
        DMatrix::from_element(1, 1, k)
    } else {
        base * k
    };
    PrimaryGain::new(km, sys)
}

fn certificate_margin(variant: Variant, sys: &DelaySystem<f64>, gain: &PrimaryGain<f64>, seed: u64) -> Result<Option<f64>, ErgError> {
    match synthesize_with_budget(variant, sys, gain, seed, LMI_SWEEP_BUDGET) {
        Ok(cert) => Ok(Some(lmi_feasible(&cert, sys, gain, 0.0)?.margin())),
        Err(ErgError::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn lmi(
    scenario: &Scenario,
    origin: &str,
    variants: &[Variant],
    k_min: f64,
    k_max: f64,
    steps: usize,
    seed: u64,
) -> Result<LmiReport, CliError> {
    if !(k_min < k_max) || steps < 2 {
        return Err(CliError::Usage("need k-min < k-max and at least two steps".into()));
    }
    let sys = scenario.system(origin)?;
    let base = scenario.gain(&sys, origin)?.k().clone();
    let grid: Vec<f64> = (0..steps)
        .map(|i| k_min + (k_max - k_min) * i as f64 / (steps - 1) as f64)
        .collect();
    let resolution = 0.005;

    let per_variant: Vec<(Vec<Option<f64>>, Vec<f64>)> = variants
        .par_iter()
        .map(|&variant| -> Result<_, ErgError> {
            let feasible = |k: f64| -> Result<Option<f64>, ErgError> {
                certificate_margin(variant, &sys, &scaled_gain(&base, &sys, k)?, seed)
            };
            let margins = grid.par_iter().map(|&k| feasible(k)).collect::<Result<Vec<_>, _>>()?;
            let mut edges = Vec::new();
            for i in 1..grid.len() {
                let (a_ok, b_ok) = (margins[i - 1].is_some(), margins[i].is_some());
                if a_ok == b_ok {
                    continue;
                }
                let (mut lo, mut hi) = (grid[i - 1], grid[i]);
                while hi - lo > resolution {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid)?.is_some() == a_ok {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                edges.push(0.5 * (lo + hi));
            }
            Ok((margins, edges))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, per_variant.iter().map(|(m, _)| m[i]).collect()))
        .collect();
    Ok(LmiReport {
        variants: variants.to_vec(),
        rows,
        boundaries: per_variant.into_iter().map(|(_, e)| e).collect(),
        resolution,
    })
}

impl fmt::Display for LmiReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>10}", "k")?;
        for v in &self.variants {
            write!(f, " {:>14}", v.name())?;
        }
        writeln!(f)?;
        for (k, margins) in &self.rows {
            write!(f, "{k:>10.4}")?;
            for m in margins {
                match m {
                    Some(m) => write!(f, " {:>14}", format!("ok {m:.2e}"))?,
                    None => write!(f, " {:>14}", "-")?,
                }
            }
            writeln!(f)?;
        }
        writeln!(f)?;
        for (v, edges) in self.variants.iter().zip(&self.boundaries) {
            let list = if edges.is_empty() {
                "none in range".to_string()
            } else {
                edges.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>().join(", ")
            };
            writeln!(f, "boundary {:<14} {list} (±{})", v.name(), self.resolution)?;
        }
        writeln!(
            f,
            "note: `-` means no certificate was found within the search budget, not a proof of infeasibility."
        )?;
        if self.variants.contains(&Variant::KrasovskiiR) {
            writeln!(
                f,
                "note: the delay-dependent LMI (functional with the R weight) is reported as krasovskii_r; \
                 published gain ranges for it may be labelled differently."
            )?;
        }
        Ok(())
    }
}

/// Sets the scalar at a dotted path (`erg.kappa2`, `system.A.0.0`).
pub fn set_param(doc: &mut Value, path: &str, value: f64) -> Result<(), CliError> {
    let bad = |msg: &str| CliError::Usage(format!("parameter path `{path}`: {msg}"));
    let mut cur = doc;
    for part in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part).ok_or_else(|| bad(&format!("no field `{part}`")))?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| bad(&format!("`{part}` is not an index")))?;
                let len = items.len();
                items.get_mut(i).ok_or_else(|| bad(&format!("index {i} out of range ({len} entries)")))?
            }
            _ => return Err(bad(&format!("cannot descend into a scalar at `{part}`"))),
        };
    }
    if !cur.is_number() {
        return Err(bad("does not address a number"));
    }
    *cur = serde_json::Number::from_f64(value)
        .map(Value::Number)
        .ok_or_else(|| bad("value must be finite"))?;
    Ok(())
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "value",
    "status",
    "max_output",
    "final_output",
    "overshoot",
    "settling_time",
    "min_residual",
    "min_delta",
];

/// Runs the scenario once per grid value; rows come back in grid order.
/// `status` is the exit code the run would produce (0, 2, or 1 on error).
pub fn sweep(
    scenario: &Scenario,
    origin: &str,
    param: &str,
    values: &[f64],
    ov: &Overrides,
    threads: Option<usize>,
) -> Result<Vec<Vec<f64>>, CliError> {
    let doc = serde_json::to_value(scenario).expect("scenario serializes");
    // validate the path even for an empty grid
    set_param(&mut doc.clone(), param, 0.0)?;
    let one = |&value: &f64| -> Vec<f64> {
        let outcome = (|| {
            let mut d = doc.clone();
            set_param(&mut d, param, value)?;
            let sc: Scenario = serde_json::from_value(d).map_err(|e| CliError::Usage(e.to_string()))?;
            run(&sc, origin, ov)
        })();
        match outcome {
            Ok(o) => {
                let s = o.summary;
                vec![
                    value,
                    s.exit_code() as f64,
                    s.max_output,
                    s.final_output,
                    s.overshoot,
                    s.settling_time.unwrap_or(f64::NAN),
                    s.min_residual,
                    s.min_delta.unwrap_or(f64::NAN),
                ]
            }
            Err(e) => {
                log::error!("{param} = {value}: {e}");
                let mut row = vec![f64::NAN; SWEEP_COLUMNS.len()];
                row[0] = value;
                row[1] = exit::ERROR as f64;
                row
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(|| values.par_iter().map(one).collect()))
}

/// Thread cap from `ERG_NUM_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("ERG_NUM_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

pub fn write_sweep<W: Write>(out: W, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let header: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
    table::write_rows(out, &header, rows)
}

/// `synthesize`: a certificate block for the scenario's loop.
pub fn synthesize_certificate(
    scenario: &Scenario,
    origin: &str,
    variant: Variant,
    seed: u64,
    volume: bool,
) -> Result<(CertificateSpec, f64), CliError> {
    let sys = scenario.system(origin)?;
    let gain = scenario.gain(&sys, origin)?;
    let cert = if volume {
        let cs = scenario.constraint_set(&sys, origin)?;
        optimize_p_volume(&cs, &sys, &gain, variant, seed)?
    } else {
        synthesize(variant, &sys, &gain, seed)?
    };
    let margin = lmi_feasible(&cert, &sys, &gain, 0.0)?.margin();
    Ok((CertificateSpec::from_certificate(&cert), margin))
}
