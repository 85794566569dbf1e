//! Experiment drivers: convergence and long-time energy runs, the batched
//! verification suite, plain trajectory runs, and their CSV output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::SquareMatrix;
use crate::problems::{duffing, wind_oscillation, DuffingParams, WindParams};
use crate::stepper::{integrate, step_count, SemilinearProblem, SolverSettings, StepMap, Trajectory};
use crate::tableau::{
    builtin_methods, check_ei_symmetry, check_ei_symplecticity, check_order_conditions,
    check_rk_symmetry, check_rk_symplecticity, find_method, MethodKind, SeiMethod, TableauFile,
    SCALAR_TOL,
};

/// Threshold for the matrix-valued condition checks in the verify suite.
pub const EI_CHECK_TOL: f64 = 1e-11;
/// Round-trip defect bound, in units of `fp_tol · |y0|`.
pub const ROUND_TRIP_FACTOR: f64 = 50.0;
/// Bound on `|D^T J D - J|` for the finite-difference step Jacobian.
pub const JACOBIAN_TOL: f64 = 1e-5;
/// Central-difference perturbation for the step Jacobian.
pub const JACOBIAN_DELTA: f64 = 1e-6;
/// Errors below this are roundoff and excluded from order estimates.
pub const ORDER_FLOOR: f64 = 1e-12;
/// Step-size ratio between the target grid and the numeric reference.
pub const REFERENCE_REFINEMENT: f64 = 200.0;
/// Maximum disagreement between the two reference tiers.
pub const REFERENCE_TOL: f64 = 1e-10;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest 2-norm distance between the trajectory and `reference` over the grid.
pub fn global_error(traj: &Trajectory, reference: impl Fn(f64) -> Result<Vec<f64>>) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (t, y) in traj.t.iter().zip(&traj.y) {
        worst = worst.max(dist2(y, &reference(*t)?));
    }
    Ok(worst)
}

/// Global error against the problem's closed-form solution.
pub fn global_error_exact(traj: &Trajectory, p: &SemilinearProblem) -> Result<f64> {
    if !p.has_exact() {
        return Err(Error::ReferenceUnavailable(p.label.clone()));
    }
    global_error(traj, |t| Ok(p.exact(t).expect("checked above")))
}

/// `max_n |H(y_n) - H(y_0)|`.
pub fn energy_error(traj: &Trajectory, h: impl Fn(&[f64]) -> f64) -> f64 {
    let h0 = h(&traj.y[0]);
    traj.y.iter().fold(0.0, |m, y| m.max((h(y) - h0).abs()))
}

/// A fine SSSEI3s4 trajectory validated against a second run at half its step.
/// Lookups are only answered on its own grid points.
#[derive(Clone, Debug)]
pub struct NumericReference {
    t0: f64,
    h_ref: f64,
    dim: usize,
    states: Vec<f64>,
    /// Largest tier disagreement observed during validation.
    pub disagreement: f64,
}

impl NumericReference {
    pub fn build(p: &SemilinearProblem, h_target: f64, t_end: f64, settings: &SolverSettings) -> Result<Self> {
        let method = find_method("SSSEI3s4")?;
        let h_ref = h_target / REFERENCE_REFINEMENT;
        let n = step_count(p.t0, t_end, h_ref)?;
        let d = p.dim();
        let coarse = StepMap::new(&method, &p.m, h_ref)?;
        let fine = StepMap::new(&method, &p.m, h_ref / 2.0)?;

        let mut states = Vec::with_capacity((n + 1) * d);
        states.extend_from_slice(&p.y0);
        let mut y = p.y0.clone();
        let mut z = p.y0.clone();
        let mut disagreement = 0.0_f64;
        for step in 1..=n {
            let wrap = |e| Error::StepFailed { step, source: Box::new(e) };
            y = coarse.step(p, &y, settings).map_err(wrap)?.y;
            z = fine.step(p, &z, settings).map_err(wrap)?.y;
            z = fine.step(p, &z, settings).map_err(wrap)?.y;
            disagreement = disagreement.max(dist2(&y, &z));
            states.extend_from_slice(&y);
        }
        if !(disagreement <= REFERENCE_TOL) {
            return Err(Error::ReferenceUntrusted { disagreement });
        }
        Ok(Self {
            t0: p.t0,
            h_ref,
            dim: d,
            states,
            disagreement,
        })
    }

    pub fn h_ref(&self) -> f64 {
        self.h_ref
    }

    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let x = (t - self.t0) / self.h_ref;
        let n = x.round();
        let len = self.states.len() / self.dim;
        if (x - n).abs() > 1e-6 || n < 0.0 || n as usize >= len {
            return Err(Error::Config(format!("t = {t} is not on the reference grid")));
        }
        let i = n as usize * self.dim;
        Ok(self.states[i..i + self.dim].to_vec())
    }
}

pub fn numeric_reference(
    p: &SemilinearProblem,
    h_target: f64,
    t_end: f64,
    settings: &SolverSettings,
) -> Result<NumericReference> {
    NumericReference::build(p, h_target, t_end, settings)
}

/// Observed orders `ln(GE_i / GE_{i+1}) / ln(h_i / h_{i+1})` for consecutive
/// `(h, GE)` pairs; a pair is skipped when either error is below [`ORDER_FLOOR`]
/// or not finite.
pub fn estimate_order(points: &[(f64, f64)]) -> Vec<f64> {
    points
        .windows(2)
        .filter(|w| w.iter().all(|(_, e)| e.is_finite() && *e >= ORDER_FLOOR))
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect()
}

/// Defect `|y_back - y0|_inf` after a step of `h` followed by a step of `-h`
/// (kernel rebuilt for the negative step).
pub fn round_trip_defect(
    method: &SeiMethod,
    p: &SemilinearProblem,
    y0: &[f64],
    h: f64,
    settings: &SolverSettings,
) -> Result<f64> {
    let forward = StepMap::new(method, &p.m, h)?;
    let backward = StepMap::new(method, &p.m, -h)?;
    let y1 = forward.step(p, y0, settings)?.y;
    let back = backward.step(p, &y1, settings)?.y;
    Ok(back.iter().zip(y0).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Central-difference Jacobian of one step at `y`.
pub fn step_jacobian(
    map: &StepMap,
    p: &SemilinearProblem,
    y: &[f64],
    settings: &SolverSettings,
    delta: f64,
) -> Result<SquareMatrix> {
    let d = y.len();
    let mut cols = Vec::with_capacity(d);
    for k in 0..d {
        let mut plus = y.to_vec();
        let mut minus = y.to_vec();
        plus[k] += delta;
        minus[k] -= delta;
        let yp = map.step(p, &plus, settings)?.y;
        let ym = map.step(p, &minus, settings)?.y;
        cols.push(yp.iter().zip(&ym).map(|(a, b)| (a - b) / (2.0 * delta)).collect::<Vec<_>>());
    }
    SquareMatrix::from_fn(d, |i, j| cols[j][i])
}

/// `|D^T J D - J|_inf`.
pub fn symplecticity_defect(jac: &SquareMatrix, j: &SquareMatrix) -> Result<f64> {
    Ok(jac.transpose().mul(j)?.mul(jac)?.sub(j)?.inf_norm())
}

/// A random Hamiltonian matrix `J^{-1} Q` of size `2·half` with
/// `|Z|_inf` drawn uniformly from `[max_norm / 10, max_norm]`.
pub fn random_hamiltonian(rng: &mut impl Rng, half: usize, max_norm: f64) -> SquareMatrix {
    let d = 2 * half;
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        for k in i..d {
            let v: f64 = rng.gen_range(-1.0..1.0);
            q[i * d + k] = v;
            q[k * d + i] = v;
        }
    }
    let q = SquareMatrix::new(d, q).expect("finite entries");
    let j_inv = SquareMatrix::canonical_symplectic(half).scale(-1.0);
    let z = j_inv.product(&q);
    let target = rng.gen_range(0.1 * max_norm..=max_norm);
    z.scale(target / z.inf_norm())
}

/// Parses a scalar such as `0.125`, `1/8`, `pi/2` or `pi/2-1e-4`.
pub fn parse_scalar(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let bytes = s.as_bytes();
    for i in (1..bytes.len()).rev() {
        if (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
            let lhs = parse_scalar(&s[..i])?;
            let rhs = parse_scalar(&s[i + 1..])?;
            return Ok(if bytes[i] == b'+' { lhs + rhs } else { lhs - rhs });
        }
    }
    let factor = |t: &str| -> Result<f64> {
        match t.trim() {
            "pi" => Ok(PI),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse number `{s}`"))),
        }
    };
    match s.split_once('/') {
        Some((num, den)) => Ok(factor(num)? / factor(den)?),
        None => factor(s),
    }
}

/// Problem label plus parameter overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub label: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ProblemSpec {
    pub fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn take(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParams(format!(
                "`{k}` is not a parameter of {} (expected one of {allowed:?})",
                self.label
            ))),
            None => Ok(()),
        }
    }

    pub fn build(&self) -> Result<SemilinearProblem> {
        match self.label.as_str() {
            "duffing" => {
                self.take(&["k", "omega"])?;
                let d = DuffingParams::default();
                duffing(DuffingParams {
                    k: self.params.get("k").copied().unwrap_or(d.k),
                    omega: self.params.get("omega").copied().unwrap_or(d.omega),
                })
            }
            "wind" => {
                self.take(&["r", "theta"])?;
                let d = WindParams::default();
                wind_oscillation(WindParams {
                    r: self.params.get("r").copied().unwrap_or(d.r),
                    theta: self.params.get("theta").copied().unwrap_or(d.theta),
                })
            }
            other => Err(Error::UnknownProblem(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Convergence,
    Energy,
    Verify,
    Run,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub problem: ProblemSpec,
    /// Method names; empty selects all built-ins.
    #[serde(default)]
    pub methods: Vec<String>,
    /// Extra tableaux in the JSON exchange format, stepped exponentially.
    #[serde(default)]
    pub tableau_files: Vec<PathBuf>,
    #[serde(default)]
    pub h_list: Vec<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub t_end_list: Option<Vec<f64>>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSettings,
    /// When false, `wall_time` is written as zero so output is reproducible.
    #[serde(default = "default_true")]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, problem: ProblemSpec) -> Self {
        Self {
            experiment,
            problem,
            methods: Vec::new(),
            tableau_files: Vec::new(),
            h_list: Vec::new(),
            t_end: None,
            t_end_list: None,
            output_path: None,
            solver: SolverSettings::default(),
            timing: true,
        }
    }

    /// Fills unset fields with the benchmark defaults for the chosen problem
    /// and checks that every `(t_end, h)` pair gives an integer step count.
    pub fn resolved(mut self) -> Result<Self> {
        self.solver.validate()?;
        let is_duffing = self.problem.label == "duffing";
        if self.h_list.is_empty() {
            self.h_list = match self.experiment {
                Experiment::Energy if is_duffing => vec![0.1],
                Experiment::Energy => vec![0.05],
                Experiment::Run => vec![0.125],
                _ => vec![0.125, 0.0625, 0.03125, 0.015625],
            };
        }
        if self.t_end.is_none() {
            self.t_end = Some(if is_duffing { 20.0 } else { 10.0 });
        }
        if self.experiment == Experiment::Energy && self.t_end_list.is_none() {
            self.t_end_list = Some(vec![1.0, 10.0, 100.0, 1000.0]);
        }
        if self.experiment != Experiment::Verify {
            for &h in &self.h_list {
                if !(h > 0.0) {
                    return Err(Error::Config(format!("step sizes must be positive, got {h}")));
                }
                for t_end in self.t_ends() {
                    step_count(0.0, t_end, h)?;
                }
            }
        }
        Ok(self)
    }

    fn t_ends(&self) -> Vec<f64> {
        match (&self.t_end_list, self.experiment) {
            (Some(list), Experiment::Energy) => list.clone(),
            _ => self.t_end.into_iter().collect(),
        }
    }

    pub fn load_methods(&self) -> Result<Vec<SeiMethod>> {
        let mut out = if self.methods.is_empty() && self.tableau_files.is_empty() {
            builtin_methods()
        } else {
            self.methods.iter().map(|n| find_method(n)).collect::<Result<Vec<_>>>()?
        };
        for path in &self.tableau_files {
            let file: TableauFile = serde_json::from_reader(std::fs::File::open(path)?)?;
            out.push(file.to_method(MethodKind::Exponential)?);
        }
        Ok(out)
    }
}

/// A metric value, or the reason it has none.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Value(f64),
    Divergent,
    Missing,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            _ => None,
        }
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => f.write_str(&fmt_float(*v)),
            Metric::Divergent => f.write_str("divergent"),
            Metric::Missing => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub problem: String,
    pub h: f64,
    pub t_end: f64,
    pub ge: Metric,
    pub geh: Metric,
    pub wall_time: f64,
    pub n_steps: usize,
    pub mean_fp_iters: Metric,
}

impl MetricRow {
    pub fn is_divergent(&self) -> bool {
        self.ge == Metric::Divergent || self.geh == Metric::Divergent
    }
}

pub const METRIC_HEADER: [&str; 9] = [
    "method", "problem", "h", "t_end", "GE", "GEH", "wall_time", "n_steps", "mean_fp_iters",
];

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.problem.clone(),
            fmt_float(r.h),
            fmt_float(r.t_end),
            r.ge.to_string(),
            r.geh.to_string(),
            fmt_float(r.wall_time),
            r.n_steps.to_string(),
            r.mean_fp_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Where global errors are measured against.
enum Reference<'a> {
    Exact(&'a SemilinearProblem),
    Numeric(NumericReference),
}

impl Reference<'_> {
    fn error(&self, traj: &Trajectory) -> Result<f64> {
        match self {
            Reference::Exact(p) => global_error_exact(traj, p),
            Reference::Numeric(r) => global_error(traj, |t| r.state_at(t)),
        }
    }
}

fn measure(
    method: &SeiMethod,
    p: &SemilinearProblem,
    h: f64,
    t_end: f64,
    settings: &SolverSettings,
    reference: Option<&Reference<'_>>,
    timing: bool,
) -> Result<MetricRow> {
    let n_steps = step_count(p.t0, t_end, h)?;
    let map = StepMap::new(method, &p.m, h)?;
    let start = Instant::now();
    let result = integrate(&map, p, &p.y0, t_end, settings);
    let wall_time = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut row = MetricRow {
        method: method.name.clone(),
        problem: p.label.clone(),
        h,
        t_end,
        ge: Metric::Missing,
        geh: Metric::Missing,
        wall_time,
        n_steps,
        mean_fp_iters: Metric::Divergent,
    };
    let traj = match result {
        Ok(traj) => traj,
        Err(Error::StepFailed { .. }) => {
            row.ge = if reference.is_some() { Metric::Divergent } else { Metric::Missing };
            row.geh = if p.invariant_fn().is_some() { Metric::Divergent } else { Metric::Missing };
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let finite = |v: f64| if v.is_finite() { Metric::Value(v) } else { Metric::Divergent };
    if let Some(r) = reference {
        row.ge = finite(r.error(&traj)?);
    }
    if let Some(hf) = p.invariant_fn() {
        row.geh = finite(energy_error(&traj, |y| hf(y)));
    }
    row.mean_fp_iters = Metric::Value(traj.mean_fp_iterations());
    Ok(row)
}

/// Runs independent jobs on scoped threads and returns results in job order.
fn run_parallel<T: Send>(jobs: Vec<Box<dyn FnOnce() -> Result<T> + Send + '_>>) -> Result<Vec<T>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs.into_iter().map(|job| scope.spawn(job)).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment worker panicked"))
            .collect()
    })
}

fn sort_rows(rows: &mut [MetricRow], methods: &[SeiMethod]) {
    let rank = |name: &str| methods.iter().position(|m| m.name == name).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        rank(&a.method)
            .cmp(&rank(&b.method))
            .then(b.h.total_cmp(&a.h))
            .then(a.t_end.total_cmp(&b.t_end))
    });
}

/// Global error for every method and step size, against the exact solution
/// when the problem has one and the validated numeric reference otherwise.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    let cfg = cfg.clone().resolved()?;
    let p = cfg.problem.build()?;
    let methods = cfg.load_methods()?;
    let t_end = cfg.t_end.expect("resolved");
    let reference = if p.has_exact() {
        Reference::Exact(&p)
    } else {
        let h_min = cfg.h_list.iter().copied().fold(f64::INFINITY, f64::min);
        Reference::Numeric(numeric_reference(&p, h_min, t_end, &cfg.solver)?)
    };

    let mut jobs: Vec<Box<dyn FnOnce() -> Result<MetricRow> + Send + '_>> = Vec::new();
    for m in &methods {
        for &h in &cfg.h_list {
            let (p, reference, solver) = (&p, &reference, &cfg.solver);
            let timing = cfg.timing;
            jobs.push(Box::new(move || measure(m, p, h, t_end, solver, Some(reference), timing)));
        }
    }
    let mut rows = run_parallel(jobs)?;
    sort_rows(&mut rows, &methods);
    Ok(rows)
}

/// Energy drift `GEH` at a fixed step for each final time.
pub fn run_energy(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    let cfg = cfg.clone().resolved()?;
    let p = cfg.problem.build()?;
    if p.invariant_fn().is_none() {
        return Err(Error::Config(format!("problem `{}` has no invariant", p.label)));
    }
    let methods = cfg.load_methods()?;
    let h = cfg.h_list[0];
    let reference = p.has_exact().then_some(Reference::Exact(&p));

    let mut jobs: Vec<Box<dyn FnOnce() -> Result<MetricRow> + Send + '_>> = Vec::new();
    for m in &methods {
        for t_end in cfg.t_ends() {
            let (p, reference, solver) = (&p, reference.as_ref(), &cfg.solver);
            let timing = cfg.timing;
            jobs.push(Box::new(move || measure(m, p, h, t_end, solver, reference, timing)));
        }
    }
    let mut rows = run_parallel(jobs)?;
    sort_rows(&mut rows, &methods);
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub method: String,
    pub check: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl VerifyCheck {
    fn at_most(method: &str, check: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Self {
            method: method.to_string(),
            check: check.into(),
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }

    fn above(method: &str, check: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Self {
            method: method.to_string(),
            check: check.into(),
            residual,
            threshold,
            passed: residual > threshold,
        }
    }
}

/// Sample points `Z = hM` for the matrix-valued checks: zero, `±hM` for both
/// benchmarks at the harness step sizes, and random Hamiltonian matrices.
pub fn condition_samples(seed: u64, random_count: usize) -> Result<Vec<(String, SquareMatrix)>> {
    let mut out = vec![("zero".to_string(), SquareMatrix::zeros(2))];
    let benches = [
        ("duffing", duffing(DuffingParams::default())?),
        ("wind", wind_oscillation(WindParams::default())?),
    ];
    for (name, p) in &benches {
        for h in [0.125, 0.0625] {
            out.push((format!("{name} h={h}"), p.m.scale(h)));
            out.push((format!("{name} h=-{h}"), p.m.scale(-h)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random_count {
        let half = 1 + k % 2;
        out.push((format!("random#{k} d={}", 2 * half), random_hamiltonian(&mut rng, half, 3.0)));
    }
    Ok(out)
}

/// Condition residuals, order checks, round trips and Jacobian symplecticity
/// for every selected method.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<Vec<VerifyCheck>> {
    let settings = cfg.solver;
    settings.validate()?;
    let methods = cfg.load_methods()?;
    let samples = condition_samples(2024, 5)?;
    let duff = duffing(DuffingParams::default())?;
    let wind = wind_oscillation(WindParams::default())?;
    let h = 0.0625;

    let mut checks = Vec::new();
    for m in &methods {
        let name = m.name.as_str();
        checks.push(VerifyCheck::at_most(name, "rk_symmetry", check_rk_symmetry(&m.tableau).residual, SCALAR_TOL));
        checks.push(VerifyCheck::at_most(
            name,
            "rk_symplecticity",
            check_rk_symplecticity(&m.tableau).residual,
            SCALAR_TOL,
        ));
        let order = check_order_conditions(&m.tableau, m.order)?;
        checks.push(VerifyCheck::at_most(name, format!("order_{}", m.order), order.residual, SCALAR_TOL));
        if m.order < 4 {
            let next = check_order_conditions(&m.tableau, m.order + 1)?;
            checks.push(VerifyCheck::above(
                name,
                format!("order_{}_fails", m.order + 1),
                next.residual,
                SCALAR_TOL,
            ));
        }
        for (label, z) in &samples {
            let j = SquareMatrix::canonical_symplectic(z.dim() / 2);
            let sym = check_ei_symmetry(m, z)?;
            checks.push(VerifyCheck::at_most(name, format!("ei_symmetry@{label}"), sym.residual, EI_CHECK_TOL));
            let spl = check_ei_symplecticity(m, z, &j)?;
            checks.push(VerifyCheck::at_most(
                name,
                format!("ei_symplecticity@{label}"),
                spl.residual,
                EI_CHECK_TOL,
            ));
        }
        for p in [&duff, &wind] {
            let bound = ROUND_TRIP_FACTOR * settings.fp_tol * inf_norm(&p.y0);
            let defect = round_trip_defect(m, p, &p.y0, h, &settings)?;
            checks.push(VerifyCheck::at_most(name, format!("round_trip@{}", p.label), defect, bound));
        }
        let map = StepMap::new(m, &duff.m, h)?;
        let jac = step_jacobian(&map, &duff, &duff.y0, &settings, JACOBIAN_DELTA)?;
        let j = duff.structure().expect("duffing carries J");
        checks.push(VerifyCheck::at_most(
            name,
            "jacobian_symplecticity@duffing",
            symplecticity_defect(&jac, j)?,
            JACOBIAN_TOL,
        ));
    }
    Ok(checks)
}

pub fn write_verify_csv<W: Write>(checks: &[VerifyCheck], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "check", "residual", "threshold", "passed"])?;
    for c in checks {
        w.write_record([
            c.method.clone(),
            c.check.clone(),
            fmt_float(c.residual),
            fmt_float(c.threshold),
            c.passed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain integrations of every method at every step size.
pub fn run_trajectories(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    let cfg = cfg.clone().resolved()?;
    let p = cfg.problem.build()?;
    let methods = cfg.load_methods()?;
    let t_end = cfg.t_end.expect("resolved");
    let mut out = Vec::new();
    for m in &methods {
        for &h in &cfg.h_list {
            let map = StepMap::new(m, &p.m, h)?;
            out.push(integrate(&map, &p, &p.y0, t_end, &cfg.solver)?);
        }
    }
    Ok(out)
}

pub fn write_trajectories_csv<W: Write>(
    trajs: &[Trajectory],
    p: &SemilinearProblem,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string(), "problem".into(), "h".into(), "t".into()];
    header.extend((0..p.dim()).map(|i| format!("y{i}")));
    header.push("H".into());
    w.write_record(&header)?;
    for traj in trajs {
        for (t, y) in traj.t.iter().zip(&traj.y) {
            let mut rec = vec![traj.method_name.clone(), traj.problem_label.clone(), fmt_float(traj.h), fmt_float(*t)];
            rec.extend(y.iter().map(|v| fmt_float(*v)));
            rec.push(p.invariant(y).map(fmt_float).unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Result of one configured experiment.
#[derive(Clone, Debug)]
pub enum ExperimentOutput {
    Metrics(Vec<MetricRow>),
    Verify(Vec<VerifyCheck>),
    Trajectories(Vec<Trajectory>),
}

impl ExperimentOutput {
    /// False if any verify check failed or any row diverged.
    pub fn success(&self) -> bool {
        match self {
            Self::Metrics(rows) => rows.iter().all(|r| !r.is_divergent()),
            Self::Verify(checks) => checks.iter().all(|c| c.passed),
            Self::Trajectories(_) => true,
        }
    }

    pub fn write_csv<W: Write>(&self, cfg: &ExperimentConfig, out: W) -> Result<()> {
        match self {
            Self::Metrics(rows) => write_metrics_csv(rows, out),
            Self::Verify(checks) => write_verify_csv(checks, out),
            Self::Trajectories(trajs) => write_trajectories_csv(trajs, &cfg.problem.build()?, out),
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    Ok(match cfg.experiment {
        Experiment::Convergence => ExperimentOutput::Metrics(run_convergence(cfg)?),
        Experiment::Energy => ExperimentOutput::Metrics(run_energy(cfg)?),
        Experiment::Verify => ExperimentOutput::Verify(run_verify(cfg)?),
        Experiment::Run => ExperimentOutput::Trajectories(run_trajectories(cfg)?),
    })
}
