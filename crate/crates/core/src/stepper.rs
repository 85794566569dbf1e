//! One-step maps and the fixed-step trajectory loop.
//!
//! The exponential step for `y' = My + f(y)` is
//!
//! ```text
//! Y_i = exp(c_i hM) y0 + h sum_j abar_ij(hM) f(Y_j)
//! y1  = exp(hM) y0     + h sum_i bbar_i(hM)  f(Y_i)
//! ```
//!
//! The stage system is solved by fixed-point iteration seeded with
//! `exp(c_i hM) y0`. Classical RK steps on the full right-hand side treat the
//! linear part implicitly inside the iteration, so only `f` is iterated on.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::{expm, Lu, SquareMatrix};
use crate::tableau::{MethodKind, RkTableau, SeiMethod};

pub type Nonlinearity = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ExactSolution = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Semilinear initial value problem `y' = My + f(y)`, `y(t0) = y0`.
#[derive(Clone)]
pub struct SemilinearProblem {
    pub label: String,
    pub m: SquareMatrix,
    pub y0: Vec<f64>,
    pub t0: f64,
    f: Nonlinearity,
    invariant: Option<ScalarField>,
    exact: Option<ExactSolution>,
    structure: Option<SquareMatrix>,
}

impl fmt::Debug for SemilinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemilinearProblem")
            .field("label", &self.label)
            .field("m", &self.m)
            .field("y0", &self.y0)
            .field("t0", &self.t0)
            .field("has_invariant", &self.invariant.is_some())
            .field("has_exact", &self.exact.is_some())
            .field("structure", &self.structure)
            .finish()
    }
}

impl SemilinearProblem {
    pub fn new(
        label: impl Into<String>,
        m: SquareMatrix,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        y0: Vec<f64>,
    ) -> Result<Self> {
        if y0.len() != m.dim() {
            return Err(Error::DimensionMismatch {
                left: y0.len(),
                right: m.dim(),
            });
        }
        if y0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("initial value"));
        }
        Ok(Self {
            label: label.into(),
            m,
            y0,
            t0: 0.0,
            f: Arc::new(f),
            invariant: None,
            exact: None,
            structure: None,
        })
    }

    pub fn with_invariant(mut self, h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.invariant = Some(Arc::new(h));
        self
    }

    pub fn with_exact(mut self, exact: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    /// Attaches a symplectic structure matrix; it must be antisymmetric,
    /// invertible and of even dimension matching the problem.
    pub fn with_structure(mut self, j: SquareMatrix) -> Result<Self> {
        if j.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: j.dim(),
                right: self.dim(),
            });
        }
        if j.dim() % 2 != 0 {
            return Err(Error::InvalidStructure("odd dimension".into()));
        }
        if j.add(&j.transpose())?.inf_norm() != 0.0 {
            return Err(Error::InvalidStructure("J is not antisymmetric".into()));
        }
        j.inverse()
            .map_err(|_| Error::InvalidStructure("J is singular".into()))?;
        self.structure = Some(j);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    #[inline]
    pub fn eval_f(&self, y: &[f64], out: &mut [f64]) {
        (self.f)(y, out)
    }

    pub fn f(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.eval_f(y, &mut out);
        out
    }

    /// Full right-hand side `My + f(y)`.
    pub fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.f(y);
        self.m.mat_vec_acc(1.0, y, &mut out);
        out
    }

    pub fn invariant(&self, y: &[f64]) -> Option<f64> {
        self.invariant.as_ref().map(|h| h(y))
    }

    pub fn invariant_fn(&self) -> Option<ScalarField> {
        self.invariant.clone()
    }

    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|e| e(t))
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn structure(&self) -> Option<&SquareMatrix> {
        self.structure.as_ref()
    }

    /// Same problem with `M` replaced; keeps `f`, `y0` and the invariant but
    /// drops the exact solution, which no longer applies.
    pub fn with_linear_part(&self, m: SquareMatrix) -> Result<Self> {
        if m.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: m.dim(),
                right: self.dim(),
            });
        }
        let mut p = self.clone();
        p.m = m;
        p.exact = None;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative tolerance on successive stage iterates.
    pub fp_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            fp_tol: 1e-13,
            max_iters: 200,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) || !self.fp_tol.is_finite() {
            return Err(Error::Config(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Absolute floor of the stage convergence test.
const ABS_FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub y: Vec<f64>,
    /// Fixed-point sweeps spent on the stage system.
    pub iterations: usize,
}

fn check_step(h: f64) -> Result<()> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::InvalidStep(format!("step size must be finite and nonzero, got {h}")));
    }
    Ok(())
}

/// Frozen exponentials of the lifted coefficients for one `(method, M, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    pub method_name: String,
    pub h: f64,
    stages: usize,
    /// `exp(c_i hM)`
    pub stage_flows: Vec<SquareMatrix>,
    /// `abar_ij(hM)`, row-major over `(i, j)`
    pub abar: Vec<SquareMatrix>,
    /// `bbar_i(hM)`
    pub bbar: Vec<SquareMatrix>,
    /// `exp(hM)`
    pub flow: SquareMatrix,
}

impl StepKernel {
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn dim(&self) -> usize {
        self.flow.dim()
    }

    pub fn abar(&self, i: usize, j: usize) -> &SquareMatrix {
        &self.abar[i * self.stages + j]
    }
}

/// Builds the step kernel for `method` applied with linear part `m` and step `h`.
pub fn precompute(method: &SeiMethod, m: &SquareMatrix, h: f64) -> Result<StepKernel> {
    check_step(h)?;
    let t = &method.tableau;
    let s = t.stages();
    let hm = m.scale(h);
    let stage_flows = t
        .c()
        .iter()
        .map(|&c| expm(&hm.scale(c)))
        .collect::<Result<Vec<_>>>()?;
    let mut abar = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            abar.push(t.abar(i, j, &hm)?);
        }
    }
    let bbar = (0..s).map(|i| t.bbar(i, &hm)).collect::<Result<Vec<_>>>()?;
    Ok(StepKernel {
        method_name: method.name.clone(),
        h,
        stages: s,
        stage_flows,
        abar,
        bbar,
        flow: expm(&hm)?,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Iterates `next = seed + correction(F(stages))` until successive iterates
/// agree to `fp_tol`. `stages` holds the concatenated `s·d` stage vector.
fn solve_stages(
    settings: &SolverSettings,
    stages: &mut Vec<f64>,
    mut sweep: impl FnMut(&[f64], &mut [f64]),
) -> Result<usize> {
    let mut next = vec![0.0; stages.len()];
    let mut defect = f64::INFINITY;
    for iter in 1..=settings.max_iters {
        sweep(stages, &mut next);
        let diff = stages
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = inf_norm(&next);
        std::mem::swap(stages, &mut next);
        if !diff.is_finite() || !scale.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                defect: f64::INFINITY,
            });
        }
        defect = diff / scale.max(ABS_FLOOR);
        if diff <= (settings.fp_tol * scale).max(ABS_FLOOR) {
            return Ok(iter);
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iters,
        defect,
    })
}

fn check_problem_dim(p: &SemilinearProblem, dim: usize, y0: &[f64]) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: dim,
        });
    }
    if y0.len() != dim {
        return Err(Error::DimensionMismatch {
            left: y0.len(),
            right: dim,
        });
    }
    Ok(())
}

/// One exponential-integrator step from `y0` with the kernel's step size.
pub fn ei_step(
    kernel: &StepKernel,
    p: &SemilinearProblem,
    y0: &[f64],
    settings: &SolverSettings,
) -> Result<StepOutcome> {
    let d = kernel.dim();
    let s = kernel.stages;
    let h = kernel.h;
    check_problem_dim(p, d, y0)?;

    let mut seed = vec![0.0; s * d];
    for (i, flow) in kernel.stage_flows.iter().enumerate() {
        flow.mat_vec_into(y0, &mut seed[i * d..(i + 1) * d]);
    }
    let mut stages = seed.clone();
    let mut forces = vec![0.0; s * d];

    let iterations = solve_stages(settings, &mut stages, |current, next| {
        for j in 0..s {
            p.eval_f(&current[j * d..(j + 1) * d], &mut forces[j * d..(j + 1) * d]);
        }
        next.copy_from_slice(&seed);
        for i in 0..s {
            let out = &mut next[i * d..(i + 1) * d];
            for j in 0..s {
                kernel.abar(i, j).mat_vec_acc(h, &forces[j * d..(j + 1) * d], out);
            }
        }
    })?;

    let mut y = vec![0.0; d];
    kernel.flow.mat_vec_into(y0, &mut y);
    let mut force = vec![0.0; d];
    for i in 0..s {
        p.eval_f(&stages[i * d..(i + 1) * d], &mut force);
        kernel.bbar[i].mat_vec_acc(h, &force, &mut y);
    }
    Ok(StepOutcome { y, iterations })
}

/// Classical RK data for stepping `y' = My + f(y)` with a fixed `h`.
///
/// The stage system `Y = 1⊗y0 + h(A⊗M)Y + h(A⊗I)F(Y)` is iterated as
/// `(I - h A⊗M) Y_next = 1⊗y0 + h(A⊗I)F(Y)`, with the left factor frozen.
#[derive(Clone, Debug)]
pub struct RkKernel {
    pub method_name: String,
    pub h: f64,
    tableau: RkTableau,
    m: SquareMatrix,
    lu: Lu,
}

impl RkKernel {
    pub fn new(method_name: impl Into<String>, tableau: &RkTableau, m: &SquareMatrix, h: f64) -> Result<Self> {
        check_step(h)?;
        let s = tableau.stages();
        let d = m.dim();
        let n = s * d;
        let mut lhs = vec![0.0; n * n];
        for i in 0..s {
            for j in 0..s {
                let a = tableau.a(i, j);
                for r in 0..d {
                    for c in 0..d {
                        let mut v = -h * a * m.get(r, c);
                        if i == j && r == c {
                            v += 1.0;
                        }
                        lhs[(i * d + r) * n + j * d + c] = v;
                    }
                }
            }
        }
        let lu = Lu::factor_raw(n, lhs)?;
        Ok(Self {
            method_name: method_name.into(),
            h,
            tableau: tableau.clone(),
            m: m.clone(),
            lu,
        })
    }

    pub fn step(&self, p: &SemilinearProblem, y0: &[f64], settings: &SolverSettings) -> Result<StepOutcome> {
        let d = self.m.dim();
        let s = self.tableau.stages();
        let h = self.h;
        check_problem_dim(p, d, y0)?;

        let mut stages: Vec<f64> = (0..s).flat_map(|_| y0.iter().copied()).collect();
        let mut forces = vec![0.0; s * d];
        let iterations = solve_stages(settings, &mut stages, |current, next| {
            for j in 0..s {
                p.eval_f(&current[j * d..(j + 1) * d], &mut forces[j * d..(j + 1) * d]);
            }
            for i in 0..s {
                let out = &mut next[i * d..(i + 1) * d];
                out.copy_from_slice(y0);
                for j in 0..s {
                    let a = h * self.tableau.a(i, j);
                    for (o, f) in out.iter_mut().zip(&forces[j * d..(j + 1) * d]) {
                        *o += a * f;
                    }
                }
            }
            self.lu.solve_in_place(next);
        })?;

        let mut y = y0.to_vec();
        let mut slope = vec![0.0; d];
        for i in 0..s {
            let stage = &stages[i * d..(i + 1) * d];
            p.eval_f(stage, &mut slope);
            self.m.mat_vec_acc(1.0, stage, &mut slope);
            let w = h * self.tableau.b()[i];
            for (o, k) in y.iter_mut().zip(&slope) {
                *o += w * k;
            }
        }
        Ok(StepOutcome { y, iterations })
    }
}

/// One classical RK step on `y' = My + f(y)`.
pub fn rk_step(
    t: &RkTableau,
    p: &SemilinearProblem,
    y0: &[f64],
    h: f64,
    settings: &SolverSettings,
) -> Result<StepOutcome> {
    RkKernel::new("rk", t, &p.m, h)?.step(p, y0, settings)
}

/// A method bound to a linear part and a step size.
#[derive(Clone, Debug)]
pub enum StepMap {
    Exponential(StepKernel),
    Classical(RkKernel),
}

impl StepMap {
    pub fn new(method: &SeiMethod, m: &SquareMatrix, h: f64) -> Result<Self> {
        match method.kind {
            MethodKind::Exponential => Ok(Self::Exponential(precompute(method, m, h)?)),
            MethodKind::Classical => Ok(Self::Classical(RkKernel::new(
                method.name.clone(),
                &method.tableau,
                m,
                h,
            )?)),
        }
    }

    pub fn h(&self) -> f64 {
        match self {
            Self::Exponential(k) => k.h,
            Self::Classical(k) => k.h,
        }
    }

    pub fn method_name(&self) -> &str {
        match self {
            Self::Exponential(k) => &k.method_name,
            Self::Classical(k) => &k.method_name,
        }
    }

    pub fn step(&self, p: &SemilinearProblem, y0: &[f64], settings: &SolverSettings) -> Result<StepOutcome> {
        match self {
            Self::Exponential(k) => ei_step(k, p, y0, settings),
            Self::Classical(k) => k.step(p, y0, settings),
        }
    }
}

/// States on the uniform grid `t0 + n h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub h: f64,
    pub method_name: String,
    pub problem_label: String,
    /// Total fixed-point sweeps over all steps.
    pub fp_iterations: usize,
    pub max_fp_iterations: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &[f64] {
        self.y.last().expect("trajectory holds at least the initial state")
    }

    pub fn mean_fp_iterations(&self) -> f64 {
        if self.n_steps() == 0 {
            0.0
        } else {
            self.fp_iterations as f64 / self.n_steps() as f64
        }
    }
}

/// Number of steps of size `h` from `t0` to `t_end`; must be a positive
/// integer up to a relative rounding of 1e-9.
pub fn step_count(t0: f64, t_end: f64, h: f64) -> Result<usize> {
    check_step(h)?;
    let ratio = (t_end - t0) / h;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidStep(format!(
            "(t_end - t0)/h = {ratio} is not a positive integer"
        )));
    }
    Ok(n as usize)
}

/// Fixed-step integration from `(p.t0, y0)` to `t_end`.
pub fn integrate(
    map: &StepMap,
    p: &SemilinearProblem,
    y0: &[f64],
    t_end: f64,
    settings: &SolverSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    let h = map.h();
    let n = step_count(p.t0, t_end, h)?;
    let mut t = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    t.push(p.t0);
    y.push(y0.to_vec());
    let mut total = 0;
    let mut worst = 0;
    for step in 1..=n {
        let out = map
            .step(p, &y[step - 1], settings)
            .map_err(|e| Error::StepFailed {
                step,
                source: Box::new(e),
            })?;
        total += out.iterations;
        worst = worst.max(out.iterations);
        t.push(p.t0 + step as f64 * h);
        y.push(out.y);
    }
    Ok(Trajectory {
        t,
        y,
        h,
        method_name: map.method_name().to_string(),
        problem_label: p.label.clone(),
        fp_iterations: total,
        max_fp_iterations: worst,
    })
}
