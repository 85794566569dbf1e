//! Butcher tableaux, the exponential lift of a tableau, and residual checkers
//! for the symmetry, symplecticity and order conditions.
//!
//! An s-stage RK tableau `(c, b, A)` induces matrix-valued coefficients
//!
//! ```text
//! abar_ij(Z) = a_ij · exp((c_i - c_j) Z)
//! bbar_i(Z)  = b_i  · exp((1 - c_i) Z)
//! ```
//!
//! with `Z = hM`. Every checker evaluates its condition family numerically and
//! reports the largest defect, so the verdicts are pointwise in `Z`.
//!
//! Stage indices are zero-based throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::{expm, SquareMatrix};

/// Pass threshold for scalar (tableau-only) conditions.
pub const SCALAR_TOL: f64 = 1e-13;
/// Pass threshold for matrix-valued conditions evaluated at a sample `Z`.
pub const MATRIX_TOL: f64 = 1e-12;

/// Coefficients `(c, b, A)` of an s-stage Runge-Kutta method.
#[derive(Clone, Debug, PartialEq)]
pub struct RkTableau {
    c: Vec<f64>,
    b: Vec<f64>,
    a: Vec<Vec<f64>>,
}

impl RkTableau {
    pub fn new(c: Vec<f64>, b: Vec<f64>, a: Vec<Vec<f64>>) -> Result<Self> {
        let s = c.len();
        if s == 0 {
            return Err(Error::InvalidTableau("tableau needs at least one stage".into()));
        }
        if b.len() != s || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidTableau(format!(
                "inconsistent lengths: |c| = {s}, |b| = {}, A is {}x{:?}",
                b.len(),
                a.len(),
                a.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        let finite = c.iter().chain(&b).chain(a.iter().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite("tableau coefficients"));
        }
        Ok(Self { c, b, a })
    }

    #[inline]
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn a_rows(&self) -> &[Vec<f64>] {
        &self.a
    }

    /// Relabels stages `i -> s-1-i` in `c`, `b` and `A` together.
    pub fn reversed(&self) -> Self {
        let s = self.stages();
        let r = |i: usize| s - 1 - i;
        Self {
            c: (0..s).map(|i| self.c[r(i)]).collect(),
            b: (0..s).map(|i| self.b[r(i)]).collect(),
            a: (0..s)
                .map(|i| (0..s).map(|j| self.a[r(i)][r(j)]).collect())
                .collect(),
        }
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.stages() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                len: self.stages(),
            })
        }
    }

    /// `a_ij · exp((c_i - c_j) Z)`.
    pub fn abar(&self, i: usize, j: usize, z: &SquareMatrix) -> Result<SquareMatrix> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(expm(&z.scale(self.c[i] - self.c[j]))?.scale(self.a[i][j]))
    }

    /// `b_i · exp((1 - c_i) Z)`.
    pub fn bbar(&self, i: usize, z: &SquareMatrix) -> Result<SquareMatrix> {
        self.check_index(i)?;
        Ok(expm(&z.scale(1.0 - self.c[i]))?.scale(self.b[i]))
    }
}

/// How a catalog entry is stepped: through the exponential lift, or as a
/// classical RK method on the full right-hand side `My + f(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Exponential,
    Classical,
}

/// A named tableau with its classical order.
#[derive(Clone, Debug, PartialEq)]
pub struct SeiMethod {
    pub name: String,
    pub tableau: RkTableau,
    pub order: u32,
    pub kind: MethodKind,
}

impl SeiMethod {
    /// Builds a method and confirms `order` against the order-condition
    /// checker: conditions up to `order` hold, and (below 4) the next ones fail.
    pub fn verified(
        name: impl Into<String>,
        tableau: RkTableau,
        order: u32,
        kind: MethodKind,
    ) -> Result<Self> {
        let name = name.into();
        let verdict = classical_order(&tableau);
        if verdict != order {
            return Err(Error::InvalidTableau(format!(
                "{name}: declared order {order}, order conditions give {verdict}"
            )));
        }
        Ok(Self {
            name,
            tableau,
            order,
            kind,
        })
    }

    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }

    pub fn is_exponential(&self) -> bool {
        self.kind == MethodKind::Exponential
    }
}

pub fn sei_abar(m: &SeiMethod, i: usize, j: usize, z: &SquareMatrix) -> Result<SquareMatrix> {
    m.tableau.abar(i, j, z)
}

pub fn sei_bbar(m: &SeiMethod, i: usize, z: &SquareMatrix) -> Result<SquareMatrix> {
    m.tableau.bbar(i, z)
}

/// One indexed equation of a condition family and its defect.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionDetail {
    pub label: String,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition_name: String,
    /// Maximum over `details`.
    pub residual: f64,
    pub details: Vec<ConditionDetail>,
    /// Per-stage multipliers fitted by the exponential symplecticity check.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
}

impl ConditionReport {
    fn new(name: &str) -> Self {
        Self {
            condition_name: name.to_string(),
            residual: 0.0,
            details: Vec::new(),
            gammas: Vec::new(),
        }
    }

    fn push(&mut self, label: String, residual: f64) {
        // NaN must not hide behind max()
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        self.residual = self.residual.max(residual);
        self.details.push(ConditionDetail { label, residual });
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Symmetry conditions of an RK tableau:
/// `c_i = 1 - c_{s+1-i}`, `a_ij = b_{s+1-j} - a_{s+1-i,s+1-j}`, `b_i = b_{s+1-i}`.
pub fn check_rk_symmetry(t: &RkTableau) -> ConditionReport {
    let s = t.stages();
    let r = |i: usize| s - 1 - i;
    let mut report = ConditionReport::new("rk_symmetry");
    for i in 0..s {
        report.push(format!("c[{i}]"), (t.c[i] - (1.0 - t.c[r(i)])).abs());
    }
    for i in 0..s {
        for j in 0..s {
            let defect = t.a[i][j] - (t.b[r(j)] - t.a[r(i)][r(j)]);
            report.push(format!("a[{i},{j}]"), defect.abs());
        }
    }
    for i in 0..s {
        report.push(format!("b[{i}]"), (t.b[i] - t.b[r(i)]).abs());
    }
    report
}

/// Symplecticity conditions `b_i b_j = b_i a_ij + b_j a_ji`.
pub fn check_rk_symplecticity(t: &RkTableau) -> ConditionReport {
    let s = t.stages();
    let mut report = ConditionReport::new("rk_symplecticity");
    for i in 0..s {
        for j in 0..s {
            let defect = t.b[i] * t.b[j] - t.b[i] * t.a[i][j] - t.b[j] * t.a[j][i];
            report.push(format!("m[{i},{j}]"), defect.abs());
        }
    }
    report
}

/// Symmetry conditions of the exponential integrator at the sample `Z = hM`:
///
/// ```text
/// c_i       = 1 - c_{s+1-i}
/// abar_ij(Z) = exp(c_i Z) bbar_{s+1-j}(-Z) - abar_{s+1-i,s+1-j}(-Z)
/// bbar_i(Z)  = exp(Z) bbar_{s+1-i}(-Z)
/// ```
///
/// The `c` family is evaluated first; the matrix families use the `exp(c_i Z)`
/// form, which coincides with `exp((1 - c_{s+1-i}) Z)` once it holds.
pub fn check_ei_symmetry(m: &SeiMethod, z: &SquareMatrix) -> Result<ConditionReport> {
    let t = &m.tableau;
    let s = t.stages();
    let r = |i: usize| s - 1 - i;
    let neg = z.scale(-1.0);
    let mut report = ConditionReport::new("ei_symmetry");

    for i in 0..s {
        report.push(format!("c[{i}]"), (t.c[i] - (1.0 - t.c[r(i)])).abs());
    }

    let bbar_neg: Vec<SquareMatrix> = (0..s).map(|i| t.bbar(i, &neg)).collect::<Result<_>>()?;
    for i in 0..s {
        let exp_ci = expm(&z.scale(t.c[i]))?;
        for j in 0..s {
            let lhs = t.abar(i, j, z)?;
            let rhs = exp_ci.product(&bbar_neg[r(j)]).sub(&t.abar(r(i), r(j), &neg)?)?;
            report.push(format!("abar[{i},{j}]"), lhs.sub(&rhs)?.inf_norm());
        }
    }

    let exp_z = expm(z)?;
    for i in 0..s {
        let lhs = t.bbar(i, z)?;
        let rhs = exp_z.product(&bbar_neg[r(i)]);
        report.push(format!("bbar[{i}]"), lhs.sub(&rhs)?.inf_norm());
    }
    Ok(report)
}

fn validate_structure(j: &SquareMatrix) -> Result<()> {
    let d = j.dim();
    if d % 2 != 0 {
        return Err(Error::InvalidStructure(format!("dimension {d} is odd")));
    }
    let skew = j.add(&j.transpose())?.inf_norm();
    if skew > 1e-14 * j.inf_norm() {
        return Err(Error::InvalidStructure("J is not antisymmetric".into()));
    }
    j.inverse()
        .map_err(|_| Error::InvalidStructure("J is singular".into()))?;
    Ok(())
}

/// Symplecticity conditions of the exponential integrator at the sample `hM`,
/// with `S = exp(hM)` and `S_i = exp(c_i hM)`:
///
/// ```text
/// bbar_i^T J S S_i^{-1} = S_i^{-T} S^T J bbar_i = gamma_i J
/// bbar_i^T J bbar_j = bbar_i^T J S S_i^{-1} abar_ij + abar_ji^T S_j^{-T} S^T J bbar_j
/// ```
///
/// `gamma_i` is the least-squares projection of the left-hand side onto `J`;
/// the fit defects, the pairwise family, and the linear-flow defect
/// `|S^T J S - J|` all feed the residual.
pub fn check_ei_symplecticity(
    m: &SeiMethod,
    hm: &SquareMatrix,
    j: &SquareMatrix,
) -> Result<ConditionReport> {
    if hm.dim() != j.dim() {
        return Err(Error::DimensionMismatch {
            left: hm.dim(),
            right: j.dim(),
        });
    }
    validate_structure(j)?;
    let t = &m.tableau;
    let s = t.stages();
    let mut report = ConditionReport::new("ei_symplecticity");

    let flow = expm(hm)?;
    let flow_t = flow.transpose();
    let jj = j.inner(j)?;

    let mut left = Vec::with_capacity(s); // bbar_i^T J S S_i^{-1}
    let mut right = Vec::with_capacity(s); // S_i^{-T} S^T J bbar_i
    let mut bbar = Vec::with_capacity(s);
    for i in 0..s {
        let stage_inv = expm(&hm.scale(t.c[i]))?.inverse()?;
        let bi = t.bbar(i, hm)?;
        let x = bi.transpose().product(j).product(&flow).product(&stage_inv);
        let y = stage_inv.transpose().product(&flow_t).product(j).product(&bi);
        let gamma = x.inner(j)? / jj;
        report.push(format!("gamma_fit[{i}]"), x.sub(&j.scale(gamma))?.inf_norm());
        report.push(format!("gamma_fit_transposed[{i}]"), y.sub(&j.scale(gamma))?.inf_norm());
        report.gammas.push(gamma);
        left.push(x);
        right.push(y);
        bbar.push(bi);
    }

    for i in 0..s {
        for k in 0..s {
            let lhs = bbar[i].transpose().product(j).product(&bbar[k]);
            let rhs = left[i]
                .product(&t.abar(i, k, hm)?)
                .add(&t.abar(k, i, hm)?.transpose().product(&right[k]))?;
            report.push(format!("pair[{i},{k}]"), lhs.sub(&rhs)?.inf_norm());
        }
    }

    let linear = flow_t.product(j).product(&flow).sub(j)?.inf_norm();
    report.push("linear_flow".to_string(), linear);
    Ok(report)
}

/// Order conditions up to `p` (at most 4) plus the row-sum condition
/// `sum_j a_ij = c_i`.
pub fn check_order_conditions(t: &RkTableau, p: u32) -> Result<ConditionReport> {
    if !(1..=4).contains(&p) {
        return Err(Error::UnsupportedOrder(p));
    }
    let s = t.stages();
    let (b, c, a) = (&t.b, &t.c, &t.a);
    let mut report = ConditionReport::new(&format!("order_{p}"));

    for i in 0..s {
        let row: f64 = a[i].iter().sum();
        report.push(format!("row_sum[{i}]"), (row - c[i]).abs());
    }

    let apply = |v: &[f64]| -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    };
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(x, y)| x * y).sum() };
    let pow = |k: i32| -> Vec<f64> { c.iter().map(|x| x.powi(k)).collect() };

    let ones = vec![1.0; s];
    report.push("sum b = 1".into(), (dot(b, &ones) - 1.0).abs());
    if p >= 2 {
        report.push("sum b c = 1/2".into(), (dot(b, c) - 0.5).abs());
    }
    if p >= 3 {
        let ac = apply(c);
        report.push("sum b c^2 = 1/3".into(), (dot(b, &pow(2)) - 1.0 / 3.0).abs());
        report.push("sum b Ac = 1/6".into(), (dot(b, &ac) - 1.0 / 6.0).abs());
    }
    if p >= 4 {
        let ac = apply(c);
        let c_ac: Vec<f64> = c.iter().zip(&ac).map(|(x, y)| x * y).collect();
        report.push("sum b c^3 = 1/4".into(), (dot(b, &pow(3)) - 0.25).abs());
        report.push("sum b c Ac = 1/8".into(), (dot(b, &c_ac) - 0.125).abs());
        report.push("sum b Ac^2 = 1/12".into(), (dot(b, &apply(&pow(2))) - 1.0 / 12.0).abs());
        report.push("sum b AAc = 1/24".into(), (dot(b, &apply(&ac)) - 1.0 / 24.0).abs());
    }
    Ok(report)
}

/// Largest `p <= 4` whose order conditions all hold to [`SCALAR_TOL`]; 0 if
/// even consistency fails.
pub fn classical_order(t: &RkTableau) -> u32 {
    (1..=4)
        .take_while(|&p| {
            check_order_conditions(t, p)
                .map(|r| r.passes(SCALAR_TOL))
                .unwrap_or(false)
        })
        .last()
        .unwrap_or(0)
}

/// One-stage implicit midpoint rule.
pub fn midpoint_tableau() -> RkTableau {
    RkTableau::new(vec![0.5], vec![1.0], vec![vec![0.5]]).expect("valid tableau")
}

/// Two-stage Gauss collocation tableau.
pub fn gauss2_tableau() -> RkTableau {
    let r3 = 3f64.sqrt();
    RkTableau::new(
        vec![(3.0 - r3) / 6.0, (3.0 + r3) / 6.0],
        vec![0.5, 0.5],
        vec![
            vec![0.25, (3.0 - 2.0 * r3) / 12.0],
            vec![(3.0 + 2.0 * r3) / 12.0, 0.25],
        ],
    )
    .expect("valid tableau")
}

/// Three-stage composition of the midpoint rule (triple jump).
pub fn triple_jump_tableau() -> RkTableau {
    let cb2 = 2f64.cbrt();
    let cb4 = 4f64.cbrt();
    let b1 = (4.0 + 2.0 * cb2 + cb4) / 6.0;
    // row-sum consistency forces c_1 = a_11 = b_1 / 2; (8 - 2∛2 - ∛4)/12 is 1 - c_1
    let c1 = (4.0 + 2.0 * cb2 + cb4) / 12.0;
    let b2 = (-1.0 - 2.0 * cb2 - cb4) / 3.0;
    RkTableau::new(
        vec![c1, 0.5, 1.0 - c1],
        vec![b1, b2, b1],
        vec![
            vec![b1 / 2.0, 0.0, 0.0],
            vec![b1, b2 / 2.0, 0.0],
            vec![b1, b2, b1 / 2.0],
        ],
    )
    .expect("valid tableau")
}

/// The six catalog methods: three exponential integrators and the classical
/// RK methods sharing their tableaux.
pub fn builtin_methods() -> Vec<SeiMethod> {
    let base = [
        ("1s2", midpoint_tableau(), 2),
        ("2s4", gauss2_tableau(), 4),
        ("3s4", triple_jump_tableau(), 4),
    ];
    let mut out = Vec::with_capacity(6);
    for (kind, prefix) in [(MethodKind::Exponential, "SSSEI"), (MethodKind::Classical, "SSRK")] {
        for (suffix, tableau, order) in &base {
            let m = SeiMethod::verified(format!("{prefix}{suffix}"), tableau.clone(), *order, kind)
                .expect("built-in tableau satisfies its order conditions");
            out.push(m);
        }
    }
    out
}

pub fn find_method(name: &str) -> Result<SeiMethod> {
    builtin_methods()
        .into_iter()
        .find(|m| m.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownMethod(name.to_string()))
}

/// JSON exchange form `{name, s, c, b, A}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TableauFile {
    pub name: String,
    pub s: usize,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

impl TableauFile {
    pub fn from_method(m: &SeiMethod) -> Self {
        Self {
            name: m.name.clone(),
            s: m.stages(),
            c: m.tableau.c.clone(),
            b: m.tableau.b.clone(),
            a: m.tableau.a.clone(),
        }
    }

    pub fn to_tableau(&self) -> Result<RkTableau> {
        if self.s != self.c.len() {
            return Err(Error::InvalidTableau(format!(
                "s = {} but c has {} entries",
                self.s,
                self.c.len()
            )));
        }
        RkTableau::new(self.c.clone(), self.b.clone(), self.a.clone())
    }

    /// Loads as a method whose order is whatever the checker certifies.
    pub fn to_method(&self, kind: MethodKind) -> Result<SeiMethod> {
        let tableau = self.to_tableau()?;
        let order = classical_order(&tableau);
        if order == 0 {
            return Err(Error::InvalidTableau(format!("{}: not consistent", self.name)));
        }
        SeiMethod::verified(self.name.clone(), tableau, order, kind)
    }
}
