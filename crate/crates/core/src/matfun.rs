//! Dense square matrices and the matrix exponential.
//!
//! Everything here is small-matrix, row-major, `f64` linear algebra. The
//! exponential uses scaling and squaring with a diagonal Padé approximant
//! whose degree (3, 5, 7, 9 or 13) is picked from the 1-norm of the input.

use std::fmt;

use crate::error::{Error, Result};

/// A dense `d × d` real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.data.chunks(self.dim).collect();
        f.debug_struct("SquareMatrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

impl SquareMatrix {
    /// Builds a matrix from row-major entries. Rejects `d = 0`, a length
    /// that is not `d²`, and non-finite entries.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                left: data.len(),
                right: dim * dim,
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: dim,
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::new(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// The canonical structure matrix `[[0, I], [-I, 0]]` of size `2n`.
    pub fn canonical_symplectic(half: usize) -> Self {
        let dim = 2 * half;
        let mut m = Self::zeros(dim);
        for i in 0..half {
            m.data[i * dim + half + i] = 1.0;
            m.data[(half + i) * dim + i] = -1.0;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.dim == other {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: self.dim,
                right: other,
            })
        }
    }

    pub fn mul(&self, rhs: &SquareMatrix) -> Result<SquareMatrix> {
        self.check_dim(rhs.dim)?;
        Ok(self.product(rhs))
    }

    pub(crate) fn product(&self, rhs: &SquareMatrix) -> SquareMatrix {
        debug_assert_eq!(self.dim, rhs.dim);
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            let out_row = &mut out[i * d..(i + 1) * d];
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * d..(k + 1) * d];
                for (o, r) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * r;
                }
            }
        }
        SquareMatrix { dim: d, data: out }
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        let mut out = vec![0.0; self.dim];
        self.mat_vec_into(v, &mut out);
        Ok(out)
    }

    /// `out = self · v`, no dimension checks beyond debug assertions.
    #[inline]
    pub(crate) fn mat_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (row, o) in self.data.chunks_exact(self.dim).zip(out.iter_mut()) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += alpha · self · v`.
    #[inline]
    pub(crate) fn mat_vec_acc(&self, alpha: f64, v: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.dim).zip(out.iter_mut()) {
            let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            *o += alpha * dot;
        }
    }

    pub fn transpose(&self) -> SquareMatrix {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.data[i * d + j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &SquareMatrix) -> Result<SquareMatrix> {
        self.check_dim(rhs.dim)?;
        Ok(self.zip_with(rhs, |a, b| a + b))
    }

    pub fn sub(&self, rhs: &SquareMatrix) -> Result<SquareMatrix> {
        self.check_dim(rhs.dim)?;
        Ok(self.zip_with(rhs, |a, b| a - b))
    }

    fn zip_with(&self, rhs: &SquareMatrix, f: impl Fn(f64, f64) -> f64) -> SquareMatrix {
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> SquareMatrix {
        SquareMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| self.data[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Entrywise (Frobenius) inner product.
    pub fn inner(&self, rhs: &SquareMatrix) -> Result<f64> {
        self.check_dim(rhs.dim)?;
        Ok(self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum())
    }

    pub fn determinant(&self) -> f64 {
        match Lu::factor(self) {
            Ok(lu) => lu.determinant(),
            Err(_) => 0.0,
        }
    }

    pub fn inverse(&self) -> Result<SquareMatrix> {
        let lu = Lu::factor(self)?;
        Ok(lu.solve_matrix(&Self::identity(self.dim)))
    }

    /// Solves `self · x = rhs` for a vector right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(rhs.len())?;
        let lu = Lu::factor(self)?;
        let mut x = rhs.to_vec();
        lu.solve_in_place(&mut x);
        Ok(x)
    }
}

/// LU factorization with partial pivoting, `P·A = L·U` packed in place.
#[derive(Clone, Debug)]
pub(crate) struct Lu {
    dim: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub(crate) fn factor(a: &SquareMatrix) -> Result<Self> {
        Self::factor_raw(a.dim, a.data.clone())
    }

    pub(crate) fn factor_raw(dim: usize, mut lu: Vec<f64>) -> Result<Self> {
        let n = dim;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = lu.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= scale * f64::EPSILON * n as f64 {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let d = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / d;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self {
            dim: n,
            lu,
            perm,
            sign,
        })
    }

    pub(crate) fn determinant(&self) -> f64 {
        let n = self.dim;
        (0..n).map(|i| self.lu[i * n + i]).product::<f64>() * self.sign
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim;
        let b: Vec<f64> = self.perm.iter().map(|&p| x[p]).collect();
        x.copy_from_slice(&b);
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
    }

    pub(crate) fn solve_matrix(&self, rhs: &SquareMatrix) -> SquareMatrix {
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = rhs.data[i * n + j];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out.data[i * n + j] = col[i];
            }
        }
        out
    }
}

// Padé numerator coefficients b_0..b_m for the [m/m] approximant of exp.
const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm bounds below which the [m/m] approximant is accurate to unit roundoff.
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

/// Matrix exponential `e^A`.
pub fn expm(a: &SquareMatrix) -> Result<SquareMatrix> {
    if !a.is_finite() {
        return Err(Error::NonFinite("expm argument"));
    }
    let d = a.dim;
    let norm = a.one_norm();
    if norm == 0.0 {
        return Ok(SquareMatrix::identity(d));
    }

    let low_degree: [(f64, &[f64]); 4] = [
        (THETA_3, &PADE_3),
        (THETA_5, &PADE_5),
        (THETA_7, &PADE_7),
        (THETA_9, &PADE_9),
    ];
    for (theta, coeffs) in low_degree {
        if norm <= theta {
            let (u, v) = pade_low(a, coeffs);
            return pade_quotient(&u, &v);
        }
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(0.5_f64.powi(squarings));
    let (u, v) = pade_13(&scaled);
    let mut x = pade_quotient(&u, &v)?;
    for _ in 0..squarings {
        x = x.product(&x);
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("expm result"));
    }
    Ok(x)
}

fn axpy_into(acc: &mut SquareMatrix, alpha: f64, m: &SquareMatrix) {
    for (o, x) in acc.data.iter_mut().zip(&m.data) {
        *o += alpha * x;
    }
}

fn pade_low(a: &SquareMatrix, b: &[f64]) -> (SquareMatrix, SquareMatrix) {
    let d = a.dim;
    let a2 = a.product(a);
    let m = b.len() - 1;
    // powers[k] = A^(2k)
    let mut powers = vec![SquareMatrix::identity(d), a2.clone()];
    while powers.len() <= m / 2 {
        let next = powers.last().unwrap().product(&a2);
        powers.push(next);
    }
    let mut u_inner = SquareMatrix::zeros(d);
    let mut v = SquareMatrix::zeros(d);
    for (k, p) in powers.iter().enumerate() {
        if 2 * k < m {
            axpy_into(&mut u_inner, b[2 * k + 1], p);
        }
        axpy_into(&mut v, b[2 * k], p);
    }
    (a.product(&u_inner), v)
}

fn pade_13(a: &SquareMatrix) -> (SquareMatrix, SquareMatrix) {
    let b = &PADE_13;
    let d = a.dim;
    let id = SquareMatrix::identity(d);
    let a2 = a.product(a);
    let a4 = a2.product(&a2);
    let a6 = a4.product(&a2);

    let mut u_hi = SquareMatrix::zeros(d);
    axpy_into(&mut u_hi, b[13], &a6);
    axpy_into(&mut u_hi, b[11], &a4);
    axpy_into(&mut u_hi, b[9], &a2);
    let mut u_inner = a6.product(&u_hi);
    axpy_into(&mut u_inner, b[7], &a6);
    axpy_into(&mut u_inner, b[5], &a4);
    axpy_into(&mut u_inner, b[3], &a2);
    axpy_into(&mut u_inner, b[1], &id);
    let u = a.product(&u_inner);

    let mut v_hi = SquareMatrix::zeros(d);
    axpy_into(&mut v_hi, b[12], &a6);
    axpy_into(&mut v_hi, b[10], &a4);
    axpy_into(&mut v_hi, b[8], &a2);
    let mut v = a6.product(&v_hi);
    axpy_into(&mut v, b[6], &a6);
    axpy_into(&mut v, b[4], &a4);
    axpy_into(&mut v, b[2], &a2);
    axpy_into(&mut v, b[0], &id);
    (u, v)
}

/// `(V - U)^{-1} (V + U)`.
fn pade_quotient(u: &SquareMatrix, v: &SquareMatrix) -> Result<SquareMatrix> {
    let p = v.zip_with(u, |v, u| v + u);
    let q = v.zip_with(u, |v, u| v - u);
    let lu = Lu::factor(&q)?;
    Ok(lu.solve_matrix(&p))
}
