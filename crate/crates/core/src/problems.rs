//! Benchmark problems: the Duffing oscillator with its Jacobi-elliptic exact
//! solution, and the averaged wind-induced oscillation system.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::SquareMatrix;
use crate::stepper::SemilinearProblem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub k: f64,
    pub omega: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self { k: 0.07, omega: 20.0 }
    }
}

impl DuffingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k.is_finite() && self.omega.is_finite() && self.k >= 0.0 && self.k < self.omega;
        if !ok {
            return Err(Error::InvalidParams(format!(
                "duffing needs 0 <= k < omega, got k = {}, omega = {}",
                self.k, self.omega
            )));
        }
        Ok(())
    }

    /// Elliptic modulus `k / omega` of the exact solution.
    pub fn modulus(&self) -> f64 {
        self.k / self.omega
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindParams {
    pub r: f64,
    pub theta: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self { r: 20.0, theta: FRAC_PI_2 }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r.is_finite() && self.r >= 0.0 && (0.0..=FRAC_PI_2).contains(&self.theta);
        if !ok {
            return Err(Error::InvalidParams(format!(
                "wind needs r >= 0 and 0 <= theta <= pi/2, got r = {}, theta = {}",
                self.r, self.theta
            )));
        }
        Ok(())
    }

    // cos(FRAC_PI_2) is 6e-17 in floating point; the undamped case must be exact.
    fn cos_theta(&self) -> f64 {
        if self.theta == FRAC_PI_2 {
            0.0
        } else {
            self.theta.cos()
        }
    }

    fn sin_theta(&self) -> f64 {
        if self.theta == FRAC_PI_2 {
            1.0
        } else {
            self.theta.sin()
        }
    }

    /// Damping factor `r cos(theta)`.
    pub fn zeta(&self) -> f64 {
        self.r * self.cos_theta()
    }

    /// Detuning `r sin(theta)`.
    pub fn lambda(&self) -> f64 {
        self.r * self.sin_theta()
    }
}

/// `q' = p`, `p' = -(omega² + k²) q + 2k² q³`, from `(0, omega)`.
pub fn duffing(params: DuffingParams) -> Result<SemilinearProblem> {
    params.validate()?;
    let DuffingParams { k, omega } = params;
    let k2 = k * k;
    let stiffness = omega * omega + k2;
    let m = SquareMatrix::from_rows(&[&[0.0, 1.0], &[-stiffness, 0.0]])?;
    let modulus = params.modulus();
    let problem = SemilinearProblem::new(
        "duffing",
        m,
        move |y, out| {
            out[0] = 0.0;
            out[1] = 2.0 * k2 * y[0] * y[0] * y[0];
        },
        vec![0.0, omega],
    )?
    .with_invariant(move |y| {
        let (q, p) = (y[0], y[1]);
        0.5 * p * p + 0.5 * stiffness * q * q - 0.5 * k2 * q * q * q * q
    })
    .with_exact(move |t| {
        let (sn, cn, dn) = jacobi_sn_cn_dn(omega * t, modulus).expect("modulus validated");
        vec![sn, omega * cn * dn]
    })
    .with_structure(SquareMatrix::canonical_symplectic(1))?;
    Ok(problem)
}

/// `x' = [[-zeta, -lambda], [lambda, -zeta]] x + (x1 x2, (x1² - x2²)/2)` from `(0, 1)`.
/// The invariant is a first integral at `theta = pi/2` and a Lyapunov function below.
pub fn wind_oscillation(params: WindParams) -> Result<SemilinearProblem> {
    params.validate()?;
    let (zeta, lambda) = (params.zeta(), params.lambda());
    let (sin, cos, r) = (params.sin_theta(), params.cos_theta(), params.r);
    let m = SquareMatrix::from_rows(&[&[-zeta, -lambda], &[lambda, -zeta]])?;
    let problem = SemilinearProblem::new(
        "wind",
        m,
        |x, out| {
            out[0] = x[0] * x[1];
            out[1] = 0.5 * (x[0] * x[0] - x[1] * x[1]);
        },
        vec![0.0, 1.0],
    )?
    .with_invariant(move |x| {
        let (x1, x2) = (x[0], x[1]);
        0.5 * r * (x1 * x1 + x2 * x2) - 0.5 * sin * (x1 * x2 * x2 - x1 * x1 * x1 / 3.0)
            + 0.5 * cos * (-x1 * x1 * x2 + x2 * x2 * x2 / 3.0)
    })
    .with_structure(SquareMatrix::canonical_symplectic(1))?;
    Ok(problem)
}

const AGM_MAX_ITERS: usize = 60;
const AGM_TOL: f64 = 1e-15;

/// Jacobi elliptic functions `(sn, cn, dn)` of argument `u` and modulus
/// `k` in `[0, 1)`, so that `dn² + k² sn² = 1`.
///
/// Uses the descending Landen (AGM) recursion; `dn` is recovered from
/// `sqrt(1 - k² sn²)`, which is well conditioned for `k < 1`.
pub fn jacobi_sn_cn_dn(u: f64, k: f64) -> Result<(f64, f64, f64)> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::InvalidParams(format!("modulus must lie in [0, 1), got {k}")));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("elliptic argument"));
    }
    if k == 0.0 {
        let (s, c) = u.sin_cos();
        return Ok((s, c, 1.0));
    }

    let mut a = [0.0; AGM_MAX_ITERS + 1];
    let mut c = [0.0; AGM_MAX_ITERS + 1];
    a[0] = 1.0;
    c[0] = k;
    let mut b = (1.0 - k * k).sqrt();
    let mut n = 0;
    while n < AGM_MAX_ITERS && (a[n] - b).abs() >= AGM_TOL {
        let (an, bn) = (a[n], b);
        a[n + 1] = 0.5 * (an + bn);
        c[n + 1] = 0.5 * (an - bn);
        b = (an * bn).sqrt();
        n += 1;
    }

    let mut phi = 2f64.powi(n as i32) * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let (sn, cn) = phi.sin_cos();
    let dn = (1.0 - k * k * sn * sn).sqrt();
    Ok((sn, cn, dn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duffing_initial_energy_and_exact_start() {
        let p = duffing(DuffingParams::default()).unwrap();
        assert_eq!(p.invariant(&p.y0).unwrap(), 200.0);
        assert_eq!(p.exact(0.0).unwrap(), vec![0.0, 20.0]);
        assert_eq!(p.m.get(1, 0), -(400.0 + 0.07 * 0.07));
    }

    #[test]
    fn duffing_rejects_bad_params() {
        assert!(duffing(DuffingParams { k: 20.0, omega: 20.0 }).is_err());
        assert!(duffing(DuffingParams { k: -0.1, omega: 20.0 }).is_err());
    }

    #[test]
    fn wind_initial_energy() {
        let p = wind_oscillation(WindParams::default()).unwrap();
        assert_eq!(p.invariant(&p.y0).unwrap(), 10.0);
        let theta = 1.0;
        let q = wind_oscillation(WindParams { r: 3.0, theta }).unwrap();
        let expected = 1.5 + theta.cos() / 6.0;
        assert!((q.invariant(&q.y0).unwrap() - expected).abs() < 1e-15);
        assert!(!q.has_exact());
    }

    #[test]
    fn wind_undamped_linear_part_is_hamiltonian() {
        let p = wind_oscillation(WindParams::default()).unwrap();
        let j = SquareMatrix::canonical_symplectic(1);
        let defect = p.m.transpose().mul(&j).unwrap().add(&j.mul(&p.m).unwrap()).unwrap();
        assert_eq!(defect, SquareMatrix::zeros(2));
        assert_eq!(WindParams::default().zeta(), 0.0);
    }

    #[test]
    fn wind_rejects_bad_params() {
        assert!(wind_oscillation(WindParams { r: -1.0, theta: 0.0 }).is_err());
        assert!(wind_oscillation(WindParams { r: 1.0, theta: 2.0 }).is_err());
    }

    #[test]
    fn elliptic_origin_and_circular_limit() {
        for k in [0.0, 0.0035, 0.5, 0.99] {
            assert_eq!(jacobi_sn_cn_dn(0.0, k).unwrap(), (0.0, 1.0, 1.0));
        }
        for u in [0.3, 1.0, 5.0, 40.0] {
            let (sn, cn, dn) = jacobi_sn_cn_dn(u, 0.0).unwrap();
            assert_eq!((sn, cn, dn), (u.sin(), u.cos(), 1.0));
        }
    }

    #[test]
    fn elliptic_golden_values() {
        // 30-digit reference values (parameter m = k²)
        let cases = [
            (1.0, 0.0035, [0.84147008242728273612, 0.54030371124009688577, 0.99999566305021025967]),
            (7.3, 0.5, [0.52290180485942453831, 0.85239292727870302308, 0.96521677649048821072]),
            (400.0, 0.0035, [-0.85027595224756079446, -0.52633715908104352229, 0.99999557180387634526]),
            (2.5, 0.9, [0.99536881575109429388, -0.096129707324344330016, 0.44439300817014873613]),
        ];
        for (u, k, [sn, cn, dn]) in cases {
            let got = jacobi_sn_cn_dn(u, k).unwrap();
            assert!((got.0 - sn).abs() <= 1e-12, "sn({u}, {k}) = {}", got.0);
            assert!((got.1 - cn).abs() <= 1e-12, "cn({u}, {k}) = {}", got.1);
            assert!((got.2 - dn).abs() <= 1e-12, "dn({u}, {k}) = {}", got.2);
        }
    }

    #[test]
    fn elliptic_rejects_bad_modulus() {
        assert!(jacobi_sn_cn_dn(1.0, 1.0).is_err());
        assert!(jacobi_sn_cn_dn(1.0, -0.1).is_err());
        assert!(jacobi_sn_cn_dn(f64::NAN, 0.1).is_err());
    }
}
