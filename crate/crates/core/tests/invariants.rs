use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sei::harness::{estimate_order, random_hamiltonian, round_trip_defect};
use sei::problems::{duffing, jacobi_sn_cn_dn, wind_oscillation, DuffingParams, WindParams};
use sei::stepper::{ei_step, precompute, rk_step, SemilinearProblem, SolverSettings};
use sei::tableau::{
    builtin_methods, check_ei_symmetry, check_ei_symplecticity, check_rk_symmetry, sei_abar,
    MethodKind, SeiMethod,
};
use sei::{expm, SquareMatrix};

fn matrix(dim: usize, bound: f64) -> impl Strategy<Value = SquareMatrix> {
    prop::collection::vec(-bound..bound, dim * dim).prop_map(move |v| SquareMatrix::new(dim, v).unwrap())
}

fn any_matrix() -> impl Strategy<Value = SquareMatrix> {
    (1usize..=4).prop_flat_map(|d| matrix(d, 0.75))
}

fn dist(a: &SquareMatrix, b: &SquareMatrix) -> f64 {
    a.sub(b).unwrap().inf_norm()
}

fn exponential_methods() -> Vec<SeiMethod> {
    builtin_methods().into_iter().filter(|m| m.kind == MethodKind::Exponential).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn expm_inverse_is_expm_of_negation(a in any_matrix()) {
        let e = expm(&a).unwrap();
        let f = expm(&a.scale(-1.0)).unwrap();
        let id = SquareMatrix::identity(a.dim());
        prop_assert!(dist(&e.mul(&f).unwrap(), &id) <= 1e-12);
        prop_assert!(dist(&f.mul(&e).unwrap(), &id) <= 1e-12);
    }

    #[test]
    fn expm_group_law(a in any_matrix(), s in -1.0f64..1.0, t in -1.0f64..1.0) {
        let lhs = expm(&a.scale(s)).unwrap().mul(&expm(&a.scale(t)).unwrap()).unwrap();
        let rhs = expm(&a.scale(s + t)).unwrap();
        prop_assert!(dist(&lhs, &rhs) <= 1e-12 * rhs.inf_norm().max(1.0));
    }

    #[test]
    fn expm_determinant_is_exp_trace(a in any_matrix()) {
        let det = expm(&a).unwrap().determinant();
        let want = a.trace().exp();
        prop_assert!((det - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn expm_commutes_with_argument(a in any_matrix()) {
        let e = expm(&a).unwrap();
        prop_assert!(dist(&e.mul(&a).unwrap(), &a.mul(&e).unwrap()) <= 1e-12 * e.inf_norm().max(1.0));
    }

    #[test]
    fn expm_of_hamiltonian_is_symplectic(seed in any::<u64>(), half in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_hamiltonian(&mut rng, half, 3.0);
        let j = SquareMatrix::canonical_symplectic(half);
        let s = expm(&z).unwrap();
        let defect = s.transpose().mul(&j).unwrap().mul(&s).unwrap();
        prop_assert!(dist(&defect, &j) <= 1e-12 * s.inf_norm().powi(2).max(1.0));
    }

    #[test]
    fn ei_conditions_hold_at_random_hamiltonian_points(seed in any::<u64>(), half in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_hamiltonian(&mut rng, half, 3.0);
        let j = SquareMatrix::canonical_symplectic(half);
        for m in builtin_methods() {
            prop_assert!(check_ei_symmetry(&m, &z).unwrap().residual <= 1e-11, "{}", m.name);
            prop_assert!(check_ei_symplecticity(&m, &z, &j).unwrap().residual <= 1e-11, "{}", m.name);
        }
    }

    #[test]
    fn ei_symmetry_holds_for_any_matrix(z in any_matrix()) {
        for m in builtin_methods() {
            prop_assert!(check_ei_symmetry(&m, &z).unwrap().residual <= 1e-11, "{}", m.name);
        }
    }

    #[test]
    fn zero_linear_part_reduces_to_rk(q in -1.5f64..1.5, p in -20.0f64..20.0) {
        let base = duffing(DuffingParams::default()).unwrap();
        let flat = base.with_linear_part(SquareMatrix::zeros(2)).unwrap();
        let settings = SolverSettings::default();
        for m in exponential_methods() {
            let kernel = precompute(&m, &flat.m, 0.01).unwrap();
            let a = ei_step(&kernel, &flat, &[q, p], &settings).unwrap().y;
            let b = rk_step(&m.tableau, &flat, &[q, p], 0.01, &settings).unwrap().y;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-13 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn elliptic_identities(u in -50.0f64..50.0, k in 0.0f64..0.95) {
        let (sn, cn, dn) = jacobi_sn_cn_dn(u, k).unwrap();
        prop_assert!((sn * sn + cn * cn - 1.0).abs() <= 1e-12);
        prop_assert!((dn * dn + k * k * sn * sn - 1.0).abs() <= 1e-12);
        let (sm, cm, dm) = jacobi_sn_cn_dn(-u, k).unwrap();
        prop_assert!((sm + sn).abs() <= 1e-12 && (cm - cn).abs() <= 1e-12 && (dm - dn).abs() <= 1e-12);
    }

    #[test]
    fn power_law_errors_give_their_order(p in 1.0f64..6.0, c in 1e-6f64..1e3) {
        let pts: Vec<(f64, f64)> = (3..7).map(|i| {
            let h = 0.5f64.powi(i);
            (h, c * h.powf(p))
        }).filter(|(_, e)| *e >= 1e-12).collect();
        for slope in estimate_order(&pts) {
            prop_assert!((slope - p).abs() <= 1e-9);
        }
    }
}

#[test]
fn reversal_is_involutive_and_preserves_symmetry() {
    for m in builtin_methods() {
        let r = m.tableau.reversed();
        assert_eq!(r.reversed(), m.tableau, "{}", m.name);
        let a = check_rk_symmetry(&m.tableau).residual;
        let b = check_rk_symmetry(&r).residual;
        assert!(a <= 1e-13 && b <= 1e-13, "{}: {a} {b}", m.name);
    }
}

#[test]
fn lift_at_zero_is_the_plain_coefficient() {
    let zero = SquareMatrix::zeros(3);
    for m in builtin_methods() {
        for i in 0..m.stages() {
            for j in 0..m.stages() {
                let want = SquareMatrix::identity(3).scale(m.tableau.a(i, j));
                assert_eq!(sei_abar(&m, i, j, &zero).unwrap(), want);
            }
        }
    }
}

#[test]
fn exponential_step_is_exact_without_nonlinearity() {
    let p = duffing(DuffingParams::default()).unwrap();
    let linear = SemilinearProblem::new("linear", p.m.clone(), |_, out| out.fill(0.0), p.y0.clone()).unwrap();
    let settings = SolverSettings::default();
    let h = 0.125;
    let flow = expm(&p.m.scale(h)).unwrap();
    for m in exponential_methods() {
        let kernel = precompute(&m, &p.m, h).unwrap();
        let mut y = linear.y0.clone();
        let mut want = linear.y0.clone();
        for _ in 0..160 {
            y = ei_step(&kernel, &linear, &y, &settings).unwrap().y;
            want = flow.mat_vec(&want).unwrap();
        }
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-11, "{}: {a} vs {b}", m.name);
        }
    }
}

#[test]
fn round_trip_defect_tracks_solver_tolerance() {
    let problems = [
        duffing(DuffingParams::default()).unwrap(),
        wind_oscillation(WindParams::default()).unwrap(),
    ];
    for tol in [1e-8, 1e-10, 1e-12] {
        let settings = SolverSettings { fp_tol: tol, ..SolverSettings::default() };
        for m in exponential_methods() {
            for p in &problems {
                let scale = p.y0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                let d = round_trip_defect(&m, p, &p.y0, 0.0625, &settings).unwrap();
                assert!(d <= 50.0 * tol * scale, "{} on {} at fp_tol {tol}: {d}", m.name, p.label);
            }
        }
    }
}
