use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::*;
use crate::coeffs::{sample_admissible, CoefficientSet};
use crate::fields::{laplacian, scalar_l2, Grid, Region, ScalarField, TwoStateField, VectorField};

const ONE: C64 = C64::new(1.0, 0.0);

fn grid(n: usize) -> Arc<Grid> {
    Grid::build(1.0, 1.0, n, n).unwrap()
}

fn sine_mode(g: &Arc<Grid>, kx: usize, ky: usize) -> ScalarField {
    ScalarField::from_real_fn(g.clone(), move |x, y| {
        (kx as f64 * PI * x).sin() * (ky as f64 * PI * y).sin()
    })
}

/// Discrete Dirichlet eigenvalue of `-lap5` for the sine mode `(kx, ky)`.
fn discrete_mu(g: &Grid, kx: usize, ky: usize) -> f64 {
    let lam = |k: usize, h: f64, l: f64| {
        let s = (0.5 * PI * k as f64 * h / l).sin();
        4.0 * s * s / (h * h)
    };
    lam(kx, g.hx, g.lx) + lam(ky, g.hy, g.ly)
}

/// Exact per-step Crank-Nicolson amplification on an eigenmode.
fn cn_ratio(mu: f64, dt: f64) -> C64 {
    let t = C64::new(0.0, 0.5 * dt * mu);
    (ONE - t) / (ONE + t)
}

fn uniform_times(t_final: f64, nt: usize) -> Vec<f64> {
    (0..=nt).map(|k| t_final * k as f64 / nt as f64).collect()
}

fn rel_l2_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.axpy(C64::new(-1.0, 0.0), b);
    scalar_l2(&d, Region::All).unwrap() / scalar_l2(b, Region::All).unwrap()
}

fn random_set(g: &Arc<Grid>, seed: u64, amplitude: f64) -> CoefficientSet {
    let zero = CoefficientSet::zero(g.clone(), 10.0, 2);
    sample_admissible(seed, g.clone(), 10.0, &zero, 2, amplitude).unwrap()
}

#[test]
fn magnetic_laplacian_reduces_to_laplacian() {
    let g = grid(20);
    let u = ScalarField::from_fn(g.clone(), |x, y| C64::new((3.0 * x).sin(), x * y));
    let a = VectorField::zeros(g, FieldKind::Real);
    let out = apply_magnetic_laplacian(&a, &u).unwrap();
    let lap = laplacian(&u);
    for n in 0..out.values.len() {
        assert!((out.values[n] - lap.values[n]).norm() < 1e-12);
    }
}

#[test]
fn magnetic_laplacian_constant_fields() {
    let g = grid(20);
    let c = C64::new(1.5, -0.5);
    let u = ScalarField::from_fn(g.clone(), |_, _| c);
    let a = VectorField::from_real_fn(g.clone(), |_, _| [0.4, -0.3]);
    let out = apply_magnetic_laplacian(&a, &u).unwrap();
    let want = -(0.4f64 * 0.4 + 0.3 * 0.3) * c;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            assert!((out.values[g.idx(i, j)] - want).norm() < 1e-11);
        }
    }
}

#[test]
fn magnetic_laplacian_matches_symbolic_expansion() {
    // A = (y, -x), u = e^{ix}:
    // lap_A u = (-1 - 2y - x^2 - y^2) e^{ix}, second-order in h.
    let mut errs = Vec::new();
    for &n in &[33usize, 65] {
        let g = grid(n);
        let u = ScalarField::from_fn(g.clone(), |x, _| C64::from_polar(1.0, x));
        let a = VectorField::from_real_fn(g.clone(), |x, y| [y, -x]);
        let out = apply_magnetic_laplacian(&a, &u).unwrap();
        let mut worst = 0.0f64;
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let (x, y) = g.coords(g.idx(i, j));
                let want = C64::from_polar(1.0, x) * (-1.0 - 2.0 * y - x * x - y * y);
                worst = worst.max((out.values[g.idx(i, j)] - want).norm());
            }
        }
        errs.push(worst);
    }
    assert!(errs[0] < 1e-2, "{errs:?}");
    assert!(errs[1] < 0.3 * errs[0], "{errs:?}");
}

#[test]
fn hamiltonian_with_zero_coefficients_is_minus_laplacian() {
    let g = grid(16);
    let h = HamiltonianOperator::new(&CoefficientSet::zero(g.clone(), 10.0, 2));
    let u = TwoStateField::new(
        ScalarField::from_fn(g.clone(), |x, y| C64::new(x * y, (x - y).cos())),
        ScalarField::from_fn(g, |x, y| C64::new((2.0 * x).sin(), y)),
    )
    .unwrap();
    let out = h.apply(&u).unwrap();
    let lp = laplacian(&u.plus);
    let lm = laplacian(&u.minus);
    for n in 0..lp.values.len() {
        assert!((out.plus.values[n] + lp.values[n]).norm() < 1e-11);
        assert!((out.minus.values[n] + lm.values[n]).norm() < 1e-11);
    }
}

#[test]
fn hamiltonian_symmetric_reduction_with_scalar_coupling() {
    let g = grid(16);
    let mut c = CoefficientSet::zero(g.clone(), 10.0, 2);
    c.phi_scal = ScalarField::from_real_fn(g.clone(), |_, _| 0.8);
    let h = HamiltonianOperator::new(&c);
    let w = ScalarField::from_fn(g, |x, y| C64::new((x + y).sin(), x));
    let u = TwoStateField::new(w.clone(), w.clone()).unwrap();
    let out = h.apply(&u).unwrap();
    let lw = laplacian(&w);
    for n in 0..w.values.len() {
        let want = -lw.values[n] + 0.8 * w.values[n];
        assert!((out.plus.values[n] - want).norm() < 1e-11);
        assert!((out.minus.values[n] - want).norm() < 1e-11);
    }
}

#[test]
fn interior_action_matches_full_action() {
    let g = grid(24);
    let h = HamiltonianOperator::new(&random_set(&g, 11, 0.4));
    let u = TwoStateField::new(
        ScalarField::from_fn(g.clone(), |x, y| C64::new((5.0 * x * y).sin(), x - y * y)),
        ScalarField::from_fn(g.clone(), |x, y| C64::new(y, (3.0 * x).cos())),
    )
    .unwrap();
    let full = h.apply(&u).unwrap();
    let ni = h.n_interior();
    let mut out_p = vec![C64::new(0.0, 0.0); ni];
    let mut out_m = vec![C64::new(0.0, 0.0); ni];
    h.apply_interior(&u.plus.values, &u.minus.values, &mut out_p, &mut out_m);
    let scale = full.plus.sup_norm().max(full.minus.sup_norm());
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = (j - 1) * (g.nx - 2) + (i - 1);
            let n = g.idx(i, j);
            assert!((out_p[k] - full.plus.values[n]).norm() < 1e-12 * scale);
            assert!((out_m[k] - full.minus.values[n]).norm() < 1e-12 * scale);
        }
    }
}

#[test]
fn hermitian_symmetry_with_admissible_coefficients() {
    let g = grid(32);
    let h = HamiltonianOperator::new(&random_set(&g, 21, 0.5));
    let asym = check_selfadjoint(&h);
    assert!(asym <= 1e-12, "asymmetry {asym:.3e}");
}

#[test]
fn imaginary_potential_breaks_symmetry() {
    let g = grid(32);
    let mut c = CoefficientSet::zero(g.clone(), 10.0, 2);
    c.q_plus = ScalarField::from_fn(g, |_, _| C64::new(0.0, 1.0));
    let h = HamiltonianOperator::new(&c);
    assert!(check_selfadjoint(&h) > 1e-6);
}

#[test]
fn zero_coefficients_are_exactly_symmetric() {
    let g = grid(24);
    let h = HamiltonianOperator::new(&CoefficientSet::zero(g, 10.0, 2));
    assert!(check_selfadjoint(&h) <= 1e-14);
}

#[test]
fn compatibility_order_one_is_static_trace() {
    let g = grid(16);
    let h = HamiltonianOperator::new(&random_set(&g, 2, 0.2));
    let u0 = TwoStateField::new(
        ScalarField::from_fn(g.clone(), |x, y| C64::new(x + y, x * y)),
        ScalarField::from_fn(g.clone(), |x, y| C64::new(y, -x)),
    )
    .unwrap();
    let bd = compatibility_boundary_data(&h, &u0, 1, &[0.0, 0.1, 0.5]).unwrap();
    for (bk, &b) in g.boundary_indices().iter().enumerate() {
        for t in 0..3 {
            assert_eq!(bd.values[t][bk].0, u0.plus.values[b]);
            assert_eq!(bd.values[t][bk].1, u0.minus.values[b]);
        }
    }
}

#[test]
fn compatibility_of_zero_state_is_zero() {
    let g = grid(16);
    let h = HamiltonianOperator::new(&CoefficientSet::zero(g.clone(), 10.0, 2));
    let bd =
        compatibility_boundary_data(&h, &TwoStateField::zeros(g), 3, &[0.0, 0.2]).unwrap();
    for frame in &bd.values {
        for &(gp, gm) in frame {
            assert_eq!(gp, C64::new(0.0, 0.0));
            assert_eq!(gm, C64::new(0.0, 0.0));
        }
    }
    assert!(compatibility_boundary_data(
        &HamiltonianOperator::new(&CoefficientSet::zero(bd.grid().clone(), 10.0, 2)),
        &TwoStateField::zeros(bd.grid().clone()),
        9,
        &[0.0]
    )
    .is_err());
}

#[test]
fn compatibility_tracks_phase_on_near_eigenstate() {
    // u0 = e^{i(x+y)} satisfies H u0 = 2 u0 up to stencil error for zero
    // coefficients, so the order-3 data matches e^{-2it} traces through t^2.
    let g = grid(33);
    let h = HamiltonianOperator::new(&CoefficientSet::zero(g.clone(), 10.0, 2));
    let u0 = TwoStateField::new(
        ScalarField::from_fn(g.clone(), |x, y| C64::from_polar(1.0, x + y)),
        ScalarField::zeros(g.clone()),
    )
    .unwrap();
    let times = [0.0, 0.05, 0.1];
    let bd = compatibility_boundary_data(&h, &u0, 3, &times).unwrap();
    for (bk, &b) in g.boundary_indices().iter().enumerate() {
        for (tk, &t) in times.iter().enumerate() {
            let want = C64::from_polar(1.0, -2.0 * t) * u0.plus.values[b];
            let err = (bd.values[tk][bk].0 - want).norm();
            // cubic Taylor remainder plus O(h^2) eigen defect
            // cubic Taylor remainder plus the one-sided stencil defect of
            // H^2 at boundary nodes, which enters at order t^2
            let tol = 1e-14 + 4.0 * t * t;
            assert!(err < tol, "t={t} err={err:.3e}");
        }
    }
}

#[test]
fn free_eigenmode_follows_crank_nicolson_phase() {
    let g = grid(33);
    let h = HamiltonianOperator::new(&CoefficientSet::zero(g.clone(), 10.0, 2));
    let w = sine_mode(&g, 1, 1);
    let u0 = TwoStateField::new(w.clone(), ScalarField::zeros(g.clone())).unwrap();
    let (t_final, nt) = (0.25, 32);
    let bd = BoundaryData::zeros(g.clone(), uniform_times(t_final, nt));
    let traj = solve_ibvp(&h, &u0, &bd, t_final, nt).unwrap();
    let r = cn_ratio(discrete_mu(&g, 1, 1), traj.dt());
    let mut phase = ONE;
    for (k, s) in traj.states.iter().enumerate() {
        let want = w.scaled(phase);
        let diff = s.plus.axpy(C64::new(-1.0, 0.0), &want);
        assert!(diff.sup_norm() < 1e-9, "step {k}: {}", diff.sup_norm());
        assert!(s.minus.sup_norm() < 1e-10, "minus leaked at step {k}");
        phase *= r;
    }
    // against the continuum phase e^{-i 2 pi^2 t}: O(h^2 + dt^2)
    let cont = w.scaled(C64::from_polar(1.0, -2.0 * PI * PI * t_final));
    assert!(rel_l2_diff(&traj.states[nt].plus, &cont) < 2e-2);
}

#[test]
fn scalar_coupling_shifts_the_phase() {
    let g = grid(33);
    let c_val = 0.7;
    let mut c = CoefficientSet::zero(g.clone(), 10.0, 2);
    c.phi_scal = ScalarField::from_real_fn(g.clone(), |_, _| c_val);
    let h = HamiltonianOperator::new(&c);
    let w = sine_mode(&g, 1, 1);
    let u0 = TwoStateField::new(w.clone(), w.clone()).unwrap();
    let (t_final, nt) = (0.25, 32);
    let bd = BoundaryData::zeros(g.clone(), uniform_times(t_final, nt));
    let traj = solve_ibvp(&h, &u0, &bd, t_final, nt).unwrap();
    // the sum channel is an eigenstate with eigenvalue mu + c
    let r = cn_ratio(discrete_mu(&g, 1, 1) + c_val, traj.dt());
    let mut phase = ONE;
    for s in &traj.states {
        let sum = s.plus.axpy(ONE, &s.minus);
        let want = w.scaled(2.0 * phase);
        let diff = sum.axpy(C64::new(-1.0, 0.0), &want);
        assert!(diff.sup_norm() < 1e-9, "{}", diff.sup_norm());
        phase *= r;
    }
    let cont = w.scaled(C64::from_polar(
        1.0,
        -(2.0 * PI * PI + c_val) * t_final,
    ));
    assert!(rel_l2_diff(&traj.states[nt].plus, &cont) < 2e-2);
}

#[test]
fn zero_data_stays_zero() {
    let g = grid(16);
    let h = HamiltonianOperator::new(&random_set(&g, 3, 0.3));
    let bd = BoundaryData::zeros(g.clone(), uniform_times(0.2, 8));
    let traj = solve_ibvp(&h, &TwoStateField::zeros(g), &bd, 0.2, 8).unwrap();
    for s in &traj.states {
        assert_eq!(s.plus.sup_norm(), 0.0);
        assert_eq!(s.minus.sup_norm(), 0.0);
    }
}

#[test]
fn boundary_mismatch_is_rejected() {
    let g = grid(16);
    let h = HamiltonianOperator::new(&CoefficientSet::zero(g.clone(), 10.0, 2));
    let u0 = TwoStateField::new(
        ScalarField::from_real_fn(g.clone(), |_, _| 1.0),
        ScalarField::zeros(g.clone()),
    )
    .unwrap();
    let bd = BoundaryData::zeros(g, uniform_times(0.1, 4));
    assert!(matches!(
        solve_ibvp(&h, &u0, &bd, 0.1, 4),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn norm_is_conserved_with_admissible_coefficients() {
    let g = grid(33);
    let h = HamiltonianOperator::new(&random_set(&g, 31, 0.4));
    let u0 = TwoStateField::new(sine_mode(&g, 1, 2), sine_mode(&g, 2, 1)).unwrap();
    let (t_final, nt) = (0.4, 40);
    let bd = BoundaryData::zeros(g, uniform_times(t_final, nt));
    let traj = solve_ibvp(&h, &u0, &bd, t_final, nt).unwrap();
    let two_norm = |s: &TwoStateField| {
        let p = scalar_l2(&s.plus, Region::All).unwrap();
        let m = scalar_l2(&s.minus, Region::All).unwrap();
        (p * p + m * m).sqrt()
    };
    let n0 = two_norm(&traj.states[0]);
    for s in &traj.states {
        assert!((two_norm(s) / n0 - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn gauge_change_multiplies_solution_by_phase() {
    // decoupled case: A+ -> A+ + grad psi, u0+ -> e^{-i psi} u0+ yields
    // e^{-i psi} u+ within the discretization error.
    let g = grid(33);
    let psi = |x: f64, y: f64| 0.3 * (PI * x).sin() * (PI * y).sin();
    let grad_psi = |x: f64, y: f64| {
        [
            0.3 * PI * (PI * x).cos() * (PI * y).sin(),
            0.3 * PI * (PI * x).sin() * (PI * y).cos(),
        ]
    };
    let mut c1 = CoefficientSet::zero(g.clone(), 10.0, 2);
    c1.a_plus = VectorField::from_real_fn(g.clone(), |x, y| [0.2 * y, -0.2 * x]);
    let mut c2 = c1.clone();
    c2.a_plus = c1.a_plus.axpy(ONE, &VectorField::from_real_fn(g.clone(), grad_psi));
    let w = sine_mode(&g, 1, 1);
    let u0_1 = TwoStateField::new(w.clone(), ScalarField::zeros(g.clone())).unwrap();
    let phase = ScalarField::from_fn(g.clone(), |x, y| C64::from_polar(1.0, -psi(x, y)));
    let u0_2 = TwoStateField::new(
        ScalarField::from_values(
            g.clone(),
            w.values
                .iter()
                .zip(&phase.values)
                .map(|(a, b)| a * b)
                .collect(),
        )
        .unwrap(),
        ScalarField::zeros(g.clone()),
    )
    .unwrap();
    let (t_final, nt) = (0.2, 24);
    let bd = BoundaryData::zeros(g.clone(), uniform_times(t_final, nt));
    let t1 = solve_ibvp(&HamiltonianOperator::new(&c1), &u0_1, &bd, t_final, nt).unwrap();
    let t2 = solve_ibvp(&HamiltonianOperator::new(&c2), &u0_2, &bd, t_final, nt).unwrap();
    let gauged = ScalarField::from_values(
        g,
        t1.states[nt]
            .plus
            .values
            .iter()
            .zip(&phase.values)
            .map(|(a, b)| a * b)
            .collect(),
    )
    .unwrap();
    assert!(rel_l2_diff(&t2.states[nt].plus, &gauged) < 0.05);
}

#[test]
fn solver_is_linear_in_initial_data() {
    let g = grid(24);
    let h = HamiltonianOperator::new(&random_set(&g, 5, 0.3));
    let u0a = TwoStateField::new(sine_mode(&g, 1, 1), sine_mode(&g, 2, 2)).unwrap();
    let u0b = TwoStateField::new(sine_mode(&g, 2, 1), sine_mode(&g, 1, 2)).unwrap();
    let c = C64::new(2.0, -1.0);
    let (t_final, nt) = (0.1, 8);
    let bd = BoundaryData::zeros(g, uniform_times(t_final, nt));
    let ta = solve_ibvp(&h, &u0a, &bd, t_final, nt).unwrap();
    let tb = solve_ibvp(&h, &u0b, &bd, t_final, nt).unwrap();
    let tc = solve_ibvp(&h, &u0a.axpy(c, &u0b), &bd, t_final, nt).unwrap();
    let combo = ta.states[nt].axpy(c, &tb.states[nt]);
    let dp = tc.states[nt].plus.axpy(C64::new(-1.0, 0.0), &combo.plus);
    let dm = tc.states[nt].minus.axpy(C64::new(-1.0, 0.0), &combo.minus);
    assert!(dp.sup_norm() < 1e-10);
    assert!(dm.sup_norm() < 1e-10);
}

#[test]
fn convergence_is_second_order() {
    let t_final = 0.125;
    let mut errs = Vec::new();
    for (n, nt) in [(17usize, 8usize), (33, 16), (65, 32)] {
        let g = grid(n);
        let h = HamiltonianOperator::new(&CoefficientSet::zero(g.clone(), 10.0, 2));
        let w = sine_mode(&g, 1, 1);
        let u0 = TwoStateField::new(w.clone(), ScalarField::zeros(g.clone())).unwrap();
        let bd = BoundaryData::zeros(g, uniform_times(t_final, nt));
        let traj = solve_ibvp(&h, &u0, &bd, t_final, nt).unwrap();
        let cont = w.scaled(C64::from_polar(1.0, -2.0 * PI * PI * t_final));
        errs.push(rel_l2_diff(&traj.states[nt].plus, &cont));
    }
    let order = (errs[1] / errs[2]).log2();
    assert!(order >= 1.9, "errors {errs:?}, order {order:.2}");
}

#[test]
fn relative_bound_trivial_without_coupling() {
    let g = grid(32);
    let a = VectorField::from_real_fn(g.clone(), |x, y| [y, -x]);
    let phi = VectorField::zeros(g, FieldKind::Real);
    let rep = check_relative_bound(&a, &phi, 0.5, 10).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.worst_slack >= 0.0);
    assert_eq!(rep.c_eps, 0.0);
}

#[test]
fn relative_bound_analytic_case() {
    // A = 0, Phi = (1, 0), u = sin(pi x) sin(pi y):
    // |Phi . grad u|^2 = pi^2/4, |lap u|^2 = pi^4, |u|^2 = 1/4, C_eps = 2.
    let g = grid(65);
    let u = sine_mode(&g, 1, 1);
    let grad = gradient(&u);
    let phi_grad = ScalarField::from_values(g.clone(), grad.comps[0].clone()).unwrap();
    let left = scalar_l2(&phi_grad, Region::All).unwrap().powi(2);
    assert!((left - PI * PI / 4.0).abs() < 1e-2 * left);
    let a = VectorField::zeros(g.clone(), FieldKind::Real);
    let mag = apply_magnetic_laplacian(&a, &u).unwrap();
    let mid = scalar_l2(&mag, Region::All).unwrap().powi(2);
    let u2 = scalar_l2(&u, Region::All).unwrap().powi(2);
    let eps = 0.5;
    let c_eps = 1.0 * (1.0 / eps + 0.0);
    assert!(left <= eps * mid + c_eps * u2);
    assert!((mid - PI.powi(4)).abs() < 0.3);
    assert!((u2 - 0.25).abs() < 1e-3);
}

#[test]
fn relative_bound_empirical_sweep() {
    let g = grid(64);
    let s = 1.0 / 2f64.sqrt();
    let a = VectorField::from_real_fn(g.clone(), move |x, y| [s * y, -s * x]);
    let phi = VectorField::from_real_fn(g, |x, _| [0.6, 0.3 * (PI * x).sin()]);
    let rep = check_relative_bound(&a, &phi, 0.1, 100).unwrap();
    assert_eq!(rep.violations, 0, "worst slack {}", rep.worst_slack);
    assert!(check_relative_bound(&a, &rep_phi(), 1.5, 1).is_err());
}

fn rep_phi() -> VectorField {
    VectorField::zeros(grid(64), FieldKind::Real)
}

#[test]
fn trajectory_roundtrip() {
    let g = grid(16);
    let h = HamiltonianOperator::new(&random_set(&g, 9, 0.2));
    let u0 = TwoStateField::new(sine_mode(&g, 1, 1), sine_mode(&g, 1, 2)).unwrap();
    let bd = BoundaryData::zeros(g.clone(), uniform_times(0.1, 4));
    let traj = solve_ibvp(&h, &u0, &bd, 0.1, 4).unwrap();
    let dir = std::env::temp_dir().join(format!("magschro-traj-{}", std::process::id()));
    save_trajectory(&dir, &traj).unwrap();
    let back = load_trajectory(&dir, g).unwrap();
    assert_eq!(back.nt(), traj.nt());
    assert_eq!(back.t_final, traj.t_final);
    for (a, b) in back.states.iter().zip(&traj.states) {
        assert_eq!(a.plus.values, b.plus.values);
        assert_eq!(a.minus.values, b.minus.values);
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
