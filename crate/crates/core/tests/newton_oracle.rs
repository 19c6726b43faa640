mod common;

use common::{assemble_jacobian, dense_newton_step, dense_residual, flatten, max_abs_diff, perturbed};
use partime::baselines::{solve_sequential_explicit, solve_sequential_implicit, InnerNewton};
use partime::newton::{self, residual, Trajectory};
use partime::problems::{self, central_difference_jacobian};
use partime::steppers::{explicit_euler, explicit_rk, implicit_euler, trapezoidal};
use partime::{ButcherTableau, GuessPolicy, NewtonConfig, StepperIncrement, Vector};

fn scan_step(traj: &Trajectory, stepper: &StepperIncrement) -> Vec<f64> {
    let h = residual(traj, stepper).unwrap();
    let u = if stepper.is_explicit() {
        newton::newton_step_explicit(traj, &h, stepper).unwrap()
    } else {
        newton::newton_step_implicit(traj, &h, stepper).unwrap()
    };
    flatten(&u)
}

#[test]
fn residual_matches_direct_stacking() {
    let p = problems::van_der_pol();
    let s = explicit_rk(&p, ButcherTableau::rk4()).unwrap();
    let traj = perturbed(p.x0(), 30, 0.05, 0.5, 1);
    let got = flatten(&residual(&traj, &s).unwrap());
    assert!(max_abs_diff(&got, &dense_residual(&traj, &s)) == 0.0);
}

#[test]
fn assembled_jacobian_matches_finite_differences() {
    for (p, s) in [
        (problems::cart_pole(), explicit_rk(&problems::cart_pole(), ButcherTableau::rk4()).unwrap()),
        (problems::robertson(), trapezoidal(&problems::robertson())),
    ] {
        let n = 4;
        let d = p.dim();
        let traj = perturbed(p.x0(), n, 0.01, 0.1, 7);
        let flat: Vector = traj.states.iter().flat_map(|x| x.iter().copied()).collect();
        let rebuild = |v: &Vector| -> Vector {
            let states = (0..n).map(|k| (0..d).map(|i| v[k * d + i]).collect()).collect();
            let t = Trajectory::new(traj.x0.clone(), states, 0.0, traj.dt).unwrap();
            dense_residual(&t, &s).into_iter().collect()
        };
        let fd = central_difference_jacobian(rebuild, &flat);
        let h = assemble_jacobian(&traj, &s);
        let scale = fd.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n * d {
            for j in 0..n * d {
                let diff = (h.a[i * n * d + j] - fd[(i, j)]).abs();
                assert!(diff <= 1e-6 * scale, "{} ({i},{j}) {diff}", p.name());
            }
        }
    }
}

#[test]
fn explicit_step_matches_dense_solve() {
    let p = problems::logistic();
    let s = explicit_rk(&p, ButcherTableau::rk4()).unwrap();
    for n in [2, 5, 50] {
        let traj = perturbed(p.x0(), n, 0.01, 0.8, n as u64);
        let err = max_abs_diff(&scan_step(&traj, &s), &dense_newton_step(&traj, &s));
        assert!(err <= 1e-10, "N={n} err={err:e}");
    }
    let p = problems::van_der_pol();
    let s = explicit_euler(&p);
    let traj = perturbed(p.x0(), 20, 0.05, 1.0, 3);
    assert!(max_abs_diff(&scan_step(&traj, &s), &dense_newton_step(&traj, &s)) <= 1e-10);
}

#[test]
fn implicit_step_matches_dense_solve() {
    let p = problems::dahlquist();
    let s = implicit_euler(&p);
    for n in [2, 5, 50] {
        let traj = perturbed(p.x0(), n, 0.1, 1.0, 10 + n as u64);
        let err = max_abs_diff(&scan_step(&traj, &s), &dense_newton_step(&traj, &s));
        assert!(err <= 1e-10, "N={n} err={err:e}");
    }
    let p = problems::robertson();
    for s in [implicit_euler(&p), trapezoidal(&p)] {
        let traj = perturbed(p.x0(), 8, 0.1, 0.01, 5);
        let u = scan_step(&traj, &s);
        let want = dense_newton_step(&traj, &s);
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs_diff(&u, &want) <= 1e-9 * scale, "{}", s.name());
    }
}

#[test]
fn determinant_is_product_of_diagonal_blocks() {
    let p = problems::robertson();
    let s = implicit_euler(&p);
    let traj = perturbed(p.x0(), 10, 0.1, 0.05, 99);
    let (_, det) = assemble_jacobian(&traj, &s).solve(&vec![0.0; 30]);
    let mut prod = 1.0f64;
    for k in 1..=10 {
        let a = assemble_jacobian(
            &Trajectory::new(traj.state(k - 1).clone(), vec![traj.state(k).clone()], 0.0, 0.1).unwrap(),
            &s,
        );
        prod *= a.solve(&[0.0; 3]).1;
    }
    assert!((det.abs() - prod.abs()).abs() <= 1e-8 * prod.abs(), "{det:e} vs {prod:e}");
}

#[test]
fn quadratic_convergence_tail() {
    for (p, guess) in [(problems::van_der_pol(), GuessPolicy::Ones), (problems::cart_pole(), GuessPolicy::Zeros)] {
        let s = explicit_rk(&p, ButcherTableau::rk4()).unwrap();
        let cfg = NewtonConfig::fixed(11).with_recording(true);
        let r = newton::solve(&p, &s, 0.01, guess, &cfg).unwrap();
        let hist = &r.residual_history;
        assert_eq!(hist.len(), 12);
        let tail: Vec<_> = hist.windows(2).filter(|w| (1e-13..=1e-3).contains(&w[0])).collect();
        assert!(!tail.is_empty());
        for w in tail {
            assert!(w[1] <= w[0].powf(1.5).max(1e-13), "{} {:e} -> {:e}", p.name(), w[0], w[1]);
        }
    }
}

#[test]
fn converged_explicit_solution_is_the_sequential_solution() {
    for (p, guess) in [
        (problems::logistic(), GuessPolicy::Ones),
        (problems::van_der_pol(), GuessPolicy::Ones),
        (problems::cart_pole(), GuessPolicy::Zeros),
    ] {
        let s = explicit_rk(&p, ButcherTableau::rk4()).unwrap();
        let r = newton::solve(&p, &s, 0.01, guess, &NewtonConfig::fixed(11)).unwrap();
        let seq = solve_sequential_explicit(&p, &s, 0.01).unwrap();
        let err = r.trajectory.max_abs_diff(&seq);
        assert!(err <= 1e-10, "{} {err:e}", p.name());
    }
}

#[test]
fn converged_implicit_solution_is_the_sequential_solution() {
    for (p, iters) in [(problems::dahlquist(), 5), (problems::robertson(), 25)] {
        for s in [implicit_euler(&p), trapezoidal(&p)] {
            let r = newton::solve(&p, &s, 0.1, GuessPolicy::Zeros, &NewtonConfig::fixed(iters)).unwrap();
            let seq = solve_sequential_implicit(&p, &s, 0.1, InnerNewton::default()).unwrap();
            let err = r.trajectory.max_abs_diff(&seq);
            assert!(err <= 1e-8, "{} {} {err:e}", p.name(), s.name());
        }
    }
}

#[test]
fn affine_problems_converge_in_one_step() {
    let p = problems::dahlquist();
    for (s, dt) in [(explicit_euler(&p), 1e-4), (implicit_euler(&p), 0.1), (trapezoidal(&p), 0.1)] {
        for guess in [GuessPolicy::Ones, GuessPolicy::Zeros, GuessPolicy::ReplicateX0] {
            let cfg = NewtonConfig::fixed(1).with_recording(true);
            let r = newton::solve(&p, &s, dt, guess, &cfg).unwrap();
            assert!(r.residual_history[1] <= 1e-12, "{} {:?}", s.name(), r.residual_history);
        }
    }
}

#[test]
fn tolerance_stops_early() {
    let p = problems::logistic();
    let s = explicit_rk(&p, ButcherTableau::rk4()).unwrap();
    let cfg = NewtonConfig::fixed(50).with_tol(1e-12).with_recording(true);
    let r = newton::solve(&p, &s, 0.01, GuessPolicy::Ones, &cfg).unwrap();
    assert!(r.iterations_run < 50);
    assert!(r.final_residual().unwrap() <= 1e-12);
    assert_eq!(r.residual_history.len(), r.iterations_run + 1);
}
