mod common;

use common::*;
use nbsc_core::coupled::{coupled_update, CoupledState};
use nbsc_core::potential::{
    construct_d, coupling_width_bound, diagonal_d_solve, revalidate, DMethod, DOptions, DeltaEOptions, KBoundOptions,
    PATH_TOL,
};
use nbsc_core::{CouplingMatrix, DMatrix, DeConfig, Error, Potential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
#[allow(clippy::needless_range_loop)]
fn d_exists_for_nonbinary_fields() {
    for m in 1..=4 {
        let ens = ensemble(3, 6, m);
        let c = construct_d(&ens, &DOptions::default()).unwrap();
        assert_eq!(c.method, DMethod::Symbolic);
        assert_eq!(c.nullspace_dim, 1, "m={m}");
        let d = c.d.entries();
        let max = d.iter().flatten().fold(0.0f64, |a, v| a.max(*v));
        assert_eq!(max, 1.0);
        for a in 0..m {
            for b in 0..m {
                assert!(d[a][b] > 0.0);
                assert_eq!(d[a][b], d[b][a]);
            }
        }
        assert!(c.d.determinant().abs() > 1e-10);
        assert!(c.path_check.max_diff < PATH_TOL);
        assert!(revalidate(&ens, &c.d, 5) < 1e-9);
    }
    let one = construct_d(&ensemble(3, 6, 1), &DOptions::default()).unwrap();
    assert_eq!(one.d.entries(), &[vec![1.0]]);
}

#[test]
fn d_depends_only_on_the_field_size() {
    for m in 2..=3 {
        let reference = construct_d(&ensemble(3, 6, m), &DOptions::default()).unwrap().d;
        for (dv, dc) in [(3, 9), (4, 8), (2, 5)] {
            let d = construct_d(&ensemble(dv, dc, m), &DOptions::default()).unwrap().d;
            for (a, b) in d.entries().iter().flatten().zip(reference.entries().iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn numeric_route_agrees_with_symbolic_route() {
    for m in 1..=4 {
        let ens = ensemble(3, 6, m);
        let exact = construct_d(&ens, &DOptions::default()).unwrap();
        assert_eq!(exact.method, DMethod::Symbolic);
        let opts = DOptions {
            method: Some(DMethod::Numeric),
            ..DOptions::default()
        };
        let numeric = construct_d(&ens, &opts).unwrap();
        for (a, b) in numeric.d.entries().iter().flatten().zip(exact.d.entries().iter().flatten()) {
            assert!((a - b).abs() < 1e-9, "m={m}: {a} vs {b}");
        }
    }
}

#[test]
fn numeric_route_handles_larger_fields() {
    for m in [5, 8] {
        let ens = ensemble(3, 6, m);
        let c = construct_d(&ens, &DOptions::default()).unwrap();
        assert_eq!(c.method, DMethod::Numeric);
        assert!(c.d.entries().iter().flatten().all(|&v| v > 0.0));
        assert!(c.max_asymmetry < 1e-9);
        assert!(c.path_check.max_diff < PATH_TOL);
    }
}

#[test]
fn diagonal_d_is_infeasible_for_nonbinary_fields() {
    assert!(diagonal_d_solve(&ensemble(3, 6, 1)).unwrap().feasible);
    for m in 2..=3 {
        let s = diagonal_d_solve(&ensemble(3, 6, m)).unwrap();
        assert!(!s.feasible, "m={m}");
        assert_eq!(s.nullspace_dim, 0);
    }
}

#[test]
fn path_independence_and_negative_control() {
    for m in 2..=3 {
        let good = potential(3, 6, m);
        for eps in [0.3, 0.5, 0.8] {
            assert!(good.path_independence(eps, 50, 3).max_diff < PATH_TOL);
        }
        let mut corrupted = good.d().entries().to_vec();
        corrupted[0][0] *= 1.5;
        let bad = Potential::new(ensemble(3, 6, m), DMatrix::new(corrupted).unwrap()).unwrap();
        let check = bad.path_independence(0.5, 50, 3);
        assert!(check.max_diff > 1e3 * PATH_TOL, "m={m}: {check:?}");
        let identity: Vec<Vec<f64>> = (0..m).map(|a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
        let diag = Potential::new(ensemble(3, 6, m), DMatrix::unvalidated(identity).unwrap()).unwrap();
        assert!(diag.path_independence(0.5, 50, 3).max_diff > 1e3 * PATH_TOL);
    }
}

#[test]
fn invalid_d_is_rejected() {
    assert!(DMatrix::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
    assert!(DMatrix::new(vec![vec![1.0, -0.5], vec![-0.5, 1.0]]).is_err());
    assert!(DMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).is_err());
}

#[test]
fn binary_antiderivatives_and_potential_match_closed_forms() {
    let pot = potential(3, 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let x: f64 = rng.random();
        let eps: f64 = rng.random();
        assert!((pot.scalar_f(&[x], eps) - eps * x.powi(3) / 3.0).abs() < 1e-13);
        assert!((pot.scalar_g(&[x]) - (x - (1.0 - (1.0 - x).powi(6)) / 6.0)).abs() < 1e-13);
        assert!((pot.potential(&[x], eps) - scalar_potential(x, eps, 3, 6)).abs() < 1e-13);
    }
    assert!((pot.potential(&[0.1], 0.45) - 0.0087431).abs() < 1e-6);
    assert!((scalar_potential(0.1, 0.45, 3, 6) - 0.0087431).abs() < 1e-6);
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        let zero = vec![0.0; m];
        assert_eq!(pot.scalar_f(&zero, 0.5), 0.0);
        assert_eq!(pot.scalar_g(&zero), 0.0);
        assert_eq!(pot.potential(&zero, 0.5), 0.0);
        assert!(pot.gradient(&zero, 0.5).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let h = 1e-4;
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let eps = 0.2 + 0.7 * rng.random::<f64>();
            let x = random_interior(&mut rng, &vec![1.0; m]);
            let grad = pot.gradient(&x, eps);
            let scale = grad.iter().fold(1e-3f64, |a, v| a.max(v.abs()));
            for n in 0..m {
                let at = |d: f64| {
                    let mut z = x.clone();
                    z[n] += d;
                    pot.potential(&z, eps)
                };
                let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                assert!((fd - grad[n]).abs() < 1e-6 * scale, "m={m} n={n}: {fd} vs {}", grad[n]);
            }
        }
    }
}

#[test]
fn fixed_points_are_stationary_points() {
    let cfg = DeConfig::default();
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        for eps in [0.3, 0.44, 0.46, 0.5, 0.6, 0.8] {
            let report = pot.delta_e(eps, &cfg, &DeltaEOptions::default()).unwrap();
            for x in &report.fixed_points {
                let g = pot.gradient(x, eps);
                assert!(g.iter().all(|v| v.abs() < 1e-6), "m={m} eps={eps}: {g:?}");
            }
        }
    }
}

/// Newton iteration on `U'` using the finite-difference Hessian.
fn newton_stationary(pot: &Potential, mut x: Vec<f64>, eps: f64) -> Option<Vec<f64>> {
    let m = x.len();
    for _ in 0..60 {
        let g = pot.gradient(&x, eps);
        if g.iter().all(|v| v.abs() < 1e-12) {
            return Some(x);
        }
        let h = pot.hessian(&x, eps, 1e-6);
        let h = nalgebra::DMatrix::from_fn(m, m, |a, b| h[a][b]);
        let step = h.lu().solve(&nalgebra::DVector::from_vec(g))?;
        x.iter_mut().zip(step.iter()).for_each(|(v, s)| *v -= s);
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return None;
        }
    }
    None
}

#[test]
fn stationary_points_are_fixed_points() {
    let eps = 0.47;
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        let cap = pot.ensemble().channel_ccdf(eps);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut found = 0;
        for _ in 0..40 {
            let start = random_interior(&mut rng, &cap);
            if let Some(x) = newton_stationary(&pot, start, eps) {
                found += 1;
                let r = sup_diff(&x, &pot.ensemble().step_raw(&x, eps));
                assert!(r < 1e-6, "m={m}: stationary {x:?} has residual {r}");
            }
        }
        assert!(found > 0, "m={m}: no stationary point located");
    }
}

#[test]
fn potential_and_gradient_decrease_in_eps() {
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let x = random_interior(&mut rng, &vec![1.0; m]);
            let e1 = 0.9 * rng.random::<f64>();
            let e2 = e1 + 0.01 + 0.09 * rng.random::<f64>();
            assert!(pot.potential(&x, e1) > pot.potential(&x, e2));
            let g1 = pot.gradient(&x, e1);
            let g2 = pot.gradient(&x, e2);
            assert!(g1.iter().zip(&g2).all(|(a, b)| a > b), "m={m}: {g1:?} {g2:?}");
        }
    }
}

#[test]
fn fixed_points_at_different_eps_differ() {
    let cfg = DeConfig::default();
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        for e1 in [0.45, 0.5, 0.6] {
            let report = pot.delta_e(e1, &cfg, &DeltaEOptions::default()).unwrap();
            for x in &report.fixed_points {
                for e2 in [e1 - 0.01, e1 + 0.01, 0.9] {
                    assert!(sup_diff(x, &pot.ensemble().step_raw(x, e2)) > 1e-8);
                }
            }
        }
    }
}

#[test]
fn energy_gap_behaviour() {
    let cfg = DeConfig::default();
    let pot = potential(3, 6, 1);
    let below = pot.delta_e(0.40, &cfg, &DeltaEOptions::default()).unwrap();
    assert!(below.is_infinite());
    assert!(below.fixed_points.is_empty());
    let json = serde_json::to_value(&below).unwrap();
    assert_eq!(json["delta_e"], "inf");
    let at = pot.delta_e(0.48815, &cfg, &DeltaEOptions::default()).unwrap();
    assert!(at.delta_e.abs() < 1e-4, "{}", at.delta_e);
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        let eps_bp = pot.ensemble().bp_threshold(&cfg).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=8 {
            let eps = eps_bp + 0.01 + k as f64 * (0.95 - eps_bp) / 8.0;
            let d = pot.delta_e(eps, &cfg, &DeltaEOptions::default()).unwrap().delta_e;
            assert!(d.is_finite() && d < prev, "m={m} eps={eps}: {d} !< {prev}");
            prev = d;
        }
    }
}

#[test]
fn binary_potential_threshold_matches_scalar_oracle() {
    let cfg = DeConfig::default();
    let th = potential(3, 6, 1).threshold(&cfg).unwrap();
    assert!((th.eps_star - 0.48815).abs() < 1e-3, "{th:?}");
    let gap = |eps: f64| {
        let mut x = eps;
        for _ in 0..100_000 {
            x = scalar_step(x, eps, 3, 6);
        }
        scalar_potential(x, eps, 3, 6)
    };
    assert!(gap(th.eps_star - 1e-3) > 0.0);
    assert!(gap(th.eps_star + 1e-3) < 0.0);
}

#[test]
fn potential_threshold_exceeds_bp_threshold() {
    let cfg = DeConfig {
        bisect_tol: 1e-4,
        ..DeConfig::default()
    };
    for (dv, dc, m) in [(3, 6, 1), (3, 6, 2), (3, 6, 3), (3, 9, 2), (4, 8, 2), (3, 12, 3)] {
        let th = potential(dv, dc, m).threshold(&cfg).unwrap();
        assert!(th.eps_star >= th.eps_bp, "({dv},{dc},{m}): {th:?}");
    }
}

#[test]
fn threshold_is_invariant_to_scaling_d() {
    let cfg = DeConfig {
        bisect_tol: 1e-4,
        ..DeConfig::default()
    };
    let pot = potential(3, 6, 2);
    let scaled: Vec<Vec<f64>> = pot.d().entries().iter().map(|r| r.iter().map(|v| 3.0 * v).collect()).collect();
    let other = Potential::new(ensemble(3, 6, 2), DMatrix::new(scaled).unwrap()).unwrap();
    let a = pot.threshold(&cfg).unwrap();
    let b = other.threshold(&cfg).unwrap();
    assert_eq!(a.eps_star, b.eps_star);
    let ra = pot.delta_e(0.49, &cfg, &DeltaEOptions::default()).unwrap();
    let rb = other.delta_e(0.49, &cfg, &DeltaEOptions::default()).unwrap();
    assert_eq!(ra.fixed_points, rb.fixed_points);
}

#[test]
fn coupled_potential_reduces_and_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for m in 1..=3 {
        let pot = potential(3, 6, m);
        let one = CouplingMatrix::new(1, 1).unwrap();
        for _ in 0..20 {
            let x = random_tail(&mut rng, m);
            let eps: f64 = rng.random();
            let state = CoupledState::new(vec![x.clone()]).unwrap();
            let u = pot.coupled_potential(&state, eps, &one).unwrap();
            assert!((u - pot.potential(&x, eps)).abs() < 1e-10);
        }
        let coupling = CouplingMatrix::new(8, 3).unwrap();
        let zero = CoupledState::uniform(&vec![0.0; m], coupling.positions());
        assert_eq!(pot.coupled_potential(&zero, 0.5, &coupling).unwrap(), 0.0);
    }
}

#[test]
fn coupled_potential_decreases_along_trajectories() {
    for m in 1..=2 {
        let pot = potential(3, 6, m);
        for eps in [0.45, 0.48, 0.52] {
            let coupling = CouplingMatrix::new(20, 3).unwrap();
            let mut state = CoupledState::uniform(&pot.ensemble().channel_ccdf(eps), coupling.positions());
            let mut u = pot.coupled_potential(&state, eps, &coupling).unwrap();
            for step in 0..300 {
                state = coupled_update(&state, eps, pot.ensemble(), &coupling).unwrap();
                let next = pot.coupled_potential(&state, eps, &coupling).unwrap();
                assert!(next <= u + 1e-9, "m={m} eps={eps} step={step}: {next} > {u}");
                u = next;
            }
        }
    }
}

#[test]
fn hessian_bound_matches_scalar_oracle() {
    let cfg = DeConfig::default();
    let pot = potential(3, 6, 1);
    let eps = 0.47;
    let report = pot.k_bound(eps, &cfg, &KBoundOptions::default()).unwrap();
    let oracle = (0..=200_000)
        .map(|i| scalar_potential_dd(eps * i as f64 / 200_000.0, eps, 3, 6).abs())
        .fold(0.0f64, f64::max);
    assert!(report.k >= 0.0);
    assert!((report.k - oracle).abs() < 1e-3 * oracle, "{} vs {oracle}", report.k);
    assert_eq!(report.norm, "entrywise-max");
    assert!((report.w_min - report.k / (2.0 * report.delta_e)).abs() < 1e-12 * report.w_min);
    assert!(matches!(pot.k_bound(0.495, &cfg, &KBoundOptions::default()), Err(Error::UndefinedBound { .. })));
}

#[test]
fn width_bound_is_linear_in_m() {
    let base = coupling_width_bound(1, 2.5, 0.01).unwrap();
    for m in 1..=8 {
        assert!((coupling_width_bound(m, 2.5, 0.01).unwrap() - m as f64 * base).abs() < 1e-9);
    }
    assert!(coupling_width_bound(3, 1.0, 0.0).is_err());
}
