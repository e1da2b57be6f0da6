#![allow(dead_code)]

use nbsc_core::potential::{construct_d, DOptions};
use nbsc_core::{Ensemble, EnsembleParams, Potential};
use proptest::prelude::*;
use rand::Rng;

pub fn ensemble(dv: usize, dc: usize, m: usize) -> Ensemble {
    Ensemble::new(EnsembleParams::new(dv, dc, m).unwrap()).unwrap()
}

pub fn potential(dv: usize, dc: usize, m: usize) -> Potential {
    let ens = ensemble(dv, dc, m);
    let c = construct_d(&ens, &DOptions::default()).unwrap();
    Potential::new(ens, c.d).unwrap()
}

/// Nonincreasing vector in `[0,1]^m` from arbitrary draws.
pub fn sorted_tail(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

pub fn random_tail<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    sorted_tail((0..m).map(|_| rng.random::<f64>()).collect())
}

/// Random tail vector in the interior of the box `0 < x_i < cap_i`.
pub fn random_interior<R: Rng>(rng: &mut R, cap: &[f64]) -> Vec<f64> {
    let mut prev = 1.0f64;
    cap.iter()
        .map(|c| {
            let v = (0.02 + 0.96 * rng.random::<f64>()) * c;
            prev = prev.min(v);
            prev
        })
        .collect()
}

/// Componentwise-ordered pair `x <= x'` of valid tail vectors.
pub fn ordered_pair(u: Vec<f64>, v: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let u = sorted_tail(u);
    let v = sorted_tail(v);
    let lo = u.iter().zip(&v).map(|(a, b)| a.min(*b)).collect();
    let hi = u.iter().zip(&v).map(|(a, b)| a.max(*b)).collect();
    (lo, hi)
}

pub fn tail_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, m).prop_map(sorted_tail)
}

pub fn pair_strategy(m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0.0f64..=1.0, m),
        prop::collection::vec(0.0f64..=1.0, m),
    )
        .prop_map(|(u, v)| ordered_pair(u, v))
}

pub fn leq(a: &[f64], b: &[f64], slack: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x <= *y + slack)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Scalar `(dv, dc)` DE map on the BEC.
pub fn scalar_step(x: f64, eps: f64, dv: usize, dc: usize) -> f64 {
    eps * (1.0 - (1.0 - x).powi(dc as i32 - 1)).powi(dv as i32 - 1)
}

/// Scalar BP threshold by bisection on the scalar recursion.
pub fn scalar_bp_threshold(dv: usize, dc: usize, tol: f64) -> f64 {
    let decodes = |eps: f64| {
        let mut x = eps;
        for _ in 0..200_000 {
            let next = scalar_step(x, eps, dv, dc);
            if (next - x).abs() < 1e-14 {
                x = next;
                break;
            }
            x = next;
        }
        x < 1e-9
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if decodes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form scalar potential of the `(dv, dc)` ensemble with `D = [1]`.
pub fn scalar_potential(x: f64, eps: f64, dv: usize, dc: usize) -> f64 {
    let (v, c) = (dv as f64, dc as f64);
    let g = 1.0 - (1.0 - x).powf(c - 1.0);
    let big_g = x - (1.0 - (1.0 - x).powf(c)) / c;
    let big_f = eps * g.powf(v) / v;
    g * x - big_g - big_f
}

/// Second derivative of the scalar potential:
/// `U'' = (1 - eps (dv-1) g^(dv-2) g') g' + (x - eps g^(dv-1)) g''`.
pub fn scalar_potential_dd(x: f64, eps: f64, dv: usize, dc: usize) -> f64 {
    let (v, c) = (dv as f64, dc as f64);
    let g = 1.0 - (1.0 - x).powf(c - 1.0);
    let g1 = (c - 1.0) * (1.0 - x).powf(c - 2.0);
    let g2 = -(c - 1.0) * (c - 2.0) * (1.0 - x).powf(c - 3.0);
    (1.0 - eps * (v - 1.0) * g.powf(v - 2.0) * g1) * g1 + (x - eps * g.powf(v - 1.0)) * g2
}
