#![allow(clippy::needless_range_loop)]

use orbit_core::linalg::{self, Mat};
use orbit_core::reparam::Chart;
use orbit_core::{fd, Error};
use proptest::prelude::*;

const STAR6: [f64; 6] = [2.857, -0.816, -0.816, 0.408, -0.816, -0.816];

fn normal(d: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    orbit_core::rng::CounterRng::new(seed).fill_normal(&mut v);
    v
}

/// A smooth test function with its gradient and Hessian.
fn test_fn(x: &[f64]) -> (f64, Vec<f64>, Mat) {
    let d = x.len();
    let n2 = linalg::dot(x, x);
    let mut v = n2 * n2 / 4.0;
    let mut g = linalg::scaled(x, n2);
    let mut h = Mat::outer(x, x).scale(2.0);
    for i in 0..d {
        let w = (i + 1) as f64;
        v += (w * x[i]).sin();
        g[i] += w * (w * x[i]).cos();
        h[(i, i)] += n2 - w * w * (w * x[i]).sin();
    }
    (v, g, h)
}

fn charts() -> Vec<(Chart, usize)> {
    vec![
        (Chart::polar2(&[1.0, 0.3], 3).unwrap(), 2),
        (Chart::power_sums(3).unwrap(), 3),
        (Chart::power_sums(4).unwrap(), 4),
        (Chart::fourier_mra(&[1.0, -0.2, 0.4, 0.7, -0.5]).unwrap(), 5),
        (Chart::fourier_mra(&STAR6).unwrap(), 6),
    ]
}

/// Phase coordinates too close to the `[0, 2π)` cut for a finite difference.
fn near_cut(chart: &Chart, theta: &[f64]) -> bool {
    let phi = chart.phi(theta).unwrap();
    let bands = chart.bands();
    let last = *bands.iter().max().unwrap();
    phi.iter().zip(&bands).any(|(p, b)| {
        matches!(chart.kind(), orbit_core::reparam::ChartKind::Polar2 { .. } | orbit_core::reparam::ChartKind::FourierMra)
            && *b == last
            && (*p < 1e-2 || *p > std::f64::consts::TAU - 1e-2)
    })
}

#[test]
fn power_sums_example() {
    let c = Chart::power_sums(3).unwrap();
    let phi = c.phi(&[1.0, 2.0, 3.0]).unwrap();
    let want = [2.0, 14.0 / 3.0, 12.0];
    for (a, b) in phi.iter().zip(want) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn polar_reference_maps_to_zero_phase() {
    let ts = [1.0, 0.3];
    let c = Chart::polar2(&ts, 3).unwrap();
    let phi = c.phi(&ts).unwrap();
    assert!((phi[0] - linalg::norm(&ts)).abs() < 1e-15);
    assert_eq!(phi[1], 0.0);
}

#[test]
fn identity_pullback_is_identity() {
    let c = Chart::identity(3);
    let (_, g, h) = test_fn(&[0.1, 0.2, 0.3]);
    let (gp, hp) = c.pullback(&[0.1, 0.2, 0.3], &g, &h).unwrap();
    assert_eq!(gp, g);
    assert!(hp.max_abs_diff(&h) < 1e-15);
}

#[test]
fn out_of_domain_errors() {
    assert!(matches!(Chart::power_sums(3).unwrap().eval(&[1.0, 1.0, 2.0]), Err(Error::OutOfDomain(_))));
    assert!(matches!(Chart::polar2(&[1.0, 0.0], 3).unwrap().eval(&[0.0, 0.0]), Err(Error::OutOfDomain(_))));
    // v_1 of a constant vector vanishes.
    let c = Chart::fourier_mra(&[1.0, -0.2, 0.4, 0.7, -0.5]).unwrap();
    assert!(c.eval(&[1.0; 5]).is_err());
    assert!(Chart::fourier_mra(&[1.0; 5]).is_err());
}

#[test]
fn power_sum_jacobian_rows() {
    let c = Chart::power_sums(4).unwrap();
    let theta = [0.3, -1.2, 0.8, 2.0];
    let pt = c.eval(&theta).unwrap();
    for l in 1..=4 {
        for j in 0..4 {
            let want = l as f64 / 4.0 * theta[j].powi(l as i32 - 1);
            assert!((pt.jacobian[(l - 1, j)] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn jacobians_and_hessians_match_finite_differences() {
    for (ci, (chart, d)) in charts().into_iter().enumerate() {
        let mut checked = 0;
        for rep in 0..20u64 {
            let theta = normal(d, 1000 * ci as u64 + rep);
            if near_cut(&chart, &theta) || chart.condition(&theta).unwrap() > 1e6 {
                continue;
            }
            let pt = chart.eval(&theta).unwrap();
            let h = 1e-4;
            let jfd = fd::jacobian(|x| chart.phi(x), &theta, h).unwrap();
            let rel = pt.jacobian.max_abs_diff(&jfd) / jfd.max_abs();
            assert!(rel <= 1e-6, "chart {ci}: jacobian rel {rel}");
            for i in 0..d {
                let hfd = fd::jacobian(|x| Ok(chart.eval(x)?.jacobian.row(i).to_vec()), &theta, h).unwrap();
                let err = pt.coord_hessians[i].max_abs_diff(&hfd);
                assert!(err <= 1e-6 * hfd.max_abs().max(1.0), "chart {ci} coord {i}: {err}");
            }
            checked += 1;
            if checked == 4 {
                break;
            }
        }
        assert!(checked > 0);
    }
}

#[test]
fn pullback_matches_differences_in_chart_coordinates() {
    for (ci, (chart, d)) in charts().into_iter().enumerate() {
        let theta = (0..100u64)
            .map(|k| linalg::scaled(&normal(d, 77 + 100 * ci as u64 + k), 1.5))
            .find(|t| !near_cut(&chart, t) && chart.condition(t).unwrap() < 50.0)
            .unwrap();
        let phi = chart.phi(&theta).unwrap();
        let (_, g, h) = test_fn(&theta);
        let (gp, hp) = chart.pullback(&theta, &g, &h).unwrap();
        let f_phi = |p: &[f64]| -> orbit_core::Result<f64> { Ok(test_fn(&chart.inverse(p, Some(&theta))?).0) };
        let step = 1e-4;
        let gfd = fd::gradient(f_phi, &phi, step).unwrap();
        let hfd = fd::hessian(f_phi, &phi, step).unwrap();
        assert!(linalg::dist(&gp, &gfd) <= 1e-5 * linalg::norm(&gfd).max(1.0), "chart {ci} grad");
        assert!(hp.max_abs_diff(&hfd) <= 1e-5 * hfd.max_abs().max(1.0), "chart {ci} hess");
    }
}

fn inertia(m: &Mat) -> (usize, usize) {
    let e = linalg::sym_eigenvalues(m).unwrap();
    let scale = e.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    (
        e.iter().filter(|x| **x > 1e-9 * scale).count(),
        e.iter().filter(|x| **x < -1e-9 * scale).count(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip(which in 0usize..5, seed in any::<u64>()) {
        let (chart, d) = charts().swap_remove(which);
        let theta = normal(d, seed);
        prop_assume!(chart.condition(&theta).map(|c| c < 1e6).unwrap_or(false));
        let phi = chart.phi(&theta).unwrap();
        let back = chart.inverse(&phi, Some(&theta)).unwrap();
        prop_assert!(linalg::dist(&back, &theta) <= 1e-8 * linalg::norm(&theta).max(1.0));
    }

    #[test]
    fn signature_preserved_at_critical_points(which in 0usize..5, seed in any::<u64>()) {
        let (chart, d) = charts().swap_remove(which);
        let theta = normal(d, seed);
        prop_assume!(chart.condition(&theta).map(|c| c < 1e4).unwrap_or(false));
        let a = Mat::from_vec(d, d, normal(d * d, seed ^ 9)).unwrap();
        let h = a.add(&a.transpose());
        let (gp, hp) = chart.pullback(&theta, &vec![0.0; d], &h).unwrap();
        prop_assert!(gp.iter().all(|x| *x == 0.0));
        prop_assert_eq!(inertia(&hp), inertia(&h));
    }
}
