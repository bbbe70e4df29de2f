use std::f64::consts::{PI, TAU};

use orbit_core::groups;
use orbit_core::linalg;
use orbit_core::mra::{self, Branch, SpectrumWeights};
use orbit_core::series::{SeriesExpansion, SeriesMethod};
use orbit_core::fd;
use proptest::prelude::*;

fn weights(d: usize, raw: &[f64]) -> SpectrumWeights {
    let m = mra::num_phases(d);
    SpectrumWeights::new(d, raw[..m].to_vec(), d.is_multiple_of(2).then(|| raw[m])).unwrap()
}

fn paper_star() -> Vec<f64> {
    SpectrumWeights::new(6, vec![1.0, 4.0], Some(1.0)).unwrap().realize()
}

#[test]
fn fourier_round_trip_and_reference() {
    let theta = [0.3, -1.0, 2.2, 0.1, -0.4, 0.9, 1.3];
    let ts = [1.0, 0.5, -0.3, 0.2, 0.8, -1.1, 0.4];
    let c = mra::fourier(&theta, &ts).unwrap();
    assert!(linalg::dist(&mra::inv_fourier(&c), &theta) <= 1e-12);
    let c = mra::fourier(&ts, &ts).unwrap();
    assert!(c.t.iter().all(|t| *t == 0.0));
}

#[test]
fn realized_example_matches_printed_vector() {
    let theta = paper_star();
    let printed = [2.86, -0.82, -0.82, 0.41, -0.82, -0.82];
    for (a, b) in theta.iter().zip(printed) {
        assert!((a - b).abs() < 0.005, "{theta:?}");
    }
}

#[test]
fn shift_theorem() {
    let ts = [1.0, 0.5, -0.3, 0.2, 0.8, -1.1];
    let g = groups::cyclic(6).unwrap();
    for a in 0..6 {
        // A shift by a positions multiplies v_{d/2} by (−1)^a.
        let half = if a % 2 == 0 { Branch::Plus } else { Branch::Minus };
        let t = mra::critical_family(6, a, Branch::Plus).unwrap();
        let moved = mra::theta_from_phase(&ts, &t, half).unwrap();
        // Some cyclic shift of θ* reproduces the moved vector.
        let best = (0..6).map(|i| linalg::dist(&g.apply(i, &ts), &moved)).fold(f64::INFINITY, f64::min);
        assert!(best <= 1e-10, "a={a}: {best}");
    }
    let same = mra::theta_from_phase(&ts, &[0.0, 0.0], Branch::Plus).unwrap();
    assert!(linalg::dist(&same, &ts) <= 1e-12);
}

#[test]
fn d3_minima() {
    let s = SpectrumWeights::new(3, vec![0.8], None).unwrap();
    let mins = mra::phase_minimize(&s, Branch::Plus, 36, 0).unwrap();
    let want = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
    assert_eq!(mins.len(), 3);
    for (m, w) in mins.iter().zip(want) {
        assert!(mra::circle_dist(m.t[0], w) <= 1e-6);
    }
}

#[test]
fn d5_minima_and_determinant() {
    let s = SpectrumWeights::new(5, vec![1.3, 0.6], None).unwrap();
    let mins = mra::phase_minimize(&s, Branch::Plus, 30, 2).unwrap();
    let want = [(0.0, 0.0), (2.0, 4.0), (4.0, 8.0), (6.0, 2.0), (8.0, 6.0)];
    assert_eq!(mins.len(), 5);
    for (a, b) in want {
        let (a, b) = (a * PI / 5.0, b * PI / 5.0);
        assert!(mins
            .iter()
            .any(|m| mra::circle_dist(m.t[0], a) <= 1e-6 && mra::circle_dist(m.t[1], b) <= 1e-6));
    }
    let (s1, s2) = (1.3f64, 0.6f64);
    for k in 0..10 {
        let t = [0.37 * k as f64 + 0.1, 1.3 - 0.61 * k as f64];
        let h = mra::f_pm(&s, &t, Branch::Plus, 2).unwrap();
        let h = h.hess();
        let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
        let (u1, u2) = (2.0 * t[0] - t[1], t[0] + 2.0 * t[1]);
        let want = 25.0 * s1.powi(3) * s2.powi(3) * u1.cos() * u2.cos();
        assert!((det - want).abs() <= 1e-8 * want.abs().max(1e-3), "{det} vs {want}");
    }
}

#[test]
fn d6_example_reconstructs_both_orbits() {
    let ts = paper_star();
    let s = SpectrumWeights::from_theta(&ts).unwrap();
    let g = groups::cyclic(6).unwrap();
    let mu_star = [2.04, 0.00, -1.63, 1.22, -1.63, 0.00];
    let locations = [(0, 0), (1, 2), (2, 4), (3, 0), (4, 2), (5, 4)];
    for branch in [Branch::Plus, Branch::Minus] {
        let mins = mra::phase_minimize(&s, branch, 24, 7).unwrap();
        assert_eq!(mins.len(), 6);
        for (a, b) in locations {
            let (a, b) = (a as f64 * PI / 3.0, b as f64 * PI / 3.0);
            assert!(mins
                .iter()
                .any(|m| mra::circle_dist(m.t[0], a) <= 1e-6 && mra::circle_dist(m.t[1], b) <= 1e-6));
        }
        // Minimum t^a lies on the orbit of θ* exactly when the half sign
        // matches (−1)^a, and on the orbit of μ* otherwise.
        for m in &mins {
            let a = (m.t[0] / (PI / 3.0)).round() as usize % 6;
            let theta = mra::theta_from_phase(&ts, &m.t, branch).unwrap();
            let to_star = groups::orbit_distance(&g, &theta, &ts).unwrap();
            let to_mu = groups::orbit_distance(&g, &theta, &mu_star).unwrap();
            if a.is_multiple_of(2) == (branch == Branch::Plus) {
                assert!(to_star <= 1e-10);
            } else {
                assert!(to_mu <= 0.01, "{theta:?}");
            }
        }
    }
}

#[test]
fn odd_construction_keeps_global_family() {
    let (s, cert) = mra::spurious_odd(26, 0.01, 0.01).unwrap();
    assert!(cert.passed);
    let f = mra::PhaseSurrogate::new(&s, Branch::Plus).unwrap();
    for a in 0..s.d {
        let t = mra::critical_family(s.d, a, Branch::Plus).unwrap();
        let r = f.eval(&t, 2).unwrap();
        assert!(linalg::norm(r.grad()) <= 1e-9);
        assert!(linalg::sym_eigenvalues(r.hess()).unwrap()[0] > 0.0);
    }
}

#[test]
fn s3_bridge_on_spectrum_shell() {
    for (d, raw) in [(5usize, vec![1.0, 0.7]), (6, vec![1.0, 4.0, 1.0]), (7, vec![0.5, 1.2, 0.9])] {
        let s = weights(d, &raw);
        let ts = s.realize();
        let g = groups::cyclic(d).unwrap();
        let series = SeriesExpansion::new(&g, &ts, 3).unwrap();
        let m = mra::num_phases(d);
        let branches: &[Branch] = if d % 2 == 0 { &[Branch::Plus, Branch::Minus] } else { &[Branch::Plus] };
        for &branch in branches {
            let f = mra::PhaseSurrogate::new(&s, branch).unwrap();
            let pts: Vec<Vec<f64>> = (0..4).map(|k| (0..m).map(|i| 0.7 * k as f64 + 1.3 * i as f64).collect()).collect();
            let s3 = |t: &[f64]| {
                let th = mra::theta_from_phase(&ts, t, branch).unwrap();
                series.s_ell(&th, 3, SeriesMethod::Generic).unwrap()
            };
            for k in 1..4 {
                let lhs = s3(&pts[k]) - s3(&pts[0]);
                let rhs = f.eval(&pts[k], 0).unwrap().value - f.eval(&pts[0], 0).unwrap().value;
                assert!((lhs - rhs).abs() <= 1e-9, "d={d} {branch:?}: {lhs} vs {rhs}");
            }
        }
    }
}

fn spectrum_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (3usize..10).prop_flat_map(|d| {
        let m = mra::num_phases(d);
        (
            Just(d),
            proptest::collection::vec(0.1f64..3.0, m + 1),
            proptest::collection::vec(0.0f64..TAU, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn surrogate_derivatives_match_differences((d, raw, t) in spectrum_strategy(), minus in any::<bool>()) {
        let s = weights(d, &raw);
        let branch = if minus && d % 2 == 0 { Branch::Minus } else { Branch::Plus };
        let f = mra::PhaseSurrogate::new(&s, branch).unwrap();
        let r = f.eval(&t, 2).unwrap();
        let val = |x: &[f64]| Ok(f.eval(x, 0)?.value);
        let g = fd::gradient(val, &t, 1e-4).unwrap();
        let h = fd::hessian(val, &t, 1e-4).unwrap();
        let scale = linalg::norm(&g).max(1.0);
        prop_assert!(linalg::dist(r.grad(), &g) <= 1e-6 * scale);
        prop_assert!(r.hess().max_abs_diff(&h) <= 1e-6 * h.max_abs().max(1.0));
    }

    #[test]
    fn family_values_and_stationarity((d, raw, _t) in spectrum_strategy()) {
        let s = weights(d, &raw);
        let branches: &[Branch] = if d % 2 == 0 { &[Branch::Plus, Branch::Minus] } else { &[Branch::Plus] };
        let zero = vec![0.0; mra::num_phases(d)];
        for &branch in branches {
            let f = mra::PhaseSurrogate::new(&s, branch).unwrap();
            for a in 0..d {
                // For even d and odd a the pair term changes sign, so t^a
                // takes the value of the other branch at 0.
                let other = match branch {
                    Branch::Plus if d % 2 == 0 && a % 2 == 1 => Branch::Minus,
                    Branch::Minus if a % 2 == 1 => Branch::Plus,
                    b => b,
                };
                let base = mra::f_pm(&s, &zero, other, 0).unwrap().value;
                let t = mra::critical_family(d, a, Branch::Plus).unwrap();
                let r = f.eval(&t, 1).unwrap();
                prop_assert!((r.value - base).abs() <= 1e-10 * base.abs().max(1.0));
                prop_assert!(linalg::norm(r.grad()) <= 1e-10 * base.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fourier_round_trip_random(theta in proptest::collection::vec(-3.0f64..3.0, 3..10)) {
        let d = theta.len();
        let ts: Vec<f64> = (0..d).map(|i| 1.0 + 0.3 * i as f64 * (i as f64).sin()).collect();
        prop_assume!(mra::fourier(&ts, &ts).is_ok());
        let c = mra::fourier(&theta, &ts).unwrap();
        prop_assert!(linalg::dist(&mra::inv_fourier(&c), &theta) <= 1e-12 * linalg::norm(&theta).max(1.0));
    }
}
