//! Multi-reference alignment: Fourier coordinates of the cyclic group, the
//! phase surrogates `F±`, their critical families and the spurious-minimizer
//! constructions.
//!
//! Coordinates are `v_k = (1/√d) Σ_j ω^{jk} θ_j` with `ω = e^{2πi/d}`. For
//! `k ∈ I = {1..⌊(d−1)/2⌋}` they are stored as moduli `r_k` and phases `t_k`
//! measured from the reference `θ*`, so `θ*` has `t = 0`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::math::{self, TAU};
use crate::risk::EvalResult;
use crate::rng::CounterRng;

/// Smallest reference modulus accepted for phase coordinates.
pub const MIN_REFERENCE_MODULUS: f64 = 1e-10;

/// `|I| = ⌊(d−1)/2⌋`.
pub fn num_phases(d: usize) -> usize {
    d.saturating_sub(1) / 2
}

/// All `d` normalized DFT coefficients `v_0..v_{d−1}`.
pub fn dft(theta: &[f64]) -> Vec<Complex64> {
    let d = theta.len();
    let norm = 1.0 / math::sqrt(d as f64);
    (0..d)
        .map(|k| {
            let mut z = Complex64::new(0.0, 0.0);
            for (j, x) in theta.iter().enumerate() {
                let a = TAU * ((j * k) % d) as f64 / d as f64;
                z += Complex64::new(math::cos(a), math::sin(a)) * *x;
            }
            z * norm
        })
        .collect()
}

/// Inverse of [`dft`] for conjugate-symmetric coefficients; returns the real
/// part.
pub fn idft(v: &[Complex64]) -> Vec<f64> {
    let d = v.len();
    let norm = 1.0 / math::sqrt(d as f64);
    (0..d)
        .map(|j| {
            let mut s = 0.0;
            for (k, z) in v.iter().enumerate() {
                let a = -TAU * ((j * k) % d) as f64 / d as f64;
                s += (z * Complex64::new(math::cos(a), math::sin(a))).re;
            }
            s * norm
        })
        .collect()
}

fn arg(z: Complex64) -> f64 {
    math::atan2(z.im, z.re)
}

/// Reduces to `[0, 2π)`, snapping values within roundoff of `2π` to zero.
pub fn wrap_phase(x: f64) -> f64 {
    let r = math::wrap_tau(x);
    if r >= TAU - 1e-12 {
        0.0
    } else {
        r
    }
}

/// Circular distance between two angles.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    math::wrap_pi(a - b).abs()
}

/// Fourier coordinates of a real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoords {
    pub d: usize,
    pub v0: f64,
    /// `v_k` for `k ∈ I`.
    pub v: Vec<Complex64>,
    /// `v_{d/2}` (real) when `d` is even.
    pub v_half: Option<f64>,
    /// `r_k = |v_k|` for `k ∈ I`.
    pub r: Vec<f64>,
    /// `t_k = Arg v_k − Arg v_{k,*}` in `[0, 2π)` for `k ∈ I`.
    pub t: Vec<f64>,
}

/// Fourier coordinates of `θ` with phases relative to `θ*`.
pub fn fourier(theta: &[f64], theta_star: &[f64]) -> Result<FourierCoords> {
    let d = theta.len();
    if theta_star.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: theta_star.len(),
        });
    }
    if d == 0 {
        return Err(Error::InvalidParameter("empty vector".into()));
    }
    let v = dft(theta);
    let vs = dft(theta_star);
    let m = num_phases(d);
    let mut t = Vec::with_capacity(m);
    for k in 1..=m {
        if vs[k].norm() < MIN_REFERENCE_MODULUS {
            return Err(Error::OutOfDomain(format!(
                "reference Fourier coefficient v_{k} vanishes"
            )));
        }
        let tk = if v[k].norm() == 0.0 {
            0.0
        } else {
            wrap_phase(arg(v[k]) - arg(vs[k]))
        };
        t.push(tk);
    }
    Ok(FourierCoords {
        d,
        v0: v[0].re,
        v: v[1..=m].to_vec(),
        v_half: d.is_multiple_of(2).then(|| v[d / 2].re),
        r: v[1..=m].iter().map(|z| z.norm()).collect(),
        t,
    })
}

/// Rebuilds `θ` from `v_0`, `v_k (k ∈ I)` and `v_{d/2}` using
/// `v_{−k} = conj(v_k)`.
pub fn inv_fourier(c: &FourierCoords) -> Vec<f64> {
    let d = c.d;
    let mut full = vec![Complex64::new(0.0, 0.0); d];
    full[0] = Complex64::new(c.v0, 0.0);
    for (i, z) in c.v.iter().enumerate() {
        let k = i + 1;
        full[k] = *z;
        full[d - k] = z.conj();
    }
    if let Some(h) = c.v_half {
        full[d / 2] = Complex64::new(h, 0.0);
    }
    idft(&full)
}

/// `S₁ = −v_{0,*} v_0 + v_0²/2` for the cyclic group.
pub fn cyclic_s1(theta: &[f64], theta_star: &[f64]) -> f64 {
    let v0 = dft(theta)[0].re;
    let v0s = dft(theta_star)[0].re;
    -v0s * v0 + 0.5 * v0 * v0
}

/// `S₂ = Σ_{i=1}^{d−1} (−r_{i,*}² r_i²/2 + r_i⁴/4)` for the cyclic group.
pub fn cyclic_s2(theta: &[f64], theta_star: &[f64]) -> f64 {
    let v = dft(theta);
    let vs = dft(theta_star);
    (1..theta.len())
        .map(|i| {
            let r2 = v[i].norm_sqr();
            -0.5 * vs[i].norm_sqr() * r2 + 0.25 * r2 * r2
        })
        .sum()
}

/// The phase-dependent sum of `S₃` for the cyclic group,
/// `−(1/6) Σ_{i+j+k≡0} r_{i,*}r_{j,*}r_{k,*} r_i r_j r_k cos(t_i+t_j+t_k)` over
/// `i, j, k ∈ {1..d−1}`. `S₃` minus this is a polynomial in the power spectrum.
pub fn cyclic_s3_phase(theta: &[f64], theta_star: &[f64]) -> f64 {
    let d = theta.len();
    let v = dft(theta);
    let vs = dft(theta_star);
    // r_k r_{k,*} e^{i t_k} = v_k conj(v_{k,*}).
    let w: Vec<Complex64> = v.iter().zip(&vs).map(|(a, b)| a * b.conj()).collect();
    let mut total = 0.0;
    for i in 1..d {
        for j in 1..d {
            let k = (2 * d - i - j) % d;
            if k != 0 {
                total += (w[i] * w[j] * w[k]).re;
            }
        }
    }
    -total / 6.0
}

/// Weights `s_i = r_{i,*}²` for `i ∈ I`, plus `s_{d/2}` for even `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumWeights {
    pub d: usize,
    pub s: Vec<f64>,
    pub s_half: Option<f64>,
}

impl SpectrumWeights {
    pub fn new(d: usize, s: Vec<f64>, s_half: Option<f64>) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidParameter(format!("need d >= 3, got {d}")));
        }
        if s.len() != num_phases(d) {
            return Err(Error::DimensionMismatch {
                expected: num_phases(d),
                found: s.len(),
            });
        }
        if d.is_multiple_of(2) != s_half.is_some() {
            return Err(Error::InvalidParameter(
                "s_{d/2} must be given exactly when d is even".into(),
            ));
        }
        if s.iter().chain(s_half.iter()).any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidParameter("spectrum weights must be >= 0".into()));
        }
        Ok(SpectrumWeights { d, s, s_half })
    }

    /// Power spectrum of `θ*`.
    pub fn from_theta(theta_star: &[f64]) -> Result<Self> {
        let d = theta_star.len();
        let v = dft(theta_star);
        let m = num_phases(d);
        Self::new(
            d,
            (1..=m).map(|k| v[k].norm_sqr()).collect(),
            d.is_multiple_of(2).then(|| v[d / 2].norm_sqr()),
        )
    }

    /// A vector whose weights equal these, with real nonnegative Fourier
    /// coefficients and `v_0 = 0`.
    pub fn realize(&self) -> Vec<f64> {
        let d = self.d;
        let mut full = vec![Complex64::new(0.0, 0.0); d];
        for (i, s) in self.s.iter().enumerate() {
            let k = i + 1;
            full[k] = Complex64::new(math::sqrt(*s), 0.0);
            full[d - k] = full[k];
        }
        if let Some(h) = self.s_half {
            full[d / 2] = Complex64::new(math::sqrt(h), 0.0);
        }
        idft(&full)
    }
}

/// Sign of the `v_{d/2}` pair term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// `F±` expanded into terms `−w cos(Σ_p c_p t_p)`.
#[derive(Clone, Debug)]
pub struct PhaseSurrogate {
    m: usize,
    terms: Vec<(f64, Vec<i32>)>,
}

impl PhaseSurrogate {
    pub fn new(s: &SpectrumWeights, branch: Branch) -> Result<Self> {
        let d = s.d;
        if branch == Branch::Minus && d % 2 == 1 {
            return Err(Error::InvalidParameter("branch − requires even d".into()));
        }
        let m = s.s.len();
        let signed: Vec<i64> = (1..=m as i64).chain((1..=m as i64).map(|k| -k)).collect();
        let dd = d as i64;
        let weight = |k: i64| s.s[(k.unsigned_abs() - 1) as usize];
        let add = |coef: &mut Vec<i32>, k: i64| {
            coef[(k.unsigned_abs() - 1) as usize] += k.signum() as i32;
        };
        let mut terms = Vec::new();
        for &i in &signed {
            for &j in &signed {
                for &k in &signed {
                    if (i + j + k).rem_euclid(dd) != 0 {
                        continue;
                    }
                    let mut coef = vec![0; m];
                    add(&mut coef, i);
                    add(&mut coef, j);
                    add(&mut coef, k);
                    terms.push((weight(i) * weight(j) * weight(k) / 6.0, coef));
                }
            }
        }
        if let Some(h) = s.s_half {
            for &i in &signed {
                for &j in &signed {
                    if (i + j - dd / 2).rem_euclid(dd) != 0 {
                        continue;
                    }
                    let mut coef = vec![0; m];
                    add(&mut coef, i);
                    add(&mut coef, j);
                    terms.push((branch.sign() * 0.5 * weight(i) * weight(j) * h, coef));
                }
            }
        }
        // Merge terms with equal angle coefficients.
        terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut merged: Vec<(f64, Vec<i32>)> = Vec::with_capacity(terms.len());
        for (w, c) in terms {
            match merged.last_mut() {
                Some(last) if last.1 == c => last.0 += w,
                _ => merged.push((w, c)),
            }
        }
        Ok(PhaseSurrogate { m, terms: merged })
    }

    pub fn num_phases(&self) -> usize {
        self.m
    }

    /// Value and derivatives up to `order` (≤ 2).
    pub fn eval(&self, t: &[f64], order: usize) -> Result<EvalResult> {
        if t.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: t.len(),
            });
        }
        let m = self.m;
        let mut value = 0.0;
        let mut grad = vec![0.0; m];
        let mut hess = Mat::zeros(m, m);
        for (w, c) in &self.terms {
            let angle: f64 = c.iter().zip(t).map(|(ci, ti)| *ci as f64 * ti).sum();
            let (sn, cs) = (math::sin(angle), math::cos(angle));
            value -= w * cs;
            if order >= 1 {
                for p in 0..m {
                    if c[p] != 0 {
                        grad[p] += w * sn * c[p] as f64;
                    }
                }
            }
            if order >= 2 {
                for p in 0..m {
                    if c[p] == 0 {
                        continue;
                    }
                    for q in 0..m {
                        hess[(p, q)] += w * cs * (c[p] * c[q]) as f64;
                    }
                }
            }
        }
        let mut out = EvalResult::value_only(value);
        if order >= 1 {
            out.grad = Some(grad);
        }
        if order >= 2 {
            out.hess = Some(hess);
        }
        Ok(out)
    }
}

/// `F±(t)` with derivatives up to `order`.
pub fn f_pm(s: &SpectrumWeights, t: &[f64], branch: Branch, order: usize) -> Result<EvalResult> {
    PhaseSurrogate::new(s, branch)?.eval(t, order)
}

/// `t^a_i = 2πai/d mod 2π` for `i ∈ I`; the odd-`d` minus variant adds `π`
/// to the first coordinate.
pub fn critical_family(d: usize, a: usize, variant: Branch) -> Result<Vec<f64>> {
    if a >= d {
        return Err(Error::InvalidParameter(format!("a = {a} must be below d = {d}")));
    }
    if variant == Branch::Minus && d.is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "the minus family is defined for odd d".into(),
        ));
    }
    let mut t: Vec<f64> = (1..=num_phases(d))
        .map(|i| TAU * ((a * i) % d) as f64 / d as f64)
        .collect();
    if variant == Branch::Minus {
        if let Some(t0) = t.first_mut() {
            *t0 = wrap_phase(*t0 + core::f64::consts::PI);
        }
    }
    Ok(t)
}

/// The point with the power spectrum, `v_0` and `|v_{d/2}|` of `θ*`, phases
/// `Arg v_{k,*} + t_k`, and `v_{d/2} = ±v_{d/2,*}`.
pub fn theta_from_phase(theta_star: &[f64], t: &[f64], half_sign: Branch) -> Result<Vec<f64>> {
    let mut c = fourier(theta_star, theta_star)?;
    if t.len() != c.v.len() {
        return Err(Error::DimensionMismatch {
            expected: c.v.len(),
            found: t.len(),
        });
    }
    for (z, tk) in c.v.iter_mut().zip(t) {
        *z *= Complex64::new(math::cos(*tk), math::sin(*tk));
    }
    if let Some(h) = c.v_half.as_mut() {
        *h *= half_sign.sign();
    }
    c.t = t.to_vec();
    Ok(inv_fourier(&c))
}

/// One checked point of a certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifiedPoint {
    pub a: usize,
    pub branch: Branch,
    pub t: Vec<f64>,
    pub grad_norm: f64,
    pub min_eig: f64,
    pub trace: f64,
    pub passed: bool,
}

/// Result of a spurious-minimizer construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub passed: bool,
    pub attempts: usize,
    pub points: Vec<CertifiedPoint>,
}

/// Gradient threshold for certification.
pub const CERT_GRAD_TOL: f64 = 1e-9;
/// Relative eigenvalue threshold (times |trace|) for certification.
pub const CERT_EIG_REL: f64 = 1e-10;

fn certify_point(f: &PhaseSurrogate, a: usize, branch: Branch, t: Vec<f64>) -> Result<CertifiedPoint> {
    let r = f.eval(&t, 2)?;
    let grad_norm = linalg::norm(r.grad());
    let hess = r.hess();
    let min_eig = linalg::sym_eigenvalues(hess)?.first().copied().unwrap_or(0.0);
    let trace = hess.trace();
    let passed = grad_norm <= CERT_GRAD_TOL && min_eig > CERT_EIG_REL * trace.abs();
    Ok(CertifiedPoint {
        a,
        branch,
        t,
        grad_norm,
        min_eig,
        trace,
        passed,
    })
}

/// Checks every `t^a` against `F±` for both branches.
pub fn certify_even(s: &SpectrumWeights) -> Result<Certificate> {
    let d = s.d;
    let mut points = Vec::new();
    for branch in [Branch::Plus, Branch::Minus] {
        let f = PhaseSurrogate::new(s, branch)?;
        for a in 0..d {
            points.push(certify_point(&f, a, branch, critical_family(d, a, Branch::Plus)?)?);
        }
    }
    Ok(Certificate {
        passed: points.iter().all(|p| p.passed),
        attempts: 1,
        points,
    })
}

/// Even `d ≥ 6`: `s = (1, …, 1, s_last)`; halves `s_last` (at most 20 times)
/// until every `t^a` is a nondegenerate minimizer of both `F⁺` and `F⁻`.
pub fn spurious_even(d: usize, s_last: f64) -> Result<(SpectrumWeights, Certificate)> {
    if !d.is_multiple_of(2) || d < 6 {
        return Err(Error::InvalidParameter(format!("need even d >= 6, got {d}")));
    }
    let mut last = s_last;
    for attempt in 1..=21 {
        let s = SpectrumWeights::new(d, vec![1.0; num_phases(d)], Some(last))?;
        let mut cert = certify_even(&s)?;
        cert.attempts = attempt;
        if cert.passed {
            return Ok((s, cert));
        }
        last /= 2.0;
    }
    Err(Error::Certification(format!(
        "even construction for d = {d} did not certify"
    )))
}

/// Odd `d = 2m+1` with `m ≥ 26`: `s₁ = √m/2`, `s₂ = (2m−5)/(2s₁) + eps`,
/// `s₃ = delta`, remaining weights 1. Certifies that every `t^{a,−}` is a
/// nondegenerate minimizer of `F⁺`, halving `delta` up to 10 times.
pub fn spurious_odd(m: usize, eps: f64, delta: f64) -> Result<(SpectrumWeights, Certificate)> {
    if m < 26 {
        return Err(Error::InvalidParameter(format!("need m >= 26, got {m}")));
    }
    let d = 2 * m + 1;
    let s1 = math::sqrt(m as f64) / 2.0;
    let s2 = (2.0 * m as f64 - 5.0) / (2.0 * s1) + eps;
    let mut delta = delta;
    for attempt in 1..=11 {
        let mut s = vec![1.0; m];
        s[0] = s1;
        s[1] = s2;
        s[2] = delta;
        let weights = SpectrumWeights::new(d, s, None)?;
        let f = PhaseSurrogate::new(&weights, Branch::Plus)?;
        let mut points = Vec::with_capacity(d);
        for a in 0..d {
            points.push(certify_point(&f, a, Branch::Minus, critical_family(d, a, Branch::Minus)?)?);
        }
        let passed = points.iter().all(|p| p.passed);
        if passed {
            return Ok((
                weights,
                Certificate {
                    passed,
                    attempts: attempt,
                    points,
                },
            ));
        }
        delta /= 2.0;
    }
    Err(Error::Certification(format!(
        "odd construction for m = {m} did not certify"
    )))
}

/// A verified local minimizer of `F±`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMinimum {
    pub t: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub min_eig: f64,
}

/// Cap on grid size for [`phase_minimize`].
pub const MAX_GRID_POINTS: usize = 1_000_000;
/// Dedup tolerance for phase vectors (max circular coordinate distance).
pub const PHASE_DEDUP_TOL: f64 = 1e-4;

/// Surveys local minima of `F±` on the torus. With `|I| ≤ 8` and
/// `grid_per_axis^{|I|} ≤ 10⁶` starts are a regular grid (jittered by a
/// seeded offset below 1% of the spacing); otherwise `grid_per_axis` random
/// starts. Each start runs backtracking gradient descent then Newton steps;
/// survivors are deduplicated modulo 2π and kept only when the Hessian is
/// positive definite.
pub fn phase_minimize(
    s: &SpectrumWeights,
    branch: Branch,
    grid_per_axis: usize,
    seed: u64,
) -> Result<Vec<PhaseMinimum>> {
    let f = PhaseSurrogate::new(s, branch)?;
    let m = f.num_phases();
    if grid_per_axis == 0 {
        return Err(Error::InvalidParameter("grid_per_axis must be positive".into()));
    }
    let grid_total = (grid_per_axis as u128).checked_pow(m as u32);
    let use_grid = m <= 8 && grid_total.is_some_and(|g| g <= MAX_GRID_POINTS as u128);
    let starts: Vec<Vec<f64>> = if use_grid {
        let total = grid_per_axis.pow(m as u32);
        let step = TAU / grid_per_axis as f64;
        (0..total)
            .map(|idx| {
                let mut rng = CounterRng::substream(seed, idx as u64);
                let mut rem = idx;
                (0..m)
                    .map(|_| {
                        let c = rem % grid_per_axis;
                        rem /= grid_per_axis;
                        c as f64 * step + 0.01 * step * (rng.uniform() - 0.5)
                    })
                    .collect()
            })
            .collect()
    } else {
        (0..grid_per_axis)
            .map(|idx| {
                let mut rng = CounterRng::substream(seed, idx as u64);
                (0..m).map(|_| TAU * rng.uniform()).collect()
            })
            .collect()
    };
    let mut found: Vec<PhaseMinimum> = Vec::new();
    for start in starts {
        let Some(t) = descend(&f, start)? else {
            continue;
        };
        let r = f.eval(&t, 2)?;
        let ev = linalg::sym_eigenvalues(r.hess())?;
        let min_eig = ev.first().copied().unwrap_or(0.0);
        let scale = ev.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        let grad_norm = linalg::norm(r.grad());
        if min_eig <= 1e-8 * scale || grad_norm > 1e-8 * scale {
            continue;
        }
        let dup = found.iter().any(|p| {
            p.t.iter()
                .zip(&t)
                .all(|(a, b)| circle_dist(*a, *b) <= PHASE_DEDUP_TOL)
        });
        if !dup {
            found.push(PhaseMinimum {
                t,
                value: r.value,
                grad_norm,
                min_eig,
            });
        }
    }
    found.sort_by(|a, b| {
        a.t.iter()
            .zip(&b.t)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    Ok(found)
}

fn descend(f: &PhaseSurrogate, mut t: Vec<f64>) -> Result<Option<Vec<f64>>> {
    let mut r = f.eval(&t, 1)?;
    let mut step = 1.0;
    for _ in 0..5000 {
        let g = r.grad().to_vec();
        let gn2 = linalg::dot(&g, &g);
        if gn2.sqrt() < 1e-9 {
            break;
        }
        // Armijo backtracking.
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = t.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
            let tr = f.eval(&trial, 1)?;
            if tr.value <= r.value - 1e-4 * step * gn2 {
                t = trial;
                r = tr;
                accepted = true;
                step *= 2.0;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    // Newton polish.
    for _ in 0..20 {
        let r = f.eval(&t, 2)?;
        let g = r.grad();
        if linalg::norm(g) < 1e-14 {
            break;
        }
        match linalg::solve(r.hess(), g) {
            Ok(dx) => t.iter_mut().zip(&dx).for_each(|(x, d)| *x -= d),
            Err(_) => return Ok(None),
        }
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Ok(None);
    }
    Ok(Some(t.into_iter().map(wrap_phase).collect()))
}
