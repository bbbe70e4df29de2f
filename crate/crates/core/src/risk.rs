//! Empirical and population risks with derivatives.
//!
//! For observations `Y_i` the empirical risk is
//! `R_n(θ) = ‖θ‖²/2σ² − (1/n) Σ_i log E_g exp(⟨Y_i, gθ⟩/σ²)`.
//! Its derivatives are posterior cumulants of `gᵀY_i`: the gradient is
//! `(θ − avg E[gᵀY])/σ²`, the Hessian `(Id − avg Cov[gᵀY]/σ²)/σ²`, and for
//! `ℓ ≥ 3` the order-ℓ derivative is `−σ^{−2ℓ} avg κ^ℓ[gᵀY]`.
//! The population risk replaces `Y_i` by `θ* + σε` and averages over `ε`,
//! either by Monte Carlo with a fixed noise stream or, for `d ≤ 2`, by
//! Gauss–Hermite quadrature.

use alloc::vec;
use alloc::vec::Vec;

use crate::cumulants::{self, FiniteLaw, SymTensor};
use crate::error::{Error, Result};
use crate::groups::GroupAction;
use crate::linalg::{self, Mat};
use crate::math;
use crate::model::{self, Dataset};
use crate::sum;
use wide::f64x4;

/// Highest derivative order available.
pub const MAX_ORDER: usize = 4;

/// Value and optional derivatives at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub value: f64,
    pub grad: Option<Vec<f64>>,
    pub hess: Option<Mat>,
    pub tensor3: Option<SymTensor>,
    pub tensor4: Option<SymTensor>,
    /// Monte Carlo standard errors, when estimated.
    pub std_err: Option<StdErr>,
}

impl EvalResult {
    pub fn value_only(value: f64) -> Self {
        EvalResult {
            value,
            grad: None,
            hess: None,
            tensor3: None,
            tensor4: None,
            std_err: None,
        }
    }

    pub fn grad(&self) -> &[f64] {
        self.grad.as_deref().expect("gradient was not requested")
    }

    pub fn hess(&self) -> &Mat {
        self.hess.as_ref().expect("hessian was not requested")
    }
}

/// Standard errors of a Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct StdErr {
    pub value: f64,
    pub grad: Option<Vec<f64>>,
    pub hess: Option<Mat>,
}

/// Posterior law `p(g | y, θ) ∝ exp(⟨y, gθ⟩/σ²)`, stabilized by subtracting the
/// largest exponent.
pub fn posterior_weights(g: &GroupAction, theta: &[f64], y: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_len(g.dim(), theta)?;
    check_len(g.dim(), y)?;
    let s2 = sigma * sigma;
    let mut w: Vec<f64> = g
        .elements()
        .iter()
        .map(|e| linalg::dot(y, &e.matvec(theta)) / s2)
        .collect();
    softmax_in_place(&mut w)?;
    Ok(w)
}

/// Replaces exponents by softmax weights and returns `log Σ exp`.
fn softmax_in_place(s: &mut [f64]) -> Result<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("posterior exponent".into()));
    }
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = math::exp(*v - max);
        total += *v;
    }
    let inv = 1.0 / total;
    for v in s.iter_mut() {
        *v *= inv;
    }
    Ok(max + math::ln(total))
}

fn check_len(d: usize, v: &[f64]) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("input vector".into()));
    }
    Ok(())
}

/// Observations with optional probability weights (uniform `1/n` otherwise).
#[derive(Clone, Copy, Debug)]
struct Samples<'a> {
    d: usize,
    y: &'a [f64],
    w: Option<&'a [f64]>,
}

impl<'a> Samples<'a> {
    fn n(&self) -> usize {
        self.y.len() / self.d
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [f64] {
        &self.y[i * self.d..(i + 1) * self.d]
    }

    /// Per-item weights; the uniform case returns the constant `1/n` so
    /// the hot loop avoids a division.
    fn weights(&self) -> impl Fn(usize) -> f64 + 'a {
        let w = self.w;
        let uniform = 1.0 / self.n() as f64;
        move |i| match w {
            Some(w) => w[i],
            None => uniform,
        }
    }
}

/// Core evaluator shared by the empirical and population risks.
fn evaluate(
    g: &GroupAction,
    samples: Samples<'_>,
    sigma: f64,
    theta: &[f64],
    order: usize,
    with_se: bool,
) -> Result<EvalResult> {
    let d = g.dim();
    check_len(d, theta)?;
    if order > MAX_ORDER {
        return Err(Error::CapExceeded {
            what: "derivative order",
            size: order,
            cap: MAX_ORDER,
        });
    }
    let k = g.order();
    let s2 = sigma * sigma;
    let ln_k = math::ln(k as f64);
    // Rows g θ / σ², so that exponents are plain dot products.
    let table: Vec<f64> = g
        .elements()
        .iter()
        .flat_map(|e| e.matvec(theta))
        .map(|v| v / s2)
        .collect();
    let theta_sq = linalg::dot(theta, theta);

    let want_grad = order >= 1;
    let (acc, failed) = first_pass(samples, &table, k, ln_k, want_grad);
    if failed {
        return Err(Error::NonFinite("posterior exponent".into()));
    }
    let value = theta_sq / (2.0 * s2) + acc[0];
    let mut out = EvalResult::value_only(value);
    if !value.is_finite() {
        return Err(Error::NonFinite("risk value".into()));
    }
    if want_grad {
        let mut mean_post = vec![0.0; d];
        for (gi, e) in g.elements().iter().enumerate() {
            let wg = &acc[2 + gi * d..2 + (gi + 1) * d];
            linalg::axpy(1.0, &e.tr_matvec(wg), &mut mean_post);
        }
        out.grad = Some(
            theta
                .iter()
                .zip(&mean_post)
                .map(|(t, m)| (t - m) / s2)
                .collect(),
        );
    }
    if order >= 2 || with_se {
        second_order(g, samples, sigma, theta, order, with_se, acc[0], acc[1], &mut out)?;
    }
    Ok(out)
}

/// Samples per block in [`first_pass`]; blocks are stored transposed so the
/// inner loops run over samples and vectorize.
const BLOCK: usize = 8;

fn lane_array(v: &[f64]) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

/// Value and gradient accumulation: `W_g = Σ w_i p_ig Y_i`, from which the
/// posterior mean average is `Σ_g gᵀ W_g`. Width: value, value², then `K·d`.
fn first_pass(
    samples: Samples<'_>,
    table: &[f64],
    k: usize,
    ln_k: f64,
    want_grad: bool,
) -> (Vec<f64>, bool) {
    let d = samples.d;
    let weight = samples.weights();
    let mut failed = false;
    let width = 2 + if want_grad { k * d } else { 0 };
    let mut yt = vec![0.0; d * BLOCK];
    let mut s = vec![0.0; k * BLOCK];
    let acc = sum::chunked_ranges(samples.n(), width, |start, end, acc| {
        let mut i0 = start;
        while i0 < end && !failed {
            let m = BLOCK.min(end - i0);
            for (j, row) in yt.chunks_exact_mut(BLOCK).enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = if b < m { samples.y[(i0 + b) * d + j] } else { 0.0 };
                }
            }
            let mut max = [f64::NEG_INFINITY; BLOCK];
            for (sg, t) in s.chunks_exact_mut(BLOCK).zip(table.chunks_exact(d)) {
                let mut e = [0.0; BLOCK];
                for (tj, row) in t.iter().zip(yt.chunks_exact(BLOCK)) {
                    for b in 0..BLOCK {
                        e[b] += tj * row[b];
                    }
                }
                for b in 0..BLOCK {
                    max[b] = max[b].max(e[b]);
                }
                sg.copy_from_slice(&e);
            }
            if max[..m].iter().any(|v| !v.is_finite()) {
                failed = true;
                return;
            }
            // Unnormalized weights; the normalization folds into `c`.
            let mut total = [0.0; BLOCK];
            for sg in s.chunks_exact_mut(BLOCK) {
                for (lane, top) in sg.chunks_exact_mut(4).zip(max.chunks_exact(4)) {
                    let v = (f64x4::from(lane_array(lane)) - f64x4::from(lane_array(top))).exp();
                    lane.copy_from_slice(&v.to_array());
                }
                for b in 0..BLOCK {
                    if b >= m {
                        sg[b] = 0.0;
                    }
                    total[b] += sg[b];
                }
            }
            let mut c = [0.0; BLOCK];
            for b in 0..m {
                let w = weight(i0 + b);
                let f = ln_k - max[b] - math::ln(total[b]);
                acc[0] += w * f;
                acc[1] += w * f * f;
                c[b] = w / total[b];
            }
            if want_grad {
                for (sg, dst) in s.chunks_exact(BLOCK).zip(acc[2..].chunks_exact_mut(d)) {
                    let mut p = [0.0; BLOCK];
                    for b in 0..m {
                        p[b] = c[b] * sg[b];
                    }
                    for (a, row) in dst.iter_mut().zip(yt.chunks_exact(BLOCK)) {
                        let mut t = 0.0;
                        for b in 0..BLOCK {
                            t += p[b] * row[b];
                        }
                        *a += t;
                    }
                }
            }
            i0 += m;
        }
    });
    (acc, failed)
}

/// Hessian, higher tensors and standard errors, which need the per-sample
/// back-rotated observations `u_g = gᵀY`.
#[allow(clippy::too_many_arguments)]
fn second_order(
    g: &GroupAction,
    samples: Samples<'_>,
    sigma: f64,
    theta: &[f64],
    order: usize,
    with_se: bool,
    mean_f: f64,
    mean_f2: f64,
    out: &mut EvalResult,
) -> Result<()> {
    let d = g.dim();
    let k = g.order();
    let n = samples.n();
    let weight = samples.weights();
    let s2 = sigma * sigma;
    let want_hess = order >= 2;
    let t3 = if order >= 3 { cumulants::SymTensor::zeros(3, d)?.as_slice().len() } else { 0 };
    let t4 = if order >= 4 { cumulants::SymTensor::zeros(4, d)?.as_slice().len() } else { 0 };
    // Layout: cov (d²), grad moments Σw m, Σw m² (2d), cov² (d²), t3, t4.
    let dd = d * d;
    let width = dd + 2 * d + dd + t3 + t4;
    let mut u = vec![0.0; k * d];
    let mut p = vec![0.0; k];
    let mut m = vec![0.0; d];
    let mut cov = vec![0.0; dd];
    let mut err = None;
    let acc = sum::chunked_sum(n, width, |i, acc| {
        let y = samples.row(i);
        for (gi, e) in g.elements().iter().enumerate() {
            let ug = &mut u[gi * d..(gi + 1) * d];
            for (c, slot) in ug.iter_mut().enumerate() {
                let mut v = 0.0;
                for r in 0..d {
                    v += e[(r, c)] * y[r];
                }
                *slot = v;
            }
            p[gi] = linalg::dot(ug, theta) / s2;
        }
        if softmax_in_place(&mut p).is_err() {
            err = Some(Error::NonFinite("posterior exponent".into()));
            return;
        }
        m.iter_mut().for_each(|v| *v = 0.0);
        for gi in 0..k {
            linalg::axpy(p[gi], &u[gi * d..(gi + 1) * d], &mut m);
        }
        let w = weight(i);
        if want_hess || with_se {
            for a in 0..d {
                for b in 0..=a {
                    let mut v = 0.0;
                    for gi in 0..k {
                        v += p[gi] * u[gi * d + a] * u[gi * d + b];
                    }
                    v -= m[a] * m[b];
                    cov[a * d + b] = v;
                    cov[b * d + a] = v;
                }
            }
            for (a, c) in acc[..dd].iter_mut().zip(&cov) {
                *a += w * c;
            }
            for (a, c) in acc[dd + 2 * d..2 * dd + 2 * d].iter_mut().zip(&cov) {
                *a += w * c * c;
            }
        }
        for j in 0..d {
            acc[dd + j] += w * m[j];
            acc[dd + d + j] += w * m[j] * m[j];
        }
        if t3 + t4 > 0 {
            let law = match FiniteLaw::new(d, u.clone(), p.clone()) {
                Ok(l) => l,
                Err(e) => {
                    err = Some(e);
                    return;
                }
            };
            let base = 2 * dd + 2 * d;
            for (l, len, off) in [(3, t3, base), (4, t4, base + t3)] {
                if len == 0 {
                    continue;
                }
                match cumulants::cumulant_tensor(&law, l) {
                    Ok(t) => linalg::axpy(w, t.as_slice(), &mut acc[off..off + len]),
                    Err(e) => err = Some(e),
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if want_hess {
        let mut h = Mat::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let id = if a == b { 1.0 } else { 0.0 };
                h[(a, b)] = (id - acc[a * d + b] / s2) / s2;
            }
        }
        h.symmetrize();
        out.hess = Some(h);
    }
    let base = 2 * dd + 2 * d;
    if t3 > 0 {
        let mut t = SymTensor::zeros(3, d)?;
        let scale = -1.0 / (s2 * s2 * s2);
        for (dst, src) in t.as_mut_slice().iter_mut().zip(&acc[base..base + t3]) {
            *dst = scale * src;
        }
        out.tensor3 = Some(t);
    }
    if t4 > 0 {
        let mut t = SymTensor::zeros(4, d)?;
        let scale = -1.0 / (s2 * s2 * s2 * s2);
        for (dst, src) in t.as_mut_slice().iter_mut().zip(&acc[base + t3..base + t3 + t4]) {
            *dst = scale * src;
        }
        out.tensor4 = Some(t);
    }
    if with_se {
        // Equal-weight Monte Carlo: se = sqrt(Var/N).
        let nf = n as f64;
        let se = |mean: f64, mean_sq: f64| math::sqrt(((mean_sq - mean * mean).max(0.0)) / nf);
        let grad_se = (0..d)
            .map(|j| se(acc[dd + j], acc[dd + d + j]) / s2)
            .collect();
        let hess_se = want_hess.then(|| {
            let mut h = Mat::zeros(d, d);
            for a in 0..dd {
                h.as_mut_slice()[a] = se(acc[a], acc[dd + 2 * d + a]) / (s2 * s2);
            }
            h
        });
        out.std_err = Some(StdErr {
            value: se(mean_f, mean_f2),
            grad: (order >= 1).then_some(grad_se),
            hess: hess_se,
        });
    }
    Ok(())
}

/// The empirical risk of a dataset under a group action.
#[derive(Clone, Copy, Debug)]
pub struct RiskModel<'a> {
    group: &'a GroupAction,
    data: &'a Dataset,
}

impl<'a> RiskModel<'a> {
    pub fn new(group: &'a GroupAction, data: &'a Dataset) -> Result<Self> {
        if group.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: group.dim(),
                found: data.dim(),
            });
        }
        Ok(RiskModel { group, data })
    }

    pub fn group(&self) -> &'a GroupAction {
        self.group
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn sigma(&self) -> f64 {
        self.data.sigma()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    fn samples(&self) -> Samples<'a> {
        Samples {
            d: self.data.dim(),
            y: self.data.values(),
            w: None,
        }
    }

    /// Value and derivatives up to `order` (0 = value … 4 = fourth tensor).
    pub fn eval(&self, theta: &[f64], order: usize) -> Result<EvalResult> {
        evaluate(self.group, self.samples(), self.sigma(), theta, order, false)
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.eval(theta, 0)?.value)
    }

    /// `(1/n) Σ_i E_{g|Y_i,θ}[gᵀY_i]`, the EM update, computed directly from
    /// the posterior weights.
    pub fn posterior_mean(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let g = self.group;
        let d = g.dim();
        check_len(d, theta)?;
        let s2 = self.sigma() * self.sigma();
        // Rows g θ / σ², so that exponents are plain dot products.
    let table: Vec<f64> = g
        .elements()
        .iter()
        .flat_map(|e| e.matvec(theta))
        .map(|v| v / s2)
        .collect();
        let samples = self.samples();
        let n = samples.n();
        let mut s = vec![0.0; g.order()];
        let mut failed = false;
        let acc = sum::chunked_sum(n, d, |i, acc| {
            let y = samples.row(i);
            for (sg, t) in s.iter_mut().zip(table.chunks_exact(d)) {
                *sg = linalg::dot(y, t);
            }
            if softmax_in_place(&mut s).is_err() {
                failed = true;
                return;
            }
            for (p, e) in s.iter().zip(g.elements()) {
                let u = e.tr_matvec(y);
                linalg::axpy(*p / n as f64, &u, acc);
            }
        });
        if failed {
            return Err(Error::NonFinite("posterior exponent".into()));
        }
        Ok(acc)
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(theta, 1)?.grad.unwrap_or_default())
    }

    pub fn hessian(&self, theta: &[f64]) -> Result<Mat> {
        self.eval(theta, 2)?
            .hess
            .ok_or_else(|| Error::InvalidParameter("hessian missing".into()))
    }
}

/// How the population expectation over `ε` is computed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Expectation {
    /// Monte Carlo with `n` draws from the counter stream `seed`.
    MonteCarlo { n: usize, seed: u64 },
    /// Tensor Gauss–Hermite quadrature with `order` nodes per axis (`d ≤ 2`).
    Quadrature { order: usize },
}

/// Population risk `R(θ)` with a fixed set of noise draws (common random
/// numbers) or quadrature nodes, reused for every `θ`.
#[derive(Clone, Debug)]
pub struct PopulationRisk<'a> {
    group: &'a GroupAction,
    sigma: f64,
    theta_star: Vec<f64>,
    y: Vec<f64>,
    weights: Option<Vec<f64>>,
    monte_carlo: bool,
}

/// Cap on the number of quadrature nodes.
pub const MAX_QUADRATURE_NODES: usize = 1_000_000;

impl<'a> PopulationRisk<'a> {
    pub fn new(
        group: &'a GroupAction,
        theta_star: &[f64],
        sigma: f64,
        method: Expectation,
    ) -> Result<Self> {
        let d = group.dim();
        check_len(d, theta_star)?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        let (eps, weights, monte_carlo) = match method {
            Expectation::MonteCarlo { n, seed } => {
                if n == 0 {
                    return Err(Error::InvalidParameter("Monte Carlo needs N >= 1".into()));
                }
                (model::noise_sample(d, n, seed), None, true)
            }
            Expectation::Quadrature { order } => {
                if d > 2 {
                    return Err(Error::InvalidParameter(
                        "quadrature is available only for d <= 2".into(),
                    ));
                }
                let (x, w) = gauss_hermite(order)?;
                let nodes = x.len().pow(d as u32);
                if nodes > MAX_QUADRATURE_NODES {
                    return Err(Error::CapExceeded {
                        what: "quadrature nodes",
                        size: nodes,
                        cap: MAX_QUADRATURE_NODES,
                    });
                }
                let mut eps = Vec::with_capacity(nodes * d);
                let mut ws = Vec::with_capacity(nodes);
                if d == 1 {
                    eps.extend_from_slice(&x);
                    ws.extend_from_slice(&w);
                } else {
                    for (xa, wa) in x.iter().zip(&w) {
                        for (xb, wb) in x.iter().zip(&w) {
                            eps.push(*xa);
                            eps.push(*xb);
                            ws.push(wa * wb);
                        }
                    }
                }
                (eps, Some(ws), false)
            }
        };
        let y = eps
            .chunks_exact(d)
            .flat_map(|e| e.iter().zip(theta_star).map(|(e, t)| t + sigma * e))
            .collect();
        Ok(PopulationRisk {
            group,
            sigma,
            theta_star: theta_star.to_vec(),
            y,
            weights,
            monte_carlo,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    /// Noise-perturbed points `θ* + σε_j`.
    pub fn points(&self) -> &[f64] {
        &self.y
    }

    fn samples(&self) -> Samples<'_> {
        Samples {
            d: self.group.dim(),
            y: &self.y,
            w: self.weights.as_deref(),
        }
    }

    /// Value and derivatives; Monte Carlo estimates carry standard errors.
    pub fn eval(&self, theta: &[f64], order: usize) -> Result<EvalResult> {
        evaluate(self.group, self.samples(), self.sigma, theta, order, self.monte_carlo)
    }
}

/// Gauss–Hermite nodes and weights for the standard normal law
/// (probabilists' convention, weights summing to 1), by Golub–Welsch.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be positive".into()));
    }
    let mut j = Mat::zeros(order, order);
    for k in 1..order {
        let b = math::sqrt(k as f64);
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = linalg::sym_eigen(&j)?;
    let nodes = eig.values.clone();
    let mut weights: Vec<f64> = (0..order)
        .map(|c| eig.vectors[(0, c)] * eig.vectors[(0, c)])
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}
