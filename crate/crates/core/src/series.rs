//! The high-noise expansion `R(θ) ≈ Σ_ℓ σ^{−2ℓ} S_ℓ(θ)`.
//!
//! `S_ℓ` is a signed sum over set partitions of expectations `M_{ℓ,m}(π)` of
//! products of inner products between independently rotated copies of `θ`.
//! Closed forms are provided for mean-zero groups (`ℓ ≤ 3`) and, through the
//! kernel decomposition, for every group. The empirical terms `P_ℓ(ε, θ, θ*)`
//! are the coefficients of `σ^{−ℓ}` in the per-sample risk and give a
//! low-variance estimate of the truncation error `R − R^k`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cumulants::{self, PartitionTable, SetPartition, SymTensor};
use crate::error::{Error, Result};
use crate::fd;
use crate::groups::{self, GroupAction, KernelDecomposition};
use crate::linalg::{self, Mat};
use crate::math;
use crate::model;
use crate::risk::EvalResult;
use crate::sum;

/// Highest `ℓ` for the generic partition sum.
pub const MAX_GENERIC_ORDER: usize = 4;
/// Highest `ℓ` with a closed form.
pub const MAX_CLOSED_ORDER: usize = 3;
/// Cap on the size of any intermediate table in the `M_{ℓ,m}` sums.
pub const MAX_TUPLE_TABLE: usize = 10_000_000;
/// Highest order of the empirical terms `P_ℓ`.
pub const MAX_EMPIRICAL_ORDER: usize = cumulants::MAX_CUMULANT_ORDER;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn check_dims(g: &GroupAction, v: &[f64]) -> Result<()> {
    if v.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: v.len(),
        });
    }
    Ok(())
}

/// `T_ℓ(θ) = E_g[(gθ)^{⊗ℓ}]`.
pub fn moment_tensor(g: &GroupAction, theta: &[f64], l: usize) -> Result<SymTensor> {
    check_dims(g, theta)?;
    if l > cumulants::MAX_TENSOR_ORDER {
        return Err(Error::CapExceeded {
            what: "moment tensor order",
            size: l,
            cap: cumulants::MAX_TENSOR_ORDER,
        });
    }
    let d = g.dim();
    let mut t = SymTensor::zeros(l, d)?;
    let pts = g.orbit_points(theta);
    let kf = g.order() as f64;
    cumulants::for_each_sorted_index(l, d, |idx| {
        let v: f64 = pts
            .iter()
            .map(|p| idx.iter().map(|&i| p[i]).product::<f64>())
            .sum::<f64>()
            / kf;
        cumulants::scatter_symmetric(&mut t, idx, v);
    });
    Ok(t)
}

/// `‖T_ℓ(θ) − T_ℓ(θ*)‖²_HS`.
pub fn moment_objective(g: &GroupAction, theta: &[f64], theta_star: &[f64], l: usize) -> Result<f64> {
    let a = moment_tensor(g, theta, l)?;
    let b = moment_tensor(g, theta_star, l)?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Inner-product tables for one `θ`: `A[a][b] = ⟨g_aθ, g_bθ⟩` and
/// `c[a] = ⟨θ*, g_aθ⟩`.
struct Gram {
    k: usize,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl Gram {
    fn new(g: &GroupAction, theta: &[f64], theta_star: &[f64]) -> Self {
        let pts = g.orbit_points(theta);
        let k = pts.len();
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = linalg::dot(&pts[i], &pts[j]);
                a[i * k + j] = v;
                a[j * k + i] = v;
            }
        }
        let c = pts.iter().map(|p| linalg::dot(theta_star, p)).collect();
        Gram { k, a, c }
    }
}

/// A table over the joint values of some block variables.
struct Factor {
    vars: Vec<usize>,
    table: Vec<f64>,
}

/// `E` over independent uniform block variables of a product of factors,
/// by eliminating one variable at a time (each elimination averages over it).
fn expect_product(mut factors: Vec<Factor>, nvars: usize, k: usize) -> Result<f64> {
    let mut remaining: Vec<usize> = (0..nvars).collect();
    while !remaining.is_empty() {
        // Eliminate the variable whose merged factor is smallest.
        let mut best: Option<(usize, Vec<usize>)> = None;
        for (pos, &v) in remaining.iter().enumerate() {
            let mut union: Vec<usize> = Vec::new();
            for f in factors.iter().filter(|f| f.vars.contains(&v)) {
                for &u in &f.vars {
                    if !union.contains(&u) {
                        union.push(u);
                    }
                }
            }
            if best.as_ref().is_none_or(|(_, b)| union.len() < b.len()) {
                best = Some((pos, union));
            }
        }
        let (pos, mut union) = best.expect("nonempty");
        let v = remaining.remove(pos);
        if union.is_empty() {
            // No factor involves v: averaging a constant.
            continue;
        }
        union.sort_unstable();
        let size = k.checked_pow(union.len() as u32).unwrap_or(usize::MAX);
        if size > MAX_TUPLE_TABLE {
            return Err(Error::CapExceeded {
                what: "group tuple table",
                size,
                cap: MAX_TUPLE_TABLE,
            });
        }
        let (with, without): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = without;
        let out_vars: Vec<usize> = union.iter().copied().filter(|&u| u != v).collect();
        let positions: Vec<Vec<usize>> = with
            .iter()
            .map(|f| {
                f.vars
                    .iter()
                    .map(|u| union.iter().position(|x| x == u).unwrap())
                    .collect()
            })
            .collect();
        let out_pos: Vec<usize> = out_vars
            .iter()
            .map(|u| union.iter().position(|x| x == u).unwrap())
            .collect();
        let mut out = vec![0.0; k.pow(out_vars.len() as u32)];
        let mut assign = vec![0usize; union.len()];
        let inv_k = 1.0 / k as f64;
        'tuples: loop {
            let mut prod = inv_k;
            for (f, pos) in with.iter().zip(&positions) {
                let idx = pos.iter().fold(0, |acc, &p| acc * k + assign[p]);
                prod *= f.table[idx];
            }
            let oidx = out_pos.iter().fold(0, |acc, &p| acc * k + assign[p]);
            out[oidx] += prod;
            let mut p = union.len();
            loop {
                if p == 0 {
                    break 'tuples;
                }
                p -= 1;
                assign[p] += 1;
                if assign[p] < k {
                    break;
                }
                assign[p] = 0;
            }
        }
        factors.push(Factor {
            vars: out_vars,
            table: out,
        });
    }
    Ok(factors.iter().map(|f| f.table[0]).product())
}

fn m_lm_tables(gram: &Gram, pi: &SetPartition, m: usize) -> Result<f64> {
    let n = pi.n();
    if 2 * m > n {
        return Err(Error::InvalidParameter(format!(
            "partition of {n} elements cannot hold {m} pairs"
        )));
    }
    let k = gram.k;
    let mut factors = Vec::with_capacity(n - m);
    for j in 0..m {
        let (b1, b2) = (pi.block_of(2 * j), pi.block_of(2 * j + 1));
        if b1 == b2 {
            let diag = (0..k).map(|a| gram.a[a * k + a]).collect();
            factors.push(Factor {
                vars: vec![b1],
                table: diag,
            });
        } else {
            // A is symmetric, so the layout is the same for either order.
            factors.push(Factor {
                vars: vec![b1.min(b2), b1.max(b2)],
                table: gram.a.clone(),
            });
        }
    }
    for j in 2 * m..n {
        factors.push(Factor {
            vars: vec![pi.block_of(j)],
            table: gram.c.clone(),
        });
    }
    expect_product(factors, pi.num_blocks(), k)
}

/// `M_{ℓ,m}(π | θ, θ*)` for a partition of `[ℓ+m]`; the first `2m` elements
/// form the pairs.
pub fn m_lm(
    g: &GroupAction,
    pi: &SetPartition,
    m: usize,
    theta: &[f64],
    theta_star: &[f64],
) -> Result<f64> {
    check_dims(g, theta)?;
    check_dims(g, theta_star)?;
    if pi.n() > 2 * MAX_GENERIC_ORDER {
        return Err(Error::CapExceeded {
            what: "partition ground set for M",
            size: pi.n(),
            cap: 2 * MAX_GENERIC_ORDER,
        });
    }
    m_lm_tables(&Gram::new(g, theta, theta_star), pi, m)
}

/// How `S_ℓ` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesMethod {
    /// The signed partition sum.
    Generic,
    /// Closed forms valid when `E_g[g] = 0` (`ℓ ≤ 3`).
    MeanZero,
    /// Kernel decomposition into a fixed part and a mean-zero part, then
    /// closed forms (`ℓ ≤ 3`, any group).
    Decomposed,
}

/// Value, gradient and Hessian of a scalar function at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Mat,
}

impl Jet {
    fn zero(d: usize) -> Self {
        Jet {
            value: 0.0,
            grad: vec![0.0; d],
            hess: Mat::zeros(d, d),
        }
    }

    fn constant(d: usize, v: f64) -> Self {
        let mut j = Jet::zero(d);
        j.value = v;
        j
    }

    /// `aᵀθ`.
    fn linear(a: &[f64], theta: &[f64]) -> Self {
        Jet {
            value: linalg::dot(a, theta),
            grad: a.to_vec(),
            hess: Mat::zeros(a.len(), a.len()),
        }
    }

    /// `θᵀ M θ` with `M` symmetric.
    fn quadratic(m: &Mat, theta: &[f64]) -> Self {
        let mt = m.matvec(theta);
        Jet {
            value: linalg::dot(theta, &mt),
            grad: linalg::scaled(&mt, 2.0),
            hess: m.scale(2.0),
        }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let d = self.grad.len();
        let mut hess = self.hess.scale(o.value);
        hess.add_scaled(self.value, &o.hess);
        for i in 0..d {
            for j in 0..d {
                hess[(i, j)] += self.grad[i] * o.grad[j] + o.grad[i] * self.grad[j];
            }
        }
        Jet {
            value: self.value * o.value,
            grad: self
                .grad
                .iter()
                .zip(&o.grad)
                .map(|(a, b)| a * o.value + b * self.value)
                .collect(),
            hess,
        }
    }

    fn add_scaled(&mut self, s: f64, o: &Jet) {
        self.value += s * o.value;
        linalg::axpy(s, &o.grad, &mut self.grad);
        self.hess.add_scaled(s, &o.hess);
    }

    /// Composition with the linear map `θ ↦ Vᵀθ`: `V grad`, `V hess Vᵀ`.
    fn pull_back(&self, v: &Mat) -> Jet {
        Jet {
            value: self.value,
            grad: v.matvec(&self.grad),
            hess: v.matmul(&self.hess).matmul(&v.transpose()),
        }
    }
}

fn sym(m: &Mat) -> Mat {
    let mut s = m.clone();
    s.symmetrize();
    s
}

/// Closed-form `S_ℓ` for a mean-zero group as a jet (`ℓ ≤ 3`).
fn meanzero_jet(g: &GroupAction, theta: &[f64], theta_star: &[f64], l: usize) -> Result<Jet> {
    let d = g.dim();
    let kf = g.order() as f64;
    match l {
        1 => Ok(Jet::zero(d)),
        2 | 3 => {
            let c: Vec<Jet> = g
                .elements()
                .iter()
                .map(|e| Jet::linear(&e.tr_matvec(theta_star), theta))
                .collect();
            let q: Vec<Jet> = g
                .elements()
                .iter()
                .map(|e| Jet::quadratic(&sym(e), theta))
                .collect();
            let mut out = Jet::zero(d);
            if l == 2 {
                for (cg, qg) in c.iter().zip(&q) {
                    out.add_scaled(-0.5 / kf, &cg.mul(cg));
                    out.add_scaled(0.25 / kf, &qg.mul(qg));
                }
                return Ok(out);
            }
            for (cg, qg) in c.iter().zip(&q) {
                out.add_scaled(-1.0 / (6.0 * kf), &cg.mul(cg).mul(cg));
                out.add_scaled(1.0 / (12.0 * kf), &qg.mul(qg).mul(qg));
            }
            let k2 = kf * kf;
            for (a, ea) in g.elements().iter().enumerate() {
                for (b, eb) in g.elements().iter().enumerate().skip(a) {
                    let w = if a == b { 1.0 } else { 2.0 };
                    let aab = Jet::quadratic(&sym(&ea.transpose().matmul(eb)), theta);
                    out.add_scaled(w * 0.5 / k2, &aab.mul(&c[a].mul(&c[b])));
                    out.add_scaled(-w / (3.0 * k2), &aab.mul(&q[a].mul(&q[b])));
                }
            }
            Ok(out)
        }
        _ => Err(Error::ClosedFormUnavailable(format!(
            "no closed form for S_{l}; available for l <= {MAX_CLOSED_ORDER}"
        ))),
    }
}

/// Closed-form `S_ℓ` value for a mean-zero group (`ℓ ≤ 3`).
fn meanzero_value(g: &GroupAction, theta: &[f64], theta_star: &[f64], l: usize) -> Result<f64> {
    let kf = g.order() as f64;
    match l {
        1 => Ok(0.0),
        2 | 3 => {
            let pts = g.orbit_points(theta);
            let c: Vec<f64> = pts.iter().map(|p| linalg::dot(theta_star, p)).collect();
            let q: Vec<f64> = pts.iter().map(|p| linalg::dot(theta, p)).collect();
            if l == 2 {
                let s: f64 = c.iter().zip(&q).map(|(c, q)| -0.5 * c * c + 0.25 * q * q).sum();
                return Ok(s / kf);
            }
            let mut single = 0.0;
            for (c, q) in c.iter().zip(&q) {
                single += -c * c * c / 6.0 + q * q * q / 12.0;
            }
            let mut pair = 0.0;
            for a in 0..pts.len() {
                for b in 0..pts.len() {
                    let aab = linalg::dot(&pts[a], &pts[b]);
                    pair += aab * (0.5 * c[a] * c[b] - q[a] * q[b] / 3.0);
                }
            }
            Ok(single / kf + pair / (kf * kf))
        }
        _ => Err(Error::ClosedFormUnavailable(format!(
            "no closed form for S_{l}; available for l <= {MAX_CLOSED_ORDER}"
        ))),
    }
}

/// Closed form `S_ℓ` for mean-zero groups; errors for other groups.
pub fn s_meanzero(g: &GroupAction, theta: &[f64], theta_star: &[f64], l: usize) -> Result<f64> {
    check_dims(g, theta)?;
    check_dims(g, theta_star)?;
    if !g.is_mean_zero(1e-10) {
        return Err(Error::ClosedFormUnavailable(format!(
            "{} is not mean-zero",
            g.name()
        )));
    }
    meanzero_value(g, theta, theta_star, l)
}

/// `S₂ = ‖θ‖⁴/8 − ‖θ‖²‖θ*‖²/4` for planar rotation groups of order ≥ 3.
pub fn rotations_s2(theta: &[f64], theta_star: &[f64]) -> f64 {
    let r2 = linalg::dot(theta, theta);
    let rs2 = linalg::dot(theta_star, theta_star);
    r2 * r2 / 8.0 - r2 * rs2 / 4.0
}

/// The phase-dependent part of `S_K` for `rotations(K)`:
/// `−‖θ‖^K ‖θ*‖^K cos(K t) / (2^{K−1} K!)` with `t` the angle from `θ*` to `θ`.
pub fn rotations_phase_term(k: usize, theta: &[f64], theta_star: &[f64]) -> f64 {
    let r = linalg::norm(theta);
    let rs = linalg::norm(theta_star);
    let t = math::atan2(theta[1], theta[0]) - math::atan2(theta_star[1], theta_star[0]);
    let kk = k as i32;
    -math::powi(r * rs, kk) * math::cos(k as f64 * t) / (math::powi(2.0, kk - 1) * factorial(k))
}

/// Evaluator for `S_ℓ` and `R^k` of one `(G, θ*)` pair, holding the
/// partition lists and the kernel decomposition.
#[derive(Clone, Debug)]
pub struct SeriesExpansion<'a> {
    group: &'a GroupAction,
    theta_star: Vec<f64>,
    /// Per ℓ: (m, partition, coefficient of M in S_ℓ).
    terms: Vec<Vec<(usize, SetPartition, f64)>>,
    decomposition: KernelDecomposition,
    mean_zero: bool,
}

impl<'a> SeriesExpansion<'a> {
    /// Prepares partition sums for `ℓ ≤ max_l` (at most 4).
    pub fn new(group: &'a GroupAction, theta_star: &[f64], max_l: usize) -> Result<Self> {
        check_dims(group, theta_star)?;
        if max_l > MAX_GENERIC_ORDER {
            return Err(Error::CapExceeded {
                what: "series order",
                size: max_l,
                cap: MAX_GENERIC_ORDER,
            });
        }
        let table = PartitionTable::new(2 * max_l)?;
        let mut terms = vec![Vec::new()];
        for l in 1..=max_l {
            let mut list = Vec::new();
            for m in 0..=l {
                let scale = binom(l, m) / (factorial(l) * math::powi(2.0, m as i32));
                for p in table.get(l + m)? {
                    if (0..m).any(|j| p.block_of(2 * j) == p.block_of(2 * j + 1)) {
                        continue;
                    }
                    let b = p.num_blocks();
                    let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                    list.push((m, p.clone(), scale * factorial(b - 1) * sign));
                }
            }
            terms.push(list);
        }
        Ok(SeriesExpansion {
            group,
            theta_star: theta_star.to_vec(),
            terms,
            decomposition: groups::kernel_decomposition(group)?,
            mean_zero: group.is_mean_zero(1e-10),
        })
    }

    pub fn group(&self) -> &GroupAction {
        self.group
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn max_order(&self) -> usize {
        self.terms.len() - 1
    }

    fn generic(&self, theta: &[f64], l: usize) -> Result<f64> {
        if l == 0 || l > self.max_order() {
            return Err(Error::CapExceeded {
                what: "series order",
                size: l,
                cap: self.max_order(),
            });
        }
        let gram = Gram::new(self.group, theta, &self.theta_star);
        let mut total = 0.0;
        for (m, p, coef) in &self.terms[l] {
            total += coef * m_lm_tables(&gram, p, *m)?;
        }
        Ok(total)
    }

    /// `S_ℓ(θ)` by the requested method.
    pub fn s_ell(&self, theta: &[f64], l: usize, method: SeriesMethod) -> Result<f64> {
        check_dims(self.group, theta)?;
        match method {
            SeriesMethod::Generic => self.generic(theta, l),
            SeriesMethod::MeanZero => {
                if !self.mean_zero {
                    return Err(Error::ClosedFormUnavailable(format!(
                        "{} is not mean-zero",
                        self.group.name()
                    )));
                }
                meanzero_value(self.group, theta, &self.theta_star, l)
            }
            SeriesMethod::Decomposed => Ok(self.decomposed_jet(theta, l, false)?.value),
        }
    }

    /// Closed form via the kernel decomposition. With `derivs` false only the
    /// value is meaningful.
    fn decomposed_jet(&self, theta: &[f64], l: usize, derivs: bool) -> Result<Jet> {
        if l == 0 || l > MAX_CLOSED_ORDER {
            return Err(Error::ClosedFormUnavailable(format!(
                "no closed form for S_{l}; available for 1 <= l <= {MAX_CLOSED_ORDER}"
            )));
        }
        let d = self.group.dim();
        let kd = &self.decomposition;
        let mut out = Jet::constant(d, 0.0);
        if l == 1 && kd.d1() > 0 {
            let x = kd.v1.tr_matvec(theta);
            let xs = kd.v1.tr_matvec(&self.theta_star);
            let value = -linalg::dot(&xs, &x) + 0.5 * linalg::dot(&x, &x);
            let fixed = Jet {
                value,
                grad: linalg::sub(&x, &xs),
                hess: Mat::identity(x.len()),
            };
            out.add_scaled(1.0, &if derivs { fixed.pull_back(&kd.v1) } else { Jet::constant(d, value) });
        }
        if let Some(g2) = &kd.reduced {
            let x = kd.v2.tr_matvec(theta);
            let xs = kd.v2.tr_matvec(&self.theta_star);
            let part = if derivs {
                meanzero_jet(g2, &x, &xs, l)?.pull_back(&kd.v2)
            } else {
                Jet::constant(d, meanzero_value(g2, &x, &xs, l)?)
            };
            out.add_scaled(1.0, &part);
        }
        Ok(out)
    }

    /// `S_ℓ` with gradient and Hessian: analytic closed forms for `ℓ ≤ 3`,
    /// Richardson finite differences of the partition sum otherwise.
    pub fn s_ell_jet(&self, theta: &[f64], l: usize) -> Result<Jet> {
        check_dims(self.group, theta)?;
        if l <= MAX_CLOSED_ORDER {
            return self.decomposed_jet(theta, l, true);
        }
        let value = self.generic(theta, l)?;
        let h = fd::default_step(theta);
        let grad = fd::gradient(|x| self.generic(x, l), theta, h)?;
        let hess = fd::hessian(|x| self.generic(x, l), theta, h)?;
        Ok(Jet { value, grad, hess })
    }

    /// `R^k(θ) = Σ_{ℓ≤k} σ^{−2ℓ} S_ℓ(θ)` with derivatives up to `order` (≤ 2).
    pub fn truncated_risk(&self, theta: &[f64], sigma: f64, k: usize, order: usize) -> Result<EvalResult> {
        check_dims(self.group, theta)?;
        if order > 2 {
            return Err(Error::CapExceeded {
                what: "truncated risk derivative order",
                size: order,
                cap: 2,
            });
        }
        let d = self.group.dim();
        let mut total = Jet::zero(d);
        let s2 = sigma * sigma;
        for l in 1..=k {
            let w = 1.0 / math::powi(s2, l as i32);
            if order == 0 {
                let v = if l <= MAX_CLOSED_ORDER {
                    self.s_ell(theta, l, SeriesMethod::Decomposed)?
                } else {
                    self.generic(theta, l)?
                };
                total.value += w * v;
            } else {
                total.add_scaled(w, &self.s_ell_jet(theta, l)?);
            }
        }
        let mut out = EvalResult::value_only(total.value);
        if order >= 1 {
            out.grad = Some(total.grad);
        }
        if order >= 2 {
            out.hess = Some(total.hess);
        }
        Ok(out)
    }
}

/// Empirical terms `P_1..P_L` at one noise vector, `L = max_l`.
pub fn empirical_terms(
    g: &GroupAction,
    eps: &[f64],
    theta: &[f64],
    theta_star: &[f64],
    max_l: usize,
) -> Result<Vec<f64>> {
    check_dims(g, eps)?;
    check_dims(g, theta)?;
    check_dims(g, theta_star)?;
    let pts = g.orbit_points(theta);
    let a: Vec<f64> = pts.iter().map(|p| linalg::dot(eps, p)).collect();
    let b: Vec<f64> = pts.iter().map(|p| linalg::dot(theta_star, p)).collect();
    let w = vec![1.0 / g.order() as f64; g.order()];
    empirical_terms_from(&a, &b, &w, linalg::dot(theta, theta), max_l)
}

fn empirical_terms_from(a: &[f64], b: &[f64], w: &[f64], theta_sq: f64, max_l: usize) -> Result<Vec<f64>> {
    if max_l > MAX_EMPIRICAL_ORDER {
        return Err(Error::CapExceeded {
            what: "empirical term order",
            size: max_l,
            cap: MAX_EMPIRICAL_ORDER,
        });
    }
    let kappa = cumulants::bivariate_cumulants(a, b, w, max_l);
    let mut out = Vec::with_capacity(max_l);
    for l in 1..=max_l {
        let mut p = if l == 2 { 0.5 * theta_sq } else { 0.0 };
        for k in l.div_ceil(2)..=l {
            p -= binom(k, l - k) / factorial(k) * kappa[2 * k - l][l - k];
        }
        out.push(p);
    }
    Ok(out)
}

/// `P_ℓ(ε, θ, θ*)`.
pub fn empirical_term(g: &GroupAction, eps: &[f64], theta: &[f64], theta_star: &[f64], l: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::InvalidParameter("l must be at least 1".into()));
    }
    Ok(empirical_terms(g, eps, theta, theta_star, l)?[l - 1])
}

/// Monte Carlo estimate of `R(θ) − R^k(θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationGap {
    /// Estimate of `R(θ) − R^k(θ)`.
    pub gap: f64,
    pub std_err: f64,
    /// `R^k(θ)`.
    pub truncated: f64,
}

/// Estimates `R(θ) − R^k(θ)` with the empirical terms as control variates:
/// the per-sample risk minus `Σ_{ℓ≤2k} σ^{−ℓ} P_ℓ(ε)` has mean exactly
/// `R − R^k` and variance of order `σ^{−2(2k+1)}`. The noise draws are the
/// common stream of [`model::noise_sample`] with the given seed.
pub fn truncation_gap(
    series: &SeriesExpansion<'_>,
    sigma: f64,
    theta: &[f64],
    k: usize,
    n: usize,
    seed: u64,
) -> Result<TruncationGap> {
    let g = series.group();
    let theta_star = series.theta_star();
    check_dims(g, theta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs N >= 1".into()));
    }
    let d = g.dim();
    let kk = g.order();
    let max_l = 2 * k;
    let s2 = sigma * sigma;
    let pts = g.orbit_points(theta);
    let b: Vec<f64> = pts.iter().map(|p| linalg::dot(theta_star, p)).collect();
    let w = vec![1.0 / kk as f64; kk];
    let theta_sq = linalg::dot(theta, theta);
    let ln_k = math::ln(kk as f64);
    let eps = model::noise_sample(d, n, seed);
    let mut a = vec![0.0; kk];
    let mut s = vec![0.0; kk];
    let mut err = None;
    let acc = sum::chunked_sum(n, 2, |i, acc| {
        let e = &eps[i * d..(i + 1) * d];
        for (j, p) in pts.iter().enumerate() {
            a[j] = linalg::dot(e, p);
            s[j] = (b[j] + sigma * a[j]) / s2;
        }
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(s.iter().map(|v| math::exp(v - max)).sum::<f64>());
        let f = theta_sq / (2.0 * s2) - (lse - ln_k);
        let terms = match empirical_terms_from(&a, &b, &w, theta_sq, max_l) {
            Ok(t) => t,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        let mut approx = 0.0;
        let mut scale = 1.0;
        for t in &terms {
            scale /= sigma;
            approx += scale * t;
        }
        let r = f - approx;
        acc[0] += r;
        acc[1] += r * r;
    });
    if let Some(e) = err {
        return Err(e);
    }
    let nf = n as f64;
    let mean = acc[0] / nf;
    let var = (acc[1] / nf - mean * mean).max(0.0);
    let truncated = series.truncated_risk(theta, sigma, k, 0)?.value;
    Ok(TruncationGap {
        gap: mean,
        std_err: math::sqrt(var / nf),
        truncated,
    })
}
