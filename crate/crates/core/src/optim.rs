//! EM, gradient descent and Nesterov-accelerated gradient descent on the
//! empirical risk.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::groups;
use crate::linalg;
use crate::math;
use crate::risk::RiskModel;

/// Divergence guard factor.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Em,
    Gd,
    Agd,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Em => "em",
            Method::Gd => "gd",
            Method::Agd => "agd",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Method::Em),
            "gd" => Ok(Method::Gd),
            "agd" => Ok(Method::Agd),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub method: Method,
    /// Step size; `None` means `σ⁴`. Ignored by EM.
    pub eta: Option<f64>,
    pub max_iters: usize,
    /// Stop when `‖∇R_n‖` falls to this; `None` means `1e−8/σ²`.
    pub grad_tol: Option<f64>,
    /// Record every this many iterations (the first and last are always kept).
    pub record_every: usize,
    /// Scale for the divergence guard; `None` uses the dataset's `θ*` when
    /// known and `(1/n)Σ‖Y_i‖` otherwise.
    pub reference_norm: Option<f64>,
    /// Use the step `σ²` on the subspace fixed by every group element.
    /// There the risk is exactly `‖θ_fix − P Ȳ‖²/2σ²` up to a constant, so
    /// this step solves that block at once, while any step above `2σ²`
    /// diverges. No effect for mean-zero groups or for EM.
    pub fixed_space_step: bool,
}

impl OptimConfig {
    pub fn new(method: Method, max_iters: usize) -> Self {
        OptimConfig {
            method,
            eta: None,
            max_iters,
            grad_tol: None,
            record_every: 1,
            reference_norm: None,
            fixed_space_step: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        if let Some(eta) = self.eta {
            if self.method != Method::Em && !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidParameter(format!("step size must be positive, got {eta}")));
            }
        }
        if let Some(t) = self.grad_tol {
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("grad_tol must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Effective step: `σ²` for EM, otherwise `eta` or `σ⁴`.
    pub fn step(&self, sigma: f64) -> f64 {
        let s2 = sigma * sigma;
        match self.method {
            Method::Em => s2,
            _ => self.eta.unwrap_or(s2 * s2),
        }
    }

    pub fn tolerance(&self, sigma: f64) -> f64 {
        self.grad_tol.unwrap_or(1e-8 / (sigma * sigma))
    }
}

/// `λ_0 = 0, λ_{t} = (1 + √(1 + 4λ_{t−1}²))/2`.
pub fn nesterov_lambda(t: usize) -> f64 {
    let mut l = 0.0;
    for _ in 0..t {
        l = (1.0 + math::sqrt(1.0 + 4.0 * l * l)) / 2.0;
    }
    l
}

/// Iterates `(λ_t, λ_{t+1})` for `t = 1, 2, …` and yields `τ_t = (λ_t − 1)/λ_{t+1}`.
#[derive(Clone, Debug)]
pub struct NesterovSchedule {
    lambda: f64,
}

impl Default for NesterovSchedule {
    fn default() -> Self {
        NesterovSchedule { lambda: 1.0 }
    }
}

impl Iterator for NesterovSchedule {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let next = (1.0 + math::sqrt(1.0 + 4.0 * self.lambda * self.lambda)) / 2.0;
        let tau = (self.lambda - 1.0) / next;
        self.lambda = next;
        Some(tau)
    }
}

/// One EM update: `(1/n) Σ_i E_{g|Y_i,θ}[gᵀY_i]`.
pub fn em_step(model: &RiskModel<'_>, theta: &[f64]) -> Result<Vec<f64>> {
    model.posterior_mean(theta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub risk: f64,
    pub grad_norm: f64,
    /// Distance to each registered orbit.
    pub dists: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimTrace {
    pub method: Method,
    pub eta: f64,
    pub records: Vec<TraceRecord>,
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least one record")
    }

    /// Record at iteration `iter`, if sampled.
    pub fn at(&self, iter: usize) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.iter == iter)
    }
}

/// Runs the configured method from `θ0`, recording distances to the orbits of
/// the reference vectors in `orbits`.
pub fn run(
    model: &RiskModel<'_>,
    config: &OptimConfig,
    theta0: &[f64],
    orbits: &[Vec<f64>],
) -> Result<OptimTrace> {
    config.validate()?;
    let d = model.dim();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: theta0.len(),
        });
    }
    if theta0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial point".into()));
    }
    for o in orbits {
        if o.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: o.len(),
            });
        }
    }
    let sigma = model.sigma();
    let eta = config.step(sigma);
    let tol = config.tolerance(sigma);
    let limit = divergence_limit(model, config);
    let group = model.group();
    let s2 = sigma * sigma;
    let fixed = (config.fixed_space_step && eta != s2)
        .then(|| groups::mean_projection(group))
        .filter(|p| p.max_abs() > 1e-12);

    let mut theta = theta0.to_vec();
    let mut mu_prev = theta0.to_vec();
    let mut schedule = NesterovSchedule::default();
    let mut records = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..=config.max_iters {
        let r = model.eval(&theta, 1)?;
        let grad = r.grad();
        let grad_norm = linalg::norm(grad);
        converged = grad_norm <= tol;
        let last = converged || t == config.max_iters;
        if t % config.record_every == 0 || last {
            let dists = orbits
                .iter()
                .map(|o| groups::orbit_distance(group, &theta, o))
                .collect::<Result<Vec<_>>>()?;
            records.push(TraceRecord {
                iter: t,
                risk: r.value,
                grad_norm,
                dists,
                theta: theta.clone(),
            });
        }
        iterations = t;
        if last {
            break;
        }
        let mut mu: Vec<f64> = theta.iter().zip(grad).map(|(x, g)| x - eta * g).collect();
        if let Some(p) = &fixed {
            // θ − η(I − P)∇ − σ²P∇.
            linalg::axpy(eta - s2, &p.matvec(grad), &mut mu);
        }
        theta = match config.method {
            Method::Em | Method::Gd => mu,
            Method::Agd => {
                let tau = schedule.next().unwrap_or(0.0);
                let next = mu
                    .iter()
                    .zip(&mu_prev)
                    .map(|(m, p)| (1.0 + tau) * m - tau * p)
                    .collect();
                mu_prev = mu;
                next
            }
        };
        let norm = linalg::norm(&theta);
        if !(norm <= limit) {
            return Err(Error::Diverged { norm, limit });
        }
    }
    Ok(OptimTrace {
        method: config.method,
        eta,
        records,
        theta,
        iterations,
        converged,
    })
}

fn divergence_limit(model: &RiskModel<'_>, config: &OptimConfig) -> f64 {
    let data = model.data();
    let sigma = model.sigma();
    let reference = config.reference_norm.or_else(|| {
        data.meta
            .theta_star
            .as_ref()
            .map(|t| linalg::norm(t) + sigma * math::sqrt(data.dim() as f64))
    });
    DIVERGENCE_FACTOR * reference.unwrap_or_else(|| data.mean_norm())
}

/// Human-readable summary line for a trace.
pub fn summary(trace: &OptimTrace) -> String {
    let last = trace.last();
    format!(
        "{} eta={:.6e} iters={} converged={} risk={:.12e} grad_norm={:.3e}",
        trace.method.label(),
        trace.eta,
        trace.iterations,
        trace.converged,
        last.risk,
        last.grad_norm
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{rotations, trivial};
    use crate::model::{sample_dataset, HLaw};

    #[test]
    fn schedule_values() {
        assert_eq!(nesterov_lambda(0), 0.0);
        assert_eq!(nesterov_lambda(1), 1.0);
        assert!((nesterov_lambda(2) - 1.618_033_988_749_895).abs() < 1e-15);
        let mut s = NesterovSchedule::default();
        assert_eq!(s.next(), Some(0.0));
        let tau2 = s.next().unwrap();
        assert!((tau2 - (nesterov_lambda(2) - 1.0) / nesterov_lambda(3)).abs() < 1e-15);
    }

    #[test]
    fn em_trivial_group_is_sample_mean() {
        let g = trivial(3).unwrap();
        let data = sample_dataset(&g, &[1.0, -2.0, 0.5], 1.3, 50, 9, HLaw::Uniform).unwrap();
        let model = RiskModel::new(&g, &data).unwrap();
        let next = em_step(&model, &[4.0, 4.0, 4.0]).unwrap();
        let mean = data.mean();
        for (a, b) in next.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn gd_descends() {
        let g = rotations(3).unwrap();
        let data = sample_dataset(&g, &[1.0, 0.0], 1.0, 400, 2, HLaw::Uniform).unwrap();
        let model = RiskModel::new(&g, &data).unwrap();
        let mut cfg = OptimConfig::new(Method::Gd, 30);
        cfg.eta = Some(1.0);
        let trace = run(&model, &cfg, &[1.0, 1.0], &[vec![1.0, 0.0]]).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].risk <= w[0].risk + 1e-12);
        }
        assert_eq!(trace.records.len(), trace.iterations + 1);
    }

    #[test]
    fn fixed_space_step_is_exact() {
        let g = trivial(2).unwrap();
        let data = sample_dataset(&g, &[1.0, 3.0], 1.5, 40, 3, HLaw::Uniform).unwrap();
        let model = RiskModel::new(&g, &data).unwrap();
        let mut cfg = OptimConfig::new(Method::Agd, 5);
        cfg.eta = Some(100.0);
        let trace = run(&model, &cfg, &[-2.0, 0.5], &[]).unwrap();
        assert!(linalg::dist(&trace.theta, &data.mean()) < 1e-12);
    }

    #[test]
    fn guard_triggers() {
        let g = trivial(1).unwrap();
        let data = sample_dataset(&g, &[1.0], 1.0, 10, 2, HLaw::Uniform).unwrap();
        let model = RiskModel::new(&g, &data).unwrap();
        let mut cfg = OptimConfig::new(Method::Gd, 100);
        cfg.eta = Some(5.0);
        cfg.fixed_space_step = false;
        assert!(matches!(run(&model, &cfg, &[3.0], &[]), Err(Error::Diverged { .. })));
    }
}
