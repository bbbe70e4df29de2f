//! Fisher information spectra, graded bands, pseudo-local-minimizer checks,
//! critical-point surveys and basins of attraction.
//!
//! Surveys are split into a per-start step and a deterministic merge so that
//! callers may run starts in any order or in parallel.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::groups::{self, GroupAction};
use crate::linalg::{self, Mat};
use crate::math;
use crate::optim::{self, Method, OptimConfig};
use crate::reparam::{self, Chart};
use crate::risk::{Expectation, PopulationRisk, RiskModel};
use crate::rng::CounterRng;
use crate::series::SeriesExpansion;

/// Smallest pairwise orbit distance at which `I(θ*)` is considered invertible.
pub const MIN_ORBIT_SEPARATION: f64 = 1e-6;
/// Bands whose `eig·σ^{2ℓ}` ratios span more than this are unresolved.
pub const BAND_SPAN: f64 = 10.0;
/// Pseudo-minimizer block gradient tolerance.
pub const PSEUDO_GRAD_TOL: f64 = 1e-7;
/// Pseudo-minimizer block curvature floor.
pub const PSEUDO_MIN_EIG: f64 = 1e-9;
/// Eigenvalues below this in magnitude count as zero when classifying.
pub const ZERO_EIG: f64 = 1e-8;
/// Relative clip for the pseudo-inverse used by Newton polishing.
pub const PINV_CLIP: f64 = 1e-10;
/// Runs finishing farther than this from every registered orbit are unresolved.
pub const BASIN_RADIUS: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FisherMethod {
    MonteCarlo { n: usize, seed: u64 },
    /// Hessian of the truncated series `R^k`.
    Series { k: usize },
    /// Gauss–Hermite quadrature (`d ≤ 2`).
    Quadrature { order: usize },
}

impl FisherMethod {
    pub fn label(&self) -> String {
        match self {
            FisherMethod::MonteCarlo { n, seed } => format!("monte_carlo(n={n},seed={seed})"),
            FisherMethod::Series { k } => format!("series(k={k})"),
            FisherMethod::Quadrature { order } => format!("quadrature(order={order})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherResult {
    pub matrix: Mat,
    /// Ascending.
    pub eigvals: Vec<f64>,
    pub method: FisherMethod,
    /// Entrywise Monte Carlo standard errors.
    pub std_err: Option<Mat>,
}

/// `I(θ*) = ∇²R(θ*)`.
pub fn fisher_information(
    g: &GroupAction,
    theta_star: &[f64],
    sigma: f64,
    method: FisherMethod,
) -> Result<FisherResult> {
    let sep = groups::min_pairwise_orbit_distance(g, theta_star)?;
    if g.order() > 1 && !(sep > MIN_ORBIT_SEPARATION) {
        return Err(Error::DegenerateOrbit(sep));
    }
    let (mut matrix, std_err) = match method {
        FisherMethod::MonteCarlo { n, seed } => {
            let pop = PopulationRisk::new(g, theta_star, sigma, Expectation::MonteCarlo { n, seed })?;
            let r = pop.eval(theta_star, 2)?;
            let se = r.std_err.and_then(|s| s.hess);
            (r.hess.ok_or(Error::Singular)?, se)
        }
        FisherMethod::Series { k } => {
            let series = SeriesExpansion::new(g, theta_star, k)?;
            let r = series.truncated_risk(theta_star, sigma, k, 2)?;
            (r.hess.ok_or(Error::Singular)?, None)
        }
        FisherMethod::Quadrature { order } => {
            let pop = PopulationRisk::new(g, theta_star, sigma, Expectation::Quadrature { order })?;
            (pop.eval(theta_star, 2)?.hess.ok_or(Error::Singular)?, None)
        }
    };
    matrix.symmetrize();
    let eigvals = linalg::sym_eigenvalues(&matrix)?;
    Ok(FisherResult {
        matrix,
        eigvals,
        method,
        std_err,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub ell: usize,
    /// Indices into the ascending eigenvalue list.
    pub indices: Vec<usize>,
    pub eigvals: Vec<f64>,
    /// `eig·σ^{2ℓ}`.
    pub ratios: Vec<f64>,
    pub resolved: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandReport {
    pub sigma: f64,
    pub dims: Vec<usize>,
    pub bands: Vec<Band>,
}

impl BandReport {
    pub fn all_resolved(&self) -> bool {
        self.bands.iter().all(|b| b.resolved)
    }
}

/// Assigns the `d_ℓ` largest remaining eigenvalues to band `ℓ = 1, 2, …`.
pub fn graded_spectrum(f: &FisherResult, sigma: f64, dims: &[usize]) -> Result<BandReport> {
    let d = f.eigvals.len();
    let total: usize = dims.iter().sum();
    if total != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: total,
        });
    }
    let mut next = d;
    let mut bands = Vec::new();
    for (i, &dl) in dims.iter().enumerate() {
        let ell = i + 1;
        let indices: Vec<usize> = (next - dl..next).rev().collect();
        next -= dl;
        if dl == 0 {
            continue;
        }
        let eigvals: Vec<f64> = indices.iter().map(|j| f.eigvals[*j]).collect();
        let scale = math::powi(sigma, 2 * ell as i32);
        let ratios: Vec<f64> = eigvals.iter().map(|e| e * scale).collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let resolved = lo > 0.0 && hi / lo <= BAND_SPAN;
        bands.push(Band {
            ell,
            indices,
            eigvals,
            ratios,
            resolved,
        });
    }
    Ok(BandReport {
        sigma,
        dims: dims.to_vec(),
        bands,
    })
}

/// `∇ψᵀ I^{−1} ∇ψ`.
pub fn plugin_variance(f: &FisherResult, grad_psi: &[f64]) -> Result<f64> {
    if grad_psi.len() != f.eigvals.len() {
        return Err(Error::DimensionMismatch {
            expected: f.eigvals.len(),
            found: grad_psi.len(),
        });
    }
    if !(f.eigvals.first().copied().unwrap_or(0.0) > 0.0) {
        return Err(Error::Singular);
    }
    if grad_psi.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    let x = linalg::solve_spd(&f.matrix, grad_psi)?;
    Ok(linalg::dot(grad_psi, &x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub ell: usize,
    /// `‖∇_{φ^ℓ} S_ℓ‖`.
    pub grad_norm: f64,
    /// `λ_min(∇²_{φ^ℓ} S_ℓ)`.
    pub min_eig: f64,
    /// `‖∇_{φ^{ℓ'}} S_ℓ‖` over bands `ℓ' > ℓ`, which vanishes structurally.
    pub later_grad_norm: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoMinReport {
    pub blocks: Vec<BlockCheck>,
    pub passed: bool,
}

/// Checks block stationarity and block convexity of each `S_ℓ` in the chart
/// coordinates at `θ̃`.
pub fn pseudo_minimizer_check(
    g: &GroupAction,
    theta: &[f64],
    theta_star: &[f64],
    chart: &Chart,
) -> Result<PseudoMinReport> {
    let bands = chart.bands();
    let l_max = bands.iter().copied().max().unwrap_or(0);
    let series = SeriesExpansion::new(g, theta_star, l_max)?;
    let point = chart.eval(theta)?;
    let mut blocks = Vec::new();
    for ell in 1..=l_max {
        let idx: Vec<usize> = (0..bands.len()).filter(|i| bands[*i] == ell).collect();
        if idx.is_empty() {
            continue;
        }
        let later: Vec<usize> = (0..bands.len()).filter(|i| bands[*i] > ell).collect();
        let jet = series.s_ell_jet(theta, ell)?;
        let (grad, hess) = reparam::pullback_at(&point, &jet.grad, &jet.hess)?;
        let block_grad: Vec<f64> = idx.iter().map(|i| grad[*i]).collect();
        let later_grad: Vec<f64> = later.iter().map(|i| grad[*i]).collect();
        let block = hess.select(&idx, &idx);
        let min_eig = linalg::sym_eigenvalues(&block)?.first().copied().unwrap_or(0.0);
        let grad_norm = linalg::norm(&block_grad);
        let later_grad_norm = linalg::norm(&later_grad);
        blocks.push(BlockCheck {
            ell,
            grad_norm,
            min_eig,
            later_grad_norm,
            passed: grad_norm <= PSEUDO_GRAD_TOL
                && later_grad_norm <= PSEUDO_GRAD_TOL
                && min_eig >= PSEUDO_MIN_EIG,
        });
    }
    Ok(PseudoMinReport {
        passed: blocks.iter().all(|b| b.passed),
        blocks,
    })
}

/// Result of Newton polishing.
#[derive(Clone, Debug, PartialEq)]
pub struct Polished {
    pub theta: Vec<f64>,
    pub grad_norm: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Newton steps on `∇R_n` with an eigenvalue-clipped pseudo-inverse and
/// backtracking on the gradient norm.
pub fn newton_polish(model: &RiskModel<'_>, theta: &[f64], tol: f64, max_steps: usize) -> Result<Polished> {
    let mut theta = theta.to_vec();
    let mut r = model.eval(&theta, 2)?;
    let mut gn = linalg::norm(r.grad());
    let mut steps = 0;
    while gn > tol && steps < max_steps {
        steps += 1;
        let eig = linalg::sym_eigen(r.hess())?;
        let big = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = r.grad();
        let mut dir = vec![0.0; theta.len()];
        for (k, lam) in eig.values.iter().enumerate() {
            if lam.abs() < PINV_CLIP * big {
                continue;
            }
            let v = eig.vectors.col(k);
            linalg::axpy(-linalg::dot(&v, g) / lam, &v, &mut dir);
        }
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            let tr = model.eval(&trial, 2)?;
            let tn = linalg::norm(tr.grad());
            if tn < gn {
                theta = trial;
                r = tr;
                gn = tn;
                improved = true;
                break;
            }
            t /= 2.0;
        }
        if !improved {
            break;
        }
    }
    Ok(Polished {
        converged: gn <= tol,
        theta,
        grad_norm: gn,
        steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointClass {
    Minimizer,
    Saddle,
    Maximizer,
    Inconclusive,
}

impl PointClass {
    pub fn label(self) -> &'static str {
        match self {
            PointClass::Minimizer => "minimizer",
            PointClass::Saddle => "saddle",
            PointClass::Maximizer => "maximizer",
            PointClass::Inconclusive => "inconclusive",
        }
    }
}

/// Sign pattern of a spectrum with `|λ| ≤ ZERO_EIG` treated as zero.
pub fn classify(eigvals: &[f64]) -> PointClass {
    let pos = eigvals.iter().filter(|v| **v > ZERO_EIG).count();
    let neg = eigvals.iter().filter(|v| **v < -ZERO_EIG).count();
    let zero = eigvals.len() - pos - neg;
    if pos > 0 && neg > 0 {
        PointClass::Saddle
    } else if zero > 0 {
        PointClass::Inconclusive
    } else if neg == 0 {
        PointClass::Minimizer
    } else {
        PointClass::Maximizer
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalPoint {
    pub theta: Vec<f64>,
    pub grad_norm: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub class: PointClass,
    /// Index of the registered orbit within the dedup tolerance, if any.
    pub orbit: Option<usize>,
    /// How many starts landed on this point's orbit.
    pub hits: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub optim: OptimConfig,
    pub polish_steps: usize,
    /// Polish target; `None` means `1e−10/σ²`.
    pub grad_tol: Option<f64>,
    pub dedup_tol: f64,
}

impl SearchConfig {
    pub fn new(agd_iters: usize) -> Self {
        SearchConfig {
            optim: OptimConfig::new(Method::Agd, agd_iters),
            polish_steps: 50,
            grad_tol: None,
            dedup_tol: 1e-4,
        }
    }
}

/// `θ⁰ ∼ N(0, Id)` for start `index`.
pub fn initial_point(d: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut out = vec![0.0; d];
    CounterRng::substream(seed, index).fill_normal(&mut out);
    out
}

/// Outcome of one survey start.
#[derive(Clone, Debug, PartialEq)]
pub enum StartOutcome {
    Found(CriticalPoint),
    Failed(String),
}

/// AGD from start `index` followed by Newton polishing.
pub fn survey_start(
    model: &RiskModel<'_>,
    config: &SearchConfig,
    seed: u64,
    index: u64,
    orbits: &[Vec<f64>],
) -> Result<StartOutcome> {
    let sigma = model.sigma();
    let tol = config.grad_tol.unwrap_or(1e-10 / (sigma * sigma));
    let theta0 = initial_point(model.dim(), seed, index);
    let trace = match optim::run(model, &config.optim, &theta0, &[]) {
        Ok(t) => t,
        Err(e) => return Ok(StartOutcome::Failed(format!("{e}"))),
    };
    let pol = newton_polish(model, &trace.theta, tol, config.polish_steps)?;
    if !pol.converged {
        return Ok(StartOutcome::Failed(format!(
            "polish stalled at gradient norm {:.3e}",
            pol.grad_norm
        )));
    }
    let ev = linalg::sym_eigenvalues(&model.hessian(&pol.theta)?)?;
    let mut orbit = None;
    for (i, o) in orbits.iter().enumerate() {
        if groups::orbit_distance(model.group(), &pol.theta, o)? <= config.dedup_tol {
            orbit = Some(i);
            break;
        }
    }
    Ok(StartOutcome::Found(CriticalPoint {
        grad_norm: pol.grad_norm,
        min_eig: ev.first().copied().unwrap_or(0.0),
        max_eig: ev.last().copied().unwrap_or(0.0),
        class: classify(&ev),
        orbit,
        hits: 1,
        theta: pol.theta,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSurvey {
    pub points: Vec<CriticalPoint>,
    pub failures: Vec<(usize, String)>,
}

/// Deduplicates outcomes (in start order) by orbit distance.
pub fn merge_critical_points(
    g: &GroupAction,
    outcomes: Vec<StartOutcome>,
    dedup_tol: f64,
) -> Result<CriticalSurvey> {
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            StartOutcome::Failed(msg) => failures.push((i, msg)),
            StartOutcome::Found(p) => {
                let mut merged = false;
                for q in points.iter_mut() {
                    if groups::orbit_distance(g, &p.theta, &q.theta)? <= dedup_tol {
                        q.hits += 1;
                        merged = true;
                        break;
                    }
                }
                if !merged {
                    points.push(p);
                }
            }
        }
    }
    Ok(CriticalSurvey { points, failures })
}

/// Sequential multi-start survey.
pub fn find_critical_points(
    model: &RiskModel<'_>,
    n_starts: usize,
    seed: u64,
    config: &SearchConfig,
    orbits: &[Vec<f64>],
) -> Result<CriticalSurvey> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
    }
    let outcomes = (0..n_starts as u64)
        .map(|i| survey_start(model, config, seed, i, orbits))
        .collect::<Result<Vec<_>>>()?;
    merge_critical_points(model.group(), outcomes, config.dedup_tol)
}

/// Where one basin run ended.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinOutcome {
    pub index: u64,
    pub theta0: Vec<f64>,
    pub theta: Vec<f64>,
    /// Distance to each registered orbit at the last iterate.
    pub dists: Vec<f64>,
    /// Nearest registered orbit within [`BASIN_RADIUS`].
    pub assigned: Option<usize>,
    pub iterations: usize,
    pub error: Option<String>,
}

/// One optimizer run from `θ⁰ ∼ N(0, Id)`.
pub fn basin_run(
    model: &RiskModel<'_>,
    config: &OptimConfig,
    seed: u64,
    index: u64,
    orbits: &[Vec<f64>],
) -> Result<BasinOutcome> {
    let theta0 = initial_point(model.dim(), seed, index);
    match optim::run(model, config, &theta0, orbits) {
        Ok(trace) => {
            let dists = trace.last().dists.clone();
            let assigned = dists
                .iter()
                .enumerate()
                .filter(|(_, d)| **d <= BASIN_RADIUS)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            Ok(BasinOutcome {
                index,
                theta0,
                theta: trace.theta,
                dists,
                assigned,
                iterations: trace.iterations,
                error: None,
            })
        }
        Err(e @ (Error::Diverged { .. } | Error::NonFinite(_))) => Ok(BasinOutcome {
            index,
            theta: theta0.clone(),
            theta0,
            dists: vec![f64::INFINITY; orbits.len()],
            assigned: None,
            iterations: 0,
            error: Some(format!("{e}")),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinFractions {
    /// Fraction per registered orbit.
    pub fractions: Vec<f64>,
    pub unresolved: f64,
    pub runs: usize,
}

pub fn summarize_basins(outcomes: &[BasinOutcome], n_orbits: usize) -> BasinFractions {
    let runs = outcomes.len();
    let mut counts = vec![0usize; n_orbits];
    let mut unresolved = 0usize;
    for o in outcomes {
        match o.assigned {
            Some(i) if i < n_orbits => counts[i] += 1,
            _ => unresolved += 1,
        }
    }
    let frac = |c: usize| if runs == 0 { 0.0 } else { c as f64 / runs as f64 };
    BasinFractions {
        fractions: counts.into_iter().map(frac).collect(),
        unresolved: frac(unresolved),
        runs,
    }
}

/// Sequential basin experiment.
pub fn basin_fractions(
    model: &RiskModel<'_>,
    config: &OptimConfig,
    n_starts: usize,
    seed: u64,
    orbits: &[Vec<f64>],
) -> Result<(BasinFractions, Vec<BasinOutcome>)> {
    if orbits.is_empty() {
        return Err(Error::InvalidParameter("no registered orbits".into()));
    }
    let outcomes = (0..n_starts as u64)
        .map(|i| basin_run(model, config, seed, i, orbits))
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize_basins(&outcomes, orbits.len()), outcomes))
}

/// `1/λ_max` of the Hessian at `θ` restricted to the complement of the
/// subspace fixed by the group: a step size for GD/AGD near `θ`.
pub fn local_step(model: &RiskModel<'_>, theta: &[f64]) -> Result<f64> {
    let p = groups::mean_projection(model.group());
    let q = Mat::identity(model.dim()).sub(&p);
    let h = q.matmul(&model.hessian(theta)?).matmul(&q);
    let top = linalg::sym_eigenvalues(&h)?.last().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::Singular);
    }
    Ok(1.0 / top)
}
