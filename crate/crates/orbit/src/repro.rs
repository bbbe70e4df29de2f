//! Scripted reproductions of the three figures.
//!
//! Every CSV carries a `#META` line with the resolved settings. Thread count
//! and wall time go to a separate `*_run.json` so that CSV bytes depend only
//! on the settings and the seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use orbit_core::groups;
use orbit_core::landscape::{self, BasinFractions, BasinOutcome, PointClass};
use orbit_core::linalg;
use orbit_core::model::{self, Dataset, HLaw};
use orbit_core::mra::{self, Branch, SpectrumWeights};
use orbit_core::optim::{self, Method, OptimConfig, OptimTrace};
use orbit_core::risk::RiskModel;
use orbit_core::rng;
use orbit_core::GroupAction;
use serde_json::{json, Value};

use crate::error::Result;
use crate::io::{self, Cell, Table};
use crate::parallel;

/// Where and how a reproduction runs.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub gnuplot: bool,
}

impl RunContext {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunContext {
            out: out.into(),
            threads: None,
            gnuplot: false,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_run_info(&self, figure: &str, started: Instant) -> Result<()> {
        io::write_json(
            &self.path(&format!("{figure}_run.json")),
            &json!({
                "figure": figure,
                "threads": self.threads,
                "wall_seconds": started.elapsed().as_secs_f64(),
            }),
        )
    }
}

fn theta_cells(theta: &[f64]) -> impl Iterator<Item = Cell> + '_ {
    theta.iter().map(|v| Cell::F(*v))
}

fn theta_columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}_{i}")).collect()
}

fn table(meta: Value, fixed: &[&str], extra: &[String]) -> Table {
    let mut cols: Vec<&str> = fixed.to_vec();
    cols.extend(extra.iter().map(String::as_str));
    Table::new(meta, &cols)
}

/// AGD from `start`, then Newton polishing to `1e−10/σ²`.
fn refine(model: &RiskModel<'_>, start: &[f64], eta: f64, iters: usize) -> Result<landscape::Polished> {
    let mut cfg = OptimConfig::new(Method::Agd, iters);
    cfg.eta = Some(eta);
    cfg.record_every = iters;
    let trace = optim::run(model, &cfg, start, &[])?;
    let s2 = model.sigma() * model.sigma();
    Ok(landscape::newton_polish(model, &trace.theta, 1e-10 / s2, 50)?)
}

// ---------------------------------------------------------------- fig 1

#[derive(Clone, Debug)]
pub struct Fig1Params {
    pub seed: u64,
    /// Grid points per axis.
    pub grid: usize,
    /// The grid covers `[−extent, extent]²`.
    pub extent: f64,
    /// `(σ, n)` per contour panel.
    pub levels: Vec<(f64, usize)>,
}

impl Fig1Params {
    pub fn new(seed: u64) -> Self {
        Fig1Params {
            seed,
            grid: 81,
            extent: 2.0,
            levels: vec![(0.4, 10_000), (4.0, 100_000)],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fig1Panel {
    pub sigma: f64,
    pub n: usize,
    pub axis: Vec<f64>,
    /// `values[j·grid + i]` is the risk at `(axis[i], axis[j])`.
    pub values: Vec<f64>,
    /// Interior grid points strictly below their eight neighbours.
    pub local_minima: Vec<[f64; 2]>,
    pub argmin: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Fig1Report {
    pub panels: Vec<Fig1Panel>,
}

pub const FIG1_THETA_STAR: [f64; 2] = [1.0, 0.0];

fn grid_minima(values: &[f64], axis: &[f64]) -> (Vec<[f64; 2]>, [f64; 2]) {
    let m = axis.len();
    let at = |i: usize, j: usize| values[j * m + i];
    let mut minima = Vec::new();
    for j in 1..m.saturating_sub(1) {
        for i in 1..m - 1 {
            let v = at(i, j);
            let lower = (-1i64..=1)
                .flat_map(|dj| (-1i64..=1).map(move |di| (di, dj)))
                .filter(|&(di, dj)| di != 0 || dj != 0)
                .all(|(di, dj)| v < at((i as i64 + di) as usize, (j as i64 + dj) as usize));
            if lower {
                minima.push([axis[i], axis[j]]);
            }
        }
    }
    let best = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (minima, [axis[best % m], axis[best / m]])
}

pub fn fig1(ctx: &RunContext, p: &Fig1Params) -> Result<Fig1Report> {
    let started = Instant::now();
    let pool = parallel::pool(ctx.threads)?;
    let g = groups::rotations(3)?;
    let m = p.grid.max(2);
    let axis: Vec<f64> = (0..m)
        .map(|i| -p.extent + 2.0 * p.extent * i as f64 / (m - 1) as f64)
        .collect();
    let mut panels = Vec::new();
    for (idx, &(sigma, n)) in p.levels.iter().enumerate() {
        let data = model::sample_dataset(&g, &FIG1_THETA_STAR, sigma, n, p.seed, HLaw::Uniform)?;
        let meta = json!({
            "figure": "fig1",
            "group": "rotations(3)",
            "theta_star": FIG1_THETA_STAR,
            "sigma": sigma,
            "n": n,
            "seed": p.seed,
            "grid": m,
            "extent": p.extent,
        });
        if idx == 0 {
            let mut t = Table::new(meta.clone(), &["y_1", "y_2"]);
            for i in 0..data.n() {
                t.push(theta_cells(data.row(i)).collect());
            }
            t.write(&ctx.path("fig1_samples.csv"))?;
        }
        let risk = RiskModel::new(&g, &data)?;
        let values = parallel::try_map(&pool, m * m, |k| risk.value(&[axis[k % m], axis[k / m]]))?;
        let (local_minima, argmin) = grid_minima(&values, &axis);
        let mut t = Table::new(meta, &["theta_1", "theta_2", "risk"]);
        for (k, v) in values.iter().enumerate() {
            t.push(vec![axis[k % m].into(), axis[k / m].into(), (*v).into()]);
        }
        t.write(&ctx.path(&format!("fig1_risk_sigma{sigma}.csv")))?;
        panels.push(Fig1Panel {
            sigma,
            n,
            axis: axis.clone(),
            values,
            local_minima,
            argmin,
        });
    }
    if ctx.gnuplot {
        let mut script = String::from(FIG1_GP_HEAD);
        for panel in &panels {
            script.push_str(&format!(
                "set output 'fig1_risk_sigma{s}.png'\nset title 'risk, sigma = {s}'\n\
                 splot 'fig1_risk_sigma{s}.csv' using 1:2:3 with pm3d notitle\n",
                s = panel.sigma
            ));
        }
        io::write_text(&ctx.path("fig1.gp"), &script)?;
    }
    ctx.write_run_info("fig1", started)?;
    Ok(Fig1Report { panels })
}

const FIG1_GP_HEAD: &str = "set datafile separator ','
set datafile commentschars '#'
set terminal pngcairo size 700,600
set output 'fig1_samples.png'
set size square
set title 'samples, sigma = 0.4'
plot 'fig1_samples.csv' every ::1 using 1:2 with dots notitle
set view map
";

// ---------------------------------------------------------------- fig 2

#[derive(Clone, Debug)]
pub struct Fig2Params {
    pub seed: u64,
    pub sigma: f64,
    pub n: usize,
    pub iters: usize,
    pub theta0: Vec<f64>,
    pub theta_star: Vec<f64>,
    /// Iteration reported alongside the last one in the summary.
    pub checkpoint: usize,
}

impl Fig2Params {
    pub fn new(seed: u64) -> Self {
        Fig2Params {
            seed,
            sigma: 4.0,
            n: 100_000,
            iters: 250,
            theta0: vec![1.0, 1.0],
            theta_star: vec![1.0, 0.0],
            checkpoint: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fig2Report {
    /// Polished empirical risk minimizer; distances are measured to its orbit.
    pub theta_hat: Vec<f64>,
    pub polish_grad_norm: f64,
    pub traces: Vec<(String, OptimTrace)>,
}

impl Fig2Report {
    pub fn trace(&self, label: &str) -> Option<&OptimTrace> {
        self.traces.iter().find(|(l, _)| l == label).map(|(_, t)| t)
    }

    /// Orbit distance to `θ̂` at `iter` (or the last record when earlier).
    pub fn dist_hat(&self, label: &str, iter: usize) -> Option<f64> {
        let t = self.trace(label)?;
        let rec = t.records.iter().take_while(|r| r.iter <= iter).last()?;
        Some(rec.dists[0])
    }

    pub fn final_dist_hat(&self, label: &str) -> Option<f64> {
        Some(self.trace(label)?.last().dists[0])
    }
}

pub const FIG2_METHODS: [&str; 3] = ["em", "gd", "agd"];

pub fn fig2(ctx: &RunContext, p: &Fig2Params) -> Result<Fig2Report> {
    let started = Instant::now();
    let pool = parallel::pool(ctx.threads)?;
    let g = groups::rotations(3)?;
    let data = model::sample_dataset(&g, &p.theta_star, p.sigma, p.n, p.seed, HLaw::Uniform)?;
    let risk = RiskModel::new(&g, &data)?;
    let s4 = p.sigma.powi(4);
    let hat = refine(&risk, &p.theta_star, s4, 1000)?;
    let orbits = vec![hat.theta.clone(), p.theta_star.clone()];
    let traces = parallel::try_map(&pool, FIG2_METHODS.len(), |i| {
        let method = Method::parse(FIG2_METHODS[i])?;
        let mut cfg = OptimConfig::new(method, p.iters);
        cfg.grad_tol = Some(0.0);
        if method != Method::Em {
            cfg.eta = Some(s4);
        }
        optim::run(&risk, &cfg, &p.theta0, &orbits)
    })?;
    let meta = |method: &str, eta: f64| {
        json!({
            "figure": "fig2",
            "group": "rotations(3)",
            "theta_star": p.theta_star,
            "sigma": p.sigma,
            "n": p.n,
            "seed": p.seed,
            "iters": p.iters,
            "theta0": p.theta0,
            "method": method,
            "eta": eta,
            "fixed_space_step": true,
            "theta_hat": hat.theta,
        })
    };
    let cols = theta_columns("theta", 2);
    let mut summary = table(
        meta("all", s4),
        &["method", "eta", "dist_hat_checkpoint", "dist_hat_final", "dist_star_final", "risk_final"],
        &[],
    );
    let mut labelled = Vec::new();
    for (label, trace) in FIG2_METHODS.iter().zip(traces) {
        let mut t = table(
            meta(label, trace.eta),
            &["iter", "risk", "grad_norm", "dist_hat", "dist_star"],
            &cols,
        );
        for r in &trace.records {
            let mut row: Vec<Cell> = vec![r.iter.into(), r.risk.into(), r.grad_norm.into()];
            row.extend(r.dists.iter().map(|d| Cell::F(*d)));
            row.extend(theta_cells(&r.theta));
            t.push(row);
        }
        t.write(&ctx.path(&format!("fig2_{label}.csv")))?;
        labelled.push((label.to_string(), trace));
    }
    let report = Fig2Report {
        theta_hat: hat.theta.clone(),
        polish_grad_norm: hat.grad_norm,
        traces: labelled,
    };
    for (label, trace) in &report.traces {
        let last = trace.last();
        summary.push(vec![
            label.as_str().into(),
            trace.eta.into(),
            report.dist_hat(label, p.checkpoint).unwrap_or(f64::NAN).into(),
            last.dists[0].into(),
            last.dists[1].into(),
            last.risk.into(),
        ]);
    }
    summary.meta["checkpoint"] = json!(p.checkpoint);
    summary.write(&ctx.path("fig2_summary.csv"))?;
    if ctx.gnuplot {
        io::write_text(&ctx.path("fig2.gp"), FIG2_GP)?;
    }
    ctx.write_run_info("fig2", started)?;
    Ok(report)
}

const FIG2_GP: &str = "set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set terminal pngcairo size 1000,400
set output 'fig2.png'
set multiplot layout 1,2
set logscale y
set xlabel 'iteration'
set ylabel 'orbit distance to theta hat'
plot for [m in 'em gd agd'] 'fig2_'.m.'.csv' using 1:4 with lines title m
set ylabel 'gradient norm'
plot for [m in 'em gd agd'] 'fig2_'.m.'.csv' using 1:3 with lines title m
unset multiplot
";

// ---------------------------------------------------------------- fig 4

#[derive(Clone, Debug)]
pub struct Fig4Params {
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub n: usize,
    pub starts: usize,
    pub iters: usize,
    /// AGD iterations used to locate the registered minimizers.
    pub register_iters: usize,
}

impl Fig4Params {
    pub fn new(seed: u64) -> Self {
        Fig4Params {
            seed,
            sigmas: vec![5.0, 5.4, 5.8, 6.2],
            n: 100_000,
            starts: 100,
            iters: 250,
            register_iters: 1000,
        }
    }

    /// The original scale: `n = 10⁶`, 500 starts.
    pub fn full(seed: u64) -> Self {
        Fig4Params {
            n: 1_000_000,
            starts: 500,
            ..Self::new(seed)
        }
    }
}

/// The cyclic(6) signal with power spectrum `(1, 4, 1)` and
/// `v_0 = 0`: `s = (1, 4)`, `s_{d/2} = 1`.
pub fn fig4_theta_star() -> Result<Vec<f64>> {
    Ok(SpectrumWeights::new(6, vec![1.0, 4.0], Some(1.0))?.realize())
}

/// The spurious reference `μ*`: phases shifted by `t^1` with the half
/// coefficient kept, which is off the orbit of `θ*`.
pub fn fig4_mu_star(theta_star: &[f64]) -> Result<Vec<f64>> {
    let t = mra::critical_family(6, 1, Branch::Plus)?;
    Ok(mra::theta_from_phase(theta_star, &t, Branch::Plus)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Registered {
    pub label: &'static str,
    pub theta: Vec<f64>,
    pub grad_norm: f64,
    pub min_eig: f64,
    pub class: PointClass,
}

#[derive(Clone, Debug)]
pub struct Fig4Level {
    pub sigma: f64,
    pub eta: f64,
    /// `θ̂` first, then `μ̂` when it is a distinct minimizer orbit.
    pub registered: Vec<Registered>,
    pub fractions: BasinFractions,
    pub outcomes: Vec<BasinOutcome>,
}

impl Fig4Level {
    /// Fraction of runs ending at the `μ̂` orbit.
    pub fn spurious_fraction(&self) -> f64 {
        self.fractions.fractions.get(1).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct Fig4Report {
    pub theta_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub levels: Vec<Fig4Level>,
}

fn register(
    risk: &RiskModel<'_>,
    label: &'static str,
    start: &[f64],
    eta: f64,
    iters: usize,
) -> Result<Registered> {
    let pol = refine(risk, start, eta, iters)?;
    let ev = linalg::sym_eigenvalues(&risk.hessian(&pol.theta)?)?;
    Ok(Registered {
        label,
        grad_norm: pol.grad_norm,
        min_eig: ev.first().copied().unwrap_or(0.0),
        class: landscape::classify(&ev),
        theta: pol.theta,
    })
}

fn fig4_level(
    pool: &rayon::ThreadPool,
    g: &GroupAction,
    data: &Dataset,
    p: &Fig4Params,
    theta_star: &[f64],
    mu_star: &[f64],
) -> Result<Fig4Level> {
    let risk = RiskModel::new(g, data)?;
    let eta0 = landscape::local_step(&risk, theta_star)?;
    let hat = register(&risk, "theta_hat", theta_star, eta0, p.register_iters)?;
    let eta = landscape::local_step(&risk, &hat.theta)?;
    let mu = register(&risk, "mu_hat", mu_star, eta, p.register_iters)?;
    let mut registered = vec![hat];
    let distinct = groups::orbit_distance(g, &mu.theta, &registered[0].theta)? > landscape::BASIN_RADIUS;
    if distinct && mu.class == PointClass::Minimizer {
        registered.push(mu);
    }
    let orbits: Vec<Vec<f64>> = registered.iter().map(|r| r.theta.clone()).collect();
    let mut cfg = OptimConfig::new(Method::Agd, p.iters);
    cfg.eta = Some(eta);
    cfg.record_every = p.iters;
    let start_seed = rng::derive_seed(p.seed, FIG4_START_STREAM);
    let outcomes = parallel::try_map(pool, p.starts, |i| {
        landscape::basin_run(&risk, &cfg, start_seed, i as u64, &orbits)
    })?;
    Ok(Fig4Level {
        sigma: data.sigma(),
        eta,
        fractions: landscape::summarize_basins(&outcomes, orbits.len()),
        registered,
        outcomes,
    })
}

/// Stream index for the basin starting points, shared by all noise levels.
const FIG4_START_STREAM: u64 = 4;

pub fn fig4(ctx: &RunContext, p: &Fig4Params) -> Result<Fig4Report> {
    let started = Instant::now();
    let pool = parallel::pool(ctx.threads)?;
    let g = groups::cyclic(6)?;
    let theta_star = fig4_theta_star()?;
    let mu_star = fig4_mu_star(&theta_star)?;
    let mut levels = Vec::new();
    for &sigma in &p.sigmas {
        let data = model::sample_dataset(&g, &theta_star, sigma, p.n, p.seed, HLaw::Uniform)?;
        levels.push(fig4_level(&pool, &g, &data, p, &theta_star, &mu_star)?);
    }
    let meta = json!({
        "figure": "fig4",
        "group": "cyclic(6)",
        "theta_star": theta_star,
        "mu_star": mu_star,
        "sigmas": p.sigmas,
        "n": p.n,
        "starts": p.starts,
        "iters": p.iters,
        "register_iters": p.register_iters,
        "seed": p.seed,
        "method": "agd",
        "basin_radius": landscape::BASIN_RADIUS,
        "init": "N(0, Id)",
    });
    let mut basins = Table::new(
        meta.clone(),
        &["sigma", "eta", "orbits", "frac_theta_hat", "frac_mu_hat", "unresolved", "runs"],
    );
    let mut reg = table(meta.clone(), &["sigma", "orbit", "grad_norm", "min_eig"], &theta_columns("theta", 6));
    let mut scatter = table(
        meta,
        &["sigma", "start", "assigned", "iterations", "dist_theta_hat", "dist_mu_hat", "diverged"],
        &[],
    );
    for lv in &levels {
        basins.push(vec![
            lv.sigma.into(),
            lv.eta.into(),
            lv.registered.len().into(),
            lv.fractions.fractions[0].into(),
            lv.spurious_fraction().into(),
            lv.fractions.unresolved.into(),
            lv.fractions.runs.into(),
        ]);
        for r in &lv.registered {
            let mut row: Vec<Cell> = vec![lv.sigma.into(), r.label.into(), r.grad_norm.into(), r.min_eig.into()];
            row.extend(theta_cells(&r.theta));
            reg.push(row);
        }
        for o in &lv.outcomes {
            let assigned = o.assigned.map_or("none", |i| lv.registered[i].label);
            scatter.push(vec![
                lv.sigma.into(),
                (o.index as usize).into(),
                assigned.into(),
                o.iterations.into(),
                o.dists.first().copied().unwrap_or(f64::NAN).into(),
                o.dists.get(1).copied().unwrap_or(f64::NAN).into(),
                (o.error.is_some() as usize).into(),
            ]);
        }
    }
    basins.write(&ctx.path("fig4_basins.csv"))?;
    reg.write(&ctx.path("fig4_registered.csv"))?;
    scatter.write(&ctx.path("fig4_scatter.csv"))?;
    if ctx.gnuplot {
        io::write_text(&ctx.path("fig4.gp"), FIG4_GP)?;
    }
    ctx.write_run_info("fig4", started)?;
    Ok(Fig4Report {
        theta_star,
        mu_star,
        levels,
    })
}

const FIG4_GP: &str = "set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set terminal pngcairo size 1000,400
set output 'fig4.png'
set multiplot layout 1,2
set xlabel 'sigma'
set ylabel 'fraction'
set yrange [0:1]
plot 'fig4_basins.csv' using 1:5 with linespoints title 'to mu hat'
set autoscale y
set xlabel 'distance to theta hat orbit'
set ylabel 'distance to mu hat orbit'
plot 'fig4_scatter.csv' using 5:6 with points pt 7 ps 0.5 notitle
unset multiplot
";

/// Lists the files a figure writes, for reporting.
pub fn outputs(dir: &Path, figure: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with(figure))
                })
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}
