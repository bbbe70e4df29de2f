//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use orbit_core::landscape::{self, FisherMethod, SearchConfig};
use orbit_core::model::{self, Dataset, HLaw};
use orbit_core::mra::{self, Branch, Certificate, SpectrumWeights};
use orbit_core::optim::{self, Method, OptimConfig};
use orbit_core::risk::RiskModel;
use orbit_core::series::{self, SeriesExpansion, SeriesMethod};
use orbit_core::GroupAction;
use serde_json::{json, Value};

use crate::config::{parse_vector, ExperimentConfig, GroupSpec};
use crate::error::{CliError, Result};
use crate::io::{self, Cell, Table};
use crate::parallel;
use crate::repro::{self, RunContext};

#[derive(Debug, Parser)]
#[command(name = "orbit", version, about = "Likelihood landscapes for orbit recovery")]
pub struct Cli {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset Y = gθ* + σε.
    Generate(GenerateArgs),
    /// Empirical risk, gradient and Hessian at a point.
    RiskEval(RiskEvalArgs),
    /// Run EM, GD or AGD on a dataset.
    Optimize(OptimizeArgs),
    /// Multi-start critical point survey.
    Landscape(LandscapeArgs),
    /// Fisher information and its graded spectrum.
    Fisher(FisherArgs),
    /// Terms of the high-noise series expansion.
    Series(SeriesArgs),
    /// Phase-space analysis for multi-reference alignment.
    Mra(MraArgs),
    /// Reproduce a figure.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Group expression such as `cyclic(6)`, or a group JSON file.
    #[arg(long)]
    pub group: Option<String>,
    /// Comma-separated θ*.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_star: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: GroupArgs,
    #[arg(long)]
    pub n: Option<usize>,
    /// `uniform`, `fixed(i)` or `weights(w1,...,wK)`.
    #[arg(long, default_value = "uniform")]
    pub h_law: String,
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Csv,
    Bin,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file (`.csv` or `.bin`).
    #[arg(long)]
    pub data: PathBuf,
    /// Group; defaults to the dataset's recorded group.
    #[arg(long)]
    pub group: Option<String>,
}

#[derive(Debug, Args)]
pub struct RiskEvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    /// Highest derivative order (0 to 2).
    #[arg(long, default_value_t = 2)]
    pub order: usize,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `em`, `gd` or `agd`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Start; defaults to a standard normal draw from the seed.
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<String>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    /// Orbit whose distance is tracked; defaults to the dataset's θ*.
    #[arg(long, allow_hyphen_values = true)]
    pub reference: Option<String>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub starts: Option<usize>,
    /// AGD iterations per start before polishing.
    #[arg(long)]
    pub iters: Option<usize>,
    /// AGD step size (default σ²)
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub dedup_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FisherKind {
    Mc,
    Series,
    Quadrature,
}

#[derive(Debug, Args)]
pub struct FisherArgs {
    #[command(flatten)]
    pub model: GroupArgs,
    #[arg(long, value_enum, default_value = "series")]
    pub method: FisherKind,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 100_000)]
    pub mc_n: usize,
    /// Series truncation order.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Quadrature nodes per axis.
    #[arg(long, default_value_t = 40)]
    pub order: usize,
    /// Band dimensions, e.g. `1,2,2`, for the graded spectrum report.
    #[arg(long)]
    pub dims: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SeriesKind {
    Generic,
    Meanzero,
    Decomposed,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    #[command(flatten)]
    pub model: GroupArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long, default_value_t = 3)]
    pub max_l: usize,
    #[arg(long, value_enum, default_value = "generic")]
    pub method: SeriesKind,
    /// Truncation order of `R^k` (needs `--sigma`).
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Monte Carlo size for the truncation gap (needs `--sigma`).
    #[arg(long)]
    pub gap_n: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Construct {
    Even,
    Odd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    #[value(name = "+", alias = "plus")]
    Plus,
    #[value(name = "-", alias = "minus")]
    Minus,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::Plus => Branch::Plus,
            BranchArg::Minus => Branch::Minus,
        }
    }
}

#[derive(Debug, Args)]
pub struct MraArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Power spectrum weights `s_1..s_m`, then `s_{d/2}` when `d` is even.
    #[arg(long)]
    pub s: Option<String>,
    #[arg(long, value_enum)]
    pub construct: Option<Construct>,
    /// Restrict the survey to one branch.
    #[arg(long, value_enum, allow_hyphen_values = true)]
    pub branch: Option<BranchArg>,
    /// `grid:N` starts per phase axis.
    #[arg(long, default_value = "grid:24")]
    pub survey: String,
    /// Even construction: initial `s_{d/2}`.
    #[arg(long, default_value_t = 0.1)]
    pub s_last: f64,
    /// Odd construction: `d = 2m + 1`.
    #[arg(long, default_value_t = 26)]
    pub m: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig4,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    /// Fig. 4 at the original scale (n = 10⁶, 500 starts).
    #[arg(long)]
    pub full: bool,
    /// Also write gnuplot scripts.
    #[arg(long)]
    pub gnuplot: bool,
    /// Override the sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Fig. 4: number of random starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Fig. 4: comma-separated noise levels.
    #[arg(long)]
    pub sigmas: Option<String>,
}

/// Flags merged over the config file.
struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    threads: Option<usize>,
    out: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = match &cli.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if cli.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.outputs.as_ref().and_then(|o| o.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Ctx {
            seed: cli.seed.or(cfg.seed).unwrap_or(0),
            threads: cli.threads,
            out,
            cfg,
        })
    }

    fn group(&self, flag: Option<&str>) -> Result<(GroupAction, String)> {
        let spec = match flag {
            Some(s) => GroupSpec::Expr(s.to_string()),
            None => self
                .cfg
                .group
                .clone()
                .ok_or_else(|| CliError::Config("no group given (--group or config)".into()))?,
        };
        Ok((spec.build()?, spec.label()))
    }

    fn theta_star(&self, flag: Option<&str>) -> Result<Vec<f64>> {
        match flag {
            Some(s) => parse_vector(s),
            None => self
                .cfg
                .theta_star
                .clone()
                .ok_or_else(|| CliError::Config("no theta_star given (--theta-star or config)".into())),
        }
    }

    fn sigma(&self, flag: Option<f64>) -> Result<f64> {
        let s = match flag {
            Some(s) => s,
            None => {
                let all = self
                    .cfg
                    .sigma
                    .as_ref()
                    .ok_or_else(|| CliError::Config("no sigma given (--sigma or config)".into()))?
                    .values();
                match all.as_slice() {
                    [s] => *s,
                    _ => return Err(CliError::Config("this command takes a single sigma".into())),
                }
            }
        };
        if !(s > 0.0 && s.is_finite()) {
            return Err(CliError::Config(format!("sigma must be positive, got {s}")));
        }
        Ok(s)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn config_echo(&self) -> Value {
        let mut v = serde_json::to_value(&self.cfg).unwrap_or(Value::Null);
        v["seed"] = json!(self.seed);
        v
    }

    fn load_data(&self, args: &DataArgs) -> Result<(Dataset, GroupAction, String)> {
        let data = io::load_dataset(&args.data)?;
        let flag = args.group.as_deref().or(data.meta.group.as_deref());
        let (g, label) = self.group(flag)?;
        if g.dim() != data.dim() {
            return Err(CliError::Config(format!(
                "group acts on R^{} but the dataset has d = {}",
                g.dim(),
                data.dim()
            )));
        }
        Ok((data, g, label))
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::RiskEval(a) => risk_eval(&ctx, a),
        Command::Optimize(a) => optimize(&ctx, a),
        Command::Landscape(a) => landscape_cmd(&ctx, a),
        Command::Fisher(a) => fisher(&ctx, a),
        Command::Series(a) => series_cmd(&ctx, a),
        Command::Mra(a) => mra_cmd(&ctx, a),
        Command::Repro(a) => repro_cmd(&ctx, a),
    }
}

fn print_json(path: &Path, value: &Value) -> Result<()> {
    io::write_json(path, value)?;
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
    Ok(())
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    let (g, label) = ctx.group(a.model.group.as_deref())?;
    let theta_star = ctx.theta_star(a.model.theta_star.as_deref())?;
    let sigma = ctx.sigma(a.model.sigma)?;
    let n = a
        .n
        .or(ctx.cfg.n)
        .ok_or_else(|| CliError::Config("no sample size given (--n or config)".into()))?;
    let law = HLaw::parse(&a.h_law).map_err(|e| CliError::Config(e.to_string()))?;
    let mut data = model::sample_dataset(&g, &theta_star, sigma, n, ctx.seed, law)?;
    data.meta.group = Some(label);
    let format = match a.format {
        Some(f) => f,
        None => match ctx.cfg.outputs.as_ref().and_then(|o| o.format.as_deref()) {
            Some("bin") => DataFormat::Bin,
            _ => DataFormat::Csv,
        },
    };
    let path = ctx.path(match format {
        DataFormat::Csv => "data.csv",
        DataFormat::Bin => "data.bin",
    });
    io::save_dataset(&path, &data)?;
    io::write_group_json(&ctx.path("group.json"), &g)?;
    println!("wrote {} ({n} x {})", path.display(), g.dim());
    Ok(())
}

fn risk_eval(ctx: &Ctx, a: &RiskEvalArgs) -> Result<()> {
    let (data, g, label) = ctx.load_data(&a.data)?;
    let theta = parse_vector(&a.theta)?;
    if a.order > 2 {
        return Err(CliError::Config("--order must be 0, 1 or 2".into()));
    }
    let r = RiskModel::new(&g, &data)?.eval(&theta, a.order)?;
    let out = json!({
        "group": label,
        "sigma": data.sigma(),
        "n": data.n(),
        "theta": theta,
        "value": r.value,
        "gradient": r.grad,
        "hessian": r.hess.as_ref().map(|h| h.to_rows()),
    });
    print_json(&ctx.path("risk_eval.json"), &out)
}

fn optimize(ctx: &Ctx, a: &OptimizeArgs) -> Result<()> {
    let (data, g, label) = ctx.load_data(&a.data)?;
    let risk = RiskModel::new(&g, &data)?;
    let methods: Vec<String> = match (&a.method, &ctx.cfg.methods, &ctx.cfg.method) {
        (Some(m), _, _) => vec![m.clone()],
        (None, Some(ms), _) => ms.clone(),
        (None, None, Some(m)) => vec![m.clone()],
        _ => vec!["agd".into()],
    };
    let iters = a.iters.or(ctx.cfg.iters).unwrap_or(250);
    let theta0 = match &a.theta0 {
        Some(s) => parse_vector(s)?,
        None => landscape::initial_point(g.dim(), ctx.seed, 0),
    };
    let reference = match &a.reference {
        Some(s) => Some(parse_vector(s)?),
        None => data.meta.theta_star.clone(),
    };
    let orbits: Vec<Vec<f64>> = reference.into_iter().collect();
    for name in methods {
        let method = Method::parse(&name).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = OptimConfig::new(method, iters);
        cfg.eta = a.eta.or(ctx.cfg.eta);
        cfg.grad_tol = a.grad_tol;
        cfg.record_every = a.record_every;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let trace = optim::run(&risk, &cfg, &theta0, &orbits)?;
        let mut meta = ctx.config_echo();
        meta["command"] = json!("optimize");
        meta["data"] = json!(a.data.data.display().to_string());
        meta["group"] = json!(label);
        meta["method"] = json!(method.label());
        meta["eta"] = json!(trace.eta);
        meta["iters"] = json!(iters);
        meta["theta0"] = json!(theta0);
        meta["grad_tol"] = json!(cfg.tolerance(data.sigma()));
        meta["reference"] = json!(orbits.first());
        let mut cols = vec!["iter".to_string(), "risk".into(), "grad_norm".into()];
        if !orbits.is_empty() {
            cols.push("dist".into());
        }
        cols.extend((1..=g.dim()).map(|i| format!("theta_{i}")));
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut t = Table::new(meta, &col_refs);
        for r in &trace.records {
            let mut row: Vec<Cell> = vec![r.iter.into(), r.risk.into(), r.grad_norm.into()];
            row.extend(r.dists.iter().map(|d| Cell::F(*d)));
            row.extend(r.theta.iter().map(|v| Cell::F(*v)));
            t.push(row);
        }
        let path = ctx.path(&format!("trace_{}.csv", method.label()));
        t.write(&path)?;
        println!("{} -> {}", optim::summary(&trace), path.display());
    }
    Ok(())
}

fn landscape_cmd(ctx: &Ctx, a: &LandscapeArgs) -> Result<()> {
    let (data, g, label) = ctx.load_data(&a.data)?;
    let risk = RiskModel::new(&g, &data)?;
    let starts = a.starts.or(ctx.cfg.starts).unwrap_or(20);
    if starts == 0 {
        return Err(CliError::Config("--starts must be at least 1".into()));
    }
    let mut search = SearchConfig::new(a.iters.or(ctx.cfg.iters).unwrap_or(500));
    search.dedup_tol = a.dedup_tol;
    // ∇²R_n ⪯ I/σ² everywhere, so σ² is a safe step from any start.
    search.optim.eta = Some(a.eta.or(ctx.cfg.eta).unwrap_or(data.sigma() * data.sigma()));
    search.optim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let orbits: Vec<Vec<f64>> = data.meta.theta_star.clone().into_iter().collect();
    let pool = parallel::pool(ctx.threads)?;
    let outcomes = parallel::try_map(&pool, starts, |i| {
        landscape::survey_start(&risk, &search, ctx.seed, i as u64, &orbits)
    })?;
    let survey = landscape::merge_critical_points(&g, outcomes, search.dedup_tol)?;
    let mut meta = ctx.config_echo();
    meta["command"] = json!("landscape");
    meta["group"] = json!(label);
    meta["starts"] = json!(starts);
    meta["agd_iters"] = json!(search.optim.max_iters);
    meta["eta"] = json!(search.optim.step(data.sigma()));
    meta["failures"] = json!(survey.failures.len());
    let mut cols = vec!["class", "hits", "grad_norm", "min_eig", "max_eig", "dist_reference"];
    let names: Vec<String> = (1..=g.dim()).map(|i| format!("theta_{i}")).collect();
    cols.extend(names.iter().map(String::as_str));
    let mut t = Table::new(meta, &cols);
    for p in &survey.points {
        let mut row: Vec<Cell> = vec![
            p.class.label().into(),
            p.hits.into(),
            p.grad_norm.into(),
            p.min_eig.into(),
            p.max_eig.into(),
            match orbits.first() {
                Some(o) => orbit_core::groups::orbit_distance(&g, &p.theta, o)?.into(),
                None => f64::NAN.into(),
            },
        ];
        row.extend(p.theta.iter().map(|v| Cell::F(*v)));
        t.push(row);
    }
    let path = ctx.path("critical_points.csv");
    t.write(&path)?;
    for (i, why) in &survey.failures {
        eprintln!("start {i}: {why}");
    }
    println!(
        "{} critical orbits from {starts} starts ({} failed) -> {}",
        survey.points.len(),
        survey.failures.len(),
        path.display()
    );
    Ok(())
}

fn fisher(ctx: &Ctx, a: &FisherArgs) -> Result<()> {
    let (g, label) = ctx.group(a.model.group.as_deref())?;
    let theta_star = ctx.theta_star(a.model.theta_star.as_deref())?;
    let sigma = ctx.sigma(a.model.sigma)?;
    let method = match a.method {
        FisherKind::Mc => FisherMethod::MonteCarlo {
            n: a.mc_n,
            seed: ctx.seed,
        },
        FisherKind::Series => FisherMethod::Series { k: a.k },
        FisherKind::Quadrature => FisherMethod::Quadrature { order: a.order },
    };
    let f = landscape::fisher_information(&g, &theta_star, sigma, method)?;
    let bands = match &a.dims {
        Some(s) => {
            let dims = s
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| CliError::Config(format!("cannot parse --dims '{s}'")))?;
            let rep = landscape::graded_spectrum(&f, sigma, &dims)?;
            json!({
                "dims": rep.dims,
                "all_resolved": rep.all_resolved(),
                "bands": rep.bands.iter().map(|b| json!({
                    "ell": b.ell,
                    "indices": b.indices,
                    "eigvals": b.eigvals,
                    "ratios": b.ratios,
                    "resolved": b.resolved,
                })).collect::<Vec<_>>(),
            })
        }
        None => Value::Null,
    };
    let out = json!({
        "group": label,
        "theta_star": theta_star,
        "sigma": sigma,
        "method": method.label(),
        "matrix": f.matrix.to_rows(),
        "eigvals": f.eigvals,
        "std_err": f.std_err.as_ref().map(|m| m.to_rows()),
        "bands": bands,
    });
    print_json(&ctx.path("fisher.json"), &out)
}

fn series_cmd(ctx: &Ctx, a: &SeriesArgs) -> Result<()> {
    let (g, label) = ctx.group(a.model.group.as_deref())?;
    let theta_star = ctx.theta_star(a.model.theta_star.as_deref())?;
    let theta = parse_vector(&a.theta)?;
    let method = match a.method {
        SeriesKind::Generic => SeriesMethod::Generic,
        SeriesKind::Meanzero => SeriesMethod::MeanZero,
        SeriesKind::Decomposed => SeriesMethod::Decomposed,
    };
    let max_l = a.max_l.max(2 * a.k);
    let exp = SeriesExpansion::new(&g, &theta_star, max_l)?;
    let terms = (1..=a.max_l)
        .map(|l| exp.s_ell(&theta, l, method))
        .collect::<orbit_core::Result<Vec<_>>>()?;
    let sigma = match a.model.sigma {
        Some(s) => Some(ctx.sigma(Some(s))?),
        None if ctx.cfg.sigma.is_some() => Some(ctx.sigma(None)?),
        None => None,
    };
    let mut out = json!({
        "group": label,
        "theta_star": theta_star,
        "theta": theta,
        "method": format!("{method:?}").to_lowercase(),
        "s": terms,
    });
    if let Some(sigma) = sigma {
        out["sigma"] = json!(sigma);
        out["k"] = json!(a.k);
        out["truncated_risk"] = json!(exp.truncated_risk(&theta, sigma, a.k, 0)?.value);
        if let Some(n) = a.gap_n {
            let gap = series::truncation_gap(&exp, sigma, &theta, a.k, n, ctx.seed)?;
            out["gap"] = json!({"n": n, "estimate": gap.gap, "std_err": gap.std_err});
        }
    } else if a.gap_n.is_some() {
        return Err(CliError::Config("--gap-n needs --sigma".into()));
    }
    print_json(&ctx.path("series.json"), &out)
}

fn parse_survey(s: &str) -> Result<usize> {
    s.strip_prefix("grid:")
        .and_then(|n| n.trim().parse().ok())
        .filter(|n: &usize| *n > 0)
        .ok_or_else(|| CliError::Config(format!("--survey expects grid:N, got '{s}'")))
}

fn certificate_json(c: &Certificate) -> Value {
    json!({
        "passed": c.passed,
        "attempts": c.attempts,
        "points": c.points.iter().map(|p| json!({
            "a": p.a,
            "branch": branch_label(p.branch),
            "t": p.t,
            "grad_norm": p.grad_norm,
            "min_eig": p.min_eig,
            "passed": p.passed,
        })).collect::<Vec<_>>(),
    })
}

fn branch_label(b: Branch) -> &'static str {
    match b {
        Branch::Plus => "+",
        Branch::Minus => "-",
    }
}

fn mra_cmd(ctx: &Ctx, a: &MraArgs) -> Result<()> {
    let grid = parse_survey(&a.survey)?;
    let (weights, cert) = match (a.construct, &a.s) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("give either --s or --construct, not both".into()));
        }
        (Some(Construct::Even), None) => {
            let d = a.d.unwrap_or(6);
            let (w, c) = mra::spurious_even(d, a.s_last)?;
            (w, Some(c))
        }
        (Some(Construct::Odd), None) => {
            let (w, c) = mra::spurious_odd(a.m, a.eps, a.delta)?;
            (w, Some(c))
        }
        (None, Some(s)) => {
            let d = a
                .d
                .ok_or_else(|| CliError::Config("--s needs --d".into()))?;
            let mut s = parse_vector(s)?;
            let half = if d % 2 == 0 { s.pop() } else { None };
            let w = SpectrumWeights::new(d, s, half).map_err(|e| CliError::Config(e.to_string()))?;
            (w, None)
        }
        (None, None) => return Err(CliError::Config("give --s with --d, or --construct".into())),
    };
    let branches: Vec<Branch> = match a.branch {
        Some(b) => vec![b.into()],
        None if weights.d % 2 == 0 => vec![Branch::Plus, Branch::Minus],
        None => vec![Branch::Plus],
    };
    let theta_star = weights.realize();
    let survey_allowed = mra::num_phases(weights.d) <= 8;
    let mut surveys = Vec::new();
    if survey_allowed {
        for &b in &branches {
            let mins = mra::phase_minimize(&weights, b, grid, ctx.seed)?;
            let points = mins
                .iter()
                .map(|m| {
                    let theta = mra::theta_from_phase(&theta_star, &m.t, b)?;
                    Ok(json!({
                        "t": m.t,
                        "value": m.value,
                        "grad_norm": m.grad_norm,
                        "min_eig": m.min_eig,
                        "theta": theta,
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            surveys.push(json!({"branch": branch_label(b), "minima": points}));
        }
    }
    let out = json!({
        "d": weights.d,
        "s": weights.s,
        "s_half": weights.s_half,
        "theta_star": theta_star,
        "survey": if survey_allowed { json!({"grid": grid, "seed": ctx.seed}) } else { Value::Null },
        "branches": surveys,
        "certificate": cert.as_ref().map(certificate_json),
    });
    print_json(&ctx.path("mra.json"), &out)
}

fn repro_cmd(ctx: &Ctx, a: &ReproArgs) -> Result<()> {
    let gnuplot = a.gnuplot || ctx.cfg.outputs.as_ref().and_then(|o| o.gnuplot).unwrap_or(false);
    let run = RunContext {
        out: ctx.out.clone(),
        threads: ctx.threads,
        gnuplot,
    };
    let n = a.n.or(ctx.cfg.n);
    match a.figure {
        Figure::Fig1 => {
            let mut p = repro::Fig1Params::new(ctx.seed);
            if let Some(n) = n {
                for lv in &mut p.levels {
                    lv.1 = n;
                }
            }
            let rep = repro::fig1(&run, &p)?;
            for panel in &rep.panels {
                println!(
                    "sigma={} n={} grid minima={} argmin=({:.3}, {:.3})",
                    panel.sigma,
                    panel.n,
                    panel.local_minima.len(),
                    panel.argmin[0],
                    panel.argmin[1]
                );
            }
        }
        Figure::Fig2 => {
            let mut p = repro::Fig2Params::new(ctx.seed);
            if let Some(n) = n {
                p.n = n;
            }
            if let Some(it) = ctx.cfg.iters {
                p.iters = it;
            }
            let rep = repro::fig2(&run, &p)?;
            for (label, trace) in &rep.traces {
                println!(
                    "{label}: dist to theta_hat at {} = {:.3e}, final = {:.3e}",
                    p.checkpoint,
                    rep.dist_hat(label, p.checkpoint).unwrap_or(f64::NAN),
                    trace.last().dists[0]
                );
            }
        }
        Figure::Fig4 => {
            let mut p = if a.full {
                repro::Fig4Params::full(ctx.seed)
            } else {
                repro::Fig4Params::new(ctx.seed)
            };
            if let Some(n) = n {
                p.n = n;
            }
            if let Some(s) = a.starts.or(ctx.cfg.starts) {
                p.starts = s;
            }
            if let Some(it) = ctx.cfg.iters {
                p.iters = it;
            }
            if let Some(s) = &a.sigmas {
                p.sigmas = parse_vector(s)?;
            } else if let Some(s) = &ctx.cfg.sigma {
                p.sigmas = s.values();
            }
            if p.starts == 0 || p.n == 0 || p.sigmas.iter().any(|s| s.is_nan() || *s <= 0.0) {
                return Err(CliError::Config("fig4 needs positive n, starts and sigmas".into()));
            }
            let rep = repro::fig4(&run, &p)?;
            for lv in &rep.levels {
                println!(
                    "sigma={} orbits={} to_theta_hat={:.3} to_mu_hat={:.3} unresolved={:.3}",
                    lv.sigma,
                    lv.registered.len(),
                    lv.fractions.fractions[0],
                    lv.spurious_fraction(),
                    lv.fractions.unresolved
                );
            }
        }
    }
    Ok(())
}
