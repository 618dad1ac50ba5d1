//! `branchdiff` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod settings;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use branchdiff::bgw::{
    compare_surface, extinct_fraction, ks_distance, qsd_eigenvector_with, simulate, to_continuum,
    DiscreteModel, EigenMethod, Geometric, McConfig, OffspringLaw, Poisson, QsdVector,
    SolverOptions, Window,
};
use branchdiff::density::{ARule, SmallThetaQsd};
use branchdiff::feller::{qsd_subcritical, supercritical_stationary, yaglom_critical, FellerLaw};
use branchdiff::moments::{
    compositions, rescale_moments, sampling_distribution, sampling_distribution_clamped,
    MomentMethod, MomentReport, SampleCounts,
};
use branchdiff::parse::{parse_counts, parse_vector};

use settings::{config_err, CliError, CliResult, ModelArgs, Settings};

const CSV_HELP: &str = "\
CSV output: comma separated, header row, 17 significant digits.
  feller        x,density,atom,p0
  qsd-approx    x,u,density            (--component surface)
                type,x,density         (--component line)
  qsd-numeric   m,x,probability,g      (one type)
                m,i,x,u,probability,g  (two types)
  compare       x,u,discrete,continuum
JSON summaries of qsd-numeric and compare go to --json PATH, else stderr.
Config file: [section] per subcommand with key = value using the long flag
names; keys before any section apply to every command. Flags win.
Exit codes: 0 success, 1 numerical failure, 2 config error.
BRANCHDIFF_THREADS caps worker threads (the current build runs one).";

#[derive(Debug, Parser)]
#[command(name = "branchdiff", version, about = "Quasi-stationary laws of neutral branching diffusions", after_help = CSV_HELP)]
struct Cli {
    /// Config file with one [section] per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (default stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Clamp negative small-θ densities and probabilities to zero.
    #[arg(long, global = true)]
    clip_negative: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FellerKind {
    Mixture,
    Qsd,
    Yaglom,
    Supercritical,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Default,
    Split,
}

impl RuleArg {
    fn rule(self) -> ARule {
        match self {
            Self::Default => ARule::Default,
            Self::Split => ARule::Split,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Solve,
    Spectral,
    Pim,
    SmallTheta,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Subspace,
    Power,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LawArg {
    Poisson,
    Geometric,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Component {
    Surface,
    Line,
}

#[derive(Debug, Clone, Default, clap::Args)]
struct DiscreteArgs {
    /// Mean offspring number λ (default 0.975).
    #[arg(long)]
    lambda: Option<f64>,
    /// Truncation on the total population (default 160).
    #[arg(long)]
    m_max: Option<u64>,
    /// Eigen-solver.
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Eigen-residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Feller diffusion law on a grid.
    Feller {
        /// Growth rate α.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Diffusion time (mixture law).
        #[arg(long)]
        t: Option<f64>,
        /// Grid start:stop:step.
        #[arg(long)]
        x: Option<String>,
        /// Law to tabulate (default mixture).
        #[arg(long, value_enum)]
        law: Option<FellerKind>,
        /// Supercritical law conditioned on non-extinction.
        #[arg(long)]
        conditioned: bool,
    },
    /// Small-θ quasi-stationary density on a grid.
    QsdApprox {
        #[command(flatten)]
        model: ModelArgs,
        /// Growth rate α < 0 (default −0.5).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// a-rule for three or more types (default `default`).
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        /// Surface on a type pair, or the line densities.
        #[arg(long, value_enum)]
        component: Option<Component>,
        /// Type pair of the surface, e.g. 0,1.
        #[arg(long)]
        pair: Option<String>,
        /// Total-size grid start:stop:step (default 0.05:8:0.05).
        #[arg(long)]
        x: Option<String>,
        /// Type-fraction grid inside (0, 1) (default 0.01:0.99:0.01).
        #[arg(long)]
        u: Option<String>,
    },
    /// First and second moments of the quasi-stationary law (JSON).
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        /// Growth rate α < 0 (default −0.5).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Second-moment method (default solve).
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Small-θ sampling distribution of type counts (JSON).
    SampleDist {
        #[command(flatten)]
        model: ModelArgs,
        /// Growth rate α < 0 (default −0.5).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Tabulate every composition of this sample size.
        #[arg(long)]
        n_total: Option<u64>,
        /// A single composition, e.g. 2,0.
        #[arg(long)]
        counts: Option<String>,
    },
    /// Quasi-stationary vector of the truncated discrete chain.
    QsdNumeric {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        discrete: DiscreteArgs,
        /// Growth rate α < 0 (default −0.5).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// 1 or 2 types.
        #[arg(long)]
        types: Option<u64>,
        /// JSON summary path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Discrete quasi-stationary surface against the small-θ density.
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        discrete: DiscreteArgs,
        /// Growth rate α < 0 (default −0.5).
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// a-rule for three or more types (default `default`).
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        /// x window lo,hi.
        #[arg(long)]
        x_range: Option<String>,
        /// u window lo,hi.
        #[arg(long)]
        u_range: Option<String>,
        /// JSON summary path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Monte Carlo of the discrete process (JSON).
    Mc {
        /// Mean offspring number λ (default 1).
        #[arg(long)]
        lambda: Option<f64>,
        /// Offspring law (default poisson).
        #[arg(long, value_enum)]
        law: Option<LawArg>,
        /// Replicates (default 1000).
        #[arg(long)]
        reps: Option<u64>,
        /// Generations (default 100).
        #[arg(long)]
        tau: Option<u64>,
        /// Initial population (default 1).
        #[arg(long)]
        y0: Option<u64>,
        /// Initial type-1 count (two types).
        #[arg(long)]
        y1: Option<u64>,
        /// 1 or 2 types.
        #[arg(long)]
        types: Option<u64>,
        /// Per-offspring mutation probability 1 → 2.
        #[arg(long)]
        r12: Option<f64>,
        /// Per-offspring mutation probability 2 → 1.
        #[arg(long)]
        r21: Option<f64>,
        /// Stop paths at this size, counting them as survivors.
        #[arg(long)]
        cap: Option<u64>,
    },
}

/// Per-run settings shared by every subcommand.
struct Ctx {
    out: Option<PathBuf>,
    seed: Option<u64>,
    clip_negative: bool,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(w: &mut dyn Write, cells: &[String]) -> io::Result<()> {
    writeln!(w, "{}", cells.join(","))
}

fn open_out(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: Option<&Path>, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut w = open_out(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn summary_json(path: Option<&Path>, value: &Value) -> CliResult<()> {
    match path {
        Some(_) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            eprintln!("{text}");
            Ok(())
        }
    }
}

fn pair_range(
    s: &Settings,
    flag: Option<&str>,
    key: &str,
    default: (f64, f64),
) -> CliResult<(f64, f64)> {
    match s.string(flag, key) {
        None => Ok(default),
        Some(v) => {
            let p = parse_vector(&v)?;
            if p.len() != 2 || !(p[1] > p[0]) {
                return config_err(format!("{key}: expected lo,hi with lo < hi"));
            }
            Ok((p[0], p[1]))
        }
    }
}

fn threads() -> CliResult<usize> {
    match std::env::var("BRANCHDIFF_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => config_err(format!(
                "BRANCHDIFF_THREADS must be a positive integer, got '{v}'"
            )),
        },
    }
}

fn clip(v: f64, on: bool) -> f64 {
    if on && v < 0.0 {
        0.0
    } else {
        v
    }
}

fn model_json(m: &settings::Model) -> Value {
    let g = m.rates.gamma();
    let gamma: Vec<Vec<f64>> = (0..g.nrows())
        .map(|i| g.row(i).iter().copied().collect())
        .collect();
    let p = &m.theta.p;
    let pm: Vec<Vec<f64>> = (0..p.nrows())
        .map(|i| p.row(i).iter().copied().collect())
        .collect();
    json!({
        "source": m.source,
        "theta": m.theta.theta,
        "pi": m.theta.pi.iter().copied().collect::<Vec<_>>(),
        "p": pm,
        "gamma": gamma,
    })
}

fn cmd_feller(
    cli: &Ctx,
    s: &Settings,
    alpha: Option<f64>,
    t: Option<f64>,
    x: Option<&str>,
    law: Option<FellerKind>,
    conditioned: bool,
) -> CliResult<()> {
    let alpha = s.f64_req(alpha, "alpha")?;
    let t = s.f64_or(t, "t", 1.0)?;
    let grid = s.grid(x, "x", "0:8:0.01")?;
    let kind = match law {
        Some(k) => k,
        None => match s.raw("law") {
            None | Some("mixture") => FellerKind::Mixture,
            Some("qsd") => FellerKind::Qsd,
            Some("yaglom") => FellerKind::Yaglom,
            Some("supercritical") => FellerKind::Supercritical,
            Some(v) => return config_err(format!("unknown law '{v}'")),
        },
    };
    let conditioned = s.flag(conditioned, "conditioned")?;
    let mut w = open_out(cli.out.as_deref())?;
    row(&mut w, &["x", "density", "atom", "p0"].map(String::from))?;
    match kind {
        FellerKind::Mixture => {
            let fl = FellerLaw::new(alpha, t)?;
            let law = fl.law();
            for x in grid.points() {
                row(
                    &mut w,
                    &[
                        fmt17(x),
                        fmt17(law.density(x)),
                        fmt17(law.atom),
                        fmt17(fl.p0()),
                    ],
                )?;
            }
        }
        FellerKind::Qsd => {
            for x in grid.points() {
                row(
                    &mut w,
                    &[
                        fmt17(x),
                        fmt17(qsd_subcritical(x, alpha)?),
                        fmt17(0.0),
                        fmt17(1.0),
                    ],
                )?;
            }
        }
        FellerKind::Yaglom => {
            for x in grid.points() {
                row(
                    &mut w,
                    &[fmt17(x), fmt17(yaglom_critical(x)?), fmt17(0.0), fmt17(1.0)],
                )?;
            }
        }
        FellerKind::Supercritical => {
            let p0 = (-2.0 * alpha).exp();
            for x in grid.points() {
                let (atom, d) = supercritical_stationary(x, alpha, conditioned)?;
                row(&mut w, &[fmt17(x), fmt17(d), fmt17(atom), fmt17(p0)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn rule_of(s: &Settings, flag: Option<RuleArg>) -> CliResult<ARule> {
    Ok(match flag {
        Some(r) => r.rule(),
        None => match s.raw("rule") {
            None | Some("default") => ARule::Default,
            Some("split") => ARule::Split,
            Some(v) => return config_err(format!("unknown rule '{v}'")),
        },
    })
}

/// Surface density in (x, u) for the pair (i, j) at growth rate α.
fn surface_xu(
    q: &SmallThetaQsd,
    i: usize,
    j: usize,
    x: f64,
    u: f64,
    alpha: f64,
) -> branchdiff::Result<f64> {
    let mut pt = vec![0.0; q.d()];
    pt[i] = x * u;
    pt[j] = x * (1.0 - u);
    Ok(x * q.rescale_alpha(&pt, alpha)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_qsd_approx(
    cli: &Ctx,
    s: &Settings,
    margs: &ModelArgs,
    alpha: Option<f64>,
    rule: Option<RuleArg>,
    component: Option<Component>,
    pair: Option<&str>,
    x: Option<&str>,
    u: Option<&str>,
) -> CliResult<()> {
    let model = margs.resolve(s)?;
    let alpha = s.f64_or(alpha, "alpha", -0.5)?;
    let q = SmallThetaQsd::new(model.theta.clone(), rule_of(s, rule)?)?;
    let clip_on = s.flag(cli.clip_negative, "clip-negative")?;
    let component = match component {
        Some(c) => c,
        None => match s.raw("component") {
            None | Some("surface") => Component::Surface,
            Some("line") => Component::Line,
            Some(v) => return config_err(format!("unknown component '{v}'")),
        },
    };
    let xs = s.grid(x, "x", "0.05:8:0.05")?;
    let mut w = open_out(cli.out.as_deref())?;
    match component {
        Component::Surface => {
            let pr = parse_counts(&s.string(pair, "pair").unwrap_or_else(|| "0,1".into()))?;
            if pr.len() != 2 || pr[0] == pr[1] || pr.iter().any(|&k| k as usize >= q.d()) {
                return config_err("pair must name two distinct types");
            }
            let (i, j) = (pr[0] as usize, pr[1] as usize);
            let us = s.grid(u, "u", "0.01:0.99:0.01")?;
            if us.start() <= 0.0 || us.points().last().is_some_and(|&v| v >= 1.0) {
                return config_err("u grid must lie strictly inside (0, 1)");
            }
            row(&mut w, &["x", "u", "density"].map(String::from))?;
            for xv in xs.points() {
                if xv <= 0.0 {
                    continue;
                }
                for uv in us.points() {
                    let g = clip(surface_xu(&q, i, j, xv, uv, alpha)?, clip_on);
                    row(&mut w, &[fmt17(xv), fmt17(uv), fmt17(g)])?;
                }
            }
        }
        Component::Line => {
            row(&mut w, &["type", "x", "density"].map(String::from))?;
            for i in 0..q.d() {
                for xv in xs.points() {
                    if xv <= 0.0 {
                        continue;
                    }
                    let mut pt = vec![0.0; q.d()];
                    pt[i] = xv;
                    let g = clip(q.rescale_alpha(&pt, alpha)?, clip_on);
                    row(&mut w, &[i.to_string(), fmt17(xv), fmt17(g)])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn report_for(
    method: MomentMethod,
    alpha: f64,
    model: &settings::Model,
) -> CliResult<MomentReport> {
    Ok(match method {
        MomentMethod::SmallTheta => {
            let r = MomentReport::small_theta(&model.theta.at_reference(alpha)?);
            rescale_moments(&r, alpha)?
        }
        m => MomentReport::exact(alpha, &model.rates, m)?,
    })
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn cmd_moments(
    cli: &Ctx,
    s: &Settings,
    margs: &ModelArgs,
    alpha: Option<f64>,
    method: Option<MethodArg>,
) -> CliResult<()> {
    let model = margs.resolve(s)?;
    let alpha = s.f64_or(alpha, "alpha", -0.5)?;
    let method = match method {
        Some(MethodArg::Solve) => MomentMethod::LinearSolve,
        Some(MethodArg::Spectral) => MomentMethod::Spectral,
        Some(MethodArg::Pim) => MomentMethod::Pim,
        Some(MethodArg::SmallTheta) => MomentMethod::SmallTheta,
        None => match s.raw("method") {
            None | Some("solve") => MomentMethod::LinearSolve,
            Some("spectral") => MomentMethod::Spectral,
            Some("pim") => MomentMethod::Pim,
            Some("small-theta") => MomentMethod::SmallTheta,
            Some(v) => return config_err(format!("unknown method '{v}'")),
        },
    };
    let report = report_for(method, alpha, &model)?;
    let reference = if method == MomentMethod::LinearSolve {
        let pi = model.rates.stationary_pi()?;
        model
            .rates
            .is_reversible(&pi)
            .then_some(MomentMethod::Spectral)
    } else {
        Some(MomentMethod::LinearSolve)
    };
    let comparison = match reference {
        Some(r) => {
            let other = report_for(r, alpha, &model)?;
            let diff = &report.mu2 - &other.mu2;
            let max_abs = diff.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let max_rel = diff.iter().zip(other.mu2.iter()).fold(0.0f64, |a, (d, o)| {
                a.max(d.abs() / o.abs().max(f64::MIN_POSITIVE))
            });
            json!({ "reference": r.name(), "max_abs_diff": max_abs, "max_rel_diff": max_rel })
        }
        None => Value::Null,
    };
    let out = json!({
        "command": "moments",
        "input": { "model": model_json(&model), "alpha": alpha, "method": method.name() },
        "mean": report.mu.iter().copied().collect::<Vec<_>>(),
        "second_moments": matrix_rows(&report.mu2),
        "comparison": comparison,
    });
    write_json(cli.out.as_deref(), &out)
}

fn cmd_sample_dist(
    cli: &Ctx,
    s: &Settings,
    margs: &ModelArgs,
    alpha: Option<f64>,
    n_total: Option<u64>,
    counts: Option<&str>,
) -> CliResult<()> {
    let model = margs.resolve(s)?;
    let alpha = s.f64_or(alpha, "alpha", -0.5)?;
    let reference = model.theta.at_reference(alpha)?;
    let clip_on = s.flag(cli.clip_negative, "clip-negative")?;
    let d = reference.d();
    let list: Vec<SampleCounts> = match (s.string(counts, "counts"), s.u64_opt(n_total, "n-total")?)
    {
        (Some(c), _) => vec![SampleCounts::new(parse_counts(&c)?)?],
        (None, Some(n)) => {
            let n = u32::try_from(n).map_err(|_| CliError::Config("n-total too large".into()))?;
            if n == 0 || n > 200 {
                return config_err("n-total must lie in 1..=200");
            }
            compositions(n, d)
        }
        (None, None) => return config_err("sample-dist needs --n-total or --counts"),
    };
    let mut table = Vec::with_capacity(list.len());
    let mut sum = 0.0;
    for c in &list {
        let p = if clip_on {
            sampling_distribution_clamped(c, &reference)?
        } else {
            sampling_distribution(c, &reference)?
        };
        sum += p;
        table.push(json!({ "counts": c.counts(), "probability": p }));
    }
    let out = json!({
        "command": "sample-dist",
        "input": { "model": model_json(&model), "alpha": alpha, "clip_negative": clip_on },
        "table": table,
        "sum": sum,
    });
    write_json(cli.out.as_deref(), &out)
}

struct Discrete {
    model: DiscreteModel,
    opts: SolverOptions,
    lambda: f64,
}

fn discrete_model(
    s: &Settings,
    args: &DiscreteArgs,
    alpha: f64,
    types: u64,
    rates: Option<&settings::Model>,
) -> CliResult<Discrete> {
    let lambda = s.f64_or(args.lambda, "lambda", 0.975)?;
    let m_max = s.u64_or(args.m_max, "m-max", 160)?;
    if m_max > 2000 {
        return config_err("m-max above 2000 is not supported");
    }
    let m_max = m_max as usize;
    let model = match (types, rates) {
        (1, _) => DiscreteModel::one_type(Arc::new(Poisson::new(lambda)?), m_max)?,
        (2, Some(r)) => DiscreteModel::matched_two_type(lambda, alpha, &r.rates, m_max)?,
        _ => return config_err("types must be 1 or 2"),
    };
    let solver = match args.solver {
        Some(SolverArg::Subspace) => EigenMethod::Subspace,
        Some(SolverArg::Power) => EigenMethod::Power,
        None => match s.raw("solver") {
            None | Some("subspace") => EigenMethod::Subspace,
            Some("power") => EigenMethod::Power,
            Some(v) => return config_err(format!("unknown solver '{v}'")),
        },
    };
    let mut opts = match solver {
        EigenMethod::Subspace => SolverOptions::default(),
        EigenMethod::Power => SolverOptions::power(),
    };
    if let Some(t) = s.f64(args.tol, "tol")? {
        opts.tol = t;
    }
    Ok(Discrete {
        model,
        opts,
        lambda,
    })
}

fn qsd_json(q: &QsdVector) -> Value {
    json!({
        "eigenvalue": q.eigenvalue,
        "loss": q.loss,
        "residual": q.residual,
        "iterations": q.iterations,
        "boundary_mass": q.total_marginal(q.m_max),
    })
}

fn cmd_qsd_numeric(
    cli: &Ctx,
    s: &Settings,
    margs: &ModelArgs,
    dargs: &DiscreteArgs,
    alpha: Option<f64>,
    types: Option<u64>,
    json_path: Option<&Path>,
) -> CliResult<()> {
    let alpha = s.f64_or(alpha, "alpha", -0.5)?;
    let types = s.u64_or(types, "types", 2)?;
    let rates = if types == 2 {
        Some(margs.resolve(s)?)
    } else {
        None
    };
    let dm = discrete_model(s, dargs, alpha, types, rates.as_ref())?;
    let q = qsd_eigenvector_with(&dm.model, &dm.opts)?;
    let cont = to_continuum(&dm.model, &q, alpha)?;
    let c = cont.scale;
    let mut w = open_out(cli.out.as_deref())?;
    if types == 1 {
        row(&mut w, &["m", "x", "probability", "g"].map(String::from))?;
        for m in 1..=q.m_max {
            let p = q.get(m, 0);
            row(
                &mut w,
                &[m.to_string(), fmt17(c * m as f64), fmt17(p), fmt17(p / c)],
            )?;
        }
    } else {
        row(
            &mut w,
            &["m", "i", "x", "u", "probability", "g"].map(String::from),
        )?;
        for m in 1..=q.m_max {
            for i in 0..=m {
                let p = q.get(m, i);
                row(
                    &mut w,
                    &[
                        m.to_string(),
                        i.to_string(),
                        fmt17(c * m as f64),
                        fmt17(i as f64 / m as f64),
                        fmt17(p),
                        fmt17(m as f64 / c * p),
                    ],
                )?;
            }
        }
    }
    w.flush()?;
    let summary = json!({
        "command": "qsd-numeric",
        "input": {
            "lambda": dm.lambda, "alpha": alpha, "types": types, "m_max": q.m_max,
            "model": rates.as_ref().map(model_json),
        },
        "solver": qsd_json(&q),
        "scale": c,
    });
    summary_json(json_path, &summary)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    cli: &Ctx,
    s: &Settings,
    margs: &ModelArgs,
    dargs: &DiscreteArgs,
    alpha: Option<f64>,
    rule: Option<RuleArg>,
    x_range: Option<&str>,
    u_range: Option<&str>,
    json_path: Option<&Path>,
) -> CliResult<()> {
    let alpha = s.f64_or(alpha, "alpha", -0.5)?;
    if !(alpha < 0.0) {
        return config_err("compare needs alpha < 0");
    }
    let model = margs.resolve(s)?;
    if model.rates.d() != 2 {
        return config_err("compare needs a two-type model");
    }
    let window = Window {
        x: pair_range(s, x_range, "x-range", (0.5, 6.0))?,
        u: pair_range(s, u_range, "u-range", (0.05, 0.95))?,
    };
    let dm = discrete_model(s, dargs, alpha, 2, Some(&model))?;
    let q = qsd_eigenvector_with(&dm.model, &dm.opts)?;
    let cont = to_continuum(&dm.model, &q, alpha)?;
    let theory = SmallThetaQsd::new(model.theta.clone(), rule_of(s, rule)?)?;
    let clip_on = s.flag(cli.clip_negative, "clip-negative")?;
    let d = compare_surface(&cont, &window, |x, u| {
        surface_xu(&theory, 0, 1, x, u, alpha).map(|g| clip(g, clip_on))
    })?;
    let mut w = open_out(cli.out.as_deref())?;
    row(
        &mut w,
        &["x", "u", "discrete", "continuum"].map(String::from),
    )?;
    for &(x, u, g, t) in &d.pairs {
        row(&mut w, &[fmt17(x), fmt17(u), fmt17(g), fmt17(t)])?;
    }
    w.flush()?;
    let verdict = if d.relative_l1 <= 0.10 {
        "agrees"
    } else if d.relative_l1 >= 0.30 {
        "disagrees"
    } else {
        "inconclusive"
    };
    let summary = json!({
        "command": "compare",
        "input": {
            "model": model_json(&model), "lambda": dm.lambda, "alpha": alpha, "m_max": q.m_max,
            "rule": theory.a_rule().name(), "x_range": [window.x.0, window.x.1], "u_range": [window.u.0, window.u.1],
            "clip_negative": clip_on,
        },
        "solver": qsd_json(&q),
        "scale": cont.scale,
        "relative_l1": d.relative_l1,
        "relative_sup": d.relative_sup,
        "cells": d.cells,
        "verdict": verdict,
    });
    summary_json(json_path, &summary)
}

#[allow(clippy::too_many_arguments)]
fn cmd_mc(
    cli: &Ctx,
    s: &Settings,
    lambda: Option<f64>,
    law: Option<LawArg>,
    reps: Option<u64>,
    tau: Option<u64>,
    y0: Option<u64>,
    y1: Option<u64>,
    types: Option<u64>,
    r12: Option<f64>,
    r21: Option<f64>,
    cap: Option<u64>,
) -> CliResult<()> {
    let lambda = s.f64_or(lambda, "lambda", 1.0)?;
    let law_name = match law {
        Some(LawArg::Poisson) => "poisson",
        Some(LawArg::Geometric) => "geometric",
        None => s.raw("law").unwrap_or("poisson"),
    };
    let offspring: Arc<dyn OffspringLaw> = match law_name {
        "poisson" => Arc::new(Poisson::new(lambda)?),
        "geometric" => Arc::new(Geometric::with_mean(lambda)?),
        v => return config_err(format!("unknown offspring law '{v}'")),
    };
    let types = s.u64_or(types, "types", 1)?;
    let (r12, r21) = (s.f64_or(r12, "r12", 0.0)?, s.f64_or(r21, "r21", 0.0)?);
    let model = match types {
        1 => DiscreteModel::one_type(offspring, 2)?,
        2 => DiscreteModel::two_type(offspring, r12, r21, 2)?,
        _ => return config_err("types must be 1 or 2"),
    };
    let y0 = s.u64_or(y0, "y0", 1)?;
    let cfg = McConfig {
        generations: s.u64_or(tau, "tau", 100)?,
        reps: s.u64_or(reps, "reps", 1000)?,
        seed: s.u64_or(cli.seed, "seed", 1)?,
        y0,
        y1_0: s.u64_or(y1, "y1", y0)?,
        cap: s.u64_opt(cap, "cap")?,
    };
    if cfg.reps == 0 || cfg.generations == 0 {
        return config_err("reps and tau must be positive");
    }
    let out = simulate(&model, &cfg)?;
    let survivors: Vec<f64> = out
        .iter()
        .filter(|r| r.survived())
        .map(|r| r.y as f64)
        .collect();
    let capped = out
        .iter()
        .filter(|r| r.outcome == branchdiff::bgw::Outcome::Capped)
        .count();
    let sigma2 = model.sigma2();
    let tau_f = cfg.generations as f64;
    let ks = (!survivors.is_empty()).then(|| {
        let w: Vec<f64> = survivors.iter().map(|y| y / tau_f).collect();
        ks_distance(&w, |x| 1.0 - (-2.0 / sigma2 * x).exp())
    });
    let mean_y =
        (!survivors.is_empty()).then(|| survivors.iter().sum::<f64>() / survivors.len() as f64);
    let summary = json!({
        "command": "mc",
        "input": {
            "lambda": lambda, "law": law_name, "sigma2": sigma2, "reps": cfg.reps, "tau": cfg.generations,
            "y0": cfg.y0, "y1": cfg.y1_0, "types": types, "r12": r12, "r21": r21, "cap": cfg.cap, "seed": cfg.seed,
        },
        "extinct_fraction": extinct_fraction(&out),
        "survivors": survivors.len(),
        "capped": capped,
        "mean_survivor_size": mean_y,
        "ks_exponential": ks,
        "ks_reference": "Y(tau)/tau given survival vs Exp(2/sigma2)",
    });
    write_json(cli.out.as_deref(), &summary)
}

fn run(cli: &Cli) -> CliResult<()> {
    let n = threads()?;
    log::debug!("worker thread cap {n}");
    let section = match &cli.command {
        Command::Feller { .. } => "feller",
        Command::QsdApprox { .. } => "qsd-approx",
        Command::Moments { .. } => "moments",
        Command::SampleDist { .. } => "sample-dist",
        Command::QsdNumeric { .. } => "qsd-numeric",
        Command::Compare { .. } => "compare",
        Command::Mc { .. } => "mc",
    };
    let s = Settings::load(cli.config.as_deref(), section)?;
    let ctx = &Ctx {
        out: cli.out.clone().or_else(|| s.raw("out").map(PathBuf::from)),
        seed: cli.seed,
        clip_negative: cli.clip_negative,
    };
    match &cli.command {
        Command::Feller {
            alpha,
            t,
            x,
            law,
            conditioned,
        } => cmd_feller(ctx, &s, *alpha, *t, x.as_deref(), *law, *conditioned),
        Command::QsdApprox {
            model,
            alpha,
            rule,
            component,
            pair,
            x,
            u,
        } => cmd_qsd_approx(
            ctx,
            &s,
            model,
            *alpha,
            *rule,
            *component,
            pair.as_deref(),
            x.as_deref(),
            u.as_deref(),
        ),
        Command::Moments {
            model,
            alpha,
            method,
        } => cmd_moments(ctx, &s, model, *alpha, *method),
        Command::SampleDist {
            model,
            alpha,
            n_total,
            counts,
        } => cmd_sample_dist(ctx, &s, model, *alpha, *n_total, counts.as_deref()),
        Command::QsdNumeric {
            model,
            discrete,
            alpha,
            types,
            json,
        } => cmd_qsd_numeric(ctx, &s, model, discrete, *alpha, *types, json.as_deref()),
        Command::Compare {
            model,
            discrete,
            alpha,
            rule,
            x_range,
            u_range,
            json,
        } => cmd_compare(
            ctx,
            &s,
            model,
            discrete,
            *alpha,
            *rule,
            x_range.as_deref(),
            u_range.as_deref(),
            json.as_deref(),
        ),
        Command::Mc {
            lambda,
            law,
            reps,
            tau,
            y0,
            y1,
            types,
            r12,
            r21,
            cap,
        } => cmd_mc(
            ctx, &s, *lambda, *law, *reps, *tau, *y0, *y1, *types, *r12, *r21, *cap,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("branchdiff: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
