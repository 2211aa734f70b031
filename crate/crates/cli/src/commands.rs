use crate::config::JackknifeFlags;
use crate::format::{cell, round_json, sink, write_csv};
use crate::CliError;
use clap::{Args, ValueEnum};
use opj::{
    assign, baseline_report, class_boundaries, fit_control_model, imputation_jackknife, kde_fit,
    opj_run, predict, quantile_boundaries, root_cum_boundaries, run_monte_carlo, Arm, Estimand,
    ExperimentData, JackknifeConfig, ScenarioSpec, SimMethod,
};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Base,
    Impute,
    Opj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimandArg {
    Difference,
    Ratio,
}

impl From<EstimandArg> for Estimand {
    fn from(e: EstimandArg) -> Self {
        match e {
            EstimandArg::Difference => Estimand::Difference,
            EstimandArg::Ratio => Estimand::Ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    RootCum,
    Quantile,
    Class,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Experiment CSV with header `w,y,x1,...,xq`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "opj")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "difference")]
    pub estimand: EstimandArg,
    #[command(flatten)]
    pub jackknife: JackknifeFlags,
    /// Report destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-iteration replicate estimates (opj only).
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// independent, lin-lin, lin-const, quad-quad, quad-const or naive-psf.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, value_enum, default_value = "difference")]
    pub estimand: EstimandArg,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 2000, conflicts_with = "fast")]
    pub reps: usize,
    /// Shorthand for 500 replications.
    #[arg(long)]
    pub fast: bool,
    #[arg(long, default_value_t = 1000)]
    pub n0: usize,
    #[arg(long, default_value_t = 1000)]
    pub n1: usize,
    /// Upper bound on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub jackknife: JackknifeFlags,
    /// Metrics destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-replication estimation errors.
    #[arg(long)]
    pub errors_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StrataArgs {
    /// Experiment CSV with header `w,y,x1,...,xq`.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of strata (ignored by the class rule).
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "root-cum")]
    pub rule: RuleArg,
    /// Stratification variable: `model` (control-arm prediction), `y`, or `x<j>`.
    #[arg(long, default_value = "model")]
    pub psf: String,
    /// Strata table destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of the density grid (root-cum only).
    #[arg(long)]
    pub density_out: Option<PathBuf>,
}

fn load(path: &Path) -> Result<ExperimentData, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(ExperimentData::from_csv(std::io::BufReader::new(file))?)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let cfg = args.jackknife.resolve()?;
    if args.trace_out.is_some() && args.method != MethodArg::Opj {
        return Err(CliError::Usage("--trace-out requires --method opj".into()));
    }
    let data = load(&args.data)?;
    let estimand = Estimand::from(args.estimand);

    let mut replicates = None;
    let report = match args.method {
        MethodArg::Base => baseline_report(&data, estimand, cfg.alpha)?,
        MethodArg::Impute => imputation_jackknife(&data, estimand, &cfg)?,
        MethodArg::Opj => {
            let run = opj_run(&data, estimand, &cfg)?;
            if let Some(path) = &args.trace_out {
                write_trace(path, &run)?;
            }
            replicates = Some(serde_json::json!({
                "iterations": run.traces.len(),
                "merges": run.traces.iter().map(|t| t.merges).sum::<usize>(),
                "degenerate": run.traces.iter().filter(|t| t.degenerate).count(),
            }));
            run.report
        }
    };

    let mut value = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .expect("report serializes to an object");
    obj.insert("n0".into(), data.n_arm(Arm::Control).into());
    obj.insert("n1".into(), data.n_arm(Arm::Treated).into());
    if let Some(r) = replicates {
        obj.insert("replicates".into(), r);
    }
    round_json(&mut value);

    let label = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut out = sink(args.out.as_ref())?;
    let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&label, e))
}

fn write_trace(path: &PathBuf, run: &opj::JackknifeRun) -> Result<(), CliError> {
    let mut rows = vec![
        ["m", "deleted", "estimate", "strata", "merges", "degenerate"]
            .map(String::from)
            .to_vec(),
    ];
    for t in &run.traces {
        let deleted: Vec<String> = t.deleted.iter().map(|b| (b + 1).to_string()).collect();
        rows.push(vec![
            (t.iteration + 1).to_string(),
            deleted.join(" "),
            cell(t.estimate),
            t.boundaries.k().to_string(),
            t.merges.to_string(),
            t.degenerate.to_string(),
        ]);
    }
    write_csv(Some(path), &rows)
}

const METRICS_HEADER: [&str; 9] = [
    "scenario",
    "estimand",
    "method",
    "mean_bias",
    "mean_se",
    "rmse",
    "coverage",
    "reps",
    "seed",
];

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg: JackknifeConfig = args.jackknife.resolve()?;
    let estimand = Estimand::from(args.estimand);
    let naive = args.scenario == "naive-psf";
    let base: ScenarioSpec = if naive {
        "quad-quad".parse()?
    } else {
        args.scenario.parse()?
    };
    if naive && estimand != Estimand::Difference {
        return Err(opj::Error::IllegalScenario(
            "naive-psf runs with the difference estimand only".into(),
        )
        .into());
    }
    let reps = if args.fast { 500 } else { args.reps };
    let spec = ScenarioSpec {
        estimand,
        n0: args.n0,
        n1: args.n1,
        ..base
    }
    .with_reps(reps)
    .with_seed(cfg.seed);
    let methods: Vec<SimMethod> = if naive {
        vec![
            SimMethod::Opj,
            SimMethod::NaivePsf(0),
            SimMethod::NaivePsf(1),
            SimMethod::NaivePsf(2),
        ]
    } else {
        vec![SimMethod::Base, SimMethod::Impute, SimMethod::Opj]
    };
    let label = |m: SimMethod| {
        if naive && m == SimMethod::Opj {
            "yhat0".to_string()
        } else {
            m.label()
        }
    };

    let results = match args.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| run_monte_carlo(&spec, &methods, &cfg))?,
        None => run_monte_carlo(&spec, &methods, &cfg)?,
    };

    let mut rows = vec![METRICS_HEADER.map(String::from).to_vec()];
    for r in &results {
        let m = &r.metrics;
        rows.push(vec![
            args.scenario.clone(),
            estimand.to_string(),
            label(r.method),
            cell(m.mean_bias),
            cell(m.mean_se),
            cell(m.rmse),
            cell(m.coverage),
            reps.to_string(),
            cfg.seed.to_string(),
        ]);
    }
    write_csv(args.out.as_ref(), &rows)?;

    if let Some(path) = &args.errors_out {
        let mut rows = vec![["rep", "method", "error"].map(String::from).to_vec()];
        for r in &results {
            for (rep, e) in r.errors.iter().enumerate() {
                rows.push(vec![rep.to_string(), label(r.method), cell(*e)]);
            }
        }
        write_csv(Some(path), &rows)?;
    }
    Ok(())
}

fn stratification_values(data: &ExperimentData, psf: &str) -> Result<Vec<f64>, CliError> {
    match psf {
        "model" => Ok(predict(&fit_control_model(data)?, data)?),
        "y" => Ok(data.y().to_vec()),
        other => {
            let j = other
                .strip_prefix('x')
                .and_then(|j| j.parse::<usize>().ok())
                .filter(|&j| (1..=data.q()).contains(&j))
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "--psf must be model, y or x1..x{}, got `{other}`",
                        data.q()
                    ))
                })?;
            Ok(data.x_column(j - 1))
        }
    }
}

pub fn strata(args: &StrataArgs) -> Result<(), CliError> {
    if args.density_out.is_some() && args.rule != RuleArg::RootCum {
        return Err(CliError::Usage(
            "--density-out requires --rule root-cum".into(),
        ));
    }
    let data = load(&args.data)?;
    let values = stratification_values(&data, &args.psf)?;

    let mut kde = None;
    let boundaries = match args.rule {
        RuleArg::RootCum => {
            let model = kde_fit(&values)?;
            let b = root_cum_boundaries(&model, args.k)?;
            kde = Some(model);
            b
        }
        RuleArg::Quantile => quantile_boundaries(&values, args.k)?,
        RuleArg::Class => class_boundaries(&values)?,
    };
    let assignment = assign(&boundaries, &values, data.w());

    let mut rows = vec![["stratum", "lower", "upper", "n", "n0", "n1"]
        .map(String::from)
        .to_vec()];
    let cuts = boundaries.cuts();
    for (k, counts) in assignment.counts.iter().enumerate() {
        rows.push(vec![
            (k + 1).to_string(),
            cell(cuts[k]),
            cell(cuts[k + 1]),
            (counts[0] + counts[1]).to_string(),
            counts[0].to_string(),
            counts[1].to_string(),
        ]);
    }
    write_csv(args.out.as_ref(), &rows)?;

    if let (Some(path), Some(model)) = (&args.density_out, kde) {
        let mut rows = vec![vec!["grid".to_string(), "density".to_string()]];
        rows.extend(
            model
                .grid
                .iter()
                .zip(&model.density)
                .map(|(g, d)| vec![cell(*g), cell(*d)]),
        );
        write_csv(Some(path), &rows)?;
    }
    Ok(())
}
