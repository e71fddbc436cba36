use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pre_core::boosting::BoostModel;
use pre_core::experiment::{ExperimentConfig, ExperimentReport, Method, PreparedIteration, Profile, Runtime};
use pre_core::matrix::sample_sd;
use pre_core::surrogate::{make_generated, SurrogateSeeds};
use pre_core::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "pre", version, about = "Prediction rule ensembles with surrogate and nested Lasso selection")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace). Overridden by RUST_LOG.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its reports.
    Run(RunArgs),
    /// Print summary tables from a saved report.
    Summarize(SummarizeArgs),
    /// Fit one iteration and print the selected rules with coefficients.
    InspectModel(InspectArgs),
    /// Write an oracle-labelled generated dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Named scale profile: desk (20/100/2000) or paper (200/500/10000).
    #[arg(long)]
    profile: Option<Profile>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_toml_file(&self.config)?;
        if let Some(p) = self.profile {
            cfg.apply_profile(p);
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Override the number of iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Output directory (default: config `output_dir`, else `results/<name>`).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads for parallel iterations (default: all cores).
    #[arg(long, conflicts_with = "serial")]
    threads: Option<usize>,
    /// Run iterations one after another.
    #[arg(long)]
    serial: bool,
    /// Do not print the summary.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SummaryFormat {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct SummarizeArgs {
    /// A report.json file or the directory containing it.
    report: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: SummaryFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value_t = 0)]
    iteration: usize,
    /// Selection method; `boosting` lists every extracted term without coefficients.
    #[arg(long, default_value = "regular", value_parser = parse_method)]
    method: Method,
    /// Use a saved boosting model instead of fitting one.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Save the boosting model as JSON.
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Iteration whose training half seeds the generator.
    #[arg(long, default_value_t = 0)]
    iteration: usize,
    /// Use a saved boosting model as the oracle.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Rows to draw before duplicate removal.
    #[arg(long)]
    n_gen: Option<usize>,
    /// Generator seed (default: derived from the iteration seed).
    #[arg(long)]
    gen_seed: Option<u64>,
    /// Output CSV; provenance goes to `<output>.provenance.json`.
    #[arg(long, short)]
    output: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown method '{s}' (expected boosting, regular, surrogate or nested)"))
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level)).init();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Summarize(a) => summarize(a),
        Command::InspectModel(a) => inspect(a),
        Command::Generate(a) => generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord {
                error: e.kind(),
                message: e.to_string(),
            };
            let json = serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()));
            eprintln!("{json}");
            ExitCode::FAILURE
        }
    }
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = a.experiment.load()?;
    if let Some(n) = a.iterations {
        cfg.n_iterations = n;
    }
    let out = a
        .output
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let report = match a.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| pre_core::experiment::run_experiment(&cfg, true))?
        }
        None => pre_core::experiment::run_experiment(&cfg, !a.serial)?,
    };
    report.write_all(&out)?;
    log::info!("reports written to {}", out.display());
    if !a.quiet {
        print!("{}", report.summarize());
    }
    Ok(())
}

fn load_report(path: &Path) -> Result<ExperimentReport> {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let mut report = ExperimentReport::from_json(&text)?;
    // Timings live beside the report.
    if let Some(dir) = file.parent() {
        let rt = dir.join("runtimes.csv");
        if rt.is_file() {
            let mut reader = csv::Reader::from_path(&rt)?;
            report.runtimes = reader.deserialize::<Runtime>().collect::<std::result::Result<_, _>>()?;
        }
    }
    Ok(report)
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let report = load_report(&a.report)?;
    let stdout = std::io::stdout();
    match a.format {
        SummaryFormat::Text => print!("{}", report.summarize()),
        SummaryFormat::Json => {
            let v = serde_json::json!({
                "name": report.name,
                "task": report.task,
                "included": report.included_iterations(),
                "excluded": report.excluded,
                "summaries": report.summaries,
                "pairwise": report.pairwise,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        SummaryFormat::Csv => report.write_results_csv(stdout.lock())?,
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<BoostModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    BoostModel::from_json(&text)
}

fn prepare(exp: &ExperimentArgs, iteration: usize, model: Option<&Path>) -> Result<(ExperimentConfig, PreparedIteration)> {
    let cfg = exp.load()?;
    let data = cfg.dataset.load()?;
    let oracle = model.map(load_model).transpose()?;
    let prep = PreparedIteration::new(&cfg, &data, iteration, oracle)?;
    Ok((cfg, prep))
}

#[derive(Serialize)]
struct TermRow {
    term: usize,
    coefficient: Option<f64>,
    importance: Option<f64>,
    description: String,
}

#[derive(Serialize)]
struct Inspection {
    method: Method,
    iteration: usize,
    outcome: String,
    intercept: Option<f64>,
    candidate_terms: usize,
    terms: Vec<TermRow>,
}

fn inspect(a: InspectArgs) -> Result<()> {
    let (cfg, prep) = prepare(&a.experiment, a.iteration, a.model.as_deref())?;
    if let Some(path) = &a.save_model {
        std::fs::write(path, prep.model.to_json()?).map_err(|e| Error::io(path, e))?;
    }
    let spec = &prep.terms.spec;
    let (intercept, mut rows): (Option<f64>, Vec<TermRow>) = if a.method == Method::Boosting {
        let rows = spec
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| TermRow {
                term: i,
                coefficient: None,
                importance: None,
                description: t.to_string(),
            })
            .collect();
        (None, rows)
    } else {
        let sel = prep.select(&cfg, a.method)?;
        let rows = sel
            .coefficients()
            .into_iter()
            .map(|(i, c)| TermRow {
                term: i,
                coefficient: Some(c),
                importance: Some(c.abs() * sample_sd(prep.terms.values.col(i))),
                description: spec.terms[i].to_string(),
            })
            .collect();
        (Some(sel.fit.intercept), rows)
    };
    rows.sort_by(|x, y| y.importance.unwrap_or(0.0).total_cmp(&x.importance.unwrap_or(0.0)).then(x.term.cmp(&y.term)));
    let report = Inspection {
        method: a.method,
        iteration: a.iteration,
        outcome: prep.data.outcome_name().unwrap_or_default().to_string(),
        intercept,
        candidate_terms: spec.len(),
        terms: rows,
    };
    let mut out = std::io::stdout().lock();
    match a.format {
        OutputFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?),
        OutputFormat::Text => write_inspection(&mut out, &report),
    }
    .map_err(|e| Error::io("<stdout>", e))
}

fn write_inspection(out: &mut impl std::io::Write, r: &Inspection) -> std::io::Result<()> {
    writeln!(
        out,
        "{} model, iteration {}, outcome {}: {} of {} candidate terms",
        r.method.name(),
        r.iteration,
        r.outcome,
        r.terms.len(),
        r.candidate_terms
    )?;
    if let Some(b0) = r.intercept {
        writeln!(out, "{:>12}  {:>10}  (intercept)", format!("{b0:.4}"), "")?;
        writeln!(out, "{:>12}  {:>10}  term", "coefficient", "importance")?;
    }
    for t in &r.terms {
        match (t.coefficient, t.importance) {
            (Some(c), Some(i)) => writeln!(out, "{c:>12.4}  {i:>10.4}  {}", t.description)?,
            _ => writeln!(out, "{:>5}  {}", t.term, t.description)?,
        }
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let (cfg, prep) = prepare(&a.experiment, a.iteration, a.model.as_deref())?;
    let mut gen = cfg.gen.with_seed(a.gen_seed.unwrap_or(SurrogateSeeds::derive(prep.seed).level1_gen));
    if let Some(n) = a.n_gen {
        gen.n_gen = n;
    }
    gen.validate()?;
    let generated = make_generated(&prep.train, &prep.model, &gen)?;
    generated.write_csv(&a.output)?;
    let mut prov_path = a.output.clone().into_os_string();
    prov_path.push(".provenance.json");
    let prov = serde_json::to_string_pretty(&generated.provenance)? + "\n";
    std::fs::write(&prov_path, &prov).map_err(|e| Error::io(PathBuf::from(&prov_path), e))?;
    print!("{prov}");
    Ok(())
}
