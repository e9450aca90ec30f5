use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairdiff::config::{AuditConfig, ModelSpec, OutcomeSpec, SensitiveSpec, SplitVarSpec};
use fairdiff::export::{to_dot, to_json, to_text};
use fairdiff::instability::Decorrelation;
use fairdiff::synth::{calibrate, table_to_tsv, Scenario, RNG_ALGORITHM};
use fairdiff::{baseline_metrics, ingest, run_all_pairs, run_audit, AuditResult, Error, Metric};

const EXIT_VALIDATION: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(name = "fairdiff", version, about = "Compare two classifiers' fairness disparities across subgroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy, AUC, PPV, TNR, TPR and disagreement of the two models.
    Metrics(DataArgs),
    /// Grow and prune the instability tree and write the per-node report.
    Audit(DataArgs),
    /// Generate a synthetic table, or run a null calibration study.
    Simulate(SimArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    Text,
    Tsv,
}

#[derive(Args)]
struct DataArgs {
    /// Delimited input file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// TOML audit configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metric: Option<Metric>,
    /// `column[:cutoff]`, also `column>=cutoff` or `column>cutoff`.
    #[arg(long)]
    model_a: Option<String>,
    #[arg(long)]
    model_b: Option<String>,
    /// `column=positive-label`.
    #[arg(long)]
    outcome: Option<String>,
    /// `column:a1,a2`; a bare column audits every pair of levels.
    #[arg(long)]
    sensitive: Option<String>,
    /// Comma-separated `name[:kind]`, kind one of categorical, ordinal, numeric.
    #[arg(long)]
    split_vars: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    min_node: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_bins: Option<usize>,
    /// `symmetric` (default) or `efficient`.
    #[arg(long)]
    decorrelation: Option<Decorrelation>,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SimArgs {
    /// TOML scenario file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Run this many null replications and print root-node rejection rates
    /// instead of a table.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, default_value = "fpr")]
    metric: Metric,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    max_bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

enum Failure {
    Validation(String),
    Degenerate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Degenerate(_) => Failure::Degenerate(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Validation(format!("missing {flag} (give it on the command line or in --config)")))
}

fn parsed<T>(s: &Option<String>, f: fn(&str) -> fairdiff::Result<T>) -> fairdiff::Result<Option<T>> {
    s.as_deref().map(f).transpose()
}

fn resolve_config(a: &DataArgs, default_metric: Option<Metric>) -> Result<AuditConfig, Failure> {
    let base = a.config.as_deref().map(AuditConfig::load).transpose()?;
    let model_a = parsed(&a.model_a, ModelSpec::parse)?;
    let model_b = parsed(&a.model_b, ModelSpec::parse)?;
    let outcome = parsed(&a.outcome, OutcomeSpec::parse)?;
    let sensitive = parsed(&a.sensitive, SensitiveSpec::parse)?;
    let split = a
        .split_vars
        .as_deref()
        .map(|s| s.split(',').filter(|v| !v.trim().is_empty()).map(SplitVarSpec::parse).collect())
        .transpose()?;
    let mut cfg = match base {
        Some(mut c) => {
            c.metric = a.metric.unwrap_or(c.metric);
            c.model_a = model_a.unwrap_or(c.model_a);
            c.model_b = model_b.unwrap_or(c.model_b);
            c.outcome = outcome.or(c.outcome);
            c.sensitive = sensitive.unwrap_or(c.sensitive);
            c.split = split.unwrap_or(c.split);
            c
        }
        None => AuditConfig {
            metric: required(a.metric.or(default_metric), "--metric")?,
            outcome,
            model_a: required(model_a, "--model-a")?,
            model_b: required(model_b, "--model-b")?,
            sensitive: required(sensitive, "--sensitive")?,
            split: split.unwrap_or_default(),
            tree: Default::default(),
            input: Default::default(),
        },
    };
    if let Some(v) = a.alpha {
        cfg.tree.alpha = v;
    }
    if let Some(v) = a.min_node {
        cfg.tree.min_node = v;
    }
    if let Some(v) = a.tau {
        cfg.tree.tau = v;
    }
    if let Some(v) = a.max_bins {
        cfg.tree.max_bins = v;
    }
    if let Some(v) = a.decorrelation {
        cfg.tree.decorrelation = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let res = match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().lock().write_all(bytes).map_err(|e| e.to_string()),
    };
    res.map_err(Failure::Validation)
}

fn cmd_metrics(a: &DataArgs) -> Result<(), Failure> {
    let cfg = resolve_config(a, Some(Metric::Fpr))?;
    let table = ingest(&a.data, &cfg)?;
    let m = baseline_metrics(&table)?;
    for n in &m.notices {
        log::warn!("{n}");
    }
    let bytes = match a.format.unwrap_or(Format::Tsv) {
        Format::Tsv | Format::Text => m.to_tsv(),
        Format::Json => serde_json::to_string_pretty(&m).expect("metrics serialise") + "\n",
        Format::Dot => return Err(Failure::Validation("metrics cannot be written as DOT".into())),
    };
    write_output(a.out.as_deref(), bytes.as_bytes())
}

fn render(results: &[AuditResult], format: Format, all_pairs: bool) -> String {
    match format {
        Format::Tsv => results.iter().map(|r| r.report.to_tsv()).collect::<Vec<_>>().join("\n"),
        Format::Dot => results.iter().map(|r| to_dot(&r.tree)).collect(),
        Format::Text => results.iter().map(|r| to_text(&r.tree)).collect::<Vec<_>>().join("\n"),
        Format::Json if !all_pairs => to_json(&results[0].tree),
        Format::Json => {
            let trees: Vec<_> = results.iter().map(|r| &r.tree).collect();
            serde_json::to_string_pretty(&trees).expect("trees serialise") + "\n"
        }
    }
}

fn cmd_audit(a: &DataArgs) -> Result<(), Failure> {
    let cfg = resolve_config(a, None)?;
    let table = ingest(&a.data, &cfg)?;
    if !table.provenance.rejected.is_empty() {
        log::info!("{} of {} rows rejected", table.provenance.rejected.len(), table.provenance.input_rows);
    }
    let all_pairs = cfg.sensitive.levels.is_empty();
    let results = if all_pairs {
        run_all_pairs(&table, &cfg)?
    } else {
        vec![run_audit(&table, &cfg)?]
    };
    write_output(a.out.as_deref(), render(&results, a.format.unwrap_or(Format::Tsv), all_pairs).as_bytes())?;
    let degenerate: Vec<String> = results
        .iter()
        .filter(|r| r.tree.root_is_degenerate())
        .map(|r| format!("{} vs {}", r.tree.sensitive.a1, r.tree.sensitive.a2))
        .collect();
    if degenerate.is_empty() {
        Ok(())
    } else {
        Err(Failure::Degenerate(format!("degenerate root node: {}", degenerate.join(", "))))
    }
}

fn cmd_simulate(a: &SimArgs) -> Result<(), Failure> {
    if !matches!(a.format, None | Some(Format::Tsv)) {
        return Err(Failure::Validation("simulate writes TSV only".into()));
    }
    let text = std::fs::read_to_string(&a.config).map_err(|e| Failure::Validation(format!("{}: {e}", a.config.display())))?;
    let mut sc = Scenario::from_toml_str(&text)?;
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    if let Some(n) = a.n {
        sc.n = n;
    }
    let mut out = format!("# rng = {RNG_ALGORITHM}\n# seed = {}\n# n = {}\n", sc.seed, sc.n);
    match a.replications {
        Some(r) => {
            out.push_str(&format!("# metric = {}; alpha = {}; max_bins = {}\n", a.metric, a.alpha, a.max_bins));
            out.push_str("covariate\treplications\trejection_rate\tks_distance\n");
            for row in calibrate(&sc, r, a.metric, a.alpha, a.max_bins)? {
                out.push_str(&format!(
                    "{}\t{}\t{:.6}\t{:.6}\n",
                    row.covariate, row.replications, row.rejection_rate, row.ks_distance
                ));
            }
        }
        None => out.push_str(&table_to_tsv(&sc.generate()?)),
    }
    write_output(a.out.as_deref(), out.as_bytes())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Metrics(a) => cmd_metrics(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Degenerate(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DEGENERATE)
        }
    }
}
