use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use phonoquery::grid::{self, Cell, GridPlan};
use phonoquery::io::{self, LanguageSource};
use phonoquery::server;
use phonoquery::session::{self, SessionExport, SessionStore};
use phonoquery_core::experiment::{run_experiment, RunConfig};
use phonoquery_core::inference::{Hyperparams, SweepMode};
use phonoquery_core::learner::Learner;
use phonoquery_core::policies::PolicyKind;

#[derive(Parser)]
#[command(name = "phonoquery", version, about = "Active learning of phonotactic grammars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulated experiment.
    Run(RunArgs),
    /// Write a language bundle (lexicon, test set, penalized constraints).
    Language {
        #[arg(long, default_value = "atr")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the hyperparameter grid, skipping finished runs.
    Grid(GridArgs),
    /// Summarize a grid directory into per-cell CSV and selection analyses.
    Summarize {
        #[arg(long)]
        grid: PathBuf,
        /// Directory for cells.csv and analyses.json; defaults to the grid directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step mean AUC, standard error and train fraction for one policy.
    ExportCurves {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "atr")]
        language: String,
        #[arg(long)]
        policy: PolicyKind,
        /// Cell label such as v0.25_p0.1_sinf; defaults to the policy's best cell.
        #[arg(long)]
        cell: Option<Cell>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refit a posterior from a dataset or a session export.
    Replay(ReplayArgs),
    /// Serve elicitation sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct HyperArgs {
    /// log(log(α/(1−α))), the noise strength on a log scale.
    #[arg(long = "alpha-loglog", default_value_t = 0.5)]
    alpha_loglog: f64,
    #[arg(long, default_value_t = 0.1)]
    prior: f64,
    /// Sweeps per update: 1 or inf.
    #[arg(long, default_value = "inf", value_parser = parse_steps)]
    steps: SweepMode,
    #[arg(long, default_value_t = 100)]
    k: usize,
}

impl HyperArgs {
    fn hyperparams(&self) -> Result<Hyperparams> {
        let hp = Hyperparams::new(self.alpha_loglog, self.prior, self.steps)?;
        Ok(Hyperparams { k: self.k, ..hp })
    }
}

fn parse_steps(s: &str) -> Result<SweepMode, String> {
    grid::parse_steps(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// atr, generated, or a bundle path.
    #[arg(long, default_value = "atr")]
    language: LanguageSource,
    #[arg(long)]
    policy: PolicyKind,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "T", default_value_t = phonoquery_core::experiment::DEFAULT_STEPS)]
    total_steps: usize,
    /// Directory for steps.jsonl, dataset.jsonl, posterior.json and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "atr,generated")]
    languages: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    /// Restrict to these cells, e.g. v1_p0.05_sinf,v0.1_p0.001_s1.
    #[arg(long, value_delimiter = ',')]
    cells: Option<Vec<Cell>>,
    #[arg(long, default_value_t = grid::ATR_SEEDS)]
    atr_seeds: u64,
    #[arg(long, default_value_t = grid::GENERATED_SEEDS)]
    generated_seeds: u64,
    #[arg(long = "T", default_value_t = phonoquery_core::experiment::DEFAULT_STEPS)]
    total_steps: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Worker threads; also read from PHONOQUERY_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Dataset JSONL of {word, label, step} rows.
    #[arg(long, conflicts_with = "export", required_unless_present = "export")]
    dataset: Option<PathBuf>,
    /// Session export JSON; its hyperparameters are used.
    #[arg(long)]
    export: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Fail unless the refit posterior is bit-identical to this one.
    #[arg(long)]
    check: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
    /// Session persistence directory; sessions live in memory when absent.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Built UI bundle to serve at /.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
    /// Language whose lexicon serves train and hybrid sessions: atr, generated or a bundle path.
    #[arg(long, default_value = "atr")]
    lexicon: LanguageSource,
    #[arg(long, default_value_t = 0)]
    lexicon_seed: u64,
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let language = args.language.load(args.seed)?;
    let cfg = RunConfig { policy: args.policy, hp: args.hyper.hyperparams()?, seed: args.seed, total_steps: args.total_steps };
    let out = run_experiment(&language, &cfg)?;
    match &args.out {
        Some(dir) => {
            io::write_json(dir.join("config.json"), &cfg)?;
            io::write_jsonl(dir.join("steps.jsonl"), &out.records)?;
            io::write_jsonl(dir.join("dataset.jsonl"), &io::dataset_rows(&out.records))?;
            io::write_json(dir.join("posterior.json"), out.learner.posterior())?;
            io::write_json(dir.join("summary.json"), &out.summary)?;
            println!("mean-AUC {:.4} over {} steps; wrote {}", out.summary.mean_auc, out.records.len(), dir.display());
        }
        None => print!("{}", io::step_log(&out.records)),
    }
    Ok(())
}

fn run_grid(args: GridArgs) -> Result<()> {
    let languages = args.languages.iter().map(|l| grid::parse_language_kind(l)).collect::<Result<Vec<_>, _>>()?;
    let plan = GridPlan {
        languages,
        policies: args.policies.unwrap_or_else(|| PolicyKind::ALL.to_vec()),
        cells: args.cells.unwrap_or_else(grid::grid_cells),
        atr_seeds: (0..args.atr_seeds).collect(),
        generated_seeds: (0..args.generated_seeds).collect(),
        total_steps: args.total_steps,
        k: args.k,
    };
    let workers = args.workers.unwrap_or_else(grid::default_workers);
    let report = grid::run_grid(&plan, &args.out, workers)?;
    println!("{} runs completed, {} skipped", report.completed, report.skipped);
    summarize(&args.out, &args.out)
}

fn summarize(grid_dir: &Path, out: &Path) -> Result<()> {
    let results = grid::load_results(grid_dir)?;
    if results.is_empty() {
        bail!("no finished runs under {}", grid_dir.display());
    }
    let cells = grid::summarize_cells(&results);
    fs::create_dir_all(out)?;
    grid::write_cell_csv(fs::File::create(out.join("cells.csv"))?, &cells)?;
    let analyses = grid::analyses(&results);
    io::write_json(out.join("analyses.json"), &analyses)?;
    for (name, rows) in [("atr", &analyses.upper_bound_atr), ("generated", &analyses.upper_bound_generated)] {
        if rows.is_empty() {
            continue;
        }
        println!("upper bound, {name}:");
        for c in rows {
            println!("  {:<14} {:<18} median {:.3} ± {:.3} (n={})", c.policy, c.cell.to_string(), c.median_mean_auc, c.std_err, c.n_seeds);
        }
    }
    Ok(())
}

fn export_curves(grid_dir: PathBuf, language: String, policy: PolicyKind, cell: Option<Cell>, out: Option<PathBuf>) -> Result<()> {
    let kind = grid::parse_language_kind(&language)?;
    let results = grid::load_results(&grid_dir)?;
    let cell = match cell {
        Some(c) => c,
        None => grid::upper_bound(&grid::summarize_cells(&results), kind)
            .into_iter()
            .find(|c| c.policy == policy)
            .map(|c| c.cell)
            .with_context(|| format!("no {policy} runs for {language}"))?,
    };
    let agg = grid::curves(&results, kind, policy, &cell)?;
    let mut buf = Vec::new();
    grid::write_curves_csv(&mut buf, &agg)?;
    write_or_print(out.as_ref(), std::str::from_utf8(&buf)?)
}

fn replay(args: ReplayArgs) -> Result<()> {
    let posterior = match (&args.dataset, &args.export) {
        (_, Some(path)) => {
            let export: SessionExport = io::read_json(path)?;
            session::replay_export(&export)?
        }
        (Some(path), None) => {
            let rows = io::read_dataset(path)?;
            let learner = Learner::replay(args.hyper.hyperparams()?, rows.iter().map(|r| (&r.word, r.label)))?;
            learner.posterior().clone()
        }
        (None, None) => bail!("pass --dataset or --export"),
    };
    if let Some(path) = &args.check {
        let expected = io::read_posterior(path)?;
        let same = expected.values().iter().zip(posterior.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            bail!("replayed posterior differs from {}", path.display());
        }
        eprintln!("posterior matches {}", path.display());
    }
    write_or_print(args.out.as_ref(), &(serde_json::to_string(&posterior)? + "\n"))
}

fn serve(args: ServeArgs) -> Result<()> {
    let lexicon = args.lexicon.load(args.lexicon_seed)?.lexicon;
    let store = match &args.data_dir {
        Some(dir) => SessionStore::open(dir, lexicon)?,
        None => SessionStore::in_memory(lexicon),
    };
    let app = server::router(Arc::new(store), args.ui_dir);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(args.addr, app))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Language { kind, seed, out } => {
            let source: LanguageSource = kind.parse()?;
            if matches!(source, LanguageSource::Bundle(_)) {
                bail!("--kind must be atr or generated");
            }
            io::write_json(&out, &source.load(seed)?)?;
            Ok(())
        }
        Command::Grid(args) => run_grid(args),
        Command::Summarize { grid, out } => {
            let out = out.unwrap_or_else(|| grid.clone());
            summarize(&grid, &out)
        }
        Command::ExportCurves { grid, language, policy, cell, out } => export_curves(grid, language, policy, cell, out),
        Command::Replay(args) => replay(args),
        Command::Serve(args) => serve(args),
    }
}
