//! Hyperparameter grid runs, per-cell summaries and the three selection
//! analyses (upper bound, out of distribution, leave one seed out).
//!
//! A grid directory holds one `{language}/{policy}/{cell}/seed-{n}.json`
//! summary per finished run next to its `.jsonl` step log. Runs whose summary
//! already exists are skipped, so an interrupted grid resumes where it stopped.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use phonoquery_core::experiment::{aggregate, median, run_experiment, std_err, AggregateSummary, RunConfig, RunSummary};
use phonoquery_core::inference::{Hyperparams, SweepMode};
use phonoquery_core::oracles::{Language, LanguageKind};
use phonoquery_core::policies::PolicyKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{language_for, read_json, write_json, write_jsonl};

pub const LOG_LOG_ALPHA_GRID: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const PRIOR_GRID: [f64; 6] = [0.001, 0.025, 0.05, 0.1, 0.2, 0.35];
pub const STEPS_GRID: [SweepMode; 2] = [SweepMode::One, SweepMode::ToConvergence];

pub const ATR_SEEDS: u64 = 10;
pub const GENERATED_SEEDS: u64 = 9;

/// Environment variable overriding the number of grid worker threads.
pub const WORKERS_ENV: &str = "PHONOQUERY_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub log_log_odds_alpha: f64,
    pub theta_prior: f64,
    pub steps: SweepMode,
}

impl Cell {
    pub fn new(log_log_odds_alpha: f64, theta_prior: f64, steps: SweepMode) -> Self {
        Cell { log_log_odds_alpha, theta_prior, steps }
    }

    pub fn hyperparams(&self, k: usize) -> Result<Hyperparams> {
        let hp = Hyperparams::new(self.log_log_odds_alpha, self.theta_prior, self.steps)?;
        Ok(Hyperparams { k, ..hp })
    }
}

fn steps_label(steps: SweepMode) -> &'static str {
    match steps {
        SweepMode::One => "1",
        SweepMode::ToConvergence => "inf",
    }
}

pub fn parse_steps(s: &str) -> Result<SweepMode> {
    match s {
        "1" => Ok(SweepMode::One),
        "inf" | "∞" => Ok(SweepMode::ToConvergence),
        other => Err(Error::Invalid(format!("steps must be 1 or inf, got {other:?}"))),
    }
}

/// Directory-safe label, e.g. `v0.25_p0.1_sinf`.
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}_p{}_s{}", self.log_log_odds_alpha, self.theta_prior, steps_label(self.steps))
    }
}

impl FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("bad cell label {s:?}"));
        let mut parts = s.split('_');
        let mut field = |prefix: char| parts.next().and_then(|p| p.strip_prefix(prefix)).ok_or_else(bad);
        let v = field('v')?.parse().map_err(|_| bad())?;
        let p = field('p')?.parse().map_err(|_| bad())?;
        let steps = parse_steps(field('s')?)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Cell::new(v, p, steps))
    }
}

/// All 84 cells, ordered by noise, then prior, then sweep mode.
pub fn grid_cells() -> Vec<Cell> {
    let mut cells = Vec::with_capacity(84);
    for v in LOG_LOG_ALPHA_GRID {
        for p in PRIOR_GRID {
            for s in STEPS_GRID {
                cells.push(Cell::new(v, p, s));
            }
        }
    }
    cells
}

pub fn language_name(kind: LanguageKind) -> &'static str {
    match kind {
        LanguageKind::Atr => "atr",
        LanguageKind::Generated => "generated",
    }
}

pub fn parse_language_kind(s: &str) -> Result<LanguageKind> {
    match s {
        "atr" => Ok(LanguageKind::Atr),
        "generated" => Ok(LanguageKind::Generated),
        other => Err(Error::LanguageSource(other.to_owned())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub language: LanguageKind,
    pub policy: PolicyKind,
    pub cell: Cell,
    pub seed: u64,
}

impl RunKey {
    pub fn summary_path(&self, root: &Path) -> PathBuf {
        self.dir(root).join(format!("seed-{}.json", self.seed))
    }

    pub fn log_path(&self, root: &Path) -> PathBuf {
        self.dir(root).join(format!("seed-{}.jsonl", self.seed))
    }

    fn dir(&self, root: &Path) -> PathBuf {
        root.join(language_name(self.language)).join(self.policy.as_str()).join(self.cell.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub key: RunKey,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPlan {
    pub languages: Vec<LanguageKind>,
    pub policies: Vec<PolicyKind>,
    pub cells: Vec<Cell>,
    pub atr_seeds: Vec<u64>,
    pub generated_seeds: Vec<u64>,
    pub total_steps: usize,
    pub k: usize,
}

impl Default for GridPlan {
    fn default() -> Self {
        GridPlan {
            languages: vec![LanguageKind::Atr, LanguageKind::Generated],
            policies: PolicyKind::ALL.to_vec(),
            cells: grid_cells(),
            atr_seeds: (0..ATR_SEEDS).collect(),
            generated_seeds: (0..GENERATED_SEEDS).collect(),
            total_steps: phonoquery_core::experiment::DEFAULT_STEPS,
            k: Hyperparams::default().k,
        }
    }
}

impl GridPlan {
    pub fn seeds(&self, kind: LanguageKind) -> &[u64] {
        match kind {
            LanguageKind::Atr => &self.atr_seeds,
            LanguageKind::Generated => &self.generated_seeds,
        }
    }

    pub fn keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for &language in &self.languages {
            for &policy in &self.policies {
                for &cell in &self.cells {
                    for &seed in self.seeds(language) {
                        keys.push(RunKey { language, policy, cell, seed });
                    }
                }
            }
        }
        keys
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GridReport {
    pub completed: usize,
    pub skipped: usize,
}

/// Worker count from [`WORKERS_ENV`], falling back to the available cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn run_one(language: &Language, key: &RunKey, total_steps: usize, k: usize) -> Result<(RunResult, Vec<phonoquery_core::experiment::StepRecord>)> {
    let cfg = RunConfig { policy: key.policy, hp: key.cell.hyperparams(k)?, seed: key.seed, total_steps };
    let out = run_experiment(language, &cfg)?;
    Ok((RunResult { key: *key, summary: out.summary }, out.records))
}

pub fn run_grid(plan: &GridPlan, root: &Path, workers: usize) -> Result<GridReport> {
    let keys = plan.keys();
    let pending: Vec<RunKey> = keys.iter().copied().filter(|k| !k.summary_path(root).exists()).collect();
    let skipped = keys.len() - pending.len();
    log::info!("{} runs planned, {} already done", keys.len(), skipped);

    let mut languages: BTreeMap<(u8, u64), Language> = BTreeMap::new();
    for key in &pending {
        let id = (key.language as u8, key.seed);
        if let std::collections::btree_map::Entry::Vacant(slot) = languages.entry(id) {
            slot.insert(language_for(key.language, key.seed)?);
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let done = AtomicUsize::new(0);
    let total = pending.len();
    pool.install(|| {
        pending.par_iter().try_for_each(|key| -> Result<()> {
            let language = &languages[&(key.language as u8, key.seed)];
            let (result, records) = run_one(language, key, plan.total_steps, plan.k)?;
            write_jsonl(key.log_path(root), &records)?;
            write_json(key.summary_path(root), &result)?;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            log::info!(
                "[{n}/{total}] {} {} {} seed {}: mean-AUC {:.4}",
                language_name(key.language),
                key.policy,
                key.cell,
                key.seed,
                result.summary.mean_auc
            );
            Ok(())
        })
    })?;
    Ok(GridReport { completed: total, skipped })
}

/// Loads every finished run below `root`.
pub fn load_results(root: &Path) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(Error::io(&dir))? {
            let path = entry.map_err(Error::io(&dir))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "json")
                && path.file_name().is_some_and(|n| n.to_string_lossy().starts_with("seed-"))
            {
                out.push(read_json::<RunResult>(&path)?);
            }
        }
    }
    out.sort_by(|a, b| {
        let ka = (language_name(a.key.language), a.key.policy.as_str(), a.key.cell.to_string(), a.key.seed);
        let kb = (language_name(b.key.language), b.key.policy.as_str(), b.key.cell.to_string(), b.key.seed);
        ka.cmp(&kb)
    });
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub language: LanguageKind,
    pub policy: PolicyKind,
    pub cell: Cell,
    pub n_seeds: usize,
    pub median_mean_auc: f64,
    pub std_err: f64,
}

fn cell_rank(cell: &Cell) -> usize {
    grid_cells().iter().position(|c| c == cell).unwrap_or(usize::MAX)
}

fn matching<'a>(
    results: &'a [RunResult],
    language: LanguageKind,
    policy: PolicyKind,
    cell: &'a Cell,
) -> impl Iterator<Item = &'a RunResult> + 'a {
    results.iter().filter(move |r| r.key.language == language && r.key.policy == policy && r.key.cell == *cell)
}

/// One summary per (language, policy, cell) present in `results`, in grid order.
pub fn summarize_cells(results: &[RunResult]) -> Vec<CellSummary> {
    let mut groups: Vec<(LanguageKind, PolicyKind, Cell)> = Vec::new();
    for r in results {
        let id = (r.key.language, r.key.policy, r.key.cell);
        if !groups.contains(&id) {
            groups.push(id);
        }
    }
    groups.sort_by_key(|(l, p, c)| (*l as u8, PolicyKind::ALL.iter().position(|x| x == p), cell_rank(c)));
    groups
        .into_iter()
        .map(|(language, policy, cell)| {
            let means: Vec<f64> = matching(results, language, policy, &cell).map(|r| r.summary.mean_auc).collect();
            CellSummary {
                language,
                policy,
                cell,
                n_seeds: means.len(),
                median_mean_auc: median(&means),
                std_err: std_err(&means),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CellRow<'a> {
    language: &'a str,
    policy: &'a str,
    log_log_odds_alpha: f64,
    theta_prior: f64,
    steps: &'a str,
    n_seeds: usize,
    median_mean_auc: f64,
    std_err: f64,
}

pub fn write_cell_csv<W: std::io::Write>(w: W, cells: &[CellSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        out.serialize(CellRow {
            language: language_name(c.language),
            policy: c.policy.as_str(),
            log_log_odds_alpha: c.cell.log_log_odds_alpha,
            theta_prior: c.cell.theta_prior,
            steps: steps_label(c.cell.steps),
            n_seeds: c.n_seeds,
            median_mean_auc: c.median_mean_auc,
            std_err: c.std_err,
        })?;
    }
    out.flush().map_err(Error::io("<csv>"))?;
    Ok(())
}

/// First maximum in grid order, ignoring NaN.
fn best_by<T, F: Fn(&T) -> f64>(items: impl IntoIterator<Item = T>, score: F) -> Option<T> {
    let mut best: Option<(f64, T)> = None;
    for item in items {
        let s = score(&item);
        if s.is_nan() {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, item));
        }
    }
    best.map(|(_, t)| t)
}

/// Best cell per policy by median mean-AUC on `language` itself.
pub fn upper_bound(cells: &[CellSummary], language: LanguageKind) -> Vec<CellSummary> {
    PolicyKind::ALL
        .iter()
        .filter_map(|&p| {
            best_by(cells.iter().filter(|c| c.language == language && c.policy == p), |c| c.median_mean_auc).cloned()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub policy: PolicyKind,
    pub cell: Cell,
    /// Median mean-AUC of the selection language at the chosen cell.
    pub selected_on: f64,
    pub evaluated: CellSummary,
}

/// Chooses each policy's cell on pooled generated-language runs and reports
/// the ATR result at that cell.
pub fn out_of_distribution(cells: &[CellSummary]) -> Vec<Transfer> {
    PolicyKind::ALL
        .iter()
        .filter_map(|&p| {
            let chosen = best_by(
                cells.iter().filter(|c| c.language == LanguageKind::Generated && c.policy == p),
                |c| c.median_mean_auc,
            )?;
            let evaluated = cells
                .iter()
                .find(|c| c.language == LanguageKind::Atr && c.policy == p && c.cell == chosen.cell)?
                .clone();
            Some(Transfer { policy: p, cell: chosen.cell, selected_on: chosen.median_mean_auc, evaluated })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub seed: u64,
    pub cell: Cell,
    pub mean_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOut {
    pub policy: PolicyKind,
    pub folds: Vec<HeldOut>,
    pub median_mean_auc: f64,
    pub std_err: f64,
}

/// For each generated seed, picks the cell that is best on the other seeds
/// and scores the held-out seed there.
pub fn leave_one_seed_out(results: &[RunResult]) -> Vec<LeaveOneOut> {
    let generated: Vec<&RunResult> = results.iter().filter(|r| r.key.language == LanguageKind::Generated).collect();
    let mut out = Vec::new();
    for &policy in PolicyKind::ALL.iter() {
        let runs: Vec<&RunResult> = generated.iter().copied().filter(|r| r.key.policy == policy).collect();
        let mut seeds: Vec<u64> = runs.iter().map(|r| r.key.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut cells: Vec<Cell> = Vec::new();
        for r in &runs {
            if !cells.contains(&r.key.cell) {
                cells.push(r.key.cell);
            }
        }
        cells.sort_by_key(cell_rank);
        let mut folds = Vec::new();
        for &held in &seeds {
            let score = |cell: &Cell| {
                let means: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.key.cell == *cell && r.key.seed != held)
                    .map(|r| r.summary.mean_auc)
                    .collect();
                if means.is_empty() {
                    f64::NAN
                } else {
                    median(&means)
                }
            };
            let Some(cell) = best_by(cells.iter(), |c| score(c)) else { continue };
            if let Some(r) = runs.iter().find(|r| r.key.cell == *cell && r.key.seed == held) {
                folds.push(HeldOut { seed: held, cell: *cell, mean_auc: r.summary.mean_auc });
            }
        }
        if folds.is_empty() {
            continue;
        }
        let values: Vec<f64> = folds.iter().map(|f| f.mean_auc).collect();
        out.push(LeaveOneOut { policy, median_mean_auc: median(&values), std_err: std_err(&values), folds });
    }
    out
}

/// Per-step curves for one (language, policy, cell) across its seeds.
pub fn curves(results: &[RunResult], language: LanguageKind, policy: PolicyKind, cell: &Cell) -> Result<AggregateSummary> {
    let runs: Vec<RunSummary> = matching(results, language, policy, cell).map(|r| r.summary.clone()).collect();
    if runs.is_empty() {
        return Err(Error::Invalid(format!("no runs for {} {policy} {cell}", language_name(language))));
    }
    Ok(aggregate(&runs)?)
}

pub fn write_curves_csv<W: std::io::Write>(w: W, agg: &AggregateSummary) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "mean_auc", "stderr", "train_fraction"])?;
    for s in 0..agg.mean_auc_by_step.len() {
        out.write_record([
            s.to_string(),
            agg.mean_auc_by_step[s].to_string(),
            agg.stderr_by_step[s].to_string(),
            agg.train_fraction_by_step[s].to_string(),
        ])?;
    }
    out.flush().map_err(Error::io("<csv>"))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analyses {
    pub upper_bound_atr: Vec<CellSummary>,
    pub upper_bound_generated: Vec<CellSummary>,
    pub out_of_distribution: Vec<Transfer>,
    pub leave_one_seed_out: Vec<LeaveOneOut>,
}

pub fn analyses(results: &[RunResult]) -> Analyses {
    let cells = summarize_cells(results);
    Analyses {
        upper_bound_atr: upper_bound(&cells, LanguageKind::Atr),
        upper_bound_generated: upper_bound(&cells, LanguageKind::Generated),
        out_of_distribution: out_of_distribution(&cells),
        leave_one_seed_out: leave_one_seed_out(results),
    }
}
