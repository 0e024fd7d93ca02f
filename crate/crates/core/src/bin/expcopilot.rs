use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use expcopilot::bench::loo::{reports_to_csv, summaries_json};
use expcopilot::bench::{baseline_constant, run_loo_eval, Benchmark, Method, TableLine};
use expcopilot::canonical::Discretizers;
use expcopilot::config::{AppConfig, BackendKind};
use expcopilot::elicitation::{elicit_knowledge, split_validation, ValidationContext};
use expcopilot::error::{Error, Result};
use expcopilot::io;
use expcopilot::pool::{
    build_pool, read_embedding_cache, read_knowledge, read_pool, write_pool, EMBEDDINGS_FILE,
    KNOWLEDGE_FILE,
};
use expcopilot::rng::substream;
use expcopilot::session::{self, parse_query, suggestion_records, Session};
use expcopilot::space::{ExperienceRecord, Solution, SolutionSpace, Task};
use expcopilot::suggestion::TaskCount;

#[derive(Parser)]
#[command(
    name = "expcopilot",
    version,
    about = "Configuration suggestions from past ML experience"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Backend override: http, scripted or replay.
    #[arg(long)]
    backend: Option<String>,
    /// Cassette for the replay backend.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Experience pool directory override.
    #[arg(long)]
    pools: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Canonicalize history into an experience pool with discretizers and embeddings.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// History files (JSON Lines of task_id, values, metric); replaces paths.history.
        #[arg(long = "history")]
        history: Vec<PathBuf>,
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Elicit and validate knowledge for the pool's space.
    Elicit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Suggest configurations for a new task.
    Suggest {
        #[command(flatten)]
        common: Common,
        /// File holding a task as JSON, or a plain-text description.
        #[arg(long)]
        task_file: Option<PathBuf>,
        /// Task description given inline.
        #[arg(long)]
        description: Option<String>,
        /// Space file override.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Number of configurations to return
        #[arg(long)]
        n: Option<usize>,
        /// Prompt token budget
        #[arg(long)]
        budget: Option<usize>,
        /// Number of demonstrated tasks, or "fill-budget".
        #[arg(long)]
        k_tasks: Option<String>,
        /// Print the exact prompt to standard error.
        #[arg(long)]
        show_prompt: bool,
    },
    /// Leave-one-out evaluation on the benchmark.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods: random, constant, nearest, copilot.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Report directory override.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(&c.config)?;
    if let Some(b) = &c.backend {
        cfg.backend.kind = b.parse()?;
    }
    if let Some(p) = &c.cassette {
        cfg.backend.cassette = Some(p.clone());
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = &c.pools {
        cfg.paths.pools = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_history(
    paths: &[PathBuf],
    space: &SolutionSpace,
    tasks: &[Task],
) -> Result<Vec<ExperienceRecord>> {
    let by_id: BTreeMap<&str, &Task> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut out = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at = |m: String| Error::schema(path, i + 1, m);
            let row: TableLine = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
            let task = by_id
                .get(row.task_id.as_str())
                .ok_or_else(|| at(format!("unknown task `{}`", row.task_id)))?;
            let solution = Solution::new(space, row.values).map_err(|e| at(e.to_string()))?;
            out.push(
                ExperienceRecord::new((*task).clone(), solution, row.metric)
                    .map_err(|e| at(e.to_string()))?,
            );
        }
    }
    if out.is_empty() {
        return Err(Error::Config("history is empty".into()));
    }
    Ok(out)
}

fn ingest(
    common: &Common,
    history: &[PathBuf],
    space: &Option<PathBuf>,
    tasks: &Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if space.is_some() {
        cfg.paths.space = space.clone();
    }
    if tasks.is_some() {
        cfg.paths.tasks = tasks.clone();
    }
    if !history.is_empty() {
        cfg.paths.history = history.to_vec();
    }
    let space: SolutionSpace = io::read_json(cfg.existing(&cfg.paths.space, "space")?)?;
    let tasks = session::load_tasks(cfg.existing(&cfg.paths.tasks, "tasks")?, &space)?;
    if cfg.paths.history.is_empty() {
        return Err(Error::Config("no history files given".into()));
    }
    let records = load_history(&cfg.paths.history, &space, &tasks)?;
    let pools = cfg.require(&cfg.paths.pools, "pools")?;
    let backend = cfg.build_backend()?;
    let discretizers = Discretizers::fit(&space, &records, cfg.direction, cfg.n_levels)?;
    let cache = read_embedding_cache(&pools.join(EMBEDDINGS_FILE))?;
    let pool = build_pool(
        &space,
        &tasks,
        &records,
        &discretizers,
        cfg.direction,
        backend.as_ref(),
        &cache,
    )?;
    write_pool(pools, &pool, &discretizers)?;
    info!(
        "ingested {} records of {} tasks into {}",
        records.len(),
        pool.len(),
        pools.display()
    );
    Ok(())
}

struct Loaded {
    space: SolutionSpace,
    pool: Vec<expcopilot::retrieval::PoolEntry>,
    discretizers: Discretizers,
}

fn load_pool(cfg: &AppConfig) -> Result<Loaded> {
    let space: SolutionSpace = io::read_json(cfg.existing(&cfg.paths.space, "space")?)?;
    let tasks = session::load_tasks(cfg.existing(&cfg.paths.tasks, "tasks")?, &space)?;
    let pools = cfg.existing(&cfg.paths.pools, "pools")?;
    let (pool, discretizers) = read_pool(pools, &space, &tasks)?;
    Ok(Loaded {
        space,
        pool,
        discretizers,
    })
}

fn elicit(common: &Common, rounds: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(r) = rounds {
        cfg.elicitation.rounds = r;
    }
    cfg.elicitation.validate()?;
    let loaded = load_pool(&cfg)?;
    let bench = Benchmark::load(cfg.existing(&cfg.paths.benchmark, "benchmark")?)?;
    if bench.space.space_id != loaded.space.space_id {
        return Err(Error::Config(format!(
            "benchmark space `{}` differs from pool space `{}`",
            bench.space.space_id, loaded.space.space_id
        )));
    }
    let backend = cfg.build_backend()?;
    let pooled: Vec<&Task> = loaded.pool.iter().map(|e| &e.task).collect();
    let (train, val) = split_validation(&pooled, cfg.elicitation.val_fraction, cfg.seed)?;
    if let Some(t) = val.iter().find(|t| bench.task(&t.task_id).is_none()) {
        return Err(Error::Config(format!(
            "validation task `{}` is not in the benchmark",
            t.task_id
        )));
    }
    let train_ids: HashSet<&str> = train.iter().map(|t| t.task_id.as_str()).collect();
    let elicit_pool: Vec<_> = loaded
        .pool
        .iter()
        .filter(|e| train_ids.contains(e.task.task_id.as_str()))
        .cloned()
        .collect();
    let bench_train: Vec<&str> = train_ids
        .iter()
        .copied()
        .filter(|id| bench.task(id).is_some())
        .collect();
    let fallback = if bench_train.is_empty() {
        None
    } else {
        let mut ids = bench_train;
        ids.sort_unstable();
        Some(baseline_constant(
            &bench,
            &ids,
            cfg.suggestion.n_suggestions,
        )?)
    };
    let exclude: HashSet<String> = val.iter().map(|t| t.task_id.clone()).collect();
    let ctx = ValidationContext {
        space: &loaded.space,
        discretizers: &loaded.discretizers,
        pool: &elicit_pool,
        benchmark: &bench,
        suggestion: &cfg.suggestion,
        val_tasks: &val,
        exclude: &exclude,
        fallback: fallback.as_deref(),
    };
    let mut rng = substream(cfg.seed, "elicit");
    let (item, trace) = elicit_knowledge(
        &elicit_pool,
        &ctx,
        &cfg.elicitation,
        backend.as_ref(),
        &mut rng,
    )?;

    let pools = cfg.require(&cfg.paths.pools, "pools")?;
    let kpath = pools.join(KNOWLEDGE_FILE);
    let mut items: Vec<_> = read_knowledge(&kpath)?
        .into_iter()
        .filter(|k| k.space_id != item.space_id)
        .collect();
    items.push(item.clone());
    io::write_jsonl(&kpath, &items)?;
    io::write_json(
        &pools.join(format!("elicit_trace.{}.json", item.space_id)),
        &trace,
    )?;
    info!(
        "kept round {} of {} with validation score {:.4}",
        item.provenance.round,
        trace.len(),
        item.validation_score
    );
    Ok(())
}

fn read_query(
    task_file: &Option<PathBuf>,
    description: &Option<String>,
    space: &SolutionSpace,
) -> Result<Task> {
    match (task_file, description) {
        (Some(_), Some(_)) => Err(Error::Config(
            "give either --task-file or --description".into(),
        )),
        (None, None) => Err(Error::Config(
            "a task is required: --task-file or --description".into(),
        )),
        (None, Some(d)) => Task::new("query", &space.space_id, d.trim()),
        (Some(path), None) => parse_query(
            &std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
            space,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn suggest(
    common: &Common,
    task_file: &Option<PathBuf>,
    description: &Option<String>,
    space: &Option<PathBuf>,
    n: Option<usize>,
    budget: Option<usize>,
    k_tasks: &Option<String>,
    show_prompt: bool,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if space.is_some() {
        cfg.paths.space = space.clone();
    }
    if let Some(n) = n {
        cfg.suggestion.n_suggestions = n;
    }
    if let Some(b) = budget {
        cfg.suggestion.token_budget = b;
    }
    if let Some(k) = k_tasks {
        cfg.suggestion.k_tasks = if k == "fill-budget" {
            TaskCount::FillBudget
        } else {
            match k.parse::<usize>() {
                Ok(v) if v > 0 => TaskCount::Count(v),
                _ => {
                    return Err(Error::Config(format!(
                        "--k-tasks must be a positive count or fill-budget, got {k:?}"
                    )))
                }
            }
        };
    }
    let session = Session::open(cfg)?;
    let query = read_query(task_file, description, &session.space)?;
    if show_prompt {
        eprintln!("{}", session.prompt(&query)?.text);
    }
    let set = session.suggest(&query)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in suggestion_records(&set) {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

fn eval(common: &Common, methods: &[String], seeds: &[u64], out: &Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if !methods.is_empty() {
        cfg.eval.methods = methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    if !seeds.is_empty() {
        cfg.eval.seeds = seeds.to_vec();
    }
    if out.is_some() {
        cfg.paths.reports = out.clone();
    }
    let bench = Benchmark::load(cfg.existing(&cfg.paths.benchmark, "benchmark")?)?;
    let reports_dir = cfg.require(&cfg.paths.reports, "reports")?.to_path_buf();
    let needs_backend = cfg.eval.methods.contains(&Method::Copilot);
    let backend = if needs_backend {
        Some(cfg.build_backend()?)
    } else {
        None
    };
    let scripted = expcopilot::llm::ScriptedBackend::default();
    let be: &dyn expcopilot::llm::LlmBackend = match &backend {
        Some(b) => b.as_ref(),
        None => &scripted,
    };
    let ecfg = cfg.eval_config();
    let mut reports = Vec::new();
    for m in &cfg.eval.methods {
        let r = run_loo_eval(&bench, *m, &cfg.eval.seeds, &ecfg, be)?;
        let s = r.summary();
        info!(
            "{}: nAcc@1 {:.3}, @2 {:.3}, @3 {:.3}; {} failures",
            m.name(),
            s.nacc_at[0].mean,
            s.nacc_at[1].mean,
            s.nacc_at[2].mean,
            s.failures
        );
        if s.hygiene_violations > 0 {
            warn!(
                "{}: {} leave-one-out hygiene violations",
                m.name(),
                s.hygiene_violations
            );
        }
        reports.push(r);
    }
    io::write_text(&reports_dir.join("report.csv"), &reports_to_csv(&reports))?;
    io::write_json(
        &reports_dir.join("summary.json"),
        &summaries_json(&bench.name, &reports),
    )?;
    if cfg.backend.kind == BackendKind::Http {
        info!("live calls were journaled; replay them with --backend replay --cassette <journal>");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest {
            common,
            history,
            space,
            tasks,
        } => ingest(common, history, space, tasks),
        Command::Elicit { common, rounds } => elicit(common, *rounds),
        Command::Suggest {
            common,
            task_file,
            description,
            space,
            n,
            budget,
            k_tasks,
            show_prompt,
        } => suggest(
            common,
            task_file,
            description,
            space,
            *n,
            *budget,
            k_tasks,
            *show_prompt,
        ),
        Command::Eval {
            common,
            methods,
            seeds,
            out,
        } => eval(common, methods, seeds, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
