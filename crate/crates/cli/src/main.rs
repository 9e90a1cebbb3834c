use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgerag_core::harness::{compare, write_outputs, ExperimentPlan, ResultsTable};
use edgerag_core::performance::{evaluation_rows, write_evaluations_csv};
use edgerag_core::retrieval::{
    evaluate_retrieval, load_knowledge_base, query_text, records_for_scenario, save_knowledge_base, Encoder,
    HashEncoder, VectorStore,
};
use edgerag_core::solvers::{solve_scenario, BudgetPolicy, SolverKind, SolverSpec, DEFAULT_EVAL_BUDGET};
use edgerag_core::system::{generate_dataset, Dataset, DatasetKind, Fading, Scenario, ScenarioOptions, SystemConfig};
use edgerag_core::{run_experiment, Error, Result};
use serde_json::json;

/// Multi-user edge offloading: dataset generation, solvers, retrieval
/// evaluation and experiment sweeps.
#[derive(Parser)]
#[command(name = "edgerag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset bucket as a scenario JSON file.
    GenDataset(GenDataset),
    /// Solve every slot of a scenario file.
    Solve(Solve),
    /// Hit rate and MRR of a capability knowledge base.
    EvalRetrieval(EvalRetrieval),
    /// Run an experiment plan and write results, summary and plot data.
    Run(Run),
    /// Per-cell mean latency deltas between two results files.
    Compare(Compare),
}

#[derive(Args)]
struct GenDataset {
    /// DSCC, DUSD, DUP or DUCC.
    #[arg(long)]
    kind: DatasetKind,
    /// Bucket index, 0 to 4.
    #[arg(long)]
    bucket: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// rician or deterministic.
    #[arg(long, default_value = "rician", value_parser = parse_fading)]
    fading: Fading,
    #[arg(long)]
    out: PathBuf,
    /// Also write the users' capability records as a knowledge base.
    #[arg(long)]
    kb: Option<PathBuf>,
}

#[derive(Args)]
struct Solve {
    #[arg(long)]
    scenario: PathBuf,
    /// local-only, full-offload-equal, random-feasible, alternating or
    /// grid-oracle.
    #[arg(long, default_value = "alternating")]
    solver: SolverKind,
    /// Oracle grid points per axis.
    #[arg(long, default_value_t = 11)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Oracle enumeration limit.
    #[arg(long, default_value_t = DEFAULT_EVAL_BUDGET)]
    max_evals: f64,
    /// per-slot or carry-over.
    #[arg(long, default_value = "per-slot")]
    budget_policy: BudgetPolicy,
    /// Decision file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-user, per-slot latency and energy breakdown as CSV.
    #[arg(long)]
    evals: Option<PathBuf>,
}

#[derive(Args)]
struct EvalRetrieval {
    /// JSON list of {user_id, cycles_per_sec, text}.
    #[arg(long)]
    kb: PathBuf,
    /// JSON list of {text, user_id}; defaults to one capability query per
    /// record.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

#[derive(Args)]
struct Run {
    /// Plan JSON; flags below override its fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long, value_delimiter = ',')]
    buckets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<SolverKind>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long, value_parser = parse_fading)]
    fading: Option<Fading>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Compare {
    a: PathBuf,
    b: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_fading(s: &str) -> std::result::Result<Fading, String> {
    match s {
        "rician" => Ok(Fading::Rician),
        "deterministic" => Ok(Fading::Deterministic),
        _ => Err(format!("expected `rician` or `deterministic`, got `{s}`")),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn gen_dataset(a: GenDataset) -> Result<()> {
    let options = ScenarioOptions {
        user_count: a.users,
        fading: a.fading,
        ..ScenarioOptions::default()
    };
    let scenario = generate_dataset(Dataset::new(a.kind, a.bucket)?, &SystemConfig::default(), &options, a.seed)?;
    fs::write(&a.out, serde_json::to_string_pretty(&scenario)?)?;
    if let Some(kb) = &a.kb {
        save_knowledge_base(kb, &records_for_scenario(&scenario)?)?;
    }
    eprintln!(
        "wrote {} ({} users, {} slots)",
        a.out.display(),
        scenario.user_count(),
        scenario.slot_count()
    );
    Ok(())
}

fn solve(a: Solve) -> Result<()> {
    let scenario: Scenario = serde_json::from_str(&fs::read_to_string(&a.scenario)?)?;
    let spec = SolverSpec {
        grid_resolution: a.grid,
        seed: a.seed,
        eval_budget: a.max_evals,
        budget_policy: a.budget_policy,
        ..SolverSpec::new(a.solver)
    };
    let sol = solve_scenario(&scenario, &spec)?;
    if let Some(path) = &a.evals {
        let rows: Vec<_> = sol
            .decisions
            .iter()
            .zip(&sol.evaluations)
            .enumerate()
            .flat_map(|(slot, (d, e))| evaluation_rows(slot, d, e))
            .collect();
        write_evaluations_csv(fs::File::create(path)?, &rows)?;
    }
    let out = json!({
        "solver": spec.label(),
        "objective_s": sol.objective,
        "feasible": sol.report.all_passed(),
        "constraints": sol.report,
        "decisions": sol.decisions,
    });
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    eprintln!("{}: mean latency {:.6} s", spec.label(), sol.objective);
    Ok(())
}

#[derive(serde::Deserialize)]
struct LabeledQuery {
    text: String,
    user_id: usize,
}

fn eval_retrieval(a: EvalRetrieval) -> Result<()> {
    let records = load_knowledge_base(&a.kb)?;
    let encoder = HashEncoder::default();
    let store = VectorStore::from_records(&records, &encoder)?;
    let labeled: Vec<LabeledQuery> = match &a.queries {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => records
            .iter()
            .map(|r| LabeledQuery {
                text: query_text(r.user_id),
                user_id: r.user_id,
            })
            .collect(),
    };
    let queries = labeled
        .iter()
        .map(|q| Ok((encoder.encode_text(&q.text)?, q.user_id)))
        .collect::<Result<Vec<_>>>()?;
    let m = evaluate_retrieval(&store, &queries, a.k)?;
    let out = json!({ "k": a.k, "queries": queries.len(), "hit_rate": m.hit_rate, "mrr": m.mrr });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(a: Run) -> Result<()> {
    let mut plan = match &a.plan {
        Some(p) => ExperimentPlan::load(p)?,
        None => ExperimentPlan::default(),
    };
    if let Some(d) = a.dataset {
        plan.dataset = d;
    }
    if let Some(b) = a.buckets {
        plan.buckets = b;
    }
    if let Some(s) = a.solvers {
        plan.solvers = s.into_iter().map(SolverSpec::new).collect();
    }
    if let Some(s) = a.seeds {
        plan.seeds = s;
    }
    if let Some(u) = a.users {
        plan.scenario.user_count = u;
    }
    if let Some(f) = a.fading {
        plan.scenario.fading = f;
    }
    if let Some(o) = a.out {
        plan.out_dir = o;
    }
    let table = run_experiment(&plan)?;
    let files = write_outputs(&table, &plan.out_dir)?;
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} rows ({failed} failed) -> {}",
        table.rows.len(),
        files.results.display()
    );
    Ok(())
}

fn compare_cmd(a: Compare) -> Result<()> {
    let rows = compare(&ResultsTable::read_csv(&a.a)?, &ResultsTable::read_csv(&a.b)?)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    let text = String::from_utf8(buf).map_err(|e| Error::Io(io::Error::other(e)))?;
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Solve(a) => solve(a),
        Command::EvalRetrieval(a) => eval_retrieval(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
