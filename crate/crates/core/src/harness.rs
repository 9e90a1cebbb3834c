//! Experiment sweeps over dataset buckets, solvers and seeds, with CSV
//! outputs and directional trend checks.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{rag_solve, Backend, BackendConfig, BackendKind, RagConfig};
use crate::performance::Constraint;
use crate::retrieval::{records_for_scenario, HashEncoder, VectorStore};
use crate::solvers::{solve_scenario, solve_scenario_with, ScenarioSolution, SlotOutcome, SolverKind, SolverSpec};
use crate::system::{generate_dataset, Dataset, DatasetKind, Scenario, ScenarioOptions, SystemConfig, BUCKET_COUNT};

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetKind,
    pub buckets: Vec<usize>,
    pub solvers: Vec<SolverSpec>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub scenario: ScenarioOptions,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub rag: RagConfig,
}

impl Default for ExperimentPlan {
    /// Data-volume sweep over all buckets with the trivial baselines, the
    /// heuristic and the mock-backed decision pipeline, five seeds.
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Dusd,
            buckets: (0..BUCKET_COUNT).collect(),
            solvers: [
                SolverKind::LocalOnly,
                SolverKind::FullOffloadEqual,
                SolverKind::AlternatingHeuristic,
                SolverKind::RagLlm,
            ]
            .into_iter()
            .map(SolverSpec::new)
            .collect(),
            seeds: (1..=5).collect(),
            out_dir: default_out_dir(),
            system: SystemConfig::default(),
            scenario: ScenarioOptions::default(),
            backend: BackendConfig::mock(),
            rag: RagConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let plan: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.buckets.is_empty() {
            v.push("plan needs at least one bucket".to_string());
        }
        if let Some(b) = self.buckets.iter().find(|&&b| b >= BUCKET_COUNT) {
            v.push(format!("bucket {b} out of range (0..={})", BUCKET_COUNT - 1));
        }
        if self.solvers.is_empty() {
            v.push("plan needs at least one solver".to_string());
        }
        if self.seeds.is_empty() {
            v.push("plan needs at least one seed".to_string());
        }
        if self.scenario.user_count == 0 {
            v.push("user_count must be at least 1".to_string());
        }
        for s in &self.solvers {
            if let Err(e) = s.validate() {
                v.push(format!("solver {}: {e}", s.label()));
            }
        }
        if let Err(Error::InvalidConfig(more)) = self.backend.validate() {
            v.extend(more);
        }
        if let Err(Error::InvalidConfig(more)) = crate::system::validate_config(&self.system).into_result() {
            v.extend(more);
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: DatasetKind,
    pub bucket: usize,
    pub solver: String,
    pub seed: u64,
    /// Empty when the solver failed on this cell.
    pub mean_latency_s: Option<f64>,
    pub energy_ok: bool,
    pub fallback_count: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            for row in &self.rows {
                csv.serialize(row)?;
            }
            csv.flush()?;
            Ok(())
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { rows })
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    f(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn run_solver(scenario: &Scenario, spec: &SolverSpec, backend: &Backend, rag: &RagConfig) -> Result<ScenarioSolution> {
    if spec.kind != SolverKind::RagLlm {
        return solve_scenario(scenario, spec);
    }
    let encoder = HashEncoder::default();
    let store = VectorStore::from_records(&records_for_scenario(scenario)?, &encoder)?;
    solve_scenario_with(scenario, spec.budget_policy, |state| {
        let out = rag_solve(state, &store, &encoder, backend, rag);
        Ok(SlotOutcome {
            decision: out.decision,
            fallback: out.fallback,
        })
    })
}

/// One row per (bucket, seed, solver), in that nesting order. Cells run in
/// parallel; solver failures are recorded in the row and do not stop the
/// sweep.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ResultsTable> {
    plan.validate()?;
    let mut backend_config = plan.backend.clone();
    if backend_config.kind == BackendKind::HttpChat {
        backend_config.fill_from_env();
    }
    let backend = Backend::new(backend_config)?;
    let mut cells = Vec::new();
    for &bucket in &plan.buckets {
        for &seed in &plan.seeds {
            for spec in &plan.solvers {
                cells.push((bucket, seed, spec));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(bucket, seed, spec)| {
            let dataset = Dataset::new(plan.dataset, bucket)?;
            let scenario = generate_dataset(dataset, &plan.system, &plan.scenario, seed)?;
            let row = match run_solver(&scenario, spec, &backend, &plan.rag) {
                Ok(sol) => ResultRow {
                    dataset: plan.dataset,
                    bucket,
                    solver: spec.label(),
                    seed,
                    mean_latency_s: Some(sol.objective),
                    energy_ok: sol.report.get(Constraint::EnergyBudget).passed,
                    fallback_count: sol.fallback_slots.len(),
                    error: None,
                },
                Err(e) => ResultRow {
                    dataset: plan.dataset,
                    bucket,
                    solver: spec.label(),
                    seed,
                    mean_latency_s: None,
                    energy_ok: false,
                    fallback_count: 0,
                    error: Some(e.to_string()),
                },
            };
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultsTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: DatasetKind,
    pub bucket: usize,
    pub solver: String,
    pub runs: usize,
    pub mean_s: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stddev_s: f64,
}

/// Mean and sample standard deviation per (dataset, bucket, solver) over
/// the successful rows. Output order does not depend on row order.
pub fn summarize(table: &ResultsTable) -> Result<Vec<SummaryRow>> {
    if table.rows.is_empty() {
        return Err(Error::Precondition("results table is empty".into()));
    }
    let mut groups: BTreeMap<(DatasetKind, usize, String), Vec<f64>> = BTreeMap::new();
    for r in &table.rows {
        if let Some(v) = r.mean_latency_s {
            groups.entry((r.dataset, r.bucket, r.solver.clone())).or_default().push(v);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((dataset, bucket, solver), mut values)| {
            values.sort_by(f64::total_cmp);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let stddev = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                dataset,
                bucket,
                solver,
                runs: values.len(),
                mean_s: mean,
                stddev_s: stddev,
            }
        })
        .collect())
}

pub fn write_summary_csv(summary: &[SummaryRow], path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in summary {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct PlotRow<'a> {
    bucket_parameter: f64,
    solver: &'a str,
    mean_s: f64,
    stddev_s: f64,
}

/// One `<dataset>.csv` per dataset kind under `dir`, keyed by the bucket's
/// parameter value. Existing files are replaced atomically.
pub fn emit_plotdata(summary: &[SummaryRow], dir: &Path) -> Result<Vec<PathBuf>> {
    if summary.is_empty() {
        return Err(Error::Precondition("nothing to plot: summary is empty".into()));
    }
    let mut by_kind: BTreeMap<DatasetKind, Vec<&SummaryRow>> = BTreeMap::new();
    for row in summary {
        by_kind.entry(row.dataset).or_default().push(row);
    }
    let mut paths = Vec::new();
    for (kind, rows) in by_kind {
        let path = dir.join(format!("{}.csv", kind.to_string().to_lowercase()));
        write_atomic(&path, |w| {
            let mut csv = csv::Writer::from_writer(w);
            for r in &rows {
                csv.serialize(PlotRow {
                    bucket_parameter: kind.x_value(r.bucket)?,
                    solver: &r.solver,
                    mean_s: r.mean_s,
                    stddev_s: r.stddev_s,
                })?;
            }
            csv.flush()?;
            Ok(())
        })?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plotdata: Vec<PathBuf>,
}

/// Writes `results.csv`, `summary.csv` and `plotdata/*.csv` under `dir`.
pub fn write_outputs(table: &ResultsTable, dir: &Path) -> Result<OutputFiles> {
    let results = dir.join("results.csv");
    table.write_csv(&results)?;
    let summary = summarize(table)?;
    let summary_path = dir.join("summary.csv");
    write_summary_csv(&summary, &summary_path)?;
    let plotdata = emit_plotdata(&summary, &dir.join("plotdata"))?;
    Ok(OutputFiles {
        results,
        summary: summary_path,
        plotdata,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub dataset: DatasetKind,
    pub bucket: usize,
    pub solver: String,
    pub mean_a_s: Option<f64>,
    pub mean_b_s: Option<f64>,
    /// `b − a` when both sides have the cell.
    pub delta_s: Option<f64>,
}

/// Per-cell mean latency of two result tables side by side.
pub fn compare(a: &ResultsTable, b: &ResultsTable) -> Result<Vec<CompareRow>> {
    let index = |t: &ResultsTable| -> Result<BTreeMap<(DatasetKind, usize, String), f64>> {
        Ok(summarize(t)?
            .into_iter()
            .map(|r| ((r.dataset, r.bucket, r.solver), r.mean_s))
            .collect())
    };
    let (ia, ib) = (index(a)?, index(b)?);
    let mut keys: Vec<_> = ia.keys().chain(ib.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    Ok(keys
        .into_iter()
        .map(|key| {
            let (ma, mb) = (ia.get(&key).copied(), ib.get(&key).copied());
            CompareRow {
                dataset: key.0,
                bucket: key.1,
                solver: key.2,
                mean_a_s: ma,
                mean_b_s: mb,
                delta_s: ma.zip(mb).map(|(x, y)| y - x),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    NonDecreasing,
    NonIncreasing,
}

/// Direction mean latency should move in as the bucket index grows: more
/// data, slower devices or a slower server can only hurt, more power can
/// only help.
pub fn expected_trend(kind: DatasetKind) -> Trend {
    match kind {
        DatasetKind::Dup => Trend::NonIncreasing,
        DatasetKind::Dusd | DatasetKind::Ducc | DatasetKind::Dscc => Trend::NonDecreasing,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub dataset: DatasetKind,
    pub solver: String,
    pub trend: Trend,
    /// Mean latency per bucket, in bucket order.
    pub means: Vec<(usize, f64)>,
    /// Adjacent bucket pairs that move strictly the wrong way.
    pub violations: Vec<(usize, usize)>,
}

impl TrendCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.means.len() >= 2
    }
}

/// Checks the per-bucket means of `solver` against [`expected_trend`].
/// Ties pass, strict moves the other way do not.
pub fn check_trend(summary: &[SummaryRow], dataset: DatasetKind, solver: &str) -> TrendCheck {
    let mut means: Vec<(usize, f64)> = summary
        .iter()
        .filter(|r| r.dataset == dataset && r.solver == solver)
        .map(|r| (r.bucket, r.mean_s))
        .collect();
    means.sort_by_key(|m| m.0);
    let trend = expected_trend(dataset);
    let violations = means
        .windows(2)
        .filter(|w| match trend {
            Trend::NonDecreasing => w[1].1 < w[0].1,
            Trend::NonIncreasing => w[1].1 > w[0].1,
        })
        .map(|w| (w[0].0, w[1].0))
        .collect();
    TrendCheck {
        dataset,
        solver: solver.to_string(),
        trend,
        means,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Fading;

    fn small_plan(dir: &Path) -> ExperimentPlan {
        ExperimentPlan {
            buckets: vec![1],
            solvers: vec![SolverSpec::new(SolverKind::LocalOnly), SolverSpec::new(SolverKind::AlternatingHeuristic)],
            seeds: vec![1, 2, 3],
            out_dir: dir.to_path_buf(),
            scenario: ScenarioOptions::with_users(3),
            ..ExperimentPlan::default()
        }
    }

    fn row(bucket: usize, solver: &str, seed: u64, v: f64) -> ResultRow {
        ResultRow {
            dataset: DatasetKind::Dusd,
            bucket,
            solver: solver.into(),
            seed,
            mean_latency_s: Some(v),
            energy_ok: true,
            fallback_count: 0,
            error: None,
        }
    }

    #[test]
    fn cardinality_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let plan = small_plan(dir.path());
        let a = run_experiment(&plan).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a, run_experiment(&plan).unwrap());
        assert!(a.rows.iter().all(|r| r.energy_ok && r.error.is_none()));
    }

    #[test]
    fn solver_errors_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let plan = ExperimentPlan {
            solvers: vec![SolverSpec::new(SolverKind::GridOracle)],
            seeds: vec![1],
            ..small_plan(dir.path())
        };
        let t = run_experiment(&plan).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].mean_latency_s.is_none());
        assert!(t.rows[0].error.as_deref().unwrap().contains("budget"));
    }

    #[test]
    fn summary_statistics() {
        let t = ResultsTable {
            rows: vec![row(0, "x", 1, 0.5), row(0, "x", 2, 0.7), row(1, "x", 1, 0.9)],
        };
        let s = summarize(&t).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0].mean_s - 0.6).abs() < 1e-15);
        assert!((s[0].stddev_s - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(s[1].stddev_s, 0.0);
        let mut rev = t.clone();
        rev.rows.reverse();
        assert_eq!(summarize(&rev).unwrap(), s);
        assert!(summarize(&ResultsTable::default()).is_err());
    }

    #[test]
    fn plotdata_uses_bucket_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let t = ResultsTable {
            rows: (0..5).map(|b| row(b, "h", 1, b as f64)).collect(),
        };
        let s = summarize(&t).unwrap();
        let paths = emit_plotdata(&s, dir.path()).unwrap();
        assert_eq!(paths, vec![dir.path().join("dusd.csv")]);
        let first = fs::read_to_string(&paths[0]).unwrap();
        emit_plotdata(&s, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(first, text);
        let xs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(xs, vec!["1.0", "2.0", "3.0", "4.0", "5.0"]);
        assert!(emit_plotdata(&[], dir.path()).is_err());
    }

    #[test]
    fn csv_round_trip_and_compare() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = ResultsTable {
            rows: vec![row(0, "x", 1, 0.5), row(0, "y", 1, 0.25)],
        };
        t.rows[1].error = Some("boom, with comma".into());
        t.rows[1].mean_latency_s = None;
        let path = dir.path().join("r.csv");
        t.write_csv(&path).unwrap();
        assert_eq!(ResultsTable::read_csv(&path).unwrap(), t);

        let b = ResultsTable {
            rows: vec![row(0, "x", 1, 0.75)],
        };
        let c = compare(&t, &b).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].delta_s, Some(0.25));
    }

    #[test]
    fn trend_detection() {
        let up = |vals: &[f64]| -> Vec<SummaryRow> {
            vals.iter()
                .enumerate()
                .map(|(b, &v)| SummaryRow {
                    dataset: DatasetKind::Dusd,
                    bucket: b,
                    solver: "h".into(),
                    runs: 1,
                    mean_s: v,
                    stddev_s: 0.0,
                })
                .collect()
        };
        assert!(check_trend(&up(&[1.0, 1.0, 2.0]), DatasetKind::Dusd, "h").passed());
        let bad = check_trend(&up(&[1.0, 0.5, 2.0]), DatasetKind::Dusd, "h");
        assert_eq!(bad.violations, vec![(0, 1)]);
        assert!(!bad.passed());
    }

    #[test]
    fn plan_validation_and_json() {
        let mut p = ExperimentPlan::default();
        assert!(p.validate().is_ok());
        p.buckets.clear();
        p.seeds.clear();
        match p.validate() {
            Err(Error::InvalidConfig(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
        let json = r#"{"dataset":"DUP","buckets":[0,4],"solvers":["alternating",{"kind":"grid-oracle","grid_resolution":5}],"seeds":[7],"out_dir":"o","scenario":{"user_count":2,"fading":"deterministic"}}"#;
        let p: ExperimentPlan = serde_json::from_str(json).unwrap();
        assert_eq!(p.dataset, DatasetKind::Dup);
        assert_eq!(p.solvers[1].grid_resolution, 5);
        assert_eq!(p.scenario.fading, Fading::Deterministic);
        assert!(p.validate().is_ok());
    }
}
