//! Experiment orchestration: configs, the label cache, multi-seed active
//! learning runs, metrics files and decision-boundary export.

pub mod boundary;
pub mod cache;
pub mod cli;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::active::{self, Acquisition, ALConfig, ALResult, AcquisitionStrategy, ActiveError, OracleError};
use crate::mlp::{self, LabeledDataset, MlpError, TrainConfig};
use crate::network::{parse_case, CaseError};
use crate::network::PowerNetwork;
use crate::powerflow::{PfConfig, PfError};
use crate::sampling::{
    build_spec_full, build_spec_load_pair, sample_pool, split_indices, Normalizer, SamplingError, SamplingSpec,
};
use crate::seed::derive_seed;

pub use boundary::{audit_boundary, export_boundary_grid, BoundaryGrid, GridCell};
pub use cache::{CacheContext, LabelCache};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("case file: {0}")]
    Case(#[from] CaseError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Active(#[from] ActiveError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Numerical(String),
}

impl HarnessError {
    /// Process exit code: 1 usage, 2 data or parse problems, 3 numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Numerical(_) | HarnessError::Active(ActiveError::Train { .. }) => 3,
            _ => 2,
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_case(path: &Path) -> Result<PowerNetwork, HarnessError> {
    Ok(parse_case(&read_file(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Two load-P features swept over a box.
    TwoD,
    /// Every non-slack generator P/Q and every load P/Q.
    FullInjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingOverrides {
    /// Buses whose active load is swept in `two_d` experiments.
    pub load_buses: [u32; 2],
    /// MW range of the swept loads.
    pub bounds: (f64, f64),
    /// Load standard deviation as a fraction of the base value.
    pub load_std_frac: f64,
    /// Move the slack role to this bus before sampling; `None` keeps the
    /// case file's slack.
    pub slack_bus: Option<u32>,
}

impl Default for SamplingOverrides {
    fn default() -> Self {
        SamplingOverrides {
            load_buses: [3, 4],
            bounds: (-3000.0, 3000.0),
            load_std_frac: 0.5,
            slack_bus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: PathBuf,
    pub kind: ExperimentKind,
    /// Total samples drawn; split into the active learning pool and the
    /// held-out test set.
    pub pool_size: usize,
    pub test_fraction: f64,
    pub sampling: SamplingOverrides,
    pub active: ALConfig,
    pub train: TrainConfig,
    pub pf: PfConfig,
    pub strategies: Vec<AcquisitionStrategy>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Persistent label cache file.
    pub cache: Option<PathBuf>,
    /// Grid points per axis for `two_d` boundary exports.
    pub boundary_resolution: usize,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind, case: PathBuf) -> Self {
        let (pool_size, active, strategies) = match kind {
            ExperimentKind::TwoD => (
                5000,
                ALConfig::default(),
                vec![AcquisitionStrategy::Margin, AcquisitionStrategy::Random],
            ),
            ExperimentKind::FullInjection => (
                20_000,
                ALConfig {
                    initial_size: 200,
                    batch_size: 200,
                    max_iterations: 10,
                    // Accuracy never exceeds 1, so only the iteration cap stops.
                    stop_accuracy: 1.0,
                    ..ALConfig::default()
                },
                AcquisitionStrategy::ALL.to_vec(),
            ),
        };
        let sampling = SamplingOverrides {
            // The large equivalent machine at bus 39 balances the system in the
            // full-injection study.
            slack_bus: (kind == ExperimentKind::FullInjection).then_some(39),
            ..SamplingOverrides::default()
        };
        ExperimentConfig {
            case,
            kind,
            pool_size,
            test_fraction: 0.2,
            sampling,
            active,
            train: TrainConfig::default(),
            pf: PfConfig::default(),
            strategies,
            seeds: (0..5).collect(),
            out_dir: PathBuf::from("out"),
            cache: None,
            boundary_resolution: 100,
        }
    }

    /// Parse a JSON config. Keys left out take the preset for the given
    /// `kind`; nested objects are merged key by key.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let user: Value = serde_json::from_str(text)?;
        let kind: ExperimentKind = serde_json::from_value(
            user.get("kind")
                .cloned()
                .ok_or_else(|| HarnessError::Config("missing \"kind\"".into()))?,
        )?;
        let case = user
            .get("case")
            .and_then(Value::as_str)
            .ok_or_else(|| HarnessError::Config("missing \"case\"".into()))?;
        let mut merged = serde_json::to_value(ExperimentConfig::preset(kind, case.into()))?;
        merge(&mut merged, user);
        let cfg: ExperimentConfig = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file; a relative `case` path is taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::from_json(&read_file(path)?)?;
        if cfg.case.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.case = dir.join(&cfg.case);
            }
        }
        Ok(cfg)
    }

    pub fn n_test(&self) -> usize {
        self.pool_size - self.n_train()
    }

    pub fn n_train(&self) -> usize {
        ((self.pool_size as f64) * (1.0 - self.test_fraction) - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.strategies.is_empty() {
            return bad("strategies must not be empty".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        self.active.check()?;
        self.train.check()?;
        self.pf.check()?;
        let need = self.active.initial_size + self.active.max_iterations * self.active.batch_size;
        if self.n_train() < need {
            return bad(format!(
                "training pool of {} rows is smaller than initial_size + max_iterations * batch_size = {need}",
                self.n_train()
            ));
        }
        if self.n_test() == 0 {
            return bad("test split is empty".into());
        }
        if self.boundary_resolution == 0 {
            return bad("boundary_resolution must be at least 1".into());
        }
        Ok(())
    }

    /// Parse the case file and apply the slack override.
    pub fn load_network(&self) -> Result<PowerNetwork, HarnessError> {
        let net = load_case(&self.case)?;
        match self.sampling.slack_bus {
            Some(id) if net.slack_bus().map(|b| b.id) != Some(id) => net
                .with_slack(id)
                .map_err(|v| HarnessError::Config(format!("slack_bus: {v}"))),
            _ => Ok(net),
        }
    }

    pub fn build_spec(&self, net: &PowerNetwork) -> Result<SamplingSpec, HarnessError> {
        let s = &self.sampling;
        Ok(match self.kind {
            ExperimentKind::TwoD => {
                build_spec_load_pair(net, s.load_buses[0], s.load_buses[1], s.bounds.0, s.bounds.1)?
            }
            ExperimentKind::FullInjection => build_spec_full(net, s.load_std_frac)?,
        })
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub strategy: AcquisitionStrategy,
    pub seed: u64,
    pub iteration: usize,
    pub labels_consumed: usize,
    pub raw_labeled: usize,
    pub undersampled: usize,
    pub test_accuracy: f64,
}

pub const METRICS_HEADER: [&str; 7] = [
    "strategy",
    "seed",
    "iteration",
    "labels_consumed",
    "raw_labeled",
    "undersampled",
    "test_accuracy",
];

/// Mean and sample standard deviation across seeds for one
/// (strategy, iteration) pair. Seeds that stopped earlier do not contribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub strategy: AcquisitionStrategy,
    pub iteration: usize,
    pub n_seeds: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_labels_consumed: f64,
    pub mean_undersampled: f64,
    pub std_undersampled: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    (mean, std)
}

pub fn aggregate(records: &[MetricsRecord], strategies: &[AcquisitionStrategy]) -> Vec<AggregateRecord> {
    let mut out = Vec::new();
    for &s in strategies {
        let max_it = records.iter().filter(|r| r.strategy == s).map(|r| r.iteration).max();
        let Some(max_it) = max_it else { continue };
        for it in 0..=max_it {
            let rs: Vec<&MetricsRecord> = records.iter().filter(|r| r.strategy == s && r.iteration == it).collect();
            if rs.is_empty() {
                continue;
            }
            let acc: Vec<f64> = rs.iter().map(|r| r.test_accuracy).collect();
            let und: Vec<f64> = rs.iter().map(|r| r.undersampled as f64).collect();
            let lab: Vec<f64> = rs.iter().map(|r| r.labels_consumed as f64).collect();
            let (ma, sa) = mean_std(&acc);
            let (mu, su) = mean_std(&und);
            out.push(AggregateRecord {
                strategy: s,
                iteration: it,
                n_seeds: rs.len(),
                mean_test_accuracy: ma,
                std_test_accuracy: sa,
                mean_labels_consumed: mean_std(&lab).0,
                mean_undersampled: mu,
                std_undersampled: su,
            });
        }
    }
    out
}

/// A finished active learning run for one (strategy, seed) cell.
pub struct CellRun {
    pub result: ALResult,
    pub normalizer: Normalizer,
    /// Training-pool position to original pool row.
    pub train_rows: Vec<usize>,
    pub test_size: usize,
    /// Initial set then acquisitions, indexed by full pool row.
    pub log: Vec<Acquisition>,
    pub log_features: Array2<f64>,
}

pub struct Cell {
    pub strategy: AcquisitionStrategy,
    pub seed: u64,
    pub outcome: Result<CellRun, String>,
}

pub struct ExperimentReport {
    pub dim: usize,
    pub net: PowerNetwork,
    pub spec: SamplingSpec,
    pub records: Vec<MetricsRecord>,
    pub aggregates: Vec<AggregateRecord>,
    pub cells: Vec<Cell>,
    /// Power flow solves performed, cache hits excluded.
    pub oracle_calls: usize,
}

impl ExperimentReport {
    pub fn cell(&self, strategy: AcquisitionStrategy, seed: u64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.strategy == strategy && c.seed == seed)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&Cell, &str)> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().err().map(|e| (c, e.as_str())))
    }
}

/// Per-seed material shared by every strategy: pool, split, normalizer and
/// test labels.
struct SeedData {
    pool: Array2<f64>,
    normalizer: Normalizer,
    train_rows: Vec<usize>,
    train_norm: Array2<f64>,
    test: LabeledDataset,
}

fn prepare_seed(
    cfg: &ExperimentConfig,
    net: &PowerNetwork,
    spec: &SamplingSpec,
    cache: &LabelCache,
    ctx: &CacheContext,
    seed: u64,
) -> Result<SeedData, HarnessError> {
    let pool = sample_pool(spec, cfg.pool_size, derive_seed(seed, "pool", 0))?.rows;
    let normalizer = Normalizer::fit(&pool)?;
    let (train_rows, test_rows) = split_indices(pool.nrows(), cfg.test_fraction, derive_seed(seed, "split", 0))?;
    let test_raw = pool.select(Axis(0), &test_rows);
    let test_labels = cache.label_rows(net, spec, test_raw.view(), &cfg.pf, ctx)?;
    let test = LabeledDataset::new(normalizer.normalize(&test_raw), test_labels)?;
    let train_norm = normalizer.normalize(&pool.select(Axis(0), &train_rows));
    let [non, sol] = test.class_counts();
    log::info!("seed {seed}: test set {} rows ({sol} solvable, {non} non-solvable)", test.len());
    Ok(SeedData {
        pool,
        normalizer,
        train_rows,
        train_norm,
        test,
    })
}

fn run_cell(
    cfg: &ExperimentConfig,
    net: &PowerNetwork,
    spec: &SamplingSpec,
    cache: &LabelCache,
    ctx: &CacheContext,
    data: &SeedData,
    strategy: AcquisitionStrategy,
    seed: u64,
) -> Result<CellRun, HarnessError> {
    let oracle = |idx: &[usize]| {
        let rows: Vec<usize> = idx.iter().map(|&i| data.train_rows[i]).collect();
        let raw = data.pool.select(Axis(0), &rows);
        cache
            .label_rows(net, spec, raw.view(), &cfg.pf, ctx)
            .map_err(|e| match e {
                PfError::Row { index, source } => OracleError {
                    pool_index: idx[index],
                    message: source.to_string(),
                },
                e => OracleError {
                    pool_index: idx.first().copied().unwrap_or(0),
                    message: e.to_string(),
                },
            })
    };
    let al = ALConfig {
        seed: derive_seed(seed, "active", 0),
        ..cfg.active.clone()
    };
    let train = TrainConfig {
        seed: derive_seed(seed, "train", 0),
        ..cfg.train.clone()
    };
    let result = active::run(data.train_norm.view(), &data.test, &oracle, strategy, &al, &train)?;
    let st = &result.state;
    let log: Vec<Acquisition> = st
        .labeled
        .iter()
        .zip(&st.labels)
        .take(result.initial.len())
        .map(|(&i, &label)| Acquisition {
            pool_index: i,
            label,
            iteration: 0,
        })
        .chain(result.acquisitions.iter().copied())
        .map(|a| Acquisition {
            pool_index: data.train_rows[a.pool_index],
            ..a
        })
        .collect();
    let rows: Vec<usize> = log.iter().map(|a| a.pool_index).collect();
    let log_features = data.pool.select(Axis(0), &rows);
    Ok(CellRun {
        log,
        log_features,
        result,
        normalizer: data.normalizer.clone(),
        train_rows: data.train_rows.clone(),
        test_size: data.test.len(),
    })
}

/// Run every (strategy, seed) cell of `cfg` and write all artifacts to
/// `cfg.out_dir`. A failing cell is recorded and the others proceed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let net = cfg.load_network()?;
    let spec = cfg.build_spec(&net)?;
    let dim = spec.dim();
    log::info!("{:?} experiment on {}: feature dimension d = {dim}", cfg.kind, cfg.case.display());
    if cfg.kind == ExperimentKind::FullInjection && net.n_buses() == 39 && dim != 57 {
        log::warn!("d = {dim} differs from the 57 features reported for the 39-bus system");
    }

    fs::create_dir_all(&cfg.out_dir)?;
    let marker = cfg.out_dir.join("INCOMPLETE");
    fs::write(&marker, "run in progress or aborted\n")?;

    let cache = match &cfg.cache {
        Some(p) => LabelCache::open(p),
        None => LabelCache::in_memory(),
    };
    let ctx = CacheContext::new(&net, &spec, &cfg.pf);

    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        match prepare_seed(cfg, &net, &spec, &cache, &ctx, seed) {
            Ok(data) => {
                let runs: Vec<Cell> = cfg
                    .strategies
                    .par_iter()
                    .map(|&strategy| {
                        let outcome = run_cell(cfg, &net, &spec, &cache, &ctx, &data, strategy, seed)
                            .map_err(|e| e.to_string());
                        match &outcome {
                            Ok(r) => log::info!(
                                "{strategy} seed {seed}: {} labels, final accuracy {:.4}",
                                r.result.labels_consumed,
                                r.result.history.last().map_or(f64::NAN, |h| h.test_accuracy)
                            ),
                            Err(e) => log::error!("{strategy} seed {seed} failed: {e}"),
                        }
                        Cell { strategy, seed, outcome }
                    })
                    .collect();
                cells.extend(runs);
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                for &strategy in &cfg.strategies {
                    cells.push(Cell {
                        strategy,
                        seed,
                        outcome: Err(e.to_string()),
                    });
                }
            }
        }
        if let Err(e) = cache.save() {
            log::warn!("could not save label cache: {e}");
        }
    }
    let oracle_calls = cache.oracle_calls();
    log::info!("oracle solves this run: {oracle_calls}");

    // Records follow the configured strategy order, then seed order.
    cells.sort_by_key(|c| {
        (
            cfg.strategies.iter().position(|&s| s == c.strategy),
            cfg.seeds.iter().position(|&s| s == c.seed),
        )
    });
    let records: Vec<MetricsRecord> = cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok().map(|r| (c, r)))
        .flat_map(|(c, r)| {
            r.result.history.iter().map(move |h| MetricsRecord {
                strategy: c.strategy,
                seed: c.seed,
                iteration: h.iteration,
                labels_consumed: h.labels_consumed,
                raw_labeled: h.raw_labeled,
                undersampled: h.undersampled,
                test_accuracy: h.test_accuracy,
            })
        })
        .collect();
    let aggregates = aggregate(&records, &cfg.strategies);
    let report = ExperimentReport {
        dim,
        net,
        spec,
        records,
        aggregates,
        cells,
        oracle_calls,
    };
    write_artifacts(cfg, &report)?;
    fs::remove_file(marker)?;
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.strategy.to_string(),
            r.seed.to_string(),
            r.iteration.to_string(),
            r.labels_consumed.to_string(),
            r.raw_labeled.to_string(),
            r.undersampled.to_string(),
            r.test_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_artifacts(cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<(), HarnessError> {
    let out = &cfg.out_dir;
    write_metrics(&out.join("metrics.csv"), &report.records)?;

    let mut w = csv_writer(&out.join("aggregate.csv"))?;
    w.write_record([
        "strategy",
        "iteration",
        "n_seeds",
        "mean_test_accuracy",
        "std_test_accuracy",
        "mean_labels_consumed",
        "mean_undersampled",
        "std_undersampled",
    ])?;
    for a in &report.aggregates {
        w.write_record([
            a.strategy.to_string(),
            a.iteration.to_string(),
            a.n_seeds.to_string(),
            a.mean_test_accuracy.to_string(),
            a.std_test_accuracy.to_string(),
            a.mean_labels_consumed.to_string(),
            a.mean_undersampled.to_string(),
            a.std_undersampled.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("failures.csv"))?;
    w.write_record(["strategy", "seed", "error"])?;
    for (c, e) in report.failures() {
        w.write_record([c.strategy.to_string(), c.seed.to_string(), e.to_string()])?;
    }
    w.flush()?;

    for sub in ["acquisitions", "checkpoints"] {
        fs::create_dir_all(out.join(sub))?;
    }
    if cfg.kind == ExperimentKind::TwoD {
        fs::create_dir_all(out.join("boundary"))?;
    }
    let names = report.spec.header();
    for c in &report.cells {
        let Ok(run) = &c.outcome else { continue };
        let stem = format!("{}_seed{}", c.strategy, c.seed);
        write_acquisitions(&out.join("acquisitions").join(format!("{stem}.csv")), run, &names)?;
        mlp::save_checkpoint(
            &out.join("checkpoints").join(format!("{stem}.json")),
            &run.result.model,
            Some(&run.normalizer),
        )?;
        if cfg.kind == ExperimentKind::TwoD {
            let b = cfg.sampling.bounds;
            let grid = export_boundary_grid(&run.result.model, &run.normalizer, [b, b], cfg.boundary_resolution)?;
            let f = fs::File::create(out.join("boundary").join(format!("{stem}.csv")))?;
            grid.write_csv(io::BufWriter::new(f), [&names[0], &names[1]])?;
        }
    }
    fs::write(out.join("plot.gp"), gnuplot_template(cfg))?;
    Ok(())
}

/// Acquisition log: the random initial set (iteration 0) followed by every
/// queried batch. `pool_index` is the row in the full sampled pool; feature
/// values are physical units.
fn write_acquisitions(path: &Path, run: &CellRun, names: &[String]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["iteration".to_string(), "pool_index".to_string()];
    header.extend(names.iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    for (k, e) in run.log.iter().enumerate() {
        let mut rec = vec![e.iteration.to_string(), e.pool_index.to_string()];
        rec.extend(run.log_features.row(k).iter().map(|v| v.to_string()));
        rec.push(e.label.class().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn gnuplot_template(cfg: &ExperimentConfig) -> String {
    let strategies: Vec<String> = cfg.strategies.iter().map(|s| s.to_string()).collect();
    let mut s = format!(
        "# gnuplot -p plot.gp  (run from this directory)\n\
         set datafile separator \",\"\n\
         set key bottom right\n\
         set xlabel \"iteration\"\n\
         set ylabel \"mean test accuracy\"\n\
         strategies = \"{}\"\n\
         plot for [s in strategies] \"< grep '^\".s.\",' aggregate.csv\" using 2:4:5 with yerrorlines title s\n",
        strategies.join(" ")
    );
    s.push_str(
        "pause -1\n\
         set ylabel \"under-sampled training set size\"\n\
         plot for [s in strategies] \"< grep '^\".s.\",' aggregate.csv\" using 2:7:8 with yerrorlines title s\n",
    );
    if cfg.kind == ExperimentKind::TwoD {
        s.push_str(&format!(
            "pause -1\n\
             set xlabel \"P{} (MW)\"\n\
             set ylabel \"P{} (MW)\"\n\
             set view map\n\
             set palette defined (0 \"white\", 1 \"blue\")\n\
             plot \"boundary/{}_seed{}.csv\" every ::1 using 1:2:4 with image title \"predicted solvable\"\n",
            cfg.sampling.load_buses[0], cfg.sampling.load_buses[1], cfg.strategies[0], cfg.seeds[0]
        ));
    }
    s
}
