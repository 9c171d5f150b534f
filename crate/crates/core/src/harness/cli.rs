use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use super::{
    export_boundary_grid, load_case, read_file, run_experiment, ExperimentConfig, ExperimentKind, HarnessError,
};
use crate::mlp::{self, LabeledDataset, TrainConfig};
use crate::powerflow::{label_batch, solve_newton, PfConfig, SolvabilityLabel};
use crate::sampling::{sample_pool, FeatureMatrix, Normalizer, SamplingSpec};

#[derive(Parser, Debug)]
#[command(name = "solvability", version, about = "Power flow solvability labeling and active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one power flow and print bus voltages.
    Pf {
        #[arg(long)]
        case: PathBuf,
        #[command(flatten)]
        pf: PfArgs,
    },
    /// Label injection samples as solvable (1) or non-solvable (0).
    Label {
        #[command(flatten)]
        space: SpaceArgs,
        /// Comma-separated sample values in MW/MVAr, in feature order.
        #[arg(long, conflicts_with = "input", allow_hyphen_values = true)]
        values: Option<String>,
        /// CSV of samples with a feature-name header.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        pf: PfArgs,
    },
    /// Sample an injection pool and write it as CSV.
    Pool {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Passive training on a labeled CSV (feature columns then `label`).
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON training config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an active learning experiment config.
    Al {
        #[arg(long)]
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Export the decision boundary of a 2-feature checkpoint.
    Boundary {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        #[arg(long, default_value_t = -3000.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 3000.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value = "x0,x1")]
        names: String,
    },
}

#[derive(Args, Debug)]
struct PfArgs {
    #[arg(long)]
    pf_tol: Option<f64>,
    #[arg(long)]
    pf_max_iter: Option<usize>,
    #[arg(long)]
    pf_q_limits: Option<bool>,
}

impl PfArgs {
    fn config(&self) -> Result<PfConfig, HarnessError> {
        let d = PfConfig::default();
        let cfg = PfConfig {
            tol: self.pf_tol.unwrap_or(d.tol),
            max_iter: self.pf_max_iter.unwrap_or(d.max_iter),
            enforce_q_limits: self.pf_q_limits.unwrap_or(d.enforce_q_limits),
            ..d
        };
        cfg.check()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    TwoD,
    Full,
}

#[derive(Args, Debug)]
struct SpaceArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, value_enum, default_value = "two-d")]
    kind: Kind,
    #[arg(long, default_value_t = 0.5)]
    load_std_frac: f64,
    /// Move the slack to this bus (the `full` preset uses bus 39).
    #[arg(long)]
    slack_bus: Option<u32>,
}

impl SpaceArgs {
    /// Same network and spec as the matching experiment preset.
    fn load(&self) -> Result<(crate::network::PowerNetwork, SamplingSpec), HarnessError> {
        let kind = match self.kind {
            Kind::TwoD => ExperimentKind::TwoD,
            Kind::Full => ExperimentKind::FullInjection,
        };
        let mut cfg = ExperimentConfig::preset(kind, self.case.clone());
        cfg.sampling.load_std_frac = self.load_std_frac;
        if self.slack_bus.is_some() {
            cfg.sampling.slack_bus = self.slack_bus;
        }
        let net = cfg.load_network()?;
        let spec = cfg.build_spec(&net)?;
        Ok((net, spec))
    }
}

/// Parse `args` (including the program name) and run. Returns the process
/// exit code; diagnostics go to stderr, results to `out`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<(), HarnessError> {
    match cmd {
        Command::Pf { case, pf } => cmd_pf(&case, &pf.config()?, out),
        Command::Label {
            space,
            values,
            input,
            output,
            pf,
        } => cmd_label(&space, values, input, output, &pf.config()?, out),
        Command::Pool { space, n, seed, out: path } => {
            let (_, spec) = space.load()?;
            let pool = sample_pool(&spec, n, seed)?;
            write_atomic(&path, |f| Ok(pool.write_csv(f)?))?;
            writeln!(out, "wrote {n} x {} pool to {}", spec.dim(), path.display())?;
            Ok(())
        }
        Command::Train {
            input,
            out: path,
            config,
            seed,
        } => cmd_train(&input, &path, config, seed, out),
        Command::Al {
            config,
            seed,
            out_dir,
            cache,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if cache.is_some() {
                cfg.cache = cache;
            }
            let report = run_experiment(&cfg)?;
            let failed = report.failures().count();
            writeln!(
                out,
                "d = {}, {} cells, {failed} failed, metrics in {}",
                report.dim,
                report.cells.len(),
                cfg.out_dir.join("metrics.csv").display()
            )?;
            if failed == report.cells.len() {
                return Err(HarnessError::Numerical("every run cell failed".into()));
            }
            Ok(())
        }
        Command::Boundary {
            checkpoint,
            out: path,
            resolution,
            lo,
            hi,
            names,
        } => {
            let (model, nz) = mlp::load_checkpoint(&checkpoint)?;
            let nz = nz.ok_or_else(|| HarnessError::Config("checkpoint carries no normalizer".into()))?;
            let grid = export_boundary_grid(&model, &nz, [(lo, hi); 2], resolution)?;
            let names: Vec<&str> = names.split(',').collect();
            if names.len() != 2 {
                return Err(HarnessError::Usage("--names takes two comma-separated names".into()));
            }
            write_atomic(&path, |f| grid.write_csv(f, [names[0], names[1]]))?;
            writeln!(out, "wrote {} grid rows to {}", grid.cells.len(), path.display())?;
            Ok(())
        }
    }
}

/// Write through a temporary sibling so a failure leaves no partial file.
fn write_atomic(
    path: &Path,
    f: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    let tmp = path.with_extension("partial");
    let res = (|| {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    })();
    match res {
        Ok(()) => Ok(fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn cmd_pf(case: &Path, cfg: &PfConfig, out: &mut dyn Write) -> Result<(), HarnessError> {
    let net = load_case(case)?;
    let sol = solve_newton(&net, cfg)?;
    writeln!(out, "converged: {}", sol.converged)?;
    writeln!(out, "iterations: {}", sol.iterations)?;
    writeln!(out, "max_mismatch: {:e}", sol.max_mismatch)?;
    writeln!(out, "bus,vm_pu,va_rad")?;
    for (k, b) in net.buses.iter().enumerate() {
        writeln!(out, "{},{},{}", b.id, sol.v_mag[k], sol.v_ang[k])?;
    }
    if !sol.converged {
        return Err(HarnessError::Numerical(format!(
            "power flow did not converge (mismatch {:e})",
            sol.max_mismatch
        )));
    }
    Ok(())
}

fn cmd_label(
    space: &SpaceArgs,
    values: Option<String>,
    input: Option<PathBuf>,
    output: Option<PathBuf>,
    pf: &PfConfig,
    out: &mut dyn Write,
) -> Result<(), HarnessError> {
    let (net, spec) = space.load()?;
    let rows = match (values, input) {
        (Some(v), None) => {
            let vals = v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Usage(format!("--values: {e}")))?;
            Array2::from_shape_vec((1, vals.len()), vals).expect("one row")
        }
        (None, Some(p)) => FeatureMatrix::read_csv(&spec, fs::File::open(&p)?)?.rows,
        _ => return Err(HarnessError::Usage("give exactly one of --values or --input".into())),
    };
    let labels = label_batch(&net, &spec, rows.view(), pf)?;
    let render = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "row,class,label")?;
        for (i, l) in labels.iter().enumerate() {
            let name = match l {
                SolvabilityLabel::Solvable => "solvable",
                SolvabilityLabel::NonSolvable => "non_solvable",
            };
            writeln!(w, "{i},{},{name}", l.class())?;
        }
        Ok(())
    };
    match output {
        Some(p) => write_atomic(&p, |f| Ok(render(f)?))?,
        None => render(out)?,
    }
    Ok(())
}

fn read_labeled_csv(path: &Path) -> Result<(Array2<f64>, Vec<SolvabilityLabel>), HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().last() != Some("label") || header.len() < 2 {
        return Err(HarnessError::Config(format!(
            "{}: header must list feature columns followed by `label`",
            path.display()
        )));
    }
    let d = header.len() - 1;
    let mut vals = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| HarnessError::Config(format!("{} row {}: {m}", path.display(), line + 1));
        for f in rec.iter().take(d) {
            vals.push(f.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
        let class: usize = rec[d].trim().parse().map_err(|_| bad("label must be 0 or 1".into()))?;
        labels.push(SolvabilityLabel::from_class(class).ok_or_else(|| bad("label must be 0 or 1".into()))?);
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, d), vals).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok((x, labels))
}

fn cmd_train(
    input: &Path,
    path: &Path,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), HarnessError> {
    let mut cfg: TrainConfig = match config {
        Some(p) => serde_json::from_str(&read_file(&p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (x, labels) = read_labeled_csv(input)?;
    let nz = Normalizer::fit(&x)?;
    let data = LabeledDataset::new(nz.normalize(&x), labels)?;
    let model = mlp::train(&data, &cfg)?;
    let acc = model.accuracy(&data)?;
    write_atomic(path, |f| {
        f.write_all(mlp::checkpoint_json(&model, Some(&nz))?.as_bytes())?;
        Ok(())
    })?;
    writeln!(out, "trained on {} rows, training accuracy {acc:.4}", data.len())?;
    Ok(())
}

