//! Command-line front end: prepare partitions, run experiments and
//! baselines, and render reports from metrics files.

mod config;
mod error;
mod manifest;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedhet::algorithms::Algorithm;
use fedhet::orchestrator::{
    export_metrics, load_workload, prepare_split, run_baseline, run_experiment, write_prepared, BaselineKind,
    ExperimentConfig, MetricsAppender, RunKind, RunMeta, SummaryExtras, TransportKind, PARTITION_FILE,
    SUMMARY_FILE, TEST_FILE, TRAIN_FILE,
};
use log::info;

use config::{parse_broker, resolve, Overrides};
use error::{io_error, CliError, CliResult};
use manifest::{input_hash, now, RunManifest};
use report::{load_series, write_report, Metric};

#[derive(Parser)]
#[command(name = "fedhet", version, about = "Federated learning under data heterogeneity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, split, encode and partition the data; write the result to disk.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `prepared_dir` or `<output>/<id>-prepared`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recompute even when the recorded outputs are current.
        #[arg(long)]
        force: bool,
    },
    /// Run one federated experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_transport)]
        transport: Option<TransportKind>,
        /// Broker address as HOST:PORT.
        #[arg(long, value_parser = parse_broker)]
        broker: Option<(String, u16)>,
        /// Algorithm to run instead of the configured one.
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        force: bool,
    },
    /// Run a reference baseline with the experiment's data and budget.
    Baseline {
        #[arg(long, value_parser = parse_baseline)]
        kind: BaselineKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Tabulate and chart metrics files.
    Report {
        /// Rounds to tabulate, e.g. 30,50; defaults to each run's last round.
        #[arg(long, value_delimiter = ',')]
        rounds: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "accuracy")]
        metric: Metric,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn parse_transport(s: &str) -> Result<TransportKind, String> {
    match s {
        "loopback" => Ok(TransportKind::Loopback),
        "mqtt" => Ok(TransportKind::Mqtt),
        _ => Err(format!("unknown transport {s:?} (loopback or mqtt)")),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: fedhet::Error| e.to_string())
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    s.parse().map_err(|e: fedhet::Error| e.to_string())
}

fn up_to_date(manifest_path: &Path, hash: &str) -> bool {
    RunManifest::read(manifest_path).is_some_and(|m| m.is_current(hash))
}

fn cmd_prepare(config: &Path, out: Option<PathBuf>, force: bool) -> CliResult<()> {
    let cfg = resolve(config, &Overrides::default())?;
    let dir = out
        .or_else(|| cfg.prepared_dir.clone())
        .unwrap_or_else(|| cfg.output.dir.join(format!("{}-prepared", cfg.experiment_id)));
    // Preparing always starts from the raw source.
    let cfg = ExperimentConfig {
        prepared_dir: None,
        ..cfg
    };
    let manifest_path = dir.join("manifest.json");
    let hash = input_hash("prepare", &cfg)?;
    if !force && up_to_date(&manifest_path, &hash) {
        println!("{} is up to date", dir.display());
        return Ok(());
    }
    let started = now();
    let split = prepare_split(&cfg)?;
    write_prepared(&split, &dir)?;
    let mut manifest = RunManifest::new("prepare", &cfg, hash, started);
    for name in [TRAIN_FILE, TEST_FILE, PARTITION_FILE, SUMMARY_FILE] {
        manifest.add(&dir.join(name))?;
    }
    for (i, rows) in split.partition.assignments.iter().enumerate() {
        let p = dir.join(format!("client_{i:02}.idx"));
        let body: String = rows.iter().map(|r| format!("{r}\n")).collect();
        fs::write(&p, body).map_err(|e| io_error(&p, e))?;
        manifest.add(&p)?;
    }
    manifest.write(&manifest_path)?;
    print!("{}", split.partition.render_summary());
    println!(
        "wrote {} ({} train rows, {} test rows)",
        dir.display(),
        split.train.len(),
        split.test.len()
    );
    Ok(())
}

fn cmd_run(config: &Path, overrides: Overrides, force: bool) -> CliResult<()> {
    let cfg = resolve(config, &overrides)?;
    let dir = cfg.output.dir.clone();
    let meta = RunMeta {
        kind: RunKind::Federated(cfg.algorithm),
        config: &cfg,
    };
    let manifest_path = dir.join(format!("{}.manifest.json", meta.stem()));
    let hash = input_hash("run", &cfg)?;
    if !force && up_to_date(&manifest_path, &hash) {
        println!("{} is up to date", meta.csv_path(&dir).display());
        return Ok(());
    }
    let started = now();
    let workload = load_workload(&cfg)?;
    let mut appender = MetricsAppender::create(meta.clone(), &dir)?;
    let mut done = 0usize;
    let outcome = run_experiment(&cfg, &workload, |r| {
        info!(
            "round {}/{}: accuracy {:.4}, balanced {:.4}, loss {:.4}, clients {:?}",
            r.round, cfg.rounds, r.accuracy, r.balanced_accuracy, r.loss, r.participants
        );
        done += 1;
        appender.append(r)
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            // Keep completed rounds; drop a file that holds only the header.
            if done == 0 {
                let _ = appender.finish();
            }
            return Err(e.into());
        }
    };
    let extras = SummaryExtras {
        transport: Some(outcome.stats),
        warnings: workload.warnings.clone(),
        partition: Some(workload.partition.summary.clone()),
    };
    let (csv, summary) = export_metrics(&outcome.records, &meta, &extras, &dir)?;
    appender.finish()?;
    let mut manifest = RunManifest::new("run", &cfg, hash, started);
    manifest.add(&csv)?;
    manifest.add(&summary)?;
    manifest.write(&manifest_path)?;
    if let Some(last) = outcome.records.last() {
        println!(
            "{} after {} rounds: accuracy {:.4}, balanced accuracy {:.4}",
            cfg.algorithm, last.round, last.accuracy, last.balanced_accuracy
        );
    }
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_baseline(kind: BaselineKind, config: &Path, force: bool) -> CliResult<()> {
    let cfg = resolve(config, &Overrides::default())?;
    let dir = cfg.output.dir.clone();
    let meta = RunMeta {
        kind: RunKind::Baseline(kind),
        config: &cfg,
    };
    let manifest_path = dir.join(format!("{}.manifest.json", meta.stem()));
    let hash = input_hash(&format!("baseline {}", kind.label()), &cfg)?;
    if !force && up_to_date(&manifest_path, &hash) {
        println!("{} is up to date", meta.csv_path(&dir).display());
        return Ok(());
    }
    let started = now();
    let workload = load_workload(&cfg)?;
    let series = run_baseline(kind, &cfg, &workload)?;
    let extras = SummaryExtras {
        transport: None,
        warnings: workload.warnings.clone(),
        partition: Some(workload.partition.summary.clone()),
    };
    let (csv, summary) = export_metrics(&series.records, &meta, &extras, &dir)?;
    let mut manifest = RunManifest::new("baseline", &cfg, hash, started);
    manifest.add(&csv)?;
    manifest.add(&summary)?;
    manifest.write(&manifest_path)?;
    if let Some(last) = series.records.last() {
        println!(
            "{} after {} rounds: accuracy {:.4}, balanced accuracy {:.4}",
            kind, last.round, last.accuracy, last.balanced_accuracy
        );
    }
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_report(rounds: Option<Vec<usize>>, out: &Path, metric: Metric, files: &[PathBuf]) -> CliResult<()> {
    if rounds.as_ref().is_some_and(|r| r.is_empty() || r.contains(&0)) {
        return Err(CliError::Usage("--rounds must list positive round numbers".into()));
    }
    let series = files
        .iter()
        .map(|f| load_series(f, metric))
        .collect::<CliResult<Vec<_>>>()?;
    let written = write_report(&series, rounds.as_deref(), out)?;
    print!("{}", report::render_text(&report::build_table(&series, rounds.as_deref())));
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { config, out, force } => cmd_prepare(&config, out, force),
        Command::Run {
            config,
            transport,
            broker,
            algorithm,
            force,
        } => cmd_run(
            &config,
            Overrides {
                transport,
                broker,
                algorithm,
            },
            force,
        ),
        Command::Baseline { kind, config, force } => cmd_baseline(kind, &config, force),
        Command::Report {
            rounds,
            out,
            metric,
            files,
        } => cmd_report(rounds, &out, metric, &files),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedhet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
