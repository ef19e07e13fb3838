use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use freq_opf_core::harness::{
    generate_dataset, read_day_csv, render, resolve_case, run_day, train_model, write_day_outputs,
    write_training_outputs, StudyConfig,
};
use freq_opf_core::neural::{ModelFile, ScenarioDataset};

#[derive(Parser)]
#[command(version, about = "Frequency-constrained OPF studies")]
struct Cli {
    /// Built-in case name (`ieee9`, `ieee39`) or case file path.
    #[arg(long, global = true)]
    case: Option<String>,
    /// Study configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate labelled scenarios into `dataset.csv`.
    GenDataset,
    /// Fit the predictor and write `model.json` plus diagnostics.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the 24-hour benchmark into `day_results.csv` and figures.
    RunDay {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Record solve times (output is then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Summarize one or more day result files.
    Report {
        csv: Vec<PathBuf>,
        /// Hours printed in detail.
        #[arg(long, value_delimiter = ',', default_value = "1,8")]
        hours: Vec<usize>,
    },
}

fn study_config(cli: &Cli) -> Result<StudyConfig> {
    let mut cfg = match &cli.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn case_spec(cli: &Cli, cfg: &StudyConfig) -> String {
    cli.case
        .clone()
        .or_else(|| cfg.case.as_ref().map(|p| p.display().to_string()))
        .unwrap_or_else(|| "ieee9".into())
}

fn or_default(path: &Option<PathBuf>, out_dir: &Path, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| out_dir.join(name))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()?;
    }
    if let Command::Report { csv, hours } = &cli.command {
        if csv.is_empty() {
            bail!("no result files given");
        }
        let mut rows = Vec::new();
        for p in csv {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            rows.extend(read_day_csv(&bytes).with_context(|| format!("parsing {}", p.display()))?);
        }
        print!("{}", render(&rows, hours)?);
        return Ok(());
    }
    let cfg = study_config(&cli)?;
    let case = resolve_case(&case_spec(&cli, &cfg))?;
    match &cli.command {
        Command::GenDataset => {
            let data = generate_dataset(&case, &cfg)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            let path = cli.out_dir.join("dataset.csv");
            data.save(&path)?;
            info!("wrote {} samples to {}", data.len(), path.display());
        }
        Command::Train { dataset } => {
            let path = or_default(dataset, &cli.out_dir, "dataset.csv");
            let data = ScenarioDataset::load(&path)
                .with_context(|| format!("loading {}", path.display()))?;
            let trained = train_model(&data, &cfg)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            write_training_outputs(&trained, &cli.out_dir)?;
            println!(
                "test MAE rocof {:.5} Hz/s, fn {:.5} Hz; R2 {:.4} / {:.4}",
                trained.test.mae[0], trained.test.mae[1], trained.test.r2[0], trained.test.r2[1]
            );
        }
        Command::RunDay { model, timing } => {
            let path = or_default(model, &cli.out_dir, "model.json");
            let model =
                ModelFile::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let mut cfg = cfg.clone();
            cfg.timing |= *timing;
            let day = run_day(&case, &model, &cfg)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            write_day_outputs(&day, &cfg, case.f0, &cli.out_dir)?;
            print!("{}", render(&day.rows(), &cfg.trace_hours)?);
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
