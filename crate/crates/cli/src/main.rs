//! `bsl`: generate benchmarks, run bandit-supervised training, rank classes
//! and evaluate saved learners.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bandit_supervision::bandit::PullHistory;
use bandit_supervision::data::{
    generate_synthetic, load_dataset, write_dataset, write_embeddings,
};
use bandit_supervision::harness::{
    emit_report, per_class_f1, read_pull_counts, run_multi, run_training, write_f1_csv, DataSource,
    ReportFormat, RunConfig, Strategy, PULL_HISTORY_FILE,
};
use bandit_supervision::learner::load_params;
use bandit_supervision::ranking::average_ranking;
use bandit_supervision::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bsl", version, about = "Bandit-supervised training harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset and class embeddings described by a config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once and write the run's report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// bandit, uniform or freq:<N>
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// S runs with seeds seed, seed+1, ... and their average ranking.
    Multirun {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Average ranking over stored run directories, written to stdout.
    Rank {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
    /// Per-class F1 of saved parameters on a dataset's test split.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn generate(config: &Path, out: &Path) -> Result<()> {
    let config = RunConfig::from_file(config)?;
    let DataSource::Synthetic(syn) = &config.data else {
        return Err(Error::Config("generate needs a [data.synthetic] section".into()));
    };
    let data = generate_synthetic(syn)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let path = out.join("dataset.jsonl");
    let mut w = create(&path)?;
    write_dataset(&data.dataset, &mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("embeddings.txt");
    let mut w = create(&path)?;
    write_embeddings(&data.embeddings(), &mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("clean_classes.txt");
    let clean: String = data.clean_classes.iter().map(|c| format!("{c}\n")).collect();
    fs::write(&path, clean).map_err(|e| Error::io(&path, e))?;

    // A config that trains on the files just written.
    let run = RunConfig {
        data: DataSource::Dataset("dataset.jsonl".into()),
        embeddings: "embeddings.txt".into(),
        ..config
    };
    let path = out.join("config.toml");
    fs::write(&path, run.to_toml()).map_err(|e| Error::io(&path, e))?;
    println!(
        "wrote {} instances, {} classes to {}",
        data.dataset.len(),
        data.dataset.num_classes(),
        out.display()
    );
    Ok(())
}

fn load_config(path: &Path, strategy: Option<&str>, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::from_file(path)?;
    if let Some(s) = strategy {
        config.strategy = s.parse::<Strategy>()?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(config: RunConfig, out: &Path, format: ReportFormat) -> Result<()> {
    let artifacts = run_training(&config)?;
    emit_report(&artifacts, out, format)?;
    let top: Vec<&str> = artifacts.final_ranking.top(5).iter().map(String::as_str).collect();
    println!(
        "{} seed {}: {} rounds, converged at {}, macro-F1 {:.4}, top classes {}",
        artifacts.strategy,
        artifacts.seed,
        artifacts.rounds(),
        artifacts
            .convergence_round
            .map_or_else(|| "-".to_owned(), |r| r.to_string()),
        artifacts.macro_f1(artifacts.f1.keys()),
        top.join(" ")
    );
    Ok(())
}

fn multirun(config: RunConfig, runs: usize, out: &Path, format: ReportFormat) -> Result<()> {
    let result = run_multi(&config, runs)?;
    let mut failures = 0;
    for (s, r) in result.runs.iter().enumerate() {
        let dir = out.join(format!("run_{s:03}"));
        match r {
            Ok(a) => {
                emit_report(a, &dir, format)?;
                println!(
                    "run {s} (seed {}): {} rounds, converged at {}",
                    a.seed,
                    a.rounds(),
                    a.convergence_round
                        .map_or_else(|| "-".to_owned(), |r| r.to_string())
                );
            }
            Err(e) => {
                failures += 1;
                eprintln!("run {s} (seed {}) failed: {e}", config.seed.wrapping_add(s as u64));
            }
        }
    }
    let path = out.join("average_ranking.csv");
    result.average.write_csv(create(&path)?, "mean_pulls")?;
    println!(
        "{} of {runs} runs completed; average ranking in {}",
        runs - failures,
        path.display()
    );
    Ok(())
}

fn rank(dirs: &[PathBuf]) -> Result<()> {
    let mut histories = Vec::new();
    let mut classes = BTreeSet::new();
    for dir in dirs {
        let path = dir.join(PULL_HISTORY_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        histories.push(PullHistory::read_csv(file)?);
        let path = dir.join("pull_counts.csv");
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        classes.extend(read_pull_counts(file)?.into_keys());
    }
    let ranking = average_ranking(&histories, classes.iter().map(String::as_str))?;
    ranking.write_csv(io::stdout().lock(), "mean_pulls")
}

fn eval(params: &Path, dataset: &Path, threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let (learner, sidecar) = load_params(params)?;
    let dataset = load_dataset(dataset)?;
    if sidecar.class_ids != dataset.classes() {
        return Err(Error::Data(
            "the parameters were trained on a different class set than this dataset".into(),
        ));
    }
    let table = per_class_f1(&learner, &dataset, threshold)?;
    write_f1_csv(&table, &dataset.classes_by_frequency(), io::stdout().lock())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => generate(&config, &out),
        Command::Run {
            config,
            out,
            strategy,
            seed,
            format,
        } => run(load_config(&config, strategy.as_deref(), seed)?, &out, format.into()),
        Command::Multirun {
            config,
            runs,
            out,
            format,
        } => multirun(load_config(&config, None, None)?, runs, &out, format.into()),
        Command::Rank { runs } => rank(&runs),
        Command::Eval {
            params,
            dataset,
            threshold,
        } => eval(&params, &dataset, threshold),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as configuration errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
