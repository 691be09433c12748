//! `food`: synthesize radar data, train, calibrate and evaluate.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 data or format, 4
//! numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use food::checkpoint::Checkpoint;
use food::config::RunConfig;
use food::detect::ThresholdSet;
use food::eval::{evaluate, EvalOptions, IdPool, ScoreVariant};
use food::pipeline::{self, as_slices, classes, Splits};
use food::radar::{load_dataset, save_dataset, Dataset, Label, SyntheticSuite};
use food::train::{TrainError, Trainer};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(
    name = "food",
    version,
    about = "Radar face authentication with OOD rejection"
)]
struct Cli {
    /// Print every configuration key with its default and exit.
    #[arg(long)]
    dump_config: bool,

    /// Worker threads for generation and scoring (training steps stay
    /// single-threaded).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic PER1..PER3 and OOD frames to one FOODRAW1 file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Frames per enrolled class.
        #[arg(long)]
        frames_per_class: usize,
        /// OOD frames; defaults to the per-class count.
        #[arg(long)]
        ood_frames: Option<usize>,
        #[arg(long, env = "FOOD_SEED")]
        seed: Option<u64>,
        /// Profile file overriding the default scatterer profiles.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on the ID frames of a dataset and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint's weights and optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, env = "FOOD_SEED")]
        seed: Option<u64>,
    },
    /// Fix the per-class thresholds from calibration frames.
    Calibrate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score ID and OOD test frames and write the metrics report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        id: PathBuf,
        #[arg(long)]
        ood: PathBuf,
        /// JSON report path; the text table goes next to it with `.txt`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        id_pool: Option<PoolArg>,
        #[arg(long, value_enum, default_value = "full")]
        variant: VariantArg,
    },
    /// Print a checkpoint's training state and thresholds.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolArg {
    ClassOnly,
    AllId,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    NoPrivateLeaves,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn code(self, code: u8) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn code(self, code: u8) -> CliResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

const OTHER: u8 = 1;
const USAGE: u8 = 2;
const DATA: u8 = 3;
const NUMERIC: u8 = 4;

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        error: anyhow!(msg.into()),
    }
}

fn data_err(msg: impl Into<String>) -> Failure {
    Failure {
        code: DATA,
        error: anyhow!(msg.into()),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .code(DATA)?;
            RunConfig::parse(&text)
                .with_context(|| format!("config {}", p.display()))
                .code(USAGE)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.resolve();
    config.validate().code(USAGE)?;
    Ok(config)
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    load_dataset(path)
        .with_context(|| format!("loading {}", path.display()))
        .code(DATA)
}

fn save_data(path: &Path, data: &Dataset) -> CliResult<()> {
    save_dataset(path, data)
        .with_context(|| format!("writing {}", path.display()))
        .code(OTHER)
}

fn check_shape(data: &Dataset, config: &RunConfig, path: &Path) -> CliResult<()> {
    if data.shape != config.radar.shape() {
        return Err(data_err(format!(
            "{}: frames are {:?}, configuration expects {:?}",
            path.display(),
            data.shape,
            config.radar.shape()
        )));
    }
    Ok(())
}

fn run_dir(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn cmd_synth(
    out: &Path,
    frames_per_class: usize,
    ood_frames: Option<usize>,
    seed: Option<u64>,
    profile: Option<&Path>,
    config: Option<&Path>,
) -> CliResult<()> {
    if frames_per_class == 0 {
        return Err(usage("--frames-per-class must be at least 1"));
    }
    let mut config = load_config(config, seed)?;
    config.synth.frames_per_class = frames_per_class;
    config.synth.ood_frames = ood_frames.unwrap_or(frames_per_class);
    let suite = match profile {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading profile {}", p.display()))
                .code(DATA)?;
            SyntheticSuite::parse(&text, &config.radar, config.synth_seed())
                .with_context(|| format!("profile {}", p.display()))
                .code(DATA)?
        }
        None => pipeline::default_suite(&config),
    };
    let data = pipeline::synthesize(&config, &suite).code(DATA)?;
    save_data(out, &data)?;
    println!(
        "wrote {} frames ({} per class, {} OOD) to {}",
        data.len(),
        config.synth.frames_per_class,
        config.synth.ood_frames,
        out.display()
    );
    Ok(())
}

fn train_failure(e: TrainError) -> Failure {
    let code = if e.is_numeric() { NUMERIC } else { OTHER };
    Failure {
        code,
        error: anyhow::Error::new(e).context("training failed"),
    }
}

fn cmd_train(
    data_path: &Path,
    config_path: Option<&Path>,
    out: &Path,
    resume: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> CliResult<()> {
    let (mut config, mut trainer) = match resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)
                .with_context(|| format!("loading checkpoint {}", p.display()))
                .code(DATA)?;
            let model = ckpt.model().code(DATA)?;
            let opt = ckpt
                .optimizer
                .clone()
                .ok_or_else(|| data_err(format!("{} has no optimizer state", p.display())))?;
            let trainer = Trainer::resume(model, opt, ckpt.epoch);
            (ckpt.config, Some(trainer))
        }
        None => (load_config(config_path, seed)?, None),
    };
    if let Some(e) = epochs {
        config.train.epochs = e;
    }
    let data = load_data(data_path)?;
    check_shape(&data, &config, data_path)?;
    let splits = Splits::new(&data, &config).map_err(|e| data_err(e.to_string()))?;

    let dir = run_dir(out);
    fs::create_dir_all(&dir).code(OTHER)?;
    fs::write(dir.join("config.txt"), config.dump()).code(OTHER)?;
    save_data(&dir.join("calib.foodraw"), &splits.calibration)?;
    save_data(&dir.join("test_id.foodraw"), &splits.test_id)?;
    save_data(&dir.join("test_ood.foodraw"), &splits.test_ood)?;

    let mut trainer = match trainer.take() {
        Some(t) => t,
        None => Trainer::new(
            food::model::FoodModel::build(config.model_config()).code(USAGE)?,
            config.optim,
        )
        .code(USAGE)?,
    };
    let c = classes(&splits.train);
    let mut log = String::new();
    trainer
        .fit(as_slices(&c), &config.train, |l| {
            let line = l.to_line();
            println!("{line}");
            log.push_str(&line);
            log.push('\n');
        })
        .map_err(train_failure)?;
    let log_path = dir.join("train_log.txt");
    let mut previous = fs::read_to_string(&log_path).unwrap_or_default();
    if resume.is_none() {
        previous.clear();
    }
    fs::write(&log_path, previous + &log).code(OTHER)?;

    Checkpoint::from_model(
        config,
        trainer.epoch,
        &trainer.model,
        Some(&trainer.optimizer),
        None,
    )
    .save(out)
    .with_context(|| format!("writing {}", out.display()))
    .code(OTHER)?;
    println!(
        "saved {} after {} epochs ({} steps)",
        out.display(),
        trainer.epoch,
        trainer.optimizer.step
    );
    Ok(())
}

fn print_thresholds(t: &ThresholdSet) {
    for (i, label) in Label::ID.iter().enumerate() {
        println!(
            "{label} tau={:.6e} n={} coverage={:.4}",
            t.tau[i], t.counts[i], t.coverage[i]
        );
    }
}

fn load_ckpt(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .code(DATA)
}

fn cmd_calibrate(ckpt_path: &Path, data_path: &Path) -> CliResult<()> {
    let mut ckpt = load_ckpt(ckpt_path)?;
    let model = ckpt.model().code(DATA)?;
    let data = load_data(data_path)?;
    check_shape(&data, &ckpt.config, data_path)?;
    let thresholds = pipeline::calibrate(&ckpt.config, &model, &data).map_err(|e| Failure {
        code: if e.is_numeric() { NUMERIC } else { DATA },
        error: anyhow::Error::new(e),
    })?;
    ckpt.thresholds = Some(thresholds);
    ckpt.save(ckpt_path).code(OTHER)?;
    print_thresholds(&thresholds);
    Ok(())
}

fn cmd_eval(
    ckpt_path: &Path,
    id_path: &Path,
    ood_path: &Path,
    report_path: &Path,
    id_pool: Option<PoolArg>,
    variant: VariantArg,
) -> CliResult<()> {
    let ckpt = load_ckpt(ckpt_path)?;
    let thresholds = ckpt.thresholds.ok_or_else(|| {
        data_err(format!(
            "{} is not calibrated; run `food calibrate` first",
            ckpt_path.display()
        ))
    })?;
    let model = ckpt.model().code(DATA)?;
    let id = load_data(id_path)?;
    let ood = load_data(ood_path)?;
    check_shape(&id, &ckpt.config, id_path)?;
    check_shape(&ood, &ckpt.config, ood_path)?;
    let ood_frames: Vec<_> = ood.frames.iter().filter(|f| !f.label.is_id()).collect();
    if ood_frames.is_empty() {
        return Err(data_err(format!(
            "{} contains no OOD frames",
            ood_path.display()
        )));
    }
    let id_classes = classes(&id);
    let options = EvalOptions {
        id_pool: match id_pool {
            Some(PoolArg::ClassOnly) => IdPool::ClassOnly,
            Some(PoolArg::AllId) => IdPool::AllId,
            None => ckpt.config.eval.id_pool,
        },
        variant: match variant {
            VariantArg::Full => ScoreVariant::Full,
            VariantArg::NoPrivateLeaves => ScoreVariant::NoPrivateLeaves,
        },
        batch_size: ckpt.config.eval.score_batch,
    };
    let report = evaluate(
        &model,
        &thresholds,
        as_slices(&id_classes),
        &ood_frames,
        options,
    )
    .map_err(|e| Failure {
        code: if e.is_numeric() { NUMERIC } else { DATA },
        error: anyhow::Error::new(e),
    })?;
    if let Some(dir) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).code(OTHER)?;
    }
    fs::write(report_path, report.to_json()).code(OTHER)?;
    let mut table_path = report_path.as_os_str().to_owned();
    table_path.push(".txt");
    let table = report.to_table();
    fs::write(&table_path, &table).code(OTHER)?;
    print!("{table}");
    Ok(())
}

fn cmd_inspect(path: &Path) -> CliResult<()> {
    let ckpt = load_ckpt(path)?;
    println!("epochs {}", ckpt.epoch);
    println!("parameters {}", ckpt.params.numel());
    match &ckpt.optimizer {
        Some(o) => println!("optimizer steps {}", o.step),
        None => println!("optimizer state absent"),
    }
    match &ckpt.thresholds {
        Some(t) => print_thresholds(t),
        None => println!("not calibrated"),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .code(OTHER)?;
    }
    if cli.dump_config {
        print!("{}", RunConfig::default().dump());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(usage("no command given; see `food --help`"));
    };
    match command {
        Command::Synth {
            out,
            frames_per_class,
            ood_frames,
            seed,
            profile,
            config,
        } => cmd_synth(
            &out,
            frames_per_class,
            ood_frames,
            seed,
            profile.as_deref(),
            config.as_deref(),
        ),
        Command::Train {
            data,
            config,
            out,
            resume,
            epochs,
            seed,
        } => cmd_train(
            &data,
            config.as_deref(),
            &out,
            resume.as_deref(),
            epochs,
            seed,
        ),
        Command::Calibrate { ckpt, data } => cmd_calibrate(&ckpt, &data),
        Command::Eval {
            ckpt,
            id,
            ood,
            report,
            id_pool,
            variant,
        } => cmd_eval(&ckpt, &id, &ood, &report, id_pool, variant),
        Command::Inspect { ckpt } => cmd_inspect(&ckpt),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
