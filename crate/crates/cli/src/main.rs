use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use graphat::adversarial::SamplingStrategy;
use graphat::eval::{attack_eval, evaluate_model, AttackSettings, EvalReport};
use graphat::gcn::Checkpoint;
use graphat::graph::{gdf, generate_sbm, normalize_adjacency, Dataset, SbmConfig};
use graphat::rng::{stream, Stream};
use graphat::trainer::{sweep, train, write_sweep_csv, GridSpec, Mode, TrainConfig, TrainHistory};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "graphat", version, about = "Graph adversarial training for GCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model dataset.
    GenSynth(GenSynthArgs),
    /// Train a model and write checkpoint, history and evaluation report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Measure accuracy under graph-adversarial feature perturbations.
    Attack(AttackArgs),
    /// Train every point of a hyperparameter grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    nodes_per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 2.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 20)]
    train_per_class: usize,
    #[arg(long, default_value_t = 500)]
    num_val: usize,
    #[arg(long, default_value_t = 1000)]
    num_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Training hyperparameters. Flags override the config file, which
/// overrides the defaults.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with `TrainConfig` fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gcn, vat, graphat or graphvat.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// uniform, degree, degree-reverse or pagerank.
    #[arg(long)]
    strategy: Option<SamplingStrategy>,
    #[arg(long)]
    vepsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        apply!(
            mode => mode, hidden => hidden, weight_decay => weight_decay, lr => lr,
            max_epochs => max_epochs, patience => patience, epsilon => epsilon, beta => beta,
            k => k, strategy => strategy, vepsilon => virtual_epsilon, alpha => alpha, xi => xi,
            seed => seed,
        );
        if let Some(d) = self.dropout {
            c.dropout = Some(d);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct AttackFlags {
    /// Row norm of the attack perturbation.
    #[arg(long, default_value_t = 0.01)]
    attack_epsilon: f64,
    #[arg(long = "attack-k", default_value_t = 1)]
    attack_k: usize,
    #[arg(long = "attack-strategy", default_value_t = SamplingStrategy::Uniform)]
    attack_strategy: SamplingStrategy,
}

impl AttackFlags {
    fn settings(&self) -> AttackSettings {
        AttackSettings {
            epsilon: self.attack_epsilon,
            k: self.attack_k,
            strategy: self.attack_strategy,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    attack: AttackFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write the report as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a one-row CSV summary.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Seed for attack neighbor sampling; defaults to the checkpoint's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    attack: AttackFlags,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    attack: AttackFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON object mapping config fields to lists of values.
    #[arg(long)]
    grid: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent runs (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Serialize)]
struct Artifacts {
    checkpoint: PathBuf,
    history: PathBuf,
    eval: PathBuf,
}

#[derive(Serialize)]
struct RunManifest {
    config: TrainConfig,
    dataset: PathBuf,
    dataset_name: String,
    output_dir: PathBuf,
    artifacts: Artifacts,
    best_epoch: usize,
    val_accuracy: f64,
    test_accuracy: f64,
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(gdf::load_dataset(path)?)
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let config = SbmConfig {
        num_classes: args.classes,
        nodes_per_class: args.nodes_per_class,
        p_in: args.p_in,
        p_out: args.p_out,
        feature_dim: args.feature_dim,
        noise_scale: args.noise_scale,
        seed: args.seed,
        train_per_class: args.train_per_class,
        num_val: args.num_val,
        num_test: args.num_test,
    };
    let data = generate_sbm(&config)?;
    gdf::save_dataset(&data, &args.out)?;
    gdf::load_dataset(&args.out).context("re-reading generated dataset")?;
    eprintln!(
        "wrote {} ({} nodes, {} edges, {}/{}/{} split)",
        args.out.display(),
        data.num_nodes(),
        data.num_edges(),
        data.train_nodes().len(),
        data.val_nodes().len(),
        data.test_nodes().len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let data = load(&args.dataset)?;
    let outcome = train(&data, &config)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let artifacts = Artifacts {
        checkpoint: args.out.join("checkpoint.json"),
        history: args.out.join("history.csv"),
        eval: args.out.join("eval.json"),
    };
    let checkpoint = Checkpoint {
        config: config.clone(),
        params: outcome.params.clone(),
    };
    checkpoint.save(&artifacts.checkpoint)?;
    outcome.history.save_csv(&artifacts.history)?;
    let report = evaluate_model(
        &data,
        &outcome.params,
        args.attack.settings(),
        &mut stream(config.seed, Stream::Attack),
    )?;
    report.save_json(&artifacts.eval)?;

    if Checkpoint::load(&artifacts.checkpoint)? != checkpoint {
        bail!("checkpoint did not round-trip");
    }
    let file = File::open(&artifacts.history)?;
    if TrainHistory::read_csv(file)? != outcome.history {
        bail!("history did not round-trip");
    }
    if EvalReport::load_json(&artifacts.eval)? != report {
        bail!("evaluation report did not round-trip");
    }

    let best = outcome.best_record();
    emit_json(
        &RunManifest {
            config,
            dataset: args.dataset,
            dataset_name: data.name().to_owned(),
            output_dir: args.out,
            artifacts,
            best_epoch: outcome.best_epoch,
            val_accuracy: best.val_accuracy,
            test_accuracy: best.test_accuracy,
        },
        None,
    )
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let data = load(&args.dataset)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let seed = args.seed.unwrap_or(checkpoint.config.seed);
    let report = evaluate_model(
        &data,
        &checkpoint.params,
        args.attack.settings(),
        &mut stream(seed, Stream::Attack),
    )?;
    if let Some(path) = &args.csv {
        let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        report.write_csv_row(BufWriter::new(file), true)?;
    }
    emit_json(&report, args.out.as_deref())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let data = load(&args.dataset)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let adj = normalize_adjacency(data.adjacency())?;
    let seed = args.seed.unwrap_or(checkpoint.config.seed);
    let result = attack_eval(
        &data,
        &adj,
        &checkpoint.params,
        args.attack.attack_epsilon,
        args.attack.attack_k,
        args.attack.attack_strategy,
        &mut stream(seed, Stream::Attack),
    )?;
    emit_json(&result, args.out.as_deref())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let data = load(&args.dataset)?;
    let base = args.config.resolve()?;
    let text = fs::read_to_string(&args.grid).with_context(|| format!("reading {}", args.grid.display()))?;
    let grid: GridSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.grid.display()))?;
    let rows = sweep(&data, &base, &grid, args.jobs)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_sweep_csv(&rows, BufWriter::new(file))?;
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
