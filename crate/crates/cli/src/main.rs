use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use robustdec::attacks::AttackKind;
use robustdec::code::resolve_code;
use robustdec::harness::{
    ablation_alpha_sweep, attack_label, instantiate_decoder, parse_attack, run_experiment, transferability_matrix,
    validate_concentration, write_rows, ConcentrationReport, ExperimentConfig, ResultRow, SyntheticSpec,
};
use robustdec::neural::{train, write_checkpoint, Activation, MlpDecoder};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "robustdec",
    version,
    about = "Adversarial robustness evaluation for channel decoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean FER over an SNR grid.
    Simulate(GridArgs),
    /// FER under attacks crafted on each decoder (or on `--source`).
    Attack(GridArgs),
    /// Attacks crafted on each source, evaluated on every decoder.
    Transfer(TransferArgs),
    /// FER of one decoder over an alpha grid, per attack.
    Ablate(GridArgs),
    /// Concentration bounds for the universal objective and UAP-PCA.
    Bounds(BoundsArgs),
    /// Train the neural decoder and write a checkpoint.
    Train(TrainArgs),
}

/// Experiment settings: a TOML config file, overridden by any flag given.
#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    code: Option<String>,
    #[arg(long, value_delimiter = ',')]
    decoders: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    attacks: Option<Vec<String>>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    /// 0 runs the full frame budget.
    #[arg(long)]
    target_errors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    pgd_steps: Option<usize>,
    #[arg(long)]
    craft_frames: Option<usize>,
    #[arg(long)]
    bp_iterations: Option<usize>,
    #[arg(long)]
    mlp_checkpoint: Option<PathBuf>,
}

impl GridArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::read(path).with_context(|| format!("reading {}", path.display()))?,
            None => {
                let code = self.code.as_deref().context("--code is required without --config")?;
                let decoders = self
                    .decoders
                    .as_ref()
                    .context("--decoders is required without --config")?;
                let text = format!("code = {code:?}\ndecoders = {decoders:?}\n");
                ExperimentConfig::from_toml(&text)?
            }
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = &$flag {
                    cfg.$($field)+ = v.clone();
                }
            };
        }
        set!(self.code => code);
        set!(self.decoders => decoders);
        set!(self.snr => snr_db);
        set!(self.alpha => alpha);
        set!(self.attacks => attacks);
        set!(self.frames => frames);
        set!(self.target_errors => target_errors);
        set!(self.seed => seed);
        set!(self.output => output_dir);
        set!(self.nu => smoothing.nu);
        set!(self.samples => smoothing.samples);
        set!(self.estimator => smoothing.estimator);
        set!(self.pgd_steps => attack.pgd_steps);
        set!(self.craft_frames => attack.craft_frames);
        set!(self.bp_iterations => decoder.bp_iterations);
        if self.source.is_some() {
            cfg.source_decoder = self.source.clone();
        }
        if self.mlp_checkpoint.is_some() {
            cfg.mlp.checkpoint = self.mlp_checkpoint.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Decoders the attacks are crafted on; `--decoders` are the targets.
    #[arg(long, value_delimiter = ',', required = true)]
    sources: Vec<String>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Loss bound C.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Gradient norm bound L.
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Eigengap of the gradient second moment.
    #[arg(long, default_value_t = 1.0)]
    gap: f64,
    /// Sample count N.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Dimension n.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    /// Also check coverage on a synthetic population with these axis probabilities.
    #[arg(long, value_delimiter = ',')]
    validate: Option<Vec<f64>>,
    #[arg(long, default_value_t = 500)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    code: String,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    hidden: Vec<usize>,
    #[arg(long, default_value = "softplus")]
    activation: String,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value = "sgd")]
    optimizer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn print_rows(rows: &[ResultRow]) {
    println!(
        "{:<10} {:<12} {:<9} {:<12} {:>6} {:>8} {:>9} {:>7} {:>13}",
        "code", "decoder", "attack", "source", "snr", "alpha", "frames", "errors", "1/FER"
    );
    for r in rows {
        println!(
            "{:<10} {:<12} {:<9} {:<12} {:>6} {:>8} {:>9} {:>7} {:>13}",
            r.code, r.decoder, r.attack, r.source_decoder, r.snr_db, r.alpha, r.frames, r.frame_errors, r.fer_inverse
        );
    }
}

fn grid(args: &GridArgs, default_attacks: &[&str], force_clean: bool) -> Result<()> {
    let mut cfg = args.resolve()?;
    if force_clean {
        cfg.attacks = vec!["none".into()];
    } else if args.attacks.is_none() && args.config.is_none() {
        cfg.attacks = default_attacks.iter().map(|s| s.to_string()).collect();
    }
    let outcome = run_experiment(&cfg)?;
    print_rows(&outcome.rows);
    println!("results: {}", outcome.results_path.display());
    println!("manifest: {}", outcome.manifest_path.display());
    Ok(())
}

fn transfer(args: &TransferArgs) -> Result<()> {
    let cfg = args.grid.resolve()?;
    let code = Arc::new(resolve_code(&cfg.code)?);
    let mut boxed = Vec::new();
    for name in args.sources.iter().chain(&cfg.decoders) {
        boxed.push((name.clone(), instantiate_decoder(&cfg, code.clone(), name)?.0));
    }
    let find = |n: &str| {
        boxed
            .iter()
            .find(|(b, _)| b == n)
            .map(|(_, d)| d.as_ref())
            .expect("built")
    };
    let sources: Vec<_> = args.sources.iter().map(|s| find(s)).collect();
    let targets: Vec<_> = cfg.decoders.iter().map(|s| find(s)).collect();
    let attacks: Vec<Option<AttackKind>> = cfg.attacks.iter().map(|a| parse_attack(a)).collect::<Result<_, _>>()?;
    let settings = cfg.attack_settings()?;
    let alpha = *cfg.alpha.first().context("empty alpha grid")?;
    let fer = cfg.fer_config(0.0);
    let cells = transferability_matrix(&sources, &targets, &attacks, &cfg.snr_db, alpha, &settings, &fer)?;
    let rows: Vec<ResultRow> = cells
        .iter()
        .map(|c| {
            ResultRow::new(
                &cfg.code, &c.target, c.attack, &c.source, c.snr_db, alpha, &c.stats, fer.seed,
            )
        })
        .collect();
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("transfer.csv");
    write_rows(&path, &rows)?;
    print_rows(&rows);
    println!("results: {}", path.display());
    Ok(())
}

fn ablate(args: &GridArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let [decoder_name] = cfg.decoders.as_slice() else {
        bail!("ablate takes exactly one decoder");
    };
    let code = Arc::new(resolve_code(&cfg.code)?);
    let (decoder, _) = instantiate_decoder(&cfg, code, decoder_name)?;
    let attacks: Vec<AttackKind> = if args.attacks.is_some() || args.config.is_some() {
        cfg.attacks
            .iter()
            .filter_map(|a| parse_attack(a).transpose())
            .collect::<Result<_, _>>()?
    } else {
        AttackKind::ALL.to_vec()
    };
    let settings = cfg.attack_settings()?;
    let fer = cfg.fer_config(0.0);
    let table = ablation_alpha_sweep(decoder.as_ref(), &attacks, &cfg.snr_db, &cfg.alpha, &settings, &fer)?;
    let rows: Vec<ResultRow> = table
        .rows
        .iter()
        .map(|r| {
            ResultRow::new(
                &cfg.code,
                decoder_name,
                r.attack,
                decoder_name,
                r.snr_db,
                r.alpha,
                &r.stats,
                fer.seed,
            )
        })
        .collect();
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("ablation.csv");
    write_rows(&path, &rows)?;
    print_rows(&rows);
    for d in &table.diagnostics {
        println!(
            "{} @ {} dB: non-decreasing in alpha = {}, significant drops = {:?}, gap over random = {:?}",
            attack_label(d.attack),
            d.snr_db,
            d.non_decreasing,
            d.significant_drops,
            d.gap_over_random
        );
    }
    println!("results: {}", path.display());
    Ok(())
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let r = ConcentrationReport::new(args.c, args.l, args.gap, args.samples, args.n, args.eta)?;
    println!(
        "C = {}, L = {}, gap = {}, N = {}, n = {}, eta = {}",
        r.c, r.l, r.gap, r.samples, r.n, r.eta
    );
    println!("objective deviation bound : {:.6}", r.bound_objective);
    println!("second-moment op bound    : {:.6}", r.bound_sigma_op);
    println!("principal angle sin bound : {:.6}", r.bound_sin_angle);
    if let Some(probs) = &args.validate {
        let spec = SyntheticSpec {
            axis_probs: probs.clone(),
            grad_cap: args.l,
            loss_bound: args.c,
            loss_prob: 0.5,
        };
        let cov = validate_concentration(&spec, args.samples, args.eta, args.repetitions, args.seed)?;
        let rates = cov.rates();
        println!(
            "synthetic coverage over {} repetitions (gap {}): violation rates {:.4} / {:.4} / {:.4}, worst deviations {:.4} / {:.4} / {:.4}",
            cov.repetitions,
            spec.gap(),
            rates[0],
            rates[1],
            rates[2],
            cov.worst[0],
            cov.worst[1],
            cov.worst[2]
        );
        println!("all rates <= eta: {}", cov.covered());
    }
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let code = Arc::new(resolve_code(&args.code)?);
    let activation = Activation::parse(&args.activation).context("unknown activation")?;
    let section = robustdec::harness::MlpSection {
        hidden: args.hidden.clone(),
        activation: args.activation.clone(),
        steps: args.steps,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        optimizer: args.optimizer.clone(),
        ..Default::default()
    };
    let mut model = MlpDecoder::new(code, &args.hidden, activation, args.seed)?;
    let report = train(&mut model, &section.train_config(args.seed)?)?;
    let (first, last) = report.window_means(0.1);
    println!(
        "trained {} parameters; mean loss first 10% {first:.5}, last 10% {last:.5}",
        model.parameter_count()
    );
    write_checkpoint(&model, &args.output)?;
    println!("checkpoint: {}", args.output.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(a) => grid(a, &["none"], true),
        Command::Attack(a) => grid(a, &["none", "random", "fgm", "pgd", "uap_grad", "uap_pca"], false),
        Command::Transfer(a) => transfer(a),
        Command::Ablate(a) => ablate(a),
        Command::Bounds(a) => bounds(a),
        Command::Train(a) => train_cmd(a),
    }
}
