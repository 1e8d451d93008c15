mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::ExperimentConfig;
use serde::Serialize;
use spnorm::data::{self, DepthSample};
use spnorm::experiments::{self, BenchRow, LambdaRow};
use spnorm::norm::{Mode, NormKind};
use spnorm::spnet::{ModelConfig, SpNetModel};
use spnorm::train::{self, RunStatus, TrainConfig, CONVERGENCE_RATIO};
use spnorm::{checkpoint, pfm, Error};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "spnorm", version, about = "Verification suites and toy experiments for SP-Norm and SPNet")]
struct Cli {
    /// Master seed; every command is a pure function of it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON experiment config. Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write predicted depth maps as PFM (train, eval).
    #[arg(long, global = true)]
    dump_depth: bool,
    /// Comma-separated input scales for sp-check.
    #[arg(long, global = true, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of every op, norm layer and the SPNet-Micro loss.
    Gradcheck {
        /// Hide a term from the tape in the named entry (negative control).
        #[arg(long)]
        fault: Option<String>,
        /// Skip the full-model check.
        #[arg(long)]
        skip_model: bool,
    },
    /// Closed-form moments against Monte Carlo.
    Moments {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Homogeneity ledger over every norm kind.
    SpCheck {
        /// Base model preset or config name.
        #[arg(long)]
        model: Option<String>,
    },
    /// Toy training on synthetic scenes.
    Train(TrainArgs),
    /// Rel/RMSE sparsity sweep of a checkpoint on held-out scenes.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Scenes to evaluate on (JSON array of entries); their sparsify fields are replaced by the sweep.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Held-out scenes drawn when no manifest is given.
        #[arg(long, default_value_t = 16)]
        scenes: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Comma-separated keep ratios.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Score the ground truth itself instead of a model.
        #[arg(long)]
        oracle: bool,
    },
    /// Train each SP-Norm variant and LN/Scaler under one seed and compare.
    BenchVariants(TrainArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Optimizer defaults (lr 2e-4).
    Default,
    /// The recorded convergence run (lr 1e-3).
    Oracle,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    norm: Option<NormKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Square scene size (multiple of 32).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
}

enum Failure {
    /// Exit 1: a check did not hold.
    Check(String),
    /// Exit 2: bad usage, input or I/O.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::EmptyReduction(_) => Failure::Check(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(format!("json: {e}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Ctx {
    seed: u64,
    out: PathBuf,
    dump_depth: bool,
    scales: Vec<f64>,
    config: ExperimentConfig,
}

impl Ctx {
    fn write_json(&self, name: &str, value: &impl Serialize) -> Outcome {
        let path = self.out.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_text(&self, name: &str, text: &str) -> Outcome {
        let path = self.out.join(name);
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let scales = cli.scales.clone().or_else(|| config.scales.clone()).unwrap_or_else(|| experiments::DEFAULT_SCALES.to_vec());
    let ctx = Ctx {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        dump_depth: cli.dump_depth,
        scales,
        config,
    };
    std::fs::create_dir_all(&ctx.out)?;
    match cli.command {
        Command::Gradcheck { fault, skip_model } => cmd_gradcheck(&ctx, fault.as_deref(), !skip_model),
        Command::Moments { trials } => cmd_moments(&ctx, trials.or(ctx.config.trials).unwrap_or(100_000)),
        Command::SpCheck { model } => cmd_sp_check(&ctx, model.as_deref()),
        Command::Train(args) => cmd_train(&ctx, &args),
        Command::Eval { checkpoint, manifest, scenes, size, levels, oracle } => {
            let manifest = manifest.or_else(|| ctx.config.manifest.clone());
            let levels = levels.unwrap_or_else(|| experiments::SPARSITY_LEVELS.to_vec());
            cmd_eval(&ctx, checkpoint.as_deref(), manifest.as_deref(), scenes, size, &levels, oracle)
        }
        Command::BenchVariants(args) => cmd_bench_variants(&ctx, &args),
    }
}

fn cmd_gradcheck(ctx: &Ctx, fault: Option<&str>, include_model: bool) -> Outcome {
    let r = experiments::gradcheck_suite(ctx.seed, include_model, fault)?;
    for e in &r.entries {
        println!("{:<28} {:>10.3e} {:>4} {}", e.name, e.max_rel_error, e.checked, if e.pass { "ok" } else { "FAIL" });
    }
    ctx.write_json("gradcheck.json", &r)?;
    if r.pass {
        Ok(())
    } else {
        let worst = r.entries.iter().find(|e| e.name == r.worst).map_or(f64::NAN, |e| e.max_rel_error);
        Err(Failure::Check(format!("gradient check failed; worst offender {} (relative error {worst:.3e} > {:e})", r.worst, r.tolerance)))
    }
}

fn cmd_moments(ctx: &Ctx, trials: usize) -> Outcome {
    if trials < spnorm::moments::MIN_POWERED_TRIALS {
        eprintln!("warning: underpowered: {trials} trials < {} per setting", spnorm::moments::MIN_POWERED_TRIALS);
    }
    let r = experiments::moments_suite(trials, ctx.seed)?;
    let failed: Vec<_> = r.checks.iter().filter(|c| c.mode == "idealized" && !c.pass).collect();
    println!("{} checks, worst idealized |z| = {:.2}, {} over {}", r.checks.len(), r.worst_z, failed.len(), r.z_max);
    ctx.write_json("moments.json", &r)?;
    match failed.first() {
        None => Ok(()),
        Some(c) => Err(Failure::Check(format!("{} {} z = {:.2} for {:?}", c.equation, c.statistic, c.z_score, c.setting))),
    }
}

fn cmd_sp_check(ctx: &Ctx, model: Option<&str>) -> Outcome {
    let base = match model {
        Some(name) => ModelConfig::by_name(name)?,
        None => ctx.config.model()?.unwrap_or_else(ModelConfig::micro),
    };
    let ledger = experiments::sp_check(&base, &ctx.scales, ctx.seed)?;
    for r in &ledger.rows {
        println!(
            "{:<16} expected {:<12} measured {:<12} prop {:>9.2e} inv {:>9.2e} {}",
            r.variant,
            format!("{:?}", r.expected),
            format!("{:?}", r.measured),
            r.max_proportional,
            r.max_invariance,
            if r.pass { "ok" } else { "MISMATCH" }
        );
    }
    ctx.write_json("sp_check.json", &ledger)?;
    match ledger.rows.iter().find(|r| !r.pass) {
        None => Ok(()),
        Some(r) => Err(Failure::Check(format!("ledger mismatch for {}: expected {:?}", r.variant, r.expected))),
    }
}

fn train_config(ctx: &Ctx, args: &TrainArgs, preset: Preset) -> Result<TrainConfig, Failure> {
    let base = match args.preset.unwrap_or(preset) {
        Preset::Default => TrainConfig::default(),
        Preset::Oracle => TrainConfig::oracle(),
    };
    let mut cfg = ctx.config.apply(base)?;
    cfg.seed = ctx.seed;
    if let Some(m) = &args.model {
        cfg.model = ModelConfig::by_name(m)?.with_norm(cfg.model.norm_kind);
    }
    if let Some(k) = args.norm {
        cfg.model = cfg.model.with_norm(k);
    }
    macro_rules! flag {
        ($($f:ident),*) => {$(if let Some(v) = args.$f { cfg.$f = v; })*};
    }
    flag!(steps, batch_size, pool_size);
    if let Some(lr) = args.lr {
        cfg.optimizer.lr = lr;
    }
    if let Some(s) = args.size {
        cfg.height = s;
        cfg.width = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Stamp {
    version: &'static str,
    seed: u64,
}

#[derive(Serialize)]
struct TrainRunReport {
    stamp: Stamp,
    config: TrainConfig,
    status: RunStatus,
    steps_run: usize,
    initial_smoothed: f64,
    final_smoothed: f64,
    ratio: f64,
    halved: bool,
    /// Max relative deviation from f(s·x) = s·f(x) after training, SP-Norm models only.
    homogeneity_after_training: Option<f64>,
    lambdas: Vec<LambdaRow>,
    loss_csv: String,
    checkpoint: Option<String>,
}

fn dump_prediction(ctx: &Ctx, model: &SpNetModel, sample: &DepthSample, name: &str) -> Outcome {
    let b = data::collate(std::slice::from_ref(sample))?;
    let z = model.predict(&b.image, &b.sparse, Mode::Eval)?;
    let z = z.reshape(sample.gt.shape())?;
    let path = ctx.out.join(name);
    pfm::write(&path, &z)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Outcome {
    let cfg = train_config(ctx, args, Preset::Default)?;
    let mut csv = String::from("step,lr,total,l_sa,l_sg,smoothed\n");
    let (model, report) = train::train(&cfg, |r| {
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.step, r.lr, r.loss.total, r.loss.l_sa, r.loss.l_sg, r.smoothed));
    })?;
    ctx.write_text("loss.csv", &csv)?;
    let completed = report.status == RunStatus::Completed;
    let checkpoint = if completed {
        checkpoint::save(&model, ctx.out.join("checkpoint.json"))?;
        println!("wrote {}", ctx.out.join("checkpoint.json").display());
        Some("checkpoint.json".to_string())
    } else {
        None
    };
    let homogeneity = if completed && model.config.norm_kind == NormKind::SpNorm && !model.config.use_grn {
        let (img, sp) = experiments::sp_input(data::derive_seed(ctx.seed, 1, 0), 2, 32);
        Some(experiments::model_sp_report(&model, &img, &sp, &ctx.scales)?.max_proportional())
    } else {
        None
    };
    let ratio = report.ratio();
    let run = TrainRunReport {
        stamp: Stamp { version: env!("CARGO_PKG_VERSION"), seed: ctx.seed },
        config: cfg.clone(),
        status: report.status.clone(),
        steps_run: report.records.len(),
        initial_smoothed: report.initial_smoothed,
        final_smoothed: report.final_smoothed,
        ratio,
        halved: ratio <= CONVERGENCE_RATIO,
        homogeneity_after_training: homogeneity,
        lambdas: experiments::lambda_report(&model),
        loss_csv: "loss.csv".into(),
        checkpoint,
    };
    ctx.write_json("report.json", &run)?;
    println!(
        "smoothed loss {:.4} -> {:.4} (ratio {:.3}) over {} steps",
        report.initial_smoothed,
        report.final_smoothed,
        ratio,
        report.records.len()
    );
    if ctx.dump_depth && completed {
        let scene = experiments::heldout_scenes(ctx.seed, 1, cfg.height, cfg.width)?.remove(0);
        let sample = experiments::sparsify_retry(&scene, cfg.sparsify, ctx.seed)?;
        dump_prediction(ctx, &model, &sample, "depth.pfm")?;
    }
    match report.status {
        RunStatus::Completed => Ok(()),
        RunStatus::NonFinite { step } => Err(Failure::Check(format!("non-finite loss at step {step}; training aborted"))),
    }
}

fn cmd_eval(
    ctx: &Ctx,
    ckpt: Option<&Path>,
    manifest: Option<&Path>,
    scenes: usize,
    size: usize,
    levels: &[f64],
    oracle: bool,
) -> Outcome {
    let model = match (ckpt, oracle) {
        (_, true) => None,
        (Some(p), false) => Some(checkpoint::load(p)?),
        (None, false) => return Err(Failure::Usage("eval needs --checkpoint (or --oracle)".into())),
    };
    let scene_set = match manifest {
        Some(m) => data::load_manifest(m)?
            .iter()
            .map(|e| data::gen_scene(e.seed, e.height, e.width, data::Z_MIN, data::Z_MAX))
            .collect::<spnorm::Result<Vec<_>>>()?,
        None => experiments::heldout_scenes(ctx.seed, scenes, size, size)?,
    };
    let report = match &model {
        Some(m) => experiments::eval_sweep(experiments::model_predictor(m), &scene_set, levels, ctx.seed)?,
        None => experiments::eval_sweep(experiments::oracle_predictor, &scene_set, levels, ctx.seed)?,
    };
    for r in &report.rows {
        println!("level {:<8} rel {:.5} rmse {:.5} n {}", r.level, r.rel, r.rmse, r.n_samples);
    }
    println!("monotone degradation with sparsity: {} (reported, not asserted)", report.monotone);
    ctx.write_text("eval.csv", &report.to_csv())?;
    ctx.write_json("eval.json", &report)?;
    if let (true, Some(m)) = (ctx.dump_depth, &model) {
        for (i, &level) in levels.iter().enumerate() {
            let spec = data::SparsifySpec::RandomRatio { ratio: level };
            let sample = experiments::sparsify_retry(&scene_set[0], spec, data::derive_seed(ctx.seed, 7, i as u64))?;
            dump_prediction(ctx, m, &sample, &format!("depth_level{i}.pfm"))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    stamp: Stamp,
    config: TrainConfig,
    rows: Vec<BenchRow>,
}

fn cmd_bench_variants(ctx: &Ctx, args: &TrainArgs) -> Outcome {
    let cfg = train_config(ctx, args, Preset::Oracle)?;
    let rows = experiments::bench_variants(&cfg)?;
    let mut csv = String::from("variant,converged,status,steps_run,initial_smoothed,final_smoothed,ratio\n");
    for r in &rows {
        let status = match r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::NonFinite { step } => format!("non-finite@{step}"),
        };
        println!("{:<16} converged {:<5} {:<16} ratio {:.3}", r.variant.to_string(), r.converged, status, r.ratio);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.variant, r.converged, status, r.steps_run, r.initial_smoothed, r.final_smoothed, r.ratio
        ));
    }
    ctx.write_text("bench_variants.csv", &csv)?;
    ctx.write_json("bench_variants.json", &BenchReport { stamp: Stamp { version: env!("CARGO_PKG_VERSION"), seed: ctx.seed }, config: cfg, rows })
}
