// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use otfs_ce::channel::substream;
use otfs_ce::neural::{
    generate_dataset, load_model_for, predict_cddpm_column, save_model, train_predictor_on,
    validate_latency_sizing, NormalizationSpec, PredictorPair,
};
use otfs_ce::kernel::{cddpm_column_exact, ColumnStrategy};
use otfs_ce_harness::datafile::{load_dataset, save_dataset};
use otfs_ce_harness::latency::{latency_bench, random_pairs, speedup, write_latency_csv};
use otfs_ce_harness::sweep::{run_sweep, with_workers, write_sweep_outputs};
use otfs_ce_harness::{ExperimentConfig, Method};

#[derive(Parser)]
#[command(name = "otfs-ce", version, about = "Fractional delay-Doppler channel estimation experiments")]
struct Cli {
    /// TOML experiment configuration. Flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration used when no `--config` is given.
    #[arg(long, global = true, default_value = "full")]
    preset: Preset,

    /// Exit nonzero when the command's acceptance checks fail.
    #[arg(long, global = true)]
    gate: bool,

    /// Directory for CSV, SVG and the resolved config.toml.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Overrides the experiment, scenario and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Preset {
    Full,
    Desk,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a surrogate training set.
    GenData(GenData),
    /// Train a predictor pair.
    Train(Train),
    /// NMSE and path-count sweep over pilot SNR.
    EvalSweep(EvalSweep),
    /// Per-call latency of exact and surrogate columns.
    LatencyBench(LatencyBench),
    /// Check a model file against the configuration and the exact kernel.
    ValidateModel(ValidateModel),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    /// Dataset from `gen-data`; generated on the fly when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    l1: usize,
    #[arg(long)]
    l2: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalSweep {
    /// Comma-separated PSNR points in dB.
    #[arg(long, value_delimiter = ',')]
    psnr_grid: Option<Vec<f64>>,
    /// Channel realizations per PSNR point.
    #[arg(long)]
    realizations: Option<usize>,
    /// Comma-separated subset of `pipic,dl-pipic`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Model file for `dl-pipic`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Largest NMSE gap in dB allowed between the surrogate and exact estimators under `--gate`.
    #[arg(long, default_value_t = 6.0)]
    max_gap_db: f64,
}

#[derive(Args)]
struct LatencyBench {
    /// Trained model files to time.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Untrained `L1xL2` networks to time, e.g. `2048x2048`.
    #[arg(long)]
    untrained: Vec<String>,
    #[arg(long)]
    pairs: Option<usize>,
    /// Time the brute-force strategy on this many of the pairs only.
    #[arg(long)]
    full_pairs: Option<usize>,
}

#[derive(Args)]
struct ValidateModel {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 500)]
    pairs: usize,
    /// Gate on the median relative L2 error of predicted columns.
    #[arg(long, default_value_t = 0.15)]
    max_median_error: f64,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut exp = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => match cli.preset {
            Preset::Full => ExperimentConfig::default(),
            Preset::Desk => ExperimentConfig::desk(),
        },
    };
    if let Some(dir) = &cli.output_dir {
        exp.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        exp.seed = seed;
        exp.scenario.seed = seed;
        exp.train.seed = seed;
    }
    Ok(exp)
}

fn echo_config(exp: &ExperimentConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&exp.output_dir)?;
    std::fs::write(exp.output_dir.join("config.toml"), exp.to_toml()?)?;
    Ok(())
}

fn parse_dims(text: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = text.split_once('x').context("expected L1xL2")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn gen_data(exp: &ExperimentConfig, args: &GenData) -> anyhow::Result<bool> {
    let n = args.samples.unwrap_or(exp.train.num_samples);
    let cfg = &exp.otfs;
    let data = generate_dataset(cfg, &NormalizationSpec::for_config(cfg), n, &mut substream(exp.train.seed, 0))?;
    save_dataset(&args.out, cfg.m, cfg.n, &data)?;
    println!("wrote {n} samples to {}", args.out.display());
    Ok(true)
}

fn train(mut exp: ExperimentConfig, args: &Train) -> anyhow::Result<bool> {
    if let Some(s) = args.samples {
        exp.train.num_samples = s;
    }
    if let Some(e) = args.epochs {
        exp.train.epochs = e;
    }
    echo_config(&exp)?;
    let cfg = &exp.otfs;
    let data = match &args.data {
        Some(path) => {
            let (m, n, data) = load_dataset(path)?;
            if (m, n) != (cfg.m, cfg.n) {
                bail!("dataset is {m}x{n}, configuration is {}x{}", cfg.m, cfg.n);
            }
            data
        }
        None => generate_dataset(cfg, &NormalizationSpec::for_config(cfg), exp.train.num_samples, &mut substream(exp.train.seed, 0))?,
    };
    let sizing = validate_latency_sizing(cfg, args.l1, args.l2);
    if !sizing.is_ok() {
        log::warn!("layer sizes violate the latency sizing rule: {sizing:?}");
    }
    let trained = with_workers(|| train_predictor_on(cfg, &data, args.l1, args.l2, &exp.train))?;
    save_model(&args.out, &trained.pair)?;

    let mut out = csv::Writer::from_path(exp.output_dir.join("train_loss.csv"))?;
    out.write_record(["epoch", "lr", "loss_real", "loss_imag", "holdout_real", "holdout_imag"])?;
    let (r, i) = (&trained.report_real, &trained.report_imag);
    for e in 0..r.epoch_loss.len() {
        let hold = |v: &Vec<f64>| v.get(e).map(|x| x.to_string()).unwrap_or_default();
        out.write_record([
            e.to_string(),
            r.learning_rate[e].to_string(),
            r.epoch_loss[e].to_string(),
            i.epoch_loss[e].to_string(),
            hold(&r.holdout_loss),
            hold(&i.holdout_loss),
        ])?;
    }
    out.flush()?;

    let learned = |l: &[f64]| l.len() >= 2 && l[l.len() - 1] < 0.5 * l[0];
    let ok = learned(&r.epoch_loss) && learned(&i.epoch_loss);
    println!(
        "saved {}; final L1 loss real {:.5} (epoch 1: {:.5}), imag {:.5} (epoch 1: {:.5})",
        args.out.display(),
        r.epoch_loss.last().unwrap_or(&f64::NAN),
        r.epoch_loss.first().unwrap_or(&f64::NAN),
        i.epoch_loss.last().unwrap_or(&f64::NAN),
        i.epoch_loss.first().unwrap_or(&f64::NAN),
    );
    println!("{} training loss halved", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn eval_sweep(mut exp: ExperimentConfig, args: &EvalSweep) -> anyhow::Result<bool> {
    if let Some(grid) = &args.psnr_grid {
        exp.psnr_grid_db = grid.clone();
    }
    if let Some(r) = args.realizations {
        exp.scenario.num_realizations = r;
    }
    if let Some(methods) = &args.methods {
        exp.methods = methods.clone();
    }
    if let Some(model) = &args.model {
        exp.model_path = Some(model.clone());
    }
    exp.validate()?;
    echo_config(&exp)?;
    let result = run_sweep(&exp, None)?;
    write_sweep_outputs(&exp.output_dir, &result)?;
    for p in &result.points {
        println!(
            "{:>9} {:5.1} dB: NMSE {:7.2} dB, {:.2} paths ({} ok, {} failed)",
            p.method, p.psnr_db, p.nmse_db, p.avg_paths, p.n_realizations, p.n_failures
        );
    }

    let mut ok = result.points.iter().all(|p| p.n_failures == 0);
    let exact = result.series(Method::Pipic);
    if exact.windows(2).any(|w| !(w[1].nmse_db < w[0].nmse_db)) {
        println!("FAIL pipic NMSE not strictly decreasing in PSNR");
        ok = false;
    }
    let dl = result.series(Method::DlPipic);
    if !exact.is_empty() {
        for d in &dl {
            if let Some(e) = exact.iter().find(|e| e.psnr_db == d.psnr_db) {
                if !((d.nmse_db - e.nmse_db).abs() <= args.max_gap_db) {
                    println!("FAIL dl-pipic {:.2} dB from pipic at {} dB", d.nmse_db - e.nmse_db, d.psnr_db);
                    ok = false;
                }
            }
        }
    }
    if exp.uses(Method::DlPipic) && result.max_exact_evaluations > 2 * exp.estimator.p_max {
        println!("FAIL {} exact column evaluations in one estimate", result.max_exact_evaluations);
        ok = false;
    }
    println!("{} sweep checks; outputs in {}", if ok { "PASS" } else { "FAIL" }, exp.output_dir.display());
    Ok(ok)
}

fn latency(mut exp: ExperimentConfig, args: &LatencyBench) -> anyhow::Result<bool> {
    if let Some(p) = args.pairs {
        exp.latency.n_pairs = p;
    }
    if args.full_pairs.is_some() {
        exp.latency.full_pairs = args.full_pairs;
    }
    echo_config(&exp)?;
    let cfg = &exp.otfs;
    let mut models: Vec<PredictorPair> = Vec::new();
    for path in &args.model {
        models.push(load_model_for(path, cfg).with_context(|| format!("loading {}", path.display()))?);
    }
    for (k, dims) in args.untrained.iter().enumerate() {
        let (l1, l2) = parse_dims(dims)?;
        models.push(PredictorPair::untrained(cfg, l1, l2, &mut substream(exp.seed, 100 + k as u64))?);
    }
    let pairs = random_pairs(cfg, exp.latency.n_pairs, &mut substream(exp.seed, 0));
    let refs: Vec<&PredictorPair> = models.iter().collect();
    let records = latency_bench(cfg, &refs, &pairs, &exp.latency)?;
    write_latency_csv(std::fs::File::create(exp.output_dir.join("latency.csv"))?, &records)?;

    let full = &records[0];
    let mut ok = true;
    for r in &records[1..] {
        let s = speedup(full, r);
        let dims = r.l1.map(|l1| format!(" L1={l1} L2={}", r.l2.unwrap_or(0))).unwrap_or_default();
        println!("{}{dims}: mean {:.1} us, p50 {:.1} us, p95 {:.1} us, {:.1}x faster than full", r.strategy, r.mean_us, r.p50_us, r.p95_us, s);
        ok &= s > 1.0;
    }
    println!("full: mean {:.1} us over {} calls", full.mean_us, full.n_calls);
    println!("{} every strategy faster than full", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn validate_model(exp: &ExperimentConfig, args: &ValidateModel) -> anyhow::Result<bool> {
    let cfg = &exp.otfs;
    let pair = load_model_for(&args.model, cfg)?;
    let (l1, l2) = pair.hidden_dims();
    let sizing = validate_latency_sizing(cfg, l1, l2);
    println!(
        "L1={l1} L2={l2}: L1*L2 = {:.3e} vs budget {:.3e} ({}), wider than MN: {}",
        sizing.product,
        sizing.budget,
        if sizing.within_budget { "ok" } else { "violated" },
        sizing.wide_enough
    );
    let pairs = random_pairs(cfg, args.pairs, &mut substream(exp.seed, 7));
    let mut errors: Vec<f64> = pairs
        .iter()
        .map(|&(t, v)| {
            let p = predict_cddpm_column(&pair, t, v);
            let e = cddpm_column_exact(cfg, t, v, ColumnStrategy::PilotSparse);
            let num: f64 = p.values.iter().zip(&e.values).map(|(a, b)| (a - b).norm_sqr()).sum();
            (num / e.norm_sqr()).sqrt()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = errors.get(errors.len() / 2).copied().unwrap_or(f64::NAN);
    let ok = sizing.within_budget && median < args.max_median_error;
    println!("median relative column error {median:.4} over {} pairs", errors.len());
    println!("{} model checks", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let exp = load_config(cli)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&exp, a),
        Command::Train(a) => train(exp, a),
        Command::EvalSweep(a) => eval_sweep(exp, a),
        Command::LatencyBench(a) => latency(exp, a),
        Command::ValidateModel(a) => validate_model(&exp, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.gate => ExitCode::from(2),
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
