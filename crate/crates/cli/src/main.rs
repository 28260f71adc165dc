//! `cochsid`: cochleagram extraction, corruption, synthetic corpora,
//! training, evaluation and gradient checks from the command line.
//!
//! Exit codes: 0 success, 1 internal failure (including a failed gradient
//! check), 2 I/O or unreadable input, 3 bad usage or parameters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use cochsid::corruption::{apply_corruption_traced, CorruptionSpec, NoiseSource};
use cochsid::experiment::{
    evaluate_clipping, evaluate_noise_grid, evaluate_reverb_grid, gnuplot_curves, load_manifest,
    render_pretty, report_csv, synth_speaker_dataset, train_speaker_model, AdaptationPlan,
    EvalGrid, EvaluationReport, SynthConfig,
};
use cochsid::gammatone::{
    save_cgrm, save_pgm, to_feature_image, FilterbankConfig, Frontend,
    FrontendConfig,
};
use cochsid::nn::gradcheck::{self, GradCheckConfig, GradCheckReport};
use cochsid::nn::{load_model, save_model, write_train_log, BackwardFault, TrainConfig};
use cochsid::signal::{load_wav, resample, save_wav};
use cochsid::Error;

#[derive(Parser, Debug)]
#[command(name = "cochsid", version, about = "Noise-adapted speaker identification from gammatone cochleagrams")]
struct Cli {
    /// Seed for every stochastic step: noise, reverberation, corpus, initialization and shuffling.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Front-end sample rate in Hz; inputs at other rates are resampled.
    #[arg(long, global = true, default_value_t = 8000)]
    sample_rate: u32,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More progress output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count, conflicts_with = "quiet")]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a cochleagram (or a fixed-size feature image) from a WAV file.
    Cochleagram(CochleagramArgs),
    /// Apply a corruption spec such as "reverb=200ms;noise=white@-5dB;clip=peak:0.6".
    Corrupt(CorruptArgs),
    /// Generate a synthetic speaker corpus with a manifest.
    Synth(SynthArgs),
    /// Train a speaker model on a manifest's train split.
    Train(TrainArgs),
    /// Evaluate a model on a manifest's test split over a corruption grid.
    Eval(EvalArgs),
    /// Finite-difference check of the network gradients on a toy problem.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct CochleagramArgs {
    input: PathBuf,
    /// Output CGRM file.
    output: PathBuf,
    #[arg(long, default_value_t = 128)]
    channels: usize,
    #[arg(long, default_value_t = 50.0)]
    fmin: f64,
    /// Upper center frequency; capped just below Nyquist.
    #[arg(long, default_value_t = 8000.0)]
    fmax: f64,
    #[arg(long, default_value_t = 40.0)]
    frame_ms: f64,
    /// Resize and min-max normalize to HxW, e.g. 500x400.
    #[arg(long, value_parser = parse_dims)]
    image: Option<(usize, usize)>,
    /// Also write an 8-bit PGM preview.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CorruptArgs {
    input: PathBuf,
    output: PathBuf,
    /// Corruption spec: any of noise=<white|pink|file:PATH>@<SNR>dB, reverb=<T60>ms, clip=<center|peak>:<fraction>, joined by ';'.
    #[arg(long)]
    spec: String,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory for wav/ and manifest.csv.
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    speakers: usize,
    #[arg(long, default_value_t = 12)]
    utts: usize,
    /// Utterance length in seconds.
    #[arg(long, default_value_t = 2.0)]
    seconds: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSPK model.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV (default: the model path with extension train.csv).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Noise for adaptation copies: white, pink or file:PATH.
    #[arg(long, default_value = "white")]
    adapt_noise: String,
    /// SNR of the adaptation copies; repeat for several levels.
    #[arg(long = "adapt-snr", allow_negative_numbers = true, default_values_t = [-5.0])]
    adapt_snrs: Vec<f64>,
    /// Train on clean utterances only.
    #[arg(long, conflicts_with_all = ["no_clean", "adapt_snrs"])]
    clean_only: bool,
    /// Leave the clean images out of the training set.
    #[arg(long)]
    no_clean: bool,
    /// Network input size HxW.
    #[arg(long, value_parser = parse_dims, default_value = "500x400")]
    image: (usize, usize),
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum GridKind {
    /// Clean plus every noise at every SNR.
    Noise,
    /// Reverberation only, one cell per delay.
    Reverb,
    /// Every delay combined with the first noise at every SNR.
    NoisyReverb,
    /// Center and peak clipping.
    Clipping,
    /// All of the above, in that order.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Csv,
    Pretty,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Report file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GridKind::Noise)]
    grid: GridKind,
    /// Comma-separated noises: white, pink, file:PATH.
    #[arg(long, value_delimiter = ',', default_value = "white,pink")]
    noises: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5,10,15")]
    snrs: Vec<f64>,
    /// Reverberation T60 values in ms.
    #[arg(long, value_delimiter = ',', default_value = "100,200,500,800")]
    delays: Vec<f64>,
    /// Clip fractions, applied with both clip kinds.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
    clip_fractions: Vec<f64>,
    /// Leave the clean cell out of the noise grid.
    #[arg(long)]
    no_clean: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write accuracy-vs-SNR curves in gnuplot's long format.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Fragment {
    /// Full five-block network on a 64x64 toy batch.
    Full,
    /// Dense layer with softmax cross-entropy only.
    Dense,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = Fragment::Full)]
    fragment: Fragment,
    /// Parameters sampled per tensor.
    #[arg(long, default_value_t = 200)]
    max_params: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Negate the conv weight gradient of this block (0-based), to see the check fail.
    #[arg(long)]
    inject_fault: Option<usize>,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    if h == 0 || w == 0 {
        return Err("image dims must be positive".into());
    }
    Ok((h, w))
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 3,
        message: message.into(),
    }
}

type CliResult = Result<(), Failure>;

struct Ctx {
    seed: u64,
    sample_rate: u32,
    verbosity: i8,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn debug(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn cmd_cochleagram(ctx: &Ctx, a: &CochleagramArgs) -> CliResult {
    let fb_cfg = FilterbankConfig {
        n_channels: a.channels,
        f_min: a.fmin,
        f_max: a.fmax,
        ..FilterbankConfig::new(ctx.sample_rate)
    };
    // image dims only matter below, when --image is given
    let (image_height, image_width) = a.image.unwrap_or((1, 1));
    let frontend = Frontend::new(FrontendConfig {
        filterbank: fb_cfg,
        frame_ms: a.frame_ms,
        image_height,
        image_width,
    })?;
    let clip = load_wav(&a.input)?;
    let coch = frontend.cochleagram(&clip)?;
    let values = match a.image {
        Some((h, w)) => to_feature_image(&coch, h, w)?.values,
        None => coch.values,
    };
    save_cgrm(&values, &a.output)?;
    if let Some(p) = &a.pgm {
        save_pgm(&values, p)?;
    }
    println!("{} x {}", values.rows(), values.cols());
    Ok(())
}

fn cmd_corrupt(ctx: &Ctx, a: &CorruptArgs) -> CliResult {
    let spec: CorruptionSpec = a.spec.parse()?;
    let mut clip = load_wav(&a.input)?;
    if clip.sample_rate != ctx.sample_rate {
        clip = resample(&clip, ctx.sample_rate)?;
    }
    let out = apply_corruption_traced(&clip, &spec, ctx.seed)?;
    if let Some(snr) = out.measured_snr_db {
        // always shown: scripts read it back
        eprintln!("measured SNR: {snr:.6} dB");
    }
    save_wav(&out.clip, &a.output)?;
    Ok(())
}

fn cmd_synth(ctx: &Ctx, a: &SynthArgs) -> CliResult {
    let cfg = SynthConfig {
        n_speakers: a.speakers,
        utts_per_speaker: a.utts,
        utt_seconds: a.seconds,
        sample_rate: ctx.sample_rate,
        seed: ctx.seed,
    };
    let m = synth_speaker_dataset(&a.out_dir, &cfg)?;
    ctx.info(format!(
        "{} utterances from {} speakers, manifest {}",
        m.entries.len(),
        m.speakers().len(),
        a.out_dir.join("manifest.csv").display()
    ));
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let plan = if a.clean_only {
        AdaptationPlan::clean_only()
    } else {
        AdaptationPlan {
            adapt_noise: NoiseSource::from_str(&a.adapt_noise)?,
            adapt_snrs: a.adapt_snrs.clone(),
            include_clean: !a.no_clean,
        }
    };
    let (h, w) = a.image;
    let frontend = Frontend::new(FrontendConfig {
        image_height: h,
        image_width: w,
        ..FrontendConfig::new(ctx.sample_rate)
    })?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        momentum: a.momentum,
        l2_lambda: a.l2,
        seed: ctx.seed,
    };
    ctx.debug(format!("plan {plan:?}, {cfg:?}"));
    let (model, log) = train_speaker_model(&manifest, &plan, &frontend, &cfg)?;
    for e in &log {
        ctx.debug(format!("epoch {:3} loss {:.6} train acc {:.4}", e.epoch, e.loss, e.train_acc));
    }
    save_model(&model, &a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("train.csv"));
    write_train_log(&log_path, &log)?;
    if let Some(last) = log.last() {
        ctx.info(format!(
            "{} epochs, final loss {:.6}, train acc {:.4}; model {}",
            last.epoch,
            last.loss,
            last.train_acc,
            a.out.display()
        ));
    } else {
        ctx.info(format!("no epochs run; initial model {}", a.out.display()));
    }
    Ok(())
}

fn eval_grid(a: &EvalArgs) -> Result<EvalGrid, Failure> {
    let noises = a
        .noises
        .iter()
        .map(|n| NoiseSource::from_str(n))
        .collect::<Result<Vec<_>, _>>()?;
    let clip_specs = [cochsid::corruption::ClipKind::Center, cochsid::corruption::ClipKind::Peak]
        .into_iter()
        .flat_map(|kind| {
            a.clip_fractions
                .iter()
                .map(move |&fraction| cochsid::corruption::ClipSpec { kind, fraction })
        })
        .collect();
    Ok(EvalGrid {
        noises,
        snrs: a.snrs.clone(),
        include_clean: !a.no_clean,
        reverb_delays_ms: a.delays.clone(),
        clip_specs,
    })
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let model = load_model(&a.model)?;
    let (h, w) = model.input_dims();
    let frontend = Frontend::new(FrontendConfig {
        image_height: h,
        image_width: w,
        ..FrontendConfig::new(ctx.sample_rate)
    })?;
    let grid = eval_grid(a)?;
    let first_noise = grid.noises.first().ok_or_else(|| usage("--noises is empty"))?.clone();
    let mut cells = Vec::new();
    let mut run = |kind: GridKind| -> Result<(), Failure> {
        ctx.debug(format!("evaluating {kind:?} grid"));
        let r = match kind {
            GridKind::Noise => evaluate_noise_grid(&model, &manifest, &grid, &frontend, ctx.seed)?,
            GridKind::Reverb => evaluate_reverb_grid(&model, &manifest, &grid, None, &frontend, ctx.seed)?,
            GridKind::NoisyReverb => evaluate_reverb_grid(
                &model,
                &manifest,
                &grid,
                Some((&first_noise, &grid.snrs)),
                &frontend,
                ctx.seed,
            )?,
            GridKind::Clipping => evaluate_clipping(&model, &manifest, &grid, &frontend, ctx.seed)?,
            GridKind::All => unreachable!("expanded by the caller"),
        };
        cells.extend(r.cells);
        Ok(())
    };
    match a.grid {
        GridKind::All => {
            for k in [GridKind::Noise, GridKind::Reverb, GridKind::NoisyReverb, GridKind::Clipping] {
                run(k)?;
            }
        }
        k => run(k)?,
    }
    let report = EvaluationReport { cells, seed: ctx.seed };
    let text = match a.format {
        Format::Csv => report_csv(&report)?,
        Format::Pretty => render_pretty(&report)?,
    };
    write_text(&a.out, &text)?;
    if let Some(p) = &a.gnuplot {
        write_text(p, &gnuplot_curves(&report)?)?;
    }
    if ctx.verbosity >= 0 {
        eprint!("{}", render_pretty(&report)?);
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: 2,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn print_gradcheck(ctx: &Ctx, r: &GradCheckReport) {
    for t in &r.tensors {
        ctx.info(format!(
            "{:14} checked {:4} skipped {:3} max rel error {:.3e}",
            t.name, t.checked, t.skipped, t.max_rel_error
        ));
    }
}

fn cmd_gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> CliResult {
    if a.max_params == 0 {
        return Err(usage("--max-params must be >= 1"));
    }
    if !(a.step > 0.0 && a.tolerance > 0.0) {
        return Err(usage("--step and --tolerance must be positive"));
    }
    let cfg = GradCheckConfig {
        step: a.step,
        max_params_per_tensor: a.max_params,
        tolerance: a.tolerance,
        seed: ctx.seed,
        ..GradCheckConfig::default()
    };
    let report = match a.fragment {
        Fragment::Full => {
            let fault = a.inject_fault.map(|block| BackwardFault::FlipConvWeightGrad { block });
            gradcheck::check_toy_model(&cfg, fault)?
        }
        Fragment::Dense => {
            if a.inject_fault.is_some() {
                return Err(usage("--inject-fault needs --fragment full"));
            }
            gradcheck::check_toy_dense(&cfg)?
        }
    };
    print_gradcheck(ctx, &report);
    let verdict = format!(
        "max rel error {:.3e} over {} entries ({} skipped), tolerance {:.1e}",
        report.max_rel_error(),
        report.checked(),
        report.skipped(),
        report.tolerance
    );
    if report.passed() {
        ctx.info(format!("PASS {verdict}"));
        Ok(())
    } else {
        Err(internal(format!("gradient check FAILED: {verdict}")))
    }
}

fn run(cli: &Cli) -> CliResult {
    if cli.sample_rate == 0 {
        return Err(usage("--sample-rate must be positive"));
    }
    let threads = match cli.threads {
        Some(0) => return Err(usage("--threads must be >= 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| internal(format!("cannot start thread pool: {e}")))?;
    let ctx = Ctx {
        seed: cli.seed,
        sample_rate: cli.sample_rate,
        verbosity: if cli.quiet { -1 } else { cli.verbose as i8 },
    };
    match &cli.command {
        Command::Cochleagram(a) => cmd_cochleagram(&ctx, a),
        Command::Corrupt(a) => cmd_corrupt(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Gradcheck(a) => cmd_gradcheck(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
