use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use welm_core::{BBox, TrackerConfig};
use welm_cli::config::apply_config;
use welm_cli::run::{run_eval, run_track};
use welm_cli::selftest::run_selftest;
use welm_cli::sequence::SequenceSpec;
use welm_cli::synth::{generate_synthetic, SynthParams};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "WELM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "welm",
    about = "Visual tracking with a weighted online sequential extreme learning machine",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence and write per-frame results (optionally evaluate).
    Track(Box<TrackArgs>),
    /// Score a stored results CSV against ground truth without re-tracking.
    Eval(EvalArgs),
    /// Generate a deterministic synthetic sequence with exact ground truth.
    Synth(SynthArgs),
    /// Run the oracle-equivalence self-test suite.
    Selftest,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory in OTB layout (img/ plus groundtruth_rect.txt).
    #[arg(long, conflicts_with = "images")]
    sequence: Option<PathBuf>,
    /// Frame directory (alternative to --sequence).
    #[arg(long, requires = "ground_truth")]
    images: Option<PathBuf>,
    /// printf-style frame pattern, e.g. %04d.pgm; directory listing order
    /// when omitted.
    #[arg(long)]
    pattern: Option<String>,
    /// First frame index used with --pattern.
    #[arg(long, default_value_t = 1)]
    start_index: usize,
    /// Ground-truth file (x,y,w,h per line, 1-based).
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Initial box as x,y,w,h in 0-based pixels; defaults to the first
    /// ground-truth line.
    #[arg(long)]
    init_box: Option<String>,
    /// Config file (key = value sections); flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $WELM_OUT_DIR or ./welm_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit metrics, curves, and plots (requires full ground truth).
    #[arg(long)]
    evaluate: bool,
    /// Comma-separated challenge attribute tags carried into the echo.
    #[arg(long)]
    attributes: Option<String>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct ConfigOverrides {
    #[arg(long)]
    seed_projection: Option<u64>,
    #[arg(long)]
    seed_hidden: Option<u64>,
    #[arg(long)]
    search_radius: Option<u32>,
    #[arg(long)]
    n_hidden: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Ridge strength C (larger is weaker regularization).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    latter_fraction: Option<f64>,
    /// ratio_drift, unit, or fixed:<value>.
    #[arg(long)]
    rho_mode: Option<String>,
    /// accumulate or fixed.
    #[arg(long)]
    regularizer_mode: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 320)]
    width: u32,
    #[arg(long, default_value_t = 240)]
    height: u32,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 15.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 10.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    target_size: u32,
}

fn default_out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("welm_out"))
}

fn parse_init_box(raw: &str) -> Result<BBox> {
    let fields: Vec<&str> = raw.split(',').collect();
    if fields.len() != 4 {
        bail!("--init-box expects x,y,w,h");
    }
    Ok(BBox::new(
        fields[0].trim().parse().context("init box x")?,
        fields[1].trim().parse().context("init box y")?,
        fields[2].trim().parse().context("init box w")?,
        fields[3].trim().parse().context("init box h")?,
    ))
}

fn build_config(args: &TrackArgs) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        apply_config(&text, &mut cfg)?;
    }
    let o = &args.overrides;
    if let Some(v) = o.seed_projection {
        cfg.seed_projection = v;
    }
    if let Some(v) = o.seed_hidden {
        cfg.seed_hidden = v;
    }
    if let Some(v) = o.search_radius {
        cfg.search_radius = v;
    }
    if let Some(v) = o.n_hidden {
        cfg.n_hidden = v;
    }
    if let Some(v) = o.feature_dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = o.c {
        cfg.c = v;
    }
    if let Some(v) = o.latter_fraction {
        cfg.selector.latter_fraction = v;
    }
    // Reuse the config-file grammar for the mode overrides.
    if let Some(v) = &o.rho_mode {
        apply_config(&format!("[woselm]\nrho_mode = {v}\n"), &mut cfg)?;
    }
    if let Some(v) = &o.regularizer_mode {
        apply_config(&format!("[woselm]\nregularizer_mode = {v}\n"), &mut cfg)?;
    }
    Ok(cfg)
}

fn track(args: TrackArgs) -> Result<()> {
    let spec = if let Some(dir) = &args.sequence {
        let mut s = SequenceSpec::from_otb_dir(dir);
        if args.pattern.is_some() {
            s.pattern = args.pattern.clone();
            s.start_index = args.start_index;
        }
        if let Some(gt) = &args.ground_truth {
            s.ground_truth = Some(gt.clone());
        }
        s
    } else if let Some(images) = &args.images {
        SequenceSpec {
            image_dir: images.clone(),
            pattern: args.pattern.clone(),
            start_index: args.start_index,
            ground_truth: args.ground_truth.clone(),
            attributes: Vec::new(),
        }
    } else {
        bail!("provide --sequence DIR or --images DIR --ground-truth FILE");
    };
    let mut spec = spec;
    if let Some(tags) = &args.attributes {
        spec.attributes = tags.split(',').map(|t| t.trim().to_string()).collect();
    }

    let cfg = build_config(&args)?;
    let init_box = args.init_box.as_deref().map(parse_init_box).transpose()?;
    let out = default_out_dir(args.out.clone());
    let artifacts = run_track(&spec, cfg, init_box, &out, args.evaluate)?;
    let n = artifacts.records.len();
    let total_ms: f64 = artifacts.records.iter().map(|r| r.ms).sum();
    println!(
        "tracked {} frames in {:.2}s ({:.1} fps), results under {}",
        n,
        total_ms / 1e3,
        n as f64 / (total_ms / 1e3),
        artifacts.output_dir.display()
    );
    if let Some(eval) = &artifacts.eval {
        println!(
            "success rate at 0.5 overlap: {:.1}%  mean overlap: {:.3}  mean center error: {:.2} px",
            eval.success_rate_at_half, eval.mean_overlap, eval.mean_center_error
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<bool> = match cli.command {
        Command::Track(args) => track(*args).map(|_| true),
        Command::Eval(args) => {
            let out = default_out_dir(args.out);
            run_eval(&args.results, &args.ground_truth, &out).map(|eval| {
                println!(
                    "success rate at 0.5 overlap: {:.1}%  mean overlap: {:.3}  mean fps: {:.1}",
                    eval.success_rate_at_half, eval.mean_overlap, eval.mean_fps
                );
                println!("metrics written under {}", out.display());
                true
            })
        }
        Command::Synth(args) => {
            let out = default_out_dir(args.out);
            let params = SynthParams {
                width: args.width,
                height: args.height,
                frames: args.frames,
                amplitude: args.amplitude,
                noise_sigma: args.noise,
                seed: args.seed,
                target_size: args.target_size,
            };
            generate_synthetic(&params, &out).map(|spec| {
                println!(
                    "wrote {} frames under {} (ground truth {})",
                    args.frames,
                    spec.image_dir.display(),
                    spec.ground_truth
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default()
                );
                true
            })
        }
        Command::Selftest => Ok(run_selftest()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
