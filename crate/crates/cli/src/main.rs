use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdrstitch::detail::{detail_visualization, SolverConfig};
use hdrstitch::metrics;
use hdrstitch::scene::synthesize_test_scene;
use hdrstitch::wha::Imf;
use hdrstitch::{load_viewset, mef, stitch, Error, LdrImage, PanoLayout, StitchConfig};

#[derive(Parser)]
#[command(
    name = "hdrstitch",
    version,
    about = "Panoramic HDR stitching from differently exposed views"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch a scene directory into one panorama.
    Stitch(StitchArgs),
    /// Estimate the intensity mapping from one image to another.
    Imf {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic scene directory with ground truth.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 640)]
        view_width: usize,
        #[arg(long, default_value_t = 480)]
        view_height: usize,
        #[arg(long, default_value_t = 200)]
        overlap12: usize,
        #[arg(long, default_value_t = 200)]
        overlap23: usize,
        #[arg(long, default_value_t = 1.0)]
        ev_gap: f64,
    },
    /// Fuse three equally sized images.
    Fuse {
        #[arg(num_args = 3, required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Pyramid depth; defaults to floor(log2(min side)) - 2.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Compare an image against a reference.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "psnr,ssim")]
        metrics: Vec<Metric>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Metric {
    Psnr,
    Ssim,
}

#[derive(clap::Args)]
struct StitchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Directory of z<i>_to_<j> renditions replacing the estimated ones.
    #[arg(long)]
    refined_dir: Option<PathBuf>,
    /// Preference for the unenhanced result, in [0, 1].
    #[arg(long, default_value_t = SolverConfig::default().nu)]
    nu: f64,
    #[arg(long, default_value_t = SolverConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = SolverConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = SolverConfig::default().cg_tolerance)]
    cg_tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().cg_max_iters)]
    cg_max_iters: usize,
    #[arg(long)]
    mef_depth: Option<usize>,
    #[arg(long)]
    emit_intermediates: Option<PathBuf>,
    /// Write the detail layer, rescaled around mid-grey.
    #[arg(long)]
    dump_detail: Option<PathBuf>,
    /// Print per-stage timings to stderr.
    #[arg(short, long)]
    verbose: bool,
}

enum Failure {
    Input(Error),
    Output(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

fn save(img: &LdrImage, path: &Path) -> Result<(), Failure> {
    img.save(path).map_err(Failure::Output)
}

fn run_stitch(args: StitchArgs) -> Result<(), Failure> {
    let views = load_viewset(&args.input)?;
    let cfg = StitchConfig {
        solver: SolverConfig {
            lambda: args.lambda,
            alpha: args.alpha,
            cg_tolerance: args.cg_tol,
            cg_max_iters: args.cg_max_iters,
            nu: args.nu,
        },
        mef_depth: args.mef_depth,
        refined_dir: args.refined_dir,
        emit_intermediates: None,
    };
    let result = stitch(&views, &cfg)?;
    save(&result.final_image, &args.output)?;
    if let Some(dir) = &args.emit_intermediates {
        hdrstitch::pipeline::write_intermediates(&result, dir).map_err(Failure::Output)?;
    }
    if let Some(path) = &args.dump_detail {
        save(&detail_visualization(&result.detail), path)?;
    }
    if args.verbose {
        for (stage, t) in &result.timings {
            eprintln!("{stage:>10} {:8.1} ms", t.as_secs_f64() * 1e3);
        }
        for (c, (it, res)) in result.detail.stats.iter().enumerate() {
            eprintln!("cg channel {c}: {it} iterations, residual {res:.2e}");
        }
    }
    Ok(())
}

fn run_fuse(inputs: &[PathBuf], out: &Path, depth: Option<usize>) -> Result<(), Failure> {
    let images = inputs
        .iter()
        .map(|p| LdrImage::load(p).map(|img| img.to_float()))
        .collect::<Result<Vec<_>, _>>()?;
    let (w, h) = images[0].dims();
    let depth = depth.unwrap_or_else(|| mef::default_depth(w, h));
    let fused = mef::fuse_images(&[&images[0], &images[1], &images[2]], depth)?;
    save(&fused.image.quantize(), out)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Stitch(args) => run_stitch(args),
        Command::Imf {
            reference,
            tgt,
            out,
        } => {
            let imf = Imf::estimate(&LdrImage::load(&reference)?, &LdrImage::load(&tgt)?)?;
            std::fs::write(&out, imf.to_text()).map_err(|e| {
                Failure::Output(Error::Io {
                    path: out,
                    source: e,
                })
            })
        }
        Command::Synth {
            seed,
            out,
            view_width,
            view_height,
            overlap12,
            overlap23,
            ev_gap,
        } => {
            let layout =
                PanoLayout::with_ev_gap(view_width, view_height, overlap12, overlap23, ev_gap)?;
            synthesize_test_scene(seed, &layout)
                .write_dir(&out)
                .map_err(Failure::Output)
        }
        Command::Fuse { inputs, out, depth } => run_fuse(&inputs, &out, depth),
        Command::Eval { pred, gt, metrics } => {
            let (pred, gt) = (LdrImage::load(&pred)?, LdrImage::load(&gt)?);
            for m in metrics {
                match m {
                    Metric::Psnr => println!("psnr={}", metrics::psnr(&pred, &gt)?),
                    Metric::Ssim => println!("ssim={}", metrics::ssim(&pred, &gt)?),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("hdrstitch: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
        Err(Failure::Output(e)) => {
            eprintln!("hdrstitch: {e}");
            ExitCode::from(1)
        }
    }
}
