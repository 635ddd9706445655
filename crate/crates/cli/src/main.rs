//! `csdecon`: phantoms, PSFs, simulated acquisitions, reconstructions,
//! metrics and experiment grids from the command line.
//!
//! Exit status is 0 on success, 1 when the numerics fail and 2 for invalid
//! input or I/O errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csdecon::io::KeyValues;
use csdecon::Error;

#[derive(Debug, Parser)]
#[command(name = "csdecon", version, about = "Compressive deconvolution of ultrasound images")]
struct Cli {
    /// Run seed; phantom, sensing and noise seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Flat `key = value` parameter file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for experiment grids (0 = one per core).
    #[arg(long, global = true, env = "CSDECON_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ground-truth reflectivity image.
    Phantom(PhantomArgs),
    /// Generate a PSF kernel.
    Psf(PsfArgs),
    /// Blur, compress and add noise to a reflectivity image.
    Acquire(AcquireArgs),
    /// Reconstruct a reflectivity image from compressed measurements.
    Reconstruct(ReconstructArgs),
    /// Score an estimate against ground truth and append a CSV row.
    Metrics(MetricsArgs),
    /// Run a full phantom x solver x SNR x CS-ratio x seed grid.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// shepp-logan, modified-shepp-logan or round-cyst.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    /// Shepp-Logan intensity table: toft or original.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    ggd_shape: Option<f64>,
    #[arg(long)]
    ggd_scale: Option<f64>,
    /// Mean scatterers per pixel.
    #[arg(long)]
    density: Option<f64>,
    /// Cyst radius as a fraction of the image side.
    #[arg(long)]
    cyst_radius: Option<f64>,
    #[arg(long)]
    cyst_attenuation: Option<f64>,
    /// Output file stem.
    #[arg(long, default_value = "phantom")]
    name: String,
}

#[derive(Debug, Args)]
pub struct PsfArgs {
    /// gaussian or gabor.
    #[arg(long)]
    kind: Option<String>,
    /// Odd kernel side length.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    variance: Option<f64>,
    /// Cycles per sample along rows.
    #[arg(long)]
    axial_freq: Option<f64>,
    #[arg(long)]
    axial_sigma: Option<f64>,
    #[arg(long)]
    lateral_sigma: Option<f64>,
    #[arg(long, default_value = "psf")]
    name: String,
}

#[derive(Debug, Args)]
pub struct AcquireArgs {
    /// Reflectivity image (PFM).
    #[arg(long)]
    trf: Option<PathBuf>,
    /// PSF kernel (PFM).
    #[arg(long)]
    psf: Option<PathBuf>,
    #[arg(long)]
    cs_ratio: Option<f64>,
    /// Target SNR in dB, or `none`.
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long, default_value = "measurements")]
    name: String,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Measurement file written by `acquire`.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// PSF kernel (PFM).
    #[arg(long)]
    psf: Option<PathBuf>,
    /// admm, admm-lp, admm-gtv or sequential.
    #[arg(long)]
    solver: Option<String>,
    /// lp or gtv (with `--solver admm`).
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Proximal-gradient step, or `auto`.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    gtv_inner_iter: Option<usize>,
    #[arg(long)]
    gtv_epsilon: Option<f64>,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long)]
    cg_max_iter: Option<usize>,
    #[arg(long)]
    fista_tol: Option<f64>,
    #[arg(long)]
    fista_max_iter: Option<usize>,
    /// Forward-backward step, or `auto`.
    #[arg(long)]
    fb_step: Option<String>,
    #[arg(long)]
    fb_tol: Option<f64>,
    #[arg(long)]
    fb_max_iter: Option<usize>,
    #[arg(long)]
    wavelet_levels: Option<usize>,
    /// Dynamic range of the PGM rendering in dB.
    #[arg(long)]
    dynamic_range: Option<f64>,
    #[arg(long, default_value = "reconstruction")]
    name: String,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Ground-truth image (PFM).
    #[arg(long)]
    truth: PathBuf,
    /// Estimated image (PFM); its `.params` sidecar fills in the row metadata.
    #[arg(long)]
    estimate: PathBuf,
    /// CNR region `row,col,height,width`.
    #[arg(long)]
    region1: Option<String>,
    #[arg(long)]
    region2: Option<String>,
    /// envelope or raw.
    #[arg(long, default_value = "envelope")]
    cnr_input: String,
    #[arg(long)]
    experiment_id: Option<String>,
    #[arg(long)]
    cs_ratio: Option<f64>,
    /// Method label, e.g. ADMM_L1.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seconds: Option<f64>,
    /// CSV file (inside `--out`) the row is appended to.
    #[arg(long, default_value = "metrics.csv")]
    csv: String,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment parameter file, layered over `--config`.
    spec: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// Comma-separated CS ratios.
    #[arg(long)]
    cs_ratios: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated SNRs in dB (`none` for noiseless).
    #[arg(long)]
    snr_db: Option<String>,
    /// Comma-separated solver kinds.
    #[arg(long)]
    solver: Option<String>,
    /// Skip the per-run reconstructed images.
    #[arg(long)]
    no_images: bool,
}

/// Options shared by every subcommand.
pub struct Globals {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub config: KeyValues,
    pub threads: usize,
}

fn run(cli: Cli) -> csdecon::Result<()> {
    let config = match &cli.config {
        Some(path) => KeyValues::read(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?,
        None => KeyValues::new(),
    };
    let globals = Globals {
        seed: cli.seed,
        out: cli.out,
        config,
        threads: cli.threads.unwrap_or(0),
    };
    match cli.command {
        Command::Phantom(a) => commands::phantom(&globals, a),
        Command::Psf(a) => commands::psf(&globals, a),
        Command::Acquire(a) => commands::acquire(&globals, a),
        Command::Reconstruct(a) => commands::reconstruct(&globals, a),
        Command::Metrics(a) => commands::metrics(&globals, a),
        Command::Experiment(a) => commands::experiment(&globals, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 1 } else { 2 })
        }
    }
}
