//! `bcs` — blind compressed sensing reconstruction from undersampled
//! k-space, with data-driven unions of unitary sparsifying transforms.
//!
//! Pipeline: `phantom` (or any CIMG producer) -> `mask` -> `simulate` ->
//! `reconstruct` -> `metrics`. Exit codes: 0 success, 2 usage or
//! configuration errors, 1 runtime numerical errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcs_core::error::Error;
use bcs_core::grid::ComplexImage;
use bcs_core::objective::stats_to_csv;
use bcs_core::sampling::{
    make_cartesian_mask, make_random2d_mask, measure, measurements_from_s0, s0_spectrum, zero_fill,
};
use bcs_core::solver::reconstruct;
use bcs_core::Complex64;
use bcs_core::{io, metrics, phantom, PatchGeometry};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{resolve_config, ConfigOverrides};

#[derive(Parser)]
#[command(
    name = "bcs",
    version,
    about = "Blind compressed sensing MRI reconstruction"
)]
struct Cli {
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskKind {
    /// Full rows (phase encodes), variable-density in the row direction.
    Cartesian,
    /// Individual k-space samples, variable-density 2D.
    Random2d,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a variable-density sampling mask (MASK v1).
    Mask {
        #[arg(long = "type", value_enum)]
        kind: MaskKind,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Undersampling factor (> 1).
        #[arg(long)]
        uf: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate undersampled measurements of a CIMG image; writes
    /// `<prefix>.s0.cimg` (zero-filled data spectrum) and `<prefix>.mask.msk`.
    Simulate {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Std deviation of complex Gaussian noise per component.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_prefix: String,
    },
    /// Reconstruct from simulated measurements; writes `<prefix>.recon.cimg`,
    /// `<prefix>.stats.csv`, `<prefix>.transforms.utfs`, `<prefix>.labels.bin`.
    Reconstruct {
        #[arg(long)]
        meas_prefix: String,
        /// key=value solver config file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_prefix: String,
        /// Reference CIMG; enables per-iteration PSNR/HFEN and a final report.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Also write the majority-vote pixel cluster map as CIMG.
        #[arg(long)]
        cluster_map: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Print `psnr_db=... hfen=...` for a reconstruction against a reference.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Rasterize the Shepp-Logan phantom to CIMG (a test input generator).
    Phantom {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Usage, configuration, and missing/invalid file problems exit 2;
/// numerical runtime failures exit 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Io(_) => 2,
        Error::Numerical(_) | Error::Infeasible(_) => 1,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Mask {
            kind,
            height,
            width,
            uf,
            seed,
            out,
        } => {
            let mask = match kind {
                MaskKind::Cartesian => make_cartesian_mask(height, width, uf, seed)?,
                MaskKind::Random2d => make_random2d_mask(height, width, uf, seed)?,
            };
            io::write_mask(&out, &mask)?;
            println!(
                "mask {}x{}: {} of {} locations sampled (uf {:.3})",
                height,
                width,
                mask.num_sampled(),
                height * width,
                mask.undersampling_factor()
            );
            Ok(())
        }
        Command::Simulate {
            image,
            mask,
            noise_sigma,
            seed,
            out_prefix,
        } => {
            let img = read_image(&image)?;
            let mask = read_mask(&mask)?;
            let meas = measure(&img, &mask, noise_sigma, seed)?;
            let s0 = s0_spectrum(&meas, &mask)?;
            io::write_kspace(&prefixed(&out_prefix, "s0.cimg"), &s0)?;
            io::write_mask(&prefixed(&out_prefix, "mask.msk"), &mask)?;
            println!(
                "simulated {} samples ({} of {} k-space locations)",
                meas.len(),
                mask.num_sampled(),
                mask.height() * mask.width()
            );
            Ok(())
        }
        Command::Reconstruct {
            meas_prefix,
            config,
            out_prefix,
            reference,
            cluster_map,
            overrides,
        } => {
            let s0 = io::read_kspace(&prefixed(&meas_prefix, "s0.cimg"))
                .map_err(|e| with_path(e, &prefixed(&meas_prefix, "s0.cimg")))?;
            let mask = read_mask(&prefixed(&meas_prefix, "mask.msk"))?;
            let meas = measurements_from_s0(&s0, &mask)?;
            let solver_config =
                resolve_config(mask.height(), mask.width(), config.as_deref(), &overrides)
                    .map_err(|problems| Error::Config(problems.join("; ")))?;
            let reference = reference.map(|p| read_image(&p)).transpose()?;

            let result = reconstruct(&meas, &mask, &solver_config, reference.as_ref())?;

            io::write_image(&prefixed(&out_prefix, "recon.cimg"), &result.image)?;
            std::fs::write(
                prefixed(&out_prefix, "stats.csv"),
                stats_to_csv(&result.stats, solver_config.num_transforms),
            )?;
            io::write_transforms(
                &prefixed(&out_prefix, "transforms.utfs"),
                &result.transforms,
            )?;
            io::write_labels(&prefixed(&out_prefix, "labels.bin"), &result.labels)?;
            if let Some(path) = cluster_map {
                let geom = PatchGeometry::new(
                    solver_config.patch_side,
                    solver_config.stride,
                    mask.height(),
                    mask.width(),
                )?;
                let map = metrics::pixel_cluster_map(&result.labels, &geom)?;
                let img = ComplexImage::new(
                    mask.height(),
                    mask.width(),
                    map.iter()
                        .map(|&l| Complex64::new((l + 1) as f64, 0.0))
                        .collect(),
                )?;
                io::write_image(&path, &img)?;
            }
            if let Some(r) = &reference {
                let zf = zero_fill(&meas, &mask)?;
                println!(
                    "zero_fill: {}",
                    format_metrics(metrics::psnr(&zf, r)?, metrics::hfen(&zf, r)?)
                );
                println!(
                    "recon: {}",
                    format_metrics(
                        metrics::psnr(&result.image, r)?,
                        metrics::hfen(&result.image, r)?
                    )
                );
            }
            Ok(())
        }
        Command::Metrics { recon, reference } => {
            let a = read_image(&recon)?;
            let b = read_image(&reference)?;
            println!(
                "{}",
                format_metrics(metrics::psnr(&a, &b)?, metrics::hfen(&a, &b)?)
            );
            Ok(())
        }
        Command::Phantom { height, width, out } => {
            if height == 0 || width == 0 {
                return Err(Error::Config("phantom dimensions must be positive".into()));
            }
            io::write_image(&out, &phantom::shepp_logan(height, width))?;
            Ok(())
        }
    }
}

fn format_metrics(psnr: f64, hfen: f64) -> String {
    let psnr_txt = if psnr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{psnr:.6}")
    };
    format!("psnr_db={psnr_txt} hfen={hfen:.6}")
}

fn prefixed(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{suffix}"))
}

fn read_image(path: &Path) -> Result<ComplexImage, Error> {
    io::read_image(path).map_err(|e| with_path(e, path))
}

fn read_mask(path: &Path) -> Result<bcs_core::SamplingMask, Error> {
    io::read_mask(path).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}
