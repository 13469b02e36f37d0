//! Command-line front end: panoramas, twin pairs, ablations and benchmarks.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use panofuse::harness::{self, AblationGrid, DEFAULT_VIEW_STRIDES};
use panofuse::io::{csv_string, write_csv, write_outputs};
use panofuse::{FusionVariant, Pipeline, RunConfig, RunMode};

#[derive(Parser)]
#[command(
    name = "panofuse",
    version,
    about = "Crop-wise latent fusion for wide panoramas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a panorama and write the latent, an image and CSV reports.
    Panorama(Common),
    /// Generate two overlapping crops and report their overlap mismatch.
    Twin(Common),
    /// One-factor sweeps over tau, lambda, view stride and cross stride.
    Ablate(Common),
    /// Time the pipeline across view strides.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Repetitions per stride; the median run is reported.
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Comma-separated view strides.
        #[arg(long, value_delimiter = ',')]
        strides: Vec<usize>,
    },
    /// Print the effective configuration as JSON.
    Config(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    view_stride: Option<usize>,
    #[arg(long)]
    cross_stride: Option<usize>,
    #[arg(long)]
    interleave: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Baseline,
    Twin,
    FixedReference,
}

impl From<Variant> for FusionVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Baseline => FusionVariant::Baseline,
            Variant::Twin => FusionVariant::Twin,
            Variant::FixedReference => FusionVariant::TwinFixedReference,
        }
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_json(&text)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.lambda {
            cfg.fusion.lambda = v;
        }
        if let Some(v) = self.tau {
            cfg.fusion.tau = Some(v);
        }
        if let Some(v) = self.view_stride {
            cfg.view_stride = v;
        }
        if let Some(v) = self.cross_stride {
            cfg.cross_stride = v;
        }
        if let Some(v) = self.interleave {
            cfg.interleave = v;
        }
        if let Some(v) = self.variant {
            cfg.fusion.variant = v.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn panorama(cfg: RunConfig) -> Result<()> {
    let out = Pipeline::new(cfg.clone())?.generate_panorama()?;
    let files = write_outputs(
        &cfg.out_dir,
        "panorama",
        &out.latent,
        Some(&out.seam),
        Some(&out.timing),
    )?;
    println!("latent   {}", files.raw.display());
    println!("image    {}", files.image.display());
    println!(
        "seam     ratio {:.6} (boundary {:.6}, background {:.6})",
        out.seam.seam_ratio, out.seam.boundary_discontinuity, out.seam.background_discontinuity
    );
    println!(
        "timing   {:.3}s, {} denoiser calls, {:.2} crops/step",
        out.timing.total_seconds,
        out.timing.denoiser_calls,
        out.timing.mean_crops_per_step()
    );
    Ok(())
}

fn twin(mut cfg: RunConfig) -> Result<()> {
    cfg.mode = RunMode::TwinPair;
    let out = Pipeline::new(cfg.clone())?.generate_twin_pair()?;
    let dir = &cfg.out_dir;
    write_outputs(dir, "twin_first", &out.first, None, None)?;
    write_outputs(dir, "twin_second_raw", &out.second_raw, None, None)?;
    write_outputs(dir, "twin_second_fused", &out.second_fused, None, None)?;
    let path = dir.join("twin_mismatch.csv");
    write_csv(&path, out.mismatch_rows())?;
    println!("overlap  {} columns", out.overlap);
    println!(
        "mismatch raw {:.6}  fused {:.6}",
        out.final_mismatch_raw(),
        out.final_mismatch_fused()
    );
    println!("report   {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Panorama(c) => panorama(c.resolve()?),
        Command::Twin(c) => twin(c.resolve()?),
        Command::Ablate(c) => {
            let cfg = c.resolve()?;
            let rows = harness::ablate(&cfg, &AblationGrid::defaults(&cfg))?;
            ensure_dir(&cfg.out_dir)?;
            write_csv(&cfg.out_dir.join("ablation.csv"), &rows)?;
            print!("{}", csv_string(&rows)?);
            Ok(())
        }
        Command::Bench {
            common,
            reps,
            strides,
        } => {
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let cfg = common.resolve()?;
            let strides = if strides.is_empty() {
                DEFAULT_VIEW_STRIDES
                    .iter()
                    .copied()
                    .filter(|&s| s <= cfg.crop_width)
                    .collect()
            } else {
                strides
            };
            let rows = harness::bench(&cfg, &strides, reps)?;
            ensure_dir(&cfg.out_dir)?;
            write_csv(&cfg.out_dir.join("bench.csv"), &rows)?;
            print!("{}", csv_string(&rows)?);
            Ok(())
        }
        Command::Config(c) => {
            println!("{}", c.resolve()?.to_json()?);
            Ok(())
        }
    }
}
