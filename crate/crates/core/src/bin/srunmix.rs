//! Command-line front end: block-mean downsampling, scene super-resolution,
//! proxy evaluation, and synthetic scene generation.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on data errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use srunmix::error::Result;
use srunmix::metrics::{evaluate_proxy, ErgasMode};
use srunmix::pipeline::{superresolve_scene, PipelineOptions};
use srunmix::raster::{load_band, load_manifest, save_band, save_manifest, SceneManifest};
use srunmix::synth::{block_mean, generate_scene, SceneKind, SynthSpec};
use srunmix::unmix::ProximityMode;

#[derive(Parser)]
#[command(
    name = "srunmix",
    about = "Super-resolve the low-resolution bands of a multispectral scene \
             using the band-independent sub-pixel geometry of the \
             high-resolution bands",
    version
)]
struct Cli {
    /// Worker threads (defaults to the SRUNMIX_THREADS env var, then to the
    /// number of cores).
    #[arg(long, global = true, env = "SRUNMIX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Block-mean downsample a band file.
    Downsample {
        /// Input band file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Reduction factor.
        #[arg(long, value_parser = ["2", "3", "4", "6"])]
        factor: String,
        /// Output band file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve every low-resolution band of a scene.
    Superres {
        /// Scene manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Degrade a scene one resolution step, restore it, and report Q,
    /// ERGAS and SAM against the originals.
    Evaluate {
        /// Scene manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the JSON and text reports.
        #[arg(long)]
        out_dir: PathBuf,
        /// ERGAS denominator: the method's printed formula (mean) or the
        /// conventional one (mean squared).
        #[arg(long, value_enum, default_value_t = ErgasModeArg::Literal)]
        ergas_mode: ErgasModeArg,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Generate a deterministic synthetic scene with hidden ground truth.
    Synth {
        /// Generator kind.
        #[arg(long, value_enum, default_value_t = SceneKind::Polygons)]
        kind: SceneKind,
        /// High-resolution scene size (square), in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Band counts as high+low, e.g. 4+2.
        #[arg(long, default_value = "4+2")]
        bands: String,
        /// Resolution factor of the low bands.
        #[arg(long, value_parser = ["2", "3", "6"], default_value = "2")]
        factor: String,
        /// Additive Gaussian noise level, in reflectance units.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Flags shared by the superres and evaluate commands.
#[derive(Args)]
struct RunFlags {
    /// Disable one stage of the method (the switches are mutually
    /// exclusive).
    #[arg(long, value_enum)]
    ablate: Option<Ablation>,
    /// Proximity weighting: the printed formula or its complement.
    #[arg(long, value_enum, default_value_t = ProximityArg::Literal)]
    proximity: ProximityArg,
    /// Tile core size, in low-resolution pixels.
    #[arg(long, default_value_t = 128)]
    tile_size: usize,
    /// Tile margin discarded on stitch, in low-resolution pixels.
    #[arg(long, default_value_t = 8)]
    tile_overlap: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ablation {
    /// Apply ratio sharpening directly on upsampled pixel values.
    NoShared,
    /// Skip ratio sharpening.
    NoRatio,
    /// Skip the weight fit (uniform 1/4 weights).
    UniformWeights,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProximityArg {
    Literal,
    Complement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ErgasModeArg {
    Literal,
    Standard,
}

impl RunFlags {
    fn to_options(&self) -> PipelineOptions {
        let mut opts = PipelineOptions {
            tile_size: self.tile_size,
            tile_overlap: self.tile_overlap,
            ..Default::default()
        };
        opts.unmix.proximity = match self.proximity {
            ProximityArg::Literal => ProximityMode::Literal,
            ProximityArg::Complement => ProximityMode::Complement,
        };
        match self.ablate {
            Some(Ablation::NoShared) => opts.unmix.no_shared_values = true,
            Some(Ablation::NoRatio) => opts.unmix.no_ratio_sharpening = true,
            Some(Ablation::UniformWeights) => opts.unmix.uniform_weights = true,
            None => {}
        }
        opts
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let n = n.max(1);
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure {} threads: {}", n, e);
            return ExitCode::from(3);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Downsample { input, factor, out } => {
            let grid = load_band(&input)?;
            let factor: usize = factor.parse().unwrap();
            let down = block_mean(&grid, factor)?;
            save_band(&down, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Superres {
            manifest,
            out_dir,
            run,
        } => {
            let scene = load_manifest(&manifest)?;
            let opts = run.to_options();
            let result = superresolve_scene(&scene, &opts)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| srunmix::Error::io(&out_dir, e))?;
            let mut written: Vec<PathBuf> = Vec::new();
            let outcome = (|| -> Result<()> {
                for band in &result.outputs {
                    let path = out_dir.join(format!("{}_sr.srb", band.band_id));
                    save_band(band, &path)?;
                    written.push(path);
                }
                let summary_path = out_dir.join("run_summary.json");
                std::fs::write(
                    &summary_path,
                    serde_json::to_string_pretty(&result.summary)?,
                )
                .map_err(|e| srunmix::Error::io(&summary_path, e))?;
                written.push(summary_path);
                Ok(())
            })();
            if outcome.is_err() {
                for path in &written {
                    let _ = std::fs::remove_file(path);
                }
                return outcome;
            }
            for w in &result.summary.warnings {
                eprintln!("warning: {}", w);
            }
            println!(
                "wrote {} bands and run_summary.json to {}",
                result.outputs.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Evaluate {
            manifest,
            out_dir,
            ergas_mode,
            run,
        } => {
            let scene = load_manifest(&manifest)?;
            let (high_10m, bands_20m) = split_classes(&scene)?;
            let opts = run.to_options();
            let mode = match ergas_mode {
                ErgasModeArg::Literal => ErgasMode::Literal,
                ErgasModeArg::Standard => ErgasMode::Standard,
            };
            let report = evaluate_proxy(&high_10m, &bands_20m, &opts.solver, &opts.unmix, mode)?;
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| srunmix::Error::io(&out_dir, e))?;
            let json_path = out_dir.join("report.json");
            std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)
                .map_err(|e| srunmix::Error::io(&json_path, e))?;
            let table = report.to_table();
            let table_path = out_dir.join("report.txt");
            std::fs::write(&table_path, &table).map_err(|e| srunmix::Error::io(&table_path, e))?;
            print!("{}", table);
            Ok(())
        }
        Command::Synth {
            kind,
            size,
            bands,
            factor,
            noise,
            seed,
            out_dir,
        } => {
            let (high_n, low_n) = match parse_band_counts(&bands) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {}", e);
                    std::process::exit(2);
                }
            };
            let factor: usize = factor.parse().unwrap();
            if size % factor != 0 {
                // a bad flag combination, not bad data
                eprintln!(
                    "error: size {} is not divisible by factor {}",
                    size, factor
                );
                std::process::exit(2);
            }
            let spec = SynthSpec {
                kind,
                width: size,
                height: size,
                high_bands: high_n,
                low_bands: low_n,
                factor,
                noise,
                seed,
            };
            let sc = generate_scene(&spec)?;
            let base = if factor == 6 { 2 } else { factor };
            let manifest = SceneManifest::new(
                format!("synth-{:?}-{}", kind, seed).to_lowercase(),
                base,
                sc.high,
                sc.low,
            )?;
            let path = save_manifest(&manifest, &out_dir)?;
            for t in &sc.truth {
                save_band(t, out_dir.join(format!("truth_{}.srb", t.band_id)))?;
            }
            println!(
                "wrote {} plus {} hidden truth bands",
                path.display(),
                sc.truth.len()
            );
            Ok(())
        }
    }
}

/// Splits a scene into the full-resolution class and the half-resolution
/// class for the proxy evaluation protocol.
fn split_classes(scene: &SceneManifest) -> Result<(Vec<srunmix::BandGrid>, Vec<srunmix::BandGrid>)> {
    let bands_20m: Vec<srunmix::BandGrid> = scene
        .low_bands
        .iter()
        .filter(|b| scene.low_ratio(b) == 2)
        .cloned()
        .collect();
    if scene.high_bands.is_empty() || bands_20m.is_empty() {
        return Err(srunmix::Error::Manifest(
            "proxy evaluation needs full-resolution bands and half-resolution bands".into(),
        ));
    }
    Ok((scene.high_bands.clone(), bands_20m))
}

fn parse_band_counts(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('+').collect();
    let parse = |p: &str| p.trim().parse::<usize>().ok();
    if let [h, l] = parts.as_slice() {
        if let (Some(h), Some(l)) = (parse(h), parse(l)) {
            if h > 0 && l > 0 {
                return Ok((h, l));
            }
        }
    }
    Err(srunmix::Error::Precondition(format!(
        "band counts must look like 4+2, got {:?}",
        s
    )))
}
