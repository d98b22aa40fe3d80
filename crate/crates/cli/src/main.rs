use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use saliqa::explanation::{aggregate_maps, gradcam_combine, svd_first_component, CamMode, FeatureTensor};
use saliqa::harness::{
    self, load_manifest, run_correlate, run_metrics, run_salmetrics, EvalConfig, Metric,
    MetricReport,
};
use saliqa::masking::{
    self, aopc, masked_file_name, masking_series, Fill, MaskingSpec, PerturbationCurve, Strategy,
    DATASET_MEAN_RGB,
};
use saliqa::saliency::{center_prior, CENTER_PRIOR_SIGMA_FRAC};
use saliqa::subjective::{self, bradley_terry, filter_sessions, read_votes_csv};
use saliqa::{Error, RasterImage, SaliencyMap};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "saliqa", version, about = "Saliency-aware image quality evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full-reference metrics for every record of a manifest.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "psnr,ssim,ms-ssim,ew-psnr,ew-ssim")]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: SALIQA_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = saliqa::quality::DEFAULT_PSNR_CAP_DB)]
        psnr_cap: f64,
    },
    /// NSS/SIM/CC/KLD for predicted maps against ground-truth maps.
    Salmetrics {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        fixations_dir: Option<PathBuf>,
        /// Histogram-match predictions to the ground truth before scoring.
        #[arg(long)]
        map_transform: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Centered Gaussian baseline map.
    CenterPrior {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = CENTER_PRIOR_SIGMA_FRAC)]
        sigma_frac: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class activation map from exported feature and gradient tensors.
    Gradcam {
        #[arg(long, num_args = 1.., required = true)]
        features: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        gradients: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Weighted)]
        mode: ModeArg,
        /// Keep negative values instead of applying ReLU.
        #[arg(long)]
        no_relu: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// First SVD component of a feature tensor as a map.
    SvdMap {
        #[arg(long, num_args = 1.., required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// MoRF/LeRF masked copies of an image.
    Mask {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value_t = FillArg::Black)]
        fill: FillArg,
        /// Fill color for `--fill mean`, as r,g,b in [0,1].
        #[arg(long, value_delimiter = ',', num_args = 3)]
        mean_rgb: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, default_value_t = 101)]
        blur_kernel: usize,
        #[arg(long, default_value_t = 5.0)]
        blur_sigma: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Area over a perturbation curve.
    Aopc {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subjective scores from pairwise votes.
    Aggregate {
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = subjective::DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = subjective::DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// SROCC/PLCC/FracCP of report columns against manifest MOS.
    Correlate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Weighted,
    Elementwise,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Morf,
    Lerf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FillArg {
    Black,
    Mean,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Metrics {
            manifest,
            metrics,
            out,
            threads,
            psnr_cap,
        } => cmd_metrics(&manifest, &metrics, &out, threads, psnr_cap),
        Command::Salmetrics {
            pred_dir,
            gt_dir,
            fixations_dir,
            map_transform,
            out,
        } => {
            let rows = run_salmetrics(&pred_dir, &gt_dir, fixations_dir.as_deref(), map_transform)?;
            write_with(&out, |f| harness::write_saliency_csv(&rows, f))?;
            let failed = rows.iter().filter(|r| r.scores.is_err()).count();
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} map pair(s) failed")));
            }
            Ok(())
        }
        Command::CenterPrior {
            width,
            height,
            sigma_frac,
            out,
        } => {
            let map = center_prior(width, height, sigma_frac)?;
            map.to_image().save_png(&out)?;
            Ok(())
        }
        Command::Gradcam {
            features,
            gradients,
            mode,
            no_relu,
            out,
        } => {
            if features.len() != gradients.len() {
                return Err(Failure::Validation(format!(
                    "{} feature files but {} gradient files",
                    features.len(),
                    gradients.len()
                )));
            }
            let mode = match mode {
                ModeArg::Weighted => CamMode::Weighted,
                ModeArg::Elementwise => CamMode::Elementwise,
            };
            let maps = features
                .iter()
                .zip(&gradients)
                .map(|(f, g)| {
                    gradcam_combine(&FeatureTensor::load(f)?, &FeatureTensor::load(g)?, mode, !no_relu)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            aggregate_maps(&maps)?.to_image().save_png(&out)?;
            Ok(())
        }
        Command::SvdMap { features, out } => {
            let maps = features
                .iter()
                .map(|f| svd_first_component(&FeatureTensor::load(f)?))
                .collect::<Result<Vec<_>, Error>>()?;
            aggregate_maps(&maps)?.to_image().save_png(&out)?;
            Ok(())
        }
        Command::Mask {
            image,
            map,
            strategy,
            fill,
            mean_rgb,
            fractions,
            blur_kernel,
            blur_sigma,
            out_dir,
        } => {
            let fill = match fill {
                FillArg::Black => Fill::Black,
                FillArg::Mean => Fill::DatasetMean(match mean_rgb {
                    Some(v) => [v[0], v[1], v[2]],
                    None => DATASET_MEAN_RGB,
                }),
            };
            let spec = MaskingSpec {
                strategy: match strategy {
                    StrategyArg::Morf => Strategy::MoRF,
                    StrategyArg::Lerf => Strategy::LeRF,
                },
                fill,
                quantiles: fractions.unwrap_or_else(masking::default_quantiles),
                blur_kernel,
                blur_sigma,
            };
            cmd_mask(&image, &map, &spec, &out_dir)
        }
        Command::Aopc { curve, out } => {
            let curve = PerturbationCurve::load_csv(&curve)?;
            let value = aopc(&curve)?;
            let json = serde_json::json!({
                "aopc": value,
                "baseline": curve.baseline,
                "points": curve.scores.len(),
            });
            let text = serde_json::to_string_pretty(&json)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            std::fs::write(&out, text + "\n")
                .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))
        }
        Command::Aggregate {
            votes,
            out,
            tol,
            max_iter,
        } => {
            let votes = read_votes_csv(&votes)?;
            let filtered = filter_sessions(&votes);
            if !filtered.rejected_sessions.is_empty() {
                eprintln!(
                    "rejected {} session(s) failing verification: {}",
                    filtered.rejected_sessions.len(),
                    filtered.rejected_sessions.join(", ")
                );
            }
            let scores = bradley_terry(&filtered.kept, tol, max_iter)?;
            if !scores.converged {
                eprintln!("warning: no convergence after {} iterations", scores.iterations);
            }
            if !scores.flagged.is_empty() {
                eprintln!(
                    "warning: scores held at the bound for {}",
                    scores.flagged.join(", ")
                );
            }
            subjective::write_scores_csv(&out, &scores)?;
            Ok(())
        }
        Command::Correlate {
            report,
            manifest,
            out,
        } => {
            let report = MetricReport::load_csv(&report)?;
            let records = load_manifest(&manifest)?;
            let rows = run_correlate(&report, &records)?;
            write_with(&out, |f| harness::write_correlation_csv(&rows, f))
        }
    }
}

fn write_with(
    path: &Path,
    write: impl FnOnce(std::io::BufWriter<std::fs::File>) -> Result<(), Error>,
) -> CmdResult {
    let file = std::fs::File::create(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    write(std::io::BufWriter::new(file))?;
    Ok(())
}

fn cmd_metrics(
    manifest: &Path,
    metrics: &str,
    out: &Path,
    threads: Option<usize>,
    psnr_cap: f64,
) -> CmdResult {
    let metrics = Metric::parse_list(metrics)?;
    let records = load_manifest(manifest)?;
    let config = EvalConfig {
        psnr_cap_db: psnr_cap,
        threads,
        ..EvalConfig::default()
    };
    let report = run_metrics(&records, &metrics, &config)?;
    report.save_csv(out)?;
    if report.has_errors() {
        return Err(Failure::Runtime(
            "some records failed; see error cells in the report".into(),
        ));
    }
    Ok(())
}

fn cmd_mask(image: &Path, map: &Path, spec: &MaskingSpec, out_dir: &Path) -> CmdResult {
    let img = saliqa::image_core::load_image(image)?;
    let map = SaliencyMap::load(map)?.resized(img.width(), img.height())?;
    let series = masking_series(&img, &map, spec)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", out_dir.display())))?;
    let stem = image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    println!("requested,actual,file");
    for frame in &series {
        let name = masked_file_name(stem, spec.strategy, frame.requested_fraction, spec.fill);
        save(&frame.image, &out_dir.join(&name))?;
        println!(
            "{},{},{}",
            harness::format_value(frame.requested_fraction),
            harness::format_value(frame.actual_fraction),
            name
        );
    }
    Ok(())
}

fn save(img: &RasterImage, path: &Path) -> CmdResult {
    img.save_png(path)?;
    Ok(())
}
