use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kinverify::bsif::{fallback_banks, load_bank_dir, FilterBank};
use kinverify::imaging::MsrConfig;
use kinverify::pipeline::{
    bundled_reference, compare_report, extract_to_dir, load_manifest, parse_reference, parse_shape, render_table,
    run_experiment, write_outputs, BsifSource, Channel, DiskFeatures, EvalReport, ExperimentConfig, ExtractSettings,
    ImageExtractor, OutputSelection, PipelineError, TrainScores,
};
use kinverify::scoring::{
    lr_fit_with, lr_fuse, read_score_csv, roc_curve, roc_svg, write_score_csv, LrConfig, RocPoint, RocReport,
    ScoreRecord, ScoreSet,
};
use kinverify::subspace::SolverPath;
use kinverify::synth::{planted_dataset, write_dataset, write_faces, FaceConfig, PlantedConfig};

#[derive(Parser)]
#[command(
    name = "kinverify",
    version,
    about = "Kinship verification from face images and precomputed features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract multi-scale BSIF features from the manifest's images.
    Extract(ExtractArgs),
    /// Fit and save per-fold subspace, whitening and fusion models.
    Train(RunArgs),
    /// Run the full k-fold evaluation and write a report.
    Eval(RunArgs),
    /// Fit score fusion on a training score file and apply it to a test file.
    Fuse(FuseArgs),
    /// Print the accuracy table of a report and write ROC plots.
    Report(ReportArgs),
    /// Print a report next to the bundled (or a given) reference table.
    Compare(CompareArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BsifArgs {
    /// Directory with bank_3.txt … bank_13.txt.
    #[arg(long)]
    bsif_banks: Option<PathBuf>,
    /// Seed for generated filter banks, used when no bank directory is given.
    #[arg(long, default_value_t = 1)]
    bsif_fallback_seed: u64,
    /// Surround scales for MSR, comma separated, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = vec![15.0, 80.0, 250.0])]
    msr_scales: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    msr_eps: f64,
    /// Skip MSR enhancement.
    #[arg(long)]
    no_msr: bool,
    /// Resize images to WxH before enhancement.
    #[arg(long)]
    resize: Option<String>,
    /// Apply MSR to the original image, then resize.
    #[arg(long)]
    msr_before_resize: bool,
    /// Root directory for cached BSIF features.
    #[arg(long, env = "KINVERIFY_CACHE")]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    check_files: bool,
    #[command(flatten)]
    bsif: BsifArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Verify that every manifest image exists before running.
    #[arg(long)]
    check_files: bool,
    /// Feature channels to use, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["bsif".to_string(), "deep".to_string()])]
    channels: Vec<String>,
    /// Precomputed BSIF features (<id>.feat); extracted from images otherwise.
    #[arg(long)]
    bsif_dir: Option<PathBuf>,
    /// Expected BSIF matrix shape, RxC or "any".
    #[arg(long, default_value = "6x4096")]
    bsif_shape: String,
    /// Keep only these BSIF window sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    bsif_windows: Option<Vec<usize>>,
    /// Precomputed deep features (<id>.feat).
    #[arg(long)]
    deep_dir: Option<PathBuf>,
    /// Expected deep matrix shape, RxC or "any".
    #[arg(long, default_value = "2x4096")]
    deep_shape: String,
    #[command(flatten)]
    bsif: BsifArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    txqda_d1: usize,
    #[arg(long, default_value_t = 32)]
    txqda_d2: usize,
    #[arg(long, default_value_t = 5)]
    txqda_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    txqda_shrinkage: f64,
    /// Generalized eigenproblem path: auto or dense.
    #[arg(long, default_value = "auto")]
    solver: String,
    #[arg(long)]
    no_wccn: bool,
    #[arg(long, default_value_t = 1e-3)]
    wccn_shrinkage: f64,
    #[arg(long)]
    no_fusion: bool,
    /// One model over all relations.
    #[arg(long)]
    shared_model: bool,
    /// Skip per-row unit normalization of features.
    #[arg(long)]
    no_row_norm: bool,
    /// Fit fusion and thresholds on in-sample training scores.
    #[arg(long)]
    in_sample_train_scores: bool,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Score columns to fuse; all columns except "fused" by default.
    #[arg(long, value_delimiter = ',')]
    matchers: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    l2: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    /// Directory for ROC SVG files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    report: PathBuf,
    /// Reference CSV; the bundled table when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Dataset name in the reference table (cornell, ub, ts).
    #[arg(long)]
    dataset: String,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    families: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write illuminated face images instead of feature files.
    #[arg(long)]
    images: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_size(text: &str) -> Result<(usize, usize), PipelineError> {
    parse_shape(text)
        .ok()
        .flatten()
        .ok_or_else(|| PipelineError::Config(format!("expected a size like 224x224, got {text:?}")))
}

fn extractor(args: &BsifArgs) -> Result<ImageExtractor, PipelineError> {
    let (banks, desc): (Vec<FilterBank>, String) = match &args.bsif_banks {
        Some(dir) => (
            load_bank_dir(dir).map_err(|e| PipelineError::Data(e.to_string()))?,
            format!("dir:{}", dir.display()),
        ),
        None => (
            fallback_banks(args.bsif_fallback_seed),
            format!("fallback:{}", args.bsif_fallback_seed),
        ),
    };
    let msr = if args.no_msr {
        None
    } else {
        let cfg = MsrConfig::equal_weights(args.msr_scales.clone(), args.msr_eps);
        cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Some(cfg)
    };
    let resize = args.resize.as_deref().map(parse_size).transpose()?;
    let settings = ExtractSettings {
        msr,
        resize,
        msr_before_resize: args.msr_before_resize,
        banks: desc,
    };
    Ok(ImageExtractor::new(banks, settings, args.cache_dir.clone()))
}

fn experiment_config(args: &RunArgs) -> Result<ExperimentConfig, PipelineError> {
    let channels = args
        .channels
        .iter()
        .map(|c| c.parse::<Channel>().map_err(PipelineError::Config))
        .collect::<Result<Vec<_>, _>>()?;
    let solver = match args.solver.as_str() {
        "auto" => SolverPath::Auto,
        "dense" => SolverPath::Dense,
        other => return Err(PipelineError::Config(format!("unknown solver {other:?} (auto, dense)"))),
    };
    let cfg = ExperimentConfig {
        folds: args.folds,
        seed: args.seed,
        channels,
        txqda_d1: args.txqda_d1,
        txqda_d2: args.txqda_d2,
        txqda_iterations: args.txqda_iters,
        txqda_shrinkage: args.txqda_shrinkage,
        solver,
        wccn: !args.no_wccn,
        wccn_shrinkage: args.wccn_shrinkage,
        fusion: !args.no_fusion,
        lr: LrConfig::default(),
        normalize_rows: !args.no_row_norm,
        raw_baselines: true,
        shared_model: args.shared_model,
        bsif_windows: args.bsif_windows.clone(),
        train_scores: if args.in_sample_train_scores {
            TrainScores::InSample
        } else {
            TrainScores::CrossFit
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, select: OutputSelection) -> Result<(), PipelineError> {
    let cfg = experiment_config(args)?;
    let manifest = load_manifest(&args.manifest, args.check_files)?;
    let shape = |s: &str| parse_shape(s).map_err(PipelineError::Config);
    let bsif = match (&args.bsif_dir, cfg.channels.contains(&Channel::Bsif)) {
        (_, false) => None,
        (Some(dir), true) => Some(BsifSource::Dir(dir.clone())),
        (None, true) => Some(BsifSource::Extract(extractor(&args.bsif)?)),
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("manifest".to_string(), args.manifest.display().to_string());
    match &bsif {
        Some(BsifSource::Dir(d)) => {
            inputs.insert("bsif".into(), format!("dir:{}", d.display()));
        }
        Some(BsifSource::Extract(x)) => {
            inputs.insert(
                "bsif".into(),
                serde_json::to_string(x.settings()).expect("settings serialize"),
            );
        }
        None => {}
    }
    if let Some(d) = &args.deep_dir {
        inputs.insert("deep".into(), format!("dir:{}", d.display()));
    }
    let provider = DiskFeatures {
        bsif,
        deep_dir: args.deep_dir.clone(),
        bsif_shape: shape(&args.bsif_shape)?,
        deep_shape: shape(&args.deep_shape)?,
        base_dir: manifest.base_dir().to_path_buf(),
    };
    let mut outcome = run_experiment(&manifest, &provider, &cfg)?;
    outcome.report.provenance.inputs = inputs;
    let written = write_outputs(&mut outcome, &args.out, select)?;
    if select.report {
        print!("{}", render_table(&outcome.report));
    }
    eprintln!("wrote {} files under {}", written.len(), args.out.display());
    Ok(())
}

fn fuse(args: &FuseArgs) -> Result<(), PipelineError> {
    let train = read_score_csv(&args.train)?;
    let test = read_score_csv(&args.test)?;
    let names: Vec<String> = match &args.matchers {
        Some(m) => m.clone(),
        None => train.matchers().iter().filter(|m| *m != "fused").cloned().collect(),
    };
    let select = |set: &ScoreSet, path: &Path| -> Result<ScoreSet, PipelineError> {
        let idx = names
            .iter()
            .map(|n| {
                set.matchers()
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| PipelineError::Data(format!("{} has no score column {n:?}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let records = set
            .records()
            .iter()
            .map(|r| ScoreRecord {
                pair_id: r.pair_id.clone(),
                label: r.label,
                scores: idx.iter().map(|&i| r.scores[i]).collect(),
            })
            .collect();
        Ok(ScoreSet::new(names.clone(), records)?)
    };
    let train = select(&train, &args.train)?;
    let test = select(&test, &args.test)?;
    let cfg = LrConfig {
        l2: args.l2,
        ..LrConfig::default()
    };
    let model = lr_fit_with(&train, &cfg)?;
    let fused = |set: &ScoreSet| -> Result<Vec<f64>, PipelineError> {
        set.records().iter().map(|r| Ok(lr_fuse(&model, &r.scores)?)).collect()
    };
    let train_fused = fused(&train)?;
    let threshold = roc_curve(&train_fused, &train.labels())?.threshold;
    let test_fused = fused(&test)?;
    let out_set = ScoreSet::new(
        vec!["fused".into()],
        test.records()
            .iter()
            .zip(&test_fused)
            .map(|(r, &s)| ScoreRecord {
                pair_id: r.pair_id.clone(),
                label: r.label,
                scores: vec![s],
            })
            .collect(),
    )?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_score_csv(args.out.join("fused_test.csv"), &out_set)?;
    let model_json = serde_json::json!({ "matchers": names, "lr": model, "threshold": threshold });
    let path = args.out.join("fusion.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&model_json).expect("model serializes"),
    )
    .map_err(io_err(&path))?;
    if test.has_both_labels() {
        let labels = test.labels();
        let roc = roc_curve(&test_fused, &labels)?;
        let acc = kinverify::scoring::accuracy_at(&test_fused, &labels, threshold)?;
        println!(
            "test accuracy {:.2}%  AUC {:.4}  EER {:.4}",
            100.0 * acc,
            roc.auc,
            roc.eer
        );
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    EvalReport::from_json(&text)
}

fn report(args: &ReportArgs) -> Result<(), PipelineError> {
    let report = read_report(&args.report)?;
    print!("{}", render_table(&report));
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        for rel in &report.relations {
            let rocs: Vec<(String, RocReport)> = rel
                .methods
                .iter()
                .map(|m| {
                    let points = m
                        .pooled
                        .fpr
                        .iter()
                        .zip(&m.pooled.tpr)
                        .map(|(&fpr, &tpr)| RocPoint {
                            threshold: f64::NAN,
                            fpr,
                            tpr,
                        })
                        .collect();
                    let roc = RocReport {
                        points,
                        auc: m.pooled.auc,
                        eer: m.pooled.eer,
                        accuracy: m.mean_accuracy,
                        threshold: f64::NAN,
                    };
                    (m.method.clone(), roc)
                })
                .collect();
            let curves: Vec<(String, &RocReport)> = rocs.iter().map(|(n, r)| (n.clone(), r)).collect();
            let path = out.join(format!("{}.svg", rel.relation));
            std::fs::write(&path, roc_svg(&format!("ROC: {}", rel.relation), &curves)).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<(), PipelineError> {
    let report = read_report(&args.report)?;
    let reference = match &args.reference {
        Some(p) => parse_reference(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => bundled_reference(),
    };
    print!("{}", compare_report(&report, &reference, &args.dataset));
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), PipelineError> {
    if args.images {
        let cfg = FaceConfig {
            families: args.families,
            seed: args.seed,
            ..FaceConfig::default()
        };
        write_faces(&cfg, &args.out)?;
    } else {
        let cfg = PlantedConfig {
            families: args.families,
            seed: args.seed,
            ..PlantedConfig::default()
        };
        write_dataset(&planted_dataset(&cfg), &args.out)?;
    }
    eprintln!("wrote synthetic dataset to {}", args.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Extract(a) => {
            let manifest = load_manifest(&a.manifest, a.check_files)?;
            let n = extract_to_dir(&manifest, &extractor(&a.bsif)?, &a.out)?;
            eprintln!("extracted {n} samples to {}", a.out.display());
            Ok(())
        }
        Command::Train(a) => run(
            &a,
            OutputSelection {
                report: false,
                scores: true,
                models: true,
            },
        ),
        Command::Eval(a) => run(&a, OutputSelection::default()),
        Command::Fuse(a) => fuse(&a),
        Command::Report(a) => report(&a),
        Command::Compare(a) => compare(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
