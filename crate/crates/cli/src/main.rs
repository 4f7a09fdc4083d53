//! `pothole`: calibrate, measure, label, split, train and evaluate from the
//! command line.
//!
//! Results go to stdout as `key=value` lines; tables and warnings go to
//! stderr. Exit status is 0 on success, 1 for usage errors and 2 when the
//! inputs cannot be processed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pothole_core::classifier::{self, Model, PredictionSet, TrainConfig};
use pothole_core::dataset::{self, DatasetManifest, SplitSpec, TestSize, IMAGE_EXTENSIONS};
use pothole_core::eval::{self, ConfusionMatrix, MetricsRow, ReportFormat, ReportLayout};
use pothole_core::imgcore::{self, Connectivity, ThresholdMethod};
use pothole_core::rng::DEFAULT_SEED;
use pothole_core::sizing::{
    self, AreaMode, CalibrationInput, CalibrationProfile, ImprintShape, MeasureConfig,
    SizeThresholds, DEFAULT_PAGE_MM, ISO_A4_MM,
};

#[derive(Parser)]
#[command(
    name = "pothole",
    version,
    about = "Pothole area measurement and classification"
)]
struct Cli {
    /// Suppress the tables and warnings written to stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive mm² per pixel from a photo of a reference page.
    Calibrate(CalibrateArgs),
    /// Measure pothole area in an image, or every image in a directory.
    Measure(MeasureArgs),
    /// Build a manifest from a `root/<class>/<image>` tree.
    Manifest(ManifestArgs),
    /// Relabel a manifest by measured size class.
    Autolabel(AutolabelArgs),
    /// Check a manifest for missing files and duplicate paths.
    Validate(ValidateArgs),
    /// Seeded per-class train/test split.
    Split(SplitArgs),
    /// Train the baseline classifier.
    Train(TrainArgs),
    /// Train once per epoch count and recommend the smallest good one.
    Sweep(SweepArgs),
    /// Predict every image of a manifest with a trained model.
    Predict(PredictArgs),
    /// Compare predictions against a truth manifest.
    Evaluate(EvaluateArgs),
    /// Per-class metrics from saved confusion matrices.
    Report(ReportArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Photo of the reference page.
    #[arg(long)]
    image: PathBuf,
    /// Page size in millimetres, as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_page_mm, conflicts_with = "true_a4")]
    page_mm: Option<(f64, f64)>,
    /// Use the ISO A4 size of 210x297 mm instead of the 210x270 default.
    #[arg(long)]
    true_a4: bool,
    /// Camera height the page was shot from, e.g. 2ft.
    #[arg(long)]
    height_label: String,
    /// Where to write the calibration profile (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Fixed grayscale threshold (0-256) instead of Otsu.
    #[arg(long)]
    threshold: Option<i64>,
    /// Radius of the square opening applied to the mask.
    #[arg(long, default_value_t = 1)]
    open_radius: usize,
    /// Count only the largest 8-connected region.
    #[arg(long)]
    largest_region: bool,
    /// Tire imprint shape whose contact area is the Large cutoff:
    /// circular, rectangular, ellipse or actual.
    #[arg(long, conflicts_with = "large_cutoff")]
    shape: Option<ImprintShape>,
    /// Large cutoff in mm² [default: 60000, the circular imprint].
    #[arg(long)]
    large_cutoff: Option<f64>,
    /// Areas below this (mm²) are Normal.
    #[arg(long, default_value_t = SizeThresholds::DEFAULT_MIN_DETECT_MM2)]
    min_detect: f64,
}

#[derive(Args)]
struct MeasureArgs {
    /// Image file, or a directory of images.
    #[arg(long)]
    image: PathBuf,
    /// Calibration profile from `calibrate`.
    #[arg(long)]
    profile: PathBuf,
    /// Capture height of the image; must match the profile when given.
    #[arg(long)]
    height_label: Option<String>,
    /// Write the measured mask as a PGM (single image only).
    #[arg(long)]
    mask_out: Option<PathBuf>,
    #[command(flatten)]
    segment: SegmentArgs,
}

#[derive(Args)]
struct ManifestArgs {
    /// Directory holding one subdirectory per class.
    #[arg(long)]
    root: PathBuf,
    /// Capture height to record for every image.
    #[arg(long)]
    height_label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AutolabelArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory the manifest paths are relative to [default: the manifest's directory].
    #[arg(long)]
    base_dir: Option<PathBuf>,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    segment: SegmentArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Check that images exist under this directory [default: the manifest's directory].
    #[arg(long)]
    base_dir: Option<PathBuf>,
    /// Skip the file existence check.
    #[arg(long, conflicts_with = "base_dir")]
    no_files: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Test images per class.
    #[arg(
        long,
        required_unless_present = "test_fraction",
        conflicts_with = "test_fraction"
    )]
    test_count: Option<usize>,
    /// Fraction of each class sent to test, rounded down.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Shuffle seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Network input width after resizing.
    #[arg(long, default_value_t = TrainConfig::default().input_width)]
    width: usize,
    /// Network input height after resizing.
    #[arg(long, default_value_t = TrainConfig::default().input_height)]
    height: usize,
    /// 1 for grayscale input, 3 for RGB.
    #[arg(long, default_value_t = TrainConfig::default().input_channels)]
    channels: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    /// Seed for weight initialisation and shuffling.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().conv1_filters)]
    conv1_filters: usize,
    #[arg(long, default_value_t = TrainConfig::default().conv2_filters)]
    conv2_filters: usize,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    train_manifest: PathBuf,
    #[arg(long)]
    val_manifest: PathBuf,
    /// Directory the manifest paths are relative to [default: the training manifest's directory].
    #[arg(long)]
    base_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    /// Where to write the trained model (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration training loss as CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Per-epoch validation accuracy as CSV.
    #[arg(long)]
    accuracy_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Epoch counts to try.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    epochs: Vec<usize>,
    /// Write `epochs,val_accuracy` rows as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory the manifest paths are relative to [default: the manifest's directory].
    #[arg(long)]
    base_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Column order of the published binary results table.
    #[arg(long)]
    paper_table3_layout: bool,
}

impl LayoutArgs {
    fn render(&self, rows: &[MetricsRow]) -> Result<String> {
        let format = match self.format {
            FormatArg::Text => ReportFormat::Text,
            FormatArg::Csv => ReportFormat::Csv,
        };
        let layout = if self.paper_table3_layout {
            ReportLayout::PaperTable3
        } else {
            ReportLayout::Standard
        };
        Ok(eval::render_report(rows, format, layout)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Manifest holding the true labels.
    #[arg(long)]
    truth: PathBuf,
    /// Predictions CSV from `predict`.
    #[arg(long)]
    predictions: PathBuf,
    /// Where to write the confusion matrix CSV.
    #[arg(long)]
    matrix_out: PathBuf,
    /// Where to write the per-class metrics.
    #[arg(long)]
    report_out: PathBuf,
    #[command(flatten)]
    layout: LayoutArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Confusion matrix CSV; repeat for several models.
    #[arg(long, required = true)]
    matrix: Vec<PathBuf>,
    /// Report only this class as positive instead of every class in turn.
    #[arg(long)]
    positive: Option<String>,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Measure(a) => measure(a),
        Command::Manifest(a) => manifest(a, log),
        Command::Autolabel(a) => autolabel(a, log),
        Command::Validate(a) => validate(a, log),
        Command::Split(a) => split(a, log),
        Command::Train(a) => train(a, log),
        Command::Sweep(a) => sweep(a, log),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a, log),
        Command::Report(a) => report(a),
    }
}

#[derive(Clone, Copy)]
struct Log {
    quiet: bool,
}

impl Log {
    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", text.as_ref());
        }
    }
}

fn parse_page_mm(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v > 0.0)
            .ok_or_else(|| format!("invalid page dimension {v:?}"))
    };
    Ok((parse(w)?, parse(h)?))
}

fn base_dir_for(base_dir: Option<PathBuf>, manifest: &Path) -> PathBuf {
    base_dir.unwrap_or_else(|| {
        manifest
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let (w, h) = match (a.page_mm, a.true_a4) {
        (Some(size), _) => size,
        (None, true) => ISO_A4_MM,
        (None, false) => DEFAULT_PAGE_MM,
    };
    let img = imgcore::read_image(&a.image)?;
    let pixels = sizing::find_reference_page(&img)?;
    let profile = CalibrationProfile::from_input(&CalibrationInput {
        reference_area_mm2: w * h,
        reference_pixel_count: pixels,
        capture_height_label: a.height_label,
    })?;
    profile.save(&a.out)?;
    println!("reference_pixels={pixels}");
    println!("reference_area_mm2={}", w * h);
    println!("mm2_per_pixel={}", profile.mm2_per_pixel);
    Ok(())
}

fn measure_config(s: &SegmentArgs) -> Result<MeasureConfig> {
    let thresholds = match (s.shape, s.large_cutoff) {
        (_, Some(cutoff)) => SizeThresholds::new(cutoff, s.min_detect)?,
        (Some(shape), None) => SizeThresholds::for_shape(shape, s.min_detect)?,
        (None, None) => {
            SizeThresholds::new(SizeThresholds::DEFAULT_LARGE_CUTOFF_MM2, s.min_detect)?
        }
    };
    Ok(MeasureConfig {
        threshold: s
            .threshold
            .map_or(ThresholdMethod::Otsu, ThresholdMethod::Fixed),
        open_radius: s.open_radius,
        mode: if s.largest_region {
            AreaMode::LargestRegion(Connectivity::Eight)
        } else {
            AreaMode::AllForeground
        },
        thresholds,
    })
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if path.is_file() && is_image {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn measure(a: MeasureArgs) -> Result<()> {
    let scale = CalibrationProfile::load(&a.profile)?.scale()?;
    if let Some(label) = &a.height_label {
        scale.check_height(label)?;
    }
    let config = measure_config(&a.segment)?;

    if !a.image.is_dir() {
        let img = imgcore::read_image(&a.image)?;
        let m = sizing::measure_image(&img, &scale, &config)?;
        if let Some(path) = &a.mask_out {
            imgcore::write_pgm(&m.mask, path)?;
        }
        println!("area_mm2={:.2}", m.area_mm2);
        println!("class={}", m.class);
        return Ok(());
    }

    ensure!(
        a.mask_out.is_none(),
        "--mask-out needs a single image, not a directory"
    );
    let files = image_files(&a.image)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = files.len().div_ceil(workers).max(1);
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .chunks(chunk)
            .map(|paths| {
                let (scale, config) = (&scale, &config);
                scope.spawn(move || {
                    paths
                        .iter()
                        .map(|p| {
                            let img = imgcore::read_image(p)?;
                            sizing::measure_image(&img, scale, config)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("measure worker panicked"))
            .collect()
    });
    for (path, result) in files.iter().zip(results) {
        let m = result.with_context(|| format!("measuring {}", path.display()))?;
        println!("image={}", path.display());
        println!("area_mm2={:.2}", m.area_mm2);
        println!("class={}", m.class);
    }
    Ok(())
}

fn manifest(a: ManifestArgs, log: Log) -> Result<()> {
    let listing = dataset::scan_directory(&a.root)?;
    let (manifest, warnings) = dataset::build_manifest(&listing)?;
    for w in &warnings {
        log.say(format!("warning: {w}"));
    }
    let manifest = match a.height_label {
        Some(label) => {
            let records = manifest
                .records()
                .iter()
                .map(|r| r.clone().with_height(label.clone()))
                .collect();
            DatasetManifest::new(records, manifest.class_names().to_vec())?
        }
        None => manifest,
    };
    manifest.save(&a.out)?;
    print_counts(&manifest);
    Ok(())
}

fn print_counts(manifest: &DatasetManifest) {
    println!("records={}", manifest.len());
    for (class, count) in manifest.class_counts() {
        println!("count.{class}={count}");
    }
}

fn autolabel(a: AutolabelArgs, log: Log) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let base = base_dir_for(a.base_dir, &a.manifest);
    let scale = CalibrationProfile::load(&a.profile)?.scale()?;
    let config = measure_config(&a.segment)?;
    let labelled = dataset::auto_label_manifest(&manifest, &base, &scale, &config)?;
    labelled.save(&a.out)?;
    let changed = manifest
        .records()
        .iter()
        .zip(labelled.records())
        .filter(|(old, new)| old.label != new.label)
        .count();
    log.say(format!("{changed} of {} labels changed", manifest.len()));
    print_counts(&labelled);
    Ok(())
}

fn validate(a: ValidateArgs, log: Log) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let base = (!a.no_files).then(|| base_dir_for(a.base_dir, &a.manifest));
    let report = dataset::validate_manifest(&manifest, base.as_deref());
    for w in &report.warnings {
        log.say(format!("warning: {w}"));
    }
    for p in &report.missing_files {
        log.say(format!("missing: {p}"));
    }
    for p in &report.duplicate_paths {
        log.say(format!("duplicate: {p}"));
    }
    print_counts(&manifest);
    println!("missing_files={}", report.missing_files.len());
    println!("duplicate_paths={}", report.duplicate_paths.len());
    println!("valid={}", report.is_valid());
    if !report.is_valid() {
        bail!("manifest {} is not valid", a.manifest.display());
    }
    Ok(())
}

fn split(a: SplitArgs, log: Log) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let test_size = match (a.test_count, a.test_fraction) {
        (Some(k), _) => TestSize::Count(k),
        (None, Some(f)) => TestSize::Fraction(f),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let (train, test) = dataset::stratified_split(
        &manifest,
        &SplitSpec {
            test_size,
            seed: a.seed,
        },
    )?;
    train.save(&a.train_out)?;
    test.save(&a.test_out)?;
    log.say(format!("{:<16} {:>8} {:>8}", "class", "train", "test"));
    for ((class, n_train), (_, n_test)) in train.class_counts().into_iter().zip(test.class_counts())
    {
        log.say(format!("{class:<16} {n_train:>8} {n_test:>8}"));
    }
    println!("seed={}", a.seed);
    println!("train_records={}", train.len());
    println!("test_records={}", test.len());
    Ok(())
}

struct LoadedData {
    cfg: TrainConfig,
    class_names: Vec<String>,
    train: Vec<classifier::Sample>,
    val: Vec<classifier::Sample>,
}

fn load_data(data: &DataArgs, m: &ModelArgs, epochs: usize) -> Result<LoadedData> {
    let train_manifest = DatasetManifest::load(&data.train_manifest)?;
    let val_manifest = DatasetManifest::load(&data.val_manifest)?;
    let base = base_dir_for(data.base_dir.clone(), &data.train_manifest);
    let class_names = train_manifest.class_names().to_vec();
    let cfg = TrainConfig {
        input_width: m.width,
        input_height: m.height,
        input_channels: m.channels,
        epochs,
        batch_size: m.batch_size,
        learning_rate: m.learning_rate,
        seed: m.seed,
        num_classes: class_names.len(),
        conv1_filters: m.conv1_filters,
        conv2_filters: m.conv2_filters,
    };
    cfg.validate()?;
    let train = classifier::load_samples(&train_manifest, &base, &cfg, &class_names)?;
    let val = classifier::load_samples(&val_manifest, &base, &cfg, &class_names)?;
    Ok(LoadedData {
        cfg,
        class_names,
        train,
        val,
    })
}

fn train(a: TrainArgs, log: Log) -> Result<()> {
    let d = load_data(&a.data, &a.model, a.epochs)?;
    let (model, trace) = classifier::train(&d.train, &d.val, &d.cfg, &d.class_names)?;
    model.save(&a.out)?;
    if let Some(path) = &a.loss_csv {
        let mut w = create(path)?;
        trace.write_loss_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.accuracy_csv {
        let mut w = create(path)?;
        trace.write_accuracy_csv(&mut w)?;
        w.flush()?;
    }
    log.say(format!(
        "{:>6} {:>10} {:>10}",
        "epoch", "mean_loss", "val_acc"
    ));
    for e in &trace.epochs {
        let loss = trace.epoch_mean_loss(e.epoch).unwrap_or(f64::NAN);
        log.say(format!(
            "{:>6} {loss:>10.4} {:>10.4}",
            e.epoch, e.val_accuracy
        ));
    }
    let last = trace.epochs.last().map_or(0.0, |e| e.val_accuracy);
    println!("seed={}", d.cfg.seed);
    println!("iterations={}", trace.iterations.len());
    println!("val_accuracy={last:.4}");
    Ok(())
}

fn sweep(a: SweepArgs, log: Log) -> Result<()> {
    let d = load_data(&a.data, &a.model, 1)?;
    let result = classifier::epoch_sweep(&d.train, &d.val, &d.cfg, &d.class_names, &a.epochs)?;
    log.say(format!("{:>6} {:>10}", "epochs", "val_acc"));
    for (epochs, acc) in &result.rows {
        log.say(format!("{epochs:>6} {acc:>10.4}"));
    }
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        writeln!(w, "epochs,val_accuracy")?;
        for (epochs, acc) in &result.rows {
            writeln!(w, "{epochs},{acc}")?;
        }
        w.flush()?;
    }
    println!("recommended_epochs={}", result.recommended);
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let base = base_dir_for(a.base_dir, &a.manifest);
    let preds = classifier::predict_manifest(&model, &manifest, &base)?;
    preds.save(&a.out)?;
    println!("predictions={}", preds.len());
    Ok(())
}

fn evaluate(a: EvaluateArgs, log: Log) -> Result<()> {
    let truth = DatasetManifest::load(&a.truth)?;
    let preds = PredictionSet::load(&a.predictions, truth.class_names())?;
    let cm = eval::confusion_matrix(&truth, &preds)?;
    cm.save(&a.matrix_out)?;
    let rows = eval::one_vs_rest_report(&cm)?;
    std::fs::write(&a.report_out, a.layout.render(&rows)?)
        .with_context(|| format!("writing {}", a.report_out.display()))?;
    log.say(eval::render_report(&rows, ReportFormat::Text, ReportLayout::Standard)?.trim_end());
    println!("records={}", cm.total());
    println!("accuracy={:.4}", cm.accuracy());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.matrix {
        let cm = ConfusionMatrix::load(path)?;
        let mut these = match &a.positive {
            Some(class) => vec![eval::metrics(
                &eval::binary_counts(&cm, class)?,
                class.clone(),
            )?],
            None => eval::one_vs_rest_report(&cm)?,
        };
        if a.matrix.len() > 1 {
            let stem = path
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            for r in &mut these {
                r.class_name = format!("{stem}:{}", r.class_name);
            }
        }
        rows.extend(these);
    }
    let text = a.layout.render(&rows)?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}
