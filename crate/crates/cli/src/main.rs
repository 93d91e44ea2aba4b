mod errors;
mod plot;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use logodet_core::augment::{augment_corpus, AugmentSpec};
use logodet_core::dataset::{
    generate_fixture, load_corpus, merge_train_val, read_image, write_image_file, FixtureSpec,
    LoadMode, Partition,
};
use logodet_core::metrics::{f1_csv, F1Point};
use logodet_core::pipeline::{
    check_score_coverage, detect_image, run_corpus, DetectOptions, RunInputs, RunReport,
    DEFAULT_MATCH_IOU, DEFAULT_NMS_IOU, DEFAULT_THRESHOLD,
};
use logodet_core::scoring::{
    read_scores, train_baseline, write_scores, BaselineConfig, BaselineModel, RegionScorer,
    ScoreFile, ScoredRegion,
};
use logodet_core::segmentation::{segment_graph, SegmentationParams};
use logodet_core::selective_search::{
    propose, read_proposals, write_proposals, ColorSpace, ModeTag, ProposalSet, SearchMode,
};
use logodet_core::CorpusIndex;

use errors::Failure;

#[derive(Parser)]
#[command(name = "logodet", version, about = "Logo detection with region proposals")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus in the standard layout.
    Fixture(FixtureArgs),
    /// Segment one image and write a false-colour label map.
    Segment(SegmentArgs),
    /// Generate region proposals as JSON lines.
    Propose(ProposeArgs),
    /// Write a score file for proposals, from the baseline or an existing file.
    Score(ScoreArgs),
    /// Run one image end to end and print its decision as JSON.
    Detect(DetectArgs),
    /// mAP report and F1 curve over a corpus partition.
    Evaluate(EvaluateArgs),
    /// F1 against the no-logo threshold, as CSV and SVG.
    Sweep(SweepArgs),
    /// Copy a corpus and add one augmented variant per training image.
    Augment(AugmentArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus root (classes.txt, trainset.txt, valset.txt, testset.txt).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    partition: Partition,
    /// Require exactly 32 classes.
    #[arg(long)]
    strict: bool,
    /// Train on train plus the validation logo images.
    #[arg(long)]
    merge_val: bool,
}

impl CorpusArgs {
    fn load(&self) -> Result<CorpusIndex, CliError> {
        require_dir(&self.corpus)?;
        let corpus = load_corpus(&self.corpus, load_mode(self.strict))?;
        Ok(if self.merge_val {
            merge_train_val(&corpus)
        } else {
            corpus
        })
    }
}

fn load_mode(strict: bool) -> LoadMode {
    if strict {
        LoadMode::Strict
    } else {
        LoadMode::Fixture
    }
}

#[derive(Args)]
struct ModeArgs {
    #[arg(long, default_value = "fast")]
    mode: ModeTag,
    /// Compute colour features in HSV instead of RGB.
    #[arg(long)]
    hsv: bool,
}

impl ModeArgs {
    fn search_mode(&self) -> SearchMode {
        let mode = SearchMode::preset(self.mode);
        if self.hsv {
            mode.with_color_space(ColorSpace::Hsv)
        } else {
            mode
        }
    }
}

#[derive(Args)]
struct DecisionArgs {
    /// Read region scores from this file instead of running the baseline.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    nms_iou: f64,
    /// Emit a detection for every class of each region.
    #[arg(long)]
    all_classes: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    decision: DecisionArgs,
    /// IoU needed to match a detection to ground truth.
    #[arg(long, default_value_t = DEFAULT_MATCH_IOU)]
    match_iou: f64,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Train and test images per class.
    #[arg(long, default_value_t = 5)]
    per_class: usize,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    val_per_class: usize,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    val_no_logo: usize,
    /// No-logo test images (default: twice --per-class).
    #[arg(long)]
    test_no_logo: Option<usize>,
    /// Image side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Args)]
struct SegmentArgs {
    image: PathBuf,
    /// Output image (.ppm or .png), or a directory for `<stem>.labels.ppm`.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    k: f64,
    #[arg(long, default_value_t = 20)]
    min_size: usize,
    #[arg(long, default_value_t = 0.8)]
    sigma: f64,
}

#[derive(Args)]
struct ProposeArgs {
    /// Images or corpus directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Partition used for corpus inputs.
    #[arg(long, default_value = "test")]
    partition: Partition,
    #[command(flatten)]
    mode: ModeArgs,
    /// Output JSONL file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    mode: ModeArgs,
    /// Score these proposals instead of generating them.
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// Validate and renormalise an existing score file instead of running
    /// the baseline; with --proposals, keep only the listed boxes.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Output JSONL file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    image: PathBuf,
    /// Corpus whose training partition fits the baseline.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    merge_val: bool,
    /// Id used for score-file lookups (default: path relative to the corpus).
    #[arg(long)]
    image_id: Option<String>,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    decision: DecisionArgs,
    /// No-logo threshold on the top detection score.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Output JSON file (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// No-logo threshold used for the reported decisions.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, conflicts_with = "sweep")]
    threshold: f64,
    /// Also plot the F1 curve and report the best thresholds.
    #[arg(long)]
    sweep: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Grid step; the grid runs from 0 to 1 inclusive.
    #[arg(long, default_value_t = 0.01)]
    step: f64,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    strict: bool,
    /// Horizontal flip only.
    #[arg(long)]
    flip_only: bool,
    /// Largest shear angle in degrees.
    #[arg(long, default_value_t = 5.0)]
    shear: f64,
    /// Largest per-channel colour shift as a fraction of 255.
    #[arg(long, default_value_t = 0.03)]
    color_shift: f64,
}

enum CliError {
    Usage(String),
    Data(Failure),
}
use CliError::{Data, Usage};

impl<E: Into<Failure>> From<E> for CliError {
    fn from(e: E) -> Self {
        Data(e.into())
    }
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
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Data(f)) => {
            eprintln!("error: {f}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Fixture(a) => fixture(a, seed),
        Command::Segment(a) => segment(a),
        Command::Propose(a) => propose_cmd(a),
        Command::Score(a) => score(a, seed),
        Command::Detect(a) => detect(a, seed),
        Command::Evaluate(a) => evaluate(a, seed),
        Command::Sweep(a) => sweep(a, seed),
        Command::Augment(a) => augment(a, seed),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Data(Failure::new("MissingInput", format!("{} is not a file", path.display()))))
    }
}

fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Data(Failure::new("MissingInput", format!("{} is not a directory", path.display()))))
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Usage(format!("--{name} {v} must lie in [0, 1]")))
    }
}

fn threshold_grid(step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Usage(format!("--step {step} must lie in (0, 1]")));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Usage(format!("--step {step} must divide 1 evenly")));
    }
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// A file when a path is given, stdout otherwise.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create_file(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Progress lines go to stderr when stdout carries data.
fn report(to_stdout: bool, msg: String) {
    if to_stdout {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
}

fn fixture(a: FixtureArgs, seed: u64) -> Result<(), CliError> {
    if a.classes == 0 || a.size < 8 {
        return Err(Usage("need at least one class and a side of 8 pixels".into()));
    }
    let hi = (a.size / 2).max(2);
    let spec = FixtureSpec {
        classes: a.classes,
        train_per_class: a.train_per_class.unwrap_or(a.per_class),
        val_per_class: a.val_per_class,
        test_per_class: a.test_per_class.unwrap_or(a.per_class),
        val_no_logo: a.val_no_logo,
        test_no_logo: a.test_no_logo.unwrap_or(2 * a.per_class),
        width: a.size,
        height: a.size,
        logo_side: ((hi * 3 / 4).max(1), hi),
        seed,
    };
    let corpus = generate_fixture(&spec, &a.output)?;
    println!(
        "wrote {} classes, {} train / {} val / {} test images to {}",
        corpus.classes.len(),
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len(),
        a.output.display()
    );
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<(), CliError> {
    if a.k.is_nan() || a.k <= 0.0 || a.min_size == 0 || a.sigma.is_nan() || a.sigma < 0.0 {
        return Err(Usage("--k and --min-size must be positive, --sigma non-negative".into()));
    }
    require_file(&a.image)?;
    let out = if a.output.is_dir() || a.output.extension().is_none() {
        let stem = a.image.file_stem().unwrap_or_default().to_string_lossy();
        a.output.join(format!("{stem}.labels.ppm"))
    } else {
        a.output.clone()
    };
    let img = read_image(&a.image)?;
    let labeling = segment_graph(&img, &SegmentationParams::new(a.k, a.min_size, a.sigma));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_image_file(&out, &labeling.render())?;
    println!("{} segments written to {}", labeling.segment_count(), out.display());
    Ok(())
}

fn propose_cmd(a: ProposeArgs) -> Result<(), CliError> {
    let mode = a.mode.search_mode();
    let mut jobs: Vec<(String, PathBuf)> = Vec::new();
    for input in &a.inputs {
        if input.is_dir() {
            let corpus = load_corpus(input, LoadMode::Fixture)?;
            jobs.extend(
                corpus
                    .partition(a.partition)
                    .iter()
                    .map(|ann| (ann.image_id.clone(), corpus.image_path(ann))),
            );
        } else {
            require_file(input)?;
            jobs.push((input.to_string_lossy().into_owned(), input.clone()));
        }
    }
    let sets: Vec<ProposalSet> = jobs
        .par_iter()
        .map(|(id, path)| Ok::<_, Failure>(propose(&read_image(path)?, &mode, id)))
        .collect::<Result<_, _>>()?;
    let mut out = sink(a.output.as_deref())?;
    write_proposals(&mut out, &sets)?;
    out.flush()?;
    let total: usize = sets.iter().map(|s| s.boxes.len()).sum();
    report(
        a.output.is_some(),
        format!("{total} proposals for {} images", sets.len()),
    );
    Ok(())
}

fn baseline(corpus: &CorpusIndex, seed: u64) -> Result<BaselineModel, CliError> {
    let config = BaselineConfig {
        seed,
        ..BaselineConfig::default()
    };
    Ok(train_baseline(corpus, &config)?)
}

fn read_score_file(path: &Path) -> Result<ScoreFile, CliError> {
    require_file(path)?;
    let source = path.to_string_lossy();
    Ok(read_scores(BufReader::new(File::open(path)?), &source)?)
}

fn score(a: ScoreArgs, seed: u64) -> Result<(), CliError> {
    if let Some(p) = &a.proposals {
        require_file(p)?;
    }
    let existing = a.scores.as_deref().map(read_score_file).transpose()?;
    let corpus = a.corpus.load()?;
    let annotations = corpus.partition(a.corpus.partition);
    let given = match &a.proposals {
        Some(path) => Some(read_proposals(BufReader::new(File::open(path)?))?),
        None => None,
    };
    let listed = |id: &str| given.as_ref().and_then(|sets| sets.iter().find(|s| s.image_id == id));

    let scored: Vec<(String, Vec<ScoredRegion>)> = match existing {
        Some(file) => {
            check_score_coverage(&file, annotations)?;
            file.regions
                .into_iter()
                .map(|(id, regions)| {
                    let kept = match (&given, listed(&id)) {
                        (None, _) => regions,
                        (Some(_), None) => Vec::new(),
                        (Some(_), Some(set)) => regions
                            .into_iter()
                            .filter(|r| set.boxes.contains(&r.bbox))
                            .collect(),
                    };
                    (id, kept)
                })
                .collect()
        }
        None => {
            let model = baseline(&corpus, seed)?;
            let mode = a.mode.search_mode();
            annotations
                .par_iter()
                .map(|ann| {
                    let img = corpus.load_image(ann)?;
                    let proposals = match listed(&ann.image_id) {
                        Some(set) => set.clone(),
                        None if given.is_some() => ProposalSet {
                            image_id: ann.image_id.clone(),
                            mode: mode.tag,
                            boxes: Vec::new(),
                        },
                        None => propose(&img, &mode, &ann.image_id),
                    };
                    let regions = model.score(&ann.image_id, Some(&img), &proposals)?;
                    Ok::<_, Failure>((ann.image_id.clone(), regions))
                })
                .collect::<Result<_, _>>()?
        }
    };
    let mut out = sink(a.output.as_deref())?;
    write_scores(
        &mut out,
        scored.iter().map(|(id, r)| (id.as_str(), r.as_slice())),
    )?;
    out.flush()?;
    let total: usize = scored.iter().map(|(_, r)| r.len()).sum();
    report(
        a.output.is_some(),
        format!("{total} scored regions for {} images", scored.len()),
    );
    Ok(())
}

fn detect_options(d: &DecisionArgs, threshold: f64) -> Result<DetectOptions, CliError> {
    check_unit("nms-iou", d.nms_iou)?;
    check_unit("threshold", threshold)?;
    Ok(DetectOptions {
        nms_iou: d.nms_iou,
        threshold,
        all_classes: d.all_classes,
    })
}

fn detect(a: DetectArgs, seed: u64) -> Result<(), CliError> {
    let opts = detect_options(&a.decision, a.threshold)?;
    require_file(&a.image)?;
    require_dir(&a.corpus)?;
    let file = a.decision.scores.as_deref().map(read_score_file).transpose()?;
    let image_id = a.image_id.clone().unwrap_or_else(|| {
        let rel = a
            .image
            .canonicalize()
            .ok()
            .zip(a.corpus.canonicalize().ok())
            .and_then(|(img, root)| img.strip_prefix(root).ok().map(Path::to_path_buf));
        rel.unwrap_or_else(|| a.image.clone())
            .to_string_lossy()
            .into_owned()
    });
    let img = read_image(&a.image)?;
    let mode = a.mode.search_mode();
    let proposals = propose(&img, &mode, &image_id);
    let decision = match &file {
        Some(f) => detect_image(&image_id, Some(&img), &proposals, f, &opts)?,
        None => {
            let mut corpus = load_corpus(&a.corpus, load_mode(a.strict))?;
            if a.merge_val {
                corpus = merge_train_val(&corpus);
            }
            let model = baseline(&corpus, seed)?;
            detect_image(&image_id, Some(&img), &proposals, &model, &opts)?
        }
    };
    let mut out = sink(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &decision)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn execute(a: &RunArgs, seed: u64, threshold: f64, thresholds: &[f64]) -> Result<RunReport, CliError> {
    let opts = detect_options(&a.decision, threshold)?;
    check_unit("match-iou", a.match_iou)?;
    let file = a.decision.scores.as_deref().map(read_score_file).transpose()?;
    let corpus = a.corpus.load()?;
    let partition = a.corpus.partition;
    let mode = a.mode.search_mode();
    let model;
    let scorer: &dyn RegionScorer = match &file {
        Some(f) => {
            check_score_coverage(f, corpus.partition(partition))?;
            f
        }
        None => {
            model = baseline(&corpus, seed)?;
            &model
        }
    };
    let mut inputs = RunInputs::new(&mode, scorer);
    inputs.opts = opts;
    inputs.match_iou = a.match_iou;
    inputs.thresholds = thresholds.to_vec();
    Ok(run_corpus(&corpus, partition, &inputs)?)
}

fn best_thresholds(curve: &[F1Point]) {
    let best = |get: fn(&F1Point) -> f64| {
        curve
            .iter()
            .max_by(|p, q| get(p).total_cmp(&get(q)).then(q.threshold.total_cmp(&p.threshold)))
            .map(|p| (p.threshold, get(p)))
    };
    if let (Some(d), Some(r)) = (best(|p| p.detection.f1), best(|p| p.recognition.f1)) {
        println!("best detection F1 {:.4} at {:.2}", d.1, d.0);
        println!("best recognition F1 {:.4} at {:.2}", r.1, r.0);
    }
}

fn evaluate(a: EvaluateArgs, seed: u64) -> Result<(), CliError> {
    let grid = threshold_grid(0.01)?;
    let mut report = execute(&a.run, seed, a.threshold, &grid)?;
    let dir = &a.run.output;
    fs::create_dir_all(dir)?;
    let csv = dir.join("f1.csv");
    fs::write(&csv, f1_csv(&report.f1_curve))?;
    report.f1_csv_path = Some(csv.to_string_lossy().into_owned());

    let names = load_corpus(&a.run.corpus.corpus, LoadMode::Fixture)?.classes;
    let eval = &report.eval;
    let bars: Vec<Option<f64>> = eval
        .per_class_ap
        .iter()
        .enumerate()
        .map(|(c, &v)| (!eval.empty_classes.contains(&c)).then_some(v))
        .collect();
    fs::write(dir.join("ap.svg"), plot::ap_chart(&names, &bars, eval.map))?;
    let mut out = create_file(&dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.flush()?;

    println!("mAP {:.4}", eval.map);
    if a.sweep {
        fs::write(dir.join("f1.svg"), plot::f1_chart(&report.f1_curve))?;
        best_thresholds(&report.f1_curve);
    } else {
        let logos = report
            .decisions
            .iter()
            .filter(|d| d.predicted_label.is_logo())
            .count();
        let at = report
            .f1_curve
            .iter()
            .find(|p| (p.threshold - a.threshold).abs() < 1e-9);
        match at {
            Some(p) => println!(
                "threshold {:.2}: {logos} logo predictions, detection F1 {:.4}, recognition F1 {:.4}",
                p.threshold, p.detection.f1, p.recognition.f1
            ),
            None => println!("threshold {}: {logos} logo predictions", a.threshold),
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs, seed: u64) -> Result<(), CliError> {
    let grid = threshold_grid(a.step)?;
    let report = execute(&a.run, seed, DEFAULT_THRESHOLD, &grid)?;
    let dir = &a.run.output;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("f1.csv"), f1_csv(&report.f1_curve))?;
    fs::write(dir.join("f1.svg"), plot::f1_chart(&report.f1_curve))?;
    best_thresholds(&report.f1_curve);
    Ok(())
}

fn augment(a: AugmentArgs, seed: u64) -> Result<(), CliError> {
    let spec = if a.flip_only {
        AugmentSpec::flip_only(seed)
    } else {
        AugmentSpec {
            flip: true,
            shear_max_degrees: a.shear,
            color_shift_fraction: a.color_shift,
            seed,
        }
    };
    spec.validate().map_err(Usage)?;
    require_dir(&a.corpus)?;
    let corpus = load_corpus(&a.corpus, load_mode(a.strict))?;
    let out = augment_corpus(&corpus, &spec, &a.output)?;
    println!(
        "{} training images ({} before) in {}",
        out.train.len(),
        corpus.train.len(),
        a.output.display()
    );
    Ok(())
}
