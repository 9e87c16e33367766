//! `pidtc`: dataset generation, prior extraction, training, evaluation and
//! the experiment tables from one executable.

mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::Manifest;
use pidtc_core::eval::{
    confusion_metrics, evaluate_classifier, evaluate_predictor, phys_bias_each, read_homographies, regression_metrics,
    reports_to_csv, residuals_to_csv, run_ablation, run_compare, run_sweep, write_homographies, ConfusionCounts,
    EvalReport, ExperimentConfig, Split, ToPhysical, SWEEP_FRACTIONS,
};
use pidtc_core::geom::{Homography, Point2};
use pidtc_core::model::{
    bce_loss, classify_batch, config_from_text, config_to_text, hard_label, relabel_with_classifier, train,
    LabelSource, Model, ModelConfig, ModelKind, Network, SideStream, TrainConfig, TrajectorySample,
};
use pidtc_core::numcore::Checkpoint;
use pidtc_core::synth::{
    generate_dataset_threads, read_dataset, record_geometry, write_dataset, GeneratorConfig, FRAME_RATE,
};
use pidtc_core::vision::{extract_priors, GrayImage, VisionParams};

#[derive(Parser)]
#[command(name = "pidtc", version, about = "Landing-point prediction with court priors")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trajectory dataset.
    GenData(GenData),
    /// Find the two sideline corners in a PGM image.
    ExtractPriors(ExtractPriors),
    /// Train the in/out classifier.
    TrainCls(TrainArgs),
    /// Train the landing-point predictor.
    TrainPred(TrainArgs),
    /// Evaluate a classifier and predictor pair.
    Eval(EvalArgs),
    /// Side-information ablation: CMN, CMP, PMN, PMP, PMC.
    Ablate(ExperimentArgs),
    /// Cascade against the recurrent baseline.
    Compare(ExperimentArgs),
    /// Training-set size sweep.
    Sweep(ExperimentArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 350)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    in_ratio: f64,
    /// Trajectory pixel noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = FRAME_RATE)]
    fps: f64,
    /// Take priors from corner extraction on a rendered frame.
    #[arg(long)]
    vision_priors: bool,
}

#[derive(Args)]
struct ExtractPriors {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
    #[arg(long)]
    min_votes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    Gt,
    Cascade,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff: Option<usize>,
    /// Hidden width of the input feature network.
    #[arg(long)]
    fen: Option<usize>,
    /// Hidden width of the output head.
    #[arg(long)]
    fdn: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = LabelArg::Gt)]
    label_source: LabelArg,
    /// Classifier checkpoint providing labels for `--label-source cascade`.
    #[arg(long)]
    cls: Option<PathBuf>,
    /// Side stream: prior, label or blankN.
    #[arg(long)]
    side: Option<String>,
    /// Reduced widths and a 200-epoch, lr 1e-3 schedule.
    #[arg(long)]
    desk: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Classifier checkpoint, or `truth` for ground-truth labels.
    #[arg(long)]
    cls: String,
    /// Predictor checkpoint, or `truth` for ground-truth landings.
    #[arg(long)]
    pred: String,
    /// Court-to-pixel homographies: one line shared, or one per record.
    #[arg(long)]
    homography: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Split seed; the held-out fifth is evaluated.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Evaluate every record instead of the held-out split.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    homography: Option<PathBuf>,
    /// Reduced widths and a 200-epoch, lr 1e-3 schedule.
    #[arg(long)]
    desk: bool,
    /// Epochs for every trained model, overriding the schedule.
    #[arg(long)]
    epochs: Option<usize>,
}

fn threads() -> Result<usize> {
    match std::env::var("PIDTC_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("PIDTC_THREADS={v:?} is not a count"))?;
            if n == 0 {
                bail!("PIDTC_THREADS must be at least 1");
            }
            Ok(n)
        }
        Err(_) => Ok(1),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_samples(path: &Path) -> Result<(Vec<TrajectorySample>, Vec<u64>)> {
    let records = read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(records.into_iter().map(|r| (r.sample, r.seed)).unzip())
}

fn load_network(path: &Path) -> Result<Network> {
    let cfg_path = sidecar(path, ".config");
    let text = std::fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let (config, _) = config_from_text(&text).with_context(|| format!("parsing {}", cfg_path.display()))?;
    let ck = Checkpoint::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Network::from_checkpoint(config, &ck).with_context(|| format!("loading {}", path.display()))
}

/// Pixel-to-metre maps from a court-to-pixel sidecar.
fn load_maps(path: &Path, n: usize) -> Result<Vec<Homography>> {
    let hs = read_homographies(path).with_context(|| format!("reading {}", path.display()))?;
    if hs.len() != 1 && hs.len() != n {
        bail!("{} holds {} homographies for {n} records", path.display(), hs.len());
    }
    hs.iter()
        .map(|h| h.inverse().map_err(anyhow::Error::from))
        .collect()
}

fn gen_data(a: &GenData, threads: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&a.in_ratio) {
        bail!("--in-ratio must lie in [0, 1], got {}", a.in_ratio);
    }
    if !(a.noise >= 0.0) {
        bail!("--noise must be non-negative, got {}", a.noise);
    }
    if !(a.fps > 0.0) {
        bail!("--fps must be positive, got {}", a.fps);
    }
    let cfg = GeneratorConfig {
        count: a.count,
        seed: a.seed,
        in_ratio: a.in_ratio,
        pixel_noise_sd: a.noise,
        frame_rate: a.fps,
        vision_priors: a.vision_priors,
        ..GeneratorConfig::default()
    };
    let records = generate_dataset_threads(&cfg, threads)?;
    write_dataset(&records, &a.out)?;
    let hs = records
        .iter()
        .map(|r| record_geometry(r.seed).map(|g| g.homography))
        .collect::<pidtc_core::Result<Vec<_>>>()?;
    let hpath = sidecar(&a.out, ".homography");
    write_homographies(&hpath, &hs)?;

    let mut m = Manifest::new("gen-data", a.seed, threads);
    m.param("count", a.count)
        .param("in_ratio", a.in_ratio)
        .param("noise", a.noise)
        .param("fps", a.fps)
        .param("vision_priors", a.vision_priors);
    m.output(&a.out)?.output(&hpath)?;
    m.write(&sidecar(&a.out, ".manifest"))?;
    let ins = records.iter().filter(|r| r.sample.label == Some(1)).count();
    println!("wrote {} records ({ins} in) to {}", records.len(), a.out.display());
    Ok(())
}

fn extract(a: &ExtractPriors, threads: usize) -> Result<()> {
    let image = GrayImage::read_pgm(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let mut params = VisionParams::default();
    if let Some(v) = a.low {
        params.low = v;
    }
    if let Some(v) = a.high {
        params.high = v;
    }
    if let Some(v) = a.min_votes {
        params.min_votes = v;
    }
    let pp = extract_priors(&image, &params).context("corner extraction failed")?;
    let line = format!("{} {} {} {}\n", pp.p1.x, pp.p1.y, pp.p2.x, pp.p2.y);
    std::fs::write(&a.out, &line)?;
    let mut m = Manifest::new("extract-priors", 0, threads);
    m.param("low", params.low)
        .param("high", params.high)
        .param("min_votes", params.min_votes);
    m.input(&a.image)?.output(&a.out)?;
    m.write(&sidecar(&a.out, ".manifest"))?;
    print!("{line}");
    Ok(())
}

fn parse_side(s: &str) -> Result<SideStream> {
    SideStream::parse(s).map_err(anyhow::Error::from)
}

/// Effective model and optimiser settings: the reference (or desk) defaults
/// overridden by any flags given.
fn resolve_train(kind: ModelKind, a: &TrainArgs) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = match (kind, a.desk) {
        (_, true) => ModelConfig::desk(kind),
        (ModelKind::Classifier, false) => ModelConfig::classifier(),
        (ModelKind::Predictor, false) => ModelConfig::predictor(),
    };
    let mut tc = match kind {
        ModelKind::Classifier => TrainConfig::classifier(),
        ModelKind::Predictor => TrainConfig::predictor(),
    };
    if a.desk {
        let d = ExperimentConfig::desk();
        tc = match kind {
            ModelKind::Classifier => d.cls_train,
            ModelKind::Predictor => d.pred_train,
        };
    }
    if let Some(v) = a.d_model {
        model.d_model = v;
    }
    if let Some(v) = a.heads {
        model.heads = v;
    }
    if let Some(v) = a.ff {
        model.ff_dim = v;
    }
    if let Some(v) = a.fen {
        model.fen_hidden = v;
    }
    if let Some(v) = a.fdn {
        model.fdn_hidden = v;
    }
    if let Some(s) = &a.side {
        model.side = parse_side(s)?;
    }
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.batch {
        tc.batch_size = v;
    }
    if let Some(v) = a.lr {
        tc.learning_rate = v;
    }
    if let Some(v) = a.dropout {
        tc.dropout = v;
    }
    tc.seed = a.seed;
    tc.label_source = match a.label_source {
        LabelArg::Gt => LabelSource::GroundTruth,
        LabelArg::Cascade => LabelSource::Cascade,
    };
    model.validate()?;
    tc.validate()?;

    Ok((model, tc))
}

fn train_cmd(kind: ModelKind, a: &TrainArgs, threads: usize) -> Result<()> {
    let (model, tc) = resolve_train(kind, a)?;
    let (samples, _) = load_samples(&a.data)?;
    let mut split = Split::new(&samples, a.seed)?;
    let mut m = Manifest::new(if kind == ModelKind::Classifier { "train-cls" } else { "train-pred" }, a.seed, threads);
    m.input(&a.data)?;
    if kind == ModelKind::Predictor && tc.label_source == LabelSource::Cascade {
        let path = a.cls.as_ref().context("--label-source cascade needs --cls CKPT")?;
        let cls = load_network(path)?;
        split.train = relabel_with_classifier(&cls, &split.train)?;
        split.test = relabel_with_classifier(&cls, &split.test)?;
        m.input(path)?;
    }
    let outcome = train(model.clone(), &split.train, &split.test, &tc)?;
    outcome.network.to_checkpoint()?.write(&a.out)?;
    let cfg_path = sidecar(&a.out, ".config");
    std::fs::write(&cfg_path, config_to_text(&model, &tc))?;
    let trace_path = sidecar(&a.out, ".trace.csv");
    std::fs::write(&trace_path, outcome.trace_csv())?;

    for line in config_to_text(&model, &tc).lines() {
        if let Some((k, v)) = line.split_once('=') {
            m.param(k, v);
        }
    }
    m.param("parameters", outcome.network.param_count());
    m.output(&a.out)?.output(&cfg_path)?.output(&trace_path)?;
    m.write(&sidecar(&a.out, ".manifest"))?;
    let best = &outcome.trace[outcome.best_epoch];
    let loss = if best.test.is_nan() { best.train } else { best.test };
    println!("best validation loss {loss} at epoch {}", outcome.best_epoch);
    Ok(())
}

enum Source {
    Truth,
    Net(Network),
}

fn source(arg: &str) -> Result<Source> {
    if arg == "truth" {
        Ok(Source::Truth)
    } else {
        load_network(Path::new(arg)).map(Source::Net)
    }
}

fn eval_cmd(a: &EvalArgs, threads: usize) -> Result<()> {
    let (samples, _) = load_samples(&a.data)?;
    let maps = a.homography.as_ref().map(|p| load_maps(p, samples.len())).transpose()?;
    let (test, index): (Vec<TrajectorySample>, Vec<usize>) = if a.all {
        (samples.clone(), (0..samples.len()).collect())
    } else {
        let split = Split::new(&samples, a.seed)?;
        (split.test, split.test_index)
    };
    let maps = maps.map(|hs| if hs.len() == 1 { hs } else { index.iter().map(|&i| hs[i]).collect() });
    let cls = source(&a.cls)?;
    let pred = source(&a.pred)?;
    if let Source::Net(n) = &cls {
        if n.kind() != ModelKind::Classifier {
            bail!("{} is not a classifier checkpoint", a.cls);
        }
    }
    if let Source::Net(n) = &pred {
        if n.kind() != ModelKind::Predictor {
            bail!("{} is not a predictor checkpoint", a.pred);
        }
    }

    let truth_labels: Vec<u8> = test.iter().map(|s| s.label()).collect::<pidtc_core::Result<_>>()?;
    let class_report = match &cls {
        Source::Net(n) => evaluate_classifier("cascade", n, &test)?,
        Source::Truth => {
            let p: Vec<f64> = truth_labels.iter().map(|&l| f64::from(l)).collect();
            let hard: Vec<u8> = p.iter().map(|&v| hard_label(v)).collect();
            let cm = confusion_metrics(&ConfusionCounts::tally(&hard, &truth_labels)?)?;
            EvalReport {
                accuracy: Some(cm.accuracy),
                precision: cm.precision,
                recall: cm.recall,
                bce: Some(bce_loss(&p, &p)?),
                ..EvalReport::new("cascade")
            }
        }
    };
    let cascade_labels: Vec<Option<u8>> = match &cls {
        Source::Net(n) => classify_batch(n, &test)?.into_iter().map(|p| Some(hard_label(p))).collect(),
        Source::Truth => truth_labels.iter().map(|&l| Some(l)).collect(),
    };
    let gt: Vec<Option<u8>> = truth_labels.iter().map(|&l| Some(l)).collect();
    let regress = |name: &str, labels: &[Option<u8>]| -> Result<EvalReport> {
        match &pred {
            Source::Net(n) => Ok(evaluate_predictor(name, n, &test, labels, maps.as_deref())?),
            Source::Truth => {
                let truth: Vec<Point2> = test.iter().map(|s| s.landing).collect();
                let r = regression_metrics(&truth, &truth)?;
                Ok(EvalReport {
                    mse: Some(r.mse),
                    rmse: Some(r.rmse),
                    bias_px: Some(r.bias_px),
                    phybias_cm: maps.as_deref().map(|hs| phys_bias_each(&truth, &truth, hs)).transpose()?,
                    residuals: truth.iter().map(|&t| (t, t)).collect(),
                    ..EvalReport::new(name)
                })
            }
        }
    };
    let rows = vec![
        regress("cascade", &cascade_labels)?.with_classification(&class_report),
        regress("teacher", &gt)?,
    ];
    for r in &rows {
        if let (Some(mse), Some(rmse)) = (r.mse, r.rmse) {
            if (rmse * rmse - mse).abs() > 1e-9 * mse.max(1.0) {
                bail!("inconsistent report: rmse² ≠ mse");
            }
        }
    }
    std::fs::write(&a.report, reports_to_csv(&rows))?;
    let res_path = sidecar(&a.report, ".residuals.csv");
    std::fs::write(&res_path, residuals_to_csv(&rows))?;

    let mut m = Manifest::new("eval", a.seed, threads);
    m.param("all", a.all).param("cls", &a.cls).param("pred", &a.pred);
    m.input(&a.data)?;
    for arg in [&a.cls, &a.pred] {
        if arg != "truth" {
            m.input(Path::new(arg))?.input(&sidecar(Path::new(arg), ".config"))?;
        }
    }
    if let Some(h) = &a.homography {
        m.input(h)?;
    }
    m.output(&a.report)?.output(&res_path)?;
    m.write(&sidecar(&a.report, ".manifest"))?;
    print!("{}", reports_to_csv(&rows));
    Ok(())
}

fn experiment_cmd(name: &str, a: &ExperimentArgs, threads: usize) -> Result<()> {
    let (samples, _) = load_samples(&a.data)?;
    let maps = a.homography.as_ref().map(|p| load_maps(p, samples.len())).transpose()?;
    let phys = match maps.as_deref() {
        None => ToPhysical::None,
        Some([h]) => ToPhysical::Shared(h),
        Some(hs) => ToPhysical::PerSample(hs),
    };
    let mut cfg = if a.desk { ExperimentConfig::desk() } else { ExperimentConfig::table() };
    if let Some(e) = a.epochs {
        cfg.cls_train.epochs = e;
        cfg.pred_train.epochs = e;
    }
    let rows = match name {
        "ablate" => run_ablation(&samples, phys, &cfg, a.seed)?.reports,
        "compare" => run_compare(&samples, phys, &cfg, a.seed, None)?,
        _ => run_sweep(&samples, phys, &cfg, a.seed, &SWEEP_FRACTIONS, None)?,
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let table = a.out.join(format!("{name}.csv"));
    std::fs::write(&table, reports_to_csv(&rows))?;
    let res = a.out.join(format!("{name}_residuals.csv"));
    std::fs::write(&res, residuals_to_csv(&rows))?;

    let mut m = Manifest::new(name, a.seed, threads);
    m.param("desk", a.desk);
    let c = cfg.seeded(a.seed);
    for (prefix, model, tc) in [("cls", &c.classifier, &c.cls_train), ("pred", &c.predictor, &c.pred_train)] {
        for line in config_to_text(model, tc).lines() {
            if let Some((k, v)) = line.split_once('=') {
                m.param(&format!("{prefix}.{k}"), v);
            }
        }
    }
    m.param("rnn.hidden", c.rnn.hidden).param("rnn.head_hidden", c.rnn.head_hidden);
    m.input(&a.data)?;
    if let Some(h) = &a.homography {
        m.input(h)?;
    }
    m.output(&table)?.output(&res)?;
    m.write(&a.out.join("manifest.txt"))?;
    print!("{}", reports_to_csv(&rows));
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    execute(&Cli::try_parse_from(args)?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let threads = threads()?;
    match &cli.command {
        Command::GenData(a) => gen_data(a, threads),
        Command::ExtractPriors(a) => extract(a, threads),
        Command::TrainCls(a) => train_cmd(ModelKind::Classifier, a, threads),
        Command::TrainPred(a) => train_cmd(ModelKind::Predictor, a, threads),
        Command::Eval(a) => eval_cmd(a, threads),
        Command::Ablate(a) => experiment_cmd("ablate", a, threads),
        Command::Compare(a) => experiment_cmd("compare", a, threads),
        Command::Sweep(a) => experiment_cmd("sweep", a, threads),
    }
}
