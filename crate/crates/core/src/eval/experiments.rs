//! Ablation, baseline comparison and training-fraction sweep.

use super::metrics::{confusion_metrics, regression_metrics, ConfusionCounts};
use super::report::EvalReport;
use super::rnn::{RnnBaseline, RnnConfig};
use super::homography::phys_bias_each;
use crate::error::{Error, Result};
use crate::geom::Homography;
use crate::model::{
    bce_loss, classify_batch, hard_label, predict_batch, relabel_with_classifier, split_indices, train,
    train_model, Model, ModelConfig, ModelKind, Network, SideStream, TrainConfig, TrajectorySample,
};

/// Model and optimiser settings for every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub classifier: ModelConfig,
    pub predictor: ModelConfig,
    pub cls_train: TrainConfig,
    pub pred_train: TrainConfig,
    pub rnn: RnnConfig,
}

impl ExperimentConfig {
    /// Reference widths and schedules.
    pub fn table() -> Self {
        ExperimentConfig {
            classifier: ModelConfig::classifier(),
            predictor: ModelConfig::predictor(),
            cls_train: TrainConfig::classifier(),
            pred_train: TrainConfig::predictor(),
            rnn: RnnConfig::default(),
        }
    }

    /// Reduced widths and a shorter, faster schedule for one CPU core.
    pub fn desk() -> Self {
        let schedule = |base: TrainConfig| TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            ..base
        };
        ExperimentConfig {
            classifier: ModelConfig::desk(ModelKind::Classifier),
            predictor: ModelConfig::desk(ModelKind::Predictor),
            cls_train: schedule(TrainConfig::classifier()),
            pred_train: schedule(TrainConfig::predictor()),
            rnn: RnnConfig::default(),
        }
    }

    /// Same settings with every initialisation and shuffle seeded by `seed`.
    pub fn seeded(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.cls_train.seed = seed;
        c.pred_train.seed = seed;
        c
    }
}

/// Pixel-to-metre maps: one shared by all samples or one per sample.
#[derive(Debug, Clone, Copy)]
pub enum ToPhysical<'a> {
    None,
    Shared(&'a Homography),
    PerSample(&'a [Homography]),
}

/// A 4:1 split of a dataset by `seed`, with the original indices.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<TrajectorySample>,
    pub test: Vec<TrajectorySample>,
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

impl Split {
    pub fn new(samples: &[TrajectorySample], seed: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Data(format!("need at least 2 samples to split, got {}", samples.len())));
        }
        let (train_index, test_index) = split_indices(samples.len(), seed);
        let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
        Ok(Split {
            train: pick(&train_index),
            test: pick(&test_index),
            train_index,
            test_index,
        })
    }

    /// Pixel-to-metre maps for the test samples.
    fn test_maps(&self, phys: ToPhysical<'_>) -> Result<Option<Vec<Homography>>> {
        Ok(match phys {
            ToPhysical::None => None,
            ToPhysical::Shared(h) => Some(vec![*h]),
            ToPhysical::PerSample(hs) => {
                if hs.len() != self.train_index.len() + self.test_index.len() {
                    return Err(Error::Contract(format!(
                        "{} homographies for {} samples",
                        hs.len(),
                        self.train_index.len() + self.test_index.len()
                    )));
                }
                Some(self.test_index.iter().map(|&i| hs[i]).collect())
            }
        })
    }
}

fn labels_of(samples: &[TrajectorySample]) -> Result<Vec<u8>> {
    samples.iter().map(TrajectorySample::label).collect()
}

/// Accuracy, precision, recall and BCE of `net` on `test`.
pub fn evaluate_classifier<M: Model>(variant: &str, net: &M, test: &[TrajectorySample]) -> Result<EvalReport> {
    let truth = labels_of(test)?;
    let p = classify_batch(net, test)?;
    let hard: Vec<u8> = p.iter().map(|&v| hard_label(v)).collect();
    let m = confusion_metrics(&ConfusionCounts::tally(&hard, &truth)?)?;
    let q: Vec<f64> = truth.iter().map(|&l| f64::from(l)).collect();
    Ok(EvalReport {
        accuracy: Some(m.accuracy),
        precision: m.precision,
        recall: m.recall,
        bce: Some(bce_loss(&p, &q)?),
        ..EvalReport::new(variant)
    })
}

/// MSE, RMSE, Bias and (when maps are given) PhyBias of `net` on `test`,
/// feeding it `labels`.
pub fn evaluate_predictor<M: Model>(
    variant: &str,
    net: &M,
    test: &[TrajectorySample],
    labels: &[Option<u8>],
    to_physical: Option<&[Homography]>,
) -> Result<EvalReport> {
    let preds = predict_batch(net, test, labels)?;
    let truth: Vec<_> = test.iter().map(|s| s.landing).collect();
    let m = regression_metrics(&preds, &truth)?;
    let phybias_cm = to_physical.map(|hs| phys_bias_each(&preds, &truth, hs)).transpose()?;
    Ok(EvalReport {
        mse: Some(m.mse),
        rmse: Some(m.rmse),
        bias_px: Some(m.bias_px),
        phybias_cm,
        residuals: preds.into_iter().zip(truth).collect(),
        ..EvalReport::new(variant)
    })
}

fn gt_labels(samples: &[TrajectorySample]) -> Vec<Option<u8>> {
    samples.iter().map(|s| s.label).collect()
}

/// Trained networks kept from an ablation run for reuse.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub reports: Vec<EvalReport>,
    /// The prior-fed classifier (CMP).
    pub classifier: Network,
    /// The label-fed predictor (PMC), trained on ground-truth labels.
    pub predictor: Network,
}

/// CMN and CMP classifiers, then PMN, PMP and PMC predictors, all on one
/// split with identical seeds. Null variants see zero tokens in place of
/// the side information.
pub fn run_ablation(
    samples: &[TrajectorySample],
    phys: ToPhysical<'_>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<AblationRun> {
    let cfg = cfg.seeded(seed);
    let split = Split::new(samples, seed)?;
    let maps = split.test_maps(phys)?;
    let mut reports = Vec::with_capacity(5);

    let cmn = cfg.classifier.clone().with_side(SideStream::Blank(2));
    let net = train(cmn, &split.train, &split.test, &cfg.cls_train)?.network;
    reports.push(evaluate_classifier("CMN", &net, &split.test)?);
    let cmp = cfg.classifier.clone().with_side(SideStream::Prior);
    let classifier = train(cmp, &split.train, &split.test, &cfg.cls_train)?.network;
    reports.push(evaluate_classifier("CMP", &classifier, &split.test)?);

    let labels = gt_labels(&split.test);
    let mut predictor = None;
    for (name, side) in [
        ("PMN", SideStream::Blank(1)),
        ("PMP", SideStream::Prior),
        ("PMC", SideStream::Label),
    ] {
        let config = cfg.predictor.clone().with_side(side);
        let net = train(config, &split.train, &split.test, &cfg.pred_train)?.network;
        reports.push(evaluate_predictor(name, &net, &split.test, &labels, maps.as_deref())?);
        predictor = Some(net);
    }
    Ok(AblationRun {
        reports,
        classifier,
        predictor: predictor.expect("three predictor variants"),
    })
}

/// Networks reused by [`run_compare`] instead of training new ones.
#[derive(Debug, Clone, Copy)]
pub struct Pretrained<'a> {
    pub classifier: &'a Network,
    pub predictor: &'a Network,
}

/// The cascade (classifier labels into the label-fed predictor) against
/// the vanilla recurrent baseline, same split and optimiser.
pub fn run_compare(
    samples: &[TrajectorySample],
    phys: ToPhysical<'_>,
    cfg: &ExperimentConfig,
    seed: u64,
    pretrained: Option<Pretrained<'_>>,
) -> Result<Vec<EvalReport>> {
    let cfg = cfg.seeded(seed);
    let split = Split::new(samples, seed)?;
    let maps = split.test_maps(phys)?;
    let trained;
    let (cls, pred) = match pretrained {
        Some(p) => (p.classifier, p.predictor),
        None => {
            let c = train(cfg.classifier.clone().with_side(SideStream::Prior), &split.train, &split.test, &cfg.cls_train)?;
            let p = train(cfg.predictor.clone().with_side(SideStream::Label), &split.train, &split.test, &cfg.pred_train)?;
            trained = (c.network, p.network);
            (&trained.0, &trained.1)
        }
    };
    let cascaded = relabel_with_classifier(cls, &split.test)?;
    let labels = gt_labels(&cascaded);
    let pidtc = evaluate_predictor("PIDTC", pred, &split.test, &labels, maps.as_deref())?
        .with_classification(&evaluate_classifier("PIDTC", cls, &split.test)?);

    let rnn = RnnBaseline::new(cfg.rnn, cfg.pred_train.seed)?;
    let rnn = train_model(rnn, &split.train, &split.test, &cfg.pred_train)?.network;
    let none = vec![None; split.test.len()];
    let rnn_report = evaluate_predictor("RNN", &rnn, &split.test, &none, maps.as_deref())?;
    Ok(vec![pidtc, rnn_report])
}

pub const SWEEP_FRACTIONS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Label-fed predictors trained on nested prefixes of the training split
/// holding `fraction × N` samples, each scored on the same held-out 20%.
/// A fraction of 0.8 uses the whole training split.
pub fn run_sweep(
    samples: &[TrajectorySample],
    phys: ToPhysical<'_>,
    cfg: &ExperimentConfig,
    seed: u64,
    fractions: &[f64],
    full: Option<&Network>,
) -> Result<Vec<EvalReport>> {
    let cfg = cfg.seeded(seed);
    let split = Split::new(samples, seed)?;
    let maps = split.test_maps(phys)?;
    let labels = gt_labels(&split.test);
    let mut rows = Vec::with_capacity(fractions.len());
    for &f in fractions {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Parameter(format!("training fraction must lie in (0, 1), got {f}")));
        }
        let n = ((f * samples.len() as f64).round() as usize).min(split.train.len());
        if n < cfg.pred_train.batch_size {
            return Err(Error::Data(format!(
                "fraction {f} leaves {n} training samples, less than one batch of {}",
                cfg.pred_train.batch_size
            )));
        }
        let name = format!("{:.0}%", 100.0 * f);
        let reuse = full.filter(|_| n == split.train.len());
        let report = match reuse {
            Some(net) => evaluate_predictor(&name, net, &split.test, &labels, maps.as_deref())?,
            None => {
                let config = cfg.predictor.clone().with_side(SideStream::Label);
                let net = train(config, &split.train[..n], &split.test, &cfg.pred_train)?.network;
                evaluate_predictor(&name, &net, &split.test, &labels, maps.as_deref())?
            }
        };
        rows.push(report);
    }
    Ok(rows)
}
