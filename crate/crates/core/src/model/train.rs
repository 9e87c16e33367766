//! Mini-batch Adam training with best-validation checkpoint selection.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    bce_loss, classify_batch, mse_loss, predict_batch, Model, ModelConfig, ModelKind, Network, TrainConfig,
    TrajectorySample, SCALE_X, SCALE_Y,
};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::numcore::{AdamState, Graph, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    /// `NaN` when there is no held-out set.
    pub test: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M = Network> {
    /// Weights from the epoch with the lowest held-out loss (training loss
    /// when there is no held-out set).
    pub network: M,
    /// Row 0 holds the losses of the initial weights.
    pub trace: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl<M> TrainOutcome<M> {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,train_loss,test_loss\n");
    for e in trace {
        let _ = writeln!(s, "{},{:?},{:?}", e.epoch, e.train, e.test);
    }
    s
}

/// Deterministic 4:1 split: indices shuffled with `seed`, first 80% train.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n * 4).div_ceil(5);
    let test = idx.split_off(cut);
    (idx, test)
}

enum Targets {
    Labels(Vec<f64>),
    Points(Vec<Point2>),
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Labels(v) => v.len(),
            Targets::Points(v) => v.len(),
        }
    }
}

fn targets_for(kind: ModelKind, samples: &[TrajectorySample]) -> Result<Targets> {
    Ok(match kind {
        ModelKind::Classifier => Targets::Labels(
            samples
                .iter()
                .map(|s| s.label().map(f64::from))
                .collect::<Result<Vec<_>>>()?,
        ),
        ModelKind::Predictor => Targets::Points(samples.iter().map(|s| s.landing).collect()),
    })
}

fn eval_loss<M: Model>(net: &M, samples: &[TrajectorySample], targets: &Targets) -> Result<f64> {
    match targets {
        Targets::Labels(q) => bce_loss(&classify_batch(net, samples)?, q),
        Targets::Points(t) => {
            let labels: Vec<Option<u8>> = samples.iter().map(|s| s.label).collect();
            mse_loss(&predict_batch(net, samples, &labels)?, t)
        }
    }
}

/// Loss node for one mini-batch: BCE for a classifier, mean squared
/// pixel distance for a predictor.
fn batch_loss(g: &mut Graph, out: Var, targets: &Targets, rows: &[usize]) -> Result<Var> {
    match targets {
        Targets::Labels(q) => {
            let q: Vec<f64> = rows.iter().map(|&i| q[i]).collect();
            g.bce(out, &q)
        }
        Targets::Points(t) => {
            let b = rows.len();
            let scale = g.constant(b, 2, [SCALE_X, SCALE_Y].repeat(b))?;
            let px = g.mul(out, scale)?;
            let truth = g.constant(b, 2, rows.iter().flat_map(|&i| [t[i].x, t[i].y]).collect())?;
            let d = g.sub(px, truth)?;
            let sq = g.square(d);
            let s = g.sum(sq);
            Ok(g.scale(s, 1.0 / b as f64))
        }
    }
}

/// Trains a fresh network for `config` on `train`, tracking the loss on
/// `test` after every epoch. Predictor labels are taken from the samples.
pub fn train(
    config: ModelConfig,
    train: &[TrajectorySample],
    test: &[TrajectorySample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_model(Network::new(config, cfg.seed)?, train, test, cfg)
}

/// Adam on mini-batches of `cfg.batch_size` in a seeded shuffled order,
/// starting from `net`. Keeps the weights with the lowest held-out loss
/// (training loss when `test` is empty).
pub fn train_model<M: Model>(
    mut net: M,
    train: &[TrajectorySample],
    test: &[TrajectorySample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let kind = net.kind();
    let train_targets = targets_for(kind, train)?;
    let test_targets = targets_for(kind, test)?;
    let inputs: Vec<Vec<f64>> = train
        .iter()
        .map(|s| net.encode(s, s.label))
        .collect::<Result<_>>()?;
    let width = net.input_width();

    let held_out = |net: &M| -> Result<f64> {
        if test_targets.len() == 0 {
            Ok(f64::NAN)
        } else {
            eval_loss(net, test, &test_targets)
        }
    };
    let mut trace = vec![EpochLoss {
        epoch: 0,
        train: eval_loss(&net, train, &train_targets)?,
        test: held_out(&net)?,
    }];
    let mut best = (f64::INFINITY, 0usize, net.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_7EA1);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let p = net.params().leaves(&mut g, true)?;
            let data: Vec<f64> = rows.iter().flat_map(|&i| inputs[i].iter().copied()).collect();
            let x = g.constant(rows.len(), width, data)?;
            let out = net.forward(&mut g, &p, x, rows.len(), cfg.dropout, &mut rng, true)?;
            let loss = batch_loss(&mut g, out, &train_targets, rows)?;
            let lv = g.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::Contract(format!("non-finite training loss at epoch {epoch}")));
            }
            total += lv * rows.len() as f64;
            g.backward(loss)?;
            let grads: Vec<Vec<f64>> = p.iter().map(|&v| g.grad(v)).collect();
            adam.step(&mut net.params_mut().tensors, &grads)?;
        }
        let row = EpochLoss {
            epoch,
            train: total / train.len() as f64,
            test: held_out(&net)?,
        };
        let score = if row.test.is_nan() { row.train } else { row.test };
        if score < best.0 {
            best = (score, epoch, net.clone());
        }
        trace.push(row);
    }
    if cfg.epochs == 0 {
        best.2 = net;
    }
    Ok(TrainOutcome {
        network: best.2,
        trace,
        best_epoch: best.1,
    })
}
