//! The transformer used by both cascade stages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    multi_head_attention, positional_encoding, Attention, Builder, FeedForward, Init, Linear, Norm, ParamSet,
};
use super::{ModelConfig, ModelKind, SideStream, TrajectorySample, IMAGE_HEIGHT, IMAGE_WIDTH, TRAJ_LEN};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::numcore::{Checkpoint, Graph, Var};

/// Pixel coordinates are divided by these before entering the network.
pub const SCALE_X: f64 = IMAGE_WIDTH as f64;
pub const SCALE_Y: f64 = IMAGE_HEIGHT as f64;

/// Rows per inference graph.
const INFER_CHUNK: usize = 64;

#[derive(Debug, Clone)]
struct EncoderLayer {
    attn: Attention,
    norm1: Norm,
    ff: FeedForward,
    norm2: Norm,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_attn: Attention,
    norm1: Norm,
    cross_attn: Attention,
    norm2: Norm,
    ff: Option<(FeedForward, Norm)>,
}

#[derive(Debug, Clone)]
struct Layout {
    fen1: Linear,
    fen2: Linear,
    embed_traj: Linear,
    embed_side: Linear,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    head1: Linear,
    head_norm: Option<Norm>,
    head2: Linear,
}

/// A trainable landing-point or in/out model over encoded samples.
pub trait Model: Clone {
    fn kind(&self) -> ModelKind;

    fn params(&self) -> &ParamSet;

    fn params_mut(&mut self) -> &mut ParamSet;

    /// Width of one flattened input row.
    fn input_width(&self) -> usize;

    /// Scaled, flattened input row for `sample`.
    fn encode(&self, sample: &TrajectorySample, label: Option<u8>) -> Result<Vec<f64>>;

    /// Output for `batch` stacked input rows: `batch × 1` probabilities
    /// or `batch × 2` scaled coordinates.
    #[allow(clippy::too_many_arguments)]
    fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &[Var],
        x: Var,
        batch: usize,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var>;

    /// Inference on many encoded inputs; one output row per input.
    fn infer(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let w = self.input_width();
        let mut out = Vec::with_capacity(inputs.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for chunk in inputs.chunks(INFER_CHUNK) {
            let mut g = Graph::new();
            let p = self.params().leaves(&mut g, false)?;
            let mut data = Vec::with_capacity(chunk.len() * w);
            for row in chunk {
                if row.len() != w {
                    return Err(Error::dim("network input", &[row.len()], &[w]));
                }
                data.extend_from_slice(row);
            }
            let x = g.constant(chunk.len(), w, data)?;
            let y = self.forward(&mut g, &p, x, chunk.len(), 0.0, &mut rng, false)?;
            let cols = g.shape(y).1;
            out.extend(g.value(y).chunks(cols).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    fn param_count(&self) -> usize {
        self.params().count()
    }
}

/// Parameters plus the fixed architecture they belong to.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    layout: Layout,
    params: ParamSet,
}

fn build<R: Rng + ?Sized>(config: &ModelConfig, init: Init<'_, R>) -> Result<(Layout, ParamSet)> {
    config.validate()?;
    let d = config.d_model;
    let n_in = 2 * (TRAJ_LEN + config.side.tokens());
    let mut b = Builder {
        params: ParamSet::default(),
        init,
    };
    let fen1 = b.linear("fen.1", n_in, config.fen_hidden);
    let fen2 = b.linear("fen.2", config.fen_hidden, n_in);
    let embed_traj = b.linear("embed.traj", 2, d);
    let embed_side = b.linear("embed.side", 2, d);
    let encoder = (0..config.encoder_layers)
        .map(|i| EncoderLayer {
            attn: b.attention(&format!("enc{i}.attn"), d),
            norm1: b.norm(&format!("enc{i}.norm1"), d),
            ff: b.feed_forward(&format!("enc{i}.ff"), d, config.ff_dim),
            norm2: b.norm(&format!("enc{i}.norm2"), d),
        })
        .collect();
    let decoder = (0..config.decoder_layers)
        .map(|i| DecoderLayer {
            self_attn: b.attention(&format!("dec{i}.self"), d),
            norm1: b.norm(&format!("dec{i}.norm1"), d),
            cross_attn: b.attention(&format!("dec{i}.cross"), d),
            norm2: b.norm(&format!("dec{i}.norm2"), d),
            ff: config.decoder_feedforward.then(|| {
                (
                    b.feed_forward(&format!("dec{i}.ff"), d, config.ff_dim),
                    b.norm(&format!("dec{i}.norm3"), d),
                )
            }),
        })
        .collect();
    let (head1, head_norm, head2) = match config.kind {
        ModelKind::Classifier => (
            b.linear("head.1", d, config.fdn_hidden),
            Some(b.norm("head.norm", config.fdn_hidden)),
            b.linear("head.2", config.fdn_hidden, 1),
        ),
        ModelKind::Predictor => (
            b.linear("head.1", d, config.fdn_hidden),
            None,
            b.linear("head.2", config.fdn_hidden, 2),
        ),
    };
    let layout = Layout {
        fen1,
        fen2,
        embed_traj,
        embed_side,
        encoder,
        decoder,
        head1,
        head_norm,
        head2,
    };
    Ok((layout, b.params))
}

impl Network {
    /// Fresh weights drawn uniformly from ±√(1/fan_in); layer-norm gains
    /// start at 1 and biases of norms at 0.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (layout, params) = build(&config, Init::Uniform(&mut rng))?;
        Ok(Network { config, layout, params })
    }

    /// Every parameter, layer-norm gains included, set to zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        let (layout, params) = build::<ChaCha8Rng>(&config, Init::Zeros)?;
        Ok(Network { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            ck.push(name, t.clone())?;
        }
        Ok(ck)
    }

    /// Rebuilds a network for `config` from checkpointed tensors; every
    /// parameter must be present with the expected shape.
    pub fn from_checkpoint(config: ModelConfig, ck: &Checkpoint) -> Result<Self> {
        let mut net = Network::zeroed(config)?;
        if ck.len() != net.params.names.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, configuration expects {}",
                ck.len(),
                net.params.names.len()
            )));
        }
        for (name, slot) in net.params.names.iter().zip(net.params.tensors.iter_mut()) {
            let t = ck
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(net)
    }
}

impl Model for Network {
    fn kind(&self) -> ModelKind {
        self.config.kind
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn input_width(&self) -> usize {
        2 * (TRAJ_LEN + self.config.side.tokens())
    }

    fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &[Var],
        x: Var,
        batch: usize,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        let lay = &self.layout;
        let cfg = &self.config;
        let (m, d) = (cfg.side.tokens(), cfg.d_model);
        let n = TRAJ_LEN + m;
        if g.shape(x) != (batch, 2 * n) {
            let (r, c) = g.shape(x);
            return Err(Error::dim("network input", &[r, c], &[batch, 2 * n]));
        }
        // feature extraction on the flattened sequence, then back to tokens
        let h = lay.fen1.forward(g, p, x)?;
        let h = g.relu(h);
        let h = lay.fen2.forward(g, p, h)?;
        let tokens = g.reshape(h, batch * n, 2)?;
        let traj_rows: Vec<usize> = (0..batch).flat_map(|b| (0..TRAJ_LEN).map(move |k| b * n + k)).collect();
        let side_rows: Vec<usize> = (0..batch).flat_map(|b| (TRAJ_LEN..n).map(move |k| b * n + k)).collect();
        let traj = g.gather_rows(tokens, &traj_rows)?;
        let side = g.gather_rows(tokens, &side_rows)?;

        let pe = positional_encoding(TRAJ_LEN, d)?;
        let tiled: Vec<f64> = (0..batch).flat_map(|_| pe.data().iter().copied()).collect();
        let pe = g.constant(batch * TRAJ_LEN, d, tiled)?;
        let e = lay.embed_traj.forward(g, p, traj)?;
        let e = g.add(e, pe)?;
        let mut e = g.dropout(e, dropout, rng, training)?;
        let s = lay.embed_side.forward(g, p, side)?;
        let mut s = g.dropout(s, dropout, rng, training)?;

        for layer in &lay.encoder {
            let a = multi_head_attention(g, e, e, &layer.attn.vars(p), cfg.heads, batch)?;
            let r = g.add(e, a)?;
            let e1 = layer.norm1.forward(g, p, r)?;
            let f = layer.ff.forward(g, p, e1, dropout, rng, training)?;
            let r = g.add(e1, f)?;
            e = layer.norm2.forward(g, p, r)?;
        }
        for layer in &lay.decoder {
            let a = multi_head_attention(g, s, s, &layer.self_attn.vars(p), cfg.heads, batch)?;
            let r = g.add(s, a)?;
            let s1 = layer.norm1.forward(g, p, r)?;
            let c = multi_head_attention(g, s1, e, &layer.cross_attn.vars(p), cfg.heads, batch)?;
            let r = g.add(s1, c)?;
            s = layer.norm2.forward(g, p, r)?;
            if let Some((ff, norm)) = &layer.ff {
                let f = ff.forward(g, p, s, dropout, rng, training)?;
                let r = g.add(s, f)?;
                s = norm.forward(g, p, r)?;
            }
        }

        let pooled = g.block_mean_rows(s, m)?;
        let h = lay.head1.forward(g, p, pooled)?;
        let h = match &lay.head_norm {
            Some(norm) => norm.forward(g, p, h)?,
            None => h,
        };
        let h = g.relu(h);
        let out = lay.head2.forward(g, p, h)?;
        Ok(match cfg.kind {
            ModelKind::Classifier => g.sigmoid(out),
            ModelKind::Predictor => out,
        })
    }

    fn encode(&self, sample: &TrajectorySample, label: Option<u8>) -> Result<Vec<f64>> {
        encode_input(sample, self.config.side, label)
    }
}

fn scaled(p: Point2) -> [f64; 2] {
    [p.x / SCALE_X, p.y / SCALE_Y]
}

/// Flattened, scaled input: 25 trajectory tokens followed by the side
/// stream's tokens.
pub fn encode_input(sample: &TrajectorySample, side: SideStream, label: Option<u8>) -> Result<Vec<f64>> {
    if sample.points.len() != TRAJ_LEN {
        return Err(Error::Data(format!("trajectory needs {TRAJ_LEN} points, got {}", sample.points.len())));
    }
    let mut v: Vec<f64> = sample.points.iter().flat_map(|&p| scaled(p)).collect();
    match side {
        SideStream::Prior => {
            let pp = sample.prior()?;
            v.extend(scaled(pp.p1));
            v.extend(scaled(pp.p2));
        }
        SideStream::Label => {
            let l = label.ok_or_else(|| Error::Contract("label stream needs a label".into()))?;
            if l > 1 {
                return Err(Error::Label(l as f64));
            }
            v.extend([l as f64, l as f64]);
        }
        SideStream::Blank(n) => v.extend(std::iter::repeat_n(0.0, 2 * n)),
    }
    Ok(v)
}

/// Trajectory followed by the two prior corners, in pixels (27 rows).
pub fn build_classifier_input(sample: &TrajectorySample) -> Result<Vec<Point2>> {
    let pp = sample.prior()?;
    let mut rows = sample.points.clone();
    rows.extend([pp.p1, pp.p2]);
    Ok(rows)
}

/// Trajectory followed by the `(label, label)` token (26 rows).
pub fn build_predictor_input(sample: &TrajectorySample, label: Option<u8>) -> Result<Vec<Point2>> {
    let l = label.ok_or_else(|| Error::Contract("predictor input needs a label".into()))?;
    if l > 1 {
        return Err(Error::Label(l as f64));
    }
    let mut rows = sample.points.clone();
    rows.push(Point2::new(l as f64, l as f64));
    Ok(rows)
}

/// Splits a token sequence back into the trajectory and side streams.
pub fn split_streams(rows: &[Point2]) -> Result<(Vec<Point2>, Vec<Point2>)> {
    if rows.len() < TRAJ_LEN {
        return Err(Error::Data(format!("sequence of {} rows is shorter than a trajectory", rows.len())));
    }
    Ok((rows[..TRAJ_LEN].to_vec(), rows[TRAJ_LEN..].to_vec()))
}

/// In/out probability and hard label (1 when `p ≥ 0.5`).
pub fn classify<M: Model>(net: &M, sample: &TrajectorySample) -> Result<(f64, u8)> {
    if net.kind() != ModelKind::Classifier {
        return Err(Error::Contract("classify needs a classifier network".into()));
    }
    let p = net.infer(&[net.encode(sample, None)?])?[0][0];
    Ok((p, hard_label(p)))
}

pub fn hard_label(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

/// Landing point in pixels.
pub fn predict_landing<M: Model>(net: &M, sample: &TrajectorySample, label: Option<u8>) -> Result<Point2> {
    if net.kind() != ModelKind::Predictor {
        return Err(Error::Contract("predict_landing needs a predictor network".into()));
    }
    let y = &net.infer(&[net.encode(sample, label)?])?[0];
    Ok(Point2::new(y[0] * SCALE_X, y[1] * SCALE_Y))
}

/// Batched [`classify`] probabilities.
pub fn classify_batch<M: Model>(net: &M, samples: &[TrajectorySample]) -> Result<Vec<f64>> {
    if net.kind() != ModelKind::Classifier {
        return Err(Error::Contract("classify needs a classifier network".into()));
    }
    let inputs = samples.iter().map(|s| net.encode(s, None)).collect::<Result<Vec<_>>>()?;
    Ok(net.infer(&inputs)?.into_iter().map(|r| r[0]).collect())
}

/// Batched [`predict_landing`] with one optional label per sample.
pub fn predict_batch<M: Model>(net: &M, samples: &[TrajectorySample], labels: &[Option<u8>]) -> Result<Vec<Point2>> {
    if net.kind() != ModelKind::Predictor {
        return Err(Error::Contract("predict_landing needs a predictor network".into()));
    }
    if samples.len() != labels.len() {
        return Err(Error::Contract(format!("{} samples but {} labels", samples.len(), labels.len())));
    }
    let inputs = samples
        .iter()
        .zip(labels)
        .map(|(s, &l)| net.encode(s, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(net
        .infer(&inputs)?
        .into_iter()
        .map(|r| Point2::new(r[0] * SCALE_X, r[1] * SCALE_Y))
        .collect())
}

/// Hard labels from `cls` for every sample.
pub fn cascade_labels<M: Model>(cls: &M, samples: &[TrajectorySample]) -> Result<Vec<u8>> {
    Ok(classify_batch(cls, samples)?.into_iter().map(hard_label).collect())
}

/// Copies of `samples` carrying the classifier's hard labels instead of
/// their own.
pub fn relabel_with_classifier<M: Model>(cls: &M, samples: &[TrajectorySample]) -> Result<Vec<TrajectorySample>> {
    let labels = cascade_labels(cls, samples)?;
    samples
        .iter()
        .zip(labels)
        .map(|(s, l)| s.clone().with_label(l))
        .collect()
}

/// Classifier label followed by the predictor's landing point for it.
pub fn cascade_infer<C: Model, P: Model>(cls: &C, pred: &P, sample: &TrajectorySample) -> Result<(u8, Point2)> {
    let (_, label) = classify(cls, sample)?;
    Ok((label, predict_landing(pred, sample, Some(label))?))
}
