//! Vanilla recurrent baseline: `h_t = tanh(x_t·W_x + h_{t−1}·W_h + b)`
//! over the 25 scaled points, final state through a two-layer relu head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{encode_input, Model, ModelKind, ParamSet, SideStream, TrajectorySample, TRAJ_LEN};
use crate::numcore::{Checkpoint, Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RnnConfig {
    pub hidden: usize,
    pub head_hidden: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            hidden: 64,
            head_hidden: 64,
        }
    }
}

const NAMES: [&str; 7] = [
    "rnn.wx",
    "rnn.wh",
    "rnn.b",
    "head.1.weight",
    "head.1.bias",
    "head.2.weight",
    "head.2.bias",
];

#[derive(Debug, Clone)]
pub struct RnnBaseline {
    config: RnnConfig,
    params: ParamSet,
}

impl RnnBaseline {
    pub fn new(config: RnnConfig, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.head_hidden == 0 {
            return Err(Error::Parameter("recurrent widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, f) = (config.hidden, config.head_hidden);
        let shapes = [(2, h, 2), (h, h, h), (1, h, h), (h, f, h), (1, f, h), (f, 2, f), (1, 2, f)];
        let mut params = ParamSet::default();
        for (name, (r, c, fan_in)) in NAMES.iter().zip(shapes) {
            let bound = (1.0 / fan_in as f64).sqrt();
            let data = (0..r * c).map(|_| rng.random_range(-bound..=bound)).collect();
            params.names.push(name.to_string());
            params.tensors.push(Tensor::matrix(r, c, data)?);
        }
        Ok(RnnBaseline { config, params })
    }

    pub fn config(&self) -> RnnConfig {
        self.config
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            ck.push(name, t.clone())?;
        }
        Ok(ck)
    }

    pub fn from_checkpoint(config: RnnConfig, ck: &Checkpoint) -> Result<Self> {
        let mut net = RnnBaseline::new(config, 0)?;
        if ck.len() != NAMES.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, the recurrent baseline expects {}",
                ck.len(),
                NAMES.len()
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

impl Model for RnnBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::Predictor
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn input_width(&self) -> usize {
        2 * TRAJ_LEN
    }

    fn encode(&self, sample: &TrajectorySample, _label: Option<u8>) -> Result<Vec<f64>> {
        let mut v = encode_input(sample, SideStream::Blank(1), None)?;
        v.truncate(2 * TRAJ_LEN);
        Ok(v)
    }

    fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &[Var],
        x: Var,
        batch: usize,
        _dropout: f64,
        _rng: &mut R,
        _training: bool,
    ) -> Result<Var> {
        if g.shape(x) != (batch, 2 * TRAJ_LEN) {
            let (r, c) = g.shape(x);
            return Err(Error::dim("recurrent input", &[r, c], &[batch, 2 * TRAJ_LEN]));
        }
        let (wx, wh, b) = (p[0], p[1], p[2]);
        let points = g.reshape(x, batch * TRAJ_LEN, 2)?;
        let mut h: Option<Var> = None;
        for t in 0..TRAJ_LEN {
            let rows: Vec<usize> = (0..batch).map(|i| i * TRAJ_LEN + t).collect();
            let xt = g.gather_rows(points, &rows)?;
            let mut a = g.matmul(xt, wx)?;
            if let Some(prev) = h {
                let r = g.matmul(prev, wh)?;
                a = g.add(a, r)?;
            }
            let a = g.add_row(a, b)?;
            h = Some(g.tanh(a));
        }
        let h = h.expect("trajectories are non-empty");
        let z = g.matmul(h, p[3])?;
        let z = g.add_row(z, p[4])?;
        let z = g.relu(z);
        let y = g.matmul(z, p[5])?;
        g.add_row(y, p[6])
    }
}
