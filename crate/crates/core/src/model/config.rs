//! Architecture and training settings, with a plain `key=value` record form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Which head sits on top of the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// FDN-1: linear, layer norm, relu, linear, sigmoid → in/out probability.
    Classifier,
    /// FDN-2: linear, relu, linear → landing point.
    Predictor,
}

/// What the decoder stream carries next to the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideStream {
    /// The two court corners.
    Prior,
    /// One `(label, label)` token.
    Label,
    /// The given number of all-zero tokens.
    Blank(usize),
}

impl SideStream {
    pub fn tokens(self) -> usize {
        match self {
            SideStream::Prior => 2,
            SideStream::Label => 1,
            SideStream::Blank(n) => n,
        }
    }

    pub fn as_str(self) -> String {
        match self {
            SideStream::Prior => "prior".into(),
            SideStream::Label => "label".into(),
            SideStream::Blank(n) => format!("blank{n}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prior" => Ok(SideStream::Prior),
            "label" => Ok(SideStream::Label),
            _ => s
                .strip_prefix("blank")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n > 0)
                .map(SideStream::Blank)
                .ok_or_else(|| Error::Parameter(format!("unknown side stream {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub side: SideStream,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Hidden width of the feature-extraction network.
    pub fen_hidden: usize,
    /// Hidden width of the output head.
    pub fdn_hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Whether decoder layers end with a feed-forward sublayer.
    pub decoder_feedforward: bool,
}

impl ModelConfig {
    /// Reference classifier widths.
    pub fn classifier() -> Self {
        ModelConfig {
            kind: ModelKind::Classifier,
            side: SideStream::Prior,
            d_model: 64,
            heads: 2,
            ff_dim: 256,
            fen_hidden: 128,
            fdn_hidden: 128,
            encoder_layers: 1,
            decoder_layers: 1,
            decoder_feedforward: true,
        }
    }

    /// Reference predictor widths.
    pub fn predictor() -> Self {
        ModelConfig {
            kind: ModelKind::Predictor,
            side: SideStream::Label,
            d_model: 512,
            heads: 2,
            ff_dim: 2048,
            fen_hidden: 500,
            fdn_hidden: 500,
            encoder_layers: 1,
            decoder_layers: 1,
            decoder_feedforward: false,
        }
    }

    /// Single-core desk widths: the classifier keeps its table widths, the
    /// predictor is reduced.
    pub fn desk(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Classifier => ModelConfig::classifier(),
            ModelKind::Predictor => ModelConfig {
                d_model: 32,
                ff_dim: 64,
                fen_hidden: 128,
                fdn_hidden: 64,
                ..ModelConfig::predictor()
            },
        }
    }

    pub fn with_side(mut self, side: SideStream) -> Self {
        self.side = side;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("fen_hidden", self.fen_hidden),
            ("fdn_hidden", self.fdn_hidden),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("side tokens", self.side.tokens()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Parameter(format!("{name} must be positive")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Parameter(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::Parameter(format!("d_model must be even, got {}", self.d_model)));
        }
        Ok(())
    }
}

/// Where predictor labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    GroundTruth,
    Cascade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub seed: u64,
    pub label_source: LabelSource,
}

impl TrainConfig {
    /// Reference schedule for the classifier.
    pub fn classifier() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 10,
            learning_rate: 1e-4,
            dropout: 0.1,
            seed: 0,
            label_source: LabelSource::GroundTruth,
        }
    }

    /// Reference schedule for the predictor.
    pub fn predictor() -> Self {
        TrainConfig {
            epochs: 1000,
            ..TrainConfig::classifier()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Serialises both configs as sorted `key=value` lines.
pub fn config_to_text(model: &ModelConfig, train: &TrainConfig) -> String {
    let kind = match model.kind {
        ModelKind::Classifier => "classifier",
        ModelKind::Predictor => "predictor",
    };
    let source = match train.label_source {
        LabelSource::GroundTruth => "ground_truth",
        LabelSource::Cascade => "cascade",
    };
    let mut map = BTreeMap::new();
    map.insert("kind", kind.to_string());
    map.insert("side", model.side.as_str());
    map.insert("d_model", model.d_model.to_string());
    map.insert("heads", model.heads.to_string());
    map.insert("ff_dim", model.ff_dim.to_string());
    map.insert("fen_hidden", model.fen_hidden.to_string());
    map.insert("fdn_hidden", model.fdn_hidden.to_string());
    map.insert("encoder_layers", model.encoder_layers.to_string());
    map.insert("decoder_layers", model.decoder_layers.to_string());
    map.insert("decoder_feedforward", model.decoder_feedforward.to_string());
    map.insert("epochs", train.epochs.to_string());
    map.insert("batch_size", train.batch_size.to_string());
    map.insert("learning_rate", format!("{:?}", train.learning_rate));
    map.insert("dropout", format!("{:?}", train.dropout));
    map.insert("seed", train.seed.to_string());
    map.insert("label_source", source.to_string());
    let mut s = String::new();
    for (k, v) in map {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

pub fn config_from_text(text: &str) -> Result<(ModelConfig, TrainConfig)> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, found {line:?}")))?;
        if map.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
            return Err(Error::parse(i + 1, format!("duplicate key {k:?}")));
        }
    }
    fn get<T: std::str::FromStr>(map: &BTreeMap<String, (usize, String)>, key: &str) -> Result<T> {
        let (line, v) = map
            .get(key)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing key {key:?}"),
            })?;
        v.parse()
            .map_err(|_| Error::parse(*line, format!("bad value {v:?} for {key}")))
    }
    let kind = match get::<String>(&map, "kind")?.as_str() {
        "classifier" => ModelKind::Classifier,
        "predictor" => ModelKind::Predictor,
        other => return Err(Error::Parameter(format!("unknown model kind {other:?}"))),
    };
    let model = ModelConfig {
        kind,
        side: SideStream::parse(&get::<String>(&map, "side")?)?,
        d_model: get(&map, "d_model")?,
        heads: get(&map, "heads")?,
        ff_dim: get(&map, "ff_dim")?,
        fen_hidden: get(&map, "fen_hidden")?,
        fdn_hidden: get(&map, "fdn_hidden")?,
        encoder_layers: get(&map, "encoder_layers")?,
        decoder_layers: get(&map, "decoder_layers")?,
        decoder_feedforward: get(&map, "decoder_feedforward")?,
    };
    let label_source = match get::<String>(&map, "label_source")?.as_str() {
        "ground_truth" => LabelSource::GroundTruth,
        "cascade" => LabelSource::Cascade,
        other => return Err(Error::Parameter(format!("unknown label source {other:?}"))),
    };
    let train = TrainConfig {
        epochs: get(&map, "epochs")?,
        batch_size: get(&map, "batch_size")?,
        learning_rate: get(&map, "learning_rate")?,
        dropout: get(&map, "dropout")?,
        seed: get(&map, "seed")?,
        label_source,
    };
    model.validate()?;
    Ok((model, train))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_split_heads_exactly() {
        for c in [ModelConfig::classifier(), ModelConfig::predictor()] {
            c.validate().unwrap();
            assert_eq!(c.heads * c.head_dim(), c.d_model);
        }
        assert_eq!(ModelConfig::classifier().head_dim(), 32);
        assert_eq!(ModelConfig::predictor().head_dim(), 256);
        let bad = ModelConfig {
            heads: 3,
            ..ModelConfig::classifier()
        };
        assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
    }

    #[test]
    fn record_round_trip() {
        let m = ModelConfig::desk(ModelKind::Predictor).with_side(SideStream::Blank(1));
        let t = TrainConfig {
            learning_rate: 3e-4,
            seed: 99,
            label_source: LabelSource::Cascade,
            ..TrainConfig::predictor()
        };
        let text = config_to_text(&m, &t);
        assert!(text.contains("side=blank1\n"));
        assert_eq!(config_from_text(&text).unwrap(), (m, t));
        assert!(config_from_text("kind=classifier\nkind=predictor\n").is_err());
    }
}
