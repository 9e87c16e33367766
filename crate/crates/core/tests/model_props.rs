//! Model formulas against hand-written oracles, input plumbing, gradient
//! checks of the full networks, checkpoints and small training runs.

use pidtc_core::geom::{Point2, PriorPoints};
use pidtc_core::model::{
    bce_loss, build_classifier_input, build_predictor_input, cascade_infer, classify, config_from_text,
    config_to_text, encode_input, hard_label, mse_loss, multi_head_attention, multi_head_attention_weights,
    positional_encoding, predict_landing, split_streams, train, AttentionVars, Model, ModelConfig, ModelKind, Network,
    SideStream, TrainConfig, TrajectorySample, SCALE_X, SCALE_Y, TRAJ_LEN,
};
use pidtc_core::numcore::gradcheck::check_joint;
use pidtc_core::numcore::{Checkpoint, Graph};
use pidtc_core::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sample(rng: &mut ChaCha8Rng) -> TrajectorySample {
    let start = Point2::new(rng.random_range(200.0..1000.0), rng.random_range(100.0..300.0));
    let step = Point2::new(rng.random_range(-6.0..6.0), rng.random_range(2.0..8.0));
    let points: Vec<Point2> = (0..TRAJ_LEN)
        .map(|k| start + step * k as f64 + Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let landing = points[TRAJ_LEN - 1] + step;
    let label = u8::from(rng.random_bool(0.5));
    TrajectorySample::new(points, landing)
        .unwrap()
        .with_prior(PriorPoints::new(Point2::new(100.0, 500.0), Point2::new(1180.0, 520.0)))
        .with_label(label)
        .unwrap()
}

fn tiny(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        d_model: 8,
        ff_dim: 12,
        fen_hidden: 16,
        fdn_hidden: 6,
        decoder_feedforward: true,
        ..ModelConfig::desk(kind)
    }
}

// ---- positional encoding ----

#[test]
fn positional_encoding_examples() {
    let pe = positional_encoding(4, 4).unwrap();
    let d = pe.data();
    assert_eq!(&d[0..4], &[0.0, 1.0, 0.0, 1.0]);
    assert!((d[4] - 1f64.sin()).abs() < 1e-15);
    assert!((d[4] - 0.841471).abs() < 1e-6);
    assert!((d[3 * 4 + 2] - 0.03f64.sin()).abs() < 1e-15);
    assert!((d[3 * 4 + 2] - 0.0299955).abs() < 1e-7);
    assert!(matches!(positional_encoding(4, 5), Err(Error::Parameter(_))));
}

#[test]
fn positional_encoding_matches_closed_form() {
    for &d_model in &[2usize, 8, 64, 512] {
        let pe = positional_encoding(TRAJ_LEN, d_model).unwrap();
        for pos in 0..TRAJ_LEN {
            for j in 0..d_model {
                let i = (j / 2) as f64;
                let freq = (-(2.0 * i / d_model as f64) * 10000f64.ln()).exp();
                let a = pos as f64 * freq;
                let want = if j % 2 == 0 { a.sin() } else { a.cos() };
                let got = pe.data()[pos * d_model + j];
                assert!((got - want).abs() <= 1e-12, "pos {pos} dim {j}: {got} vs {want}");
            }
        }
    }
}

// ---- attention ----

struct Weights {
    wq: Vec<f64>,
    bq: Vec<f64>,
    wk: Vec<f64>,
    bk: Vec<f64>,
    wv: Vec<f64>,
    bv: Vec<f64>,
    wo: Vec<f64>,
    bo: Vec<f64>,
}

impl Weights {
    fn random(rng: &mut ChaCha8Rng, d: usize) -> Self {
        Weights {
            wq: rand_vec(rng, d * d),
            bq: rand_vec(rng, d),
            wk: rand_vec(rng, d * d),
            bk: rand_vec(rng, d),
            wv: rand_vec(rng, d * d),
            bv: rand_vec(rng, d),
            wo: rand_vec(rng, d * d),
            bo: rand_vec(rng, d),
        }
    }

    fn vars(&self, g: &mut Graph, d: usize) -> AttentionVars {
        let mut m = |v: &Vec<f64>, r: usize| g.constant(r, v.len() / r, v.clone()).unwrap();
        AttentionVars {
            wq: m(&self.wq, d),
            bq: m(&self.bq, 1),
            wk: m(&self.wk, d),
            bk: m(&self.bk, 1),
            wv: m(&self.wv, d),
            bv: m(&self.bv, 1),
            wo: m(&self.wo, d),
            bo: m(&self.bo, 1),
        }
    }
}

/// `x·W + b` with `x` as `n × d` rows.
fn affine(x: &[f64], n: usize, d: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for r in 0..n {
        for c in 0..d {
            let mut s = b[c];
            for k in 0..d {
                s += x[r * d + k] * w[k * d + c];
            }
            out[r * d + c] = s;
        }
    }
    out
}

/// Per-head loop: project, score with 1/√d_k, softmax, mix values,
/// concatenate heads and project with W⁰.
fn attention_oracle(q_src: &[f64], nq: usize, kv_src: &[f64], nk: usize, d: usize, heads: usize, w: &Weights) -> Vec<f64> {
    let q = affine(q_src, nq, d, &w.wq, &w.bq);
    let k = affine(kv_src, nk, d, &w.wk, &w.bk);
    let v = affine(kv_src, nk, d, &w.wv, &w.bv);
    let dk = d / heads;
    let mut cat = vec![0.0; nq * d];
    for h in 0..heads {
        let off = h * dk;
        for i in 0..nq {
            let scores: Vec<f64> = (0..nk)
                .map(|j| (0..dk).map(|t| q[i * d + off + t] * k[j * d + off + t]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for t in 0..dk {
                cat[i * d + off + t] = (0..nk).map(|j| e[j] / z * v[j * d + off + t]).sum();
            }
        }
    }
    affine(&cat, nq, d, &w.wo, &w.bo)
}

fn run_attention(q_src: &[f64], nq: usize, kv_src: &[f64], nk: usize, d: usize, heads: usize, w: &Weights, blocks: usize) -> Vec<f64> {
    let mut g = Graph::new();
    let q = g.constant(nq, d, q_src.to_vec()).unwrap();
    let kv = g.constant(nk, d, kv_src.to_vec()).unwrap();
    let vars = w.vars(&mut g, d);
    let y = multi_head_attention(&mut g, q, kv, &vars, heads, blocks).unwrap();
    g.value(y).to_vec()
}

#[test]
fn attention_matches_per_head_oracle() {
    let d = 8;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Weights::random(&mut rng, d);
        let x = rand_vec(&mut rng, 5 * d);
        let m = rand_vec(&mut rng, 3 * d);
        // self-attention
        let got = run_attention(&x, 5, &x, 5, d, 2, &w, 1);
        let want = attention_oracle(&x, 5, &x, 5, d, 2, &w);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10, "self seed {seed}: {a} vs {b}");
        }
        // cross-attention, queries from a shorter stream
        let got = run_attention(&m, 3, &x, 5, d, 2, &w, 1);
        let want = attention_oracle(&m, 3, &x, 5, d, 2, &w);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10, "cross seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn batched_attention_keeps_samples_apart() {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w = Weights::random(&mut rng, d);
    let q = rand_vec(&mut rng, 2 * 2 * d);
    let kv = rand_vec(&mut rng, 2 * 5 * d);
    let got = run_attention(&q, 4, &kv, 10, d, 2, &w, 2);
    for b in 0..2 {
        let want = attention_oracle(&q[b * 2 * d..(b + 1) * 2 * d], 2, &kv[b * 5 * d..(b + 1) * 5 * d], 5, d, 2, &w);
        for (a, e) in got[b * 2 * d..(b + 1) * 2 * d].iter().zip(&want) {
            assert!((a - e).abs() <= 1e-10);
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let d = 8;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Weights::random(&mut rng, d);
        let x: Vec<f64> = rand_vec(&mut rng, 12 * d).iter().map(|v| v * 5.0).collect();
        let mut g = Graph::new();
        let xv = g.constant(12, d, x).unwrap();
        let vars = w.vars(&mut g, d);
        let (_, weights) = multi_head_attention_weights(&mut g, xv, xv, &vars, 2, 2).unwrap();
        for a in weights {
            let (r, c) = g.shape(a);
            assert_eq!((r, c), (12, 6));
            for row in g.value(a).chunks(c) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn single_token_attention_returns_its_value_projection() {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = Weights::random(&mut rng, d);
    let x = rand_vec(&mut rng, d);
    let mut g = Graph::new();
    let xv = g.constant(1, d, x.clone()).unwrap();
    let vars = w.vars(&mut g, d);
    let (y, weights) = multi_head_attention_weights(&mut g, xv, xv, &vars, 2, 1).unwrap();
    for a in weights {
        assert_eq!(g.value(a), &[1.0]);
    }
    let v = affine(&x, 1, d, &w.wv, &w.bv);
    let want = affine(&v, 1, d, &w.wo, &w.bo);
    for (a, b) in g.value(y).iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn identical_keys_give_uniform_mean_of_values() {
    let d = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w = Weights::random(&mut rng, d);
    w.wk = vec![0.0; d * d];
    w.wo = (0..d * d).map(|i| if i / d == i % d { 1.0 } else { 0.0 }).collect();
    w.bo = vec![0.0; d];
    let q = rand_vec(&mut rng, 2 * d);
    let kv = rand_vec(&mut rng, 4 * d);
    let got = run_attention(&q, 2, &kv, 4, d, 2, &w, 1);
    let v = affine(&kv, 4, d, &w.wv, &w.bv);
    for i in 0..2 {
        for c in 0..d {
            let mean = (0..4).map(|j| v[j * d + c]).sum::<f64>() / 4.0;
            assert!((got[i * d + c] - mean).abs() <= 1e-12);
        }
    }
}

#[test]
fn attention_rejects_indivisible_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = Weights::random(&mut rng, 6);
    let mut g = Graph::new();
    let x = g.constant(2, 6, rand_vec(&mut rng, 12)).unwrap();
    let vars = w.vars(&mut g, 6);
    assert!(matches!(multi_head_attention(&mut g, x, x, &vars, 4, 1), Err(Error::Parameter(_))));
}

// ---- inputs ----

#[test]
fn classifier_input_concatenates_and_splits() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = sample(&mut rng).with_prior(PriorPoints::new(Point2::new(100.0, 600.0), Point2::new(1180.0, 600.0)));
    let rows = build_classifier_input(&s).unwrap();
    assert_eq!(rows.len(), 27);
    assert_eq!(&rows[..25], &s.points[..]);
    assert_eq!(rows[25], Point2::new(100.0, 600.0));
    assert_eq!(rows[26], Point2::new(1180.0, 600.0));
    let (traj, side) = split_streams(&rows).unwrap();
    assert_eq!(traj, s.points);
    assert_eq!(side, vec![Point2::new(100.0, 600.0), Point2::new(1180.0, 600.0)]);

    let bare = TrajectorySample::new(s.points.clone(), s.landing).unwrap();
    assert!(matches!(build_classifier_input(&bare), Err(Error::Contract(_))));
}

#[test]
fn predictor_input_appends_label_token() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = sample(&mut rng);
    let rows = build_predictor_input(&s, Some(1)).unwrap();
    assert_eq!(rows.len(), 26);
    assert_eq!(rows[25], Point2::new(1.0, 1.0));
    let (traj, side) = split_streams(&rows).unwrap();
    assert_eq!(traj, s.points);
    assert_eq!(side, vec![Point2::new(1.0, 1.0)]);
    assert!(matches!(build_predictor_input(&s, None), Err(Error::Contract(_))));
}

#[test]
fn label_swap_only_touches_the_side_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = sample(&mut rng);
    let (t0, s0) = split_streams(&build_predictor_input(&s, Some(0)).unwrap()).unwrap();
    let (t1, s1) = split_streams(&build_predictor_input(&s, Some(1)).unwrap()).unwrap();
    assert_eq!(t0, t1);
    assert_ne!(s0, s1);
    let a = encode_input(&s, SideStream::Label, Some(0)).unwrap();
    let b = encode_input(&s, SideStream::Label, Some(1)).unwrap();
    assert_eq!(a[..2 * TRAJ_LEN], b[..2 * TRAJ_LEN]);
    assert_eq!(&a[2 * TRAJ_LEN..], &[0.0, 0.0]);
    assert_eq!(&b[2 * TRAJ_LEN..], &[1.0, 1.0]);
}

#[test]
fn encoded_input_is_scaled_by_image_extent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = sample(&mut rng);
    let v = encode_input(&s, SideStream::Prior, None).unwrap();
    assert_eq!(v.len(), 54);
    assert_eq!(v[0], s.points[0].x / SCALE_X);
    assert_eq!(v[1], s.points[0].y / SCALE_Y);
    assert_eq!(v[50], 100.0 / SCALE_X);
    let blank = encode_input(&s, SideStream::Blank(2), None).unwrap();
    assert_eq!(&blank[50..], &[0.0; 4]);
}

// ---- whole networks ----

#[test]
fn zero_networks_give_neutral_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = sample(&mut rng);
    let cls = Network::zeroed(ModelConfig::desk(ModelKind::Classifier)).unwrap();
    assert_eq!(classify(&cls, &s).unwrap(), (0.5, 1));
    let pred = Network::zeroed(ModelConfig::desk(ModelKind::Predictor)).unwrap();
    assert_eq!(predict_landing(&pred, &s, Some(1)).unwrap(), Point2::new(0.0, 0.0));
}

#[test]
fn hard_label_threshold() {
    assert_eq!(hard_label(0.7), 1);
    assert_eq!(hard_label(0.3), 0);
    assert_eq!(hard_label(0.5), 1);
}

#[test]
fn classifier_is_order_sensitive() {
    let net = Network::new(ModelConfig::desk(ModelKind::Classifier), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = sample(&mut rng);
    let (p0, _) = classify(&net, &s).unwrap();
    let mut changed = 0;
    for _ in 0..100 {
        let mut points = s.points.clone();
        points.shuffle(&mut rng);
        let t = TrajectorySample { points, ..s.clone() };
        if (classify(&net, &t).unwrap().0 - p0).abs() > 1e-9 {
            changed += 1;
        }
    }
    assert!(changed >= 95, "only {changed}/100 permutations moved p");
}

#[test]
fn predictor_output_has_two_coordinates() {
    let net = Network::new(ModelConfig::desk(ModelKind::Predictor), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| net.encode(&sample(&mut rng), Some(0)).unwrap()).collect();
    for row in net.infer(&inputs).unwrap() {
        assert_eq!(row.len(), 2);
    }
}

/// Gradient of the whole model's loss with respect to every parameter.
fn full_model_gradcheck(kind: ModelKind, side: SideStream) {
    for seed in 0..20 {
        let config = tiny(kind).with_side(side);
        let net = Network::new(config, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let batch: Vec<TrajectorySample> = (0..2).map(|_| sample(&mut rng)).collect();
        let x: Vec<f64> = batch.iter().flat_map(|s| net.encode(s, s.label).unwrap()).collect();
        let width = net.input_width();
        let err = check_joint(&net.params().tensors, 1e-4, |g, p| {
            let xv = g.constant(2, width, x.clone())?;
            let out = net.forward(g, p, xv, 2, 0.0, &mut ChaCha8Rng::seed_from_u64(0), false)?;
            match kind {
                ModelKind::Classifier => {
                    let q: Vec<f64> = batch.iter().map(|s| f64::from(s.label.unwrap())).collect();
                    g.bce(out, &q)
                }
                ModelKind::Predictor => {
                    let scale = g.constant(2, 2, vec![SCALE_X, SCALE_Y, SCALE_X, SCALE_Y])?;
                    let px = g.mul(out, scale)?;
                    let truth = g.constant(2, 2, batch.iter().flat_map(|s| [s.landing.x, s.landing.y]).collect())?;
                    let d = g.sub(px, truth)?;
                    let sq = g.square(d);
                    let s = g.sum(sq);
                    Ok(g.scale(s, 0.5))
                }
            }
        })
        .unwrap();
        assert!(err <= 1e-3, "{kind:?} seed {seed}: relative error {err}");
    }
}

#[test]
fn classifier_gradients_match_finite_differences() {
    full_model_gradcheck(ModelKind::Classifier, SideStream::Prior);
}

#[test]
fn predictor_gradients_match_finite_differences() {
    full_model_gradcheck(ModelKind::Predictor, SideStream::Label);
}

#[test]
fn parameter_counts_of_reference_configs() {
    let cls = Network::new(ModelConfig::classifier(), 0).unwrap().param_count();
    let pred = Network::new(ModelConfig::predictor(), 0).unwrap().param_count();
    assert_eq!(cls, 139_831);
    assert_eq!(pred, 5_568_806);
    assert!((cls as f64 / 0.15e6 - 1.0).abs() <= 0.10);
    assert!((pred as f64 / 5.38e6 - 1.0).abs() <= 0.10);
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let config = ModelConfig::desk(ModelKind::Classifier);
    let net = Network::new(config.clone(), 8).unwrap();
    let text = net.to_checkpoint().unwrap().to_text();
    let back = Network::from_checkpoint(config.clone(), &Checkpoint::from_text(&text).unwrap()).unwrap();
    assert_eq!(back.params().tensors, net.params().tensors);
    assert_eq!(back.to_checkpoint().unwrap().to_text(), text);

    let ck = Checkpoint::from_text(&text).unwrap();
    let wider = ModelConfig { d_model: 96, ..config.clone() };
    assert!(matches!(Network::from_checkpoint(wider, &ck), Err(Error::Checkpoint(_))));
    let pred = ModelConfig::desk(ModelKind::Predictor);
    assert!(matches!(Network::from_checkpoint(pred, &ck), Err(Error::Checkpoint(_))));
}

#[test]
fn config_text_round_trip() {
    let model = ModelConfig::desk(ModelKind::Predictor).with_side(SideStream::Blank(1));
    let tc = TrainConfig { seed: 42, ..TrainConfig::predictor() };
    let (m2, t2) = config_from_text(&config_to_text(&model, &tc)).unwrap();
    assert_eq!(m2, model);
    assert_eq!(t2, tc);
}

// ---- training ----

fn memorize(kind: ModelKind) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = sample(&mut rng);
    let config = ModelConfig::desk(kind);
    let tc = TrainConfig {
        epochs: 400,
        learning_rate: 1e-3,
        dropout: 0.0,
        seed: 3,
        ..TrainConfig::classifier()
    };
    let out = train(config, std::slice::from_ref(&s), &[], &tc).unwrap();
    match kind {
        ModelKind::Classifier => {
            let (p, _) = classify(&out.network, &s).unwrap();
            bce_loss(&[p], &[f64::from(s.label.unwrap())]).unwrap()
        }
        ModelKind::Predictor => {
            let y = predict_landing(&out.network, &s, s.label).unwrap();
            mse_loss(&[y], &[s.landing]).unwrap()
        }
    }
}

#[test]
fn classifier_memorizes_one_sample() {
    let bce = memorize(ModelKind::Classifier);
    assert!(bce < 0.01, "bce {bce}");
}

#[test]
fn predictor_memorizes_one_sample() {
    let mse = memorize(ModelKind::Predictor);
    assert!(mse < 1.0, "mse {mse}");
}

#[test]
fn training_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let data: Vec<TrajectorySample> = (0..12).map(|_| sample(&mut rng)).collect();
    let tc = TrainConfig {
        epochs: 3,
        seed: 5,
        ..TrainConfig::classifier()
    };
    let config = tiny(ModelKind::Classifier);
    let a = train(config.clone(), &data[..10], &data[10..], &tc).unwrap();
    let b = train(config, &data[..10], &data[10..], &tc).unwrap();
    assert_eq!(a.trace_csv(), b.trace_csv());
    assert_eq!(
        a.network.to_checkpoint().unwrap().to_text(),
        b.network.to_checkpoint().unwrap().to_text()
    );
    assert_eq!(a.trace.len(), 4);
}

#[test]
fn empty_training_set_is_a_data_error() {
    let tc = TrainConfig::classifier();
    assert!(matches!(train(tiny(ModelKind::Classifier), &[], &[], &tc), Err(Error::Data(_))));
}

#[test]
fn cascade_is_a_pure_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let s = sample(&mut rng);
    let cls = Network::new(ModelConfig::desk(ModelKind::Classifier), 1).unwrap();
    let pred = Network::new(ModelConfig::desk(ModelKind::Predictor), 2).unwrap();
    let a = cascade_infer(&cls, &pred, &s).unwrap();
    assert_eq!(a, cascade_infer(&cls, &pred, &s).unwrap());
    let (_, label) = classify(&cls, &s).unwrap();
    assert_eq!(a, (label, predict_landing(&pred, &s, Some(label)).unwrap()));
    assert!(matches!(cascade_infer(&pred, &cls, &s), Err(Error::Contract(_))));
}

