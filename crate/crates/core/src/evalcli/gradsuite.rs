use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datapipe::{encode_batch, EmbeddingTable, LabelMaps, TaggedUtterance, Vocabulary, PAD};
use crate::error::Result;
use crate::fusion::{broadcast_intent, dense_add, mlb_fuse, MlbParams};
use crate::layers::{
    birnn, conv_encoder, crf_nll, dense, dropout, Activation, CellKind, ConvEncoderParams,
    CrfParams, DenseParams, Init, Mode, RnnParams,
};
use crate::modeltrain::{build_model, joint_loss, model_forward, LossNorms, ModelConfig, Variant};
use crate::numcore::{
    grad_check, grad_check_except, GradientReport, Graph, NodeId, ParamId, ParamStore, Tensor,
};
use crate::rng::{stream, Purpose};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// One named finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub report: GradientReport,
}

fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, Purpose::Synthetic, 1000)
}

fn random(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

/// Reduce an output to a scalar through fixed random weights.
fn contract(g: &mut Graph<'_, f64>, y: NodeId, w: &Tensor<f64>) -> Result<NodeId> {
    let wn = g.input(w.clone());
    let p = g.mul(y, wn)?;
    Ok(g.sum_all(p))
}

fn perturb_all(store: &mut ParamStore<f64>, r: &mut ChaCha8Rng, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store
            .get_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v += r.random_range(-scale..scale));
    }
}

fn check<F>(name: &str, store: &ParamStore<f64>, f: F) -> Result<GradCase>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
{
    Ok(GradCase {
        name: name.to_string(),
        report: grad_check(f, store, STEP, TOLERANCE)?,
    })
}

fn dense_cases(out: &mut Vec<GradCase>) -> Result<()> {
    for act in [Activation::None, Activation::Relu, Activation::Softmax] {
        let mut r = rng(1);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, &[2, 3, 4]))?;
        let p = DenseParams::new(
            &mut Init::new(&mut s, stream(1, Purpose::Init, 0)),
            "dense",
            4,
            5,
        )?;
        perturb_all(&mut s, &mut r, 0.3);
        let w = random(&mut r, &[2, 3, 5]);
        out.push(check(&format!("dense ({})", act_name(act)), &s, |g| {
            let xn = g.param(x);
            let y = dense(g, xn, &p, act)?;
            contract(g, y, &w)
        })?);
    }
    Ok(())
}

fn act_name(a: Activation) -> &'static str {
    match a {
        Activation::None => "linear",
        Activation::Relu => "relu",
        Activation::Softmax => "softmax",
    }
}

/// Finite-difference checks of every layer and of each full model variant
/// at toy sizes, all in 64-bit.
pub fn gradcheck_suite() -> Result<Vec<GradCase>> {
    let mut out = Vec::new();
    dense_cases(&mut out)?;

    {
        let mut r = rng(2);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, &[3, 4]))?;
        let w = random(&mut r, &[3, 4]);
        out.push(check("dropout (inference path)", &s, |g| {
            let xn = g.param(x);
            let y = dropout(g, xn, 0.5, Mode::Infer, &mut stream(0, Purpose::Dropout, 0))?;
            contract(g, y, &w)
        })?);
    }

    {
        let mut r = rng(3);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, &[2, 6, 4]))?;
        let p = ConvEncoderParams::new(
            &mut Init::new(&mut s, stream(3, Purpose::Init, 0)),
            "conv",
            &[1, 2, 3, 5],
            3,
            4,
        )?;
        for &b in &p.biases {
            s.get_mut(b)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = r.random_range(0.0..0.5));
        }
        let w = random(&mut r, &[2, 12]);
        out.push(check("conv_encoder", &s, |g| {
            let xn = g.param(x);
            let y = conv_encoder(g, xn, &p)?;
            contract(g, y, &w)
        })?);
    }

    for (cell, name) in [(CellKind::Gru, "BiGRU"), (CellKind::Lstm, "BiLSTM")] {
        let mut r = rng(4);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, &[2, 4, 3]))?;
        let mut init = Init::new(&mut s, stream(4, Purpose::Init, 0));
        let f = RnnParams::new(&mut init, "fwd", cell, 3, 2)?;
        let b = RnnParams::new(&mut init, "bwd", cell, 3, 2)?;
        perturb_all(&mut s, &mut r, 0.3);
        let w = random(&mut r, &[2, 4, 4]);
        out.push(check(name, &s, |g| {
            let xn = g.param(x);
            let y = birnn(g, xn, &f, &b)?;
            contract(g, y, &w)
        })?);
    }

    {
        let mut r = rng(5);
        let mut s = ParamStore::new();
        let e = s.add("emissions", random(&mut r, &[2, 4, 3]))?;
        let p = CrfParams::new(
            &mut Init::new(&mut s, stream(5, Purpose::Init, 0)),
            "crf",
            3,
        )?;
        perturb_all(&mut s, &mut r, 1.0);
        let gold = [0, 2, 1, 1, 2, 2, 0, 0];
        out.push(check("crf_nll", &s, |g| {
            let en = g.param(e);
            crf_nll(g, en, &gold, &[4, 2], &p, 2.0)
        })?);
    }

    {
        let mut r = rng(6);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, &[2, 3, 4]))?;
        let y = s.add("y", random(&mut r, &[2, 3, 3]))?;
        let p = MlbParams::new(
            &mut Init::new(&mut s, stream(6, Purpose::Init, 0)),
            "mlb",
            4,
            3,
            2,
            3,
        )?;
        perturb_all(&mut s, &mut r, 0.3);
        let w = random(&mut r, &[2, 3, 3]);
        out.push(check("mlb_fuse", &s, |g| {
            let (xn, yn) = (g.param(x), g.param(y));
            let f = mlb_fuse(g, xn, yn, &p)?;
            contract(g, f, &w)
        })?);
    }

    {
        let mut r = rng(7);
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, &[2, 3, 4]))?;
        let y = s.add("y", random(&mut r, &[2, 3, 4]))?;
        let w = random(&mut r, &[2, 3, 4]);
        out.push(check("dense_add", &s, |g| {
            let (xn, yn) = (g.param(x), g.param(y));
            let f = dense_add(g, xn, yn)?;
            contract(g, f, &w)
        })?);
    }

    {
        let mut r = rng(8);
        let mut s = ParamStore::new();
        let v = s.add("v", random(&mut r, &[2, 3]))?;
        let w = random(&mut r, &[2, 5, 3]);
        out.push(check("broadcast_intent", &s, |g| {
            let vn = g.param(v);
            let b = broadcast_intent(g, vn, 5)?;
            contract(g, b, &w)
        })?);
    }

    {
        let mut r = rng(9);
        let mut s = ParamStore::new();
        let z = s.add("logits", random(&mut r, &[4, 5]))?;
        let targets = [Some(0), Some(4), None, Some(2)];
        out.push(check("softmax cross-entropy", &s, |g| {
            let zn = g.param(z);
            g.softmax_cross_entropy(zn, &targets, 3.0)
        })?);
    }

    for v in [
        Variant::Model2b,
        Variant::Model2a,
        Variant::Model1b,
        Variant::Model1a,
    ] {
        out.push(full_model_case(v)?);
    }
    Ok(out)
}

/// Toy configuration for whole-model checks: L2=4, L1=5, H=3, vocabulary
/// of 7, 2 intents, 3 tags, rank 2, fused width 3, no dropout.
pub fn toy_config(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::for_variant(variant);
    c.max_len = 4;
    c.embed_dim = 5;
    c.hidden = 3;
    c.features = 4;
    c.conv_widths = vec![1, 2, 3];
    c.conv_filters = 3;
    c.mlb_rank = 2;
    c.mlb_out = 3;
    c.dropout = 0.0;
    c.seed = 17;
    c
}

fn full_model_case(variant: Variant) -> Result<GradCase> {
    let cfg = toy_config(variant);
    let mut vocab = Vocabulary::default();
    for w in ["show", "flights", "to", "boston", "denver"] {
        vocab.insert(w);
    }
    debug_assert_eq!(vocab.len(), 7);
    let labels = LabelMaps::from_names(
        vec!["flight".into(), "fare".into()],
        vec!["O".into(), "B-city".into(), "I-city".into()],
    );
    let utts = [
        TaggedUtterance::parse("show flights to boston", "O O O B-city", "flight")?,
        TaggedUtterance::parse("denver boston", "B-city I-city", "fare")?,
        TaggedUtterance::parse("to denver", "O B-city", "flight")?,
    ];
    let batch = encode_batch(&utts, cfg.max_len, &vocab, &labels)?;
    let table = EmbeddingTable::<f64>::random(&vocab, cfg.embed_dim, 0.5, cfg.seed);
    let mut model = build_model(&cfg, &vocab, &labels, &table)?;
    perturb_all(&mut model.store, &mut rng(10), 0.2);
    let emb = model.layout.embedding;
    let d = cfg.embed_dim;
    model.store.get_mut(emb).data_mut()[PAD * d..(PAD + 1) * d].fill(0.0);
    let norms = LossNorms::of(&batch);
    let (layout, store) = (&model.layout, &model.store);
    // the padding row is a constant, not a trainable entry
    let pad_row = |id: ParamId, e: usize| id == emb && e / d == PAD;
    let report = grad_check_except(
        |g| {
            let mut drng = stream(cfg.seed, Purpose::Dropout, 0);
            let o = model_forward(g, &cfg, layout, &batch, Mode::Train, &mut drng)?;
            joint_loss(g, &o, &batch, layout.crf.as_ref(), (1.0, 1.0), norms)
        },
        store,
        STEP,
        TOLERANCE,
        &pad_row,
    )?;
    Ok(GradCase {
        name: format!("{variant} joint loss"),
        report,
    })
}
