//! The gradient-check suites: every primitive, the composed encoder and the
//! joint loss, each checked for one seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typelink::nn::{Graph, Init, ParamStore, Tensor, Var};

use super::gradcheck::{check, Report};
use super::toy;

pub const SEEDS: u64 = 10;

/// A store with parameters `a` `[3, 4]`, `b` `[3, 4]`, `w` `[4, 2]`, `r` `[1, 4]`.
fn store(seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    s.init("a", 3, 4, Init::Normal(1.0), &mut rng).unwrap();
    s.init("b", 3, 4, Init::Normal(1.0), &mut rng).unwrap();
    s.init("w", 4, 2, Init::Normal(1.0), &mut rng).unwrap();
    s.init("r", 1, 4, Init::Normal(1.0), &mut rng).unwrap();
    s
}

/// Reduces any output to per-element scalars through fixed, uneven weights
/// so every coordinate gets a distinct upstream gradient.
fn weigh(g: &mut Graph, x: Var) -> Vec<Var> {
    let (r, c) = g.shape(x);
    let w: Vec<f32> = (0..r * c).map(|i| 0.3 + 0.17 * ((i * 7) % 5) as f32).collect();
    let w = g.constant(Tensor::matrix(r, c, w).unwrap());
    let p = g.mul(x, w).unwrap();
    let mut parts = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = g.slice_rows(p, i, i + 1).unwrap();
        for j in 0..c {
            parts.push(g.slice_cols(row, j, j + 1).unwrap());
        }
    }
    parts
}

pub type Op = fn(&mut Graph, [Var; 4]) -> Var;

/// Every differentiable primitive, applied to the parameters `a, b, w, r`.
pub fn primitives() -> Vec<(&'static str, Op)> {
    vec![
        ("add", |g, [a, b, ..]| g.add(a, b).unwrap()),
        ("sub", |g, [a, b, ..]| g.sub(a, b).unwrap()),
        ("mul", |g, [a, b, ..]| g.mul(a, b).unwrap()),
        ("scale", |g, [a, ..]| g.scale(a, -1.7)),
        ("add_row", |g, [a, _, _, r]| g.add_row(a, r).unwrap()),
        ("sub_row", |g, [a, _, _, r]| g.sub_row(a, r).unwrap()),
        ("sigmoid", |g, [a, ..]| g.sigmoid(a)),
        ("gelu", |g, [a, ..]| g.gelu(a)),
        ("matmul", |g, [a, _, w, _]| g.matmul(a, w).unwrap()),
        ("matmul_bt", |g, [a, b, ..]| g.matmul_bt(a, b).unwrap()),
        ("transpose", |g, [a, ..]| g.transpose(a)),
        ("embedding", |g, [a, ..]| g.embedding(a, &[2, 0, 2, 1]).unwrap()),
        ("slice_cols", |g, [a, ..]| g.slice_cols(a, 1, 3).unwrap()),
        ("slice_rows", |g, [a, ..]| g.slice_rows(a, 1, 3).unwrap()),
        ("concat_cols", |g, [a, b, ..]| g.concat_cols(&[a, b]).unwrap()),
        ("concat_rows", |g, [a, _, _, r]| g.concat_rows(&[a, r]).unwrap()),
        ("softmax", |g, [a, ..]| g.softmax(a)),
        ("layer_norm", |g, [a, _, _, r]| {
            let beta = g.scale(r, 0.5);
            g.layer_norm(a, r, beta).unwrap()
        }),
        ("mean_rows", |g, [a, ..]| g.mean_rows(a, 1, 3).unwrap()),
        ("row_norms", |g, [a, ..]| g.row_norms(a)),
        ("dropout_eval", |g, [a, ..]| g.dropout(a, 0.5)),
        ("mean", |g, [a, ..]| g.mean(a)),
        ("sum", |g, [a, ..]| g.sum(a)),
        ("dot", |g, [a, b, ..]| g.dot(a, b).unwrap()),
        ("cross_entropy", |g, [a, ..]| g.cross_entropy(a, &[3, 0, 1]).unwrap()),
        ("bce", |g, [a, ..]| {
            let p = g.sigmoid(a);
            let t: Vec<f32> = (0..12).map(|i| (i % 3 == 0) as u8 as f32).collect();
            g.bce(p, &t).unwrap()
        }),
    ]
}

pub fn primitive_report(op: Op, seed: u64) -> Report {
    let mut s = store(seed);
    let ids = ["a", "b", "w", "r"].map(|n| s.id(n).unwrap());
    check(&mut s, 12, seed, |g| {
        let vars = ids.map(|id| g.param(id));
        let out = op(g, vars);
        if g.shape(out) == (1, 1) {
            vec![out]
        } else {
            weigh(g, out)
        }
    })
}

/// Per-token cross-entropy of the encoder output through a fixed projection
/// onto three classes, one scalar per token.
fn probe(g: &mut Graph, h: Var, seed: u64) -> Vec<Var> {
    let (n, d) = g.shape(h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f32> = (0..d * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = g.constant(Tensor::matrix(d, 3, w).unwrap());
    let logits = g.matmul(h, w).unwrap();
    (0..n)
        .map(|i| {
            let row = g.slice_rows(logits, i, i + 1).unwrap();
            let ce = g.cross_entropy(row, &[i % 3]).unwrap();
            g.scale(ce, 1.0 / n as f32)
        })
        .collect()
}

pub fn encoder_report(seed: u64) -> Report {
    let (model, _, _) = toy::model(seed);
    let mut s = model.params().clone();
    let tokens: Vec<u32> = (0..6).map(|i| 4 + (i * 3 + seed as u32) % 10).collect();
    check(&mut s, 6, seed, |g| {
        let h = model.encode_chunk(g, &tokens).unwrap();
        probe(g, h, seed)
    })
}

pub fn joint_loss_report(seed: u64) -> Report {
    let (model, store, batches) = toy::model(seed);
    let mut s = model.params().clone();
    check(&mut s, 6, seed, |g| {
        typelink::model::joint_loss(&model, g, &batches, &store, [0.5, 1.0, 0.7, 1.0])
            .unwrap()
            .parts
    })
}

/// Composed checks must also exercise non-vanishing gradients.
pub fn composed_ok(r: &Report) -> bool {
    r.ok() && r.significant * 4 >= r.checked
}
