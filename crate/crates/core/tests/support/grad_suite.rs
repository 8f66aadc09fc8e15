//! Randomized finite-difference trials over every differentiable graph
//! primitive and the contrastive loss pushed through a small encoder.

use crlplus_core::contrastive::{encoder_supcon_grad, LossConfig};
use crlplus_core::encoder::{EncoderConfig, EncoderModel, Pooling};
use crlplus_core::numerics::{dropout_mask, Graph, ParamSet, SeededRng, Tensor, Var};
use crlplus_core::Result;

use super::gradcheck::{check_graph, compare, Worst};

pub const PRIMITIVES: [&str; 22] = [
    "matmul",
    "transpose",
    "add",
    "add_row",
    "mul",
    "mul_const",
    "dropout_fixed",
    "scale",
    "softmax",
    "log_softmax",
    "layernorm",
    "gelu",
    "gather",
    "mean_rows",
    "concat_rows",
    "slice_cols",
    "concat_cols",
    "log",
    "exp",
    "cosine_matrix",
    "sum_rows",
    "sum_all",
];

fn dim(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn params(rng: &mut SeededRng, shapes: &[&[usize]]) -> ParamSet {
    let mut ps = ParamSet::new();
    for (i, s) in shapes.iter().enumerate() {
        ps.insert(format!("x{i}"), rng.normal_tensor(s, 0.0, 1.0))
            .unwrap();
    }
    ps
}

/// One trial of primitive `name` with random shapes and inputs.
pub fn primitive_trial(name: &str, seed: u64) -> Result<Worst> {
    let mut rng = SeededRng::new(seed, 0x96ad);
    let n = dim(&mut rng, 1, 4);
    let d = dim(&mut rng, 2, 5);
    let m = dim(&mut rng, 1, 4);
    let mut fd = rng.derive(1);
    match name {
        "matmul" => check_graph(
            &params(&mut rng, &[&[n, d], &[d, m]]),
            |g, v| g.matmul(v[0], v[1]),
            seed,
            &mut fd,
        ),
        "transpose" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| g.transpose(v[0]),
            seed,
            &mut fd,
        ),
        "add" => check_graph(
            &params(&mut rng, &[&[n, d], &[n, d]]),
            |g, v| g.add(v[0], v[1]),
            seed,
            &mut fd,
        ),
        "add_row" => check_graph(
            &params(&mut rng, &[&[n, d], &[d]]),
            |g, v| g.add_row(v[0], v[1]),
            seed,
            &mut fd,
        ),
        "mul" => check_graph(
            &params(&mut rng, &[&[n, d], &[n, d]]),
            |g, v| g.mul(v[0], v[1]),
            seed,
            &mut fd,
        ),
        "mul_const" => {
            let c = rng.normal_tensor(&[n, d], 0.0, 1.0);
            check_graph(
                &params(&mut rng, &[&[n, d]]),
                move |g, v| g.mul_const(v[0], c.clone()),
                seed,
                &mut fd,
            )
        }
        "dropout_fixed" => {
            let mask = dropout_mask(&[n, d], 0.3, &mut rng)?;
            check_graph(
                &params(&mut rng, &[&[n, d]]),
                move |g, v| g.dropout_fixed(v[0], mask.clone()),
                seed,
                &mut fd,
            )
        }
        "scale" => {
            let s = rng.normal(0.0, 2.0);
            check_graph(
                &params(&mut rng, &[&[n, d]]),
                move |g, v| Ok(g.scale(v[0], s)),
                seed,
                &mut fd,
            )
        }
        "softmax" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| Ok(g.softmax(v[0])),
            seed,
            &mut fd,
        ),
        "log_softmax" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| Ok(g.log_softmax(v[0])),
            seed,
            &mut fd,
        ),
        "layernorm" => {
            let d = d + 1;
            check_graph(
                &params(&mut rng, &[&[n, d], &[d], &[d]]),
                |g, v| g.layernorm(v[0], v[1], v[2]),
                seed,
                &mut fd,
            )
        }
        "gelu" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| Ok(g.gelu(v[0])),
            seed,
            &mut fd,
        ),
        "gather" => {
            let ids: Vec<usize> = (0..dim(&mut rng, 1, 6)).map(|_| rng.below(m)).collect();
            check_graph(
                &params(&mut rng, &[&[m, d]]),
                move |g, v| g.gather(v[0], &ids),
                seed,
                &mut fd,
            )
        }
        "mean_rows" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| g.mean_rows(v[0]),
            seed,
            &mut fd,
        ),
        "concat_rows" => check_graph(
            &params(&mut rng, &[&[n, d], &[m, d]]),
            |g, v| g.concat_rows(&[v[0], v[1]]),
            seed,
            &mut fd,
        ),
        "slice_cols" => {
            let start = rng.below(d);
            let width = 1 + rng.below(d - start);
            check_graph(
                &params(&mut rng, &[&[n, d]]),
                move |g, v| g.slice_cols(v[0], start, width),
                seed,
                &mut fd,
            )
        }
        "concat_cols" => check_graph(
            &params(&mut rng, &[&[n, d], &[n, m]]),
            |g, v| g.concat_cols(&[v[0], v[1]]),
            seed,
            &mut fd,
        ),
        "log" => {
            let mut ps = ParamSet::new();
            let t = rng
                .normal_tensor(&[n, d], 0.0, 1.0)
                .map(|x| 1.0 + 0.4 * x.tanh());
            ps.insert("x0", t).unwrap();
            check_graph(&ps, |g, v| g.log(v[0]), seed, &mut fd)
        }
        "exp" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| Ok(g.exp(v[0])),
            seed,
            &mut fd,
        ),
        "cosine_matrix" => {
            let n = n + 1;
            check_graph(
                &params(&mut rng, &[&[n, d]]),
                |g, v| g.cosine_matrix(v[0]),
                seed,
                &mut fd,
            )
        }
        "sum_rows" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| Ok(g.sum_rows(v[0])),
            seed,
            &mut fd,
        ),
        "sum_all" => check_graph(
            &params(&mut rng, &[&[n, d]]),
            |g, v| Ok(g.sum_all(v[0])),
            seed,
            &mut fd,
        ),
        other => panic!("no trial for {other}"),
    }
}

/// The composite: 4 documents, two dropout views each, `d_model = 8`, one
/// layer, loss through the supervised contrastive objective. Checks up to
/// `coords` entries per parameter tensor.
pub fn composite_trial(seed: u64, coords: usize) -> Result<Worst> {
    let cfg = EncoderConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        dropout_p: 0.1,
        max_len: 8,
        vocab_size: 12,
        pooling: Pooling::Mean,
    };
    let model = EncoderModel::init(cfg.clone(), seed)?;
    let mut rng = SeededRng::new(seed, 0xc0de);
    let rows: Vec<Vec<u32>> = (0..4)
        .map(|_| {
            (0..2 + rng.below(5))
                .map(|_| rng.below(12) as u32)
                .collect()
        })
        .collect();
    let labels: Vec<usize> = [0, 0, 1, 1 + rng.below(2)].to_vec();
    let loss_cfg = LossConfig {
        temperature: 0.5,
        ..LossConfig::default()
    };
    let masks = rng.derive(7);
    let slices: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
    let grads = encoder_supcon_grad(&model, &slices, &labels, 2, &masks, &loss_cfg)?
        .expect("labels give every anchor a positive");
    let eval = |ps: &ParamSet| -> Result<f32> {
        let m = EncoderModel::from_params(cfg.clone(), ps)?;
        Ok(
            encoder_supcon_grad(&m, &slices, &labels, 2, &masks, &loss_cfg)?
                .expect("same labels")
                .loss,
        )
    };
    compare(
        model.params(),
        &grads.encoder,
        eval,
        coords,
        &mut rng.derive(8),
    )
}

/// A plain scalar check on a throwaway graph, used to sanity-check the
/// harness itself: d/dx sum(x^2) = 2x.
pub fn harness_self_check() -> Result<Worst> {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::vector(vec![0.5, -1.5, 2.0])?)?;
    check_graph(
        &ps,
        |g: &mut Graph<'_>, v: &[Var]| g.mul(v[0], v[0]),
        1,
        &mut SeededRng::new(1, 1),
    )
}
