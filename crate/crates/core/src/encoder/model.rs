//! Post-LN transformer encoder with mean pooling.
//!
//! Each sequence runs through its own [`Graph`] at its true length, which is
//! exactly attention with padded keys masked out. Batch-level work fans out
//! over sequences with [`par`] and reduces gradients in fixed chunk order.

use crate::corpus::TokenizedBatch;
use crate::error::{Error, Result};
use crate::numerics::{dropout_mask, par, Graph, ParamGrads, ParamSet, SeededRng, Tensor, Var};

use super::EncoderConfig;

/// Sequences per gradient-reduction chunk. Fixed, so the summation tree does
/// not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    params: ParamSet,
    layout: Layout,
}

#[derive(Clone, Debug, PartialEq)]
struct LayerLayout {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    tok: usize,
    pos: usize,
    layers: Vec<LayerLayout>,
}

/// Expected parameter names and shapes, in storage order.
fn param_specs(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f) = (cfg.d_model, cfg.d_ff);
    let mut specs = vec![
        ("tok_emb".to_owned(), vec![cfg.vocab_size, d]),
        ("pos_emb".to_owned(), vec![cfg.max_len, d]),
    ];
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        specs.extend([
            (p("attn.wq"), vec![d, d]),
            (p("attn.bq"), vec![d]),
            (p("attn.wk"), vec![d, d]),
            (p("attn.bk"), vec![d]),
            (p("attn.wv"), vec![d, d]),
            (p("attn.bv"), vec![d]),
            (p("attn.wo"), vec![d, d]),
            (p("attn.bo"), vec![d]),
            (p("ln1.gamma"), vec![d]),
            (p("ln1.beta"), vec![d]),
            (p("ff.w1"), vec![d, f]),
            (p("ff.b1"), vec![f]),
            (p("ff.w2"), vec![f, d]),
            (p("ff.b2"), vec![d]),
            (p("ln2.gamma"), vec![d]),
            (p("ln2.beta"), vec![d]),
        ]);
    }
    specs
}

impl Layout {
    fn resolve(cfg: &EncoderConfig, params: &ParamSet) -> Result<Self> {
        let specs = param_specs(cfg);
        if params.len() != specs.len() {
            return Err(Error::param(format!(
                "encoder expects {} parameters, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (name, shape) in &specs {
            let t = params.tensor(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
            if !t.is_finite() {
                return Err(Error::data(format!(
                    "parameter {name} has non-finite values"
                )));
            }
        }
        let at = |n: &str| params.index_of(n).expect("checked above");
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let p = |s: &str| at(&format!("layers.{l}.{s}"));
                LayerLayout {
                    wq: p("attn.wq"),
                    bq: p("attn.bq"),
                    wk: p("attn.wk"),
                    bk: p("attn.bk"),
                    wv: p("attn.wv"),
                    bv: p("attn.bv"),
                    wo: p("attn.wo"),
                    bo: p("attn.bo"),
                    ln1_g: p("ln1.gamma"),
                    ln1_b: p("ln1.beta"),
                    w1: p("ff.w1"),
                    b1: p("ff.b1"),
                    w2: p("ff.w2"),
                    b2: p("ff.b2"),
                    ln2_g: p("ln2.gamma"),
                    ln2_b: p("ln2.beta"),
                }
            })
            .collect();
        Ok(Self {
            tok: at("tok_emb"),
            pos: at("pos_emb"),
            layers,
        })
    }
}

/// Dropout masks for one sequence: `(after attention, after feed-forward)`
/// per layer, each `[len x d_model]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqMasks {
    layers: Vec<(Tensor, Tensor)>,
}

impl SeqMasks {
    pub fn sample(cfg: &EncoderConfig, len: usize, rng: &mut SeededRng) -> Result<Self> {
        let shape = [len, cfg.d_model];
        let layers = (0..cfg.n_layers)
            .map(|_| {
                let a = dropout_mask(&shape, cfg.dropout_p, rng)?;
                let f = dropout_mask(&shape, cfg.dropout_p, rng)?;
                Ok((a, f))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }
}

/// How [`EncoderModel::encode`] treats dropout.
// passed by reference everywhere, so the inline rng costs nothing
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum EncodeMode {
    Deterministic,
    /// Row `i` draws its masks from `rng.derive(i)`.
    Stochastic(SeededRng),
}

/// Loss value plus gradients from [`EncoderModel::batch_value_and_grad`].
#[derive(Clone, Debug)]
pub struct BatchGrads {
    pub loss: f32,
    pub encoder: ParamGrads,
    /// Gradients of the extra leaves returned by the loss closure.
    pub extra: Vec<Tensor>,
    /// The pooled embeddings the loss saw, `[n x d_model]`.
    pub embeddings: Tensor,
}

impl EncoderModel {
    /// Fresh model: `N(0, 1/d_model)` embeddings (the forward pass scales
    /// them by `sqrt(d_model)`), `N(0, 1/fan_in)` weight matrices, zero
    /// biases and layernorm shifts, unit layernorm scales.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed, 0xe7c0);
        let mut params = ParamSet::new();
        for (name, shape) in param_specs(&config) {
            let t = if name.ends_with("gamma") {
                Tensor::ones(&shape)
            } else if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else if name.ends_with("_emb") {
                rng.normal_tensor(&shape, 0.0, (shape[1] as f32).sqrt().recip())
            } else {
                rng.normal_tensor(&shape, 0.0, (shape[0] as f32).sqrt().recip())
            };
            params.insert(name, t)?;
        }
        let layout = Layout::resolve(&config, &params)?;
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Rebuilds a trainable model from existing tensors. Frozen flags on the
    /// input are discarded.
    pub fn from_params(config: EncoderConfig, params: &ParamSet) -> Result<Self> {
        config.validate()?;
        let mut fresh = ParamSet::new();
        for (name, p) in params.iter() {
            fresh.insert(name, p.tensor.clone())?;
        }
        let layout = Layout::resolve(&config, &fresh)?;
        Ok(Self {
            config,
            params: fresh,
            layout,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn is_frozen(&self) -> bool {
        self.params.iter().all(|(_, p)| p.frozen)
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::data("sequence has no tokens"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(Error::data(format!(
                "token id {bad} out of range for vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Builds the forward pass for one unpadded sequence on `g`, whose first
    /// leaves must be this model's parameters (`vars`, from [`Graph::bind`]).
    /// Returns the pooled `[1 x d_model]` node.
    pub fn forward_seq<'a>(
        &'a self,
        g: &mut Graph<'a>,
        vars: &[Var],
        ids: &[u32],
        masks: Option<&SeqMasks>,
    ) -> Result<Var> {
        self.check_ids(ids)?;
        let len = ids.len().min(self.config.max_len);
        let ids: Vec<usize> = ids[..len].iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..len).collect();
        let tok = g.gather(vars[self.layout.tok], &ids)?;
        let pos = g.gather(vars[self.layout.pos], &positions)?;
        let x = g.add(tok, pos)?;
        let mut x = g.scale(x, (self.config.d_model as f32).sqrt());

        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f32).sqrt();
        for (l, ll) in self.layout.layers.iter().enumerate() {
            let proj = |g: &mut Graph<'a>, w: usize, b: usize, x: Var| -> Result<Var> {
                let y = g.matmul(x, vars[w])?;
                g.add_row(y, vars[b])
            };
            let q = proj(g, ll.wq, ll.bq, x)?;
            let k = proj(g, ll.wk, ll.bk, x)?;
            let v = proj(g, ll.wv, ll.bv, x)?;
            let mut heads = Vec::with_capacity(self.config.n_heads);
            for h in 0..self.config.n_heads {
                let qh = g.slice_cols(q, h * dh, dh)?;
                let kh = g.slice_cols(k, h * dh, dh)?;
                let vh = g.slice_cols(v, h * dh, dh)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale);
                let attn = g.softmax(scores);
                heads.push(g.matmul(attn, vh)?);
            }
            let ctx = g.concat_cols(&heads)?;
            let mut a = proj(g, ll.wo, ll.bo, ctx)?;
            if let Some(m) = masks {
                a = g.dropout_fixed(a, m.layers[l].0.clone())?;
            }
            let r = g.add(x, a)?;
            x = g.layernorm(r, vars[ll.ln1_g], vars[ll.ln1_b])?;

            let hdn = proj(g, ll.w1, ll.b1, x)?;
            let hdn = g.gelu(hdn);
            let mut f = proj(g, ll.w2, ll.b2, hdn)?;
            if let Some(m) = masks {
                f = g.dropout_fixed(f, m.layers[l].1.clone())?;
            }
            let r = g.add(x, f)?;
            x = g.layernorm(r, vars[ll.ln2_g], vars[ll.ln2_b])?;
        }
        g.mean_rows(x)
    }

    /// Pooled embedding of one unpadded sequence.
    pub fn embed(&self, ids: &[u32], masks: Option<&SeqMasks>) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let vars = g.bind(&self.params);
        let out = self.forward_seq(&mut g, &vars, ids, masks)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Masks for a sequence of `len` tokens drawn from `rng`.
    pub fn sample_masks(&self, len: usize, rng: &mut SeededRng) -> Result<SeqMasks> {
        SeqMasks::sample(&self.config, len.min(self.config.max_len), rng)
    }

    /// Encodes id rows into `[n x d_model]`.
    pub fn encode_rows(&self, rows: &[&[u32]], mode: &EncodeMode) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::data("nothing to encode"));
        }
        let out = par::try_map_range(rows.len(), |i| {
            let ids = rows[i];
            self.check_ids(ids)?;
            match mode {
                EncodeMode::Deterministic => self.embed(ids, None),
                EncodeMode::Stochastic(rng) => {
                    let masks = self.sample_masks(ids.len(), &mut rng.derive(i as u64))?;
                    self.embed(ids, Some(&masks))
                }
            }
        })?;
        Tensor::new(vec![rows.len(), self.config.d_model], out.concat())
    }

    /// Encodes a padded batch; padding positions are ignored.
    pub fn encode(&self, batch: &TokenizedBatch, mode: &EncodeMode) -> Result<Tensor> {
        let rows: Vec<&[u32]> = (0..batch.len()).map(|i| batch.real_ids(i)).collect();
        self.encode_rows(&rows, mode)
    }

    /// Differentiates a loss over pooled embeddings of several sequences.
    ///
    /// Each sequence's forward pass is recorded separately (in parallel when
    /// enabled). `loss` builds the batch-level objective on a fresh graph from
    /// the stacked `[n x d_model]` embeddings and returns the scalar node plus
    /// any extra leaves whose gradients the caller wants. Per-sequence
    /// parameter gradients are then reduced in fixed chunks of
    /// sequence order.
    pub fn batch_value_and_grad<F>(
        &self,
        rows: &[&[u32]],
        masks: &[Option<SeqMasks>],
        loss: F,
    ) -> Result<BatchGrads>
    where
        F: FnOnce(&mut Graph<'_>, Var) -> Result<(Var, Vec<Var>)>,
    {
        if rows.is_empty() || rows.len() != masks.len() {
            return Err(Error::dim(format!(
                "{} sequences with {} mask sets",
                rows.len(),
                masks.len()
            )));
        }
        let graphs = par::try_map_range(rows.len(), |i| {
            let mut g = Graph::new();
            let vars = g.bind(&self.params);
            let out = self.forward_seq(&mut g, &vars, rows[i], masks[i].as_ref())?;
            Ok::<_, Error>((g, vars, out))
        })?;
        let d = self.config.d_model;
        let mut stacked = Vec::with_capacity(rows.len() * d);
        for (g, _, out) in &graphs {
            stacked.extend_from_slice(g.value(*out).data());
        }
        let embeddings = Tensor::new(vec![rows.len(), d], stacked)?;

        let mut lg = Graph::new();
        let e = lg.input(embeddings.clone());
        let (out, extras) = loss(&mut lg, e)?;
        let loss_value = lg.value(out).item()?;
        let lgrads = lg.backward(out)?;
        let d_emb = lgrads.get_or_zeros(e, &embeddings);
        let extra = extras
            .iter()
            .map(|&v| lgrads.get_or_zeros(v, lg.value(v)))
            .collect();

        let n_chunks = rows.len().div_ceil(GRAD_CHUNK);
        let partials = par::try_map_range(n_chunks, |c| {
            let mut acc = self.params.zero_grads();
            let start = c * GRAD_CHUNK;
            for (i, (g, vars, out)) in graphs.iter().enumerate().skip(start).take(GRAD_CHUNK) {
                let seed = Tensor::new(vec![1, d], d_emb.row(i).to_vec())?;
                let grads = g.backward_with(*out, seed)?;
                let per_seq = ParamGrads::new(
                    vars.iter()
                        .zip(self.params.tensors())
                        .map(|(&v, t)| grads.get_or_zeros(v, t))
                        .collect(),
                );
                acc.accumulate(&per_seq)?;
            }
            Ok::<_, Error>(acc)
        })?;
        let mut encoder = self.params.zero_grads();
        for p in &partials {
            encoder.accumulate(p)?;
        }
        Ok(BatchGrads {
            loss: loss_value,
            encoder,
            extra,
            embeddings,
        })
    }
}

/// Marks every encoder parameter frozen. There is no inverse; rebuild with
/// [`EncoderModel::from_params`] to train again.
pub fn freeze_encoder(mut model: EncoderModel) -> EncoderModel {
    model.params.freeze_all();
    model
}

/// Output of [`augment_views`]: `n_views` stacked blocks of the batch.
#[derive(Clone, Debug)]
pub struct Views {
    /// `[(n_views * batch) x d_model]`; row `v * batch + i` is view `v` of
    /// document `i`.
    pub embeddings: Tensor,
    /// Source document of each row.
    pub source: Vec<usize>,
}

/// `n_views` independent stochastic encodings of the same rows, view `v`
/// drawing from `rng.derive(v)`.
pub fn augment_views(
    model: &EncoderModel,
    rows: &[&[u32]],
    n_views: usize,
    rng: &SeededRng,
) -> Result<Views> {
    if n_views < 2 {
        return Err(Error::param(format!(
            "n_views must be at least 2, got {n_views}"
        )));
    }
    let mut blocks = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let mode = EncodeMode::Stochastic(rng.derive(v as u64));
        blocks.push(model.encode_rows(rows, &mode)?.into_data());
    }
    let b = rows.len();
    let embeddings = Tensor::new(vec![n_views * b, model.config.d_model], blocks.concat())?;
    let source = (0..n_views).flat_map(|_| 0..b).collect();
    Ok(Views { embeddings, source })
}

/// The masks [`augment_views`] would draw, for replay inside a gradient pass.
pub fn view_masks(
    model: &EncoderModel,
    rows: &[&[u32]],
    n_views: usize,
    rng: &SeededRng,
) -> Result<Vec<Option<SeqMasks>>> {
    let mut out = Vec::with_capacity(n_views * rows.len());
    for v in 0..n_views {
        let vr = rng.derive(v as u64);
        for (i, ids) in rows.iter().enumerate() {
            out.push(Some(
                model.sample_masks(ids.len(), &mut vr.derive(i as u64))?,
            ));
        }
    }
    Ok(out)
}
