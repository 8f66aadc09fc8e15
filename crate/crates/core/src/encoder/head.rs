use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamSet, SeededRng, Tensor, Var};

/// Affine classification layer over pooled embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    params: ParamSet,
    d_model: usize,
    n_classes: usize,
}

impl ClassifierHead {
    pub fn init(d_model: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if d_model == 0 || n_classes == 0 {
            return Err(Error::param("head needs positive width and class count"));
        }
        let mut rng = SeededRng::new(seed, 0x4ead);
        let mut params = ParamSet::new();
        params.insert(
            "weight",
            rng.normal_tensor(&[d_model, n_classes], 0.0, 0.02),
        )?;
        params.insert("bias", Tensor::zeros(&[n_classes]))?;
        Ok(Self {
            params,
            d_model,
            n_classes,
        })
    }

    pub fn from_params(params: &ParamSet) -> Result<Self> {
        let w = params.tensor("weight")?;
        let b = params.tensor("bias")?;
        let (d, c) = w.expect_matrix("head weight")?;
        if b.shape() != [c] || params.len() != 2 {
            return Err(Error::dim(format!(
                "head bias {:?} does not match weight {:?}",
                b.shape(),
                w.shape()
            )));
        }
        let mut fresh = ParamSet::new();
        fresh.insert("weight", w.clone())?;
        fresh.insert("bias", b.clone())?;
        Ok(Self {
            params: fresh,
            d_model: d,
            n_classes: c,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    /// Logits on a graph, given this head's bound leaves `[weight, bias]`.
    pub fn logits_graph(g: &mut Graph<'_>, vars: &[Var], embeddings: Var) -> Result<Var> {
        let z = g.matmul(embeddings, vars[0])?;
        g.add_row(z, vars[1])
    }
}

/// `embeddings · W + b`, shape `[batch x C]`.
pub fn classify(head: &ClassifierHead, embeddings: &Tensor) -> Result<Tensor> {
    let (_, d) = embeddings.expect_matrix("classify")?;
    if d != head.d_model {
        return Err(Error::dim(format!(
            "classify: embeddings of width {d}, head expects {}",
            head.d_model
        )));
    }
    let mut g = Graph::new();
    let vars = g.bind(&head.params);
    let e = g.constant(embeddings.clone());
    let out = ClassifierHead::logits_graph(&mut g, &vars, e)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_gives_bias() {
        let mut ps = ParamSet::new();
        ps.insert("weight", Tensor::zeros(&[4, 3])).unwrap();
        ps.insert("bias", Tensor::vector(vec![0.5, -1.0, 2.0]).unwrap())
            .unwrap();
        let head = ClassifierHead::from_params(&ps).unwrap();
        let e = SeededRng::new(0, 0).normal_tensor(&[5, 4], 0.0, 1.0);
        let z = classify(&head, &e).unwrap();
        for r in 0..5 {
            assert_eq!(z.row(r), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn softmax_of_logits_sums_to_one() {
        let head = ClassifierHead::init(6, 8, 1).unwrap();
        let e = SeededRng::new(1, 0).normal_tensor(&[4, 6], 0.0, 3.0);
        let p = classify(&head, &e).unwrap().softmax(1).unwrap();
        for r in 0..4 {
            let s: f32 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
        assert_eq!(head.n_classes(), 8);
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let head = ClassifierHead::init(6, 8, 1).unwrap();
        let e = Tensor::zeros(&[2, 5]);
        assert!(matches!(classify(&head, &e), Err(Error::Dimension(_))));
    }
}
