use super::{SeededRng, Tensor};
use crate::error::{Error, Result};

/// Samples an inverted-dropout mask: each entry is `0` with probability `p`
/// and `1 / (1 - p)` otherwise.
pub fn dropout_mask(shape: &[usize], p: f32, rng: &mut SeededRng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param(format!(
            "dropout probability {p} not in [0, 1)"
        )));
    }
    if p == 0.0 {
        return Ok(Tensor::ones(shape));
    }
    let keep = 1.0 / (1.0 - p);
    let numel = shape.iter().product();
    let data = (0..numel)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Inverted dropout. Returns the output together with the mask used, so the
/// same mask can be replayed inside a differentiable pass.
pub fn dropout(x: &Tensor, p: f32, rng: &mut SeededRng) -> Result<(Tensor, Tensor)> {
    let mask = dropout_mask(x.shape(), p, rng)?;
    if p == 0.0 {
        return Ok((x.clone(), mask));
    }
    Ok((x.mul(&mask)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = SeededRng::new(1, 0);
        let x = rng.normal_tensor(&[4, 5], 0.0, 1.0);
        let (y, mask) = dropout(&x, 0.0, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn mean_is_preserved() {
        let x = Tensor::ones(&[100, 100]);
        let (y, mask) = dropout(&x, 0.5, &mut SeededRng::new(3, 7)).unwrap();
        let m = y.mean();
        assert!((0.8..=1.2).contains(&m), "mean {m}");
        assert!(mask.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let x = SeededRng::new(0, 0).normal_tensor(&[8, 8], 0.0, 1.0);
        let (a, _) = dropout(&x, 0.3, &mut SeededRng::new(5, 9)).unwrap();
        let (b, _) = dropout(&x, 0.3, &mut SeededRng::new(5, 9)).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn rate_of_one_is_rejected() {
        let x = Tensor::ones(&[2]);
        assert!(matches!(
            dropout(&x, 1.0, &mut SeededRng::new(0, 0)),
            Err(Error::Parameter(_))
        ));
    }
}
