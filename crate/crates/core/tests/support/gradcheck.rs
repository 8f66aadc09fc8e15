//! Central finite differences against reverse-mode gradients.
//!
//! Numeric derivatives use Ridders' method: central differences at a
//! geometric sequence of steps, extrapolated to zero step.

use crlplus_core::numerics::{value_and_grad, Graph, ParamGrads, ParamSet, SeededRng, Tensor, Var};
use crlplus_core::Result;

/// First step of the Ridders sequence; later ones shrink by `SHRINK`.
pub const STEP: f64 = 0.1;
const SHRINK: f64 = 1.4;
const TABLE: usize = 10;

/// `|a - n| / max(|a|, |n|, FLOOR)`: relative error, with the floor keeping
/// gradients near zero from turning rounding noise into huge ratios.
pub const FLOOR: f64 = 1e-1;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct Worst {
    pub rel: f64,
    pub at: String,
    pub analytic: f64,
    pub numeric: f64,
}

/// Ridders' extrapolation over central differences `diff(h)` at shrinking
/// steps. Stops once the tableau's error estimate starts growing, which is
/// where f32 rounding in the forward pass takes over from truncation error.
pub fn ridders(diff: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let mut a = [[0.0f64; TABLE]; TABLE];
    let mut h = STEP;
    a[0][0] = diff(h)?;
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..TABLE {
        h /= SHRINK;
        a[0][i] = diff(h)?;
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (a[j][i] - a[j - 1][i])
                .abs()
                .max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    Ok(best)
}

/// A copy of `ps` with entry `c` of tensor `ti` shifted by `delta`.
pub fn nudged(ps: &ParamSet, ti: usize, c: usize, delta: f32) -> ParamSet {
    let mut out = ParamSet::new();
    for (i, (name, p)) in ps.iter().enumerate() {
        let mut t = p.tensor.clone();
        if i == ti {
            let mut data = t.into_data();
            data[c] += delta;
            t = Tensor::new(p.tensor.shape().to_vec(), data).expect("same shape");
        }
        out.insert(name, t).expect("unique names");
    }
    out
}

/// Compares `grads` with central differences of `eval` on at most
/// `max_coords` randomly chosen coordinates per tensor.
pub fn compare(
    ps: &ParamSet,
    grads: &ParamGrads,
    eval: impl Fn(&ParamSet) -> Result<f32>,
    max_coords: usize,
    rng: &mut SeededRng,
) -> Result<Worst> {
    let mut worst = Worst::default();
    for (ti, (name, p)) in ps.iter().enumerate() {
        let mut coords: Vec<usize> = (0..p.tensor.numel()).collect();
        rng.shuffle(&mut coords);
        coords.truncate(max_coords);
        for c in coords {
            let numeric = ridders(|h| {
                let up = f64::from(eval(&nudged(ps, ti, c, h as f32))?);
                let down = f64::from(eval(&nudged(ps, ti, c, -h as f32))?);
                Ok((up - down) / (2.0 * f64::from(h as f32)))
            })?;
            let analytic = f64::from(grads.get(ti).data()[c]);
            let rel = rel_err(analytic, numeric);
            if rel > worst.rel || worst.at.is_empty() {
                worst = Worst {
                    rel,
                    at: format!("{name}[{c}]"),
                    analytic,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}

/// Checks a graph function of the leaves of `ps`. The output is contracted
/// with fixed random weights so every output entry carries gradient.
pub fn check_graph<F>(ps: &ParamSet, f: F, weight_seed: u64, rng: &mut SeededRng) -> Result<Worst>
where
    F: for<'p> Fn(&mut Graph<'p>, &[Var]) -> Result<Var>,
{
    let scalar = |g: &mut Graph<'_>, vars: &[Var]| -> Result<Var> {
        let y = f(g, vars)?;
        let shape = g.value(y).shape().to_vec();
        let w = SeededRng::new(weight_seed, 0).normal_tensor(&shape, 0.0, 1.0);
        let yw = g.mul_const(y, w)?;
        Ok(g.sum_all(yw))
    };
    let (_, grads) = value_and_grad(ps, |g, v| scalar(g, v))?;
    let eval = |q: &ParamSet| -> Result<f32> {
        let mut g = Graph::new();
        let vars = g.bind(q);
        let out = scalar(&mut g, &vars)?;
        g.value(out).item()
    };
    compare(ps, &grads, eval, usize::MAX, rng)
}
