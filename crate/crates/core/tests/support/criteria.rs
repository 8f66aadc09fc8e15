//! Property checks phrased as pass/fail outcomes, so the same code backs the
//! per-crate tests and the acceptance run.

use std::time::Instant;

use crlplus_core::contrastive::{build_batch, supcon_loss, DenominatorMode, LossConfig};
use crlplus_core::metrics::{confusion, overall, per_class};
use crlplus_core::numerics::{SeededRng, Tensor};

use super::grad_suite::{composite_trial, primitive_trial, PRIMITIVES};
use super::metrics_oracle;
use super::supcon_oracle;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

const MODES: [DenominatorMode; 2] = [
    DenominatorMode::SupConStandard,
    DenominatorMode::PaperLiteral,
];

pub const GRAD_TOL: f64 = 1e-3;

/// Every primitive and the encoder composite over `trials` random trials
/// each, within `GRAD_TOL`, in under a minute.
pub fn gradients(trials: u64) -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut note = |rel: f64, what: String| {
        if rel > worst.0 || worst.1.is_empty() {
            worst = (rel, what);
        }
    };
    for name in PRIMITIVES {
        for t in 0..trials {
            match primitive_trial(name, t) {
                Ok(w) => note(w.rel, format!("{name} trial {t} at {}", w.at)),
                Err(e) => return Outcome::new(false, format!("{name} trial {t}: {e}")),
            }
        }
    }
    for t in 0..trials {
        match composite_trial(t, 4) {
            Ok(w) => note(w.rel, format!("composite trial {t} at {}", w.at)),
            Err(e) => return Outcome::new(false, format!("composite trial {t}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst.0 <= GRAD_TOL && secs < 60.0,
        format!(
            "{} primitives + composite x {trials} trials, worst rel err {:.2e} ({}), {secs:.1} s",
            PRIMITIVES.len(),
            worst.0,
            worst.1
        ),
    )
}

fn random_batch(rng: &mut SeededRng) -> (Vec<Vec<f32>>, Vec<usize>) {
    let n = 2 + rng.below(7);
    let d = 1 + rng.below(8);
    let classes = 1 + rng.below(4);
    let rows = (0..n)
        .map(|_| {
            let mut r: Vec<f32> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
            if r.iter().all(|&x| x == 0.0) {
                r[0] = 1.0;
            }
            r
        })
        .collect();
    let labels = (0..n).map(|_| rng.below(classes)).collect();
    (rows, labels)
}

fn loss(rows: &[Vec<f32>], labels: &[usize], t: f32, mode: DenominatorMode) -> (f32, bool) {
    let batch = build_batch(Tensor::from_rows(rows).unwrap(), labels.to_vec()).unwrap();
    let out = supcon_loss(
        &batch,
        &LossConfig {
            temperature: t,
            denominator: mode,
        },
    )
    .unwrap();
    (out.loss, out.degenerate)
}

/// 200 random batches in both modes against the summation oracle within
/// 1e-5, plus the hand case `-ln(e/(e+1))`.
pub fn loss_oracle() -> Outcome {
    let mut rng = SeededRng::new(2, 0x1055);
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for b in 0..200 {
        let (rows, labels) = random_batch(&mut rng);
        let t = 0.1 + 0.9 * rng.uniform();
        for mode in MODES {
            let (got, deg) = loss(&rows, &labels, t, mode);
            match supcon_oracle::supcon(&rows, &labels, f64::from(t), mode) {
                None if deg && got == 0.0 => degenerate += 1,
                None => {
                    return Outcome::new(
                        false,
                        format!("batch {b} {mode:?}: oracle degenerate, got {got}"),
                    )
                }
                Some(want) => worst = worst.max((f64::from(got) - want).abs()),
            }
        }
    }
    let hand_rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let (hand, _) = loss(&hand_rows, &[0, 0, 1], 1.0, DenominatorMode::SupConStandard);
    let hand_want = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
    let hand_err = (f64::from(hand) - 0.3133).abs();
    Outcome::new(
        worst <= 1e-5 && hand_err <= 1e-4 && (hand_want - 0.3133).abs() < 1e-4,
        format!(
            "400 batch/mode pairs ({degenerate} degenerate), max |diff| {worst:.2e}; hand case {hand:.4}"
        ),
    )
}

/// 1000 random batches never go negative in the standard mode; the
/// negatives-only denominator reproduces its -1.0 example.
pub fn non_negativity() -> Outcome {
    let mut rng = SeededRng::new(4, 0x4e6);
    let mut min = f32::INFINITY;
    for _ in 0..1000 {
        let (rows, labels) = random_batch(&mut rng);
        let t = 0.05 + 0.95 * rng.uniform();
        let (l, _) = loss(&rows, &labels, t, DenominatorMode::SupConStandard);
        min = min.min(l);
    }
    // anchor with one positive at cosine 1 and one negative at cosine 0,
    // temperature 1: -ln(e / e^0) = -1
    let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let (lit, _) = loss(&rows, &[0, 0, 1], 1.0, DenominatorMode::PaperLiteral);
    Outcome::new(
        min >= 0.0 && (lit + 1.0).abs() < 1e-6,
        format!("min standard loss over 1000 batches {min:.3e}; negatives-only example {lit:.4}"),
    )
}

/// 200 random confusion matrices against counting oracles within 1e-9, and
/// weighted recall bit-equal to accuracy.
pub fn metrics_oracle() -> Outcome {
    let mut rng = SeededRng::new(3, 0x3e7);
    let mut worst = 0.0f64;
    for m in 0..200 {
        let c = 1 + rng.below(8);
        let n = 1 + rng.below(300);
        // skewed predictions so some classes are never predicted or present
        let truth: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.uniform() < 0.6 {
                    t
                } else {
                    rng.below(c) / 2
                }
            })
            .collect();
        let cm = confusion(&truth, &pred, c).unwrap();
        for k in 0..c {
            let got = per_class(&cm, k).unwrap();
            let want = metrics_oracle::class(&truth, &pred, k);
            for (g, w) in [
                (got.accuracy, want.accuracy),
                (got.precision, want.precision),
                (got.recall, want.recall),
                (got.f_measure, want.f_measure),
            ] {
                worst = worst.max((g - w).abs());
            }
        }
        let o = overall(&cm);
        let want = metrics_oracle::overall(&truth, &pred, c);
        for (g, w) in [o.accuracy, o.precision, o.recall, o.f_measure]
            .iter()
            .zip(want)
        {
            worst = worst.max((g - w).abs());
        }
        if o.recall.to_bits() != o.accuracy.to_bits() {
            return Outcome::new(
                false,
                format!(
                    "matrix {m}: weighted recall {} != accuracy {}",
                    o.recall, o.accuracy
                ),
            );
        }
    }
    Outcome::new(
        worst <= 1e-9,
        format!("200 matrices, max |diff| {worst:.2e}, weighted recall == accuracy on all"),
    )
}
