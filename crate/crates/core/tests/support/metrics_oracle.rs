//! One-vs-all metrics by counting label pairs directly.

pub struct Counts {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub support: usize,
}

pub fn class(truth: &[usize], pred: &[usize], k: usize) -> Counts {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == k, p == k) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Counts {
        accuracy: div(tp + tn, truth.len()),
        precision,
        recall,
        f_measure,
        support: tp + fn_,
    }
}

/// `(accuracy, weighted precision, weighted recall, weighted F)`.
pub fn overall(truth: &[usize], pred: &[usize], n_classes: usize) -> [f64; 4] {
    let n = truth.len() as f64;
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64;
    let mut w = [0.0; 3];
    for k in 0..n_classes {
        let c = class(truth, pred, k);
        let s = c.support as f64 / n;
        w[0] += s * c.precision;
        w[1] += s * c.recall;
        w[2] += s * c.f_measure;
    }
    [correct / n, w[0], w[1], w[2]]
}
