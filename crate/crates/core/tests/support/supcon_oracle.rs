//! The supervised contrastive loss by explicit summation in f64.

use crlplus_core::contrastive::DenominatorMode;

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mean over contributing anchors of
/// `-1/|p(i)| sum_p log(exp(s_ip/t) / sum_{b in D(i)} exp(s_ib/t))`.
///
/// `None` when no anchor has both a positive and a non-empty denominator.
pub fn supcon(rows: &[Vec<f32>], labels: &[usize], t: f64, mode: DenominatorMode) -> Option<f64> {
    let n = rows.len();
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..n {
        let pos: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        let den: Vec<usize> = match mode {
            DenominatorMode::PaperLiteral => (0..n).filter(|&j| labels[j] != labels[i]).collect(),
            DenominatorMode::SupConStandard => (0..n).filter(|&j| j != i).collect(),
        };
        if pos.is_empty() || den.is_empty() {
            continue;
        }
        let z: f64 = den
            .iter()
            .map(|&b| (cos(&rows[i], &rows[b]) / t).exp())
            .sum();
        let mut term = 0.0;
        for &p in &pos {
            term -= ((cos(&rows[i], &rows[p]) / t).exp() / z).ln();
        }
        total += term / pos.len() as f64;
        anchors += 1;
    }
    (anchors > 0).then(|| total / anchors as f64)
}
