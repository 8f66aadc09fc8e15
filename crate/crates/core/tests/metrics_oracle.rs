//! Metrics against naive counting.

mod support;

use crlplus_core::metrics::{confusion, MetricReport};
use support::criteria;

#[test]
fn random_matrices_match_counting() {
    let o = criteria::metrics_oracle();
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn text_and_json_reports_agree_to_four_places() {
    let truth = [0, 0, 1, 1, 2, 2, 2, 0, 1];
    let pred = [0, 1, 1, 1, 2, 0, 2, 0, 2];
    let cm = confusion(&truth, &pred, 3).unwrap();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let r = MetricReport::new(&cm, &names).unwrap();
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let text = r.to_text();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap().split_whitespace().collect::<Vec<_>>(),
        [
            "Class",
            "Label",
            "Accuracy",
            "Precision",
            "Recall",
            "F-measure"
        ]
    );
    for (k, line) in lines.take(3).enumerate() {
        let cols: Vec<f64> = line
            .split_whitespace()
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        let row = &json["classes"][k];
        for (i, key) in ["accuracy", "precision", "recall", "f_measure"]
            .iter()
            .enumerate()
        {
            let v = row[key].as_f64().unwrap();
            assert_eq!(
                format!("{v:.4}"),
                format!("{:.4}", cols[i]),
                "{key} of class {k}"
            );
        }
    }
}
