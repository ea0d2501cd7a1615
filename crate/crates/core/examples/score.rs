//! Micro P/R/F1 over positive labels and the per-file mean ± std.
//!
//! cargo run --example score

use relshot::eval::{aggregate, f1_from, score};
use relshot::model::Label;

fn l(s: &str) -> Label {
    if s == "no_relation" {
        Label::NoRelation
    } else {
        Label::Relation(s.into())
    }
}

fn main() {
    let gold = ["per:title", "no_relation", "org:founded_by", "per:age"].map(l);
    let pred = ["per:title", "per:age", "no_relation", "per:title"].map(l);
    let r = score(&gold, &pred).unwrap();
    println!("P {:.1}  R {:.1}  F1 {:.1}  (tp {} / pred {} / gold {})", r.precision, r.recall, r.f1, r.true_positive, r.predicted_positive, r.gold_positive);

    // Five test files, as in a 5-way 1-shot benchmark split.
    let files = (0..5)
        .map(|i| {
            let mut p = pred.clone();
            if i % 2 == 0 {
                p[2] = l("org:founded_by");
            }
            (format!("test_{i}.jsonl"), score(&gold, &p).unwrap())
        })
        .collect();
    let agg = aggregate(files);
    println!("over files: P {:.1} ± {:.2}  R {:.1} ± {:.2}  F1 {:.1} ± {:.2}", agg.precision.mean, agg.precision.std, agg.recall.mean, agg.recall.std, agg.f1.mean, agg.f1.std);

    // F1 from published precision and recall.
    println!("F1(26.4, 28.9) = {:.1}", f1_from(26.4, 28.9));
}
