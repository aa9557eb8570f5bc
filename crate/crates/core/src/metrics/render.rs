//! CSV and markdown renderings of metric reports.

use std::fmt::Write;

use super::{BucketRow, CalibrationReport, MetricsReport, PerturbationReport, ShareMode};
use crate::perturb::PerturbationKind;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Markdown table with one column per model: category accuracies, then color
/// and shape rows as `accuracy (share%)`.
pub fn table1_markdown(reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let models: Vec<&str> = reports.iter().map(|r| r.model_id.as_str()).collect();
    let _ = writeln!(s, "| Type | {} |", models.join(" | "));
    let _ = writeln!(s, "|---|{}", "---:|".repeat(models.len()));
    let _ = writeln!(s, "| **Accuracy (%)** |{}", " |".repeat(models.len()));
    if let Some(first) = reports.first() {
        for (i, row) in first.categories.iter().enumerate() {
            let cells: Vec<String> = reports.iter().map(|r| pct(r.categories[i].accuracy)).collect();
            let _ = writeln!(s, "| {} | {} |", row.category, cells.join(" | "));
        }
        let _ = writeln!(s, "| **Accuracy + Distribution (%)** |{}", " |".repeat(models.len()));
        fn colors(r: &MetricsReport) -> &[BucketRow] {
            &r.colors
        }
        fn shapes(r: &MetricsReport) -> &[BucketRow] {
            &r.shapes
        }
        for family in [colors as fn(&MetricsReport) -> &[BucketRow], shapes] {
            for (i, row) in family(first).iter().enumerate() {
                let cells: Vec<String> = reports
                    .iter()
                    .map(|r| {
                        let b = &family(r)[i];
                        format!("{} ({:.3}%)", pct(b.accuracy), 100.0 * b.share)
                    })
                    .collect();
                let _ = writeln!(s, "| {} | {} |", row.bucket, cells.join(" | "));
            }
        }
        let share = match first.share_mode {
            ShareMode::Correct => "correctly handled samples",
            ShareMode::Samples => "samples",
        };
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "Pure Symbol accuracy is the no-hallucination rate. Color and shape rows cover pure-symbol logos; \
             shares are each bucket's {share} over the family total."
        );
    }
    s
}

/// Long-format CSV: `model,section,row,n,accuracy,share`.
pub fn table1_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from("model,section,row,n,accuracy,share\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in reports {
        for c in &r.categories {
            let _ = writeln!(s, "{},category,{},{},{},", r.model_id, c.category, c.n, opt(c.accuracy));
        }
        for (section, rows) in [("color", &r.colors), ("shape", &r.shapes)] {
            for b in rows {
                let _ = writeln!(s, "{},{section},{},{},{},{:.6}", r.model_id, b.bucket, b.n, opt(b.accuracy), b.share);
            }
        }
    }
    s
}

/// Markdown table with one row per model and one column per perturbation
/// kind, plus the unweighted-mean Total.
pub fn perturbation_markdown(rows: &[(String, PerturbationReport)]) -> String {
    let mut s = String::new();
    let titles: Vec<&str> = PerturbationKind::ALL.iter().map(|k| k.title()).collect();
    let _ = writeln!(s, "| Model | {} | Total |", titles.join(" | "));
    let _ = writeln!(s, "|---|{}---:|", "---:|".repeat(titles.len()));
    for (model, rep) in rows {
        let cells: Vec<String> = PerturbationKind::ALL
            .iter()
            .map(|k| {
                rep.rows
                    .iter()
                    .find(|r| r.kind == *k)
                    .map_or("n/a".into(), |r| format!("{:.1}%", 100.0 * r.accuracy))
            })
            .collect();
        let _ = writeln!(s, "| {model} | {} | {:.2}% |", cells.join(" | "), 100.0 * rep.total);
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Accuracy on text logos, no-hallucination rate on symbol logos. Total is the unweighted mean over the kinds shown."
    );
    s
}

/// Error-share plot data: `model,kind,errors,error_share`.
pub fn error_share_csv(rows: &[(String, PerturbationReport)]) -> String {
    let mut s = String::from("model,kind,errors,error_share\n");
    for (model, rep) in rows {
        for r in &rep.rows {
            let _ = writeln!(s, "{model},{},{},{:.6}", r.kind, r.errors, r.error_share);
        }
    }
    s
}

/// Reliability plot data: `condition,lo,hi,count,mean_prob,rate`.
pub fn calibration_csv(curves: &[(String, CalibrationReport)]) -> String {
    let mut s = String::from("condition,lo,hi,count,mean_prob,rate\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for (name, c) in curves {
        for b in &c.bins {
            let _ = writeln!(s, "{name},{:.1},{:.1},{},{},{}", b.lo, b.hi, b.count, opt(b.mean_prob), opt(b.rate));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{CategoryRow, PerturbationRow};

    fn report(model: &str) -> MetricsReport {
        let bucket = |name: &str| BucketRow { bucket: name.into(), n: 10, correct: 5, accuracy: Some(0.5), share: 0.25 };
        MetricsReport {
            model_id: model.into(),
            n: 40,
            n_text: 0,
            n_symbol: 40,
            acc_text: None,
            hall: Some(0.5),
            no_hall: Some(0.5),
            categories: ["Pure Symbol", "Hybrid", "Pure Text", "Hard-60"]
                .iter()
                .map(|c| CategoryRow { category: c.to_string(), n: 0, accuracy: None })
                .collect(),
            colors: vec![bucket("Red")],
            shapes: ["Circle", "Square", "Triangle", "Irregular"].iter().map(|b| bucket(b)).collect(),
            share_mode: ShareMode::Correct,
            population: String::new(),
        }
    }

    #[test]
    fn table1_has_one_column_per_model() {
        let md = table1_markdown(&[report("a"), report("b")]);
        assert!(md.starts_with("| Type | a | b |"));
        assert!(md.contains("| Circle | 50.00 (25.000%) | 50.00 (25.000%) |"));
        assert!(md.contains("| Hard-60 | n/a | n/a |"));
        let csv = table1_csv(&[report("a")]);
        assert_eq!(csv.lines().count(), 1 + 4 + 1 + 4);
    }

    #[test]
    fn perturbation_columns() {
        let rep = PerturbationReport {
            rows: vec![PerturbationRow {
                kind: PerturbationKind::Occlusion,
                n: 10,
                correct: 5,
                accuracy: 0.506,
                errors: 5,
                error_share: 1.0,
            }],
            total: 0.506,
        };
        let md = perturbation_markdown(&[("llava".into(), rep.clone())]);
        assert!(md.contains("| Blur | Flip-H |"));
        assert!(md.contains("| 50.6% |"));
        assert!(error_share_csv(&[("llava".into(), rep)]).contains("llava,occlusion,5,1.000000"));
    }
}
