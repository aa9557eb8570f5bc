use std::path::PathBuf;

use logoscope::corpus::{Category, ColorBucket, LogoRecord, ShapeBucket};
use logoscope::metrics::{bucket_report, join, perturbation_report, BucketFamily, ShareMode};
use logoscope::perturb::PerturbationKind;
use logoscope::querent::{Condition, PredictionRecord};

fn symbol(id: usize, color: ColorBucket, shape: ShapeBucket) -> LogoRecord {
    LogoRecord {
        id: format!("s{id}"),
        image_path: PathBuf::from("x.png"),
        category: Category::PureSymbol,
        hard60: false,
        gt_text: None,
        color_bucket: Some(color),
        shape_bucket: Some(shape),
        flags: vec![],
    }
}

fn pred(logo: &LogoRecord, hallucinated: bool, pert: Option<PerturbationKind>) -> PredictionRecord {
    PredictionRecord {
        logo_id: logo.id.clone(),
        model_id: "llava".into(),
        perturbation: pert,
        condition: Condition::Base,
        prompt_id: "p".into(),
        raw_response: String::new(),
        emitted_text: hallucinated.then(|| "Brand".into()),
        y_hat: hallucinated as u8,
        exact_match: None,
        prob: None,
        prob_source: None,
        flags: vec![],
        cache_key: String::new(),
        timestamp: None,
    }
}

/// Equal-sized buckets with the given no-hallucination rates (in hundredths
/// of a percent) give shares proportional to those rates.
fn shares_for(rates_bp: &[usize], family: BucketFamily) -> Vec<f64> {
    let per_bucket = 10_000;
    let mut logos = Vec::new();
    let mut preds = Vec::new();
    for (b, &rate) in rates_bp.iter().enumerate() {
        for j in 0..per_bucket {
            let (c, s) = match family {
                BucketFamily::Color => (ColorBucket::ALL[b], ShapeBucket::Circle),
                BucketFamily::Shape => (ColorBucket::Red, ShapeBucket::ALL[b]),
            };
            let l = symbol(logos.len(), c, s);
            preds.push(pred(&l, j >= rate, None));
            logos.push(l);
        }
    }
    let obs = join(&logos, &preds).unwrap();
    let rows = bucket_report(&obs, family, ShareMode::Correct).unwrap();
    for (row, &rate) in rows.iter().zip(rates_bp) {
        assert_eq!(row.accuracy, Some(rate as f64 / per_bucket as f64));
    }
    rows.iter().map(|r| r.share).collect()
}

#[test]
fn llava_color_shares() {
    // Table 1, LLaVA column: color accuracies and their printed shares.
    let colors = shares_for(&[3584, 3603, 3603, 3584, 3584, 3602], BucketFamily::Color);
    let printed = [16.623, 16.712, 16.712, 16.623, 16.623, 16.707];
    for (got, want) in colors.iter().zip(printed) {
        assert!((100.0 * got - want).abs() < 5e-4, "{got} vs {want}");
    }
}

#[test]
fn crafted_shape_counts() {
    let shapes = shares_for(&[1000, 2000, 3000, 4000], BucketFamily::Shape);
    for (got, want) in shapes.iter().zip([0.1, 0.2, 0.3, 0.4]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn uniform_buckets_share_one_sixth() {
    let s = shares_for(&[5000; 6], BucketFamily::Color);
    assert!(s.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-12));
}

#[test]
fn table4_llava_row_occlusion_dominates() {
    let per_kind = [910, 912, 911, 913, 506, 910, 910, 912, 912];
    let mut logos = Vec::new();
    let mut preds = Vec::new();
    for (k, &ok) in PerturbationKind::ALL.iter().zip(&per_kind) {
        for j in 0..1000 {
            let l = symbol(logos.len(), ColorBucket::Red, ShapeBucket::Circle);
            preds.push(pred(&l, j >= ok, Some(*k)));
            logos.push(l);
        }
    }
    let rep = perturbation_report(&join(&logos, &preds).unwrap()).unwrap();
    let occ = rep.rows.iter().find(|r| r.kind == PerturbationKind::Occlusion).unwrap();
    assert_eq!(occ.accuracy, 0.506);
    assert!(rep.rows.iter().all(|r| r.error_share <= occ.error_share));
    let errors: usize = per_kind.iter().map(|c| 1000 - c).sum();
    assert!((occ.error_share - 494.0 / errors as f64).abs() < 1e-12);
    let lowest = rep.rows.iter().map(|r| r.accuracy).fold(f64::INFINITY, f64::min);
    assert_eq!(lowest, occ.accuracy);
    // Total is the plain mean of the nine per-kind values.
    let mean = per_kind.iter().sum::<usize>() as f64 / 9000.0;
    assert!((rep.total - mean).abs() < 1e-12);
    assert!((rep.rows.iter().map(|r| r.error_share).sum::<f64>() - 1.0).abs() < 1e-9);
}
