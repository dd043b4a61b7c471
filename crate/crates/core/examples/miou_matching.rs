//! mIoU with and without best-permutation matching, plus the per-category
//! and per-sample averages.

use wsseg::metrics::{best_permutation_miou, metrics_json, miou, summarize};

fn main() -> wsseg::Result<()> {
    let gt = [0, 0, 1, 1];
    let pred = [0, 1, 1, 1];
    println!("hand case: {:.6} (7/12 = {:.6})", miou(&pred, &gt, 2)?.sample_miou, 7.0 / 12.0);

    // cluster ids from an unsupervised method carry no meaning
    let clusters = [2, 2, 0, 0, 1, 1, 1];
    let truth = [0, 0, 1, 1, 2, 2, 2];
    let raw = miou(&clusters, &truth, 3)?;
    let matched = best_permutation_miou(&clusters, &truth, 3)?;
    println!(
        "raw ids {:.3}, matched {:.3} with permutation {:?}",
        raw.sample_miou,
        matched.sample_miou,
        matched.permutation.as_deref().unwrap_or_default()
    );

    let reports = vec![
        ("table".to_string(), miou(&pred, &gt, 2)?),
        ("table".to_string(), miou(&gt, &gt, 2)?),
        ("rocket".to_string(), miou(&[1, 1, 0, 0], &gt, 2)?),
    ];
    println!("{}", metrics_json(&summarize(&reports, &[4, 4, 4])?));
    Ok(())
}
