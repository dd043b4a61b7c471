//! Run directory layout: `config.txt`, `losses.csv`, `checkpoint.txt`,
//! `metrics.json`, `manifest.txt`. Wall time is logged, never written, so
//! reruns produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::RunRecord;
use crate::config::write_settings;
use crate::encoder::checkpoint_to_string;
use crate::error::{write_text, Result};
use crate::losses::LossBreakdown;
use crate::metrics::metrics_json;

pub const RUN_FILES: [&str; 5] = [
    "config.txt",
    "losses.csv",
    "checkpoint.txt",
    "metrics.json",
    "manifest.txt",
];

pub fn losses_csv(losses: &[LossBreakdown]) -> String {
    let mut s = String::from("epoch,seg,mil,sia,smo,total\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(
            s,
            "{e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            l.seg, l.mil, l.sia, l.smo, l.total
        );
    }
    s
}

/// Writes the run files into `dir` and returns the manifest path.
/// `metrics.json` is written only when the record carries an evaluation.
pub fn write_run_dir(dir: impl AsRef<Path>, record: &RunRecord) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        write_text(dir.join(name), text)?;
        written.push(name.to_string());
        Ok(())
    };
    put("config.txt", write_settings(&record.config, &record.ablation))?;
    put("losses.csv", losses_csv(&record.losses))?;
    put("checkpoint.txt", checkpoint_to_string(&record.params))?;
    if let Some(eval) = &record.evaluation {
        put("metrics.json", metrics_json(&eval.summary))?;
    }
    let mut manifest = String::new();
    for name in &written {
        let _ = writeln!(manifest, "{name}");
    }
    let path = dir.join("manifest.txt");
    write_text(&path, manifest)?;
    log::info!("run finished in {:.2?}", record.wall_time);
    Ok(path)
}
