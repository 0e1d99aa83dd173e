use std::path::Path;

use anyhow::{Context, Result};

use stswin_core::data::{Dataset, Split};
use stswin_core::segnet::load_checkpoint;
use stswin_core::train::evaluate_split;

use crate::Usage;

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Usage(format!("unknown split {other:?} (train|val|test)")).into()),
    }
}

pub fn run(checkpoint: &Path, data: &Path, out: &Path, split: &str) -> Result<()> {
    let split = parse_split(split)?;
    let (model, manifest) = load_checkpoint(checkpoint).context("loading checkpoint")?;
    let ds = Dataset::load(data).context("loading dataset")?;
    let report = evaluate_split(&model, &ds, split).context("evaluating")?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), report.to_json())?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    println!(
        "{} ({}): frame-avg mIoU {:.4} Dice {:.4} | PA {:.4} PAC {:.4} global mIoU {:.4}",
        checkpoint.display(),
        manifest.stage,
        report.overall_miou,
        report.overall_dice,
        report.dataset.pa,
        report.dataset.pac,
        report.dataset.miou
    );
    Ok(())
}
