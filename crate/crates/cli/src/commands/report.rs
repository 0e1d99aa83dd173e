use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use stswin_core::metrics::MetricsReport;
use stswin_core::train::EpochLog;

use crate::svg;

fn walk(root: &Path, name: &str) -> Vec<PathBuf> {
    let mut hits = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
        paths.sort();
        for p in paths {
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().map(|f| f == name).unwrap_or(false) {
                hits.push(p);
            }
        }
    }
    hits.sort();
    hits
}

fn rel_label(root: &Path, p: &Path) -> String {
    p.parent()
        .and_then(|d| d.strip_prefix(root).ok())
        .map(|d| d.display().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "run".to_string())
}

/// Render loss/lr curves from training logs, per-class IoU bars from eval
/// reports, and comparison bars from ablation CSVs found under `run`.
pub fn run(run_dir: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut produced = 0usize;
    let mut summary = String::from("artifact,source\n");

    let logs = walk(run_dir, "log.jsonl");
    if !logs.is_empty() {
        let mut loss_series = Vec::new();
        let mut lr_series = Vec::new();
        for path in &logs {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let entries: Vec<EpochLog> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()
                .with_context(|| format!("parsing {}", path.display()))?;
            if entries.is_empty() {
                continue;
            }
            let label = rel_label(run_dir, path);
            loss_series.push((
                label.clone(),
                entries.iter().map(|e| (e.epoch as f64, e.loss)).collect::<Vec<_>>(),
            ));
            lr_series.push((
                label,
                entries.iter().map(|e| (e.epoch as f64, e.lr)).collect::<Vec<_>>(),
            ));
        }
        if !loss_series.is_empty() {
            std::fs::write(
                out.join("training_loss.svg"),
                svg::line_chart("Training loss", "epoch", "loss", &loss_series),
            )?;
            std::fs::write(
                out.join("learning_rate.svg"),
                svg::line_chart("Learning rate", "epoch", "lr", &lr_series),
            )?;
            summary.push_str("training_loss.svg,log.jsonl\nlearning_rate.svg,log.jsonl\n");
            produced += 2;
        }
    }

    for path in walk(run_dir, "report.json") {
        let text = std::fs::read_to_string(&path)?;
        let report: MetricsReport = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let label = rel_label(run_dir, &path).replace(['/', '\\'], "_");
        let bars: Vec<(String, f64)> = report
            .class_iou
            .iter()
            .map(|(c, iou)| (format!("class {c}"), *iou))
            .collect();
        let file = format!("class_iou_{label}.svg");
        std::fs::write(out.join(&file), svg::bar_chart(&format!("Per-class IoU ({label})"), "IoU", &bars))?;
        summary.push_str(&format!("{file},{}\n", path.display()));
        produced += 1;
    }

    for path in walk(run_dir, "ablation.csv") {
        let text = std::fs::read_to_string(&path)?;
        let mut bars = Vec::new();
        for line in text.lines().skip(1) {
            // The first field may be quoted (pair labels contain commas).
            let (label, rest) = if let Some(stripped) = line.strip_prefix('"') {
                match stripped.split_once('"') {
                    Some((l, r)) => (l.to_string(), r.trim_start_matches(',')),
                    None => continue,
                }
            } else {
                match line.split_once(',') {
                    Some((l, r)) => (l.to_string(), r),
                    None => continue,
                }
            };
            if let Some(first) = rest.split(',').next() {
                if let Ok(v) = first.parse::<f64>() {
                    bars.push((label, v));
                }
            }
        }
        if !bars.is_empty() {
            let label = rel_label(run_dir, &path).replace(['/', '\\'], "_");
            let file = format!("ablation_miou_{label}.svg");
            std::fs::write(out.join(&file), svg::bar_chart("Ablation mIoU", "mIoU", &bars))?;
            summary.push_str(&format!("{file},{}\n", path.display()));
            produced += 1;
        }
    }

    std::fs::write(out.join("summary.csv"), summary)?;
    println!("report: {produced} charts written to {}", out.display());
    Ok(())
}
