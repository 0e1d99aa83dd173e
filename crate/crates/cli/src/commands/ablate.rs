use std::path::Path;

use anyhow::{Context, Result};

use stswin_core::contrast::KeySourceSpec;
use stswin_core::data::{Dataset, Split};
use stswin_core::metrics::MetricsReport;
use stswin_core::segnet::{load_checkpoint, Model};
use stswin_core::train::{evaluate_split, run_stage, stage_rng};

use crate::Usage;

/// Pair configurations swept on the pairs axis, (adjacent, cross-video).
pub const PAIR_CONFIGS: [(usize, usize); 7] = [(0, 0), (1, 0), (1, 1), (1, 2), (1, 3), (1, 4), (2, 3)];

pub fn run(axis: &str, config: Option<&Path>, data: &Path, out: &Path) -> Result<()> {
    match axis {
        "clip-length" => clip_length(config, data, out),
        "pairs" => pairs(config, data, out),
        other => Err(Usage(format!("unknown ablation axis {other:?} (clip-length|pairs)")).into()),
    }
}

struct Row {
    label: String,
    report: MetricsReport,
}

fn csv_field(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

fn write_comparison_csv(out: &Path, axis: &str, rows: &[Row], reference: usize) -> Result<()> {
    let reference_series = rows[reference].report.frame_miou_series();
    let mut csv = format!("{axis},miou,dice,pa,pac,global_miou,p_miou_vs_reference\n");
    for (i, row) in rows.iter().enumerate() {
        let p = if i == reference {
            String::new()
        } else {
            let w = stswin_core::metrics::wilcoxon_signed_rank(
                &row.report.frame_miou_series(),
                &reference_series,
            );
            format!("{:.6e}", w.p_value)
        };
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            csv_field(&row.label),
            row.report.overall_miou,
            row.report.overall_dice,
            row.report.dataset.pa,
            row.report.dataset.pac,
            row.report.dataset.miou,
            p
        ));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("ablation.csv"), csv)?;
    Ok(())
}

fn clip_length(config: Option<&Path>, data: &Path, out: &Path) -> Result<()> {
    let (cfg, text) = super::load_config(config)?;
    cfg.echo_into(&text, out)?;
    let ds = Dataset::load(data).context("loading dataset")?;
    let mut rows = Vec::new();
    for n in 1..=5usize {
        let mut cfg_n = cfg.clone();
        cfg_n.model.clip_len = n;
        cfg_n.normalize();
        let mut rng = stage_rng(cfg_n.seed, 0, 9);
        let model = Model::new(&cfg_n.model, &mut rng);
        let dir = out.join(format!("clip{n}"));
        run_stage(&model, &cfg_n.stage1, &ds, cfg_n.seed, &dir.join("stage1"))
            .with_context(|| format!("training clip length {n}"))?;
        let report = evaluate_split(&model, &ds, Split::Test)?;
        std::fs::write(dir.join("report.json"), report.to_json())?;
        println!("clip length {n}: test mIoU {:.4}", report.overall_miou);
        rows.push(Row { label: n.to_string(), report });
    }
    // Reference row is the 4-frame clip.
    write_comparison_csv(out, "clip_length", &rows, 3)?;
    Ok(())
}

fn pairs(config: Option<&Path>, data: &Path, out: &Path) -> Result<()> {
    let (cfg, text) = super::load_config(config)?;
    cfg.echo_into(&text, out)?;
    let ds = Dataset::load(data).context("loading dataset")?;
    // One shared stage-1 initialisation for every pair configuration.
    let mut rng = stage_rng(cfg.seed, 0, 9);
    let model = Model::new(&cfg.model, &mut rng);
    let stage1 = run_stage(&model, &cfg.stage1, &ds, cfg.seed, &out.join("stage1"))
        .context("training the shared stage 1")?;

    let mut rows = Vec::new();
    let mut reference = 0;
    for (i, &(pos, neg)) in PAIR_CONFIGS.iter().enumerate() {
        if (pos, neg) == (1, 3) {
            reference = i;
        }
        let (candidate, _) = load_checkpoint(&stage1.checkpoint_dir)?;
        let dir = out.join(format!("pairs_{pos}_{neg}"));
        let cfg_pc = cfg.with_pair_config(KeySourceSpec::pair_config(pos, neg));
        run_stage(&candidate, &cfg_pc.stage2, &ds, cfg.seed, &dir.join("stage2"))
            .with_context(|| format!("stage 2 with pairs ({pos},{neg})"))?;
        run_stage(&candidate, &cfg_pc.stage3, &ds, cfg.seed, &dir.join("stage3"))
            .with_context(|| format!("stage 3 with pairs ({pos},{neg})"))?;
        let report = evaluate_split(&candidate, &ds, Split::Test)?;
        std::fs::write(dir.join("report.json"), report.to_json())?;
        println!("pairs ({pos},{neg}): test mIoU {:.4}", report.overall_miou);
        rows.push(Row { label: format!("({pos},{neg})"), report });
    }
    write_comparison_csv(out, "pairs", &rows, reference)?;
    Ok(())
}
