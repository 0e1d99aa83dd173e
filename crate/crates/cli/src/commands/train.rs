use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use stswin_core::data::{Dataset, Split};
use stswin_core::segnet::{load_checkpoint, Model};
use stswin_core::train::{evaluate_split, run_stage, stage_rng, StagePlan};

use crate::Usage;

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub stages: String,
    pub init: Option<PathBuf>,
    pub stage2_sweep: Option<String>,
}

fn parse_stages(s: &str) -> Result<Vec<u8>> {
    let stages: Vec<u8> = s
        .split(',')
        .map(|p| p.trim().parse::<u8>().map_err(|_| Usage(format!("bad stage {p:?}")).into()))
        .collect::<Result<_>>()?;
    if stages.is_empty() || stages.iter().any(|&k| !(1..=3).contains(&k)) {
        return Err(Usage(format!("--stages must list stages in 1..=3, got {s:?}")).into());
    }
    if stages.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Usage(format!("--stages must be consecutive ascending, got {s:?}")).into());
    }
    Ok(stages)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let (cfg, text) = super::load_config(args.config.as_deref())?;
    let stages = parse_stages(&args.stages)?;
    cfg.echo_into(&text, &args.out)?;
    let ds = Dataset::load(&args.data).context("loading dataset")?;

    let model = match (&args.init, stages[0]) {
        (Some(path), _) => {
            let (model, manifest) = load_checkpoint(path).context("loading --init checkpoint")?;
            println!("initialised from {} ({})", path.display(), manifest.stage);
            model
        }
        (None, 1) => {
            let mut rng = stage_rng(cfg.seed, 0, 9);
            Model::new(&cfg.model, &mut rng)
        }
        (None, first) => {
            return Err(Usage(format!(
                "starting at stage {first} requires --init with the previous stage's checkpoint"
            ))
            .into());
        }
    };

    let sweep: Option<Vec<usize>> = match &args.stage2_sweep {
        Some(s) => Some(
            s.split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| Usage(format!("bad sweep epoch {p:?}")).into())
                })
                .collect::<Result<_>>()?,
        ),
        None => None,
    };

    for &stage in &stages {
        let plan = cfg.plan(stage).clone();
        if stage == 2 {
            if let Some(candidates) = &sweep {
                let best = sweep_stage2(&model, &cfg, candidates, &ds, &args.out)?;
                let tuned = StagePlan { epochs: best, ..plan };
                run_and_log(&model, &tuned, &ds, cfg.seed, &args.out)?;
                continue;
            }
        }
        run_and_log(&model, &plan, &ds, cfg.seed, &args.out)?;
    }
    Ok(())
}

fn run_and_log(model: &Model, plan: &StagePlan, ds: &Dataset, seed: u64, out: &Path) -> Result<()> {
    let dir = out.join(format!("stage{}", plan.stage));
    let res = run_stage(model, plan, ds, seed, &dir)
        .with_context(|| format!("running stage {}", plan.stage))?;
    let last = res.logs.last();
    println!(
        "stage {}: {} epochs, final loss {:.4}, checkpoint {}",
        plan.stage,
        plan.epochs,
        last.map(|l| l.loss).unwrap_or(f64::NAN),
        res.checkpoint_dir.display()
    );
    Ok(())
}

/// Try each stage-2 epoch candidate (followed by a full stage 3) and pick
/// the one with the best stage-3 validation mIoU.
fn sweep_stage2(
    model: &Model,
    cfg: &crate::config::ExperimentConfig,
    candidates: &[usize],
    ds: &Dataset,
    out: &Path,
) -> Result<usize> {
    if ds.videos(Split::Val).is_empty() {
        return Err(Usage("--stage2-sweep needs a non-empty validation split".into()).into());
    }
    let sweep_dir = out.join("stage2_sweep");
    std::fs::create_dir_all(&sweep_dir)?;
    let mut rows = Vec::new();
    let mut best = (candidates[0], f64::NEG_INFINITY);
    for &epochs in candidates {
        let candidate_model = model.detached_clone();
        candidate_model.set_trainable(true);
        let dir = sweep_dir.join(format!("epochs{epochs}"));
        let plan2 = StagePlan { epochs, ..cfg.stage2.clone() };
        run_stage(&candidate_model, &plan2, ds, cfg.seed, &dir.join("stage2"))?;
        run_stage(&candidate_model, &cfg.stage3, ds, cfg.seed, &dir.join("stage3"))?;
        let report = evaluate_split(&candidate_model, ds, Split::Val)?;
        println!("stage2 sweep: {epochs} epochs -> val mIoU {:.4}", report.overall_miou);
        rows.push((epochs, report.overall_miou));
        if report.overall_miou > best.1 {
            best = (epochs, report.overall_miou);
        }
    }
    let mut csv = String::from("stage2_epochs,val_miou\n");
    for (e, m) in &rows {
        csv.push_str(&format!("{e},{m:.6}\n"));
    }
    std::fs::write(sweep_dir.join("sweep.csv"), csv)?;
    println!("stage2 sweep winner: {} epochs (val mIoU {:.4})", best.0, best.1);
    Ok(best.0)
}
