use std::path::Path;

use anyhow::{Context, Result};

use stswin_core::data::generate_synthetic;

pub fn run(config: Option<&Path>, out: &Path) -> Result<()> {
    let (cfg, text) = super::load_config(config)?;
    cfg.echo_into(&text, out)?;
    generate_synthetic(&cfg.synth, out).context("generating synthetic dataset")?;
    println!(
        "wrote {} videos x {} frames ({}x{}, {} classes) to {}",
        cfg.synth.num_videos,
        cfg.synth.frames_per_video,
        cfg.synth.height,
        cfg.synth.width,
        cfg.synth.num_classes,
        out.display()
    );
    Ok(())
}
